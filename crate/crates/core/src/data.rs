//! Edge-list ingestion, seeded splits and synthetic graphs.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexSet;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Sign, SignedBiadjacency, SignedEdge};

/// A signed edge list with dense indices and the raw ids they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub name: String,
    pub edges: Vec<SignedEdge>,
    pub u_ids: IndexSet<String>,
    pub v_ids: IndexSet<String>,
}

impl RawDataset {
    pub fn n_u(&self) -> usize {
        self.u_ids.len()
    }

    pub fn n_v(&self) -> usize {
        self.v_ids.len()
    }

    /// Edges with their raw ids, in file order.
    pub fn raw_edges(&self) -> impl Iterator<Item = (&str, &str, Sign)> + '_ {
        self.edges
            .iter()
            .map(|e| (self.u_ids[e.u].as_str(), self.v_ids[e.v].as_str(), e.sign))
    }

    pub fn stats(&self) -> DatasetStats {
        let n_pos = self
            .edges
            .iter()
            .filter(|e| e.sign == Sign::Positive)
            .count();
        DatasetStats {
            name: self.name.clone(),
            n_u: self.n_u(),
            n_v: self.n_v(),
            n_edges: self.edges.len(),
            n_pos,
            n_neg: self.edges.len() - n_pos,
        }
    }

    /// Full graph over every edge.
    pub fn graph(&self) -> Result<SignedBiadjacency> {
        build_graph(&self.edges, self.n_u(), self.n_v())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetStats {
    pub name: String,
    pub n_u: usize,
    pub n_v: usize,
    pub n_edges: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str = "dataset,n_u,n_v,n_edges,n_pos,n_neg,pos_pct,neg_pct";

    fn pct(count: usize, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        }
    }

    pub fn pos_pct(&self) -> f64 {
        Self::pct(self.n_pos, self.n_edges)
    }

    pub fn neg_pct(&self) -> f64 {
        Self::pct(self.n_neg, self.n_edges)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.1},{:.1}",
            self.name,
            self.n_u,
            self.n_v,
            self.n_edges,
            self.n_pos,
            self.n_neg,
            self.pos_pct(),
            self.neg_pct()
        )
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: |U|={} |V|={} |E|={} |E+|={} ({:.1}%) |E-|={} ({:.1}%)",
            self.name,
            self.n_u,
            self.n_v,
            self.n_edges,
            self.n_pos,
            self.pos_pct(),
            self.n_neg,
            self.neg_pct()
        )
    }
}

fn parse_sign(token: &str) -> Option<Sign> {
    match token.trim() {
        "1" | "+1" => Some(Sign::Positive),
        "-1" => Some(Sign::Negative),
        _ => None,
    }
}

/// Reads `u <TAB> v <TAB> sign` records. Lines starting with `#` and blank
/// lines are skipped. Raw ids are remapped to dense indices in order of
/// first appearance.
pub fn read_edge_list(reader: impl BufRead, name: &str, path: &Path) -> Result<RawDataset> {
    let mut u_ids = IndexSet::new();
    let mut v_ids = IndexSet::new();
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut fields: Vec<&str> = line.split('\t').collect();
        if fields.len() == 1 {
            fields = line.split_whitespace().collect();
        }
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected 3 fields `u v sign`, found {}", fields.len()),
            });
        }
        let (u_raw, v_raw, sign_raw) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        let sign = parse_sign(sign_raw).ok_or_else(|| Error::InvalidSign {
            path: path.to_path_buf(),
            line: line_no,
            token: sign_raw.to_string(),
        })?;
        let (u, _) = u_ids.insert_full(u_raw.to_string());
        let (v, _) = v_ids.insert_full(v_raw.to_string());
        if !seen.insert((u, v)) {
            return Err(Error::DuplicatePair {
                path: path.to_path_buf(),
                line: line_no,
                u: u_raw.to_string(),
                v: v_raw.to_string(),
            });
        }
        edges.push(SignedEdge::new(u, v, sign));
    }
    Ok(RawDataset {
        name: name.to_string(),
        edges,
        u_ids,
        v_ids,
    })
}

pub fn load_edge_list(path: &Path) -> Result<RawDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let file = File::open(path)?;
    read_edge_list(BufReader::new(file), &name, path)
}

/// Writes the canonical tab-separated form readable by [`load_edge_list`].
pub fn write_edge_list(ds: &RawDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (u, v, sign) in ds.raw_edges() {
        writeln!(w, "{u}\t{v}\t{}", sign.as_i8())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f))
            || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(format!(
                "split fractions must sum to 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    pub train: Vec<SignedEdge>,
    pub val: Vec<SignedEdge>,
    pub test: Vec<SignedEdge>,
    pub fractions: SplitFractions,
    pub seed: u64,
}

/// Uniform random permutation, then contiguous slices of sizes
/// `floor(train·m)`, `floor(val·m)` and the remainder. Not stratified.
pub fn split(ds: &RawDataset, fractions: SplitFractions, seed: u64) -> Result<EdgeSplit> {
    fractions.validate()?;
    let m = ds.edges.len();
    let mut edges = ds.edges.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let n_train = (fractions.train * m as f64).floor() as usize;
    let n_val = ((fractions.val * m as f64).floor() as usize).min(m - n_train);
    let test = edges.split_off(n_train + n_val);
    let val = edges.split_off(n_train);
    Ok(EdgeSplit {
        train: edges,
        val,
        test,
        fractions,
        seed,
    })
}

/// Graph over the training edges only; validation and test edges never
/// enter the adjacency.
pub fn training_graph(split: &EdgeSplit, n_u: usize, n_v: usize) -> Result<SignedBiadjacency> {
    build_graph(&split.train, n_u, n_v)
}

/// `m` distinct uniformly random pairs, each positive with probability
/// `pos_fraction`. Every node id is registered, so `n_u`/`n_v` are kept even
/// when some nodes receive no edge.
pub fn synth_graph(
    n_u: usize,
    n_v: usize,
    m: usize,
    pos_fraction: f64,
    seed: u64,
) -> Result<RawDataset> {
    let cells = n_u.saturating_mul(n_v);
    if m > cells {
        return Err(Error::TooManyEdges { m, n_u, n_v });
    }
    if !(0.0..=1.0).contains(&pos_fraction) {
        return Err(Error::InvalidConfig(format!(
            "pos_fraction must lie in [0, 1], got {pos_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, cells, m);
    let edges = picks
        .iter()
        .map(|cell| {
            let sign = if rng.random_bool(pos_fraction) {
                Sign::Positive
            } else {
                Sign::Negative
            };
            SignedEdge::new(cell / n_v, cell % n_v, sign)
        })
        .collect();
    Ok(RawDataset {
        name: format!("synth_{n_u}x{n_v}_m{m}"),
        edges,
        u_ids: (0..n_u).map(|i| format!("u{i}")).collect(),
        v_ids: (0..n_v).map(|j| format!("v{j}")).collect(),
    })
}

/// Stable 64-bit digest of an edge set, used to key cached factors.
pub fn edges_digest(n_u: usize, n_v: usize, edges: &[SignedEdge]) -> u64 {
    let mut sorted: Vec<_> = edges.iter().map(|e| (e.u, e.v, e.sign.as_i8())).collect();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    h.update((n_u as u64).to_le_bytes());
    h.update((n_v as u64).to_le_bytes());
    for (u, v, s) in sorted {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
        h.update([s as u8]);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<RawDataset> {
        read_edge_list(Cursor::new(text), "t", Path::new("t.tsv"))
    }

    #[test]
    fn well_formed_file() {
        let ds = parse("# comment\na\tx\t1\nb\tx\t-1\na\ty\t-1\n").unwrap();
        assert_eq!(ds.edges.len(), 3);
        assert_eq!(ds.n_u(), 2);
        assert_eq!(ds.n_v(), 2);
        assert_eq!(ds.edges[1], SignedEdge::new(1, 0, Sign::Negative));
        assert_eq!(ds.u_ids.get_index_of("b"), Some(1));
    }

    #[test]
    fn invalid_sign_reports_line() {
        let err = parse("a\tx\t1\nb\tx\t0\n").unwrap_err();
        assert!(matches!(err, Error::InvalidSign { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_line() {
        let err = parse("a\tx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicate_pair() {
        let err = parse("a\tx\t1\na\tx\t-1\n").unwrap_err();
        assert!(matches!(err, Error::DuplicatePair { line: 2, .. }));
    }

    #[test]
    fn empty_file() {
        let ds = parse("").unwrap();
        assert_eq!(ds.stats().n_edges, 0);
        assert_eq!(ds.stats().pos_pct(), 0.0);
    }

    #[test]
    fn split_sizes_for_twenty_edges() {
        let ds = synth_graph(10, 10, 20, 0.5, 1).unwrap();
        let sp = split(&ds, SplitFractions::default(), 3).unwrap();
        assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (17, 1, 2));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = synth_graph(3, 3, 4, 0.5, 1).unwrap();
        let bad = SplitFractions {
            train: 0.9,
            val: 0.2,
            test: 0.1,
        };
        assert!(split(&ds, bad, 0).is_err());
    }

    #[test]
    fn synth_counts() {
        let ds = synth_graph(100, 100, 500, 0.8, 9).unwrap();
        assert_eq!(ds.edges.len(), 500);
        let distinct: HashSet<_> = ds.edges.iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(distinct.len(), 500);
        let all_pos = synth_graph(5, 5, 10, 1.0, 0).unwrap();
        assert_eq!(all_pos.stats().n_neg, 0);
        assert!(matches!(
            synth_graph(2, 2, 5, 0.5, 0),
            Err(Error::TooManyEdges { .. })
        ));
    }

    #[test]
    fn training_graph_only_train_edges() {
        let ds = synth_graph(6, 6, 20, 0.5, 2).unwrap();
        let sp = split(&ds, SplitFractions::default(), 5).unwrap();
        let g = training_graph(&sp, ds.n_u(), ds.n_v()).unwrap();
        assert_eq!(g.num_edges(), sp.train.len());
        for e in sp.val.iter().chain(&sp.test) {
            assert_eq!(g.r_pos.get(e.u, e.v) + g.r_neg.get(e.u, e.v), 0.0);
        }
    }

    #[test]
    fn digest_ignores_order() {
        let a = [
            SignedEdge::new(0, 1, Sign::Positive),
            SignedEdge::new(1, 0, Sign::Negative),
        ];
        let b = [a[1], a[0]];
        assert_eq!(edges_digest(2, 2, &a), edges_digest(2, 2, &b));
        let c = [SignedEdge::new(0, 1, Sign::Negative), a[1]];
        assert_ne!(edges_digest(2, 2, &a), edges_digest(2, 2, &c));
    }
}
