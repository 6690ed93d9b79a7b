//! Communication topologies, Metropolis–Hastings gossip weights and their
//! mixing properties.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for the doubly-stochastic row/column sum checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const ER_RESAMPLE_BUDGET: usize = 1000;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

/// Undirected communication graph over agents `0..n_agents`.
///
/// Edges are stored as `(i, j)` with `i < j`, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from an arbitrary edge list, normalizing pair order.
    /// Connectivity is not required here; see [`Topology::is_connected`].
    pub fn from_edges(n_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidSize {
                what: "topology",
                got: 0,
                min: 1,
            });
        }
        let mut out = Vec::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on agent {i}")));
            }
            if i >= n_agents || j >= n_agents {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) out of range for {n_agents} agents"
                )));
            }
            out.push((i.min(j), i.max(j)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self { n_agents, edges: out })
    }

    /// The trivial one-agent network (no edges, W = [1]).
    pub fn single() -> Self {
        Self {
            n_agents: 1,
            edges: Vec::new(),
        }
    }

    pub fn path(n: usize) -> Result<Self> {
        check_size(n)?;
        Self::from_edges(n, (0..n - 1).map(|i| (i, i + 1)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        check_size(n)?;
        Self::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Samples G(n, p), resampling from scratch until connected.
    ///
    /// Returns the graph and the number of rejected (disconnected) samples.
    pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<(Self, usize)> {
        check_size(n)?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in (0, 1], got {p}"
            )));
        }
        for attempt in 0..ER_RESAMPLE_BUDGET {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    // Draw for every pair so the stream consumption is fixed.
                    let u: f64 = rng.random();
                    if u < p {
                        edges.push((i, j));
                    }
                }
            }
            let t = Self { n_agents: n, edges };
            if t.is_connected() {
                return Ok((t, attempt));
            }
        }
        Err(Error::Disconnected {
            attempts: ER_RESAMPLE_BUDGET,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_agents];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        components(self.n_agents, &self.edges) == 1
    }

    /// Relabels agent `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n_agents)?;
        Self::from_edges(self.n_agents, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidSize {
            what: "topology",
            got: n,
            min: 2,
        })
    } else {
        Ok(())
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Structural(format!("permutation length {} != {n}", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Structural("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

fn components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut count = n;
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            count -= 1;
        }
    }
    count
}

/// Row-major n×n gossip weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    /// Builds a matrix from rows, checking nonnegativity and double
    /// stochasticity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidSize {
                what: "weight matrix",
                got: 0,
                min: 1,
            });
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Structural(format!("row of length {} in {n}×{n} matrix", row.len())));
            }
            data.extend_from_slice(row);
        }
        let w = Self { n, data };
        w.check_doubly_stochastic()?;
        Ok(w)
    }

    /// Metropolis–Hastings weights: `1 / (1 + max(deg_i, deg_j))` on edges,
    /// the remainder on the diagonal.
    pub fn metropolis_hastings(t: &Topology) -> Result<Self> {
        if !t.is_connected() {
            return Err(Error::Precondition("topology is disconnected".into()));
        }
        let n = t.n_agents();
        let deg = t.degrees();
        let mut data = vec![0.0; n * n];
        for &(i, j) in t.edges() {
            let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
            data[i * n + j] = w;
            data[j * n + i] = w;
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| data[i * n + j]).sum();
            data[i * n + i] = 1.0 - off;
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Nonzero entries of row `i` as `(j, w_ij)`, self-weight included.
    pub fn neighborhood(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i).iter().copied().enumerate().filter(|&(_, w)| w > 0.0)
    }

    pub fn check_doubly_stochastic(&self) -> Result<()> {
        let n = self.n;
        for (i, row) in self.rows().enumerate() {
            if let Some(w) = row.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
                return Err(Error::Precondition(format!("negative or non-finite weight {w} in row {i}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Precondition(format!("row {i} sums to {s}")));
            }
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| self.get(i, j)).sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Precondition(format!("column {j} sums to {s}")));
            }
        }
        Ok(())
    }

    /// True when the support graph (off-diagonal positive entries) is connected.
    pub fn support_connected(&self) -> bool {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && (self.get(i, j) > 0.0 || self.get(j, i) > 0.0) {
                    edges.push((i, j));
                }
            }
        }
        components(self.n, &edges) == 1
    }

    /// `W'[π(i), π(j)] = W[i, j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Ok(Self { n, data })
    }

    /// y = W x for a stacked vector of per-agent scalars.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows().map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum()).collect()
    }

    /// Eigenvalues of the symmetrized matrix, ascending, from a dense
    /// symmetric eigensolver.
    pub fn eigenvalues_ascending(&self) -> Vec<f64> {
        let n = self.n;
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)));
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl Serialize for WeightMatrix {
    /// Rows of exact 17-significant-digit decimals.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeSeq};
        let mut seq = s.serialize_seq(Some(self.n))?;
        for row in self.rows() {
            let body = row.iter().map(|&w| crate::numfmt::sig17(w)).collect::<Vec<_>>().join(",");
            let raw = serde_json::value::RawValue::from_string(format!("[{body}]")).map_err(S::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for WeightMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        WeightMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Largest absolute eigenvalue of `W − 11ᵀ/n`.
///
/// Runs power iteration on `B²` (B = W − 11ᵀ/n restricted to the
/// complement of the all-ones direction) so that ±ρ pairs do not stall the
/// iteration; the Rayleigh quotient of `B²` is ρ².
pub fn spectral_gap(w: &WeightMatrix) -> Result<f64> {
    w.check_doubly_stochastic()?;
    if !w.support_connected() {
        return Err(Error::Precondition("weight matrix support graph is disconnected".into()));
    }
    let n = w.n();
    if n == 1 {
        return Ok(0.0);
    }
    let apply_b = |v: &[f64]| {
        let mut y = w.apply(v);
        deflate(&mut y);
        y
    };
    // Fixed, deterministic start vector with no special symmetry.
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5).collect();
    deflate(&mut v);
    if !normalize(&mut v) {
        return Ok(0.0);
    }
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let bv = apply_b(&v);
        let bbv = apply_b(&bv);
        let next: f64 = v.iter().zip(&bbv).map(|(a, b)| a * b).sum();
        residual = bbv.iter().zip(&v).map(|(b, a)| (b - next * a).powi(2)).sum::<f64>().sqrt();
        let mut nv = bbv;
        if !normalize(&mut nv) {
            return Ok(0.0);
        }
        let converged = (next - lambda).abs() <= POWER_TOL * next.max(1e-300) || residual <= POWER_TOL;
        lambda = next;
        v = nv;
        if converged {
            return Ok(lambda.max(0.0).sqrt());
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERS,
        residual,
    })
}

fn deflate(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Topology choice as given on the command line: `path`, `complete` or `er:P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    Path,
    Complete,
    ErdosRenyi { p: f64 },
}

impl TopologySpec {
    /// Builds the topology for `n` agents. One agent always yields the
    /// trivial network regardless of the requested kind.
    pub fn build<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Topology, usize)> {
        if n == 1 {
            return Ok((Topology::single(), 0));
        }
        match *self {
            TopologySpec::Path => Ok((Topology::path(n)?, 0)),
            TopologySpec::Complete => Ok((Topology::complete(n)?, 0)),
            TopologySpec::ErdosRenyi { p } => Topology::erdos_renyi(n, p, rng),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Path => write!(f, "path"),
            TopologySpec::Complete => write!(f, "complete"),
            TopologySpec::ErdosRenyi { p } => write!(f, "er:{p}"),
        }
    }
}

impl FromStr for TopologySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(TopologySpec::Path),
            "complete" => Ok(TopologySpec::Complete),
            _ => {
                let p = s
                    .strip_prefix("er:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown topology '{s}' (path|complete|er:P)")))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidParameter(format!("edge probability must lie in (0, 1], got {p}")));
                }
                Ok(TopologySpec::ErdosRenyi { p })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_edges() {
        assert_eq!(Topology::path(2).unwrap().edges(), &[(0, 1)]);
        assert_eq!(Topology::path(3).unwrap().edges(), &[(0, 1), (1, 2)]);
        assert_eq!(Topology::path(5).unwrap().edges(), &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert!(matches!(Topology::path(1), Err(Error::InvalidSize { .. })));
    }

    #[test]
    fn complete_edges() {
        assert_eq!(Topology::complete(2).unwrap().edges(), &[(0, 1)]);
        assert_eq!(Topology::complete(3).unwrap().edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(Topology::complete(5).unwrap().edges().len(), 10);
        assert!(Topology::complete(0).is_err());
    }

    #[test]
    fn erdos_renyi_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (t, _) = Topology::erdos_renyi(2, 1.0, &mut rng).unwrap();
        assert_eq!(t.edges(), &[(0, 1)]);
        let (t, _) = Topology::erdos_renyi(5, 1.0, &mut rng).unwrap();
        assert_eq!(t, Topology::complete(5).unwrap());
        assert!(matches!(Topology::erdos_renyi(5, 0.0, &mut rng), Err(Error::InvalidParameter(_))));
        assert!(Topology::erdos_renyi(5, 1.5, &mut rng).is_err());
        assert!(matches!(
            Topology::erdos_renyi(30, 1e-6, &mut rng),
            Err(Error::Disconnected { attempts: 1000 })
        ));
    }

    #[test]
    fn erdos_renyi_edge_count_in_binomial_band() {
        // Binomial(435, 0.6): mean 261, sd sqrt(435*0.6*0.4) = 10.218; the
        // two-sided 99.9% band is mean ± 3.2905 sd = [227.4, 294.6].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (t, _) = Topology::erdos_renyi(30, 0.6, &mut rng).unwrap();
        assert!(t.is_connected());
        let m = t.edges().len();
        assert!((228..=294).contains(&m), "edge count {m}");
    }

    #[test]
    fn erdos_renyi_reproducible() {
        let a = Topology::erdos_renyi(30, 0.2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = Topology::erdos_renyi(30, 0.2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mh_small_cases() {
        let w = WeightMatrix::metropolis_hastings(&Topology::complete(2).unwrap()).unwrap();
        assert_eq!(w.row(0), &[0.5, 0.5]);
        assert_eq!(w.row(1), &[0.5, 0.5]);

        let w = WeightMatrix::metropolis_hastings(&Topology::complete(3).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.get(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mh_path5_hand_values() {
        // Degrees 1,2,2,2,1: every edge gets 1/(1+2) = 1/3.
        let w = WeightMatrix::metropolis_hastings(&Topology::path(5).unwrap()).unwrap();
        let diag = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for i in 0..5 {
            assert!((w.get(i, i) - diag[i]).abs() < 1e-15);
            for j in 0..5 {
                if i.abs_diff(j) == 1 {
                    assert!((w.get(i, j) - 1.0 / 3.0).abs() < 1e-15);
                } else if i != j {
                    assert_eq!(w.get(i, j), 0.0);
                }
            }
        }
        w.check_doubly_stochastic().unwrap();
        assert!((w.trace() - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mh_rejects_disconnected() {
        let t = Topology::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(WeightMatrix::metropolis_hastings(&t), Err(Error::Precondition(_))));
    }

    #[test]
    fn spectral_gap_uniform_is_zero() {
        let n = 4;
        let w = WeightMatrix::from_rows(&vec![vec![0.25; n]; n]).unwrap();
        assert!(spectral_gap(&w).unwrap() < 1e-12);
    }

    #[test]
    fn spectral_gap_rejects_edgeless_identity() {
        let w = WeightMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(spectral_gap(&w), Err(Error::Precondition(_))));
    }

    #[test]
    fn spectral_gap_rejects_non_stochastic() {
        let w = WeightMatrix {
            n: 2,
            data: vec![0.6, 0.6, 0.4, 0.4],
        };
        assert!(matches!(spectral_gap(&w), Err(Error::Precondition(_))));
    }

    #[test]
    fn spectral_gap_path5_matches_dense_oracle() {
        // W = I − L/3 with L the path Laplacian, whose eigenvalues are
        // 2 − 2cos(kπ/5). ρ_w is max |1 − (2 − 2cos(kπ/5))/3| over k ≥ 1,
        // attained at k = 1: (1 + 2cos(π/5))/3 = 0.872677996249965.
        let w = WeightMatrix::metropolis_hastings(&Topology::path(5).unwrap()).unwrap();
        let rho = spectral_gap(&w).unwrap();
        let oracle = dense_oracle(&w);
        assert!((rho - oracle).abs() < 1e-9, "{rho} vs {oracle}");
        assert!((rho - 0.872_677_996_249_965).abs() < 1e-9);
    }

    #[test]
    fn spectral_gap_handles_negative_dominant_eigenvalue() {
        // W − J/2 has the single nonzero eigenvalue −0.8.
        let w = WeightMatrix::from_rows(&[vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap();
        let rho = spectral_gap(&w).unwrap();
        assert!((rho - 0.8).abs() < 1e-9, "{rho}");
    }

    pub(crate) fn dense_oracle(w: &WeightMatrix) -> f64 {
        let n = w.n();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| w.get(i, j) - 1.0 / n as f64);
        m.symmetric_eigenvalues().iter().fold(0.0f64, |a, &l| a.max(l.abs()))
    }

    #[test]
    fn eigenvalues_of_path5() {
        let w = WeightMatrix::metropolis_hastings(&Topology::path(5).unwrap()).unwrap();
        let ev = w.eigenvalues_ascending();
        let mut expect: Vec<f64> = (0..5)
            .map(|k| 1.0 - (2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 5.0).cos()) / 3.0)
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((ev.iter().sum::<f64>() - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn topology_spec_parse() {
        assert_eq!("path".parse::<TopologySpec>().unwrap(), TopologySpec::Path);
        assert_eq!("er:0.6".parse::<TopologySpec>().unwrap(), TopologySpec::ErdosRenyi { p: 0.6 });
        assert!("er:0".parse::<TopologySpec>().is_err());
        assert!("ring".parse::<TopologySpec>().is_err());
        let (t, _) = TopologySpec::Complete.build(1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.n_agents(), 1);
    }

    #[test]
    fn weight_matrix_json_uses_17_digits() {
        let w = WeightMatrix::metropolis_hastings(&Topology::path(3).unwrap()).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.starts_with("[[6.6666666666666674e-1,3.3333333333333331e-1,0.0000000000000000e0]"), "{s}");
        let back: WeightMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }
}
