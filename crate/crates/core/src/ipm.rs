//! Integral probability metrics on a finite space and their Minkowski
//! functionals.
//!
//! * total variation: `d(mu, nu) = |mu - nu|_1 / 2`, `rho(f) = span(f)`
//! * Wasserstein (ground metric `d`): optimal transport cost, `rho(f) = Lip(f)`
//! * MMD (kernel `k`): `sqrt((mu - nu)^T K (mu - nu))`; `rho` is not provided.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::agent_state::validate_metric;
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpmKind {
    Tv,
    #[serde(alias = "was", alias = "w1")]
    Wasserstein,
    Mmd,
}

impl std::str::FromStr for IpmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" | "total-variation" => Ok(IpmKind::Tv),
            "wasserstein" | "was" | "w1" => Ok(IpmKind::Wasserstein),
            "mmd" => Ok(IpmKind::Mmd),
            other => Err(Error::Config(format!("unknown IPM `{other}` (tv, wasserstein, mmd)"))),
        }
    }
}

impl std::fmt::Display for IpmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IpmKind::Tv => "tv",
            IpmKind::Wasserstein => "wasserstein",
            IpmKind::Mmd => "mmd",
        })
    }
}

/// An IPM on `{0, .., n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpmSpec {
    kind: IpmKind,
    n: usize,
    /// Ground metric (Wasserstein) or kernel matrix (MMD), row-major.
    matrix: Option<Vec<f64>>,
}

impl IpmSpec {
    pub fn tv(n: usize) -> Self {
        IpmSpec {
            kind: IpmKind::Tv,
            n,
            matrix: None,
        }
    }

    pub fn wasserstein(metric: Vec<f64>, n: usize) -> Result<Self> {
        validate_metric(&metric, n)?;
        Ok(IpmSpec {
            kind: IpmKind::Wasserstein,
            n,
            matrix: Some(metric),
        })
    }

    /// Wasserstein under the discrete metric (equal to total variation).
    pub fn discrete_wasserstein(n: usize) -> Self {
        let d = (0..n * n).map(|k| f64::from(u8::from(k / n != k % n))).collect();
        IpmSpec {
            kind: IpmKind::Wasserstein,
            n,
            matrix: Some(d),
        }
    }

    /// `d(i, j) = |i - j|`.
    pub fn line_metric(n: usize) -> Vec<f64> {
        (0..n * n).map(|k| (k / n).abs_diff(k % n) as f64).collect()
    }

    pub fn mmd(kernel: Vec<f64>, n: usize) -> Result<Self> {
        if kernel.len() != n * n {
            return Err(Error::InvalidMetric(format!("kernel must be {n}x{n}")));
        }
        let k = DMatrix::from_row_slice(n, n, &kernel);
        if (&k - k.transpose()).amax() > PSD_TOL {
            return Err(Error::InvalidMetric("kernel matrix is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(k).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::IndefiniteKernel(min_eig));
        }
        Ok(IpmSpec {
            kind: IpmKind::Mmd,
            n,
            matrix: Some(kernel),
        })
    }

    /// Distance-induced kernel `k(x,x') = |e_x| + |e_x'| - |e_x - e_x'|` on
    /// one-hot embeddings: 2 on the diagonal, `2 - sqrt 2` elsewhere.
    pub fn mmd_default(n: usize) -> Self {
        let off = 2.0 - std::f64::consts::SQRT_2;
        let k = (0..n * n).map(|i| if i / n == i % n { 2.0 } else { off }).collect();
        IpmSpec::mmd(k, n).expect("distance-induced kernel is PSD")
    }

    pub fn kind(&self) -> IpmKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> Option<&[f64]> {
        self.matrix.as_deref()
    }

    fn check(&self, p: &[f64], name: &str) -> Result<()> {
        if p.len() != self.n {
            return Err(Error::InvalidDistribution(format!(
                "{name} has {} entries, expected {}",
                p.len(),
                self.n
            )));
        }
        crate::pomdp::check_distribution(p, MASS_TOL)
            .map_err(|e| Error::InvalidDistribution(format!("{name}: {e}")))
    }

    pub fn distance(&self, mu: &[f64], nu: &[f64]) -> Result<f64> {
        self.check(mu, "mu")?;
        self.check(nu, "nu")?;
        Ok(match self.kind {
            IpmKind::Tv => total_variation(mu, nu),
            IpmKind::Wasserstein => {
                earth_movers_distance(mu, nu, self.matrix.as_deref().expect("metric"))
            }
            IpmKind::Mmd => self.mmd_squared(mu, nu).max(0.0).sqrt(),
        })
    }

    /// Unclamped `(mu - nu)^T K (mu - nu)`; only meaningful for MMD specs.
    pub fn mmd_squared(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let k = self.matrix.as_deref().expect("kernel");
        let n = self.n;
        let diff: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| a - b).collect();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += diff[i] * k[i * n + j] * diff[j];
            }
        }
        s
    }

    /// Largest distance between two point masses.
    pub fn diameter(&self) -> f64 {
        let n = self.n;
        match self.kind {
            IpmKind::Tv => {
                if n > 1 {
                    1.0
                } else {
                    0.0
                }
            }
            IpmKind::Wasserstein => self.matrix.as_ref().expect("metric").iter().copied().fold(0.0, f64::max),
            IpmKind::Mmd => {
                let k = self.matrix.as_ref().expect("kernel");
                let mut d: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        d = d.max((k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(0.0).sqrt());
                    }
                }
                d
            }
        }
    }

    /// Minkowski functional of `f`.
    pub fn rho(&self, f: &[f64]) -> Result<f64> {
        self.rho_over(f, &vec![true; f.len()])
    }

    /// Minkowski functional of `f` restricted to the points where `mask` holds.
    pub fn rho_over(&self, f: &[f64], mask: &[bool]) -> Result<f64> {
        if f.len() != self.n || mask.len() != self.n {
            return Err(Error::InvalidDistribution(format!("function must have {} entries", self.n)));
        }
        let pts: Vec<usize> = (0..self.n).filter(|&i| mask[i]).collect();
        match self.kind {
            IpmKind::Tv => {
                let (lo, hi) = pts
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(f[i]), hi.max(f[i])));
                Ok(if pts.is_empty() { 0.0 } else { hi - lo })
            }
            IpmKind::Wasserstein => {
                let d = self.matrix.as_ref().expect("metric");
                let mut lip: f64 = 0.0;
                for (k, &i) in pts.iter().enumerate() {
                    for &j in &pts[k + 1..] {
                        let dij = d[i * self.n + j];
                        if dij <= 0.0 {
                            return Err(Error::InvalidMetric(format!(
                                "Lipschitz constant needs d({i},{j}) > 0"
                            )));
                        }
                        lip = lip.max((f[i] - f[j]).abs() / dij);
                    }
                }
                Ok(lip)
            }
            IpmKind::Mmd => Err(Error::Unsupported(
                "the RKHS-norm functional of an MMD class is not computed".into(),
            )),
        }
    }
}

/// `|mu - nu|_1 / 2`.
pub fn total_variation(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Exact optimal transport cost between `mu` and `nu` under the row-major
/// ground cost `cost`, by successive shortest augmenting paths.
pub fn earth_movers_distance(mu: &[f64], nu: &[f64], cost: &[f64]) -> f64 {
    const CAP_EPS: f64 = 1e-15;
    let n = mu.len();
    // mass that stays in place is free
    let stay: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| a.min(*b)).collect();
    let supply: Vec<f64> = mu.iter().zip(&stay).map(|(a, s)| a - s).collect();
    let demand: Vec<f64> = nu.iter().zip(&stay).map(|(b, s)| b - s).collect();
    let total: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
    let self_cost: f64 = (0..n).map(|i| stay[i] * cost[i * n + i]).sum();
    if total <= CAP_EPS {
        return self_cost;
    }

    let (src, sink) = (2 * n, 2 * n + 1);
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n + 2];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: f64, c: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost: c });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -c });
    };
    for i in 0..n {
        if supply[i] > CAP_EPS {
            add(&mut edges, &mut adj, src, i, supply[i], 0.0);
        }
        if demand[i] > CAP_EPS {
            add(&mut edges, &mut adj, n + i, sink, demand[i], 0.0);
        }
    }
    for i in (0..n).filter(|&i| supply[i] > CAP_EPS) {
        for j in (0..n).filter(|&j| demand[j] > CAP_EPS) {
            add(&mut edges, &mut adj, i, n + j, f64::INFINITY, cost[i * n + j]);
        }
    }

    let nodes = 2 * n + 2;
    let mut flow = 0.0;
    let mut value = 0.0;
    while total - flow > CAP_EPS {
        // Bellman-Ford over the residual graph
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > CAP_EPS && dist[u] + ed.cost < dist[ed.to] - 1e-15 {
                        dist[ed.to] = dist[u] + ed.cost;
                        via[ed.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut push = total - flow;
        let mut v = sink;
        while v != src {
            let e = via[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != src {
            let e = via[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push;
        value += push * dist[sink];
    }
    value + self_cost
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_laws_are_at_distance_zero() {
        let mu = [0.2, 0.3, 0.5];
        for spec in [
            IpmSpec::tv(3),
            IpmSpec::discrete_wasserstein(3),
            IpmSpec::mmd_default(3),
        ] {
            assert_eq!(spec.distance(&mu, &mu).unwrap(), 0.0);
        }
    }

    #[test]
    fn point_masses_under_discrete_metric() {
        let (a, b) = ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert_eq!(IpmSpec::tv(3).distance(&a, &b).unwrap(), 1.0);
        assert_eq!(IpmSpec::discrete_wasserstein(3).distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn line_metric_transport() {
        let spec = IpmSpec::wasserstein(IpmSpec::line_metric(4), 4).unwrap();
        let d = spec.distance(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.5]).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_normalised_inputs_are_rejected() {
        assert!(IpmSpec::tv(2).distance(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn indefinite_kernel_is_rejected() {
        assert!(matches!(
            IpmSpec::mmd(vec![1.0, 2.0, 2.0, 1.0], 2),
            Err(Error::IndefiniteKernel(_))
        ));
    }

    #[test]
    fn rho_of_constants_and_steps() {
        let tv = IpmSpec::tv(2);
        let was = IpmSpec::discrete_wasserstein(2);
        assert_eq!(tv.rho(&[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(was.rho(&[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(tv.rho(&[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(was.rho(&[0.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(IpmSpec::mmd_default(2).rho(&[0.0, 1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn default_kernel_entries() {
        let spec = IpmSpec::mmd_default(3);
        let k = spec.matrix().unwrap();
        assert_eq!(k[0], 2.0);
        assert!((k[1] - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        // point masses: MMD^2 = 2 + 2 - 2 (2 - sqrt 2) = 2 sqrt 2
        let d = spec.distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((d * d - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
