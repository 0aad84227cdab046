//! Closed-form proximity matrices whose factorization DeepWalk and
//! LINE (second order) perform implicitly.
//!
//! For a (possibly weighted) symmetric adjacency `W` with degrees `D` and
//! volume `vol = sum(W)`:
//!
//! * DeepWalk: `M = vol * (1/T) * sum_{r=1..T} (D^-1 W)^r * D^-1`
//! * LINE:     `M = vol * D^-1 W D^-1`
//!
//! and `Z = max(log M - log b, 0)`, with cells where `M = 0` set to 0. The
//! observed set is `Omega = {(i, j) : Z_ij > 0}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "deepwalk")]
    DeepWalk,
    #[serde(rename = "line2")]
    Line2,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DeepWalk => "deepwalk",
            Method::Line2 => "line2",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deepwalk" => Ok(Method::DeepWalk),
            "line2" | "line" => Ok(Method::Line2),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Embedding method and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProximitySpec {
    pub method: Method,
    /// Context window size `T` (DeepWalk only).
    pub window: usize,
    /// Negative-sample count `b`.
    pub negatives: f64,
    /// Embedding dimension `d`.
    pub dim: usize,
}

impl Default for ProximitySpec {
    fn default() -> Self {
        ProximitySpec {
            method: Method::DeepWalk,
            window: 5,
            negatives: 1.0,
            dim: 32,
        }
    }
}

impl ProximitySpec {
    pub fn deepwalk(window: usize, negatives: f64, dim: usize) -> Self {
        ProximitySpec {
            method: Method::DeepWalk,
            window,
            negatives,
            dim,
        }
    }

    pub fn line(negatives: f64, dim: usize) -> Self {
        ProximitySpec {
            method: Method::Line2,
            window: 1,
            negatives,
            dim,
        }
    }

    /// Effective window: LINE behaves as a one-step walk.
    pub fn effective_window(&self) -> usize {
        match self.method {
            Method::DeepWalk => self.window,
            Method::Line2 => 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.method == Method::DeepWalk && self.window == 0 {
            return Err(Error::invalid("window size T must be at least 1"));
        }
        if !(self.negatives >= 1.0) {
            return Err(Error::invalid(format!(
                "negative-sample count b must be >= 1, got {}",
                self.negatives
            )));
        }
        if self.dim == 0 || self.dim >= n {
            return Err(Error::invalid(format!(
                "embedding dimension must satisfy 0 < d < n (d = {}, n = {n})",
                self.dim
            )));
        }
        Ok(())
    }
}

/// The observed cells of `Z`, indexed by row and by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Omega {
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
    count: usize,
}

impl Omega {
    pub fn from_support(z: &DMatrix<f64>) -> Self {
        let (n, m) = z.shape();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); m];
        let mut count = 0;
        // Column-major traversal keeps each list sorted.
        for j in 0..m {
            for i in 0..n {
                if z[(i, j)] != 0.0 {
                    rows[i].push(j);
                    cols[j].push(i);
                    count += 1;
                }
            }
        }
        Omega { rows, cols, count }
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn col(&self, j: usize) -> &[usize] {
        &self.cols[j]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }
}

/// A proximity matrix together with the quantities its gradient needs.
#[derive(Debug, Clone)]
pub struct ProximityModel {
    pub z: DMatrix<f64>,
    pub omega: Omega,
    /// Argument of the logarithm, `M`.
    pub walk: DMatrix<f64>,
    pub spec: ProximitySpec,
    pub vol: f64,
    pub degrees: Vec<f64>,
}

impl ProximityModel {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

pub fn build_z(g: &Graph, spec: &ProximitySpec) -> Result<ProximityModel> {
    g.ensure_no_isolated()?;
    build_z_weighted(&g.adjacency(), spec)
}

/// Builds the model from a weighted adjacency; degrees and volume are read
/// off `w`.
pub fn build_z_weighted(w: &DMatrix<f64>, spec: &ProximitySpec) -> Result<ProximityModel> {
    let n = w.nrows();
    spec.validate(n)?;
    let degrees: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let vol: f64 = degrees.iter().sum();
    build_z_with(w, &degrees, vol, spec)
}

/// Builds the model with caller-supplied degrees and volume, which are
/// treated as constants by the gradient.
pub fn build_z_with(
    w: &DMatrix<f64>,
    degrees: &[f64],
    vol: f64,
    spec: &ProximitySpec,
) -> Result<ProximityModel> {
    let walk = walk_matrix(w, degrees, vol, spec)?;
    let z = shifted_log(&walk, spec.negatives);
    let omega = Omega::from_support(&z);
    Ok(ProximityModel {
        z,
        omega,
        walk,
        spec: *spec,
        vol,
        degrees: degrees.to_vec(),
    })
}

/// Transition matrix `P = D^-1 W`.
pub fn transition(w: &DMatrix<f64>, degrees: &[f64]) -> DMatrix<f64> {
    let mut p = w.clone();
    for (i, mut row) in p.row_iter_mut().enumerate() {
        row /= degrees[i];
    }
    p
}

pub fn walk_matrix(
    w: &DMatrix<f64>,
    degrees: &[f64],
    vol: f64,
    spec: &ProximitySpec,
) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n || degrees.len() != n {
        return Err(Error::invalid("adjacency must be square and match the degree vector"));
    }
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode(i));
    }
    let window = spec.effective_window();
    if window == 0 {
        return Err(Error::invalid("window size T must be at least 1"));
    }

    let mut m = match spec.method {
        Method::Line2 => w.clone(),
        Method::DeepWalk => {
            let p = transition(w, degrees);
            let mut power = p.clone();
            let mut sum = p.clone();
            for _ in 1..window {
                power = &power * &p;
                sum += &power;
            }
            // Fold D^-1 on the left back out so both methods share the
            // column/row scaling below.
            for (i, mut row) in sum.row_iter_mut().enumerate() {
                row *= degrees[i] / window as f64;
            }
            sum
        }
    };
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= vol / (degrees[i] * degrees[j]);
        }
    }
    Ok(m)
}

/// `max(log m - log b, 0)` elementwise, with non-positive `m` mapped to 0.
pub fn shifted_log(m: &DMatrix<f64>, negatives: f64) -> DMatrix<f64> {
    let shift = negatives.ln();
    m.map(|v| if v > 0.0 { (v.ln() - shift).max(0.0) } else { 0.0 })
}
