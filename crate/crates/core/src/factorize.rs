//! Masked factorization `min ||R_Omega(Z - X Y^T)||^2` by alternating
//! ridge least squares, and pair scoring on the resulting node matrix.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Pair;
use crate::proximity::{Method, Omega, ProximityModel};
use crate::seed::{rng_for, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlsConfig {
    /// Ridge added to every per-row Gram matrix.
    pub ridge: f64,
    pub max_sweeps: usize,
    /// Stop once a full sweep lowers the objective by less than this
    /// relative amount.
    pub tolerance: f64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            ridge: 1e-6,
            max_sweeps: 200,
            tolerance: 1e-8,
        }
    }
}

/// Node factor `x`, context factor `y`, and the inverted ridge Gram matrices
/// `(sum_{j in Omega_i} y_j y_j^T + ridge I)^-1` for the final `y`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub gram_inv: Vec<DMatrix<f64>>,
    pub ridge: f64,
    /// Rows with no observed cell; their `x` row is zero.
    pub empty_rows: Vec<usize>,
    pub converged: bool,
    pub sweeps: usize,
    /// Ridge-regularized objective: initial value, then one entry per
    /// half-sweep (context update, node update, ...).
    pub objective_trace: Vec<f64>,
    pub method: Method,
    pub seed: Option<u64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Uniform initialization in `[-1/sqrt(d), 1/sqrt(d)]`.
pub fn random_factors(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = rng_for(seed, streams::ALS_INIT);
    let a = 1.0 / (d as f64).sqrt();
    let x = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-a..=a));
    let y = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-a..=a));
    (x, y)
}

pub fn factorize(model: &ProximityModel, seed: u64, cfg: &AlsConfig) -> Result<Embedding> {
    let (x, y) = random_factors(model.n(), model.spec.dim, seed);
    let mut emb = factorize_from(model, x, y, cfg)?;
    if !emb.converged {
        log::warn!("ALS stopped after {} sweeps without meeting tolerance {}", emb.sweeps, cfg.tolerance);
    }
    emb.seed = Some(seed);
    Ok(emb)
}

/// Runs ALS from the given factors (warm start).
pub fn factorize_from(
    model: &ProximityModel,
    mut x: DMatrix<f64>,
    mut y: DMatrix<f64>,
    cfg: &AlsConfig,
) -> Result<Embedding> {
    let n = model.n();
    if x.nrows() != n || y.nrows() != n || x.ncols() != y.ncols() {
        return Err(Error::invalid("factor shapes do not match the proximity matrix"));
    }
    if model.omega.is_empty() {
        return Err(Error::invalid("observed set is empty; nothing to factorize"));
    }
    if cfg.ridge < 0.0 {
        return Err(Error::invalid("ridge must be non-negative"));
    }
    let omega = &model.omega;
    let z = &model.z;
    let zt = z.transpose();

    let mut trace = vec![objective(z, omega, &x, &y, cfg.ridge)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        solve_side(&zt, |j| omega.col(j), &x, &mut y, cfg.ridge)?;
        trace.push(objective(z, omega, &x, &y, cfg.ridge));
        solve_side(z, |i| omega.row(i), &y, &mut x, cfg.ridge)?;
        let f = objective(z, omega, &x, &y, cfg.ridge);
        let before = trace[trace.len() - 2];
        trace.push(f);
        sweeps += 1;
        if before <= f64::MIN_POSITIVE || (before - f) <= cfg.tolerance * before {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("warm ALS stopped after {sweeps} sweeps");
    }

    let d = x.ncols();
    let full_gram = y.tr_mul(&y);
    let mut gram_inv = Vec::with_capacity(n);
    let mut empty_rows = Vec::new();
    for i in 0..n {
        let idx = omega.row(i);
        if idx.is_empty() {
            empty_rows.push(i);
            let inv = if cfg.ridge > 0.0 {
                DMatrix::identity(d, d) / cfg.ridge
            } else {
                DMatrix::zeros(d, d)
            };
            gram_inv.push(inv);
            continue;
        }
        let chol = gram(&y, &full_gram, idx, cfg.ridge).cholesky().ok_or_else(|| singular(i))?;
        gram_inv.push(chol.inverse());
    }

    Ok(Embedding {
        x,
        y,
        gram_inv,
        ridge: cfg.ridge,
        empty_rows,
        converged,
        sweeps,
        objective_trace: trace,
        method: model.spec.method,
        seed: None,
    })
}

fn singular(row: usize) -> Error {
    Error::Numeric(format!(
        "Gram matrix of row {row} is singular; use a ridge > 0"
    ))
}

/// `sum_{j in idx} other_j other_j^T + ridge I`. `full` is `other^T other`,
/// used for dense rows where subtracting the few missing terms is cheaper.
fn gram(other: &DMatrix<f64>, full: &DMatrix<f64>, idx: &[usize], ridge: f64) -> DMatrix<f64> {
    let m = other.nrows();
    let mut g = if 2 * idx.len() > m {
        let b = other.select_rows(&complement(idx, m));
        full - b.tr_mul(&b)
    } else {
        let b = other.select_rows(idx);
        b.tr_mul(&b)
    };
    for k in 0..g.nrows() {
        g[(k, k)] += ridge;
    }
    g
}

/// One half-step: every row `r` of `target` becomes the ridge solution of
/// `sum_{c in idx(r)} (zrows[r, c] - target_r . other_c)^2`.
fn solve_side<'a>(
    zrows: &DMatrix<f64>,
    idx: impl Fn(usize) -> &'a [usize],
    other: &DMatrix<f64>,
    target: &mut DMatrix<f64>,
    ridge: f64,
) -> Result<()> {
    // Z vanishes off the mask, so every right-hand side is a row of Z * other.
    let rhs_all = zrows * other;
    let full_gram = other.tr_mul(other);
    for r in 0..target.nrows() {
        let cols = idx(r);
        if cols.is_empty() {
            target.row_mut(r).fill(0.0);
            continue;
        }
        let chol = gram(other, &full_gram, cols, ridge)
            .cholesky().ok_or_else(|| singular(r))?;
        let sol = chol.solve(&rhs_all.row(r).transpose());
        target.row_mut(r).copy_from(&sol.transpose());
    }
    Ok(())
}

/// Indices in `0..m` absent from the sorted list `present`.
fn complement(present: &[usize], m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m - present.len());
    let mut it = present.iter().peekable();
    for j in 0..m {
        if it.peek() == Some(&&j) {
            it.next();
        } else {
            out.push(j);
        }
    }
    out
}

/// Exact node factor for a fixed context factor: one node half-step.
pub fn node_factor_given_context(model: &ProximityModel, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let mut x = DMatrix::zeros(model.n(), y.ncols());
    solve_side(&model.z, |i| model.omega.row(i), y, &mut x, ridge)?;
    Ok(x)
}

/// `||R_Omega(Z - X Y^T)||_F^2`.
pub fn masked_residual(z: &DMatrix<f64>, omega: &Omega, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..z.nrows() {
        let xi = x.row(i);
        for &j in omega.row(i) {
            let r = z[(i, j)] - xi.dot(&y.row(j));
            s += r * r;
        }
    }
    s
}

fn objective(z: &DMatrix<f64>, omega: &Omega, x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> f64 {
    masked_residual(z, omega, x, y) + ridge * (x.norm_squared() + y.norm_squared())
}

/// Per-row stationarity residual
/// `|| sum_{j in Omega_i} (Z_ij - x_i . y_j) y_j - ridge x_i ||`.
pub fn kkt_residuals(model: &ProximityModel, emb: &Embedding) -> Vec<f64> {
    let d = emb.dim();
    (0..model.n())
        .map(|i| {
            let xi = emb.x.row(i);
            let mut acc = DVector::<f64>::zeros(d);
            for &j in model.omega.row(i) {
                let yj = emb.y.row(j);
                let r = model.z[(i, j)] - xi.dot(&yj);
                acc += yj.transpose() * r;
            }
            acc -= xi.transpose() * emb.ridge;
            acc.norm()
        })
        .collect()
}

/// Cosine similarity of node rows; zero rows score 0.
pub fn score_pairs(emb: &Embedding, pairs: &[Pair]) -> Vec<f64> {
    let norms: Vec<f64> = emb.x.row_iter().map(|r| r.norm()).collect();
    pairs
        .iter()
        .map(|&(i, j)| {
            let denom = norms[i] * norms[j];
            if denom == 0.0 {
                0.0
            } else {
                emb.x.row(i).dot(&emb.x.row(j)) / denom
            }
        })
        .collect()
}

/// Raw inner products `x_i . x_j`.
pub fn inner_product_scores(emb: &Embedding, pairs: &[Pair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| emb.x.row(i).dot(&emb.x.row(j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub n: usize,
    pub d: usize,
    pub method: Method,
    pub seed: Option<u64>,
}

/// Writes a JSON header line followed by `x` then `y`, each row-major
/// little-endian `f64`.
pub fn write_embedding<W: Write>(emb: &Embedding, mut out: W) -> Result<()> {
    let header = EmbeddingHeader {
        n: emb.n(),
        d: emb.dim(),
        method: emb.method,
        seed: emb.seed,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for m in [&emb.x, &emb.y] {
        for row in m.row_iter() {
            for v in row.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads back the header and the two factors written by [`write_embedding`].
pub fn read_embedding<R: BufRead>(mut input: R) -> Result<(EmbeddingHeader, DMatrix<f64>, DMatrix<f64>)> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: EmbeddingHeader = serde_json::from_str(line.trim_end())?;
    let mut read_matrix = |n: usize, d: usize| -> Result<DMatrix<f64>> {
        let mut buf = vec![0u8; n * d * 8];
        input.read_exact(&mut buf)?;
        let vals = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        Ok(DMatrix::from_row_iterator(n, d, vals))
    };
    let x = read_matrix(header.n, header.d)?;
    let y = read_matrix(header.n, header.d)?;
    Ok((header, x, y))
}
