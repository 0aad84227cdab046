//! The gradient chain `dL/dW = dL/dX . dX/dZ . dZ/dW`.
//!
//! `dX/dZ` comes from the stationarity condition of the row-wise ridge
//! least squares with `Y` held fixed:
//! `dX_i/dZ_ij = (sum_{j' in Omega_i} y_j' y_j'^T + ridge I)^-1 y_j`.
//! `dZ/dW` treats degrees and volume as constants. The adjacency gradient
//! is returned symmetrized, `(G + G^T) / 2`, with a zero diagonal, since
//! `W_ij` and `W_ji` are one variable of the undirected graph.

use nalgebra::{DMatrix, DVector};

use super::Goal;
use crate::error::{Error, Result};
use crate::factorize::Embedding;
use crate::proximity::{transition, Method, Omega, ProximityModel};

/// The descended attack loss evaluated on inner products of node rows.
pub fn loss(emb: &Embedding, goal: &Goal) -> f64 {
    goal.terms()
        .into_iter()
        .map(|(i, j, s)| s * emb.x.row(i).dot(&emb.x.row(j)))
        .sum()
}

pub fn grad_loss_wrt_x(x: &DMatrix<f64>, goal: &Goal) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for (i, j, s) in goal.terms() {
        let xi = x.row(i).clone_owned();
        let xj = x.row(j).clone_owned();
        let mut gi = g.row_mut(i);
        gi += xj * s;
        let mut gj = g.row_mut(j);
        gj += xi * s;
    }
    g
}

/// Back-propagates `gx` to the observed cells of `Z`; zero elsewhere.
pub fn grad_loss_wrt_z(emb: &Embedding, gx: &DMatrix<f64>, omega: &Omega) -> Result<DMatrix<f64>> {
    let n = emb.n();
    if omega.dims() != (n, n) || gx.shape() != emb.x.shape() || emb.gram_inv.len() != n {
        return Err(Error::invalid("embedding, gradient and observed set disagree in shape"));
    }
    let mut gz = DMatrix::zeros(n, n);
    for i in 0..n {
        let idx = omega.row(i);
        let gxi = gx.row(i);
        if idx.is_empty() || gxi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let v: DVector<f64> = &emb.gram_inv[i] * gxi.transpose();
        if v.iter().any(|c| !c.is_finite()) || (emb.ridge == 0.0 && v.iter().all(|&c| c == 0.0)) {
            return Err(Error::Numeric(format!(
                "Gram inverse of row {i} is unusable; factorize with ridge > 0"
            )));
        }
        for &j in idx {
            gz[(i, j)] = v.dot(&emb.y.row(j).transpose());
        }
    }
    Ok(gz)
}

fn symmetrize(mut g: DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    for i in 0..n {
        g[(i, i)] = 0.0;
        for j in i + 1..n {
            let m = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = m;
            g[(j, i)] = m;
        }
    }
    g
}

/// LINE: `dZ_ij / dW_ij = 1 / W_ij` on observed cells.
pub fn grad_z_wrt_a_line(gz: &DMatrix<f64>, w: &DMatrix<f64>, omega: &Omega) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let mut ga = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in omega.row(i) {
            let wij = w[(i, j)];
            if !(wij > 0.0) {
                return Err(Error::Numeric(format!(
                    "observed cell ({i}, {j}) has non-positive weight {wij}"
                )));
            }
            ga[(i, j)] = gz[(i, j)] / wij;
        }
    }
    Ok(symmetrize(ga))
}

/// DeepWalk: adjoint of `M = vol/T * sum_{r=1..T} P^r D^-1`, `P = D^-1 W`.
///
/// With `G_S` the adjoint of `S = sum_r P^r`, the adjoint of `P` is
/// `sum_{a+b <= T-1} (P^T)^a G_S (P^T)^b`, evaluated Horner-style as
/// `sum_a (P^T)^a (G_S C_{T-1-a})` with `C_m = sum_{b<=m} (P^T)^b`.
pub fn grad_z_wrt_a_deepwalk(gz: &DMatrix<f64>, w: &DMatrix<f64>, model: &ProximityModel) -> Result<DMatrix<f64>> {
    let window = model.spec.effective_window();
    if window == 0 {
        return Err(Error::invalid("window size T must be at least 1"));
    }
    let n = w.nrows();
    let deg = &model.degrees;
    if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode(i));
    }
    let scale = model.vol / window as f64;

    let mut gs = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in model.omega.row(i) {
            let m = model.walk[(i, j)];
            gs[(i, j)] = gz[(i, j)] / m * scale / deg[j];
        }
    }

    let q = transition(w, deg).transpose();
    let mut powers = Vec::with_capacity(window);
    powers.push(DMatrix::<f64>::identity(n, n));
    for b in 1..window {
        let next = &powers[b - 1] * &q;
        powers.push(next);
    }
    let mut cumulative = Vec::with_capacity(window);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for p in &powers {
        acc += p;
        cumulative.push(acc.clone());
    }

    // a = T-1 term has C_0 = I.
    let mut r = gs.clone();
    for a in (0..window - 1).rev() {
        r = &gs * &cumulative[window - 1 - a] + &q * &r;
    }

    for (i, mut row) in r.row_iter_mut().enumerate() {
        row /= deg[i];
    }
    Ok(symmetrize(r))
}

/// Full chain for the current relaxed adjacency `w` and its model/embedding.
pub fn adjacency_gradient(
    model: &ProximityModel,
    emb: &Embedding,
    goal: &Goal,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let gx = grad_loss_wrt_x(&emb.x, goal);
    let gz = grad_loss_wrt_z(emb, &gx, &model.omega)?;
    match model.spec.method {
        Method::Line2 => grad_z_wrt_a_line(&gz, w, &model.omega),
        Method::DeepWalk => grad_z_wrt_a_deepwalk(&gz, w, model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Direction;
    use crate::factorize::{factorize, AlsConfig};
    use crate::generate::erdos_renyi;
    use crate::proximity::{build_z, build_z_with, ProximitySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixed_embedding(x: DMatrix<f64>) -> Embedding {
        let n = x.nrows();
        let d = x.ncols();
        Embedding {
            y: x.clone(),
            x,
            gram_inv: vec![DMatrix::identity(d, d); n],
            ridge: 0.0,
            empty_rows: vec![],
            converged: true,
            sweeps: 0,
            objective_trace: vec![],
            method: Method::Line2,
            seed: None,
        }
    }

    fn up(i: usize, j: usize) -> Goal {
        Goal::Integrity {
            target: (i, j),
            direction: Direction::Up,
        }
    }

    fn down(i: usize, j: usize) -> Goal {
        Goal::Integrity {
            target: (i, j),
            direction: Direction::Down,
        }
    }

    #[test]
    fn loss_sign_conventions() {
        let emb = fixed_embedding(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]));
        assert_eq!(loss(&emb, &up(1, 2)), -6.0);
        assert_eq!(loss(&emb, &down(1, 2)), 6.0);
        let orth = fixed_embedding(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(loss(&orth, &down(0, 1)), 0.0);
        let cancel = Goal::Availability {
            positives: vec![(0, 1), (1, 2)],
            negatives: vec![(0, 1), (1, 2)],
        };
        assert_eq!(loss(&emb, &cancel), 0.0);
    }

    #[test]
    fn grad_x_integrity_down() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = grad_loss_wrt_x(&x, &down(0, 2));
        assert_eq!(g.row(0), x.row(2));
        assert_eq!(g.row(2), x.row(0));
        assert!(g.row(1).iter().all(|&v| v == 0.0));
        let single = Goal::Availability {
            positives: vec![(0, 2)],
            negatives: vec![],
        };
        assert_eq!(grad_loss_wrt_x(&x, &single), g);
    }

    #[test]
    fn grad_x_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let goal = Goal::Availability {
            positives: vec![(0, 1), (2, 3), (1, 3)],
            negatives: vec![(4, 5), (0, 5)],
        };
        let g = grad_loss_wrt_x(&x, &goal);
        let h = 1e-6;
        for r in 0..6 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[(r, c)] += h;
                let mut xm = x.clone();
                xm[(r, c)] -= h;
                let fd = (loss(&fixed_embedding(xp), &goal) - loss(&fixed_embedding(xm), &goal)) / (2.0 * h);
                assert!((fd - g[(r, c)]).abs() <= 1e-6 * g[(r, c)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let g = erdos_renyi(12, 0.3, 2).unwrap();
        let spec = ProximitySpec::deepwalk(3, 1.0, 2);
        let model = build_z(&g, &spec).unwrap();
        let emb = factorize(&model, 1, &AlsConfig::default()).unwrap();
        let zero = DMatrix::zeros(12, 2);
        let gz = grad_loss_wrt_z(&emb, &zero, &model.omega).unwrap();
        assert_eq!(gz.amax(), 0.0);
        let w = g.adjacency();
        assert_eq!(grad_z_wrt_a_deepwalk(&gz, &w, &model).unwrap().amax(), 0.0);
    }

    #[test]
    fn zero_upstream_gradient_line() {
        let g = erdos_renyi(12, 0.3, 2).unwrap();
        let model = build_z(&g, &ProximitySpec::line(1.0, 2)).unwrap();
        let gz = DMatrix::zeros(12, 12);
        assert_eq!(grad_z_wrt_a_line(&gz, &g.adjacency(), &model.omega).unwrap().amax(), 0.0);
    }

    #[test]
    fn scalar_kkt_derivative() {
        // d = 1, row 0 observes only column 1 with y_1 = y: dX_0/dZ_01 = 1/y.
        let y = 2.5;
        let mut emb = fixed_embedding(DMatrix::from_column_slice(2, 1, &[0.4, 0.0]));
        emb.y = DMatrix::from_column_slice(2, 1, &[1.0, y]);
        emb.gram_inv = vec![DMatrix::from_element(1, 1, 1.0 / (y * y)), DMatrix::from_element(1, 1, 1.0)];
        let mut z = DMatrix::zeros(2, 2);
        z[(0, 1)] = 1.0;
        let omega = Omega::from_support(&z);
        let gx = DMatrix::from_column_slice(2, 1, &[3.0, 0.0]);
        let gz = grad_loss_wrt_z(&emb, &gx, &omega).unwrap();
        assert!((gz[(0, 1)] - 3.0 / y).abs() < 1e-15);
        assert_eq!(gz[(0, 0)], 0.0);
    }

    #[test]
    fn line_gradient_arithmetic() {
        let mut gz = DMatrix::zeros(3, 3);
        gz[(0, 1)] = 2.0;
        let mut w = DMatrix::from_element(3, 3, 1.0);
        w[(0, 1)] = 0.5;
        let omega = Omega::from_support(&gz);
        let ga = grad_z_wrt_a_line(&gz, &w, &omega).unwrap();
        // 2 / 0.5 = 4 before symmetrization.
        assert_eq!(ga[(0, 1)], 2.0);
        assert_eq!(ga[(1, 0)], 2.0);
        assert_eq!(ga[(1, 1)], 0.0);
    }

    #[test]
    fn line_gradient_rejects_zero_weight_on_omega() {
        let gz = DMatrix::from_element(2, 2, 1.0);
        let omega = Omega::from_support(&gz);
        let w = DMatrix::zeros(2, 2);
        assert!(matches!(grad_z_wrt_a_line(&gz, &w, &omega), Err(Error::Numeric(_))));
    }

    /// Literal double sum `(1/T) sum_r sum_k (P^{k-1})^T G_S (P^{r-k})^T`.
    fn deepwalk_reference(gz: &DMatrix<f64>, w: &DMatrix<f64>, model: &ProximityModel) -> DMatrix<f64> {
        let n = w.nrows();
        let t = model.spec.window;
        let deg = &model.degrees;
        let gm = DMatrix::from_fn(n, n, |i, j| {
            if model.omega.contains(i, j) {
                gz[(i, j)] / model.walk[(i, j)]
            } else {
                0.0
            }
        });
        let gs = DMatrix::from_fn(n, n, |i, j| gm[(i, j)] * model.vol / deg[j]);
        let p = transition(w, deg);
        let pow = |k: usize| (0..k).fold(DMatrix::<f64>::identity(n, n), |acc, _| acc * &p);
        let mut gp = DMatrix::zeros(n, n);
        for r in 1..=t {
            for k in 1..=r {
                gp += pow(k - 1).transpose() * &gs * pow(r - k).transpose();
            }
        }
        gp /= t as f64;
        let ga = DMatrix::from_fn(n, n, |i, j| gp[(i, j)] / deg[i]);
        symmetrize(ga)
    }

    #[test]
    fn deepwalk_adjoint_matches_literal_double_sum() {
        let g = erdos_renyi(10, 0.35, 3).unwrap();
        let model = build_z(&g, &ProximitySpec::deepwalk(4, 1.0, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gz = DMatrix::from_fn(10, 10, |i, j| if model.omega.contains(i, j) { rng.gen_range(-1.0..1.0) } else { 0.0 });
        let w = g.adjacency();
        let fast = grad_z_wrt_a_deepwalk(&gz, &w, &model).unwrap();
        let slow = deepwalk_reference(&gz, &w, &model);
        assert!((&fast - &slow).amax() < 1e-12 * slow.amax().max(1.0));
    }

    #[test]
    fn deepwalk_window_one_equals_line() {
        let g = erdos_renyi(15, 0.3, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = build_z(&g, &ProximitySpec::deepwalk(1, 1.0, 2)).unwrap();
        let gz = DMatrix::from_fn(15, 15, |i, j| if model.omega.contains(i, j) { rng.gen_range(-1.0..1.0) } else { 0.0 });
        let w = g.adjacency();
        let a = grad_z_wrt_a_deepwalk(&gz, &w, &model).unwrap();
        let b = grad_z_wrt_a_line(&gz, &w, &model.omega).unwrap();
        assert!((&a - &b).amax() < 1e-10);
    }

    /// Contract `<G_Z, dZ/dW_uv>` by central differences on the analytic Z,
    /// holding degrees, volume and the observed set fixed.
    #[test]
    fn deepwalk_chain_matches_analytic_z_differences() {
        let g = crate::generate::stochastic_block_model(&[3, 3], 0.9, 0.3, 11).unwrap();
        let spec = ProximitySpec::deepwalk(2, 1.0, 2);
        let model = build_z(&g, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gz = DMatrix::from_fn(6, 6, |i, j| if model.omega.contains(i, j) { rng.gen_range(-1.0..1.0) } else { 0.0 });
        let mut w = g.adjacency();
        // Relax every zero cell so all cells carry gradient paths.
        for i in 0..6 {
            for j in 0..6 {
                if i != j && w[(i, j)] == 0.0 {
                    w[(i, j)] = 0.2;
                }
            }
        }
        let model = build_z_with(&w, &model.degrees, model.vol, &spec).unwrap();
        let ga = grad_z_wrt_a_deepwalk(&gz, &w, &model).unwrap();
        let h = 1e-4;
        for u in 0..6 {
            for v in u + 1..6 {
                let zf = |delta: f64| {
                    let mut wp = w.clone();
                    wp[(u, v)] += delta;
                    wp[(v, u)] += delta;
                    build_z_with(&wp, &model.degrees, model.vol, &spec).unwrap().walk.map(f64::ln)
                };
                let dz = (zf(h) - zf(-h)) / (2.0 * h);
                let mut fd = 0.0;
                for i in 0..6 {
                    for &j in model.omega.row(i) {
                        fd += gz[(i, j)] * dz[(i, j)];
                    }
                }
                let analytic = 2.0 * ga[(u, v)];
                let rel = (fd - analytic).abs() / analytic.abs().max(1e-8);
                assert!(rel < 1e-5, "cell ({u},{v}): fd {fd} analytic {analytic}");
            }
        }
    }
}
