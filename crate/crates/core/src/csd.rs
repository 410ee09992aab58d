//! Compressive sensing device: Gaussian sensing matrices, noiseless
//! measurement, iterative hard thresholding, restricted isometry
//! constants and the stable-recovery error bound. Also the idealized
//! device used inside the control loop.

use itertools::Itertools;
use nalgebra::SVD;
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, Matrix, Vector};

pub const IHT_STEP: f64 = 0.65;
pub const IHT_MAX_ITER: usize = 500;
pub const IHT_TOL: f64 = 1e-10;
pub const IHT_RESTARTS: usize = 50;
pub const IHT_RESTART_ITER: usize = 100;
pub const RIP_BUDGET: u128 = 1_000_000;

/// Seeded generator for trial `stream` of a reproducible experiment.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    phi: Matrix,
    sparsity: usize,
    seed: Option<u64>,
}

impl MeasurementModel {
    pub fn from_matrix(phi: Matrix, sparsity: usize) -> Result<Self> {
        check_finite(&phi, "sensing matrix")?;
        let (m, n) = phi.shape();
        if m == 0 || m > n {
            return Err(Error::Domain(format!("need 1 <= M <= N, got M={m}, N={n}")));
        }
        Ok(Self {
            phi,
            sparsity,
            seed: None,
        })
    }

    /// `M x N` matrix with i.i.d. `N(0, 1/M)` entries, so squared column
    /// norms concentrate at one.
    pub fn gaussian(m: usize, n: usize, sparsity: usize, seed: u64) -> Result<Self> {
        Self::gaussian_with(m, n, sparsity, &mut ChaCha8Rng::seed_from_u64(seed)).map(|mut model| {
            model.seed = Some(seed);
            model
        })
    }

    pub fn gaussian_with<R: Rng>(m: usize, n: usize, sparsity: usize, rng: &mut R) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::Domain(format!("need 1 <= M <= N, got M={m}, N={n}")));
        }
        let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
        // draw row-major so the stream order does not depend on storage
        let phi = Matrix::from_row_iterator(m, n, (0..m * n).map(|_| normal.sample(rng)));
        Ok(Self {
            phi,
            sparsity,
            seed: None,
        })
    }

    /// Square orthogonal sensing matrix (Q factor of a Gaussian draw).
    pub fn orthonormal(n: usize, sparsity: usize, seed: u64) -> Result<Self> {
        let gaussian = Self::gaussian(n, n, sparsity, seed)?;
        let q = gaussian.phi.qr().q();
        Ok(Self {
            phi: q,
            sparsity,
            seed: Some(seed),
        })
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn measurements(&self) -> usize {
        self.phi.nrows()
    }

    pub fn ambient(&self) -> usize {
        self.phi.ncols()
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Noiseless measurement `y = Φx`.
    pub fn measure(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.ambient() {
            return Err(Error::Dimension(format!(
                "signal has length {}, sensing matrix has {} columns",
                x.len(),
                self.ambient()
            )));
        }
        Ok(&self.phi * x)
    }
}

/// Keeps the `k` largest-magnitude entries (lowest index wins ties).
pub fn hard_threshold(x: &Vector, k: usize) -> Vector {
    let mut out = Vector::zeros(x.len());
    for j in top_k_support(x, k) {
        out[j] = x[j];
    }
    out
}

fn top_k_support(x: &Vector, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    order.truncate(k);
    order.retain(|&j| x[j] != 0.0);
    order.sort_unstable();
    order
}

pub fn nonzeros(x: &Vector) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IhtConfig {
    pub step: f64,
    /// Iterations of the initial run from `x = 0`.
    pub max_iter: usize,
    /// Stop once `‖Φx - y‖₂ <= tol·‖y‖₂`.
    pub tol: f64,
    /// Restarts from random supports after a stalled initial run.
    pub restarts: usize,
    pub restart_iter: usize,
    pub seed: u64,
}

impl Default for IhtConfig {
    fn default() -> Self {
        Self {
            step: IHT_STEP,
            max_iter: IHT_MAX_ITER,
            tol: IHT_TOL,
            restarts: IHT_RESTARTS,
            restart_iter: IHT_RESTART_ITER,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub estimate: Vector,
    /// `‖Φx̂ - y‖₂` of the returned estimate.
    pub residual: f64,
    /// Total iterations over all runs.
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// Least squares on a fixed support; `None` if the columns are rank deficient.
fn support_least_squares(phi: &Matrix, y: &Vector, support: &[usize]) -> Option<Vector> {
    if support.is_empty() {
        return Some(Vector::zeros(phi.ncols()));
    }
    let sub = phi.select_columns(support);
    let coef = SVD::new(sub, true, true).solve(y, 1e-12).ok()?;
    let mut out = Vector::zeros(phi.ncols());
    for (&j, c) in support.iter().zip(coef.iter()) {
        out[j] = *c;
    }
    Some(out)
}

struct Run {
    estimate: Vector,
    residual: f64,
    iterations: usize,
}

/// One IHT run from `x`. Each iterate's support is also fitted by least
/// squares, and the run stops as soon as either meets the tolerance.
fn iht_run(phi: &Matrix, y: &Vector, k: usize, mut x: Vector, iters: usize, step: f64, tol: f64) -> Run {
    let mut best = Run {
        residual: (phi * &x - y).norm(),
        estimate: x.clone(),
        iterations: 0,
    };
    if best.residual <= tol {
        return best;
    }
    for iter in 1..=iters {
        let grad = phi.transpose() * (y - phi * &x);
        x = hard_threshold(&(&x + grad * step), k);
        let residual = (phi * &x - y).norm();
        if residual < best.residual {
            best.estimate = x.clone();
            best.residual = residual;
        }
        best.iterations = iter;
        if residual <= tol {
            break;
        }
        if let Some(fit) = support_least_squares(phi, y, &top_k_support(&x, k)) {
            let fit_residual = (phi * &fit - y).norm();
            if fit_residual < best.residual {
                best.estimate = fit;
                best.residual = fit_residual;
            }
            if fit_residual <= tol {
                break;
            }
        }
    }
    best
}

/// Iterative hard thresholding `x ← H_K(x + μ Φᵀ(y - Φx))`.
///
/// The first run starts from zero. If it stalls above tolerance, further
/// runs start from the least-squares fit on seeded random supports; in the
/// noiseless regime a run that reaches the tolerance certifies the
/// recovered support. The estimate always has at most `k` nonzeros.
/// Failing to converge is reported through `converged = false` with the
/// best iterate seen.
pub fn reconstruct_iht(model: &MeasurementModel, y: &Vector, k: usize, config: &IhtConfig) -> Result<Recovery> {
    let phi = model.phi();
    if y.len() != model.measurements() {
        return Err(Error::Dimension(format!(
            "measurement vector has length {}, model has {} rows",
            y.len(),
            model.measurements()
        )));
    }
    if k > model.measurements() {
        return Err(Error::Domain(format!(
            "sparsity {k} exceeds measurement count {}",
            model.measurements()
        )));
    }
    let n = model.ambient();
    let tol = config.tol * y.norm();
    let mut best = iht_run(phi, y, k, Vector::zeros(n), config.max_iter, config.step, tol);
    let mut iterations = best.iterations;
    let mut restarts = 0;
    if best.residual > tol && k > 0 {
        let mut rng = trial_rng(config.seed, 0);
        while restarts < config.restarts && best.residual > tol {
            restarts += 1;
            let mut support = index::sample(&mut rng, n, k).into_vec();
            support.sort_unstable();
            let Some(start) = support_least_squares(phi, y, &support) else {
                continue;
            };
            let run = iht_run(phi, y, k, start, config.restart_iter, config.step, tol);
            iterations += run.iterations;
            if run.residual < best.residual {
                best = run;
            }
        }
    }
    Ok(Recovery {
        converged: best.residual <= tol,
        estimate: best.estimate,
        residual: best.residual,
        iterations,
        restarts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RipMethod {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub order: usize,
    pub delta: f64,
    pub method: RipMethod,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Deviation from isometry of one column subset: `max(σ_max² - 1, 1 - σ_min²)`.
fn subset_delta(phi: &Matrix, cols: &[usize]) -> f64 {
    let sub = phi.select_columns(cols);
    let sv = sub.singular_values();
    let smax = sv.max();
    // a tall-enough submatrix is required for a nonzero σ_min
    let smin = if cols.len() > phi.nrows() { 0.0 } else { sv.min() };
    (smax * smax - 1.0).max(1.0 - smin * smin)
}

/// Exact `δ_K` by enumerating every `K`-column submatrix.
pub fn rip_exhaustive(phi: &Matrix, order: usize, budget: u128) -> Result<RipEstimate> {
    let n = phi.ncols();
    if order == 0 || order > n {
        return Err(Error::Range(format!("RIP order {order} not in [1, {n}]")));
    }
    let subsets = binomial(n, order);
    if subsets > budget {
        return Err(Error::BudgetExceeded { subsets, budget });
    }
    let delta = (0..n)
        .combinations(order)
        .map(|cols| subset_delta(phi, &cols))
        .fold(0.0, f64::max);
    Ok(RipEstimate {
        order,
        delta,
        method: RipMethod::Exhaustive,
    })
}

/// Lower estimate of `δ_K` from random column subsets.
pub fn rip_sampled(phi: &Matrix, order: usize, samples: usize, seed: u64) -> Result<RipEstimate> {
    let n = phi.ncols();
    if order == 0 || order > n {
        return Err(Error::Range(format!("RIP order {order} not in [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = (0..samples)
        .map(|_| {
            let mut cols = index::sample(&mut rng, n, order).into_vec();
            cols.sort_unstable();
            subset_delta(phi, &cols)
        })
        .fold(0.0, f64::max);
    Ok(RipEstimate {
        order,
        delta,
        method: RipMethod::Sampled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryBound {
    pub c0: f64,
    pub c1: f64,
    pub bound: f64,
}

/// Best `k`-term approximation error `‖x - x_K‖₂`.
pub fn tail_norm(x: &Vector, k: usize) -> f64 {
    (x - hard_threshold(x, k)).norm()
}

/// `C₀ ε + C₁ ‖x - x_K‖₂ / √K` with
/// `C₀ = 4(1+δ)/(1-(√2+1)δ)` and `C₁ = (1+(√2-1)δ)/(1-(√2+1)δ)`.
pub fn recovery_bound(delta: f64, epsilon: f64, x: &Vector, k: usize) -> Result<RecoveryBound> {
    let sqrt2 = std::f64::consts::SQRT_2;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Domain(format!("RIP constant must be nonnegative, got {delta}")));
    }
    if delta >= sqrt2 - 1.0 {
        return Err(Error::BoundInapplicable(delta));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Domain(format!("noise level must be nonnegative, got {epsilon}")));
    }
    if k == 0 {
        return Err(Error::Domain("sparsity order must be positive".into()));
    }
    let denom = 1.0 - (sqrt2 + 1.0) * delta;
    let c0 = 4.0 * (1.0 + delta) / denom;
    let c1 = (1.0 + (sqrt2 - 1.0) * delta) / denom;
    let bound = c0 * epsilon + c1 * tail_norm(x, k) / (k as f64).sqrt();
    Ok(RecoveryBound { c0, c1, bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsdMode {
    Ideal,
    Physical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsdReading {
    pub estimate: Vector,
    /// Input had more than `S` nonzeros.
    pub violation: bool,
    /// Physical reconstruction met its tolerance (always true in ideal mode).
    pub converged: bool,
}

/// Output of the sensing device for state `x` under sparsity budget `s`.
///
/// Ideal mode passes `x` through untouched when it is `s`-sparse and
/// otherwise returns its `s`-term truncation with `violation` set.
/// Physical mode measures with the model and reconstructs by IHT.
pub fn csd_output(x: &Vector, s: usize, mode: CsdMode, model: Option<&MeasurementModel>) -> Result<CsdReading> {
    let violation = nonzeros(x) > s;
    match mode {
        CsdMode::Ideal => Ok(CsdReading {
            estimate: if violation { hard_threshold(x, s) } else { x.clone() },
            violation,
            converged: true,
        }),
        CsdMode::Physical => {
            let model = model.ok_or(Error::MissingModel)?;
            if model.sparsity() < s {
                return Err(Error::Domain(format!(
                    "model sparsity {} below budget {s}",
                    model.sparsity()
                )));
            }
            let y = model.measure(x)?;
            let cfg = IhtConfig {
                seed: model.seed().unwrap_or(0),
                ..IhtConfig::default()
            };
            let rec = reconstruct_iht(model, &y, model.sparsity(), &cfg)?;
            Ok(CsdReading {
                estimate: rec.estimate,
                violation,
                converged: rec.converged,
            })
        }
    }
}

/// Random `k`-sparse vector with ±1 spikes on a uniform support.
pub fn random_spikes<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vector {
    let mut x = Vector::zeros(n);
    for j in index::sample(rng, n, k) {
        x[j] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub trial: u64,
    pub residual: f64,
    pub success: bool,
}

/// Monte-Carlo recovery experiment: each trial draws a fresh sensing
/// matrix and spike signal from its own seeded stream, then scores
/// `‖x̂ - x‖₂ <= success_tol`.
pub fn recovery_trials(
    n: usize,
    m: usize,
    k: usize,
    trials: u64,
    seed: u64,
    orthonormal: bool,
    success_tol: f64,
) -> Result<Vec<TrialRecord>> {
    if k == 0 || k > m || m > n {
        return Err(Error::Domain(format!("need 1 <= K <= M <= N, got N={n}, M={m}, K={k}")));
    }
    if orthonormal && m != n {
        return Err(Error::Domain("orthonormal sensing requires M = N".into()));
    }
    (0..trials)
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let model = if orthonormal {
                let phi = MeasurementModel::gaussian_with(n, n, k, &mut rng)?.phi.qr().q();
                MeasurementModel::from_matrix(phi, k)?
            } else {
                MeasurementModel::gaussian_with(m, n, k, &mut rng)?
            };
            let x = random_spikes(n, k, &mut rng);
            let y = model.measure(&x)?;
            let cfg = IhtConfig {
                seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial),
                ..IhtConfig::default()
            };
            let rec = reconstruct_iht(&model, &y, k, &cfg)?;
            let residual = (rec.estimate - &x).norm();
            Ok(TrialRecord {
                seed,
                trial,
                residual,
                success: residual <= success_tol,
            })
        })
        .collect()
}
