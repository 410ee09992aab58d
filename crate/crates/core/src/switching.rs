//! Switched closed-loop synthesis.
//!
//! Each sparsifier `G_i` yields a mode `A_i = A - B K̃ G_i`. Choosing
//! `K̃ = K Σ⁻¹` with `Σ = Σ_i α_i G_i` makes the convex combination
//! `Ā = Σ_i α_i A_i = A - B K` Hurwitz for any stabilizing `K`. The
//! Lyapunov pair `ĀᵀP + PĀ = -Q` then gives region matrices
//! `R_i = A_iᵀP + PA_i` with `Σ_i α_i R_i = -Q`, so for every `x ≠ 0` some
//! mode strictly decreases `V(x) = xᵀPx`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::csd::trial_rng;
use crate::error::{Error, Result};
use crate::linalg::{
    self, check_finite, is_symmetric_positive_definite, max_abs, solve_lyapunov, symmetrize, LinearSystem, Matrix,
    Vector, HURWITZ_TOL,
};
use crate::sparsify::{check_weights, uniform_weights, SparsifierClass};

pub const DEFAULT_HYSTERESIS: f64 = 0.1;
/// `‖Ā - (A - BK̃Σ)‖_max` and `‖Ā - Σα_iA_i‖_max` bound.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Lyapunov residual and `‖Σα_iR_i + Q‖_max` bound.
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const SYMMETRY_TOL: f64 = 1e-12;

/// How the feedback gain enters the design.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSpec {
    /// Solve the unit-weight regulator problem for `K`.
    Synthesize,
    /// Stabilizing `K` for `A - BK`; `K̃ = KΣ⁻¹`.
    Feedback(Matrix),
    /// Modified gain `K̃` given directly; `K = K̃Σ`.
    Modified(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub gain: GainSpec,
    /// Sparsifier gains `g_i`, all ones when absent.
    pub gains: Option<Vec<f64>>,
    /// Convex weights `α_i`, uniform when absent.
    pub alphas: Option<Vec<f64>>,
    /// Positive definite `Q`, identity when absent.
    pub q: Option<Matrix>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            gain: GainSpec::Synthesize,
            gains: None,
            alphas: None,
            q: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingDesign {
    pub system: LinearSystem,
    pub class: SparsifierClass,
    pub alphas: Vec<f64>,
    pub k: Matrix,
    pub ktilde: Matrix,
    pub abar: Matrix,
    pub p: Matrix,
    pub q: Matrix,
    pub modes: Vec<Matrix>,
    pub regions: Vec<Matrix>,
}

fn check_shape(m: &Matrix, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// `A_i = A - B K̃ G_i` for each member of the class.
pub fn build_modes(sys: &LinearSystem, ktilde: &Matrix, class: &SparsifierClass) -> Result<Vec<Matrix>> {
    check_shape(ktilde, sys.m(), sys.n(), "K̃")?;
    if class.n() != sys.n() {
        return Err(Error::Dimension(format!(
            "sparsifier class acts on {} states, system has {}",
            class.n(),
            sys.n()
        )));
    }
    let bk = sys.b() * ktilde;
    Ok(class.members().iter().map(|g| sys.a() - &bk * g.matrix()).collect())
}

/// `R_i = A_iᵀP + PA_i`, symmetrized.
pub fn region_matrix(mode: &Matrix, p: &Matrix) -> Result<Matrix> {
    let n = mode.nrows();
    check_shape(mode, n, n, "mode matrix")?;
    check_shape(p, n, n, "P")?;
    Ok(symmetrize(&(mode.transpose() * p + p * mode)))
}

/// Convex combination `Σ_i α_i M_i`.
pub fn convex_combination(mats: &[Matrix], alphas: &[f64]) -> Matrix {
    let (r, c) = mats[0].shape();
    mats.iter()
        .zip(alphas)
        .fold(Matrix::zeros(r, c), |acc, (m, a)| acc + m * *a)
}

/// One term `coef · x_i x_j` (`i <= j`, zero-based) of a region quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadTerm {
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

/// Expands `xᵀRx` into monomial coefficients.
pub fn quadratic_terms(r: &Matrix) -> Vec<QuadTerm> {
    let n = r.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let coef = if i == j { r[(i, i)] } else { r[(i, j)] + r[(j, i)] };
            out.push(QuadTerm { i, j, coef });
        }
    }
    out
}

pub fn quadratic_form(r: &Matrix, x: &Vector) -> f64 {
    x.dot(&(r * x))
}

impl SwitchingDesign {
    /// Builds the full design for budget `s`.
    pub fn synthesize(sys: &LinearSystem, s: usize, options: &SynthesisOptions) -> Result<Self> {
        let n = sys.n();
        let class = match &options.gains {
            Some(g) => SparsifierClass::new(n, s, g)?,
            None => SparsifierClass::with_unit_gains(n, s)?,
        };
        let alphas = options.alphas.clone().unwrap_or_else(|| uniform_weights(class.count()));
        let sigma = class.sigma(&alphas)?;
        let q = options.q.clone().unwrap_or_else(|| Matrix::identity(n, n));
        check_shape(&q, n, n, "Q")?;

        let (k, ktilde) = match &options.gain {
            GainSpec::Synthesize => {
                let k = linalg::synthesize_gain(sys)?;
                let kt = &k * sigma.inverse();
                (k, kt)
            }
            GainSpec::Feedback(k) => {
                check_shape(k, sys.m(), n, "K")?;
                check_finite(k, "K")?;
                (k.clone(), k * sigma.inverse())
            }
            GainSpec::Modified(kt) => {
                check_shape(kt, sys.m(), n, "K̃")?;
                check_finite(kt, "K̃")?;
                (kt * sigma.matrix(), kt.clone())
            }
        };

        let modes = build_modes(sys, &ktilde, &class)?;
        let abar = convex_combination(&modes, &alphas);
        let p = solve_lyapunov(&abar, &q)?;
        let regions = modes.iter().map(|m| region_matrix(m, &p)).collect::<Result<Vec<_>>>()?;
        let design = Self {
            system: sys.clone(),
            class,
            alphas,
            k,
            ktilde,
            abar,
            p,
            q,
            modes,
            regions,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Checks every structural and numerical invariant of a design.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.system.m();
        let count = self.class.count();
        if self.class.n() != n {
            return Err(Error::Invariant(
                "sparsifier class dimension differs from system".into(),
            ));
        }
        check_weights(&self.alphas, count)?;
        check_shape(&self.k, m, n, "K")?;
        check_shape(&self.ktilde, m, n, "K̃")?;
        check_shape(&self.abar, n, n, "Ā")?;
        check_shape(&self.p, n, n, "P")?;
        check_shape(&self.q, n, n, "Q")?;
        if self.modes.len() != count || self.regions.len() != count {
            return Err(Error::Invariant(format!(
                "expected {count} modes and regions, got {} and {}",
                self.modes.len(),
                self.regions.len()
            )));
        }

        let expected_modes = build_modes(&self.system, &self.ktilde, &self.class)?;
        for (i, (got, want)) in self.modes.iter().zip(&expected_modes).enumerate() {
            check_shape(got, n, n, "mode matrix")?;
            let err = max_abs(&(got - want));
            if err > IDENTITY_TOL {
                return Err(Error::Invariant(format!(
                    "mode {} deviates from A - BK̃G_i by {err:.3e}",
                    i + 1
                )));
            }
        }

        let combo = convex_combination(&self.modes, &self.alphas);
        let err = max_abs(&(&self.abar - &combo));
        if err > IDENTITY_TOL {
            return Err(Error::Invariant(format!("Ā differs from Σα_iA_i by {err:.3e}")));
        }
        let sigma = self.class.sigma(&self.alphas)?;
        let err = max_abs(&(&self.abar - (self.system.a() - self.system.b() * &self.ktilde * sigma.matrix())));
        if err > IDENTITY_TOL {
            return Err(Error::Invariant(format!("Ā differs from A - BK̃Σ by {err:.3e}")));
        }
        let err = max_abs(&(&self.k - &self.ktilde * sigma.matrix()));
        if err > IDENTITY_TOL * max_abs(&self.k).max(1.0) {
            return Err(Error::Invariant(format!("K differs from K̃Σ by {err:.3e}")));
        }

        if !linalg::is_hurwitz(&self.abar, HURWITZ_TOL)? {
            return Err(Error::Invariant("Ā is not Hurwitz".into()));
        }
        if !is_symmetric_positive_definite(&self.q, SYMMETRY_TOL) {
            return Err(Error::NotPositiveDefinite("Q"));
        }
        if max_abs(&(&self.p - self.p.transpose())) > SYMMETRY_TOL
            || !is_symmetric_positive_definite(&self.p, SYMMETRY_TOL)
        {
            return Err(Error::NotPositiveDefinite("P"));
        }
        let tol = RESIDUAL_TOL * self.residual_scale();
        let residual = self.lyapunov_residual();
        if residual > tol {
            return Err(Error::Invariant(format!("Lyapunov residual {residual:.3e}")));
        }
        for (i, (r, mode)) in self.regions.iter().zip(&self.modes).enumerate() {
            let err = max_abs(&(r - region_matrix(mode, &self.p)?));
            if err > tol {
                return Err(Error::Invariant(format!("region {} deviates by {err:.3e}", i + 1)));
            }
        }
        let err = self.region_sum_residual();
        if err > tol {
            return Err(Error::Invariant(format!("‖Σα_iR_i + Q‖ = {err:.3e}")));
        }
        Ok(())
    }

    /// `max(1, ‖Ā‖_max ‖P‖_max)`: residuals of products of `Ā` and `P` carry
    /// rounding error of this order, so invariant checks scale by it.
    pub fn residual_scale(&self) -> f64 {
        (max_abs(&self.abar) * max_abs(&self.p)).max(1.0)
    }

    /// `‖Σ_i α_i R_i + Q‖_max`.
    pub fn region_sum_residual(&self) -> f64 {
        max_abs(&(convex_combination(&self.regions, &self.alphas) + &self.q))
    }

    pub fn lyapunov_residual(&self) -> f64 {
        max_abs(&(self.abar.transpose() * &self.p + &self.p * &self.abar + &self.q))
    }

    pub fn lyapunov_value(&self, x: &Vector) -> f64 {
        quadratic_form(&self.p, x)
    }

    /// `xᵀR_i x` for every mode.
    pub fn margins(&self, x: &Vector) -> Vec<f64> {
        self.regions.iter().map(|r| quadratic_form(r, x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSelection {
    /// Zero-based mode index.
    pub index: usize,
    pub margin: f64,
    pub switched: bool,
}

/// State-dependent switching law.
///
/// Keeps `current` while `xᵀR_current x < -h·xᵀQx`; otherwise picks the
/// mode with the most negative `xᵀR_i x` (lowest index on ties).
pub fn select_mode(x: &Vector, design: &SwitchingDesign, current: Option<usize>, hysteresis: f64) -> ModeSelection {
    let margins = design.margins(x);
    if x.iter().all(|v| *v == 0.0) {
        let index = current.unwrap_or(0);
        return ModeSelection {
            index,
            margin: 0.0,
            switched: false,
        };
    }
    if let Some(c) = current {
        if margins[c] < -hysteresis * quadratic_form(&design.q, x) {
            return ModeSelection {
                index: c,
                margin: margins[c],
                switched: false,
            };
        }
    }
    let (index, margin) =
        margins.iter().copied().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, v)| if v < best.1 { (i, v) } else { best },
        );
    ModeSelection {
        index,
        margin,
        switched: current.is_some_and(|c| c != index),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    /// Largest sampled value of `min_i xᵀR_i x` on the unit sphere.
    pub min_over_sphere: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub pass: bool,
}

/// Samples the unit sphere (the `2n` signed axis points plus `samples`
/// seeded Gaussian directions) and checks that some region is strictly
/// negative at every sample.
pub fn check_coverage(design: &SwitchingDesign, samples: usize, seed: u64) -> CoverageReport {
    let n = design.n();
    let mut rng = trial_rng(seed, 0);
    let axes = (0..2 * n).map(|k| {
        let mut e = Vector::zeros(n);
        e[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
        e
    });
    let random = std::iter::repeat_with(move || loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            break v / norm;
        }
    })
    .take(samples);

    let mut worst = (f64::NEG_INFINITY, Vector::zeros(n));
    let mut count = 0;
    for x in axes.chain(random) {
        count += 1;
        let m = design.margins(&x).into_iter().fold(f64::INFINITY, f64::min);
        if m > worst.0 {
            worst = (m, x);
        }
    }
    CoverageReport {
        min_over_sphere: worst.0,
        worst_point: worst.1.iter().copied().collect(),
        samples: count,
        pass: worst.0 < 0.0,
    }
}
