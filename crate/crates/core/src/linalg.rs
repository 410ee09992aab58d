//! Dense small-matrix numerics: spectra, Hurwitz tests, the continuous
//! Lyapunov equation and stabilizing gain synthesis.

use nalgebra::{linalg::Schur, Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default margin for Hurwitz decisions.
pub const HURWITZ_TOL: f64 = 1e-9;
/// Minimum stability margin required of a synthesized gain.
pub const GAIN_MARGIN: f64 = 1e-6;
/// Relative singular-value threshold used by the PBH rank test.
pub const RANK_TOL: f64 = 1e-9;
const LYAP_REFINE: usize = 3;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;
const SIGN_MAX_ITER: usize = 200;

pub fn check_finite(m: &Matrix, name: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

fn check_square(m: &Matrix, name: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a real matrix, sorted by real part then imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(pub Vec<Complex<f64>>);

impl Spectrum {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex<f64>> {
        self.0.iter()
    }

    pub fn max_real(&self) -> f64 {
        self.0.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when some eigenvalue lies within `tol` of `target`.
    pub fn contains(&self, target: Complex<f64>, tol: f64) -> bool {
        self.0.iter().any(|z| (z - target).norm() <= tol)
    }
}

/// A continuous-time plant `dx/dt = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        check_square(&a, "A")?;
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::Dimension("need n >= 1 states and m >= 1 inputs".into()));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

pub fn eigenvalues(a: &Matrix) -> Result<Spectrum> {
    check_square(a, "matrix")?;
    check_finite(a, "matrix")?;
    if a.nrows() == 0 {
        return Ok(Spectrum(Vec::new()));
    }
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(Spectrum(eig))
}

/// True iff every eigenvalue has real part below `-tol`.
pub fn is_hurwitz(a: &Matrix, tol: f64) -> Result<bool> {
    Ok(eigenvalues(a)?.max_real() < -tol)
}

pub fn is_symmetric_positive_definite(m: &Matrix, sym_tol: f64) -> bool {
    if !m.is_square() || m.nrows() == 0 {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    if max_abs(&(m - m.transpose())) > sym_tol * scale {
        return false;
    }
    symmetrize(m).symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}

/// Solves `Abarᵀ P + P Abar = -Q` through the Kronecker-vectorized
/// `n² x n²` system `(I ⊗ Abarᵀ + Abarᵀ ⊗ I) vec(P) = -vec(Q)`.
pub fn solve_lyapunov(abar: &Matrix, q: &Matrix) -> Result<Matrix> {
    check_square(abar, "Abar")?;
    check_finite(abar, "Abar")?;
    check_finite(q, "Q")?;
    let n = abar.nrows();
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Q is {}x{}, expected {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    if !is_symmetric_positive_definite(q, 1e-12) {
        return Err(Error::NotPositiveDefinite("Q"));
    }
    let spectrum = eigenvalues(abar)?;
    if spectrum.max_real() >= -HURWITZ_TOL {
        return Err(Error::NotHurwitz {
            max_real: spectrum.max_real(),
        });
    }

    let at = abar.transpose();
    let eye = Matrix::identity(n, n);
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    // column-major storage makes the slice equal to vec(Q)
    let lu = op.lu();
    let solve = |rhs: &Matrix| -> Result<Matrix> {
        let v = lu
            .solve(&DVector::from_column_slice(rhs.as_slice()))
            .ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
        Ok(symmetrize(&Matrix::from_column_slice(n, n, v.as_slice())))
    };
    let mut p = solve(&-q)?;
    // iterative refinement for ill-conditioned Abar
    for _ in 0..LYAP_REFINE {
        let residual = &at * &p + &p * abar + q;
        if max_abs(&residual) == 0.0 {
            break;
        }
        p -= solve(&residual)?;
        p = symmetrize(&p);
    }
    check_finite(&p, "P")?;
    Ok(p)
}

/// PBH test: every eigenvalue with `Re(λ) >= -tol` must satisfy
/// `rank [A - λI, B] = n`.
pub fn check_stabilizable(sys: &LinearSystem, tol: f64) -> Result<()> {
    let n = sys.n();
    let m = sys.m();
    for lambda in eigenvalues(sys.a())?.iter() {
        if lambda.re < -tol {
            continue;
        }
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(sys.a()[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..m {
                pencil[(i, n + j)] = Complex::new(sys.b()[(i, j)], 0.0);
            }
        }
        let sv = pencil.singular_values();
        let largest = sv.max();
        let rank = sv.iter().filter(|&&s| s > RANK_TOL * largest).count();
        if rank < n {
            return Err(Error::NotStabilizable {
                re: lambda.re,
                im: lambda.im,
            });
        }
    }
    Ok(())
}

/// Stabilizing solution of `AᵀX + XA - XBBᵀX + I = 0`.
///
/// The stable invariant subspace of the Hamiltonian
/// `H = [[A, -BBᵀ], [-I, -Aᵀ]]` is read off the matrix sign function
/// (scaled Newton iteration): `(sign(H) + I) [I; X] = 0`.
pub fn solve_riccati(sys: &LinearSystem) -> Result<Matrix> {
    let n = sys.n();
    let a = sys.a();
    let b = sys.b();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-Matrix::identity(n, n)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..SIGN_MAX_ITER {
        let inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Hamiltonian has imaginary-axis eigenvalues".into()))?;
        let det = z.determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z / c + inv * c) * 0.5;
        let change = (&next - &z).abs().sum();
        let size = next.abs().sum();
        z = next;
        if change <= 1e-13 * size {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("matrix sign iteration did not converge".into()));
    }

    let eye = Matrix::identity(n, n);
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(format!("Riccati subspace solve failed: {e}")))?;
    let x = symmetrize(&x);
    check_finite(&x, "Riccati solution")?;
    Ok(x)
}

/// Unit-weight quadratic-regulator gain `K = BᵀX`, checked so that
/// `A - BK` is Hurwitz with margin [`GAIN_MARGIN`].
pub fn synthesize_gain(sys: &LinearSystem) -> Result<Matrix> {
    check_stabilizable(sys, HURWITZ_TOL)?;
    let x = solve_riccati(sys)?;
    let k = sys.b().transpose() * x;
    let closed = sys.a() - sys.b() * &k;
    let spectrum = eigenvalues(&closed)?;
    if spectrum.max_real() >= -GAIN_MARGIN {
        return Err(Error::Numerical(format!(
            "synthesized gain leaves max real part {:.3e}",
            spectrum.max_real()
        )));
    }
    Ok(k)
}
