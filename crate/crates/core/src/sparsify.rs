//! Block-diagonal sparsifiers that zero every state entry outside one
//! contiguous index block, so the sensed vector has at most `S` nonzeros.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Shifts `a` right by `b` places, filling with zeros and dropping the
/// entries pushed past the end.
pub fn rshift(a: &[f64], b: usize) -> Result<Vec<f64>> {
    let n = a.len();
    if b > n {
        return Err(Error::Range(format!("shift {b} exceeds vector length {n}")));
    }
    let mut out = vec![0.0; n];
    out[b..].copy_from_slice(&a[..n - b]);
    Ok(out)
}

/// One member `G_i` of a sparsifier class: gain `g_i` on `block`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Sparsifier {
    n: usize,
    block: Range<usize>,
    gain: f64,
    diagonal: Vec<f64>,
}

impl Sparsifier {
    pub fn block(&self) -> Range<usize> {
        self.block.clone()
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(&self.diagonal))
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has length {}, sparsifier acts on {}",
                x.len(),
                self.n
            )));
        }
        Ok(Vector::from_iterator(
            self.n,
            self.diagonal.iter().zip(x.iter()).map(|(g, v)| g * v),
        ))
    }
}

/// The ordered class `{G_1, ..., G_ceil(n/S)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifierClass {
    n: usize,
    budget: usize,
    members: Vec<Sparsifier>,
}

impl SparsifierClass {
    /// Blocks are `[0, S)`, `[S, 2S)`, ... with a shorter final block when
    /// `S` does not divide `n`. Member `i` is the first block's indicator
    /// shifted right by `i * S`, scaled by `gains[i]`.
    pub fn new(n: usize, budget: usize, gains: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("state dimension must be positive".into()));
        }
        if budget == 0 || budget > n {
            return Err(Error::Range(format!("sparsity budget {budget} not in [1, {n}]")));
        }
        let count = n.div_ceil(budget);
        if gains.len() != count {
            return Err(Error::Arity {
                what: "sparsifier gains",
                expected: count,
                got: gains.len(),
            });
        }
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::Domain(format!("sparsifier gain must be positive, got {g}")));
        }

        let pattern: Vec<f64> = (0..n).map(|j| if j < budget { 1.0 } else { 0.0 }).collect();
        let members = gains
            .iter()
            .enumerate()
            .map(|(i, &gain)| {
                let start = i * budget;
                let shifted = rshift(&pattern, start)?;
                Ok(Sparsifier {
                    n,
                    block: start..(start + budget).min(n),
                    gain,
                    diagonal: shifted.into_iter().map(|v| v * gain).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, budget, members })
    }

    /// Class with every gain equal to one.
    pub fn with_unit_gains(n: usize, budget: usize) -> Result<Self> {
        if budget == 0 || budget > n {
            return Err(Error::Range(format!("sparsity budget {budget} not in [1, {n}]")));
        }
        Self::new(n, budget, &vec![1.0; n.div_ceil(budget)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[Sparsifier] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &Sparsifier {
        &self.members[i]
    }

    pub fn gains(&self) -> Vec<f64> {
        self.members.iter().map(|g| g.gain).collect()
    }

    pub fn blocks(&self) -> Vec<Range<usize>> {
        self.members.iter().map(Sparsifier::block).collect()
    }

    pub fn matrices(&self) -> Vec<Matrix> {
        self.members.iter().map(Sparsifier::matrix).collect()
    }

    /// `Σ = Σ_i α_i G_i`, diagonal with entry `α_i g_i` on block `i`.
    pub fn sigma(&self, alphas: &[f64]) -> Result<SigmaMatrix> {
        check_weights(alphas, self.count())?;
        let mut diagonal = Vector::zeros(self.n);
        for (member, alpha) in self.members.iter().zip(alphas) {
            for j in member.block() {
                diagonal[j] = alpha * member.gain;
            }
        }
        Ok(SigmaMatrix { diagonal })
    }
}

/// Validates a list of convex weights: right length, strictly positive,
/// summing to one.
pub fn check_weights(alphas: &[f64], count: usize) -> Result<()> {
    if alphas.len() != count {
        return Err(Error::Arity {
            what: "convex weights",
            expected: count,
            got: alphas.len(),
        });
    }
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Domain(format!("convex weight must be positive, got {a}")));
    }
    let sum: f64 = alphas.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSum(sum));
    }
    Ok(())
}

pub fn uniform_weights(count: usize) -> Vec<f64> {
    vec![1.0 / count as f64; count]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMatrix {
    diagonal: Vector,
}

impl SigmaMatrix {
    pub fn diagonal(&self) -> &Vector {
        &self.diagonal
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.diagonal)
    }

    pub fn inverse(&self) -> Matrix {
        Matrix::from_diagonal(&self.diagonal.map(|d| 1.0 / d))
    }
}
