#![allow(dead_code)]

use std::path::PathBuf;

use csdswitch::csd::trial_rng;
use csdswitch::io::ExperimentConfig;
use csdswitch::linalg::{eigenvalues, LinearSystem, Matrix};
use csdswitch::switching::{GainSpec, SwitchingDesign, SynthesisOptions};
use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, data)
}

pub fn example_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

pub const EXPERIMENTS: [&str; 3] = ["decoupled.json", "decoupled_single_input.json", "coupled.json"];

pub fn experiment(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&example_path(name)).unwrap()
}

pub fn decoupled_design() -> SwitchingDesign {
    let sys = LinearSystem::new(m(2, 2, &[1.0, 0.0, 0.0, 2.0]), Matrix::identity(2, 2)).unwrap();
    let opts = SynthesisOptions {
        gain: GainSpec::Feedback(Matrix::identity(2, 2) * 4.0),
        gains: Some(vec![8.0, 8.0]),
        alphas: Some(vec![0.5, 0.5]),
        q: Some(Matrix::identity(2, 2)),
    };
    SwitchingDesign::synthesize(&sys, 1, &opts).unwrap()
}

/// Coupled plant with the modified gain `K̃ = [1, 1]` (per-mode gain `K̃ g = [8, 8]`).
pub fn coupled_design() -> SwitchingDesign {
    let sys = LinearSystem::new(m(2, 2, &[1.0, 1.0, 0.0, 1.0]), m(2, 1, &[0.0, 1.0])).unwrap();
    let opts = SynthesisOptions {
        gain: GainSpec::Modified(m(1, 2, &[1.0, 1.0])),
        gains: Some(vec![8.0, 8.0]),
        alphas: Some(vec![0.5, 0.5]),
        q: Some(Matrix::identity(2, 2)),
    };
    SwitchingDesign::synthesize(&sys, 1, &opts).unwrap()
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Smallest singular value of `[A - λI, B]` over eigenvalues with `Re λ >= 0`
/// (infinite for a Hurwitz `A`).
pub fn stabilizability_margin(sys: &LinearSystem) -> f64 {
    let (n, inputs) = (sys.n(), sys.m());
    eigenvalues(sys.a())
        .unwrap()
        .iter()
        .filter(|l| l.re >= 0.0)
        .map(|l| {
            let pencil = DMatrix::<Complex<f64>>::from_fn(n, n + inputs, |i, j| {
                if j < n {
                    let shift = if i == j { *l } else { Complex::new(0.0, 0.0) };
                    Complex::new(sys.a()[(i, j)], 0.0) - shift
                } else {
                    Complex::new(sys.b()[(i, j - n)], 0.0)
                }
            });
            pencil.singular_values().min()
        })
        .fold(f64::INFINITY, f64::min)
}

pub const MIN_STABILIZABILITY_MARGIN: f64 = 0.05;

/// Seeded Gaussian plant with `n ∈ 2..=6`, `m ∈ 1..=n`, sparsity `S ∈ 1..=n`.
pub fn gaussian_plant(seed: u64, index: u64) -> (LinearSystem, usize) {
    let mut rng = trial_rng(seed, index);
    let n = rng.random_range(2..=6);
    let inputs = rng.random_range(1..=n);
    let s = rng.random_range(1..=n);
    let a = gaussian_matrix(n, n, &mut rng);
    let b = gaussian_matrix(n, inputs, &mut rng);
    (LinearSystem::new(a, b).unwrap(), s)
}

/// Like [`gaussian_plant`] but redraws until the unstable modes are
/// controllable with margin [`MIN_STABILIZABILITY_MARGIN`].
pub fn random_plant(seed: u64, index: u64) -> (LinearSystem, usize) {
    (0..)
        .map(|attempt| gaussian_plant(seed, (index << 16) + attempt))
        .find(|(sys, _)| stabilizability_margin(sys) >= MIN_STABILIZABILITY_MARGIN)
        .unwrap()
}

pub fn assert_close(a: &Matrix, b: &Matrix, tol: f64) -> Result<(), String> {
    if a.shape() != b.shape() {
        return Err(format!("shape {:?} vs {:?}", a.shape(), b.shape()));
    }
    let err = (a - b).abs().max();
    if err <= tol {
        Ok(())
    } else {
        Err(format!("max deviation {err:e} > {tol:e}:\n{a}\nvs\n{b}"))
    }
}
