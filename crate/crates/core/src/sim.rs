//! Fixed-step RK4 simulation of the switched loop
//! `x → G_i x → CSD → u = -K̃ x̂ → dx/dt = Ax + Bu`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csd::{csd_output, CsdMode, MeasurementModel};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::switching::{select_mode, SwitchingDesign, DEFAULT_HYSTERESIS};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 10.0;
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Allowed per-step relative increase of `V` before a trace is called non-monotone.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// What sits between the sparsifier and the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorMode {
    Ideal,
    Physical,
    /// Sparsified state fed straight to the controller.
    Bypass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub hysteresis: f64,
    pub csd_mode: SensorMode,
    pub seed: u64,
    /// Rows of the physical sensing matrix; defaults to `n`.
    pub measurements: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            x0: Vec::new(),
            hysteresis: DEFAULT_HYSTERESIS,
            csd_mode: SensorMode::Ideal,
            seed: 0,
            measurements: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::Domain(format!(
                "horizon {} must be at least dt {}",
                self.horizon, self.dt
            )));
        }
        if !(self.hysteresis.is_finite() && self.hysteresis >= 0.0) {
            return Err(Error::Domain(format!(
                "hysteresis must be nonnegative, got {}",
                self.hysteresis
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Zero-based mode active from each sample to the next.
    pub modes: Vec<usize>,
    pub lyapunov: Vec<f64>,
    pub switch_count: usize,
    /// Samples at which the sensed vector exceeded the sparsity budget.
    pub budget_violations: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.states.last()
    }

    pub fn final_norm(&self) -> f64 {
        self.final_state().map_or(0.0, |x| x.norm())
    }

    /// Writes `t,x1,...,xn,mode,V` rows; modes are printed one-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Numerical(format!("CSV write failed: {e}"));
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("mode".into());
        header.push("V".into());
        w.write_record(&header).map_err(io)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.states[k].iter().map(f64::to_string));
            row.push((self.modes[k] + 1).to_string());
            row.push(self.lyapunov[k].to_string());
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Numerical(format!("CSV write failed: {e}")))?;
        Ok(())
    }
}

struct Loop<'a> {
    design: &'a SwitchingDesign,
    mode: SensorMode,
    model: Option<MeasurementModel>,
    budget: usize,
}

impl Loop<'_> {
    /// Sensed, sparsified state `x̂` for mode `i`.
    fn sense(&self, x: &Vector, i: usize) -> Result<(Vector, bool)> {
        let sparse = self.design.class.get(i).apply(x)?;
        match self.mode {
            SensorMode::Bypass => Ok((sparse, false)),
            SensorMode::Ideal => {
                let r = csd_output(&sparse, self.budget, CsdMode::Ideal, None)?;
                Ok((r.estimate, r.violation))
            }
            SensorMode::Physical => {
                let r = csd_output(&sparse, self.budget, CsdMode::Physical, self.model.as_ref())?;
                Ok((r.estimate, r.violation))
            }
        }
    }

    fn rhs(&self, x: &Vector, i: usize) -> Result<(Vector, bool)> {
        let (est, violation) = self.sense(x, i)?;
        let u = -(&self.design.ktilde * est);
        Ok((self.design.system.a() * x + self.design.system.b() * u, violation))
    }

    fn rk4(&self, x: &Vector, i: usize, dt: f64) -> Result<(Vector, bool)> {
        let (k1, v) = self.rhs(x, i)?;
        let (k2, _) = self.rhs(&(x + &k1 * (dt / 2.0)), i)?;
        let (k3, _) = self.rhs(&(x + &k2 * (dt / 2.0)), i)?;
        let (k4, _) = self.rhs(&(x + &k3 * dt), i)?;
        Ok((x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), v))
    }
}

/// Integrates the switched loop from `config.x0`.
///
/// The mode is re-selected once per step and held for the whole step.
pub fn integrate(design: &SwitchingDesign, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = design.n();
    if config.x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, system has {n} states",
            config.x0.len()
        )));
    }
    let budget = design.class.budget();
    let model = match config.csd_mode {
        SensorMode::Physical => {
            let m = config.measurements.unwrap_or(n);
            Some(MeasurementModel::gaussian(m, n, budget, config.seed)?)
        }
        _ => None,
    };
    let lp = Loop {
        design,
        mode: config.csd_mode,
        model,
        budget,
    };

    let steps = config.steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        modes: Vec::with_capacity(steps + 1),
        lyapunov: Vec::with_capacity(steps + 1),
        ..Trajectory::default()
    };
    let mut x = Vector::from_column_slice(&config.x0);
    let mut current = None;
    for k in 0..=steps {
        let sel = select_mode(&x, design, current, config.hysteresis);
        if sel.switched {
            traj.switch_count += 1;
        }
        current = Some(sel.index);
        traj.times.push(k as f64 * config.dt);
        traj.lyapunov.push(design.lyapunov_value(&x));
        traj.modes.push(sel.index);
        traj.states.push(x.clone());
        if k == steps {
            break;
        }
        let (next, violation) = lp.rk4(&x, sel.index, config.dt)?;
        if violation {
            traj.budget_violations += 1;
        }
        let norm = next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                time: (k + 1) as f64 * config.dt,
                norm,
                partial: Box::new(traj),
            });
        }
        x = next;
    }
    Ok(traj)
}

/// Integrates a single unswitched mode `dx/dt = A_i x` with the same RK4
/// scheme; used as a reference and for negative controls.
pub fn integrate_mode(mode: &Matrix, p: &Matrix, x0: &[f64], dt: f64, horizon: f64) -> Trajectory {
    let steps = (horizon / dt).round() as usize;
    let mut traj = Trajectory::default();
    let mut x = Vector::from_column_slice(x0);
    let f = |v: &Vector| mode * v;
    for k in 0..=steps {
        traj.times.push(k as f64 * dt);
        traj.lyapunov.push(x.dot(&(p * &x)));
        traj.modes.push(0);
        traj.states.push(x.clone());
        if k == steps {
            break;
        }
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    traj
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace {
    pub values: Vec<f64>,
    pub monotone: bool,
    /// Largest forward difference `V(t_{k+1}) - V(t_k)`.
    pub max_uptick: f64,
}

/// Recomputes `V = xᵀPx` along a trajectory; monotone iff no step rises by
/// more than `MONOTONE_SLACK · V(t_k)`.
pub fn lyapunov_trace(traj: &Trajectory, p: &Matrix) -> LyapunovTrace {
    let values: Vec<f64> = traj.states.iter().map(|x| x.dot(&(p * x))).collect();
    let mut monotone = true;
    let mut max_uptick = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let diff = w[1] - w[0];
        max_uptick = max_uptick.max(diff);
        if diff > MONOTONE_SLACK * w[0] {
            monotone = false;
        }
    }
    if values.len() < 2 {
        max_uptick = 0.0;
    }
    LyapunovTrace {
        values,
        monotone,
        max_uptick,
    }
}

/// `count` points evenly spaced on a circle in the first two coordinates.
pub fn circle_points(count: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vec![radius * th.cos(), radius * th.sin()]
        })
        .collect()
}

/// One trajectory per initial condition, computed in parallel and
/// returned in input order.
pub fn phase_portrait(design: &SwitchingDesign, initial: &[Vec<f64>], config: &SimConfig) -> Result<Vec<Trajectory>> {
    if initial.is_empty() {
        return Err(Error::Domain("phase portrait needs at least one initial state".into()));
    }
    initial
        .par_iter()
        .map(|x0| {
            let cfg = SimConfig {
                x0: x0.clone(),
                ..config.clone()
            };
            integrate(design, &cfg)
        })
        .collect()
}
