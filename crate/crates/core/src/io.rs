//! JSON schemas for experiment configs and synthesized designs.
//!
//! Matrices are row-major nested arrays: `[[a11, a12], [a21, a22]]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, LinearSystem, Matrix};
use crate::sim::SimConfig;
use crate::sparsify::SparsifierClass;
use crate::switching::{quadratic_terms, GainSpec, QuadTerm, SwitchingDesign, SynthesisOptions};

pub type Rows = Vec<Vec<f64>>;

pub fn matrix_from_rows(rows: &Rows, name: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Dimension(format!("{name} is empty")));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(Error::Dimension(format!(
            "{name} row {} has {} entries, expected {c}",
            i + 1,
            row.len()
        )));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

pub fn matrix_to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
}

impl SystemSpec {
    pub fn build(&self) -> Result<LinearSystem> {
        LinearSystem::new(matrix_from_rows(&self.a, "A")?, matrix_from_rows(&self.b, "B")?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub sparsity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    /// Stabilizing gain `K`; synthesized when both gain fields are absent.
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    /// Modified gain `K̃`, mutually exclusive with `K`.
    #[serde(default, rename = "Ktilde", skip_serializing_if = "Option::is_none")]
    pub ktilde: Option<Rows>,
    #[serde(default)]
    pub sim: SimConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks shapes and ranges without running the synthesis.
    pub fn validate(&self) -> Result<LinearSystem> {
        let sys = self.system.build()?;
        let n = sys.n();
        if self.sparsity == 0 || self.sparsity > n {
            return Err(Error::Range(format!("sparsity {} not in [1, {n}]", self.sparsity)));
        }
        if self.k.is_some() && self.ktilde.is_some() {
            return Err(Error::Domain("give at most one of K and Ktilde".into()));
        }
        if !self.sim.x0.is_empty() && self.sim.x0.len() != n {
            return Err(Error::Dimension(format!(
                "sim.x0 has length {}, system has {n} states",
                self.sim.x0.len()
            )));
        }
        self.sim.validate()?;
        Ok(sys)
    }

    pub fn synthesis_options(&self) -> Result<SynthesisOptions> {
        let gain = match (&self.k, &self.ktilde) {
            (Some(k), None) => GainSpec::Feedback(matrix_from_rows(k, "K")?),
            (None, Some(kt)) => GainSpec::Modified(matrix_from_rows(kt, "Ktilde")?),
            (None, None) => GainSpec::Synthesize,
            (Some(_), Some(_)) => return Err(Error::Domain("give at most one of K and Ktilde".into())),
        };
        Ok(SynthesisOptions {
            gain,
            gains: self.gains.clone(),
            alphas: self.alphas.clone(),
            q: self.q.as_ref().map(|q| matrix_from_rows(q, "Q")).transpose()?,
        })
    }

    pub fn synthesize(&self) -> Result<SwitchingDesign> {
        let sys = self.validate()?;
        SwitchingDesign::synthesize(&sys, self.sparsity, &self.synthesis_options()?)
    }
}

/// Serialized design. The `abar_eigenvalues` and `region_terms` fields are
/// informational and ignored when loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub system: SystemSpec,
    pub sparsity: usize,
    pub gains: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "Ktilde")]
    pub ktilde: Rows,
    #[serde(rename = "Abar")]
    pub abar: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    pub modes: Vec<Rows>,
    pub regions: Vec<Rows>,
    #[serde(default, skip_deserializing)]
    pub abar_eigenvalues: Vec<[f64; 2]>,
    #[serde(default, skip_deserializing)]
    pub region_terms: Vec<Vec<QuadTerm>>,
}

impl DesignFile {
    pub fn from_design(d: &SwitchingDesign) -> Result<Self> {
        Ok(Self {
            system: SystemSpec {
                a: matrix_to_rows(d.system.a()),
                b: matrix_to_rows(d.system.b()),
            },
            sparsity: d.class.budget(),
            gains: d.class.gains(),
            alphas: d.alphas.clone(),
            k: matrix_to_rows(&d.k),
            ktilde: matrix_to_rows(&d.ktilde),
            abar: matrix_to_rows(&d.abar),
            p: matrix_to_rows(&d.p),
            q: matrix_to_rows(&d.q),
            modes: d.modes.iter().map(matrix_to_rows).collect(),
            regions: d.regions.iter().map(matrix_to_rows).collect(),
            abar_eigenvalues: eigenvalues(&d.abar)?.iter().map(|z| [z.re, z.im]).collect(),
            region_terms: d.regions.iter().map(quadratic_terms).collect(),
        })
    }

    /// Rebuilds the design and re-checks all of its invariants.
    pub fn into_design(self) -> Result<SwitchingDesign> {
        let system = self.system.build()?;
        let class = SparsifierClass::new(system.n(), self.sparsity, &self.gains)?;
        let rows = |v: &Vec<Rows>, name: &str| -> Result<Vec<Matrix>> {
            v.iter().map(|r| matrix_from_rows(r, name)).collect()
        };
        let design = SwitchingDesign {
            class,
            alphas: self.alphas,
            k: matrix_from_rows(&self.k, "K")?,
            ktilde: matrix_from_rows(&self.ktilde, "Ktilde")?,
            abar: matrix_from_rows(&self.abar, "Abar")?,
            p: matrix_from_rows(&self.p, "P")?,
            q: matrix_from_rows(&self.q, "Q")?,
            modes: rows(&self.modes, "mode")?,
            regions: rows(&self.regions, "region")?,
            system,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    pub fn load(path: &Path) -> Result<SwitchingDesign> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Domain(format!("cannot read {}: {e}", path.display())))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| Error::Domain(format!("design: {e}")))?;
        file.into_design()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECOUPLED: &str = r#"{
        "system": {"A": [[1, 0], [0, 2]], "B": [[1, 0], [0, 1]]},
        "sparsity": 1,
        "gains": [8, 8],
        "alphas": [0.5, 0.5],
        "K": [[4, 0], [0, 4]],
        "sim": {"x0": [2, 1]}
    }"#;

    #[test]
    fn parses_and_synthesizes() {
        let cfg = ExperimentConfig::from_json(DECOUPLED).unwrap();
        assert_eq!(cfg.sim.dt, 1e-3);
        let d = cfg.synthesize().unwrap();
        assert!((d.p[(0, 0)] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn design_round_trip_is_exact() {
        let d = ExperimentConfig::from_json(DECOUPLED).unwrap().synthesize().unwrap();
        let json = DesignFile::from_design(&d).unwrap().to_json();
        let back: DesignFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_design().unwrap(), d);
    }

    #[test]
    fn tampered_design_is_rejected() {
        let d = ExperimentConfig::from_json(DECOUPLED).unwrap().synthesize().unwrap();
        let mut file = DesignFile::from_design(&d).unwrap();
        file.p[0][0] += 1e-3;
        assert!(file.into_design().is_err());
    }

    #[test]
    fn config_errors_carry_positions() {
        let err = ExperimentConfig::from_json("{\n \"system\": {\"A\": [[1]], \"B\": [[1]]}\n}").unwrap_err();
        assert!(err.to_string().contains("sparsity"), "{err}");
        assert!(err.to_string().contains("line"), "{err}");

        let ragged = r#"{"system": {"A": [[1, 0], [0]], "B": [[1], [1]]}, "sparsity": 1}"#;
        assert!(ExperimentConfig::from_json(ragged).unwrap().validate().is_err());

        let both = r#"{"system": {"A": [[1]], "B": [[1]]}, "sparsity": 1, "K": [[2]], "Ktilde": [[2]]}"#;
        assert!(ExperimentConfig::from_json(both).unwrap().validate().is_err());

        let typo = r#"{"system": {"A": [[1]], "B": [[1]]}, "sparsity": 1, "gain": [1]}"#;
        assert!(ExperimentConfig::from_json(typo).is_err());
    }
}
