use std::path::{Path, PathBuf};

use eigendamage::{
    cantor_staircase, g_star, BVDisplacement, CellField, ConstitutiveParams, Domain, Jump, QuadratureSpec, SolveOptions,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureSpec {
    Affine {
        slope: f64,
        #[serde(default)]
        base: f64,
    },
    Step {
        position: f64,
        height: f64,
    },
    MultiStep {
        steps: Vec<Jump>,
    },
    Cantor {
        levels: u32,
        #[serde(default = "one")]
        scale: f64,
    },
    Mixed {
        #[serde(default)]
        slope: f64,
        #[serde(default)]
        steps: Vec<Jump>,
        #[serde(default)]
        cantor_levels: Option<u32>,
        #[serde(default = "one")]
        cantor_scale: f64,
        #[serde(default)]
        base: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GDensitySpec {
    Zero,
    GStar,
    Explicit { cells: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionSpec {
    #[serde(default)]
    pub ua: f64,
    pub deltas: Vec<f64>,
}

fn default_refine() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ConstitutiveParams,
    pub domain: Domain,
    pub fixture: FixtureSpec,
    #[serde(default = "zero_density")]
    pub g_density: GDensitySpec,
    pub eps_ladder: Vec<f64>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_refine")]
    pub flat_refine: usize,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_svg: bool,
    #[serde(default)]
    pub tension: Option<TensionSpec>,
}

fn zero_density() -> GDensitySpec {
    GDensitySpec::Zero
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("malformed config {}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Invariants that are part of the config schema rather than the mathematics.
    pub fn check(&self) -> Result<(), CliError> {
        if self.eps_ladder.is_empty() {
            return Err(CliError::Config("eps_ladder must not be empty".into()));
        }
        if self.eps_ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(CliError::Config("eps_ladder entries must be positive and finite".into()));
        }
        if self.eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("eps_ladder must be strictly decreasing".into()));
        }
        if self.flat_refine == 0 {
            return Err(CliError::Config("flat_refine must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fixture(&self) -> Result<BVDisplacement, CliError> {
        let d = self.domain;
        let u = match &self.fixture {
            FixtureSpec::Affine { slope, base } => BVDisplacement::affine(d, *base, *slope),
            FixtureSpec::Step { position, height } => {
                BVDisplacement::pure_jump(d, 0.0, vec![Jump { position: *position, amplitude: *height }])?
            }
            FixtureSpec::MultiStep { steps } => BVDisplacement::pure_jump(d, 0.0, steps.clone())?,
            FixtureSpec::Cantor { levels, scale } => scaled_cantor(*levels, *scale, d)?,
            FixtureSpec::Mixed { slope, steps, cantor_levels, cantor_scale, base } => {
                let cantor = match cantor_levels {
                    Some(l) => scaled_cantor(*l, *cantor_scale, d)?.cantor_mass().to_vec(),
                    None => vec![0.0; d.n()],
                };
                BVDisplacement::new(d, CellField::constant(d, *slope), steps.clone(), cantor, *base)?
            }
        };
        Ok(u)
    }

    pub fn g_density(&self, u: &BVDisplacement) -> Result<CellField, CliError> {
        Ok(match &self.g_density {
            GDensitySpec::Zero => CellField::zeros(self.domain),
            GDensitySpec::GStar => u.ac_slope().map(|s| g_star(s, &self.params))?,
            GDensitySpec::Explicit { cells } => CellField::new(self.domain, cells.clone())?,
        })
    }
}

fn scaled_cantor(levels: u32, scale: f64, d: Domain) -> Result<BVDisplacement, CliError> {
    let c = cantor_staircase(levels, d)?;
    let mass = c.cantor_mass().iter().map(|m| m * scale).collect();
    Ok(BVDisplacement::new(d, CellField::zeros(d), vec![], mass, 0.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(fixture: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{"params": {{"c0": 2, "k": 10}}, "domain": {{"a": 0, "b": 1, "n": 27}}, "fixture": {fixture}, "eps_ladder": [0.1]}}"#
        );
        serde_json::from_str(&text).unwrap()
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let c = cfg(r#"{"kind": "affine", "slope": 1}"#);
        assert_eq!(c.flat_refine, 1);
        assert_eq!(c.g_density, GDensitySpec::Zero);
        assert_eq!(c.quadrature, QuadratureSpec::default());
        assert_eq!(c.solve, SolveOptions::default());
        assert!(!c.emit_svg);
        assert!(c.tension.is_none());
    }

    #[test]
    fn config_round_trips() {
        let c =
            cfg(r#"{"kind": "mixed", "slope": 0.5, "steps": [{"position": 0.3, "amplitude": 1}], "cantor_levels": 1}"#);
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn fixtures_have_expected_variation() {
        let step = cfg(r#"{"kind": "step", "position": 0.5, "height": -3}"#).fixture().unwrap();
        assert_eq!(step.total_variation(), 3.0);
        let multi = cfg(r#"{"kind": "multi_step", "steps": [{"position": 0.2, "amplitude": 1}, {"position": 0.7, "amplitude": 2}]}"#)
            .fixture()
            .unwrap();
        assert_eq!(multi.jumps().len(), 2);
        let cantor = cfg(r#"{"kind": "cantor", "levels": 2, "scale": 3}"#).fixture().unwrap();
        assert!((cantor.total_cantor_variation() - 3.0).abs() < 1e-12);
        let mixed = cfg(r#"{"kind": "mixed", "slope": 1, "steps": [{"position": 0.5, "amplitude": 1}], "cantor_levels": 1, "cantor_scale": 0.5}"#)
            .fixture()
            .unwrap();
        assert!((mixed.total_variation() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn g_density_variants() {
        let c = cfg(r#"{"kind": "affine", "slope": 3}"#);
        let u = c.fixture().unwrap();
        let mut c2 = c.clone();
        c2.g_density = GDensitySpec::GStar;
        assert!(c2.g_density(&u).unwrap().cells().iter().all(|&v| v == 2.0));
        c2.g_density = GDensitySpec::Explicit { cells: vec![1.0; 3] };
        assert!(c2.g_density(&u).is_err());
    }

    #[test]
    fn ladder_checks() {
        let mut c = cfg(r#"{"kind": "affine", "slope": 0}"#);
        c.eps_ladder = vec![0.1, 0.1];
        assert!(c.check().is_err());
        c.eps_ladder = vec![0.1, -0.01];
        assert!(c.check().is_err());
        c.eps_ladder = vec![0.1, 0.01];
        assert!(c.check().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"params": {"c0": 2, "k": 10}, "domain": {"a": 0, "b": 1, "n": 4}, "fixture": {"kind": "affine", "slope": 0}, "eps_ladder": [0.1], "typo": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }
}
