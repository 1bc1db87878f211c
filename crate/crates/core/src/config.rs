//! Run configuration: one flat TOML file with [medium], [solver], and [run]
//! sections. Command-line flags override file values; the resolved config is
//! hashed into the run manifest so outputs stay reproducible.

use serde::{Deserialize, Serialize};

use crate::cylinder::CylinderGrid;
use crate::error::Error;
use crate::media::Medium;
use crate::wave::WaveOpts;
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    /// "homogeneous" or "laminar7".
    pub kind: String,
    /// Coefficient of the homogeneous medium.
    pub c: f64,
    /// Soft-slot coefficient value of the laminar medium.
    pub delta: f64,
    /// Ramp half-width of the laminar medium.
    pub kappa: f64,
    /// Ambient dimension.
    pub d: usize,
    /// Samples per period for tabulated coefficients.
    pub n_samples: usize,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            kind: "homogeneous".into(),
            c: 1.0,
            delta: 0.25,
            kappa: 0.1,
            d: 2,
            n_samples: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Cylinder truncation half-length.
    pub l: f64,
    /// Axial node count.
    pub ns: usize,
    /// Nodes per periodic coordinate.
    pub nx: usize,
    /// Axial regularization weight (0 = unregularized).
    pub delta_reg: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 400_000,
            l: 10.0,
            ns: 1001,
            nx: 64,
            delta_reg: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Direction as cartesian components (normalized on use).
    pub e: Option<Vec<f64>>,
    /// Direction as an angle in degrees (alternative to `e`).
    pub theta: Option<f64>,
    /// Angle list (degrees) for sweeps and branch scans.
    pub thetas: Vec<f64>,
    /// Finite-difference step for the Hessian cross-check.
    pub h: f64,
    /// Number of ζ samples in the generated-family trace (0 = skip).
    pub zeta_n: usize,
    /// Integer direction for the cell-identity check.
    pub p: [i64; 2],
    /// ζ samples per period in the cell-identity average.
    pub n_zeta: usize,
    /// Interface widths for the sharp-interface comparison.
    pub eps_list: Vec<f64>,
    /// Final time of the sharp-interface comparison.
    pub t_final: f64,
    /// Initial front amplitude (𝒰 = amplitude · sin(2πx)).
    pub amplitude: f64,
    /// Output directory.
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            e: None,
            theta: None,
            thetas: vec![30.0, 45.0, 60.0, 75.0, 90.0, 105.0, 120.0, 135.0, 150.0],
            h: 0.01,
            zeta_n: 0,
            p: [1, 0],
            n_zeta: 64,
            eps_list: vec![0.1, 0.05, 0.025],
            t_final: 0.05,
            amplitude: 0.1,
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub medium: MediumConfig,
    pub solver: SolverConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.medium;
        match m.kind.as_str() {
            "homogeneous" => {
                if m.c <= 0.0 {
                    return Err(Error::Config("medium.c must be positive".into()));
                }
            }
            "laminar7" => {
                if !(m.delta > 0.0 && m.delta <= 0.25) {
                    return Err(Error::Config("medium.delta must lie in (0, 1/4]".into()));
                }
                if !(m.kappa > 0.0 && m.kappa < 0.25) {
                    return Err(Error::Config("medium.kappa must lie in (0, 1/4)".into()));
                }
            }
            other => {
                return Err(Error::Config(format!("unknown medium kind '{other}'")));
            }
        }
        if m.d < 2 {
            return Err(Error::Config("medium.d must be at least 2".into()));
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.l <= 0.0 || s.ns < 3 || s.nx < 4 {
            return Err(Error::Config(
                "solver requires tol > 0, l > 0, ns >= 3, nx >= 4".into(),
            ));
        }
        if s.delta_reg < 0.0 {
            return Err(Error::Config("solver.delta_reg must be >= 0".into()));
        }
        Ok(())
    }

    pub fn build_medium(&self) -> Result<Medium> {
        match self.medium.kind.as_str() {
            "homogeneous" => Ok(Medium::homogeneous(self.medium.c, self.medium.d)),
            "laminar7" => Medium::laminar7(self.medium.delta, self.medium.kappa, self.medium.n_samples),
            other => Err(Error::Config(format!("unknown medium kind '{other}'"))),
        }
    }

    pub fn build_grid(&self) -> Result<CylinderGrid> {
        let k = 1; // both supported media are laminar in one coordinate
        CylinderGrid::new(self.solver.l, self.solver.ns, vec![self.solver.nx; k])
    }

    pub fn wave_opts(&self) -> WaveOpts {
        WaveOpts {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            ..WaveOpts::default()
        }
    }

    /// Stable FNV-1a hash of the resolved configuration (hex).
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_buildable() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.build_medium().unwrap();
        cfg.build_grid().unwrap();
        assert_eq!(cfg.wave_opts().tol, 1e-8);
    }

    #[test]
    fn parses_sectioned_file_and_flags_ranges() {
        let cfg = RunConfig::from_toml(
            "[medium]\nkind = \"laminar7\"\ndelta = 0.01\nkappa = 0.1\n\n[solver]\ntol = 1e-6\n\n[run]\ntheta = 45.0\nout = \"results\"\n",
        )
        .unwrap();
        assert_eq!(cfg.medium.kind, "laminar7");
        assert_eq!(cfg.solver.tol, 1e-6);
        assert_eq!(cfg.run.theta, Some(45.0));
        assert_eq!(cfg.run.out, "results");

        assert!(RunConfig::from_toml("[medium]\nkind = \"laminar7\"\ndelta = 0.7\n").is_err());
        assert!(RunConfig::from_toml("[medium]\nbogus_key = 1\n").is_err());
        assert!(RunConfig::from_toml("not toml [").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.solver.tol = 1e-6;
        assert_ne!(a.hash(), b.hash());
    }
}
