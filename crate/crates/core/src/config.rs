//! Experiment configuration read from TOML files.
//!
//! Every section has defaults, so an empty file describes the 2D starfish
//! double-layer run at about 5k unknowns.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::OperatorSpec;
use crate::error::{Error, Result};
use crate::geometry::{Discretization, ParametricShape, Side};
use crate::kernels::Layer;
use crate::skeletonization::{ProxyCount, SkelParams};
use crate::solver::Levels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub operator: OperatorConfig,
    pub tolerances: Vec<f64>,
    pub proxy: ProxyConfig,
    pub solver: SolverConfig,
    pub seed: u64,
    /// Random densities per tolerance.
    pub samples: usize,
    pub output_dir: PathBuf,
    pub sweep: SweepConfig,
    pub scaling: ScalingConfig,
    pub bvp: BvpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub shape: ParametricShape,
    /// Panels along the curve, along `u` for the torus, per cube edge for
    /// the sphere.
    pub panels: usize,
    /// Panels along `v` (torus only).
    pub panels_v: usize,
    /// Gauss-Legendre nodes per panel (per direction in 3D).
    pub order: usize,
    /// QBX radius as a fraction of the panel size.
    pub qbx_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub layer: Layer,
    pub p_qbx: usize,
    pub plain_far: bool,
}

/// Proxy count: a number, or `"auto"` to pick it from the error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountSetting {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub alpha: f64,
    pub count: CountSetting,
    pub weighted: bool,
    /// Fitted model multipliers used by `count = "auto"`.
    pub big_c0: f64,
    pub big_c1: f64,
    /// Proxy count of the pilot run that measures the geometric constants.
    pub pilot_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub leaf_panels: usize,
    pub multilevel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    /// Proxy orders `p`; the count follows from the dimension's rule.
    pub orders: Vec<usize>,
    pub eps_id: f64,
    /// Tolerances for the constant fit and the proxy-count study.
    pub fit_tolerances: Vec<f64>,
    /// First proxy count of the doubling search.
    pub q_start: usize,
    pub q_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    /// Panel counts, one run each.
    pub panels: Vec<usize>,
    pub tolerance: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvpConfig {
    /// Point source outside the domain generating the boundary data.
    pub source: [f64; 3],
    /// Interior evaluation points.
    pub targets: Vec<[f64; 3]>,
    pub tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: GeometryConfig::default(),
            operator: OperatorConfig::default(),
            tolerances: vec![1e-4, 1e-8, 1e-12, 1e-15],
            proxy: ProxyConfig::default(),
            solver: SolverConfig::default(),
            seed: 1,
            samples: 3,
            output_dir: PathBuf::from("results"),
            sweep: SweepConfig::default(),
            scaling: ScalingConfig::default(),
            bvp: BvpConfig::default(),
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            shape: ParametricShape::Starfish { amplitude: 0.25, arms: 16 },
            panels: 1280,
            panels_v: 0,
            order: 4,
            qbx_scale: 0.5,
        }
    }
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig { layer: Layer::Double, p_qbx: 4, plain_far: false }
    }
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            alpha: 1.15,
            count: CountSetting::Fixed(400),
            weighted: true,
            big_c0: 1.0,
            big_c1: 1.0,
            pilot_count: 64,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { leaf_panels: 8, multilevel: true }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alphas: vec![1.15, 1.5, 2.0],
            orders: (1..=12).map(|k| 4 * k).collect(),
            eps_id: 1e-15,
            fit_tolerances: vec![1e-4, 1e-6, 1e-8, 1e-10, 1e-12],
            q_start: 8,
            q_max: 4096,
        }
    }
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { panels: vec![480, 760, 1280, 1920, 2560], tolerance: 1e-8, repeats: 1 }
    }
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig {
            source: [2.0, 1.5, 0.0],
            targets: vec![[0.0, 0.0, 0.0], [0.3, -0.2, 0.0], [-0.4, 0.1, 0.0], [0.1, 0.5, 0.0], [-0.2, -0.45, 0.0]],
            tolerance: 1e-12,
        }
    }
}

/// The proxy count once `"auto"` has been resolved by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxyChoice {
    Fixed(usize),
    Auto,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.geometry.shape.validate().map_err(|e| Error::Config(e.to_string()))?;
        let g = &self.geometry;
        if g.panels == 0 || g.order == 0 {
            return bad("geometry.panels and geometry.order must be positive".into());
        }
        if matches!(g.shape, ParametricShape::Torus { .. }) && g.panels_v == 0 {
            return bad("geometry.panels_v must be positive for a torus".into());
        }
        if !(g.qbx_scale > 0.0) {
            return bad(format!("geometry.qbx_scale must be positive, got {}", g.qbx_scale));
        }
        if self.operator.p_qbx > crate::kernels::MAX_DEGREE {
            return bad(format!("operator.p_qbx {} too large", self.operator.p_qbx));
        }
        if self.tolerances.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("tolerances must lie in (0, 1)".into());
        }
        if !(self.proxy.alpha > 1.0) {
            return bad(format!("proxy.alpha must exceed 1, got {}", self.proxy.alpha));
        }
        self.proxy_choice()?;
        if !(self.proxy.big_c0 > 0.0 && self.proxy.big_c1 > 0.0) || self.proxy.pilot_count == 0 {
            return bad("proxy.big_c0, proxy.big_c1 and proxy.pilot_count must be positive".into());
        }
        if self.solver.leaf_panels == 0 {
            return bad("solver.leaf_panels must be positive".into());
        }
        if self.sweep.alphas.iter().any(|a| !(*a > 1.0)) {
            return bad("sweep.alphas must exceed 1".into());
        }
        if !(self.sweep.eps_id > 0.0) || self.sweep.fit_tolerances.iter().any(|t| !(*t > 0.0)) {
            return bad("sweep tolerances must be positive".into());
        }
        if self.sweep.q_start == 0 || self.sweep.q_max < self.sweep.q_start {
            return bad("sweep needs 0 < q_start <= q_max".into());
        }
        if self.scaling.panels.iter().any(|&p| p == 0) || !(self.scaling.tolerance > 0.0) || self.scaling.repeats == 0 {
            return bad("scaling.panels, scaling.tolerance and scaling.repeats must be positive".into());
        }
        Ok(())
    }

    pub fn proxy_choice(&self) -> Result<ProxyChoice> {
        match &self.proxy.count {
            CountSetting::Fixed(0) => Err(Error::Config("proxy.count must be positive".into())),
            CountSetting::Fixed(q) => Ok(ProxyChoice::Fixed(*q)),
            CountSetting::Named(s) if s == "auto" => Ok(ProxyChoice::Auto),
            CountSetting::Named(s) => Err(Error::Config(format!("proxy.count must be a number or \"auto\", got {s:?}"))),
        }
    }

    pub fn operator_spec(&self) -> OperatorSpec {
        let dim = self.geometry.shape.dim();
        let spec = match self.operator.layer {
            Layer::Double => OperatorSpec::interior_double_layer(dim, self.operator.p_qbx),
            Layer::Single => OperatorSpec::single_layer(dim, self.operator.p_qbx),
        };
        OperatorSpec { plain_far: self.operator.plain_far, ..spec }
    }

    /// Discretization with QBX centers on the interior side.
    pub fn discretization(&self) -> Result<Discretization> {
        self.discretization_with_panels(self.geometry.panels)
    }

    pub fn discretization_with_panels(&self, panels: usize) -> Result<Discretization> {
        let g = &self.geometry;
        g.shape.discretize(panels, g.panels_v, g.order)?.attach_qbx_centers(Side::Interior, g.qbx_scale)
    }

    /// Skeletonization parameters for one tolerance with a fixed count.
    pub fn skel_params(&self, tol: f64, q: usize) -> SkelParams {
        SkelParams { proxy: ProxyCount::Fixed(q), weighted: self.proxy.weighted, ..SkelParams::new(self.proxy.alpha, q, tol) }
    }

    pub fn levels(&self) -> Levels {
        if self.solver.multilevel {
            Levels::Multi
        } else {
            Levels::Single
        }
    }

    /// `key = value` pairs for the CSV metadata header.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let g = &self.geometry;
        let shape = match g.shape {
            ParametricShape::Starfish { amplitude, arms } => format!("starfish(A={amplitude},n={arms})"),
            ParametricShape::Circle { radius } => format!("circle(r={radius})"),
            ParametricShape::Torus { major, minor } => format!("torus(a={major},b={minor})"),
            ParametricShape::Sphere { radius } => format!("sphere(r={radius})"),
        };
        let count = match &self.proxy.count {
            CountSetting::Fixed(q) => q.to_string(),
            CountSetting::Named(s) => s.clone(),
        };
        vec![
            ("geometry".into(), format!("{shape} panels={} panels_v={} order={} qbx_scale={}", g.panels, g.panels_v, g.order, g.qbx_scale)),
            ("operator".into(), format!("{:?} layer p_qbx={} plain_far={}", self.operator.layer, self.operator.p_qbx, self.operator.plain_far)),
            ("alpha".into(), self.proxy.alpha.to_string()),
            ("q".into(), count),
            ("weighted".into(), self.proxy.weighted.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("version".into(), env!("CARGO_PKG_VERSION").to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.proxy_choice().unwrap(), ProxyChoice::Fixed(400));
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.geometry.shape = ParametricShape::Torus { major: 10.0, minor: 2.0 };
        cfg.geometry.panels_v = 10;
        cfg.proxy.count = CountSetting::Named("auto".into());
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.proxy_choice().unwrap(), ProxyChoice::Auto);
    }

    #[test]
    fn parses_hand_written_file() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
seed = 9
tolerances = [1e-6]
[geometry]
shape = { kind = "torus", major = 10.0, minor = 2.0 }
panels = 30
panels_v = 8
order = 3
[operator]
layer = "single"
[proxy]
count = 192
weighted = false
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.operator_spec().kind.layer, Layer::Single);
        assert!(!cfg.skel_params(1e-6, 192).weighted);
        assert_eq!(cfg.metadata().len(), 7);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "tolerances = [0.0]",
            "[proxy]\nalpha = 1.0",
            "[proxy]\ncount = \"many\"",
            "[proxy]\ncount = 0",
            "[geometry]\nshape = { kind = \"torus\", major = 1.0, minor = 2.0 }\npanels_v = 4",
            "[solver]\nleaf_panels = 0",
            "unknown_key = 3",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }
}
