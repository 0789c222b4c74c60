//! TOML experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ghostpol::countsim::CountModel;
use ghostpol::ghost::{default_grid, validate_grid, Family, ResponseMode, Sample, SweepSpec};
use ghostpol::optproj::{ElementOrder, FreeVar, OptimizationConfig, ProjectorParam, SearchMode};
use ghostpol::polcalc::{MuellerMatrix, PolElement};
use ghostpol::qstate::{bell_psi_plus, maximally_mixed, werner_mix, TwoQubitDensity};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub response: ResponseKind,
    pub state: StateConfig,
    #[serde(default = "default_families")]
    pub families: Vec<FamilyConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    /// Probe transformation in the signal arm; absent means none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<OpticConfig>,
    #[serde(default)]
    pub projectors: Vec<OpticConfig>,
    #[serde(default)]
    pub counts: CountModel,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub tomography: TomographyConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_runs() -> usize {
    8
}

fn default_families() -> Vec<FamilyConfig> {
    vec![
        FamilyConfig::named(FamilyKind::Lp),
        FamilyConfig::named(FamilyKind::Qwp),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    #[default]
    Joint,
    Heralded,
}

impl From<ResponseKind> for ResponseMode {
    fn from(k: ResponseKind) -> Self {
        match k {
            ResponseKind::Joint => ResponseMode::Joint,
            ResponseKind::Heralded => ResponseMode::Heralded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    BellPsiPlus,
    MaximallyMixed,
    Werner {
        p: f64,
    },
    /// Explicit 4×4 matrix in the (HH, HV, VH, VV) basis.
    Matrix {
        re: [[f64; 4]; 4],
        #[serde(default)]
        im: [[f64; 4]; 4],
        /// Rescale to unit trace instead of rejecting.
        #[serde(default)]
        normalize: bool,
    },
}

impl StateConfig {
    pub fn build(&self) -> Result<TwoQubitDensity, CliError> {
        let state = match self {
            StateConfig::BellPsiPlus => Ok(bell_psi_plus()),
            StateConfig::MaximallyMixed => Ok(maximally_mixed()),
            StateConfig::Werner { p } => werner_mix(*p),
            StateConfig::Matrix { re, im, normalize } => {
                TwoQubitDensity::from_re_im(*re, *im, *normalize)
            }
        };
        state.map_err(|e| CliError::Config(format!("state: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Lp,
    Qwp,
    /// Rotating a single configured element.
    Element,
    /// Rotating an arbitrary Mueller matrix.
    Mueller,
    /// No object in the signal arm (every angle identical).
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<PolElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mueller: Option<[[f64; 4]; 4]>,
}

impl FamilyConfig {
    pub fn named(kind: FamilyKind) -> Self {
        Self {
            kind,
            label: None,
            element: None,
            mueller: None,
        }
    }

    pub fn build(&self, index: usize) -> Result<Family, CliError> {
        let err = |m: &str| CliError::Config(format!("families[{index}]: {m}"));
        let label = || {
            self.label
                .clone()
                .unwrap_or_else(|| format!("family{index}"))
        };
        let family = match self.kind {
            FamilyKind::Lp | FamilyKind::Qwp
                if self.element.is_some() || self.mueller.is_some() =>
            {
                return Err(err(
                    "`element`/`mueller` only apply to kinds `element`/`mueller`",
                ));
            }
            FamilyKind::Lp => Family::Lp,
            FamilyKind::Qwp => Family::Qwp,
            FamilyKind::Element => Family::Custom {
                label: label(),
                sample: Sample::Element(
                    self.element
                        .ok_or_else(|| err("kind `element` needs `element`"))?,
                ),
            },
            FamilyKind::Mueller => {
                let rows = self
                    .mueller
                    .ok_or_else(|| err("kind `mueller` needs `mueller`"))?;
                let m = MuellerMatrix::from_rows(rows);
                if !m.is_well_formed() {
                    return Err(err("`mueller` is not a well-formed Mueller matrix"));
                }
                Family::Custom {
                    label: label(),
                    sample: Sample::Mueller(m),
                }
            }
            FamilyKind::Empty => Family::Custom {
                label: label(),
                sample: Sample::Empty,
            },
        };
        // explicit labels also rename the built-in families
        Ok(match (family, &self.label) {
            (Family::Lp, Some(l)) => Family::Custom {
                label: l.clone(),
                sample: Sample::Element(PolElement::polarizer(0.0)),
            },
            (Family::Qwp, Some(l)) => Family::Custom {
                label: l.clone(),
                sample: Sample::Element(PolElement::qwp(0.0)),
            },
            (f, _) => f,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Even spacing over [0, 180).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_deg: Option<f64>,
    /// Explicit angles; overrides `step_deg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            step_deg: Some(1.0),
            angles: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Vec<f64>, CliError> {
        let grid = match (&self.angles, self.step_deg) {
            (Some(a), _) => a.clone(),
            (None, Some(s)) if s > 0.0 && s <= 180.0 => default_grid(s),
            (None, Some(s)) => {
                return Err(CliError::Config(format!(
                    "grid.step_deg = {s} must be in (0, 180]"
                )))
            }
            (None, None) => default_grid(1.0),
        };
        validate_grid(&grid).map_err(|e| CliError::Config(format!("grid: {e}")))?;
        Ok(grid)
    }
}

/// An optical stack given either as explicit elements or as a QWP + polarizer
/// setting (the form emitted by `optimize`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<PolElement>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qwp_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extinction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<ElementOrder>,
}

impl OpticConfig {
    pub fn from_param(p: &ProjectorParam) -> Self {
        Self {
            elements: None,
            qwp_angle: Some(p.qwp_angle),
            lp_angle: Some(p.lp_angle),
            extinction: p.extinction,
            order: Some(p.order),
        }
    }

    /// The QWP + polarizer form, if this stack is given that way.
    pub fn param(&self, what: &str) -> Result<ProjectorParam, CliError> {
        let err = |m: String| CliError::Config(format!("{what}: {m}"));
        if self.elements.is_some() {
            return Err(err(
                "expected `qwp_angle`/`lp_angle`, found `elements`".into()
            ));
        }
        let (Some(q), Some(l)) = (self.qwp_angle, self.lp_angle) else {
            return Err(err(
                "needs both `qwp_angle` and `lp_angle` (or `elements`)".into()
            ));
        };
        let p = ProjectorParam::new(q, l)
            .with_extinction(self.extinction)
            .with_order(self.order.unwrap_or_default());
        p.validate().map_err(|e| err(e.to_string()))?;
        Ok(p)
    }

    pub fn elements(&self, what: &str) -> Result<Vec<PolElement>, CliError> {
        match &self.elements {
            Some(e) => {
                if self.qwp_angle.is_some()
                    || self.lp_angle.is_some()
                    || self.extinction.is_some()
                    || self.order.is_some()
                {
                    return Err(CliError::Config(format!(
                        "{what}: give either `elements` or the QWP/polarizer setting, not both"
                    )));
                }
                Ok(e.clone())
            }
            None => self
                .param(what)?
                .elements()
                .map_err(|e| CliError::Config(format!("{what}: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Simulate counts over `n_runs` instead of emitting exact probabilities.
    #[serde(default)]
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    /// Measured 16-row CSV (`basis_a,basis_b,counts`); relative paths are
    /// resolved against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    /// Use exact probabilities × pairs instead of Poisson counts.
    #[serde(default)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_evals")]
    pub max_evaluations: usize,
    #[serde(default)]
    pub search: SearchMode,
    #[serde(default)]
    pub optimize_extinction: bool,
    #[serde(default = "default_ext_max")]
    pub extinction_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free: Option<Vec<FreeVar>>,
}

fn default_restarts() -> usize {
    16
}

fn default_evals() -> usize {
    4000
}

fn default_ext_max() -> f64 {
    100.0
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            restarts: default_restarts(),
            max_evaluations: default_evals(),
            search: SearchMode::Joint,
            optimize_extinction: false,
            extinction_max: default_ext_max(),
            free: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

/// Probe and idler settings as emitted by `optimize`; pasting these tables
/// into an experiment config replaces its `probe` and `projectors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsFragment {
    pub probe: OpticConfig,
    pub projectors: Vec<OpticConfig>,
}

impl SettingsFragment {
    pub fn new(probe: &ProjectorParam, projectors: &[ProjectorParam]) -> Self {
        Self {
            probe: OpticConfig::from_param(probe),
            projectors: projectors.iter().map(OpticConfig::from_param).collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fragment is always representable")
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(rec) = &cfg.tomography.records {
            if rec.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.tomography.records = Some(base.join(rec));
            }
        }
        Ok(cfg)
    }

    /// Replace probe and projectors with an emitted fragment.
    pub fn apply_fragment(&mut self, f: &SettingsFragment) {
        self.probe = Some(f.probe.clone());
        self.projectors = f.projectors.clone();
    }

    /// Checks everything that can be checked without running a command.
    pub fn validate(&self) -> Result<(), CliError> {
        self.state.build()?;
        self.grid.build()?;
        self.families()?;
        if let Some(p) = &self.probe {
            p.elements("probe")?;
        }
        for (i, p) in self.projectors.iter().enumerate() {
            p.elements(&format!("projectors[{i}]"))?;
        }
        self.counts
            .validate()
            .map_err(|e| CliError::Config(format!("counts: {e}")))?;
        if self.optimize.restarts < 1 {
            return Err(CliError::Config("optimize.restarts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn families(&self) -> Result<Vec<Family>, CliError> {
        if self.families.is_empty() {
            return Err(CliError::Config(
                "families: at least one family is required".into(),
            ));
        }
        self.families
            .iter()
            .enumerate()
            .map(|(i, f)| f.build(i))
            .collect()
    }

    pub fn probe_elements(&self) -> Result<Vec<PolElement>, CliError> {
        self.probe
            .as_ref()
            .map_or(Ok(Vec::new()), |p| p.elements("probe"))
    }

    pub fn sweep_specs(&self) -> Result<Vec<SweepSpec>, CliError> {
        if self.projectors.is_empty() {
            return Err(CliError::Config(
                "projectors: at least one idler projector is required".into(),
            ));
        }
        let grid = self.grid.build()?;
        let probe = self.probe_elements()?;
        let projectors = self
            .projectors
            .iter()
            .enumerate()
            .map(|(i, p)| p.elements(&format!("projectors[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self
            .families()?
            .into_iter()
            .map(|family| SweepSpec {
                family,
                grid: grid.clone(),
                probe: probe.clone(),
                projectors: projectors.clone(),
                mode: self.response.into(),
            })
            .collect())
    }

    pub fn optimization(&self) -> Result<OptimizationConfig, CliError> {
        let probe = self
            .probe
            .as_ref()
            .ok_or_else(|| {
                CliError::Config("optimize needs a `probe` QWP/polarizer setting".into())
            })?
            .param("probe")?;
        let projectors = self
            .projectors
            .iter()
            .enumerate()
            .map(|(i, p)| p.param(&format!("projectors[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cfg = OptimizationConfig::new(
            self.state.build()?,
            self.families()?,
            self.grid.build()?,
            probe,
            projectors,
        );
        cfg.mode = self.response.into();
        cfg.free = self.optimize.free.clone();
        cfg.search = self.optimize.search;
        cfg.optimize_extinction = self.optimize.optimize_extinction;
        cfg.extinction_max = self.optimize.extinction_max;
        cfg.restarts = self.optimize.restarts;
        cfg.max_evaluations = self.optimize.max_evaluations;
        cfg.seed = self.seed;
        cfg.validate()
            .map_err(|e| CliError::Config(format!("optimize: {e}")))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[state]
kind = "werner"
p = 0.92

[[projectors]]
qwp_angle = 170.0
lp_angle = 7.5

[[projectors]]
elements = [{ kind = "qwp", angle_deg = 18.0 }, { kind = "ideal_polarizer", angle_deg = 110.0 }]
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.n_runs, 8);
        assert_eq!(cfg.counts, CountModel::default());
        assert_eq!(cfg.families().unwrap(), vec![Family::Lp, Family::Qwp]);
        assert_eq!(cfg.grid.build().unwrap().len(), 180);
        let specs = cfg.sweep_specs().unwrap();
        assert_eq!(
            specs[0].projectors[0],
            ProjectorParam::new(170.0, 7.5).elements().unwrap()
        );
        assert_eq!(
            specs[0].projectors[1],
            vec![PolElement::qwp(18.0), PolElement::polarizer(110.0)]
        );
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let text = MINIMAL.replace("p = 0.92", "p = 0.92\nq = 1");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains('q') && err.contains("line"), "{err}");
        let text = format!("{MINIMAL}\n[counts]\npair_rat = 3.0\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad_p = MINIMAL.replace("0.92", "1.5");
        assert!(matches!(
            ExperimentConfig::parse(&bad_p),
            Err(CliError::Config(_))
        ));
        let bad_grid = format!("{MINIMAL}\n[grid]\nangles = [10.0, 5.0]\n");
        assert!(ExperimentConfig::parse(&bad_grid).is_err());
        let both = MINIMAL.replace("qwp_angle = 170.0", "qwp_angle = 170.0\nelements = []");
        assert!(ExperimentConfig::parse(&both).is_err());
        let bad_ext = MINIMAL.replace("lp_angle = 7.5", "lp_angle = 7.5\nextinction = 0.5");
        assert!(ExperimentConfig::parse(&bad_ext).is_err());
    }

    #[test]
    fn fragment_round_trip() {
        let probe = ProjectorParam::new(61.83, 90.0)
            .with_order(ElementOrder::LpThenQwp)
            .with_extinction(Some(3.7));
        let projs = vec![
            ProjectorParam::new(170.0, 7.5),
            ProjectorParam::new(18.123456789, 110.0),
        ];
        let frag = SettingsFragment::new(&probe, &projs);
        let text = frag.to_toml();
        assert_eq!(SettingsFragment::parse(&text).unwrap(), frag);

        // spliced into a full config it yields the same settings
        let mut cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        let spliced = format!(
            "{}\n{}",
            MINIMAL.split("[[projectors]]").next().unwrap(),
            text
        );
        let reparsed = ExperimentConfig::parse(&spliced).unwrap();
        cfg.apply_fragment(&frag);
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.optimization().unwrap().probe, probe);
        assert_eq!(reparsed.optimization().unwrap().projectors, projs);
    }

    #[test]
    fn matrix_state_and_custom_families() {
        let text = r#"
families = [{ kind = "mueller", label = "depol", mueller = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.5]] },
            { kind = "element", label = "hwp", element = { kind = "retarder", angle_deg = 0.0, retardance_rad = 3.141592653589793 } }]
[state]
kind = "matrix"
re = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0], [0.0, 0.5, 0.5, 0.0], [0.0, 0.0, 0.0, 0.0]]

[[projectors]]
qwp_angle = 0.0
lp_angle = 0.0
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert!((cfg.state.build().unwrap().matrix() - bell_psi_plus().matrix()).norm() < 1e-12);
        let fams = cfg.families().unwrap();
        assert_eq!(fams[0].label(), "depol");
        assert_eq!(fams[1].label(), "hwp");
    }
}
