//! Run configuration: TOML with dotted section names. Every key has a
//! default; [`RunConfig::reference`] prints the full set.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_table;
use crate::pipeline::{case_one_setup, BalancedSetup, UnbalancedSetup};
use crate::potentials::{make_potential, Potential, PotentialParams};
use crate::solver2d::SolveConfig;

/// The pipelines a run can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Validate,
    Profile1d,
    EnergyCurve,
    Solve2d,
    Levelset,
    Diagnose,
    Layerdyn,
    FullReport,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Profile1d => "profile1d",
            Task::EnergyCurve => "energy-curve",
            Task::Solve2d => "solve2d",
            Task::Levelset => "levelset",
            Task::Diagnose => "diagnose",
            Task::Layerdyn => "layerdyn",
            Task::FullReport => "full-report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// `quartic`, `tilted-quartic` or `tabulated`.
    pub kind: String,
    /// Tilt of `tilted-quartic`.
    pub a: Option<f64>,
    /// CSV with columns `u,F` for `tabulated`, relative to the config file.
    pub table: Option<PathBuf>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection { kind: "quartic".into(), a: None, table: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub tol: f64,
    pub samples: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { tol: 1e-8, samples: 2001 }
    }
}

/// Which 1D solution to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileChoice {
    Heteroclinic,
    Periodic,
    Bounded,
    TwoLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Profile1dSection {
    pub profile: ProfileChoice,
    pub half_width: f64,
    pub h: f64,
    /// Turning point of the periodic profile, in `(0, 1)`.
    pub alpha: f64,
    /// Zeros of the two-layer profile.
    pub l1: f64,
    pub l2: f64,
}

impl Default for Profile1dSection {
    fn default() -> Self {
        Profile1dSection { profile: ProfileChoice::Heteroclinic, half_width: 10.0, h: 0.01, alpha: 0.5, l1: -3.0, l2: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub l_min: f64,
    pub l_max: f64,
    pub samples: usize,
    /// Half lengths where the slope identity is checked by central differences.
    pub slope_at: Vec<f64>,
    pub slope_step: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection { l_min: 3.0, l_max: 6.0, samples: 16, slope_at: vec![2.0, 3.0, 4.0], slope_step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// Field CSV in the layout written by `solve`, relative to the config
    /// file. Absent means `<out>/solve2d/field.csv`.
    pub field: Option<PathBuf>,
    pub level: f64,
    /// Parameter of the periodic speed bound.
    pub alpha: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection { field: None, level: 0.0, alpha: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerdynSection {
    pub c: f64,
    /// Zero or less takes the interaction constant from the energy fit.
    pub a_eff: f64,
    /// Initial half distance, at `y = 0` with zero slopes. The start
    /// shifts the tail by about `e^{2μ l0} / (2μ q_slope y)`, so keep it near
    /// contact.
    pub l0: f64,
    pub y_end: f64,
    pub tail_start: f64,
}

impl Default for LayerdynSection {
    fn default() -> Self {
        LayerdynSection { c: 1.0, a_eff: 0.0, l0: 1.0, y_end: 1e4, tail_start: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Balanced potentials run this pipeline, unbalanced ones `unbalanced`.
    pub balanced: BalancedSetup,
    pub unbalanced: UnbalancedSetup,
    /// Also relax a sideways-skewed guess by this amplitude; 0 skips it.
    pub skew: f64,
    /// Also run the case-one witness.
    pub case_one: bool,
    pub case_one_solve: SolveConfig,
    /// Parameter of the periodic speed bound.
    pub alpha: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            balanced: BalancedSetup::default(),
            unbalanced: UnbalancedSetup::default(),
            skew: 1.5,
            case_one: true,
            case_one_solve: case_one_setup(),
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must name the task being run.
    pub task: Option<Task>,
    /// Artifact directory, relative to the working directory.
    pub output: PathBuf,
    pub potential: PotentialSection,
    pub validate: ValidateSection,
    pub profile1d: Profile1dSection,
    pub energy: EnergySection,
    /// A balanced-cosh `a_eff` of zero or less takes the energy fit.
    pub solve: SolveConfig,
    pub levels: FieldSection,
    pub diagnose: FieldSection,
    pub layerdyn: LayerdynSection,
    pub report: ReportSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: None,
            output: PathBuf::from("out"),
            potential: PotentialSection::default(),
            validate: ValidateSection::default(),
            profile1d: Profile1dSection::default(),
            energy: EnergySection::default(),
            solve: SolveConfig::default(),
            levels: FieldSection::default(),
            diagnose: FieldSection::default(),
            layerdyn: LayerdynSection::default(),
            report: ReportSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    /// Absent keys take the value of the enclosing default, so a partial
    /// `[report.unbalanced.solve]` keeps the unbalanced run's time step.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |e: &dyn std::fmt::Display| Error::Format(format!("config: {e}"));
        let user: toml::Table = toml::from_str(text).map_err(|e: toml::de::Error| err(&e.message()))?;
        let mut merged = toml::Table::try_from(RunConfig::default()).map_err(|e| err(&e))?;
        merge(&mut merged, user);
        toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| err(&e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Every key with its default value, as TOML.
    pub fn reference() -> String {
        toml::to_string(&RunConfig::default()).expect("default config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Rejects a `task` key that disagrees with the requested task.
    pub fn check_task(&self, task: Task) -> Result<()> {
        match self.task {
            Some(t) if t != task => Err(Error::Format(format!(
                "config names task `{}` but `{}` was requested",
                t.name(),
                task.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn build_potential(&self) -> Result<Arc<Potential>> {
        let s = &self.potential;
        let mut params = PotentialParams { a: s.a, table: vec![] };
        if s.kind == "tabulated" {
            let path = s
                .table
                .as_ref()
                .ok_or_else(|| Error::Format("tabulated potential needs `potential.table`".into()))?;
            let path = self.resolve(path);
            if !path.is_file() {
                return Err(Error::Format(format!("potential table {} does not exist", path.display())));
            }
            let (header, rows) = read_table(&path)?;
            if header.len() != 2 {
                return Err(Error::Format(format!("potential table needs columns u,F, found {header:?}")));
            }
            params.table = rows.into_iter().map(|r| (r[0], r[1])).collect();
        }
        make_potential(&s.kind, &params).map(Arc::new)
    }
}

/// Overlays `user` on `base` key by key. A table whose `kind` tag changes
/// replaces the default outright, so fields of the old variant do not leak.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if b.get("kind") == u.get("kind") || u.get("kind").is_none() => {
                merge(b, u)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
