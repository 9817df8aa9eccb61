//! Run configuration: TOML file + `--set` overrides layered over built-in
//! defaults, then validated against the core invariants.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use flapping_core::bench::{AnalysisConfig, SyntheticBench};
use flapping_core::control::{AllocationMode, ControllerConfig};
use flapping_core::cpg::{
    FilterDomain, ServoCalib, SmoothingConfig, TargetRule, WingbeatParams, DEFAULT_DELTA_SLEW_DEG_S,
    DEFAULT_MECH_LIMIT_DEG,
};
use flapping_core::morphology::{FitOptions, MorphoConfig};
use flapping_core::plant::BodyState;
use flapping_core::sim::{ImuNoise, OpenLoopCommand, PlantConfig, Scenario, SetpointStep};
use flapping_core::star::{check_asymmetry, StarParams, Variant};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    StarGen,
    CpgGen,
    SimRun,
    SimSweep,
    FitContour,
    Metrics,
    BenchAnalyze,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::StarGen => "star-gen",
            Command::CpgGen => "cpg-gen",
            Command::SimRun => "sim-run",
            Command::SimSweep => "sim-sweep",
            Command::FitContour => "fit-contour",
            Command::Metrics => "metrics",
            Command::BenchAnalyze => "bench-analyze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub star: StarSection,
    pub cpg: CpgSection,
    pub sim: SimSection,
    pub sweep: SweepSection,
    pub contour: ContourSection,
    pub metrics: MetricsSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarSection {
    pub f: f64,
    pub a: f64,
    pub variant: Variant,
    pub extended: bool,
    pub duration: f64,
    pub dt: f64,
    /// Keep every n-th integration step.
    pub decimate: usize,
    /// Stroke amplitude for the `y` column, deg.
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgSection {
    pub base: WingbeatParams,
    pub f_c: f64,
    pub f_servo: f64,
    pub domain: FilterDomain,
    pub target: TargetRule,
    pub delta_slew: f64,
    pub mech_limit: f64,
    pub servo: ServoCalib,
    pub duration: f64,
    /// Command stream `tick, A_L, A_R, delta_L, delta_R`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commands: Option<PathBuf>,
    /// Constant per-wing commands used without a command stream.
    pub a_l: f64,
    pub a_r: f64,
    pub delta_l: f64,
    pub delta_r: f64,
}

impl CpgSection {
    pub fn smoothing(&self) -> flapping_core::Result<SmoothingConfig> {
        let mut s = SmoothingConfig::from_cutoff(self.f_c, self.f_servo)?;
        s.domain = self.domain;
        s.target = self.target;
        s.delta_slew = (self.delta_slew > 0.0).then_some(self.delta_slew);
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    pub mode: AllocationMode,
    pub duration: f64,
    pub physics_dt: f64,
    pub closed_loop: bool,
    pub setpoints: Vec<SetpointStep>,
    /// CSV `t, pitch_ref, yaw_ref`; replaces `setpoints` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setpoints_file: Option<PathBuf>,
    pub open_loop: OpenLoopCommand,
    pub noise: ImuNoise,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor_dropout: Option<f64>,
    pub initial: BodyState,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
    pub decimate: usize,
}

impl SimSection {
    fn new(mode: AllocationMode) -> Self {
        let sc = Scenario::new(mode, 10.0);
        Self {
            mode,
            duration: sc.duration,
            physics_dt: sc.physics_dt,
            closed_loop: sc.closed_loop,
            setpoints: vec![SetpointStep {
                t: 1.0,
                pitch_ref: 10.0,
                yaw_ref: 0.0,
            }],
            setpoints_file: None,
            open_loop: sc.open_loop,
            noise: sc.noise,
            sensor_dropout: None,
            initial: sc.initial,
            controller: sc.controller,
            plant: sc.plant,
            decimate: 1,
        }
    }

    pub fn scenario(&self, name: &str, seed: u64, setpoints: Vec<SetpointStep>) -> Scenario {
        let mut controller = self.controller;
        controller.mode = self.mode;
        Scenario {
            name: name.into(),
            duration: self.duration,
            physics_dt: self.physics_dt,
            closed_loop: self.closed_loop,
            controller,
            plant: self.plant,
            setpoints,
            open_loop: self.open_loop,
            noise: self.noise,
            seed,
            sensor_dropout: self.sensor_dropout,
            initial: self.initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub modes: Vec<AllocationMode>,
    /// Pitch reference steps, deg.
    pub pitch_steps: Vec<f64>,
    /// Yaw reference steps, deg.
    pub yaw_steps: Vec<f64>,
    pub step_time: f64,
    pub duration: f64,
    /// Start of the steady-state window for the summary.
    pub settle_after: f64,
    pub decimate: usize,
    /// Worker threads; defaults to the available parallelism.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSection {
    /// CSV with `x, y` columns, pixels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Fit points sampled from the built-in forewing spline instead.
    pub published: bool,
    pub published_points: usize,
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSection {
    #[serde(flatten)]
    pub wing: MorphoConfig,
    /// Flight speeds for the reduced-frequency table, m/s.
    pub speeds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepInput {
    pub setting: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intact: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perforated: Option<PathBuf>,
    /// Generate both runs from the synthetic model (seeded).
    pub synthetic: bool,
    pub synth: SyntheticBench,
    pub analysis: AnalysisConfig,
    /// Modulation-sweep runs, one log per setting.
    pub sweep: Vec<SweepInput>,
}

/// Keys that may be set although their default is absent.
const OPTIONAL_KEYS: &[&str] = &[
    "out",
    "cpg.commands",
    "sim.setpoints_file",
    "sim.sensor_dropout",
    "sweep.jobs",
    "contour.input",
    "contour.fit.n_ctrl",
    "contour.fit.max_ctrl",
    "bench.intact",
    "bench.perforated",
];

impl RunConfig {
    /// Defaults; controller gains follow the chosen allocation mode.
    pub fn defaults(mode: AllocationMode) -> Self {
        Self {
            seed: 0,
            out: None,
            star: StarSection {
                f: 10.0,
                a: 0.3,
                variant: Variant::Cosine,
                extended: false,
                duration: 2.0,
                dt: 1e-5,
                decimate: 10,
                zeta: 40.0,
            },
            cpg: CpgSection {
                base: WingbeatParams {
                    zeta: 40.0,
                    f: 10.0,
                    delta: 0.0,
                    a: 0.0,
                },
                f_c: 2.0,
                f_servo: 100.0,
                domain: FilterDomain::default(),
                target: TargetRule::default(),
                delta_slew: DEFAULT_DELTA_SLEW_DEG_S,
                mech_limit: DEFAULT_MECH_LIMIT_DEG,
                servo: ServoCalib::default(),
                duration: 2.0,
                commands: None,
                a_l: 0.0,
                a_r: 0.0,
                delta_l: 0.0,
                delta_r: 0.0,
            },
            sim: SimSection::new(mode),
            sweep: SweepSection {
                modes: vec![AllocationMode::Offset, AllocationMode::Timing],
                pitch_steps: vec![10.0, -10.0],
                yaw_steps: vec![30.0],
                step_time: 1.0,
                duration: 60.0,
                settle_after: 20.0,
                decimate: 10,
                jobs: None,
            },
            contour: ContourSection {
                input: None,
                published: false,
                published_points: 1000,
                fit: FitOptions::default(),
            },
            metrics: MetricsSection {
                wing: MorphoConfig::default(),
                speeds: vec![0.5, 0.75, 1.0, 1.03, 1.25, 1.5, 2.0, 3.0],
            },
            bench: BenchSection {
                intact: None,
                perforated: None,
                synthetic: false,
                synth: SyntheticBench::default(),
                analysis: AnalysisConfig::default(),
                sweep: Vec::new(),
            },
        }
    }

    /// Module invariants of every section, plus input files of `cmd`.
    pub fn validate(&self, cmd: Command) -> Result<(), CliError> {
        let inv = |section: &str, e: flapping_core::Error| CliError::Invalid(format!("{section}: {e}"));

        let s = &self.star;
        StarParams::new(s.f, s.a).map_err(|e| inv("star", e))?;
        positive("star.duration", s.duration)?;
        positive("star.dt", s.dt)?;
        positive("star.zeta", s.zeta)?;
        nonzero("star.decimate", s.decimate)?;

        let c = &self.cpg;
        c.base.validate(c.mech_limit).map_err(|e| inv("cpg.base", e))?;
        c.smoothing()
            .and_then(|sm| sm.validate(c.base.f))
            .map_err(|e| inv("cpg", e))?;
        positive("cpg.duration", c.duration)?;
        for a in [c.a_l, c.a_r] {
            check_asymmetry(a).map_err(|e| inv("cpg", e))?;
        }

        let sim = &self.sim;
        sim.scenario("sim", self.seed, sim.setpoints.clone())
            .validate()
            .map_err(|e| inv("sim", e))?;
        nonzero("sim.decimate", sim.decimate)?;
        if let Some(t) = sim.sensor_dropout {
            if !(t >= 0.0) {
                return Err(CliError::Invalid(format!("sim.sensor_dropout = {t} must be non-negative")));
            }
        }

        let w = &self.sweep;
        positive("sweep.duration", w.duration)?;
        nonzero("sweep.decimate", w.decimate)?;
        if !(w.step_time >= 0.0 && w.step_time < w.duration) {
            return Err(CliError::Invalid(format!(
                "sweep.step_time = {} must lie within [0, duration)",
                w.step_time
            )));
        }
        if !(w.settle_after >= 0.0 && w.settle_after < w.duration) {
            return Err(CliError::Invalid(format!(
                "sweep.settle_after = {} must lie within [0, duration)",
                w.settle_after
            )));
        }
        if w.jobs == Some(0) {
            return Err(CliError::Invalid("sweep.jobs must be at least 1".into()));
        }

        let k = &self.contour;
        if !(k.fit.alpha >= 0.0 && k.fit.alpha.is_finite()) {
            return Err(CliError::Invalid(format!(
                "contour.fit.alpha = {} must be non-negative",
                k.fit.alpha
            )));
        }
        nonzero("contour.fit.resample", k.fit.resample)?;

        self.metrics.wing.validate().map_err(|e| inv("metrics", e))?;
        for &u in &self.metrics.speeds {
            positive("metrics.speeds", u)?;
        }

        let b = &self.bench;
        b.analysis.filter.validate().map_err(|e| inv("bench.analysis.filter", e))?;
        positive("bench.synth.fs", b.synth.fs)?;
        positive("bench.synth.f", b.synth.f)?;

        match cmd {
            Command::CpgGen => require_file(c.commands.as_deref())?,
            Command::SimRun => require_file(sim.setpoints_file.as_deref())?,
            Command::FitContour => {
                if k.input.is_none() && !k.published {
                    return Err(CliError::Invalid(
                        "contour.input is required unless contour.published = true".into(),
                    ));
                }
                if !k.published {
                    require_file(k.input.as_deref())?;
                }
            }
            Command::BenchAnalyze => {
                if !b.synthetic {
                    if b.intact.is_none() || b.perforated.is_none() {
                        return Err(CliError::Invalid(
                            "bench.intact and bench.perforated are required unless bench.synthetic = true"
                                .into(),
                        ));
                    }
                    require_file(b.intact.as_deref())?;
                    require_file(b.perforated.as_deref())?;
                }
                for s in &b.sweep {
                    require_file(Some(&s.path))?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.cpg.commands);
        fix(&mut self.sim.setpoints_file);
        fix(&mut self.contour.input);
        fix(&mut self.bench.intact);
        fix(&mut self.bench.perforated);
        for s in &mut self.bench.sweep {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{name} = {v} must be positive")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        Err(CliError::Invalid(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

fn require_file(p: Option<&Path>) -> Result<(), CliError> {
    match p {
        Some(p) if !p.is_file() => Err(CliError::MissingInput(p.to_path_buf())),
        _ => Ok(()),
    }
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn parse_table(src: &str, origin: &str) -> Result<Table, CliError> {
    src.parse::<Table>().map_err(|e| {
        let (line, col) = e.span().map_or((0, 0), |s| line_col(src, s.start));
        CliError::Parse {
            origin: origin.to_string(),
            line,
            col,
            msg: e.message().trim().to_string(),
        }
    })
}

/// `a.b.c=value`: value parsed as a TOML literal, else taken as a string.
fn apply_override(root: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{spec}`")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("--set has an empty key segment in `{key}`")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Usage(format!("--set {key}: `{p}` is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Rejects keys that do not exist in the default tree.
fn check_keys(user: &Table, defaults: &Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (defaults.get(k), v) {
            (Some(Value::Table(d)), Value::Table(u)) => check_keys(u, d, &path)?,
            (Some(_), _) => {}
            (None, _) if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            (None, _) => return Err(CliError::Invalid(format!("unknown configuration key `{path}`"))),
        }
    }
    Ok(())
}

/// Tables merge recursively; everything else (arrays included) replaces.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Reads `path` (if any), applies `overrides` last and validates for `cmd`.
pub fn load_config(path: Option<&Path>, overrides: &[String], cmd: Command) -> Result<RunConfig, CliError> {
    let mut user = match path {
        Some(p) => {
            let src = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => CliError::MissingInput(p.to_path_buf()),
                _ => CliError::Setup(format!("cannot read {}: {e}", p.display())),
            })?;
            parse_table(&src, &p.display().to_string())?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut user, o)?;
    }

    let mode = match user.get("sim").and_then(|s| s.get("mode")) {
        Some(v) => v
            .clone()
            .try_into::<AllocationMode>()
            .map_err(|e| CliError::Invalid(format!("sim.mode: {}", e.message().trim())))?,
        None => AllocationMode::default(),
    };
    let Value::Table(mut merged) = Value::try_from(RunConfig::defaults(mode)).expect("defaults serialize") else {
        unreachable!("config serializes to a table")
    };
    check_keys(&user, &merged, "")?;
    merge(&mut merged, user);
    let mut cfg: RunConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Invalid(format!("invalid configuration: {}", e.message().trim())))?;
    cfg.sim.controller.mode = cfg.sim.mode;
    if let Some(dir) = path.and_then(Path::parent) {
        cfg.resolve_paths(dir);
    }
    cfg.validate(cmd)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("a = 1\nb = ?", 10), (2, 5));
        assert_eq!(line_col("x", 0), (1, 1));
    }

    #[test]
    fn overrides_parse_literals_and_strings() {
        let mut t = Table::new();
        apply_override(&mut t, "star.a=0.2").unwrap();
        apply_override(&mut t, "sim.mode=timing").unwrap();
        apply_override(&mut t, "sweep.pitch_steps=[5, -5]").unwrap();
        assert_eq!(t["star"]["a"].as_float(), Some(0.2));
        assert_eq!(t["sim"]["mode"].as_str(), Some("timing"));
        assert_eq!(t["sweep"]["pitch_steps"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut t, "nokey").is_err());
    }

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = load_config(None, &[], Command::Metrics).unwrap();
        assert_eq!(cfg, RunConfig::defaults(AllocationMode::Offset));
    }

    #[test]
    fn mode_selects_gains() {
        let cfg = load_config(None, &["sim.mode=timing".into()], Command::SimRun).unwrap();
        assert_eq!(cfg.sim.controller, ControllerConfig::for_mode(AllocationMode::Timing));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = load_config(None, &["star.amplitude=3".into()], Command::StarGen).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("star.amplitude"));
    }

    #[test]
    fn sign_violation_rejected() {
        let e = load_config(None, &["sim.plant.ft.c_my_delta=1e-5".into()], Command::SimRun).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");
    }
}
