//! The seven pipelines. Each writes CSV outputs plus `manifest.json`; on a
//! pipeline fault whatever was produced is kept and the manifest records
//! the error.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use flapping_core::bench::{self, BenchRecord, CycleProfile, SweepRun};
use flapping_core::control::{AllocationMode, ControllerConfig};
use flapping_core::cpg::{dual_wing_step, servo_pwm, Modulation, OscState};
use flapping_core::io::{self, num};
use flapping_core::morphology::{self, SplineModel, FOREWING_CONTROL_POINTS};
use flapping_core::sim::{simulate, Scenario, SetpointStep, SimOutcome, SimRow};
use flapping_core::star::{check_asymmetry, trajectory, PhaseState, StarParams};
use flapping_core::Error;

use crate::config::{Command, RunConfig, SimSection};
use crate::{manifest, CliError};

/// Output directory plus the files written so far.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn csv<R: IntoIterator<Item = Vec<String>>>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), Error> {
        io::write_csv_file(&self.dir.join(name), header, rows)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), Error> {
        std::fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

pub fn dispatch(cmd: Command, cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let mut out = Outputs {
        dir: dir.to_path_buf(),
        files: Vec::new(),
    };
    let res = match cmd {
        Command::StarGen => star_gen(cfg, &mut out),
        Command::CpgGen => cpg_gen(cfg, &mut out),
        Command::SimRun => sim_run(cfg, &mut out),
        Command::SimSweep => sim_sweep(cfg, &mut out),
        Command::FitContour => fit_contour(cfg, &mut out),
        Command::Metrics => metrics(cfg, &mut out),
        Command::BenchAnalyze => bench_analyze(cfg, &mut out),
    };
    let err = res.as_ref().err().map(ToString::to_string);
    manifest::write(dir, cmd, cfg, &out.files, err)
        .map_err(|e| CliError::Setup(format!("cannot write manifest in {}: {e}", dir.display())))?;
    res.map_err(CliError::Pipeline)
}

fn star_gen(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let s = &cfg.star;
    let params = StarParams::new(s.f, s.a)?
        .with_variant(s.variant)
        .with_extended(s.extended);
    let traj = trajectory(PhaseState { omega: 0.0, t: 0.0 }, &params, s.duration, s.dt)?;
    out.csv(
        "trajectory.csv",
        &["t", "omega", "omega_dot", "p", "y"],
        traj.iter().step_by(s.decimate).map(|x| {
            vec![num(x.t), num(x.omega), num(x.omega_dot), num(x.p), num(s.zeta * x.omega.sin())]
        }),
    )
}

fn cpg_gen(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let c = &cfg.cpg;
    let smoothing = c.smoothing()?;
    let commands = match &c.commands {
        Some(p) => io::read_commands(std::fs::File::open(p)?)?,
        None => vec![io::WingCommand {
            tick: 0,
            a_l: c.a_l,
            a_r: c.a_r,
            delta_l: c.delta_l,
            delta_r: c.delta_r,
        }],
    };
    for cmd in &commands {
        check_asymmetry(cmd.a_l)?;
        check_asymmetry(cmd.a_r)?;
    }
    let ticks = (c.duration * c.f_servo).round() as u64;
    let mut osc = [OscState::new(&c.base)?, OscState::new(&c.base)?];
    let mut rows = Vec::with_capacity(ticks as usize);
    let mut next = 0;
    let mut cur = io::WingCommand {
        tick: 0,
        a_l: 0.0,
        a_r: 0.0,
        delta_l: 0.0,
        delta_r: 0.0,
    };
    for k in 0..ticks {
        while next < commands.len() && commands[next].tick <= k {
            cur = commands[next];
            next += 1;
        }
        let sym = Modulation {
            delta: 0.5 * (cur.delta_l + cur.delta_r),
            a: 0.5 * (cur.a_l + cur.a_r),
        };
        let anti = Modulation {
            delta: 0.5 * (cur.delta_l - cur.delta_r),
            a: 0.5 * (cur.a_l - cur.a_r),
        };
        let o = dual_wing_step(&mut osc, sym, anti, &c.base, &smoothing, c.mech_limit)?;
        let (pwm_l, _) = servo_pwm(o.y_l, &c.servo);
        let (pwm_r, _) = servo_pwm(o.y_r, &c.servo);
        rows.push(vec![
            k.to_string(),
            num(o.params_l.a),
            num(o.params_r.a),
            num(o.params_l.delta),
            num(o.params_r.delta),
            num(o.y_l),
            num(o.y_r),
            num(pwm_l),
            num(pwm_r),
            num(k as f64 / c.f_servo),
            u8::from(o.saturated_l).to_string(),
            u8::from(o.saturated_r).to_string(),
        ]);
    }
    out.csv(
        "cpg.csv",
        &[
            "tick", "A_L", "A_R", "delta_L", "delta_R", "y_L", "y_R", "pwm_L", "pwm_R", "t", "sat_L", "sat_R",
        ],
        rows,
    )
}

fn write_sim(out: &mut Outputs, name: &str, rows: &[SimRow], decimate: usize) -> Result<(), Error> {
    out.csv(&format!("{name}.csv"), &SimRow::header(), rows.iter().step_by(decimate).map(SimRow::row))
}

fn sim_run(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let setpoints = match &cfg.sim.setpoints_file {
        Some(p) => io::read_setpoints(std::fs::File::open(p)?)?,
        None => cfg.sim.setpoints.clone(),
    };
    let sc = cfg.sim.scenario("sim-run", cfg.seed, setpoints);
    let SimOutcome { rows, fault } = simulate(&sc)?;
    write_sim(out, "trajectory", &rows, cfg.sim.decimate)?;
    match fault {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn mode_name(m: AllocationMode) -> &'static str {
    match m {
        AllocationMode::Offset => "offset",
        AllocationMode::Timing => "timing",
    }
}

struct SweepCase {
    name: String,
    mode: AllocationMode,
    channel: &'static str,
    target: f64,
    scenario: Scenario,
}

fn sweep_cases(cfg: &RunConfig) -> Vec<SweepCase> {
    let w = &cfg.sweep;
    let mut cases = Vec::new();
    for &mode in &w.modes {
        let mut sim: SimSection = cfg.sim.clone();
        if mode != sim.mode {
            sim.controller = ControllerConfig::for_mode(mode);
        }
        sim.mode = mode;
        sim.duration = w.duration;
        let steps = w
            .pitch_steps
            .iter()
            .map(|&p| ("pitch", p, p, 0.0))
            .chain(w.yaw_steps.iter().map(|&y| ("yaw", y, 0.0, y)));
        for (channel, target, pitch_ref, yaw_ref) in steps {
            let name = format!("{}_{channel}_{target:+}", mode_name(mode));
            let sp = vec![SetpointStep {
                t: w.step_time,
                pitch_ref,
                yaw_ref,
            }];
            cases.push(SweepCase {
                scenario: sim.scenario(&name, cfg.seed, sp),
                name,
                mode,
                channel,
                target,
            });
        }
    }
    cases
}

fn sim_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let cases = sweep_cases(cfg);
    let jobs = cfg
        .sweep
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, cases.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<SimOutcome, Error>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(case) = cases.get(i) else { break };
                let r = simulate(&case.scenario);
                results.lock().expect("no worker panicked").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("no worker panicked");
    results.sort_by_key(|r| r.0);

    let settle = cfg.sweep.settle_after;
    let mut summary = Vec::new();
    let mut faults = Vec::new();
    for (i, r) in results {
        let case = &cases[i];
        let (rows, fault) = match r {
            Ok(o) => (o.rows, o.fault),
            Err(e) => (Vec::new(), Some(e)),
        };
        write_sim(out, &case.name, &rows, cfg.sweep.decimate)?;
        let window: Vec<f64> = rows
            .iter()
            .filter(|r| r.t >= settle)
            .map(|r| if case.channel == "pitch" { r.tick.pitch_mean } else { r.psi })
            .collect();
        let (mean, p2p) = if window.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (window.iter().sum::<f64>() / window.len() as f64, hi - lo)
        };
        let max_pitch = rows.iter().map(|r| r.theta.abs()).fold(0.0, f64::max);
        let fault_msg = fault.as_ref().map(ToString::to_string).unwrap_or_default();
        if let Some(e) = fault {
            faults.push(format!("{}: {e}", case.name));
        }
        summary.push(vec![
            case.name.clone(),
            mode_name(case.mode).to_string(),
            case.channel.to_string(),
            num(case.target),
            num(mean),
            num(mean - case.target),
            num(p2p),
            num(max_pitch),
            fault_msg,
        ]);
    }
    summary.sort_by(|a, b| a[0].cmp(&b[0]));
    out.csv(
        "summary.csv",
        &[
            "name", "mode", "channel", "target", "steady_mean", "steady_error", "steady_p2p", "max_abs_pitch",
            "fault",
        ],
        summary,
    )?;
    if faults.is_empty() {
        Ok(())
    } else {
        Err(Error::Input(format!("{} scenario(s) faulted: {}", faults.len(), faults.join("; "))))
    }
}

fn fit_contour(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let k = &cfg.contour;
    let points = if k.published {
        let model = SplineModel::new(FOREWING_CONTROL_POINTS.to_vec())?;
        morphology::resample(&model, k.published_points)
    } else {
        let path = k.input.as_ref().expect("validated");
        io::read_contour(std::fs::File::open(path)?)?
    };
    let (model, report) = morphology::fit_with(&points, &k.fit)?;
    let dense = morphology::resample(&model, k.fit.resample);

    let mut buf = Vec::new();
    io::write_control_points(&mut buf, &model)?;
    std::fs::write(out.dir.join("control_points.csv"), buf)?;
    out.files.push("control_points.csv".into());
    out.csv("resampled.csv", &["x", "y"], dense.iter().map(|p| vec![num(p[0]), num(p[1])]))?;
    out.csv(
        "errors.csv",
        &["i", "x", "y", "e"],
        points
            .iter()
            .zip(&report.e)
            .enumerate()
            .map(|(i, (p, e))| vec![i.to_string(), num(p[0]), num(p[1]), num(*e)]),
    )?;
    let kv = [
        ("rms", num(report.rms)),
        ("p95", num(report.p95)),
        ("n_points", report.n_points.to_string()),
        ("n_ctrl", report.n_ctrl.to_string()),
        ("n_resample", report.n_resample.to_string()),
        ("alpha_smooth", num(report.alpha_smooth)),
        ("budget", num(report.budget)),
        ("ssr", num(report.ssr)),
        ("lambda", num(report.lambda)),
        ("budget_met", report.budget_met.to_string()),
    ];
    out.csv("report.csv", &["key", "value"], kv.into_iter().map(|(k, v)| vec![k.to_string(), v]))?;
    println!(
        "fitted {} points with {} control points: RMS {:.4} px, p95 {:.4} px",
        report.n_points, report.n_ctrl, report.rms, report.p95
    );
    Ok(())
}

fn metrics(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let w = &cfg.metrics.wing;
    let m = morphology::morphometrics(w)?;
    out.csv(
        "metrics.csv",
        &["key", "value"],
        [
            ("aspect_ratio", m.aspect_ratio),
            ("wing_loading", m.wing_loading),
            ("reynolds", m.reynolds),
            ("reduced_frequency", m.reduced_frequency),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), num(v)]),
    )?;
    let curve = cfg
        .metrics
        .speeds
        .iter()
        .map(|&u| Ok(vec![num(u), num(morphology::reduced_frequency(w, u)?)]))
        .collect::<Result<Vec<_>, Error>>()?;
    out.csv("k_curve.csv", &["U", "k"], curve)?;
    let report = format!(
        "AR = {:.2}\nWL = {:.2} N/m^2\nRe = {:.0}\nk = {:.2} (f = {} Hz, U = {} m/s)\n",
        m.aspect_ratio, m.wing_loading, m.reynolds, m.reduced_frequency, w.f, w.v
    );
    out.text("report.txt", &report)?;
    print!("{report}");
    Ok(())
}

fn profile_rows(p: &CycleProfile) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = vec!["s".into()];
    header.extend(p.names.iter().cloned());
    if p.var.is_some() {
        header.extend(p.names.iter().map(|n| format!("{n}_std")));
    }
    let rows = (0..p.grid.len())
        .map(|i| {
            let mut r = vec![num(p.grid[i])];
            r.extend(p.mean.iter().map(|c| num(c[i])));
            if let Some(var) = &p.var {
                r.extend(var.iter().map(|c| num(c[i].max(0.0).sqrt())));
            }
            r
        })
        .collect();
    (header, rows)
}

fn write_profile(out: &mut Outputs, name: &str, p: &CycleProfile) -> Result<(), Error> {
    let (header, rows) = profile_rows(p);
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(name, &h, rows)
}

fn read_bench_file(p: &Path) -> Result<BenchRecord, Error> {
    io::read_bench(std::io::BufReader::new(std::fs::File::open(p)?))
}

fn bench_analyze(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Error> {
    let b = &cfg.bench;
    let (intact, perforated) = if b.synthetic {
        let i = b.synth.record(true, cfg.seed)?;
        let p = b.synth.record(false, cfg.seed.wrapping_add(1))?;
        for (name, rec) in [("synthetic_intact.csv", &i), ("synthetic_perforated.csv", &p)] {
            let mut buf = Vec::new();
            io::write_bench(&mut buf, rec)?;
            out.text(name, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
        }
        (i, p)
    } else {
        (
            read_bench_file(b.intact.as_ref().expect("validated"))?,
            read_bench_file(b.perforated.as_ref().expect("validated"))?,
        )
    };
    let res = bench::analyze_pair(&intact, &perforated, &b.analysis)?;
    write_profile(out, "profile_intact.csv", &res.intact.profile)?;
    write_profile(out, "profile_perforated.csv", &res.perforated.profile)?;
    write_profile(out, "aero.csv", &res.aero)?;

    let mut polar_header = vec!["theta".to_string()];
    let mut cols = Vec::new();
    let mut theta = Vec::new();
    for (name, v) in res.aero.names.iter().zip(&res.aero.mean) {
        let (t, r) = bench::polar_profile(&res.aero.grid, v);
        theta = t;
        polar_header.push(name.clone());
        cols.push(r);
    }
    let h: Vec<&str> = polar_header.iter().map(String::as_str).collect();
    out.csv(
        "polar.csv",
        &h,
        (0..theta.len()).map(|i| {
            let mut r = vec![num(theta[i])];
            r.extend(cols.iter().map(|c| num(c[i])));
            r
        }),
    )?;
    out.csv(
        "impulses.csv",
        &["component", "signed", "absolute", "period"],
        res.impulses
            .iter()
            .map(|(n, imp)| vec![n.clone(), num(imp.signed), num(imp.absolute), num(res.intact.period)]),
    )?;

    if !b.sweep.is_empty() {
        let runs = b
            .sweep
            .iter()
            .map(|s| {
                let rp = bench::analyze_run(&read_bench_file(&s.path)?, &b.analysis)?;
                let cycles = rp
                    .cycles
                    .iter()
                    .map(|c| {
                        (0..c[0].len())
                            .map(|i| std::array::from_fn(|k| c[k][i]))
                            .collect()
                    })
                    .collect();
                Ok(SweepRun {
                    setting: s.setting,
                    cycles,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let stats = bench::modulation_sweep_stats(&runs)?;
        let mut header = vec!["setting".to_string(), "n_cycles".into(), "n_used".into()];
        header.extend(bench::FT_NAMES.iter().map(|n| format!("mean_{n}")));
        header.extend(bench::FT_NAMES.iter().map(|n| format!("std_{n}")));
        header.push("warning".into());
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        for s in &stats {
            if let Some(w) = &s.warning {
                eprintln!("warning: {w}");
            }
        }
        out.csv(
            "sweep.csv",
            &h,
            stats.iter().map(|s| {
                let mut r = vec![num(s.setting), s.n_cycles.to_string(), s.n_used.to_string()];
                r.extend(s.mean.iter().map(|v| num(*v)));
                r.extend(s.std.iter().map(|v| num(*v)));
                r.push(s.warning.clone().unwrap_or_default());
                r
            }),
        )?;
    }
    Ok(())
}
