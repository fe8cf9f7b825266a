//! `run`, `ensemble` and `em-order`.

use std::fs;
use std::path::{Path, PathBuf};

use chns_core::checkpoint;
use chns_core::config::RunConfig;
use chns_core::diagnostics::{write_csv, EnsembleMoments, MomentAccumulator, ObservableSeries, StateObserver};
use chns_core::integrator::{em_order_probe, simulate, Observer, RunControl, SystemState};
use chns_core::Error;
use rayon::prelude::*;

use crate::{io_err, output_dir, thread_pool, unix_now, CliError, CliResult, Options, RunManifest};

pub const OBSERVABLES_CSV: &str = "observables.csv";
pub const MOMENTS_CSV: &str = "moments.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Outcome of one trajectory.
#[derive(Debug)]
pub struct MemberResult {
    pub member: u64,
    pub observables: StateObserver,
    pub moments: MomentAccumulator,
    pub last_checkpoint: Option<u64>,
    pub error: Option<Error>,
}

pub fn member_dir(root: &Path, member: u64) -> PathBuf {
    root.join(format!("member_{member:04}"))
}

fn write_observables(dir: &Path, obs: &StateObserver) -> CliResult<()> {
    let path = dir.join(OBSERVABLES_CSV);
    let cols: Vec<&ObservableSeries> = obs.series.iter().collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &cols).map_err(|e| io_err(&path, e))?;
    crate::write_atomic(&path, &buf)
}

/// Simulates member `member` of `cfg`, writing its CSV and checkpoints under `dir`.
pub fn run_member(cfg: &RunConfig, member: u64, dir: &Path) -> CliResult<MemberResult> {
    let grid = cfg.grid()?;
    let noise = cfg.noise_model()?;
    let scheme = cfg.scheme_config();
    let params = cfg.physics;
    let initial = cfg.initial.build(grid);
    let every = cfg.time.observe_every;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let wants_csv = cfg.output.formats.iter().any(|f| f == "csv");
    let ckpt_every = cfg.time.checkpoint_every;
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    if ckpt_every > 0 {
        fs::create_dir_all(&ckpt_dir).map_err(|e| io_err(&ckpt_dir, e))?;
    }
    let save = |s: &SystemState| -> chns_core::Result<()> {
        checkpoint::save(&ckpt_dir.join(checkpoint::file_name(s.step)), s, &params, noise.modes() as u64)
    };

    let mut observables = StateObserver::new(params, every);
    observables.observe(&initial)?;
    let mut moments = MomentAccumulator::new(&initial, every);
    let mut last_checkpoint = None;
    if ckpt_every > 0 {
        save(&initial)?;
        last_checkpoint = Some(initial.step);
    }
    let mut sink = |s: &SystemState| -> chns_core::Result<()> { save(s) };
    let outcome = {
        let mut ctl = RunControl::new(member)
            .observer(&mut observables)
            .observer(&mut moments);
        ctl.checkpoint_every = ckpt_every;
        if ckpt_every > 0 {
            ctl.checkpoints = Some(&mut sink);
        }
        simulate(&initial, &params, &noise, &scheme, cfg.time.horizon, &mut ctl)
    };
    let error = match outcome {
        Ok(end) => {
            if ckpt_every > 0 {
                if end.step % ckpt_every != 0 {
                    save(&end)?;
                }
                last_checkpoint = Some(end.step);
            }
            None
        }
        Err(failure) => {
            if ckpt_every > 0 {
                last_checkpoint = Some(failure.last_good.step);
            }
            Some(failure.error)
        }
    };
    if wants_csv {
        write_observables(dir, &observables)?;
    }
    Ok(MemberResult {
        member,
        observables,
        moments,
        last_checkpoint,
        error,
    })
}

/// `chns run`: member 0 into the output directory.
pub fn cmd_run(cfg: &RunConfig, opts: &Options) -> CliResult<PathBuf> {
    cfg.validate()?;
    let dir = output_dir(cfg, opts);
    let started = unix_now();
    let mut snapshot = cfg.clone();
    snapshot.output.directory = dir.clone();
    let res = run_member(cfg, 0, &dir)?;
    let status = match &res.error {
        None => "ok".to_string(),
        Some(e) => format!("failed: {e}"),
    };
    RunManifest {
        config: snapshot,
        command: "run".into(),
        members: 1,
        workers: 1,
        started,
        finished: unix_now(),
        status,
        checkpoints: vec![res.last_checkpoint],
    }
    .write(&dir)?;
    match res.error {
        None => {
            opts.note(format!("run complete: {}", dir.display()));
            Ok(dir)
        }
        Some(e) => Err(e.into()),
    }
}

/// Mean moment series of the members, merged in member order.
pub fn write_moments(dir: &Path, merged: &EnsembleMoments) -> CliResult<()> {
    let path = dir.join(MOMENTS_CSV);
    let value = ObservableSeries::from_parts(
        "mean_state_sq",
        "1",
        merged.times.clone(),
        merged.mean_value.clone(),
    )?;
    let integral = ObservableSeries::from_parts(
        "mean_state_sq_integral",
        "time",
        merged.times.clone(),
        merged.mean_integral.clone(),
    )?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &[&value, &integral]).map_err(|e| io_err(&path, e))?;
    crate::write_atomic(&path, &buf)
}

/// `chns ensemble`: members `0..n` on a worker pool, one directory each,
/// plus merged moments.
pub fn cmd_ensemble(cfg: &RunConfig, members: usize, opts: &Options) -> CliResult<PathBuf> {
    if members == 0 {
        return Err(CliError::Config("--members must be at least 1".into()));
    }
    cfg.validate()?;
    let dir = output_dir(cfg, opts);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let started = unix_now();
    let pool = thread_pool(opts.workers)?;
    let workers = pool.current_num_threads();
    let results: Vec<CliResult<MemberResult>> = pool.install(|| {
        (0..members as u64)
            .into_par_iter()
            .map(|m| run_member(cfg, m, &member_dir(&dir, m)))
            .collect()
    });
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    let mut checkpoints = Vec::new();
    for (m, r) in results.into_iter().enumerate() {
        match r {
            Ok(mut res) => {
                checkpoints.push(res.last_checkpoint);
                match res.error.take() {
                    None => ok.push(res),
                    Some(e) => {
                        opts.note(format!("member {m}: {e}"));
                        failures.push((m, CliError::from(e)));
                    }
                }
            }
            Err(e) => {
                opts.note(format!("member {m}: {e}"));
                checkpoints.push(None);
                failures.push((m, e));
            }
        }
    }
    if !ok.is_empty() {
        let accs: Vec<MomentAccumulator> = ok.iter().map(|r| r.moments.clone()).collect();
        write_moments(&dir, &EnsembleMoments::merge(&accs)?)?;
    }
    let mut snapshot = cfg.clone();
    snapshot.output.directory = dir.clone();
    let status = if failures.is_empty() {
        "ok".to_string()
    } else {
        let ids: Vec<String> = failures.iter().map(|(m, _)| m.to_string()).collect();
        format!("failed members: {}", ids.join(" "))
    };
    RunManifest {
        config: snapshot,
        command: "ensemble".into(),
        members,
        workers,
        started,
        finished: unix_now(),
        status,
        checkpoints,
    }
    .write(&dir)?;
    match failures.into_iter().next() {
        None => {
            opts.note(format!("ensemble of {members} complete: {}", dir.display()));
            Ok(dir)
        }
        Some((m, e)) => Err(match e {
            CliError::BlowUp(msg) => CliError::BlowUp(format!("member {m}: {msg}")),
            other => other,
        }),
    }
}

/// `chns em-order`: strong errors and slope, also written to `em_order.csv`.
pub fn cmd_em_order(cfg: &RunConfig, opts: &Options) -> CliResult<(f64, PathBuf)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let noise = cfg.noise_model()?;
    let initial = cfg.initial.build(grid);
    let em = &cfg.em_order;
    let report = em_order_probe(
        &initial,
        &cfg.physics,
        &noise,
        &cfg.scheme_config(),
        &em.dt_list,
        em.horizon,
        em.paths as u64,
        em.reference,
    )?;
    let dir = output_dir(cfg, opts);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut text = String::from("dt[time],strong_error[1]\n");
    for (dt, err) in report.dts.iter().zip(&report.errors) {
        text.push_str(&format!("{dt:.16e},{err:.16e}\n"));
    }
    let path = dir.join("em_order.csv");
    crate::write_atomic(&path, text.as_bytes())?;
    if !opts.quiet {
        for (dt, err) in report.dts.iter().zip(&report.errors) {
            println!("dt = {dt:<10} error = {err:.6e}");
        }
    }
    println!("fitted strong order: {:.4}", report.slope);
    Ok((report.slope, path))
}
