//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dyadsync::controls::{shuffle_all_time_series, shuffle_pairs, ShuffleScope};
use dyadsync::pipeline::{
    compute_features, describe_method, loss_report, preprocess_sessions, session_paths,
    theta_sweep, FeatureMethod, FeatureTable, TableRow,
};
use dyadsync::prediction::{grid_search, repeated_cv, CvReport, ModelKind};
use dyadsync::session::{
    load_manifest_entry, read_manifest, save_session, write_manifest, Session, AU_COLUMNS,
    AU_LABELS,
};
use dyadsync::synth::generate_synthetic_sessions;
use dyadsync::RunConfig;

use crate::runlog::RunLog;
use crate::{Cli, Command, ControlMode, ModelArg, ScopeArg};

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    log: RunLog,
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    let ctx = Ctx {
        log: RunLog::open(&cli.out.join("run.log"))?,
        out: cli.out.clone(),
        cfg,
    };
    match &cli.command {
        Command::Preprocess {
            manifest,
            no_range_check,
        } => preprocess(&ctx, manifest, !no_range_check),
        Command::Synchrony {
            manifest,
            method,
            emit_paths,
        } => synchrony(&ctx, manifest, method, *emit_paths),
        Command::Train {
            features,
            model,
            lambda,
            alpha,
            folds,
            min_visits,
            name,
            audit,
        } => {
            let mut ctx = ctx;
            ctx.cfg.lambda = lambda.unwrap_or(ctx.cfg.lambda);
            ctx.cfg.alpha = alpha.unwrap_or(ctx.cfg.alpha);
            ctx.cfg.folds = folds.unwrap_or(ctx.cfg.folds);
            ctx.cfg.min_visits = min_visits.unwrap_or(ctx.cfg.min_visits);
            ctx.cfg.validate()?;
            train(&ctx, features, *model, name.as_deref(), *audit)
        }
        Command::Grid {
            features,
            manifest,
            thetas,
            method,
        } => match (features, manifest) {
            (Some(f), _) => grid(&ctx, f),
            (None, Some(m)) => sweep(&ctx, m, thetas, method),
            (None, None) => bail!("grid needs --features, or --manifest with --thetas"),
        },
        Command::Control {
            manifest,
            mode,
            interval,
            scope,
        } => control(&ctx, manifest, *mode, *interval, *scope),
        Command::Synth => synth(&ctx),
        Command::Report { reports } => report(&ctx, reports),
    }
}

fn require(path: &Path, what: &str, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing {what} {}; produce it with `dyadsync {producer}`",
            path.display()
        );
    }
    Ok(())
}

/// Loads every manifest entry; failures are logged and skipped.
fn load_sessions(ctx: &Ctx, manifest: &Path, check_ranges: bool, stage: &str) -> Result<Vec<Session>> {
    require(manifest, "manifest", "preprocess")?;
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(dyadsync::Error::EmptyInput(format!(
            "manifest {} lists no sessions",
            manifest.display()
        ))
        .into());
    }
    let mut sessions = Vec::with_capacity(entries.len());
    for entry in &entries {
        match load_manifest_entry(entry, check_ranges) {
            Ok(s) => sessions.push(s),
            Err(e) => {
                log::warn!("session {}: {e}", entry.session_id);
                ctx.log.event(&entry.session_id, stage, "load_error", &e.to_string());
            }
        }
    }
    Ok(sessions)
}

fn save_all(dir: &Path, sessions: &[Session]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let entries = sessions
        .iter()
        .map(|s| save_session(dir, s))
        .collect::<dyadsync::Result<Vec<_>>>()?;
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn preprocess(ctx: &Ctx, manifest: &Path, check_ranges: bool) -> Result<()> {
    let sessions = load_sessions(ctx, manifest, check_ranges, "preprocess")?;
    let total = sessions.len();
    let outcome = preprocess_sessions(sessions, &ctx.cfg.preprocess, &ctx.cfg.pursuit)?;
    for id in &outcome.excluded {
        ctx.log.event(id, "preprocess", "excluded", "low confidence");
    }
    for (id, e) in &outcome.failed {
        ctx.log.event(id, "preprocess", "error", &e.to_string());
    }
    write_rows(
        &ctx.out.join("exclusions.csv"),
        &["session_id"],
        outcome.excluded.iter().map(|id| vec![id.clone()]),
    )?;
    if outcome.retained.is_empty() {
        bail!("no session survived preprocessing");
    }
    let processed: Vec<Session> = outcome.retained.iter().map(|p| p.session.clone()).collect();
    save_all(&ctx.out.join("processed"), &processed)?;
    for p in &outcome.retained {
        ctx.log.event(
            &p.session.id,
            "preprocess",
            "ok",
            &format!("d_max_h={} d_max_t={}", p.d_max[0], p.d_max[1]),
        );
    }
    let loss = loss_report(&outcome.retained)?;
    write_rows(
        &ctx.out.join("loss_report.csv"),
        &["au_name", "loss_percent"],
        loss.iter().enumerate().map(|(k, (_, l))| vec![AU_LABELS[k].to_string(), (100.0 * l).to_string()]),
    )?;
    println!(
        "preprocess: {} sessions read, {} retained, {} excluded, {} failed",
        total,
        outcome.retained.len(),
        outcome.excluded.len(),
        outcome.failed.len()
    );
    Ok(())
}

fn synchrony(ctx: &Ctx, manifest: &Path, method: &str, emit_paths: bool) -> Result<()> {
    let method: FeatureMethod = method.parse()?;
    let warp = match method {
        FeatureMethod::Warp(w) => Some(w),
        _ => None,
    };
    if emit_paths && warp.is_none() {
        bail!("--emit-paths applies only to warping methods");
    }
    let sessions = load_sessions(ctx, manifest, false, "synchrony")?;
    let fcfg = ctx.cfg.feature_config();
    let outcome = compute_features(&sessions, method, &fcfg)?;
    for (id, e) in &outcome.failed {
        ctx.log.event(id, "synchrony", "dropped", &e.to_string());
    }
    for row in &outcome.table.rows {
        ctx.log.event(&row.session_id, "synchrony", "ok", method.name());
    }
    let path = ctx.out.join(format!("features_{}.csv", method.name()));
    outcome.table.write_csv(&path)?;
    if let Some(w) = warp.filter(|_| emit_paths) {
        let dir = ctx.out.join(format!("paths_{}", method.name()));
        fs::create_dir_all(&dir)?;
        let kept: Vec<&Session> = sessions
            .iter()
            .filter(|s| outcome.table.rows.iter().any(|r| r.session_id == s.id))
            .collect();
        for s in kept {
            let paths = session_paths(s, w, &fcfg)?;
            let rows = paths.iter().enumerate().flat_map(|(k, p)| {
                p.u.iter().zip(&p.v).enumerate().map(move |(t, (u, v))| {
                    vec![
                        AU_COLUMNS[k].to_string(),
                        (t + 1).to_string(),
                        u.to_string(),
                        v.to_string(),
                        u.abs_diff(*v).to_string(),
                    ]
                })
            });
            write_rows(&dir.join(format!("{}.csv", s.id)), &["channel", "t", "u", "v", "deviation"], rows)?;
        }
    }
    println!(
        "synchrony: {} rows written to {}, {} sessions dropped",
        outcome.table.rows.len(),
        path.display(),
        outcome.failed.len()
    );
    Ok(())
}

fn method_of(features: &Path) -> Option<FeatureMethod> {
    let stem = features.file_stem()?.to_str()?;
    stem.strip_prefix("features_")?.parse().ok()
}

fn load_matrix(ctx: &Ctx, features: &Path) -> Result<dyadsync::FeatureMatrix> {
    require(features, "feature file", "synchrony")?;
    let table = FeatureTable::read_csv(features)?;
    let (x, dropped) = table.to_matrix()?;
    for id in dropped {
        ctx.log.event(&id, "train", "dropped", "no trust label");
    }
    Ok(x)
}

fn train(ctx: &Ctx, features: &Path, model: ModelArg, name: Option<&str>, audit: bool) -> Result<()> {
    let x = load_matrix(ctx, features)?;
    let kind = match model {
        ModelArg::Enet => ModelKind::ElasticNet,
        ModelArg::Rf => ModelKind::RandomForest,
    };
    let mut opts = ctx.cfg.cv_options(kind);
    opts.audit = audit;
    let mut report = repeated_cv(&x, &opts)?;
    let method = method_of(features);
    let (default_name, measure) = method.map(describe_method).unwrap_or(("model", "unknown"));
    let imputed = if ctx.cfg.preprocess.impute { "Imputed" } else { "Nonimputed" };
    report.model_name = Some(name.unwrap_or(default_name).to_string());
    report.measure = Some(measure.to_string());
    report.features = Some(match method {
        Some(FeatureMethod::Mea(_)) => "MEA".to_string(),
        _ => format!("{imputed} AUs"),
    });
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(ctx.out.join("cv_report.json"), json + "\n")?;
    write_rows(
        &ctx.out.join("selection_frequency.csv"),
        &["au_name", "percent_retained"],
        report
            .feature_names
            .iter()
            .zip(&report.selection_frequency)
            .map(|(n, f)| vec![n.clone(), (100.0 * f).to_string()]),
    )?;
    println!(
        "train: class0 {:.3}, class1 {:.3}, overall {:.3} over {} repeats",
        report.class_accuracy[0], report.class_accuracy[1], report.overall_accuracy, report.n_repeats
    );
    Ok(())
}

fn grid(ctx: &Ctx, features: &Path) -> Result<()> {
    let x = load_matrix(ctx, features)?;
    let base = ctx.cfg.cv_options(ModelKind::ElasticNet);
    let result = grid_search(&x, &ctx.cfg.lambda_grid, &ctx.cfg.alpha_grid, &base)?;
    write_rows(
        &ctx.out.join("grid_surface.csv"),
        &["lambda", "alpha", "overall_accuracy"],
        result.surface.iter().map(|p| {
            vec![p.lambda.to_string(), p.alpha.to_string(), p.overall_accuracy.to_string()]
        }),
    )?;
    let json = serde_json::to_string_pretty(&result.best)?;
    fs::write(ctx.out.join("grid_best.json"), json + "\n")?;
    println!(
        "grid: best lambda {}, alpha {}, overall {:.3}",
        result.best_lambda, result.best_alpha, result.best.overall_accuracy
    );
    Ok(())
}

fn sweep(ctx: &Ctx, manifest: &Path, thetas: &[f64], method: &str) -> Result<()> {
    let method = match method.parse::<FeatureMethod>()? {
        FeatureMethod::Warp(w) => w,
        other => bail!("theta sweeps need a warping method, got {other}"),
    };
    let sessions = load_sessions(ctx, manifest, false, "grid")?;
    let rows = theta_sweep(
        &sessions,
        method,
        thetas,
        &ctx.cfg.feature_config(),
        &ctx.cfg.cv_options(ModelKind::ElasticNet),
    )?;
    write_rows(
        &ctx.out.join("theta_sweep.csv"),
        &["theta_seconds", "class0_acc", "class1_acc", "overall_acc"],
        rows.iter().map(|r| {
            vec![
                r.theta_seconds.to_string(),
                r.class_accuracy[0].to_string(),
                r.class_accuracy[1].to_string(),
                r.overall_accuracy.to_string(),
            ]
        }),
    )?;
    for r in &rows {
        println!("theta {:>5} s: overall {:.3}", r.theta_seconds, r.overall_accuracy);
    }
    Ok(())
}

fn control(
    ctx: &Ctx,
    manifest: &Path,
    mode: ControlMode,
    interval: Option<f64>,
    scope: Option<ScopeArg>,
) -> Result<()> {
    let sessions = load_sessions(ctx, manifest, false, "control")?;
    let seed = ctx.cfg.seed;
    let (shuffled, dir) = match mode {
        ControlMode::Pairs => (shuffle_pairs(&sessions, seed)?, "control_pairs"),
        ControlMode::Time => {
            let scope = match scope {
                Some(ScopeArg::Dyad) => ShuffleScope::Dyad,
                Some(ScopeArg::Subject) => ShuffleScope::Subject,
                None => ctx.cfg.shuffle_scope,
            };
            let interval = interval.unwrap_or(ctx.cfg.shuffle_interval_seconds);
            (shuffle_all_time_series(&sessions, interval, scope, seed)?, "control_time")
        }
    };
    let manifest = save_all(&ctx.out.join(dir), &shuffled)?;
    for s in &shuffled {
        ctx.log.event(&s.id, "control", "ok", dir);
    }
    println!("control: {} sessions written, manifest {}", shuffled.len(), manifest.display());
    Ok(())
}

fn synth(ctx: &Ctx) -> Result<()> {
    let sessions = generate_synthetic_sessions(&ctx.cfg.synth_spec())?;
    let manifest = save_all(&ctx.out.join("synth"), &sessions)?;
    for s in &sessions {
        ctx.log.event(&s.id, "synth", "ok", "");
    }
    println!("synth: {} sessions, manifest {}", sessions.len(), manifest.display());
    Ok(())
}

fn report(ctx: &Ctx, reports: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::with_capacity(reports.len());
    for path in reports {
        require(path, "cross-validation report", "train")?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: CvReport = serde_json::from_str(&text)
            .map_err(|e| anyhow!("{} is not a cross-validation report: {e}", path.display()))?;
        rows.push(TableRow::from_report(&r));
    }
    let path = ctx.out.join("report.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    println!("report: {} rows written to {}", rows.len(), path.display());
    Ok(())
}
