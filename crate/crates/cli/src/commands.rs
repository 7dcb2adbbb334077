use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;
use vaereg::data::{generate_synthetic, load_csv, load_features_csv, write_csv};
use vaereg::evaluation::{cross_validate, linspace, project_2d, r2_score, rmse, traverse, CvConfig, Method};
use vaereg::model::Checkpoint;
use vaereg::training::fit_vae;

use crate::config::RunConfig;
use crate::{Cli, Command};

/// Tolerance on ‖u‖ checked before a command reports success.
const U_NORM_TOL: f64 = 1e-9;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("cannot write {}", p.display()))?))
    }

    fn echo_config(&self) -> Result<()> {
        let p = self.path("config.resolved.toml");
        std::fs::write(&p, self.cfg.to_toml()?).with_context(|| format!("cannot write {}", p.display()))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.resolve_seed(cli.seed);

    // fold flag overrides into the config before validating anything
    match &cli.command {
        Command::GenData { n, .. } => {
            if let Some(n) = n {
                cfg.synthetic.n = *n;
            }
        }
        Command::Train { data, target, epochs } | Command::Cv { data, target, epochs, .. } => {
            if data.is_some() {
                cfg.data.path = data.clone();
            }
            if let Some(t) = target {
                cfg.data.target = t.clone();
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::Predict { data, .. } | Command::Project { data, .. } => {
            if data.is_some() {
                cfg.data.path = data.clone();
            }
        }
        Command::Traverse { lo, hi, points, .. } => {
            cfg.traverse.lo = lo.unwrap_or(cfg.traverse.lo);
            cfg.traverse.hi = hi.unwrap_or(cfg.traverse.hi);
            cfg.traverse.points = points.unwrap_or(cfg.traverse.points);
        }
    }
    if let Command::Cv { methods: Some(m), .. } = &cli.command {
        cfg.cv.methods = m.iter().map(|s| s.parse::<Method>()).collect::<Result<_, _>>()?;
    }

    // validate inputs before any work
    match &cli.command {
        Command::GenData { .. } => cfg.synthetic.validate()?,
        Command::Train { .. } | Command::Cv { .. } => {
            cfg.data_path()?;
            cfg.model.validate()?;
        }
        Command::Predict { checkpoint, .. } | Command::Project { checkpoint, .. } => {
            ensure!(checkpoint.is_file(), "checkpoint {} does not exist", checkpoint.display());
            cfg.data_path()?;
        }
        Command::Traverse { checkpoint, .. } => {
            ensure!(checkpoint.is_file(), "checkpoint {} does not exist", checkpoint.display());
            ensure!(cfg.traverse.points >= 1, "traversal needs at least one point");
        }
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    let ctx = Ctx { cfg, out: cli.out };
    ctx.echo_config()?;

    match cli.command {
        Command::GenData { with_truth, .. } => gen_data(&ctx, with_truth),
        Command::Train { .. } => train(&ctx),
        Command::Predict { checkpoint, .. } => predict(&ctx, &checkpoint),
        Command::Cv { .. } => cv(&ctx),
        Command::Traverse { checkpoint, .. } => traverse_cmd(&ctx, &checkpoint),
        Command::Project { checkpoint, .. } => project(&ctx, &checkpoint),
    }
}

fn gen_data(ctx: &Ctx, with_truth: bool) -> Result<()> {
    let data = generate_synthetic(&ctx.cfg.synthetic, ctx.cfg.seed)?;
    write_csv(&data.dataset, ctx.path("data.csv"))?;
    if with_truth {
        let mut w = ctx.create("truth.json")?;
        serde_json::to_writer_pretty(&mut w, &data.truth)?;
        w.flush()?;
    }
    println!(
        "{}",
        json!({"rows": data.dataset.len(), "features": data.dataset.dim(), "path": ctx.path("data.csv")})
    );
    Ok(())
}

fn train(ctx: &Ctx) -> Result<()> {
    let ds = load_csv(ctx.cfg.data_path()?, &ctx.cfg.data.target)?;
    let (ck, trace) = fit_vae(&ds, &ctx.cfg.model, &ctx.cfg.train)?;
    if let Some(bad) = trace.records.iter().find(|r| (r.u_norm - 1.0).abs() > U_NORM_TOL) {
        bail!("generator direction left the unit sphere at epoch {} (norm {})", bad.epoch, bad.u_norm);
    }
    ck.save(ctx.path("checkpoint.json"))?;
    trace.save_csv(ctx.path("trace.csv"))?;

    let pred = ck.predict(&ds.x)?;
    let last = trace.records.last().map(|r| r.terms).unwrap_or_default();
    println!(
        "{}",
        json!({
            "epochs": trace.records.len(),
            "label_loglik": last.label_loglik,
            "recon_loglik": last.recon_loglik,
            "expected_kl": last.expected_kl,
            "l2": last.l2_penalty,
            "total": last.total_loss,
            "train_r2": r2_score(&ds.c, &pred.mean)?,
            "train_rmse": rmse(&ds.c, &pred.mean)?,
        })
    );
    Ok(())
}

fn predict(ctx: &Ctx, checkpoint: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let table = load_features_csv(ctx.cfg.data_path()?, &ck.feature_names, None)?;
    let pred = ck.predict(&table.x)?;
    let mut w = ctx.create("predictions.csv")?;
    writeln!(w, "id,mean,std")?;
    for (i, (m, s)) in pred.mean.iter().zip(&pred.std).enumerate() {
        writeln!(w, "{i},{m},{s}")?;
    }
    w.flush()?;
    Ok(())
}

fn cv(ctx: &Ctx) -> Result<()> {
    let ds = load_csv(ctx.cfg.data_path()?, &ctx.cfg.data.target)?;
    let config = CvConfig {
        folds: ctx.cfg.cv.folds,
        seed: ctx.cfg.seed,
        methods: ctx.cfg.cv.methods.clone(),
        inner_folds: ctx.cfg.cv.inner_folds,
        model: ctx.cfg.model.clone(),
        train: ctx.cfg.train.clone(),
    };
    let report = cross_validate(&ds, &config)?;
    std::fs::write(ctx.path("cv_report.json"), report.to_json()?)?;
    let mut w = ctx.create("cv_report.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let summary: serde_json::Map<String, serde_json::Value> = report
        .methods
        .iter()
        .map(|(m, r)| (m.to_string(), json!({"r2": r.pooled.r2, "rmse": r.pooled.rmse})))
        .collect();
    println!("{}", serde_json::Value::Object(summary));
    Ok(())
}

fn traverse_cmd(ctx: &Ctx, checkpoint: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let t = &ctx.cfg.traverse;
    let result = traverse(&ck, &linspace(t.lo, t.hi, t.points))?;
    let mut w = ctx.create("traversal.csv")?;
    result.write_csv(&ck.target_name, &mut w)?;
    w.flush()?;
    Ok(())
}

fn project(ctx: &Ctx, checkpoint: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let table = load_features_csv(ctx.cfg.data_path()?, &ck.feature_names, Some(&ck.target_name))?;
    let targets = table
        .target
        .with_context(|| format!("data file has no target column {:?}", ck.target_name))?;
    let latents = ck.latent_means(&table.x)?;
    let result = project_2d(&latents, &targets)?;
    let mut w = ctx.create("projection.csv")?;
    result.write_csv(&ck.target_name, &mut w)?;
    w.flush()?;
    let score = vaereg::evaluation::disentanglement_score(&latents, ck.model.generator.direction(), &targets).ok();
    let pc1: Vec<f64> = (0..targets.len()).map(|i| result.coords.get(i, 0)).collect();
    let summary = json!({
        "explained_variance_ratio": result.explained_variance_ratio,
        "components": result.components,
        "pc1_target_correlation": vaereg::tensor::pearson(&pc1, &targets),
        "disentanglement_score": score,
    });
    std::fs::write(ctx.path("projection.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("{summary}");
    Ok(())
}
