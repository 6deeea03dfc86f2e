//! `adatosk` command line.

use std::path::{Path, PathBuf};

use adatosk_core::agnostic::DiffMode;
use adatosk_core::config::{EncoderConfig, RunConfig, SoftMaskMode};
use adatosk_core::cost::count_cost;
use adatosk_core::model::{Model, ModelParams, ModelSpec};
use adatosk_core::semantic::CsScores;
use adatosk_core::synth::gen_dataset;
use adatosk_core::tokenizer::Geometry;
use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ablation::{full_grid, run_ablation, write_rows, DISTANCE_GRID, SOFT_MASK_GRID};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::{load_dataset, save_dataset, Split};
use crate::parallel::Parallel;
use crate::render::clip_masks;
use crate::run::{check_compatible, csv_writer, eval_report, split_examples, train, write_json, CurveRow};

pub const CONFIG_SNAPSHOT: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "adatosk", version, about = "Masked video autoencoder with adaptive temporal soft masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    GenData(Overrides),
    /// Train on a generated dataset and write checkpoints and a learning curve.
    Train {
        #[command(flatten)]
        o: Overrides,
        /// Dataset directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Also checkpoint every N epochs.
        #[arg(long, value_name = "N")]
        save_every: Option<usize>,
    },
    /// Evaluate a checkpoint on the held-out split.
    Eval {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate the training split instead.
        #[arg(long)]
        train_split: bool,
    },
    /// Dump soft-mask tensors and render heatmaps for chosen clips.
    Masks {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Clip ids; defaults to the held-out clips.
        #[arg(long, value_delimiter = ',')]
        clips: Vec<usize>,
    },
    /// Print the analytic FLOPs and parameter counts.
    Flops(Overrides),
    /// Train every ablation variant and write one CSV row per variant.
    Ablate {
        #[command(flatten)]
        o: Overrides,
        /// Dataset directory; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Grid::All)]
        grid: Grid,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Grid {
    SoftMask,
    Distance,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GeometryPreset {
    Desk,
    Full,
}

/// Config file plus per-key overrides; flags win over the file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON config with flat keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Clip geometry and encoder size preset.
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryPreset>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_r: Option<usize>,
    #[arg(long)]
    pub mu: Option<usize>,
    #[arg(long)]
    pub lambda_rec: Option<f64>,
    #[arg(long)]
    pub lambda_cls: Option<f64>,
    /// l1 | l2 | cosine
    #[arg(long, value_parser = parse_diff)]
    pub diff: Option<DiffMode>,
    /// none | ca | cs | ca+cs
    #[arg(long, value_parser = parse_soft_mask)]
    pub soft_mask: Option<SoftMaskMode>,
    /// a | m | a+m
    #[arg(long, value_parser = parse_cs_scores)]
    pub cs_scores: Option<CsScores>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Output directory of this invocation.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn parse_diff(s: &str) -> Result<DiffMode, String> {
    DiffMode::parse(s).ok_or_else(|| format!("expected l1, l2 or cosine, got {s:?}"))
}

fn parse_soft_mask(s: &str) -> Result<SoftMaskMode, String> {
    SoftMaskMode::parse(s).ok_or_else(|| format!("expected none, ca, cs or ca+cs, got {s:?}"))
}

fn parse_cs_scores(s: &str) -> Result<CsScores, String> {
    CsScores::parse(s).ok_or_else(|| format!("expected a, m or a+m, got {s:?}"))
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))
}

impl Overrides {
    /// `base`, then the config file, then the geometry preset, then single-key flags.
    pub fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => read_config(p)?,
            None => base,
        };
        match self.geometry {
            Some(GeometryPreset::Desk) => {
                c.set_geometry(Geometry::DESK);
                c.set_encoder(EncoderConfig::DESK);
            }
            Some(GeometryPreset::Full) => {
                c.set_geometry(Geometry::FULL);
                c.set_encoder(EncoderConfig::FULL);
            }
            None => {}
        }
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        take!(
            rho, top_k, top_r, mu, lambda_rec, lambda_cls, diff, soft_mask, cs_scores, seed, epochs, per_class,
            data_seed
        );
        c.validate()?;
        Ok(c)
    }

    fn out(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default))
    }
}

fn snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_json(&dir.join(CONFIG_SNAPSHOT), cfg)
}

fn gen_data(o: &Overrides) -> Result<()> {
    let cfg = o.resolve(RunConfig::default())?;
    let out = o.out("data");
    let data = gen_dataset::<f32>(&cfg.synth_spec(), cfg.per_class, cfg.data_seed)?;
    save_dataset(&out, &data, cfg.per_class, cfg.data_seed)?;
    snapshot(&out, &cfg)?;
    println!(
        "wrote {} clips ({} train, {} eval) to {}",
        data.clips.len(),
        data.train.len(),
        data.eval.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(o: &Overrides, data_dir: &Path, save_every: Option<usize>) -> Result<()> {
    let cfg = o.resolve(RunConfig::default())?;
    ensure!(save_every != Some(0), "--save-every must be at least 1");
    let out = o.out("train");
    let data = load_dataset(data_dir)?;
    check_compatible(&data, &cfg)?;
    snapshot(&out, &cfg)?;
    let engine = Parallel::from_env()?;
    log::info!("training {} epochs on {} threads", cfg.epochs, engine.threads());
    let mut curve = csv_writer(&out.join("learning_curve.csv"))?;
    let train_set = split_examples(&data, Split::Train, &cfg)?;
    if cfg.epochs == 0 {
        let params = ModelParams::<f32>::init(ModelSpec::from_config(&cfg), cfg.seed)?;
        save_checkpoint(&out.join("checkpoint"), &params, &cfg, 0, 0)?;
        curve.flush()?;
        println!("wrote initial checkpoint to {}", out.join("checkpoint").display());
        return Ok(());
    }
    let trainer = train(&cfg, train_set, &engine, |t, s| {
        curve.serialize(CurveRow::from(s))?;
        curve.flush()?;
        log::info!(
            "epoch {} lr {:.3e} loss {:.5} (rec {:.5}, cls {:.5})",
            s.epoch,
            s.lr,
            s.loss.l_total,
            s.loss.l_rec,
            s.loss.l_cls
        );
        if let Some(n) = save_every {
            if s.epoch % n == 0 {
                save_checkpoint(
                    &out.join(format!("checkpoints/epoch_{:04}", s.epoch)),
                    &t.params,
                    &cfg,
                    t.step,
                    t.epoch,
                )?;
            }
        }
        Ok(())
    })?;
    save_checkpoint(&out.join("checkpoint"), &trainer.params, &cfg, trainer.step, trainer.epoch)?;
    println!("trained {} epochs; checkpoint in {}", trainer.epoch, out.join("checkpoint").display());
    Ok(())
}

/// Checkpoint, its config with this invocation's overrides, and the dataset.
fn load_run(
    o: &Overrides,
    data_dir: &Path,
    ck_dir: &Path,
) -> Result<(RunConfig, Model, ModelParams<f32>, adatosk_core::synth::Dataset<f32>)> {
    let ck = load_checkpoint(ck_dir)?;
    let cfg = o.resolve(ck.manifest.config.clone())?;
    ensure!(
        ModelSpec::from_config(&cfg) == ck.params.spec,
        "the overrides change the model shape stored in {}",
        ck_dir.display()
    );
    let data = load_dataset(data_dir)?;
    check_compatible(&data, &cfg)?;
    let model = Model::new(ck.params.spec)?;
    Ok((cfg, model, ck.params, data))
}

fn eval_cmd(o: &Overrides, data_dir: &Path, ck_dir: &Path, train_split: bool) -> Result<()> {
    let (cfg, model, params, data) = load_run(o, data_dir, ck_dir)?;
    let out = o.out("eval");
    let split = if train_split { Split::Train } else { Split::Eval };
    let set = split_examples(&data, split, &cfg)?;
    let r = eval_report(&model, &params, &set, &cfg)?;
    snapshot(&out, &cfg)?;
    let path = out.join("confusion_matrix.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["true".to_string()];
    header.extend((0..cfg.class_count).map(|c| format!("pred_{c}")));
    w.write_record(&header)?;
    for (c, row) in r.confusion.counts.iter().enumerate() {
        let mut rec = vec![c.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(&out.join("eval.json"), &r)?;
    println!("UAR {:.4} WAR {:.4} over {} clips (l_rec {:.5}, l_cls {:.5})", r.uar, r.war, set.len(), r.l_rec, r.l_cls);
    Ok(())
}

fn masks_cmd(o: &Overrides, data_dir: &Path, ck_dir: &Path, clips: &[usize]) -> Result<()> {
    let (cfg, model, params, data) = load_run(o, data_dir, ck_dir)?;
    let out = o.out("masks");
    let ids = if clips.is_empty() { data.eval.clone() } else { clips.to_vec() };
    for &id in &ids {
        let clip = data
            .clips
            .get(id)
            .with_context(|| format!("clip {id} does not exist; the dataset has {}", data.clips.len()))?;
        clip_masks(&out.join(format!("clip_{id:04}")), &model, &params, &cfg, id, clip)?;
    }
    snapshot(&out, &cfg)?;
    println!("wrote masks and heatmaps for {} clips to {}", ids.len(), out.display());
    Ok(())
}

fn flops_cmd(o: &Overrides) -> Result<()> {
    let cfg = o.resolve(RunConfig::default())?;
    let r = count_cost(&cfg)?;
    println!("flops_total  {}", r.flops_total);
    println!("params_total {}", r.params_total);
    for (name, f, p) in [
        ("encoder", r.flops.encoder, r.params.encoder),
        ("decoder", r.flops.decoder, r.params.decoder),
        ("soft_ca", r.flops.soft_ca, r.params.soft_ca),
        ("soft_cs", r.flops.soft_cs, r.params.soft_cs),
        ("heads", r.flops.heads, r.params.heads),
    ] {
        println!("  {name:<8} flops {f:>14}  params {p:>10}");
    }
    if let Some(out) = &o.out {
        write_json(&out.join("cost.json"), &r)?;
        snapshot(out, &cfg)?;
    }
    Ok(())
}

fn ablate_cmd(o: &Overrides, data_dir: Option<&Path>, grid: Grid) -> Result<()> {
    let cfg = o.resolve(RunConfig::default())?;
    let out = o.out("ablate");
    let data = match data_dir {
        Some(d) => load_dataset(d)?,
        None => gen_dataset(&cfg.synth_spec(), cfg.per_class, cfg.data_seed)?,
    };
    check_compatible(&data, &cfg)?;
    snapshot(&out, &cfg)?;
    let variants = match grid {
        Grid::SoftMask => SOFT_MASK_GRID.to_vec(),
        Grid::Distance => DISTANCE_GRID.to_vec(),
        Grid::All => full_grid(),
    };
    let engine = Parallel::from_env()?;
    let rows = run_ablation(&variants, &cfg, &data, &engine, Some(&out.join("variants")));
    let path = out.join("ablation.csv");
    write_rows(&path, &rows)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        println!("{:<12} uar {} war {}", r.variant, fmt(r.uar), fmt(r.war));
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} of {} variants failed; see {}", rows.len(), path.display());
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(o) => gen_data(o),
        Command::Train { o, data, save_every } => train_cmd(o, data, *save_every),
        Command::Eval { o, data, checkpoint, train_split } => eval_cmd(o, data, checkpoint, *train_split),
        Command::Masks { o, data, checkpoint, clips } => masks_cmd(o, data, checkpoint, clips),
        Command::Flops(o) => flops_cmd(o),
        Command::Ablate { o, data, grid } => ablate_cmd(o, data.as_deref(), *grid),
    }
}
