//! The `nucseg` command line: one subcommand per pipeline stage, JSON
//! parameter files with flag overrides, and JSON run reports that echo the
//! fully resolved configuration.

pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::decode::{decode, DecodeParams, PredictionTriple};
use crate::evaluate::{average_precision, APReport};
use crate::stats::{self, Bins, DEFAULT_KL_BINS};
use crate::synth::{corrupt_predictions, generate_labels, render_image};
use crate::targets::make_targets;
use crate::volume::{read_typed, read_volume, write_volume, LabelVolume, ProbVolume, RoiMask, VoxelSize};

use config::{load_json, load_or_default, write_json, EvalConfig, Preset, SynthRunConfig, TargetsConfig};
use sweep::{run_sweep, Grid, SweepParam};

#[derive(Parser, Debug)]
#[command(name = "nucseg", version, about = "Nuclei instance segmentation pipeline")]
pub struct Cli {
    /// Print progress to stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic label volume and rendered image.
    Synth(SynthArgs),
    /// Compute foreground, contour and signed-distance targets.
    Targets(TargetsArgs),
    /// Decode a prediction triple into instance labels.
    Decode(DecodeArgs),
    /// Score a segmentation against ground truth.
    Eval(EvalArgs),
    /// Dataset statistics.
    Stats {
        #[command(subcommand)]
        which: StatsCommand,
    },
    /// Decode and evaluate over a grid of one threshold.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "em-like")]
    pub preset: Preset,
    /// Full configuration; replaces the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TargetsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Output prefix; writes PREFIX.fg.json, PREFIX.ct.json, PREFIX.dt.json.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Measure distances in micrometers using the volume's voxel size.
    #[arg(long)]
    pub anisotropy: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TripleArgs {
    /// Prefix of PREFIX.fg.json, PREFIX.ct.json and PREFIX.dt.json.
    #[arg(long, conflicts_with_all = ["fg", "ct", "dt"])]
    pub pred: Option<PathBuf>,
    #[arg(long, requires_all = ["ct", "dt"])]
    pub fg: Option<PathBuf>,
    #[arg(long)]
    pub ct: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub triple: TripleArgs,
    /// JSON file with DecodeParams fields.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub tau1: Option<f32>,
    #[arg(long)]
    pub tau2: Option<f32>,
    #[arg(long)]
    pub tau3: Option<f32>,
    #[arg(long)]
    pub tau4: Option<f32>,
    #[arg(long)]
    pub tau5: Option<f32>,
    #[arg(long)]
    pub min_size: Option<usize>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Predicted distance volume used to rank instances.
    #[arg(long)]
    pub distance: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum StatsCommand {
    /// Instance size histogram (voxels).
    Sizes(HistArgs),
    /// Nearest-neighbour centre distance histogram (µm).
    Nn(HistArgs),
    /// Foreground/background intensity KL divergence.
    Kl(KlArgs),
}

#[derive(Args, Debug)]
pub struct HistArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Divide counts by the number of instances.
    #[arg(long)]
    pub normalized: bool,
    /// Override the header voxel size, as z,y,x in µm.
    #[arg(long, value_delimiter = ',')]
    pub voxel_size: Option<Vec<f64>>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KlArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_KL_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub triple: TripleArgs,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Inclusive grid start:stop:step.
    #[arg(long)]
    pub range: Grid,
    /// Base DecodeParams JSON.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// CSV output path.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Paths of the three channel files for a prediction prefix.
pub fn triple_paths(prefix: &Path) -> [PathBuf; 3] {
    ["fg", "ct", "dt"].map(|suffix| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(format!(".{suffix}.json"));
        PathBuf::from(s)
    })
}

pub fn write_triple(prefix: &Path, t: &PredictionTriple) -> crate::Result<()> {
    let [fg, ct, dt] = triple_paths(prefix);
    write_volume(&t.foreground, fg)?;
    write_volume(&t.contour, ct)?;
    write_volume(&t.distance, dt)
}

pub fn read_triple(prefix: &Path) -> crate::Result<PredictionTriple> {
    let [fg, ct, dt] = triple_paths(prefix);
    PredictionTriple::new(read_typed(fg)?, read_typed(ct)?, read_typed(dt)?)
}

impl TripleArgs {
    fn load(&self) -> anyhow::Result<PredictionTriple> {
        match (&self.pred, &self.fg, &self.ct, &self.dt) {
            (Some(prefix), ..) => Ok(read_triple(prefix)?),
            (None, Some(fg), Some(ct), Some(dt)) => Ok(PredictionTriple::new(
                read_typed(fg)?,
                read_typed(ct)?,
                read_typed(dt)?,
            )?),
            _ => bail!("give either --pred PREFIX or all of --fg, --ct, --dt"),
        }
    }
}

fn emit<T: Serialize>(report: &T, path: Option<&Path>) -> anyhow::Result<()> {
    if let Some(path) = path {
        write_json(report, path)?;
    }
    Ok(())
}

struct Ctx {
    verbose: u8,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_json::<SynthRunConfig>(p)?,
        None => SynthRunConfig::preset(a.preset, 0),
    };
    if let Some(seed) = a.seed {
        cfg.synth.rng_seed = seed;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let s = generate_labels(&cfg.synth)?;
    ctx.log(format!("placed {} of {} instances", s.achieved_count(), cfg.synth.instance_count));
    let render_seed = cfg.render_seed.unwrap_or(cfg.synth.rng_seed);
    let image = render_image(&s.labels, &cfg.intensity, render_seed)?;
    write_volume(&s.labels, a.out.join("labels.json"))?;
    write_volume(&image, a.out.join("image.json"))?;

    if let Some(noise) = &cfg.noise {
        let t = make_targets(
            &s.labels,
            Default::default(),
            Default::default(),
            s.labels.voxel_size(),
            false,
        )?;
        let pred = corrupt_predictions(&t.into(), noise)?;
        write_triple(&a.out.join("pred"), &pred)?;
    }

    let manifest = json!({
        "achieved_instance_count": s.achieved_count(),
        "requested_instance_count": cfg.synth.instance_count,
        "touching_pairs": s.touching_pairs,
        "seed": cfg.synth.rng_seed,
        "render_seed": render_seed,
        "config": cfg,
    });
    write_json(&manifest, &a.out.join("manifest.json"))?;
    emit(&manifest, a.report.as_deref())?;
    println!(
        "synth: {} instances ({} touching pairs) -> {}",
        s.achieved_count(),
        s.touching_pairs,
        a.out.display()
    );
    Ok(())
}

fn cmd_targets(ctx: &Ctx, a: &TargetsArgs) -> anyhow::Result<()> {
    let mut cfg: TargetsConfig = load_or_default(a.config.as_deref())?;
    if a.anisotropy {
        cfg.use_anisotropy = true;
    }
    let labels: LabelVolume = read_typed(&a.labels)?;
    ctx.log(format!("labels {:?}", labels.shape()));
    let t = make_targets(&labels, cfg.distance, cfg.contour, labels.voxel_size(), cfg.use_anisotropy)?;
    let count = |v: &ProbVolume| v.data().iter().filter(|&&x| x == 1.0).count();
    let report = json!({
        "shape": labels.shape(),
        "foreground_voxels": count(&t.foreground),
        "contour_voxels": count(&t.contour),
        "config": cfg,
    });
    write_triple(&a.out, &t.into())?;
    emit(&report, a.report.as_deref())?;
    println!("targets: wrote {}.{{fg,ct,dt}}.json", a.out.display());
    Ok(())
}

fn resolve_decode_params(
    path: Option<&Path>,
    overrides: [Option<f32>; 5],
    min_size: Option<usize>,
) -> anyhow::Result<DecodeParams> {
    let mut p: DecodeParams = load_or_default(path)?;
    let [t1, t2, t3, t4, t5] = overrides;
    p.tau1 = t1.unwrap_or(p.tau1);
    p.tau2 = t2.unwrap_or(p.tau2);
    p.tau3 = t3.unwrap_or(p.tau3);
    p.tau4 = t4.unwrap_or(p.tau4);
    p.tau5 = t5.unwrap_or(p.tau5);
    p.min_instance_size = min_size.unwrap_or(p.min_instance_size);
    p.validate()?;
    Ok(p)
}

#[derive(Serialize)]
struct DecodeReport {
    seed_voxels: usize,
    seed_count: usize,
    dropped_marker_voxels: usize,
    instance_count: usize,
    params: DecodeParams,
}

fn cmd_decode(ctx: &Ctx, a: &DecodeArgs) -> anyhow::Result<()> {
    let params = resolve_decode_params(
        a.params.as_deref(),
        [a.tau1, a.tau2, a.tau3, a.tau4, a.tau5],
        a.min_size,
    )?;
    let pred = a.triple.load()?;
    let d = decode(&pred, &params)?;
    if d.dropped_marker_voxels > 0 {
        eprintln!(
            "warning: dropped {} seed voxels outside the foreground region",
            d.dropped_marker_voxels
        );
    }
    ctx.log(format!("{} seeds, {} instances", d.marker_count, d.instance_count));
    write_volume(&d.labels, &a.out)?;
    let report = DecodeReport {
        seed_voxels: d.seed_voxels,
        seed_count: d.marker_count,
        dropped_marker_voxels: d.dropped_marker_voxels,
        instance_count: d.instance_count,
        params,
    };
    emit(&report, a.report.as_deref())?;
    println!("decode: {} instances -> {}", d.instance_count, a.out.display());
    Ok(())
}

pub fn format_table(r: &APReport) -> String {
    let mut out = format!("{:>8} {:>8} {:>6} {:>6} {:>6}\n", "IoU", "AP", "TP", "FP", "FN");
    for t in &r.per_threshold {
        out.push_str(&format!(
            "{:>8.3} {:>8.4} {:>6} {:>6} {:>6}\n",
            t.iou_threshold, t.ap, t.tp, t.fp, t.fn_
        ));
    }
    out.push_str(&format!(
        "AP-50 {:.4}  AP-75 {:.4}  mean {:.4}  ({} gt, {} pred)\n",
        r.ap50, r.ap75, r.mean, r.num_gt, r.num_pred
    ));
    out
}

fn cmd_eval(_ctx: &Ctx, a: &EvalArgs) -> anyhow::Result<()> {
    let mut cfg: EvalConfig = load_or_default(a.config.as_deref())?;
    if let Some(t) = &a.thresholds {
        cfg.thresholds = t.clone();
    }
    let gt: LabelVolume = read_typed(&a.gt)?;
    let pred: LabelVolume = read_typed(&a.pred)?;
    let roi: Option<RoiMask> = a.roi.as_ref().map(read_typed).transpose()?;
    if let Some(roi) = &roi {
        crate::volume::check_roi(roi)?;
    }
    let distance: Option<ProbVolume> = a.distance.as_ref().map(read_typed).transpose()?;
    let r = average_precision(&gt, &pred, roi.as_ref(), distance.as_ref(), &cfg.thresholds)?;
    print!("{}", format_table(&r));
    let report = json!({ "report": r, "config": cfg });
    match &a.report {
        Some(p) => write_json(&report, p)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn voxel_size_of(labels: &LabelVolume, o: &Option<Vec<f64>>) -> anyhow::Result<VoxelSize> {
    match o {
        Some(v) if v.len() == 3 => {
            let s = VoxelSize([v[0], v[1], v[2]]);
            if !s.is_valid() {
                bail!("voxel size must be positive, got {v:?}");
            }
            Ok(s)
        }
        Some(v) => bail!("voxel size needs 3 values, got {}", v.len()),
        None => Ok(labels.voxel_size()),
    }
}

fn cmd_stats(_ctx: &Ctx, which: &StatsCommand) -> anyhow::Result<()> {
    match which {
        StatsCommand::Sizes(a) | StatsCommand::Nn(a) => {
            let labels: LabelVolume = read_typed(&a.labels)?;
            let bins = Bins::Count(a.bins);
            let (kind, hist) = if matches!(which, StatsCommand::Sizes(_)) {
                ("sizes", stats::size_distribution(&labels, &bins, a.normalized)?)
            } else {
                let vs = voxel_size_of(&labels, &a.voxel_size)?;
                ("nn", stats::nn_center_distance(&labels, vs, &bins, a.normalized)?)
            };
            if let Some(csv) = &a.csv {
                fs::write(csv, hist.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
            }
            let report = json!({
                "statistic": kind,
                "instances": hist.total(),
                "histogram": hist,
                "config": { "bins": a.bins, "normalized": a.normalized, "voxel_size": a.voxel_size },
            });
            match &a.report {
                Some(p) => write_json(&report, p)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        StatsCommand::Kl(a) => {
            let image = read_volume(&a.image)?;
            let labels: LabelVolume = read_typed(&a.labels)?;
            let roi: Option<RoiMask> = a.roi.as_ref().map(read_typed).transpose()?;
            let kl = stats::intensity_kl(&image, &labels, roi.as_ref(), a.bins)?;
            let report = json!({
                "statistic": "kl",
                "kl_divergence": kl,
                "config": { "bins": a.bins, "epsilon": stats::KL_EPSILON },
            });
            match &a.report {
                Some(p) => write_json(&report, p)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> anyhow::Result<()> {
    let base = resolve_decode_params(a.params.as_deref(), [None; 5], None)?;
    let pred = a.triple.load()?;
    let gt: LabelVolume = read_typed(&a.gt)?;
    let roi: Option<RoiMask> = a.roi.as_ref().map(read_typed).transpose()?;
    let rows = run_sweep(&pred, &gt, roi.as_ref(), &base, a.param, &a.range.0)?;
    for r in &rows {
        ctx.log(format!("{} = {}: AP-50 {:.4}", r.param, r.value, r.ap50));
    }
    fs::write(&a.out, sweep::to_csv(&rows)).with_context(|| format!("writing {}", a.out.display()))?;
    let report = json!({
        "param": a.param,
        "values": a.range.0,
        "ap50_spread": sweep::ap50_spread(&rows),
        "rows": rows,
        "base_params": base,
    });
    emit(&report, a.report.as_deref())?;
    println!("sweep: {} rows -> {}", rows.len(), a.out.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Ctx { verbose: cli.verbose };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Targets(a) => cmd_targets(&ctx, a),
        Command::Decode(a) => cmd_decode(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Stats { which } => cmd_stats(&ctx, which),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
    }
}

/// Parses `argv`, runs the pipeline and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
