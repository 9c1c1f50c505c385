use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use patchseg::eigenpatch::io::{save_basis_tiles, write_basis, Encoding};
use patchseg::grid::io;
use patchseg::harness::{
    bench_csv, cross_template, evaluate_labels, evaluate_mask, interior_seed, make_mosaic,
    make_region_mosaic, run_alpha_sweep, run_benchmark_gd_vs_svd, structure_only_suite, sweep_csv,
    InitContour, Metrics, MosaicSpec, TextureDescriptor, TextureSource,
};
use patchseg::segmenter::{model_error, segment_two_phase_observed, BasisSolver};
use patchseg::{
    segment_one_vs_all, GdConfig, ImageGrid, LabelMap, RegionMask, SegmentationConfig,
    SegmentationResult,
};

#[derive(Parser)]
#[command(
    name = "patchseg",
    version,
    about = "Texture segmentation by patch reconstruction and level sets"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-phase segmentation of an image or a synthetic mosaic.
    Segment(SegmentArgs),
    /// Render a two-texture mosaic and its ground truth.
    Mosaic(MosaicArgs),
    /// Compare gradient-flow bases with the dense eigen-solver.
    BenchBasis(BenchArgs),
    /// Error rate against alpha on the structure-only mosaics.
    AlphaSweep(SweepArgs),
    /// Multi-region segmentation, one target region against the rest.
    OneVsAll(OneVsAllArgs),
    /// Error rate of a two-phase mask against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SegParams {
    /// JSON file with segmentation settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the piecewise smooth preset (nu = 1).
    #[arg(long)]
    smooth: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long = "bases", short = 'k')]
    k: Option<usize>,
    /// Patch side.
    #[arg(long, short = 'm')]
    m: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Gd,
    Oracle,
}

#[derive(Args)]
struct SourceArgs {
    /// Grayscale input image.
    #[arg(long, conflicts_with_all = ["spec", "pair"])]
    image: Option<PathBuf>,
    /// Mosaic specification (JSON) to render as input.
    #[arg(long, conflicts_with = "pair")]
    spec: Option<PathBuf>,
    /// Index into the built-in structure-only mosaics (0-9).
    #[arg(long)]
    pair: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    params: SegParams,
    /// Initial region as a mask image.
    #[arg(long, conflicts_with_all = ["init_rect", "init_circle"])]
    init_mask: Option<PathBuf>,
    /// Initial box as fractions x0,y0,x1,y1.
    #[arg(long, value_delimiter = ',', conflicts_with = "init_circle")]
    init_rect: Option<Vec<f64>>,
    /// Initial disk as fractions cx,cy,r.
    #[arg(long, value_delimiter = ',')]
    init_circle: Option<Vec<f64>>,
    /// Ground-truth mask for metrics (mosaic inputs bring their own).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write a contour overlay every N steps.
    #[arg(long)]
    overlay_every: Option<usize>,
    /// Also write the final error fields and level set as heatmaps.
    #[arg(long)]
    dump_fields: bool,
    /// Run directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct MosaicArgs {
    #[arg(long, conflicts_with = "pair")]
    spec: Option<PathBuf>,
    #[arg(long)]
    pair: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Image files; without them seeded random images and built-in textures are used.
    #[arg(long, num_args = 1..)]
    images: Vec<PathBuf>,
    /// Number of random images when no files are given.
    #[arg(long, default_value_t = 10)]
    random: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, short = 'm', default_value_t = 7)]
    m: usize,
    #[arg(
        long = "bases",
        short = 'k',
        value_delimiter = ',',
        default_value = "1,2,4,8"
    )]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.5,0.7,0.9,1")]
    alphas: Vec<f64>,
    /// Subset of the built-in pairs; all ten by default.
    #[arg(long, value_delimiter = ',')]
    pairs: Vec<usize>,
    #[command(flatten)]
    params: SegParams,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct OneVsAllArgs {
    #[arg(long, requires = "init_mask")]
    image: Option<PathBuf>,
    /// One initial mask per region, in region-id order.
    #[arg(long)]
    init_mask: Vec<PathBuf>,
    /// Ground-truth mask per region, in the same order.
    #[arg(long)]
    truth_mask: Vec<PathBuf>,
    /// Use the built-in five-region cross mosaic with interior seeds.
    #[arg(long, conflicts_with = "image")]
    cross: bool,
    /// Half-side of the interior seed squares of the cross mosaic.
    #[arg(long, default_value_t = 12)]
    seed_radius: usize,
    #[command(flatten)]
    params: SegParams,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Lib(patchseg::Error),
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Lib(e) => e.kind(),
            CliError::Usage(_) => "usage",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<patchseg::Error> for CliError {
    fn from(e: patchseg::Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Settings file: segmentation fields plus an optional initial contour.
#[derive(Default, Serialize, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    segmentation: SegmentationConfig,
    #[serde(default)]
    init: Option<InitContour>,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_text(path, &(text + "\n"))
}

fn run_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| usage(format!("cannot create {}: {e}", path.display())))
}

fn load_config(params: &SegParams) -> CliResult<RunConfig> {
    let mut rc = match &params.config {
        Some(path) => serde_json::from_str::<RunConfig>(&read_text(path)?)
            .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    let c = &mut rc.segmentation;
    if params.smooth {
        c.nu = SegmentationConfig::smooth().nu;
    }
    if let Some(v) = params.alpha {
        c.alpha = v;
    }
    if let Some(v) = params.nu {
        c.nu = v;
    }
    if let Some(v) = params.k {
        c.k = v;
    }
    if let Some(v) = params.m {
        c.m = v;
    }
    if let Some(v) = params.sigma {
        c.sigma = v;
    }
    if let Some(v) = params.max_steps {
        c.max_steps = v;
    }
    if let Some(v) = params.seed {
        c.seed = v;
    }
    if let Some(s) = params.solver {
        c.solver = match s {
            SolverArg::Gd => BasisSolver::Gd,
            SolverArg::Oracle => BasisSolver::Oracle,
        };
    }
    c.validate()?;
    Ok(rc)
}

fn suite_pair(i: usize) -> CliResult<MosaicSpec> {
    let suite = structure_only_suite();
    let n = suite.len();
    suite
        .into_iter()
        .nth(i)
        .ok_or_else(|| usage(format!("pair {i} out of range 0..{n}")))
}

fn mosaic_spec(spec: &Option<PathBuf>, pair: Option<usize>) -> CliResult<Option<MosaicSpec>> {
    match (spec, pair) {
        (Some(path), _) => serde_json::from_str(&read_text(path)?)
            .map(Some)
            .map_err(|e| usage(format!("bad mosaic spec {}: {e}", path.display()))),
        (None, Some(i)) => suite_pair(i).map(Some),
        (None, None) => Ok(None),
    }
}

fn load_source(src: &SourceArgs) -> CliResult<(ImageGrid, Option<RegionMask>)> {
    if let Some(path) = &src.image {
        return Ok((io::load_image(path)?, None));
    }
    match mosaic_spec(&src.spec, src.pair)? {
        Some(spec) => {
            let (img, truth) = make_mosaic(&spec)?;
            Ok((img, Some(truth)))
        }
        None => Err(usage("one of --image, --spec or --pair is required")),
    }
}

fn metrics_json(metrics: Option<&Metrics>, res: &SegmentationResult) -> serde_json::Value {
    json!({
        "total_error": metrics.map(|m| m.error_rate),
        "error_rate_per_region": metrics.map(|m| m.error_rate_per_region.clone()),
        "steps": res.steps_used,
        "wall_time_per_iteration": res.wall_time_per_step(),
        "elapsed_seconds": res.elapsed_secs,
        "warnings": res.warnings,
    })
}

fn trace_csv(res: &SegmentationResult) -> String {
    let mut s = String::from("refresh,step,energy_before,energy_after,size_region0,size_region1\n");
    for (i, r) in res.refreshes.iter().enumerate() {
        let before = r
            .energy_before
            .map(|e| format!("{e:.10e}"))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{i},{},{before},{:.10e},{},{}",
            r.step, r.energy_after, r.region_sizes[0], r.region_sizes[1]
        );
    }
    s
}

fn write_models(out: &Path, res: &SegmentationResult) -> CliResult<()> {
    for (i, model) in res.models.iter().enumerate() {
        save_basis_tiles(&model.basis, out.join(format!("bases_region{i}.png")), 8)?;
        write_basis(
            out.join(format!("bases_region{i}.txt")),
            &model.basis,
            Encoding::Text,
        )?;
    }
    Ok(())
}

fn cmd_segment(a: &SegmentArgs) -> CliResult<serde_json::Value> {
    let rc = load_config(&a.params)?;
    let cfg = rc.segmentation;
    let (img, mosaic_truth) = load_source(&a.source)?;
    let (w, h) = img.dims();
    let init = if let Some(path) = &a.init_mask {
        io::load_mask(path)?
    } else if let Some(r) = &a.init_rect {
        if r.len() != 4 {
            return Err(usage("--init-rect takes x0,y0,x1,y1"));
        }
        InitContour::Rectangle {
            x0: r[0],
            y0: r[1],
            x1: r[2],
            y1: r[3],
        }
        .render(w, h)?
    } else if let Some(c) = &a.init_circle {
        if c.len() != 3 {
            return Err(usage("--init-circle takes cx,cy,r"));
        }
        InitContour::Circle {
            cx: c[0],
            cy: c[1],
            r: c[2],
        }
        .render(w, h)?
    } else {
        rc.init.unwrap_or_default().render(w, h)?
    };
    let truth = match &a.truth {
        Some(p) => Some(io::load_mask(p)?),
        None => mosaic_truth,
    };
    run_dir(&a.out)?;
    io::save_png(&img, a.out.join("input.png"))?;

    let mut overlay_err = None;
    let every = a.overlay_every.unwrap_or(0);
    let res = segment_two_phase_observed(&img, &init, &cfg, &mut |step, phi| {
        if every > 0 && step % every == 0 && overlay_err.is_none() {
            let path = a.out.join(format!("contour_step{step:04}.png"));
            if let Err(e) = io::save_contour_overlay(&img, phi, path) {
                overlay_err = Some(e);
            }
        }
    })?;
    if let Some(e) = overlay_err {
        return Err(e.into());
    }

    let metrics = truth
        .as_ref()
        .map(|t| evaluate_mask(&res.mask(), t))
        .transpose()?;
    io::save_labels(&res.labels, a.out.join("labels.png"))?;
    io::save_mask(&res.mask(), a.out.join("mask.png"))?;
    if let Some(phi) = &res.phi {
        io::save_contour_overlay(&img, phi, a.out.join("contour.png"))?;
        if a.dump_fields {
            io::save_heatmap(phi, a.out.join("phi.png"))?;
        }
    }
    if a.dump_fields {
        for (i, model) in res.models.iter().enumerate() {
            let field = model_error(&img, model, cfg.boundary)?;
            io::save_heatmap(&field, a.out.join(format!("error_region{i}.png")))?;
        }
    }
    write_models(&a.out, &res)?;
    write_text(&a.out.join("trace.csv"), &trace_csv(&res))?;
    write_json(&a.out.join("config.json"), &cfg)?;
    let summary = metrics_json(metrics.as_ref(), &res);
    write_json(&a.out.join("metrics.json"), &summary)?;
    Ok(summary)
}

fn cmd_mosaic(a: &MosaicArgs) -> CliResult<serde_json::Value> {
    let spec = mosaic_spec(&a.spec, a.pair)?
        .ok_or_else(|| usage("one of --spec or --pair is required"))?;
    let (img, truth) = make_mosaic(&spec)?;
    run_dir(&a.out)?;
    // zero-mean mosaics are stored around mid-grey
    let offset = if spec.zero_mean { 0.5 } else { 0.0 };
    io::save_png(&img.map(|v| v + offset), a.out.join("image.png"))?;
    io::save_pgm(&img.map(|v| v + offset), a.out.join("image.pgm"))?;
    io::save_mask(&truth, a.out.join("truth.png"))?;
    write_json(&a.out.join("spec.json"), &spec)?;
    Ok(json!({ "size": spec.size, "offset": offset }))
}

fn cmd_bench(a: &BenchArgs) -> CliResult<serde_json::Value> {
    let images: Vec<ImageGrid> = if a.images.is_empty() {
        let mut v: Vec<ImageGrid> = (0..a.random)
            .map(|i| random_image(a.size, a.seed.wrapping_add(i as u64)))
            .collect();
        let textures = [
            TextureDescriptor::sinusoid(30.0, 0.12),
            TextureDescriptor::checker(6.0),
            TextureDescriptor::bandpass(0.0, 0.2, 20.0, 1),
            TextureDescriptor::bandpass(60.0, 0.1, 40.0, 2),
            TextureDescriptor::bandpass(120.0, 0.3, 15.0, 3),
        ];
        for t in &textures {
            v.push(t.render(a.size, a.size)?);
        }
        v
    } else {
        a.images
            .iter()
            .map(io::load_image)
            .collect::<Result<_, _>>()?
    };
    let rows = run_benchmark_gd_vs_svd(&images, a.m, &a.k, &GdConfig::default())?;
    run_dir(&a.out)?;
    write_text(&a.out.join("report.csv"), &bench_csv(&rows))?;
    let max_gap = rows
        .iter()
        .map(|r| (r.gd_normalized - r.oracle_normalized).abs())
        .fold(0.0, f64::max);
    let min_ratio = rows
        .iter()
        .map(|r| r.gd_energy / r.oracle_energy)
        .fold(f64::INFINITY, f64::min);
    let summary = json!({
        "images": images.len(),
        "max_normalized_gap": max_gap,
        "min_energy_ratio": min_ratio,
        "gd_seconds_total": rows.iter().map(|r| r.gd_seconds).sum::<f64>(),
    });
    write_json(&a.out.join("metrics.json"), &summary)?;
    Ok(summary)
}

fn random_image(size: usize, seed: u64) -> ImageGrid {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ImageGrid::from_fn(size, size, |_, _| rng.random_range(0.0..1.0))
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<serde_json::Value> {
    let rc = load_config(&a.params)?;
    let suite = structure_only_suite();
    let specs: Vec<MosaicSpec> = if a.pairs.is_empty() {
        suite
    } else {
        a.pairs
            .iter()
            .map(|&i| suite_pair(i))
            .collect::<CliResult<_>>()?
    };
    let rows = run_alpha_sweep(
        &specs,
        &a.alphas,
        &rc.segmentation,
        &rc.init.unwrap_or_default(),
    )?;
    run_dir(&a.out)?;
    write_text(&a.out.join("report.csv"), &sweep_csv(&rows))?;
    let means: Vec<serde_json::Value> = a
        .alphas
        .iter()
        .map(|&alpha| {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.alpha == alpha)
                .map(|r| r.error_rate)
                .collect();
            json!({ "alpha": alpha, "mean_error": errs.iter().sum::<f64>() / errs.len() as f64 })
        })
        .collect();
    let summary = json!({ "pairs": specs.len(), "mean_error_by_alpha": means });
    write_json(&a.out.join("metrics.json"), &summary)?;
    Ok(summary)
}

fn cmd_one_vs_all(a: &OneVsAllArgs) -> CliResult<serde_json::Value> {
    let rc = load_config(&a.params)?;
    let (img, seeds, truth) = if a.cross {
        let s = TextureDescriptor::sinusoid;
        let b = TextureDescriptor::bandpass;
        let textures: Vec<TextureSource> = vec![
            b(0.0, 0.15, 15.0, 1).into(),
            b(90.0, 0.15, 15.0, 2).into(),
            TextureDescriptor::checker(8.0).into(),
            b(45.0, 0.2, 20.0, 10).into(),
            s(135.0, 0.1).into(),
        ];
        let layout = cross_template(128);
        let img = make_region_mosaic(&textures, &layout, true, 0.0, rc.segmentation.seed)?;
        let seeds = (0..5)
            .map(|i| interior_seed(&layout.region(i), a.seed_radius))
            .collect::<Result<Vec<_>, _>>()?;
        (img, seeds, Some(layout))
    } else {
        let path = a
            .image
            .as_ref()
            .ok_or_else(|| usage("--image or --cross is required"))?;
        let img = io::load_image(path)?;
        let seeds = a
            .init_mask
            .iter()
            .map(io::load_mask)
            .collect::<Result<Vec<_>, _>>()?;
        let truth = if a.truth_mask.is_empty() {
            None
        } else {
            if a.truth_mask.len() != seeds.len() {
                return Err(usage("need one --truth-mask per --init-mask"));
            }
            let masks = a
                .truth_mask
                .iter()
                .map(io::load_mask)
                .collect::<Result<Vec<_>, _>>()?;
            Some(labels_from_masks(&masks)?)
        };
        (img, seeds, truth)
    };
    let res = segment_one_vs_all(&img, &seeds, &rc.segmentation)?;
    let metrics = truth
        .as_ref()
        .map(|t| evaluate_labels(&res.labels, t))
        .transpose()?;
    run_dir(&a.out)?;
    io::save_png(
        &img.map(|v| v + if a.cross { 0.5 } else { 0.0 }),
        a.out.join("input.png"),
    )?;
    io::save_labels(&res.labels, a.out.join("labels.png"))?;
    write_models(&a.out, &res)?;
    let mut trace = String::from("index,energy\n");
    for (i, e) in res.energy_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{e:.10e}");
    }
    write_text(&a.out.join("trace.csv"), &trace)?;
    let summary = metrics_json(metrics.as_ref(), &res);
    write_json(&a.out.join("metrics.json"), &summary)?;
    Ok(summary)
}

fn labels_from_masks(masks: &[RegionMask]) -> CliResult<LabelMap> {
    let (w, h) = masks[0].dims();
    let mut labels = vec![u32::MAX; w * h];
    for (id, m) in masks.iter().enumerate() {
        if m.dims() != (w, h) {
            return Err(usage("truth masks differ in size"));
        }
        for (slot, &inside) in labels.iter_mut().zip(m.as_slice()) {
            if inside {
                if *slot != u32::MAX {
                    return Err(usage("truth masks overlap"));
                }
                *slot = id as u32;
            }
        }
    }
    if labels.contains(&u32::MAX) {
        return Err(usage("truth masks do not cover the image"));
    }
    Ok(LabelMap::new(w, h, labels)?)
}

fn cmd_eval(a: &EvalArgs) -> CliResult<serde_json::Value> {
    let labels = io::load_mask(&a.labels)?;
    let truth = io::load_mask(&a.truth)?;
    let m = evaluate_mask(&labels, &truth)?;
    let summary =
        json!({ "total_error": m.error_rate, "error_rate_per_region": m.error_rate_per_region });
    if let Some(out) = &a.out {
        run_dir(out)?;
        write_json(&out.join("metrics.json"), &summary)?;
    }
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Mosaic(a) => cmd_mosaic(a),
        Command::BenchBasis(a) => cmd_bench(a),
        Command::AlphaSweep(a) => cmd_sweep(a),
        Command::OneVsAll(a) => cmd_one_vs_all(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
            );
            ExitCode::FAILURE
        }
    }
}
