mod draw;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::{json, Value};

use cpw_stitch::features::io::correspondences_to_json;
use cpw_stitch::features::load_correspondences;
use cpw_stitch::imaging::{load_image, load_mask, save_image, save_mask, Mask};
use cpw_stitch::metrics::rmse_ncc;
use cpw_stitch::pipeline::{extract_correspondences, stitch, StitchConfig};
use cpw_stitch::{Error, Stage, StitchError};

#[derive(Parser)]
#[command(name = "cpw-stitch", version, about = "Stitch an image pair with a content-preserving mesh warp")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch SOURCE onto TARGET and write the panorama.
    Stitch(StitchArgs),
    /// Score two aligned images with the windowed 1 - NCC metric.
    Eval(EvalArgs),
    /// Detect and match point and line features, write them as JSON.
    Features(FeatureArgs),
}

#[derive(Args)]
struct Overrides {
    /// Flat JSON file with configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh size: N for N×N quads, or ROWSxCOLS.
    #[arg(long, value_parser = parse_mesh)]
    mesh: Option<(usize, usize)>,
    /// alpha,beta,gamma,delta,eta,lambda
    #[arg(long, value_parser = parse_weights)]
    weights: Option<[f64; 6]>,
}

/// One `--kebab-case` flag per configuration field.
fn with_config_flags(cmd: clap::Command) -> clap::Command {
    StitchConfig::keys().into_iter().fold(cmd, |cmd, key| {
        cmd.arg(
            Arg::new(key.clone())
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .help_heading("Configuration")
                .help(format!("Overrides `{key}`")),
        )
    })
}

/// Explicit configuration flags as a JSON object, numbers and booleans parsed.
fn config_flags(m: &ArgMatches) -> serde_json::Map<String, Value> {
    StitchConfig::keys()
        .into_iter()
        .filter_map(|key| {
            let text = m.get_one::<String>(&key)?;
            let value = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.clone()));
            Some((key, value))
        })
        .collect()
}

#[derive(Args)]
struct StitchArgs {
    source: PathBuf,
    target: PathBuf,
    #[arg(short, long, default_value = "panorama.png")]
    out: PathBuf,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Use these correspondences instead of the built-in detectors.
    #[arg(long)]
    correspondences: Option<PathBuf>,
    /// Mesh-warped source on the panorama canvas.
    #[arg(long)]
    warped: Option<PathBuf>,
    /// Panorama validity mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    mask_a: Option<PathBuf>,
    #[arg(long)]
    mask_b: Option<PathBuf>,
    /// Also write the metric JSON here.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct FeatureArgs {
    source: PathBuf,
    target: PathBuf,
    #[arg(short, long, default_value = "correspondences.json")]
    out: PathBuf,
    /// Side-by-side drawing of the matches.
    #[arg(long)]
    viz: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn parse_mesh(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    match s.split_once(['x', 'X']) {
        Some((r, c)) => Ok((parse(r)?, parse(c)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn parse_weights(s: &str) -> Result<[f64; 6], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("expected 6 comma-separated weights, got {}", v.len()))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Stage(StitchError),
}

impl From<StitchError> for Failure {
    fn from(e: StitchError) -> Self {
        Failure::Stage(e)
    }
}

fn input(e: Error) -> Failure {
    Failure::Stage(StitchError::new(Stage::Input, e))
}

/// Defaults, then the config file, then flags. Explicit field flags win over
/// the `--mesh` and `--weights` shorthands.
fn resolve(o: &Overrides, explicit: &serde_json::Map<String, Value>) -> Result<StitchConfig, Failure> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            StitchConfig::from_json_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => StitchConfig::default(),
    };
    let mut flags = serde_json::Map::new();
    if let Some((r, c)) = o.mesh {
        flags.insert("mesh_rows".into(), json!(r));
        flags.insert("mesh_cols".into(), json!(c));
    }
    if let Some(w) = o.weights {
        for (name, v) in ["alpha", "beta", "gamma", "delta", "eta", "lambda"].iter().zip(w) {
            flags.insert((*name).into(), json!(v));
        }
    }
    flags.extend(explicit.clone());
    cfg = cfg.merge_json(&Value::Object(flags)).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Files written next to their destination and renamed once everything has
/// been produced, so a failure leaves no partial outputs.
struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn path_for(&mut self, dest: &Path) -> PathBuf {
        let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = dest.with_file_name(format!(".partial-{}-{name}", std::process::id()));
        // Keep the extension so image encoders pick the right format.
        let tmp = match dest.extension() {
            Some(ext) => tmp.with_extension(ext),
            None => tmp,
        };
        self.files.push((tmp.clone(), dest.to_path_buf()));
        tmp
    }

    fn write_text(&mut self, dest: &Path, text: &str) -> Result<(), Failure> {
        let tmp = self.path_for(dest);
        fs::write(&tmp, text).map_err(|source| input(Error::Io { path: dest.to_path_buf(), source }))
    }

    fn commit(mut self) -> Result<(), Failure> {
        for (tmp, dest) in std::mem::take(&mut self.files) {
            fs::rename(&tmp, &dest).map_err(|source| input(Error::Io { path: dest, source }))?;
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = fs::remove_file(tmp);
        }
    }
}

fn cmd_stitch(flags: &serde_json::Map<String, Value>, args: &StitchArgs) -> Result<(), Failure> {
    let cfg = resolve(&args.overrides, flags)?;
    let source = load_image(&args.source).map_err(input)?;
    let target = load_image(&args.target).map_err(input)?;
    let corr = match &args.correspondences {
        Some(p) => Some(load_correspondences(p).map_err(input)?),
        None => None,
    };
    let report = stitch(&source, &target, corr.as_ref(), &cfg)?;

    let mut staged = Staged::new();
    let tmp = staged.path_for(&args.out);
    save_image(&report.panorama, &tmp).map_err(input)?;
    if let Some(p) = &args.warped {
        let tmp = staged.path_for(p);
        save_image(&report.warped_source, &tmp).map_err(input)?;
    }
    if let Some(p) = &args.mask {
        let tmp = staged.path_for(p);
        save_mask(&report.panorama_mask, &tmp).map_err(input)?;
    }
    if let Some(p) = &args.report {
        let mut value = serde_json::to_value(&report).expect("report serializes");
        let path_of = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        value["outputs"] = json!({
            "panorama": args.out.display().to_string(),
            "warped": path_of(&args.warped),
            "mask": path_of(&args.mask),
        });
        staged.write_text(p, &(serde_json::to_string_pretty(&value).expect("report serializes") + "\n"))?;
    }
    staged.commit()?;
    println!(
        "rmse_ncc {:.4} (global only {:.4}), {} point and {} line inliers",
        report.final_metric.rmse_ncc, report.global_metric.rmse_ncc, report.point_inliers, report.line_inliers
    );
    Ok(())
}

fn cmd_eval(flags: &serde_json::Map<String, Value>, args: &EvalArgs) -> Result<(), Failure> {
    let cfg = resolve(&args.overrides, flags)?;
    let a = load_image(&args.a).map_err(input)?;
    let b = load_image(&args.b).map_err(input)?;
    let mask = |p: &Option<PathBuf>, w: usize, h: usize| match p {
        Some(p) => load_mask(p).map_err(input),
        None => Ok(Mask::filled(w, h, true)),
    };
    let am = mask(&args.mask_a, a.width(), a.height())?;
    let bm = mask(&args.mask_b, b.width(), b.height())?;
    let report = rmse_ncc(&a, &am, &b, &bm, &cfg.metric).map_err(|e| StitchError::new(Stage::Overlap, e))?;
    let text = serde_json::to_string_pretty(&report).expect("metric serializes");
    println!("{text}");
    if let Some(p) = &args.out {
        let mut staged = Staged::new();
        staged.write_text(p, &(text + "\n"))?;
        staged.commit()?;
    }
    Ok(())
}

fn cmd_features(flags: &serde_json::Map<String, Value>, args: &FeatureArgs) -> Result<(), Failure> {
    let cfg = resolve(&args.overrides, flags)?;
    let source = load_image(&args.source).map_err(input)?;
    let target = load_image(&args.target).map_err(input)?;
    let corr = extract_correspondences(&source, &target, &cfg);
    let mut staged = Staged::new();
    staged.write_text(&args.out, &(correspondences_to_json(&corr) + "\n"))?;
    if let Some(p) = &args.viz {
        let tmp = staged.path_for(p);
        save_image(&draw::matches(&source, &target, &corr), &tmp).map_err(input)?;
    }
    staged.commit()?;
    println!(
        "{} point matches, {} matched lines, {} unmatched lines",
        corr.points.len(),
        corr.matched_lines.len(),
        corr.unmatched_lines.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let mut cmd = Cli::command();
    for sub in ["stitch", "eval", "features"] {
        cmd = cmd.mut_subcommand(sub, with_config_flags);
    }
    let matches = cmd.get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let flags = matches.subcommand().map(|(_, m)| config_flags(m)).unwrap_or_default();
    let result = match &cli.command {
        Command::Stitch(a) => cmd_stitch(&flags, a),
        Command::Eval(a) => cmd_eval(&flags, a),
        Command::Features(a) => cmd_features(&flags, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
