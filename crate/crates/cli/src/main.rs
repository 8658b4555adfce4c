use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde_json::Value;

use texfit_cli::commands::{self, exit_code, ExportKind};
use texfit_cli::config::{
    resolve, split_overrides, to_json_pretty, BenchSettings, FitSettings, SynthSettings,
};

/// Texture-consistency supervised body fitting on synthetic scenes.
///
/// Any other `--key value` flag overrides one setting of the command's run
/// configuration by its dotted path (e.g. `--weights.texture 0`,
/// `--fit.max_iters 50`, `--seeds 3`).
#[derive(Parser)]
#[command(name = "texfit", version)]
struct Cli {
    /// Worker threads for the data-parallel loops (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["monocular", "multiview"])]
        mode: Option<String>,
        /// Number of views (same as --frames).
        #[arg(long, conflicts_with = "frames")]
        views: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the body model to a scene; writes results.json and trace.jsonl.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score fitted parameters against the scene's ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Metrics JSON file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write meshes (OBJ), extracted textures (CSV + preview) or overlays.
    Export {
        #[arg(long, value_enum)]
        what: ExportKind,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize, fit with and without texture and mesh terms, evaluate,
    /// and write a comparison report.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved run configuration of a command without running it.
    Config {
        #[arg(value_parser = ["synth", "fit", "bench"])]
        command: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn configure_threads(threads: usize) -> anyhow::Result<()> {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli, mut overrides: Vec<(String, Value)>) -> anyhow::Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Synth {
            config,
            out,
            mode,
            views,
            frames,
            seed,
        } => {
            let mut shortcuts = Vec::new();
            if let Some(m) = mode {
                shortcuts.push(("scene.mode".to_string(), Value::String(m)));
            }
            if let Some(n) = views.or(frames) {
                shortcuts.push(("scene.frames".to_string(), n.into()));
            }
            if let Some(s) = seed {
                shortcuts.push(("scene.seed".to_string(), s.into()));
            }
            shortcuts.append(&mut overrides);
            let cfg = resolve::<SynthSettings>("synth", config.as_deref(), &shortcuts)?;
            let scene = commands::synth(&cfg, &out)?;
            println!("wrote {} frames to {}", scene.frames.len(), out.display());
        }
        Command::Fit { config, scene, out } => {
            let cfg = resolve::<FitSettings>("fit", config.as_deref(), &overrides)?;
            let r = commands::fit(&cfg, &scene, &out)?;
            println!(
                "{:?} after {} iterations, loss {:.6e}; wrote {}",
                r.status,
                r.iterations,
                r.report.total,
                out.display()
            );
        }
        Command::Eval {
            results,
            scene,
            out,
        } => {
            no_overrides(&overrides)?;
            let m = commands::eval(&results, &scene, &out)?;
            println!(
                "mpjpe {:.6} nmpjpe {:.6} rec_error {:.6} silhouette acc {:.4} f1 {:.4}",
                m.mean_pose.mpjpe,
                m.mean_pose.nmpjpe,
                m.mean_pose.rec_error,
                m.mean_silhouette.accuracy,
                m.mean_silhouette.f1
            );
        }
        Command::Export {
            what,
            results,
            scene,
            out,
        } => {
            no_overrides(&overrides)?;
            let files = commands::export(what, &results, &scene, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Bench { config, out } => {
            let cfg = resolve::<BenchSettings>("bench", config.as_deref(), &overrides)?;
            let c = commands::bench(&cfg, &out)?;
            for v in &c.variants {
                println!(
                    "{:<10} median rec_error {:.6} median disagreement {:.6}",
                    v.name, v.median_rec_error, v.median_disagreement
                );
            }
            println!(
                "texture: improvement {:.1}% ({})",
                100.0 * c.texture.improvement,
                if c.texture.pass { "PASS" } else { "FAIL" }
            );
            println!(
                "mesh: disagreement reduction {:.1}%, rec_error change {:+.1}% ({})",
                100.0 * c.mesh.reduction,
                100.0 * c.mesh.rec_error_degradation,
                if c.mesh.pass { "PASS" } else { "FAIL" }
            );
        }
        Command::Config { command, config } => {
            let text = match command.as_str() {
                "synth" => to_json_pretty(&resolve::<SynthSettings>(
                    "synth",
                    config.as_deref(),
                    &overrides,
                )?),
                "fit" => to_json_pretty(&resolve::<FitSettings>(
                    "fit",
                    config.as_deref(),
                    &overrides,
                )?),
                _ => to_json_pretty(&resolve::<BenchSettings>(
                    "bench",
                    config.as_deref(),
                    &overrides,
                )?),
            };
            print!("{text}");
        }
    }
    Ok(())
}

fn no_overrides(overrides: &[(String, Value)]) -> anyhow::Result<()> {
    if let Some((k, _)) = overrides.first() {
        return Err(texfit::Error::ConfigOutOfRange(format!(
            "this command takes no setting overrides (--{k})"
        ))
        .into());
    }
    Ok(())
}

fn known_flags() -> Vec<String> {
    let root = Cli::command();
    let mut names: Vec<String> = ["help", "version"].map(String::from).to_vec();
    for cmd in std::iter::once(&root).chain(root.get_subcommands()) {
        names.extend(
            cmd.get_arguments()
                .filter_map(|a| a.get_long())
                .map(String::from),
        );
    }
    names
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect(), &known_flags()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
