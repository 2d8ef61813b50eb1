use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use arro::backend::{Backends, BuiltinConfig, RemoteBackend};
use arro::codec::{read_png, write_png};
use arro::dataset::transform_dataset;
use arro::eval::{evaluate_dirs, latency_report, write_plots};
use arro::init::{initialize_session, InitOptions, TaskSpec};
use arro::recompose::RecomposeConfig;
use arro::service::{serve, Limits};
use arro::synth::{generate, SynthBackground, SynthSceneConfig};
use arro::{Error, Result};

#[derive(Parser)]
#[command(name = "arro", version, about = "Task-focused visual transform for robot camera streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct BackendArgs {
    /// `builtin`, `remote` (URL from ARRO_BACKEND_URL), or a gateway URL.
    #[arg(long, default_value = "builtin")]
    backend: String,
    /// Color classes and annotator rules for the builtin backend.
    #[arg(long)]
    builtin_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize on one frame and dump what was selected.
    Init {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the numbered proposal image; defaults to OUT with a .png extension.
        #[arg(long)]
        annotated: Option<PathBuf>,
    },
    /// Recompose every episode of a dataset, once per recompose config.
    Transform {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        task: PathBuf,
        /// Repeat for several variants; black background when omitted.
        #[arg(long)]
        recompose: Vec<PathBuf>,
        /// Dilation radius applied to every variant.
        #[arg(long)]
        dilate: Option<u32>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write the transform report (with latency samples) here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run the streaming service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        limits: Option<PathBuf>,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Generate synthetic episodes with ground truth.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of episodes; each gets its own id and clutter seed.
        #[arg(long, default_value_t = 1)]
        episodes: u32,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
        /// JSON array of per-frame milliseconds, or a transform report.
        #[arg(long)]
        latency: Option<PathBuf>,
    },
}

fn backends(args: &BackendArgs) -> Result<Backends> {
    let url = match args.backend.as_str() {
        "builtin" => {
            let cfg = match &args.builtin_config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => BuiltinConfig::default(),
            };
            return Backends::builtin(&cfg);
        }
        "remote" => std::env::var("ARRO_BACKEND_URL")
            .map_err(|_| Error::Config("--backend remote needs ARRO_BACKEND_URL".into()))?,
        u if u.starts_with("http://") || u.starts_with("https://") => u.to_string(),
        other => return Err(Error::Config(format!("unknown backend {other:?}"))),
    };
    Ok(Backends::remote(RemoteBackend::new(url)))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init { frame, task, backend, out, annotated } => {
            let spec = TaskSpec::from_file(&task)?;
            let b = backends(&backend)?;
            let f = read_png(&frame)?;
            let mut init = initialize_session(&f, &spec, &b, InitOptions::default())?;
            let entities: Vec<_> = init
                .entities
                .iter()
                .zip(&init.first_masks)
                .enumerate()
                .map(|(i, (e, m))| {
                    let seed = match &e.seed {
                        arro::backend::Seed::Box(b) => json!({ "box": b }),
                        arro::backend::Seed::Points(p) => json!({ "points": p }),
                    };
                    json!({ "id": i, "role": e.role.as_str(), "prompt": e.prompt, "seed": seed, "first_mask_area": m.area() })
                })
                .collect();
            let anchors: Vec<_> = init
                .annotated
                .iter()
                .flat_map(|a| a.anchors.iter().map(|(i, k)| json!({ "label": i, "x": k.x, "y": k.y })))
                .collect();
            let backends: std::collections::BTreeMap<_, _> = b.identifiers().into_iter().collect();
            write_json(
                &out,
                &json!({
                    "task": spec,
                    "backends": backends,
                    "boxes": init.boxes.iter().map(|(p, b)| json!({ "prompt": p, "box": b })).collect::<Vec<_>>(),
                    "keypoints": init.keypoints,
                    "anchors": anchors,
                    "entities": entities,
                }),
            )?;
            if let Some(af) = &init.annotated {
                write_png(&annotated.unwrap_or_else(|| out.with_extension("png")), &af.frame)?;
            }
            init.handle.close()?;
            println!("{} entities", init.entities.len());
        }
        Command::Transform { dataset, task, recompose, dilate, parallel, out, report, backend } => {
            let spec = TaskSpec::from_file(&task)?;
            let mut cfgs: Vec<RecomposeConfig> = if recompose.is_empty() {
                vec![RecomposeConfig::default()]
            } else {
                recompose.iter().map(|p| read_json(p)).collect::<Result<_>>()?
            };
            if let Some(d) = dilate {
                cfgs.iter_mut().for_each(|c| c.dilate = d);
            }
            let b = backends(&backend)?;
            let r = transform_dataset(&dataset, &out, &spec, &cfgs, &b, parallel)?;
            if let Some(p) = report {
                write_json(&p, &r)?;
            }
            for res in r.results.iter().filter(|r| !r.ok) {
                eprintln!(
                    "failed {}/{}: {}",
                    res.variant,
                    res.episode,
                    res.error.as_deref().unwrap_or("unknown error")
                );
            }
            println!("processed {} failed {} of {}", r.processed, r.failed, r.requested);
            if r.failed > 0 {
                return Err(Error::Input(format!("{} of {} episode variants failed", r.failed, r.requested)));
            }
        }
        Command::Serve { bind, backend, limits, max_sessions } => {
            let mut l = match limits {
                Some(p) => Limits::from_file(&p)?,
                None => Limits::default(),
            };
            if let Some(n) = max_sessions {
                l.max_sessions = n;
            }
            let b = backends(&backend)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("runtime: {e}")))?;
            rt.block_on(serve(bind, b, l))?;
        }
        Command::Synth { config, out, episodes } => {
            let base = SynthSceneConfig::from_file(&config)?;
            for k in 0..episodes {
                let mut cfg = base.clone();
                if episodes > 1 {
                    cfg.episode_id = format!("{}-{k:03}", base.episode_id);
                    if let SynthBackground::Clutter { seed, .. } = &mut cfg.background {
                        *seed = seed.wrapping_add(k as u64);
                    }
                }
                let ep = generate(&cfg)?;
                ep.write(&out.join(&cfg.episode_id))?;
            }
            println!("wrote {episodes} episode(s) to {}", out.display());
        }
        Command::Eval { pred, truth, out, plots, latency } => {
            let samples: Option<Vec<f64>> = match &latency {
                Some(p) => {
                    let v: serde_json::Value = read_json(p)?;
                    let arr = v.get("latency_samples_ms").cloned().unwrap_or(v);
                    Some(serde_json::from_value(arr).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            let lat = samples.as_deref().map(latency_report).transpose()?;
            let report = evaluate_dirs(&pred, &truth, lat)?;
            std::fs::write(&out, report.to_json() + "\n").map_err(|e| Error::Input(format!("{}: {e}", out.display())))?;
            if let Some(dir) = plots {
                write_plots(&report, samples.as_deref(), &dir)?;
            }
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
