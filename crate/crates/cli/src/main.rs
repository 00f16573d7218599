use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use c3dgs::codec::{self, Level};
use c3dgs::dataset::{load_frames, load_scene, save_scene, CAMERAS_FILE};
use c3dgs::error::{Error, Result};
use c3dgs::report::{eval_report, measure_fps, storage_table_for};
use c3dgs::scene::FrameSample;
use c3dgs::toy::{make_toy_scene, ToySpec};
use c3dgs::train::{render_settings, train, SceneMode, TrainConfig};

#[derive(Parser)]
#[command(name = "c3dgs", version, about = "Compact Gaussian splatting: train, render, evaluate and compress")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Training configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "static")]
        mode: String,
        /// Toy specification (JSON); overrides the mode defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a scene directory.
    Train {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "static")]
        mode: String,
        /// Camera file replacing the scene's own.
        #[arg(long)]
        cameras: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a model for every camera of a camera file.
    Render {
        model: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Report PSNR, SSIM, size and frame rate of a model.
    Eval {
        model: PathBuf,
        /// Scene directory whose cameras and images are the references.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Writes the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Timed renders for the frame rate; 0 skips timing.
        #[arg(long, default_value_t = 0)]
        fps_renders: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Re-encode a model container at a compression level.
    Compress {
        model: PathBuf,
        #[arg(long, default_value = "ours_pp")]
        level: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a container into a lossless model container.
    Decompress {
        container: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-attribute storage breakdown of a container.
    Stats {
        container: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(p) => serde_json::from_slice(&read(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn reference_frames(scene: Option<&Path>, cameras: Option<&Path>) -> Result<Vec<FrameSample>> {
    match (cameras, scene) {
        (Some(c), _) => load_frames(c),
        (None, Some(s)) => load_frames(&s.join(CAMERAS_FILE)),
        (None, None) => Err(Error::InvalidArgument("eval needs --scene or --cameras".into())),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakeToy { out, mode, config, seed } => {
            let mut spec = match &config {
                Some(p) => serde_json::from_slice(&read(p)?)?,
                None => match SceneMode::parse(&mode)? {
                    SceneMode::Static => ToySpec::static_default(),
                    SceneMode::Dynamic => ToySpec::dynamic_default(),
                },
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let toy = make_toy_scene(&spec)?;
            save_scene(&out, &toy.frames, &toy.init)?;
            write(&out.join("ground_truth.c3gs"), &codec::encode(&toy.ground_truth, Level::Raw)?)?;
            println!("{}", serde_json::json!({"frames": toy.frames.len(), "points": toy.init.positions.len(), "out": out}));
        }
        Command::Train {
            scene,
            out,
            mode,
            cameras,
            common,
        } => {
            let cfg = load_config(&common)?;
            let mode = SceneMode::parse(&mode)?;
            let (mut frames, init) = load_scene(&scene)?;
            if let Some(c) = &cameras {
                frames = load_frames(c)?;
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let log_path = out.join("train_log.jsonl");
            let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            let mut sink = BufWriter::new(file);
            let result = train(&frames, &init, mode, &cfg, Some(&mut sink))?;
            drop(sink);
            write(&out.join("model.c3gs"), &codec::encode(&result.model, Level::Raw)?)?;
            write(&out.join("config.json"), &serde_json::to_vec_pretty(&cfg)?)?;
            let metrics = serde_json::to_vec_pretty(&result.metrics)?;
            write(&out.join("metrics.json"), &metrics)?;
            println!("{}", String::from_utf8_lossy(&metrics));
        }
        Command::Render {
            model,
            cameras,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let model = codec::decode(&read(&model)?)?;
            let settings = render_settings(&cfg);
            let records = c3dgs::scene::load_cameras(&cameras)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for (i, r) in records.iter().enumerate() {
                let img = model.render(&r.camera()?, r.t, &settings).clamped();
                img.save_png(&out.join(format!("{i:04}.png")))?;
            }
            println!("{}", serde_json::json!({"rendered": records.len(), "out": out}));
        }
        Command::Eval {
            model,
            scene,
            cameras,
            out,
            fps_renders,
            common,
        } => {
            let cfg = load_config(&common)?;
            let bytes = read(&model)?;
            let m = codec::decode(&bytes)?;
            let frames = reference_frames(scene.as_deref(), cameras.as_deref())?;
            let settings = render_settings(&cfg);
            let mut report = eval_report(&m, &frames, &settings);
            report.storage = Some(codec::container_stats(&bytes)?);
            if fps_renders > 0 {
                if let Some(f) = frames.first() {
                    report.fps = Some(measure_fps(&m, &f.camera, f.time, &settings, 10, fps_renders.max(100))?);
                }
            }
            let text = serde_json::to_vec_pretty(&report)?;
            if let Some(p) = &out {
                write(p, &text)?;
            }
            println!("{}", String::from_utf8_lossy(&text));
        }
        Command::Compress { model, level, out } => {
            let level = Level::parse(&level)?;
            let m = codec::decode(&read(&model)?)?;
            let bytes = codec::encode(&m, level)?;
            write(&out, &bytes)?;
            println!("{}", serde_json::json!({"level": level.name(), "bytes": bytes.len(), "out": out}));
        }
        Command::Decompress { container, out } => {
            let m = codec::decode(&read(&container)?)?;
            let bytes = codec::encode(&m, Level::Raw)?;
            write(&out, &bytes)?;
            println!("{}", serde_json::json!({"bytes": bytes.len(), "out": out}));
        }
        Command::Stats { container, json } => {
            let table = storage_table_for(&read(&container)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.render_text());
            }
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({"error": kind, "message": message}));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return fail("usage", e.to_string().trim_end().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
