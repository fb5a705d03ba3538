//! The `uidiff` command line.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing::info;
use uidiff_core::eval::{evaluate_batch, read_jsonl, CompatibilityScorer, EvalRequest, EvalResult};
use uidiff_core::ingest::synth::{write_rico_dir, SynthConfig};
use uidiff_core::ingest::{
    build_training_set, load_manifest_records, load_rico_dir, DatasetConfig, PreprocessOptions,
    WireframeSource,
};
use uidiff_core::postprocess::{crop_components, generate_code};
use uidiff_core::wireframe::{render_wireframe, Palette};
use uidiff_core::{ComponentCondition, Layout, CANVAS_H, CANVAS_W};
use uidiff_models::layout_diffusion::{
    sample, tokenize_layouts, train_layout, LayoutDenoiser, LayoutModelConfig, LayoutTrainConfig,
    SampleConfig,
};
use uidiff_models::ui_diffusion::{
    finetune_control, generate_ui, pretrain_toy, FinetuneConfig, PretrainConfig, PretrainPhase,
    UiModel, UiModelConfig, DEFAULT_STEPS,
};
use uidiff_models::{DType, Device};
use uidiff_service::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "uidiff", version, about = "Layout-to-UI prototyping pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WireframeArg {
    Rerender,
    Shipped,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutProfile {
    /// 2 layers, width 64.
    Small,
    /// 4 layers, width 128.
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UiProfile {
    /// Every component trained from scratch at desk scale.
    Toy,
    /// Externally supplied base weights.
    Adapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CodeFormatArg {
    Xml,
    Html,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess a Rico-format directory into a training manifest.
    Ingest {
        #[arg(long)]
        rico: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "rerender")]
        wireframes: WireframeArg,
        #[arg(long, default_value_t = 0)]
        caption_seed: u64,
    },
    /// Write a synthetic Rico-format directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        portrait: usize,
        #[arg(long, default_value_t = 0)]
        landscape: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the layout denoiser on the layouts of a manifest.
    TrainLayout {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "small")]
        profile: LayoutProfile,
        #[arg(long, default_value = "layout.ckpt")]
        out: PathBuf,
    },
    /// Sample one layout.
    GenLayout {
        #[arg(long)]
        ckpt: PathBuf,
        /// e.g. "text button:2, toolbar:1"; omit for unconditional sampling.
        #[arg(long, default_value = "")]
        components: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reverse steps; every timestep by default.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "layout.json")]
        out: PathBuf,
        /// Also write the rendered wireframe here.
        #[arg(long)]
        wireframe: Option<PathBuf>,
        #[arg(long)]
        allow_untrained: bool,
    },
    /// Fine-tune the control branch. The toy profile pretrains its own base
    /// first unless `--base` is given.
    TrainUi {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "toy")]
        profile: UiProfile,
        /// Existing checkpoint whose base is reused.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Directory with config.json and model.safetensors (adapter profile).
        #[arg(long)]
        adapter: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        #[arg(long, default_value_t = 0.5)]
        prompt_dropout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exact step count, overriding `--epochs`.
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, default_value_t = 300)]
        pretrain_codec_steps: usize,
        #[arg(long, default_value_t = 300)]
        pretrain_denoiser_steps: usize,
        #[arg(long, default_value_t = 2e-3)]
        pretrain_lr: f64,
        #[arg(long, default_value = "ui.ckpt")]
        out: PathBuf,
        /// Also write the control parameters alone.
        #[arg(long)]
        control_out: Option<PathBuf>,
        /// Write the loss trace as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Generate a UI image for a layout.
    GenUi {
        #[arg(long)]
        ckpt: PathBuf,
        /// Control parameters to load over the checkpoint's own.
        #[arg(long)]
        control: Option<PathBuf>,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value = "ui.png")]
        out: PathBuf,
    },
    /// Cut every component out of a UI image.
    Crop {
        #[arg(long)]
        ui: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit XML or HTML for a layout.
    Codegen {
        #[arg(long)]
        layout: PathBuf,
        /// UI image supplying node colors.
        #[arg(long)]
        ui: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "html")]
        format: CodeFormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score results against requests.
    Eval {
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Compatibility scorer backend; "none" skips image scoring.
        #[arg(long, default_value = "mock")]
        scorer: String,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "UIDIFF_STORE", default_value = "./store")]
        store: PathBuf,
        #[arg(long)]
        layout_ckpt: Option<PathBuf>,
        #[arg(long)]
        ui_ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        queue: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Seconds a synchronous request waits before answering 202.
        #[arg(long, default_value_t = 120)]
        sync_timeout: u64,
    },
    /// Print the wireframe palette.
    Palette,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            rico,
            out,
            wireframes,
            caption_seed,
        } => ingest(&rico, &out, wireframes, caption_seed),
        Command::Synth {
            out,
            portrait,
            landscape,
            seed,
        } => {
            let cfg = SynthConfig {
                portrait,
                landscape,
                seed,
                ..SynthConfig::default()
            };
            let ids = write_rico_dir(&out, &cfg)?;
            info!(records = ids.len(), out = %out.display(), "wrote synthetic dataset");
            Ok(())
        }
        Command::TrainLayout {
            data,
            steps,
            batch,
            lr,
            seed,
            profile,
            out,
        } => {
            let cfg = match profile {
                LayoutProfile::Small => LayoutModelConfig::small(),
                LayoutProfile::Default => LayoutModelConfig::default(),
            };
            let train = LayoutTrainConfig {
                steps,
                batch_size: batch,
                learning_rate: lr,
                seed,
                ..LayoutTrainConfig::default()
            };
            train_layout_cmd(&data, cfg, &train, &out)
        }
        Command::GenLayout {
            ckpt,
            components,
            seed,
            steps,
            out,
            wireframe,
            allow_untrained,
        } => {
            let model = LayoutDenoiser::load(&ckpt, false, &Device::Cpu)?;
            let cond: Option<ComponentCondition> = if components.trim().is_empty() {
                None
            } else {
                Some(components.parse().context("invalid --components")?)
            };
            let cfg = SampleConfig {
                steps,
                allow_untrained,
                ..SampleConfig::default()
            };
            let layout = sample(&model, cond.as_ref(), seed, &cfg)?;
            write(&out, layout.to_json())?;
            if let Some(path) = wireframe {
                render_wireframe(&layout, &Palette::v1(), CANVAS_W, CANVAS_H)?
                    .save(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            info!(elements = layout.len(), out = %out.display(), "sampled layout");
            Ok(())
        }
        Command::TrainUi {
            data,
            profile,
            base,
            adapter,
            epochs,
            batch,
            lr,
            prompt_dropout,
            seed,
            max_steps,
            pretrain_codec_steps,
            pretrain_denoiser_steps,
            pretrain_lr,
            out,
            control_out,
            log,
        } => {
            let finetune = FinetuneConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                prompt_dropout,
                seed,
                max_steps,
                ..FinetuneConfig::default()
            };
            let pretrain = PretrainConfig {
                codec_steps: pretrain_codec_steps,
                denoiser_steps: pretrain_denoiser_steps,
                batch_size: batch,
                learning_rate: pretrain_lr,
                prompt_dropout,
                seed,
            };
            let opts = TrainUiOptions {
                profile,
                base,
                adapter,
                finetune,
                pretrain,
                control_out,
                log,
            };
            train_ui_cmd(&data, &opts, &out)
        }
        Command::GenUi {
            ckpt,
            control,
            prompt,
            layout,
            seed,
            steps,
            out,
        } => {
            let mut model = UiModel::load(&ckpt, &Device::Cpu)?;
            if let Some(c) = control {
                model.load_control(&c)?;
            }
            let layout = read_layout(&layout)?;
            let start = Instant::now();
            let img = generate_ui(&model, &prompt, &layout, seed, steps)?;
            img.save(&out).with_context(|| format!("writing {}", out.display()))?;
            info!(ms = start.elapsed().as_millis() as u64, out = %out.display(), "generated UI");
            Ok(())
        }
        Command::Crop { ui, layout, out } => {
            let ui = read_image(&ui)?;
            let layout = read_layout(&layout)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let crops = crop_components(&ui, &layout)?;
            let mut meta = Vec::with_capacity(crops.len());
            for c in &crops {
                let path = out.join(format!("{:02}_{}.png", c.index, c.category.name().replace(' ', "_")));
                c.image.save(&path).with_context(|| format!("writing {}", path.display()))?;
                meta.push(c.metadata_json());
            }
            write(&out.join("crops.json"), serde_json::to_string_pretty(&meta)?)?;
            info!(crops = crops.len(), out = %out.display(), "cropped components");
            Ok(())
        }
        Command::Codegen {
            layout,
            ui,
            format,
            out,
        } => {
            let layout = read_layout(&layout)?;
            let ui = ui.as_deref().map(read_image).transpose()?;
            let code = generate_code(&layout, ui.as_ref())?;
            write(
                &out,
                match format {
                    CodeFormatArg::Xml => code.xml,
                    CodeFormatArg::Html => code.html,
                },
            )
        }
        Command::Eval {
            requests,
            results,
            out,
            scorer,
        } => {
            let reqs: Vec<EvalRequest> = read_jsonl(&requests)?;
            let res: Vec<EvalResult> = read_jsonl(&results)?;
            let scorer = match scorer.as_str() {
                "none" => None,
                name => Some(CompatibilityScorer::from_name(name)?),
            };
            let root = results.parent().unwrap_or(Path::new("."));
            let report = evaluate_batch(&reqs, &res, scorer.as_ref(), root)?;
            write(&out, report.to_json())?;
            println!("{}", report.to_table());
            Ok(())
        }
        Command::Serve {
            port,
            host,
            store,
            layout_ckpt,
            ui_ckpt,
            queue,
            workers,
            sync_timeout,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad address {host}:{port}"))?;
            let cfg = ServiceConfig {
                store_root: store,
                layout_ckpt,
                ui_ckpt,
                queue_capacity: queue,
                workers,
                sync_timeout: Duration::from_secs(sync_timeout),
            };
            tokio::runtime::Runtime::new()?.block_on(uidiff_service::serve(cfg, addr))?;
            Ok(())
        }
        Command::Palette => {
            println!("{}", Palette::v1().to_json());
            Ok(())
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_layout(path: &Path) -> Result<Layout> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Layout::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_image(path: &Path) -> Result<image::RgbImage> {
    Ok(image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_rgb8())
}

fn ingest(rico: &Path, out: &Path, wireframes: WireframeArg, caption_seed: u64) -> Result<()> {
    let (records, failures) = load_rico_dir(rico)?;
    for (id, e) in &failures {
        tracing::warn!(%id, "skipped: {e}");
    }
    let cfg = DatasetConfig {
        out_dir: out.to_path_buf(),
        preprocess: PreprocessOptions {
            wireframe_source: match wireframes {
                WireframeArg::Rerender => WireframeSource::Rerender,
                WireframeArg::Shipped => WireframeSource::Shipped,
            },
            caption_seed,
            ..PreprocessOptions::default()
        },
    };
    let stats = build_training_set(&records, &cfg)?;
    info!(kept = stats.kept, rejected = stats.rejected, unreadable = failures.len(), "ingest finished");
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn train_layout_cmd(data: &Path, cfg: LayoutModelConfig, train: &LayoutTrainConfig, out: &Path) -> Result<()> {
    let records = load_manifest_records(data)?;
    let layouts: Vec<Layout> = records.into_iter().map(|r| r.layout).collect();
    let seqs = tokenize_layouts(&cfg.tokenizer, &layouts)?;
    let mut model = LayoutDenoiser::new(cfg, train.seed, DType::F32, &Device::Cpu)?;
    let every = (train.steps / 20).max(1);
    let log = train_layout(&mut model, &seqs, train, |step, loss| {
        if step % every == 0 {
            info!(step, loss, "layout");
        }
    })?;
    model.save(out)?;
    let n = log.losses.len();
    if n > 0 {
        info!(
            first = log.smoothed(n / 10, 20),
            last = log.smoothed(n - 1, 20),
            out = %out.display(),
            "saved layout checkpoint"
        );
    }
    Ok(())
}

pub struct TrainUiOptions {
    pub profile: UiProfile,
    pub base: Option<PathBuf>,
    pub adapter: Option<PathBuf>,
    pub finetune: FinetuneConfig,
    pub pretrain: PretrainConfig,
    pub control_out: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

fn train_ui_cmd(data: &Path, opts: &TrainUiOptions, out: &Path) -> Result<()> {
    let dev = Device::Cpu;
    let records = load_manifest_records(data)?;
    let mut pretrain_log = None;
    let mut model = match (opts.profile, &opts.base, &opts.adapter) {
        (_, Some(base), _) => UiModel::load(base, &dev)?,
        (UiProfile::Adapter, None, Some(dir)) => UiModel::from_adapter(dir, &dev)?,
        (UiProfile::Adapter, None, None) => bail!("the adapter profile needs --adapter <dir> or --base <ckpt>"),
        (UiProfile::Toy, None, _) => {
            let mut m = UiModel::new(UiModelConfig::toy(), opts.pretrain.seed, DType::F32, &dev)?;
            let every = (opts.pretrain.codec_steps.max(opts.pretrain.denoiser_steps) / 20).max(1);
            let log = pretrain_toy(&mut m, &records, &opts.pretrain, |phase, step, loss| {
                if step % every == 0 {
                    let phase = match phase {
                        PretrainPhase::Codec => "codec",
                        PretrainPhase::Denoiser => "denoiser",
                    };
                    info!(phase, step, loss, "pretrain");
                }
            })?;
            pretrain_log = Some(log);
            m.freeze_base()?
        }
    };
    let total = opts.finetune.total_steps(records.len());
    let every = (total / 20).max(1);
    let log = finetune_control(&mut model, &records, &opts.finetune, |step, loss| {
        if step % every == 0 {
            info!(step, loss, "control");
        }
    })?;
    model.save(out)?;
    if let Some(path) = &opts.control_out {
        model.save_control(path)?;
    }
    if let Some(path) = &opts.log {
        let doc = serde_json::json!({ "pretrain": pretrain_log, "finetune": log });
        write(path, serde_json::to_string_pretty(&doc)?)?;
    }
    info!(steps = log.losses.len(), out = %out.display(), "saved UI checkpoint");
    Ok(())
}
