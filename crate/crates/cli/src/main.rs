//! `face-sculpt` command-line front end. Every subcommand reads one JSON
//! config (optional; defaults otherwise), applies flag overrides, and writes
//! into the output layout of `face_sculpt::pipeline`. Failures print a JSON
//! report on stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use face_sculpt::config::PipelineConfig;
use face_sculpt::deform::write_energy_csv;
use face_sculpt::landmarks::{load_csv_dir, LandmarkSet};
use face_sculpt::mesh::{load_obj, TriMesh};
use face_sculpt::pipeline::{self, Bundle, Layout};
use face_sculpt::render::TextureImage;
use face_sculpt::style::write_trace_csv;
use face_sculpt::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "face-sculpt", version, about = "Exemplar-driven 3D face stylization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline config JSON; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deformation scale t in [0, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    scale: Option<f64>,
    /// Content weight of the texture objective.
    #[arg(long, global = true, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the bundled synthetic asset pack and a smoke-sized config.json.
    MakeAssets {
        dir: PathBuf,
    },
    /// Align both landmark corpora to their average face.
    PrepareLandmarks,
    /// Fit PCA and clusters on the aligned corpora.
    FitStats,
    /// Train the autoencoder, the classifier and the translation branch.
    Train,
    /// Translate the mesh landmarks (or --input) toward the exemplar.
    Translate {
        /// Image-space landmark CSV to translate instead of the mesh landmarks.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Art exemplar landmark CSV.
        #[arg(long)]
        exemplar: Option<PathBuf>,
        /// Model bundle directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Deform the mesh toward image-space landmark targets.
    Deform {
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Optimize the texture against the style exemplar.
    StylizeTexture {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        texture: Option<PathBuf>,
    },
    /// Render the fixed views and a contact sheet.
    Render {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        texture: Option<PathBuf>,
    },
    /// translate, deform, stylize-texture and render in one run.
    Pipeline,
    /// Frechet distance between two landmark CSV directories.
    EvaluateFid {
        a: PathBuf,
        b: PathBuf,
        /// Model bundle supplying the average face and PCA; fitted on the union otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = face_sculpt::stats::PCA_COMPONENTS)]
        components: usize,
    },
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(t) = c.scale {
        cfg.scale = t;
    }
    if let Some(b) = c.beta {
        cfg.style.beta = b;
    }
    if let Some(o) = &c.out {
        cfg.paths.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a mesh with its `.landmarks` sidecar when one sits next to it,
/// otherwise with the configured landmark ids.
fn mesh_at(path: &Path, cfg: &PipelineConfig) -> Result<TriMesh> {
    let sidecar = path.with_extension("landmarks");
    let ids = if sidecar.exists() { Some(sidecar) } else { cfg.paths.landmark_ids.clone() };
    load_obj(path, ids.as_deref())
}

/// Explicit path, then the stage output in the layout when present, then the
/// configured input.
fn pick(explicit: &Option<PathBuf>, produced: PathBuf, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    if produced.exists() {
        return Ok(produced);
    }
    configured
        .clone()
        .ok_or_else(|| Error::Config(vec![format!("no {name}: pass it explicitly or set paths.{name}")]))
}

fn model_dir(explicit: &Option<PathBuf>, cfg: &PipelineConfig, layout: &Layout) -> PathBuf {
    explicit.clone().or_else(|| cfg.paths.model.clone()).unwrap_or_else(|| layout.model_dir())
}

fn run(cli: Cli) -> Result<()> {
    pipeline::configure_threads()?;
    if let Command::EvaluateFid { a, b, model, components } = &cli.command {
        let bundle = model.as_deref().map(Bundle::load).transpose()?;
        let sa = pipeline::load_landmark_dir(a)?;
        let sb = pipeline::load_landmark_dir(b)?;
        let fid = pipeline::evaluate_fid(&sa, &sb, bundle.as_ref(), *components)?;
        // Rounded so identical inputs print 0.0 rather than solver noise.
        let rounded = (fid * 1e9).round() / 1e9;
        println!("{:?}", if rounded == 0.0 { 0.0 } else { rounded });
        return Ok(());
    }
    if let Command::MakeAssets { dir } = &cli.command {
        let path = pipeline::write_asset_pack(dir, cli.common.seed.unwrap_or(0))?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let cfg = load_config(&cli.common)?;
    let layout = Layout::new(&cfg.paths.output_dir);
    match cli.command {
        Command::MakeAssets { .. } | Command::EvaluateFid { .. } => unreachable!("handled above"),
        Command::PrepareLandmarks => {
            cfg.require(&["normal_landmarks", "art_landmarks"])?;
            let normal = load_csv_dir(cfg.paths.normal_landmarks.as_ref().expect("required"))?;
            let art = load_csv_dir(cfg.paths.art_landmarks.as_ref().expect("required"))?;
            let prepared = pipeline::prepare_landmarks(&normal, &art)?;
            pipeline::save_prepared(&prepared, &layout)?;
            println!("aligned {} normal and {} art landmark sets", normal.len(), art.len());
        }
        Command::FitStats => {
            let prepared = pipeline::load_prepared(&layout)?;
            let bundle = pipeline::fit_stats(&prepared, &cfg.stats, cfg.kmeans_seed())?;
            bundle.save(&layout.model_dir())?;
            println!(
                "pca: {} components, {:.4} variance explained; {} clusters",
                bundle.pca.components(),
                bundle.pca.explained_ratio(),
                bundle.clusters.k()
            );
        }
        Command::Train => {
            let prepared = pipeline::load_prepared(&layout)?;
            let mut bundle = Bundle::load(&layout.model_dir())?;
            let logs = pipeline::train_bundle(&mut bundle, &prepared, &cfg)?;
            bundle.save(&layout.model_dir())?;
            pipeline::write_training_logs(&logs, &layout.logs())?;
            if let Some(last) = logs.translation.last() {
                println!("epoch {}: generator {:.6}, discriminator {:.6}", last.epoch, last.total, last.discriminator);
            }
        }
        Command::Translate { input, exemplar, model } => {
            let bundle = Bundle::load(&model_dir(&model, &cfg, &layout))?;
            let l_x = match &input {
                Some(p) => LandmarkSet::load_csv(p)?,
                None => pipeline::mesh_landmarks(&pipeline::load_mesh(&cfg)?, &pipeline::load_projection(&cfg)?)?,
            };
            let ex = exemplar
                .or_else(|| cfg.paths.exemplar_landmarks.clone())
                .ok_or_else(|| Error::Config(vec!["paths.exemplar_landmarks is required".into()]))?;
            let tr = pipeline::translate_landmarks(&bundle, &l_x, &LandmarkSet::load_csv(&ex)?, cfg.scale)?;
            tr.aligned_x.save_csv(&layout.landmarks_x())?;
            tr.aligned_z.save_csv(&layout.landmarks_z())?;
            tr.targets.save_csv(&layout.targets())?;
            println!("wrote {}", layout.targets().display());
        }
        Command::Deform { targets, mesh } => {
            let targets = LandmarkSet::load_csv(&pick(&targets, layout.targets(), &None, "targets")?)?;
            let mesh = match &mesh {
                Some(p) => mesh_at(p, &cfg)?,
                None => pipeline::load_mesh(&cfg)?,
            };
            let proj = pipeline::load_projection(&cfg)?;
            let (out, result) = pipeline::deform_mesh(&mesh, &targets, &proj, &cfg)?;
            pipeline::save_mesh(&out, &layout)?;
            write_energy_csv(&layout.energy(), &result.energy_log)?;
            println!("energy {:.6e} -> {:.6e}", result.initial_energy(), result.final_energy());
        }
        Command::StylizeTexture { mesh, texture } => {
            let mesh = mesh_at(&pick(&mesh, layout.mesh(), &cfg.paths.mesh, "mesh")?, &cfg)?;
            cfg.require(&["texture"])?;
            let tex_path = texture.or_else(|| cfg.paths.texture.clone()).expect("required");
            let styled = pipeline::stylize(&mesh, &TextureImage::load_png(&tex_path)?, &pipeline::load_projection(&cfg)?, &cfg)?;
            styled.texture.save_png(&layout.texture())?;
            write_trace_csv(&layout.loss_trace(), &styled.trace)?;
            if let (Some(a), Some(b)) = (styled.trace.first(), styled.trace.last()) {
                println!("texture loss {:.6e} -> {:.6e}", a.total, b.total);
            }
        }
        Command::Render { mesh, texture } => {
            let mesh = mesh_at(&pick(&mesh, layout.mesh(), &cfg.paths.mesh, "mesh")?, &cfg)?;
            let texture = TextureImage::load_png(&pick(&texture, layout.texture(), &cfg.paths.texture, "texture")?)?;
            let written = pipeline::render_views(
                &mesh,
                &texture,
                &pipeline::load_projection(&cfg)?,
                cfg.style.image_size,
                cfg.style.background,
                &layout.views(),
            )?;
            println!("wrote {} images to {}", written.len(), layout.views().display());
        }
        Command::Pipeline => {
            let report = pipeline::run_pipeline(&cfg)?;
            println!(
                "deformation energy {:.6e} -> {:.6e}; texture loss {:.6e} -> {:.6e}; {} artifacts in {}",
                report.deform_energy.0,
                report.deform_energy.1,
                report.texture_loss.0,
                report.texture_loss.1,
                report.artifacts.len(),
                layout.root.display()
            );
        }
    }
    Ok(())
}

fn report(kind: &str, message: String, violations: Vec<String>) -> ExitCode {
    let report = serde_json::json!({
        "error": kind,
        "message": message,
        "violations": violations,
    });
    eprintln!("{report}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().to_string();
            return report("usage", first.clone(), vec![first]);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), e.to_string(), e.violations()),
    }
}
