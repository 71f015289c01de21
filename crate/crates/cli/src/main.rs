mod args;

use std::process::ExitCode;

use clap::Parser;
use cnnret::experiment::{
    descriptor_dir, index_path, ranked_path, run_aggregate, run_evaluate, run_fit, run_index, run_pipeline, run_query, with_workers,
    RunConfig, RESULTS_CSV,
};
use cnnret::store::ModelKind;
use cnnret::synthetic::{generate, write_dataset, SyntheticSpec};
use cnnret::{Error, Result};

use args::{parse_grids, Cli, Command, Preset, SynthArgs};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}

fn in_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    with_workers(cfg.workers, f)?
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Fit { kind, run } => {
            let cfg = run.to_config()?;
            let s = in_pool(&cfg, || run_fit(&cfg, kind.into()))?;
            let last = s.history.last().copied().unwrap_or(f64::NAN);
            let what = match s.kind {
                ModelKind::Codebook => "objective",
                ModelKind::Gmm => "mean log-likelihood",
                ModelKind::Pca => "smallest retained eigenvalue",
            };
            println!(
                "{} (size {}, input dim {}) trained on {} points in {} iteration(s); final {what} {last}",
                s.kind, s.size, s.descriptor_dim, s.training_points, s.iterations
            );
            if let Some(p) = &s.path {
                println!("wrote {}", p.display());
            }
        }
        Command::Aggregate { run } => {
            let cfg = run.to_config()?;
            let d = in_pool(&cfg, || run_aggregate(&cfg))?;
            let dim = d.first().map_or(0, |g| g.dim());
            println!("{} descriptors of dimension {dim} in {}", d.len(), descriptor_dir(&cfg).display());
        }
        Command::Index { run } => {
            let cfg = run.to_config()?;
            let idx = in_pool(&cfg, || run_index(&cfg))?;
            println!(
                "indexed {} descriptors of dimension {} ({} distance) in {}",
                idx.len(),
                idx.dim(),
                idx.metric,
                index_path(&cfg).display()
            );
        }
        Command::Query { run } => {
            let cfg = run.to_config()?;
            let lists = in_pool(&cfg, || run_query(&cfg))?;
            println!("ranked {} queries into {}", lists.len(), ranked_path(&cfg).display());
        }
        Command::Evaluate { run } => {
            let cfg = run.to_config()?;
            let report = in_pool(&cfg, || run_evaluate(&cfg))?;
            print!("{}", report.to_text());
        }
        Command::Pipeline { run, sweep } => {
            let mut cfg = run.to_config()?;
            sweep.apply(&mut cfg);
            let summary = in_pool(&cfg, || run_pipeline(&cfg))?;
            for c in &summary.cells {
                match (&c.error, c.anmrr, c.map) {
                    (None, Some(anmrr), Some(map)) => {
                        println!("{:<48} dim {:>5}  ANMRR {anmrr:.4}  mAP {map:.4}", c.name, c.dim.unwrap_or(0))
                    }
                    (err, _, _) => println!("{:<48} FAILED: {}", c.name, err.as_deref().unwrap_or("unknown")),
                }
            }
            println!("wrote {}", cfg.output_dir.join(RESULTS_CSV).display());
            if let Some(class) = summary.failure_class() {
                eprintln!("{} of {} cells failed", summary.failures().count(), summary.cells.len());
                return Ok(class.exit_code() as u8);
            }
        }
        Command::Synth(args) => synth(&args)?,
    }
    Ok(0)
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.classes < 2 || a.per_class < 2 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least 2 classes with 2 images each".into(),
        ));
    }
    let grids = parse_grids(&a.grids)?;
    let base = match a.preset {
        Preset::Separated => SyntheticSpec::separated(a.classes, a.per_class, a.channels, 1, 1, a.seed),
        Preset::Vocabulary => SyntheticSpec::shared_vocabulary(a.classes, a.per_class, a.channels, a.words, a.seed),
    };
    let grid_refs: Vec<(&str, usize, usize)> = grids.iter().map(|(t, h, w)| (t.as_str(), *h, *w)).collect();
    let mut spec = base.with_grids(&grid_refs);
    spec.layer_id = a.layer.clone();
    if let Some(id) = &a.dataset_id {
        spec.dataset_id = id.clone();
    }
    let data = generate(&spec)?;
    let manifest = write_dataset(&data, &a.out)?;
    println!(
        "{} images in {} classes, layer {:?}, {} tensor(s) each; manifest {}",
        data.images.len(),
        spec.classes,
        spec.layer_id,
        grids.len(),
        manifest.display()
    );
    Ok(())
}
