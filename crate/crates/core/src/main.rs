use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tenbed::audit::reproduce_paper_tables;
use tenbed::checkpoint::{self, Checkpoint};
use tenbed::grad::{backward, finite_diff_check_with};
use tenbed::io::{self, Prepared, RunConfig, RunManifest, SEED_ENV};
use tenbed::{count_params, train, Error, Result};

#[derive(Parser)]
#[command(
    name = "tenbed",
    version,
    about = "Tensorized word embeddings with morpheme sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the morpheme vocabulary, index matrix and statistics from a segmentation file.
    BuildVocab {
        #[arg(long)]
        segmentations: PathBuf,
        #[arg(long, short = 'n', default_value_t = 3)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count parameters of a configuration, or recheck the bundled published tables.
    Audit {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        paper_tables: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences on random words.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Scale analytic gradients before comparing (negative control).
        #[arg(long, hide = true)]
        perturb_backward: bool,
    },
    /// Train a layer and write its checkpoint and loss history.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print embeddings from a checkpoint as TSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Word (or numeric id) to embed; repeatable.
        #[arg(long = "word", required_unless_present = "all")]
        words: Vec<String>,
        #[arg(long, conflicts_with = "words")]
        all: bool,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Initialize a layer from a config and write it as a checkpoint.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(io::exit_code(&e))
        }
    }
}

fn load_run(path: &Path) -> Result<(RunConfig, Vec<u8>)> {
    let (mut cfg, raw) = RunConfig::load(path)?;
    cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
    Ok((cfg, raw))
}

fn manifest(
    command: &str,
    cfg: &RunConfig,
    path: &Path,
    raw: &[u8],
    prepared: &Prepared,
) -> Result<RunManifest> {
    let json = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut m = RunManifest::new(command, json, Some(cfg.seed));
    m.add_input(path, raw);
    if let Some((p, bytes)) = &prepared.seg_bytes {
        m.add_input(p, bytes);
    }
    Ok(m)
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::BuildVocab {
            segmentations,
            order,
            out,
        } => {
            let (vocab, index) = io::build_vocab_files(&segmentations, order, &out)?;
            eprintln!(
                "{} words, |M| = {} including padding",
                index.rows(),
                vocab.size()
            );
            Ok(Status::Ok)
        }
        Command::Audit {
            paper_tables: true, ..
        } => {
            let rows = reproduce_paper_tables()?;
            println!("group\tdataset\tmethod\ttarget\tconfig\tcomputed\tpublished_m\tmatch");
            let mut bad = 0;
            for r in &rows {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.group,
                    r.dataset,
                    r.audit.method,
                    r.target,
                    r.audit.config,
                    r.audit.total(),
                    r.published,
                    if r.matches { "ok" } else { "MISMATCH" }
                );
                bad += usize::from(!r.matches);
            }
            eprintln!("{} rows, {bad} mismatches", rows.len());
            Ok(if bad == 0 {
                Status::Ok
            } else {
                Status::CheckFailed
            })
        }
        Command::Audit { config, .. } => {
            let path = config.expect("clap requires --config here");
            let (cfg, _) = load_run(&path)?;
            let row = count_params(&cfg.audit_config()?, None)?;
            println!("method\tconfig\ttrainable\tconstant\ttotal\tratio");
            println!("{row}");
            Ok(Status::Ok)
        }
        Command::Gradcheck {
            config,
            trials,
            seed,
            epsilon,
            tolerance,
            perturb_backward,
        } => {
            let (cfg, _) = load_run(&config)?;
            let prepared = io::prepare(&cfg)?;
            let layer = &prepared.layer;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(cfg.seed));
            println!("word_id\tchecked\tmax_abs_error\tmax_rel_error\tpassed");
            let mut failed = 0;
            for _ in 0..trials {
                let w = rng.gen_range(0..layer.vocab_size());
                let check_seed = rng.gen();
                let report =
                    finite_diff_check_with(layer, w, epsilon, tolerance, check_seed, |l, w, u| {
                        let mut g = backward(l, w, u)?;
                        if perturb_backward {
                            for slot in &mut g {
                                slot.grad_mut()
                                    .as_mut_slice()
                                    .iter_mut()
                                    .for_each(|x| *x *= 1.5);
                            }
                        }
                        Ok(g)
                    })?;
                println!(
                    "{}\t{}\t{:e}\t{:e}\t{}",
                    report.word_id,
                    report.checked,
                    report.max_abs_error,
                    report.max_rel_error,
                    report.passed
                );
                failed += usize::from(!report.passed);
            }
            eprintln!("{trials} words checked, {failed} above tolerance {tolerance:e}");
            Ok(if failed == 0 {
                Status::Ok
            } else {
                Status::CheckFailed
            })
        }
        Command::Train { config, out } => {
            let (cfg, raw) = load_run(&config)?;
            let mut prepared = io::prepare(&cfg)?;
            let (task, mut opt) = io::task_for(&cfg, &prepared)?;
            let history = train(
                &mut prepared.layer,
                &task,
                &mut opt,
                cfg.epochs,
                cfg.batch,
                cfg.seed,
            )?;
            checkpoint::save(&prepared.layer, &out, prepared.words.as_deref())?;
            io::write_file(&out.join("history.csv"), &io::history_csv(&history))?;
            manifest("train", &cfg, &config, &raw, &prepared)?.write(&out)?;
            if let Some(last) = history.last() {
                eprintln!("final loss {last}");
            }
            Ok(Status::Ok)
        }
        Command::Export { config, out } => {
            let (cfg, raw) = load_run(&config)?;
            let prepared = io::prepare(&cfg)?;
            checkpoint::save(&prepared.layer, &out, prepared.words.as_deref())?;
            manifest("export", &cfg, &config, &raw, &prepared)?.write(&out)?;
            Ok(Status::Ok)
        }
        Command::Eval {
            checkpoint: dir,
            words,
            all,
            output,
        } => {
            let ck: Checkpoint<f64> = checkpoint::load(&dir)?;
            let keys: Vec<String> = if all {
                (0..ck.layer.vocab_size())
                    .map(|i| ck.words.as_ref().map_or(i.to_string(), |ws| ws[i].clone()))
                    .collect()
            } else {
                words
            };
            let mut rows = Vec::with_capacity(keys.len());
            for key in keys {
                let id = ck.lookup(&key)?;
                rows.push((key, ck.layer.forward(id)?.into_vec()));
            }
            let text = io::embeddings_tsv(&rows);
            match output {
                Some(p) => io::write_file(&p, &text)?,
                None => print!("{text}"),
            }
            Ok(Status::Ok)
        }
    }
}
