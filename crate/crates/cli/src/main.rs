use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use xlb_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "xlb",
    version,
    about = "Cross-lingual multi-reference retrieval evaluation and alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides the config's output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its embeddings.
    GenSynth(Common),
    /// Score every configured scenario and query language.
    Eval(Common),
    /// Train an adapter on the configured triplets.
    Train(Common),
    /// Base vs. each loss mode over the same frozen embeddings.
    Ablate(Common),
    /// Gap table between two reports (or two report directories).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Finite-difference check of the analytic adapter gradients.
    GradCheck(Common),
    /// Print the reports of an output directory as a table.
    Report {
        #[arg(default_value = "out")]
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    commands::init_threads()?;
    match cli.command {
        Command::GenSynth(c) => {
            for p in commands::cmd_gen_synth(&c.load()?)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval(c) => {
            let cfg = c.load()?;
            let evaluated = commands::cmd_eval(&cfg)?;
            let reports: Vec<_> = evaluated.iter().map(|e| e.report.clone()).collect();
            print!("{}", xlb_core::metrics::render_table(&reports));
            println!("reports in {}", cfg.output_dir.display());
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let s = commands::cmd_train(&cfg)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Command::Ablate(c) => {
            let cfg = c.load()?;
            for r in commands::cmd_ablate(&cfg)? {
                let max_r: Vec<_> = r
                    .evaluated
                    .iter()
                    .filter(|e| e.label == "multi")
                    .map(|e| json!({"query_lang": e.report.scenario.query_lang, "max_at_r": e.report.max_at_r}))
                    .collect();
                println!(
                    "{}",
                    json!({"arm": r.arm, "stats": r.stats, "multi": max_r})
                );
            }
        }
        Command::Compare { a, b, out } => {
            let rows = commands::cmd_compare(&a, &b, &out)?;
            for r in rows {
                println!(
                    "{} {}-{} {}: {:.4}",
                    r.scenario, r.lang_a, r.lang_b, r.metric, r.delta
                );
            }
        }
        Command::GradCheck(c) => {
            let s = commands::cmd_grad_check(&c.load()?)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            if !s.passed {
                return Err(CliError::GradCheckFailed {
                    max_rel_error: s.max_rel_error,
                    tolerance: s.tolerance,
                });
            }
        }
        Command::Report { dir } => print!("{}", commands::cmd_report(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string(&e.record()).expect("record serializes")
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
