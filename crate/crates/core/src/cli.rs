//! Command-line entry point. Exit codes: 0 success, 1 invalid input, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{self as exp, write};
use crate::nets::Encoder;
use crate::svg;

#[derive(Parser, Debug)]
#[command(name = "repguide", about = "Flow matching with representation-guided sampling on toy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to a new `runs/run-<time>` directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the training set as `dataset.csv`.
    GenData(Common),
    /// Pretrain and freeze the representation encoder.
    TrainEncoder(Common),
    /// Train the velocity network and projector.
    TrainFlow(Common),
    /// Draw samples, guided as configured.
    Sample(Common),
    /// Sample and score against held-out data.
    Eval(Common),
    /// Similarity of candidate representations to the clean one across noise levels.
    ProbeSimilarity(Common),
    /// One guided evaluation per configured interval.
    AblateInterval(Common),
    /// Select class-representative vectors.
    RepgBuild(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData(c)
            | Command::TrainEncoder(c)
            | Command::TrainFlow(c)
            | Command::Sample(c)
            | Command::Eval(c)
            | Command::ProbeSimilarity(c)
            | Command::AblateInterval(c)
            | Command::RepgBuild(c) => c,
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let out: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<()> {
    let common = cmd.common();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let dir = exp::output_dir(common.out.as_deref())?;
    let mut say = |s: String| {
        let _ = writeln!(stdout, "{s}");
    };
    match cmd {
        Command::GenData(_) => {
            let data = exp::training_data(&cfg).map_err(|e| e.in_stage("gen-data"))?;
            write(&dir, "dataset.csv", &exp::samples_to_csv(&data.points, &data.labels))?;
            let pts: Vec<_> = data
                .points
                .rows()
                .zip(&data.labels)
                .map(|(r, &l)| (r[0], r.get(1).copied().unwrap_or(0.0), l))
                .collect();
            write(&dir, "dataset.svg", &svg::scatter("training data", &pts))?;
            say(format!("wrote {} samples to {}", data.len(), dir.display()));
        }
        Command::TrainEncoder(_) => {
            let data = exp::training_data(&cfg).map_err(|e| e.in_stage("gen-data"))?;
            let (enc, report) = exp::encoder_stage(&cfg, &data)?;
            enc.save(&dir.join(exp::ENCODER_FILE))?;
            write(&dir, "report.txt", &format!("encoder_holdout_accuracy: {}\n", report.holdout_accuracy))?;
            say(format!("encoder held-out accuracy {}", report.holdout_accuracy));
        }
        Command::TrainFlow(_) => {
            let data = exp::training_data(&cfg).map_err(|e| e.in_stage("gen-data"))?;
            let enc_path = dir.join(exp::ENCODER_FILE);
            let encoder = if enc_path.exists() {
                Encoder::load(&enc_path)?
            } else {
                let (enc, _) = exp::encoder_stage(&cfg, &data)?;
                enc.save(&enc_path)?;
                enc
            };
            let (bundle, log) = exp::flow_stage(&cfg, &data, encoder)?;
            bundle.save(&dir.join(exp::BUNDLE_FILE))?;
            write(&dir, "loss.csv", &log.to_csv())?;
            write(
                &dir,
                "report.txt",
                &format!("initial_cfm_loss: {}\nfinal_cfm_loss: {}\n", log.initial_cfm(), log.final_cfm()),
            )?;
            say(format!("cfm loss {} -> {}", log.initial_cfm(), log.final_cfm()));
        }
        Command::Sample(_) => {
            write(&dir, "config.ini", &cfg.to_ini())?;
            let (bundle, _) = exp::obtain_bundle(&cfg, &dir)?;
            let guidance = exp::guidance_for(&cfg, &bundle)?;
            let (out, labels) = exp::sample_stage(&cfg, &bundle, guidance.as_ref())?;
            exp::write_samples(&dir, &out, &labels, cfg.dataset.num_classes)?;
            say(format!("wrote {} samples to {}", labels.len(), dir.display()));
        }
        Command::Eval(_) => {
            let m = exp::run_experiment(&cfg, &dir)?;
            say(m.to_text().trim_end().to_string());
        }
        Command::ProbeSimilarity(_) => {
            let curves = exp::probe_stage(&cfg, &dir)?;
            say(format!("{} probe points written to {}", curves.points.len(), dir.display()));
        }
        Command::AblateInterval(_) => {
            for r in exp::ablate_interval(&cfg, &dir)? {
                say(format!(
                    "[{}, {}] toy_frechet {} energy_distance {}",
                    r.t_low, r.t_high, r.metrics.toy_frechet, r.metrics.energy_distance
                ));
            }
        }
        Command::RepgBuild(_) => {
            let (bundle, _) = exp::obtain_bundle(&cfg, &dir)?;
            let r = exp::representatives(&cfg, &bundle).map_err(|e| e.in_stage("repg-build"))?;
            write(&dir, "representatives.csv", &exp::representatives_to_csv(&r))?;
            say(format!("{} representatives per class for {} classes", r.k, r.vectors.len()));
        }
    }
    Ok(())
}
