use std::path::PathBuf;
use std::process::ExitCode;

use bwsv::audio::BitDepth;
use bwsv::bwe::BweTrainConfig;
use bwsv::eval::DcfParams;
use bwsv::features::{FeatureConfig, FeatureKind};
use bwsv::gmm::EmConfig;
use bwsv::synth::CorpusSpec;
use bwsv::verify::SphericityForm;
use bwsv_cli::experiment::{run_experiment, ExperimentConfig, Scenario};
use bwsv_cli::{commands, CliResult};
use clap::{Parser, Subcommand, ValueEnum};

/// Speaker verification over telephone-band and bandwidth-extended speech.
#[derive(Parser)]
#[command(name = "bwsv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Product,
    Ratio,
}

impl From<Form> for SphericityForm {
    fn from(f: Form) -> Self {
        match f {
            Form::Product => SphericityForm::Product,
            Form::Ratio => SphericityForm::Ratio,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Wide,
    Narrow,
    Extended,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Wide => Scenario::Wide,
            ScenarioArg::Narrow => Scenario::Narrow,
            ScenarioArg::Extended => Scenario::Extended,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Telephone-band copies of a directory of WAV files.
    Narrowband {
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also decimate to 8 kHz and store as A-law (ISDN channel).
        #[arg(long)]
        alaw: bool,
    },
    /// Train a bandwidth-extension model on a 16 kHz corpus.
    TrainBwe {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Extend a narrowband corpus to 16 kHz.
    Extend {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Cost ratio of over- to under-estimating the high-band energy.
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        /// Store the output as A-law.
        #[arg(long)]
        alaw: bool,
    },
    /// Feature vectors of one WAV file as CSV.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: FeatureKind,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One covariance model per speaker from the training utterances.
    TrainSpeakers {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        kind: FeatureKind,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        mean_removal: bool,
    },
    /// Score every test utterance against every speaker model.
    Score {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::Product)]
        form: Form,
    },
    /// DET curve, min DCF and EER of a trial list.
    Det {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "det")]
        stem: String,
        #[arg(long, default_value_t = 1.0)]
        c_miss: f64,
        #[arg(long, default_value_t = 1.0)]
        c_fa: f64,
        #[arg(long, default_value_t = 0.5)]
        p_true: f64,
    },
    /// Full experiment from a JSON config; flags override config values.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',')]
        scenarios: Option<Vec<ScenarioArg>>,
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<FeatureKind>>,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        isdn: bool,
    },
    /// Write a synthetic multi-speaker corpus with a manifest.
    SynthCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        /// Utterances per speaker; the first is the training one.
        #[arg(long, default_value_t = 6)]
        utterances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 60.0)]
        train_secs: f64,
        #[arg(long, default_value_t = 2.0)]
        test_secs: f64,
    },
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Narrowband { in_dir, out_dir, alaw } => {
            let outcome = commands::narrowband(&in_dir, &out_dir, alaw)?;
            println!("{} files written to {}", outcome.written, out_dir.display());
        }
        Command::TrainBwe { manifest, out, k, seed } => {
            let config = BweTrainConfig { em: EmConfig::with_k(k, seed), ..BweTrainConfig::default() };
            let (_, hash) = commands::train_bwe(&manifest, &config, &out)?;
            println!("{} sha256 {hash}", out.display());
        }
        Command::Extend { manifest, model, out_dir, lambda, alaw } => {
            let depth = if alaw { BitDepth::Alaw8 } else { BitDepth::Pcm16 };
            let summary = commands::extend_corpus(&manifest, &model, lambda, depth, &out_dir)?;
            let worst = summary.files.iter().filter_map(|f| f.nb_snr_db).fold(f64::INFINITY, f64::min);
            println!("{} files extended, lowest narrowband SNR {worst:.1} dB", summary.files.len());
        }
        Command::Features { input, kind, dim, out } => {
            let seq = commands::features(&input, kind, dim, &FeatureConfig::default(), &out)?;
            println!("{} frames written to {}", seq.len(), out.display());
        }
        Command::TrainSpeakers { manifest, kind, dim, out_dir, mean_removal } => {
            let models = commands::train_speakers(&manifest, kind, dim, &FeatureConfig::default(), mean_removal, &out_dir)?;
            println!("{} speaker models written to {}", models.len(), out_dir.display());
        }
        Command::Score { models, manifest, out, form } => {
            let trials = commands::score(&models, &manifest, &FeatureConfig::default(), form.into(), &out)?;
            println!("{} trials written to {}", trials.len(), out.display());
        }
        Command::Det { trials, out_dir, stem, c_miss, c_fa, p_true } => {
            let s = commands::det(&trials, &DcfParams { c_miss, c_fa, p_true }, &out_dir, &stem)?;
            println!("min DCF {:.4}  EER {:.4}  ({} target, {} non-target trials)", s.min_dcf.value, s.eer, s.n_target, s.n_nontarget);
        }
        Command::RunExperiment { config, out_dir, scenarios, kinds, dims, lambda, isdn } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if let Some(s) = scenarios {
                cfg.scenarios = s.into_iter().map(Scenario::from).collect();
            }
            if let Some(k) = kinds {
                cfg.kinds = k;
            }
            if let Some(d) = dims {
                cfg.dims = d;
            }
            if let Some(l) = lambda {
                cfg.bwe.lambda = l;
            }
            cfg.isdn |= isdn;
            let report = run_experiment(&cfg)?;
            print!("{}", report.to_table());
        }
        Command::SynthCorpus { out_dir, speakers, utterances, seed, train_secs, test_secs } => {
            let spec = CorpusSpec { n_speakers: speakers, utterances_per_speaker: utterances, train_secs, test_secs, seed };
            let manifest = commands::synth_corpus(&spec, &out_dir)?;
            println!("{} utterances written to {}", manifest.entries().len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
