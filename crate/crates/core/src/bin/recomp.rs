use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use recomp::pipeline::{self, Generation, PriorTraining, VqVaeTraining};
use recomp::train::TrainConfig;
use recomp::Error;

#[derive(Parser)]
#[command(name = "recomp", version, about = "Chord-conditional harmonic recomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

fn parse_channels(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad channel count {x:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected four comma-separated channel counts".to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Parse kern files, normalize keys, label chords and write a dataset.
    BuildDataset {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Measures held out at the end of the corpus.
        #[arg(long, default_value_t = 0)]
        holdout: usize,
    },
    /// Train the VQ-VAE on the non-holdout measures.
    TrainVqvae {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Encoder widths, e.g. 64,128,256,256.
        #[arg(long, value_parser = parse_channels)]
        channels: Option<[usize; 4]>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to <out>.loss.csv.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Encode every dataset measure into a code grid.
    Encode {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vqvae: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoregressive prior on code grids.
    TrainPrior {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 50)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "off")]
        spatial: Switch,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Sample measures over a chord sequence and write MIDI and PPM.
    Generate {
        #[arg(long)]
        vqvae: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        /// Comma-separated labels, including the two boundary repeats.
        #[arg(long)]
        chords: String,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "off")]
        spatial: Switch,
        #[arg(long)]
        out_midi: PathBuf,
        #[arg(long)]
        out_ppm: PathBuf,
    },
}

fn run(cli: Cli) -> recomp::Result<()> {
    match cli.command {
        Command::BuildDataset { input, out, holdout } => {
            pipeline::build_dataset(&input, holdout, &out)?;
        }
        Command::TrainVqvae {
            data,
            steps,
            batch,
            seed,
            channels,
            out,
            loss_csv,
        } => {
            pipeline::run_train_vqvae(&VqVaeTraining {
                data,
                train: TrainConfig::new(steps, batch, seed),
                channels,
                out,
                loss_csv,
            })?;
        }
        Command::Encode { data, vqvae, out } => {
            let f = pipeline::run_encode(&data, &vqvae, &out)?;
            log::info!("encoded {} measures", f.grids.len());
        }
        Command::TrainPrior {
            codes,
            data,
            steps,
            batch,
            seed,
            spatial,
            out,
            loss_csv,
        } => {
            pipeline::run_train_prior(&PriorTraining {
                codes,
                data,
                train: TrainConfig::new(steps, batch, seed),
                spatial: spatial.on(),
                out,
                loss_csv,
            })?;
        }
        Command::Generate {
            vqvae,
            prior,
            chords,
            temperature,
            seed,
            spatial,
            out_midi,
            out_ppm,
        } => {
            let g = pipeline::run_generate(&Generation {
                vqvae,
                prior,
                chords,
                temperature,
                seed,
                spatial: spatial.on(),
                out_midi,
                out_ppm,
            })?;
            log::info!("generated {} measures", g.grids.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let one_line = e.to_string().replace('\n', " ");
            eprintln!("error kind={}: {one_line}", e.kind());
            ExitCode::from(match e {
                Error::VocabMismatch(_) => 3,
                _ => 1,
            })
        }
    }
}
