use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ferrosyn::data::SynthSpec;
use ferrosyn::device_model::{synthesize_pulse_log, write_pulse_log, ConductanceNormalization, FerroKernelParams, PositivePulse, PulseLogSpec};
use ferrosyn::experiments::{run_experiment, DatasetConfig, ExperimentConfig, Regime};
use ferrosyn::snn::Layer;

/// Device-aware spiking network experiments on modeled ferroelectric synapses.
#[derive(Parser, Debug)]
#[command(name = "ferrosyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the conductance-update kernel to a pulse-programming log.
    FitDevice {
        #[command(flatten)]
        common: Common,
        /// Pulse log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Pulse sign that potentiates.
        #[arg(long, value_parser = ["ltp", "ltd"])]
        positive: Option<String>,
        /// Fixed conductance range for normalization instead of the observed one.
        #[arg(long, num_args = 2, value_names = ["G_MIN", "G_MAX"])]
        g_range: Option<Vec<f64>>,
    },
    /// Full-precision software training.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Training through modeled device updates.
    OnDevice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        device: DeviceArgs,
    },
    /// Per-subject fine-tuning of a pretrained model on held-out subjects.
    Sstl {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        device: DeviceArgs,
        /// Pretrained run directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Layers to fine-tune, e.g. fc1,fc2.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<String>>,
        #[arg(long)]
        sstl_epochs: Option<usize>,
        #[arg(long)]
        sstl_lr: Option<f64>,
        #[arg(long)]
        chunks: Option<usize>,
        /// Restrict to these subjects.
        #[arg(long, value_delimiter = ',')]
        subjects: Option<Vec<u32>>,
        /// Tune in software instead of through the device model.
        #[arg(long)]
        software: bool,
    },
    /// Quantize and perturb a pretrained model, then re-tune it on device.
    TransferRetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        device: DeviceArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Levels per synapse; 0 keeps full precision.
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        retune_epochs: Option<usize>,
        #[arg(long)]
        retune_epsilon: Option<f64>,
        #[arg(long)]
        retune_lr: Option<f64>,
    },
    /// Synthetic benchmark: software training, device sweep and transfer.
    SynthBench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        device: DeviceArgs,
        /// Thresholds for the device sweep.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Print a complete configuration file with every default filled in.
    PrintConfig {
        #[arg(long, default_value = "baseline_software")]
        regime: String,
    },
    /// Write a synthetic pulse log generated from the measured device kernel.
    SynthPulseLog {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        write_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        read_noise: f64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of SxxxRyy.edf recordings; synthetic data when absent.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Trial cache stem for recordings.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Electrode layout JSON.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    synth_train: Option<usize>,
    #[arg(long)]
    synth_test: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    /// Fold indices to run.
    #[arg(long, value_delimiter = ',')]
    folds: Option<Vec<usize>>,
    /// Divide hidden widths by this.
    #[arg(long)]
    width_divisor: Option<usize>,
    /// Continue from the last epoch checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_initial: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
}

#[derive(Args, Debug)]
struct DeviceArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_asym: Option<f64>,
    /// Kernel parameter file from fit-device.
    #[arg(long)]
    device_params: Option<PathBuf>,
}

impl Common {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(o) = &self.output {
            c.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(root) = &self.data_root {
            c.dataset = DatasetConfig::Physionet {
                root: root.clone(),
                layout: self.layout.clone(),
                cache: self.cache.clone(),
                options: Default::default(),
            };
        } else if let DatasetConfig::Synthetic { spec, train, test, .. } = &mut c.dataset {
            if let Some(n) = self.synth_train {
                *train = n;
            }
            if let Some(n) = self.synth_test {
                *test = n;
            }
            if let Some(s) = self.snr {
                *spec = SynthSpec { snr: s, ..spec.clone() };
            }
        }
        if let Some(f) = &self.folds {
            c.folds.only = Some(f.clone());
        }
        if let Some(d) = self.width_divisor {
            c.network.width_divisor = d;
        }
        c.resume |= self.resume;
    }
}

impl TrainArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        let t = &mut c.training;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr_initial {
            t.lr_initial = v;
        }
        if let Some(v) = self.lr_final {
            t.lr_final = v;
        }
    }
}

impl DeviceArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(v) = self.epsilon {
            c.device.policy.epsilon = v;
        }
        if let Some(v) = self.epsilon_asym {
            c.device.policy.epsilon_asym = v;
        }
        if let Some(p) = &self.device_params {
            c.device.params_file = Some(p.clone());
        }
    }
}

fn build(regime: Regime, common: &Common, rest: impl FnOnce(&mut ExperimentConfig) -> Result<()>) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig { regime, ..Default::default() };
    common.apply(&mut c);
    rest(&mut c)?;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        c = c.overlaid(&text).with_context(|| format!("parsing {}", path.display()))?;
        c.regime = regime;
    }
    Ok(c)
}

fn parse_regime(s: &str) -> Result<Regime> {
    let key = s.replace('-', "_");
    [
        Regime::BaselineSoftware,
        Regime::OnDevice,
        Regime::Sstl,
        Regime::TransferRetune,
        Regime::FitDevice,
        Regime::SynthBench,
    ]
    .into_iter()
    .find(|r| r.name() == key)
    .with_context(|| format!("unknown regime {s:?}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match cli.command {
        Command::PrintConfig { regime } => {
            let c = ExperimentConfig { regime: parse_regime(&regime)?, ..Default::default() };
            print!("{}", c.to_toml()?);
            return Ok(());
        }
        Command::SynthPulseLog { out, seed, write_noise, read_noise } => {
            let spec = PulseLogSpec { write_noise_std: write_noise, read_noise_std: read_noise, ..Default::default() };
            let records = synthesize_pulse_log(&FerroKernelParams::MEASURED_DEVICE, &spec, seed)?;
            let f = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_pulse_log(f, &records)?;
            println!("wrote {} pulses to {} (conductance range {:e}..{:e} S)", records.len(), out.display(), spec.g_min, spec.g_max);
            return Ok(());
        }
        Command::FitDevice { common, log, positive, g_range } => build(Regime::FitDevice, &common, |c| {
            if let Some(l) = log {
                c.fit.log = Some(l);
            }
            if let Some(p) = positive {
                c.fit.convention = if p == "ltd" { PositivePulse::Ltd } else { PositivePulse::Ltp };
            }
            if let Some(g) = g_range {
                c.fit.normalization = ConductanceNormalization::Fixed { g_min: g[0], g_max: g[1] };
            }
            Ok(())
        })?,
        Command::Baseline { common, train } => build(Regime::BaselineSoftware, &common, |c| {
            train.apply(c);
            Ok(())
        })?,
        Command::OnDevice { common, train, device } => build(Regime::OnDevice, &common, |c| {
            train.apply(c);
            device.apply(c);
            Ok(())
        })?,
        Command::Sstl { common, device, checkpoint, layers, sstl_epochs, sstl_lr, chunks, subjects, software } => {
            build(Regime::Sstl, &common, |c| {
                device.apply(c);
                c.checkpoint = checkpoint.or(c.checkpoint.take());
                if let Some(ls) = layers {
                    c.sstl.layers = ls.iter().map(|l| Layer::from_name(l)).collect::<Result<_, _>>()?;
                }
                if let Some(v) = sstl_epochs {
                    c.sstl.epochs = v;
                }
                if let Some(v) = sstl_lr {
                    c.sstl.lr = v;
                }
                if let Some(v) = chunks {
                    c.sstl.chunks = v;
                }
                if subjects.is_some() {
                    c.sstl.subjects = subjects;
                }
                if software {
                    c.sstl.on_device = false;
                }
                Ok(())
            })?
        }
        Command::TransferRetune { common, device, checkpoint, levels, eta, retune_epochs, retune_epsilon, retune_lr } => {
            build(Regime::TransferRetune, &common, |c| {
                device.apply(c);
                c.checkpoint = checkpoint.or(c.checkpoint.take());
                if let Some(l) = levels {
                    c.transfer.levels = (l > 0).then_some(l);
                }
                let t = &mut c.transfer;
                if let Some(v) = eta {
                    t.eta = v;
                }
                if let Some(v) = retune_epochs {
                    t.retune_epochs = v;
                }
                if let Some(v) = retune_epsilon {
                    t.retune_epsilon = v;
                }
                if let Some(v) = retune_lr {
                    t.retune_lr = v;
                }
                Ok(())
            })?
        }
        Command::SynthBench { common, train, device, epsilons, levels, eta } => build(Regime::SynthBench, &common, |c| {
            train.apply(c);
            device.apply(c);
            if let Some(e) = epsilons {
                c.bench.epsilons = e;
            }
            if let Some(l) = levels {
                c.transfer.levels = (l > 0).then_some(l);
            }
            if let Some(v) = eta {
                c.transfer.eta = v;
            }
            Ok(())
        })?,
    };
    if cfg.regime == Regime::SynthBench && matches!(cfg.dataset, DatasetConfig::Physionet { .. }) {
        bail!("synth-bench runs on synthetic data only");
    }
    cfg.validate()?;
    let outcome = run_experiment(&cfg)?;
    println!("{}", outcome.summary());
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
