use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eqspike::alignment::{self, AlignmentSettings};
use eqspike::data::{load_mnist, Dataset, InputEncoder, Split};
use eqspike::io::{self, Checkpoint, RunConfig, RunLog};
use eqspike::metrics::{self, EnergyModel};
use eqspike::readout::accuracy_vs_time;
use eqspike::snn::Topology;
use eqspike::trainer::{RecordRequest, Trainer, UpdateLog};
use eqspike::{Error, HyperParams, Result};

#[derive(Parser)]
#[command(name = "eqspike", version, about = "Spiking Equilibrium Propagation on MNIST")]
struct Cli {
    /// Seed for weight init and shuffling (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory with the MNIST IDX files (overrides the config file).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    train_n: Option<usize>,
    #[arg(long)]
    test_n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write a run log and a checkpoint after every epoch.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory (overrides the config file).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Resume from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Record spike and first-block update logs for this many images at
        /// the start of the first epoch.
        #[arg(long)]
        record_images: Option<usize>,
        /// Hidden neurons whose first-block updates are recorded.
        #[arg(long, default_value_t = 10)]
        record_neurons: usize,
    },
    /// Accuracy of the rate and first-spike readouts against inference time.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// `start:stop:step` in units of 1/f_max (stop inclusive).
        #[arg(long, default_value = "0:40:2")]
        horizon_sweep: String,
        /// Count output spikes only over the trailing window (in steps).
        #[arg(long)]
        window: Option<u64>,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks spiking updates against the rate oracle and the oracle against
    /// finite differences on small random networks.
    OracleCheck {
        #[arg(long, default_value_t = 10)]
        instances: usize,
    },
    /// STDP-like curve from recorded spike and update logs.
    Stdp {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        updates: PathBuf,
        /// Checkpoint supplying topology and parameters (else the config).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        window: u64,
        /// Fraction of the maximum rate below which synapses are ignored.
        #[arg(long, default_value_t = 0.05)]
        rate_floor: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SynOps, spike statistics and energy of recorded spike logs.
    Synops {
        #[arg(required = true)]
        spikes: Vec<PathBuf>,
        /// Layer sizes, e.g. 784,100,10 (else the config).
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        /// Images covered by the logs.
        #[arg(long, default_value_t = 1)]
        images: usize,
        #[arg(long, default_value_t = 10.0)]
        pj_per_synop: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "io" => 3,
        "parse" => 4,
        "config" => 5,
        "shape" => 6,
        _ => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("eqspike: {} error: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.trainer.seed = s;
    }
    Ok(cfg)
}

fn apply_data_args(cfg: &mut RunConfig, d: &DataArgs) {
    if let Some(dir) = &d.data {
        cfg.data.dir = dir.clone();
    }
    if d.train_n.is_some() {
        cfg.data.train_n = d.train_n;
    }
    if d.test_n.is_some() {
        cfg.data.test_n = d.test_n;
    }
}

fn subset(d: Dataset, n: Option<usize>, seed: Option<u64>) -> Dataset {
    match (n, seed) {
        (Some(n), Some(s)) => d.shuffled_subset(n, s),
        (Some(n), None) => d.take(n),
        (None, _) => d,
    }
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<Dataset> {
    let n = match split {
        Split::Train => cfg.data.train_n,
        Split::Test => cfg.data.test_n,
    };
    Ok(subset(load_mnist(&cfg.data.dir, split)?, n, cfg.data.subset_seed))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("horizon sweep {s:?} is not start:stop:step")))?;
    let [a, b, c] = parts[..] else {
        return Err(Error::Config(format!("horizon sweep {s:?} is not start:stop:step")));
    };
    if !(c > 0.0) || b < a || a < 0.0 {
        return Err(Error::Config(format!("horizon sweep {s:?} needs 0 <= start <= stop and step > 0")));
    }
    let n = ((b - a) / c + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * c).collect())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let quiet = cli.quiet;
    let say = |msg: String| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Train {
            data,
            out,
            epochs,
            resume,
            record_images,
            record_neurons,
        } => {
            let mut cfg = base_config(&cli)?;
            apply_data_args(&mut cfg, data);
            if let Some(e) = epochs {
                cfg.trainer.epochs = *e;
            }
            if let Some(o) = out {
                cfg.out_dir = o.clone();
            }
            if let Some(r) = record_images {
                cfg.record_images = *r;
            }
            cfg.validate()?;
            let train = load_split(&cfg, Split::Train)?;
            let test = load_split(&cfg, Split::Test)?;
            let mut trainer = match resume {
                Some(p) => {
                    let mut t = Checkpoint::load(p)?.into_trainer()?;
                    t.config.epochs = cfg.trainer.epochs;
                    t
                }
                None => Trainer::new(cfg.topology()?, cfg.trainer.clone())?,
            };
            say(format!(
                "training {:?} on {} images ({} test), epochs {}..{}",
                trainer.topology.layer_sizes(),
                train.len(),
                test.len(),
                trainer.epoch + 1,
                trainer.config.epochs
            ));
            let dir = cfg.out_dir.clone();
            let log_path = dir.join("run_log.csv");
            let mut log = if resume.is_some() && log_path.exists() {
                RunLog::reopen(&log_path)?
            } else {
                RunLog::create(&log_path, &cfg.to_toml())?
            };
            while trainer.epoch < trainer.config.epochs {
                let request = (trainer.epoch == 0 && cfg.record_images > 0).then(|| RecordRequest {
                    images: cfg.record_images,
                    updates: UpdateLog {
                        max_upper: Some(*record_neurons),
                        ..UpdateLog::for_block(0)
                    },
                });
                let (m, record) = trainer.run_epoch_recorded(&train, &test, request)?;
                if let Some(rec) = record {
                    io::write_spike_log(&dir.join("spikes.csv"), &rec.spikes)?;
                    io::write_update_log(&dir.join("updates.csv"), &rec.updates)?;
                }
                log.append(&m)?;
                Checkpoint::from_trainer(&trainer).save(&dir.join("checkpoint.bin"))?;
                say(format!(
                    "epoch {:>3}  train {:.4}  test {:.4}  nudged {:>6}  spikes/neuron/image {:.2}",
                    m.epoch, m.train_acc, m.test_acc, m.nudged_images, m.spikes_per_neuron_per_image
                ));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Infer {
            checkpoint,
            data,
            horizon_sweep,
            window,
            out,
        } => {
            let mut cfg = base_config(&cli)?;
            apply_data_args(&mut cfg, data);
            let sweep = parse_sweep(horizon_sweep)?;
            let ck = Checkpoint::load(checkpoint)?;
            let params = ck.config.hyper;
            let test = load_split(&cfg, Split::Test)?;
            let horizons: Vec<u64> = sweep
                .into_iter()
                .map(|t| params.t_fmax_to_steps(t) as u64)
                .collect();
            let enc = InputEncoder::calibrate(&params);
            let curve = accuracy_vs_time(&ck.topology, &params, &enc, &ck.weights, &test, &horizons, *window)?;
            let mut csv = String::from("horizon_steps,t_times_fmax,rate_acc,first_spike_acc,mean_synops,mean_spikes\n");
            for p in &curve.points {
                csv += &format!(
                    "{},{},{},{},{},{}\n",
                    p.horizon, p.t_times_fmax, p.rate_acc, p.first_spike_acc, p.mean_synops, p.mean_spikes
                );
            }
            write_or_print(out.as_deref(), &csv)?;
            if let Some(step) = curve.mean_first_spike_step {
                say(format!(
                    "mean first output spike at t*f_max = {:.2} after {:.0} spikes",
                    step * params.dt * params.f_max(),
                    curve.mean_spikes_before_first_output.unwrap_or(0.0)
                ));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck { instances } => {
            let mut settings = AlignmentSettings {
                instances: *instances,
                ..AlignmentSettings::default()
            };
            if let Some(s) = cli.seed {
                settings.first_seed = s;
            }
            let report = alignment::run_alignment(&settings)?;
            if !quiet {
                println!("seed,label,block,cosine,sign_agreement");
                for inst in &report.instances {
                    for (b, c) in inst.blocks.iter().enumerate() {
                        println!(
                            "{},{},{},{},{}",
                            inst.seed,
                            inst.label,
                            b,
                            c.cosine.unwrap_or(f64::NAN),
                            c.sign_agreement.unwrap_or(f64::NAN)
                        );
                    }
                }
            }
            for b in 0..report.n_blocks() {
                println!(
                    "block {b}: mean cosine {:.3} (>= {}), mean sign agreement {:.3} (>= {})",
                    report.mean_cosine(b),
                    alignment::MIN_COSINE,
                    report.mean_sign_agreement(b),
                    alignment::MIN_SIGN_AGREEMENT
                );
            }
            println!(
                "oracle vs finite differences: min cosine {:.4} (>= {})",
                report.min_oracle_cosine(),
                alignment::MIN_ORACLE_COSINE
            );
            let ok = report.spiking_passes() && report.oracle_passes();
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Stdp {
            spikes,
            updates,
            checkpoint,
            window,
            rate_floor,
            out,
        } => {
            let (topology, params): (Topology, HyperParams) = match checkpoint {
                Some(p) => {
                    let ck = Checkpoint::load(p)?;
                    (ck.topology, ck.config.hyper)
                }
                None => {
                    let cfg = base_config(&cli)?;
                    (cfg.topology()?, cfg.trainer.hyper)
                }
            };
            let s = io::read_spike_log(spikes)?;
            let u = io::read_update_log(updates)?;
            let curve = metrics::stdp_curve(&s, &u, &topology, 0, *window, *rate_floor, &params)?;
            write_or_print(out.as_deref(), &curve.to_csv())?;
            say(format!("{} updates binned, peak |mean dw| {:e}", curve.total_count(), curve.peak()));
            Ok(ExitCode::SUCCESS)
        }
        Command::Synops {
            spikes,
            layers,
            images,
            pj_per_synop,
        } => {
            let topology = match layers {
                Some(l) => Topology::new(l.clone())?,
                None => base_config(&cli)?.topology()?,
            };
            let model = EnergyModel::new(*pj_per_synop)?;
            let mut all = eqspike::snn::SpikeLog::new();
            for p in spikes {
                all.append_shifted(&io::read_spike_log(p)?);
            }
            let stats = metrics::spike_stats(&all, &topology, *images)?;
            print!("{}", stats.to_csv(&model));
            Ok(ExitCode::SUCCESS)
        }
    }
}
