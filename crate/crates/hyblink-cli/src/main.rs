//! `hyblink` command-line interface.
//!
//! Subcommands: `gen-data`, `train`, `quantize`, `eval`, `simulate`,
//! `energy`. Every command is deterministic given its flags, the config
//! file, and the master seed; failures exit nonzero with one JSON error line
//! on stderr.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hyblink::energy::{compare_report, default_comparison, report_to_csv, SchemeConfig};
use hyblink::eval::{evaluate_model, evaluate_quantized, jamming_feature_experiment, FeatureOffsets};
use hyblink::neural::{
    load_any_model, load_model, quantize, save_model, save_quantized_model, train_autoencoder,
    train_classifier, write_history_csv, write_latent_csv, LoadedModel,
};
use hyblink::protocol::{run_campaign, CampaignConfig, ConceptWidth};
use hyblink::seeding::derive_seed;
use hyblink::synthgen::{generate_dataset, load_dataset, save_dataset, split};
use hyblink::init_model;

use config::Config;

#[derive(Parser)]
#[command(name = "hyblink", version, about = "Hybrid body-area link simulator")]
struct Cli {
    /// TOML config file; falls back to built-in defaults.
    #[arg(long, global = true, env = "HYBLINK_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset (CSV plus JSON sidecar).
    GenData {
        /// Number of rows.
        #[arg(long, default_value_t = 2040)]
        size: usize,
        /// Dataset seed; defaults to a stream derived from the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path; the sidecar lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-stage training; writes the model container and history CSVs.
    Train {
        /// Input dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Output model container path.
        #[arg(long)]
        out_model: PathBuf,
        /// Training seed; defaults to a stream derived from the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<u32>,
        /// Directory for history CSVs; defaults to the model's directory.
        #[arg(long)]
        history_dir: Option<PathBuf>,
    },
    /// Quantize a trained model container to int8.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model (float or quantized) on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metrics JSON output; defaults to <out_dir>/metrics.json.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Latent-codes CSV output (float models only).
        #[arg(long)]
        latent: Option<PathBuf>,
        /// Include the feature-offset flip experiment with this SNR offset (dB).
        #[arg(long)]
        flip_snr_db: Option<f64>,
        /// Optical power offset (mW) for the flip experiment.
        #[arg(long)]
        flip_power_mw: Option<f64>,
    },
    /// Run a secured-exchange campaign and write the JSON report.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Dataset the sessions draw observations from.
        #[arg(long)]
        data: PathBuf,
        /// Enrollment seed for the key table.
        #[arg(long)]
        key_seed: Option<u64>,
        /// Number of sessions.
        #[arg(long)]
        sessions: Option<usize>,
        /// Jamming power ratio, or "off".
        #[arg(long)]
        jam: Option<String>,
        /// Concept width in bits (8 or 16).
        #[arg(long)]
        width: Option<u8>,
        /// Report path; defaults to <out_dir>/campaign.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the transmission-energy comparison table.
    Energy {
        /// Semantic payload widths.
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 16])]
        bits: Vec<u32>,
        /// Jammed-bit counts paired with --bits.
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 16])]
        jam_bits: Vec<u32>,
        /// ECDH key lengths.
        #[arg(long, value_delimiter = ',', default_values_t = [160u32, 256])]
        ecdh_bits: Vec<u32>,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let line = serde_json::json!({ "error": format!("{err:#}") });
        eprintln!("{line}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData { size, seed, out } => gen_data(&config, size, seed, &out),
        Command::Train { data, out_model, seed, epochs, history_dir } => {
            train(&config, &data, &out_model, seed, epochs, history_dir.as_deref())
        }
        Command::Quantize { model, out } => quantize_cmd(&model, &out),
        Command::Eval { model, data, report, latent, flip_snr_db, flip_power_mw } => eval_cmd(
            &config,
            &model,
            &data,
            report.as_deref(),
            latent.as_deref(),
            flip_snr_db,
            flip_power_mw,
        ),
        Command::Simulate { model, data, key_seed, sessions, jam, width, out } => simulate(
            &config,
            &model,
            &data,
            key_seed,
            sessions,
            jam.as_deref(),
            width,
            out.as_deref(),
        ),
        Command::Energy { bits, jam_bits, ecdh_bits, out } => {
            energy_cmd(&config, &bits, &jam_bits, &ecdh_bits, out.as_deref())
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    Ok(())
}

fn out_path(config: &Config, explicit: Option<&Path>, default_name: &str) -> Result<PathBuf> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => config.paths.out_dir.join(default_name),
    };
    ensure_parent(&path)?;
    Ok(path)
}

fn gen_data(config: &Config, size: usize, seed: Option<u64>, out: &Path) -> Result<()> {
    let seed = seed.unwrap_or_else(|| derive_seed(config.master_seed, "gen-data"));
    let dataset = generate_dataset(size, seed, &config.thresholds, &config.features)?;
    ensure_parent(out)?;
    save_dataset(&dataset, out)?;
    println!(
        "wrote {} ({} rows, seed {}) with sidecar {}",
        out.display(),
        dataset.len(),
        seed,
        hyblink::synthgen::sidecar_path(out).display()
    );
    Ok(())
}

fn train(
    config: &Config,
    data: &Path,
    out_model: &Path,
    seed: Option<u64>,
    epochs: Option<u32>,
    history_dir: Option<&Path>,
) -> Result<()> {
    let dataset = load_dataset(data)?;
    let mut train_cfg = config.train;
    train_cfg.seed = seed.unwrap_or_else(|| derive_seed(config.master_seed, "train"));
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }

    let (train_split, val_split) = split(&dataset, 0.8, derive_seed(train_cfg.seed, "split"))?;
    let mut model = init_model(derive_seed(train_cfg.seed, "init"));
    let ae = train_autoencoder(&mut model, &train_split, &val_split, &train_cfg)?;
    let head = train_classifier(&mut model, &train_split, &val_split, &train_cfg)?;

    ensure_parent(out_model)?;
    save_model(&model, out_model)?;
    let history_dir = history_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_model.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&history_dir)
        .with_context(|| format!("cannot create {}", history_dir.display()))?;
    write_history_csv(&history_dir.join("history_autoencoder.csv"), &ae.history)?;
    write_history_csv(&history_dir.join("history_classifier.csv"), &head.history)?;

    println!(
        "wrote {} (val accuracy {:.4}, train accuracy {:.4}, ae epochs {}, head epochs {})",
        out_model.display(),
        head.val_accuracy,
        head.train_accuracy,
        ae.history.len(),
        head.history.len(),
    );
    Ok(())
}

fn quantize_cmd(model_path: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let qm = quantize(&model)?;
    ensure_parent(out)?;
    save_quantized_model(&qm, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn eval_cmd(
    config: &Config,
    model_path: &Path,
    data: &Path,
    report_path: Option<&Path>,
    latent: Option<&Path>,
    flip_snr_db: Option<f64>,
    flip_power_mw: Option<f64>,
) -> Result<()> {
    let dataset = load_dataset(data)?;
    let loaded = load_any_model(model_path)?;
    let report = match &loaded {
        LoadedModel::Full(m) => evaluate_model(m, &dataset)?,
        LoadedModel::Quantized(q) => evaluate_quantized(q, &dataset)?,
    };

    let report_path = out_path(config, report_path, "metrics.json")?;
    let mut json = serde_json::to_value(&report)?;

    if flip_snr_db.is_some() || flip_power_mw.is_some() {
        let defaults = FeatureOffsets::default();
        let offsets = FeatureOffsets {
            snr_db: flip_snr_db.unwrap_or(defaults.snr_db),
            power_mw: flip_power_mw.unwrap_or(defaults.power_mw),
        };
        let flips = match &loaded {
            LoadedModel::Full(m) => jamming_feature_experiment(
                &dataset,
                |f| m.classify(f).map(|(l, _)| l),
                offsets,
            )?,
            LoadedModel::Quantized(q) => {
                jamming_feature_experiment(&dataset, |f| Ok(q.classify(f).0), offsets)?
            }
        };
        json.as_object_mut()
            .expect("report serializes to an object")
            .insert("flip_experiment".into(), serde_json::to_value(&flips)?);
    }

    fs::write(&report_path, serde_json::to_string_pretty(&json)? + "\n")?;
    println!("wrote {} (accuracy {:.4})", report_path.display(), report.accuracy);

    if let Some(latent_path) = latent {
        match &loaded {
            LoadedModel::Full(m) => {
                ensure_parent(latent_path)?;
                write_latent_csv(latent_path, m, &dataset)?;
                println!("wrote {}", latent_path.display());
            }
            LoadedModel::Quantized(_) => {
                bail!("latent export requires a float model container")
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: &Config,
    model_path: &Path,
    data: &Path,
    key_seed: Option<u64>,
    sessions: Option<usize>,
    jam: Option<&str>,
    width: Option<u8>,
    out: Option<&Path>,
) -> Result<()> {
    let model = load_model(model_path)?;
    let dataset = load_dataset(data)?;

    let mut channel = config.channel;
    if let Some(jam) = jam {
        channel.jam_power_ratio = match jam {
            "off" => 0.0,
            value => value
                .parse::<f64>()
                .with_context(|| format!("--jam must be a ratio or \"off\", got {value:?}"))?,
        };
    }
    let width = ConceptWidth::try_from(width.unwrap_or(config.simulate.width))?;
    let campaign = CampaignConfig {
        n_sessions: sessions.unwrap_or(config.simulate.n_sessions),
        width,
        channel,
        energy: config.energy,
        master_seed: config.master_seed,
        key_seed: key_seed.unwrap_or(config.simulate.key_seed),
    };
    let report = run_campaign(&dataset, &model, &campaign)?;

    let out = out_path(config, out, "campaign.json")?;
    fs::write(&out, report.to_json()? + "\n")?;
    println!(
        "wrote {} (bob {:.4}, eve {:.4}, sessions {})",
        out.display(),
        report.bob.success_rate,
        report.eve.success_rate,
        report.sessions
    );
    Ok(())
}

fn energy_cmd(
    config: &Config,
    bits: &[u32],
    jam_bits: &[u32],
    ecdh_bits: &[u32],
    out: Option<&Path>,
) -> Result<()> {
    let mut schemes: Vec<SchemeConfig> = Vec::new();
    if bits.is_empty() && jam_bits.is_empty() && ecdh_bits.is_empty() {
        schemes = default_comparison();
    } else {
        for &b in bits {
            schemes.push(SchemeConfig::Semantic { bits: b, jam_bits: 0 });
        }
        for (&b, &j) in bits.iter().zip(jam_bits) {
            schemes.push(SchemeConfig::Semantic { bits: b, jam_bits: j });
        }
        for &k in ecdh_bits {
            schemes.push(SchemeConfig::Ecdh { key_bits: k });
        }
    }
    let rows = compare_report(&schemes, &config.energy)?;
    let csv = report_to_csv(&rows)?;
    print!("{csv}");
    if let Some(path) = out {
        ensure_parent(path)?;
        fs::write(path, csv)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
