use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcplab::compress::{certify, CertifyOptions, CompressorKind, CompressorSpec};
use rcplab::harness::{
    execute, execute_attack, load_config, output_dir, parse_attack_config, parse_override, prepare, preset, AttackConfig, HarnessError,
    RunConfig, OUT_DIR_ENV, PRESETS,
};
use rcplab::rng::{stream, Purpose};
use toml::Value;

#[derive(Parser)]
#[command(name = "rcp-lab", version, about = "Compressed, private primal-dual decentralized SGD lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config (or a preset) over its seeds and write CSV traces.
    Run {
        config: Option<PathBuf>,
        /// Comma-separated seeds, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        /// Output directory [default: config `output`, then $RCP_LAB_OUT, then ./rcp-lab-out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from a built-in preset; the config file, if any, overrides it.
        #[arg(long)]
        preset: Option<String>,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Estimate (phi, sigma_C) for a compressor.
    Certify {
        compressor: String,
        #[arg(long, default_value_t = 2)]
        bits: u32,
        #[arg(long, default_value_t = 0.0)]
        privacy_q: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 10.0)]
        domain_radius: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the constant ledger of a theorem regime for a config.
    Ledger {
        regime: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Search for feasible parameters where the config leaves them unset.
        #[arg(long)]
        suggest: bool,
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Run the gradient-inversion attack.
    Attack {
        config: Option<PathBuf>,
        /// Output directory [default: config `output`, then $RCP_LAB_OUT, then ./rcp-lab-out]
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Print a preset as config text, or list the presets.
    Preset { name: Option<String> },
}

fn base_config(config: Option<&PathBuf>, preset_name: Option<&str>) -> Result<RunConfig, HarnessError> {
    let mut cfg = match preset_name {
        Some(p) => preset(p)?,
        None => RunConfig::default(),
    };
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        let entries = rcplab::harness::flat_entries(&text)?;
        if preset_name.is_none() && entries.iter().any(|(k, _)| k == "preset") {
            cfg = load_config(path)?;
        } else {
            let rest: Vec<(String, Value)> = entries.into_iter().filter(|(k, _)| k != "preset").collect();
            cfg.apply(&rest)?;
        }
    }
    Ok(cfg)
}

fn apply_sets(cfg: &mut RunConfig, sets: &[String]) -> Result<(), HarnessError> {
    for s in sets {
        let (k, v) = parse_override(s)?;
        cfg.set(&k, &v)?;
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Run { config, seed_list, out, preset, sets } => {
            let mut cfg = base_config(config.as_ref(), preset.as_deref())?;
            apply_sets(&mut cfg, &sets)?;
            if let Some(seeds) = seed_list {
                cfg.seeds = seeds;
            }
            cfg.validate()?;
            let dir = output_dir(&cfg, out.as_deref());
            let summary = execute(&cfg, &dir)?;
            for f in &summary.files {
                println!("{}", f.display());
            }
            for (s, k, why) in summary.divergent() {
                eprintln!("seed {s} stopped at step {k}: {why}");
            }
            if let Some(last) = summary.aggregate.last() {
                if let Some((m, _)) = last.stats[3] {
                    eprintln!("final step {}: mean residual {m:e} over {} seeds", last.step, last.count);
                }
            }
        }
        Cmd::Certify { compressor, bits, privacy_q, r, domain_radius, samples, trials, dim, seed } => {
            let kind = CompressorKind::parse(&compressor, bits)?;
            let spec = CompressorSpec::new(kind).with_privacy(privacy_q).with_scale(r);
            spec.validate()?;
            let opts = CertifyOptions { r, domain_radius, samples, trials_per_sample: trials, dim, ..Default::default() };
            let cert = certify(&spec, &opts, &mut stream(seed, 0, 0, Purpose::Certify))?;
            println!("{}", rcplab::compress::Certificate::CSV_HEADER);
            println!("{}", cert.csv_row());
        }
        Cmd::Ledger { regime, config, preset, suggest, sets } => {
            let mut cfg = base_config(config.as_ref(), preset.as_deref())?;
            cfg.set("schedule.regime", &Value::String(regime))?;
            if suggest {
                cfg.schedule.auto = true;
            }
            apply_sets(&mut cfg, &sets)?;
            let prep = prepare(&cfg, Some(&output_dir(&cfg, None)))?;
            match &prep.ledger {
                Some(led) => {
                    println!("symbol,value");
                    for (s, v) in &led.entries {
                        println!("{s},{v:e}");
                    }
                    println!("feasible,{}", led.feasible);
                    for v in &led.violated {
                        println!("violated,\"{v}\"");
                    }
                }
                None => {
                    return Err(HarnessError::Key { key: "schedule.regime".into(), msg: "ledgers exist only for theorem regimes".into() })
                }
            }
        }
        Cmd::Attack { config, out, sets } => {
            let mut cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|source| HarnessError::Io { path: p.clone(), source })?;
                    parse_attack_config(&text)?
                }
                None => AttackConfig::default(),
            };
            for s in &sets {
                let (k, v) = parse_override(s)?;
                cfg.set(&k, &v)?;
            }
            let dir = out
                .or_else(|| cfg.output.as_ref().map(PathBuf::from))
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(rcplab::harness::DEFAULT_OUT_DIR));
            let (summary, files) = execute_attack(&cfg, &dir)?;
            for f in &files {
                println!("{}", f.display());
            }
            let k = summary.rows.len().max(1) as f64;
            let plain = summary.rows.iter().map(|r| r.e_plain).sum::<f64>() / k;
            eprintln!("mean final E, uncompressed: {plain:e}");
            if summary.rows.iter().any(|r| r.e_compressed.is_some()) {
                let comp = summary.rows.iter().filter_map(|r| r.e_compressed).sum::<f64>() / k;
                eprintln!("mean final E, compressed: {comp:e}");
            }
        }
        Cmd::Preset { name } => match name {
            Some(n) => print!("{}", preset(&n)?.to_text()),
            None => PRESETS.iter().for_each(|p| println!("{p}")),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
