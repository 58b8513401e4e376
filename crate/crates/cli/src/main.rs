//! Experiment runner for the NAFD cell-free mmWave simulator.
//!
//! Subcommands mirror the study workflow: `nmse-sweep` measures inter-AP
//! estimation quality across RF-chain counts and SNR, `train` runs MATD3 or
//! MADDPG power allocation, `compare` evaluates learned and conventional
//! schemes on identical held-out channels, and `validate` executes the
//! cross-cutting invariant suites as a release gate.

mod config;
mod validate;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use config::ExperimentConfig;
use nafd_core::madrl::Algorithm;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "nafd", about = "NAFD cell-free mmWave simulation laboratory", version)]
struct Cli {
    /// JSON experiment configuration; defaults reproduce the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed of the selected command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Matd3,
    Maddpg,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Matd3 => Algorithm::Matd3,
            AlgorithmArg::Maddpg => Algorithm::Maddpg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Inter-AP channel-estimation NMSE versus SNR and RF-chain count.
    NmseSweep {
        /// Override the Monte Carlo trials per cell.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Train a multi-agent power-allocation policy.
    Train {
        #[arg(long, value_enum, default_value = "matd3")]
        algorithm: AlgorithmArg,
        /// Override the episode count.
        #[arg(long)]
        episodes: Option<usize>,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate learned and baseline schemes on identical held-out channels.
    Compare {
        /// Override the held-out episode count.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run the invariant suites and emit a pass/fail report.
    Validate,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match cli.command {
        Command::NmseSweep { trials } => {
            if let Some(t) = trials {
                cfg.sweep.trials = t;
            }
            if let Some(s) = cli.seed {
                cfg.sweep.seed = s;
            }
            let cells = nafd_core::sweep::nmse_sweep(&cfg.sweep)?;
            let csv = nafd_core::sweep::sweep_to_csv(&cells);
            let path = cli.out.join("nmse_sweep.csv");
            std::fs::write(&path, csv)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            algorithm,
            episodes,
            resume,
        } => {
            if let Some(e) = episodes {
                cfg.train.episodes = e;
            }
            let seed = cli.seed.unwrap_or(cfg.system.master_seed);
            let algorithm: Algorithm = algorithm.into();
            let out = match resume {
                Some(path) => {
                    let ckpt = nafd_core::madrl::Checkpoint::load(&path)?;
                    if ckpt.algorithm != algorithm {
                        bail!("checkpoint algorithm does not match --algorithm");
                    }
                    nafd_core::madrl::train::resume(&cfg.system, &cfg.train, ckpt)?
                }
                None => nafd_core::madrl::train(&cfg.system, &cfg.train, algorithm, seed)?,
            };
            let label = match algorithm {
                Algorithm::Matd3 => "matd3",
                Algorithm::Maddpg => "maddpg",
            };
            let curve = cli.out.join(format!("train_{label}.csv"));
            std::fs::write(&curve, out.log.to_csv())?;
            let ckpt_path = cli.out.join(format!("checkpoint_{label}.json"));
            out.save(&ckpt_path)?;
            println!(
                "trained {} episodes; final-100 mean reward {:.4}",
                out.log.episodes.len(),
                out.log.tail_mean(100)
            );
            println!("wrote {} and {}", curve.display(), ckpt_path.display());
        }
        Command::Compare { episodes } => {
            if let Some(e) = episodes {
                cfg.compare.episodes = e;
            }
            if let Some(s) = cli.seed {
                cfg.compare.eval_seed = s;
            }
            let csv = run_compare(&cfg)?;
            let path = cli.out.join("compare.csv");
            std::fs::write(&path, csv)?;
            println!("wrote {}", path.display());
        }
        Command::Validate => {
            let mut vcfg = cfg.validate.clone();
            if let Some(s) = cli.seed {
                vcfg.seed = s;
            }
            let report = validate::run(&vcfg);
            let path = cli.out.join("validate.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            for s in &report.suites {
                println!(
                    "{} {} - {}",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.name,
                    s.detail
                );
            }
            println!("wrote {}", path.display());
            if !report.all_passed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

/// Evaluate every configured scheme on the held-out episodes and render the
/// comparison table.
fn run_compare(cfg: &ExperimentConfig) -> anyhow::Result<String> {
    use nafd_core::madrl::baselines::{evaluate_policy, Policy, UplinkScheme};

    let matd3_ckpt = cfg
        .compare
        .matd3_checkpoint
        .as_ref()
        .map(|p| nafd_core::madrl::Checkpoint::load(p))
        .transpose()?;
    let maddpg_ckpt = cfg
        .compare
        .maddpg_checkpoint
        .as_ref()
        .map(|p| nafd_core::madrl::Checkpoint::load(p))
        .transpose()?;

    let mut rows: Vec<(String, Policy)> = vec![
        ("ul_random".into(), Policy::Baseline(UplinkScheme::Random)),
        ("ul_equal".into(), Policy::Baseline(UplinkScheme::Equal)),
        ("ul_max".into(), Policy::Baseline(UplinkScheme::Max)),
    ];
    if let Some(c) = &matd3_ckpt {
        rows.push(("matd3".into(), Policy::Trained(&c.ensemble)));
    }
    if let Some(c) = &maddpg_ckpt {
        rows.push(("maddpg".into(), Policy::Trained(&c.ensemble)));
    }

    let stderr = |v: &[f64]| -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        (var / n).sqrt()
    };

    let mut out = String::from(
        "schema_version,scheme,episodes,mean_reward,stderr_reward,mean_objective,stderr_objective,channel_digest\n",
    );
    for (label, policy) in &rows {
        let res = evaluate_policy(
            &cfg.system,
            &cfg.train,
            cfg.compare.eval_seed,
            0,
            cfg.compare.episodes,
            policy,
        )?;
        let digest = nafd_core::linalg::digest_f64(
            &res.channel_digests
                .iter()
                .map(|&d| d as f64)
                .collect::<Vec<f64>>(),
        );
        out.push_str(&format!(
            "1,{},{},{},{},{},{},{:016x}\n",
            label,
            cfg.compare.episodes,
            res.mean_reward(),
            stderr(&res.episode_rewards),
            res.mean_objective(),
            stderr(&res.episode_objectives),
            digest
        ));
    }
    Ok(out)
}
