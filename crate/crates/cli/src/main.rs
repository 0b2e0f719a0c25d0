use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use gpbinary::experiments::{
    fit_dataset, run_campaign, simulate_replicate, CampaignId, CampaignParams, CampaignReport, ExperimentConfig,
};
use gpbinary::model::Dataset;
use gpbinary::posterior::{write_draws_csv, PriorModel};
use gpbinary::rng::StreamSeed;

/// Verification lab for Gaussian-process binary regression.
#[derive(Parser)]
#[command(name = "gplab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the datasets a consistency campaign would analyse.
    Simulate {
        /// Sample sizes; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the configured prior to a dataset CSV (`x1..xd,y`).
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one verification campaign.
    Campaign {
        id: CampaignId,
        #[command(flatten)]
        common: Common,
    },
    /// Run every campaign at its defaults.
    VerifyAll {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common, fallback: CampaignId) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default_for(fallback),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    if common.out.is_some() {
        cfg.out_dir = Some(out_dir(common)?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn simulate(n: &[usize], common: &Common) -> Result<()> {
    let cfg = load_config(common, CampaignId::Theorem1)?;
    let sizes = match (&cfg.params, n.is_empty()) {
        (_, false) => n.to_vec(),
        (CampaignParams::Theorem1(p) | CampaignParams::Theorem2(p) | CampaignParams::Theorem3(p), true) => p.sample_sizes.clone(),
        (other, true) => bail!("campaign {} has no data model", other.id()),
    };
    let dir = out_dir(common)?;
    for rep in 0..cfg.replicates {
        for &size in &sizes {
            let path = dir.join(format!("{}_rep{rep}_n{size}.csv", cfg.id()));
            simulate_replicate(&cfg, rep, size)?.save_csv(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn fit(data: &Path, common: &Common) -> Result<()> {
    let cfg = load_config(common, CampaignId::Theorem1)?;
    let p = match &cfg.params {
        CampaignParams::Theorem1(p) | CampaignParams::Theorem2(p) | CampaignParams::Theorem3(p) => p,
        other => bail!("campaign {} has no data model", other.id()),
    };
    let dataset = Dataset::load_csv(data).with_context(|| format!("reading {}", data.display()))?;
    let model = PriorModel::new(p.prior.clone())?;
    let mut rng = StreamSeed::root(cfg.seed).child("fit").rng();
    let fit = fit_dataset(cfg.id(), p, &model, &dataset, &mut rng)?;
    let dir = out_dir(common)?;
    write_draws_csv(&fit.chain.draws, File::create(dir.join("draws.csv"))?)?;
    let summary = serde_json::json!({
        "n": dataset.len(),
        "eps": p.eps,
        "posterior_mass_outside": fit.mass,
        "mean_l1": fit.l1.iter().sum::<f64>() / fit.l1.len() as f64,
        "draws": fit.chain.draws.len(),
        "diagnostics": fit.chain.diagnostics,
    });
    fs::write(dir.join("fit.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("n={} kept draws={} posterior mass outside eps={}: {:.4}", dataset.len(), fit.chain.draws.len(), p.eps, fit.mass);
    Ok(())
}

fn show(report: &CampaignReport) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} {}", report.campaign, if report.passed { "PASS" } else { "FAIL" });
    for p in &report.predicates {
        let _ = writeln!(out, "  {} {}: {}", if p.passed { "ok  " } else { "FAIL" }, p.name, p.detail);
    }
}

fn campaign(id: CampaignId, common: &Common) -> Result<bool> {
    let cfg = load_config(common, id)?;
    if cfg.id() != id {
        bail!("config is for campaign {}, not {id}", cfg.id());
    }
    let report = run_campaign(&cfg)?;
    show(&report);
    Ok(report.passed)
}

fn verify_all(common: &Common) -> Result<bool> {
    if common.config.is_some() {
        bail!("verify-all runs the default config of every campaign; use `campaign <id> --config` instead");
    }
    let mut all = true;
    for id in CampaignId::ALL {
        let report = run_campaign(&load_config(common, id)?)?;
        show(&report);
        all &= report.passed;
    }
    if let Some(dir) = &common.out {
        let mut f = File::create(dir.join("verify-all.txt"))?;
        writeln!(f, "{}", if all { "PASS" } else { "FAIL" })?;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { n, common } => simulate(n, common).map(|()| true),
        Command::Fit { data, common } => fit(data, common).map(|()| true),
        Command::Campaign { id, common } => campaign(*id, common),
        Command::VerifyAll { common } => verify_all(common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
