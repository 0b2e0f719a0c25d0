use gpbinary::experiments::{run_campaign, CampaignId, CampaignParams, ExperimentConfig};
use gpbinary::posterior::ChainConfig;

fn csv_bytes(mut cfg: ExperimentConfig, jobs: usize) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    cfg.jobs = Some(jobs);
    cfg.out_dir = Some(dir.path().to_path_buf());
    run_campaign(&cfg).unwrap();
    std::fs::read(dir.path().join(format!("{}.csv", cfg.id()))).unwrap()
}

fn small_consistency() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(CampaignId::Theorem2);
    cfg.replicates = 3;
    if let CampaignParams::Theorem2(p) = &mut cfg.params {
        p.sample_sizes = vec![20, 40];
        p.prior.truncation = 10;
        p.chain = ChainConfig { iterations: 300, burn_in: 100, thin: 2, ..ChainConfig::default() };
    }
    cfg
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let mut hoeffding = ExperimentConfig::default_for(CampaignId::Hoeffding);
    hoeffding.replicates = 300;
    for cfg in [small_consistency(), hoeffding, ExperimentConfig::default_for(CampaignId::SmallBall)] {
        let one = csv_bytes(cfg.clone(), 1);
        assert_eq!(one, csv_bytes(cfg.clone(), 3), "{}", cfg.id());
        assert_eq!(one, csv_bytes(cfg, 1));
    }
}

#[test]
fn seed_changes_results() {
    let cfg = small_consistency();
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(csv_bytes(cfg, 1), csv_bytes(other, 1));
}
