//! Diagnostics probe: per-branch inter-bin W spacing against the
//! noise-induced W scatter of the current profile. Run explicitly:
//! `cargo test -p linecal --test excitation_probe -- --ignored --nocapture`

mod common;

use linecal::{
    estimate_run, it_class, synthesize_campaign, voltage_transfer_factor, CampaignConfig,
    QuantizationConfig, SynthSpec, TrajectoryProfile,
};

#[test]
#[ignore]
fn probe_replica_w_scatter() {
    let tree = common::load_replica_tree();
    let cfg = CampaignConfig::baseline(100, 7);
    let spec = SynthSpec {
        n: cfg.n,
        it_class: it_class("0.6").unwrap(),
        rqm_class: it_class("0.15").unwrap(),
        noise_sigma: cfg.noise_sigma,
        quantization: QuantizationConfig::default(),
        profile: TrajectoryProfile::default(),
    };

    let mut per_branch: std::collections::BTreeMap<linecal::BranchKey, Vec<(f64, f64, i32)>> =
        Default::default();
    let mut truths = std::collections::BTreeMap::new();
    for j in 0..cfg.runs {
        let campaign = synthesize_campaign(&tree, &spec, cfg.run_seeds(j)).unwrap();
        let run = estimate_run(&tree, &campaign.measurements, &spec.quantization);
        for (key, est) in &run.branches {
            let w_true = voltage_transfer_factor(&campaign.truth.params[key]);
            let dm = est.m_star - campaign.truth.bins[key];
            per_branch.entry(*key).or_default().push((
                (est.w_hat - w_true).norm(),
                est.condition_indicator,
                dm,
            ));
            truths.insert(*key, campaign.truth.bins[key]);
        }
    }

    println!("branch      spacing    w_err(mean)  cond(med)   mean|dm|  max|dm|");
    for (key, rows) in &per_branch {
        let (idx, _) = tree.branch_by_key(*key).unwrap();
        let spacing = linecal::injectivity_check(
            &tree.branches()[idx].params_db,
            &spec.quantization,
        )
        .min_pairwise_distance;
        let w_mean = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
        let mut conds: Vec<f64> = rows.iter().map(|r| r.1).collect();
        conds.sort_by(f64::total_cmp);
        let dm_mean = rows.iter().map(|r| r.2.abs() as f64).sum::<f64>() / rows.len() as f64;
        let dm_max = rows.iter().map(|r| r.2.abs()).max().unwrap();
        println!(
            "{key:<10} {spacing:>9.3e} {w_mean:>11.3e} {:>10.1} {dm_mean:>9.3} {dm_max:>7}",
            conds[conds.len() / 2]
        );
    }
}
