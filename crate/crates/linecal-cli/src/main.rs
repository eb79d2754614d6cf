//! Command-line front end: synthetic campaign generation, estimation, RQM
//! placement ranking, sensitivity sweeps, and field-data validation.

mod config;
mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load, Overrides, Resolved};
use linecal::{
    field_consistency, io as lio, it_class, rank_rqm_locations, score_runs, sweep,
    synthesize_campaign, BranchKey, CampaignTruth, Error, RePolicy, Result, SplitRule, SweepAxis,
};

#[derive(Parser)]
#[command(name = "linecal", version, about = "Line-parameter estimation and instrument-transformer calibration from synchrophasor data")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Campaign configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the tree file named in the config.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Samples per measurement window.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Output directory (default: config's output_dir, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<Resolved> {
        load(
            &self.config,
            &Overrides {
                tree: self.tree.clone(),
                seed: self.seed,
                runs: self.runs,
                n: self.n,
                noise_sigma: self.noise_sigma,
                out: self.out.clone(),
            },
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic measurement campaign (per-run branch CSVs plus a
    /// ground-truth sidecar).
    Synth(Common),
    /// Estimate line parameters and correction factors from a dataset,
    /// scoring against the sidecar when present.
    Run {
        #[command(flatten)]
        common: Common,
        /// Dataset directory produced by `synth` (or laid out the same way).
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Rank every branch end as a candidate RQM location.
    Place(Common),
    /// Split-window consistency validation for field recordings.
    ValidateField {
        #[command(flatten)]
        common: Common,
        /// Directory of branch CSVs with a shared time base.
        #[arg(long)]
        dataset: PathBuf,
        /// Split rule: all, halves, or blocks:<k>.
        #[arg(long, default_value = "halves")]
        split: String,
    },
    /// Sensitivity sweep over one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis: noise-sigma or it-class.
        #[arg(long)]
        axis: String,
        /// Comma-separated values (sigmas, or class labels).
        #[arg(long)]
        values: String,
        /// Also emit SVG charts.
        #[arg(long)]
        plots: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        linecal::FailureClass::Config => 2,
        linecal::FailureClass::Data => 3,
        linecal::FailureClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Synth(common) => cmd_synth(common),
        Command::Run { common, dataset } => cmd_run(common, dataset),
        Command::Place(common) => cmd_place(common),
        Command::ValidateField {
            common,
            dataset,
            split,
        } => cmd_validate_field(common, dataset, split),
        Command::Sweep {
            common,
            axis,
            values,
            plots,
        } => cmd_sweep(common, axis, values, *plots),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn cmd_synth(common: &Common) -> Result<()> {
    let resolved = common.resolve()?;
    let cfg = &resolved.campaign;
    if cfg.re_policy != RePolicy::Fixed {
        return Err(Error::Config(
            "synth writes one ground-truth sidecar and therefore needs re_policy = fixed".into(),
        ));
    }
    let spec = synth_spec(cfg);

    std::fs::create_dir_all(&resolved.output_dir)?;
    let mut sidecar = None;
    for j in 0..cfg.runs {
        let campaign = synthesize_campaign(&resolved.tree, &spec, cfg.run_seeds(j))?;
        let run_dir = resolved.output_dir.join(format!("run_{j:04}"));
        lio::write_window_dir(&run_dir, &campaign.measurements)?;
        if sidecar.is_none() {
            sidecar = Some(lio::ground_truth_from_campaign(&campaign, cfg.seed));
        }
    }
    lio::write_json(
        &resolved.output_dir.join("ground_truth.json"),
        &sidecar.expect("at least one run"),
    )?;
    println!(
        "wrote {} run(s) x {} branches to {}",
        cfg.runs,
        resolved.tree.branches().len(),
        resolved.output_dir.display()
    );
    Ok(())
}

fn synth_spec(cfg: &linecal::CampaignConfig) -> linecal::SynthSpec {
    linecal::SynthSpec {
        n: cfg.n,
        it_class: cfg.it_class,
        rqm_class: cfg.rqm_class,
        noise_sigma: cfg.noise_sigma,
        quantization: cfg.quantization,
        profile: cfg.profile,
    }
}

fn cmd_run(common: &Common, dataset: &Path) -> Result<()> {
    let resolved = common.resolve()?;
    let cfg = &resolved.campaign;
    let windows = lio::read_dataset(dataset, &resolved.tree)?;
    let calibration = linecal::calibrate_tree(&resolved.tree, &windows, &cfg.quantization)?;

    // tolerate per-branch failures, but a calibration with no surviving
    // branch is a hard error of whatever kind hit first
    if calibration.estimate.branches.is_empty() {
        if let Some((key, failure)) = calibration.estimate.failures.iter().next() {
            return Err(Error::from_class(
                failure.class,
                format!("branch {key}: {}", failure.message),
            ));
        }
    }
    for (key, failure) in &calibration.estimate.failures {
        eprintln!("warning: branch {key} not calibrated: {}", failure.message);
    }

    std::fs::create_dir_all(&resolved.output_dir)?;
    lio::write_system_estimate(
        &resolved.output_dir.join("estimate.json"),
        &calibration.estimate,
    )?;
    println!(
        "estimated {} branches over {} window(s)",
        calibration.estimate.branches.len(),
        windows.len()
    );

    let truth_path = dataset.join("ground_truth.json");
    if truth_path.exists() {
        let sidecar: lio::GroundTruthFile = lio::load_json(&truth_path)?;
        let truth = CampaignTruth {
            ratio_errors: sidecar.ratio_error_map(),
            params: sidecar.params_map(),
            bins: sidecar.bins_map(),
            trajectories: BTreeMap::new(),
            currents: BTreeMap::new(),
        };
        let truths: Vec<&CampaignTruth> = std::iter::repeat_n(&truth, windows.len()).collect();
        let report = score_runs(&resolved.tree, &calibration.runs, &truths, &cfg.quantization)?;
        lio::write_are_report(&resolved.output_dir.join("report.json"), &report)?;
        println!("campaign mu_MARE = {:.4}%", 100.0 * report.mu_mare);
    } else {
        println!("no ground_truth.json in the dataset; skipping scoring");
    }
    Ok(())
}

fn cmd_place(common: &Common) -> Result<()> {
    let resolved = common.resolve()?;
    let report = rank_rqm_locations(&resolved.tree, &resolved.campaign)?;
    std::fs::create_dir_all(&resolved.output_dir)?;
    lio::write_placement_csv(&resolved.output_dir.join("placement.csv"), &report)?;
    lio::write_json(&resolved.output_dir.join("placement.json"), &report)?;
    println!(
        "best RQM location: {} {}-end (mu_MARE {:.4}%) of {} candidates",
        report.best.branch,
        report.best.end,
        100.0 * report.best.mu_mare,
        report.entries.len()
    );
    Ok(())
}

fn cmd_validate_field(common: &Common, dataset: &Path, split: &str) -> Result<()> {
    let resolved = common.resolve()?;
    let rule = SplitRule::parse(split)?;
    let timed = lio::read_window_dir(dataset, &resolved.tree)?;
    let report = field_consistency(&resolved.tree, &timed, rule, &resolved.campaign.quantization)?;

    std::fs::create_dir_all(&resolved.output_dir)?;
    lio::write_field_report(&resolved.output_dir.join("field_report.json"), &report)?;
    let consistent_bins = report.deltas.iter().filter(|d| d.bins_match).count();
    println!(
        "bins consistent on {}/{} branches; max VT factor delta {:.5}",
        consistent_bins,
        report.deltas.len(),
        report
            .deltas
            .iter()
            .flat_map(|d| [d.delta_vt_from, d.delta_vt_to])
            .fold(0.0, f64::max)
    );
    Ok(())
}

fn cmd_sweep(common: &Common, axis: &str, values: &str, plots: bool) -> Result<()> {
    let resolved = common.resolve()?;
    let axis = match axis {
        "noise-sigma" => {
            let sigmas: std::result::Result<Vec<f64>, _> =
                values.split(',').map(|v| v.trim().parse::<f64>()).collect();
            SweepAxis::NoiseSigma(
                sigmas.map_err(|e| Error::Config(format!("bad sweep value list: {e}")))?,
            )
        }
        "it-class" => {
            let classes: Result<Vec<(String, linecal::ItClassSpec)>> = values
                .split(',')
                .map(|label| {
                    let label = label.trim().to_string();
                    let spec = it_class(&label).ok_or_else(|| {
                        Error::Config(format!("unknown IT class '{label}' in sweep values"))
                    })?;
                    Ok((label, spec))
                })
                .collect();
            SweepAxis::ItClass(classes?)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected noise-sigma or it-class)"
            )))
        }
    };

    let points = sweep(&resolved.tree, &resolved.campaign, &axis)?;
    std::fs::create_dir_all(&resolved.output_dir)?;
    let mut summary = String::from("label,mu_mare\n");
    for point in &points {
        let dir = resolved
            .output_dir
            .join(point.label.replace(['=', '.'], "_"));
        std::fs::create_dir_all(&dir)?;
        lio::write_are_report(&dir.join("report.json"), &point.output.report)?;
        lio::write_system_estimate(&dir.join("estimate.json"), &point.output.estimate)?;
        summary.push_str(&format!("{},{}\n", point.label, point.output.report.mu_mare));
        println!(
            "{}: mu_MARE {:.4}%",
            point.label,
            100.0 * point.output.report.mu_mare
        );
    }
    std::fs::write(resolved.output_dir.join("sweep_summary.csv"), summary)?;

    if plots {
        write_sweep_plots(&resolved.output_dir, &points)?;
    }
    Ok(())
}

fn write_sweep_plots(dir: &std::path::Path, points: &[linecal::SweepPoint]) -> Result<()> {
    let x_labels: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
    let branch_keys: Vec<BranchKey> = points[0]
        .output
        .report
        .branches
        .iter()
        .map(|b| b.key)
        .collect();
    let series: Vec<(String, Vec<f64>)> = branch_keys
        .iter()
        .map(|key| {
            (
                key.to_string(),
                points
                    .iter()
                    .map(|p| 100.0 * p.output.report.branch(*key).unwrap().mare_r)
                    .collect(),
            )
        })
        .collect();
    plot::line_chart(
        &dir.join("mare_vs_axis.svg"),
        "Resistance MARE per branch",
        "MARE (%)",
        &x_labels,
        &series,
    )?;

    let last = points.last().expect("nonempty sweep");
    let labels: Vec<String> = branch_keys.iter().map(|k| k.to_string()).collect();
    let values: Vec<f64> = last
        .output
        .report
        .branches
        .iter()
        .map(|b| 100.0 * b.mare_params)
        .collect();
    plot::bar_chart(
        &dir.join("per_branch_mare.svg"),
        &format!("Line-parameter MARE ({})", last.label),
        "MARE (%)",
        &labels,
        &values,
    )?;
    Ok(())
}
