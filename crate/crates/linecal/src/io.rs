//! File formats: tree description JSON, per-branch measurement CSVs,
//! ground-truth sidecar, and report writers.
//!
//! Measurement CSVs carry the columns
//! `t, v_pq_re, v_pq_im, v_qp_re, v_qp_im, i_pq_re, i_pq_im, i_qp_re, i_qp_im`
//! with one row per synchronized sample. A dataset directory holds one
//! `run_XXX/` subdirectory per Monte-Carlo window (or branch CSVs directly at
//! the top level for a single window) plus an optional `ground_truth.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    Branch, BranchKey, Bus, ConnectedTree, End, LineParams, RatioError, RqmLocation,
};
use crate::harness::{FieldConsistencyReport, PlacementReport, TimedBranchMeasurements};
use crate::metrics::AreReport;
use crate::propagation::SystemEstimate;
use crate::synth::{BranchMeasurements, Campaign, Instrument, Phasor};

pub const MEASUREMENT_COLUMNS: [&str; 9] = [
    "t", "v_pq_re", "v_pq_im", "v_qp_re", "v_qp_im", "i_pq_re", "i_pq_im", "i_qp_re", "i_qp_im",
];

// ---------------------------------------------------------------------------
// Tree description file

#[derive(Debug, Serialize, Deserialize)]
struct TreeFile {
    buses: Vec<Bus>,
    branches: Vec<BranchEntry>,
    rqm: RqmEntry,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchEntry {
    from: usize,
    to: usize,
    r_db: f64,
    x_db: f64,
    b_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params_true: Option<LineParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RqmEntry {
    /// Index into the branch list.
    branch: usize,
    end: End,
}

/// Load a tree description from JSON.
pub fn load_tree(path: &Path) -> Result<ConnectedTree> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read tree file {}: {e}", path.display())))?;
    let file: TreeFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("tree file {}: {e}", path.display())))?;
    let branches = file
        .branches
        .into_iter()
        .map(|b| Branch {
            from_bus: b.from,
            to_bus: b.to,
            params_db: LineParams {
                r: b.r_db,
                x: b.x_db,
                b: b.b_db,
            },
            params_true: b.params_true,
        })
        .collect();
    ConnectedTree::new(
        file.buses,
        branches,
        RqmLocation {
            branch: file.rqm.branch,
            end: file.rqm.end,
        },
    )
}

/// Write a tree description to JSON.
pub fn save_tree(tree: &ConnectedTree, path: &Path) -> Result<()> {
    let file = TreeFile {
        buses: tree.buses().to_vec(),
        branches: tree
            .branches()
            .iter()
            .map(|b| BranchEntry {
                from: b.from_bus,
                to: b.to_bus,
                r_db: b.params_db.r,
                x_db: b.params_db.x,
                b_db: b.params_db.b,
                params_true: b.params_true,
            })
            .collect(),
        rqm: RqmEntry {
            branch: tree.rqm().branch,
            end: tree.rqm().end,
        },
    };
    write_json(path, &file)
}

// ---------------------------------------------------------------------------
// Measurement CSVs

pub fn branch_csv_name(key: BranchKey) -> String {
    format!("branch_{}_{}.csv", key.from, key.to)
}

/// Write one branch's series; `t` defaults to the sample index.
pub fn write_branch_csv(path: &Path, meas: &BranchMeasurements, t: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MEASUREMENT_COLUMNS)?;
    for i in 0..meas.len() {
        let t_val = t.map_or(i as f64, |ts| ts[i]);
        let row = [
            t_val,
            meas.v_pq[i].re,
            meas.v_pq[i].im,
            meas.v_qp[i].re,
            meas.v_qp[i].im,
            meas.i_pq[i].re,
            meas.i_pq[i].im,
            meas.i_qp[i].re,
            meas.i_qp[i].im,
        ];
        w.write_record(row.iter().map(|v| format_float(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip formatting keeps regeneration byte-identical and the
/// parsed values bit-exact.
fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Read one branch CSV with exact-schema validation; errors carry the file
/// and 1-based data row.
pub fn read_branch_csv(path: &Path, key: BranchKey) -> Result<TimedBranchMeasurements> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != MEASUREMENT_COLUMNS.len()
        || headers.iter().zip(MEASUREMENT_COLUMNS).any(|(a, b)| a != b)
    {
        return Err(Error::Data(format!(
            "{}: unexpected columns {:?}, expected {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>(),
            MEASUREMENT_COLUMNS
        )));
    }

    let mut t = Vec::new();
    let mut v_pq = Vec::new();
    let mut v_qp = Vec::new();
    let mut i_pq = Vec::new();
    let mut i_qp = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |col: usize| -> Result<f64> {
            record
                .get(col)
                .ok_or_else(|| {
                    Error::Data(format!(
                        "{}: row {}: missing column {}",
                        path.display(),
                        row_idx + 1,
                        MEASUREMENT_COLUMNS[col]
                    ))
                })?
                .trim()
                .parse()
                .map_err(|_| {
                    Error::Data(format!(
                        "{}: row {}: bad value '{}' in column {}",
                        path.display(),
                        row_idx + 1,
                        record.get(col).unwrap_or(""),
                        MEASUREMENT_COLUMNS[col]
                    ))
                })
        };
        t.push(parse(0)?);
        v_pq.push(Complex64::new(parse(1)?, parse(2)?));
        v_qp.push(Complex64::new(parse(3)?, parse(4)?));
        i_pq.push(Complex64::new(parse(5)?, parse(6)?));
        i_qp.push(Complex64::new(parse(7)?, parse(8)?));
    }

    Ok(TimedBranchMeasurements {
        t,
        meas: BranchMeasurements {
            key,
            v_pq,
            v_qp,
            i_pq,
            i_qp,
        },
    })
}

/// Read the branch CSVs of one window directory, requiring every tree branch.
pub fn read_window_dir(
    dir: &Path,
    tree: &ConnectedTree,
) -> Result<BTreeMap<BranchKey, TimedBranchMeasurements>> {
    let mut out = BTreeMap::new();
    for branch in tree.branches() {
        let key = branch.key();
        let path = dir.join(branch_csv_name(key));
        if !path.exists() {
            return Err(Error::Data(format!(
                "dataset {} is missing branch {} (expected file {})",
                dir.display(),
                key,
                path.display()
            )));
        }
        out.insert(key, read_branch_csv(&path, key)?);
    }
    Ok(out)
}

/// Window subdirectories of a dataset: sorted `run_*` directories, or the
/// dataset root itself when branch CSVs sit directly in it.
pub fn window_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut runs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("run_"))
        })
        .collect();
    runs.sort();
    if runs.is_empty() {
        Ok(vec![dir.to_path_buf()])
    } else {
        Ok(runs)
    }
}

/// Read every window of a dataset directory.
pub fn read_dataset(
    dir: &Path,
    tree: &ConnectedTree,
) -> Result<Vec<BTreeMap<BranchKey, BranchMeasurements>>> {
    let mut windows = Vec::new();
    for run_dir in window_dirs(dir)? {
        let timed = read_window_dir(&run_dir, tree)?;
        windows.push(timed.into_iter().map(|(k, t)| (k, t.meas)).collect());
    }
    Ok(windows)
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioErrorRecord {
    pub from: usize,
    pub to: usize,
    pub end: End,
    pub instrument: Instrument,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrueParamsRecord {
    pub from: usize,
    pub to: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin: Option<i32>,
    pub r: f64,
    pub x: f64,
    pub b: f64,
}

/// Sidecar with the campaign's fixed physical state, enough to score any
/// window generated from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub seed: u64,
    pub ratio_errors: Vec<RatioErrorRecord>,
    pub params_true: Vec<TrueParamsRecord>,
}

pub fn ground_truth_from_campaign(campaign: &Campaign, seed: u64) -> GroundTruthFile {
    GroundTruthFile {
        seed,
        ratio_errors: campaign
            .truth
            .ratio_errors
            .iter()
            .map(|((key, end, kind), re)| RatioErrorRecord {
                from: key.from,
                to: key.to,
                end: *end,
                instrument: *kind,
                re: re.value.re,
                im: re.value.im,
            })
            .collect(),
        params_true: campaign
            .truth
            .params
            .iter()
            .map(|(key, p)| TrueParamsRecord {
                from: key.from,
                to: key.to,
                bin: campaign.truth.bins.get(key).copied(),
                r: p.r,
                x: p.x,
                b: p.b,
            })
            .collect(),
    }
}

impl GroundTruthFile {
    pub fn ratio_error_map(&self) -> BTreeMap<(BranchKey, End, Instrument), RatioError> {
        self.ratio_errors
            .iter()
            .map(|r| {
                (
                    (
                        BranchKey {
                            from: r.from,
                            to: r.to,
                        },
                        r.end,
                        r.instrument,
                    ),
                    RatioError {
                        value: Complex64::new(r.re, r.im),
                    },
                )
            })
            .collect()
    }

    pub fn params_map(&self) -> BTreeMap<BranchKey, LineParams> {
        self.params_true
            .iter()
            .map(|p| {
                (
                    BranchKey {
                        from: p.from,
                        to: p.to,
                    },
                    LineParams {
                        r: p.r,
                        x: p.x,
                        b: p.b,
                    },
                )
            })
            .collect()
    }

    pub fn bins_map(&self) -> BTreeMap<BranchKey, i32> {
        self.params_true
            .iter()
            .filter_map(|p| {
                p.bin.map(|m| {
                    (
                        BranchKey {
                            from: p.from,
                            to: p.to,
                        },
                        m,
                    )
                })
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Report writers

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_are_report(path: &Path, report: &AreReport) -> Result<()> {
    write_json(path, report)
}

pub fn write_system_estimate(path: &Path, estimate: &SystemEstimate) -> Result<()> {
    write_json(path, estimate)
}

pub fn write_field_report(path: &Path, report: &FieldConsistencyReport) -> Result<()> {
    write_json(path, report)
}

/// Placement table: one row per candidate, best rank first.
pub fn write_placement_csv(path: &Path, report: &PlacementReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["branch", "end", "mu_mare", "rank"])?;
    for entry in &report.entries {
        w.write_record([
            entry.branch.to_string(),
            entry.end.to_string(),
            format_float(entry.mu_mare),
            entry.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write one campaign window as a set of branch CSVs.
pub fn write_window_dir(
    dir: &Path,
    measurements: &BTreeMap<BranchKey, BranchMeasurements>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (key, meas) in measurements {
        write_branch_csv(&dir.join(branch_csv_name(*key)), meas, None)?;
    }
    Ok(())
}

/// Phasor helper for report assembly.
pub fn phasor(re: f64, im: f64) -> Phasor {
    Complex64::new(re, im)
}
