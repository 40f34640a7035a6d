//! Cost estimation and oracle validation, the data behind `edc estimate`
//! and `edc oracle-validate`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, CampaignError};
use crate::cost::{
    access_counts, network_energy, oracle_access_counts, AccessCounts, CostConstants, CostError,
    CostReport, DataflowKind,
};
use crate::net::NetworkSpec;
use crate::report::{atomic_write, breakdown_svg, estimate_csv};

/// One dataflow's estimate artifacts.
#[derive(Debug)]
pub struct EstimateOutput {
    pub report: CostReport,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Evaluates the cost model at a uniform `(q_bits, p)` and writes one CSV
/// and one SVG per dataflow into `out_dir`.
pub fn run_estimate(
    net: &NetworkSpec,
    dataflows: &[DataflowKind],
    q_bits: u32,
    p: f64,
    k: &CostConstants,
    out_dir: &Path,
) -> Result<Vec<EstimateOutput>, CampaignError> {
    let assignments = vec![(q_bits, p); net.layers.len()];
    let mut outputs = Vec::new();
    for &df in dataflows {
        let report = network_energy(net, &assignments, df, k)?;
        let csv_path = out_dir.join(format!("estimate_{df}.csv"));
        atomic_write(&csv_path, estimate_csv(&report).as_bytes()).map_err(io_err(&csv_path))?;
        let svg_path = out_dir.join(format!("breakdown_{df}.svg"));
        atomic_write(&svg_path, breakdown_svg(&report).as_bytes()).map_err(io_err(&svg_path))?;
        outputs.push(EstimateOutput {
            report,
            csv_path,
            svg_path,
        });
    }
    Ok(outputs)
}

/// Field-by-field comparison of two access-count tables; returns the names
/// of mismatching fields.
pub fn compare_counts(analytic: &AccessCounts, simulated: &AccessCounts) -> Vec<&'static str> {
    let mut bad = Vec::new();
    if analytic.input_reads != simulated.input_reads {
        bad.push("input_reads");
    }
    if analytic.weight_reads != simulated.weight_reads {
        bad.push("weight_reads");
    }
    if analytic.output_reads != simulated.output_reads {
        bad.push("output_reads");
    }
    if analytic.output_writes != simulated.output_writes {
        bad.push("output_writes");
    }
    if analytic.register_accesses != simulated.register_accesses {
        bad.push("register_accesses");
    }
    bad
}

/// One row of the validation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRow {
    pub layer: usize,
    pub dataflow: DataflowKind,
    pub analytic: AccessCounts,
    /// `None` when the layer exceeded the simulation cap and was skipped.
    pub simulated: Option<AccessCounts>,
    pub mismatched_fields: Vec<String>,
    pub pass: bool,
}

/// Validates the analytic table against the loop-nest oracle for every
/// layer and requested dataflow. Oversized layers are skipped with
/// `simulated = None` and count as passes with a warning.
pub fn run_oracle_validate(
    net: &NetworkSpec,
    dataflows: &[DataflowKind],
) -> Result<Vec<OracleRow>, CampaignError> {
    let mut rows = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        for &df in dataflows {
            let analytic = access_counts(&layer.spec, df);
            match oracle_access_counts(&layer.spec, df) {
                Ok(simulated) => {
                    let bad = compare_counts(&analytic, &simulated);
                    rows.push(OracleRow {
                        layer: i,
                        dataflow: df,
                        analytic,
                        simulated: Some(simulated),
                        pass: bad.is_empty(),
                        mismatched_fields: bad.into_iter().map(String::from).collect(),
                    });
                }
                Err(CostError::TooLarge { .. }) => rows.push(OracleRow {
                    layer: i,
                    dataflow: df,
                    analytic,
                    simulated: None,
                    mismatched_fields: Vec::new(),
                    pass: true,
                }),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(rows)
}
