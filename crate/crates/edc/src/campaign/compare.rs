//! Per-dataflow campaign comparison, the data behind `edc compare`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, run_compress, CampaignConfig, CampaignError};
use crate::cost::network_energy;
use crate::report::{atomic_write, num};
use crate::rl::Ablate;

/// One dataflow's line in the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub dataflow: String,
    pub baseline_energy: f64,
    pub baseline_area: f64,
    pub optimized_energy: Option<f64>,
    pub optimized_accuracy: Option<f64>,
    pub optimized_area: Option<f64>,
    pub energy_reduction: Option<f64>,
    /// 1-based rank by baseline energy (lower energy ranks first).
    pub rank_before: usize,
    /// 1-based rank by optimized energy; infeasible campaigns rank last.
    pub rank_after: usize,
    pub quant_only_energy: Option<f64>,
    pub prune_only_energy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// `dataflow,baseline_energy,optimized_energy,accuracy,area,rank_before,rank_after,quant_only_energy,prune_only_energy`
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataflow,baseline_energy,optimized_energy,accuracy,area,rank_before,rank_after,quant_only_energy,prune_only_energy\n",
        );
        let opt = |v: &Option<f64>| v.map(num).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.dataflow,
                num(r.baseline_energy),
                opt(&r.optimized_energy),
                opt(&r.optimized_accuracy),
                opt(&r.optimized_area),
                r.rank_before,
                r.rank_after,
                opt(&r.quant_only_energy),
                opt(&r.prune_only_energy),
            ));
        }
        out
    }
}

/// Runs one campaign per selected dataflow (plus quantization-only and
/// pruning-only campaigns when `include_ablations`), ranks the dataflows
/// before and after optimization, and writes `compare.csv` /
/// `compare.json` into the config's output directory.
pub fn run_compare(
    cfg: &CampaignConfig,
    include_ablations: bool,
) -> Result<CompareReport, CampaignError> {
    let net = cfg.load_network()?;
    let dataflows = cfg.dataflows()?;
    let uncompressed = vec![(8u32, 1.0f64); net.layers.len()];

    let mut rows = Vec::new();
    for &df in &dataflows {
        let constants = cfg.resolve_constants(&net, df)?;
        let baseline = network_energy(&net, &uncompressed, df, &constants)?;

        let out_dir = cfg.out_dir.join(df.name());
        let outcome = run_compress(cfg, df, &out_dir)?;

        let optimized = outcome.result.best.as_ref();
        let optimized_area = optimized
            .map(|b| {
                let assignments: Vec<(u32, f64)> = b
                    .q
                    .iter()
                    .zip(&b.p)
                    .map(|(&q, &p)| (crate::compress::effective_bits(q), p))
                    .collect();
                network_energy(&net, &assignments, df, &constants)
                    .map(|r| r.area.total_area)
            })
            .transpose()?;

        let (quant_only_energy, prune_only_energy) = if include_ablations {
            let mut quant_cfg = cfg.clone();
            quant_cfg.ablate = Ablate::Quant;
            let quant = run_compress(&quant_cfg, df, &out_dir.join("quant"))?;
            let mut prune_cfg = cfg.clone();
            prune_cfg.ablate = Ablate::Prune;
            let prune = run_compress(&prune_cfg, df, &out_dir.join("prune"))?;
            (
                quant.result.best.map(|b| b.energy),
                prune.result.best.map(|b| b.energy),
            )
        } else {
            (None, None)
        };

        rows.push(CompareRow {
            dataflow: df.name().to_string(),
            baseline_energy: baseline.total(),
            baseline_area: baseline.area.total_area,
            optimized_energy: optimized.map(|b| b.energy),
            optimized_accuracy: optimized.map(|b| b.accuracy),
            optimized_area,
            energy_reduction: outcome.energy_reduction,
            rank_before: 0,
            rank_after: 0,
            quant_only_energy,
            prune_only_energy,
        });
    }

    assign_ranks(&mut rows);
    let report = CompareReport { rows };
    write_report(&report, &cfg.out_dir)?;
    Ok(report)
}

fn assign_ranks(rows: &mut [CompareRow]) {
    let mut before: Vec<usize> = (0..rows.len()).collect();
    before.sort_by(|&a, &b| {
        rows[a]
            .baseline_energy
            .partial_cmp(&rows[b].baseline_energy)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for (rank, &i) in before.iter().enumerate() {
        rows[i].rank_before = rank + 1;
    }
    let mut after: Vec<usize> = (0..rows.len()).collect();
    after.sort_by(|&a, &b| {
        let ea = rows[a].optimized_energy.unwrap_or(f64::INFINITY);
        let eb = rows[b].optimized_energy.unwrap_or(f64::INFINITY);
        ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal)
    });
    for (rank, &i) in after.iter().enumerate() {
        rows[i].rank_after = rank + 1;
    }
}

fn write_report(report: &CompareReport, out_dir: &Path) -> Result<(), CampaignError> {
    let csv_path = out_dir.join("compare.csv");
    atomic_write(&csv_path, report.to_csv().as_bytes()).map_err(io_err(&csv_path))?;
    let json_path = out_dir.join("compare.json");
    atomic_write(
        &json_path,
        serde_json::to_string_pretty(report)?.as_bytes(),
    )
    .map_err(io_err(&json_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{Mode, OptimizerKind};

    #[test]
    fn compare_ranks_and_serializes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg =
            CampaignConfig::from_json(br#"{"network": "lenet5", "mode": "surrogate"}"#).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        cfg.optimizer = OptimizerKind::Random;
        cfg.episodes = 2;
        cfg.dataflow = "all".into();
        cfg.baseline_epochs = 0;
        assert!(matches!(cfg.mode, Mode::Surrogate));

        let report = run_compare(&cfg, false).unwrap();
        assert_eq!(report.rows.len(), 4);
        let mut before: Vec<usize> = report.rows.iter().map(|r| r.rank_before).collect();
        before.sort_unstable();
        assert_eq!(before, vec![1, 2, 3, 4]);
        assert!(dir.path().join("compare.csv").exists());
        assert!(dir.path().join("compare.json").exists());

        let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert!(csv.starts_with("dataflow,baseline_energy,optimized_energy,accuracy,area,rank_before,rank_after,quant_only_energy,prune_only_energy\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn scaling_constants_preserves_rankings() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let base = br#"{"network": "lenet5", "mode": "surrogate", "optimizer": "random",
                        "episodes": 2, "dataflow": "all", "baseline_epochs": 0}"#;
        let mut cfg1 = CampaignConfig::from_json(base).unwrap();
        cfg1.out_dir = dir1.path().to_path_buf();
        let mut cfg2 = CampaignConfig::from_json(base).unwrap();
        cfg2.out_dir = dir2.path().to_path_buf();
        cfg2.constants = crate::campaign::ConstantsSource::Explicit(
            crate::cost::CostConstants::default().scaled(10.0),
        );

        let r1 = run_compare(&cfg1, false).unwrap();
        let r2 = run_compare(&cfg2, false).unwrap();
        for (a, b) in r1.rows.iter().zip(&r2.rows) {
            assert_eq!(a.rank_before, b.rank_before);
            assert_eq!(a.rank_after, b.rank_after);
        }
    }
}
