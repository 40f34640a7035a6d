//! Analytic energy and area model for CNN accelerator dataflows.
//!
//! A dataflow unrolls two of the six convolution loops onto a spatial PE
//! array; the choice fixes which operands are held in registers and reused,
//! and therefore how many element accesses each tensor costs per layer.
//! [`access_counts`] is the closed-form traffic table, [`oracle_access_counts`]
//! re-derives the same counts by brute-force event counting over the loop
//! nest, and [`layer_energy`] / [`area`] turn counts into energy and area
//! figures in arbitrary units.
//!
//! Traffic accounting notes (the verbal reuse policies made precise):
//!
//! - `XY` keeps partial sums in per-PE accumulator registers (one register
//!   access per MAC) and broadcasts each weight to the whole array, so each
//!   weight is fetched once.
//! - `FXFY` holds one filter's `F_X*F_Y` weights in registers across all
//!   `X*Y` positions; the spatial adder tree produces one partial sum per
//!   input channel, which spills to memory.
//! - `XFX` holds `F_X` weights per column but re-fetches them for every
//!   output row, so weights are reused `X` times; partial sums spill per
//!   `(c_i, f_y)` slice.
//! - `CICO` broadcasts each input element across `C_O` columns and reads
//!   every weight from memory; partial sums spill per filter tap.
//!
//! Overlapping-window input reuse is deliberately not modeled: the three
//! spatial dataflows read one input element per MAC.

mod oracle;

pub use oracle::{oracle_access_counts, ORACLE_MAC_CAP};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{LayerSpec, NetworkSpec};

/// Errors from the cost model.
#[derive(Debug, Error)]
pub enum CostError {
    #[error("weight bit-width {0} outside [1, 8]")]
    BadBits(u32),
    #[error("remaining fraction {0} outside (0, 1]")]
    BadRemaining(f64),
    #[error("activation bit-width {0} must be even for the LUT formula")]
    OddActivationBits(u32),
    #[error("expected {expected} per-layer assignments, got {got}")]
    LayerCount { expected: usize, got: usize },
    #[error("layer too large to simulate: {macs} MACs exceeds cap {cap}")]
    TooLarge { macs: u64, cap: u64 },
    #[error("network moves no data; cannot calibrate")]
    NoMovement,
    #[error("calibration target {0} outside (0, 1)")]
    BadTarget(f64),
    #[error("invalid cost constants: {0}")]
    BadConstants(String),
}

/// The four implemented loop-pair dataflows.
///
/// A dataflow `A:B` unrolls loops `A` and `B` onto the PE array. Six loops
/// give fifteen possible pairs; cost rules are provided for the four below,
/// and the enum is the extension point for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataflowKind {
    /// `X:Y` — output spatial positions on the array, output-stationary.
    Xy,
    /// `F_X:F_Y` — filter taps on the array, weight-stationary.
    FxFy,
    /// `X:F_X` — output column by filter column.
    XFx,
    /// `C_I:C_O` — input by output channels, input broadcast.
    CiCo,
}

impl DataflowKind {
    pub const ALL: [DataflowKind; 4] = [
        DataflowKind::Xy,
        DataflowKind::FxFy,
        DataflowKind::XFx,
        DataflowKind::CiCo,
    ];

    /// Lowercase CLI/file name.
    pub fn name(self) -> &'static str {
        match self {
            DataflowKind::Xy => "xy",
            DataflowKind::FxFy => "fxfy",
            DataflowKind::XFx => "xfx",
            DataflowKind::CiCo => "cico",
        }
    }

    pub fn parse(s: &str) -> Option<DataflowKind> {
        match s.to_ascii_lowercase().as_str() {
            "xy" | "x:y" => Some(DataflowKind::Xy),
            "fxfy" | "fx:fy" => Some(DataflowKind::FxFy),
            "xfx" | "x:fx" => Some(DataflowKind::XFx),
            "cico" | "ci:co" => Some(DataflowKind::CiCo),
            _ => None,
        }
    }

    /// PEs a layer occupies: the product of the two unrolled dimensions.
    pub fn pe_count(self, layer: &LayerSpec) -> u64 {
        match self {
            DataflowKind::Xy => layer.x as u64 * layer.y as u64,
            DataflowKind::FxFy => layer.f_x as u64 * layer.f_y as u64,
            DataflowKind::XFx => layer.x as u64 * layer.f_x as u64,
            DataflowKind::CiCo => layer.c_in as u64 * layer.c_out as u64,
        }
    }
}

impl std::fmt::Display for DataflowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit energy/area constants, in arbitrary units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    /// Energy per adder per MAC.
    pub e_adder: f64,
    /// Energy per bit moved to/from memory.
    pub e_bit: f64,
    /// Energy per register access.
    pub e_reg: f64,
    /// Activation bit-width.
    pub a_bits: u32,
    /// Area per LUT.
    pub lut_area_unit: f64,
    /// Area per memory bit.
    pub ram_area_per_bit: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            e_adder: 1.0,
            e_bit: 1.0,
            e_reg: 0.0,
            a_bits: 10,
            lut_area_unit: 1.0,
            ram_area_per_bit: 1.0,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.a_bits < 1 {
            return Err(CostError::BadConstants("a_bits must be >= 1".into()));
        }
        let vals = [
            self.e_adder,
            self.e_bit,
            self.e_reg,
            self.lut_area_unit,
            self.ram_area_per_bit,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CostError::BadConstants(
                "unit constants must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Scales every unit constant by `c` (bit-widths unchanged).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            e_adder: self.e_adder * c,
            e_bit: self.e_bit * c,
            e_reg: self.e_reg * c,
            a_bits: self.a_bits,
            lut_area_unit: self.lut_area_unit * c,
            ram_area_per_bit: self.ram_area_per_bit * c,
        }
    }
}

/// Element-granularity access counts for one layer under one dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessCounts {
    pub input_reads: u64,
    pub weight_reads: u64,
    pub output_reads: u64,
    pub output_writes: u64,
    pub register_accesses: u64,
}

/// Adders in an `a_bits x w_bits` array multiplier: `(a_bits - 1) * w_bits`.
pub fn adder_count(a_bits: u32, w_bits: u32) -> u64 {
    assert!(a_bits >= 1 && w_bits >= 1, "bit-widths must be >= 1");
    (a_bits as u64 - 1) * w_bits as u64
}

/// LUTs for an `a_bits x (w_bits + 1)` multiplier: `a_bits / 2 * (w_bits + 1)`.
///
/// `a_bits` must be even (10 by default).
pub fn lut_count(a_bits: u32, w_bits: u32) -> Result<u64, CostError> {
    if a_bits % 2 != 0 {
        return Err(CostError::OddActivationBits(a_bits));
    }
    Ok(a_bits as u64 / 2 * (w_bits as u64 + 1))
}

/// Closed-form per-tensor access counts for a layer under a dataflow.
pub fn access_counts(layer: &LayerSpec, dataflow: DataflowKind) -> AccessCounts {
    let c_o = layer.c_out as u64;
    let c_i = layer.c_in as u64;
    let x = layer.x as u64;
    let y = layer.y as u64;
    let f_x = layer.f_x as u64;
    let f_y = layer.f_y as u64;
    let macs = layer.mac_count();
    let params = layer.param_count();
    match dataflow {
        DataflowKind::Xy => AccessCounts {
            input_reads: macs,
            weight_reads: params, // = macs / (x * y)
            output_reads: 0,
            output_writes: c_o * x * y,
            register_accesses: macs,
        },
        DataflowKind::FxFy => AccessCounts {
            input_reads: macs,
            weight_reads: params,
            output_reads: c_o * x * y * (c_i - 1),
            output_writes: c_o * x * y * c_i,
            register_accesses: params,
        },
        DataflowKind::XFx => AccessCounts {
            input_reads: macs,
            weight_reads: c_o * c_i * y * f_x * f_y, // = macs / x
            output_reads: c_o * x * y * (c_i * f_y - 1),
            output_writes: c_o * x * y * c_i * f_y,
            register_accesses: params,
        },
        DataflowKind::CiCo => AccessCounts {
            input_reads: c_i * x * y * f_x * f_y, // = macs / c_o
            weight_reads: macs,
            output_reads: c_o * x * y * (f_x * f_y - 1),
            output_writes: c_o * x * y * f_x * f_y,
            register_accesses: 0,
        },
    }
}

/// Per-layer energy breakdown, in the units of [`CostConstants`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub pe_energy: f64,
    pub input_move: f64,
    pub weight_move: f64,
    pub output_move: f64,
    pub register_energy: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.pe_energy + self.input_move + self.weight_move + self.output_move + self.register_energy
    }

    /// Data-movement share of the total.
    pub fn movement_fraction(&self) -> f64 {
        (self.input_move + self.weight_move + self.output_move) / self.total()
    }

    fn add(&mut self, other: &EnergyBreakdown) {
        self.pe_energy += other.pe_energy;
        self.input_move += other.input_move;
        self.weight_move += other.weight_move;
        self.output_move += other.output_move;
        self.register_energy += other.register_energy;
    }
}

/// Weight-movement energy: `reads * p * q_bits * e_bit`.
///
/// Pruned weights are not fetched and quantized weights are narrower, so
/// halving both `p` and `q_bits` quarters this term. Kept separate from
/// [`layer_energy`] so the law can be evaluated at arbitrary bit-widths.
pub fn weight_movement_energy(weight_reads: u64, q_bits: u32, p: f64, e_bit: f64) -> f64 {
    weight_reads as f64 * p * q_bits as f64 * e_bit
}

/// Energy breakdown of one layer at weight bit-width `q_bits` and pruning
/// remaining fraction `p`.
///
/// Pruning scales only MAC energy and weight traffic: a zero weight skips
/// its multiplier and is never fetched. Input and output movement are paid
/// in full either way.
pub fn layer_energy(
    layer: &LayerSpec,
    dataflow: DataflowKind,
    q_bits: u32,
    p: f64,
    k: &CostConstants,
) -> Result<EnergyBreakdown, CostError> {
    if !(1..=8).contains(&q_bits) {
        return Err(CostError::BadBits(q_bits));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(CostError::BadRemaining(p));
    }
    let counts = access_counts(layer, dataflow);
    let macs = layer.mac_count() as f64;
    Ok(EnergyBreakdown {
        pe_energy: macs * p * k.e_adder * adder_count(k.a_bits, q_bits) as f64,
        input_move: counts.input_reads as f64 * k.a_bits as f64 * k.e_bit,
        weight_move: weight_movement_energy(counts.weight_reads, q_bits, p, k.e_bit),
        output_move: (counts.output_reads + counts.output_writes) as f64 * k.a_bits as f64 * k.e_bit,
        register_energy: counts.register_accesses as f64 * k.e_reg,
    })
}

/// Per-layer entry of a [`CostReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: usize,
    pub q_bits: u32,
    pub p: f64,
    pub energy: EnergyBreakdown,
    /// PEs this layer alone would occupy under the dataflow.
    pub pe_count: u64,
    /// LUT area if the array were sized for this layer at its own bit-width.
    pub logic_area: f64,
    /// Weight storage bits for this layer, pruning bitmap included.
    pub memory_bits: u64,
}

/// Accelerator area figures.
///
/// One PE array serves all layers (time-multiplexed), so it is sized to the
/// largest layer and the widest weight; total area is not the sum of the
/// per-layer entries.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AreaReport {
    /// `max` over layers of the dataflow's unrolled pair product.
    pub pe_count: u64,
    pub logic_area: f64,
    /// Weight bits + pruning bitmaps + the largest feature map buffer.
    pub memory_bits: u64,
    pub memory_area: f64,
    pub total_area: f64,
}

/// Full per-network cost report for one dataflow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub dataflow: DataflowKind,
    pub layers: Vec<LayerCost>,
    pub total_energy: EnergyBreakdown,
    pub area: AreaReport,
}

impl CostReport {
    pub fn total(&self) -> f64 {
        self.total_energy.total()
    }
}

/// Sums [`layer_energy`] over the network and attaches the area report.
///
/// `assignments` holds one `(q_bits, p)` pair per layer.
pub fn network_energy(
    net: &NetworkSpec,
    assignments: &[(u32, f64)],
    dataflow: DataflowKind,
    k: &CostConstants,
) -> Result<CostReport, CostError> {
    if assignments.len() != net.layers.len() {
        return Err(CostError::LayerCount {
            expected: net.layers.len(),
            got: assignments.len(),
        });
    }
    k.validate()?;
    let mut layers = Vec::with_capacity(net.layers.len());
    let mut total = EnergyBreakdown::default();
    for (i, (layer, &(q_bits, p))) in net.layers.iter().zip(assignments).enumerate() {
        let energy = layer_energy(&layer.spec, dataflow, q_bits, p, k)?;
        total.add(&energy);
        let pe_count = dataflow.pe_count(&layer.spec);
        layers.push(LayerCost {
            layer: i,
            q_bits,
            p,
            energy,
            pe_count,
            logic_area: pe_count as f64 * lut_count(k.a_bits, q_bits)? as f64 * k.lut_area_unit,
            memory_bits: layer_weight_bits(&layer.spec, q_bits, p),
        });
    }
    let area = area(net, dataflow, assignments, k)?;
    Ok(CostReport {
        dataflow,
        layers,
        total_energy: total,
        area,
    })
}

/// Weight storage bits for one layer: kept weights at `q_bits` each plus a
/// 1-bit-per-original-parameter pruning bitmap.
fn layer_weight_bits(layer: &LayerSpec, q_bits: u32, p: f64) -> u64 {
    let params = layer.param_count();
    (params as f64 * p).ceil() as u64 * q_bits as u64 + params
}

/// Accelerator area for a network under a dataflow.
///
/// The PE array is sized to the largest layer and multipliers to the widest
/// weight; memory must hold all weights plus the largest feature map at
/// activation precision.
pub fn area(
    net: &NetworkSpec,
    dataflow: DataflowKind,
    assignments: &[(u32, f64)],
    k: &CostConstants,
) -> Result<AreaReport, CostError> {
    if assignments.len() != net.layers.len() {
        return Err(CostError::LayerCount {
            expected: net.layers.len(),
            got: assignments.len(),
        });
    }
    let q_max = assignments.iter().map(|&(q, _)| q).max().unwrap_or(1);
    if !(1..=8).contains(&q_max) {
        return Err(CostError::BadBits(q_max));
    }
    let pe_count = net
        .layers
        .iter()
        .map(|l| dataflow.pe_count(&l.spec))
        .max()
        .unwrap_or(0);
    let logic_area = pe_count as f64 * lut_count(k.a_bits, q_max)? as f64 * k.lut_area_unit;
    let weight_bits: u64 = net
        .layers
        .iter()
        .zip(assignments)
        .map(|(l, &(q, p))| layer_weight_bits(&l.spec, q, p))
        .sum();
    let memory_bits = weight_bits + k.a_bits as u64 * net.max_feature_map();
    let memory_area = memory_bits as f64 * k.ram_area_per_bit;
    Ok(AreaReport {
        pe_count,
        logic_area,
        memory_bits,
        memory_area,
        total_area: logic_area + memory_area,
    })
}

/// Solves for `e_bit` so that the uncompressed network's data-movement share
/// of total energy equals `target_move_fraction`, holding `e_adder = 1`.
///
/// Calibration is dataflow-specific: re-evaluating another dataflow with the
/// returned constants generally gives a different share.
pub fn calibrate_energy_constants(
    net: &NetworkSpec,
    dataflow: DataflowKind,
    target_move_fraction: f64,
) -> Result<CostConstants, CostError> {
    if !(target_move_fraction > 0.0 && target_move_fraction < 1.0) {
        return Err(CostError::BadTarget(target_move_fraction));
    }
    let unit = CostConstants {
        e_adder: 1.0,
        e_bit: 1.0,
        e_reg: 0.0,
        ..CostConstants::default()
    };
    let assignments = vec![(8u32, 1.0f64); net.layers.len()];
    let report = network_energy(net, &assignments, dataflow, &unit)?;
    let movement_units =
        report.total_energy.input_move + report.total_energy.weight_move + report.total_energy.output_move;
    let pe_units = report.total_energy.pe_energy;
    if movement_units <= 0.0 {
        return Err(CostError::NoMovement);
    }
    Ok(CostConstants {
        e_bit: target_move_fraction * pe_units / ((1.0 - target_move_fraction) * movement_units),
        ..unit
    })
}
