//! Brute-force access-count oracle.
//!
//! Walks the six-loop nest in the schedule each dataflow implies, tracking
//! register contents explicitly and counting every memory and register
//! event one at a time. No closed forms: every count here is the result of
//! incrementing inside a loop body, so agreement with
//! [`super::access_counts`] pins the analytic table to the documented reuse
//! policy.
//!
//! Counting conventions (shared with the analytic table):
//! - register accesses are accumulator touches for `X:Y` (one per MAC) and
//!   value loads for the weight-stationary dataflows (a re-fetch of a value
//!   a register already holds is memory traffic, not a new register event);
//! - every partial-sum spill is one output write, and every accumulation
//!   against a spilled partial is one output read followed by one write.

use super::{AccessCounts, CostError, DataflowKind};
use crate::net::LayerSpec;

/// Largest layer the oracle will simulate, in MACs.
pub const ORACLE_MAC_CAP: u64 = 10_000_000;

/// Simulates the loop nest under `dataflow`'s reuse policy and counts every
/// access. Must equal [`super::access_counts`] exactly.
pub fn oracle_access_counts(
    layer: &LayerSpec,
    dataflow: DataflowKind,
) -> Result<AccessCounts, CostError> {
    let macs = layer.mac_count();
    if macs > ORACLE_MAC_CAP {
        return Err(CostError::TooLarge {
            macs,
            cap: ORACLE_MAC_CAP,
        });
    }
    Ok(match dataflow {
        DataflowKind::Xy => simulate_xy(layer),
        DataflowKind::FxFy => simulate_fxfy(layer),
        DataflowKind::XFx => simulate_xfx(layer),
        DataflowKind::CiCo => simulate_cico(layer),
    })
}

/// `X:Y`: one PE per output position, output-stationary.
///
/// Partial sums live in per-PE accumulator registers; each weight is
/// fetched once and broadcast to the whole array; every input element is
/// fetched per MAC.
fn simulate_xy(l: &LayerSpec) -> AccessCounts {
    let mut c = AccessCounts::default();
    for _c_o in 0..l.c_out {
        // accumulators for the (x, y) array start at zero
        for _c_i in 0..l.c_in {
            for _f_y in 0..l.f_y {
                for _f_x in 0..l.f_x {
                    c.weight_reads += 1; // broadcast to all X*Y PEs
                    for _y in 0..l.y {
                        for _x in 0..l.x {
                            c.input_reads += 1;
                            c.register_accesses += 1; // accumulate in place
                        }
                    }
                }
            }
        }
        for _y in 0..l.y {
            for _x in 0..l.x {
                c.output_writes += 1; // drain accumulators
            }
        }
    }
    c
}

/// `F_X:F_Y`: one PE per filter tap, weight-stationary.
///
/// A filter plane's weights are loaded into PE registers once per
/// `(c_o, c_i)` and reused across all output positions; the spatial adder
/// tree yields one partial sum per position per input channel, spilled to
/// memory because no accumulator register is available.
fn simulate_fxfy(l: &LayerSpec) -> AccessCounts {
    let mut c = AccessCounts::default();
    let mut regs: Vec<Option<(usize, usize)>> = vec![None; l.f_y * l.f_x];
    for c_o in 0..l.c_out {
        for c_i in 0..l.c_in {
            for slot in 0..l.f_y * l.f_x {
                c.weight_reads += 1;
                c.register_accesses += 1; // new value enters the register
                regs[slot] = Some((c_o, c_i));
            }
            for _y in 0..l.y {
                for _x in 0..l.x {
                    for slot in 0..l.f_y * l.f_x {
                        debug_assert_eq!(regs[slot], Some((c_o, c_i)), "weight must be held");
                        c.input_reads += 1;
                    }
                    // adder tree -> one partial sum for this position
                    if c_i == 0 {
                        c.output_writes += 1;
                    } else {
                        c.output_reads += 1;
                        c.output_writes += 1;
                    }
                }
            }
        }
    }
    c
}

/// `X:F_X`: output columns by filter columns.
///
/// Each column of PEs holds `F_X` weights, reused across the `X` positions
/// of a row; the weights are re-fetched from memory for every output row,
/// so a register only sees a load event the first time its value appears.
/// Column adder trees yield one partial sum per `(x, c_i, f_y)` slice.
fn simulate_xfx(l: &LayerSpec) -> AccessCounts {
    let mut c = AccessCounts::default();
    let mut regs: Vec<Option<(usize, usize, usize)>> = vec![None; l.f_x];
    for c_o in 0..l.c_out {
        for c_i in 0..l.c_in {
            for f_y in 0..l.f_y {
                for y in 0..l.y {
                    for slot in 0..l.f_x {
                        c.weight_reads += 1;
                        if regs[slot] != Some((c_o, c_i, f_y)) {
                            c.register_accesses += 1;
                            regs[slot] = Some((c_o, c_i, f_y));
                        }
                    }
                    for _x in 0..l.x {
                        for slot in 0..l.f_x {
                            debug_assert_eq!(regs[slot], Some((c_o, c_i, f_y)));
                            c.input_reads += 1;
                        }
                    }
                    for _x in 0..l.x {
                        if c_i == 0 && f_y == 0 {
                            c.output_writes += 1;
                        } else {
                            c.output_reads += 1;
                            c.output_writes += 1;
                        }
                    }
                    let _ = y;
                }
            }
        }
    }
    c
}

/// `C_I:C_O`: channel pairs on the array, input broadcast.
///
/// Each input element is read once and broadcast across the `C_O` columns;
/// every PE fetches its own weight per MAC; the per-column adder trees over
/// `C_I` spill one partial sum per filter tap.
fn simulate_cico(l: &LayerSpec) -> AccessCounts {
    let mut c = AccessCounts::default();
    for _y in 0..l.y {
        for _x in 0..l.x {
            for f_y in 0..l.f_y {
                for f_x in 0..l.f_x {
                    for _c_i in 0..l.c_in {
                        c.input_reads += 1; // broadcast to all C_O columns
                        for _c_o in 0..l.c_out {
                            c.weight_reads += 1;
                        }
                    }
                    for _c_o in 0..l.c_out {
                        if f_y == 0 && f_x == 0 {
                            c.output_writes += 1;
                        } else {
                            c.output_reads += 1;
                            c.output_writes += 1;
                        }
                    }
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::access_counts;
    use crate::net::LayerKind;

    #[test]
    fn one_by_one_filter_has_no_output_reads_under_cico() {
        let layer = LayerSpec::fc(10, 4);
        let counts = oracle_access_counts(&layer, DataflowKind::CiCo).unwrap();
        assert_eq!(counts.output_reads, 0);
        assert_eq!(counts, access_counts(&layer, DataflowKind::CiCo));
    }

    #[test]
    fn single_mac_layer() {
        let layer = LayerSpec {
            kind: LayerKind::Conv,
            c_out: 1,
            c_in: 1,
            x: 1,
            y: 1,
            f_x: 1,
            f_y: 1,
            stride: 1,
            padding: 0,
        };
        for df in DataflowKind::ALL {
            let counts = oracle_access_counts(&layer, df).unwrap();
            assert_eq!(counts.input_reads, 1);
            assert_eq!(counts.weight_reads, 1);
            assert_eq!(counts.output_writes, 1);
            assert_eq!(counts.output_reads, 0);
            assert_eq!(counts, access_counts(&layer, df));
        }
    }

    #[test]
    fn oracle_matches_analytic_on_864_mac_layer() {
        let layer = LayerSpec::conv(2, 3, 4, 4, 3, 3, 1, 1);
        for df in DataflowKind::ALL {
            assert_eq!(
                oracle_access_counts(&layer, df).unwrap(),
                access_counts(&layer, df),
                "dataflow {df}"
            );
        }
    }

    #[test]
    fn oracle_matches_analytic_on_lenet() {
        let net = crate::net::parse_network(crate::net::lenet5_json().as_bytes()).unwrap();
        for layer in &net.layers {
            for df in DataflowKind::ALL {
                assert_eq!(
                    oracle_access_counts(&layer.spec, df).unwrap(),
                    access_counts(&layer.spec, df),
                    "layer {:?} dataflow {df}",
                    layer.spec
                );
            }
        }
    }

    #[test]
    fn size_cap_enforced() {
        let layer = LayerSpec::conv(512, 512, 32, 32, 3, 3, 1, 1);
        assert!(layer.mac_count() > ORACLE_MAC_CAP);
        assert!(matches!(
            oracle_access_counts(&layer, DataflowKind::Xy),
            Err(CostError::TooLarge { .. })
        ));
    }
}
