//! Reference cost figures the analyzer is expected to reproduce, keyed by a
//! canonical network id. These drive both the acceptance suite and the
//! CLI's `analyze --expect`.

use crate::analyzer::{check, CheckResult, Expectation, Tolerance};

/// One golden row: parameter count in millions and FLOPs in billions for a
/// fixed analysis input, with their comparison tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Golden {
    pub table: &'static str,
    pub key: &'static str,
    /// Analysis input shape (batch 1).
    pub input: &'static [usize],
    pub params_millions: f64,
    pub params_tolerance: Tolerance,
    pub flops_giga: f64,
    pub flops_tolerance: Tolerance,
}

const EXACT: Tolerance = Tolerance::RoundedMillions;
const R1: Tolerance = Tolerance::Relative(0.01);
const R2: Tolerance = Tolerance::Relative(0.02);
const R3: Tolerance = Tolerance::Relative(0.03);
const R5: Tolerance = Tolerance::Relative(0.05);

const IMAGE: &[usize] = &[1, 3, 224, 224];
const SEG: &[usize] = &[1, 3, 473, 473];
const SSD: &[usize] = &[1, 3, 300, 300];
const CLIP: &[usize] = &[1, 3, 16, 224, 224];

pub const GOLDEN: &[Golden] = &[
    // Classification, default schedules.
    Golden { table: "table1", key: "resnet-50", input: IMAGE, params_millions: 25.56, params_tolerance: EXACT, flops_giga: 4.14, flops_tolerance: R3 },
    Golden { table: "table1", key: "pyconvresnet-50", input: IMAGE, params_millions: 24.85, params_tolerance: EXACT, flops_giga: 3.88, flops_tolerance: R3 },
    Golden { table: "table1", key: "pyconvhgresnet-50", input: IMAGE, params_millions: 25.23, params_tolerance: EXACT, flops_giga: 4.61, flops_tolerance: R3 },
    Golden { table: "table3", key: "resnet-101", input: IMAGE, params_millions: 44.55, params_tolerance: EXACT, flops_giga: 7.88, flops_tolerance: R3 },
    Golden { table: "table3", key: "resnet-152", input: IMAGE, params_millions: 60.19, params_tolerance: EXACT, flops_giga: 11.62, flops_tolerance: R3 },
    Golden { table: "table3", key: "pyconvresnet-101", input: IMAGE, params_millions: 42.31, params_tolerance: EXACT, flops_giga: 7.31, flops_tolerance: R3 },
    Golden { table: "table3", key: "pyconvresnet-152", input: IMAGE, params_millions: 56.64, params_tolerance: EXACT, flops_giga: 10.72, flops_tolerance: R3 },
    // Level-schedule ablations (baseline downsampling layout).
    Golden { table: "table2", key: "pyconvresnet-50/levels=1,1,1,1/down=stem-pool", input: IMAGE, params_millions: 25.56, params_tolerance: R1, flops_giga: 4.14, flops_tolerance: R3 },
    Golden { table: "table2", key: "pyconvresnet-50/levels=2,2,2,1/down=stem-pool", input: IMAGE, params_millions: 24.91, params_tolerance: R1, flops_giga: 3.91, flops_tolerance: R3 },
    Golden { table: "table2", key: "pyconvresnet-50/levels=3,3,2,1/down=stem-pool", input: IMAGE, params_millions: 24.85, params_tolerance: R1, flops_giga: 3.85, flops_tolerance: R3 },
    Golden { table: "table2", key: "pyconvresnet-50/levels=4,3,2,1/down=stem-pool", input: IMAGE, params_millions: 24.85, params_tolerance: R1, flops_giga: 3.84, flops_tolerance: R3 },
    Golden { table: "table2", key: "pyconvresnet-top-50/down=stem-pool", input: IMAGE, params_millions: 24.24, params_tolerance: R1, flops_giga: 3.63, flops_tolerance: R3 },
    // The 5-level row's group counts are partly underdetermined; looser bound.
    Golden { table: "table2", key: "pyconvresnet-50/levels=5,4,3,2/down=stem-pool", input: IMAGE, params_millions: 23.45, params_tolerance: R2, flops_giga: 3.71, flops_tolerance: R3 },
    Golden { table: "table2", key: "pyconvresnet-50", input: IMAGE, params_millions: 24.85, params_tolerance: R1, flops_giga: 3.88, flops_tolerance: R3 },
    // Segmentation head-to-head (backbone resnet-50, 150 classes, 473x473).
    Golden { table: "table4", key: "pyconvsegnet-resnet-50/os=8", input: SEG, params_millions: 34.40, params_tolerance: R2, flops_giga: 116.84, flops_tolerance: R3 },
    Golden { table: "table4", key: "pyconvsegnet-resnet-50/os=16", input: SEG, params_millions: 34.40, params_tolerance: R2, flops_giga: 36.08, flops_tolerance: R3 },
    // Detection (81 classes, 300x300).
    Golden { table: "table6", key: "pyconvssd-50", input: SSD, params_millions: 21.55, params_tolerance: R2, flops_giga: 19.71, flops_tolerance: R5 },
    // Video (400 classes, 16-frame clips).
    Golden { table: "table7", key: "resnet3d-50", input: CLIP, params_millions: 47.00, params_tolerance: R1, flops_giga: 93.26, flops_tolerance: R3 },
    Golden { table: "table7", key: "pyconvresnet3d-50", input: CLIP, params_millions: 44.91, params_tolerance: R1, flops_giga: 91.81, flops_tolerance: R3 },
];

/// Looks up a golden row by table id and canonical network key.
pub fn lookup(table: &str, key: &str) -> Option<&'static Golden> {
    GOLDEN
        .iter()
        .find(|g| g.table == table && g.key == key)
}

pub fn tables() -> Vec<&'static str> {
    let mut t: Vec<&'static str> = GOLDEN.iter().map(|g| g.table).collect();
    t.dedup();
    t
}

impl Golden {
    /// Compares measured totals (raw counts) against this row.
    pub fn check(&self, total_params: usize, total_flops: u64) -> [CheckResult; 2] {
        let params = check(
            &Expectation {
                quantity: format!("{} params (1e6)", self.key),
                expected: self.params_millions,
                tolerance: self.params_tolerance,
            },
            total_params as f64 / 1e6,
        );
        let flops = check(
            &Expectation {
                quantity: format!("{} flops (1e9)", self.key),
                expected: self.flops_giga,
                tolerance: self.flops_tolerance,
            },
            total_flops as f64 / 1e9,
        );
        [params, flops]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_finds_rows_by_table_and_key() {
        assert!(lookup("table1", "pyconvresnet-50").is_some());
        assert!(lookup("table1", "nope").is_none());
        assert!(lookup("table7", "pyconvresnet3d-50").is_some());
    }
}
