//! Hardware-independent inference-cost accounting for program trees: FLOP
//! counts and peak live bytes under a fixed published convention.
//!
//! Counting convention (per node, on its statically inferred input length):
//! - SegDect and concatenations: 0 FLOPs.
//! - DomDiff on length l: l - 1.
//! - DomFreq on length l: 8*l^2 + 4*l (complex MAC = 8 per sample per bin;
//!   magnitude = 2 squares + 1 add + 1 sqrt per bin), with a 16*l-byte
//!   complex scratch buffer.
//! - Convolution with kernel length c: 2c - 1 per output sample; pooling
//!   per activation map of length r: PPV r, MEAN r, MAX r - 1. One map
//!   (the longest) is live at a time.
//! - StatisDist: the sort is counted as l * ceil(log2 l) comparisons at
//!   1 FLOP each, subsampling is free; sorting copies the patch only when
//!   the patch is the shared input series.
//! - Memory is simulated over a bottom-up, left-to-right schedule with
//!   8-byte elements: a buffer lives from its producing node until its last
//!   consumer finishes, and a parent's buffer is allocated before its
//!   children are freed. The input buffer (8*L bytes) is live from the
//!   start until its last direct consumer completes.

use serde::Serialize;

use crate::classifier::ExtraTreesModel;
use crate::error::{Error, Result};
use crate::ops::{kernel_lengths, statis_dist_len};
use crate::program::{shape_of, ProgramTree, Op, Shape, TreeNode};

/// One breakdown row: the node's cost and the total live bytes during its
/// execution step.
#[derive(Debug, Clone, Serialize)]
pub struct NodeCost {
    pub path: String,
    pub op: String,
    pub flops: u64,
    pub live_bytes: u64,
}

/// Microcontroller deployment envelope: SRAM size and the FLOP budget of a
/// 100 ms response at the maximum clock (1 FLOP per cycle).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeviceEnvelope {
    pub name: &'static str,
    pub sram_bytes: u64,
    pub flop_budget: u64,
}

pub const STM32F446RE: DeviceEnvelope = DeviceEnvelope {
    name: "stm32f446re",
    sram_bytes: 128 * 1024,
    flop_budget: 18_000_000, // 180 MHz * 100 ms
};

pub const STM32L552ZE: DeviceEnvelope = DeviceEnvelope {
    name: "stm32l552ze",
    sram_bytes: 256 * 1024,
    flop_budget: 11_000_000, // 110 MHz * 100 ms
};

/// Full cost report for one inference of a tree on a series of its native
/// length.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub series_length: usize,
    pub feature_dim: usize,
    pub flops: u64,
    pub peak_bytes: u64,
    /// Worst-case decision-forest traversal cost, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier_flops: Option<u64>,
    pub fits_stm32f446re: bool,
    pub fits_stm32l552ze: bool,
    pub breakdown: Vec<NodeCost>,
}

impl CostReport {
    pub fn total_flops(&self) -> u64 {
        self.flops + self.classifier_flops.unwrap_or(0)
    }

    pub fn fits(&self, env: &DeviceEnvelope) -> bool {
        self.total_flops() <= env.flop_budget && self.peak_bytes <= env.sram_bytes
    }

    /// The one-line summary printed by the cost command.
    pub fn summary_line(&self) -> String {
        format!(
            "flops={} peak_bytes={} fits_stm32f446re={} fits_stm32l552ze={}",
            self.total_flops(),
            self.peak_bytes,
            self.fits(&STM32F446RE),
            self.fits(&STM32L552ZE)
        )
    }
}

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

struct Simulator {
    series_length: usize,
    live: u64,
    peak: u64,
    input_consumers_left: usize,
    breakdown: Vec<NodeCost>,
}

impl Simulator {
    /// Walks one node; returns its output buffer size in bytes.
    fn walk(&mut self, node: &TreeNode, path: &mut Vec<usize>) -> u64 {
        if node.op.is_value_terminal() {
            return 0;
        }
        let mut child_bytes = Vec::new();
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            child_bytes.push(self.walk(child, path));
            path.pop();
        }

        let (flops, out_elems, scratch_bytes) = self.node_cost(node);
        let out_bytes = 8 * out_elems as u64;

        self.live += scratch_bytes;
        self.live += out_bytes;
        self.peak = self.peak.max(self.live);
        let live_at_step = self.live;
        self.live -= scratch_bytes;
        for b in child_bytes {
            self.live -= b;
        }
        // The shared input buffer dies with its last direct consumer.
        let consumed_inputs =
            node.children.iter().filter(|c| c.op == Op::InputSeries).count();
        for _ in 0..consumed_inputs {
            self.input_consumers_left -= 1;
            if self.input_consumers_left == 0 {
                self.live -= 8 * self.series_length as u64;
            }
        }

        self.breakdown.push(NodeCost {
            path: path_label(path),
            op: node.op.name().to_string(),
            flops,
            live_bytes: live_at_step,
        });
        out_bytes
    }

    /// (flops, output elements, scratch bytes) of one node under the
    /// published convention.
    fn node_cost(&self, node: &TreeNode) -> (u64, usize, u64) {
        let l = self.series_length;
        let input_shape =
            node.children.first().map(|c| shape_of(c, l).expect("tree is validated"));
        match node.op {
            Op::InputSeries => (0, 0, 0),
            Op::SegDect => {
                let out = match shape_of(node, l).expect("validated") {
                    Shape::SegmentLocated { len } => len,
                    _ => unreachable!(),
                };
                (0, out, 0)
            }
            Op::DomFreq => {
                let n = input_shape.unwrap().segment_len().unwrap();
                let flops = 8 * (n as u64) * (n as u64) + 4 * n as u64;
                (flops, n, 16 * n as u64)
            }
            Op::DomDiff => {
                let n = input_shape.unwrap().segment_len().unwrap();
                ((n - 1) as u64, n - 1, 0)
            }
            Op::AdaPatch => {
                let (patch_len, n_patch) = match shape_of(node, l).expect("validated") {
                    Shape::Patches { patch_len, n_patch } => (patch_len, n_patch),
                    _ => unreachable!(),
                };
                (0, patch_len * n_patch, 0)
            }
            Op::ShapeInc | Op::ShapeDec | Op::ShapePeak => {
                let (patch_len, n_patch) = patchwise(input_shape.unwrap());
                let lambda =
                    node.children[1].value.and_then(|v| v.as_real()).unwrap_or(0.5);
                let kernels = kernel_lengths(node.op.kernel_kind().unwrap(), patch_len, lambda);
                let mut per_patch = 0u64;
                let mut max_map = 0usize;
                for &c in &kernels {
                    let map_len = patch_len - c + 1;
                    max_map = max_map.max(map_len);
                    let conv = (2 * c as u64 - 1) * map_len as u64;
                    let pools = 3 * map_len as u64 - 1;
                    per_patch += conv + pools;
                }
                let flops = per_patch * n_patch as u64;
                let out = 3 * kernels.len() * n_patch;
                (flops, out, 8 * max_map as u64)
            }
            Op::StatisDist => {
                let (patch_len, n_patch) = patchwise(input_shape.unwrap());
                let tau = node.children[1].value.and_then(|v| v.as_real()).unwrap_or(0.5);
                let sort = patch_len as u64 * ceil_log2(patch_len);
                let out = statis_dist_len(patch_len, tau) * n_patch;
                // Sorting happens in place on owned buffers; only the
                // shared input series needs a defensive copy.
                let scratch = if node.children[0].op == Op::InputSeries {
                    8 * patch_len as u64
                } else {
                    0
                };
                (sort * n_patch as u64, out, scratch)
            }
            Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 | Op::FeaConH => {
                let out = match shape_of(node, l).expect("validated") {
                    Shape::Vectors { dim } => dim,
                    _ => unreachable!(),
                };
                (0, out, 0)
            }
            _ => (0, 0, 0),
        }
    }
}

fn patchwise(shape: Shape) -> (usize, usize) {
    match shape {
        Shape::Patches { patch_len, n_patch } => (patch_len, n_patch),
        other => (other.segment_len().expect("segment-like"), 1),
    }
}

fn path_label(path: &[usize]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        let idx: Vec<String> = path.iter().map(usize::to_string).collect();
        format!("root.{}", idx.join("."))
    }
}

fn count_input_leaves(node: &TreeNode) -> usize {
    let own = usize::from(node.op == Op::InputSeries);
    own + node.children.iter().map(count_input_leaves).sum::<usize>()
}

/// Builds the full cost report; `series_length` must match the tree.
pub fn cost_report(t: &ProgramTree, series_length: usize) -> Result<CostReport> {
    if series_length != t.series_length() {
        return Err(Error::LengthMismatch { expected: t.series_length(), got: series_length });
    }
    let input_bytes = 8 * series_length as u64;
    let mut sim = Simulator {
        series_length,
        live: input_bytes,
        peak: input_bytes,
        input_consumers_left: count_input_leaves(t.root()).max(1),
        breakdown: Vec::new(),
    };
    sim.walk(t.root(), &mut Vec::new());
    let flops = sim.breakdown.iter().map(|n| n.flops).sum();
    let mut report = CostReport {
        series_length,
        feature_dim: t.feature_dim(),
        flops,
        peak_bytes: sim.peak,
        classifier_flops: None,
        fits_stm32f446re: false,
        fits_stm32l552ze: false,
        breakdown: sim.breakdown,
    };
    report.fits_stm32f446re = report.fits(&STM32F446RE);
    report.fits_stm32l552ze = report.fits(&STM32L552ZE);
    Ok(report)
}

/// Total FLOPs of one inference.
pub fn count_flops(t: &ProgramTree, series_length: usize) -> Result<u64> {
    Ok(cost_report(t, series_length)?.flops)
}

/// Peak live bytes of one inference.
pub fn peak_memory_bytes(t: &ProgramTree, series_length: usize) -> Result<u64> {
    Ok(cost_report(t, series_length)?.peak_bytes)
}

/// Worst-case forest traversal cost at 1 FLOP per node comparison: the sum
/// over trees of the longest root-to-leaf comparison path.
pub fn classifier_traversal_flops(model: &ExtraTreesModel) -> u64 {
    model.trees.iter().map(|t| t.max_depth() as u64).sum()
}

/// Attaches the opt-in classifier traversal cost and refreshes the envelope
/// flags.
pub fn with_classifier_cost(mut report: CostReport, model: &ExtraTreesModel) -> CostReport {
    report.classifier_flops = Some(classifier_traversal_flops(model));
    report.fits_stm32f446re = report.fits(&STM32F446RE);
    report.fits_stm32l552ze = report.fits(&STM32L552ZE);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{generate_tree, parse_rendered, GenMethod, ProgramTree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree(text: &str, l: usize) -> ProgramTree {
        parse_rendered(text, l).unwrap()
    }

    #[test]
    fn statis_dist_pair_on_length_eight() {
        // Two StatisDist branches on a length-8 series: sort cost
        // 8 * ceil(log2 8) = 24 each, everything else free.
        let t = tree("FeaCon2(StatisDist(x, τ=0.5), StatisDist(x, τ=0.5))", 8);
        assert_eq!(count_flops(&t, 8).unwrap(), 48);
    }

    #[test]
    fn dom_diff_contributes_length_minus_one() {
        let t = tree(
            "FeaCon2(StatisDist(DomDiff(x), τ=0.25), StatisDist(x, τ=0.25))",
            100,
        );
        let report = cost_report(&t, 100).unwrap();
        let diff = report.breakdown.iter().find(|n| n.op == "DomDiff").unwrap();
        assert_eq!(diff.flops, 99);
    }

    #[test]
    fn dom_freq_of_four_costs_144() {
        let t = tree(
            "FeaCon2(StatisDist(DomFreq(SegDect(x, 4, 1)), τ=0.5), StatisDist(x, τ=0.5))",
            16,
        );
        let report = cost_report(&t, 16).unwrap();
        let freq = report.breakdown.iter().find(|n| n.op == "DomFreq").unwrap();
        assert_eq!(freq.flops, 8 * 16 + 4 * 4);
        assert_eq!(freq.flops, 144);
    }

    #[test]
    fn dom_diff_step_live_bytes() {
        // During the diff step the input (800 bytes) and the output (792)
        // are both live: 1592 in total.
        let t = tree(
            "FeaCon2(StatisDist(DomDiff(x), τ=0.25), StatisDist(DomDiff(x), τ=0.25))",
            100,
        );
        let report = cost_report(&t, 100).unwrap();
        let diff = report.breakdown.iter().find(|n| n.op == "DomDiff").unwrap();
        assert_eq!(diff.live_bytes, 8 * 100 + 8 * 99);
        assert!(report.peak_bytes >= 8 * 100);
    }

    #[test]
    fn seg_dect_step_adds_segment_while_input_lives() {
        let t = tree(
            "FeaCon2(StatisDist(SegDect(x, 30, 5), τ=0.5), StatisDist(x, τ=0.5))",
            100,
        );
        let report = cost_report(&t, 100).unwrap();
        let seg = report.breakdown.iter().find(|n| n.op == "SegDect").unwrap();
        assert_eq!(seg.live_bytes, 8 * 100 + 8 * 30);
    }

    #[test]
    fn flops_equal_breakdown_sum_and_peak_covers_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let t = generate_tree(&mut rng, GenMethod::Grow, 6, 150).unwrap();
            let report = cost_report(&t, 150).unwrap();
            let sum: u64 = report.breakdown.iter().map(|n| n.flops).sum();
            assert_eq!(report.flops, sum);
            assert!(report.peak_bytes >= 8 * 150);
            let live_max = report.breakdown.iter().map(|n| n.live_bytes).max().unwrap();
            assert_eq!(report.peak_bytes, live_max);
        }
    }

    #[test]
    fn adding_a_branch_never_reduces_flops() {
        // Same branch set plus one extra never costs less.
        let two = tree("FeaCon2(StatisDist(x, τ=0.5), ShapeInc(x, λ=0.5))", 64);
        let three = tree(
            "FeaCon3(StatisDist(x, τ=0.5), ShapeInc(x, λ=0.5), ShapePeak(DomFreq(x), λ=0.25))",
            64,
        );
        assert!(count_flops(&three, 64).unwrap() >= count_flops(&two, 64).unwrap());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = tree("FeaCon2(StatisDist(x, τ=0.5), StatisDist(x, τ=0.5))", 8);
        assert!(matches!(count_flops(&t, 9), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn summary_line_format() {
        let t = tree("FeaCon2(StatisDist(x, τ=0.5), StatisDist(x, τ=0.5))", 8);
        let report = cost_report(&t, 8).unwrap();
        let line = report.summary_line();
        assert!(line.starts_with("flops=48 peak_bytes="));
        assert!(line.contains("fits_stm32f446re=true"));
        assert!(line.contains("fits_stm32l552ze=true"));
    }

    #[test]
    fn classifier_cost_is_additive() {
        use crate::classifier::{fit_extra_trees, FeatureMatrix};
        let x = FeatureMatrix::from_rows(
            (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect(),
            (0..10).map(|i| i % 2).collect(),
        );
        let model = fit_extra_trees(&x, 2, 5, 1).unwrap();
        let t = tree("FeaCon2(StatisDist(x, τ=0.5), StatisDist(x, τ=0.5))", 8);
        let plain = cost_report(&t, 8).unwrap();
        let with = with_classifier_cost(plain.clone(), &model);
        assert_eq!(with.total_flops(), plain.flops + classifier_traversal_flops(&model));
        assert!(classifier_traversal_flops(&model) > 0);
    }
}
