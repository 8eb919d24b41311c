//! Structural composition statistics over collections of evolved trees.
//!
//! Concatenation-operator proportions are relative to the total number of
//! concatenation nodes; every other proportion is relative to the number of
//! feature-learning branches (a branch is one Vector-typed subtree feeding a
//! concatenation node).

use std::fmt::Write as _;

use serde::Serialize;

use crate::ops::PATCH_DIVISORS;
use crate::program::{Op, ProgramTree, TreeNode};

#[derive(Debug, Clone, Default, Serialize)]
pub struct StructuralStats {
    pub n_trees: usize,
    pub n_concat_nodes: usize,
    pub n_branches: usize,
    /// Concatenation split, relative to `n_concat_nodes`.
    pub feacon2: f64,
    pub feacon3: f64,
    pub feacon4: f64,
    pub feaconh: f64,
    /// Branch-level rates, relative to `n_branches`.
    pub segdect_rate: f64,
    pub raw_rate: f64,
    pub freq_rate: f64,
    pub diff_rate: f64,
    /// Divisor usage in PATCH_DIVISORS order, plus the no-patch rate.
    pub divisor_rates: Vec<f64>,
    pub no_patch_rate: f64,
    /// Extractor split with the three shape kinds aggregated.
    pub shape_rate: f64,
    pub statis_rate: f64,
    /// True when a denominator was zero (empty input).
    pub zero_denominators: bool,
}

#[derive(Default)]
struct Counts {
    concat: [usize; 4], // FeaCon2, 3, 4, H
    branches: usize,
    segdect: usize,
    raw: usize,
    freq: usize,
    diff: usize,
    divisors: [usize; PATCH_DIVISORS.len()],
    no_patch: usize,
    shape: usize,
    statis: usize,
}

/// Walks one branch chain from its extractor down to the input series.
fn count_branch(branch: &TreeNode, c: &mut Counts) {
    c.branches += 1;
    debug_assert!(branch.op.is_extractor());
    if branch.op == Op::StatisDist {
        c.statis += 1;
    } else {
        c.shape += 1;
    }
    let mut has_seg = false;
    let mut domain: Option<Op> = None;
    let mut divisor: Option<usize> = None;
    let mut node = &branch.children[0];
    loop {
        match node.op {
            Op::AdaPatch => {
                divisor = node.divisor();
                node = &node.children[0];
            }
            Op::DomFreq | Op::DomDiff => {
                domain = Some(node.op);
                node = &node.children[0];
            }
            Op::SegDect => {
                has_seg = true;
                node = &node.children[0];
            }
            Op::InputSeries => break,
            other => unreachable!("unexpected {other:?} in branch chain"),
        }
    }
    if has_seg {
        c.segdect += 1;
    }
    match domain {
        None => c.raw += 1,
        Some(Op::DomFreq) => c.freq += 1,
        Some(Op::DomDiff) => c.diff += 1,
        _ => unreachable!(),
    }
    match divisor {
        None => c.no_patch += 1,
        Some(d) => {
            let idx = PATCH_DIVISORS.iter().position(|&v| v == d).expect("valid divisor");
            c.divisors[idx] += 1;
        }
    }
}

fn count_concat(node: &TreeNode, c: &mut Counts) {
    let slot = match node.op {
        Op::FeaCon2 => 0,
        Op::FeaCon3 => 1,
        Op::FeaCon4 => 2,
        Op::FeaConH => 3,
        _ => unreachable!("count_concat on non-concat node"),
    };
    c.concat[slot] += 1;
    for child in &node.children {
        if child.op.is_concat() {
            count_concat(child, c);
        } else {
            count_branch(child, c);
        }
    }
}

/// Aggregates operation-usage proportions over `trees`.
pub fn structural_stats(trees: &[ProgramTree]) -> StructuralStats {
    let mut c = Counts::default();
    for t in trees {
        count_concat(t.root(), &mut c);
    }
    let n_concat: usize = c.concat.iter().sum();
    let concat_den = n_concat.max(1) as f64;
    let branch_den = c.branches.max(1) as f64;
    StructuralStats {
        n_trees: trees.len(),
        n_concat_nodes: n_concat,
        n_branches: c.branches,
        feacon2: c.concat[0] as f64 / concat_den,
        feacon3: c.concat[1] as f64 / concat_den,
        feacon4: c.concat[2] as f64 / concat_den,
        feaconh: c.concat[3] as f64 / concat_den,
        segdect_rate: c.segdect as f64 / branch_den,
        raw_rate: c.raw as f64 / branch_den,
        freq_rate: c.freq as f64 / branch_den,
        diff_rate: c.diff as f64 / branch_den,
        divisor_rates: c.divisors.iter().map(|&n| n as f64 / branch_den).collect(),
        no_patch_rate: c.no_patch as f64 / branch_den,
        shape_rate: c.shape as f64 / branch_den,
        statis_rate: c.statis as f64 / branch_den,
        zero_denominators: n_concat == 0 || c.branches == 0,
    }
}

impl StructuralStats {
    /// Emits the proportion table as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,operation,proportion,denominator\n");
        let mut row = |cat: &str, op: &str, p: f64, den: usize| {
            writeln!(out, "{cat},{op},{p},{den}").unwrap();
        };
        row("concatenation", "FeaCon2", self.feacon2, self.n_concat_nodes);
        row("concatenation", "FeaCon3", self.feacon3, self.n_concat_nodes);
        row("concatenation", "FeaCon4", self.feacon4, self.n_concat_nodes);
        row("concatenation", "FeaConH", self.feaconh, self.n_concat_nodes);
        row("segment_detection", "SegDect", self.segdect_rate, self.n_branches);
        row("domain", "Raw", self.raw_rate, self.n_branches);
        row("domain", "Freq", self.freq_rate, self.n_branches);
        row("domain", "Diff", self.diff_rate, self.n_branches);
        for (i, &d) in PATCH_DIVISORS.iter().enumerate() {
            row("patching", &format!("D={d}"), self.divisor_rates[i], self.n_branches);
        }
        row("patching", "NoPatch", self.no_patch_rate, self.n_branches);
        row("extraction", "Shape", self.shape_rate, self.n_branches);
        row("extraction", "StatisDist", self.statis_rate, self.n_branches);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{generate_tree, GenMethod, ProgramTree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_counted_example() {
        // FeaCon2(ShapeInc(x), StatisDist(SegDect(x, 8, 2))): 2 branches,
        // SegDect rate 0.5, all raw, no patching, extractor split 50/50.
        let t = crate::program::parse_rendered(
            "FeaCon2(ShapeInc(x, λ=0.5), StatisDist(SegDect(x, 8, 2), τ=0.5))",
            16,
        )
        .unwrap();
        let s = structural_stats(&[t]);
        assert_eq!(s.n_trees, 1);
        assert_eq!(s.n_concat_nodes, 1);
        assert_eq!(s.n_branches, 2);
        assert_eq!(s.feacon2, 1.0);
        assert_eq!(s.segdect_rate, 0.5);
        assert_eq!(s.raw_rate, 1.0);
        assert_eq!(s.no_patch_rate, 1.0);
        assert_eq!(s.shape_rate, 0.5);
        assert_eq!(s.statis_rate, 0.5);
        assert!(!s.zero_denominators);
    }

    #[test]
    fn empty_input_flags_zero_denominators() {
        let s = structural_stats(&[]);
        assert!(s.zero_denominators);
        assert_eq!(s.n_trees, 0);
        assert_eq!(s.feacon2, 0.0);
    }

    #[test]
    fn proportions_sum_to_one_per_category() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trees: Vec<ProgramTree> = (0..100)
            .map(|i| {
                let depth = 2 + (i % 5);
                generate_tree(&mut rng, GenMethod::Grow, depth, 96).unwrap()
            })
            .collect();
        let s = structural_stats(&trees);
        let concat_sum = s.feacon2 + s.feacon3 + s.feacon4 + s.feaconh;
        assert!((concat_sum - 1.0).abs() < 1e-12);
        let domain_sum = s.raw_rate + s.freq_rate + s.diff_rate;
        assert!((domain_sum - 1.0).abs() < 1e-12);
        let patch_sum: f64 = s.divisor_rates.iter().sum::<f64>() + s.no_patch_rate;
        assert!((patch_sum - 1.0).abs() < 1e-12);
        let extract_sum = s.shape_rate + s.statis_rate;
        assert!((extract_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hierarchical_concat_counts_nested_nodes() {
        let t = crate::program::parse_rendered(
            "FeaConH(ShapeDec(x, λ=0.25), FeaCon3(ShapeInc(x, λ=0.5), StatisDist(x, τ=0.5), ShapePeak(x, λ=0.75)))",
            24,
        )
        .unwrap();
        let s = structural_stats(&[t]);
        assert_eq!(s.n_concat_nodes, 2);
        assert_eq!(s.n_branches, 4);
        assert_eq!(s.feaconh, 0.5);
        assert_eq!(s.feacon3, 0.5);
    }
}
