//! Random generation of valid program trees.
//!
//! Generation walks the layer lattice top-down, choosing uniformly among the
//! type-legal primitives at each expansion point while threading two
//! constraints: the remaining depth budget and the minimum data length the
//! position must produce (so every terminal can be sampled from a non-empty
//! feasible range and the finished tree always validates).

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{RATIO_CHOICES, PATCH_DIVISORS};
use crate::program::{Op, ProgramTree, TreeNode, DEPTH_MAX, DEPTH_MIN};

/// Tree construction methods of ramped half-and-half initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenMethod {
    /// Branches stop early at random; depth is bounded by the limit.
    Grow,
    /// Every branch stretches to the depth limit where the lattice permits.
    Full,
}

/// Generates one valid tree. `depth_limit` must lie in 2..=6 and
/// `series_length` must be at least 4.
pub fn generate_tree<R: Rng>(
    rng: &mut R,
    method: GenMethod,
    depth_limit: usize,
    series_length: usize,
) -> Result<ProgramTree> {
    if !(DEPTH_MIN..=DEPTH_MAX).contains(&depth_limit) || series_length < 4 {
        return Err(Error::InfeasibleDepth { depth: depth_limit, series_length });
    }
    let target = match method {
        GenMethod::Grow => None,
        GenMethod::Full => Some(depth_limit),
    };
    let root = gen_concat(rng, depth_limit, series_length, target, true);
    Ok(ProgramTree::new_unchecked(root, series_length))
}

/// Ramped half-and-half initialization: methods alternate grow/full and the
/// depth limit cycles over `depth_min..=depth_max`.
pub fn ramped_half_and_half<R: Rng>(
    rng: &mut R,
    count: usize,
    depth_min: usize,
    depth_max: usize,
    series_length: usize,
) -> Result<Vec<ProgramTree>> {
    let span = depth_max - depth_min + 1;
    (0..count)
        .map(|i| {
            let method = if i % 2 == 0 { GenMethod::Grow } else { GenMethod::Full };
            let depth = depth_min + (i / 2) % span;
            generate_tree(rng, method, depth, series_length)
        })
        .collect()
}

fn choose<R: Rng, T: Copy>(rng: &mut R, options: &[(T, usize, usize)], target: Option<usize>) -> (T, Option<usize>) {
    debug_assert!(!options.is_empty());
    match target {
        None => {
            let (choice, _, _) = options[rng.random_range(0..options.len())];
            (choice, None)
        }
        Some(t) => {
            // Aim for subtree depth exactly min(t, best reachable); among
            // the options whose contiguous depth range covers it, pick
            // uniformly.
            let reachable = options.iter().map(|&(_, _, max)| max).max().unwrap();
            let best = t.min(reachable);
            let candidates: Vec<T> = options
                .iter()
                .filter(|&&(_, min, max)| min <= best && best <= max)
                .map(|&(c, _, _)| c)
                .collect();
            if candidates.is_empty() {
                let (choice, _, _) = options[rng.random_range(0..options.len())];
                (choice, Some(best))
            } else {
                (candidates[rng.random_range(0..candidates.len())], Some(best))
            }
        }
    }
}

fn sample_ratio<R: Rng>(rng: &mut R) -> f64 {
    RATIO_CHOICES[rng.random_range(0..RATIO_CHOICES.len())]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SegChoice {
    Input,
    Seg,
    Freq,
    Diff,
}

/// Depth range (min, max) of a plain source (input series or segment
/// detection) able to produce at least `min_len` samples, or None.
fn plain_source_range(budget: usize, min_len: usize, series_len: usize) -> Option<(usize, usize)> {
    let input_ok = series_len >= min_len;
    let seg_ok = budget >= 1 && min_len < series_len;
    match (input_ok, seg_ok) {
        (true, true) => Some((0, 1)),
        (true, false) => Some((0, 0)),
        (false, true) => Some((1, 1)),
        (false, false) => None,
    }
}

/// Enumerates feasible segment-source choices with their subtree depth
/// ranges. `allow_dom` admits the domain-transform layer (at most one per
/// branch, so it is disabled below a transform).
fn seg_source_options(
    budget: usize,
    min_len: usize,
    series_len: usize,
    allow_dom: bool,
) -> Vec<(SegChoice, usize, usize)> {
    let mut options = Vec::new();
    if series_len >= min_len {
        options.push((SegChoice::Input, 0, 0));
    }
    if budget >= 1 && min_len < series_len {
        options.push((SegChoice::Seg, 1, 1));
    }
    if allow_dom && budget >= 1 {
        if let Some((lo, hi)) = plain_source_range(budget - 1, min_len.max(1), series_len) {
            options.push((SegChoice::Freq, 1 + lo, 1 + hi));
        }
        if let Some((lo, hi)) = plain_source_range(budget - 1, (min_len + 1).max(2), series_len) {
            options.push((SegChoice::Diff, 1 + lo, 1 + hi));
        }
    }
    options
}

fn gen_seg_dect<R: Rng>(rng: &mut R, min_len: usize, series_len: usize) -> (TreeNode, usize) {
    let lo = min_len.max(1);
    let hi = series_len - 1;
    let len_seg = rng.random_range(lo..=hi);
    let start_seg = rng.random_range(1..=series_len - len_seg + 1);
    let node = TreeNode {
        op: Op::SegDect,
        value: None,
        children: vec![
            TreeNode::leaf(Op::InputSeries),
            TreeNode::term_int(Op::TermLenSeg, len_seg),
            TreeNode::term_int(Op::TermStartSeg, start_seg),
        ],
    };
    (node, len_seg)
}

/// Generates a segment-like source (raw series, located segment, or
/// transformed segment) of at least `min_len` samples. Returns the node and
/// its output length.
pub(crate) fn gen_seg_source<R: Rng>(
    rng: &mut R,
    budget: usize,
    min_len: usize,
    series_len: usize,
    target: Option<usize>,
    allow_dom: bool,
) -> (TreeNode, usize) {
    let options = seg_source_options(budget, min_len, series_len, allow_dom);
    debug_assert!(!options.is_empty(), "no feasible source for min_len={min_len}, L={series_len}");
    let (choice, best) = choose(rng, &options, target);
    gen_seg_source_fixed(rng, budget, min_len, series_len, best, choice)
}

fn gen_plain_source<R: Rng>(
    rng: &mut R,
    budget: usize,
    min_len: usize,
    series_len: usize,
    target: Option<usize>,
) -> (TreeNode, usize) {
    let mut options = Vec::new();
    if series_len >= min_len {
        options.push((SegChoice::Input, 0, 0));
    }
    if budget >= 1 && min_len < series_len {
        options.push((SegChoice::Seg, 1, 1));
    }
    debug_assert!(!options.is_empty());
    let (choice, _) = choose(rng, &options, target);
    match choice {
        SegChoice::Input => (TreeNode::leaf(Op::InputSeries), series_len),
        _ => gen_seg_dect(rng, min_len, series_len),
    }
}

/// Generates an AdaPatch subtree whose patches are at least `min_patch`
/// long.
pub(crate) fn gen_patches<R: Rng>(
    rng: &mut R,
    budget: usize,
    min_patch: usize,
    series_len: usize,
    target: Option<usize>,
) -> TreeNode {
    debug_assert!(budget >= 1);
    let sub_target = target.map(|t| t.saturating_sub(1));
    let (source, len) =
        gen_seg_source(rng, budget - 1, 2 * min_patch, series_len, sub_target, true);
    let feasible: Vec<usize> = PATCH_DIVISORS
        .iter()
        .copied()
        .filter(|&v| len / v >= min_patch)
        .collect();
    debug_assert!(!feasible.is_empty());
    let divisor = feasible[rng.random_range(0..feasible.len())];
    TreeNode {
        op: Op::AdaPatch,
        value: None,
        children: vec![source, TreeNode::term_int(Op::TermDivisor, divisor)],
    }
}

/// A fresh SegDect node for subtree regrowth.
pub(crate) fn gen_seg_dect_node<R: Rng>(rng: &mut R, min_len: usize, series_len: usize) -> TreeNode {
    gen_seg_dect(rng, min_len, series_len).0
}

/// A fresh domain-transformed source (DomFreq or DomDiff over a plain
/// source) for subtree regrowth; None when neither transform fits.
pub(crate) fn gen_transformed_source<R: Rng>(
    rng: &mut R,
    budget: usize,
    min_len: usize,
    series_len: usize,
) -> Option<TreeNode> {
    if budget < 1 {
        return None;
    }
    let mut choices = Vec::new();
    if plain_source_range(budget - 1, min_len.max(1), series_len).is_some() {
        choices.push(SegChoice::Freq);
    }
    if plain_source_range(budget - 1, (min_len + 1).max(2), series_len).is_some() {
        choices.push(SegChoice::Diff);
    }
    if choices.is_empty() {
        return None;
    }
    let c = choices[rng.random_range(0..choices.len())];
    Some(gen_seg_source_fixed(rng, budget, min_len, series_len, None, c).0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InputChoice {
    Direct(SegChoice),
    Patch,
}

/// Generates one Vector branch (an extractor over an optional layer chain).
/// `budget` is the branch subtree's depth allowance (>= 1).
pub(crate) fn gen_branch<R: Rng>(
    rng: &mut R,
    budget: usize,
    series_len: usize,
    target: Option<usize>,
) -> TreeNode {
    debug_assert!(budget >= 1);
    let extractors = [Op::ShapeInc, Op::ShapeDec, Op::ShapePeak, Op::StatisDist];
    let op = extractors[rng.random_range(0..extractors.len())];
    let min_patch = op.extractor_min_len().unwrap();

    // The input sits one edge below the extractor.
    let input_budget = budget - 1;
    let mut options: Vec<(InputChoice, usize, usize)> =
        seg_source_options(input_budget, min_patch, series_len, true)
            .into_iter()
            .map(|(c, lo, hi)| (InputChoice::Direct(c), lo, hi))
            .collect();
    if input_budget >= 1 {
        let source_hi = seg_source_options(input_budget - 1, 2 * min_patch, series_len, true)
            .iter()
            .map(|&(_, _, h)| h)
            .max();
        if let Some(hi) = source_hi {
            options.push((InputChoice::Patch, 1, 1 + hi));
        }
    }
    let input_target = target.map(|t| t.saturating_sub(1));
    let (choice, best) = choose(rng, &options, input_target);
    let input = match choice {
        InputChoice::Direct(c) => {
            gen_seg_source_fixed(rng, input_budget, min_patch, series_len, best, c).0
        }
        InputChoice::Patch => gen_patches(rng, input_budget, min_patch, series_len, best),
    };
    let param = match op {
        Op::StatisDist => TreeNode::term_real(Op::TermTau, sample_ratio(rng)),
        _ => TreeNode::term_real(Op::TermLambda, sample_ratio(rng)),
    };
    TreeNode { op, value: None, children: vec![input, param] }
}

fn gen_seg_source_fixed<R: Rng>(
    rng: &mut R,
    budget: usize,
    min_len: usize,
    series_len: usize,
    target: Option<usize>,
    choice: SegChoice,
) -> (TreeNode, usize) {
    match choice {
        SegChoice::Input => (TreeNode::leaf(Op::InputSeries), series_len),
        SegChoice::Seg => gen_seg_dect(rng, min_len, series_len),
        SegChoice::Freq => {
            let sub_target = target.map(|t| t.saturating_sub(1));
            let (sub, len) =
                gen_plain_source(rng, budget - 1, min_len.max(1), series_len, sub_target);
            (TreeNode::new(Op::DomFreq, vec![sub]), len)
        }
        SegChoice::Diff => {
            let sub_target = target.map(|t| t.saturating_sub(1));
            let (sub, len) =
                gen_plain_source(rng, budget - 1, (min_len + 1).max(2), series_len, sub_target);
            (TreeNode::new(Op::DomDiff, vec![sub]), len - 1)
        }
    }
}

/// Maximum branch subtree depth attainable within `budget`.
fn max_branch_depth(budget: usize, series_len: usize) -> usize {
    // Shape/statis extractors differ only in min_patch; 2 is the loosest.
    let input_budget = budget.saturating_sub(1);
    let mut best = 0usize;
    for &(_, _, hi) in &seg_source_options(input_budget, 2, series_len, true) {
        best = best.max(hi);
    }
    if input_budget >= 1 {
        let patch_hi = seg_source_options(input_budget - 1, 4, series_len, true)
            .iter()
            .map(|&(_, _, h)| h)
            .max();
        if let Some(h) = patch_hi {
            best = best.max(1 + h);
        }
    }
    1 + best
}

/// Generates a concatenation subtree. `allow_h` admits FeaConH (the root
/// only; FeaConH's nested concatenation must be plain).
pub(crate) fn gen_concat<R: Rng>(
    rng: &mut R,
    budget: usize,
    series_len: usize,
    target: Option<usize>,
    allow_h: bool,
) -> TreeNode {
    debug_assert!(budget >= 2);
    let branch_max = max_branch_depth(budget - 1, series_len);
    let mut options: Vec<(Op, usize, usize)> = vec![
        (Op::FeaCon2, 2, 1 + branch_max),
        (Op::FeaCon3, 2, 1 + branch_max),
        (Op::FeaCon4, 2, 1 + branch_max),
    ];
    if allow_h && budget >= 3 {
        let nested_max = 1 + max_branch_depth(budget - 2, series_len);
        options.push((Op::FeaConH, 3, 1 + nested_max.max(max_branch_depth(budget - 1, series_len))));
    }
    let (op, best) = choose(rng, &options, target);
    match op {
        Op::FeaConH => {
            let sub_target = best.map(|b| b - 1);
            let vector = gen_branch(rng, budget - 1, series_len, sub_target);
            let nested = gen_concat(rng, budget - 1, series_len, sub_target, false);
            TreeNode::new(Op::FeaConH, vec![vector, nested])
        }
        _ => {
            let width = op.concat_width().unwrap();
            let sub_target = best.map(|b| b - 1);
            let children = (0..width)
                .map(|_| gen_branch(rng, budget - 1, series_len, sub_target))
                .collect();
            TreeNode::new(op, children)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grow_depth_two_is_the_minimal_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = generate_tree(&mut rng, GenMethod::Grow, 2, 64).unwrap();
            assert_eq!(t.depth(), 2);
            assert!(t.root().op.concat_width().is_some());
            for branch in &t.root().children {
                assert!(branch.op.is_extractor());
                assert_eq!(branch.children[0].op, Op::InputSeries);
            }
        }
    }

    #[test]
    fn generated_trees_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for len in [4usize, 16, 150] {
            for depth in DEPTH_MIN..=DEPTH_MAX {
                for method in [GenMethod::Grow, GenMethod::Full] {
                    for _ in 0..40 {
                        let t = generate_tree(&mut rng, method, depth, len).unwrap();
                        assert!(t.validate().is_valid(), "{:?}", t.validate());
                        assert!(t.depth() <= depth);
                        assert!(t.depth() >= DEPTH_MIN);
                    }
                }
            }
        }
    }

    #[test]
    fn full_trees_reach_their_target_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for depth in DEPTH_MIN..=DEPTH_MAX {
            for _ in 0..40 {
                let t = generate_tree(&mut rng, GenMethod::Full, depth, 150).unwrap();
                assert_eq!(t.depth(), depth, "target {depth}");
            }
        }
    }

    #[test]
    fn depth_six_requires_hierarchical_concatenation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t = generate_tree(&mut rng, GenMethod::Full, 6, 150).unwrap();
            assert_eq!(t.root().op, Op::FeaConH);
            assert_eq!(t.depth(), 6);
        }
    }

    #[test]
    fn infeasible_arguments_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(generate_tree(&mut rng, GenMethod::Grow, 1, 64).is_err());
        assert!(generate_tree(&mut rng, GenMethod::Grow, 7, 64).is_err());
        assert!(generate_tree(&mut rng, GenMethod::Grow, 3, 3).is_err());
    }

    #[test]
    fn ramped_initialization_spans_methods_and_depths() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pop = ramped_half_and_half(&mut rng, 40, DEPTH_MIN, DEPTH_MAX, 64).unwrap();
        assert_eq!(pop.len(), 40);
        let depths: std::collections::HashSet<usize> = pop.iter().map(|t| t.depth()).collect();
        assert!(depths.contains(&2));
        assert!(depths.contains(&6));
        for t in &pop {
            assert!(t.validate().is_valid());
        }
    }

    #[test]
    fn short_series_generation_works() {
        // L = 4 is the documented minimum; heavy chains must be filtered
        // out, not attempted.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t = generate_tree(&mut rng, GenMethod::Full, 6, 4).unwrap();
            assert!(t.validate().is_valid(), "{}", t.validate());
        }
    }
}
