//! Bottom-up evaluation of program trees over concrete series.

use std::borrow::Cow;

use crate::classifier::FeatureMatrix;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ops;
use crate::program::{Op, ProgramTree, TreeNode};

enum Value<'a> {
    Segment(Cow<'a, [f64]>),
    Patches(ops::PatchSet),
    Vector(Vec<f64>),
}

impl<'a> Value<'a> {
    fn segment(self) -> Result<Cow<'a, [f64]>> {
        match self {
            Value::Segment(s) => Ok(s),
            _ => Err(Error::InvalidTree("expected segment-like value".into())),
        }
    }

    fn vector(self) -> Result<Vec<f64>> {
        match self {
            Value::Vector(v) => Ok(v),
            _ => Err(Error::InvalidTree("expected vector value".into())),
        }
    }
}

fn eval_node<'a>(node: &TreeNode, x: &'a [f64]) -> Result<Value<'a>> {
    match node.op {
        Op::InputSeries => Ok(Value::Segment(Cow::Borrowed(x))),

        Op::SegDect => {
            let input = eval_node(&node.children[0], x)?.segment()?;
            let len_seg = node.children[1].value.and_then(|v| v.as_int()).unwrap();
            let start_seg = node.children[2].value.and_then(|v| v.as_int()).unwrap();
            Ok(Value::Segment(Cow::Owned(ops::seg_detect(&input, len_seg, start_seg)?)))
        }

        Op::DomFreq => {
            let input = eval_node(&node.children[0], x)?.segment()?;
            Ok(Value::Segment(Cow::Owned(ops::dom_freq(&input))))
        }

        Op::DomDiff => {
            let input = eval_node(&node.children[0], x)?.segment()?;
            Ok(Value::Segment(Cow::Owned(ops::dom_diff(&input)?)))
        }

        Op::AdaPatch => {
            let input = eval_node(&node.children[0], x)?.segment()?;
            let divisor = node.children[1].value.and_then(|v| v.as_int()).unwrap();
            Ok(Value::Patches(ops::ada_patch(&input, divisor)?))
        }

        Op::ShapeInc | Op::ShapeDec | Op::ShapePeak | Op::StatisDist => {
            let extractor = node
                .extractor()
                .ok_or_else(|| Error::InvalidTree("extractor without parameter".into()))?;
            match eval_node(&node.children[0], x)? {
                Value::Patches(ps) => Ok(Value::Vector(ops::extract_over_patches(&ps, &extractor)?)),
                Value::Segment(seg) => Ok(Value::Vector(extractor.apply(&seg)?)),
                Value::Vector(_) => Err(Error::InvalidTree("extractor over vector".into())),
            }
        }

        Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 | Op::FeaConH => {
            let mut out = Vec::new();
            for child in &node.children {
                out.extend(eval_node(child, x)?.vector()?);
            }
            Ok(Value::Vector(out))
        }

        _ => Err(Error::InvalidTree(format!("cannot evaluate {}", node.op.name()))),
    }
}

/// Executes the tree on one series. The output dimension is a pure function
/// of the tree (equal to `t.feature_dim()` for every input).
pub fn evaluate_tree(t: &ProgramTree, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != t.series_length() {
        return Err(Error::LengthMismatch { expected: t.series_length(), got: x.len() });
    }
    eval_node(t.root(), x)?.vector()
}

/// Transforms every series of `d`; row i of the result is the feature vector
/// of instance i, labels carried through unchanged.
pub fn transform_dataset(t: &ProgramTree, d: &Dataset) -> Result<FeatureMatrix> {
    if d.series_length() != t.series_length() {
        return Err(Error::LengthMismatch {
            expected: t.series_length(),
            got: d.series_length(),
        });
    }
    let dim = t.feature_dim();
    let mut data = Vec::with_capacity(d.len() * dim);
    for s in d.series() {
        let row = evaluate_tree(t, &s.values)?;
        debug_assert_eq!(row.len(), dim);
        data.extend(row);
    }
    Ok(FeatureMatrix::new(data, d.len(), dim, d.labels()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::ops::{Extractor, KernelKind};
    use crate::program::{generate_tree, GenMethod};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn statis_branch(tau: f64) -> TreeNode {
        TreeNode::new(
            Op::StatisDist,
            vec![TreeNode::leaf(Op::InputSeries), TreeNode::term_real(Op::TermTau, tau)],
        )
    }

    #[test]
    fn duplicated_branch_repeats_output() {
        let root = TreeNode::new(Op::FeaCon2, vec![statis_branch(0.5), statis_branch(0.5)]);
        let t = ProgramTree::new(root, 8).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let out = evaluate_tree(&t, &x).unwrap();
        let half = out.len() / 2;
        assert_eq!(&out[..half], &out[half..]);
        assert_eq!(out.len(), t.feature_dim());
    }

    #[test]
    fn case_study_branch_matches_direct_composition() {
        // ShapePeak(AdaPatch(DomFreq(SegDect(x, 21, 103)), /4), lambda)
        // evaluated inside a tree equals the hand-composed operator chain.
        // (Divisor 4 is the largest feasible one for a peak template on a
        // length-21 segment; 16 as drawn would push the patch length to 1.)
        let lambda = 0.5;
        let chain = TreeNode::new(
            Op::ShapePeak,
            vec![
                TreeNode::new(
                    Op::AdaPatch,
                    vec![
                        TreeNode::new(
                            Op::DomFreq,
                            vec![TreeNode {
                                op: Op::SegDect,
                                value: None,
                                children: vec![
                                    TreeNode::leaf(Op::InputSeries),
                                    TreeNode::term_int(Op::TermLenSeg, 21),
                                    TreeNode::term_int(Op::TermStartSeg, 103),
                                ],
                            }],
                        ),
                        TreeNode::term_int(Op::TermDivisor, 4),
                    ],
                ),
                TreeNode::term_real(Op::TermLambda, lambda),
            ],
        );
        let root = TreeNode::new(Op::FeaCon2, vec![statis_branch(0.25), chain]);
        let t = ProgramTree::new(root, 140).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..140).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = evaluate_tree(&t, &x).unwrap();

        let seg = crate::ops::seg_detect(&x, 21, 103).unwrap();
        let freq = crate::ops::dom_freq(&seg);
        let patches = crate::ops::ada_patch(&freq, 4).unwrap();
        let want = crate::ops::extract_over_patches(
            &patches,
            &Extractor::Shape { kind: KernelKind::Peak, lambda },
        )
        .unwrap();
        assert_eq!(&out[out.len() - want.len()..], &want[..]);
    }

    #[test]
    fn output_dimension_is_input_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = generate_tree(&mut rng, GenMethod::Grow, 6, 32).unwrap();
            let a: Vec<f64> = (0..32).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..32).map(|_| rng.random_range(-5.0..5.0)).collect();
            let fa = evaluate_tree(&t, &a).unwrap();
            let fb = evaluate_tree(&t, &b).unwrap();
            assert_eq!(fa.len(), fb.len());
            assert_eq!(fa.len(), t.feature_dim());
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let root = TreeNode::new(Op::FeaCon2, vec![statis_branch(0.5), statis_branch(0.5)]);
        let t = ProgramTree::new(root, 8).unwrap();
        assert!(matches!(
            evaluate_tree(&t, &[1.0; 9]),
            Err(Error::LengthMismatch { expected: 8, got: 9 })
        ));
    }

    #[test]
    fn transform_preserves_row_order_and_matches_per_row_eval() {
        let rows: Vec<(i64, Vec<f64>)> = (0..6)
            .map(|i| ((i % 2) as i64, (0..12).map(|t| ((i * 12 + t) as f64).cos()).collect()))
            .collect();
        let d = Dataset::from_rows("toy", rows).unwrap();
        let root = TreeNode::new(Op::FeaCon2, vec![statis_branch(0.5), statis_branch(0.25)]);
        let t = ProgramTree::new(root, 12).unwrap();
        let m = transform_dataset(&t, &d).unwrap();
        assert_eq!(m.n_rows(), 6);
        assert_eq!(m.n_cols(), t.feature_dim());
        for (i, s) in d.series().iter().enumerate() {
            assert_eq!(m.row(i), evaluate_tree(&t, &s.values).unwrap().as_slice());
        }
        assert_eq!(m.labels(), &d.labels()[..]);
    }
}
