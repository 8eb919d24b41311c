//! Strongly typed multi-layer program trees: representation, static shape
//! inference, validation, generation, evaluation, serialization, rendering,
//! and structural statistics.
//!
//! A tree is always rooted at a concatenation node (`FeaCon2/3/4/H`) whose
//! branches are feature-extraction chains over the input series. Types form
//! a lattice that fixes the layer order: segment detection, at most one
//! domain transform, optional patching, extraction, concatenation. All
//! lengths are statically inferable, so a valid tree can never hit an
//! operator precondition at evaluation time.

mod eval;
pub(crate) mod generate;
mod render;
mod serialize;
mod stats;

pub use eval::{evaluate_tree, transform_dataset};
pub use generate::{generate_tree, ramped_half_and_half, GenMethod};
pub use render::{parse_rendered, render_tree};
pub use serialize::{deserialize_tree, serialize_tree, MetaDoc, ModelDoc, NodeDoc, FORMAT_VERSION};
pub use stats::{structural_stats, StructuralStats};

pub(crate) use serialize::{doc_to_node, node_to_doc};

use crate::error::{Error, Result};
use crate::ops::{self, Extractor, KernelKind};

/// Depth bounds (edge count of the longest root-to-leaf path). The minimal
/// model is a concatenation over bare extractors (depth 2); the maximal one
/// activates all five layers under a hierarchical concatenation (depth 6).
pub const DEPTH_MIN: usize = 2;
pub const DEPTH_MAX: usize = 6;

/// Every primitive of the program structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    SegDect,
    DomFreq,
    DomDiff,
    AdaPatch,
    ShapeInc,
    ShapeDec,
    ShapePeak,
    StatisDist,
    FeaCon2,
    FeaCon3,
    FeaCon4,
    FeaConH,
    InputSeries,
    TermLenSeg,
    TermStartSeg,
    TermDivisor,
    TermTau,
    TermLambda,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::SegDect => "SegDect",
            Op::DomFreq => "DomFreq",
            Op::DomDiff => "DomDiff",
            Op::AdaPatch => "AdaPatch",
            Op::ShapeInc => "ShapeInc",
            Op::ShapeDec => "ShapeDec",
            Op::ShapePeak => "ShapePeak",
            Op::StatisDist => "StatisDist",
            Op::FeaCon2 => "FeaCon2",
            Op::FeaCon3 => "FeaCon3",
            Op::FeaCon4 => "FeaCon4",
            Op::FeaConH => "FeaConH",
            Op::InputSeries => "InputSeries",
            Op::TermLenSeg => "TermLenSeg",
            Op::TermStartSeg => "TermStartSeg",
            Op::TermDivisor => "TermDivisor",
            Op::TermTau => "TermTau",
            Op::TermLambda => "TermLambda",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Some(match name {
            "SegDect" => Op::SegDect,
            "DomFreq" => Op::DomFreq,
            "DomDiff" => Op::DomDiff,
            "AdaPatch" => Op::AdaPatch,
            "ShapeInc" => Op::ShapeInc,
            "ShapeDec" => Op::ShapeDec,
            "ShapePeak" => Op::ShapePeak,
            "StatisDist" => Op::StatisDist,
            "FeaCon2" => Op::FeaCon2,
            "FeaCon3" => Op::FeaCon3,
            "FeaCon4" => Op::FeaCon4,
            "FeaConH" => Op::FeaConH,
            "InputSeries" => Op::InputSeries,
            "TermLenSeg" => Op::TermLenSeg,
            "TermStartSeg" => Op::TermStartSeg,
            "TermDivisor" => Op::TermDivisor,
            "TermTau" => Op::TermTau,
            "TermLambda" => Op::TermLambda,
            _ => return None,
        })
    }

    /// Leaf ops: the input series and the value terminals.
    pub fn is_leaf(self) -> bool {
        matches!(
            self,
            Op::InputSeries
                | Op::TermLenSeg
                | Op::TermStartSeg
                | Op::TermDivisor
                | Op::TermTau
                | Op::TermLambda
        )
    }

    /// Value-carrying terminals (everything leaf except the input series).
    pub fn is_value_terminal(self) -> bool {
        self.is_leaf() && self != Op::InputSeries
    }

    pub fn is_extractor(self) -> bool {
        matches!(self, Op::ShapeInc | Op::ShapeDec | Op::ShapePeak | Op::StatisDist)
    }

    pub fn is_concat(self) -> bool {
        matches!(self, Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 | Op::FeaConH)
    }

    /// Number of Vector inputs for the plain concatenation ops.
    pub fn concat_width(self) -> Option<usize> {
        match self {
            Op::FeaCon2 => Some(2),
            Op::FeaCon3 => Some(3),
            Op::FeaCon4 => Some(4),
            _ => None,
        }
    }

    /// Output type of the op in the layer lattice (None for value
    /// terminals, which are parameters rather than data).
    pub fn output_tag(self) -> Option<TypeTag> {
        Some(match self {
            Op::InputSeries => TypeTag::SeriesRaw,
            Op::SegDect => TypeTag::SegmentLocated,
            Op::DomFreq | Op::DomDiff => TypeTag::SegmentTransformed,
            Op::AdaPatch => TypeTag::Patches,
            Op::ShapeInc | Op::ShapeDec | Op::ShapePeak | Op::StatisDist => TypeTag::Vector,
            Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 | Op::FeaConH => TypeTag::Vectors,
            _ => return None,
        })
    }

    pub fn kernel_kind(self) -> Option<KernelKind> {
        match self {
            Op::ShapeInc => Some(KernelKind::Inc),
            Op::ShapeDec => Some(KernelKind::Dec),
            Op::ShapePeak => Some(KernelKind::Peak),
            _ => None,
        }
    }

    /// Minimum segment/patch length an extractor accepts.
    pub fn extractor_min_len(self) -> Option<usize> {
        match self {
            Op::ShapeInc | Op::ShapeDec => Some(2),
            Op::ShapePeak => Some(3),
            Op::StatisDist => Some(2),
            _ => None,
        }
    }
}

/// The node types of the layer lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TypeTag {
    SeriesRaw,
    SegmentLocated,
    SegmentTransformed,
    Patches,
    Vector,
    Vectors,
}

/// A terminal parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TermValue {
    Int(usize),
    Real(f64),
}

impl TermValue {
    pub fn as_int(self) -> Option<usize> {
        match self {
            TermValue::Int(v) => Some(v),
            TermValue::Real(_) => None,
        }
    }

    pub fn as_real(self) -> Option<f64> {
        match self {
            TermValue::Real(v) => Some(v),
            TermValue::Int(_) => None,
        }
    }
}

/// One node of a program tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub op: Op,
    pub value: Option<TermValue>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(op: Op) -> TreeNode {
        TreeNode { op, value: None, children: Vec::new() }
    }

    pub fn term_int(op: Op, v: usize) -> TreeNode {
        TreeNode { op, value: Some(TermValue::Int(v)), children: Vec::new() }
    }

    pub fn term_real(op: Op, v: f64) -> TreeNode {
        TreeNode { op, value: Some(TermValue::Real(v)), children: Vec::new() }
    }

    pub fn new(op: Op, children: Vec<TreeNode>) -> TreeNode {
        TreeNode { op, value: None, children }
    }

    /// Edge count of the longest path from this node to any leaf.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::node_count).sum::<usize>()
    }

    pub fn get(&self, path: &[usize]) -> Option<&TreeNode> {
        let mut node = self;
        for &i in path {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut TreeNode> {
        let mut node = self;
        for &i in path {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// Preorder paths of every node, the root included as the empty path.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.node_count());
        fn walk(node: &TreeNode, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(path.clone());
            for (i, c) in node.children.iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// The divisor value of an AdaPatch node.
    pub(crate) fn divisor(&self) -> Option<usize> {
        self.children.iter().find(|c| c.op == Op::TermDivisor)?.value?.as_int()
    }

    /// The configured extractor of a ShapeX/StatisDist node.
    pub(crate) fn extractor(&self) -> Option<Extractor> {
        let param = self.children.get(1)?.value?;
        match self.op {
            Op::ShapeInc | Op::ShapeDec | Op::ShapePeak => Some(Extractor::Shape {
                kind: self.op.kernel_kind()?,
                lambda: param.as_real()?,
            }),
            Op::StatisDist => Some(Extractor::StatisDist { tau: param.as_real()? }),
            _ => None,
        }
    }
}

/// Statically inferred data shape at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    SeriesRaw { len: usize },
    SegmentLocated { len: usize },
    SegmentTransformed { len: usize },
    Patches { patch_len: usize, n_patch: usize },
    Vector { dim: usize },
    Vectors { dim: usize },
}

impl Shape {
    pub fn tag(&self) -> TypeTag {
        match self {
            Shape::SeriesRaw { .. } => TypeTag::SeriesRaw,
            Shape::SegmentLocated { .. } => TypeTag::SegmentLocated,
            Shape::SegmentTransformed { .. } => TypeTag::SegmentTransformed,
            Shape::Patches { .. } => TypeTag::Patches,
            Shape::Vector { .. } => TypeTag::Vector,
            Shape::Vectors { .. } => TypeTag::Vectors,
        }
    }

    /// Segment length for segment-like shapes.
    pub fn segment_len(&self) -> Option<usize> {
        match *self {
            Shape::SeriesRaw { len }
            | Shape::SegmentLocated { len }
            | Shape::SegmentTransformed { len } => Some(len),
            _ => None,
        }
    }

    /// The per-patch length an extractor sees: the patch length for patch
    /// sets, the full length for segment-like inputs.
    pub fn effective_patch_len(&self) -> Option<usize> {
        match *self {
            Shape::Patches { patch_len, .. } => Some(patch_len),
            other => other.segment_len(),
        }
    }
}

/// A report of every violation found in a tree; empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "valid")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

fn path_label(path: &[usize]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        let indices: Vec<String> = path.iter().map(usize::to_string).collect();
        format!("root.{}", indices.join("."))
    }
}

fn fail(out: &mut Vec<String>, path: &[usize], msg: String) {
    out.push(format!("{}: {}", path_label(path), msg));
}

fn expect_term(
    out: &mut Vec<String>,
    path: &[usize],
    child: Option<&TreeNode>,
    want: Op,
    slot: &str,
) -> bool {
    match child {
        Some(c) if c.op == want => true,
        Some(c) => {
            fail(out, path, format!("{} slot holds {}", slot, c.op.name()));
            false
        }
        None => {
            fail(out, path, format!("missing {slot} terminal"));
            false
        }
    }
}

/// Recursively checks one node, appending violations and returning the
/// node's shape when it could be inferred.
fn check_node(
    node: &TreeNode,
    series_len: usize,
    path: &mut Vec<usize>,
    out: &mut Vec<String>,
) -> Option<Shape> {
    let mut child_shapes: Vec<Option<Shape>> = Vec::with_capacity(node.children.len());
    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        child_shapes.push(check_node(child, series_len, path, out));
        path.pop();
    }

    // Leaf ops must be leaves; value terminals must carry a value of the
    // right kind. Terminals do not produce data shapes themselves.
    if node.op.is_leaf() && !node.children.is_empty() {
        fail(out, path, format!("{} cannot have children", node.op.name()));
        return None;
    }
    if node.op.is_value_terminal() {
        match (node.op, node.value) {
            (Op::TermLenSeg | Op::TermStartSeg | Op::TermDivisor, Some(TermValue::Int(_))) => {}
            (Op::TermTau | Op::TermLambda, Some(TermValue::Real(v))) => {
                if !ops::RATIO_CHOICES.contains(&v) {
                    fail(out, path, format!("{} value {v} outside {{0.25, 0.5, 0.75}}", node.op.name()));
                }
            }
            _ => fail(out, path, format!("{} needs a value of the proper kind", node.op.name())),
        }
        return None;
    }
    if !node.op.is_leaf() && node.value.is_some() {
        fail(out, path, format!("{} cannot carry a terminal value", node.op.name()));
    }

    match node.op {
        Op::InputSeries => Some(Shape::SeriesRaw { len: series_len }),

        Op::SegDect => {
            if node.children.len() != 3 {
                fail(out, path, format!("SegDect needs 3 children, has {}", node.children.len()));
                return None;
            }
            let ok_len = expect_term(out, path, node.children.get(1), Op::TermLenSeg, "segment-length");
            let ok_start =
                expect_term(out, path, node.children.get(2), Op::TermStartSeg, "segment-start");
            match child_shapes[0].map(|s| s.tag()) {
                Some(TypeTag::SeriesRaw) => {}
                Some(tag) => {
                    fail(out, path, format!("SegDect input must be the raw series, got {tag:?}"));
                    return None;
                }
                None => return None,
            }
            if !(ok_len && ok_start) {
                return None;
            }
            let len_seg = node.children[1].value.and_then(TermValue::as_int)?;
            let start_seg = node.children[2].value.and_then(TermValue::as_int)?;
            let l = series_len;
            if !(1..l).contains(&len_seg) {
                fail(out, path, format!("segment length {len_seg} outside 1..={}", l - 1));
                return None;
            }
            if start_seg < 1 || start_seg > l - len_seg + 1 {
                fail(out, path, format!("segment start {start_seg} out of range for length {len_seg}"));
                return None;
            }
            Some(Shape::SegmentLocated { len: len_seg })
        }

        Op::DomFreq | Op::DomDiff => {
            if node.children.len() != 1 {
                fail(out, path, format!("{} needs 1 child, has {}", node.op.name(), node.children.len()));
                return None;
            }
            let input = child_shapes[0]?;
            let len = match input {
                Shape::SeriesRaw { len } | Shape::SegmentLocated { len } => len,
                other => {
                    fail(
                        out,
                        path,
                        format!(
                            "{} input must be a raw series or located segment, got {:?}",
                            node.op.name(),
                            other.tag()
                        ),
                    );
                    return None;
                }
            };
            if node.op == Op::DomDiff {
                if len < 2 {
                    fail(out, path, format!("differencing needs input length >= 2, got {len}"));
                    return None;
                }
                Some(Shape::SegmentTransformed { len: len - 1 })
            } else {
                Some(Shape::SegmentTransformed { len })
            }
        }

        Op::AdaPatch => {
            if node.children.len() != 2 {
                fail(out, path, format!("AdaPatch needs 2 children, has {}", node.children.len()));
                return None;
            }
            let ok_div = expect_term(out, path, node.children.get(1), Op::TermDivisor, "divisor");
            let input = child_shapes[0]?;
            let len = match input.segment_len() {
                Some(len) => len,
                None => {
                    fail(out, path, format!("AdaPatch input must be segment-like, got {:?}", input.tag()));
                    return None;
                }
            };
            if !ok_div {
                return None;
            }
            let divisor = node.children[1].value.and_then(TermValue::as_int)?;
            if !ops::PATCH_DIVISORS.contains(&divisor) {
                fail(out, path, format!("divisor {divisor} outside {:?}", ops::PATCH_DIVISORS));
                return None;
            }
            match ops::patch_counts(len, divisor) {
                Some((patch_len, _, n_patch)) => Some(Shape::Patches { patch_len, n_patch }),
                None => {
                    fail(
                        out,
                        path,
                        format!("divisor {divisor} on input length {len} yields patches shorter than 2"),
                    );
                    None
                }
            }
        }

        Op::ShapeInc | Op::ShapeDec | Op::ShapePeak | Op::StatisDist => {
            if node.children.len() != 2 {
                fail(out, path, format!("{} needs 2 children, has {}", node.op.name(), node.children.len()));
                return None;
            }
            let want_term = if node.op == Op::StatisDist { Op::TermTau } else { Op::TermLambda };
            let slot = if node.op == Op::StatisDist { "tau" } else { "lambda" };
            let ok_term = expect_term(out, path, node.children.get(1), want_term, slot);
            let input = child_shapes[0]?;
            let (patch_len, n_patch) = match input {
                Shape::Patches { patch_len, n_patch } => (patch_len, n_patch),
                other => match other.segment_len() {
                    Some(len) => (len, 1),
                    None => {
                        fail(out, path, format!("{} cannot take {:?}", node.op.name(), other.tag()));
                        return None;
                    }
                },
            };
            let min = node.op.extractor_min_len().unwrap();
            if patch_len < min {
                fail(out, path, format!("{} needs patch length >= {min}, got {patch_len}", node.op.name()));
                return None;
            }
            if !ok_term {
                return None;
            }
            let extractor = node.extractor()?;
            Some(Shape::Vector { dim: n_patch * extractor.dim(patch_len) })
        }

        Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 => {
            let width = node.op.concat_width().unwrap();
            if node.children.len() != width {
                fail(out, path, format!("{} needs {width} children, has {}", node.op.name(), node.children.len()));
                return None;
            }
            let mut dim = 0usize;
            for (i, s) in child_shapes.iter().enumerate() {
                match s {
                    Some(Shape::Vector { dim: d }) => dim += d,
                    Some(other) => {
                        fail(out, path, format!("child {i} of {} is {:?}, want Vector", node.op.name(), other.tag()));
                        return None;
                    }
                    None => return None,
                }
            }
            Some(Shape::Vectors { dim })
        }

        Op::FeaConH => {
            if node.children.len() != 2 {
                fail(out, path, format!("FeaConH needs 2 children, has {}", node.children.len()));
                return None;
            }
            if node.children[1].op.concat_width().is_none() {
                fail(
                    out,
                    path,
                    format!("FeaConH second input must be FeaCon2/3/4, got {}", node.children[1].op.name()),
                );
                return None;
            }
            match (child_shapes[0], child_shapes[1]) {
                (Some(Shape::Vector { dim: a }), Some(Shape::Vectors { dim: b })) => {
                    Some(Shape::Vectors { dim: a + b })
                }
                (Some(a), Some(b)) => {
                    fail(
                        out,
                        path,
                        format!("FeaConH inputs must be (Vector, Vectors), got ({:?}, {:?})", a.tag(), b.tag()),
                    );
                    None
                }
                _ => None,
            }
        }

        _ => unreachable!("leaf ops handled above"),
    }
}

/// Validates a candidate tree against the type lattice, terminal ranges,
/// length feasibility, and depth bounds.
pub fn validate_tree(root: &TreeNode, series_length: usize) -> ValidationReport {
    let mut out = Vec::new();
    let shape = check_node(root, series_length, &mut Vec::new(), &mut out);
    match shape {
        Some(Shape::Vectors { .. }) => {}
        Some(other) => out.push(format!("root: must be a concatenation, got {:?}", other.tag())),
        None => {}
    }
    let depth = root.depth();
    if !(DEPTH_MIN..=DEPTH_MAX).contains(&depth) {
        out.push(format!("root: depth {depth} outside {DEPTH_MIN}..={DEPTH_MAX}"));
    }
    ValidationReport { violations: out }
}

/// Infers the shape of a (sub)tree, failing on the first violation.
pub fn shape_of(node: &TreeNode, series_length: usize) -> Result<Shape> {
    let mut out = Vec::new();
    match check_node(node, series_length, &mut Vec::new(), &mut out) {
        Some(s) if out.is_empty() => Ok(s),
        _ => Err(Error::InvalidTree(out.join("; "))),
    }
}

/// A validated, immutable program tree bound to one series length.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramTree {
    root: TreeNode,
    series_length: usize,
}

impl ProgramTree {
    pub fn new(root: TreeNode, series_length: usize) -> Result<ProgramTree> {
        let report = validate_tree(&root, series_length);
        if !report.is_valid() {
            return Err(Error::InvalidTree(report.to_string()));
        }
        Ok(ProgramTree { root, series_length })
    }

    /// For generators whose constructions are valid by construction; the
    /// invariant is still checked in debug builds.
    pub(crate) fn new_unchecked(root: TreeNode, series_length: usize) -> ProgramTree {
        debug_assert!(
            validate_tree(&root, series_length).is_valid(),
            "generator produced an invalid tree: {}",
            validate_tree(&root, series_length)
        );
        ProgramTree { root, series_length }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn series_length(&self) -> usize {
        self.series_length
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_tree(&self.root, self.series_length)
    }

    /// Static output dimension; equals the length of every evaluation
    /// result.
    pub fn feature_dim(&self) -> usize {
        match shape_of(&self.root, self.series_length) {
            Ok(Shape::Vectors { dim }) | Ok(Shape::Vector { dim }) => dim,
            _ => unreachable!("ProgramTree is validated on construction"),
        }
    }
}

/// The positional constraint a subtree must satisfy at a given tree
/// position, used when regenerating or swapping subtrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionReq {
    /// A Vectors position; `plain_only` forbids FeaConH (set under FeaConH
    /// and anywhere a plain concatenation is structurally required).
    Vectors { plain_only: bool },
    Vector,
    /// Segment-like or patch data whose effective per-patch length must be
    /// at least `min_len`.
    Data { min_len: usize },
    /// The raw-series slot below SegDect.
    Series,
    /// A value-terminal slot.
    Term,
}

/// Computes the positional requirement at `path` by walking consumers from
/// the root down. `path` must address an existing node.
pub fn position_requirement(root: &TreeNode, path: &[usize]) -> PositionReq {
    let mut req = PositionReq::Vectors { plain_only: false };
    let mut node = root;
    for &i in path {
        req = match node.op {
            Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 => PositionReq::Vector,
            Op::FeaConH => {
                if i == 0 {
                    PositionReq::Vector
                } else {
                    PositionReq::Vectors { plain_only: true }
                }
            }
            Op::ShapeInc | Op::ShapeDec | Op::ShapePeak | Op::StatisDist => {
                if i == 0 {
                    PositionReq::Data { min_len: node.op.extractor_min_len().unwrap() }
                } else {
                    PositionReq::Term
                }
            }
            Op::AdaPatch => {
                if i == 0 {
                    let min_patch = match req {
                        PositionReq::Data { min_len } => min_len,
                        _ => 2,
                    };
                    let divisor = node.divisor().unwrap_or(2);
                    PositionReq::Data { min_len: divisor * min_patch }
                } else {
                    PositionReq::Term
                }
            }
            Op::DomFreq => match req {
                PositionReq::Data { min_len } => PositionReq::Data { min_len: min_len.max(1) },
                other => other,
            },
            Op::DomDiff => match req {
                PositionReq::Data { min_len } => {
                    PositionReq::Data { min_len: (min_len + 1).max(2) }
                }
                other => other,
            },
            Op::SegDect => {
                if i == 0 {
                    PositionReq::Series
                } else {
                    PositionReq::Term
                }
            }
            _ => PositionReq::Term,
        };
        node = &node.children[i];
    }
    req
}
