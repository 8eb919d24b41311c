//! The canonical JSON model document.
//!
//! Layout: `{ "format_version": 1, "series_length": L, "tree": {op, value?,
//! children[]}, "meta": {seed, dataset, created} }`. Richer documents (an
//! evolved model with classifier, fitness, config, and history) extend this
//! with additional top-level fields; loading a tree from them ignores the
//! extras.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::program::{validate_tree, Op, ProgramTree, TermValue, TreeNode};

pub const FORMAT_VERSION: u32 = 1;

/// One serialized tree node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeDoc>,
}

/// Provenance carried by every model document.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MetaDoc {
    pub seed: u64,
    pub dataset: String,
    pub created: String,
}

/// The minimal (tree-only) model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    pub series_length: usize,
    pub tree: NodeDoc,
    pub meta: MetaDoc,
}

pub(crate) fn node_to_doc(node: &TreeNode) -> NodeDoc {
    let value = node.value.map(|v| match v {
        TermValue::Int(i) => serde_json::Number::from(i as u64),
        TermValue::Real(r) => {
            serde_json::Number::from_f64(r).expect("terminal values are finite")
        }
    });
    NodeDoc {
        op: node.op.name().to_string(),
        value,
        children: node.children.iter().map(node_to_doc).collect(),
    }
}

pub(crate) fn doc_to_node(doc: &NodeDoc) -> Result<TreeNode> {
    let op = Op::from_name(&doc.op)
        .ok_or_else(|| Error::MalformedModel(format!("unknown op {:?}", doc.op)))?;
    let value = match (&doc.value, op.is_value_terminal()) {
        (None, false) => None,
        (Some(n), true) => Some(coerce_value(op, n)?),
        (Some(_), false) => {
            return Err(Error::MalformedModel(format!("{} cannot carry a value", op.name())))
        }
        (None, true) => {
            return Err(Error::MalformedModel(format!("{} requires a value", op.name())))
        }
    };
    let children = doc.children.iter().map(doc_to_node).collect::<Result<Vec<_>>>()?;
    Ok(TreeNode { op, value, children })
}

/// Integer terminals accept integral floats ("2.0"); ratio terminals accept
/// any finite number.
fn coerce_value(op: Op, n: &serde_json::Number) -> Result<TermValue> {
    match op {
        Op::TermLenSeg | Op::TermStartSeg | Op::TermDivisor => {
            if let Some(u) = n.as_u64() {
                Ok(TermValue::Int(u as usize))
            } else if let Some(f) = n.as_f64() {
                if f.fract() == 0.0 && f >= 0.0 {
                    Ok(TermValue::Int(f as usize))
                } else {
                    Err(Error::MalformedModel(format!("{} needs an integer, got {f}", op.name())))
                }
            } else {
                Err(Error::MalformedModel(format!("{} value out of range", op.name())))
            }
        }
        _ => n
            .as_f64()
            .map(TermValue::Real)
            .ok_or_else(|| Error::MalformedModel(format!("{} needs a real value", op.name()))),
    }
}

/// Serializes a tree to the canonical pretty-printed JSON document.
pub fn serialize_tree(t: &ProgramTree, meta: &MetaDoc) -> String {
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        series_length: t.series_length(),
        tree: node_to_doc(t.root()),
        meta: meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serialization");
    text.push('\n');
    text
}

/// Parses and validates a model document, tree-only or extended.
pub fn deserialize_tree(text: &str) -> Result<(ProgramTree, MetaDoc)> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::MalformedModel(format!(
            "unsupported format_version {}",
            doc.format_version
        )));
    }
    let root = doc_to_node(&doc.tree)?;
    let report = validate_tree(&root, doc.series_length);
    if !report.is_valid() {
        return Err(Error::MalformedModel(report.to_string()));
    }
    Ok((ProgramTree::new_unchecked(root, doc.series_length), doc.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{generate_tree, GenMethod};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_generated_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let t = generate_tree(&mut rng, GenMethod::Grow, 6, 48).unwrap();
            let text = serialize_tree(&t, &MetaDoc::default());
            let (back, _) = deserialize_tree(&text).unwrap();
            assert_eq!(back.root(), t.root());
            assert_eq!(back.series_length(), t.series_length());
        }
    }

    proptest! {
        #[test]
        fn round_trip_any_seeded_tree(seed in any::<u64>(), depth in 2usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = generate_tree(&mut rng, GenMethod::Full, depth, 100).unwrap();
            let (back, _) = deserialize_tree(&serialize_tree(&t, &MetaDoc::default())).unwrap();
            prop_assert_eq!(back.root(), t.root());
        }
    }

    #[test]
    fn serialization_is_byte_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = generate_tree(&mut rng, GenMethod::Full, 4, 64).unwrap();
        let meta = MetaDoc { seed: 3, dataset: "d".into(), created: "tsgp test".into() };
        assert_eq!(serialize_tree(&t, &meta), serialize_tree(&t, &meta));
    }

    #[test]
    fn truncated_document_is_malformed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = generate_tree(&mut rng, GenMethod::Grow, 3, 32).unwrap();
        let text = serialize_tree(&t, &MetaDoc::default());
        let truncated = &text[..text.len() / 2];
        assert!(matches!(deserialize_tree(truncated), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn invalid_tree_document_is_malformed() {
        // Structurally well-formed JSON whose tree violates the lattice
        // (segment start beyond the series).
        let text = r#"{
            "format_version": 1,
            "series_length": 10,
            "tree": {
                "op": "FeaCon2",
                "children": [
                    {"op": "StatisDist", "children": [
                        {"op": "SegDect", "children": [
                            {"op": "InputSeries"},
                            {"op": "TermLenSeg", "value": 5},
                            {"op": "TermStartSeg", "value": 9}
                        ]},
                        {"op": "TermTau", "value": 0.5}
                    ]},
                    {"op": "StatisDist", "children": [
                        {"op": "InputSeries"},
                        {"op": "TermTau", "value": 0.25}
                    ]}
                ]
            },
            "meta": {"seed": 0, "dataset": "", "created": ""}
        }"#;
        assert!(matches!(deserialize_tree(text), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn unknown_op_is_malformed() {
        let text = r#"{"format_version":1,"series_length":8,
            "tree":{"op":"Nope"},"meta":{"seed":0,"dataset":"","created":""}}"#;
        assert!(matches!(deserialize_tree(text), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn integer_terminals_accept_integral_floats() {
        let text = r#"{
            "format_version": 1,
            "series_length": 12,
            "tree": {
                "op": "FeaCon2",
                "children": [
                    {"op": "StatisDist", "children": [
                        {"op": "SegDect", "children": [
                            {"op": "InputSeries"},
                            {"op": "TermLenSeg", "value": 6.0},
                            {"op": "TermStartSeg", "value": 2}
                        ]},
                        {"op": "TermTau", "value": 0.5}
                    ]},
                    {"op": "StatisDist", "children": [
                        {"op": "InputSeries"},
                        {"op": "TermTau", "value": 0.75}
                    ]}
                ]
            },
            "meta": {"seed": 1, "dataset": "toy", "created": "by hand"}
        }"#;
        let (t, meta) = deserialize_tree(text).unwrap();
        assert_eq!(t.series_length(), 12);
        assert_eq!(meta.dataset, "toy");
    }
}
