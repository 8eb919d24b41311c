//! Human-readable rendering of program trees and a debug parser for the
//! rendered form.
//!
//! Example: `ShapePeak(AdaPatch(DomFreq(SegDect(x, 21, 103)), /16), λ=0.5)`.
//! The rendered text doubles as the canonical structural key of a tree.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::program::{Op, ProgramTree, TreeNode};

fn render_node(node: &TreeNode, out: &mut String) {
    match node.op {
        Op::InputSeries => out.push('x'),
        Op::SegDect => {
            out.push_str("SegDect(");
            render_node(&node.children[0], out);
            let len = node.children[1].value.and_then(|v| v.as_int()).unwrap_or(0);
            let start = node.children[2].value.and_then(|v| v.as_int()).unwrap_or(0);
            write!(out, ", {len}, {start})").unwrap();
        }
        Op::DomFreq | Op::DomDiff => {
            out.push_str(node.op.name());
            out.push('(');
            render_node(&node.children[0], out);
            out.push(')');
        }
        Op::AdaPatch => {
            out.push_str("AdaPatch(");
            render_node(&node.children[0], out);
            let d = node.children[1].value.and_then(|v| v.as_int()).unwrap_or(0);
            write!(out, ", /{d})").unwrap();
        }
        Op::ShapeInc | Op::ShapeDec | Op::ShapePeak => {
            out.push_str(node.op.name());
            out.push('(');
            render_node(&node.children[0], out);
            let lambda = node.children[1].value.and_then(|v| v.as_real()).unwrap_or(0.0);
            write!(out, ", λ={lambda})").unwrap();
        }
        Op::StatisDist => {
            out.push_str("StatisDist(");
            render_node(&node.children[0], out);
            let tau = node.children[1].value.and_then(|v| v.as_real()).unwrap_or(0.0);
            write!(out, ", τ={tau})").unwrap();
        }
        Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 | Op::FeaConH => {
            out.push_str(node.op.name());
            out.push('(');
            for (i, c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_node(c, out);
            }
            out.push(')');
        }
        _ => {
            // Bare terminals only show up when rendering fragments.
            match node.value {
                Some(v) => match v {
                    crate::program::TermValue::Int(i) => write!(out, "{i}").unwrap(),
                    crate::program::TermValue::Real(r) => write!(out, "{r}").unwrap(),
                },
                None => out.push_str(node.op.name()),
            }
        }
    }
}

/// Renders the whole tree as a single-line nested expression.
pub fn render_tree(t: &ProgramTree) -> String {
    let mut out = String::new();
    render_node(t.root(), &mut out);
    out
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Parser<'a> {
        Parser { text: text.as_bytes(), pos: 0 }
    }

    fn err(&self, msg: &str) -> Error {
        Error::MalformedModel(format!("render parse error at byte {}: {msg}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {:?}", b as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(std::str::from_utf8(&self.text[start..self.pos]).unwrap().to_string())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len()
            && (self.text[self.pos].is_ascii_digit()
                || matches!(self.text[self.pos], b'.' | b'-' | b'+' | b'e' | b'E'))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("expected number"))
    }

    fn integer(&mut self) -> Result<usize> {
        let v = self.number()?;
        if v.fract() != 0.0 || v < 0.0 {
            return Err(self.err("expected nonnegative integer"));
        }
        Ok(v as usize)
    }

    /// Consumes a parameter label: a Greek letter or its spelled-out name,
    /// followed by '='.
    fn param_label(&mut self) -> Result<()> {
        self.skip_ws();
        let rest = std::str::from_utf8(&self.text[self.pos..])
            .map_err(|_| self.err("invalid utf-8"))?;
        for label in ["λ", "lambda", "τ", "tau"] {
            if let Some(stripped) = rest.strip_prefix(label) {
                if stripped.trim_start().starts_with('=') {
                    self.pos += label.len();
                    self.expect(b'=')?;
                    return Ok(());
                }
            }
        }
        Err(self.err("expected λ=/τ= parameter"))
    }

    fn expr(&mut self) -> Result<TreeNode> {
        let name = self.ident()?;
        if name == "x" {
            return Ok(TreeNode::leaf(Op::InputSeries));
        }
        let op = Op::from_name(&name).ok_or_else(|| self.err(&format!("unknown op {name:?}")))?;
        self.expect(b'(')?;
        let node = match op {
            Op::SegDect => {
                let input = self.expr()?;
                self.expect(b',')?;
                let len = self.integer()?;
                self.expect(b',')?;
                let start = self.integer()?;
                TreeNode {
                    op,
                    value: None,
                    children: vec![
                        input,
                        TreeNode::term_int(Op::TermLenSeg, len),
                        TreeNode::term_int(Op::TermStartSeg, start),
                    ],
                }
            }
            Op::DomFreq | Op::DomDiff => TreeNode::new(op, vec![self.expr()?]),
            Op::AdaPatch => {
                let input = self.expr()?;
                self.expect(b',')?;
                self.expect(b'/')?;
                let d = self.integer()?;
                TreeNode::new(op, vec![input, TreeNode::term_int(Op::TermDivisor, d)])
            }
            Op::ShapeInc | Op::ShapeDec | Op::ShapePeak | Op::StatisDist => {
                let input = self.expr()?;
                self.expect(b',')?;
                self.param_label()?;
                let v = self.number()?;
                let term = if op == Op::StatisDist {
                    TreeNode::term_real(Op::TermTau, v)
                } else {
                    TreeNode::term_real(Op::TermLambda, v)
                };
                TreeNode::new(op, vec![input, term])
            }
            Op::FeaCon2 | Op::FeaCon3 | Op::FeaCon4 | Op::FeaConH => {
                let mut children = vec![self.expr()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    children.push(self.expr()?);
                }
                TreeNode::new(op, children)
            }
            _ => return Err(self.err(&format!("{name} cannot appear here"))),
        };
        self.expect(b')')?;
        Ok(node)
    }
}

/// Debug parser for the rendered expression form; the result is validated
/// against `series_length`.
pub fn parse_rendered(text: &str, series_length: usize) -> Result<ProgramTree> {
    let mut p = Parser::new(text);
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.text.len() {
        return Err(p.err("trailing input"));
    }
    ProgramTree::new(root, series_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{generate_tree, GenMethod};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn renders_the_documented_example() {
        let text = "FeaCon2(StatisDist(x, τ=0.25), ShapePeak(AdaPatch(DomFreq(SegDect(x, 21, 103)), /4), λ=0.5))";
        let t = parse_rendered(text, 140).unwrap();
        assert_eq!(render_tree(&t), text);
    }

    #[test]
    fn render_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = generate_tree(&mut rng, GenMethod::Full, 5, 80).unwrap();
        assert_eq!(render_tree(&t), render_tree(&t));
    }

    #[test]
    fn rendered_text_parses_back_to_the_same_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t = generate_tree(&mut rng, GenMethod::Grow, 6, 60).unwrap();
            let text = render_tree(&t);
            let back = parse_rendered(&text, 60).unwrap();
            assert_eq!(back.root(), t.root(), "{text}");
        }
    }

    #[test]
    fn ascii_parameter_names_are_accepted() {
        let t = parse_rendered(
            "FeaCon2(StatisDist(x, tau=0.5), ShapeInc(x, lambda=0.25))",
            32,
        )
        .unwrap();
        assert_eq!(
            render_tree(&t),
            "FeaCon2(StatisDist(x, τ=0.5), ShapeInc(x, λ=0.25))"
        );
    }
}
