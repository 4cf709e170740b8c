//! Self-describing text checkpoint codec.
//!
//! Values are written with 17 significant digits (`{:.16e}`), which round-trips
//! every finite `f64` exactly. A network section looks like:
//!
//! ```text
//! network encoder 2
//! layer 3 4 relu
//! weights
//! <4 lines of 3 values>
//! bias
//! <1 line of 4 values>
//! layer 4 1 identity
//! ...
//! ```

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::{Activation, DenseLayer, Mlp};
use crate::{Result, ScrError};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_values(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&format_value(v));
    }
    out.push('\n');
}

pub fn write_network(out: &mut String, name: &str, net: &Mlp) {
    let _ = writeln!(out, "network {name} {}", net.depth());
    for layer in net.layers() {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation().tag()
        );
        out.push_str("weights\n");
        for row in layer.weights().rows() {
            write_values(out, row.iter().copied());
        }
        out.push_str("bias\n");
        write_values(out, layer.bias().iter().copied());
    }
}

/// Whitespace tokenizer that remembers the byte offset of every token.
pub struct TokenReader<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> TokenReader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    pub fn next_token(&mut self) -> Result<(usize, &'a str)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        if rest.is_empty() {
            return Err(ScrError::Parse {
                offset: start,
                message: "unexpected end of input".into(),
            });
        }
        let len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        self.pos = start + len;
        Ok((start, &rest[..len]))
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.text.len()
    }

    pub fn expect(&mut self, keyword: &str) -> Result<()> {
        let (offset, tok) = self.next_token()?;
        if tok != keyword {
            return Err(ScrError::Parse {
                offset,
                message: format!("expected `{keyword}`, found `{tok}`"),
            });
        }
        Ok(())
    }

    /// Remainder of the current line, trimmed; consumes the newline.
    pub fn rest_of_line(&mut self) -> Result<&'a str> {
        let rest = &self.text[self.pos..];
        let end = rest.find('\n').ok_or_else(|| ScrError::Parse {
            offset: self.text.len(),
            message: "unexpected end of input".into(),
        })?;
        self.pos += end + 1;
        Ok(rest[..end].trim())
    }

    pub fn word(&mut self) -> Result<&'a str> {
        self.next_token().map(|(_, t)| t)
    }

    pub fn usize(&mut self) -> Result<usize> {
        let (offset, tok) = self.next_token()?;
        tok.parse().map_err(|_| ScrError::Parse {
            offset,
            message: format!("expected a non-negative integer, found `{tok}`"),
        })
    }

    pub fn f64(&mut self) -> Result<f64> {
        let (offset, tok) = self.next_token()?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ScrError::Parse {
                offset,
                message: format!("expected a finite number, found `{tok}`"),
            }),
        }
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_network(reader: &mut TokenReader<'_>, name: &str) -> Result<Mlp> {
    reader.expect("network")?;
    reader.expect(name)?;
    let start = reader.offset();
    let depth = reader.usize()?;
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        reader.expect("layer")?;
        let in_dim = reader.usize()?;
        let out_dim = reader.usize()?;
        let (offset, tag) = reader.next_token()?;
        let activation = Activation::from_tag(tag).ok_or_else(|| ScrError::Parse {
            offset,
            message: format!("unknown activation `{tag}`"),
        })?;
        reader.expect("weights")?;
        let w = reader.f64s(in_dim * out_dim)?;
        reader.expect("bias")?;
        let b = reader.f64s(out_dim)?;
        let weights = Array2::from_shape_vec((out_dim, in_dim), w).map_err(|e| ScrError::Parse {
            offset,
            message: e.to_string(),
        })?;
        let layer = DenseLayer::new(weights, Array1::from(b), activation).map_err(|e| {
            ScrError::Parse {
                offset,
                message: e.to_string(),
            }
        })?;
        layers.push(layer);
    }
    Mlp::new(layers).map_err(|e| ScrError::Parse {
        offset: start,
        message: e.to_string(),
    })
}
