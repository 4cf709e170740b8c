//! Bundle persistence on top of the text network codec.

use std::fmt::Write as _;
use std::path::Path;

use super::{Mode, ModelBundle};
use crate::data::Standardizer;
use crate::nncore::codec::{read_network, write_network, write_values, TokenReader};
use crate::{Result, ScrError};

const MAGIC: &str = "scr-bundle";
const VERSION: usize = 1;

pub fn bundle_to_string(bundle: &ModelBundle) -> Result<String> {
    if bundle.modality_tag.contains(['\n', '\r']) {
        return Err(ScrError::contract("modality tag must be a single line"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "mode {}", bundle.mode.tag());
    let _ = writeln!(out, "modality {}", bundle.modality_tag);
    let st = &bundle.standardizer;
    let _ = writeln!(out, "standardizer {}", st.n_features());
    out.push_str("mean ");
    write_values(&mut out, st.mean.iter().copied());
    out.push_str("std ");
    write_values(&mut out, st.std.iter().copied());
    out.push_str("constant");
    for &c in &st.constant {
        out.push_str(if c { " 1" } else { " 0" });
    }
    out.push('\n');
    write_network(&mut out, "encoder", &bundle.encoder);
    match &bundle.projector {
        Some(p) => {
            out.push_str("projector 1\n");
            write_network(&mut out, "projector", p);
        }
        None => out.push_str("projector 0\n"),
    }
    write_network(&mut out, "regressor", &bundle.regressor);
    out.push_str("end\n");
    Ok(out)
}

fn parse_err(offset: usize, message: impl Into<String>) -> ScrError {
    ScrError::Parse {
        offset,
        message: message.into(),
    }
}

pub fn bundle_from_str(text: &str) -> Result<ModelBundle> {
    let mut r = TokenReader::new(text);
    r.expect(MAGIC)?;
    let at = r.offset();
    let version = r.usize()?;
    if version != VERSION {
        return Err(parse_err(at, format!("unsupported bundle version {version}")));
    }
    r.expect("mode")?;
    let (at, tag) = r.next_token()?;
    let mode = Mode::from_tag(tag).ok_or_else(|| parse_err(at, format!("unknown mode `{tag}`")))?;

    // The modality tag is the remainder of its line and may contain spaces.
    r.expect("modality")?;
    let modality_tag = r.rest_of_line()?.to_owned();

    r.expect("standardizer")?;
    let d = r.usize()?;
    r.expect("mean")?;
    let mean = r.f64s(d)?;
    r.expect("std")?;
    let std = r.f64s(d)?;
    r.expect("constant")?;
    let mut constant = Vec::with_capacity(d);
    for _ in 0..d {
        let (at, tok) = r.next_token()?;
        constant.push(match tok {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err(at, format!("expected 0 or 1, found `{tok}`"))),
        });
    }
    let encoder = read_network(&mut r, "encoder")?;
    r.expect("projector")?;
    let (at, flag) = r.next_token()?;
    let projector = match flag {
        "1" => Some(read_network(&mut r, "projector")?),
        "0" => None,
        _ => return Err(parse_err(at, format!("expected 0 or 1, found `{flag}`"))),
    };
    let at = r.offset();
    let regressor = read_network(&mut r, "regressor")?;
    r.expect("end")?;
    if !r.at_end() {
        return Err(parse_err(r.offset(), "trailing content after `end`"));
    }
    if encoder.input_dim() != d {
        return Err(parse_err(at, "standardizer width does not match encoder input"));
    }
    if regressor.input_dim() != encoder.output_dim() || regressor.output_dim() != 1 {
        return Err(parse_err(at, "regressor does not fit the encoder output"));
    }
    if let Some(p) = &projector {
        if p.input_dim() != encoder.output_dim() {
            return Err(parse_err(at, "projector does not fit the encoder output"));
        }
    }
    Ok(ModelBundle {
        encoder,
        projector,
        regressor,
        standardizer: Standardizer { mean, std, constant },
        modality_tag,
        mode,
    })
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = bundle_to_string(bundle)?;
    std::fs::write(path, text).map_err(|e| ScrError::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScrError::io(path, e))?;
    bundle_from_str(&text)
}
