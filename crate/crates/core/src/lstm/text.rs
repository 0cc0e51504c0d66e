//! Versioned text serialization for trained networks. Floats are
//! written in the shortest form that parses back bit-exactly, so a
//! write/read cycle reproduces the model exactly.

use super::{LstmConfig, LstmModel, StreamTransform};
use crate::error::{Error, Result};
use crate::preprocess::{ScalerKind, ScalerParams};

const FORMAT_TAG: &str = "lstm_v1";

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Serialize config, per-stream transforms, and every parameter tensor
/// in canonical order.
pub fn write_model(model: &LstmModel) -> String {
    let c = &model.config;
    let mut out = String::new();
    out.push_str(FORMAT_TAG);
    out.push('\n');
    out.push_str(&format!("neurons {}\n", c.neurons));
    out.push_str(&format!("layers {}\n", c.layers));
    out.push_str(&format!("lag {}\n", c.lag));
    out.push_str(&format!("batch_size {}\n", c.batch_size));
    out.push_str(&format!("epochs {}\n", c.epochs));
    out.push_str(&format!("heads {}\n", c.heads));
    out.push_str(&format!("peepholes {}\n", u8::from(c.peepholes)));
    out.push_str(&format!("seed {}\n", c.seed));
    out.push_str(&format!("transforms {}\n", model.transforms.len()));
    for tr in &model.transforms {
        match tr.scaler.kind {
            ScalerKind::LogPlusOne => {
                out.push_str(&format!("transform {} log\n", tr.difference_order))
            }
            ScalerKind::MinMaxSymmetric => out.push_str(&format!(
                "transform {} minmax {} {}\n",
                tr.difference_order, tr.scaler.min, tr.scaler.max
            )),
        }
    }
    for (idx, layer) in model.layers.iter().enumerate() {
        out.push_str(&format!(
            "layer {idx} {} {}\n",
            layer.input_size, layer.units
        ));
        for (name, tensor) in layer.tensors() {
            out.push_str(&format!("tensor {name} {} {}\n", tensor.len(), join(tensor)));
        }
    }
    out.push_str(&format!(
        "tensor head_w {} {}\n",
        model.head_w.len(),
        join(&model.head_w)
    ));
    out.push_str(&format!(
        "tensor head_b {} {}\n",
        model.head_b.len(),
        join(&model.head_b)
    ));
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|e| bad(format!("bad float {tok:?}: {e}")))
}

fn parse_usize(tok: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|e| bad(format!("bad integer {tok:?}: {e}")))
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for line in self.inner.by_ref() {
            if line.trim().is_empty() {
                continue;
            }
            return Ok(line.split_whitespace().collect());
        }
        Err(bad("unexpected end of model text"))
    }

    /// Next line must be `key <value>`; returns the value token.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let tokens = self.next()?;
        if tokens.len() != 2 || tokens[0] != key {
            return Err(bad(format!("expected '{key} <value>', found {tokens:?}")));
        }
        Ok(tokens[1])
    }

    fn finished(&mut self) -> Result<()> {
        if let Some(extra) = self.inner.by_ref().find(|l| !l.trim().is_empty()) {
            return Err(bad(format!("trailing content: {extra:?}")));
        }
        Ok(())
    }
}

fn read_tensor(lines: &mut Lines, name: &str, into: &mut [f64]) -> Result<()> {
    let tokens = lines.next()?;
    if tokens.len() < 3 || tokens[0] != "tensor" || tokens[1] != name {
        return Err(bad(format!(
            "expected tensor {name:?}, found {:?}",
            tokens.first().copied().unwrap_or_default()
        )));
    }
    let len = parse_usize(tokens[2])?;
    let values = &tokens[3..];
    if len != into.len() || values.len() != into.len() {
        return Err(bad(format!(
            "tensor {name:?} should hold {} values, found {}",
            into.len(),
            values.len()
        )));
    }
    for (slot, tok) in into.iter_mut().zip(values) {
        *slot = parse_f64(tok)?;
    }
    Ok(())
}

/// Parse [`write_model`] output back into an identical model.
pub fn read_model(text: &str) -> Result<LstmModel> {
    let mut lines = Lines {
        inner: text.lines(),
    };
    let tag = lines.next()?;
    if tag != [FORMAT_TAG] {
        return Err(bad(format!(
            "expected leading '{FORMAT_TAG}' tag, found {tag:?}"
        )));
    }

    let config = LstmConfig {
        neurons: parse_usize(lines.keyed("neurons")?)?,
        layers: parse_usize(lines.keyed("layers")?)?,
        lag: parse_usize(lines.keyed("lag")?)?,
        batch_size: parse_usize(lines.keyed("batch_size")?)?,
        epochs: parse_usize(lines.keyed("epochs")?)?,
        heads: parse_usize(lines.keyed("heads")?)?,
        peepholes: match lines.keyed("peepholes")? {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("peepholes must be 0 or 1, found {other:?}"))),
        },
        seed: lines
            .keyed("seed")?
            .parse::<u64>()
            .map_err(|e| bad(format!("bad seed: {e}")))?,
    };
    config.validate().map_err(|e| bad(e.to_string()))?;

    let transform_count = parse_usize(lines.keyed("transforms")?)?;
    if transform_count != 0 && transform_count != config.heads {
        return Err(bad(format!(
            "{transform_count} transforms for {} output streams",
            config.heads
        )));
    }
    let mut transforms = Vec::with_capacity(transform_count);
    for _ in 0..transform_count {
        let tokens = lines.next()?;
        let scaler = match tokens.as_slice() {
            ["transform", _, "log"] => ScalerParams {
                kind: ScalerKind::LogPlusOne,
                min: 0.0,
                max: 0.0,
            },
            ["transform", _, "minmax", min, max] => ScalerParams {
                kind: ScalerKind::MinMaxSymmetric,
                min: parse_f64(min)?,
                max: parse_f64(max)?,
            },
            other => return Err(bad(format!("unrecognized transform line {other:?}"))),
        };
        transforms.push(StreamTransform {
            difference_order: parse_usize(tokens[1])?,
            scaler,
        });
    }

    let mut model = LstmModel::zeros(&config).map_err(|e| bad(e.to_string()))?;
    model.transforms = transforms;
    for idx in 0..config.layers {
        let tokens = lines.next()?;
        let expected_input = model.layers[idx].input_size;
        let expected_units = model.layers[idx].units;
        let header_ok = tokens.len() == 4
            && tokens[0] == "layer"
            && parse_usize(tokens[1])? == idx
            && parse_usize(tokens[2])? == expected_input
            && parse_usize(tokens[3])? == expected_units;
        if !header_ok {
            return Err(bad(format!(
                "expected 'layer {idx} {expected_input} {expected_units}', found {tokens:?}"
            )));
        }
        for (name, tensor) in model.layers[idx].tensors_mut() {
            read_tensor(&mut lines, name, tensor)?;
        }
    }
    let heads = config.heads;
    let neurons = config.neurons;
    read_tensor(&mut lines, "head_w", &mut model.head_w)?;
    read_tensor(&mut lines, "head_b", &mut model.head_b)?;
    debug_assert_eq!(model.head_w.len(), heads * neurons);
    lines.finished()?;
    Ok(model)
}
