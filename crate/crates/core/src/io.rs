//! Model checkpoints: the topology snapshot format extended with bias and
//! activation-parameter sections. All values round-trip exactly through
//! decimal text.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::layers::{Activation, SparseLayer, SreluParams};
use crate::mlp::MlpModel;
use crate::rbm::RbmModel;
use crate::topology::{SparseWeights, SparsityMode};

const MLP_HEADER: &str = "sparset-mlp v1";
const RBM_HEADER: &str = "sparset-rbm v1";

pub fn write_mlp_checkpoint<W: Write>(model: &MlpModel, mut w: W) -> Result<()> {
    writeln!(w, "{MLP_HEADER}")?;
    writeln!(w, "mode {}", mode_name(model.mode))?;
    writeln!(w, "layers {}", model.layers.len())?;
    for (idx, layer) in model.layers.iter().enumerate() {
        writeln!(w, "layer {idx} activation {}", layer.activation.name())?;
        layer.weights.write_snapshot(&mut w)?;
        write_vector(&mut w, "bias", &layer.bias)?;
        if let Some(p) = &layer.srelu {
            write_vector(&mut w, "srelu_t_left", &p.t_left)?;
            write_vector(&mut w, "srelu_a_left", &p.a_left)?;
            write_vector(&mut w, "srelu_t_right", &p.t_right)?;
            write_vector(&mut w, "srelu_a_right", &p.a_right)?;
        }
    }
    Ok(())
}

pub fn read_mlp_checkpoint<R: BufRead>(r: R) -> Result<MlpModel> {
    let mut lines = Lines::new(r);
    lines.expect_exact(MLP_HEADER)?;
    let mode = parse_mode(&lines.expect_prefixed("mode")?)?;
    let n_layers: usize = lines
        .expect_prefixed("layers")?
        .trim()
        .parse()
        .map_err(|_| Error::Parse("invalid layer count".into()))?;
    let mut layers = Vec::with_capacity(n_layers);
    for idx in 0..n_layers {
        let header = lines.expect_prefixed("layer")?;
        let mut toks = header.split_whitespace();
        let got: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("invalid layer index".into()))?;
        if got != idx {
            return Err(Error::Parse(format!("expected layer {idx}, found {got}")));
        }
        if toks.next() != Some("activation") {
            return Err(Error::Parse(format!("layer {idx}: missing activation")));
        }
        let activation = Activation::parse(
            toks.next()
                .ok_or_else(|| Error::Parse(format!("layer {idx}: missing activation name")))?,
        )?;
        let weights = read_snapshot_block(&mut lines)?;
        let bias = lines.expect_vector("bias", weights.n_out())?;
        let srelu = if activation == Activation::Srelu {
            Some(SreluParams {
                t_left: lines.expect_vector("srelu_t_left", weights.n_out())?,
                a_left: lines.expect_vector("srelu_a_left", weights.n_out())?,
                t_right: lines.expect_vector("srelu_t_right", weights.n_out())?,
                a_right: lines.expect_vector("srelu_a_right", weights.n_out())?,
            })
        } else {
            None
        };
        let mut layer = SparseLayer::new(weights, activation);
        layer.bias = bias;
        if srelu.is_some() {
            layer.srelu = srelu;
        }
        layers.push(layer);
    }
    Ok(MlpModel { layers, mode })
}

pub fn write_rbm_checkpoint<W: Write>(model: &RbmModel, mut w: W) -> Result<()> {
    writeln!(w, "{RBM_HEADER}")?;
    model.weights.write_snapshot(&mut w)?;
    write_vector(&mut w, "visible_bias", &model.visible_bias)?;
    write_vector(&mut w, "hidden_bias", &model.hidden_bias)?;
    Ok(())
}

pub fn read_rbm_checkpoint<R: BufRead>(r: R) -> Result<RbmModel> {
    let mut lines = Lines::new(r);
    lines.expect_exact(RBM_HEADER)?;
    let weights = read_snapshot_block(&mut lines)?;
    let visible_bias = lines.expect_vector("visible_bias", weights.n_in())?;
    let hidden_bias = lines.expect_vector("hidden_bias", weights.n_out())?;
    RbmModel::from_parts(weights, visible_bias, hidden_bias)
}

fn mode_name(mode: SparsityMode) -> &'static str {
    match mode {
        SparsityMode::Set => "set",
        SparsityMode::FixProb => "fixprob",
        SparsityMode::Dense => "dense",
    }
}

fn parse_mode(s: &str) -> Result<SparsityMode> {
    match s.trim() {
        "set" => Ok(SparsityMode::Set),
        "fixprob" => Ok(SparsityMode::FixProb),
        "dense" => Ok(SparsityMode::Dense),
        other => Err(Error::Parse(format!("unknown sparsity mode '{other}'"))),
    }
}

fn write_vector<W: Write>(w: &mut W, label: &str, values: &[f64]) -> Result<()> {
    write!(w, "{label}")?;
    for v in values {
        write!(w, " {v}")?;
    }
    writeln!(w)?;
    Ok(())
}

struct Lines<R: BufRead> {
    inner: R,
    buf: String,
    lineno: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(inner: R) -> Self {
        Lines {
            inner,
            buf: String::new(),
            lineno: 0,
        }
    }

    fn next_line(&mut self) -> Result<&str> {
        self.buf.clear();
        let n = self.inner.read_line(&mut self.buf)?;
        if n == 0 {
            return Err(Error::Parse(format!(
                "unexpected end of checkpoint after line {}",
                self.lineno
            )));
        }
        self.lineno += 1;
        Ok(self.buf.trim_end_matches(['\n', '\r']))
    }

    fn expect_exact(&mut self, expected: &str) -> Result<()> {
        let line = self.next_line()?.to_string();
        if line != expected {
            return Err(Error::Parse(format!(
                "line {}: expected '{expected}', found '{line}'",
                self.lineno
            )));
        }
        Ok(())
    }

    fn expect_prefixed(&mut self, prefix: &str) -> Result<String> {
        let lineno = self.lineno + 1;
        let line = self.next_line()?;
        line.strip_prefix(prefix)
            .map(|rest| rest.trim().to_string())
            .ok_or_else(|| {
                Error::Parse(format!("line {lineno}: expected '{prefix} ...', found '{line}'"))
            })
    }

    fn expect_vector(&mut self, label: &str, len: usize) -> Result<Vec<f64>> {
        let rest = self.expect_prefixed(label)?;
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                Error::Parse(format!("line {}: invalid number in {label}", self.lineno))
            })?;
        if values.len() != len {
            return Err(Error::Parse(format!(
                "line {}: {label} has {} values, expected {len}",
                self.lineno,
                values.len()
            )));
        }
        Ok(values)
    }
}

fn read_snapshot_block<R: BufRead>(lines: &mut Lines<R>) -> Result<SparseWeights> {
    let header = lines.next_line()?.to_string();
    let mut it = header.split_whitespace();
    let parse = |tok: Option<&str>| -> Result<usize> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("invalid snapshot header".into()))
    };
    let n_in = parse(it.next())?;
    let n_out = parse(it.next())?;
    let nnz = parse(it.next())?;
    let mut links = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let line = lines.next_line()?;
        let mut f = it_fields(line);
        let in_idx: u32 = f
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("invalid link in_idx".into()))?;
        let out_idx: u32 = f
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("invalid link out_idx".into()))?;
        let weight: f64 = f
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("invalid link weight".into()))?;
        links.push(crate::topology::Link {
            in_idx,
            out_idx,
            weight,
        });
    }
    SparseWeights::from_links(n_in, n_out, links)
}

fn it_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split_whitespace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;
    use crate::mlp::{build_mlp, TrainConfig};
    use crate::topology::{EvolutionConfig, WeightInitSpec};

    #[test]
    fn mlp_checkpoint_round_trips() {
        let mut cfg = TrainConfig::new(1, 5);
        cfg.evolution = EvolutionConfig::new(3.0, 0.3, 5).unwrap();
        let model = build_mlp(
            &[7, 9, 4],
            &[Activation::Srelu, Activation::Softmax],
            SparsityMode::Set,
            &cfg,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_mlp_checkpoint(&model, &mut buf).unwrap();
        let back = read_mlp_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.mode, model.mode);
        assert_eq!(back.layers.len(), 2);
        for (a, b) in back.layers.iter().zip(model.layers.iter()) {
            assert_eq!(a.weights.links(), b.weights.links());
            assert_eq!(a.bias, b.bias);
            assert_eq!(a.activation, b.activation);
            assert_eq!(a.srelu, b.srelu);
        }
    }

    #[test]
    fn rbm_checkpoint_round_trips() {
        let evolution = EvolutionConfig::new(4.0, 0.3, 9).unwrap();
        let mut model = RbmModel::new(
            11,
            6,
            SparsityMode::Set,
            &evolution,
            &WeightInitSpec::default(),
        )
        .unwrap();
        model.visible_bias[3] = -0.125;
        model.hidden_bias[5] = 2.5e-7;
        let mut buf = Vec::new();
        write_rbm_checkpoint(&model, &mut buf).unwrap();
        let back = read_rbm_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.weights.links(), model.weights.links());
        assert_eq!(back.visible_bias, model.visible_bias);
        assert_eq!(back.hidden_bias, model.hidden_bias);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        assert!(read_mlp_checkpoint(&b"wrong header\n"[..]).is_err());
        assert!(read_rbm_checkpoint(&b"sparset-rbm v1\n2 2 1\n0 0 nanx\n"[..]).is_err());
        let truncated = b"sparset-rbm v1\n2 2 1\n0 0 1.0\nvisible_bias 0.0\n";
        assert!(read_rbm_checkpoint(&truncated[..]).is_err());
    }
}
