//! Network parameter checkpoints.
//!
//! ```text
//! ane-checkpoint 1
//! network generator 34 3
//! dense 34 2
//! <34·2 weights>
//! <2 biases>
//! leaky_relu 2.0000000000000001e-1
//! batch_norm 2
//! <gamma> / <shift> / <running mean> / <running var> / <momentum epsilon>
//! ...
//! end
//! ```
//!
//! Every real is written with 17 significant digits, so loading restores
//! the exact bits.

use std::fmt::Write as _;
use std::path::Path;

use ane_core::embed::Networks;
use ane_core::nn::{BatchNorm, Dense, Layer, Mlp};
use ane_core::Matrix;

use crate::error::{Error, Result, Stage};
use crate::formats::{read_text, write_atomic};

pub const VERSION: u32 = 1;
const MAGIC: &str = "ane-checkpoint";

fn reals(s: &mut String, xs: &[f64]) {
    for (k, v) in xs.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s.push('\n');
}

fn write_mlp(s: &mut String, name: &str, net: &Mlp) {
    let _ = writeln!(s, "network {name} {} {}", net.inputs(), net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                let _ = writeln!(s, "dense {} {}", d.inputs(), d.outputs());
                reals(s, d.weight.as_slice());
                reals(s, &d.bias);
            }
            Layer::LeakyRelu(slope) => {
                let _ = writeln!(s, "leaky_relu {slope:.16e}");
            }
            Layer::BatchNorm(bn) => {
                let _ = writeln!(s, "batch_norm {}", bn.features());
                reals(s, &bn.gamma);
                reals(s, &bn.shift);
                reals(s, &bn.running_mean);
                reals(s, &bn.running_var);
                reals(s, &[bn.momentum, bn.epsilon]);
            }
            Layer::Sigmoid => s.push_str("sigmoid\n"),
        }
    }
}

pub fn format_checkpoint(nets: &Networks) -> String {
    let mut s = format!("{MAGIC} {VERSION}\n");
    write_mlp(&mut s, "generator", &nets.generator);
    for (name, net) in [
        ("context", &nets.context),
        ("decoder", &nets.decoder),
        ("discriminator", &nets.discriminator),
    ] {
        if let Some(net) = net {
            write_mlp(&mut s, name, net);
        }
    }
    s.push_str("end\n");
    s
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::format(self.path, self.line, message)
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    fn words(&mut self, tag: &str, count: usize) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let w: Vec<&str> = l.split_whitespace().collect();
        if w.first() != Some(&tag) || w.len() != count + 1 {
            return Err(self.err(format!("expected `{tag}` with {count} field(s)")));
        }
        Ok(w[1..].to_vec())
    }

    fn count(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("`{s}` is not a count")))
    }

    fn reals(&mut self, len: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let v = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("`{t}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn mlp(&mut self) -> Result<(String, Mlp)> {
        let head = self.words("network", 3)?;
        let name = head[0].to_owned();
        let inputs = self.count(head[1])?;
        let n_layers = self.count(head[2])?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let l = self.next()?;
            let w: Vec<&str> = l.split_whitespace().collect();
            let layer = match w.as_slice() {
                ["dense", i, o] => {
                    let (i, o) = (self.count(i)?, self.count(o)?);
                    let weight = self.reals(i * o)?;
                    let bias = self.reals(o)?;
                    let weight = Matrix::from_vec(i, o, weight).map_err(Error::core(Stage::Load))?;
                    Layer::Dense(Dense::from_parts(weight, bias).map_err(Error::core(Stage::Load))?)
                }
                ["leaky_relu", slope] => {
                    Layer::LeakyRelu(slope.parse().map_err(|_| self.err("bad leaky ReLU slope"))?)
                }
                ["batch_norm", f] => {
                    let f = self.count(f)?;
                    let mut bn = BatchNorm::new(f);
                    bn.gamma = self.reals(f)?;
                    bn.shift = self.reals(f)?;
                    bn.running_mean = self.reals(f)?;
                    bn.running_var = self.reals(f)?;
                    let h = self.reals(2)?;
                    bn.momentum = h[0];
                    bn.epsilon = h[1];
                    Layer::BatchNorm(bn)
                }
                ["sigmoid"] => Layer::Sigmoid,
                _ => return Err(self.err(format!("unknown layer `{l}`"))),
            };
            layers.push(layer);
        }
        let net = Mlp::new(inputs, layers).map_err(|e| self.err(format!("inconsistent network `{name}`: {e}")))?;
        Ok((name, net))
    }
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<Networks> {
    let mut r = Reader {
        path,
        lines: text.lines().enumerate().peekable(),
        line: 0,
    };
    let head = r.words(MAGIC, 1)?;
    if head[0] != VERSION.to_string() {
        return Err(r.err(format!("unsupported checkpoint version {}", head[0])));
    }
    let (name, generator) = r.mlp()?;
    if name != "generator" {
        return Err(r.err("first network must be the generator"));
    }
    let mut nets = Networks {
        generator,
        context: None,
        decoder: None,
        discriminator: None,
    };
    // a cut inside the last number can still parse, so the trailer is required
    loop {
        match r.lines.peek() {
            Some((_, l)) if l.trim() == "end" => break,
            Some(_) => {}
            None => return Err(r.err("missing `end` line, checkpoint is truncated")),
        }
        let (name, net) = r.mlp()?;
        let slot = match name.as_str() {
            "context" => &mut nets.context,
            "decoder" => &mut nets.decoder,
            "discriminator" => &mut nets.discriminator,
            other => return Err(r.err(format!("unknown network `{other}`"))),
        };
        *slot = Some(net);
    }
    Ok(nets)
}

pub fn save(path: &Path, nets: &Networks) -> Result<()> {
    write_atomic(path, format_checkpoint(nets).as_bytes())
}

pub fn load(path: &Path) -> Result<Networks> {
    parse_checkpoint(&read_text(path)?, path)
}
