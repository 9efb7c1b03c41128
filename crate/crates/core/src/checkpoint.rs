//! Plain-text checkpoints for the Q-network and the bandit state.
//!
//! Q-network:
//!
//! ```text
//! ddqn-checkpoint v1
//! sizes 4 64 64 5
//! layer 0
//! w <row 0: inputs values>
//! ...
//! b <outputs values>
//! layer 1
//! ...
//! ```
//!
//! Weights are row-major (`outputs × inputs`). Values use the shortest
//! round-trip decimal form, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use crate::cmab::{CmabParams, CmabState, Context};
use crate::env::BlockConfig;
use crate::error::{Error, Result};
use crate::fmt::real;
use crate::nn::{Dense, QNetwork};

const DDQN_MAGIC: &str = "ddqn-checkpoint v1";
const CMAB_MAGIC: &str = "cmab-checkpoint v1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| real(*v)).collect::<Vec<_>>().join(" ")
}

pub fn encode_network(net: &QNetwork) -> String {
    let mut out = String::new();
    out.push_str(DDQN_MAGIC);
    out.push('\n');
    let sizes = net.sizes().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
    out.push_str(&format!("sizes {sizes}\n"));
    for (i, layer) in net.layers().iter().enumerate() {
        out.push_str(&format!("layer {i}\n"));
        for row in layer.weights.chunks_exact(layer.inputs) {
            out.push_str(&format!("w {}\n", join(row)));
        }
        out.push_str(&format!("b {}\n", join(&layer.bias)));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-empty line, split into its tag and the rest.
    fn expect(&mut self, tag: &str) -> Result<(usize, &'a str)> {
        for (n, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
            if head != tag {
                return Err(Error::Checkpoint(format!(
                    "line {}: expected `{tag}`, found `{head}`",
                    n + 1
                )));
            }
            return Ok((n + 1, rest));
        }
        Err(Error::Checkpoint(format!("unexpected end of file, expected `{tag}`")))
    }
}

fn parse_reals(line: usize, text: &str, expected: usize) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("line {line}: bad number `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Checkpoint(format!(
            "line {line}: expected {expected} values, found {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint(format!("line {line}: non-finite value")));
    }
    Ok(values)
}

pub fn decode_network(text: &str) -> Result<QNetwork> {
    let mut first = text.lines();
    if first.next().map(str::trim) != Some(DDQN_MAGIC) {
        return Err(Error::Checkpoint(format!("missing `{DDQN_MAGIC}` header")));
    }
    let mut lines = Lines::new(text);
    lines.inner.next();
    let (n, sizes) = lines.expect("sizes")?;
    let sizes = sizes
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Checkpoint(format!("line {n}: bad size `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Checkpoint(format!("line {n}: invalid layer sizes")));
    }
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (i, w) in sizes.windows(2).enumerate() {
        let (inputs, outputs) = (w[0], w[1]);
        let (n, idx) = lines.expect("layer")?;
        if idx.trim() != i.to_string() {
            return Err(Error::Checkpoint(format!("line {n}: expected layer {i}")));
        }
        let mut weights = Vec::with_capacity(inputs * outputs);
        for _ in 0..outputs {
            let (n, row) = lines.expect("w")?;
            weights.extend(parse_reals(n, row, inputs)?);
        }
        let (n, b) = lines.expect("b")?;
        let bias = parse_reals(n, b, outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
        });
    }
    QNetwork::from_layers(layers).ok_or_else(|| Error::Checkpoint("inconsistent layer shapes".into()))
}

pub fn save_network(net: &QNetwork, path: &Path) -> Result<()> {
    fs::write(path, encode_network(net))?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<QNetwork> {
    decode_network(&fs::read_to_string(path)?)
}

pub fn encode_cmab(state: &CmabState) -> String {
    let p = &state.params;
    let mut out = format!(
        "{CMAB_MAGIC}\nparams {} {} {} {} {}\naverages {} {}\n",
        real(p.xi_density),
        real(p.xi_bandwidth),
        real(p.decay),
        real(p.epsilon),
        real(p.initial_density),
        real(state.avg_density),
        real(state.avg_bandwidth),
    );
    for ctx in Context::ALL {
        out.push_str(&format!("q {} {}\n", ctx.label(), join(&state.estimates[ctx.index()])));
    }
    for ctx in Context::ALL {
        let counts = state.pulls[ctx.index()]
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!("n {} {counts}\n", ctx.label()));
    }
    out
}

fn split_context(n: usize, rest: &str, expected: Context) -> Result<&str> {
    let (label, values) = rest.split_once(' ').unwrap_or((rest, ""));
    if Context::from_label(label) != Some(expected) {
        return Err(Error::Checkpoint(format!(
            "line {n}: expected context {}",
            expected.label()
        )));
    }
    Ok(values)
}

pub fn decode_cmab(text: &str) -> Result<CmabState> {
    if text.lines().next().map(str::trim) != Some(CMAB_MAGIC) {
        return Err(Error::Checkpoint(format!("missing `{CMAB_MAGIC}` header")));
    }
    let mut lines = Lines::new(text);
    lines.inner.next();
    let (n, p) = lines.expect("params")?;
    let p = parse_reals(n, p, 5)?;
    let params = CmabParams {
        xi_density: p[0],
        xi_bandwidth: p[1],
        decay: p[2],
        epsilon: p[3],
        initial_density: p[4],
    };
    params.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let (n, a) = lines.expect("averages")?;
    let a = parse_reals(n, a, 2)?;
    let mut state = CmabState::new(params, a[1]).map_err(|e| Error::Checkpoint(e.to_string()))?;
    state.avg_density = a[0];
    for ctx in Context::ALL {
        let (n, rest) = lines.expect("q")?;
        let values = parse_reals(n, split_context(n, rest, ctx)?, BlockConfig::COUNT)?;
        state.estimates[ctx.index()].copy_from_slice(&values);
    }
    for ctx in Context::ALL {
        let (n, rest) = lines.expect("n")?;
        let counts = split_context(n, rest, ctx)?
            .split_whitespace()
            .map(|t| {
                t.parse::<u64>()
                    .map_err(|_| Error::Checkpoint(format!("line {n}: bad count `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if counts.len() != BlockConfig::COUNT {
            return Err(Error::Checkpoint(format!(
                "line {n}: expected {} counts",
                BlockConfig::COUNT
            )));
        }
        state.pulls[ctx.index()].copy_from_slice(&counts);
    }
    Ok(state)
}

pub fn save_cmab(state: &CmabState, path: &Path) -> Result<()> {
    fs::write(path, encode_cmab(state))?;
    Ok(())
}

pub fn load_cmab(path: &Path) -> Result<CmabState> {
    decode_cmab(&fs::read_to_string(path)?)
}
