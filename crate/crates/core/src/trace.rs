//! Routing traces and their line-delimited JSON file format.
//!
//! ```text
//! {"header":{"N":128,"G":8,"k":8}}
//! {"layer":0,"phase":"decode","tokens":[{"src":0,"experts":[3,17,...]},...]}
//! ```
//!
//! The first non-empty line is the header; every following line is one batch.
//! An empty file is an empty trace. Serialising is canonical: compact JSON,
//! fields in the order shown above, one `\n` after every record.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::types::{ClusterSpec, ModelSpec, TokenBatch};
use crate::workload::ZipfPopularity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prefill,
    Decode,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Prefill => "prefill",
            Phase::Decode => "decode",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefill" => Ok(Phase::Prefill),
            "decode" => Ok(Phase::Decode),
            other => Err(Error::Validation(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    #[serde(rename = "N")]
    pub num_experts: usize,
    #[serde(rename = "G")]
    pub num_gpus: usize,
    #[serde(rename = "k")]
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceBatch {
    pub layer: usize,
    pub phase: Phase,
    pub tokens: TokenBatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub header: Option<TraceHeader>,
    pub batches: Vec<TraceBatch>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: TraceHeader,
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Self { header: Some(header), batches: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Checks the layer index bound against the model.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if let Some(h) = self.header {
            if h.num_experts != model.num_experts || h.top_k != model.top_k {
                return Err(Error::Validation(format!(
                    "trace header N={} k={} does not match model N={} k={}",
                    h.num_experts, h.top_k, model.num_experts, model.top_k
                )));
            }
        }
        for (n, b) in self.batches.iter().enumerate() {
            if b.layer >= model.num_moe_layers {
                return Err(Error::Validation(format!(
                    "batch {n}: layer {} out of range [0, {})",
                    b.layer, model.num_moe_layers
                )));
            }
        }
        Ok(())
    }

    pub fn total_tokens(&self, phase: Option<Phase>) -> usize {
        self.batches.iter().filter(|b| phase.is_none_or(|p| p == b.phase)).map(|b| b.tokens.len()).sum()
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        if let Some(header) = self.header {
            serde_json::to_writer(&mut w, &HeaderLine { header }).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        } else if !self.batches.is_empty() {
            return Err(Error::Validation("a trace with batches needs a header".into()));
        }
        for b in &self.batches {
            serde_json::to_writer(&mut w, b).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trace = Trace::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let Some(header) = trace.header else {
                let h: HeaderLine = serde_json::from_str(line)
                    .map_err(|e| Error::Parse { line: line_no, message: format!("expected header record: {e}") })?;
                trace.header = Some(h.header);
                continue;
            };
            let batch: TraceBatch =
                serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            batch.tokens.validate(header.num_experts, header.top_k, header.num_gpus).map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
                other => other,
            })?;
            trace.batches.push(batch);
        }
        Ok(trace)
    }
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    trace.to_writer(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    Trace::parse(&fs::read_to_string(path)?)
}

/// Shape of a synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub skew: f64,
    pub decode_passes: usize,
    pub decode_tokens_per_gpu: usize,
    pub prefill_passes: usize,
    pub prefill_tokens_per_gpu: usize,
    /// MoE layers recorded per pass; capped at the model's layer count.
    pub layers_per_pass: usize,
}

/// Generates a synthetic trace: prefill passes first, then decode passes, each
/// pass carrying one batch per recorded layer. All layers share one expert
/// popularity ranking and draw their tokens independently.
pub fn gen_trace(model: &ModelSpec, cluster: &ClusterSpec, spec: &TraceSpec, seed: u64) -> Result<Trace> {
    let pop = ZipfPopularity::new(model.num_experts, spec.skew, seed)?;
    let layers = spec.layers_per_pass.clamp(1, model.num_moe_layers);
    let mut trace =
        Trace::new(TraceHeader { num_experts: model.num_experts, num_gpus: cluster.num_gpus, top_k: model.top_k });
    for (phase, passes, tokens_per_gpu) in [
        (Phase::Prefill, spec.prefill_passes, spec.prefill_tokens_per_gpu),
        (Phase::Decode, spec.decode_passes, spec.decode_tokens_per_gpu),
    ] {
        for pass in 0..passes {
            for layer in 0..layers {
                let mut rng = rng_for(seed, &format!("{phase}/{pass}/{layer}"));
                let tokens = pop.batch(model.top_k, cluster.num_gpus, tokens_per_gpu, &mut rng);
                trace.batches.push(TraceBatch { layer, phase, tokens });
            }
        }
    }
    Ok(trace)
}
