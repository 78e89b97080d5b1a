//! Analytic cost counts and measured inference throughput.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{invalid, Result};
use crate::tensor::{Element, Tensor};
use crate::zoo::{LayerKind, ModelSpec, Network};

/// Multiply-accumulates of one forward pass of one sample. Pooling,
/// activations and normalization count as zero.
pub fn count_macs(spec: &ModelSpec, res: usize) -> Result<u64> {
    let ins = spec.input_shapes(res)?;
    let outs = spec.shapes(res)?;
    Ok(spec
        .layers
        .iter()
        .zip(ins.iter().zip(&outs))
        .map(|(layer, (i, o))| match layer.kind {
            LayerKind::Conv { c_out, k, .. } => (k * k * i[0] * c_out * o[1] * o[2]) as u64,
            LayerKind::Linear { d_out } => (i.iter().product::<usize>() * d_out) as u64,
            _ => 0,
        })
        .sum())
}

/// Exact parameter bytes and the peak bytes of simultaneously live
/// activations when layers run in order, each output kept until its last
/// reader (the next layer or a later skip connection) has run.
pub fn memory_footprint(spec: &ModelSpec, res: usize, batch: usize, dtype_bytes: usize) -> Result<(u64, u64)> {
    let params = spec.param_count()? as u64 * dtype_bytes as u64;
    let outs = spec.shapes(res)?;
    let input: usize = spec.input_shapes(res)?[0].iter().product();
    // Tensor 0 is the input; tensor i + 1 is the output of layer i.
    let mut sizes = vec![input];
    sizes.extend(outs.iter().map(|s| s.iter().product::<usize>()));
    let mut last_use: Vec<usize> = (0..sizes.len()).collect();
    for (i, layer) in spec.layers.iter().enumerate() {
        last_use[i] = last_use[i].max(i);
        if let Some(j) = layer.skip_from {
            last_use[j + 1] = last_use[j + 1].max(i);
        }
    }
    let mut peak = 0usize;
    for step in 0..spec.layers.len() {
        let live: usize = (0..=step + 1).filter(|&t| t == step + 1 || last_use[t] >= step).map(|t| sizes[t]).sum();
        peak = peak.max(live);
    }
    Ok((params, (peak * batch * dtype_bytes) as u64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Throughput {
    pub faces_per_sec: f64,
    pub batch: usize,
    pub batches: usize,
    pub threads: usize,
    pub hardware: String,
}

/// Measures single-threaded inference on a fixed random batch for at least
/// `duration`, after one warm-up batch. Rejects durations too short for ten
/// batches.
pub fn throughput<T: Element>(net: &Network<T>, res: usize, batch: usize, duration: Duration) -> Result<Throughput> {
    if duration.is_zero() || batch == 0 {
        return Err(invalid("throughput needs a positive duration and batch size"));
    }
    let input = net.spec().input_shapes(res)?[0].clone();
    let mut shape = vec![batch];
    shape.extend(&input);
    let x = Tensor::from_fn(&shape, |i| T::from_f64(((i * 7919) % 1000) as f64 / 1000.0))?;
    let start = Instant::now();
    net.infer(&x, batch)?;
    let warm = start.elapsed();
    if warm * 10 > duration {
        return Err(invalid(format!(
            "{:.3}s is too short: one batch takes {:.3}s and at least 10 are needed",
            duration.as_secs_f64(),
            warm.as_secs_f64()
        )));
    }
    let start = Instant::now();
    let mut batches = 0;
    while batches < 10 || start.elapsed() < duration {
        net.infer(&x, batch)?;
        batches += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Throughput {
        faces_per_sec: (batches * batch) as f64 / secs,
        batch,
        batches,
        threads: 1,
        hardware: hardware_descriptor(),
    })
}

/// CPU model and logical core count, best effort.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{model} ({cores} logical cores, {})", std::env::consts::OS)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub model: String,
    pub resolution: usize,
    pub params: u64,
    pub macs: u64,
    pub flops: u64,
    pub param_bytes: u64,
    pub peak_activation_bytes: u64,
    pub throughput: Throughput,
}

impl CostReport {
    pub fn measure<T: Element>(model: &str, net: &Network<T>, res: usize, batch: usize, duration: Duration) -> Result<Self> {
        let spec = net.spec();
        let macs = count_macs(spec, res)?;
        let (param_bytes, peak_activation_bytes) = memory_footprint(spec, res, 1, T::DTYPE.size_bytes())?;
        Ok(Self {
            model: model.to_string(),
            resolution: res,
            params: net.param_count() as u64,
            macs,
            flops: 2 * macs,
            param_bytes,
            peak_activation_bytes,
            throughput: throughput(net, res, batch, duration)?,
        })
    }

    pub fn line(&self) -> String {
        format!(
            "model={} res={} params={} macs={} flops={} param_bytes={} peak_act_bytes={} faces_per_sec={:.1} batch={} threads={} hw={:?}",
            self.model,
            self.resolution,
            self.params,
            self.macs,
            self.flops,
            self.param_bytes,
            self.peak_activation_bytes,
            self.throughput.faces_per_sec,
            self.throughput.batch,
            self.throughput.threads,
            self.throughput.hardware
        )
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} at {}x{}", self.model, self.resolution, self.resolution)?;
        writeln!(f, "  params           {:>12}  ({:.3} M)", self.params, self.params as f64 / 1e6)?;
        writeln!(f, "  MACs             {:>12}  ({:.3} M)", self.macs, self.macs as f64 / 1e6)?;
        writeln!(f, "  FLOPs (2xMACs)   {:>12}", self.flops)?;
        writeln!(f, "  param memory     {:>12}  ({:.3} MB)", self.param_bytes, self.param_bytes as f64 / 1e6)?;
        writeln!(f, "  peak activations {:>12}  ({:.3} MB, batch 1)", self.peak_activation_bytes, self.peak_activation_bytes as f64 / 1e6)?;
        write!(
            f,
            "  throughput       {:>12.1}  faces/s (batch {}, {} thread)",
            self.throughput.faces_per_sec, self.throughput.batch, self.throughput.threads
        )
    }
}
