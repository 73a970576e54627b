//! Operational zero-delay codec: each step the encoder quantizes the scaled
//! innovation with shared dither and entropy-codes the indices under their
//! dither-conditional PMF; the decoder mirrors the reconstruction exactly.

pub mod container;
mod pmf;
mod shannon;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use pmf::{conditional_pmf, shannon_length, ConditionalPmf, PMF_FLOOR, P_ESCAPE, TAIL_SIGMAS};
pub use shannon::{decode_group, encode_group, BitChunk, BitReader, BitWriter};

use crate::ecdq::{self, DitherStream, QuantizerConfig};
use crate::error::{Error, Result};
use crate::model::{SourceNoise, ValidatedModel};
use crate::nrdf::{self, NrdfSolution, SolverOptions};
use crate::realization::{self, RealizationParams};

/// Version of the per-step code and container layout.
pub const FORMAT_VERSION: u16 = 1;

/// Largest product of per-component support sizes coded as one joint
/// symbol. Larger sets of components are split into consecutive groups.
pub const MAX_JOINT_SUPPORT: f64 = 65_536.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Encoder,
    Decoder,
}

/// Per-step result shared by both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub bits: BitChunk,
    pub y: DVector<f64>,
    pub indices: Vec<i64>,
    /// `Σ −log2 P(index | dither)` over coded components, escapes priced at
    /// the escape mass.
    pub ideal_bits: f64,
    pub escapes: usize,
}

#[derive(Clone, Debug)]
pub struct CodecState {
    side: Side,
    a: DMatrix<f64>,
    params: RealizationParams,
    quant: QuantizerConfig,
    dither: DitherStream,
    sigma_alpha: DVector<f64>,
    pre: DMatrix<f64>,
    post: DMatrix<f64>,
    groups: Vec<Vec<usize>>,
    y_prev: DVector<f64>,
    t: u64,
}

fn plan_groups(params: &RealizationParams, quant: &QuantizerConfig, sigma: &DVector<f64>) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut size = f64::INFINITY;
    for i in 0..params.p() {
        if params.zero_rate[i] {
            continue;
        }
        let support = 2.0 * TAIL_SIGMAS * sigma[i] / quant.steps[i] + 2.0;
        if size * support > MAX_JOINT_SUPPORT || groups.is_empty() {
            groups.push(vec![i]);
            size = support;
        } else {
            groups.last_mut().unwrap().push(i);
            size *= support;
        }
    }
    groups
}

impl CodecState {
    pub fn new(side: Side, m: &ValidatedModel, params: &RealizationParams, seed: u64) -> Result<Self> {
        if params.p() != m.p() {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} components, model has {}",
                params.p(),
                m.p()
            )));
        }
        let quant = ecdq::step_sizes(&params.v)?;
        let sigma_alpha = params.sigma_alpha2().map(f64::sqrt);
        let groups = plan_groups(params, &quant, &sigma_alpha);
        Ok(CodecState {
            side,
            a: m.a.clone(),
            pre: params.precoder(),
            post: params.postcoder(),
            params: params.clone(),
            quant,
            dither: DitherStream::new(seed),
            sigma_alpha,
            groups,
            y_prev: DVector::zeros(m.p()),
            t: 0,
        })
    }

    /// A state positioned at step `t` with reconstruction memory `y_prev`,
    /// as if the preceding steps had been processed.
    pub fn resume(mut self, t: u64, y_prev: DVector<f64>) -> Self {
        self.t = t;
        self.y_prev = y_prev;
        self
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn y_prev(&self) -> &DVector<f64> {
        &self.y_prev
    }

    pub fn params(&self) -> &RealizationParams {
        &self.params
    }

    pub fn quantizer(&self) -> &QuantizerConfig {
        &self.quant
    }

    /// Prediction `A y_{t−1}` of the next source sample.
    pub fn prediction(&self) -> DVector<f64> {
        &self.a * &self.y_prev
    }

    /// Moves the origin onto the current prediction: the memory is cleared
    /// and the shift `A y_{t−1}` is returned so the caller can apply it to
    /// the source. Both sides must recenter at the same steps.
    pub fn recenter(&mut self) -> DVector<f64> {
        let shift = self.prediction();
        self.y_prev.fill(0.0);
        shift
    }

    fn pmfs(&self, group: &[usize]) -> Result<Vec<ConditionalPmf>> {
        group
            .iter()
            .map(|&i| {
                let r = self.dither.sample(self.t, i, self.quant.steps[i]);
                conditional_pmf(r, self.sigma_alpha[i], self.quant.steps[i])
            })
            .collect()
    }

    fn finish_step(&mut self, beta: &DVector<f64>, xhat: DVector<f64>) -> DVector<f64> {
        let y = &self.post * beta + xhat;
        self.y_prev = y.clone();
        self.t += 1;
        y
    }

    fn ideal(pmfs: &[ConditionalPmf], tuple: &[i64]) -> f64 {
        pmfs.iter()
            .zip(tuple)
            .map(|(pmf, j)| shannon_length(pmf, *j).unwrap_or(-pmf.p_escape.log2()))
            .sum()
    }

    /// Encodes `x_t` and advances.
    pub fn encode_step(&mut self, x: &DVector<f64>) -> Result<StepOutput> {
        if self.side != Side::Encoder {
            return Err(Error::WrongSide);
        }
        let xhat = self.prediction();
        let alpha = &self.pre * (x - &xhat);
        let p = alpha.len();
        let mut beta = DVector::zeros(p);
        let mut indices = vec![0i64; p];
        for i in 0..p {
            if self.params.zero_rate[i] {
                continue;
            }
            let delta = self.quant.steps[i];
            let r = self.dither.sample(self.t, i, delta);
            let q = ecdq::quantize_subtractive(alpha[i], delta, r);
            indices[i] = q.index;
            beta[i] = q.reconstruction;
        }
        let mut w = BitWriter::new();
        let mut ideal_bits = 0.0;
        let mut escapes = 0;
        for group in &self.groups {
            let pmfs = self.pmfs(group)?;
            let tuple: Vec<i64> = group.iter().map(|&i| indices[i]).collect();
            ideal_bits += Self::ideal(&pmfs, &tuple);
            escapes += encode_group(&mut w, &pmfs, &tuple)?.escaped as usize;
        }
        let y = self.finish_step(&beta, xhat);
        Ok(StepOutput { bits: w.finish(), y, indices, ideal_bits, escapes })
    }

    /// Decodes one step's bits and advances.
    pub fn decode_step(&mut self, bits: &BitChunk) -> Result<StepOutput> {
        if self.side != Side::Decoder {
            return Err(Error::WrongSide);
        }
        let p = self.params.p();
        let mut indices = vec![0i64; p];
        let mut reader = BitReader::new(bits);
        let mut ideal_bits = 0.0;
        let mut escapes = 0;
        for group in &self.groups {
            let pmfs = self.pmfs(group)?;
            let (tuple, escaped) = decode_group(&mut reader, &pmfs)?;
            ideal_bits += Self::ideal(&pmfs, &tuple);
            escapes += escaped as usize;
            for (&i, j) in group.iter().zip(tuple) {
                indices[i] = j;
            }
        }
        if reader.remaining() != 0 {
            return Err(Error::BitstreamCorrupt(format!(
                "{} unused bits at step {}",
                reader.remaining(),
                self.t
            )));
        }
        let mut beta = DVector::zeros(p);
        for i in 0..p {
            if !self.params.zero_rate[i] {
                let delta = self.quant.steps[i];
                let r = self.dither.sample(self.t, i, delta);
                beta[i] = ecdq::reconstruct(indices[i], delta, r).reconstruction;
            }
        }
        let xhat = self.prediction();
        let y = self.finish_step(&beta, xhat);
        Ok(StepOutput { bits: bits.clone(), y, indices, ideal_bits, escapes })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub distortion: f64,
    /// Total bitstream length over `n`, in bits per source sample (one
    /// source sample being one `p`-vector).
    pub empirical_rate: f64,
    /// Mean `‖x_t − y_t‖²` after the first `burn_in` steps.
    pub empirical_mse: f64,
    pub burn_in: usize,
    pub total_bits: u64,
    /// Sum of ideal code lengths `−log2 P(index | dither)`.
    pub ideal_bits: f64,
    pub escapes: u64,
    pub nrdf_rate: f64,
    pub upper_scalar: f64,
    pub violations: Vec<String>,
    pub per_step_lengths: Vec<u32>,
    pub solution: NrdfSolution,
}

impl SimulationReport {
    /// Rate-sandwich and distortion checks with the given Monte-Carlo slack.
    pub fn check(&mut self, slack: f64) {
        self.violations.clear();
        if self.empirical_rate < self.nrdf_rate - slack {
            self.violations.push(format!(
                "rate {} below lower bound {} - {slack}",
                self.empirical_rate, self.nrdf_rate
            ));
        }
        if self.empirical_rate > self.upper_scalar + slack {
            self.violations.push(format!(
                "rate {} above upper bound {} + {slack}",
                self.empirical_rate, self.upper_scalar
            ));
        }
        if self.empirical_mse > 1.05 * self.distortion {
            self.violations.push(format!(
                "mse {} above 1.05 x D = {}",
                self.empirical_mse,
                1.05 * self.distortion
            ));
        }
        if !self.empirical_mse.is_finite() || !self.empirical_rate.is_finite() {
            self.violations.push("non-finite statistics".into());
        }
    }

    /// CSV with header `t,bits`.
    pub fn write_lengths_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,bits")?;
        for (t, l) in self.per_step_lengths.iter().enumerate() {
            writeln!(out, "{t},{l}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub solver: SolverOptions,
    pub sigma_v: Option<DVector<f64>>,
    /// Decode every step with a freshly constructed decoder as well.
    pub fresh_decoder: bool,
    /// Keep the per-step chunks (for writing a container).
    pub keep_chunks: bool,
    pub slack: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            solver: SolverOptions::default(),
            sigma_v: None,
            fresh_decoder: false,
            keep_chunks: false,
            slack: 0.05,
        }
    }
}

/// Solves, derives the channel and runs a paired encoder/decoder over a
/// fresh source trajectory.
pub fn run_pipeline(m: &ValidatedModel, d: f64, n: usize, seed: u64) -> Result<SimulationReport> {
    run_pipeline_with(m, d, n, seed, &PipelineOptions::default()).map(|(r, _)| r)
}

pub fn run_pipeline_with(
    m: &ValidatedModel,
    d: f64,
    n: usize,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<(SimulationReport, Vec<BitChunk>)> {
    let sol = nrdf::solve_nrdf(m, d, &opts.solver)?;
    run_with_solution(m, &sol, n, seed, opts)
}

/// Same as [`run_pipeline_with`] for an already solved point.
pub fn run_with_solution(
    m: &ValidatedModel,
    sol: &NrdfSolution,
    n: usize,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<(SimulationReport, Vec<BitChunk>)> {
    if n < 1000 {
        return Err(Error::Config(format!("need at least 1000 steps, got {n}")));
    }
    let params = realization::derive_channel(sol, opts.sigma_v.as_ref())?;
    let mut enc = CodecState::new(Side::Encoder, m, &params, seed)?;
    let mut dec = CodecState::new(Side::Decoder, m, &params, seed)?;
    let fresh_template = CodecState::new(Side::Decoder, m, &params, seed)?;
    let mut src = SourceNoise::new(seed, m.q());
    let mut x = src.initial_state(m);
    let radius = realization::recenter_radius(sol);
    let burn_in = if n >= 10 * realization::BURN_IN { realization::BURN_IN } else { 0 };

    let mut lengths = Vec::with_capacity(n);
    let mut chunks = Vec::new();
    let (mut total_bits, mut ideal_bits, mut escapes) = (0u64, 0.0, 0u64);
    let mut sq_sum = 0.0;
    for t in 0..n {
        if enc.y_prev().amax() > radius {
            x -= enc.recenter();
            dec.recenter();
        }
        let fresh = opts.fresh_decoder.then(|| fresh_template.clone().resume(t as u64, dec.y_prev().clone()));
        let out = enc.encode_step(&x)?;
        let back = dec.decode_step(&out.bits)?;
        if back.y.as_slice() != out.y.as_slice() {
            return Err(Error::CodecDesync { step: t as u64 });
        }
        if let Some(mut f) = fresh {
            if f.decode_step(&out.bits)?.y.as_slice() != out.y.as_slice() {
                return Err(Error::CodecDesync { step: t as u64 });
            }
        }
        total_bits += out.bits.nbits as u64;
        ideal_bits += out.ideal_bits;
        escapes += out.escapes as u64;
        lengths.push(out.bits.nbits as u32);
        if t >= burn_in {
            sq_sum += (&x - &out.y).norm_squared();
        }
        if opts.keep_chunks {
            chunks.push(out.bits);
        }
        x = m.propagate(&x, &src.next_w());
    }
    let bounds = nrdf::bounds(sol, None)?;
    let mut report = SimulationReport {
        n,
        p: m.p(),
        seed,
        distortion: sol.distortion,
        empirical_rate: total_bits as f64 / n as f64,
        empirical_mse: sq_sum / (n - burn_in) as f64,
        burn_in,
        total_bits,
        ideal_bits,
        escapes,
        nrdf_rate: sol.rate,
        upper_scalar: bounds.upper_scalar,
        violations: Vec::new(),
        per_step_lengths: lengths,
        solution: sol.clone(),
    };
    report.check(opts.slack);
    Ok((report, chunks))
}

/// Decodes a container written for model `m`, re-solving the operating point
/// from the header's distortion. Returns one reconstruction per step in the
/// source's own coordinates.
pub fn decode_stream(
    m: &ValidatedModel,
    bytes: &[u8],
    solver: &SolverOptions,
    sigma_v: Option<&DVector<f64>>,
) -> Result<Vec<DVector<f64>>> {
    let (header, chunks) = container::read_stream(bytes)?;
    if header.p as usize != m.p() || header.model_hash != container::model_hash(m) {
        return Err(Error::BitstreamCorrupt("stream was written for a different model".into()));
    }
    let sol = nrdf::solve_nrdf(m, header.distortion, solver)?;
    let params = realization::derive_channel(&sol, sigma_v)?;
    let mut dec = CodecState::new(Side::Decoder, m, &params, header.seed)?;
    let radius = realization::recenter_radius(&sol);
    let mut offset = DVector::zeros(m.p());
    let mut out = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        if dec.y_prev().amax() > radius {
            offset += dec.recenter();
        }
        out.push(dec.decode_step(chunk)?.y + &offset);
    }
    Ok(out)
}
