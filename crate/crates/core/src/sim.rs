//! Monte Carlo frame simulator.
//!
//! Each frame draws its own ChaCha8 stream: the generator is keyed by the
//! run seed and the stream id is the frame index, so a frame's randomness
//! does not depend on which thread runs it. Within a frame draws happen in a
//! fixed order (arrivals, then per slot: transmitter count, then optional
//! receiver success). All tallies are integers, so merging per-chunk
//! accumulators is exact and the estimate is bit-identical for any thread
//! count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{bayes_update, binom_update, initial_belief, BinomialBelief};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Observation, SlotIndex};
use crate::policies::{
    decide_idealized, decide_realistic, decide_realistic_exact, Environment, PolicyKind, PolicySpec,
};

const FRAMES_PER_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BeliefMode {
    Exact,
    #[default]
    Approx,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: ModelParams,
    pub policy: PolicyKind,
    pub frames: u64,
    pub seed: u64,
    /// Belief tracker for realistic policies; ignored otherwise.
    pub belief_mode: BeliefMode,
    /// Draw a Bernoulli(sigma) receiver outcome per sole transmission instead
    /// of scoring its expectation.
    pub sample_sigma: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(params: ModelParams, policy: PolicyKind, frames: u64, seed: u64) -> Self {
        Self {
            params,
            policy,
            frames,
            seed,
            belief_mode: BeliefMode::default(),
            sample_sigma: false,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdrEstimate {
    pub tdr: f64,
    pub stderr: f64,
    pub frames: u64,
    pub packets_generated: u64,
    pub packets_delivered_weighted: f64,
}

/// Integer tallies over frames. `delivered` counts sole transmissions (or
/// sampled receptions with `sample_sigma`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    frames: u64,
    packets: u64,
    delivered: u64,
    packets_sq: u128,
    delivered_sq: u128,
    cross: u128,
}

impl Tally {
    fn add_frame(&mut self, packets: u64, delivered: u64) {
        self.frames += 1;
        self.packets += packets;
        self.delivered += delivered;
        self.packets_sq += u128::from(packets * packets);
        self.delivered_sq += u128::from(delivered * delivered);
        self.cross += u128::from(packets * delivered);
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.frames += other.frames;
        self.packets += other.packets;
        self.delivered += other.delivered;
        self.packets_sq += other.packets_sq;
        self.delivered_sq += other.delivered_sq;
        self.cross += other.cross;
        self
    }

    /// Ratio estimate with a frame-clustered (delta-method) standard error:
    /// packets of one frame share its contention and are not independent.
    fn estimate(&self, weight: f64) -> TdrEstimate {
        if self.packets == 0 {
            return TdrEstimate {
                tdr: 0.0,
                stderr: 0.0,
                frames: self.frames,
                packets_generated: 0,
                packets_delivered_weighted: 0.0,
            };
        }
        let ratio = self.delivered as f64 / self.packets as f64;
        let f = self.frames as f64;
        let stderr = if self.frames > 1 {
            let resid = self.delivered_sq as f64 - 2.0 * ratio * self.cross as f64
                + ratio * ratio * self.packets_sq as f64;
            let mean_packets = self.packets as f64 / f;
            (resid.max(0.0) / (f * (f - 1.0))).sqrt() / mean_packets
        } else {
            0.0
        };
        TdrEstimate {
            tdr: weight * ratio,
            stderr: weight * stderr,
            frames: self.frames,
            packets_generated: self.packets,
            packets_delivered_weighted: weight * self.delivered as f64,
        }
    }
}

enum Tracker {
    None,
    Exact(crate::belief::ActivityBelief),
    Approx(BinomialBelief),
}

fn frame_rng(base: &ChaCha8Rng, frame: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(frame);
    rng.set_word_pos(0);
    rng
}

fn binomial_draw(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Simulates one frame and returns `(packets, delivered)`.
fn run_frame(cfg: &SimConfig, env: Environment, rng: &mut ChaCha8Rng) -> Result<(u64, u64)> {
    let params = &cfg.params;
    let packets = binomial_draw(rng, params.nodes as u64, params.lambda);
    if packets == 0 {
        return Ok((0, 0));
    }
    let mut tracker = match (env, cfg.belief_mode) {
        (Environment::Realistic, BeliefMode::Exact) => Tracker::Exact(initial_belief(params)),
        (Environment::Realistic, BeliefMode::Approx) => {
            Tracker::Approx(BinomialBelief::initial(params))
        }
        _ => Tracker::None,
    };
    let mut active = packets;
    let mut delivered = 0;
    for t in 1..=params.deadline {
        if active == 0 {
            break;
        }
        let slot = SlotIndex::new(t, params.deadline)?;
        let p = match &tracker {
            Tracker::None => decide_idealized(&cfg.policy, slot, active as usize - 1, params)?,
            Tracker::Exact(b) => decide_realistic_exact(&cfg.policy, slot, b, params)?,
            Tracker::Approx(bb) => decide_realistic(&cfg.policy, slot, bb, params)?,
        };
        let sent = binomial_draw(rng, active, p);
        if sent == 1 && (!cfg.sample_sigma || rng.random::<f64>() < params.sigma) {
            delivered += 1;
        }
        active -= sent;
        if active > 0 && t < params.deadline {
            let o = Observation::from_transmissions(sent);
            tracker = match tracker {
                Tracker::None => Tracker::None,
                Tracker::Exact(b) => Tracker::Exact(bayes_update(&b, p, o)?),
                Tracker::Approx(bb) => Tracker::Approx(binom_update(&bb, p, o)?),
            };
        }
    }
    Ok((packets, delivered))
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Estimates the TDR of `config.policy`.
pub fn run(config: &SimConfig) -> Result<TdrEstimate> {
    config.params.validate()?;
    if config.frames == 0 {
        return Err(Error::InvalidParameter {
            name: "frames",
            value: "0".into(),
            range: "frames >= 1",
        });
    }
    if let PolicyKind::Static(p) = config.policy {
        crate::error::check_probability("static probability", p)?;
    }
    let env = config.policy.environment();
    let base = ChaCha8Rng::seed_from_u64(config.seed);
    let chunks = config.frames.div_ceil(FRAMES_PER_CHUNK);

    let tally = with_pool(config.threads, || {
        (0..chunks)
            .into_par_iter()
            .map(|chunk| -> Result<Tally> {
                let start = chunk * FRAMES_PER_CHUNK;
                let end = (start + FRAMES_PER_CHUNK).min(config.frames);
                let mut tally = Tally::default();
                for frame in start..end {
                    let mut rng = frame_rng(&base, frame);
                    let (packets, delivered) = run_frame(config, env, &mut rng)?;
                    tally.add_frame(packets, delivered);
                }
                Ok(tally)
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
    })??;

    let weight = if config.sample_sigma { 1.0 } else { config.params.sigma };
    Ok(tally.estimate(weight))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Lambda,
    #[serde(rename = "D")]
    Deadline,
    Sigma,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Deadline => "D",
            SweepAxis::Sigma => "sigma",
        }
    }

    pub fn apply(self, params: ModelParams, value: f64) -> Result<ModelParams> {
        match self {
            SweepAxis::Lambda => params.with_lambda(value),
            SweepAxis::Sigma => params.with_sigma(value),
            SweepAxis::Deadline => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidParameter {
                        name: "D",
                        value: value.to_string(),
                        range: "integer D >= 1",
                    });
                }
                params.with_deadline(value as usize)
            }
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepAxis::Lambda),
            "D" | "deadline" => Ok(SweepAxis::Deadline),
            "sigma" => Ok(SweepAxis::Sigma),
            other => Err(Error::InvalidParameter {
                name: "axis",
                value: other.to_string(),
                range: "lambda | D | sigma",
            }),
        }
    }
}

/// Seed for `(axis index, policy index)` of a sweep, derived from the base
/// seed with a SplitMix64 finalizer.
pub fn derive_seed(base: u64, axis_index: usize, policy_index: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(base ^ mix(((axis_index as u64) << 32) | policy_index as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub value: f64,
    pub policy: PolicySpec,
    pub seed: u64,
    pub estimate: TdrEstimate,
}

/// Runs every policy at every axis value. `base.policy` is ignored; policies
/// are resolved per point (so `optimal` and `static:auto` are re-solved for
/// each parameter set).
pub fn run_sweep(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[f64],
    policies: &[PolicySpec],
) -> Result<Vec<SweepResult>> {
    if values.is_empty() || policies.is_empty() {
        return Err(Error::InvalidParameter {
            name: "sweep",
            value: format!("{} values, {} policies", values.len(), policies.len()),
            range: "at least one value and one policy",
        });
    }
    let mut results = Vec::with_capacity(values.len() * policies.len());
    for (i, &value) in values.iter().enumerate() {
        let params = axis.apply(base.params, value)?;
        for (j, spec) in policies.iter().enumerate() {
            let seed = derive_seed(base.seed, i, j);
            let config = SimConfig {
                params,
                policy: spec.resolve(&params)?,
                seed,
                ..base.clone()
            };
            results.push(SweepResult {
                axis,
                value,
                policy: *spec,
                seed,
                estimate: run(&config)?,
            });
        }
    }
    Ok(results)
}

/// Results CSV: `axis,value,policy,tdr,stderr,frames,seed`.
pub fn write_results_csv<W: Write>(mut out: W, rows: &[SweepResult]) -> Result<()> {
    writeln!(out, "axis,value,policy,tdr,stderr,frames,seed")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.axis.as_str(),
            r.value,
            r.policy,
            r.estimate.tdr,
            r.estimate.stderr,
            r.estimate.frames,
            r.seed
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    /// Other active nodes seen by each active node.
    pub others: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: u64,
    pub steps: Vec<TraceStep>,
}

/// Per-frame `(t, n_t, p_t)` sequences of an idealized policy while at least
/// one node is active. `initial_others` forces `n_1` (so `n_1 + 1` nodes are
/// active); otherwise arrivals are Binomial(N, lambda) and empty frames are
/// skipped.
pub fn trace_realizations(
    params: &ModelParams,
    policy: &PolicyKind,
    frames: u64,
    seed: u64,
    initial_others: Option<usize>,
) -> Result<Vec<Trace>> {
    if policy.environment() == Environment::Realistic {
        return Err(Error::WrongEnvironment {
            policy: policy.name(),
            environment: "idealized",
        });
    }
    if let Some(n1) = initial_others {
        if n1 >= params.nodes {
            return Err(Error::InvalidParameter {
                name: "n1",
                value: n1.to_string(),
                range: "n1 <= N-1",
            });
        }
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = Vec::new();
    for frame in 0..frames {
        let mut rng = frame_rng(&base, frame);
        let mut active = match initial_others {
            Some(n1) => n1 as u64 + 1,
            None => binomial_draw(&mut rng, params.nodes as u64, params.lambda),
        };
        let mut steps = Vec::new();
        for t in 1..=params.deadline {
            if active == 0 {
                break;
            }
            let slot = SlotIndex::new(t, params.deadline)?;
            let others = active as usize - 1;
            let p = decide_idealized(policy, slot, others, params)?;
            steps.push(TraceStep { t, others, prob: p });
            active -= binomial_draw(&mut rng, active, p);
        }
        if !steps.is_empty() {
            traces.push(Trace { id: frame, steps });
        }
    }
    Ok(traces)
}

/// Trace CSV: `trace_id,t,n_t,p_t`.
pub fn write_traces_csv<W: Write>(mut out: W, traces: &[Trace]) -> Result<()> {
    writeln!(out, "trace_id,t,n_t,p_t")?;
    for trace in traces {
        for s in &trace.steps {
            writeln!(out, "{},{},{},{}", trace.id, s.t, s.others, s.prob)?;
        }
    }
    Ok(())
}
