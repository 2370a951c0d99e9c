//! Monte Carlo simulation of one protocol run.
//!
//! The device is an i.i.d. source described by an exact correlation table.
//! `N` raw rounds are played at `(x_raw, y_raw)` and `N_est` dedicated
//! estimation rounds at uniformly random inputs. Error correction is an oracle
//! (`b' = a`) charged `ceil(N·H(a|b))` public bits; privacy amplification is a
//! Toeplitz hash of Alice's raw string.

pub mod toeplitz;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_value, BellInequality, CorrelationTable, Scenario, TableKind};
use crate::rate::{min_entropy_bound, ErrorStatistics, MinEntropyReport, TradeoffCurve};
use crate::{Error, Execution, Result};

pub use toeplitz::{toeplitz_hash, ToeplitzHasher};

/// RNG stream for device outcomes.
pub const DEVICE_STREAM: u64 = 1;
/// RNG stream for estimation-round inputs.
pub const INPUT_STREAM: u64 = 2;

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub n_raw: u64,
    pub n_est: u64,
    pub x_raw: usize,
    pub y_raw: usize,
    pub ineq: BellInequality,
    /// True device behaviour; may carry more inputs than the inequality.
    pub table: CorrelationTable,
    pub seed: u64,
    pub slack_bits: u64,
}

impl ProtocolConfig {
    /// Defaults: `N_est = round(√N)`, slack `ceil(2√N)`.
    pub fn new(
        ineq: BellInequality,
        table: CorrelationTable,
        x_raw: usize,
        y_raw: usize,
        n_raw: u64,
        seed: u64,
    ) -> Result<Self> {
        let root = (n_raw as f64).sqrt();
        let cfg = ProtocolConfig {
            n_raw,
            n_est: (root.round() as u64).max(1),
            x_raw,
            y_raw,
            ineq,
            table,
            seed,
            slack_bits: (2.0 * root).ceil() as u64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_raw == 0 || self.n_est == 0 {
            return Err(Error::Parameter("N and N_est must be >= 1".into()));
        }
        let (s, t) = (self.ineq.scenario, self.table.scenario);
        if t.outputs_a != s.outputs_a
            || t.outputs_b != s.outputs_b
            || t.inputs_a < s.inputs_a
            || t.inputs_b < s.inputs_b
        {
            return Err(Error::Shape(format!("device table {t:?} cannot play inequality scenario {s:?}")));
        }
        if self.x_raw >= t.inputs_a || self.y_raw >= t.inputs_b {
            return Err(Error::Parameter(format!(
                "raw inputs ({}, {}) outside device table {t:?}",
                self.x_raw, self.y_raw
            )));
        }
        if self.table.kind() != TableKind::ExactDistribution {
            return Err(Error::Parameter("device table must be an exact distribution".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationRecord {
    pub x: usize,
    pub y: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellEstimate {
    pub g: f64,
    pub std_error: f64,
    /// False when some setting received no estimation round.
    pub reliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub alice_raw: Vec<u8>,
    pub bob_raw: Vec<u8>,
    pub bob_corrected: Vec<u8>,
    pub est_records: Vec<EstimationRecord>,
    pub g_est: f64,
    pub std_error: f64,
    pub estimate_reliable: bool,
    pub qber_emp: f64,
    pub cond_entropy_emp: f64,
    pub n_pub: u64,
    pub slack_bits: u64,
    pub report: MinEntropyReport,
    pub key_len: u64,
    pub key: Vec<u8>,
}

impl ProtocolRun {
    /// Up to the first 64 key bits as hex, most significant bit first.
    pub fn key_prefix_hex(&self) -> String {
        self.key
            .iter()
            .take(64)
            .collect::<Vec<_>>()
            .chunks(4)
            .map(|c| {
                let v = c.iter().fold(0u8, |acc, &&b| (acc << 1) | b) << (4 - c.len());
                format!("{v:x}")
            })
            .collect()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn block_sampler(table: &CorrelationTable, x: usize, y: usize) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(table.block(x, y)).map_err(|e| Error::Parameter(format!("block ({x}, {y}): {e}")))
}

/// Empirical Bell value with a plug-in binomial standard error.
pub fn estimate_bell(records: &[EstimationRecord], ineq: &BellInequality) -> Result<BellEstimate> {
    if records.is_empty() {
        return Err(Error::Parameter("no estimation records".into()));
    }
    let s = ineq.scenario;
    let mut counts = vec![0u64; s.len()];
    for r in records {
        if r.x >= s.inputs_a || r.y >= s.inputs_b || r.a >= s.outputs_a || r.b >= s.outputs_b {
            return Err(Error::Shape(format!("record {r:?} outside {s:?}")));
        }
        counts[s.index(r.a, r.b, r.x, r.y)] += 1;
    }
    let table = CorrelationTable::from_counts(s, counts)?;
    let g = bell_value(ineq, &table)?;
    let mut var = 0.0;
    for x in 0..s.inputs_a {
        for y in 0..s.inputs_b {
            let c = table.counts().expect("empirical table");
            let idx: Vec<usize> =
                (0..s.outputs_a).flat_map(|a| (0..s.outputs_b).map(move |b| s.index(a, b, x, y))).collect();
            let n: u64 = idx.iter().map(|&i| c[i]).sum();
            if n == 0 {
                continue;
            }
            let (m1, m2) = idx.iter().fold((0.0, 0.0), |(m1, m2), &i| {
                let (coef, p) = (ineq.coefficients()[i], table.values()[i]);
                (m1 + coef * p, m2 + coef * coef * p)
            });
            var += (m2 - m1 * m1).max(0.0) / n as f64;
        }
    }
    let missing = table.missing_settings();
    if !missing.is_empty() {
        log::warn!("no estimation rounds for settings {missing:?}; Bell estimate unreliable");
    }
    Ok(BellEstimate { g, std_error: var.sqrt(), reliable: missing.is_empty() })
}

/// Encodes outcomes as bits, `ceil(log2 d)` bits per symbol, most significant first.
fn to_bits(symbols: &[u8], outputs: usize) -> Vec<u8> {
    let width = (usize::BITS - (outputs - 1).leading_zeros()) as usize;
    if width <= 1 {
        return symbols.to_vec();
    }
    symbols.iter().flat_map(|&s| (0..width).rev().map(move |k| (s >> k) & 1)).collect()
}

/// Runs the protocol once. Deterministic in `config.seed`.
pub fn run(config: &ProtocolConfig, curve: &TradeoffCurve) -> Result<ProtocolRun> {
    config.validate()?;
    let ineq = &config.ineq;
    let s: Scenario = ineq.scenario;
    let t = &config.table;
    if s.outputs_a > 256 || s.outputs_b > 256 {
        return Err(Error::Parameter("at most 256 outcomes per input".into()));
    }
    let n = config.n_raw as usize;
    let mut device = stream(config.seed, DEVICE_STREAM);
    let mut inputs = stream(config.seed, INPUT_STREAM);

    let raw = block_sampler(t, config.x_raw, config.y_raw)?;
    let mut alice_raw = Vec::with_capacity(n);
    let mut bob_raw = Vec::with_capacity(n);
    let mut joint = vec![0u64; s.outputs_a * s.outputs_b];
    for _ in 0..n {
        let k = raw.sample(&mut device);
        let (a, b) = (k / s.outputs_b, k % s.outputs_b);
        alice_raw.push(a as u8);
        bob_raw.push(b as u8);
        joint[k] += 1;
    }

    let samplers: Vec<Vec<WeightedIndex<f64>>> = (0..s.inputs_a)
        .map(|x| (0..s.inputs_b).map(|y| block_sampler(t, x, y)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let est_records: Vec<EstimationRecord> = (0..config.n_est)
        .map(|_| {
            let x = inputs.random_range(0..s.inputs_a);
            let y = inputs.random_range(0..s.inputs_b);
            let k = samplers[x][y].sample(&mut device);
            EstimationRecord { x, y, a: k / s.outputs_b, b: k % s.outputs_b }
        })
        .collect();
    let est = estimate_bell(&est_records, ineq)?;

    let stats =
        ErrorStatistics::from_joint(s.outputs_a, s.outputs_b, joint.iter().map(|&c| c as f64 / n as f64).collect())?;
    let leak = config.n_raw as f64 * stats.cond_entropy;
    let n_pub = if leak < 1e-9 { 0 } else { leak.ceil() as u64 };
    let report = min_entropy_bound(curve, est.g, config.n_raw, config.n_est)?;
    let budget = report.h_min_bound.floor() as i128 - n_pub as i128 - config.slack_bits as i128;
    let key_len = budget.max(0) as u64;

    let bits = to_bits(&alice_raw, s.outputs_a);
    let key = ToeplitzHasher::from_seed(bits.len(), key_len as usize, config.seed)?.hash(&bits)?;

    Ok(ProtocolRun {
        bob_corrected: alice_raw.clone(),
        alice_raw,
        bob_raw,
        est_records,
        g_est: est.g,
        std_error: est.std_error,
        estimate_reliable: est.reliable,
        qber_emp: stats.qber,
        cond_entropy_emp: stats.cond_entropy,
        n_pub,
        slack_bits: config.slack_bits,
        report,
        key_len,
        key,
    })
}

/// Independent runs, one per seed, otherwise sharing `base`.
pub fn run_batch(
    base: &ProtocolConfig,
    curve: &TradeoffCurve,
    seeds: &[u64],
    exec: Execution,
) -> Vec<Result<ProtocolRun>> {
    exec.map(seeds, |&seed| {
        let cfg = ProtocolConfig { seed, ..base.clone() };
        run(&cfg, curve)
    })
}
