//! Bell scenarios, inequalities and correlation tables.
//!
//! Tensors indexed by `(a, b, x, y)` are stored flat with the `(x, y)` block
//! outermost, so the outcomes of one setting pair are contiguous.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::{Error, Result};

/// Enumeration guard for [`local_bound`], counted in strategy pairs.
pub const MAX_STRATEGY_PAIRS: f64 = 1e7;

const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub inputs_a: usize,
    pub inputs_b: usize,
    pub outputs_a: usize,
    pub outputs_b: usize,
}

impl Scenario {
    pub fn new(inputs_a: usize, inputs_b: usize, outputs_a: usize, outputs_b: usize) -> Result<Self> {
        if inputs_a == 0 || inputs_b == 0 || outputs_a == 0 || outputs_b == 0 {
            return Err(Error::Parameter(format!(
                "scenario counts must be >= 1, got ({inputs_a}, {inputs_b}, {outputs_a}, {outputs_b})"
            )));
        }
        Ok(Scenario { inputs_a, inputs_b, outputs_a, outputs_b })
    }

    /// Number of entries of an `(a, b, x, y)` tensor.
    pub fn len(&self) -> usize {
        self.inputs_a * self.inputs_b * self.outputs_a * self.outputs_b
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        debug_assert!(a < self.outputs_a && b < self.outputs_b);
        debug_assert!(x < self.inputs_a && y < self.inputs_b);
        ((x * self.inputs_b + y) * self.outputs_a + a) * self.outputs_b + b
    }

    #[inline]
    fn block(&self, x: usize, y: usize) -> std::ops::Range<usize> {
        let size = self.outputs_a * self.outputs_b;
        let start = (x * self.inputs_b + y) * size;
        start..start + size
    }

    fn check_entry(&self, a: usize, b: usize, x: usize, y: usize) -> Result<()> {
        if a >= self.outputs_a || b >= self.outputs_b || x >= self.inputs_a || y >= self.inputs_b {
            return Err(Error::Shape(format!("index (a={a}, b={b}, x={x}, y={y}) outside scenario {self:?}")));
        }
        Ok(())
    }

    /// Number of deterministic strategy pairs, `oa^xa * ob^xb`.
    pub fn strategy_pairs(&self) -> f64 {
        (self.outputs_a as f64).powi(self.inputs_a as i32) * (self.outputs_b as f64).powi(self.inputs_b as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BellInequality {
    pub name: String,
    pub scenario: Scenario,
    coefficients: Vec<f64>,
    pub local_bound: f64,
    /// Bound quoted together with the closed-form definition, when it differs
    /// from what enumeration gives. Informational only; never used downstream.
    pub nominal_bound: Option<f64>,
    pub quantum_bound: Option<f64>,
}

impl BellInequality {
    /// Builds an inequality and fills `local_bound` by enumeration.
    pub fn new(name: impl Into<String>, scenario: Scenario, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != scenario.len() {
            return Err(Error::Shape(format!(
                "coefficient tensor has {} entries, scenario needs {}",
                coefficients.len(),
                scenario.len()
            )));
        }
        let mut ineq = BellInequality {
            name: name.into(),
            scenario,
            coefficients,
            local_bound: f64::NAN,
            nominal_bound: None,
            quantum_bound: None,
        };
        ineq.local_bound = local_bound(&ineq)?;
        Ok(ineq)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    #[inline]
    pub fn coeff(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.coefficients[self.scenario.index(a, b, x, y)]
    }

    /// Nonzero coefficients as `(a, b, x, y, value)`.
    pub fn terms(&self) -> Vec<(usize, usize, usize, usize, f64)> {
        let s = self.scenario;
        let mut out = Vec::new();
        for x in 0..s.inputs_a {
            for y in 0..s.inputs_b {
                for a in 0..s.outputs_a {
                    for b in 0..s.outputs_b {
                        let c = self.coeff(a, b, x, y);
                        if c != 0.0 {
                            out.push((a, b, x, y, c));
                        }
                    }
                }
            }
        }
        out
    }

    /// Setting pairs `(x, y)` that carry at least one nonzero coefficient.
    pub fn contributing_settings(&self) -> Vec<(usize, usize)> {
        let s = self.scenario;
        let mut out = Vec::new();
        for x in 0..s.inputs_a {
            for y in 0..s.inputs_b {
                if self.coefficients[s.block(x, y)].iter().any(|&c| c != 0.0) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Applies input permutations and per-input outcome permutations.
    ///
    /// The relabelled inequality has coefficient `g'[pa[x][a], pb[y][b], px[x], py[y]] = g[a, b, x, y]`.
    pub fn relabel(
        &self,
        perm_x: &[usize],
        perm_y: &[usize],
        perm_a: &[Vec<usize>],
        perm_b: &[Vec<usize>],
    ) -> Result<BellInequality> {
        let s = self.scenario;
        let ok = is_permutation(perm_x, s.inputs_a)
            && is_permutation(perm_y, s.inputs_b)
            && perm_a.len() == s.inputs_a
            && perm_b.len() == s.inputs_b
            && perm_a.iter().all(|p| is_permutation(p, s.outputs_a))
            && perm_b.iter().all(|p| is_permutation(p, s.outputs_b));
        if !ok {
            return Err(Error::Parameter("relabelling is not a permutation of the scenario".into()));
        }
        let mut coefficients = vec![0.0; s.len()];
        for (a, b, x, y, c) in self.terms() {
            coefficients[s.index(perm_a[x][a], perm_b[y][b], perm_x[x], perm_y[y])] = c;
        }
        let mut out = self.clone();
        out.coefficients = coefficients;
        Ok(out)
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableKind {
    ExactDistribution,
    EmpiricalFrequency,
}

/// Conditional distribution `q(ab|xy)`.
///
/// Empirical tables keep the raw counts; frequencies are derived from them on
/// access. A setting pair with zero samples has all-zero frequencies and is
/// reported by [`CorrelationTable::missing_settings`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTable {
    pub scenario: Scenario,
    kind: TableKind,
    values: Vec<f64>,
    counts: Option<Vec<u64>>,
}

impl CorrelationTable {
    pub fn from_distribution(scenario: Scenario, values: Vec<f64>) -> Result<Self> {
        if values.len() != scenario.len() {
            return Err(Error::Shape(format!("table has {} entries, scenario needs {}", values.len(), scenario.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Parameter(format!("negative or NaN probability {v}")));
        }
        for x in 0..scenario.inputs_a {
            for y in 0..scenario.inputs_b {
                let total: f64 = values[scenario.block(x, y)].iter().sum();
                if (total - 1.0).abs() > SUM_TOL {
                    return Err(Error::Parameter(format!("q(.|{x}{y}) sums to {total}, expected 1")));
                }
            }
        }
        Ok(CorrelationTable { scenario, kind: TableKind::ExactDistribution, values, counts: None })
    }

    pub fn from_counts(scenario: Scenario, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != scenario.len() {
            return Err(Error::Shape(format!(
                "count tensor has {} entries, scenario needs {}",
                counts.len(),
                scenario.len()
            )));
        }
        let mut values = vec![0.0; scenario.len()];
        for x in 0..scenario.inputs_a {
            for y in 0..scenario.inputs_b {
                let block = scenario.block(x, y);
                let total: u64 = counts[block.clone()].iter().sum();
                if total > 0 {
                    for i in block {
                        values[i] = counts[i] as f64 / total as f64;
                    }
                }
            }
        }
        Ok(CorrelationTable { scenario, kind: TableKind::EmpiricalFrequency, values, counts: Some(counts) })
    }

    pub fn uniform(scenario: Scenario) -> Self {
        let p = 1.0 / (scenario.outputs_a * scenario.outputs_b) as f64;
        CorrelationTable { scenario, kind: TableKind::ExactDistribution, values: vec![p; scenario.len()], counts: None }
    }

    /// Point distribution of the local deterministic strategy `x -> fa[x]`, `y -> fb[y]`.
    pub fn deterministic(scenario: Scenario, fa: &[usize], fb: &[usize]) -> Result<Self> {
        if fa.len() != scenario.inputs_a || fb.len() != scenario.inputs_b {
            return Err(Error::Shape("strategy length does not match scenario".into()));
        }
        if fa.iter().any(|&a| a >= scenario.outputs_a) || fb.iter().any(|&b| b >= scenario.outputs_b) {
            return Err(Error::Shape("strategy outcome outside scenario".into()));
        }
        let mut values = vec![0.0; scenario.len()];
        for x in 0..scenario.inputs_a {
            for y in 0..scenario.inputs_b {
                values[scenario.index(fa[x], fb[y], x, y)] = 1.0;
            }
        }
        Ok(CorrelationTable { scenario, kind: TableKind::ExactDistribution, values, counts: None })
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.values[self.scenario.index(a, b, x, y)]
    }

    /// Joint outcome distribution `P(a, b)` at one setting pair, row-major in `a`.
    pub fn block(&self, x: usize, y: usize) -> &[f64] {
        &self.values[self.scenario.block(x, y)]
    }

    pub fn marginal_a(&self, a: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.outputs_b).map(|b| self.get(a, b, x, y)).sum()
    }

    pub fn marginal_b(&self, b: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.outputs_a).map(|a| self.get(a, b, x, y)).sum()
    }

    /// Setting pairs without any sample (empirical tables only).
    pub fn missing_settings(&self) -> Vec<(usize, usize)> {
        let Some(counts) = &self.counts else { return Vec::new() };
        let s = self.scenario;
        let mut out = Vec::new();
        for x in 0..s.inputs_a {
            for y in 0..s.inputs_b {
                if counts[s.block(x, y)].iter().all(|&c| c == 0) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// `lambda * self + (1 - lambda) * other`, as an exact distribution.
    pub fn mix(&self, lambda: f64, other: &CorrelationTable) -> Result<Self> {
        if self.scenario != other.scenario {
            return Err(Error::Shape("cannot mix tables of different scenarios".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("mixing weight {lambda} outside [0, 1]")));
        }
        let values = self.values.iter().zip(&other.values).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
        Ok(CorrelationTable { scenario: self.scenario, kind: TableKind::ExactDistribution, values, counts: None })
    }

    /// Keeps only the first `inputs_a` / `inputs_b` settings of each side.
    ///
    /// Devices often carry extra key-generation settings that the Bell test
    /// never uses; this drops them.
    pub fn restrict_inputs(&self, inputs_a: usize, inputs_b: usize) -> Result<Self> {
        let s = self.scenario;
        if inputs_a == 0 || inputs_b == 0 || inputs_a > s.inputs_a || inputs_b > s.inputs_b {
            return Err(Error::Shape(format!("cannot restrict {s:?} to {inputs_a} x {inputs_b} inputs")));
        }
        let sub = Scenario { inputs_a, inputs_b, ..s };
        let mut values = Vec::with_capacity(sub.len());
        let mut counts = self.counts.as_ref().map(|_| Vec::with_capacity(sub.len()));
        for x in 0..inputs_a {
            for y in 0..inputs_b {
                let block = s.block(x, y);
                values.extend_from_slice(&self.values[block.clone()]);
                if let (Some(out), Some(src)) = (counts.as_mut(), self.counts.as_ref()) {
                    out.extend_from_slice(&src[block]);
                }
            }
        }
        Ok(CorrelationTable { scenario: sub, kind: self.kind, values, counts })
    }
}

/// `sum_{abxy} g_abxy q(ab|xy)`.
///
/// For empirical tables the per-setting sums are accumulated over integer
/// counts and divided once at the end.
pub fn bell_value(ineq: &BellInequality, table: &CorrelationTable) -> Result<f64> {
    if ineq.scenario != table.scenario {
        return Err(Error::Shape(format!(
            "inequality scenario {:?} does not match table scenario {:?}",
            ineq.scenario, table.scenario
        )));
    }
    let s = ineq.scenario;
    match &table.counts {
        Some(counts) => {
            let mut total = 0.0;
            for x in 0..s.inputs_a {
                for y in 0..s.inputs_b {
                    let block = s.block(x, y);
                    let n: u64 = counts[block.clone()].iter().sum();
                    if n == 0 {
                        continue;
                    }
                    let weighted: f64 = block.map(|i| ineq.coefficients[i] * counts[i] as f64).sum();
                    total += weighted / n as f64;
                }
            }
            Ok(total)
        }
        None => Ok(ineq.coefficients.iter().zip(&table.values).map(|(g, q)| g * q).sum()),
    }
}

/// Maximum Bell value over local deterministic strategies (`g_loc`).
pub fn local_bound(ineq: &BellInequality) -> Result<f64> {
    local_bound_with(ineq, Execution::default())
}

/// [`local_bound`] with an explicit execution mode.
///
/// Alice's strategies are enumerated; for each of them Bob's best response
/// decouples across his inputs, so the maximum over strategy pairs is found
/// without visiting every pair.
pub fn local_bound_with(ineq: &BellInequality, exec: Execution) -> Result<f64> {
    let s = ineq.scenario;
    let pairs = s.strategy_pairs();
    if pairs > MAX_STRATEGY_PAIRS {
        return Err(Error::TooLarge { pairs, limit: MAX_STRATEGY_PAIRS });
    }
    let alice_strategies = (s.outputs_a as u64).pow(s.inputs_a as u32);
    const BLOCK: u64 = 4096;
    let blocks = alice_strategies.div_ceil(BLOCK) as usize;
    let best = exec.map_range(blocks, |blk| {
        let start = blk as u64 * BLOCK;
        let end = (start + BLOCK).min(alice_strategies);
        let mut fa = vec![0usize; s.inputs_a];
        let mut best = f64::NEG_INFINITY;
        for code in start..end {
            decode_strategy(code, s.outputs_a, &mut fa);
            let mut value = 0.0;
            for y in 0..s.inputs_b {
                let mut best_b = f64::NEG_INFINITY;
                for b in 0..s.outputs_b {
                    let c: f64 = (0..s.inputs_a).map(|x| ineq.coeff(fa[x], b, x, y)).sum();
                    best_b = best_b.max(c);
                }
                value += best_b;
            }
            best = best.max(value);
        }
        best
    });
    // Block maxima are combined in index order, so the result is mode-independent.
    Ok(best.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Writes the base-`outputs` digits of `code` into `strategy` (least significant first).
pub fn decode_strategy(mut code: u64, outputs: usize, strategy: &mut [usize]) {
    for slot in strategy.iter_mut() {
        *slot = (code % outputs as u64) as usize;
        code /= outputs as u64;
    }
}

/// CHSH: `(-1)^(a+b+xy)` on two binary inputs and outputs.
pub fn build_chsh() -> BellInequality {
    let s = Scenario { inputs_a: 2, inputs_b: 2, outputs_a: 2, outputs_b: 2 };
    let mut g = vec![0.0; s.len()];
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    g[s.index(a, b, x, y)] = if (a + b + x * y) % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
    }
    let mut ineq = BellInequality::new("chsh", s, g).expect("CHSH tensor is well formed");
    ineq.nominal_bound = Some(2.0);
    ineq
}

/// Chained inequality with `n` binary-outcome inputs per side.
///
/// Each Alice input `x` is paired with Bob inputs `x` and `x - 1 (mod n)`;
/// the pair `(0, n - 1)` enters with a flipped sign.
pub fn build_chained(n: usize) -> Result<BellInequality> {
    if n < 2 {
        return Err(Error::Parameter(format!("chained inequality needs n >= 2, got {n}")));
    }
    let s = Scenario { inputs_a: n, inputs_b: n, outputs_a: 2, outputs_b: 2 };
    let mut g = vec![0.0; s.len()];
    for x in 0..n {
        for (y, wraps) in [(x, false), ((x + n - 1) % n, x == 0)] {
            for a in 0..2 {
                for b in 0..2 {
                    let parity = a + b + usize::from(wraps);
                    g[s.index(a, b, x, y)] += if parity % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
    }
    let mut ineq = BellInequality::new(format!("chained({n})"), s, g)?;
    ineq.nominal_bound = Some(2.0);
    Ok(ineq)
}

/// CGLMP inequality for `d` outcomes in probability form, local bound 2.
///
/// Fails if the enumerated local bound is not 2.
pub fn build_cglmp(d: usize) -> Result<BellInequality> {
    if d < 2 {
        return Err(Error::Parameter(format!("CGLMP needs d >= 2, got {d}")));
    }
    let s = Scenario { inputs_a: 2, inputs_b: 2, outputs_a: d, outputs_b: d };
    let mut g = vec![0.0; s.len()];
    let m = |v: i64| v.rem_euclid(d as i64) as usize;
    let mut add = |x: usize, y: usize, a_minus_b: i64, w: f64| {
        for b in 0..d {
            let a = m(b as i64 + a_minus_b);
            g[s.index(a, b, x, y)] += w;
        }
    };
    for k in 0..(d / 2) {
        let k = k as i64;
        let w = 1.0 - 2.0 * k as f64 / (d as f64 - 1.0);
        // positive block: A1 = B1 + k, B1 = A2 + k + 1, A2 = B2 + k, B2 = A1 + k
        add(0, 0, k, w);
        add(1, 0, -(k + 1), w);
        add(1, 1, k, w);
        add(0, 1, -k, w);
        // negative block: A1 = B1 - k - 1, B1 = A2 - k, A2 = B2 - k - 1, B2 = A1 - k - 1
        add(0, 0, -(k + 1), -w);
        add(1, 0, k, -w);
        add(1, 1, -(k + 1), -w);
        add(0, 1, k + 1, -w);
    }
    let ineq = BellInequality::new(format!("cglmp({d})"), s, g)?;
    if (ineq.local_bound - 2.0).abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "CGLMP d={d}: enumerated local bound {} differs from normalization target 2",
            ineq.local_bound
        )));
    }
    Ok(ineq)
}

/// Recognizes `chsh`, `chained(n)` / `chainedN`, and `cglmp3` / `cglmp(d)`.
pub fn build_named(name: &str) -> Result<BellInequality> {
    let lower = name.trim().to_ascii_lowercase();
    let param = |prefix: &str| -> Option<Result<usize>> {
        let rest = lower.strip_prefix(prefix)?;
        let rest = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest);
        Some(rest.parse::<usize>().map_err(|_| Error::UnknownInequality(name.to_string())))
    };
    if lower == "chsh" {
        Ok(build_chsh())
    } else if let Some(n) = param("chained") {
        build_chained(n?)
    } else if let Some(d) = param("cglmp") {
        build_cglmp(d?)
    } else {
        Err(Error::UnknownInequality(name.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct ScenarioRecord {
    xa: usize,
    xb: usize,
    oa: usize,
    ob: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct InequalityRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    scenario: ScenarioRecord,
    terms: Vec<(usize, usize, usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    local_bound: Option<f64>,
}

/// Parses the sparse JSON inequality format.
///
/// `local_bound` is always recomputed; a supplied value that disagrees by more
/// than 1e-9 is rejected.
pub fn inequality_from_json(text: &str) -> Result<BellInequality> {
    let rec: InequalityRecord = serde_json::from_str(text)?;
    let sc = rec.scenario;
    let s = Scenario::new(sc.xa, sc.xb, sc.oa, sc.ob)?;
    let mut g = vec![0.0; s.len()];
    for &(a, b, x, y, c) in &rec.terms {
        s.check_entry(a, b, x, y)?;
        g[s.index(a, b, x, y)] += c;
    }
    let ineq = BellInequality::new(rec.name.unwrap_or_else(|| "custom".into()), s, g)?;
    if let Some(stated) = rec.local_bound {
        if (stated - ineq.local_bound).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "file states local bound {stated}, enumeration gives {}",
                ineq.local_bound
            )));
        }
    }
    Ok(ineq)
}

pub fn inequality_to_json(ineq: &BellInequality) -> String {
    let s = ineq.scenario;
    let rec = InequalityRecord {
        name: Some(ineq.name.clone()),
        scenario: ScenarioRecord { xa: s.inputs_a, xb: s.inputs_b, oa: s.outputs_a, ob: s.outputs_b },
        terms: ineq.terms(),
        local_bound: Some(ineq.local_bound),
    };
    serde_json::to_string_pretty(&rec).expect("inequality record serializes")
}
