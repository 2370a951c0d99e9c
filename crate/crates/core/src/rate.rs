//! Guessing-probability tradeoff curves, min-entropy and key rates.

use serde::{Deserialize, Serialize};

use crate::bell::{build_chsh, local_bound, BellInequality};
use crate::ncpoly::chsh_linear_bound;
use crate::npa::{quantum_max, solve_point, Level, LinearBound, RelaxationProblem};
use crate::quantum::xlog2x;
use crate::{Error, Execution, Result};

pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Tangent point used in place of `2√2`, where the CHSH curve has infinite slope.
const ANALYTIC_TOP: f64 = TSIRELSON - 1e-6;

/// Statistics of the raw-key rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStatistics {
    pub outputs_a: usize,
    pub outputs_b: usize,
    /// `P(a, b)`, row-major in `a`.
    pub joint: Vec<f64>,
    /// `H(a|b)` in bits.
    pub cond_entropy: f64,
    /// `P(a ≠ b)`.
    pub qber: f64,
}

impl ErrorStatistics {
    pub fn from_joint(outputs_a: usize, outputs_b: usize, joint: Vec<f64>) -> Result<Self> {
        if joint.len() != outputs_a * outputs_b {
            return Err(Error::Shape(format!(
                "joint table has {} entries, expected {}",
                joint.len(),
                outputs_a * outputs_b
            )));
        }
        if joint.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Parameter("joint probabilities must be non-negative".into()));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("joint probabilities sum to {total}")));
        }
        let mut h = 0.0;
        for b in 0..outputs_b {
            let pb: f64 = (0..outputs_a).map(|a| joint[a * outputs_b + b]).sum();
            // H(a|b) = H(a,b) - H(b)
            h += xlog2x(pb);
            for a in 0..outputs_a {
                h -= xlog2x(joint[a * outputs_b + b]);
            }
        }
        let qber = (0..outputs_a)
            .flat_map(|a| (0..outputs_b).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| joint[a * outputs_b + b])
            .sum();
        Ok(ErrorStatistics { outputs_a, outputs_b, joint, cond_entropy: h.max(0.0), qber })
    }

    /// `P(a, b)` for a binary symmetric channel with error rate `q`.
    pub fn binary_symmetric(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Parameter(format!("error rate {q} outside [0, 1]")));
        }
        Self::from_joint(2, 2, vec![(1.0 - q) / 2.0, q / 2.0, q / 2.0, (1.0 - q) / 2.0])
    }
}

/// `1/2 + 1/2 √(2 − g²/4)`; values below 2 give 1.
pub fn f_chsh_analytic(g: f64) -> Result<f64> {
    if g > TSIRELSON + 1e-9 || g.is_nan() {
        return Err(Error::Parameter(format!("CHSH value {g} exceeds 2 sqrt 2")));
    }
    let g = g.clamp(2.0, TSIRELSON);
    Ok(0.5 + 0.5 * (2.0 - g * g / 4.0).max(0.0).sqrt())
}

/// Tangent to the CHSH curve at `g0 ∈ [2, 2√2)`.
pub fn linearize_analytic(g0: f64) -> Result<LinearBound> {
    chsh_linear_bound(g0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveSource {
    AnalyticChsh,
    Sdp(Level),
}

impl std::fmt::Display for CurveSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveSource::AnalyticChsh => write!(f, "analytic-chsh"),
            CurveSource::Sdp(l) => write!(f, "sdp(level {l})"),
        }
    }
}

/// Settings of the guessing-probability problem behind a curve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CurveOptions {
    pub x_raw: usize,
    pub a_target: usize,
    pub exec: Execution,
}

/// Sampled bound `f(g)` on `P(a_target|x_raw)` with one affine certificate per sample.
#[derive(Clone, Debug)]
pub struct TradeoffCurve {
    pub ineq: BellInequality,
    pub source: CurveSource,
    pub x_raw: usize,
    pub a_target: usize,
    /// `(g, f(g))`, sorted by `g`.
    pub points: Vec<(f64, f64)>,
    pub certificates: Vec<LinearBound>,
    /// Points raised by the envelope repair.
    pub repaired: usize,
}

impl TradeoffCurve {
    fn floor(&self) -> f64 {
        1.0 / self.ineq.scenario.outputs_a as f64
    }

    /// `min_k (μ_k + ν_k g)` clamped to `[1/outputs_a, 1]`; for the analytic
    /// source the closed form also takes part in the minimum.
    pub fn f_eval(&self, g: f64) -> f64 {
        let mut f = self.certificates.iter().map(|c| c.eval(g)).fold(1.0, f64::min);
        if self.source == CurveSource::AnalyticChsh {
            f = f.min(f_chsh_analytic(g.min(TSIRELSON)).unwrap_or(1.0));
        }
        f.clamp(self.floor(), 1.0)
    }

    /// Certificate at a sampled point (SDP source) or the tangent (analytic).
    pub fn linearize(&self, g0: f64) -> Result<LinearBound> {
        match self.source {
            CurveSource::AnalyticChsh => linearize_analytic(g0),
            CurveSource::Sdp(_) => self
                .certificates
                .iter()
                .find(|c| (c.g0 - g0).abs() <= 1e-12 * (1.0 + g0.abs()))
                .copied()
                .ok_or_else(|| Error::Parameter(format!("g0 = {g0} is not a solved grid point"))),
        }
    }

    pub fn add_certificate(&mut self, c: LinearBound) {
        self.certificates.push(c);
    }
}

/// Evenly spaced grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// Distance kept below the certified relaxation maximum at the top of an SDP
/// grid. The certified value overshoots the true maximum by ~1e-8, and points
/// beyond the true maximum are infeasible.
pub const QMAX_MARGIN: f64 = 1e-7;

/// `[g_loc, g_q]` for a curve: exact for the analytic source, enumerated local
/// bound and certified maximum less [`QMAX_MARGIN`] for the SDP source.
pub fn curve_range(ineq: &BellInequality, source: CurveSource) -> Result<(f64, f64)> {
    match source {
        CurveSource::AnalyticChsh => Ok((2.0, TSIRELSON)),
        CurveSource::Sdp(level) => {
            let lo = local_bound(ineq)?;
            let hi = quantum_max(ineq, level)? - QMAX_MARGIN;
            if !(hi > lo) {
                return Err(Error::Parameter(format!("'{}' has no quantum violation at level {level}", ineq.name)));
            }
            Ok((lo, hi))
        }
    }
}

pub fn build_curve(ineq: &BellInequality, source: CurveSource, grid: &[f64]) -> Result<TradeoffCurve> {
    build_curve_with(ineq, source, grid, CurveOptions::default())
}

/// Builds a curve on `grid`; SDP points are solved independently (in parallel
/// under [`Execution::Parallel`]).
pub fn build_curve_with(
    ineq: &BellInequality,
    source: CurveSource,
    grid: &[f64],
    opts: CurveOptions,
) -> Result<TradeoffCurve> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty grid".into()));
    }
    if let Some(g) = grid.iter().find(|g| !g.is_finite()) {
        return Err(Error::Parameter(format!("grid value {g} is not finite")));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let (points, certificates) = match source {
        CurveSource::AnalyticChsh => {
            if ineq.coefficients() != build_chsh().coefficients() {
                return Err(Error::Parameter(format!("analytic curve only exists for CHSH, not '{}'", ineq.name)));
            }
            if opts.x_raw != 0 || opts.a_target != 0 {
                return Err(Error::Parameter("analytic curve bounds P(0|0) only".into()));
            }
            let mut pts = Vec::with_capacity(grid.len());
            let mut certs = Vec::with_capacity(grid.len());
            for &g in &grid {
                pts.push((g, f_chsh_analytic(g)?));
                certs.push(linearize_analytic(g.clamp(2.0, ANALYTIC_TOP))?);
            }
            (pts, certs)
        }
        CurveSource::Sdp(level) => {
            let prob = RelaxationProblem::build(ineq, opts.a_target, opts.x_raw, level)?;
            let solved = opts.exec.map(&grid, |&g| solve_point(&prob, g));
            let mut pts = Vec::with_capacity(grid.len());
            let mut certs = Vec::with_capacity(grid.len());
            for (&g, r) in grid.iter().zip(solved) {
                let p = r.map_err(|e| match e {
                    Error::Infeasible { detail, .. } => Error::Infeasible { g, detail },
                    other => other,
                })?;
                pts.push((g, p.value));
                certs.push(p.certificate);
            }
            (pts, certs)
        }
    };
    let mut curve = TradeoffCurve {
        ineq: ineq.clone(),
        source,
        x_raw: opts.x_raw,
        a_target: opts.a_target,
        points,
        certificates,
        repaired: 0,
    };
    repair_envelope(&mut curve)?;
    Ok(curve)
}

/// Tolerance for shape defects attributed to solver noise.
const REPAIR_TOL: f64 = 1e-6;

/// Raises the samples to their least concave, non-increasing majorant. Defects
/// larger than [`REPAIR_TOL`] are reported instead.
fn repair_envelope(curve: &mut TradeoffCurve) -> Result<()> {
    let floor = curve.floor();
    for p in curve.points.iter_mut() {
        p.1 = p.1.clamp(floor, 1.0);
    }
    let pts = &curve.points;
    let n = pts.len();
    // upper concave hull (monotone chain)
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let (a, b) = (pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]]);
            let c = pts[i];
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut lifted: Vec<f64> = pts.iter().map(|p| p.1).collect();
    for w in hull.windows(2) {
        let (a, b) = (pts[w[0]], pts[w[1]]);
        for k in w[0] + 1..w[1] {
            let t = (pts[k].0 - a.0) / (b.0 - a.0);
            lifted[k] = lifted[k].max(a.1 + t * (b.1 - a.1));
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        lifted[k] = lifted[k].max(lifted[k + 1]);
    }
    let mut repaired = 0;
    for (k, v) in lifted.into_iter().enumerate() {
        let raise = v - curve.points[k].1;
        if raise > REPAIR_TOL {
            return Err(Error::Numerical(format!(
                "curve not concave/non-increasing at g = {} (defect {raise:.3e})",
                curve.points[k].0
            )));
        }
        if raise > 0.0 {
            repaired += 1;
            curve.points[k].1 = v;
        }
    }
    if repaired > 0 {
        log::warn!("envelope repair raised {repaired} curve point(s) by at most {REPAIR_TOL:e}");
    }
    curve.repaired = repaired;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEntropyReport {
    pub g_est: f64,
    pub f_at_g: f64,
    pub n_raw: u64,
    pub n_est: u64,
    /// `N_est^(-1/4)`.
    pub correction: f64,
    /// `min(1, f + correction)`.
    pub per_round: f64,
    /// `per_round^N`; underflows to 0 for large `N`, see `h_min_bound`.
    pub p_guess_bound: f64,
    /// `−N log₂ per_round`.
    pub h_min_bound: f64,
}

pub fn min_entropy_bound(curve: &TradeoffCurve, g_est: f64, n_raw: u64, n_est: u64) -> Result<MinEntropyReport> {
    if n_raw == 0 || n_est == 0 {
        return Err(Error::Parameter("n_raw and n_est must be >= 1".into()));
    }
    let f_at_g = curve.f_eval(g_est);
    let correction = (n_est as f64).powf(-0.25);
    let per_round = (f_at_g + correction).min(1.0);
    let n = n_raw as f64;
    Ok(MinEntropyReport {
        g_est,
        f_at_g,
        n_raw,
        n_est,
        correction,
        per_round,
        p_guess_bound: per_round.powf(n),
        h_min_bound: (-n * per_round.log2()).max(0.0),
    })
}

/// `−log₂ f(g_est) − H(a|b)`, unclamped.
pub fn key_rate(curve: &TradeoffCurve, g_est: f64, stats: &ErrorStatistics) -> f64 {
    -curve.f_eval(g_est).log2() - stats.cond_entropy
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub v: f64,
    pub qber: f64,
    pub g: f64,
    pub rate: f64,
}

/// Key rate of a preset device at visibility `v`.
pub fn preset_rate(curve: &TradeoffCurve, preset: crate::quantum::Preset, v: f64) -> Result<RatePoint> {
    let (x_raw, y_raw) = preset.raw_inputs();
    if curve.x_raw != x_raw {
        return Err(Error::Parameter(format!(
            "curve bounds P(a|x={}) but {} generates key at x={x_raw}",
            curve.x_raw,
            preset.name()
        )));
    }
    let noise = crate::quantum::NoiseModel::new(v)?;
    let table = preset.device_table(noise)?;
    let ineq = preset.inequality()?;
    let s = ineq.scenario;
    let g = crate::bell::bell_value(&ineq, &table.restrict_inputs(s.inputs_a, s.inputs_b)?)?;
    let stats = crate::quantum::raw_key_statistics(&table, x_raw, y_raw)?;
    Ok(RatePoint { v, qber: stats.qber, g, rate: key_rate(curve, g, &stats) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Root in `v`, if the rate changes sign on the interval.
    pub v: Option<f64>,
    pub qber: Option<f64>,
    pub lo: RatePoint,
    pub hi: RatePoint,
}

/// Bisection for `rate(v) = 0` on `[lo, hi]` to 1e-6 in `v`.
pub fn critical_visibility(mut rate: impl FnMut(f64) -> Result<RatePoint>, lo: f64, hi: f64) -> Result<CriticalPoint> {
    if !(lo < hi) {
        return Err(Error::Parameter(format!("empty visibility interval [{lo}, {hi}]")));
    }
    let p_lo = rate(lo)?;
    let p_hi = rate(hi)?;
    if (p_lo.rate > 0.0) == (p_hi.rate > 0.0) {
        return Ok(CriticalPoint { v: None, qber: None, lo: p_lo, hi: p_hi });
    }
    let (mut a, mut b) = (lo, hi);
    let positive_at_hi = p_hi.rate > 0.0;
    let mut last = p_hi;
    while b - a > 1e-6 {
        let m = 0.5 * (a + b);
        let p = rate(m)?;
        if (p.rate > 0.0) == positive_at_hi {
            b = m;
        } else {
            a = m;
        }
        last = p;
    }
    let v = 0.5 * (a + b);
    let qber = if (last.v - v).abs() < 1e-6 { last.qber } else { rate(v)?.qber };
    Ok(CriticalPoint { v: Some(v), qber: Some(qber), lo: p_lo, hi: p_hi })
}
