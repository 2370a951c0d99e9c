//! Dense simulator for the small reference models: entangled qubit and qutrit
//! pairs under isotropic noise, measured with projective measurements.
//!
//! Dimensions never exceed 9 (two qutrits), so everything is a plain dense
//! complex matrix.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bell::{self, BellInequality, CorrelationTable, Scenario};
use crate::rate::ErrorStatistics;
use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-10;
const MEASUREMENT_TOL: f64 = 1e-10;
const CLIP_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    rho: CMatrix,
}

impl DensityMatrix {
    pub fn new(rho: CMatrix) -> Result<Self> {
        if !rho.is_square() || rho.nrows() == 0 {
            return Err(Error::InvalidOperator("density matrix must be square and non-empty".into()));
        }
        let herm_err = (&rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm_err > HERMITIAN_TOL {
            return Err(Error::InvalidOperator(format!("density matrix not Hermitian ({herm_err:.2e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidOperator(format!("density matrix trace {tr}")));
        }
        let min_eig = min_eigenvalue(&rho);
        if min_eig < -EIGEN_TOL {
            return Err(Error::InvalidOperator(format!("density matrix eigenvalue {min_eig:.3e}")));
        }
        Ok(DensityMatrix { rho })
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidOperator("zero state vector".into()));
        }
        let psi = psi.unscale(norm);
        let rho = &psi * psi.adjoint();
        // exact Hermitian symmetry before validation
        Self::new((&rho + rho.adjoint()).scale(0.5))
    }

    /// `v |phi><phi| + (1 - v) 1/d^2` with `|phi> = sum_j |jj> / sqrt(d)`.
    pub fn isotropic(local_dim: usize, noise: NoiseModel) -> Result<Self> {
        let phi = maximally_entangled(local_dim);
        let pure = DensityMatrix::pure(&phi)?;
        let n = local_dim * local_dim;
        let white = CMatrix::identity(n, n).unscale(n as f64);
        let v = noise.visibility();
        Self::new(pure.rho.scale(v) + white.scale(1.0 - v))
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    /// `Re tr[rho op]`.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        let mut acc = ZERO;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                acc += self.rho[(i, j)] * op[(j, i)];
            }
        }
        acc.re
    }
}

/// `sum_j |jj> / sqrt(d)`.
pub fn maximally_entangled(local_dim: usize) -> CVector {
    let mut psi = CVector::zeros(local_dim * local_dim);
    let amp = Complex64::new(1.0 / (local_dim as f64).sqrt(), 0.0);
    for j in 0..local_dim {
        psi[j * local_dim + j] = amp;
    }
    psi
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Measurement operators `A(a|x)` for every input of one party.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    dim: usize,
    ops: Vec<Vec<CMatrix>>,
}

impl MeasurementSet {
    pub fn new(ops: Vec<Vec<CMatrix>>) -> Result<Self> {
        let dim = ops
            .first()
            .and_then(|o| o.first())
            .map(|m| m.nrows())
            .ok_or_else(|| Error::InvalidOperator("empty measurement set".into()))?;
        let id = CMatrix::identity(dim, dim);
        for (x, outcomes) in ops.iter().enumerate() {
            let mut sum = CMatrix::zeros(dim, dim);
            for (a, op) in outcomes.iter().enumerate() {
                if op.nrows() != dim || op.ncols() != dim {
                    return Err(Error::InvalidOperator(format!("A({a}|{x}) has wrong dimension")));
                }
                let herm_err = (op - op.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
                if herm_err > MEASUREMENT_TOL || min_eigenvalue(op) < -MEASUREMENT_TOL {
                    return Err(Error::InvalidOperator(format!("A({a}|{x}) is not positive")));
                }
                sum += op;
            }
            let err = (sum - &id).iter().map(|c| c.norm()).fold(0.0, f64::max);
            if err > MEASUREMENT_TOL {
                return Err(Error::InvalidOperator(format!(
                    "operators of input {x} do not sum to identity ({err:.2e})"
                )));
            }
        }
        Ok(MeasurementSet { dim, ops })
    }

    /// Rank-one projectors onto the given orthonormal bases, one basis per input.
    pub fn from_bases(bases: &[Vec<CVector>]) -> Result<Self> {
        let ops = bases.iter().map(|basis| basis.iter().map(|v| v * v.adjoint()).collect()).collect();
        Self::new(ops)
    }

    /// Qubit measurements of `cos t Z + sin t X`, outcome 0 on the +1 eigenspace.
    pub fn qubit_xz(angles: &[f64]) -> Result<Self> {
        let ops = angles
            .iter()
            .map(|&t| {
                let obs = pauli_z().scale(t.cos()) + pauli_x().scale(t.sin());
                dichotomic_to_projectors(&obs)
            })
            .collect();
        Self::new(ops)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> usize {
        self.ops.len()
    }

    /// Outcome count; the largest over inputs.
    pub fn outputs(&self) -> usize {
        self.ops.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn operator(&self, a: usize, x: usize) -> &CMatrix {
        &self.ops[x][a]
    }

    /// `A_x = A(0|x) - A(1|x)` for binary-outcome inputs.
    pub fn dichotomic(&self, x: usize) -> Result<CMatrix> {
        match self.ops[x].as_slice() {
            [p0, p1] => Ok(p0 - p1),
            _ => Err(Error::InvalidOperator(format!("input {x} is not binary"))),
        }
    }

    /// Appends one input to the set.
    pub fn with_input(mut self, outcomes: Vec<CMatrix>) -> Result<Self> {
        self.ops.push(outcomes);
        Self::new(self.ops)
    }
}

/// `(1 + O) / 2` and `(1 - O) / 2`.
pub fn dichotomic_to_projectors(obs: &CMatrix) -> Vec<CMatrix> {
    let id = CMatrix::identity(obs.nrows(), obs.ncols());
    vec![(&id + obs).scale(0.5), (&id - obs).scale(0.5)]
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    visibility: f64,
}

impl NoiseModel {
    pub fn new(visibility: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::Parameter(format!("visibility {visibility} outside [0, 1]")));
        }
        Ok(NoiseModel { visibility })
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }
}

/// Partially entangled state `cos t |00> + sin t |11>` measured by Bob along
/// `cos p Z +/- sin p X`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateSpec {
    pub theta: f64,
    pub phi: f64,
}

/// `q(ab|xy) = tr[rho (A(a|x) (x) B(b|y))]`, clipped at zero and renormalized.
pub fn correlations(rho: &DensityMatrix, alice: &MeasurementSet, bob: &MeasurementSet) -> Result<CorrelationTable> {
    if rho.dim() != alice.dim() * bob.dim() {
        return Err(Error::Shape(format!("state dimension {} != {} x {}", rho.dim(), alice.dim(), bob.dim())));
    }
    let scenario = Scenario::new(alice.inputs(), bob.inputs(), alice.outputs(), bob.outputs())?;
    let mut values = vec![0.0; scenario.len()];
    for x in 0..alice.inputs() {
        for y in 0..bob.inputs() {
            let mut total = 0.0;
            for (a, pa) in alice.ops[x].iter().enumerate() {
                for (b, pb) in bob.ops[y].iter().enumerate() {
                    let mut p = rho.expectation(&kron(pa, pb));
                    if p < CLIP_TOL {
                        p = p.max(0.0);
                    }
                    values[scenario.index(a, b, x, y)] = p;
                    total += p;
                }
            }
            for a in 0..scenario.outputs_a {
                for b in 0..scenario.outputs_b {
                    values[scenario.index(a, b, x, y)] /= total;
                }
            }
        }
    }
    CorrelationTable::from_distribution(scenario, values)
}

/// `h(p) = -p log2 p - (1 - p) log2 (1 - p)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("binary entropy argument {p} outside [0, 1]")));
    }
    Ok(-xlog2x(p) - xlog2x(1.0 - p))
}

pub(crate) fn xlog2x(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// Joint distribution, `H(a|b)` and error rate at the raw-key settings.
pub fn raw_key_statistics(table: &CorrelationTable, x_raw: usize, y_raw: usize) -> Result<ErrorStatistics> {
    let s = table.scenario;
    if x_raw >= s.inputs_a || y_raw >= s.inputs_b {
        return Err(Error::Shape(format!("raw inputs ({x_raw}, {y_raw}) outside {s:?}")));
    }
    ErrorStatistics::from_joint(s.outputs_a, s.outputs_b, table.block(x_raw, y_raw).to_vec())
}

/// A state with its two measurement sets.
#[derive(Clone, Debug)]
pub struct QuantumModel {
    pub state: DensityMatrix,
    pub alice: MeasurementSet,
    pub bob: MeasurementSet,
}

impl QuantumModel {
    pub fn table(&self) -> Result<CorrelationTable> {
        correlations(&self.state, &self.alice, &self.bob)
    }
}

/// Member of the CHSH family that saturates `P(0|0) <= 1/2 + 1/2 sqrt(2 - g^2/4)`.
#[derive(Clone, Debug)]
pub struct TightnessModel {
    pub spec: StateSpec,
    pub model: QuantumModel,
}

/// State and measurements reaching CHSH value `g` with `P(a=0|x=0) = cos^2 t`,
/// where `sin 2t = sqrt(g^2/4 - 1)` and `tan p = sin 2t`.
pub fn tightness_family(g: f64) -> Result<TightnessModel> {
    let g_max = 2.0 * std::f64::consts::SQRT_2;
    if !(2.0..=g_max + 1e-12).contains(&g) {
        return Err(Error::Parameter(format!("CHSH value {g} outside [2, 2 sqrt 2]")));
    }
    let s2t = (g * g / 4.0 - 1.0).clamp(0.0, 1.0).sqrt();
    let theta = 0.5 * s2t.asin();
    let phi = s2t.atan();
    let mut psi = CVector::zeros(4);
    psi[0] = Complex64::new(theta.cos(), 0.0);
    psi[3] = Complex64::new(theta.sin(), 0.0);
    let state = DensityMatrix::pure(&psi)?;
    let alice = MeasurementSet::qubit_xz(&[0.0, PI / 2.0])?;
    let bob = MeasurementSet::qubit_xz(&[phi, -phi])?;
    Ok(TightnessModel { spec: StateSpec { theta, phi }, model: QuantumModel { state, alice, bob } })
}

/// Compiled-in reference models: a Bell test on the first inputs plus one extra
/// Bob input used for the raw key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// CHSH-optimal qubit angles; Alice input 0 is Z.
    ChshOptimal,
    /// Chained inequality with `n` inputs; Alice input `n - 1` is Z.
    ChainedOptimal(usize),
    /// CGLMP d=3 optimal bases on the maximally entangled qutrit pair.
    Cglmp3Optimal,
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "chsh" | "chsh-optimal" => Ok(Preset::ChshOptimal),
            "cglmp3" | "cglmp3-optimal" => Ok(Preset::Cglmp3Optimal),
            other => {
                let n = other
                    .strip_prefix("chained")
                    .map(|r| r.trim_end_matches("-optimal"))
                    .map(|r| r.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(r))
                    .and_then(|r| r.parse::<usize>().ok())
                    .filter(|&n| n >= 2)
                    .ok_or_else(|| Error::UnknownInequality(name.to_string()))?;
                Ok(Preset::ChainedOptimal(n))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Preset::ChshOptimal => "chsh-optimal".into(),
            Preset::ChainedOptimal(n) => format!("chained{n}-optimal"),
            Preset::Cglmp3Optimal => "cglmp3-optimal".into(),
        }
    }

    pub fn inequality(&self) -> Result<BellInequality> {
        match self {
            Preset::ChshOptimal => Ok(bell::build_chsh()),
            Preset::ChainedOptimal(n) => bell::build_chained(*n),
            Preset::Cglmp3Optimal => bell::build_cglmp(3),
        }
    }

    /// Raw-key settings `(x_raw, y_raw)`; `y_raw` is the extra Bob input.
    pub fn raw_inputs(&self) -> (usize, usize) {
        match self {
            Preset::ChshOptimal => (0, 2),
            Preset::ChainedOptimal(n) => (n - 1, *n),
            Preset::Cglmp3Optimal => (0, 2),
        }
    }

    pub fn local_dim(&self) -> usize {
        match self {
            Preset::Cglmp3Optimal => 3,
            _ => 2,
        }
    }

    /// Device model at visibility `v`, including the key-generation input.
    pub fn model(&self, noise: NoiseModel) -> Result<QuantumModel> {
        let state = DensityMatrix::isotropic(self.local_dim(), noise)?;
        let (alice, bob) = match self {
            Preset::ChshOptimal => {
                (MeasurementSet::qubit_xz(&[0.0, PI / 2.0])?, MeasurementSet::qubit_xz(&[PI / 4.0, -PI / 4.0, 0.0])?)
            }
            Preset::ChainedOptimal(n) => {
                let n = *n;
                let step = PI / n as f64;
                // Alice at (x - (n-1)) pi/n so that input n-1 is Z; Bob offset by pi/2n.
                let alice: Vec<f64> = (0..n).map(|x| (x as f64 - (n - 1) as f64) * step).collect();
                let mut bob: Vec<f64> = alice.iter().map(|t| t + step / 2.0).collect();
                bob.push(0.0);
                (MeasurementSet::qubit_xz(&alice)?, MeasurementSet::qubit_xz(&bob)?)
            }
            Preset::Cglmp3Optimal => {
                let d = 3;
                let fourier = |k: usize, shift: f64, sign: f64| -> CVector {
                    CVector::from_iterator(
                        d,
                        (0..d).map(|j| {
                            let angle = 2.0 * PI / d as f64 * j as f64 * (sign * k as f64 + shift);
                            Complex64::from_polar(1.0 / (d as f64).sqrt(), angle)
                        }),
                    )
                };
                let alice_bases: Vec<Vec<CVector>> =
                    [0.0, 0.5].iter().map(|&s| (0..d).map(|k| fourier(k, s, 1.0)).collect()).collect();
                let mut bob_bases: Vec<Vec<CVector>> =
                    [0.25, -0.25].iter().map(|&s| (0..d).map(|k| fourier(k, s, -1.0)).collect()).collect();
                // key input: complex conjugate of Alice's input-0 basis
                bob_bases.push(alice_bases[0].iter().map(|v| v.conjugate()).collect());
                (MeasurementSet::from_bases(&alice_bases)?, MeasurementSet::from_bases(&bob_bases)?)
            }
        };
        Ok(QuantumModel { state, alice, bob })
    }

    /// Full device table, including the extra key input.
    pub fn device_table(&self, noise: NoiseModel) -> Result<CorrelationTable> {
        self.model(noise)?.table()
    }

    /// Table restricted to the inequality's settings.
    pub fn bell_table(&self, noise: NoiseModel) -> Result<CorrelationTable> {
        let ineq_scenario = self.inequality()?.scenario;
        self.device_table(noise)?.restrict_inputs(ineq_scenario.inputs_a, ineq_scenario.inputs_b)
    }
}

/// Uniformly random pure state on `C^dim` (Gaussian amplitudes, normalized).
pub fn random_pure_state<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    let psi = CVector::from_iterator(dim, (0..dim).map(|_| Complex64::new(gaussian(rng), gaussian(rng))));
    DensityMatrix::pure(&psi)
}

/// Random two-outcome projective qubit measurements, one per input.
pub fn random_qubit_measurements<R: rand::Rng + ?Sized>(inputs: usize, rng: &mut R) -> Result<MeasurementSet> {
    let ops = (0..inputs)
        .map(|_| {
            let (mut nx, mut ny, mut nz) = (gaussian(rng), gaussian(rng), gaussian(rng));
            let norm = (nx * nx + ny * ny + nz * nz).sqrt();
            nx /= norm;
            ny /= norm;
            nz /= norm;
            let i = Complex64::new(0.0, 1.0);
            let obs = CMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(nz, 0.0),
                    Complex64::new(nx, 0.0) - i * ny,
                    Complex64::new(nx, 0.0) + i * ny,
                    Complex64::new(-nz, 0.0),
                ],
            );
            dichotomic_to_projectors(&obs)
        })
        .collect();
    MeasurementSet::new(ops)
}

fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}
