//! Discrete-time LTI simulation, persistently exciting inputs, multi-experiment
//! dataset generation and i.i.d. measurement-noise injection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hankel::{pe_order_check, DEFAULT_RANK_TOL};
use crate::rng::{derived, Purpose};
use crate::{Error, Real, Result};

/// Regeneration budget for persistently exciting inputs.
pub const PE_MAX_ATTEMPTS: usize = 10;

/// `x⁺ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    d: DMatrix<T>,
}

impl<T: Real> StateSpace<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::invalid("n, m and p must be positive"));
        }
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != p || d.ncols() != m
        {
            return Err(Error::invalid(format!(
                "inconsistent dimensions: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        let ss = StateSpace { a, b, c, d };
        if [&ss.a, &ss.b, &ss.c, &ss.d]
            .iter()
            .any(|m| m.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite("state-space matrices"));
        }
        Ok(ss)
    }

    /// Three-state, two-input, three-output benchmark with full state
    /// measurement and no feedthrough.
    pub fn benchmark() -> Self {
        let a = [0.8, -0.1, 0.0, 0.1, 0.7, 0.1, 0.0, -0.2, 0.6];
        let b = [1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        let lit = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<_>>();
        StateSpace {
            a: DMatrix::from_row_slice(3, 3, &lit(&a)),
            b: DMatrix::from_row_slice(3, 2, &lit(&b)),
            c: DMatrix::identity(3, 3),
            d: DMatrix::zeros(3, 2),
        }
    }

    /// Random system with i.i.d. normal `B, C, D` and `A` rescaled to the
    /// given spectral radius.
    pub fn random_stable<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        p: usize,
        radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut draw = |r, c| {
            DMatrix::from_fn(r, c, |_, _| T::lit(StandardNormal.sample(&mut *rng)))
        };
        let a = draw(n, n);
        let b = draw(n, m);
        let c = draw(p, n);
        let d = draw(p, m);
        let mut ss = StateSpace::new(a, b, c, d)?;
        let rho = ss.spectral_radius();
        if rho > T::zero() {
            ss.a *= T::lit(radius) / rho;
        }
        Ok(ss)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }

    pub fn spectral_radius(&self) -> T {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re.hypot(z.im))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Runs the recursion from `x0` over the rows of `u` (`N × m`).
    pub fn simulate(&self, x0: &DVector<T>, u: &DMatrix<T>) -> Result<Experiment<T>> {
        if x0.len() != self.n() {
            return Err(Error::invalid(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                self.n()
            )));
        }
        if u.ncols() != self.m() {
            return Err(Error::invalid(format!(
                "input has {} channels, expected {}",
                u.ncols(),
                self.m()
            )));
        }
        let steps = u.nrows();
        let mut y = DMatrix::zeros(steps, self.p());
        let mut x = x0.clone();
        for k in 0..steps {
            let uk = u.row(k).transpose();
            let yk = &self.c * &x + &self.d * &uk;
            y.set_row(k, &yk.transpose());
            x = &self.a * &x + &self.b * &uk;
        }
        Experiment::new(u.clone(), y)
    }
}

/// One input/output record: `u` is `N × m`, `y` is `N × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment<T: Real> {
    pub u: DMatrix<T>,
    pub y: DMatrix<T>,
}

impl<T: Real> Experiment<T> {
    pub fn new(u: DMatrix<T>, y: DMatrix<T>) -> Result<Self> {
        if u.nrows() != y.nrows() {
            return Err(Error::invalid(format!(
                "input length {} differs from output length {}",
                u.nrows(),
                y.nrows()
            )));
        }
        Ok(Experiment { u, y })
    }

    pub fn len(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m(&self) -> usize {
        self.u.ncols()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }
}

/// Ensemble of experiments sharing `N`, `m` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    experiments: Vec<Experiment<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(experiments: Vec<Experiment<T>>) -> Result<Self> {
        let first = experiments
            .first()
            .ok_or_else(|| Error::invalid("a dataset needs at least one experiment"))?;
        let (n, m, p) = (first.len(), first.m(), first.p());
        if let Some((i, e)) = experiments
            .iter()
            .enumerate()
            .find(|(_, e)| e.len() != n || e.m() != m || e.p() != p)
        {
            return Err(Error::invalid(format!(
                "experiment {i} has shape (N={}, m={}, p={}), expected (N={n}, m={m}, p={p})",
                e.len(),
                e.m(),
                e.p()
            )));
        }
        Ok(Dataset { experiments })
    }

    pub fn experiments(&self) -> &[Experiment<T>] {
        &self.experiments
    }

    pub fn into_experiments(self) -> Vec<Experiment<T>> {
        self.experiments
    }

    pub fn nt(&self) -> usize {
        self.experiments.len()
    }

    pub fn samples(&self) -> usize {
        self.experiments[0].len()
    }

    pub fn m(&self) -> usize {
        self.experiments[0].m()
    }

    pub fn p(&self) -> usize {
        self.experiments[0].p()
    }
}

/// Distribution family of a noise channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
    ShiftedExponential,
}

/// i.i.d. additive noise law, one per channel group (inputs or outputs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    /// `shift + scale · Exp(1)`.
    ShiftedExponential { shift: f64, scale: f64 },
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec::Gaussian {
        mean: 0.0,
        std: 0.0,
    };

    /// Member of `family` with raw moments `E[η] = m1`, `E[η²] = m2`.
    pub fn from_moments(family: NoiseFamily, m1: f64, m2: f64) -> Result<Self> {
        let var = m2 - m1 * m1;
        if !(m1.is_finite() && m2.is_finite()) || var < 0.0 {
            return Err(Error::invalid(format!(
                "moments (m1={m1}, m2={m2}) imply a negative variance"
            )));
        }
        let sd = var.sqrt();
        Ok(match family {
            NoiseFamily::Gaussian => NoiseSpec::Gaussian { mean: m1, std: sd },
            NoiseFamily::Uniform => {
                let half = sd * 3f64.sqrt();
                NoiseSpec::Uniform {
                    low: m1 - half,
                    high: m1 + half,
                }
            }
            NoiseFamily::ShiftedExponential => NoiseSpec::ShiftedExponential {
                shift: m1 - sd,
                scale: sd,
            },
        })
    }

    pub fn family(&self) -> NoiseFamily {
        match self {
            NoiseSpec::Gaussian { .. } => NoiseFamily::Gaussian,
            NoiseSpec::Uniform { .. } => NoiseFamily::Uniform,
            NoiseSpec::ShiftedExponential { .. } => NoiseFamily::ShiftedExponential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            NoiseSpec::Uniform { low, high } => low.is_finite() && high.is_finite() && high >= low,
            NoiseSpec::ShiftedExponential { shift, scale } => {
                shift.is_finite() && scale.is_finite() && scale >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid noise parameters {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { mean, .. } => mean,
            NoiseSpec::Uniform { low, high } => 0.5 * (low + high),
            NoiseSpec::ShiftedExponential { shift, scale } => shift + scale,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { std, .. } => std * std,
            NoiseSpec::Uniform { low, high } => (high - low).powi(2) / 12.0,
            NoiseSpec::ShiftedExponential { scale, .. } => scale * scale,
        }
    }

    /// First raw moment.
    pub fn m1(&self) -> f64 {
        self.mean()
    }

    /// Second raw moment.
    pub fn m2(&self) -> f64 {
        self.variance() + self.mean().powi(2)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { mean, std } => {
                if std == 0.0 {
                    mean
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    mean + std * z
                }
            }
            NoiseSpec::Uniform { low, high } => {
                if high == low {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            NoiseSpec::ShiftedExponential { shift, scale } => {
                if scale == 0.0 {
                    shift
                } else {
                    let e: f64 = Exp1.sample(rng);
                    shift + scale * e
                }
            }
        }
    }
}

/// Initial-state law for generated experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum InitialState {
    Zero,
    /// Uniform on `[-half_width, half_width]ⁿ`.
    RandomBounded { half_width: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::RandomBounded { half_width: 1.0 }
    }
}

/// Draws an i.i.d. standard normal `N × m` input and checks that it is
/// persistently exciting of `order`, regenerating on failure.
pub fn generate_pe_input<T: Real, R: Rng + ?Sized>(
    samples: usize,
    m: usize,
    order: usize,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    if m == 0 || order == 0 {
        return Err(Error::invalid("channel count and order must be positive"));
    }
    check_pe_feasible(samples, m, order)?;
    for _ in 0..PE_MAX_ATTEMPTS {
        let u = DMatrix::from_fn(samples, m, |_, _| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            T::lit(z)
        });
        if pe_order_check(&u, order, T::lit(DEFAULT_RANK_TOL)) {
            return Ok(u);
        }
    }
    Err(Error::GenerationFailed {
        attempts: PE_MAX_ATTEMPTS,
    })
}

/// `H_order(u)` has `N - order + 1` columns and needs `m · order` of them.
pub fn check_pe_feasible(samples: usize, m: usize, order: usize) -> Result<()> {
    if samples + 1 < (m + 1) * order {
        return Err(Error::Infeasible(format!(
            "N = {samples} is too short for excitation order {order} with m = {m}: \
             need N >= (m+1)*order - 1 = {}",
            (m + 1) * order - 1
        )));
    }
    Ok(())
}

/// `Nt` independent noiseless experiments of length `samples`, each driven by
/// a fresh input persistently exciting of order `depth + n`.
pub fn generate_dataset<T: Real>(
    ss: &StateSpace<T>,
    nt: usize,
    samples: usize,
    depth: usize,
    x0: InitialState,
    seed: u64,
) -> Result<Dataset<T>> {
    if nt == 0 {
        return Err(Error::invalid("Nt must be at least 1"));
    }
    if depth == 0 || samples < depth {
        return Err(Error::invalid(format!(
            "need N >= L >= 1, got N = {samples}, L = {depth}"
        )));
    }
    let order = depth + ss.n();
    check_pe_feasible(samples, ss.m(), order)?;
    if let InitialState::RandomBounded { half_width } = x0 {
        if !(half_width.is_finite() && half_width >= 0.0) {
            return Err(Error::invalid("initial-state half width must be finite and >= 0"));
        }
    }
    let experiments = (0..nt)
        .into_par_iter()
        .map(|i| {
            let mut rng_u = derived(seed, Purpose::Input, i as u64);
            let u = generate_pe_input::<T, _>(samples, ss.m(), order, &mut rng_u)?;
            let x = match x0 {
                InitialState::Zero => DVector::zeros(ss.n()),
                InitialState::RandomBounded { half_width } => {
                    let mut rng_x = derived(seed, Purpose::InitialState, i as u64);
                    DVector::from_fn(ss.n(), |_, _| {
                        if half_width == 0.0 {
                            T::zero()
                        } else {
                            T::lit(rng_x.random_range(-half_width..=half_width))
                        }
                    })
                }
            };
            ss.simulate(&x, &u)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(experiments)
}

fn perturb<T: Real, R: Rng + ?Sized>(signal: &DMatrix<T>, spec: &NoiseSpec, rng: &mut R) -> DMatrix<T> {
    let mut out = signal.clone();
    // time-major so that truncating N leaves earlier draws untouched
    for k in 0..out.nrows() {
        for c in 0..out.ncols() {
            out[(k, c)] += T::lit(spec.sample(rng));
        }
    }
    out
}

/// Adds independent noise to every input and output sample. Experiment `i`
/// draws from its own streams, so the result is independent of scheduling.
pub fn add_noise<T: Real>(
    ds: &Dataset<T>,
    spec_u: &NoiseSpec,
    spec_y: &NoiseSpec,
    seed: u64,
) -> Result<Dataset<T>> {
    spec_u.validate()?;
    spec_y.validate()?;
    let experiments = ds
        .experiments()
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng_u = derived(seed, Purpose::InputNoise, i as u64);
            let mut rng_y = derived(seed, Purpose::OutputNoise, i as u64);
            Experiment {
                u: perturb(&e.u, spec_u, &mut rng_u),
                y: perturb(&e.y, spec_y, &mut rng_y),
            }
        })
        .collect();
    Ok(Dataset { experiments })
}
