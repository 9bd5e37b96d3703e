//! Average controllability of every node.
//!
//! The adjacency matrix `A` is stabilized as `A_norm = A / (l + 1) - I`,
//! with `l` its spectral radius, and the controllability Gramian of
//! `dx/dt = A_norm x + B u` is accumulated on a uniform time grid:
//!
//! ```text
//! dE  = exp(A_norm * dt)
//! P_i = P_{i-1} * dE            (P_0 = I)
//! W   = sum_{i=1..N} (P_i B)(P_i B)^T * dt
//! ```
//!
//! Node scores are the diagonal of `W`. The sum skips `t = 0`, so it is a
//! right Riemann sum of the Gramian integral; its absolute error per
//! diagonal entry is close to `dt / 2 * (B B^T)_jj`. [`Quadrature::Trapezoidal`]
//! applies the endpoint correction that turns it into the trapezoid rule.
//!
//! Two evaluators produce the same sum. [`Engine::Stepwise`] runs the
//! recurrence one step at a time (one matrix product per step).
//! [`Engine::Doubling`] combines partial sums with
//! `S(a + b) = S(a) + P_a S(b) P_a^T`, needing `O(log N)` products, which is
//! what makes graphs with thousands of nodes tractable.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DenseAdjacency, Graph};
use crate::linalg::{
    matrix_exp, solve_lyapunov, spectral_radius, spectral_radius_dense, symmetric_eigenvalues, PowerIteration,
    SquareMatrix,
};

/// Below this size the stepwise evaluator is cheap enough to be the default.
const STEPWISE_MAX_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Stop once the trace of the latest increment is below
    /// `rel_tol * trace(W)`, or at `max_time`.
    Adaptive { rel_tol: f64, max_time: f64 },
    /// Integrate to a fixed total time.
    Fixed { time: f64 },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Adaptive {
            rel_tol: 1e-9,
            max_time: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMatrix {
    #[default]
    Identity,
    /// Row-major `n x m` input matrix.
    Custom(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    RightRiemann,
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Auto,
    Stepwise,
    Doubling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllabilityConfig {
    pub step_size: f64,
    pub horizon: Horizon,
    pub control: ControlMatrix,
    pub quadrature: Quadrature,
    /// Use the adjacency as given instead of its symmetrized form.
    pub directed: bool,
    pub retain_gramian: bool,
    pub engine: Engine,
    pub power_tol: f64,
    pub power_max_iter: usize,
}

impl Default for ControllabilityConfig {
    fn default() -> Self {
        let p = PowerIteration::default();
        ControllabilityConfig {
            step_size: 0.2,
            horizon: Horizon::default(),
            control: ControlMatrix::Identity,
            quadrature: Quadrature::RightRiemann,
            directed: false,
            retain_gramian: false,
            engine: Engine::Auto,
            power_tol: p.tol,
            power_max_iter: p.max_iter,
        }
    }
}

impl ControllabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let dt = self.step_size;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("step_size must be positive, got {dt}")));
        }
        match self.horizon {
            Horizon::Fixed { time } if !(time > dt && time.is_finite()) => {
                return Err(Error::Config(format!("fixed horizon {time} must exceed the step size {dt}")));
            }
            Horizon::Adaptive { rel_tol, max_time } => {
                if rel_tol.is_nan() || rel_tol <= 0.0 {
                    return Err(Error::Config(format!("adaptive rel_tol must be positive, got {rel_tol}")));
                }
                if !(max_time > dt && max_time.is_finite()) {
                    return Err(Error::Config(format!("max_time {max_time} must exceed the step size {dt}")));
                }
            }
            _ => {}
        }
        if let ControlMatrix::Custom(rows) = &self.control {
            let m = rows.first().map_or(0, Vec::len);
            if m == 0 || rows.iter().any(|r| r.len() != m) {
                return Err(Error::Config("custom control matrix must be a non-empty rectangular array".into()));
            }
        }
        if self.power_tol.is_nan() || self.power_tol <= 0.0 || self.power_max_iter == 0 {
            return Err(Error::Config("power iteration needs tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }

    fn max_steps(&self) -> Result<usize> {
        let t = match self.horizon {
            Horizon::Fixed { time } => time,
            Horizon::Adaptive { max_time, .. } => max_time,
        };
        let steps = (t / self.step_size + 1e-9).floor() as usize;
        if steps < 2 {
            return Err(Error::Config(format!(
                "horizon {t} with step {} gives {steps} step(s); at least 2 are needed",
                self.step_size
            )));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityResult {
    pub scores: Vec<f64>,
    pub gramian: Option<SquareMatrix>,
    /// Spectral radius `l` of the adjacency matrix.
    pub spectral_radius: f64,
    /// Largest real part of the eigenvalues of `A_norm`.
    pub a_norm_spectral_abscissa: f64,
    pub steps_used: usize,
    pub engine: Engine,
}

impl ControllabilityResult {
    pub fn horizon(&self, step_size: f64) -> f64 {
        self.steps_used as f64 * step_size
    }
}

/// `A / (l + 1) - I` together with `l`.
pub fn normalize_adjacency_with(a: &DenseAdjacency, power: PowerIteration) -> Result<(SquareMatrix, f64)> {
    let m = SquareMatrix::new(a.matrix().clone())?;
    let l = match spectral_radius(&m, power.tol, power.max_iter) {
        Ok(l) => l,
        Err(Error::NonConvergence { .. }) if m.size() <= 1500 => {
            debug!("power iteration did not converge; using dense eigenvalues");
            spectral_radius_dense(&m)?
        }
        Err(e) => return Err(e),
    };
    let n = m.size();
    let a_norm = m.into_inner() / (l + 1.0) - DMatrix::<f64>::identity(n, n);
    Ok((SquareMatrix::new(a_norm)?, l))
}

pub fn normalize_adjacency(a: &DenseAdjacency) -> Result<SquareMatrix> {
    normalize_adjacency_with(a, PowerIteration::default()).map(|(m, _)| m)
}

/// Per-node average controllability of `g`.
pub fn average_controllability(g: &Graph, cfg: &ControllabilityConfig) -> Result<ControllabilityResult> {
    cfg.validate()?;
    let a = if cfg.directed { g.to_dense() } else { g.symmetrize().to_dense() };
    let n = a.size();
    let power = PowerIteration {
        tol: cfg.power_tol,
        max_iter: cfg.power_max_iter,
    };
    let (a_norm, l) = normalize_adjacency_with(&a, power)?;
    let b = control_matrix(&cfg.control, n)?;
    let dt = cfg.step_size;
    let de = matrix_exp(&a_norm.scale(dt))?;

    let commuting = b.is_none() && a_norm.is_symmetric(0.0);
    let engine = match cfg.engine {
        Engine::Auto if commuting && n > STEPWISE_MAX_NODES => Engine::Doubling,
        Engine::Auto => Engine::Stepwise,
        Engine::Doubling if matches!(cfg.horizon, Horizon::Adaptive { .. }) && !commuting => {
            return Err(Error::Config(
                "the doubling engine with an adaptive horizon needs a symmetric adjacency and identity control".into(),
            ));
        }
        e => e,
    };

    let acc = match engine {
        Engine::Doubling => {
            let steps = match cfg.horizon {
                Horizon::Fixed { .. } => cfg.max_steps()?,
                Horizon::Adaptive { rel_tol, .. } => adaptive_steps_symmetric(&a_norm, dt, rel_tol, cfg.max_steps()?)?,
            };
            if commuting {
                doubling_commuting(de.as_matrix(), steps)
            } else {
                doubling_general(de.as_matrix(), b.as_ref(), steps)
            }
        }
        _ => stepwise(de.as_matrix(), b.as_ref(), cfg)?,
    };

    let mut gram = acc.sum * dt;
    if cfg.quadrature == Quadrature::Trapezoidal {
        let bbt = match &b {
            Some(b) => b * b.transpose(),
            None => DMatrix::identity(n, n),
        };
        gram += (bbt - &acc.last_term) * (dt / 2.0);
    }
    let scores: Vec<f64> = gram.diagonal().iter().copied().collect();
    let high = scores.iter().filter(|&&s| s >= 1.0).count();
    if high > 0 {
        warn!("{high} node(s) have average controllability >= 1");
    }
    let gramian = if cfg.retain_gramian {
        let sym = (&gram + gram.transpose()) * 0.5;
        Some(SquareMatrix::new(sym)?)
    } else {
        None
    };
    Ok(ControllabilityResult {
        scores,
        gramian,
        spectral_radius: l,
        // A is entrywise non-negative, so l itself is an eigenvalue of A
        // (Perron-Frobenius) and the rightmost eigenvalue of A_norm.
        a_norm_spectral_abscissa: l / (l + 1.0) - 1.0,
        steps_used: acc.steps,
        engine,
    })
}

/// Infinite-horizon Gramian from the Lyapunov equation
/// `A_norm W + W A_norm^T + I = 0`, using `g`'s adjacency as given.
pub fn gramian_oracle(g: &Graph) -> Result<SquareMatrix> {
    let a_norm = normalize_adjacency(&g.to_dense())?;
    solve_lyapunov(&a_norm, &SquareMatrix::identity(g.num_nodes()))
}

fn control_matrix(c: &ControlMatrix, n: usize) -> Result<Option<DMatrix<f64>>> {
    match c {
        ControlMatrix::Identity => Ok(None),
        ControlMatrix::Custom(rows) => {
            if rows.len() != n {
                return Err(Error::Config(format!("control matrix has {} rows for {n} nodes", rows.len())));
            }
            let m = rows.first().map_or(0, Vec::len);
            if m == 0 || rows.iter().any(|r| r.len() != m || r.iter().any(|v| !v.is_finite())) {
                return Err(Error::Config("control matrix must be rectangular and finite".into()));
            }
            Ok(Some(DMatrix::from_fn(n, m, |i, j| rows[i][j])))
        }
    }
}

struct Accumulated {
    /// `sum_{i=1..N} (P_i B)(P_i B)^T`, not yet scaled by `dt`.
    sum: DMatrix<f64>,
    /// `(P_N B)(P_N B)^T`.
    last_term: DMatrix<f64>,
    steps: usize,
}

fn stepwise(de: &DMatrix<f64>, b: Option<&DMatrix<f64>>, cfg: &ControllabilityConfig) -> Result<Accumulated> {
    let n = de.nrows();
    let max_steps = cfg.max_steps()?;
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut trace = 0.0;
    let mut steps = 0;
    let mut last = DMatrix::zeros(0, 0);
    while steps < max_steps {
        steps += 1;
        p = &p * de;
        let x = match b {
            Some(b) => &p * b,
            None => p.clone(),
        };
        let term = &x * x.transpose();
        let inc = term.trace();
        sum += &term;
        trace += inc;
        last = term;
        if let Horizon::Adaptive { rel_tol, .. } = cfg.horizon {
            if steps >= 2 && inc < rel_tol * trace {
                break;
            }
        }
    }
    Ok(Accumulated {
        sum,
        last_term: last,
        steps,
    })
}

/// Step count the adaptive rule stops at, from the spectrum of a symmetric
/// `A_norm`: the increment trace at step `i` is `sum_k exp(2 mu_k i dt)`.
fn adaptive_steps_symmetric(a_norm: &SquareMatrix, dt: f64, rel_tol: f64, max_steps: usize) -> Result<usize> {
    let ratios: Vec<f64> = symmetric_eigenvalues(a_norm)?
        .iter()
        .map(|mu| (2.0 * mu * dt).exp())
        .collect();
    let mut powers = ratios.clone();
    let mut trace = 0.0;
    for step in 1..=max_steps {
        let inc: f64 = powers.iter().sum();
        trace += inc;
        if step >= 2 && inc < rel_tol * trace {
            return Ok(step);
        }
        for (p, r) in powers.iter_mut().zip(&ratios) {
            *p *= r;
        }
    }
    Ok(max_steps)
}

/// Binary powering when every term is a power of `R = dE dE^T` (symmetric
/// `A_norm`, `B = I`): `S(a + b) = S(a) + R^a S(b)`.
fn doubling_commuting(de: &DMatrix<f64>, steps: usize) -> Accumulated {
    let r = de * de.transpose();
    // (S(2^m), R^(2^m)) for the current bit; (S(a), R^a) for the bits done.
    let mut cur_s = r.clone();
    let mut cur_r = r;
    let mut acc: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut rest = steps;
    while rest > 0 {
        if rest & 1 == 1 {
            acc = Some(match acc {
                None => (cur_s.clone(), cur_r.clone()),
                Some((s, ra)) => (s + &ra * &cur_s, &ra * &cur_r),
            });
        }
        rest >>= 1;
        if rest > 0 {
            cur_s = &cur_s + &cur_r * &cur_s;
            cur_r = &cur_r * &cur_r;
        }
    }
    let (sum, last) = acc.expect("steps >= 1");
    Accumulated {
        sum: symmetrize(sum),
        last_term: symmetrize(last),
        steps,
    }
}

/// General binary powering: `S(a + b) = S(a) + P_a S(b) P_a^T`, `P_a = dE^a`.
fn doubling_general(de: &DMatrix<f64>, b: Option<&DMatrix<f64>>, steps: usize) -> Accumulated {
    let term = |p: &DMatrix<f64>| -> DMatrix<f64> {
        let x = match b {
            Some(b) => p * b,
            None => p.clone(),
        };
        &x * x.transpose()
    };
    let mut cur_s = term(de);
    let mut cur_p = de.clone();
    let mut acc: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut rest = steps;
    while rest > 0 {
        if rest & 1 == 1 {
            acc = Some(match acc {
                None => (cur_s.clone(), cur_p.clone()),
                Some((s, pa)) => (s + &pa * &cur_s * pa.transpose(), &pa * &cur_p),
            });
        }
        rest >>= 1;
        if rest > 0 {
            cur_s = &cur_s + &cur_p * &cur_s * cur_p.transpose();
            cur_p = &cur_p * &cur_p;
        }
    }
    let (sum, p_n) = acc.expect("steps >= 1");
    Accumulated {
        sum,
        last_term: term(&p_n),
        steps,
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
