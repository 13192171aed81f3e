//! Feature deconvolution: find an input to a subnet whose output matches a
//! target feature map in the squared-error sense.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::net::Subnet;
use crate::tensor::FeatureMap;

/// How each iteration picks its direction and step length. Both rules
/// accept a step only when it satisfies the Armijo condition, shrinking the
/// trial step geometrically until it does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Steepest descent. The first trial step is 1, later ones start at twice
    /// the previously accepted step.
    GradientDescent { armijo: f64, shrink: f64 },
    /// Limited-memory BFGS directions with `history` correction pairs.
    Lbfgs { history: usize, armijo: f64, shrink: f64 },
}

impl StepRule {
    pub const fn gradient_descent() -> Self {
        StepRule::GradientDescent {
            armijo: 1e-4,
            shrink: 0.5,
        }
    }

    pub const fn lbfgs() -> Self {
        StepRule::Lbfgs {
            history: 10,
            armijo: 1e-4,
            shrink: 0.5,
        }
    }

    fn armijo_shrink(&self) -> (f64, f64) {
        match *self {
            StepRule::GradientDescent { armijo, shrink } | StepRule::Lbfgs { armijo, shrink, .. } => {
                (armijo, shrink)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconvSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the loss by less than this fraction.
    pub rel_tolerance: f64,
    pub step_rule: StepRule,
    pub seed: u64,
}

impl Default for DeconvSettings {
    fn default() -> Self {
        DeconvSettings {
            max_iterations: 400,
            rel_tolerance: 1e-5,
            step_rule: StepRule::lbfgs(),
            seed: 0,
        }
    }
}

impl DeconvSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("deconvolution needs at least one iteration".into()));
        }
        if self.rel_tolerance.is_nan() || self.rel_tolerance <= 0.0 {
            return Err(Error::Config(format!(
                "relative tolerance must be positive, got {}",
                self.rel_tolerance
            )));
        }
        let (armijo, shrink) = self.step_rule.armijo_shrink();
        if !(armijo > 0.0 && armijo < 1.0 && shrink > 0.0 && shrink < 1.0) {
            return Err(Error::Config(format!(
                "line search needs armijo and shrink in (0, 1), got {armijo} and {shrink}"
            )));
        }
        if let StepRule::Lbfgs { history: 0, .. } = self.step_rule {
            return Err(Error::Config("L-BFGS history must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative loss decrease fell below the tolerance, or the loss hit zero.
    Converged,
    MaxIterations,
    /// No step along a descent direction lowered the loss.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deconvolution {
    pub features: FeatureMap,
    /// Loss at the initial point followed by the loss after every accepted step.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl Deconvolution {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().unwrap()
    }
}

/// Zero-mean Gaussian map with standard deviation `target_std`, seeded.
pub fn init_guess(target_std: f64, dims: (usize, usize, usize), seed: u64) -> FeatureMap {
    let (h, w, c) = dims;
    if !target_std.is_finite() || target_std <= 0.0 {
        return FeatureMap::zeros(h, w, c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, target_std).unwrap();
    FeatureMap::from_fn(h, w, c, |_, _, _| normal.sample(&mut rng))
}

/// Minimizes `||subnet(R) - target||^2` over `R` of shape `input_dims`,
/// starting from [`init_guess`] matched to the target's spread.
pub fn deconvolve(
    subnet: &Subnet<'_>,
    input_dims: (usize, usize, usize),
    target: &FeatureMap,
    settings: &DeconvSettings,
) -> Result<Deconvolution> {
    let (_, std) = target.mean_std();
    let init = init_guess(std, input_dims, settings.seed);
    deconvolve_from(subnet, init, target, settings)
}

/// As [`deconvolve`], from a caller-supplied starting point.
pub fn deconvolve_from(
    subnet: &Subnet<'_>,
    init: FeatureMap,
    target: &FeatureMap,
    settings: &DeconvSettings,
) -> Result<Deconvolution> {
    settings.validate()?;
    let out_dims = subnet.output_dims(init.dims())?;
    if out_dims != target.dims() {
        return Err(Error::dims(format!(
            "an input of {:?} produces {out_dims:?} but the target is {:?}",
            init.dims(),
            target.dims()
        )));
    }
    let (armijo, shrink) = settings.step_rule.armijo_shrink();
    let memory = match settings.step_rule {
        StepRule::Lbfgs { history, .. } => history,
        StepRule::GradientDescent { .. } => 0,
    };

    let mut x = init;
    let (mut loss, mut grad) = subnet.loss_and_grad(&x, target)?;
    check_finite(loss, &grad, 0)?;
    let mut trace = vec![loss];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut last_step = 1.0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        if loss == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let mut direction = lbfgs_direction(grad.data(), &pairs);
        let mut slope = dot(grad.data(), &direction);
        if slope.is_nan() || slope >= 0.0 {
            pairs.clear();
            direction = grad.data().iter().map(|g| -g).collect();
            slope = -dot(grad.data(), grad.data());
        }
        if slope == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let mut step = if memory > 0 {
            if pairs.is_empty() {
                (loss / -slope).min(1.0)
            } else {
                1.0
            }
        } else if iterations == 0 {
            1.0
        } else {
            2.0 * last_step
        };

        let mut accepted = None;
        for _ in 0..64 {
            let mut trial = x.clone();
            for (t, d) in trial.data_mut().iter_mut().zip(&direction) {
                *t += step * d;
            }
            let trial_loss = subnet.loss(&trial, target)?;
            if trial_loss.is_finite() && trial_loss <= loss + armijo * step * slope {
                accepted = Some((trial, trial_loss));
                break;
            }
            step *= shrink;
        }
        let Some((next, next_loss)) = accepted else {
            if pairs.is_empty() {
                stop = StopReason::LineSearchFailed;
                break;
            }
            pairs.clear();
            continue;
        };

        iterations += 1;
        let (_, next_grad) = subnet.loss_and_grad(&next, target)?;
        check_finite(next_loss, &next_grad, iterations)?;
        if memory > 0 {
            let s: Vec<f64> = direction.iter().map(|d| step * d).collect();
            let y: Vec<f64> = next_grad.data().iter().zip(grad.data()).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
                if pairs.len() == memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        }
        let decrease = (loss - next_loss) / loss;
        x = next;
        grad = next_grad;
        loss = next_loss;
        last_step = step;
        trace.push(loss);
        if decrease < settings.rel_tolerance {
            stop = StopReason::Converged;
            break;
        }
    }

    Ok(Deconvolution {
        features: x,
        loss_trace: trace,
        iterations,
        stop,
    })
}

fn check_finite(loss: f64, grad: &FeatureMap, iteration: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "deconvolution loss",
            iteration,
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite {
            what: "deconvolution gradient",
            iteration,
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion; plain negative gradient when no pairs are stored.
fn lbfgs_direction(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q
}
