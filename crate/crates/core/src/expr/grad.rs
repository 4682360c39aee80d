//! Finite-difference gradients and sampled gradient clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::ScalarFn;

pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradError {
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("function is +inf on both sides of coordinate {0}")]
    InfiniteStencil(usize),
    #[error("function is not finite at the center point")]
    InfiniteCenter,
    #[error("only {got} of {wanted} gradient samples were finite")]
    TooFewSamples { wanted: usize, got: usize },
    #[error("sampling radius must be positive, got {0}")]
    InvalidRadius(f64),
}

/// Finite-difference gradients drawn around `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCloud {
    pub center: Vec<f64>,
    pub radius: f64,
    pub seed: u64,
    /// Perturbed points where each gradient was taken.
    pub points: Vec<Vec<f64>>,
    pub samples: Vec<Vec<f64>>,
}

/// Central-difference gradient. Falls back to a one-sided difference along
/// a coordinate where exactly one stencil arm is `+inf`.
pub fn fd_gradient(f: &impl ScalarFn, x: &[f64], h: f64) -> Result<Vec<f64>, GradError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(GradError::InvalidStep(h));
    }
    let mut y = x.to_vec();
    let mut center = None;
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let plus = f.value_or_inf(&y);
        y[i] = x[i] - h;
        let minus = f.value_or_inf(&y);
        y[i] = x[i];
        let d = match (plus.is_finite(), minus.is_finite()) {
            (true, true) => (plus - minus) / (2.0 * h),
            (false, false) => return Err(GradError::InfiniteStencil(i)),
            (up, _) => {
                let c = *center.get_or_insert_with(|| f.value_or_inf(x));
                if !c.is_finite() {
                    return Err(GradError::InfiniteCenter);
                }
                if up {
                    (plus - c) / h
                } else {
                    (c - minus) / h
                }
            }
        };
        grad.push(d);
    }
    Ok(grad)
}

/// Row `i` is the gradient of `components[i]`.
pub fn fd_jacobian<F: ScalarFn>(components: &[F], x: &[f64], h: f64) -> Result<Vec<Vec<f64>>, GradError> {
    components.iter().map(|g| fd_gradient(g, x, h)).collect()
}

/// Central gradient that refuses any nonfinite stencil arm.
fn strict_gradient(f: &impl ScalarFn, x: &[f64], h: f64) -> Option<Vec<f64>> {
    let mut y = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let plus = f.value_or_inf(&y);
        y[i] = x[i] - h;
        let minus = f.value_or_inf(&y);
        y[i] = x[i];
        if !(plus.is_finite() && minus.is_finite()) {
            return None;
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Some(grad)
}

/// Uniform point in the closed ball of radius `r` around `center`.
pub fn uniform_in_ball(rng: &mut impl Rng, center: &[f64], r: f64) -> Vec<f64> {
    let n = center.len();
    if n == 0 {
        return Vec::new();
    }
    let mut dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let scale = r * rng.random::<f64>().powf(1.0 / n as f64) / norm;
    for (d, c) in dir.iter_mut().zip(center) {
        *d = c + *d * scale;
    }
    dir
}

/// Draws `count` finite-difference gradients at uniform points in the ball
/// of `radius` around `x`. Points whose stencil touches `+inf` are skipped;
/// at most `10 * count` points are tried.
pub fn sample_subgradients(
    f: &impl ScalarFn,
    x: &[f64],
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<GradientCloud, GradError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(GradError::InvalidRadius(radius));
    }
    let h = DEFAULT_FD_STEP.min(radius / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count.saturating_mul(10) {
        if samples.len() == count {
            break;
        }
        let p = uniform_in_ball(&mut rng, x, radius);
        if let Some(g) = strict_gradient(f, &p, h) {
            points.push(p);
            samples.push(g);
        }
    }
    if samples.len() < count {
        return Err(GradError::TooFewSamples {
            wanted: count,
            got: samples.len(),
        });
    }
    Ok(GradientCloud {
        center: x.to_vec(),
        radius,
        seed,
        points,
        samples,
    })
}
