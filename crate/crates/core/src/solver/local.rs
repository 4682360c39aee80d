//! Compass-style pattern search with random extra directions.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Restorer;

/// Uniformly distributed unit vector.
pub fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Settings for one local refinement.
pub struct LocalSearch<'a> {
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    /// Maximum number of polls.
    pub iters: usize,
    pub initial_step: f64,
    pub restore: Option<&'a Restorer<'a>>,
}

impl LocalSearch<'_> {
    /// Polls `+-e_i` and `n` random directions (and their negatives). The
    /// first strictly improving trial is taken and the step doubles;
    /// otherwise the step halves. Trial points are clamped to the box and
    /// passed through the restorer when one is set. `+inf` values act as a
    /// barrier.
    pub fn run(
        &self,
        eval: &dyn Fn(&[f64]) -> f64,
        mut x: Vec<f64>,
        mut fx: f64,
        rng: &mut impl Rng,
    ) -> (Vec<f64>, f64) {
        let n = x.len();
        if n == 0 {
            return (x, fx);
        }
        let mut step = self.initial_step;
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
        for _ in 0..self.iters {
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if step < 1e-13 * scale {
                break;
            }
            dirs.clear();
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; n];
                    e[i] = s;
                    dirs.push(e);
                }
            }
            for _ in 0..n.max(2) {
                let d = random_unit(rng, n);
                dirs.push(d.iter().map(|v| -v).collect());
                dirs.push(d);
            }
            let mut improved = false;
            for d in &dirs {
                let mut trial: Vec<f64> = x
                    .iter()
                    .zip(d)
                    .zip(self.lo.iter().zip(self.hi))
                    .map(|((xi, di), (lo, hi))| (xi + step * di).clamp(*lo, *hi))
                    .collect();
                if trial == x {
                    continue;
                }
                if let Some(restore) = self.restore {
                    match restore(&trial) {
                        Some(t) => trial = t,
                        None => continue,
                    }
                }
                let ft = eval(&trial);
                if ft < fx {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
            if improved {
                step *= 2.0;
            } else {
                step *= 0.5;
            }
        }
        (x, fx)
    }
}

/// Unrestored pattern search inside `[lo, hi]`.
pub fn pattern_search(
    eval: &dyn Fn(&[f64]) -> f64,
    x: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    initial_step: f64,
    iters: usize,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let fx = eval(&x);
    LocalSearch {
        lo,
        hi,
        iters,
        initial_step,
        restore: None,
    }
    .run(eval, x, fx, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::stream_rng;

    #[test]
    fn finds_kink_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).abs() + 2.0 * (x[1] + 0.5).abs();
        let (x, v) = pattern_search(&f, vec![5.0, 5.0], &[-10.0; 2], &[10.0; 2], 1.0, 500, &mut stream_rng(0, 1));
        assert!(v < 1e-9, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn respects_box_and_barrier() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { x[0] - x[1] };
        let (x, v) = pattern_search(&f, vec![1.0, 0.0], &[-1.0; 2], &[1.0; 2], 0.5, 300, &mut stream_rng(0, 2));
        assert!(x[0] >= 0.0 && x[1] <= 1.0);
        assert!((v + 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn follows_a_diagonal_valley() {
        let f = |x: &[f64]| 3.0 * (x[0] - x[1]).abs() + (x[0] + x[1] - 4.0).abs();
        let (_, v) = pattern_search(&f, vec![-3.0, -3.0], &[-10.0; 2], &[10.0; 2], 1.0, 2000, &mut stream_rng(4, 1));
        assert!(v < 1e-6, "{v}");
    }
}
