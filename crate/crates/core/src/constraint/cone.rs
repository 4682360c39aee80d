use std::fmt;
use std::str::FromStr;

use super::ConstraintError;

/// Tolerance for treating a coordinate as sitting on a factor boundary.
pub const ACTIVE_TOL: f64 = 1e-9;

/// A nonempty closed subset of the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeFactor {
    Zero,
    NonPos,
    NonNeg,
    Interval(f64, f64),
    Line,
}

impl ConeFactor {
    pub fn interval(a: f64, b: f64) -> Result<Self, ConstraintError> {
        if a.is_nan() || b.is_nan() || a > b {
            Err(ConstraintError::EmptyInterval { a, b })
        } else {
            Ok(ConeFactor::Interval(a, b))
        }
    }

    pub fn project(self, y: f64) -> f64 {
        match self {
            ConeFactor::Zero => 0.0,
            ConeFactor::NonPos => y.min(0.0),
            ConeFactor::NonNeg => y.max(0.0),
            ConeFactor::Interval(a, b) => y.clamp(a, b),
            ConeFactor::Line => y,
        }
    }

    /// Normal cone at `y`, assumed to lie in the factor.
    fn normal(self, y: f64) -> NormalFactor {
        let at = |v: f64| (y - v).abs() <= ACTIVE_TOL;
        match self {
            ConeFactor::Zero => NormalFactor::Full,
            ConeFactor::NonPos if at(0.0) => NormalFactor::NonNeg,
            ConeFactor::NonNeg if at(0.0) => NormalFactor::NonPos,
            ConeFactor::Interval(a, b) if at(a) && at(b) => NormalFactor::Full,
            ConeFactor::Interval(a, _) if at(a) => NormalFactor::NonPos,
            ConeFactor::Interval(_, b) if at(b) => NormalFactor::NonNeg,
            _ => NormalFactor::Zero,
        }
    }
}

impl fmt::Display for ConeFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeFactor::Zero => write!(f, "zero"),
            ConeFactor::NonPos => write!(f, "nonpos"),
            ConeFactor::NonNeg => write!(f, "nonneg"),
            ConeFactor::Interval(a, b) => write!(f, "interval({a},{b})"),
            ConeFactor::Line => write!(f, "line"),
        }
    }
}

impl FromStr for ConeFactor {
    type Err = ConstraintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "zero" => return Ok(ConeFactor::Zero),
            "nonpos" => return Ok(ConeFactor::NonPos),
            "nonneg" => return Ok(ConeFactor::NonNeg),
            "line" => return Ok(ConeFactor::Line),
            _ => {}
        }
        let bad = || ConstraintError::UnknownFactor(s.to_string());
        let inner = s
            .strip_prefix("interval")
            .map(str::trim_start)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        ConeFactor::interval(a, b)
    }
}

/// Normal cone of a single factor at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFactor {
    /// `{0}`
    Zero,
    NonNeg,
    NonPos,
    Full,
}

impl NormalFactor {
    fn project(self, v: f64) -> f64 {
        match self {
            NormalFactor::Zero => 0.0,
            NormalFactor::NonNeg => v.max(0.0),
            NormalFactor::NonPos => v.min(0.0),
            NormalFactor::Full => v,
        }
    }

    fn admits(self, v: f64) -> bool {
        match self {
            NormalFactor::Zero => v == 0.0,
            NormalFactor::NonNeg => v >= 0.0,
            NormalFactor::NonPos => v <= 0.0,
            NormalFactor::Full => true,
        }
    }
}

/// Product `C = F_1 x ... x F_m` of one-dimensional closed factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSet {
    factors: Vec<ConeFactor>,
}

impl ConeSet {
    pub fn new(factors: Vec<ConeFactor>) -> Result<Self, ConstraintError> {
        if factors.is_empty() {
            return Err(ConstraintError::NoFactors);
        }
        for f in &factors {
            if let ConeFactor::Interval(a, b) = *f {
                ConeFactor::interval(a, b)?;
            }
        }
        Ok(ConeSet { factors })
    }

    pub fn factors(&self) -> &[ConeFactor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// Componentwise nearest point of `C`.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.dim());
        self.factors.iter().zip(y).map(|(f, &v)| f.project(v)).collect()
    }

    pub fn dist(&self, y: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(y)
            .map(|(f, &v)| {
                let d = v - f.project(v);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.dist(y) <= tol
    }

    /// Normal cone at `y`. `y` must lie within [`ACTIVE_TOL`] of `C`; it is
    /// snapped onto `C` before the active factors are read off.
    pub fn normal_cone(&self, y: &[f64]) -> Result<NormalCone, ConstraintError> {
        if y.len() != self.dim() {
            return Err(ConstraintError::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        let d = self.dist(y);
        if d.is_nan() || d > ACTIVE_TOL {
            return Err(ConstraintError::NotInCone { dist: d });
        }
        let factors = self
            .factors
            .iter()
            .zip(y)
            .map(|(f, &v)| f.normal(f.project(v)))
            .collect();
        Ok(NormalCone { factors })
    }
}

impl fmt::Display for ConeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Product of one-dimensional normal cones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalCone {
    factors: Vec<NormalFactor>,
}

/// Default number of directions per two-factor block.
pub const DEFAULT_RESOLUTION: usize = 64;

impl NormalCone {
    pub fn factors(&self) -> &[NormalFactor] {
        &self.factors
    }

    pub fn is_trivial(&self) -> bool {
        self.factors.iter().all(|f| *f == NormalFactor::Zero)
    }

    /// True if `v` is within relative distance `tol` of the cone.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gap = self
            .factors
            .iter()
            .zip(v)
            .map(|(f, &x)| {
                let d = x - f.project(x);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        gap <= tol * norm.max(f64::MIN_POSITIVE) || norm == 0.0
    }

    /// A deterministic finite set of unit vectors in the cone.
    ///
    /// With one nontrivial factor the set is exact. With two, `resolution`
    /// equally spaced angles are kept when they satisfy the sign
    /// constraints, plus the axis directions. With more, a lattice on the
    /// cube surface is projected to the sphere.
    pub fn directions(&self, resolution: usize) -> Vec<Vec<f64>> {
        let m = self.factors.len();
        let active: Vec<usize> = (0..m).filter(|&i| self.factors[i] != NormalFactor::Zero).collect();
        let lift = |coords: &[f64]| {
            let mut v = vec![0.0; m];
            for (&i, &c) in active.iter().zip(coords) {
                v[i] = c;
            }
            v
        };
        let admitted = |coords: &[f64]| active.iter().zip(coords).all(|(&i, &c)| self.factors[i].admits(c));
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut push = |coords: Vec<f64>| {
            let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm == 0.0 || !admitted(&coords) {
                return;
            }
            let unit: Vec<f64> = coords.iter().map(|c| c / norm).collect();
            let v = lift(&unit);
            if !out.iter().any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12)) {
                out.push(v);
            }
        };
        let k = active.len();
        for j in 0..k {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; k];
                e[j] = s;
                push(e);
            }
        }
        match k {
            0 | 1 => {}
            2 => {
                let steps = resolution.max(4);
                for j in 0..steps {
                    let theta = std::f64::consts::TAU * j as f64 / steps as f64;
                    let (s, c) = theta.sin_cos();
                    // snap round-off so axis angles keep exact zeros
                    let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
                    push(vec![snap(c), snap(s)]);
                }
            }
            _ => {
                let per_axis = ((resolution.max(4) as f64).powf(1.0 / (k - 1) as f64).ceil() as usize).max(3);
                let grid: Vec<f64> = (0..per_axis)
                    .map(|i| -1.0 + 2.0 * i as f64 / (per_axis - 1) as f64)
                    .collect();
                let mut idx = vec![0usize; k];
                loop {
                    let p: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
                    if p.iter().any(|c| c.abs() == 1.0) {
                        push(p);
                    }
                    let mut d = 0;
                    while d < k {
                        idx[d] += 1;
                        if idx[d] < per_axis {
                            break;
                        }
                        idx[d] = 0;
                        d += 1;
                    }
                    if d == k {
                        break;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cone(s: &[&str]) -> ConeSet {
        ConeSet::new(s.iter().map(|f| f.parse().unwrap()).collect()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let c = cone(&["zero", "nonpos"]);
        assert_eq!(c.project(&[2.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(c.project(&[2.0, -5.0]), vec![0.0, -5.0]);
        assert_eq!(cone(&["interval(0,1)"]).project(&[2.0]), vec![1.0]);
    }

    #[test]
    fn distance_examples() {
        assert_abs_diff_eq!(cone(&["zero", "nonpos"]).dist(&[2.0, 3.0]), 13f64.sqrt(), epsilon = 1e-15);
        assert_eq!(cone(&["zero"]).dist(&[0.0]), 0.0);
        assert_eq!(cone(&["nonpos"]).dist(&[1.5]), 1.5);
    }

    #[test]
    fn normal_direction_examples() {
        let dirs = |c: &ConeSet, y: &[f64]| c.normal_cone(y).unwrap().directions(DEFAULT_RESOLUTION);
        assert_eq!(dirs(&cone(&["zero"]), &[0.0]), vec![vec![1.0], vec![-1.0]]);
        assert_eq!(dirs(&cone(&["nonpos"]), &[0.0]), vec![vec![1.0]]);
        assert!(dirs(&cone(&["nonpos"]), &[-2.0]).is_empty());
        assert_eq!(dirs(&cone(&["interval(0,1)"]), &[0.0]), vec![vec![-1.0]]);
        assert!(dirs(&cone(&["line"]), &[4.0]).is_empty());
    }

    #[test]
    fn corner_directions_stay_in_quadrant() {
        let c = cone(&["nonpos", "nonpos", "zero"]);
        let nc = c.normal_cone(&[0.0, 0.0, 0.0]).unwrap();
        let dirs = nc.directions(DEFAULT_RESOLUTION);
        assert!(dirs.len() > 10);
        for d in &dirs {
            assert_abs_diff_eq!(d.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(d[0] >= 0.0 && d[1] >= 0.0);
            assert!(nc.contains(d, 1e-12));
        }
        let c = cone(&["nonpos", "nonpos"]);
        let dirs = c.normal_cone(&[0.0, 0.0]).unwrap().directions(64);
        assert_eq!(dirs.len(), 17);
    }

    #[test]
    fn normal_cone_rejects_outside_points() {
        assert!(matches!(
            cone(&["nonpos"]).normal_cone(&[1e-3]),
            Err(ConstraintError::NotInCone { .. })
        ));
        assert!(cone(&["nonpos"]).normal_cone(&[1e-10]).is_ok());
    }

    #[test]
    fn factor_syntax() {
        assert_eq!("interval( -1 , 2.5 )".parse::<ConeFactor>().unwrap(), ConeFactor::Interval(-1.0, 2.5));
        assert!(matches!(
            "interval(2,1)".parse::<ConeFactor>(),
            Err(ConstraintError::EmptyInterval { .. })
        ));
        assert!("cone".parse::<ConeFactor>().is_err());
        for f in ["zero", "nonpos", "nonneg", "line", "interval(0,1)"] {
            assert_eq!(f.parse::<ConeFactor>().unwrap().to_string(), f);
        }
        assert!(ConeSet::new(vec![]).is_err());
    }
}
