//! Uniform-grid probability densities on an interval.
//!
//! Densities are nodal samples. Every integral in the crate goes through the
//! trapezoid rule defined here so that discrete identities (integration by
//! parts, mass conservation of the flow) hold to the same order.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of nodes.
pub const MIN_NODES: usize = 16;

/// Default positivity floor for densities entering entropy-production integrals.
pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub h: f64,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::Domain(format!("need finite a < b, got [{a}, {b}]")));
        }
        if n < MIN_NODES {
            return Err(Error::Dimension(format!("need n >= {MIN_NODES}, got {n}")));
        }
        Ok(Self { a, b, n, h: (b - a) / (n - 1) as f64 })
    }

    /// Node `i`; the last node is pinned to `b`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Same interval with the spacing halved.
    pub fn refined(&self) -> Self {
        Self::new(self.a, self.b, 2 * self.n - 1).expect("refinement of a valid grid")
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Dimension(format!("array has {len} entries, grid has {}", self.n)));
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for Grid1D {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            a: f64,
            b: f64,
            n: usize,
        }
        let r = Raw::deserialize(d)?;
        Grid1D::new(r.a, r.b, r.n).map_err(serde::de::Error::custom)
    }
}

/// Trapezoid sum without validation; callers guarantee length and finiteness.
#[inline]
pub(crate) fn trap(f: &[f64], grid: &Grid1D) -> f64 {
    let n = f.len();
    let s: f64 = f[1..n - 1].iter().sum::<f64>() + 0.5 * (f[0] + f[n - 1]);
    s * (grid.b - grid.a) / (n - 1) as f64
}

/// Trapezoid weights, summing to b - a.
pub fn trapezoid_weights(grid: &Grid1D) -> Vec<f64> {
    let mut w = vec![grid.h; grid.n];
    w[0] *= 0.5;
    w[grid.n - 1] *= 0.5;
    w
}

pub fn integrate(f: &[f64], grid: &Grid1D) -> Result<f64> {
    grid.check_len(f.len())?;
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("integrand entry {i} is {}", f[i])));
    }
    Ok(trap(f, grid))
}

/// Second-order differences: central inside, one-sided at both ends.
pub fn gradient(f: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    grid.check_len(f.len())?;
    Ok(grad(f, grid.h))
}

pub(crate) fn grad(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n];
    let inv = 0.5 / h;
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) * inv;
    }
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv;
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv;
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub floor: f64,
}

/// `max(f, floor)` rescaled to unit mass. The stored floor is the bound that
/// actually holds after rescaling.
pub fn normalize(f: &[f64], grid: &Grid1D, floor: f64) -> Result<GridDensity> {
    grid.check_len(f.len())?;
    if !(floor >= 0.0) {
        return Err(Error::Domain(format!("floor must be >= 0, got {floor}")));
    }
    let mut v = Vec::with_capacity(f.len());
    for (i, &x) in f.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("entry {i} is {x}")));
        }
        let y = x.max(floor);
        if y < 0.0 {
            return Err(Error::Domain(format!("entry {i} is negative ({x})")));
        }
        v.push(y);
    }
    let mass = trap(&v, grid);
    if !(mass > 0.0) {
        return Err(Error::Degenerate("integral is zero".into()));
    }
    v.iter_mut().for_each(|x| *x /= mass);
    Ok(GridDensity { grid: *grid, values: v, floor: floor / mass })
}

impl GridDensity {
    pub fn from_fn(grid: &Grid1D, floor: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        normalize(&grid.sample(f), grid, floor)
    }

    pub fn mass(&self) -> f64 {
        trap(&self.values, &self.grid)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn integrate_with(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let g: Vec<f64> = (0..self.grid.n).map(|i| f(self.grid.x(i), self.values[i])).collect();
        trap(&g, &self.grid)
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Dimension("densities live on different grids".into()));
        }
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(trap(&d, &self.grid))
    }

    /// Linear interpolation, zero outside `[a, b]`.
    pub fn eval(&self, x: f64) -> f64 {
        interp_uniform(&self.values, &self.grid, x)
    }

    /// Resample onto another grid and renormalize.
    pub fn resample(&self, grid: &Grid1D) -> Result<GridDensity> {
        normalize(&grid.sample(|x| self.eval(x)), grid, 0.0)
    }

    /// Translate so the barycentre equals `target` within `1e-12`, by
    /// interpolation. Edge values are extended past the grid ends.
    pub fn recentred(&self, target: f64) -> Result<GridDensity> {
        let mut shift = 0.0;
        for _ in 0..50 {
            let (a, b) = (self.grid.a, self.grid.b);
            let r = normalize(&self.grid.sample(|x| self.eval((x + shift).clamp(a, b))), &self.grid, self.floor)?;
            let d = barycenter(&r) - target;
            if d.abs() < 1e-12 {
                return Ok(r);
            }
            shift += d;
        }
        Err(Error::Convergence(format!("could not move the barycentre to {target}")))
    }

    pub fn reflected(&self) -> Result<GridDensity> {
        let grid = Grid1D::new(-self.grid.b, -self.grid.a, self.grid.n)?;
        let mut values = self.values.clone();
        values.reverse();
        Ok(GridDensity { grid, values, floor: self.floor })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,rho\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{}", self.grid.x(i), v);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<GridDensity> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "x,rho" => {}
            other => return Err(Error::Parse(format!("expected header x,rho, got {other:?}"))),
        }
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (x, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two fields", k + 2)))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", k + 2)))
            };
            xs.push(parse(x)?);
            vs.push(parse(v)?);
        }
        if xs.len() < 2 {
            return Err(Error::Dimension("need at least two rows".into()));
        }
        let grid = Grid1D::new(xs[0], xs[xs.len() - 1], xs.len())?;
        Ok(GridDensity { grid, values: vs, floor: 0.0 })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DensityJson {
            a: self.grid.a,
            b: self.grid.b,
            n: self.grid.n,
            values: self.values.clone(),
        })
        .expect("density serializes")
    }

    pub fn from_json(text: &str) -> Result<GridDensity> {
        let d: DensityJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let grid = Grid1D::new(d.a, d.b, d.n)?;
        grid.check_len(d.values.len())?;
        let floor = d.values.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
        Ok(GridDensity { grid, values: d.values, floor })
    }
}

#[derive(Serialize, Deserialize)]
struct DensityJson {
    a: f64,
    b: f64,
    n: usize,
    values: Vec<f64>,
}

pub(crate) fn interp_uniform(values: &[f64], grid: &Grid1D, x: f64) -> f64 {
    if !(x >= grid.a && x <= grid.b) {
        return 0.0;
    }
    let s = (x - grid.a) / grid.h;
    let i = (s.floor() as usize).min(grid.n - 2);
    let t = s - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

pub fn barycenter(rho: &GridDensity) -> f64 {
    rho.integrate_with(|x, r| x * r)
}

/// Trapezoid CDF of a density, pinned to `[0, 1]` at the ends.
#[derive(Debug, Clone)]
pub struct Quantile {
    pub density: GridDensity,
    pub cdf: Vec<f64>,
}

impl Quantile {
    pub fn new(rho: &GridDensity) -> Self {
        let v = &rho.values;
        let mut cdf = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..v.len() {
            acc += 0.5 * (v[i - 1] + v[i]) * rho.grid.h;
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        Self { density: rho.clone(), cdf }
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        let g = &self.density.grid;
        if x <= g.a {
            return 0.0;
        }
        if x >= g.b {
            return 1.0;
        }
        interp_uniform(&self.cdf, g, x)
    }

    /// Piecewise-linear inverse of the CDF.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("u = {u} outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let g = &self.density.grid;
        let c = &self.cdf;
        if u <= 0.0 {
            let i = c.partition_point(|&v| v <= 0.0);
            return g.x(i.saturating_sub(1));
        }
        let i = c.partition_point(|&v| v < u);
        if i == 0 {
            return g.a;
        }
        if i >= c.len() {
            return g.b;
        }
        let (c0, c1) = (c[i - 1], c[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        g.x(i - 1) + t * g.h
    }
}

pub fn quantile(rho: &GridDensity, u: f64) -> Result<f64> {
    Quantile::new(rho).quantile(u)
}

/// Number of trigonometric modes in the random generator.
const RANDOM_MODES: usize = 4;

/// `exp(g)` with `g` a seeded low-order trigonometric polynomial, mixed with the
/// uniform density just enough to respect `floor`.
pub fn random_smooth_density(seed: u64, grid: &Grid1D, floor: f64) -> Result<GridDensity> {
    if !(floor > 0.0) {
        return Err(Error::Domain(format!("floor must be > 0, got {floor}")));
    }
    let uniform = 1.0 / (grid.b - grid.a);
    if floor >= uniform {
        return Err(Error::Domain(format!("floor {floor} exceeds the uniform density {uniform}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64)> = (1..=RANDOM_MODES)
        .map(|k| {
            let amp = 0.8 / k as f64;
            (amp * rng.gen_range(-1.0..1.0), amp * rng.gen_range(-1.0..1.0))
        })
        .collect();
    let g = grid.sample(|x| {
        let s = std::f64::consts::PI * (2.0 * (x - grid.a) / (grid.b - grid.a) - 1.0);
        coef.iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let w = (k + 1) as f64 * s;
                a * w.cos() + b * w.sin()
            })
            .sum::<f64>()
            .exp()
    });
    let mut rho = normalize(&g, grid, 0.0)?;
    let m = rho.min_value();
    if m < floor {
        let w = (floor - m) / (uniform - m);
        rho.values.iter_mut().for_each(|v| *v = (1.0 - w) * *v + w * uniform);
    }
    rho.floor = rho.min_value();
    Ok(rho)
}

/// `random_smooth_density` times a centred Gaussian envelope of standard
/// deviation `(b - a) / 8`, so that the density is negligible near both ends.
pub fn random_confined_density(seed: u64, grid: &Grid1D) -> Result<GridDensity> {
    let base = random_smooth_density(seed, grid, DEFAULT_FLOOR.min(0.5 / (grid.b - grid.a)))?;
    let mid = 0.5 * (grid.a + grid.b);
    let s = (grid.b - grid.a) / 8.0;
    let v: Vec<f64> = (0..grid.n)
        .map(|i| {
            let z = (grid.x(i) - mid) / s;
            base.values[i] * (-0.5 * z * z).exp()
        })
        .collect();
    normalize(&v, grid, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(a: f64, b: f64, n: usize) -> Grid1D {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn constant_and_linear_integrands() {
        let grid = g(0.0, 1.0, 101);
        assert_eq!(integrate(&vec![1.0; 101], &grid).unwrap(), 1.0);
        let lin = grid.sample(|x| x);
        assert!((integrate(&lin, &grid).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gaussian_integral_matches_erf() {
        let grid = g(-8.0, 8.0, 4097);
        let f = grid.sample(|x| (-x * x).exp());
        let oracle = std::f64::consts::PI.sqrt() * statrs::function::erf::erf(8.0);
        assert!((integrate(&f, &grid).unwrap() - oracle).abs() < 1e-6);
        assert!((oracle - 1.7724539).abs() < 1e-7);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let grid = g(0.0, 1.0, 20);
        assert!(matches!(integrate(&[1.0; 5], &grid), Err(Error::Dimension(_))));
        let mut f = vec![1.0; 20];
        f[3] = f64::NAN;
        assert!(matches!(integrate(&f, &grid), Err(Error::Numeric(_))));
    }

    #[test]
    fn gradient_exactness_and_order() {
        let grid = g(0.0, 1.0, 33);
        assert!(gradient(&vec![5.0; 33], &grid).unwrap().iter().all(|&v| v == 0.0));
        let d = gradient(&grid.sample(|x| x * x), &grid).unwrap();
        for i in 0..33 {
            assert!((d[i] - 2.0 * grid.x(i)).abs() < 1e-12);
        }
        let err = |n| {
            let grid = g(0.0, std::f64::consts::PI, n);
            let d = gradient(&grid.sample(f64::sin), &grid).unwrap();
            (0..n).map(|i| (d[i] - grid.x(i).cos()).abs()).fold(0.0, f64::max)
        };
        assert!(err(1025) < 1e-5);
        assert!(err(513) / err(1025) >= 3.5);
    }

    #[test]
    fn normalize_contract() {
        let grid = g(0.0, 2.0, 64);
        let r = normalize(&grid.sample(|x| x), &grid, 1e-3).unwrap();
        assert!((r.mass() - 1.0).abs() < 1e-12);
        assert!(r.min_value() >= r.floor);
        assert!(matches!(normalize(&vec![0.0; 64], &grid, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn barycenter_examples() {
        let grid = g(0.0, 1.0, 101);
        let u = GridDensity::from_fn(&grid, 0.0, |_| 1.0).unwrap();
        assert!((barycenter(&u) - 0.5).abs() < 1e-10);
        let grid = g(-4.0, 5.0, 4097);
        let s2 = 0.04;
        let r = GridDensity::from_fn(&grid, 0.0, |x| (-(x - 0.7) * (x - 0.7) / (2.0 * s2)).exp()).unwrap();
        assert!((barycenter(&r) - 0.7).abs() < 1e-6);
        let r = random_smooth_density(3, &g(-2.0, 3.0, 200), 1e-4).unwrap();
        assert!((barycenter(&r) + barycenter(&r.reflected().unwrap())).abs() < 1e-10);
    }

    #[test]
    fn quantile_examples() {
        let grid = g(0.0, 1.0, 101);
        let u = GridDensity::from_fn(&grid, 0.0, |_| 1.0).unwrap();
        assert!((quantile(&u, 0.25).unwrap() - 0.25).abs() < 1e-10);
        assert!(matches!(quantile(&u, 1.5), Err(Error::Domain(_))));
        let grid = g(-8.0, 8.0, 4097);
        let n01 = GridDensity::from_fn(&grid, 0.0, |x| (-0.5 * x * x).exp()).unwrap();
        assert!((quantile(&n01, 0.8413).unwrap() - 1.0).abs() < 1e-3);
        // compact support in the middle of the grid
        let grid = g(-2.0, 2.0, 401);
        let c = GridDensity::from_fn(&grid, 0.0, |x| (1.0 - x * x).max(0.0)).unwrap();
        assert!((quantile(&c, 0.0).unwrap() + 1.0).abs() <= grid.h + 1e-12);
        assert!((quantile(&c, 1.0).unwrap() - 1.0).abs() <= grid.h + 1e-12);
    }

    #[test]
    fn random_density_contract() {
        let grid = g(-5.0, 5.0, 512);
        let a = random_smooth_density(1, &grid, 1e-4).unwrap();
        let b = random_smooth_density(1, &grid, 1e-4).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.min_value() >= 1e-4);
        assert!((a.mass() - 1.0).abs() < 1e-10);
        let c = random_smooth_density(2, &grid, 1e-4).unwrap();
        assert!(a.l1_distance(&c).unwrap() > 1e-3);
    }

    #[test]
    fn serialization_round_trips() {
        let grid = g(-3.0, 4.0, 77);
        let r = random_smooth_density(9, &grid, 1e-4).unwrap();
        let back = GridDensity::from_json(&r.to_json()).unwrap();
        assert_eq!(back.values, r.values);
        assert_eq!(back.grid, r.grid);
        let csv = GridDensity::from_csv(&r.to_csv()).unwrap();
        assert_eq!(csv.values, r.values);
        assert!(r.to_csv().starts_with("x,rho\n"));
    }
}
