//! Quadratic optimal transport on the line.
//!
//! Quantile functions of grid densities are piecewise linear in `u`, so
//! `int_0^1 (Q0 - Q1)^2 du` is integrated exactly on the merged set of CDF
//! breakpoints rather than sampled.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{convolve, internal_energy, interaction_energy, potential_energy};
use crate::measures::{barycenter, grad, normalize, trap, GridDensity, Quantile};
use crate::models::{EntropyModel, PotentialPair};

#[derive(Debug, Clone)]
pub struct TransportPlan1D {
    pub source: GridDensity,
    pub target: GridDensity,
    /// `T(x_i)` at the source nodes.
    pub map_values: Vec<f64>,
    pub w2: f64,
    /// Set when the target CDF is flat inside its support and the inverse was regularized.
    pub degenerate: bool,
}

/// Linear piece of a quantile function on `(cdf[i-1], cdf[i]]`.
fn piece(q: &Quantile, i: usize, u: f64) -> f64 {
    let (c0, c1) = (q.cdf[i - 1], q.cdf[i]);
    let g = &q.density.grid;
    if c1 > c0 {
        g.x(i - 1) + (u - c0) / (c1 - c0) * g.h
    } else {
        g.x(i - 1)
    }
}

fn segment(q: &Quantile, u: f64) -> usize {
    q.cdf.partition_point(|&c| c < u).clamp(1, q.cdf.len() - 1)
}

/// `int_0^1 (Q0(u) - Q1(u))^2 du`, exact for piecewise-linear quantiles.
pub fn w2_squared_quantiles(q0: &Quantile, q1: &Quantile) -> f64 {
    let mut breaks: Vec<f64> = q0.cdf.iter().chain(&q1.cdf).copied().collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut acc = 0.0;
    for k in 0..breaks.len() - 1 {
        let (ua, ub) = (breaks[k], breaks[k + 1]);
        let len = ub - ua;
        if len <= 0.0 {
            continue;
        }
        let um = 0.5 * (ua + ub);
        let (i0, i1) = (segment(q0, um), segment(q1, um));
        let da = piece(q0, i0, ua) - piece(q1, i1, ua);
        let db = piece(q0, i0, ub) - piece(q1, i1, ub);
        acc += len * (da * da + da * db + db * db) / 3.0;
    }
    acc
}

pub fn w2_distance(rho0: &GridDensity, rho1: &GridDensity) -> f64 {
    w2_squared_quantiles(&Quantile::new(rho0), &Quantile::new(rho1)).max(0.0).sqrt()
}

/// True when the density vanishes on a node strictly inside its support.
fn has_interior_gap(rho: &GridDensity) -> bool {
    let v = &rho.values;
    let first = v.iter().position(|&r| r > 0.0);
    let last = v.iter().rposition(|&r| r > 0.0);
    match (first, last) {
        (Some(a), Some(b)) => v[a..=b].iter().any(|&r| r <= 0.0),
        _ => false,
    }
}

/// Monotone rearrangement `T = Q1 o CDF0` at the source nodes.
pub fn optimal_map(rho0: &GridDensity, rho1: &GridDensity) -> Result<TransportPlan1D> {
    let q0 = Quantile::new(rho0);
    let q1 = Quantile::new(rho1);
    let map_values: Vec<f64> = q0.cdf.iter().map(|&u| q1.quantile_unchecked(u)).collect();
    let w2 = w2_squared_quantiles(&q0, &q1).max(0.0).sqrt();
    Ok(TransportPlan1D {
        source: rho0.clone(),
        target: rho1.clone(),
        map_values,
        w2,
        degenerate: has_interior_gap(rho1),
    })
}

impl TransportPlan1D {
    /// `int rho0 |x - T(x)|^2` by the grid quadrature.
    pub fn transport_cost(&self) -> f64 {
        let g = &self.source.grid;
        let f: Vec<f64> = (0..g.n)
            .map(|i| {
                let d = self.map_values[i] - g.x(i);
                self.source.values[i] * d * d
            })
            .collect();
        trap(&f, g)
    }

    /// Mass of `rho0` on `[x_i, x_j]` minus the mass of `rho1` on `T([x_i, x_j])`.
    pub fn pushforward_defect(&self, i: usize, j: usize) -> f64 {
        let q0 = Quantile::new(&self.source);
        let q1 = Quantile::new(&self.target);
        let m0 = q0.cdf[j] - q0.cdf[i];
        let m1 = q1.cdf_at(self.map_values[j]) - q1.cdf_at(self.map_values[i]);
        m0 - m1
    }
}

/// Push-forward of `rho0` under `(1 - t) I + t T`, resampled to the source grid.
///
/// The interpolant has quantile `Q_t = (1 - t) Q0 + t Q1`, so at a node `z` with
/// `Q_t(u) = z` the change of variables gives
/// `1 / rho_t(z) = (1 - t) / rho0(Q0(u)) + t / rho1(Q1(u))`.
/// Both endpoints are reproduced exactly at the nodes.
pub fn displacement_interpolate(plan: &TransportPlan1D, t: f64) -> Result<GridDensity> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    let q0 = Quantile::new(&plan.source);
    let q1 = Quantile::new(&plan.target);
    let mut us: Vec<f64> = q0.cdf.iter().chain(&q1.cdf).copied().collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    let qt = |u: f64| (1.0 - t) * q0.quantile_unchecked(u) + t * q1.quantile_unchecked(u);
    let ys: Vec<f64> = us.iter().map(|&u| qt(u)).collect();
    if let Some(k) = ys.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Monotonicity(format!("T_t decreases near u = {}", us[k])));
    }
    let g = plan.source.grid;
    let mut out = vec![0.0; g.n];
    let last = ys.len() - 1;
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let z = g.x(i);
        if z < ys[0] || z > ys[last] {
            continue;
        }
        while k + 1 < last && ys[k + 1] < z {
            k += 1;
        }
        let span = ys[k + 1] - ys[k];
        let u = if span > 0.0 { us[k] + (z - ys[k]) / span * (us[k + 1] - us[k]) } else { us[k + 1] };
        let r0 = plan.source.eval(q0.quantile_unchecked(u));
        let r1 = plan.target.eval(q1.quantile_unchecked(u));
        *o = if t == 0.0 {
            r0
        } else if t == 1.0 {
            r1
        } else if r0 > 0.0 && r1 > 0.0 {
            1.0 / ((1.0 - t) / r0 + t / r1)
        } else {
            0.0
        };
    }
    normalize(&out, &g, 0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub ts: Vec<f64>,
    pub energies: Vec<f64>,
    /// Chord value minus energy at each interior `t`.
    pub slacks: Vec<f64>,
    pub min_scaled_slack: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Three-point convexity of `t -> H^F(rho_t)` along the displacement interpolant.
pub fn check_displacement_convexity(
    rho0: &GridDensity,
    rho1: &GridDensity,
    m: &EntropyModel,
    ts: &[f64],
    tol: f64,
) -> Result<ConvexityReport> {
    if ts.len() < 3 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("need at least three increasing times".into()));
    }
    let plan = optimal_map(rho0, rho1)?;
    let energies = ts
        .iter()
        .map(|&t| internal_energy(&displacement_interpolate(&plan, t)?, m))
        .collect::<Result<Vec<_>>>()?;
    let mut slacks = Vec::with_capacity(ts.len() - 2);
    let mut min_scaled = f64::INFINITY;
    for k in 1..ts.len() - 1 {
        let (ta, tb, tc) = (ts[k - 1], ts[k], ts[k + 1]);
        let chord = ((tc - tb) * energies[k - 1] + (tb - ta) * energies[k + 1]) / (tc - ta);
        let s = chord - energies[k];
        let scale = chord.abs().max(energies[k].abs()).max(1.0);
        slacks.push(s);
        min_scaled = min_scaled.min(s / scale);
    }
    Ok(ConvexityReport { ts: ts.to_vec(), energies, slacks, min_scaled_slack: min_scaled, tol, pass: min_scaled >= -tol })
}

/// Slacks of the three first-order energy inequalities along the optimal map.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransportEnergySlacks {
    pub internal: f64,
    pub potential: f64,
    pub interaction: f64,
    /// First-order lower bounds on the energies of `rho1`, built at `rho0`.
    pub internal_bound: f64,
    pub potential_bound: f64,
    pub interaction_bound: f64,
    pub internal_scale: f64,
    pub potential_scale: f64,
    pub interaction_scale: f64,
}

impl TransportEnergySlacks {
    pub fn min_scaled(&self) -> f64 {
        (self.internal / self.internal_scale)
            .min(self.potential / self.potential_scale)
            .min(self.interaction / self.interaction_scale)
    }
}

fn scale_of(xs: &[f64]) -> f64 {
    xs.iter().fold(1.0f64, |s, x| s.max(x.abs()))
}

pub fn transport_energy_slacks(
    rho0: &GridDensity,
    rho1: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
) -> Result<TransportEnergySlacks> {
    crate::functionals::require_positive(rho0, m)?;
    pot.validate(&rho0.grid)?;
    let plan = optimal_map(rho0, rho1)?;
    let g = rho0.grid;
    let disp: Vec<f64> = (0..g.n).map(|i| plan.map_values[i] - g.x(i)).collect();
    let pair = |field: &[f64]| {
        let f: Vec<f64> = (0..g.n).map(|i| rho0.values[i] * disp[i] * field[i]).collect();
        trap(&f, &g)
    };
    let w2sq = plan.w2 * plan.w2;

    let dfp: Vec<f64> = rho0.values.iter().map(|&r| if r > 0.0 { m.df(r) } else { 0.0 }).collect();
    let (h0, h1) = (internal_energy(rho0, m)?, internal_energy(rho1, m)?);
    let lin_f = pair(&grad(&dfp, g.h));
    let internal = h1 - h0 - lin_f;

    let v = g.sample(|x| pot.v.eval(x));
    let (p0, p1) = (potential_energy(rho0, &pot.v), potential_energy(rho1, &pot.v));
    let lin_v = pair(&grad(&v, g.h));
    let quad_v = 0.5 * pot.lambda * w2sq;
    let potential = p1 - p0 - lin_v - quad_v;

    let conv = convolve(rho0, &pot.w);
    let (i0, i1) = (interaction_energy(rho0, &pot.w), interaction_energy(rho1, &pot.w));
    let lin_w = pair(&grad(&conv, g.h));
    let db = barycenter(rho0) - barycenter(rho1);
    let quad_w = 0.5 * pot.nu * (w2sq - db * db);
    let interaction = i1 - i0 - lin_w - quad_w;

    Ok(TransportEnergySlacks {
        internal,
        potential,
        interaction,
        internal_bound: h0 + lin_f,
        potential_bound: p0 + lin_v + quad_v,
        interaction_bound: i0 + lin_w + quad_w,
        internal_scale: scale_of(&[h0, h1, lin_f]),
        potential_scale: scale_of(&[p0, p1, lin_v, quad_v]),
        interaction_scale: scale_of(&[i0, i1, lin_w, quad_w]),
    })
}

/// Exact quadratic transport cost between two small atomic measures, by
/// north-west-corner matching of the sorted atoms. Returns `W2`.
pub fn discrete_w2_oracle(xs0: &[f64], ws0: &[f64], xs1: &[f64], ws1: &[f64]) -> Result<f64> {
    if xs0.len() != ws0.len() || xs1.len() != ws1.len() || xs0.is_empty() || xs1.is_empty() {
        return Err(Error::Dimension("atoms and weights must be non-empty and paired".into()));
    }
    let (s0, s1): (f64, f64) = (ws0.iter().sum(), ws1.iter().sum());
    if ws0.iter().chain(ws1).any(|&w| w < 0.0) || (s0 - 1.0).abs() > 1e-9 || (s1 - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("weights must be nonnegative with unit sums, got {s0} and {s1}")));
    }
    let sorted = |xs: &[f64], ws: &[f64]| {
        let mut v: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (a, b) = (sorted(xs0, ws0), sorted(xs1, ws1));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        let d = a[i].0 - b[j].0;
        cost += m * d * d;
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 1e-15 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    Ok(cost.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{random_smooth_density, Grid1D};

    fn gauss(grid: &Grid1D, m: f64, s: f64) -> GridDensity {
        GridDensity::from_fn(grid, 0.0, |x| (-(x - m) * (x - m) / (2.0 * s * s)).exp()).unwrap()
    }

    #[test]
    fn w2_examples() {
        let grid = Grid1D::new(-20.0, 20.0, 4097).unwrap();
        let a = gauss(&grid, 0.0, 1.0);
        assert!(w2_distance(&a, &a) < 1e-10);
        let b = gauss(&grid, 1.0, 2.0);
        assert!((w2_distance(&a, &b).powi(2) - 2.0).abs() < 1e-4);
        // translation by a whole number of cells
        let shift = 0.7 / grid.h;
        let k = shift.round() as usize;
        let mut vals = vec![0.0; grid.n];
        vals[k..].copy_from_slice(&a.values[..grid.n - k]);
        let t = normalize(&vals, &grid, 0.0).unwrap();
        assert!((w2_distance(&a, &t) - k as f64 * grid.h).abs() < 1e-6);
    }

    #[test]
    fn map_examples() {
        let grid = Grid1D::new(-10.0, 10.0, 2001).unwrap();
        let a = gauss(&grid, 0.0, 1.0);
        let id = optimal_map(&a, &a).unwrap();
        // deep in the tails the CDF saturates in floating point
        for i in (0..grid.n).filter(|&i| grid.x(i).abs() < 6.0) {
            assert!((id.map_values[i] - grid.x(i)).abs() < 1e-8);
        }
        let r = random_smooth_density(3, &grid, 1e-4).unwrap();
        let id = optimal_map(&r, &r).unwrap();
        for i in 0..grid.n {
            assert!((id.map_values[i] - grid.x(i)).abs() < 1e-8);
        }
        let b = gauss(&grid, 0.8, 1.0);
        let p = optimal_map(&a, &b).unwrap();
        for i in 0..grid.n {
            let x = grid.x(i);
            if x.abs() < 4.0 {
                assert!((p.map_values[i] - x - 0.8).abs() < 1e-5, "x = {x}");
            }
        }
        // grids may differ between source and target
        let u1 = GridDensity::from_fn(&Grid1D::new(0.0, 1.0, 101).unwrap(), 0.0, |_| 1.0).unwrap();
        let u2 = GridDensity::from_fn(&Grid1D::new(0.0, 2.0, 201).unwrap(), 0.0, |_| 1.0).unwrap();
        let p = optimal_map(&u1, &u2).unwrap();
        for i in 0..101 {
            assert!((p.map_values[i] - 2.0 * u1.grid.x(i)).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolation_examples() {
        let grid = Grid1D::new(-10.0, 12.0, 4001).unwrap();
        let a = gauss(&grid, 0.0, 1.0);
        let b = gauss(&grid, 2.0, 1.0);
        let p = optimal_map(&a, &b).unwrap();
        assert!(displacement_interpolate(&p, 0.0).unwrap().l1_distance(&a).unwrap() < 1e-6);
        assert!(displacement_interpolate(&p, 1.0).unwrap().l1_distance(&b).unwrap() < 1e-6);
        let mid = displacement_interpolate(&p, 0.5).unwrap();
        assert!(mid.l1_distance(&gauss(&grid, 1.0, 1.0)).unwrap() < 1e-4);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(discrete_w2_oracle(&[0.0], &[1.0], &[3.0], &[1.0]).unwrap(), 3.0);
        let v = discrete_w2_oracle(&[1.0, 0.0], &[0.5, 0.5], &[2.0, 3.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        assert!(discrete_w2_oracle(&[0.0], &[0.5], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn grid_w2_agrees_with_atom_oracle() {
        let grid = Grid1D::new(-8.0, 8.0, 2001).unwrap();
        let a = gauss(&grid, 0.0, 1.0);
        let b = random_smooth_density(5, &grid, 1e-4).unwrap();
        let atoms = |r: &GridDensity| {
            let q = Quantile::new(r);
            (0..64).map(|k| q.quantile((k as f64 + 0.5) / 64.0).unwrap()).collect::<Vec<_>>()
        };
        let w = vec![1.0 / 64.0; 64];
        let oracle = discrete_w2_oracle(&atoms(&a), &w, &atoms(&b), &w).unwrap();
        assert!((oracle - w2_distance(&a, &b)).abs() < 2e-2);
    }

    #[test]
    fn transport_cost_matches_quantile_form() {
        let grid = Grid1D::new(-6.0, 6.0, 2001).unwrap();
        let a = random_smooth_density(1, &grid, 1e-4).unwrap();
        let b = random_smooth_density(2, &grid, 1e-4).unwrap();
        let p = optimal_map(&a, &b).unwrap();
        assert!((p.transport_cost() - p.w2 * p.w2).abs() < 1e-5);
        assert!(p.map_values.windows(2).all(|w| w[1] >= w[0]));
        for (i, j) in [(10, 400), (300, 1200), (0, 2000), (1500, 1600)] {
            assert!(p.pushforward_defect(i, j).abs() < 1e-6);
        }
    }

    #[test]
    fn convexity_and_energy_slacks_on_identical_pair() {
        let grid = Grid1D::new(-5.0, 5.0, 801).unwrap();
        let a = random_smooth_density(7, &grid, 1e-4).unwrap();
        let m = EntropyModel::boltzmann();
        let r = check_displacement_convexity(&a, &a, &m, &[0.0, 0.5, 1.0], 1e-5).unwrap();
        assert!(r.slacks.iter().all(|s| s.abs() < 1e-9));
        let pot = PotentialPair::new(
            crate::models::ScalarFn::parse("x^2/2").unwrap(),
            1.0,
            crate::models::ScalarFn::parse("x^2/2").unwrap(),
            1.0,
        );
        let s = transport_energy_slacks(&a, &a, &m, &pot).unwrap();
        assert!(s.internal.abs() < 1e-6 && s.potential.abs() < 1e-6 && s.interaction.abs() < 1e-6);
    }
}
