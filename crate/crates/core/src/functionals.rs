//! Energies and entropy productions of grid densities.
//!
//! `W * rho` is evaluated by direct quadrature. On a uniform grid `W(x_i - x_j)`
//! only depends on `i - j`, so the kernel is tabulated once at the `2n - 1`
//! offsets and the sum costs `O(n^2)` multiply-adds without re-evaluating `W`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{grad, trap, trapezoid_weights, Grid1D, GridDensity};
use crate::models::{EntropyModel, PotentialPair, ScalarFn, YoungPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub internal: f64,
    pub potential: f64,
    pub interaction: f64,
    pub total: f64,
}

/// `f(k h)` for `k = -(n-1) ..= n-1`, stored at index `k + n - 1`.
pub fn kernel_table(f: &ScalarFn, grid: &Grid1D) -> Vec<f64> {
    let n = grid.n as isize;
    (-(n - 1)..n).map(|k| f.eval(k as f64 * grid.h)).collect()
}

/// Derivative of a kernel at the offsets, by second-order differences.
pub fn kernel_derivative(table: &[f64], grid: &Grid1D) -> Vec<f64> {
    grad(table, grid.h)
}

/// `(K * rho)(x_i) = sum_j w_j K(x_i - x_j) rho_j` for a tabulated kernel.
pub fn convolve_table(rho: &GridDensity, table: &[f64]) -> Vec<f64> {
    let n = rho.grid.n;
    let w = trapezoid_weights(&rho.grid);
    let wr: Vec<f64> = w.iter().zip(&rho.values).map(|(a, b)| a * b).collect();
    (0..n)
        .map(|i| {
            // x_i - x_j = (i - j) h, index (i - j) + n - 1
            let row = &table[i..i + n];
            row.iter().rev().zip(&wr).map(|(k, r)| k * r).sum()
        })
        .collect()
}

pub fn convolve(rho: &GridDensity, w: &ScalarFn) -> Vec<f64> {
    if w.is_zero() {
        return vec![0.0; rho.grid.n];
    }
    convolve_table(rho, &kernel_table(w, &rho.grid))
}

pub fn internal_energy(rho: &GridDensity, m: &EntropyModel) -> Result<f64> {
    let f: Vec<f64> = rho.values.iter().map(|&r| m.f(r)).collect();
    finite_integral(&f, &rho.grid, "internal energy")
}

pub fn potential_energy(rho: &GridDensity, v: &ScalarFn) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    rho.integrate_with(|x, r| r * v.eval(x))
}

/// `1/2 int (W * rho) rho`.
pub fn interaction_energy(rho: &GridDensity, w: &ScalarFn) -> f64 {
    if w.is_zero() {
        return 0.0;
    }
    half_pairing(rho, &convolve(rho, w))
}

fn half_pairing(rho: &GridDensity, conv: &[f64]) -> f64 {
    let g: Vec<f64> = conv.iter().zip(&rho.values).map(|(c, r)| c * r).collect();
    0.5 * trap(&g, &rho.grid)
}

/// `1/2 int (K * rho) rho` for a tabulated kernel.
pub fn interaction_with_table(rho: &GridDensity, table: &[f64]) -> f64 {
    half_pairing(rho, &convolve_table(rho, table))
}

pub fn free_energy(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<EnergyBreakdown> {
    let internal = internal_energy(rho, m)?;
    let potential = potential_energy(rho, &pot.v);
    let interaction = interaction_energy(rho, &pot.w);
    Ok(EnergyBreakdown { internal, potential, interaction, total: internal + potential + interaction })
}

/// `H(rho0) - H(rho1)`.
pub fn relative_energy(rho0: &GridDensity, rho1: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<f64> {
    Ok(free_energy(rho0, m, pot)?.total - free_energy(rho1, m, pot)?.total)
}

fn finite_integral(f: &[f64], grid: &Grid1D, what: &str) -> Result<f64> {
    let v = trap(f, grid);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} is {v}")))
    }
}

/// Rejects densities that vanish somewhere when `F'` is singular at zero.
pub(crate) fn require_positive(rho: &GridDensity, m: &EntropyModel) -> Result<()> {
    if m.singular_at_zero() {
        if let Some(i) = rho.values.iter().position(|&r| !(r > 0.0)) {
            return Err(Error::Positivity(format!("rho vanishes at node {i} (x = {})", rho.grid.x(i))));
        }
    }
    Ok(())
}

/// `F'(rho) + V + W * rho` at the nodes; zero-density nodes carry `F'(0)`
/// only for models where it is finite.
pub fn chemical_potential(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<Vec<f64>> {
    require_positive(rho, m)?;
    let conv = convolve(rho, &pot.w);
    Ok((0..rho.grid.n)
        .map(|i| {
            let r = rho.values[i];
            let d = if r > 0.0 { m.df(r) } else { 0.0 };
            d + pot.v.eval(rho.grid.x(i)) + conv[i]
        })
        .collect())
}

/// `grad (F'(rho) + V + W * rho)`.
pub fn chemical_gradient(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<Vec<f64>> {
    Ok(grad(&chemical_potential(rho, m, pot)?, rho.grid.h))
}

/// `int rho |grad xi|^2` over `{rho > 0}`.
pub fn entropy_production_i2(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<f64> {
    let g = chemical_gradient(rho, m, pot)?;
    let f: Vec<f64> = rho.values.iter().zip(&g).map(|(&r, d)| if r > 0.0 { r * d * d } else { 0.0 }).collect();
    finite_integral(&f, &rho.grid, "entropy production")
}

/// The pair `(int rho c*(-grad xi), int rho grad xi . grad c*(grad xi))`.
pub fn entropy_production_icstar(
    rho: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
    yp: &YoungPair,
) -> Result<(f64, f64)> {
    let g = chemical_gradient(rho, m, pot)?;
    Ok(cstar_pair(rho, &g, yp))
}

pub(crate) fn cstar_pair(rho: &GridDensity, g: &[f64], yp: &YoungPair) -> (f64, f64) {
    let mut a = Vec::with_capacity(g.len());
    let mut b = Vec::with_capacity(g.len());
    for (&r, &d) in rho.values.iter().zip(g) {
        if r > 0.0 {
            a.push(r * yp.c_star.eval(-d));
            b.push(r * d * yp.dc_star.eval(d));
        } else {
            a.push(0.0);
            b.push(0.0);
        }
    }
    (trap(&a, &rho.grid), trap(&b, &rho.grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::random_smooth_density;
    use crate::models::{make_young, YoungKind};

    fn uniform(a: f64, b: f64, n: usize) -> GridDensity {
        GridDensity::from_fn(&Grid1D::new(a, b, n).unwrap(), 0.0, |_| 1.0).unwrap()
    }

    fn gaussian(grid: &Grid1D, m: f64, s2: f64) -> GridDensity {
        GridDensity::from_fn(grid, 0.0, |x| (-(x - m) * (x - m) / (2.0 * s2)).exp()).unwrap()
    }

    #[test]
    fn internal_energy_examples() {
        let b = EntropyModel::boltzmann();
        assert!(internal_energy(&uniform(0.0, 1.0, 101), &b).unwrap().abs() < 1e-12);
        assert!((internal_energy(&uniform(0.0, 2.0, 101), &b).unwrap() - 0.5f64.ln()).abs() < 1e-9);
        let p2 = EntropyModel::power(2.0).unwrap();
        assert!((internal_energy(&uniform(0.0, 1.0, 101), &p2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn potential_energy_examples() {
        let grid = Grid1D::new(-8.0, 8.0, 4097).unwrap();
        let g = gaussian(&grid, 0.0, 1.0);
        assert_eq!(potential_energy(&g, &ScalarFn::zero()), 0.0);
        assert!((potential_energy(&g, &ScalarFn::parse("x^2/2").unwrap()) - 0.5).abs() < 1e-6);
        let u = uniform(0.0, 1.0, 101);
        assert!((potential_energy(&u, &ScalarFn::parse("x").unwrap()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interaction_energy_examples() {
        let u = uniform(0.0, 1.0, 201);
        let w = ScalarFn::parse("x^2").unwrap();
        // independent oracle: explicit double trapezoid sum
        let wts = trapezoid_weights(&u.grid);
        let mut direct = 0.0;
        for i in 0..u.grid.n {
            for j in 0..u.grid.n {
                let d = u.grid.x(i) - u.grid.x(j);
                direct += wts[i] * wts[j] * d * d * u.values[i] * u.values[j];
            }
        }
        let e = interaction_energy(&u, &w);
        assert!((e - 0.5 * direct).abs() < 1e-12);
        assert!((e - 1.0 / 12.0).abs() < 1e-4);
        let fine = uniform(0.0, 1.0, 4001);
        assert!((interaction_energy(&fine, &w) - 1.0 / 12.0).abs() < 1e-7);
        assert_eq!(interaction_energy(&u, &ScalarFn::zero()), 0.0);
    }

    #[test]
    fn gaussian_free_energy_is_minus_log_partition() {
        let grid = Grid1D::new(-10.0, 10.0, 4001).unwrap();
        let rho = gaussian(&grid, 0.0, 1.0);
        let pot = PotentialPair::quadratic(1.0);
        let e = free_energy(&rho, &EntropyModel::boltzmann(), &pot).unwrap();
        let sigma_v = (2.0 * std::f64::consts::PI).sqrt();
        assert!((e.total + sigma_v.ln()).abs() < 1e-6);
        assert_eq!(e.total, e.internal + e.potential + e.interaction);
        assert_eq!(relative_energy(&rho, &rho, &EntropyModel::boltzmann(), &pot).unwrap(), 0.0);
    }

    #[test]
    fn i2_for_shifted_gaussian() {
        let grid = Grid1D::new(-10.0, 10.0, 4001).unwrap();
        let pot = PotentialPair::quadratic(1.0);
        let b = EntropyModel::boltzmann();
        let at_ref = entropy_production_i2(&gaussian(&grid, 0.0, 1.0), &b, &pot).unwrap();
        assert!(at_ref < 1e-6);
        let shifted = entropy_production_i2(&gaussian(&grid, 0.5, 1.0), &b, &pot).unwrap();
        assert!((shifted - 0.25).abs() < 1e-3);
    }

    #[test]
    fn quadratic_young_halves_i2() {
        let grid = Grid1D::new(-6.0, 6.0, 800).unwrap();
        let pot = PotentialPair::quadratic(1.0);
        let b = EntropyModel::boltzmann();
        let yp = make_young(YoungKind::QuadraticSigma { sigma: 1.0 }).unwrap();
        let rho = random_smooth_density(4, &grid, 1e-4).unwrap();
        let i2 = entropy_production_i2(&rho, &b, &pot).unwrap();
        let (script, plain) = entropy_production_icstar(&rho, &b, &pot, &yp).unwrap();
        assert!((i2 - 2.0 * script).abs() < 1e-10 * i2.max(1.0));
        assert!((i2 - plain).abs() < 1e-10 * i2.max(1.0));
    }

    #[test]
    fn positivity_is_enforced_for_singular_models() {
        let grid = Grid1D::new(-2.0, 2.0, 201).unwrap();
        let rho = GridDensity::from_fn(&grid, 0.0, |x| (1.0 - x * x).max(0.0)).unwrap();
        let pot = PotentialPair::zero();
        assert!(matches!(entropy_production_i2(&rho, &EntropyModel::boltzmann(), &pot), Err(Error::Positivity(_))));
        assert!(entropy_production_i2(&rho, &EntropyModel::power(2.0).unwrap(), &pot).is_ok());
    }
}
