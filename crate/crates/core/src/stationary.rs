//! Stationary densities, extremal profiles and closed-form constants.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::functionals::convolve;
use crate::measures::{grad, normalize, trap, Grid1D, GridDensity};
use crate::models::{conjugate_exponent, EntropyModel, PotentialPair, ScalarFn, YoungPair};

/// Width of the bisection bracket for the Lagrange multiplier.
pub const BRACKET_WIDTH: f64 = 50.0;
const DAMPING: f64 = 0.5;
const MAX_FIXED_POINT: usize = 500;
const FIXED_POINT_TOL: f64 = 1e-10;
/// Largest density value tolerated at the grid endpoints.
const TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ReferenceDensity {
    pub density: GridDensity,
    /// Constant value of `F'(rho) + V + c + W * rho` on the support.
    pub k: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `F'(rho) + V + c + W * rho = K` with unit mass.
pub fn solve_reference(
    m: &EntropyModel,
    pot: &PotentialPair,
    yp: Option<&YoungPair>,
    grid: &Grid1D,
) -> Result<ReferenceDensity> {
    m.validate()?;
    let base: Vec<f64> = grid.sample(|x| pot.v.eval(x) + yp.map_or(0.0, |y| y.c.eval(x)));
    let (rho, k) = solve_static(m, &base, grid)?;
    if !pot.has_interaction() {
        return finish_reference(rho, k, 0, m, &base, &pot.w);
    }
    interaction_fixed_point(m, pot, &base, grid, rho)
}

/// Like [`solve_reference`], but starts the interaction fixed point from
/// `init`. Needed when `V + c` alone does not confine, e.g. a pure
/// interaction, where the barycentre of `init` selects the equilibrium.
pub fn solve_reference_from(
    m: &EntropyModel,
    pot: &PotentialPair,
    yp: Option<&YoungPair>,
    init: &GridDensity,
) -> Result<ReferenceDensity> {
    m.validate()?;
    let grid = &init.grid;
    let base: Vec<f64> = grid.sample(|x| pot.v.eval(x) + yp.map_or(0.0, |y| y.c.eval(x)));
    if !pot.has_interaction() {
        let (rho, k) = solve_static(m, &base, grid)?;
        return finish_reference(rho, k, 0, m, &base, &pot.w);
    }
    interaction_fixed_point(m, pot, &base, grid, normalize(&init.values, grid, 0.0)?)
}

fn interaction_fixed_point(
    m: &EntropyModel,
    pot: &PotentialPair,
    base: &[f64],
    grid: &Grid1D,
    mut rho: GridDensity,
) -> Result<ReferenceDensity> {
    let mut iterations = 0;
    loop {
        if iterations == MAX_FIXED_POINT {
            return Err(Error::Convergence(format!("fixed point not reached in {MAX_FIXED_POINT} iterations")));
        }
        iterations += 1;
        let conv = convolve(&rho, &pot.w);
        let u: Vec<f64> = base.iter().zip(&conv).map(|(a, b)| a + b).collect();
        let (next, _) = solve_static(m, &u, grid)?;
        let mixed: Vec<f64> =
            rho.values.iter().zip(&next.values).map(|(a, b)| (1.0 - DAMPING) * a + DAMPING * b).collect();
        let mixed = normalize(&mixed, grid, 0.0)?;
        let change = mixed.l1_distance(&rho)?;
        rho = mixed;
        if change < FIXED_POINT_TOL {
            break;
        }
    }
    // the damped iterate keeps a geometric remnant of the initial guess in the tails
    let conv = convolve(&rho, &pot.w);
    let u: Vec<f64> = base.iter().zip(&conv).map(|(a, b)| a + b).collect();
    let (rho, k) = solve_static(m, &u, grid)?;
    finish_reference(rho, k, iterations, m, base, &pot.w)
}

fn finish_reference(
    rho: GridDensity,
    k: f64,
    iterations: usize,
    m: &EntropyModel,
    base: &[f64],
    w: &ScalarFn,
) -> Result<ReferenceDensity> {
    check_tails(&rho)?;
    let residual = first_order_residual(&rho, m, base, w);
    Ok(ReferenceDensity { density: rho, k, residual, iterations })
}

/// Max of `|grad (F'(rho) + U + W * rho)|` at nodes whose neighbours all carry mass.
fn first_order_residual(rho: &GridDensity, m: &EntropyModel, base: &[f64], w: &ScalarFn) -> f64 {
    let conv = convolve(rho, w);
    let xi: Vec<f64> = (0..rho.grid.n)
        .map(|i| {
            let r = rho.values[i];
            (if r > 0.0 { m.df(r) } else { 0.0 }) + base[i] + conv[i]
        })
        .collect();
    let g = grad(&xi, rho.grid.h);
    (1..rho.grid.n - 1)
        .filter(|&i| rho.values[i - 1] > 0.0 && rho.values[i] > 0.0 && rho.values[i + 1] > 0.0)
        .map(|i| g[i].abs())
        .fold(0.0, f64::max)
}

fn check_tails(rho: &GridDensity) -> Result<()> {
    let tail = rho.values[0].max(rho.values[rho.grid.n - 1]);
    if tail > TAIL_TOL {
        return Err(Error::Confinement(format!("density is {tail:.3e} at the grid boundary")));
    }
    Ok(())
}

/// `rho = (F')^{-1}(K - u)` with `K` fixed by the mass constraint.
fn solve_static(m: &EntropyModel, u: &[f64], grid: &Grid1D) -> Result<(GridDensity, f64)> {
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    let profile = |k: f64| -> Vec<f64> { u.iter().map(|&ui| m.inv_df(k - ui)).collect() };
    let mass = |k: f64| trap(&profile(k), grid);
    let (mut lo, mut hi) = if m.df_sup().is_finite() {
        // F' < 0 on (0, inf): K - u must stay negative
        let top = umin - 1e-12 * umin.abs().max(1.0);
        (top - BRACKET_WIDTH, top)
    } else {
        (umin, umin + BRACKET_WIDTH)
    };
    let mut widen = 0;
    while mass(lo) > 1.0 {
        lo -= BRACKET_WIDTH;
        widen += 1;
        if widen > 20 {
            return Err(Error::Confinement("mass stays above 1 for every bracket".into()));
        }
    }
    if !(mass(hi) >= 1.0) {
        return Err(Error::Confinement(format!("mass {} < 1 at the top of the bracket", mass(hi))));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let k = 0.5 * (lo + hi);
    Ok((normalize(&profile(k), grid, 0.0)?, k))
}

/// Normalized `exp(-U)` on the grid.
pub fn gibbs(u: &ScalarFn, grid: &Grid1D) -> Result<GridDensity> {
    let vals = grid.sample(|x| u.eval(x));
    let umin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if !umin.is_finite() {
        return Err(Error::Numeric("potential is not finite on the grid".into()));
    }
    let rho = normalize(&vals.iter().map(|v| (umin - v).exp()).collect::<Vec<_>>(), grid, 0.0)?;
    check_tails(&rho)?;
    Ok(rho)
}

/// `int exp(-(p - 1)|x|^q) dx` over `R^n`.
pub fn sigma_c(p: f64, q: f64, n: u32) -> Result<f64> {
    check_exponents(p, q)?;
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let n = n as f64;
    Ok((0.5 * n * std::f64::consts::PI.ln() + ln_gamma(n / q + 1.0) - n / q * (p - 1.0).ln() - ln_gamma(0.5 * n + 1.0))
        .exp())
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0) || !(q > 1.0) || (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("need conjugate exponents > 1, got p = {p}, q = {q}")));
    }
    Ok(())
}

/// Normalized `exp(-lambda^q (p - 1)|x|^q)`.
pub fn plsi_extremal(p: f64, lambda: f64, grid: &Grid1D) -> Result<GridDensity> {
    if !(p > 1.0) || !(lambda > 0.0) {
        return Err(Error::Domain(format!("need p > 1 and lambda > 0, got {p}, {lambda}")));
    }
    let q = conjugate_exponent(p);
    let s = lambda.powf(q) * (p - 1.0);
    GridDensity::from_fn(grid, 0.0, |x| (-s * x.abs().powf(q)).exp())
}

#[derive(Debug, Clone)]
pub struct GnExtremal {
    /// `h` at the nodes, with `int h^r = 1`.
    pub h: Vec<f64>,
    /// `h^r`.
    pub rho: GridDensity,
    /// Free constant `A` of the profile.
    pub a: f64,
    /// Max of `|h' + mu^q x|x|^{q-2} h^{r/p}|` at nodes with `h > 1e-3 max h`.
    pub residual: f64,
}

/// Solution of `-h' = x|x|^{q-2} h^{r/p}` with `int h^r = 1`.
pub fn gn_extremal(p: f64, r: f64, grid: &Grid1D) -> Result<GnExtremal> {
    gn_extremal_scaled(p, r, 1.0, grid)
}

/// Solution of `-h' = mu^q x|x|^{q-2} h^{r/p}`. Separating variables,
/// `h^kappa / kappa = A' - mu^q |x|^q / q` with `kappa = 1 - r/p`.
pub fn gn_extremal_scaled(p: f64, r: f64, mu: f64, grid: &Grid1D) -> Result<GnExtremal> {
    if !(p > 1.0) || !(r > 0.0) || !(mu > 0.0) {
        return Err(Error::Domain(format!("need p > 1, r > 0, mu > 0; got {p}, {r}, {mu}")));
    }
    if (r - p).abs() < 1e-12 {
        return Err(Error::Domain("r = p is the logarithmic case".into()));
    }
    let q = conjugate_exponent(p);
    let kappa = 1.0 - r / p;
    let mq = mu.powf(q);
    let profile = move |a: f64, x: f64| -> f64 {
        let s = mq * x.abs().powf(q) / q;
        if kappa < 0.0 {
            (-kappa * (s + a)).powf(1.0 / kappa)
        } else {
            let b = kappa * (a - s);
            if b > 0.0 {
                b.powf(1.0 / kappa)
            } else {
                0.0
            }
        }
    };
    let mass = |a: f64| trap(&grid.sample(|x| profile(a, x).powf(r)), grid);
    // mass decreases in A for kappa < 0 and increases for kappa > 0
    let too_small = |a: f64| if kappa < 0.0 { mass(a) > 1.0 } else { mass(a) < 1.0 };
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    if !too_small(lo.exp()) || too_small(hi.exp()) {
        return Err(Error::Confinement("cannot normalize the profile on this grid".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if too_small(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = (0.5 * (lo + hi)).exp();
    let mut h = grid.sample(|x| profile(a, x));
    let hr: Vec<f64> = h.iter().map(|v| v.powf(r)).collect();
    let m = trap(&hr, grid);
    let scale = m.powf(-1.0 / r);
    h.iter_mut().for_each(|v| *v *= scale);
    let rho = normalize(&hr, grid, 0.0)?;
    check_tails(&rho).map_err(|_| Error::Confinement("profile is not integrable on this grid".into()))?;
    let dh = grad(&h, grid.h);
    let hmax = h.iter().copied().fold(0.0, f64::max);
    let residual = (0..grid.n)
        .filter(|&i| h[i] > 1e-3 * hmax)
        .map(|i| {
            let x = grid.x(i);
            (dh[i] + mq * x * x.abs().powf(q - 2.0) * h[i].powf(r / p)).abs()
        })
        .fold(0.0, f64::max);
    Ok(GnExtremal { h, rho, a, residual })
}

/// `[(C + lambda (1 - m) / (2m) x^2)^{1/(m-1)}]_+` with `C` fixed by unit mass on the grid.
pub fn barenblatt(m: f64, lambda: f64, grid: &Grid1D) -> Result<GridDensity> {
    if !(m > 0.0) || m == 1.0 || !(lambda > 0.0) {
        return Err(Error::Domain(format!("need m > 0, m != 1, lambda > 0; got {m}, {lambda}")));
    }
    let coef = lambda * (1.0 - m) / (2.0 * m);
    let profile = move |c: f64, x: f64| {
        let b = c + coef * x * x;
        if b > 0.0 {
            b.powf(1.0 / (m - 1.0))
        } else {
            0.0
        }
    };
    let mass = |c: f64| trap(&grid.sample(|x| profile(c, x)), grid);
    // mass increases in C for m > 1 and decreases for m < 1
    let below = |c: f64| if m > 1.0 { mass(c) < 1.0 } else { mass(c) > 1.0 };
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    if !below(lo.exp()) || below(hi.exp()) {
        return Err(Error::Confinement("cannot normalize the profile on this grid".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = (0.5 * (lo + hi)).exp();
    GridDensity::from_fn(grid, 0.0, |x| profile(c, x))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SobolevConstants {
    /// Sharp constant in `||f||_{p*} <= C ||grad f||_p`.
    pub c_pn: f64,
    pub c_inf: f64,
    /// `int rho_inf^{1 - 1/n}`.
    pub h_pf: f64,
}

/// Step in `s = ln r` for the radial quadratures.
pub const RADIAL_STEP: f64 = 2e-3;

pub fn sobolev_constants(p: f64, n: u32) -> Result<SobolevConstants> {
    sobolev_constants_with_step(p, n, RADIAL_STEP)
}

/// Radial integrals use `r = e^s`; the integrands then decay exponentially in
/// both directions and the trapezoid rule converges geometrically.
pub fn sobolev_constants_with_step(p: f64, n: u32, ds: f64) -> Result<SobolevConstants> {
    let nf = n as f64;
    if !(p > 1.0 && p < nf) {
        return Err(Error::Domain(format!("need 1 < p < n, got p = {p}, n = {n}")));
    }
    let q = conjugate_exponent(p);
    let p_star = nf * p / (nf - p);
    let alpha = p_star / (nf * q);
    let surface = nf * (0.5 * nf * std::f64::consts::PI.ln() - ln_gamma(0.5 * nf + 1.0)).exp();
    let radial = |f: &dyn Fn(f64) -> f64, decay: f64, shift: f64| -> f64 {
        let lo = shift - 60.0 / nf;
        let hi = shift + 60.0 / decay;
        let steps = ((hi - lo) / ds).ceil() as usize;
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for k in 0..=steps {
            let s = lo + k as f64 * h;
            let r = s.exp();
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += w * f(r) * (nf * s).exp();
        }
        surface * acc * h
    };
    let shift = -alpha.ln() / q;
    let i1 = radial(&|r| (alpha * r.powf(q) + 1.0).powf(-nf), nf * (q - 1.0), shift);
    let c_inf = (1.0 - nf) * i1.powf(p / nf);
    let beta = -c_inf / (nf - 1.0);
    let gamma = 1.0 - 1.0 / nf;
    let h_pf = radial(&|r| (alpha * r.powf(q) + beta).powf(-nf * gamma), q * (nf - 1.0) - nf, shift);
    let c_pn = (p_star * (nf - 1.0) / (nf * p * (h_pf - c_inf))).powf(1.0 / p);
    Ok(SobolevConstants { c_pn, c_inf, h_pf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::entropy_production_i2;
    use crate::models::{make_young, YoungKind};

    #[test]
    fn boltzmann_reference_is_standard_gaussian() {
        let grid = Grid1D::new(-10.0, 10.0, 2001).unwrap();
        let m = EntropyModel::boltzmann();
        let pot = PotentialPair::quadratic(1.0);
        let r = solve_reference(&m, &pot, None, &grid).unwrap();
        let exact = GridDensity::from_fn(&grid, 0.0, |x| (-0.5 * x * x).exp()).unwrap();
        assert!(r.density.l1_distance(&exact).unwrap() < 1e-8);
        let sigma_v = crate::measures::trap(&grid.sample(|x| (-0.5 * x * x).exp()), &grid);
        assert!((r.k - (1.0 - sigma_v.ln())).abs() < 1e-10);
        assert!(r.residual <= 1e-6);
        assert!(entropy_production_i2(&r.density, &m, &pot).unwrap() < 1e-8);
    }

    #[test]
    fn boltzmann_young_reference_and_k_c() {
        let grid = Grid1D::new(-12.0, 12.0, 2401).unwrap();
        let yp = make_young(YoungKind::PowerPls { p: 2.0 }).unwrap();
        let r = solve_reference(&EntropyModel::boltzmann(), &PotentialPair::zero(), Some(&yp), &grid).unwrap();
        let sc = sigma_c(2.0, 2.0, 1).unwrap();
        assert!((r.k - (1.0 + (1.0 / sc).ln())).abs() < 1e-8);
        let ext = plsi_extremal(2.0, 1.0, &grid).unwrap();
        assert!(r.density.l1_distance(&ext).unwrap() < 1e-8);
    }

    #[test]
    fn barenblatt_profiles_match_solver() {
        let grid = Grid1D::new(-60.0, 60.0, 12001).unwrap();
        for m in [2.0, 3.0, 0.75] {
            let model = EntropyModel::power(m).unwrap();
            let r = solve_reference(&model, &PotentialPair::quadratic(1.0), None, &grid).unwrap();
            let b = barenblatt(m, 1.0, &grid).unwrap();
            assert!(r.density.l1_distance(&b).unwrap() < 1e-6, "m = {m}");
            assert!(r.residual <= 1e-6, "m = {m}: {}", r.residual);
        }
    }

    #[test]
    fn warm_restart_is_a_fixed_point() {
        let grid = Grid1D::new(-8.0, 8.0, 801).unwrap();
        let m = EntropyModel::boltzmann();
        let pot = PotentialPair::new(ScalarFn::parse("x^2/2").unwrap(), 1.0, ScalarFn::parse("x^2/2").unwrap(), 1.0);
        let r = solve_reference(&m, &pot, None, &grid).unwrap();
        assert!(r.iterations > 0 && r.residual <= 1e-6, "{} {}", r.iterations, r.residual);
        // V + W * rho with the converged rho is a static problem with the same answer
        let conv = convolve(&r.density, &pot.w);
        let u: Vec<f64> = (0..grid.n).map(|i| pot.v.eval(grid.x(i)) + conv[i]).collect();
        let (again, _) = solve_static(&m, &u, &grid).unwrap();
        assert!(again.l1_distance(&r.density).unwrap() < 1e-9);
    }

    #[test]
    fn unconfined_problems_are_rejected() {
        let grid = Grid1D::new(-1.0, 1.0, 101).unwrap();
        let e = solve_reference(&EntropyModel::boltzmann(), &PotentialPair::zero(), None, &grid);
        assert!(matches!(e, Err(Error::Confinement(_))));
    }

    #[test]
    fn sigma_c_closed_forms() {
        let pi = std::f64::consts::PI;
        assert!((sigma_c(2.0, 2.0, 1).unwrap() - pi.sqrt()).abs() < 1e-14);
        assert!((sigma_c(2.0, 2.0, 2).unwrap() - pi).abs() < 1e-13);
        assert!(sigma_c(2.0, 3.0, 1).is_err());
        for (p, q) in [(2.0, 2.0), (3.0, 1.5), (1.5, 3.0)] {
            let grid = Grid1D::new(-12.0, 12.0, 24001).unwrap();
            let f = grid.sample(|x| (-(p - 1.0) * f64::abs(x).powf(q)).exp());
            let quad = crate::measures::integrate(&f, &grid).unwrap();
            assert!((quad - sigma_c(p, q, 1).unwrap()).abs() < 1e-8, "p = {p}");
        }
    }

    #[test]
    fn gn_profile_solves_its_ode() {
        let grid = Grid1D::new(-60.0, 60.0, 60001).unwrap();
        let g = gn_extremal(2.0, 4.0, &grid).unwrap();
        assert!(g.residual < 1e-6, "{}", g.residual);
        assert!((g.rho.mass() - 1.0).abs() < 1e-10);
        let hr: Vec<f64> = g.h.iter().map(|v| v.powi(4)).collect();
        assert!((trap(&hr, &grid) - 1.0).abs() < 1e-10);
        // h = 1 / (A + x^2 / 2) for this pair
        for i in (0..grid.n).step_by(997) {
            let x = grid.x(i);
            assert!((g.h[i] - 1.0 / (g.a + 0.5 * x * x)).abs() < 1e-9);
        }
        assert!(gn_extremal(2.0, 2.0, &grid).is_err());
        let compact = gn_extremal(2.0, 1.5, &Grid1D::new(-10.0, 10.0, 4001).unwrap()).unwrap();
        assert_eq!(compact.h[0], 0.0);
    }

    #[test]
    fn sobolev_constant_matches_aubin_talenti() {
        let s = sobolev_constants(2.0, 3).unwrap();
        assert!(s.c_inf < 0.0);
        let n = 3.0f64;
        let pi = std::f64::consts::PI;
        let closed = 1.0 / (pi * n * (n - 2.0)).sqrt()
            * (statrs::function::gamma::gamma(n) / statrs::function::gamma::gamma(n / 2.0)).powf(1.0 / n);
        assert!((s.c_pn - closed).abs() / closed < 1e-3);
        let coarse = sobolev_constants_with_step(2.0, 3, 2.0 * RADIAL_STEP).unwrap();
        assert!((coarse.c_pn - s.c_pn).abs() < 1e-6);
        assert!(sobolev_constants(3.0, 3).is_err());
        assert!(sobolev_constants(1.5, 4).unwrap().c_inf < 0.0);
    }
}
