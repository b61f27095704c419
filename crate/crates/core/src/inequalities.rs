//! Checks of the transport inequalities on grid data.
//!
//! Every checker evaluates both sides of one inequality and reports
//! `slack = rhs - lhs`. A check passes when `slack >= -tol * scale` with
//! `scale = max(|lhs|, |rhs|, 1)`, and is flagged as an equality case when
//! `|slack| <= tol_eq * scale`.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::functionals::{
    convolve_table, entropy_production_i2, entropy_production_icstar, free_energy, interaction_energy,
    internal_energy, potential_energy, relative_energy, require_positive,
};
use crate::measures::{barycenter, grad, normalize, trap, Grid1D, GridDensity};
use crate::models::{conjugate_exponent, EntropyKind, EntropyModel, PotentialPair, ScalarFn, YoungPair};
use crate::stationary::{gibbs, gn_extremal, solve_reference};
use crate::transport::w2_distance;

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_TOL_EQ: f64 = 1e-3;
/// Barycentres closer than this count as matched.
pub const BARYCENTRE_MATCH: f64 = 1e-8;
/// Allowed deviation of a normalization constraint on the inputs.
pub const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub scale: f64,
    pub tol: f64,
    pub tol_eq: f64,
    pub pass: bool,
    pub equality_case: bool,
    pub inputs_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IneqReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, inputs_digest: String) -> Result<Self> {
        let name = name.into();
        if !lhs.is_finite() || !rhs.is_finite() {
            return Err(Error::Numeric(format!("{name}: lhs = {lhs}, rhs = {rhs}")));
        }
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        Ok(Self {
            name,
            lhs,
            rhs,
            slack: rhs - lhs,
            scale,
            tol: DEFAULT_TOL,
            tol_eq: DEFAULT_TOL_EQ,
            pass: false,
            equality_case: false,
            inputs_digest,
            note: None,
        }
        .with_tolerances(DEFAULT_TOL, DEFAULT_TOL_EQ))
    }

    pub fn with_tolerances(mut self, tol: f64, tol_eq: f64) -> Self {
        self.tol = tol;
        self.tol_eq = tol_eq;
        self.pass = self.slack >= -tol * self.scale;
        self.equality_case = self.slack.abs() <= tol_eq * self.scale;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn scaled_slack(&self) -> f64 {
        self.slack / self.scale
    }

    /// `|slack| / max(|lhs|, |rhs|)`, for saturation checks with a relative tolerance.
    pub fn relative_gap(&self) -> f64 {
        self.slack.abs() / self.lhs.abs().max(self.rhs.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Hash of the inputs of a check, hex encoded.
#[derive(Clone)]
pub struct InputDigest(Sha256);

impl InputDigest {
    pub fn new(tag: &str) -> Self {
        Self(Sha256::new()).text(tag)
    }

    pub fn text(mut self, s: &str) -> Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn num(mut self, x: f64) -> Self {
        self.0.update(x.to_bits().to_le_bytes());
        self
    }

    pub fn nums(mut self, xs: &[f64]) -> Self {
        self.0.update((xs.len() as u64).to_le_bytes());
        for x in xs {
            self.0.update(x.to_bits().to_le_bytes());
        }
        self
    }

    pub fn grid(self, g: &Grid1D) -> Self {
        self.num(g.a).num(g.b).num(g.n as f64)
    }

    pub fn density(self, rho: &GridDensity) -> Self {
        self.grid(&rho.grid).nums(&rho.values)
    }

    pub fn model(self, m: &EntropyModel) -> Self {
        self.text(&format!("{m:?}"))
    }

    pub fn potentials(self, pot: &PotentialPair) -> Self {
        self.text(pot.v.label()).num(pot.lambda).text(pot.w.label()).num(pot.nu)
    }

    pub fn young(self, yp: &YoungPair) -> Self {
        self.text(yp.c.label()).text(yp.c_star.label())
    }

    pub fn finish(self) -> String {
        self.0.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Fourth-order central difference with a step relative to `|x|`.
pub(crate) fn derivative(f: &ScalarFn, x: f64) -> f64 {
    let e = 1e-3 * x.abs().max(1.0);
    (-f.eval(x + 2.0 * e) + 8.0 * f.eval(x + e) - 8.0 * f.eval(x - e) + f.eval(x - 2.0 * e)) / (12.0 * e)
}

/// `int rho x V'(x)`.
fn virial_potential(rho: &GridDensity, v: &ScalarFn) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    rho.integrate_with(|x, r| r * x * derivative(v, x))
}

/// `int rho x (W' * rho)`, which equals `1/2 iint (x - y) W'(x - y) rho rho`.
fn virial_interaction(rho: &GridDensity, w: &ScalarFn) -> f64 {
    if w.is_zero() {
        return 0.0;
    }
    let n = rho.grid.n as isize;
    let table: Vec<f64> = (-(n - 1)..n).map(|k| derivative(w, k as f64 * rho.grid.h)).collect();
    let conv = convolve_table(rho, &table);
    let f: Vec<f64> = (0..rho.grid.n).map(|i| rho.values[i] * rho.grid.x(i) * conv[i]).collect();
    trap(&f, &rho.grid)
}

fn pressure_integral(rho: &GridDensity, m: &EntropyModel) -> f64 {
    let f: Vec<f64> = rho.values.iter().map(|&r| m.pf(r)).collect();
    trap(&f, &rho.grid)
}

/// `int |f|^p`.
fn lp_power(f: &[f64], grid: &Grid1D, p: f64) -> f64 {
    trap(&f.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>(), grid)
}

/// `int |f'|^p` with grid derivatives.
fn gradient_lp_power(f: &[f64], grid: &Grid1D, p: f64) -> f64 {
    lp_power(&grad(f, grid.h), grid, p)
}

/// `int g ln g` with `0 ln 0 = 0`.
fn entropy_of(g: &[f64], grid: &Grid1D) -> f64 {
    trap(&g.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).collect::<Vec<_>>(), grid)
}

/// Scales `f` to unit `L^p` norm.
pub fn normalize_lp(f: &[f64], grid: &Grid1D, p: f64) -> Result<Vec<f64>> {
    if f.len() != grid.n {
        return Err(Error::Dimension(format!("array has {} entries, grid has {}", f.len(), grid.n)));
    }
    let norm = lp_power(f, grid, p).powf(1.0 / p);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Degenerate(format!("L^{p} norm is {norm}")));
    }
    Ok(f.iter().map(|v| v / norm).collect())
}

fn require_lp_normalized(f: &[f64], grid: &Grid1D, p: f64) -> Result<()> {
    if f.len() != grid.n {
        return Err(Error::Dimension(format!("array has {} entries, grid has {}", f.len(), grid.n)));
    }
    let norm = lp_power(f, grid, p).powf(1.0 / p);
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Hypothesis(format!("need ||f||_{p} = 1, got {norm}")));
    }
    Ok(())
}

/// `lambda + nu`, after checking both declared moduli on the grid.
fn mixed_modulus(pot: &PotentialPair, grid: &Grid1D) -> Result<f64> {
    pot.validate(grid)?;
    let k = pot.lambda + pot.nu;
    if !(k > 0.0) {
        return Err(Error::Hypothesis(format!("need lambda + nu > 0, got {k}")));
    }
    Ok(k)
}

fn positive_modulus(pot: &PotentialPair, grid: &Grid1D) -> Result<f64> {
    pot.validate(grid)?;
    if !(pot.lambda > 0.0) {
        return Err(Error::Hypothesis(format!("need a uniformly convex potential, lambda = {}", pot.lambda)));
    }
    Ok(pot.lambda)
}

/// Master comparison between two densities with an arbitrary Young function.
pub fn check_master(
    rho0: &GridDensity,
    rho1: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
    yp: &YoungPair,
) -> Result<IneqReport> {
    pot.validate(&rho0.grid)?;
    let e0 = free_energy(rho0, m, pot)?.total + potential_energy(rho0, &yp.c);
    let e1 = free_energy(rho1, m, pot)?.total + potential_energy(rho1, &yp.c);
    let w2 = w2_distance(rho0, rho1);
    let db = barycenter(rho0) - barycenter(rho1);
    let lhs = e0 - e1 + 0.5 * (pot.lambda + pot.nu) * w2 * w2 - 0.5 * pot.nu * db * db;
    let (icstar, _) = entropy_production_icstar(rho0, m, pot, yp)?;
    let rhs = -m.n() * pressure_integral(rho0, m)
        + potential_energy(rho0, &yp.c)
        + virial_potential(rho0, &pot.v)
        + virial_interaction(rho0, &pot.w)
        + icstar;
    let d = InputDigest::new("master").density(rho0).density(rho1).model(m).potentials(pot).young(yp);
    IneqReport::new("master", lhs, rhs, d.finish())
}

/// General Sobolev inequality. The second report is the reduced form with
/// `K_c` alone, emitted when `V = W = 0`.
pub fn check_general_sobolev(
    rho: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
    yp: &YoungPair,
) -> Result<Vec<IneqReport>> {
    if pot.lambda < 0.0 || pot.nu < 0.0 {
        return Err(Error::Hypothesis(format!("V and W must be convex (lambda = {}, nu = {})", pot.lambda, pot.nu)));
    }
    pot.validate(&rho.grid)?;
    let reference = solve_reference(m, pot, Some(yp), &rho.grid)?;
    let star = &reference.density;
    let n = m.n();
    let internal = internal_energy(rho, m)?;
    let pressure = pressure_integral(rho, m);
    let (icstar, _) = entropy_production_icstar(rho, m, pot, yp)?;
    let lhs = internal + n * pressure + potential_energy(rho, &pot.v) - virial_potential(rho, &pot.v)
        + interaction_energy(rho, &pot.w)
        - virial_interaction(rho, &pot.w);
    let rhs = icstar - (pressure_integral(star, m) + interaction_energy(star, &pot.w)) + reference.k;
    let d = InputDigest::new("general_sobolev").density(rho).model(m).potentials(pot).young(yp).finish();
    let mut out = vec![IneqReport::new("general_sobolev", lhs, rhs, d.clone())?];
    if pot.v.is_zero() && !pot.has_interaction() {
        out.push(IneqReport::new("general_sobolev_simplified", internal + n * pressure, icstar + reference.k, d)?);
    }
    Ok(out)
}

/// `int exp(-c)` over the line, by Simpson's rule on a window outside of
/// which `exp(-c) < 1e-20`.
pub fn sigma_numeric(c: &ScalarFn) -> Result<f64> {
    let mut l = 1.0f64;
    while (-c.eval(l)).exp() > 1e-20 || (-c.eval(-l)).exp() > 1e-20 {
        l *= 2.0;
        if l > 1e6 {
            return Err(Error::Window("exp(-c) does not decay".into()));
        }
    }
    Ok(simpson(|x| (-c.eval(x)).exp(), -l, 0.0, 1 << 17) + simpson(|x| (-c.eval(x)).exp(), 0.0, l, 1 << 17))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for k in 1..intervals {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Euclidean log-Sobolev inequality for a Young function with `p`-homogeneous conjugate.
pub fn check_euclidean_lsi(rho: &GridDensity, yp: &YoungPair, n: u32) -> Result<IneqReport> {
    let p = yp.p.ok_or_else(|| Error::Hypothesis("conjugate has no declared homogeneity degree".into()))?;
    if n != 1 {
        return Err(Error::Domain(format!("grid checks are one-dimensional, got n = {n}")));
    }
    require_positive(rho, &EntropyModel::boltzmann())?;
    let nf = n as f64;
    let lnr: Vec<f64> = rho.values.iter().map(|v| v.ln()).collect();
    let g = grad(&lnr, rho.grid.h);
    let gamma: Vec<f64> = rho.values.iter().zip(&g).map(|(r, d)| r * yp.c_star.eval(-d)).collect();
    let gamma = trap(&gamma, &rho.grid);
    let sigma = sigma_numeric(&yp.c)?;
    let lhs = entropy_of(&rho.values, &rho.grid);
    let rhs = nf / p * (p / (nf * (p - 1.0).exp() * sigma.powf(p / nf)) * gamma).ln();
    let d = InputDigest::new("euclidean_lsi").density(rho).young(yp).num(nf);
    IneqReport::new("euclidean_lsi", lhs, rhs, d.finish())
}

/// Optimal constant of the `p`-log-Sobolev inequality in dimension `n`.
pub fn plsi_constant(p: f64, n: u32) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("need p >= 1, got {p}")));
    }
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let nf = n as f64;
    let pi = std::f64::consts::PI;
    if p == 1.0 {
        return Ok((ln_gamma(0.5 * nf + 1.0) / nf).exp() / (nf * pi.sqrt()));
    }
    let q = conjugate_exponent(p);
    let log = (p / nf).ln() + (p - 1.0) * ((p - 1.0).ln() - 1.0) - 0.5 * p * pi.ln()
        + p / nf * (ln_gamma(0.5 * nf + 1.0) - ln_gamma(nf / q + 1.0));
    Ok(log.exp())
}

/// `p`-log-Sobolev inequality for `f` with `||f||_p = 1` (one dimension).
pub fn check_plsi(grid: &Grid1D, f: &[f64], p: f64) -> Result<IneqReport> {
    require_lp_normalized(f, grid, p)?;
    let fp: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    let lhs = entropy_of(&fp, grid);
    let rhs = (plsi_constant(p, 1)? * gradient_lp_power(f, grid, p)).ln() / p;
    let d = InputDigest::new("plsi").grid(grid).nums(f).num(p);
    IneqReport::new("plsi", lhs, rhs, d.finish())
}

/// Interpolation exponent `theta` with `1/r = theta/p* + (1 - theta)/(r gamma)`.
pub fn gn_theta(p: f64, r: f64, n: u32) -> f64 {
    let nf = n as f64;
    let q = conjugate_exponent(p);
    let gamma = 1.0 / r + 1.0 / q;
    let p_star = nf * p / (nf - p);
    (1.0 / r - 1.0 / (r * gamma)) / (1.0 / p_star - 1.0 / (r * gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GnCheck {
    pub theta: f64,
    /// `H^{P_F}(rho_inf) - C_inf`, the bound in the scale-optimized form.
    pub scaling_constant: f64,
    /// Constant of the interpolation inequality, from the extremal; only when `0 < theta < 1`.
    pub constant: Option<f64>,
    pub reports: Vec<IneqReport>,
}

/// Scale exponents of `int |grad g|^p` and `int |g|^{r gamma}` for
/// `g(x) = lambda^{1/r} f(lambda x)`, which keeps `||g||_r` fixed.
fn gn_scale_exponents(p: f64, r: f64, gamma: f64) -> (f64, f64) {
    (p / r + p - 1.0, gamma - 1.0)
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Gagliardo-Nirenberg family for `||f||_r = 1` in one dimension: the energy
/// form, its scale-optimized version and, when `0 < theta < 1`, the
/// interpolation inequality with the constant attained by the extremal.
pub fn check_gagliardo_nirenberg(grid: &Grid1D, f: &[f64], p: f64, r: f64) -> Result<GnCheck> {
    if !(p > 1.0) || !(r > 0.0) || (r - p).abs() < 1e-12 {
        return Err(Error::Hypothesis(format!("need p > 1, r > 0, r != p; got p = {p}, r = {r}")));
    }
    let q = conjugate_exponent(p);
    let gamma = 1.0 / r + 1.0 / q;
    if !(gamma > 0.0) || (gamma - 1.0).abs() < 1e-12 {
        return Err(Error::Hypothesis(format!("gamma = {gamma} is outside the admissible window")));
    }
    require_lp_normalized(f, grid, r)?;
    let ext = gn_extremal(p, r, grid)?;
    let rg = r * gamma;
    let h_pf = lp_power(&ext.h, grid, rg);
    let i0 = (0..grid.n).max_by(|&a, &b| ext.h[a].total_cmp(&ext.h[b])).expect("non-empty grid");
    let x0 = grid.x(i0);
    let c_inf = gamma / (gamma - 1.0) * ext.h[i0].powf(r * (gamma - 1.0)) + rg / q * x0.abs().powf(q);
    let scaling_constant = h_pf - c_inf;

    let b = lp_power(f, grid, rg);
    let dp = gradient_lp_power(f, grid, p);
    let coef_b = gamma / (gamma - 1.0);
    let d = InputDigest::new("gagliardo_nirenberg").grid(grid).nums(f).num(p).num(r).finish();
    let mut reports = vec![IneqReport::new("gn_energy", coef_b * b, rg / p * dp - h_pf + c_inf, d.clone())?];

    let (ea, eb) = gn_scale_exponents(p, r, gamma);
    let phi = |s: f64| rg / p * (ea * s).exp() * dp - coef_b * (eb * s).exp() * b;
    let (_, phi_min) = golden_min(phi, -5.0, 5.0);
    reports.push(IneqReport::new("gn_scaled", scaling_constant, phi_min, d.clone())?);

    let theta = gn_theta(p, r, 1);
    let mut constant = None;
    if theta > 0.0 && theta < 1.0 {
        let ratio = |g: &[f64]| {
            lp_power(g, grid, r).powf(1.0 / r)
                / (gradient_lp_power(g, grid, p).powf(theta / p) * lp_power(g, grid, rg).powf((1.0 - theta) / rg))
        };
        let c = ratio(&ext.h);
        let lhs = lp_power(f, grid, r).powf(1.0 / r);
        let rhs = c * dp.powf(theta / p) * b.powf((1.0 - theta) / rg);
        reports.push(IneqReport::new("gn", lhs, rhs, d)?);
        constant = Some(c);
    }
    Ok(GnCheck { theta, scaling_constant, constant, reports })
}

/// Quantities shared by the two-density checks built on quadratic Young functions.
struct PairTerms {
    rel: f64,
    w2: f64,
    db: f64,
    i2: f64,
    digest: InputDigest,
}

fn pair_terms(tag: &str, rho0: &GridDensity, rho1: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<PairTerms> {
    pot.validate(&rho0.grid)?;
    Ok(PairTerms {
        rel: relative_energy(rho0, rho1, m, pot)?,
        w2: w2_distance(rho0, rho1),
        db: barycenter(rho0) - barycenter(rho1),
        i2: entropy_production_i2(rho0, m, pot)?,
        digest: InputDigest::new(tag).density(rho0).density(rho1).model(m).potentials(pot),
    })
}

/// General logarithmic Sobolev inequality with parameter `sigma`.
pub fn check_general_lsi(
    rho0: &GridDensity,
    rho1: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
    sigma: f64,
) -> Result<IneqReport> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let t = pair_terms("general_lsi", rho0, rho1, m, pot)?;
    let lhs = t.rel + 0.5 * (pot.lambda + pot.nu - 1.0 / sigma) * t.w2 * t.w2 - 0.5 * pot.nu * t.db * t.db;
    IneqReport::new("general_lsi", lhs, 0.5 * sigma * t.i2, t.digest.num(sigma).finish())
}

/// HWBI inequality, plus the HWI form when there is no interaction.
pub fn check_hwbi(rho0: &GridDensity, rho1: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<Vec<IneqReport>> {
    let t = pair_terms("hwbi", rho0, rho1, m, pot)?;
    let d = t.digest.finish();
    let root = t.w2 * t.i2.max(0.0).sqrt();
    let rhs = root - 0.5 * (pot.lambda + pot.nu) * t.w2 * t.w2 + 0.5 * pot.nu * t.db * t.db;
    let mut out = vec![IneqReport::new("hwbi", t.rel, rhs, d.clone())?];
    if !pot.has_interaction() {
        out.push(IneqReport::new("hwi", t.rel, root - 0.5 * pot.lambda * t.w2 * t.w2, d)?);
    }
    Ok(out)
}

/// Log-Sobolev inequalities with interaction: the barycentric form always,
/// the matched-barycentre form when `|b0 - b1| <= 1e-8`, and the convex-`W`
/// form when `nu >= 0` and `lambda > 0`.
pub fn check_lsi_interaction(
    rho0: &GridDensity,
    rho1: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
) -> Result<Vec<IneqReport>> {
    let k = mixed_modulus(pot, &rho0.grid)?;
    let t = pair_terms("lsi_interaction", rho0, rho1, m, pot)?;
    let d = t.digest.finish();
    let bound = t.i2 / (2.0 * k);
    let mut out = vec![IneqReport::new("lsi_interaction", t.rel - 0.5 * pot.nu * t.db * t.db, bound, d.clone())?];
    if t.db.abs() <= BARYCENTRE_MATCH {
        out.push(IneqReport::new("lsi_interaction_matched", t.rel, bound, d.clone())?);
    }
    if pot.nu >= 0.0 && pot.lambda > 0.0 {
        out.push(IneqReport::new("lsi_interaction_convex", t.rel, t.i2 / (2.0 * pot.lambda), d)?);
    }
    Ok(out)
}

/// Transport-entropy inequalities against the stationary density `rho_U`.
pub fn check_talagrand(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<Vec<IneqReport>> {
    let k = mixed_modulus(pot, &rho.grid)?;
    let reference = solve_reference(m, pot, None, &rho.grid)?.density;
    let rel = relative_energy(rho, &reference, m, pot)?;
    let w2 = w2_distance(rho, &reference);
    let db = barycenter(rho) - barycenter(&reference);
    let d = InputDigest::new("talagrand").density(rho).model(m).potentials(pot).finish();
    let mut out = vec![IneqReport::new("talagrand", 0.5 * k * w2 * w2 - 0.5 * pot.nu * db * db, rel, d.clone())?];
    if db.abs() <= BARYCENTRE_MATCH {
        out.push(IneqReport::new("talagrand_matched", w2, (2.0 * rel.max(0.0) / k).sqrt(), d.clone())?);
    }
    if pot.nu >= 0.0 && pot.lambda > 0.0 {
        out.push(IneqReport::new("talagrand_convex", w2, (2.0 * rel.max(0.0) / pot.lambda).sqrt(), d.clone())?);
    }
    if matches!(m.kind, EntropyKind::Boltzmann) && !pot.has_interaction() && pot.lambda > 0.0 {
        require_positive(&reference, m)?;
        let kl: Vec<f64> = rho
            .values
            .iter()
            .zip(&reference.values)
            .map(|(&r, &u)| if r > 0.0 { r * (r / u).ln() } else { 0.0 })
            .collect();
        let kl = trap(&kl, &rho.grid);
        out.push(IneqReport::new("talagrand_original", w2, (2.0 / pot.lambda * kl.max(0.0)).sqrt(), d)?);
    }
    Ok(out)
}

fn require_tilt(f: &[f64], rho_u: &GridDensity) -> Result<()> {
    if f.len() != rho_u.grid.n {
        return Err(Error::Dimension(format!("array has {} entries, grid has {}", f.len(), rho_u.grid.n)));
    }
    if let Some(i) = f.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Domain(format!("tilt is negative at node {i}")));
    }
    let mass = trap(&f.iter().zip(&rho_u.values).map(|(a, b)| a * b).collect::<Vec<_>>(), &rho_u.grid);
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Hypothesis(format!("need int f rho_U = 1, got {mass}")));
    }
    Ok(())
}

/// Inequalities for a tilt `f` of the Gibbs density `rho_U = exp(-U)/Z`:
/// the `sigma` form, the HWI form and the log-Sobolev inequality for `g = sqrt(f)`.
/// Without `sigma` the choice `1/lambda` is used.
pub fn check_boltzmann_lsi(grid: &Grid1D, f: &[f64], pot: &PotentialPair, sigma: Option<f64>) -> Result<Vec<IneqReport>> {
    pot.validate(grid)?;
    let rho_u = gibbs(&pot.v, grid)?;
    require_tilt(f, &rho_u)?;
    let mu = pot.lambda;
    let sigma = match sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::Domain(format!("sigma must be > 0, got {s}"))),
        None => 1.0 / positive_modulus(pot, grid)?,
    };
    let wr = |g: &[f64]| trap(&g.iter().zip(&rho_u.values).map(|(a, b)| a * b).collect::<Vec<_>>(), grid);
    let ent = wr(&f.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).collect::<Vec<_>>());
    let fisher_density: Vec<f64> = if f.iter().all(|&v| v > 0.0) {
        let lf: Vec<f64> = f.iter().map(|v| v.ln()).collect();
        grad(&lf, grid.h).iter().zip(f).map(|(d, v)| v * d * d).collect()
    } else {
        grad(f, grid.h).iter().zip(f).map(|(d, &v)| if v > 0.0 { d * d / v } else { 0.0 }).collect()
    };
    let fisher = wr(&fisher_density);
    let tilted = normalize(&f.iter().zip(&rho_u.values).map(|(a, b)| a * b).collect::<Vec<_>>(), grid, 0.0)?;
    let w2 = w2_distance(&tilted, &rho_u);
    let d = InputDigest::new("boltzmann_lsi").grid(grid).nums(f).potentials(&pot.clone()).num(sigma).finish();
    let mut out = vec![IneqReport::new(
        "boltzmann_hwi_sigma",
        ent + 0.5 * (mu - 1.0 / sigma) * w2 * w2,
        0.5 * sigma * fisher,
        d.clone(),
    )?];
    if mu > 0.0 {
        out.push(IneqReport::new("otto_villani_hwi", ent, w2 * fisher.sqrt() - 0.5 * mu * w2 * w2, d.clone())?);
        let g: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
        let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
        let lhs = wr(&g2.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).collect::<Vec<_>>());
        let dg = grad(&g, grid.h);
        let rhs = 2.0 / mu * wr(&dg.iter().map(|v| v * v).collect::<Vec<_>>());
        out.push(IneqReport::new("gross_lsi", lhs, rhs, d)?);
    }
    Ok(out)
}

/// Poincare inequality for the Gibbs density; `f` is centred first when its
/// mean exceeds `1e-8`.
pub fn check_poincare(grid: &Grid1D, f: &[f64], pot: &PotentialPair) -> Result<IneqReport> {
    let mu = positive_modulus(pot, grid)?;
    let rho_u = gibbs(&pot.v, grid)?;
    if f.len() != grid.n {
        return Err(Error::Dimension(format!("array has {} entries, grid has {}", f.len(), grid.n)));
    }
    let wr = |g: &[f64]| trap(&g.iter().zip(&rho_u.values).map(|(a, b)| a * b).collect::<Vec<_>>(), grid);
    let mean = wr(f);
    let centred = mean.abs() > NORMALIZATION_TOL;
    let f: Vec<f64> = if centred { f.iter().map(|v| v - mean).collect() } else { f.to_vec() };
    let lhs = wr(&f.iter().map(|v| v * v).collect::<Vec<_>>());
    let rhs = wr(&grad(&f, grid.h).iter().map(|v| v * v).collect::<Vec<_>>()) / mu;
    let d = InputDigest::new("poincare").grid(grid).nums(&f).potentials(pot).finish();
    let r = IneqReport::new("poincare", lhs, rhs, d)?;
    Ok(if centred { r.with_note(format!("input centred (mean was {mean:.3e})")) } else { r })
}

/// Mass of `[lo, hi]` under `exp(-U)/Z`, with `Z` taken over the grid interval.
pub fn gibbs_mass(u: &ScalarFn, grid: &Grid1D, lo: f64, hi: f64) -> Result<f64> {
    const PANELS: usize = 1 << 16;
    let umin = grid.sample(|x| u.eval(x)).into_iter().fold(f64::INFINITY, f64::min);
    if !umin.is_finite() {
        return Err(Error::Numeric("potential is not finite on the grid".into()));
    }
    let dens = |x: f64| (umin - u.eval(x)).exp();
    let z = simpson(dens, grid.a, grid.b, PANELS);
    let (l, h) = (lo.max(grid.a), hi.min(grid.b));
    if h <= l {
        return Ok(0.0);
    }
    Ok(simpson(dens, l, h, PANELS) / z)
}

/// Gaussian-type concentration for `B = [lo, hi]` and its `eps`-neighbourhood.
pub fn check_concentration(grid: &Grid1D, lo: f64, hi: f64, eps: f64, pot: &PotentialPair) -> Result<IneqReport> {
    let mu = positive_modulus(pot, grid)?;
    if !(lo <= hi) || !(eps >= 0.0) {
        return Err(Error::Domain(format!("need lo <= hi and eps >= 0, got [{lo}, {hi}], {eps}")));
    }
    let gb = gibbs_mass(&pot.v, grid, lo, hi)?;
    if !(gb > 0.0) {
        return Err(Error::Domain("B has zero mass".into()));
    }
    let threshold = (2.0 / mu * (1.0 / gb).ln()).sqrt();
    if eps < threshold - 1e-12 {
        return Err(Error::Hypothesis(format!("eps = {eps} is below the threshold {threshold}")));
    }
    let bound = 1.0 - (-0.5 * mu * (eps - threshold).max(0.0).powi(2)).exp();
    let ge = gibbs_mass(&pot.v, grid, lo - eps, hi + eps)?;
    let d = InputDigest::new("concentration").grid(grid).num(lo).num(hi).num(eps).potentials(pot).finish();
    IneqReport::new("concentration", bound, ge, d)
}

/// Which energy/entropy-production pairing a duality check uses.
#[derive(Debug, Clone)]
pub enum DualityVariant {
    /// `-H^F_c(rho) <= -H^{F + n P_F}(f) + int f c*(-grad F'(f))`, with `f` a density.
    General { model: EntropyModel, young: YoungPair },
    /// Boltzmann entropy, `psi = |x|^p`, `c = (p - 1)|mu x|^q`.
    PLog { p: f64, mu: f64 },
    /// Power entropy with `gamma = 1/r + 1/q`, `psi = |x|^r`, `c = (r gamma / q)|mu x|^q`.
    Gn { p: f64, r: f64, mu: f64 },
}

/// Energy-entropy production duality `J(rho) <= I(f)` (one dimension).
pub fn check_duality(rho: &GridDensity, f: &[f64], variant: &DualityVariant) -> Result<IneqReport> {
    let grid = &rho.grid;
    if f.len() != grid.n {
        return Err(Error::Dimension(format!("array has {} entries, grid has {}", f.len(), grid.n)));
    }
    let moment = |q: f64| rho.integrate_with(|x, r| r * x.abs().powf(q));
    match variant {
        DualityVariant::General { model, young } => {
            let rho0 = GridDensity { grid: *grid, values: f.to_vec(), floor: 0.0 };
            if (rho0.mass() - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Hypothesis(format!("f must be a probability density, mass {}", rho0.mass())));
            }
            let j = -(internal_energy(rho, model)? + potential_energy(rho, &young.c));
            let (icstar, _) = entropy_production_icstar(&rho0, model, &PotentialPair::zero(), young)?;
            let i = -(internal_energy(&rho0, model)? + model.n() * pressure_integral(&rho0, model)) + icstar;
            let d = InputDigest::new("duality_general").density(rho).nums(f).model(model).young(young);
            IneqReport::new("duality_general", j, i, d.finish())
        }
        DualityVariant::PLog { p, mu } => {
            let (p, mu) = (*p, *mu);
            check_duality_params(p, mu)?;
            require_lp_normalized(f, grid, p)?;
            let q = conjugate_exponent(p);
            let j = -entropy_of(&rho.values, grid) - (p - 1.0) * mu.powf(q) * moment(q);
            let fp: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
            let i = -entropy_of(&fp, grid) + gradient_lp_power(f, grid, p) / mu.powf(p) - 1.0;
            let d = InputDigest::new("duality_plog").density(rho).nums(f).num(p).num(mu);
            IneqReport::new("duality_plog", j, i, d.finish())
        }
        DualityVariant::Gn { p, r, mu } => {
            let (p, r, mu) = (*p, *r, *mu);
            check_duality_params(p, mu)?;
            let q = conjugate_exponent(p);
            let gamma = 1.0 / r + 1.0 / q;
            if !(r > 0.0) || (r - p).abs() < 1e-12 || !(gamma > 0.0) || (gamma - 1.0).abs() < 1e-12 {
                return Err(Error::Hypothesis(format!("exponents p = {p}, r = {r} are outside the window")));
            }
            require_lp_normalized(f, grid, r)?;
            let rg = r * gamma;
            let pg = trap(&rho.values.iter().map(|v| v.powf(gamma)).collect::<Vec<_>>(), grid);
            let j = -pg / (gamma - 1.0) - rg * mu.powf(q) / q * moment(q);
            let i = -gamma / (gamma - 1.0) * lp_power(f, grid, rg) + rg / (p * mu.powf(p)) * gradient_lp_power(f, grid, p);
            let d = InputDigest::new("duality_gn").density(rho).nums(f).num(p).num(r).num(mu);
            IneqReport::new("duality_gn", j, i, d.finish())
        }
    }
}

fn check_duality_params(p: f64, mu: f64) -> Result<()> {
    if !(p > 1.0) || !(mu > 0.0) {
        return Err(Error::Domain(format!("need p > 1 and mu > 0, got {p}, {mu}")));
    }
    Ok(())
}
