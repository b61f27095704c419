//! Internal-energy densities, potentials and Young pairs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::measures::Grid1D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyKind {
    /// `F(x) = x ln x`
    Boltzmann,
    /// `F(x) = x^gamma / (gamma - 1)`
    Power { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyModel {
    #[serde(flatten)]
    pub kind: EntropyKind,
    #[serde(default = "one")]
    pub dim_n: u32,
}

fn one() -> u32 {
    1
}

impl EntropyModel {
    pub fn boltzmann() -> Self {
        Self { kind: EntropyKind::Boltzmann, dim_n: 1 }
    }

    /// Power law with exponent `gamma`; `gamma = 1` is rejected.
    pub fn power(gamma: f64) -> Result<Self> {
        let m = Self { kind: EntropyKind::Power { gamma }, dim_n: 1 };
        m.validate()?;
        Ok(m)
    }

    pub fn with_dim(mut self, n: u32) -> Self {
        self.dim_n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_n == 0 {
            return Err(Error::Domain("dim_n must be positive".into()));
        }
        if let EntropyKind::Power { gamma } = self.kind {
            if !gamma.is_finite() || gamma <= 0.0 || gamma == 1.0 {
                return Err(Error::Domain(format!("power exponent must be positive and != 1, got {gamma}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> f64 {
        self.dim_n as f64
    }

    /// True when `F'` blows up at zero, so entropy production needs `rho > 0`.
    pub fn singular_at_zero(&self) -> bool {
        match self.kind {
            EntropyKind::Boltzmann => true,
            EntropyKind::Power { gamma } => gamma < 1.0,
        }
    }

    pub fn eval_f(&self, x: f64) -> Result<f64> {
        nonneg(x)?;
        Ok(self.f(x))
    }

    pub fn eval_df(&self, x: f64) -> Result<f64> {
        positive(x)?;
        Ok(self.df(x))
    }

    pub fn eval_pf(&self, x: f64) -> Result<f64> {
        nonneg(x)?;
        Ok(self.pf(x))
    }

    pub fn eval_gf(&self, x: f64) -> Result<f64> {
        positive(x)?;
        Ok(self.gf(x))
    }

    #[inline]
    pub(crate) fn f(&self, x: f64) -> f64 {
        match self.kind {
            EntropyKind::Boltzmann => {
                if x > 0.0 {
                    x * x.ln()
                } else {
                    0.0
                }
            }
            EntropyKind::Power { gamma } => x.powf(gamma) / (gamma - 1.0),
        }
    }

    #[inline]
    pub(crate) fn df(&self, x: f64) -> f64 {
        match self.kind {
            EntropyKind::Boltzmann => 1.0 + x.ln(),
            EntropyKind::Power { gamma } => gamma / (gamma - 1.0) * x.powf(gamma - 1.0),
        }
    }

    /// Pressure `x F'(x) - F(x)`.
    #[inline]
    pub(crate) fn pf(&self, x: f64) -> f64 {
        match self.kind {
            EntropyKind::Boltzmann => x,
            EntropyKind::Power { gamma } => x.powf(gamma),
        }
    }

    /// `P_F'(x) = x F''(x)`, the diffusivity of the flow.
    #[inline]
    pub(crate) fn dpf(&self, x: f64) -> f64 {
        match self.kind {
            EntropyKind::Boltzmann => 1.0,
            EntropyKind::Power { gamma } => gamma * x.powf(gamma - 1.0),
        }
    }

    /// `(1 - n) F(x) + n x F'(x)`.
    #[inline]
    pub(crate) fn gf(&self, x: f64) -> f64 {
        let n = self.n();
        (1.0 - n) * self.f(x) + n * x * self.df(x)
    }

    /// Inverse of `F'` extended by zero below the range of `F'`.
    pub(crate) fn inv_df(&self, s: f64) -> f64 {
        match self.kind {
            EntropyKind::Boltzmann => (s - 1.0).exp(),
            EntropyKind::Power { gamma } => {
                let t = (gamma - 1.0) / gamma * s;
                if gamma > 1.0 {
                    if s <= 0.0 {
                        0.0
                    } else {
                        t.powf(1.0 / (gamma - 1.0))
                    }
                } else if s >= 0.0 {
                    f64::INFINITY
                } else {
                    t.powf(1.0 / (gamma - 1.0))
                }
            }
        }
    }

    /// Sup of the range of `F'` on `(0, inf)`.
    pub(crate) fn df_sup(&self) -> f64 {
        match self.kind {
            EntropyKind::Power { gamma } if gamma < 1.0 => 0.0,
            _ => f64::INFINITY,
        }
    }
}

fn nonneg(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be >= 0, got {x}")))
    }
}

fn positive(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("derivative needs x > 0, got {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub pass: bool,
    pub min_second_diff: f64,
    pub max_first_diff: f64,
}

/// Samples `A(x) = x^n F(x^-n)` on a log lattice over `[1e-3, 1e3]` and checks
/// that it is convex and non-increasing.
pub fn admissibility_check(m: &EntropyModel) -> Admissibility {
    admissibility_of(|x| m.f(x), m.dim_n)
}

/// Same check for an arbitrary internal-energy density.
pub fn admissibility_of(f: impl Fn(f64) -> f64, n: u32) -> Admissibility {
    const POINTS: usize = 601;
    let n = n as f64;
    let xs: Vec<f64> = (0..POINTS).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / (POINTS - 1) as f64)).collect();
    let a: Vec<f64> = xs.iter().map(|&x| x.powf(n) * f(x.powf(-n))).collect();
    let mut max_first = f64::NEG_INFINITY;
    let mut slopes = Vec::with_capacity(POINTS - 1);
    for k in 0..POINTS - 1 {
        max_first = max_first.max(a[k + 1] - a[k]);
        slopes.push((a[k + 1] - a[k]) / (xs[k + 1] - xs[k]));
    }
    let mut min_second = f64::INFINITY;
    for k in 0..slopes.len() - 1 {
        let scale = slopes[k].abs().max(slopes[k + 1].abs()).max(1.0);
        min_second = min_second.min((slopes[k + 1] - slopes[k]) / scale);
    }
    Admissibility {
        pass: min_second >= -1e-9 && max_first <= 1e-9,
        min_second_diff: min_second,
        max_first_diff: max_first,
    }
}

/// A named real function, either parsed or supplied as a closure.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    zero: bool,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ScalarFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), zero: false, f: Arc::new(f) }
    }

    pub fn zero() -> Self {
        Self { label: "0".into(), zero: true, f: Arc::new(|_| 0.0) }
    }

    pub fn from_expr(e: Expr) -> Self {
        let zero = e.is_zero();
        Self { label: e.source().to_string(), zero, f: Arc::new(move |x| e.eval(x)) }
    }

    pub fn parse(src: &str) -> Result<Self> {
        Ok(Self::from_expr(Expr::parse(src)?))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

/// True iff the smallest interior central second difference of `f` on the
/// grid is at least `m - 1e-6`.
pub fn modulus_check(f: &ScalarFn, m: f64, grid: &Grid1D) -> bool {
    min_second_difference(f, grid) >= m - 1e-6
}

pub fn min_second_difference(f: &ScalarFn, grid: &Grid1D) -> f64 {
    let v = grid.sample(|x| f.eval(x));
    let h2 = grid.h * grid.h;
    (1..grid.n - 1).map(|i| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2).fold(f64::INFINITY, f64::min)
}

/// Confinement `V` with modulus `lambda` and even interaction `W` with modulus `nu`.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub v: ScalarFn,
    pub lambda: f64,
    pub w: ScalarFn,
    pub nu: f64,
}

impl PotentialPair {
    pub fn new(v: ScalarFn, lambda: f64, w: ScalarFn, nu: f64) -> Self {
        Self { v, lambda, w, nu }
    }

    pub fn zero() -> Self {
        Self::new(ScalarFn::zero(), 0.0, ScalarFn::zero(), 0.0)
    }

    /// `V = lambda x^2 / 2`, `W = 0`.
    pub fn quadratic(lambda: f64) -> Self {
        Self::new(ScalarFn::new(format!("{lambda}*x^2/2"), move |x| 0.5 * lambda * x * x), lambda, ScalarFn::zero(), 0.0)
    }

    pub fn has_interaction(&self) -> bool {
        !self.w.is_zero()
    }

    /// Checks evenness of `W` and both moduli. `V` is tested on the grid and
    /// `W` on the grid of pairwise offsets.
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        if !modulus_check(&self.v, self.lambda, grid) {
            return Err(Error::Hypothesis(format!(
                "V'' >= {} fails (min second difference {})",
                self.lambda,
                min_second_difference(&self.v, grid)
            )));
        }
        if self.has_interaction() {
            let span = grid.b - grid.a;
            let offsets = Grid1D::new(-span, span, 2 * grid.n - 1)?;
            for x in offsets.nodes() {
                let (p, m) = (self.w.eval(x), self.w.eval(-x));
                if (p - m).abs() > 1e-12 * p.abs().max(1.0) {
                    return Err(Error::Hypothesis(format!("W is not even at x = {x}")));
                }
            }
            if !modulus_check(&self.w, self.nu, &offsets) {
                return Err(Error::Hypothesis(format!(
                    "W'' >= {} fails (min second difference {})",
                    self.nu,
                    min_second_difference(&self.w, &offsets)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YoungKind {
    /// `c(x) = x^2 / (2 sigma)`
    QuadraticSigma { sigma: f64 },
    /// `c(x) = (p - 1)|x|^q`
    PowerPls { p: f64 },
    /// `c(x) = (r_gamma / q)|x|^q`
    PowerGn { p: f64, r_gamma: f64 },
}

/// Young function `c`, its conjugate `c*` and the derivative of `c*`.
#[derive(Debug, Clone)]
pub struct YoungPair {
    pub c: ScalarFn,
    pub c_star: ScalarFn,
    pub dc_star: ScalarFn,
    /// Homogeneity degree of `c*`, when it has one.
    pub p: Option<f64>,
    pub q: Option<f64>,
}

pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

pub fn make_young(kind: YoungKind) -> Result<YoungPair> {
    match kind {
        YoungKind::QuadraticSigma { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
            }
            Ok(YoungPair {
                c: ScalarFn::new(format!("x^2/(2*{sigma})"), move |x| x * x / (2.0 * sigma)),
                c_star: ScalarFn::new(format!("{sigma}*y^2/2"), move |y| 0.5 * sigma * y * y),
                dc_star: ScalarFn::new(format!("{sigma}*y"), move |y| sigma * y),
                p: Some(2.0),
                q: Some(2.0),
            })
        }
        YoungKind::PowerPls { p } => {
            check_p(p)?;
            let q = conjugate_exponent(p);
            let pp = p.powf(p);
            Ok(YoungPair {
                c: ScalarFn::new(format!("({p}-1)*|x|^{q}"), move |x| (p - 1.0) * x.abs().powf(q)),
                c_star: ScalarFn::new(format!("|y|^{p}/{p}^{p}"), move |y| y.abs().powf(p) / pp),
                dc_star: ScalarFn::new(format!("d|y|^{p}/{p}^{p}"), move |y| p * y.signum() * y.abs().powf(p - 1.0) / pp),
                p: Some(p),
                q: Some(q),
            })
        }
        YoungKind::PowerGn { p, r_gamma } => {
            check_p(p)?;
            if !(r_gamma > 0.0 && r_gamma.is_finite()) {
                return Err(Error::Domain(format!("r_gamma must be > 0, got {r_gamma}")));
            }
            let q = conjugate_exponent(p);
            let k = p * r_gamma.powf(p - 1.0);
            Ok(YoungPair {
                c: ScalarFn::new(format!("({r_gamma}/{q})*|x|^{q}"), move |x| r_gamma / q * x.abs().powf(q)),
                c_star: ScalarFn::new(format!("|y|^{p}/{k}"), move |y| y.abs().powf(p) / k),
                dc_star: ScalarFn::new(format!("d|y|^{p}/{k}"), move |y| p * y.signum() * y.abs().powf(p - 1.0) / k),
                p: Some(p),
                q: Some(q),
            })
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must be > 1, got {p}")));
    }
    Ok(())
}

impl YoungPair {
    /// Young pair for a user-supplied `c`; the conjugate is numeric.
    pub fn numeric(c: ScalarFn) -> Result<Self> {
        if c.eval(0.0).abs() > 1e-12 {
            return Err(Error::Hypothesis(format!("c(0) = {} != 0", c.eval(0.0))));
        }
        for z in [1e2, -1e2, 1e3, -1e3] {
            if c.eval(z) / z.abs() <= c.eval(z / 10.0) / (z.abs() / 10.0) {
                return Err(Error::Hypothesis(format!("c does not look superlinear near {z}")));
            }
        }
        let (c1, c2) = (c.clone(), c.clone());
        let label = c.label().to_string();
        Ok(Self {
            c_star: ScalarFn::new(format!("({label})*"), move |y| numeric_conjugate(&c1, y).unwrap_or(f64::NAN)),
            dc_star: ScalarFn::new(format!("d({label})*"), move |y| {
                let e = 1e-4 * y.abs().max(1.0);
                let f = |t| numeric_conjugate(&c2, t).unwrap_or(f64::NAN);
                (f(y + e) - f(y - e)) / (2.0 * e)
            }),
            c,
            p: None,
            q: None,
        })
    }

    /// `c(mu x)` with conjugate `c*(y / mu)`.
    pub fn scaled(&self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("scale must be > 0, got {mu}")));
        }
        let (c, cs, dcs) = (self.c.clone(), self.c_star.clone(), self.dc_star.clone());
        Ok(Self {
            c: ScalarFn::new(format!("c({mu}x)"), move |x| c.eval(mu * x)),
            c_star: ScalarFn::new(format!("c*(y/{mu})"), move |y| cs.eval(y / mu)),
            dc_star: ScalarFn::new(format!("dc*(y/{mu})"), move |y| dcs.eval(y / mu) / mu),
            p: self.p,
            q: self.q,
        })
    }

    /// Largest deviation from `c*(t y) = t^p c*(y)` for `t` in {0.5, 2} on a
    /// small lattice; `None` when no degree is declared.
    pub fn homogeneity_defect(&self) -> Option<f64> {
        let p = self.p?;
        let mut worst = 0.0f64;
        for k in -6..=6 {
            let y = 0.5 * k as f64;
            for t in [0.5, 2.0] {
                let lhs = self.c_star.eval(t * y);
                let rhs = t.powf(p) * self.c_star.eval(y);
                worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
            }
        }
        Some(worst)
    }
}

/// `sup_z { y z - c(z) }` by lattice search followed by two local refinements.
pub fn numeric_conjugate(c: &ScalarFn, y: f64) -> Result<f64> {
    const POINTS: usize = 2001;
    let mut half = 1.0;
    loop {
        let (k, _) = lattice_argmax(c, y, -half, half, POINTS);
        if k > 0 && k < POINTS - 1 {
            break;
        }
        half *= 2.0;
        if half > 1e6 {
            return Err(Error::Window(format!("no interior maximiser for y = {y} within |z| <= 1e6")));
        }
    }
    let (mut lo, mut hi) = (-half, half);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..3 {
        let (k, v) = lattice_argmax(c, y, lo, hi, POINTS);
        best = v;
        let dz = (hi - lo) / (POINTS - 1) as f64;
        let z = lo + k as f64 * dz;
        lo = z - dz;
        hi = z + dz;
    }
    Ok(best)
}

fn lattice_argmax(c: &ScalarFn, y: f64, lo: f64, hi: f64, points: usize) -> (usize, f64) {
    let dz = (hi - lo) / (points - 1) as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..points {
        let z = lo + k as f64 * dz;
        let v = y * z - c.eval(z);
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pressure_and_gf_closed_forms() {
        let b = EntropyModel::boltzmann();
        for x in [0.1, 1.0, 3.7] {
            assert!((b.eval_pf(x).unwrap() - x).abs() < 1e-15);
        }
        let p2 = EntropyModel::power(2.0).unwrap();
        for x in [0.1, 1.0, 3.7] {
            let pf = x * p2.df(x) - p2.f(x);
            assert!((p2.eval_pf(x).unwrap() - x * x).abs() < 1e-13);
            assert!((pf - x * x).abs() < 1e-13);
        }
        for n in [1, 2, 5] {
            let b = EntropyModel::boltzmann().with_dim(n);
            let x = 0.8;
            assert!((b.eval_gf(x).unwrap() - (x * x.ln() + n as f64 * x)).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        let b = EntropyModel::boltzmann();
        assert_eq!(b.eval_f(0.0).unwrap(), 0.0);
        assert!(matches!(b.eval_f(-1.0), Err(Error::Domain(_))));
        assert!(matches!(b.eval_df(0.0), Err(Error::Domain(_))));
        assert!(EntropyModel::power(1.0).is_err());
    }

    #[test]
    fn inverse_derivative() {
        for m in [EntropyModel::boltzmann(), EntropyModel::power(2.0).unwrap(), EntropyModel::power(0.75).unwrap()] {
            for x in [0.01, 0.5, 2.0] {
                assert!((m.inv_df(m.df(x)) - x).abs() < 1e-12 * x.max(1.0));
            }
        }
    }

    #[test]
    fn admissibility_examples() {
        assert!(admissibility_check(&EntropyModel::boltzmann()).pass);
        assert!(admissibility_check(&EntropyModel::power(2.0).unwrap()).pass);
        let weak = EntropyModel::power(0.4).unwrap();
        // gamma = 0.4 sits above 1 - 1/n for n = 1 and below it for n = 2
        assert!(admissibility_check(&weak).pass);
        assert!(!admissibility_check(&weak.with_dim(2)).pass);
        assert!(!admissibility_of(|x| if x > 0.0 { -x * x.ln() } else { 0.0 }, 1).pass);
    }

    #[test]
    fn modulus_examples() {
        let g = Grid1D::new(-3.0, 3.0, 601).unwrap();
        let v = ScalarFn::parse("x^2/2").unwrap();
        assert!(modulus_check(&v, 1.0, &g));
        assert!(!modulus_check(&v, 1.1, &g));
        assert!(modulus_check(&ScalarFn::parse("x^4").unwrap(), 0.0, &g));
    }

    #[test]
    fn young_pairs_closed_forms() {
        let q = make_young(YoungKind::QuadraticSigma { sigma: 1.0 }).unwrap();
        assert_eq!(q.c.eval(3.0), 4.5);
        assert_eq!(q.c_star.eval(3.0), 4.5);
        let pls = make_young(YoungKind::PowerPls { p: 2.0 }).unwrap();
        assert_eq!(pls.c.eval(1.5), 2.25);
        assert_eq!(pls.c_star.eval(2.0), 1.0);
        for kind in [
            YoungKind::QuadraticSigma { sigma: 0.7 },
            YoungKind::PowerPls { p: 3.0 },
            YoungKind::PowerGn { p: 2.0, r_gamma: 3.0 },
        ] {
            let y = make_young(kind).unwrap();
            assert!(y.homogeneity_defect().unwrap() < 1e-10);
            for k in -6..=6 {
                let t = 0.5 * k as f64;
                let gap = (numeric_conjugate(&y.c, t).unwrap() - y.c_star.eval(t)).abs();
                assert!(gap < 1e-6, "{kind:?} at {t}: {gap}");
            }
        }
        assert!(make_young(YoungKind::PowerPls { p: 1.0 }).is_err());
        assert!(make_young(YoungKind::QuadraticSigma { sigma: 0.0 }).is_err());
    }

    #[test]
    fn numeric_conjugate_examples() {
        let half = ScalarFn::parse("x^2/2").unwrap();
        assert!((numeric_conjugate(&half, 3.0).unwrap() - 4.5).abs() < 1e-6);
        let sq = ScalarFn::parse("x^2").unwrap();
        assert!((numeric_conjugate(&sq, 2.0).unwrap() - 1.0).abs() < 1e-6);
        let c = ScalarFn::new("x^4/4+x^2/2", |x| x.powi(4) / 4.0 + x * x / 2.0);
        let cs = YoungPair::numeric(c.clone()).unwrap().c_star;
        for x in [-1.0, 0.5, 2.0] {
            assert!((numeric_conjugate(&cs, x).unwrap() - c.eval(x)).abs() < 1e-5);
        }
        let lin = ScalarFn::parse("abs(x)").unwrap();
        assert!(matches!(numeric_conjugate(&lin, 2.0), Err(Error::Window(_))));
    }

    #[test]
    fn scaled_pair_matches_direct_conjugate() {
        let y = make_young(YoungKind::PowerPls { p: 2.0 }).unwrap().scaled(1.7).unwrap();
        for t in [-2.0, 0.3, 1.1] {
            assert!((numeric_conjugate(&y.c, t).unwrap() - y.c_star.eval(t)).abs() < 1e-6);
        }
    }
}
