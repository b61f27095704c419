//! Explicit finite-volume solver for `d rho/dt = div(rho grad(F'(rho) + V + W * rho))`.
//!
//! Cells are centred at the grid nodes with widths equal to the trapezoid
//! weights, so the scheme conserves the same mass the quadrature measures.
//! The face velocity is `-(xi_{i+1} - xi_i)/h` and the face density is taken
//! upwind. With the trapezoid discretization of the free energy `H_h` one gets
//! exactly `dH_h/dt = -sum_faces rho_up (xi_{i+1} - xi_i)^2 / h`, the discrete
//! dissipation recorded in the trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{convolve_table, entropy_production_i2, kernel_table, relative_energy};
use crate::measures::{barycenter, grad, trapezoid_weights, Grid1D, GridDensity};
use crate::models::{EntropyModel, PotentialPair};
use crate::stationary::{solve_reference, solve_reference_from};
use crate::transport::w2_distance;

/// Safety factor in the diffusive and advective time-step bounds.
pub const CFL: f64 = 0.4;
/// Fraction of a cell's content its outflow may remove in one step.
pub const POSITIVITY_MARGIN: f64 = 0.9;

/// Precomputed data for repeated steps on one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    model: EntropyModel,
    grid: Grid1D,
    widths: Vec<f64>,
    v: Vec<f64>,
    kernel: Option<Vec<f64>>,
}

impl Stepper {
    pub fn new(m: &EntropyModel, pot: &PotentialPair, grid: &Grid1D) -> Result<Self> {
        m.validate()?;
        let v = grid.sample(|x| pot.v.eval(x));
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("V is not finite at x = {}", grid.x(i))));
        }
        Ok(Self {
            model: m.clone(),
            grid: *grid,
            widths: trapezoid_weights(grid),
            v,
            kernel: pot.has_interaction().then(|| kernel_table(&pot.w, grid)),
        })
    }

    fn check_grid(&self, rho: &GridDensity) -> Result<()> {
        if rho.grid != self.grid {
            return Err(Error::Dimension("density grid differs from the stepper grid".into()));
        }
        Ok(())
    }

    fn field(&self, rho: &GridDensity) -> Vec<f64> {
        match &self.kernel {
            Some(k) => {
                let conv = convolve_table(rho, k);
                self.v.iter().zip(conv).map(|(a, b)| a + b).collect()
            }
            None => self.v.clone(),
        }
    }

    /// `xi = F'(rho) + V + W * rho`; empty nodes carry `V + W * rho` only.
    pub fn chemical(&self, rho: &GridDensity) -> Result<Vec<f64>> {
        self.check_grid(rho)?;
        if self.model.singular_at_zero() {
            if let Some(i) = rho.values.iter().position(|&r| !(r > 0.0)) {
                return Err(Error::Positivity(format!("rho vanishes at node {i}")));
            }
        }
        let field = self.field(rho);
        Ok(rho.values.iter().zip(field).map(|(&r, u)| if r > 0.0 { self.model.df(r) + u } else { u }).collect())
    }

    /// `min(CFL h^2 / max P_F'(rho), CFL h / max |grad(V + W * rho)|)`, further
    /// capped so that no cell loses more than [`POSITIVITY_MARGIN`] of its mass.
    pub fn dt_max(&self, rho: &GridDensity) -> f64 {
        let h = self.grid.h;
        let field = self.field(rho);
        let diff = rho.values.iter().filter(|&&r| r > 0.0).map(|&r| self.model.dpf(r)).fold(0.0, f64::max);
        let adv = grad(&field, h).iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let mut dt = f64::INFINITY;
        if diff > 0.0 {
            dt = dt.min(CFL * h * h / diff);
        }
        if adv > 0.0 {
            dt = dt.min(CFL * h / adv);
        }
        if let Ok(xi) = self.chemical(rho) {
            let n = self.grid.n;
            for i in 0..n {
                let left = if i > 0 { (xi[i] - xi[i - 1]).max(0.0) } else { 0.0 };
                let right = if i + 1 < n { (xi[i] - xi[i + 1]).max(0.0) } else { 0.0 };
                if left + right > 0.0 {
                    dt = dt.min(POSITIVITY_MARGIN * self.widths[i] * h / (left + right));
                }
            }
        }
        dt
    }

    /// Face fluxes `J_{i+1/2}` and the discrete dissipation.
    fn fluxes(&self, rho: &GridDensity) -> Result<(Vec<f64>, f64)> {
        let xi = self.chemical(rho)?;
        let h = self.grid.h;
        let mut dissipation = 0.0;
        let flux = (0..self.grid.n - 1)
            .map(|i| {
                let d = xi[i + 1] - xi[i];
                let up = if d < 0.0 { rho.values[i] } else { rho.values[i + 1] };
                dissipation += up * d * d / h;
                -up * d / h
            })
            .collect();
        Ok((flux, dissipation))
    }

    /// `sum_faces rho_up (xi_{i+1} - xi_i)^2 / h`, the exact dissipation of the
    /// semi-discrete scheme.
    pub fn discrete_dissipation(&self, rho: &GridDensity) -> Result<f64> {
        Ok(self.fluxes(rho)?.1)
    }

    pub fn step(&self, rho: &GridDensity, dt: f64) -> Result<GridDensity> {
        let limit = self.dt_max(rho);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::Stability(format!("dt = {dt} exceeds the bound {limit}")));
        }
        let (flux, _) = self.fluxes(rho)?;
        let n = self.grid.n;
        let mut values = rho.values.clone();
        for i in 0..n {
            let inflow = if i > 0 { flux[i - 1] } else { 0.0 };
            let outflow = if i + 1 < n { flux[i] } else { 0.0 };
            values[i] += dt * (inflow - outflow) / self.widths[i];
        }
        if let Some(i) = values.iter().position(|&r| r < 0.0 || !r.is_finite()) {
            return Err(Error::Stability(format!("density {} at node {i} after the step", values[i])));
        }
        if self.model.singular_at_zero() {
            if let Some(i) = values.iter().position(|&r| r == 0.0) {
                return Err(Error::Stability(format!("density underflow at node {i}")));
            }
        }
        Ok(GridDensity { grid: self.grid, values, floor: rho.floor })
    }
}

/// One explicit step; see [`Stepper`] for repeated use.
pub fn step(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair, dt: f64) -> Result<GridDensity> {
    Stepper::new(m, pot, &rho.grid)?.step(rho, dt)
}

pub fn dt_max(rho: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<f64> {
    Ok(Stepper::new(m, pot, &rho.grid)?.dt_max(rho))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    /// `H(rho(t)) - H(rho_V)`.
    pub energies: Vec<f64>,
    /// Discrete dissipation of the scheme.
    pub dissipations: Vec<f64>,
    /// `I_2` by grid derivatives, for comparison.
    pub continuum_dissipations: Vec<f64>,
    pub w2s: Vec<f64>,
    pub barycentres: Vec<f64>,
    pub mass_errors: Vec<f64>,
    /// L1 distance to the stationary density; diagnostic only.
    pub l1_reference: Vec<f64>,
    pub steps: usize,
    #[serde(skip)]
    pub final_density: GridDensity,
    #[serde(skip)]
    pub reference: GridDensity,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,H,I2,W2,b,mass_err\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?}\n",
                self.times[k], self.energies[k], self.dissipations[k], self.w2s[k], self.barycentres[k], self.mass_errors[k]
            ));
        }
        out
    }

    /// Largest increase of the energy between consecutive samples, relative
    /// to `max(|H(0)|, 1)`.
    pub fn energy_increase(&self) -> f64 {
        let scale = self.energies.first().map_or(1.0, |e| e.abs().max(1.0));
        self.energies.windows(2).map(|w| (w[1] - w[0]) / scale).fold(0.0, f64::max)
    }
}

/// Stationary density a flow relaxes to. Without a confining `V` the
/// equilibrium of a pure interaction is selected by the initial barycentre.
pub fn flow_reference(rho0: &GridDensity, m: &EntropyModel, pot: &PotentialPair) -> Result<GridDensity> {
    if pot.v.is_zero() && pot.has_interaction() {
        Ok(solve_reference_from(m, pot, None, rho0)?.density)
    } else {
        Ok(solve_reference(m, pot, None, &rho0.grid)?.density)
    }
}

/// Runs the flow to `t_end`, sampling every `sample_every` steps and at the
/// end. Without `dt` each step uses the current bound from [`Stepper::dt_max`].
pub fn evolve(
    rho0: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
    t_end: f64,
    dt: Option<f64>,
    sample_every: usize,
) -> Result<FlowTrace> {
    if !(t_end > 0.0 && t_end.is_finite()) || sample_every == 0 {
        return Err(Error::Domain(format!("need t_end > 0 and sample_every >= 1, got {t_end}, {sample_every}")));
    }
    let reference = flow_reference(rho0, m, pot)?;
    evolve_against(rho0, m, pot, &reference, t_end, dt, sample_every)
}

/// [`evolve`] with an explicit stationary density.
pub fn evolve_against(
    rho0: &GridDensity,
    m: &EntropyModel,
    pot: &PotentialPair,
    reference: &GridDensity,
    t_end: f64,
    dt: Option<f64>,
    sample_every: usize,
) -> Result<FlowTrace> {
    let stepper = Stepper::new(m, pot, &rho0.grid)?;
    let mass0 = rho0.mass();
    let mut trace = FlowTrace {
        times: vec![],
        energies: vec![],
        dissipations: vec![],
        continuum_dissipations: vec![],
        w2s: vec![],
        barycentres: vec![],
        mass_errors: vec![],
        l1_reference: vec![],
        steps: 0,
        final_density: rho0.clone(),
        reference: reference.clone(),
    };
    let record = |trace: &mut FlowTrace, rho: &GridDensity, t: f64| -> Result<()> {
        trace.times.push(t);
        trace.energies.push(relative_energy(rho, reference, m, pot)?);
        trace.dissipations.push(stepper.discrete_dissipation(rho)?);
        trace.continuum_dissipations.push(entropy_production_i2(rho, m, pot)?);
        trace.w2s.push(w2_distance(rho, reference));
        trace.barycentres.push(barycenter(rho));
        trace.mass_errors.push((rho.mass() - mass0).abs());
        trace.l1_reference.push(rho.l1_distance(reference)?);
        Ok(())
    };
    let mut rho = rho0.clone();
    let mut t = 0.0;
    record(&mut trace, &rho, t)?;
    let mut since = 0;
    while t < t_end * (1.0 - 1e-14) {
        let mut tau = dt.unwrap_or_else(|| stepper.dt_max(&rho));
        let last = t + tau >= t_end;
        if last {
            tau = t_end - t;
        }
        rho = stepper.step(&rho, tau)?;
        t = if last { t_end } else { t + tau };
        trace.steps += 1;
        since += 1;
        if since == sample_every || last {
            record(&mut trace, &rho, t)?;
            since = 0;
        }
    }
    trace.final_density = rho;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    /// Largest `|dH/dt + I| / max(I, 1e-12)` over interior samples.
    pub max_defect: f64,
    pub at_time: f64,
    /// The same with the grid-derivative `I_2`.
    pub continuum_defect: f64,
    pub pass: bool,
}

/// Relative defect allowed in the energy identity.
pub const DISSIPATION_TOL: f64 = 0.05;
/// Below this both sides of the identity count as zero.
pub const STATIONARY_TOL: f64 = 1e-8;

/// Compares centred differences of the energy with the recorded dissipation.
pub fn check_dissipation(trace: &FlowTrace) -> Result<DissipationReport> {
    if trace.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 samples, got {}", trace.len())));
    }
    let defect = |diss: &[f64]| {
        let mut worst = (0.0, trace.times[1]);
        for k in 1..trace.len() - 1 {
            // second-order three-point derivative on uneven spacing
            let (a, b) = (trace.times[k] - trace.times[k - 1], trace.times[k + 1] - trace.times[k]);
            let e = &trace.energies;
            let dh = (-b / (a * (a + b))) * e[k - 1] + ((b - a) / (a * b)) * e[k] + (a / (b * (a + b))) * e[k + 1];
            let lhs = -dh;
            if lhs.abs() < STATIONARY_TOL && diss[k].abs() < STATIONARY_TOL {
                continue;
            }
            let d = (lhs - diss[k]).abs() / diss[k].max(1e-12);
            if d > worst.0 {
                worst = (d, trace.times[k]);
            }
        }
        worst
    };
    let (max_defect, at_time) = defect(&trace.dissipations);
    let (continuum_defect, _) = defect(&trace.continuum_dissipations);
    Ok(DissipationReport { max_defect, at_time, continuum_defect, pass: max_defect <= DISSIPATION_TOL })
}

/// Decay rate `-slope` of the least-squares line through `(t, ln v)`, using
/// the samples with `v >= 1e-10 v[0]`.
pub fn estimate_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Dimension(format!("{} times, {} values", times.len(), values.len())));
    }
    if let Some(i) = values.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("value {} at index {i} is not positive", values[i])));
    }
    let floor = 1e-10 * values.first().copied().unwrap_or(0.0);
    let pts: Vec<(f64, f64)> = times.iter().zip(values).filter(|(_, v)| **v >= floor).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::Domain("need at least two samples in the window".into()));
    }
    let k = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / k, b + y / k));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    if sxx == 0.0 {
        return Err(Error::Degenerate("all sample times coincide".into()));
    }
    Ok(-sxy / sxx)
}
