//! Checker registry and the suite runner behind the CLI.
//!
//! A config expands into independent [`Job`]s (one per suite entry and seed).
//! Jobs are pure, so callers may run them in any order or in parallel;
//! [`SuiteReport::assemble`] restores a deterministic order.

use serde::{Deserialize, Serialize};

use crate::config::{CheckSpec, ExperimentConfig, FlowSpec, Tolerances};
use crate::error::{Error, Result};
use crate::flow::{check_dissipation, estimate_rate, evolve};
use crate::inequalities::{
    check_boltzmann_lsi, check_concentration, check_duality, check_euclidean_lsi, check_gagliardo_nirenberg,
    check_general_lsi, check_general_sobolev, check_hwbi, check_lsi_interaction, check_master, check_plsi,
    check_poincare, check_talagrand, normalize_lp, DualityVariant, IneqReport, InputDigest, DEFAULT_TOL,
};
use crate::measures::{
    barycenter, normalize, random_confined_density, random_smooth_density, trap, Grid1D, GridDensity, DEFAULT_FLOOR,
};
use crate::models::{EntropyModel, PotentialPair, ScalarFn, YoungPair};
use crate::stationary::{gibbs, solve_reference};
use crate::transport::{check_displacement_convexity, transport_energy_slacks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CheckerInfo {
    pub name: &'static str,
    pub anchor: &'static str,
}

pub const CHECKERS: &[CheckerInfo] = &[
    CheckerInfo { name: "check_boltzmann_lsi", anchor: "Gross log-Sobolev and Otto-Villani HWI for a Gibbs measure" },
    CheckerInfo { name: "check_concentration", anchor: "Gaussian concentration of measure" },
    CheckerInfo { name: "check_displacement_convexity", anchor: "displacement convexity of the internal energy" },
    CheckerInfo { name: "check_dissipation", anchor: "energy dissipation identity and trend to equilibrium" },
    CheckerInfo { name: "check_duality", anchor: "energy-entropy production duality" },
    CheckerInfo { name: "check_euclidean_lsi", anchor: "Euclidean log-Sobolev inequality for a homogeneous conjugate" },
    CheckerInfo { name: "check_gagliardo_nirenberg", anchor: "sharp Gagliardo-Nirenberg inequality and its energy form" },
    CheckerInfo { name: "check_general_lsi", anchor: "general logarithmic Sobolev inequality with parameter sigma" },
    CheckerInfo { name: "check_general_sobolev", anchor: "general Sobolev inequality" },
    CheckerInfo { name: "check_hwbi", anchor: "HWBI inequality, HWI without interaction" },
    CheckerInfo { name: "check_lsi_interaction", anchor: "log-Sobolev inequalities with interaction potentials" },
    CheckerInfo { name: "check_master", anchor: "master comparison principle with a Young function" },
    CheckerInfo { name: "check_plsi", anchor: "sharp p-log-Sobolev inequality" },
    CheckerInfo { name: "check_poincare", anchor: "Poincare inequality for a uniformly log-concave measure" },
    CheckerInfo { name: "check_talagrand", anchor: "transport-entropy (Talagrand) inequalities" },
    CheckerInfo {
        name: "check_transport_energy_slacks",
        anchor: "first-order energy inequalities along the optimal map",
    },
];

pub fn find_checker(name: &str) -> Option<&'static CheckerInfo> {
    CHECKERS.iter().find(|c| c.name == name)
}

/// Seed offset of the second random input of a job.
const SECOND_INPUT: u64 = 1000;

/// One suite entry at one seed, with its settings resolved.
#[derive(Debug, Clone)]
pub struct Job {
    pub index: usize,
    pub spec: CheckSpec,
    pub seed: Option<u64>,
    pub grid: Grid1D,
    pub model: EntropyModel,
    pub potential: PotentialPair,
    pub young: YoungPair,
    pub flow: Option<FlowSpec>,
    pub tolerances: Tolerances,
}

impl Job {
    fn prefix(&self) -> String {
        let mut s = self.spec.checker.clone();
        if let Some(l) = &self.spec.label {
            s.push_str(&format!("[{l}]"));
        }
        s
    }

    fn suffix(&self) -> String {
        match (self.spec.seeded, self.seed) {
            (true, Some(k)) => format!("[seed={k}]"),
            _ => String::new(),
        }
    }
}

/// Expands a config into jobs. Settings of a suite entry override the
/// config-wide ones.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<Job>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (index, spec) in cfg.suite.iter().enumerate() {
        let grid = spec.grid.unwrap_or(cfg.grid).build()?;
        let model = spec.entropy.unwrap_or(cfg.entropy).build()?;
        let potential = spec.potential.as_ref().unwrap_or(&cfg.potential).build()?;
        let young = spec.young.as_ref().unwrap_or(&cfg.young).build()?;
        let flow = spec.flow.clone().or_else(|| cfg.flow.clone());
        let seeds: Vec<Option<u64>> = match (spec.seeded, cfg.seeds) {
            (true, Some(r)) => r.iter().map(Some).collect(),
            _ => vec![spec.seed],
        };
        for seed in seeds {
            jobs.push(Job {
                index,
                spec: spec.clone(),
                seed,
                grid,
                model,
                potential: potential.clone(),
                young: young.clone(),
                flow: flow.clone(),
                tolerances: cfg.tolerances,
            });
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub checker: String,
    pub name: String,
    pub pass: bool,
    pub equality_case: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<IneqReport>,
}

/// Runs one job. Errors become a single failing entry whose reason is the error kind.
pub fn run_job(job: &Job) -> Vec<SuiteEntry> {
    let prefix = job.prefix();
    let suffix = job.suffix();
    match dispatch(job) {
        Ok(reports) => reports
            .into_iter()
            .map(|r| {
                let r = r.with_tolerances(job.tolerances.tol, job.tolerances.tol_eq);
                SuiteEntry {
                    checker: job.spec.checker.clone(),
                    name: format!("{prefix}:{}{suffix}", r.name),
                    pass: r.pass,
                    equality_case: r.equality_case,
                    reason: None,
                    report: Some(r),
                }
            })
            .collect(),
        Err(e) => vec![SuiteEntry {
            checker: job.spec.checker.clone(),
            name: format!("{prefix}{suffix}"),
            pass: false,
            equality_case: false,
            reason: Some(format!("{}: {e}", e.kind())),
            report: None,
        }],
    }
}

fn need_seed(job: &Job) -> Result<u64> {
    job.seed.ok_or_else(|| Error::Domain("a `random` input needs `seeded = true` or a `seed`".into()))
}

fn sample_expr(grid: &Grid1D, src: &str) -> Result<Vec<f64>> {
    let f = ScalarFn::parse(src)?;
    let v = grid.sample(|x| f.eval(x));
    if let Some(i) = v.iter().position(|y| !y.is_finite()) {
        return Err(Error::Numeric(format!("`{src}` is not finite at x = {}", grid.x(i))));
    }
    Ok(v)
}

/// Resolves a density input; `reference` uses the job's Young function when `with_young`.
fn density(job: &Job, src: Option<&str>, offset: u64, with_young: bool) -> Result<GridDensity> {
    match src.unwrap_or("random") {
        "random" => random_confined_density(need_seed(job)? + offset, &job.grid),
        "reference" => {
            Ok(solve_reference(&job.model, &job.potential, with_young.then_some(&job.young), &job.grid)?.density)
        }
        "gibbs" => gibbs(&job.potential.v, &job.grid),
        expr => normalize(&sample_expr(&job.grid, expr)?, &job.grid, 0.0),
    }
}

/// Resolves a function input normalized in `L^p`; `random` gives `rho^{1/p}`.
fn lp_function(job: &Job, p: f64, offset: u64) -> Result<Vec<f64>> {
    match job.spec.f.as_deref().unwrap_or("random") {
        "random" => {
            let rho = random_confined_density(need_seed(job)? + offset, &job.grid)?;
            Ok(rho.values.iter().map(|v| v.powf(1.0 / p)).collect())
        }
        expr => normalize_lp(&sample_expr(&job.grid, expr)?, &job.grid, p),
    }
}

fn pair(job: &Job, with_young: bool) -> Result<(GridDensity, GridDensity)> {
    let rho0 = density(job, job.spec.rho0.as_deref(), 0, with_young)?;
    let rho1 = density(job, job.spec.rho1.as_deref(), SECOND_INPUT, with_young)?;
    let rho0 = if job.spec.match_barycentre { rho0.recentred(barycenter(&rho1))? } else { rho0 };
    Ok((rho0, rho1))
}

fn dispatch(job: &Job) -> Result<Vec<IneqReport>> {
    let s = &job.spec;
    let (m, pot, yp, grid) = (&job.model, &job.potential, &job.young, &job.grid);
    match s.checker.as_str() {
        "check_master" => {
            let (a, b) = pair(job, true)?;
            Ok(vec![check_master(&a, &b, m, pot, yp)?])
        }
        "check_general_sobolev" => check_general_sobolev(&density(job, s.rho0.as_deref(), 0, true)?, m, pot, yp),
        "check_euclidean_lsi" => Ok(vec![check_euclidean_lsi(&density(job, s.rho0.as_deref(), 0, true)?, yp, 1)?]),
        "check_plsi" => {
            let p = s.p.unwrap_or(2.0);
            Ok(vec![check_plsi(grid, &lp_function(job, p, 0)?, p)?])
        }
        "check_gagliardo_nirenberg" => {
            let (p, r) = (s.p.unwrap_or(2.0), s.r.unwrap_or(4.0));
            let gn = check_gagliardo_nirenberg(grid, &lp_function(job, r, 0)?, p, r)?;
            let note = match gn.constant {
                Some(c) => format!("theta = {}, C(p, r) = {c}, scaled constant = {}", gn.theta, gn.scaling_constant),
                None => format!("theta = {}, scaled constant = {}", gn.theta, gn.scaling_constant),
            };
            Ok(gn.reports.into_iter().map(|r| r.with_note(note.clone())).collect())
        }
        "check_general_lsi" => {
            let (a, b) = pair(job, false)?;
            Ok(vec![check_general_lsi(&a, &b, m, pot, s.sigma.unwrap_or(1.0))?])
        }
        "check_hwbi" => {
            let (a, b) = pair(job, false)?;
            check_hwbi(&a, &b, m, pot)
        }
        "check_lsi_interaction" => {
            let (a, b) = pair(job, false)?;
            check_lsi_interaction(&a, &b, m, pot)
        }
        "check_talagrand" => check_talagrand(&density(job, s.rho0.as_deref(), 0, false)?, m, pot),
        "check_boltzmann_lsi" => {
            let rho_u = gibbs(&pot.v, grid)?;
            let f = match s.f.as_deref().unwrap_or("random") {
                "random" => {
                    let rho = random_confined_density(need_seed(job)?, grid)?;
                    rho.values.iter().zip(&rho_u.values).map(|(a, b)| a / b).collect::<Vec<_>>()
                }
                expr => {
                    let f = sample_expr(grid, expr)?;
                    let mean = trap(&f.iter().zip(&rho_u.values).map(|(a, b)| a * b).collect::<Vec<_>>(), grid);
                    if !(mean > 0.0) {
                        return Err(Error::Hypothesis(format!("tilt has mean {mean} under the Gibbs density")));
                    }
                    f.iter().map(|v| v / mean).collect()
                }
            };
            check_boltzmann_lsi(grid, &f, pot, s.sigma)
        }
        "check_poincare" => {
            let f = match s.f.as_deref().unwrap_or("random") {
                "random" => random_smooth_density(need_seed(job)?, grid, DEFAULT_FLOOR)?.values,
                expr => sample_expr(grid, expr)?,
            };
            Ok(vec![check_poincare(grid, &f, pot)?])
        }
        "check_concentration" => {
            let eps = s.eps.ok_or_else(|| Error::Domain("check_concentration needs `eps`".into()))?;
            let (lo, hi) = (s.lo.unwrap_or(f64::NEG_INFINITY), s.hi.unwrap_or(f64::INFINITY));
            Ok(vec![check_concentration(grid, lo, hi, eps, pot)?])
        }
        "check_duality" => {
            let rho = density(job, s.rho0.as_deref(), 0, false)?;
            let (variant, f) = match s.variant.as_deref().unwrap_or("general") {
                "plog" => {
                    let p = s.p.unwrap_or(2.0);
                    (DualityVariant::PLog { p, mu: s.mu.unwrap_or(1.0) }, lp_function(job, p, SECOND_INPUT)?)
                }
                "gn" => {
                    let (p, r) = (s.p.unwrap_or(2.0), s.r.unwrap_or(4.0));
                    (DualityVariant::Gn { p, r, mu: s.mu.unwrap_or(1.0) }, lp_function(job, r, SECOND_INPUT)?)
                }
                _ => {
                    let f = density(job, s.f.as_deref(), SECOND_INPUT, true)?.values;
                    (DualityVariant::General { model: *m, young: yp.clone() }, f)
                }
            };
            Ok(vec![check_duality(&rho, &f, &variant)?])
        }
        "check_displacement_convexity" => {
            let (a, b) = pair(job, false)?;
            let ts = s.ts.clone().unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect());
            let rep = check_displacement_convexity(&a, &b, m, &ts, job.tolerances.tol)?;
            let k = (0..rep.slacks.len())
                .min_by(|&i, &j| {
                    let si = rep.slacks[i] / rep.energies[i + 1].abs().max(1.0);
                    let sj = rep.slacks[j] / rep.energies[j + 1].abs().max(1.0);
                    si.total_cmp(&sj)
                })
                .expect("at least one interior time");
            let energy = rep.energies[k + 1];
            let d = InputDigest::new("displacement_convexity").density(&a).density(&b).model(m).nums(&ts).finish();
            let r = IneqReport::new("displacement_convexity", energy, energy + rep.slacks[k], d)?;
            Ok(vec![r.with_note(format!("worst interior time t = {}", rep.ts[k + 1]))])
        }
        "check_transport_energy_slacks" => {
            let (a, b) = pair(job, false)?;
            let sl = transport_energy_slacks(&a, &b, m, pot)?;
            let d = InputDigest::new("transport_energy_slacks").density(&a).density(&b).model(m).potentials(pot).finish();
            Ok(vec![
                IneqReport::new("internal", sl.internal_bound, sl.internal_bound + sl.internal, d.clone())?,
                IneqReport::new("potential", sl.potential_bound, sl.potential_bound + sl.potential, d.clone())?,
                IneqReport::new("interaction", sl.interaction_bound, sl.interaction_bound + sl.interaction, d)?,
            ])
        }
        "check_dissipation" => flow_reports(job),
        other => Err(Error::Parse(format!("unknown checker \"{other}\""))),
    }
}

/// Mass drift tolerated over a whole run.
pub const FLOW_MASS_TOL: f64 = 1e-8;
/// Relative shortfall allowed in a fitted decay rate.
pub const RATE_SLACK: f64 = 0.05;

fn flow_reports(job: &Job) -> Result<Vec<IneqReport>> {
    let spec = job.flow.as_ref().ok_or_else(|| Error::Domain("check_dissipation needs a `flow` section".into()))?;
    let (m, pot) = (&job.model, &job.potential);
    // the rate bound below is only as good as the declared moduli
    pot.validate(&job.grid)?;
    let rho0 = match job.spec.rho0.as_deref() {
        Some(_) => density(job, job.spec.rho0.as_deref(), 0, false)?,
        None => normalize(&sample_expr(&job.grid, &spec.initial)?, &job.grid, 0.0)?,
    };
    let trace = evolve(&rho0, m, pot, spec.t_end, spec.dt, spec.sample_every)?;
    let diss = check_dissipation(&trace)?;
    let d = InputDigest::new("flow")
        .density(&rho0)
        .model(m)
        .potentials(pot)
        .num(spec.t_end)
        .num(spec.dt.unwrap_or(0.0))
        .num(spec.sample_every as f64)
        .finish();
    let mass = trace.mass_errors.iter().fold(0.0, |a: f64, b| a.max(*b));
    let mut out = vec![
        IneqReport::new("dissipation_identity", diss.max_defect, crate::flow::DISSIPATION_TOL, d.clone())?
            .with_note(format!("defect with grid-derivative I2: {:.3e}", diss.continuum_defect)),
        IneqReport::new("mass_conservation", mass, FLOW_MASS_TOL, d.clone())?,
        IneqReport::new("energy_monotone", trace.energy_increase(), 1e-8, d.clone())?,
    ];
    // rate 2(lambda + nu) with barycentre invariance, 2 lambda otherwise
    let bound = if pot.v.is_zero() && pot.nu > 0.0 {
        Some(2.0 * (pot.lambda + pot.nu))
    } else if pot.lambda > 0.0 && pot.nu >= 0.0 {
        Some(2.0 * pot.lambda)
    } else {
        None
    };
    let h0 = trace.energies[0];
    if let (Some(bound), true) = (bound, h0 > 1e-12) {
        let (t, h): (Vec<f64>, Vec<f64>) =
            trace.times.iter().zip(&trace.energies).filter(|(_, &h)| h > 1e-12 * h0).map(|(a, b)| (*a, *b)).unzip();
        let rate = estimate_rate(&t, &h)?;
        out.push(
            IneqReport::new("energy_decay_rate", bound * (1.0 - RATE_SLACK), rate, d)?
                .with_note(format!("fitted rate {rate:.6}, guaranteed {bound}")),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: usize,
    pub failed: usize,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    /// Orders entries by checker name; within a checker the job order is kept.
    pub fn assemble(name: &str, mut entries: Vec<SuiteEntry>) -> Self {
        entries.sort_by(|a, b| a.checker.cmp(&b.checker));
        let passed = entries.iter().filter(|e| e.pass).count();
        Self { name: name.to_string(), passed, failed: entries.len() - passed, entries }
    }

    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("name,lhs,rhs,slack,scale,pass,equality_case,reason\n");
        for e in &self.entries {
            let reason = e.reason.as_deref().unwrap_or("").replace(['"', '\n'], "'");
            match &e.report {
                Some(r) => out.push_str(&format!(
                    "{},{:?},{:?},{:?},{:?},{},{},\n",
                    e.name, r.lhs, r.rhs, r.slack, r.scale, e.pass, e.equality_case
                )),
                None => out.push_str(&format!("{},,,,,{},{},\"{reason}\"\n", e.name, e.pass, e.equality_case)),
            }
        }
        out
    }

    /// One line per entry, `PASS name slack=...` or `FAIL name reason`.
    pub fn lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                let tag = if e.pass { "PASS" } else { "FAIL" };
                match (&e.report, &e.reason) {
                    (Some(r), _) => format!("{tag} {} slack={:.6e}", e.name, r.slack),
                    (None, Some(why)) => format!("{tag} {} reason={why}", e.name),
                    (None, None) => format!("{tag} {}", e.name),
                }
            })
            .collect()
    }
}

/// Runs every job in order on the current thread.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let entries = plan(cfg)?.iter().flat_map(run_job).collect();
    Ok(SuiteReport::assemble(&cfg.name, entries))
}

/// Default tolerance of the shipped suites, exposed for the acceptance tests.
pub const SUITE_TOL: f64 = DEFAULT_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFormat, ExperimentConfig};

    fn config(body: &str) -> ExperimentConfig {
        let head = "name = \"t\"\nseeds = { start = 1, end = 3 }\n[grid]\na = -10.0\nb = 10.0\nn = 401\n[potential]\nv = \"x^2/2\"\nlambda = 1.0\n";
        ExperimentConfig::parse(&format!("{head}{body}"), ConfigFormat::Toml).unwrap()
    }

    #[test]
    fn registry_is_complete() {
        assert!(CHECKERS.len() >= 12);
        for c in CHECKERS {
            assert!(!c.anchor.is_empty());
            let cfg = ExperimentConfig {
                suite: vec![CheckSpec { checker: c.name.into(), ..Default::default() }],
                ..config("")
            };
            let jobs = plan(&cfg).unwrap();
            // reaches dispatch; a missing input is an error entry, never an unknown checker
            let out = run_job(&jobs[0]);
            assert!(out.iter().all(|e| !e.reason.as_deref().unwrap_or("").starts_with("parse")), "{}", c.name);
        }
        let mut names: Vec<_> = CHECKERS.iter().map(|c| c.name).collect();
        names.sort();
        assert_eq!(names, CHECKERS.iter().map(|c| c.name).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_entries_are_named_and_pass() {
        let cfg = config("[[suite]]\nchecker = \"check_hwbi\"\nseeded = true\n");
        let rep = run_suite(&cfg).unwrap();
        assert_eq!(rep.entries.len(), 6);
        assert!(rep.all_pass(), "{:?}", rep.lines());
        assert!(rep.entries.iter().any(|e| e.name == "check_hwbi:hwi[seed=2]"));
    }

    #[test]
    fn hypothesis_errors_fail_the_entry() {
        let cfg = config("[[suite]]\nchecker = \"check_concentration\"\nlo = 0.0\neps = 0.1\n");
        let rep = run_suite(&cfg).unwrap();
        assert!(!rep.all_pass());
        assert!(rep.entries[0].reason.as_deref().unwrap().starts_with("hypothesis"));
        assert!(rep.summary_csv().lines().nth(1).unwrap().starts_with("check_concentration,,"));
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = config("[[suite]]\nchecker = \"check_master\"\nseeded = true\n[[suite]]\nchecker = \"check_poincare\"\nf = \"x\"\n");
        assert_eq!(run_suite(&cfg).unwrap().to_json(), run_suite(&cfg).unwrap().to_json());
    }
}
