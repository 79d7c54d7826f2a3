//! Command execution against a resolved [`ScenarioConfig`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use lambdaset_core::first_order::{search_first_order, AdmissibilityPolicy, FirstOrderCandidate, FirstOrderReference, SphereGrid};
use lambdaset_core::nonsmooth::{check_nonsmooth_candidate, NonsmoothReference};
use lambdaset_core::scenarios::*;
use lambdaset_core::second_order::{check_second_order_candidate, search_second_order, MeasureVariation, QProfile, SecondOrderCandidate};
use lambdaset_core::stochastic::{
    check_stochastic_candidate, monte_carlo_cost, reduced_adjoint_propagate, simulate_paths, variation_cost_test, ClampedFeedback, EnsembleConfig,
    FeedbackFn, StochasticCandidate,
};
use lambdaset_core::{
    trajectory_distance, CertificateReport, ControlSetSpec, DMatrix, DVector, DistanceNorm, SimConfig, Trajectory, Verdict,
};

use crate::config::{format_list, Params, ScenarioConfig};
use crate::output::{write_file, write_trajectory_csv, RunReport};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    First,
    Second,
    Filippov,
    Hybrid,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchKind {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Check(CheckKind),
    Search(SearchKind),
    Converge,
    MonteCarlo,
    VariationTest,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Check(CheckKind::First) => "check-first",
            Self::Check(CheckKind::Second) => "check-second",
            Self::Check(CheckKind::Filippov) => "check-filippov",
            Self::Check(CheckKind::Hybrid) => "check-hybrid",
            Self::Check(CheckKind::Stochastic) => "check-stochastic",
            Self::Search(SearchKind::First) => "search-first",
            Self::Search(SearchKind::Second) => "search-second",
            Self::Converge => "converge",
            Self::MonteCarlo => "montecarlo",
            Self::VariationTest => "variation-test",
        }
    }
}

/// Whether the computation certified what was asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Check rejected, search found nothing under tolerance, or a strict
    /// quality gate failed.
    Negative,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub status: Status,
    pub report_path: PathBuf,
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    out: &'a Path,
    strict: bool,
    report: RunReport,
    stem: String,
}

impl Ctx<'_> {
    fn dt(&self, default: f64) -> f64 {
        self.cfg.run.dt.unwrap_or(default)
    }

    fn sim(&self, default_dt: f64) -> SimConfig {
        SimConfig { dt: self.dt(default_dt), event_tol: self.cfg.run.event_tol, ..SimConfig::default() }
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.cfg.run.seed.ok_or_else(|| CliError::Config(format!("{} needs an explicit seed (--seed or [run] seed)", self.report.command)))
    }

    fn ensemble(&self, default_paths: usize) -> Result<EnsembleConfig, CliError> {
        let mut e = EnsembleConfig::new(self.cfg.run.n_paths.unwrap_or(default_paths), self.seed()?, self.dt(1e-2));
        e.workers = self.cfg.run.workers;
        Ok(e)
    }

    fn psi0(&self, n: usize) -> Result<DVector<f64>, CliError> {
        let p = self.cfg.candidate.psi0.as_ref().ok_or_else(|| CliError::Config(format!("{} needs candidate psi0 ({n} entries)", self.report.command)))?;
        if p.len() != n {
            return Err(CliError::Config(format!("psi0 has {} entries, the state has {n}", p.len())));
        }
        Ok(DVector::from_column_slice(p))
    }

    fn csv(&mut self, label: &str, tr: &Trajectory, n: usize, m: usize) -> Result<(), CliError> {
        let path = self.out.join(format!("{}-{label}.csv", self.stem));
        write_trajectory_csv(&path, tr, n, m)?;
        self.report.metric(format!("{label}_rows"), tr.len());
        self.report.artifacts.push((label.to_string(), path));
        Ok(())
    }

    fn certificate(&mut self, rep: &CertificateReport) -> Result<Status, CliError> {
        for (k, v) in rep.residuals() {
            self.report.metric(k, v);
        }
        self.report.metric("verdict", rep.verdict);
        if self.strict && rep.admissibility_defect > rep.tolerance {
            return Err(CliError::Runtime(format!(
                "reference is not admissible: defect {} exceeds tolerance {} (strict mode)",
                rep.admissibility_defect, rep.tolerance
            )));
        }
        Ok(if rep.verdict == Verdict::Accept { Status::Success } else { Status::Negative })
    }
}

fn unsupported(cmd: Command, b: Builtin, hint: &str) -> CliError {
    CliError::Config(format!("{} is not available for builtin '{b}'; {hint}", cmd.label()))
}

pub fn execute(cmd: Command, cfg: &ScenarioConfig, out: &Path, strict: bool) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let mut report = RunReport::new(cmd.label());
    report.scenario.push(("name".into(), cfg.scenario().to_string()));
    report.scenario.extend(cfg.params.entries().into_iter().map(|(k, v)| (k.to_string(), v)));
    let stem = format!("{}-{}", cfg.scenario(), cmd.label());
    let mut ctx = Ctx { cfg, out, strict, report, stem };
    let status = match cmd {
        Command::Simulate => simulate(&mut ctx)?,
        Command::Check(k) => check(&mut ctx, k)?,
        Command::Search(k) => search(&mut ctx, k)?,
        Command::Converge => converge(&mut ctx)?,
        Command::MonteCarlo => montecarlo(&mut ctx)?,
        Command::VariationTest => variation(&mut ctx)?,
    };
    let mut report = ctx.report;
    report.wall_clock = started.elapsed().as_secs_f64();
    let report_path = out.join(format!("{}.report", ctx.stem));
    report.artifacts.push(("report".into(), report_path.clone()));
    write_file(&report_path, &report.to_text())?;
    Ok(Outcome { report, status, report_path })
}

fn simulate(ctx: &mut Ctx) -> Result<Status, CliError> {
    match &ctx.cfg.params {
        Params::Nonholonomic(p) => {
            let (eps, omega) = (p.epsilon, p.omega());
            let tr = simulate_oscillation(eps, omega, p.horizon, ctx.dt(1e-3))?;
            let gap = tr.times.iter().zip(&tr.states).map(|(&t, x)| (x - closed_form(eps, omega, t)).amax()).fold(0.0, f64::max);
            let c = if p.reference == ReferenceVariant::Nominal { 1.0 } else { 0.5 };
            let xr = Trajectory::from_samples(tr.times.clone(), tr.times.iter().map(|&t| DVector::from_vec(vec![0.0, 0.0, c * t])).collect())?;
            ctx.report.vector("x_final", tr.final_state().expect("nonempty"));
            ctx.report.metric("closed_form_gap", gap);
            ctx.report.metric("c0_to_reference", trajectory_distance(&tr, &xr, DistanceNorm::C0)?);
            ctx.csv("trajectory", &tr, 3, 2)?;
        }
        Params::Friction(p) => {
            let tr = simulate_pulse_train(p.delta, ctx.dt(1e-3))?;
            let err = pulse_checkpoints(p.delta).iter().map(|(t, x)| (tr.sample(*t) - x).amax()).fold(0.0, f64::max);
            ctx.report.vector("x_final", tr.final_state().expect("nonempty"));
            ctx.report.metric("terminal_norm", tr.final_state().expect("nonempty").norm());
            ctx.report.metric("checkpoint_error", err);
            ctx.csv("trajectory", &tr, 2, 1)?;
        }
        Params::BouncingBall(p) => {
            let run = simulate_bouncing_ball(p, &ctx.sim(1e-3))?;
            let law = run
                .trajectory
                .events
                .iter()
                .filter(|e| e.kind == lambdaset_core::EventKind::Impact)
                .map(|e| {
                    let r = if e.payload.from_mode == SOFT { p.e1 } else { p.e2 };
                    (e.payload.state_after[1] + r * e.payload.state_before[1]).abs()
                })
                .fold(0.0, f64::max);
            ctx.report.metric("impact_time", run.impact_time);
            ctx.report.metric("apex_time", run.apex_time);
            ctx.report.metric("events", run.trajectory.events.len());
            ctx.report.metric("impact_law_residual", law);
            ctx.csv("trajectory", &run.trajectory, 2, 1)?;
        }
        Params::Temperature(p) => {
            let (sys, _, cand) = temperature_parts(p, ctx.dt(1e-2))?;
            let law = clamped_law(p, &cand);
            let ens = simulate_paths(&sys, &law, &DVector::from_element(1, p.x0), p.initial_mode(), (0.0, p.horizon), &ctx.ensemble(100)?)?;
            let finals: Vec<f64> = ens.paths.iter().map(|t| t.states.last().expect("nonempty")[0]).collect();
            ctx.report.metric("n_paths", ens.n_paths);
            ctx.report.metric("diverged", ens.diverged.len());
            if !finals.is_empty() {
                ctx.report.metric("mean_terminal_state", finals.iter().sum::<f64>() / finals.len() as f64);
            }
            let first = ens.paths.first().cloned().unwrap_or_default();
            ctx.csv("path0", &first, 1, 1)?;
        }
    }
    Ok(Status::Success)
}

fn temperature_parts(
    p: &TemperatureParams,
    dt: f64,
) -> Result<(lambdaset_core::stochastic::StochasticHybridSystem, lambdaset_core::stochastic::CostSpec, StochasticCandidate), CliError> {
    let sys = temperature_system(p)?;
    let cost = temperature_cost(p)?;
    let cand = reduced_adjoint_propagate(&sys, (0.0, p.horizon), &cost, &temperature_reduction(p, dt))?;
    Ok((sys, cost, cand))
}

fn clamped_law<'a>(p: &TemperatureParams, cand: &'a StochasticCandidate) -> ClampedFeedback<'a> {
    ClampedFeedback { candidate: cand, alphas: p.alphas(), lambda_weight: p.lambda, bounds: (0.0, p.u_max) }
}

enum FirstRef {
    Relaxed(RelaxedReferenceBox),
    Filippov(Box<lambdaset_core::nonsmooth::FilippovReference>),
}

type RelaxedReferenceBox = Box<lambdaset_core::first_order::RelaxedReference>;

impl FirstOrderReference for FirstRef {
    fn state_dim(&self) -> usize {
        match self {
            Self::Relaxed(r) => r.state_dim(),
            Self::Filippov(r) => FirstOrderReference::state_dim(r.as_ref()),
        }
    }

    fn check(&self, cand: &FirstOrderCandidate, tol: f64) -> lambdaset_core::Result<CertificateReport> {
        match self {
            Self::Relaxed(r) => r.check(cand, tol),
            Self::Filippov(r) => r.check(cand, tol),
        }
    }
}

fn first_order_reference(ctx: &Ctx, cmd: Command) -> Result<FirstRef, CliError> {
    match &ctx.cfg.params {
        Params::Nonholonomic(p) => {
            let policy = if ctx.strict { AdmissibilityPolicy::Enforce { tol: ctx.cfg.run.tol } } else { AdmissibilityPolicy::Report };
            Ok(FirstRef::Relaxed(Box::new(nonholonomic_reference(p.reference, p.horizon, ctx.dt(1e-2), policy)?)))
        }
        Params::Friction(p) => Ok(FirstRef::Filippov(Box::new(friction_reference(p, ctx.dt(1e-2))?))),
        Params::BouncingBall(_) => Err(unsupported(cmd, Builtin::BouncingBall, "use check hybrid")),
        Params::Temperature(_) => Err(unsupported(cmd, Builtin::Temperature, "use check stochastic")),
    }
}

fn second_order_candidate(ctx: &Ctx, horizon: f64) -> Result<SecondOrderCandidate, CliError> {
    let c = &ctx.cfg.candidate;
    let q0 = match &c.q0 {
        None => DMatrix::zeros(3, 3),
        Some(d) if d.len() == 3 => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        Some(d) => return Err(CliError::Config(format!("q0 lists the diagonal of Q(0); expected 3 entries, got {}", d.len()))),
    };
    let dmu = match c.shift_axis {
        Some(axis) if c.shift_weight > 0.0 => {
            let mut to = DVector::zeros(2);
            to[axis] = 1.0;
            let set = ControlSetSpec::sphere(2, 1.0)?;
            MeasureVariation::shift(-&to, to, c.shift_weight, (0.0, horizon), &set)?
        }
        _ => MeasureVariation::zero(),
    };
    Ok(SecondOrderCandidate {
        psi0: ctx.psi0(3)?,
        q: QProfile::RiccatiFlow { q0 },
        psi_scalar0: c.psi_scalar0,
        dmu,
        d2mu: MeasureVariation::zero(),
        sense: c.sense,
    })
}

fn multipliers(ctx: &Ctx, events: usize) -> Result<Vec<f64>, CliError> {
    match &ctx.cfg.candidate.nu {
        None => Ok(vec![0.0; events]),
        Some(nu) if nu.len() == events => Ok(nu.clone()),
        Some(nu) => Err(CliError::Config(format!("nu has {} entries but the reference has {events} events", nu.len()))),
    }
}

fn check(ctx: &mut Ctx, kind: CheckKind) -> Result<Status, CliError> {
    let cmd = Command::Check(kind);
    let tol = ctx.cfg.run.tol;
    let sense = ctx.cfg.candidate.sense;
    let rep = match kind {
        CheckKind::First => {
            let r = first_order_reference(ctx, cmd)?;
            let psi0 = ctx.psi0(r.state_dim())?;
            ctx.report.vector("psi0", &psi0);
            r.check(&FirstOrderCandidate::new(psi0, sense)?, tol)?
        }
        CheckKind::Second => {
            let Params::Nonholonomic(p) = &ctx.cfg.params else {
                return Err(unsupported(cmd, ctx.cfg.scenario(), "the second-order checker covers the nonholonomic example"));
            };
            let policy = if ctx.strict { AdmissibilityPolicy::Enforce { tol } } else { AdmissibilityPolicy::Report };
            let r = nonholonomic_reference(p.reference, p.horizon, ctx.dt(1e-2), policy)?;
            let cand = second_order_candidate(ctx, p.horizon)?;
            ctx.report.vector("psi0", &cand.psi0);
            check_second_order_candidate(&r, &cand, tol, ctx.cfg.run.loewner_tol)?
        }
        CheckKind::Filippov => {
            let Params::Friction(p) = &ctx.cfg.params else {
                return Err(unsupported(cmd, ctx.cfg.scenario(), "Filippov checks cover the friction example"));
            };
            let r = friction_reference(p, ctx.dt(1e-2))?;
            let psi0 = ctx.psi0(2)?;
            let nu = multipliers(ctx, r.flow().jumps.len())?;
            ctx.report.vector("psi0", &psi0);
            check_nonsmooth_candidate(&r, &psi0, &nu, sense, tol)?
        }
        CheckKind::Hybrid => {
            let Params::BouncingBall(p) = &ctx.cfg.params else {
                return Err(unsupported(cmd, ctx.cfg.scenario(), "hybrid checks cover the bouncing-ball example"));
            };
            let (r, run) = bouncing_ball_reference(p, &ctx.sim(1e-3))?;
            let psi0 = match &ctx.cfg.candidate.psi0 {
                Some(_) => ctx.psi0(2)?,
                None => bouncing_candidate_psi0(run.impact_time),
            };
            let nu = multipliers(ctx, r.events().len())?;
            ctx.report.vector("psi0", &psi0);
            ctx.report.metric("nu", format_list(&nu));
            check_nonsmooth_candidate(&r, &psi0, &nu, sense, tol)?
        }
        CheckKind::Stochastic => {
            let Params::Temperature(p) = &ctx.cfg.params else {
                return Err(unsupported(cmd, ctx.cfg.scenario(), "stochastic checks cover the temperature example"));
            };
            let dt = ctx.dt(1e-2);
            let (sys, cost, cand) = temperature_parts(p, dt)?;
            let law = clamped_law(p, &cand);
            let ens = simulate_paths(&sys, &law, &DVector::from_element(1, p.x0), p.initial_mode(), (0.0, p.horizon), &ctx.ensemble(1000)?)?;
            ctx.report.metric("psi_matrix_0", cand.psi_matrix[0][(0, 0)]);
            ctx.report.metric("n_paths_used", ens.paths.len());
            let rep = check_stochastic_candidate(&sys, &ens, &cand, &cost, tol)?;
            let times = cand.times.clone();
            let gaps = rep.stochastic.as_ref().map(|s| s.gap_series.clone()).unwrap_or_default();
            let series = Trajectory::from_samples(times, gaps.iter().map(|g| DVector::from_element(1, *g)).collect())?;
            ctx.csv("gap_series", &series, 1, 0)?;
            rep
        }
    };
    ctx.certificate(&rep)
}

fn search(ctx: &mut Ctx, kind: SearchKind) -> Result<Status, CliError> {
    let tol = ctx.cfg.run.tol;
    let sense = ctx.cfg.candidate.sense;
    let (min, modulus, evaluated) = match kind {
        SearchKind::First => {
            let r = first_order_reference(ctx, Command::Search(kind))?;
            let grid = SphereGrid::degrees(r.state_dim(), ctx.cfg.run.grid_deg.unwrap_or(1.0))?;
            let s = search_first_order(&r, sense, &grid, tol)?;
            ctx.report.vector("argmin", &s.argmin);
            for (k, v) in s.report.residuals() {
                ctx.report.metric(format!("argmin_{k}"), v);
            }
            (s.min_violation, s.modulus, s.evaluated)
        }
        SearchKind::Second => {
            let Params::Nonholonomic(p) = &ctx.cfg.params else {
                return Err(unsupported(Command::Search(kind), ctx.cfg.scenario(), "the second-order search covers the nonholonomic example"));
            };
            let r = nonholonomic_reference(p.reference, p.horizon, ctx.dt(1e-2), AdmissibilityPolicy::Report)?;
            let mut grid = default_second_order_grid(p.horizon)?;
            if let Some(deg) = ctx.cfg.run.grid_deg {
                grid.sphere = SphereGrid::degrees(3, deg)?;
            }
            let s = search_second_order(&r, sense, &grid, tol, ctx.cfg.run.loewner_tol)?;
            ctx.report.vector("argmin", &s.argmin.psi0);
            ctx.report.vector("argmin_q0_diag", &s.argmin.q0().diagonal());
            (s.min_violation, s.modulus, s.evaluated)
        }
    };
    ctx.report.metric("min_violation", min);
    ctx.report.metric("modulus", modulus);
    ctx.report.metric("evaluated", evaluated);
    let found = min <= tol;
    ctx.report.metric("candidate_found", found);
    Ok(if found { Status::Success } else { Status::Negative })
}

fn converge(ctx: &mut Ctx) -> Result<Status, CliError> {
    if !matches!(ctx.cfg.params, Params::Nonholonomic(_)) {
        return Err(unsupported(Command::Converge, ctx.cfg.scenario(), "the convergence study uses the nonholonomic example"));
    }
    let run = &ctx.cfg.run;
    let study = run_convergence_study(&run.epsilons, run.omega_ratio, ctx.dt(1e-3), run.bracket, run.scan)?;
    let mut table = String::from("epsilon,omega,horizon,c0,c1,terminal_defect,root_bracketed,root_omega,root_residual,root_attained\n");
    for (r, f) in study.rows.iter().zip(&study.root_finds) {
        table.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{}\n",
            r.epsilon, r.omega, r.horizon, r.c0, r.c1, r.terminal_defect, f.bracketed, f.omega, f.residual, f.attained
        ));
    }
    let path = ctx.out.join(format!("{}.csv", ctx.stem));
    write_file(&path, &table)?;
    ctx.report.artifacts.push(("table".into(), path));
    for (name, fit) in [("c0", study.c0_fit), ("c1", study.c1_fit), ("terminal", study.terminal_fit)] {
        ctx.report.metric(format!("{name}_slope"), fit.slope);
        ctx.report.metric(format!("{name}_r_squared"), fit.r_squared);
        ctx.report.metric(format!("{name}_clean"), fit.clean);
    }
    let attained = study.root_finds.iter().filter(|f| f.attained).count();
    ctx.report.metric("root_attained", format!("{attained}/{}", study.root_finds.len()));
    let best = study.root_finds.iter().map(|f| f.residual.abs()).fold(f64::INFINITY, f64::min);
    ctx.report.metric("best_root_residual", best);
    let clean = study.c0_fit.clean && study.c1_fit.clean && study.terminal_fit.clean && attained == study.root_finds.len();
    Ok(if ctx.strict && !clean { Status::Negative } else { Status::Success })
}

fn montecarlo(ctx: &mut Ctx) -> Result<Status, CliError> {
    let Params::Temperature(p) = &ctx.cfg.params else {
        return Err(unsupported(Command::MonteCarlo, ctx.cfg.scenario(), "Monte Carlo runs use the temperature example"));
    };
    let (sys, cost, cand) = temperature_parts(p, ctx.dt(1e-2))?;
    let law = clamped_law(p, &cand);
    let est = monte_carlo_cost(&sys, &law, &cost, &DVector::from_element(1, p.x0), p.initial_mode(), (0.0, p.horizon), &ctx.ensemble(10_000)?)?;
    ctx.report.metric("cost", format!("{} ± {}", est.mean, est.std_error));
    ctx.report.metric("mean", est.mean);
    ctx.report.metric("std_error", est.std_error);
    ctx.report.metric("n_used", est.n_used);
    ctx.report.metric("n_diverged", est.n_diverged);
    Ok(Status::Success)
}

fn variation(ctx: &mut Ctx) -> Result<Status, CliError> {
    let Params::Temperature(p) = &ctx.cfg.params else {
        return Err(unsupported(Command::VariationTest, ctx.cfg.scenario(), "variation tests use the temperature example"));
    };
    let (sys, cost, cand) = temperature_parts(p, ctx.dt(1e-2))?;
    let law = clamped_law(p, &cand);
    let dir = FeedbackFn(|_t: f64, _x: &DVector<f64>, _q: usize| DVector::from_element(1, 1.0));
    let rows = variation_cost_test(
        &sys,
        &law,
        &dir,
        &ctx.cfg.run.variation_eps,
        &cost,
        &DVector::from_element(1, p.x0),
        p.initial_mode(),
        (0.0, p.horizon),
        &ctx.ensemble(1000)?,
    )?;
    let mut table = String::from("epsilon,delta_j,std_error,n_pairs\n");
    for r in &rows {
        table.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", r.epsilon, r.delta_j, r.std_error, r.n_pairs));
    }
    let path = ctx.out.join(format!("{}.csv", ctx.stem));
    write_file(&path, &table)?;
    ctx.report.artifacts.push(("table".into(), path));
    let negative = rows.iter().filter(|r| r.delta_j + 3.0 * r.std_error < 0.0).count();
    ctx.report.metric("rows", rows.len());
    ctx.report.metric("significant_decreases", negative);
    Ok(Status::Success)
}
