//! Stage runner: check, weight, solve, carleman and the inverse experiments,
//! each writing its artifacts and a hashed manifest into one directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::{default_s_list, sweep_carleman, test_functions, CarlemanReport};
use crate::error::{Condition, Error, Result};
use crate::fields::{
    check_positivity, check_spd, structure_factor, CoefficientSet, Grid, GridFunction, PositivityReport,
    SpdReport, DEFAULT_SPD_DIRECTIONS,
};
use crate::flow::{
    build_inverse_weight, build_weight, check_dissipative, compute_phi0, verify_gradient_identity, DissipativityReport,
    GradientIdentityReport, TraceOptions, WeightData, WeightSummary,
};
use crate::inverse::{
    carleman_reweight, check_admissibility, icp2_run, icp_reduce_and_run, isp_forward_map, isp_map, isp_reconstruct,
    isp_reconstruct_discrepancy, isp_stability_ratio, noisy_observation, random_sources, AdmissibilityCheck,
    NoiseChannels, ProblemKind, Reconstruction, ReconstructOptions, StabilityRatioReport, TraceSample,
};
use crate::io::{table_csv, ArtifactWriter, Cell, ManifestEntry};
use crate::scenario::{Problem, Scenario, Stage};
use crate::transport::{check_energy_estimate, compute_energy, solve_forward, EnergyReport, ForwardProblem, Source};

/// Command-line overrides of scenario parameters.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub s_list: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub noise: Option<f64>,
    pub refine: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.beta {
            s.weight.beta = Some(v);
        }
        if let Some(v) = &self.s_list {
            s.carleman.s_list = Some(v.clone());
        }
        if let Some(v) = self.lambda {
            if let Some(p) = &mut s.isp {
                p.lambda = v;
            }
            if let Some(p) = &mut s.icp {
                p.lambda = v;
            }
            if let Some(p) = &mut s.icp2 {
                p.lambda = v;
            }
        }
        if let Some(v) = self.noise {
            if let Some(p) = &mut s.isp {
                p.noise = v;
            }
        }
        if let Some(v) = self.refine {
            s.grid.refine = v;
        }
        if let Some(v) = &self.out {
            s.out = Some(v.clone());
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub stage: Stage,
    pub out_dir: PathBuf,
    pub manifest: Vec<ManifestEntry>,
    /// Human-readable summary lines.
    pub log: Vec<String>,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, Error::exit_code)
    }
}

#[derive(Serialize)]
struct RunStatus<'a> {
    stage: &'a str,
    exit_code: i32,
    error: Option<String>,
}

#[derive(Serialize)]
struct GridSummary {
    dim: usize,
    shape: [usize; 2],
    spacing: [f64; 2],
    nt: usize,
    dt: f64,
    horizon: f64,
}

fn grid_summary(g: &Grid) -> GridSummary {
    GridSummary {
        dim: g.dim(),
        shape: g.shape(),
        spacing: g.spacing(),
        nt: g.nt(),
        dt: g.dt(),
        horizon: g.horizon(),
    }
}

struct Ctx<'a> {
    sc: &'a Scenario,
    w: ArtifactWriter,
    prefix: String,
    log: Vec<String>,
    problem: Option<Problem>,
    weight: Option<WeightData>,
}

impl Ctx<'_> {
    fn name(&self, file: &str) -> String {
        format!("{}{file}", self.prefix)
    }

    fn json<T: Serialize>(&mut self, file: &str, v: &T) -> Result<()> {
        let n = self.name(file);
        self.w.write_json(&n, v)
    }

    fn text(&mut self, file: &str, v: &str) -> Result<()> {
        let n = self.name(file);
        self.w.write_text(&n, v)
    }

    fn problem(&mut self) -> Result<Problem> {
        if self.problem.is_none() {
            self.problem = Some(self.sc.problem(&[])?);
        }
        Ok(self.problem.clone().expect("set above"))
    }

    fn weight(&mut self) -> Result<WeightData> {
        if self.weight.is_none() {
            let pb = self.problem()?;
            let phi0 = compute_phi0(&pb.cs, &pb.grid, &TraceOptions::for_problem(&pb.cs, &pb.domain))?;
            self.weight = Some(build_weight(&pb.cs, &pb.grid, phi0, self.sc.weight.beta)?);
        }
        Ok(self.weight.clone().expect("set above"))
    }

    /// The weight of the inverse stages, with `beta` chosen for `kappa > 0`
    /// unless the scenario fixes it.
    fn inverse_weight(&mut self) -> Result<WeightData> {
        let pb = self.problem()?;
        let phi0 = compute_phi0(&pb.cs, &pb.grid, &TraceOptions::for_problem(&pb.cs, &pb.domain))?;
        build_inverse_weight(&pb.cs, &pb.grid, phi0, self.sc.weight.beta)
    }
}

/// Output directory of a run: the override, the scenario's `out`, or
/// `out/<stage>`.
pub fn output_dir(sc: &Scenario, stage: Stage) -> PathBuf {
    sc.out.clone().unwrap_or_else(|| PathBuf::from("out").join(stage.name()))
}

/// Loads a scenario, applies overrides and runs `stage` (or the scenario's
/// own kind).
pub fn run_scenario_file(path: &Path, stage: Option<Stage>, ov: &Overrides) -> Result<RunOutcome> {
    let mut sc = Scenario::load(path)?;
    ov.apply(&mut sc);
    run_scenario(&sc, stage)
}

/// Runs one stage and writes its artifacts, a `run_status.json` and the
/// manifest. Stage failures are returned inside the outcome after the
/// artifacts produced so far are written; only output errors are `Err`.
pub fn run_scenario(sc: &Scenario, stage: Option<Stage>) -> Result<RunOutcome> {
    let stage = stage.unwrap_or(sc.kind);
    let dir = output_dir(sc, stage);
    let mut ctx = Ctx {
        sc,
        w: ArtifactWriter::create(&dir)?,
        prefix: String::new(),
        log: Vec::new(),
        problem: None,
        weight: None,
    };
    let result = run_stage(&mut ctx, stage);
    let error = result.err();
    let status = RunStatus {
        stage: stage.name(),
        exit_code: error.as_ref().map_or(0, Error::exit_code),
        error: error.as_ref().map(ToString::to_string),
    };
    ctx.prefix.clear();
    ctx.json("run_status.json", &status)?;
    let Ctx { w, log, .. } = ctx;
    let manifest = w.finish()?;
    Ok(RunOutcome {
        stage,
        out_dir: dir,
        manifest,
        log,
        error,
    })
}

fn run_stage(ctx: &mut Ctx<'_>, stage: Stage) -> Result<()> {
    match stage {
        Stage::Check => stage_check(ctx),
        Stage::Weight => stage_weight(ctx),
        Stage::Solve => stage_solve(ctx),
        Stage::Carleman => stage_carleman(ctx),
        Stage::Isp => stage_isp(ctx),
        Stage::Icp => stage_icp(ctx),
        Stage::Icp2 => stage_icp2(ctx),
        Stage::All => {
            for s in [Stage::Check, Stage::Weight, Stage::Solve, Stage::Carleman] {
                ctx.prefix = format!("{}/", s.name());
                run_stage(ctx, s)?;
            }
            let sc = ctx.sc;
            for (present, s) in [
                (sc.isp.is_some(), Stage::Isp),
                (sc.icp.is_some(), Stage::Icp),
                (sc.icp2.is_some(), Stage::Icp2),
            ] {
                if present {
                    ctx.prefix = format!("{}/", s.name());
                    run_stage(ctx, s)?;
                }
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    grid: GridSummary,
    positivity: PositivityReport,
    spd: SpdReport,
    /// `max |dA/dt - phi A|` of the structure factor, when `A` depends on `t`.
    structure_residual: Option<f64>,
    dissipativity: DissipativityReport,
}

fn stage_check(ctx: &mut Ctx<'_>) -> Result<()> {
    let pb = ctx.problem()?;
    let (cs, g) = (&pb.cs, &pb.grid);
    let positivity = check_positivity(cs, g);
    let spd = check_spd(cs, g, DEFAULT_SPD_DIRECTIONS);
    let structure_residual = if cs.a.is_time_dependent() {
        Some(match structure_factor(cs, g) {
            Ok(sf) => sf.residual,
            Err(Error::Structure { residual }) => residual,
            Err(e) => return Err(e),
        })
    } else {
        None
    };
    let dissipativity = check_dissipative(cs, g, &TraceOptions::for_problem(cs, &pb.domain));
    let rep = CheckReport {
        grid: grid_summary(g),
        positivity,
        spd,
        structure_residual,
        dissipativity,
    };
    ctx.json("check_report.json", &rep)?;
    ctx.log.push(format!(
        "check: rho_observed = {:.6e}, spd C = {:.6e}, dissipative = {}",
        rep.positivity.rho_observed, rep.spd.c_observed, rep.dissipativity.dissipative
    ));
    if !rep.positivity.pass {
        return Err(Error::admissibility(
            Condition::Positivity,
            format!("min |A| = {:.6e} < rho = {:.6e}", rep.positivity.rho_observed, cs.rho),
        ));
    }
    if !rep.spd.pass {
        return Err(Error::admissibility(
            Condition::Spd,
            match (rep.spd.worst_node, rep.spd.worst_time) {
                (Some(i), Some(t)) => format!("observed constant {:.6e} at node {i}, t = {t}", rep.spd.c_observed),
                _ => format!("observed constant {:.6e}", rep.spd.c_observed),
            },
        ));
    }
    if let Some(w) = rep.dissipativity.witness {
        return Err(w.into());
    }
    Ok(())
}

#[derive(Serialize)]
struct WeightReport {
    grid: GridSummary,
    rho_observed: f64,
    dissipativity: DissipativityReport,
    weight: Option<WeightSummary>,
    gradient_identity: Option<GradientIdentityReport>,
}

fn stage_weight(ctx: &mut Ctx<'_>) -> Result<()> {
    let pb = ctx.problem()?;
    let (cs, g) = (&pb.cs, &pb.grid);
    let rho_observed = check_positivity(cs, g).rho_observed;
    let dissipativity = check_dissipative(cs, g, &TraceOptions::for_problem(cs, &pb.domain));
    if let Some(w) = dissipativity.witness.clone() {
        let rep = WeightReport {
            grid: grid_summary(g),
            rho_observed,
            dissipativity,
            weight: None,
            gradient_identity: None,
        };
        ctx.json("weight_report.json", &rep)?;
        return Err(w.into());
    }
    let wd = ctx.weight()?;
    let gi = verify_gradient_identity(cs, g, &wd);
    ctx.w.write_grid_function(&ctx.name("phi0.csv"), g, &wd.phi0, &["phi0"])?;
    ctx.w.write_grid_function(&ctx.name("grad_phi0.csv"), g, &wd.grad_phi0, &["dphi0_dx", "dphi0_dy"])?;
    let summary = wd.summary();
    ctx.log.push(format!(
        "weight: beta = {:.6}, delta = {:.6}, kappa = {:.6}, T0 = {:.6}",
        summary.beta, summary.delta, summary.kappa, summary.t0
    ));
    let rep = WeightReport {
        grid: grid_summary(g),
        rho_observed,
        dissipativity,
        weight: Some(summary),
        gradient_identity: Some(gi),
    };
    ctx.json("weight_report.json", &rep)
}

#[derive(Serialize)]
struct SolveReport {
    grid: GridSummary,
    corner_mismatches: Vec<usize>,
    outflow_trace_norms: (f64, f64),
    /// Present for zero inflow and initial data.
    energy: Option<EnergyReport>,
}

fn stage_solve(ctx: &mut Ctx<'_>) -> Result<()> {
    let pb = ctx.problem()?;
    let (cs, g) = (&pb.cs, &pb.grid);
    let inflow = ctx.sc.scalar(&ctx.sc.solve.inflow)?;
    let init = ctx.sc.scalar(&ctx.sc.solve.init)?;
    let homogeneous = inflow.is_zero() && init.is_zero();
    let problem = ForwardProblem {
        source: Source::from_coefficients(cs),
        inflow,
        init,
    };
    let sol = solve_forward(cs, g, &problem)?;
    ctx.w.write_grid_function(&ctx.name("u.csv"), g, &sol.u, &["u"])?;
    ctx.w.write_grid_function(&ctx.name("dtu.csv"), g, &sol.dtu, &["dtu"])?;

    let mut header = vec!["facet", "x"];
    if g.dim() == 2 {
        header.push("y");
    }
    header.extend(["t", "u", "dtu"]);
    let rows: Vec<Vec<Cell>> = sol
        .traces
        .iter()
        .map(|r| {
            let mut row = vec![Cell::S(r.facet.id().into()), Cell::F(r.x[0])];
            if g.dim() == 2 {
                row.push(Cell::F(r.x[1]));
            }
            row.extend([Cell::F(r.t), Cell::F(r.u), Cell::F(r.dtu)]);
            row
        })
        .collect();
    ctx.text("trace_sigma_plus.csv", &table_csv(&header, &rows))?;

    let trace = compute_energy(&sol, cs, g);
    let rows: Vec<Vec<Cell>> = trace
        .times
        .iter()
        .zip(&trace.energy)
        .map(|(t, e)| vec![Cell::F(*t), Cell::F(*e)])
        .collect();
    ctx.text("energy.csv", &table_csv(&["t", "energy"], &rows))?;

    let energy = if homogeneous {
        let f: Vec<f64> = (0..g.node_count())
            .map(|i| if g.is_active(i) { cs.f.value(g.coords(i), 0.0) } else { 0.0 })
            .collect();
        Some(check_energy_estimate(&sol, cs, g, &f)?)
    } else {
        None
    };
    if let Some(e) = &energy {
        ctx.log.push(format!("solve: C_energy = {:.6}", e.c_energy));
    }
    let rep = SolveReport {
        grid: grid_summary(g),
        corner_mismatches: sol.corner_mismatches.clone(),
        outflow_trace_norms: sol.trace_norms(),
        energy,
    };
    ctx.json("solve_report.json", &rep)
}

#[derive(Serialize)]
struct CarlemanEntry {
    index: usize,
    s_star_observed: Option<f64>,
    c_observed: Option<f64>,
    violation: bool,
    vacuous: bool,
}

#[derive(Serialize)]
struct CarlemanSummary {
    seed: u64,
    s_list: Vec<f64>,
    functions: Vec<CarlemanEntry>,
    /// Largest `c_observed` over the functions with a tail.
    c_observed: Option<f64>,
    /// Largest `s_star_observed` over the functions with a tail.
    s_star_observed: Option<f64>,
    /// Functions without a nonincreasing tail.
    no_tail: Vec<usize>,
}

fn stage_carleman(ctx: &mut Ctx<'_>) -> Result<()> {
    let pb = ctx.problem()?;
    let wd = ctx.weight()?;
    let (cs, g) = (&pb.cs, &pb.grid);
    let s_list = ctx.sc.carleman.s_list.clone().unwrap_or_else(default_s_list);
    if s_list.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("s values must be positive".into()));
    }
    let seed = ctx.sc.seed;
    let funcs = test_functions(g, seed, ctx.sc.carleman.count);
    let reports: Vec<CarlemanReport> = funcs
        .par_iter()
        .map(|tf| sweep_carleman(cs, g, &wd, &tf.sample(g, &wd), &s_list))
        .collect();
    let mut rows = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        for row in &r.rows {
            rows.push(vec![
                Cell::I(k),
                Cell::F(row.s),
                Cell::F(row.lhs_interior),
                Cell::F(row.lhs_initial),
                Cell::F(row.rhs_interior),
                Cell::F(row.rhs_outflow),
                Cell::F(row.rhs_terminal),
                row.c_required.map_or(Cell::Missing, Cell::F),
            ]);
        }
    }
    ctx.text(
        "carleman_sweep.csv",
        &table_csv(
            &["function", "s", "lhs_interior", "lhs_initial", "rhs_interior", "rhs_outflow", "rhs_terminal", "c_required"],
            &rows,
        ),
    )?;
    let functions: Vec<CarlemanEntry> = reports
        .iter()
        .enumerate()
        .map(|(index, r)| CarlemanEntry {
            index,
            s_star_observed: r.s_star_observed,
            c_observed: r.c_observed,
            violation: r.violation,
            vacuous: r.vacuous,
        })
        .collect();
    let summary = CarlemanSummary {
        seed,
        s_list,
        c_observed: functions.iter().filter_map(|f| f.c_observed).reduce(f64::max),
        s_star_observed: functions.iter().filter_map(|f| f.s_star_observed).reduce(f64::max),
        no_tail: functions
            .iter()
            .filter(|f| f.s_star_observed.is_none() && !f.vacuous)
            .map(|f| f.index)
            .collect(),
        functions,
    };
    ctx.log.push(format!(
        "carleman: C_observed = {:?}, s_star = {:?}, {} without tail",
        summary.c_observed,
        summary.s_star_observed,
        summary.no_tail.len()
    ));
    ctx.json("carleman_summary.json", &summary)
}

fn observation_csv(g: &Grid, samples: &[TraceSample], noisy: Option<&[TraceSample]>) -> String {
    let mut header = vec!["x"];
    if g.dim() == 2 {
        header.push("y");
    }
    header.extend(["t", "weight", "u", "dtu"]);
    if noisy.is_some() {
        header.extend(["u_noisy", "dtu_noisy"]);
    }
    let rows: Vec<Vec<Cell>> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let x = g.coords(s.node);
            let mut row = vec![Cell::F(x[0])];
            if g.dim() == 2 {
                row.push(Cell::F(x[1]));
            }
            row.extend([Cell::F(g.time(s.level)), Cell::F(s.weight), Cell::F(s.u), Cell::F(s.dtu)]);
            if let Some(n) = noisy {
                row.extend([Cell::F(n[k].u), Cell::F(n[k].dtu)]);
            }
            row
        })
        .collect();
    table_csv(&header, &rows)
}

fn field_csv(g: &Grid, est: &[f64], truth: &[f64], names: &[&str]) -> Result<String> {
    let ell = names.len() / 2;
    let mut vals = Vec::with_capacity(g.node_count() * 2 * ell);
    for i in 0..g.node_count() {
        vals.extend_from_slice(&est[i * ell..(i + 1) * ell]);
        vals.extend_from_slice(&truth[i * ell..(i + 1) * ell]);
    }
    let gf = GridFunction::from_values(g.node_count(), 1, 2 * ell, vals)?;
    Ok(crate::io::grid_function_csv(g, &gf, names))
}

fn require_cg(rec: &Reconstruction) -> Result<()> {
    if rec.cg.stagnated {
        return Err(Error::Numerical(format!(
            "conjugate gradients stagnated after {} iterations at relative residual {:.3e}",
            rec.cg.iterations, rec.cg.rel_residual
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct IspReport {
    grid: GridSummary,
    lambda: f64,
    noise: Option<NoiseChannels>,
    reconstruction: Reconstruction,
    ensemble: StabilityRatioReport,
}

fn stage_isp(ctx: &mut Ctx<'_>) -> Result<()> {
    let p = ctx.sc.isp.clone().ok_or_else(|| Error::Config("missing [isp] block".into()))?;
    let pb = ctx.problem()?;
    let wd = ctx.inverse_weight()?;
    let (cs, g) = (&pb.cs, &pb.grid);
    let adm = check_admissibility(ProblemKind::Isp, cs, g, &[&wd], p.m0, f64::INFINITY);
    ctx.json("admissibility_report.json", &adm)?;
    adm.require()?;

    let mut map = isp_map(cs, g, p.stride)?;
    if p.carleman_s > 0.0 {
        carleman_reweight(&mut map, g, &wd, p.carleman_s);
    }
    let source = ctx.sc.scalar(&p.source)?;
    let truth: Vec<f64> = (0..g.node_count())
        .map(|i| if g.is_active(i) { source.value(g.coords(i), 0.0) } else { 0.0 })
        .collect();
    let clean = isp_forward_map(&map, &truth);
    let opts = ReconstructOptions {
        lambda: p.lambda,
        ..Default::default()
    };
    let (rec, noise, noisy) = if p.noise > 0.0 {
        let (noisy, ch) = noisy_observation(&clean, p.noise, ctx.sc.seed);
        let lambdas: Vec<f64> = (0..13).map(|k| 10f64.powf(-1.0 - 0.75 * k as f64)).collect();
        let rec = isp_reconstruct_discrepancy(&map, &noisy, g, &opts, ch.norm, 1.1, &lambdas, Some(&truth));
        (rec, Some(ch), Some(noisy))
    } else {
        (isp_reconstruct(&map, &clean, g, &opts, Some(&truth)), None, None)
    };
    let samples = map.samples(&clean.y);
    let noisy_samples = noisy.as_ref().map(|o| map.samples(&o.y));
    ctx.text("observation.csv", &observation_csv(g, &samples, noisy_samples.as_deref()))?;
    ctx.text("f_hat.csv", &field_csv(g, &rec.f_hat, &truth, &["f_hat", "f_true"])?)?;

    let ensemble = isp_stability_ratio(&map, g, &random_sources(g, ctx.sc.seed, p.ensemble));
    ctx.log.push(format!(
        "isp: relative error = {:.4e}, max ratio = {:?}",
        rec.rel_error.unwrap_or(f64::NAN),
        ensemble.max_ratio
    ));
    let rep = IspReport {
        grid: grid_summary(g),
        lambda: rec.lambda,
        noise,
        reconstruction: rec,
        ensemble,
    };
    ctx.json("stability_report.json", &rep)?;
    require_cg(&rep.reconstruction)
}

fn stage_icp(ctx: &mut Ctx<'_>) -> Result<()> {
    let p = ctx.sc.icp.clone().ok_or_else(|| Error::Config("missing [icp] block".into()))?;
    let setup = ctx.sc.icp_setup(&p, true)?;
    let cs_p1: CoefficientSet = ctx.sc.coefficients()?.with_p(setup.p1.clone());
    let cs_p2: CoefficientSet = ctx.sc.coefficients()?.with_p(setup.p2.clone());
    // Both coefficients must be stable on the grid.
    ctx.problem = Some(ctx.sc.problem(&[&cs_p1, &cs_p2])?);
    let pb = ctx.problem()?;
    let wd = ctx.inverse_weight()?;
    let (cs, g) = (&pb.cs, &pb.grid);
    let adm = check_admissibility(
        ProblemKind::Icp {
            alpha: &setup.alpha,
            p1: &setup.p1,
            p2: &setup.p2,
        },
        cs,
        g,
        &[&wd],
        setup.m0,
        setup.bound_m,
    );
    ctx.json("admissibility_report.json", &adm)?;
    adm.require()?;
    let rep = icp_reduce_and_run(cs, g, &wd, &setup)?;
    ctx.text("observation.csv", &observation_csv(g, &rep.traces, None))?;
    if let Some(rec) = &rep.reconstruction {
        ctx.text("f_hat.csv", &field_csv(g, &rec.f_hat, &rep.truth, &["f_hat", "f_true"])?)?;
    }
    ctx.log.push(format!(
        "icp: ratio = {:?}, residual = {:.4e}, relative error = {:?}",
        rep.trial.ratio,
        rep.residual_l2,
        rep.reconstruction.as_ref().and_then(|r| r.rel_error)
    ));
    ctx.json("stability_report.json", &rep)?;
    match &rep.reconstruction {
        Some(r) => require_cg(r),
        None => Ok(()),
    }
}

fn stage_icp2(ctx: &mut Ctx<'_>) -> Result<()> {
    let p = ctx.sc.icp2.clone().ok_or_else(|| Error::Config("missing [icp2] block".into()))?;
    let setup = ctx.sc.icp2_setup(&p, true)?;
    let dim = ctx.sc.dim();
    let pair_cs = |pair: &crate::inverse::PrincipalPair| {
        CoefficientSet::transport(pair.a.clone(), setup.rho)
            .with_a0(pair.a0.clone())
            .with_p(setup.p.clone())
    };
    let (c1, c2) = (pair_cs(&setup.pair1), pair_cs(&setup.pair2));
    ctx.problem = Some(ctx.sc.problem(&[&c1, &c2])?);
    let pb = ctx.problem()?;
    let g = &pb.grid;
    if setup.measurements.len() != dim + 1 {
        return Err(Error::Config(format!(
            "icp2 needs {} measurements in {dim} dimensions, got {}",
            dim + 1,
            setup.measurements.len()
        )));
    }
    let result = icp2_run(g, &setup);
    let rep = match result {
        Ok(r) => r,
        Err(e) => {
            if let Error::Admissibility { .. } = e {
                // Re-run the checks alone for the report.
                let alphas: Vec<_> = setup.measurements.iter().map(|m| m.alpha.clone()).collect();
                let adm: AdmissibilityCheck =
                    check_admissibility(ProblemKind::Icp2 { alphas: &alphas }, &c1, g, &[], setup.m0, setup.bound_m);
                ctx.json("admissibility_report.json", &adm)?;
            }
            return Err(e);
        }
    };
    ctx.json("admissibility_report.json", &rep.admissibility)?;
    for (m, tr) in rep.traces.iter().enumerate() {
        ctx.text(&format!("observation_m{}.csv", m + 1), &observation_csv(g, tr, None))?;
    }
    if let Some(rec) = &rep.reconstruction {
        let mut names = vec!["f_hat_a0".to_string()];
        for k in 0..dim {
            names.push(format!("f_hat_a{}", k + 1));
        }
        names.push("f_true_a0".to_string());
        for k in 0..dim {
            names.push(format!("f_true_a{}", k + 1));
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        ctx.text("f_hat.csv", &field_csv(g, &rec.f_hat, &rep.truth, &refs)?)?;
    }
    ctx.log.push(format!(
        "icp2: ratio = {:?}, residual = {:.4e}, relative error = {:?}",
        rep.ratio,
        rep.residual_l2,
        rep.reconstruction.as_ref().and_then(|r| r.rel_error)
    ));
    ctx.json("stability_report.json", &rep)?;
    match &rep.reconstruction {
        Some(r) => require_cg(r),
        None => Ok(()),
    }
}
