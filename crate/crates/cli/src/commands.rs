use std::path::{Path, PathBuf};
use std::time::Instant;

use ensemble_mdp::tracker::{consumption, track, DualUpdate};
use ensemble_mdp::{
    general_solver, ls_solver, propagate_all, simulator, CyclicModelSpec, LambdaSolveConfig, PenaltySchedule, Problem,
    Solution, TrackConfig, TrackingProblem,
};
use serde_json::json;

use crate::args::{GenModelArgs, GlobalArgs, PenaltyArg, SimulateArgs, SolverKind, TrackArgs, UpdateArg};
use crate::error::CliError;
use crate::output::{state_columns, table_csv, write_atomic, write_json, TransitionFile};
use crate::problem_file::{CostGenerator, CostSpec, GeneratorKind, InitialState, OneOrPerStep, PenaltySpec, ProblemFile, SteadyKeyword};

pub fn load_problem(path: &Path) -> Result<ProblemFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    ProblemFile::parse(&text)
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn gen_model(args: &GenModelArgs, global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let spec = CyclicModelSpec {
        n_states: args.states,
        advance_prob: args.advance_prob,
        on_states: None,
        cost_base: args.cost_base,
        gamma_off_cycle: args.gamma_off_cycle,
        gamma_on_cycle: args.gamma_on_cycle,
        epsilon_on: args.epsilon_on,
        epsilon_off: args.epsilon_off,
        strict_wrap_gamma: args.strict_paper_gamma,
    };
    spec.validate()?;
    if args.horizon == 0 {
        return Err(CliError::Invalid("horizon must be at least 1".into()));
    }
    let seed = global.seed.unwrap_or(0);
    let on = spec.on_states();
    let costs = if args.explicit_costs {
        CostSpec::Explicit(spec.costs(args.horizon, seed)?.charged_rows().to_vec())
    } else {
        CostSpec::Generator(CostGenerator {
            generator: GeneratorKind::Uniform01,
            base: spec.cost_base,
            states: on.clone(),
        })
    };
    let penalty = match args.penalty {
        PenaltyArg::Uniform => PenaltySpec::Uniform(OneOrPerStep::Constant(spec.gamma_on_cycle)),
        PenaltyArg::Cycle => PenaltySpec::Full(OneOrPerStep::Constant(spec.cycle_weights())),
    };
    let states = (0..spec.n_states)
        .map(|s| if on.contains(&s) { format!("on{}", s + 1) } else { format!("off{}", s + 1) })
        .collect();
    let file = ProblemFile {
        n: spec.n_states,
        horizon: args.horizon,
        states: Some(states),
        pbar: spec.pbar()?.rows(),
        rho0: InitialState::Keyword(SteadyKeyword::Steady),
        costs,
        penalty,
        seed,
        epsilon: Some(spec.epsilon()),
    };
    // Reject anything the solvers would reject.
    file.to_problem(None)?;
    let path = args.output.clone().unwrap_or_else(|| global.out_dir.join("problem.json"));
    let mut text = file.to_json();
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn default_solver(penalty: &PenaltySchedule) -> SolverKind {
    match penalty {
        PenaltySchedule::Uniform(_) => SolverKind::Linear,
        PenaltySchedule::PerSource(_) => SolverKind::Normalized,
        PenaltySchedule::Full(_) => SolverKind::General,
    }
}

fn run_solver(prob: &Problem, kind: SolverKind, tol: Option<f64>) -> Result<Solution, CliError> {
    match kind {
        SolverKind::Linear => match prob.penalty {
            PenaltySchedule::Uniform(_) => Ok(ls_solver::solve(prob)?),
            _ => Err(CliError::Invalid(format!(
                "the linear solver needs a uniform penalty, found {}",
                prob.penalty.variant_name()
            ))),
        },
        SolverKind::Normalized => {
            let per_source = prob.with_penalty(prob.penalty.to_per_source(prob.n())?)?;
            Ok(ls_solver::solve(&per_source)?)
        }
        SolverKind::General => {
            let mut cfg = LambdaSolveConfig::default();
            if let Some(tol) = tol {
                cfg.tol = tol;
            }
            Ok(general_solver::solve_with(prob, &cfg)?)
        }
    }
}

fn solver_name(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Linear => "linear",
        SolverKind::Normalized => "normalized",
        SolverKind::General => "general",
    }
}

fn lambda_stats(sol: &Solution) -> serde_json::Value {
    match &sol.lambda_traj {
        None => serde_json::Value::Null,
        Some(l) => {
            let all: Vec<f64> = l.iter().flatten().copied().collect();
            json!({
                "min": all.iter().copied().fold(f64::INFINITY, f64::min),
                "max": all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "mean": all.iter().sum::<f64>() / all.len() as f64,
            })
        }
    }
}

fn write_trajectories(out: &Path, sol: &Solution) -> Result<(), CliError> {
    let n = sol.rho_traj[0].n();
    let rows: Vec<Vec<f64>> = sol.rho_traj.iter().map(|r| r.values().to_vec()).collect();
    write_atomic(&out.join("rho.csv"), &table_csv(&state_columns("rho", n), &rows, 0))?;
    write_json(&out.join("p_traj.json"), &TransitionFile::new(&sol.p_traj))
}

pub fn solve(problem: &Path, global: &GlobalArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let file = load_problem(problem)?;
    let prob = file.to_problem(global.seed)?;
    let load_ms = millis(start);

    let kind = global.solver.unwrap_or_else(|| default_solver(&prob.penalty));
    let start = Instant::now();
    let sol = run_solver(&prob, kind, global.tol)?;
    let solve_ms = millis(start);

    write_trajectories(&global.out_dir, &sol)?;
    let summary = json!({
        "command": "solve",
        "solver": solver_name(kind),
        "penalty": prob.penalty.variant_name(),
        "n": prob.n(),
        "T": prob.horizon(),
        "seed": global.seed.unwrap_or(file.seed),
        "objective": sol.objective,
        "initial_value": sol.initial_value(),
        "phi0": sol.phi_traj[0],
        "lambda": lambda_stats(&sol),
        "mean_entropy": sol.mean_entropy(),
        "timings_ms": { "load": load_ms, "solve": solve_ms },
    });
    write_json(&global.out_dir.join("summary.json"), &summary)?;
    println!("objective {:.10e} ({} solver, {:.1} ms)", sol.objective, solver_name(kind), solve_ms);
    Ok(())
}

pub fn track_signal(args: &TrackArgs, global: &GlobalArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let file = load_problem(&args.problem)?;
    let prob = file.to_problem(global.seed)?;
    let epsilon = file
        .epsilon
        .clone()
        .ok_or_else(|| CliError::Invalid("tracking needs `epsilon` in the problem file".into()))?;
    let target = crate::output::read_signal(&args.signal, prob.horizon())?;
    let load_ms = millis(start);

    let tp = TrackingProblem::new(prob, epsilon.clone(), target.clone())?;
    let mut cfg = TrackConfig {
        max_outer: args.max_outer,
        step: args.step,
        update: match args.update {
            UpdateArg::Newton => DualUpdate::Newton,
            UpdateArg::Gradient => DualUpdate::GradientAscent,
        },
        ..TrackConfig::default()
    };
    if let Some(tol) = global.tol {
        cfg.outer_tol = tol;
    }
    let start = Instant::now();
    let res = track(&tp, &cfg)?;
    let track_ms = millis(start);

    let out = &global.out_dir;
    write_trajectories(out, &res.solution)?;
    let achieved = consumption(&res.solution.rho_traj, &epsilon);
    let rows: Vec<Vec<f64>> = (0..target.len())
        .map(|k| vec![target[k], achieved[k], achieved[k] - target[k], res.xi_traj[k]])
        .collect();
    let columns = ["target", "achieved", "residual", "xi"].map(String::from);
    write_atomic(&out.join("residuals.csv"), &table_csv(&columns, &rows, 1))?;
    let summary = json!({
        "command": "track",
        "converged": res.converged,
        "outer_iterations": res.outer_iterations,
        "max_residual": res.max_residual(),
        "tolerance": cfg.outer_tol,
        "update": match cfg.update { DualUpdate::Newton => "newton", DualUpdate::GradientAscent => "gradient" },
        "residual_history": res.residual_history,
        "xi": res.xi_traj,
        "objective": res.solution.objective,
        "seed": global.seed.unwrap_or(file.seed),
        "timings_ms": { "load": load_ms, "track": track_ms },
    });
    write_json(&out.join("summary.json"), &summary)?;

    if !res.converged {
        return Err(CliError::TrackNotConverged(format!(
            "max residual {:.3e} > {:.3e} after {} outer iterations; see {}",
            res.max_residual(),
            cfg.outer_tol,
            res.outer_iterations,
            out.join("summary.json").display()
        )));
    }
    println!(
        "converged in {} outer iterations, max residual {:.3e}",
        res.outer_iterations,
        res.max_residual()
    );
    Ok(())
}

pub fn simulate(args: &SimulateArgs, global: &GlobalArgs) -> Result<(), CliError> {
    let file = load_problem(&args.problem)?;
    let prob = file.to_problem(global.seed)?;
    let p_traj = TransitionFile::read(&args.p_traj)?.matrices()?;
    if p_traj.len() != prob.horizon() || p_traj.iter().any(|p| p.n() != prob.n()) {
        return Err(CliError::Invalid(format!(
            "transition schedule does not match the problem ({} states, T = {})",
            prob.n(),
            prob.horizon()
        )));
    }
    let seed = global.seed.unwrap_or(file.seed);
    let run = simulator::sample(&p_traj, &prob.rho0, args.devices, seed)?;
    let out = &global.out_dir;
    write_atomic(
        &out.join("empirical_rho.csv"),
        &table_csv(&state_columns("rho", prob.n()), &run.empirical_rho, 0),
    )?;
    match &file.epsilon {
        Some(eps) => {
            let used = simulator::empirical_consumption(&run, eps)?;
            let rows: Vec<Vec<f64>> = used.iter().map(|&v| vec![v]).collect();
            write_atomic(
                &out.join("empirical_consumption.csv"),
                &table_csv(&["consumption".to_string()], &rows, 0),
            )?;
        }
        None => eprintln!("no `epsilon` in the problem file; skipping empirical_consumption.csv"),
    }
    let analytic = propagate_all(&prob.rho0, &p_traj)?;
    println!(
        "{} devices, seed {seed}: max deviation from the analytic occupation {:.3e}",
        args.devices,
        run.max_deviation(&analytic)
    );
    Ok(())
}

pub fn run(cli: &crate::args::Cli) -> Result<(), CliError> {
    use crate::args::Command;
    match &cli.command {
        Command::GenModel(args) => {
            let path = gen_model(args, &cli.global)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Solve { problem } => solve(problem, &cli.global),
        Command::Track(args) => track_signal(args, &cli.global),
        Command::Simulate(args) => simulate(args, &cli.global),
    }
}
