use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gridctl::controller::check_gain_conditions;
use gridctl::model::Model;
use gridctl::oracle::{
    check_equilibrium, kkt_residuals, solve_equilibrium_qp, OracleSolution, QpProblem,
};
use gridctl::report::{metrics, write_csv, write_plot_data, ReportError};
use gridctl::sim::{ControllerKind, SimError, Simulation};
use gridctl::{load_scenario_file, ControllerConfig64, Scenario, ScenarioError};

/// Converged control must match the oracle this closely (inf-norm, p.u.).
const PC_TOL: f64 = 1e-4;
/// Largest KKT or equilibrium residual accepted by `certify`.
const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "gridctl",
    version,
    about = "Frequency control and congestion management simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "proposed", value_parser = parse_kind)]
        controller: ControllerKind,
        #[arg(long)]
        out: PathBuf,
        /// Override the integration step (s).
        #[arg(long)]
        dt: Option<f64>,
        /// Override the simulated horizon (s).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run the proposed controller to the horizon and check the final state
    /// against the optimality oracle.
    Certify { scenario: PathBuf },
    /// Print the derived gate bounds and check the gain conditions.
    Gains { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    PlotData,
}

fn parse_kind(s: &str) -> Result<ControllerKind, String> {
    s.parse()
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if matches!(e, ScenarioError::Io { .. }) {
            3
        } else {
            1
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(e) => e.into(),
            SimError::Gains(_) => Self::validation(e),
            SimError::Blowup { .. } => Self {
                code: 2,
                message: e.to_string(),
            },
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Self {
            code: 3,
            message: e.to_string(),
        }
    }
}

fn load(path: &PathBuf) -> Result<Scenario, Failure> {
    let s = load_scenario_file(path)?;
    s.validate()?;
    Ok(s)
}

fn simulate(
    path: &PathBuf,
    kind: ControllerKind,
    out: &PathBuf,
    dt: Option<f64>,
    horizon: Option<f64>,
    format: Format,
) -> Result<(), Failure> {
    let mut scenario = load(path)?;
    if let Some(dt) = dt {
        scenario.sim.dt = dt;
    }
    if let Some(h) = horizon {
        scenario.sim.horizon = h;
    }
    scenario.validate()?;
    let traj = gridctl::sim::run(&scenario, kind)?;
    std::fs::create_dir_all(out).map_err(|source| ReportError::Io {
        path: out.display().to_string(),
        source,
    })?;
    match format {
        Format::Csv => {
            let file = out.join("trajectory.csv");
            write_csv(&traj, &file)?;
            println!("wrote {}", file.display());
        }
        Format::PlotData => {
            for file in write_plot_data(&traj, &scenario, out)? {
                println!("wrote {}", file.display());
            }
        }
    }
    let m = metrics(&traj, &scenario);
    println!("controller       {kind}");
    println!(
        "nadir            {:.6e} p.u. ({:.6e} Hz)",
        m.nadir, m.nadir_hz
    );
    println!("settling time    {:.3} s", m.settling_time);
    println!("final deviation  {:.3e} p.u.", m.final_deviation);
    println!("power balance    {:.3e} p.u.", m.power_balance);
    for (j, v) in &m.line_violation {
        let (f, t) = scenario.network.line_label(*j);
        println!("line {f}-{t} excess {v:.3e} p.u.");
    }
    for (k, r) in m.interarea_residual.iter().enumerate() {
        println!("area {k} residual {r:.3e} p.u.");
    }
    Ok(())
}

fn certify(path: &PathBuf) -> Result<(), Failure> {
    let scenario = load(path)?;
    let model: Model<f64> = Model::from_scenario(&scenario);
    let problem = QpProblem::new(&model, scenario.disturbance.clone());
    let oracle = solve_equilibrium_qp(&problem);
    let mut sim = Simulation::<f64>::new(&scenario, ControllerKind::Proposed)?;
    while !sim.finished() {
        sim.step()?;
    }
    let cstate = sim.controller().clone();
    let pc = sim.control();
    let freq = sim
        .measurements()
        .omega
        .iter()
        .fold(0.0f64, |a, w| a.max(w.abs()));
    println!("final |omega|    {freq:.3e} p.u.");

    let eq = check_equilibrium(&model, sim.config(), &cstate, &sim.disturbance_signal());
    println!("equilibrium      {eq}");
    if !oracle.is_optimal() {
        return Err(Failure::validation(
            "oracle: the equilibrium problem is infeasible; no optimum to certify against",
        ));
    }
    let dpc = pc
        .iter()
        .zip(&oracle.pc)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    println!("oracle active    {:?}", oracle.active);
    println!("|pC - pC*|       {dpc:.3e}");
    let kkt = kkt_residuals(&OracleSolution::from_controller(&model, &cstate), &problem);
    println!("kkt              {kkt}");

    let mut bad = Vec::new();
    if dpc > PC_TOL {
        bad.push(format!("control differs from the optimum by {dpc:.3e}"));
    }
    for (name, v) in kkt.violations(RESIDUAL_TOL) {
        bad.push(format!("kkt {name} = {v:.3e}"));
    }
    for (name, v) in eq.violations(RESIDUAL_TOL) {
        bad.push(format!("equilibrium {name} = {v:.3e}"));
    }
    if bad.is_empty() {
        println!("certified");
        Ok(())
    } else {
        Err(Failure::validation(bad.join("\n")))
    }
}

fn gains(path: &PathBuf) -> Result<(), Failure> {
    let scenario = load(path)?;
    let model: Model<f64> = Model::from_scenario(&scenario);
    let cfg = ControllerConfig64::from_scenario(&scenario);
    let net = &scenario.network;
    println!("rho {}", cfg.rho);
    println!("bus  K_u_lo  K_u_hi");
    for (i, b) in net.buses.iter().enumerate() {
        println!("{}  {}  {}", b.id, cfg.k_u_lo[i], cfg.k_u_hi[i]);
    }
    println!("line  K_mu_lo  K_mu_hi");
    for j in 0..net.m() {
        let (f, t) = net.line_label(j);
        println!("{f}-{t}  {}  {}", cfg.k_mu_lo[j], cfg.k_mu_hi[j]);
    }
    if !net.areas.is_empty() {
        println!("area  K_phi_lo  K_phi_hi");
        for k in 0..net.areas.len() {
            println!("{k}  {}  {}", cfg.k_phi_lo[k], cfg.k_phi_hi[k]);
        }
    }
    match check_gain_conditions(&model, &cfg) {
        Ok(()) => {
            println!("gain conditions hold");
            Ok(())
        }
        Err(v) => Err(Failure::validation(
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("\n"),
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            scenario,
            controller,
            out,
            dt,
            horizon,
            format,
        } => simulate(scenario, *controller, out, *dt, *horizon, *format),
        Command::Certify { scenario } => certify(scenario),
        Command::Gains { scenario } => gains(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
