mod table;

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spinchern_core::lab::{self, SweepConfig, SweepMethod};
use spinchern_core::pulsesim::{self, compile_zz, verify_program, verify_sequence, PulseProgram};
use spinchern_core::quench::{self, QuenchProtocol};
use spinchern_core::spectral::{self, SphereGrid};
use spinchern_core::{ChainSpec, Error, FieldPoint, MoleculeSpec};

use table::{num, Table};

const THREADS_ENV: &str = "SPINCHERN_THREADS";

#[derive(Parser)]
#[command(
    name = "spinchern",
    version,
    about = "Berry curvature and Chern numbers of Heisenberg spin chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy levels against J at a fixed field direction
    Spectrum(SpectrumArgs),
    /// Ground-state curvature at one coupling
    Curvature(CurvatureArgs),
    /// Curvature sweep over J
    Sweep(SweepArgs),
    /// Ground-state level crossings in J
    Crossings(CrossingArgs),
    /// Refocusing sequences for a molecule's zz couplings
    #[command(subcommand)]
    Pulse(PulseCommand),
    /// M/v against quench velocity
    LinearZone(LinearZoneArgs),
    /// Pulse-angle error Monte Carlo on the loop sequence
    Robustness(RobustnessArgs),
}

#[derive(Args)]
struct Grid {
    #[arg(long, allow_hyphen_values = true)]
    j_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    j_max: Option<f64>,
    #[arg(long)]
    j_step: Option<f64>,
}

impl Grid {
    fn given(&self) -> bool {
        self.j_min.is_some() || self.j_max.is_some() || self.j_step.is_some()
    }

    fn bounds(&self) -> (f64, f64) {
        (self.j_min.unwrap_or(-2.0), self.j_max.unwrap_or(2.0))
    }

    fn values(&self) -> Result<Vec<f64>, CliError> {
        let (lo, hi) = self.bounds();
        let v = lab::j_grid(lo, hi, self.j_step.unwrap_or(0.05));
        if v.is_empty() {
            return Err(CliError::Usage(format!("empty J grid [{lo}, {hi}]")));
        }
        Ok(v)
    }
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    grid: Grid,
    /// Polar angle of the field
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Number of lowest levels to print
    #[arg(long, default_value_t = 4)]
    levels: usize,
}

#[derive(Args)]
struct CurvatureArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    j: f64,
    #[arg(long, default_value = "spectral")]
    method: SweepMethod,
    #[arg(long, default_value_t = FRAC_PI_2)]
    theta: f64,
    #[arg(long, default_value_t = quench::DEFAULT_VELOCITY)]
    velocity: f64,
    #[arg(long, default_value_t = quench::DEFAULT_STEPS)]
    steps: usize,
    /// Lattice size (latitudes = longitudes) for the lattice method
    #[arg(long, default_value_t = 24)]
    lattice: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with SweepConfig fields; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    grid: Grid,
    #[arg(long)]
    method: Option<SweepMethod>,
    #[arg(long, value_delimiter = ',')]
    velocity: Vec<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the doubled-step convergence check
    #[arg(long)]
    no_check: bool,
    /// Write CSV plus JSON sidecar here instead of CSV to stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print an aligned table instead of CSV
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct CrossingArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    grid: Grid,
}

#[derive(Args)]
struct MoleculeArgs {
    /// Molecule JSON (labels, shifts_hz, couplings_hz)
    #[arg(long)]
    molecule: Option<PathBuf>,
    /// Nearest-neighbour couplings in Hz when no molecule file is given
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    couplings: Vec<f64>,
    /// Expected spin count
    #[arg(long)]
    n: Option<usize>,
    /// Replace every nearest-neighbour coupling by J12
    #[arg(long)]
    equal_couplings: bool,
    /// Simulated coupling J of the target interaction
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    target_j: f64,
    /// Simulated evolution time
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
}

impl MoleculeArgs {
    fn load(&self) -> Result<MoleculeSpec, CliError> {
        let mut m = match (&self.molecule, self.couplings.is_empty()) {
            (Some(path), _) => MoleculeSpec::load(path).map_err(domain("model"))?,
            (None, false) => {
                MoleculeSpec::chain(vec![0.0; self.couplings.len() + 1], &self.couplings)
                    .map_err(domain("model"))?
            }
            (None, true) => {
                return Err(CliError::Usage(
                    "give --molecule FILE or --couplings J12,J23,…".into(),
                ))
            }
        };
        if let Some(n) = self.n {
            if n != m.n_spins() {
                return Err(CliError::Usage(format!(
                    "--n {n} but the molecule has {} spins",
                    m.n_spins()
                )));
            }
        }
        if self.equal_couplings {
            let j12 = m.coupling(0, 1);
            for k in 1..m.n_spins() - 1 {
                m.couplings_hz[k][k + 1] = j12;
                m.couplings_hz[k + 1][k] = j12;
            }
        }
        Ok(m)
    }
}

#[derive(Subcommand)]
enum PulseCommand {
    /// Solve for π-pulse placements
    Compile {
        #[command(flatten)]
        molecule: MoleculeArgs,
        /// Write the pulse program JSON here
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate a program (or the compiled one) against the target propagator
    Verify {
        #[command(flatten)]
        molecule: MoleculeArgs,
        #[arg(long)]
        program: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LinearZoneArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    j: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.05,0.1,0.2,0.5,1,1.53,2,3,5"
    )]
    velocities: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    j: f64,
    /// Bound of the uniform pulse-angle error
    #[arg(long, default_value_t = 5.0)]
    error_deg: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = quench::DEFAULT_VELOCITY)]
    velocity: f64,
    #[arg(long, default_value_t = quench::DEFAULT_STEPS)]
    steps: usize,
}

enum CliError {
    Usage(String),
    Domain(&'static str, Error),
}

fn domain(module: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::Domain(module, e)
}

fn chain(n: usize, j: f64) -> Result<ChainSpec, CliError> {
    ChainSpec::new(n, j).map_err(domain("model"))
}

fn spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    let js = a.grid.values()?;
    let levels = a.levels.max(1).min(1 << a.n);
    let mut t =
        Table::new(std::iter::once("j".to_string()).chain((0..levels).map(|k| format!("e{k}"))));
    for j in js {
        let e = spectral::energy_levels(chain(a.n, j)?, FieldPoint::meridian(a.theta, 1.0))
            .map_err(domain("spectral"))?;
        t.row(std::iter::once(num(j)).chain(e.iter().take(levels).map(|x| num(*x))));
    }
    print!("{}", t.render());
    Ok(())
}

fn curvature(a: CurvatureArgs) -> Result<(), CliError> {
    let spec = chain(a.n, a.j)?;
    let mut t = Table::new(["quantity", "value"]);
    match a.method {
        SweepMethod::Spectral => {
            let s = spectral::curvature_spectral(spec, FieldPoint::meridian(a.theta, 1.0))
                .map_err(domain("spectral"))?;
            t.row(["f_phitheta".to_string(), num(s.f_phitheta)]);
            t.row(["gap".to_string(), num(s.gap)]);
            t.row([
                "chern (2F at equator)".to_string(),
                num(spectral::chern_reduced(spec).map_err(domain("spectral"))?),
            ]);
        }
        SweepMethod::Lattice => {
            let grid = SphereGrid::new(a.lattice, a.lattice).map_err(domain("spectral"))?;
            let c = spectral::chern_lattice(spec, grid).map_err(domain("spectral"))?;
            t.row(["chern".to_string(), c.to_string()]);
        }
        SweepMethod::Dynamical | SweepMethod::Trotter => {
            let proto = QuenchProtocol::new(a.velocity, a.steps).map_err(domain("quench"))?;
            let r = if a.method == SweepMethod::Dynamical {
                quench::evolve_quench(spec, &proto).map_err(domain("quench"))?
            } else {
                pulsesim::simulate_protocol_trotter(spec, &proto).map_err(domain("pulsesim"))?
            };
            t.row(["m_phi".to_string(), num(r.m_phi)]);
            t.row(["f_phitheta".to_string(), num(r.f_extracted)]);
            t.row(["adiabatic overlap".to_string(), num(r.adiabatic_overlap)]);
            t.row([
                "step drift".to_string(),
                r.step_drift.map_or("-".into(), |d| format!("{d:.2e}")),
            ]);
        }
    }
    print!("{}", t.render());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut cfg = match (&a.config, a.n) {
        (Some(path), _) => SweepConfig::load(path).map_err(domain("lab"))?,
        (None, Some(n)) => {
            SweepConfig::new(n, a.method.unwrap_or(SweepMethod::Spectral)).map_err(domain("lab"))?
        }
        (None, None) => return Err(CliError::Usage("sweep needs --config FILE or --n N".into())),
    };
    if let Some(n) = a.n {
        cfg.spec = chain(n, cfg.spec.coupling_j)?;
    }
    if a.grid.given() {
        cfg.j_values = a.grid.values()?;
    }
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if !a.velocity.is_empty() {
        cfg.velocities = a.velocity.clone();
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.no_check {
        cfg.check_convergence = false;
    }
    if a.output.is_some() {
        cfg.output_path = a.output.clone();
    }

    let rows = lab::run_sweep(&cfg).map_err(domain("lab"))?;
    let plateaus = match lab::detect_plateaus(&rows) {
        Ok(p) => p,
        Err(Error::TooFewRows { .. }) => Vec::new(),
        Err(e) => return Err(CliError::Domain("lab", e)),
    };

    match &cfg.output_path {
        Some(path) => {
            let lo = cfg.j_values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = cfg
                .j_values
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let crossings = if lo < hi {
                spectral::find_crossings(cfg.spec, (lo, hi)).map_err(domain("spectral"))?
            } else {
                Vec::new()
            };
            lab::export_results(&rows, &plateaus, &crossings, Some(&cfg), path)
                .map_err(domain("lab"))?;
            let mut t = Table::new(["plateau", "j_lo", "j_hi", "mean", "std", "theory", "rows"]);
            for (k, p) in plateaus.iter().enumerate() {
                t.row([
                    (k + 1).to_string(),
                    num(p.j_range.0),
                    num(p.j_range.1),
                    num(p.plateau_mean),
                    num(p.plateau_std),
                    num(p.nearest_theory),
                    p.members.to_string(),
                ]);
            }
            print!("{}", t.render());
            println!(
                "wrote {} rows to {} (+ {})",
                rows.len(),
                path.display(),
                lab::sidecar_path(path).display()
            );
        }
        None if a.table => {
            let mut t = Table::new(lab::CSV_HEADER);
            for r in &rows {
                t.row([
                    num(r.j),
                    num(r.f_phitheta),
                    num(r.chern),
                    num(r.gap_at_pole),
                    r.method.to_string(),
                    r.converged.to_string(),
                ]);
            }
            print!("{}", t.render());
        }
        None => lab::write_rows_csv(&rows, std::io::stdout().lock()).map_err(domain("lab"))?,
    }
    Ok(())
}

fn crossings(a: CrossingArgs) -> Result<(), CliError> {
    let found =
        spectral::find_crossings(chain(a.n, 0.0)?, a.grid.bounds()).map_err(domain("spectral"))?;
    let mut t = Table::new(["crossing", "j"]);
    for (k, j) in found.iter().enumerate() {
        t.row([(k + 1).to_string(), format!("{j:.10}")]);
    }
    print!("{}", t.render());
    Ok(())
}

fn pulse(cmd: PulseCommand) -> Result<(), CliError> {
    match cmd {
        PulseCommand::Compile { molecule, output } => {
            let m = molecule.load()?;
            let c = compile_zz(&m, molecule.target_j, molecule.tau).map_err(domain("pulsesim"))?;
            for d in &c.diagnostics {
                eprintln!("note: {d}");
            }
            let mut t = Table::new(["segment", "flips_before", "fraction", "t_s", "signs"]);
            for (k, s) in c.segments.iter().enumerate() {
                let flips: Vec<String> =
                    s.flips_before.iter().map(|i| (i + 1).to_string()).collect();
                let signs: String = s
                    .signs
                    .iter()
                    .map(|&x| if x > 0 { '+' } else { '-' })
                    .collect();
                t.row([
                    (k + 1).to_string(),
                    if flips.is_empty() {
                        "-".into()
                    } else {
                        flips.join(",")
                    },
                    num(s.fraction),
                    format!("{:.6e}", s.fraction * c.wall_time_s),
                    signs,
                ]);
            }
            print!("{}", t.render());
            println!(
                "wall time {:.6e} s, rate {:.6} rad/s",
                c.wall_time_s, c.rate
            );
            if let Some(cf) = &c.closed_form {
                let shown: Vec<String> = cf.iter().map(|x| format!("{x:.6}")).collect();
                println!("closed-form timings / tau: {}", shown.join(", "));
            }
            let fidelity = verify_sequence(&c, &m)
                .map_err(domain("pulsesim"))?
                .fidelity;
            println!("fidelity {fidelity:.12}");
            if let Some(path) = output {
                let json = c.to_program().to_json().map_err(domain("pulsesim"))?;
                std::fs::write(&path, json).map_err(|e| CliError::Domain("pulsesim", e.into()))?;
                println!("wrote {}", path.display());
            }
        }
        PulseCommand::Verify { molecule, program } => {
            let m = molecule.load()?;
            let report = match program {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Domain("pulsesim", e.into()))?;
                    let p = PulseProgram::from_json(&text).map_err(domain("pulsesim"))?;
                    verify_program(&p, &m, molecule.target_j, molecule.tau)
                        .map_err(domain("pulsesim"))?
                }
                None => {
                    let c = compile_zz(&m, molecule.target_j, molecule.tau)
                        .map_err(domain("pulsesim"))?;
                    verify_sequence(&c, &m).map_err(domain("pulsesim"))?
                }
            };
            println!("fidelity {:.12}", report.fidelity);
        }
    }
    Ok(())
}

fn linear_zone(a: LinearZoneArgs) -> Result<(), CliError> {
    let spec = chain(a.n, a.j)?;
    let limit = spectral::curvature_spectral(spec, FieldPoint::equator(1.0))
        .map_err(domain("spectral"))?
        .f_phitheta;
    let scan = quench::linear_zone_scan(spec, &a.velocities, a.steps).map_err(domain("quench"))?;
    let mut t = Table::new(["v", "m_over_v", "ratio_to_limit"]);
    for (v, mv) in scan {
        t.row([
            num(v),
            num(mv),
            if limit != 0.0 {
                num(mv / limit)
            } else {
                "-".into()
            },
        ]);
    }
    print!("{}", t.render());
    println!("v -> 0 limit (spectral F): {}", num(limit));
    Ok(())
}

fn robustness(a: RobustnessArgs) -> Result<(), CliError> {
    let proto = QuenchProtocol::new(a.velocity, a.steps).map_err(domain("quench"))?;
    let r = pulsesim::robustness_report(chain(a.n, a.j)?, &proto, a.error_deg, a.seed, a.trials)
        .map_err(domain("pulsesim"))?;
    let mut t = Table::new(["quantity", "value"]);
    t.row(["trials".to_string(), r.trials.to_string()]);
    t.row([
        "min period-averaged fidelity".to_string(),
        format!("{:.6}", r.min_fidelity),
    ]);
    t.row([
        "mean period-averaged fidelity".to_string(),
        format!("{:.6}", r.mean_fidelity),
    ]);
    t.row([
        "min full-loop fidelity".to_string(),
        format!("{:.6}", r.full_loop_min),
    ]);
    print!("{}", t.render());
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))
        })?;
        if n == 0 {
            return Err(CliError::Usage(format!("{THREADS_ENV} must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::Curvature(a) => curvature(a),
        Command::Sweep(a) => sweep(a),
        Command::Crossings(a) => crossings(a),
        Command::Pulse(c) => pulse(c),
        Command::LinearZone(a) => linear_zone(a),
        Command::Robustness(a) => robustness(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(module, e)) => {
            eprintln!("error [{module}]: {e}");
            ExitCode::from(1)
        }
    }
}
