//! Command line front end: loads a sampled system from a manifest, runs one
//! of the solver paths, and writes deterministic CSV tables.
//!
//! Exit codes are the machine-readable error category: 0 success, 2 config
//! or manifest schema error, 3 file system error, 4 solver failure, 5 bad
//! command line arguments.

use clap::{Args, Parser, Subcommand, ValueEnum};
use floqar::bench::{run_convergence, stuart_landau_jacobian, StuartLandauFamily};
use floqar::dae::decouple;
use floqar::io::{self, CommandKind, RunConfig, SolverKind};
use floqar::sparse::CsrMatrix;
use floqar::{
    floquet, lptv, spurious, Error, FloquetSolution, MultistepScheme, PeriodicGrid, SolverChoice,
};
use nalgebra::DMatrix;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "floqar", version, about = "Floquet multipliers of sampled linear periodic systems", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute multipliers and invariant subspaces for a sampled system
    Solve(CommonArgs),
    /// Run the built-in convergence study and write its tables
    Convergence(CommonArgs),
    /// Predict spurious eigenvalue magnitudes for a scheme on a grid
    Spurious(CommonArgs),
    /// Reduce a semi-explicit descriptor pair, then solve it
    Dae(CommonArgs),
    /// Write the bundled example systems under a directory
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Be,
    Gear2,
    Gear3,
    Gear4,
}

impl From<SchemeArg> for MultistepScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Be => MultistepScheme::BackwardEuler,
            SchemeArg::Gear2 => MultistepScheme::Gear2,
            SchemeArg::Gear3 => MultistepScheme::Gear3,
            SchemeArg::Gear4 => MultistepScheme::Gear4,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Dense,
    Ptoar,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Dense => SolverKind::Dense,
            SolverArg::Ptoar => SolverKind::Ptoar,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run config; explicit flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// System manifest to load
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Discretization scheme
    #[arg(long)]
    scheme: Option<SchemeArg>,
    /// Eigenvalue solver path
    #[arg(long)]
    solver: Option<SolverArg>,
    /// Number of wanted multipliers
    #[arg(long)]
    k: Option<usize>,
    /// Iterative solver residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Iterative solver restart budget
    #[arg(long)]
    max_cycles: Option<usize>,
    /// Directory the tables are written to
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized starting data
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    /// Directory the example systems are written to
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl CommonArgs {
    /// Config resolution order: file (if given), then flag overrides.
    fn resolve(&self, kind: CommandKind) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => {
                let config = io::read_config(path)?;
                if config.command != kind {
                    return Err(Error::Config(format!(
                        "config file is for another subcommand (expected {kind:?})"
                    )));
                }
                config
            }
            None => RunConfig::new(kind),
        };
        if let Some(m) = &self.manifest {
            config.manifest = Some(m.clone());
        }
        if let Some(s) = self.scheme {
            config.scheme = s.into();
        }
        if let Some(s) = self.solver {
            config.solver = s.into();
        }
        if let Some(k) = self.k {
            config.k_want = k;
        }
        if let Some(t) = self.tol {
            config.tol = t;
        }
        if let Some(c) = self.max_cycles {
            config.max_cycles = c;
        }
        if let Some(o) = &self.out {
            config.out_dir = o.clone();
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let had_error = e.use_stderr();
            let _ = e.print();
            return if had_error {
                ExitCode::from(5)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => args.resolve(CommandKind::Solve).and_then(|c| cmd_solve(&c)),
        Command::Convergence(args) => args
            .resolve(CommandKind::Convergence)
            .and_then(|c| cmd_convergence(&c)),
        Command::Spurious(args) => args
            .resolve(CommandKind::Spurious)
            .and_then(|c| cmd_spurious(&c)),
        Command::Dae(args) => args.resolve(CommandKind::Dae).and_then(|c| cmd_dae(&c)),
        Command::Gen(args) => cmd_gen(&args.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = classify(&e);
            eprintln!("error[{category}]: {e}");
            ExitCode::from(code)
        }
    }
}

fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => ("config", 2),
        Error::Io { .. } => ("io", 3),
        _ => ("solver", 4),
    }
}

fn choice(config: &RunConfig) -> SolverChoice {
    match config.solver {
        SolverKind::Dense => SolverChoice::Dense,
        SolverKind::Ptoar => SolverChoice::Iterative {
            tol: config.tol,
            max_cycles: config.max_cycles,
        },
    }
}

fn require_manifest(config: &RunConfig) -> Result<&Path, Error> {
    config
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs a system manifest".into()))
}

/// Writes the solution tables and prints one summary line per multiplier.
/// Nothing is written before the solve succeeds, so a failed run leaves no
/// partial output behind.
fn write_solution(out_dir: &Path, sol: &FloquetSolution) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    io::write_table(&out_dir.join("eigenvalues.csv"), &io::eigenvalue_table(sol))?;
    io::write_table(&out_dir.join("gap.csv"), &io::gap_table(sol))?;
    for j in 0..sol.multipliers.len() {
        io::write_table(
            &out_dir.join(format!("eigenvector_{j:03}.csv")),
            &io::eigenvector_table(sol, j),
        )?;
    }
    for (j, m) in sol.multipliers.iter().enumerate() {
        println!(
            "rho[{j}] = {:e} + {:e}i x 2^{}  log10|rho| = {:.6e}  residual {:.3e}",
            m.mantissa().re,
            m.mantissa().im,
            m.exponent(),
            m.log10_magnitude(),
            sol.residuals[j],
        );
    }
    if let Some(gap) = &sol.gap {
        println!(
            "separation: kept 10^{:.3} next 10^{:.3}{}",
            gap.log10_kept,
            gap.log10_next,
            if gap.ill_separated { "  (ill separated)" } else { "" },
        );
    }
    println!("wrote {}", out_dir.join("eigenvalues.csv").display());
    Ok(())
}

fn cmd_solve(config: &RunConfig) -> Result<(), Error> {
    let sys = io::load_system(require_manifest(config)?)?;
    let op = lptv::assemble(Arc::new(sys), config.scheme)?;
    let sol = floquet::solve(&op, config.k_want, choice(config))?;
    write_solution(&config.out_dir, &sol)
}

fn cmd_dae(config: &RunConfig) -> Result<(), Error> {
    let sys = io::load_dae_system(require_manifest(config)?)?;
    let reduced = decouple(sys, true)?;
    let op = lptv::assemble(Arc::new(reduced), config.scheme)?;
    let sol = floquet::solve(&op, config.k_want, choice(config))?;
    write_solution(&config.out_dir, &sol)
}

const STUDY_SCHEMES: [MultistepScheme; 3] = [
    MultistepScheme::BackwardEuler,
    MultistepScheme::Gear2,
    MultistepScheme::Gear3,
];
const STUDY_P: [usize; 5] = [64, 128, 256, 512, 1024];

fn cmd_convergence(config: &RunConfig) -> Result<(), Error> {
    let family = StuartLandauFamily {
        alpha: 0.1,
        beta: 0.1,
    };
    let study = run_convergence(&family, &STUDY_SCHEMES, &STUDY_P)?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    io::write_table(&out.join("convergence.csv"), &io::convergence_table(&study))?;
    io::write_table(&out.join("slopes.csv"), &io::slope_table(&study))?;
    io::write_table(
        &out.join("spurious_decay.csv"),
        &io::spurious_decay_table(&study),
    )?;
    let manifest = serde_json::json!({
        "family": "stuart-landau",
        "alpha": family.alpha,
        "beta": family.beta,
        "schemes": STUDY_SCHEMES,
        "p_values": STUDY_P,
        "seed": config.seed,
        "tables": ["convergence.csv", "slopes.csv", "spurious_decay.csv"],
    });
    let path = out.join("study.json");
    let body = format!("{:#}\n", manifest);
    std::fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    for s in &study.slopes {
        println!(
            "{}: value slope {:.3}, vector slope {:.3}",
            s.scheme.name(),
            s.value_slope,
            s.vector_slope
        );
    }
    println!("wrote {}", out.join("convergence.csv").display());
    Ok(())
}

fn cmd_spurious(config: &RunConfig) -> Result<(), Error> {
    let grid = match &config.manifest {
        Some(path) => io::read_manifest(path)?.grid()?,
        None => PeriodicGrid::uniform(64, 1.0)?,
    };
    let prediction = spurious::scalar_roots(config.scheme, &grid)?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    io::write_table(
        &out.join("spurious.csv"),
        &io::spurious_prediction_table(&prediction),
    )?;
    for (i, decade) in prediction.predicted_log10_magnitudes.iter().enumerate() {
        println!(
            "parasitic family {} near root {:e}+{:e}i: predicted 10^{:.3}",
            i + 1,
            prediction.roots[i + 1].re,
            prediction.roots[i + 1].im,
            decade
        );
    }
    if prediction.predicted_log10_magnitudes.is_empty() {
        println!("{} carries no parasitic roots", config.scheme.name());
    }
    println!("wrote {}", out.join("spurious.csv").display());
    Ok(())
}

/// Writes the example systems: a zero right-hand side, the rotating
/// two-state oscillator on an alternating grid, and a descriptor pair whose
/// reduction equals that oscillator.
fn cmd_gen(out: &Path) -> Result<(), Error> {
    let tau = 2.0 * std::f64::consts::PI;

    let zero_grid = PeriodicGrid::uniform(8, 1.0)?;
    let zeros: Vec<CsrMatrix> = (0..8)
        .map(|_| CsrMatrix::from_triplets(3, 3, &[]).unwrap())
        .collect();
    let zero_path = io::write_system(&out.join("zero"), "system.json", &zero_grid, &zeros)?;
    println!("wrote {}", zero_path.display());

    let (alpha, beta) = (0.1, 0.1);
    let toy_grid = PeriodicGrid::pattern(tau, &[1.0, 2.0], 512)?;
    let toy: Vec<CsrMatrix> = (0..toy_grid.p())
        .map(|i| {
            CsrMatrix::from_dense(&stuart_landau_jacobian(alpha, beta, toy_grid.times()[i]))
        })
        .collect();
    let toy_path = io::write_system(&out.join("toy"), "system.json", &toy_grid, &toy)?;
    println!("wrote {}", toy_path.display());

    // constant couplings lift the core onto G11 so the adjoint reduction of
    // the pair acts exactly as the core system
    let dae_grid = PeriodicGrid::uniform(64, tau)?;
    let g12 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, 1.0]);
    let g21 = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]);
    let g22 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, 2.0]);
    let lift = &g12
        * g22
            .clone()
            .lu()
            .solve(&g21)
            .ok_or_else(|| Error::Config("coupling block is singular".into()))?;
    let beta_dae = 0.5;
    let mut pairs = Vec::with_capacity(dae_grid.p());
    let mut core = Vec::with_capacity(dae_grid.p());
    for i in 0..dae_grid.p() {
        let core_i = stuart_landau_jacobian(alpha, beta_dae, dae_grid.times()[i]);
        let g11 = core_i.transpose() + &lift;
        let mut g_full = DMatrix::zeros(4, 4);
        g_full.view_mut((0, 0), (2, 2)).copy_from(&g11);
        g_full.view_mut((0, 2), (2, 2)).copy_from(&g12);
        g_full.view_mut((2, 0), (2, 2)).copy_from(&g21);
        g_full.view_mut((2, 2), (2, 2)).copy_from(&g22);
        let mut c_full = DMatrix::zeros(4, 4);
        c_full[(0, 0)] = 1.0;
        c_full[(1, 1)] = 1.0;
        pairs.push((CsrMatrix::from_dense(&c_full), CsrMatrix::from_dense(&g_full)));
        core.push(CsrMatrix::from_dense(&core_i));
    }
    let dae_path = io::write_dae_system(&out.join("dae"), "augmented.json", &dae_grid, &pairs, &[0, 1])?;
    println!("wrote {}", dae_path.display());
    let core_path = io::write_system(&out.join("dae-core"), "core.json", &dae_grid, &core)?;
    println!("wrote {}", core_path.display());
    Ok(())
}
