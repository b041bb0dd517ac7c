use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qdkerr::config::{Experiment, ModelConfig};
use qdkerr::dataset::{fmt_f64, read_gamma_table, read_lifetime_csv, read_phase_csv, write_csv};
use qdkerr::ensemble::{phase_scan, rs_lineshape, sampled_fwhm, Averaging, ScanGrid, ScanPhase};
use qdkerr::estimation::{
    fit_coupling, fit_lifetime_scale, inverse_lifetime_model, CouplingFitOptions, CouplingFitSetup,
    FitResult, GammaRatio, LmOptions,
};
use qdkerr::manifest::{now_utc, RunManifest};
use qdkerr::par::Execution;
use qdkerr::qed::{beta_factor, purcell_rate};
use qdkerr::units::{Energy, HBAR_UEV_NS};
use qdkerr::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

/// Kerr rotation from a charged quantum dot in a micropillar: simulate and fit.
#[derive(Parser, Debug)]
#[command(name = "qdkerr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Phase φ and Kerr rotation φ_r across the configured scan.
    SimulatePhase(SimulateArgs),
    /// Cross-polarized scattering intensity across the configured scan.
    Lineshape(SimulateArgs),
    /// Fit Γ at the dot frequency to a measured phase scan.
    Fit(FitArgs),
    /// Γ(ω), γ(ω) and β(ω) across the configured detuning sweep.
    BetaSweep(SweepArgs),
    /// Fit the bulk lifetime T1_hom to lifetime-vs-detuning data.
    Lifetime(LifetimeArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    /// Add H, V, D, A count columns.
    #[arg(long)]
    counts: bool,
    /// Average by seeded Monte Carlo instead of quadrature.
    #[arg(long)]
    monte_carlo: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with columns detuning_ueV,phi_deg[,weight].
    #[arg(long)]
    data: PathBuf,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    /// CSV with columns detuning_meV,gamma_ratio (γ/γ_hom vs detuning from the cavity).
    #[arg(long)]
    gamma_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LifetimeArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with columns detuning_meV,inverse_t1_per_ns (detuning from the cavity).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    gamma_table: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Loaded {
    text: String,
    experiment: Experiment,
    seed: u64,
    exec: Execution,
    started: String,
}

fn load(common: &Common) -> Result<Loaded, Error> {
    let started = now_utc();
    let text = fs::read_to_string(&common.config)?;
    let mut cfg = ModelConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        cfg.jitter.seed = seed;
    }
    let seed = cfg.jitter.seed;
    let experiment = cfg.build()?;
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    Ok(Loaded {
        text,
        experiment,
        seed,
        exec,
        started,
    })
}

fn manifest(command: &str, common: &Common, loaded: &Loaded) -> RunManifest {
    let mut m = RunManifest::new(
        command,
        &common.config,
        &loaded.text,
        loaded.seed,
        loaded.started.clone(),
    );
    let model = &loaded.experiment.model;
    let d = &model.dipole;
    m.extra("sigma_ueV", model.jitter.sigma().uev())
        .extra("g_ueV", d.g().uev())
        .extra("Gamma_at_qd_ueV", purcell_rate(d.omega_x(), &model.cavity, d.g()).uev())
        .extra("gamma_ueV", d.gamma().uev())
        .extra("delta_z_ueV", d.delta_z().uev())
        .extra("quadrature_order", model.jitter.quadrature_order() as u64)
        .extra(
            "assumptions",
            json!([
                "single-mode input-output reflection; uncoupled circular component sees the bare cavity",
                "quasi-static Gaussian jitter shifts both Zeeman branches together",
                "Gamma is defined at the dot frequency; gamma = Gamma_t - Gamma",
                "Zeeman splitting is not given by the source measurements and is a configuration choice",
                "no cross-polarized signal (H = 0) is reported as phi = 0",
            ]),
        );
    m
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate_phase(args: &SimulateArgs) -> Result<(), Error> {
    let loaded = load(&args.common)?;
    let exp = &loaded.experiment;
    let averaging = if args.monte_carlo {
        Averaging::MonteCarlo
    } else {
        Averaging::Quadrature
    };
    let points = phase_scan(&exp.scan, &exp.model, averaging, loaded.exec)?;

    let mut header = vec!["detuning_ueV", "phi_deg", "phi_r_deg", "saturated"];
    if args.counts {
        header.extend(["H", "V", "D", "A"]);
    }
    let mut max_phi: f64 = 0.0;
    let mut undefined = 0u64;
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(exp.scan.offsets())
        .map(|(p, offset)| {
            let detuning = fmt_f64(offset.uev());
            let mut row = match p.phase.phi() {
                Some(phi) => {
                    if phi.abs() > max_phi.abs() {
                        max_phi = phi;
                    }
                    vec![
                        detuning,
                        fmt_f64(phi.to_degrees()),
                        fmt_f64((0.5 * phi).to_degrees()),
                        p.phase.saturated().to_string(),
                    ]
                }
                None => {
                    undefined += 1;
                    vec![
                        detuning,
                        String::new(),
                        String::new(),
                        "undefined".to_string(),
                    ]
                }
            };
            if args.counts {
                row.extend(p.counts.channels().iter().map(|&c| fmt_f64(c)));
            }
            row
        })
        .collect();
    write_csv(create(&args.out)?, &header, &rows)?;

    let no_signal = points
        .iter()
        .filter(|p| p.phase == ScanPhase::NoSignal)
        .count() as u64;
    let mut m = manifest("simulate-phase", &args.common, &loaded);
    m.extra(
        "averaging",
        if args.monte_carlo {
            "monte_carlo"
        } else {
            "quadrature"
        },
    )
    .extra("max_abs_phi_deg", max_phi.abs().to_degrees())
    .extra("max_abs_phi_r_deg", (0.5 * max_phi.abs()).to_degrees())
    .extra("undefined_points", undefined)
    .extra("no_signal_points", no_signal);
    m.finish(&args.out)?;
    println!(
        "max |phi| = {:.4} deg, max |phi_r| = {:.4} deg over {} points -> {}",
        max_phi.abs().to_degrees(),
        (0.5 * max_phi.abs()).to_degrees(),
        points.len(),
        args.out.display()
    );
    Ok(())
}

fn lineshape(args: &SimulateArgs) -> Result<(), Error> {
    let loaded = load(&args.common)?;
    let exp = &loaded.experiment;
    let averaging = if args.monte_carlo {
        Averaging::MonteCarlo
    } else {
        Averaging::Quadrature
    };
    let shape = rs_lineshape(&exp.scan, &exp.model, averaging, loaded.exec)?;
    let xs: Vec<f64> = exp.scan.offsets().iter().map(|w| w.uev()).collect();
    let ys: Vec<f64> = shape.iter().map(|(_, h)| *h).collect();
    let rows: Vec<Vec<String>> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| vec![fmt_f64(*x), fmt_f64(*y)])
        .collect();
    write_csv(create(&args.out)?, &["detuning_ueV", "intensity"], &rows)?;

    let fwhm = sampled_fwhm(&xs, &ys);
    let mut m = manifest("lineshape", &args.common, &loaded);
    m.extra(
        "envelope_fwhm_ueV",
        fwhm.map(Value::from).unwrap_or(Value::Null),
    );
    m.finish(&args.out)?;
    match fwhm {
        Some(w) => println!("envelope FWHM = {w:.4} ueV -> {}", args.out.display()),
        None => println!(
            "envelope FWHM undefined on this grid -> {}",
            args.out.display()
        ),
    }
    Ok(())
}

fn print_fit(result: &FitResult) {
    for p in result.parameters.iter().chain(&result.derived) {
        println!("{:<22} = {:.6} ± {:.6}", p.name, p.value, p.std_err);
    }
    if let (Some(b), Some(s)) = (result.beta, result.beta_std_err) {
        println!("{:<22} = {:.6} ± {:.6}", "beta", b, s);
    }
    println!("{:<22} = {:.6e}", "residual_rms", result.residual_rms);
    println!("{:<22} = {:.6e}", "reduced_chi2", result.reduced_chi2);
    println!("{:<22} = {}", "iterations", result.iterations);
    println!("{:<22} = {}", "converged", result.converged);
    println!("{:<22} = {}", "at_bound", result.at_bound);
}

fn write_report(path: &Path, report: &Value, m: RunManifest) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")?;
    m.finish(path)?;
    Ok(())
}

fn fit(args: &FitArgs) -> Result<(), Error> {
    let loaded = load(&args.common)?;
    let exp = &loaded.experiment;
    let data = read_phase_csv(&args.data, exp.scan_origin)?;
    let setup = CouplingFitSetup::from_model(&exp.model);
    let options = CouplingFitOptions {
        free_delta_z: exp.fit.free_delta_z,
        parameterization: exp.fit.parameterization,
        initial_rate: exp.fit.initial_gamma_at_qd_uev.map(Energy::from_uev),
        lm: LmOptions {
            max_iterations: exp.fit.max_iterations,
            ..LmOptions::default()
        },
        exec: loaded.exec,
    };
    let (result, outcome) = match fit_coupling(&data, &setup, &options) {
        Ok(r) => (r, Ok(())),
        Err(Error::NotConverged(r)) => {
            let r = *r;
            let e = Error::NotConverged(Box::new(r.clone()));
            (r, Err(e))
        }
        Err(e) => return Err(e),
    };
    print_fit(&result);
    if let Some(out) = &args.out {
        let report = json!({
            "data": args.data.display().to_string(),
            "total_linewidth_ueV": setup.total_linewidth.uev(),
            "fit": result,
            "flagged_choices": [
                "weights default to 1 when the data has no weight column",
                "total linewidth Gamma_t is held at Gamma + gamma from the configuration",
                if options.free_delta_z { "Zeeman splitting fitted jointly" } else { "Zeeman splitting held at the configured value" },
            ],
        });
        let mut m = manifest("fit", &args.common, &loaded);
        m.extra("converged", result.converged);
        write_report(out, &report, m)?;
    }
    outcome
}

fn beta_sweep(args: &SweepArgs) -> Result<(), Error> {
    let loaded = load(&args.common)?;
    let exp = &loaded.experiment;
    let model = &exp.model;
    let origin = exp.origin(exp.sweep.relative_to);
    let grid = ScanGrid::around(
        origin,
        Energy::from_mev(exp.sweep.start_mev),
        Energy::from_mev(exp.sweep.stop_mev),
        exp.sweep.points,
    )?;
    let (ratio, gamma_hom) = match &args.gamma_table {
        Some(path) => {
            let t1 = exp.t1_hom_ns.ok_or_else(|| {
                Error::Config(vec![qdkerr::error::FieldError {
                    path: "dipole.t1_hom_ns".into(),
                    message: "required with --gamma-table".into(),
                }])
            })?;
            (
                Some(GammaRatio::Table(read_gamma_table(path)?)),
                HBAR_UEV_NS / t1,
            )
        }
        None => (None, model.dipole.gamma().uev()),
    };
    let gamma_star = model.dipole.gamma_star();
    let mut rows = Vec::with_capacity(grid.points());
    for (omega, offset) in grid.energies().into_iter().zip(grid.offsets()) {
        let rate = purcell_rate(omega, &model.cavity, model.dipole.g());
        let gamma = match &ratio {
            Some(r) => r.at(omega, &model.cavity)? * gamma_hom,
            None => gamma_hom,
        };
        let beta = beta_factor(rate, Energy::from_uev(gamma), gamma_star)?;
        rows.push(vec![
            fmt_f64(offset.mev()),
            fmt_f64(rate.uev()),
            fmt_f64(gamma),
            fmt_f64(beta),
        ]);
    }
    write_csv(
        create(&args.out)?,
        &["detuning_meV", "Gamma_ueV", "gamma_ueV", "beta"],
        &rows,
    )?;
    let mut m = manifest("beta-sweep", &args.common, &loaded);
    m.extra(
        "gamma_model",
        if ratio.is_some() { "table" } else { "constant" },
    );
    m.finish(&args.out)?;
    println!("{} points -> {}", rows.len(), args.out.display());
    Ok(())
}

fn lifetime(args: &LifetimeArgs) -> Result<(), Error> {
    let loaded = load(&args.common)?;
    let model = &loaded.experiment.model;
    let cavity = &model.cavity;
    let data = read_lifetime_csv(&args.data, cavity.omega_c())?;
    let ratio = match &args.gamma_table {
        Some(path) => GammaRatio::Table(read_gamma_table(path)?),
        None => GammaRatio::Constant(1.0),
    };
    let g = model.dipole.g();
    let (result, outcome) =
        match fit_lifetime_scale(&data, cavity, g, &ratio, &LmOptions::default()) {
            Ok(r) => (r, Ok(())),
            Err(Error::NotConverged(r)) => {
                let r = *r;
                let e = Error::NotConverged(Box::new(r.clone()));
                (r, Err(e))
            }
            Err(e) => return Err(e),
        };
    print_fit(&result);
    let t1_hom = result.parameters[0].value;
    let mut points = Vec::with_capacity(data.len());
    for row in data.rows() {
        let r = ratio.at(row.omega, cavity)?;
        let model_value = inverse_lifetime_model(row.omega, cavity, g, r, t1_hom);
        points.push(json!({
            "detuning_meV": (row.omega - cavity.omega_c()).mev(),
            "inverse_t1_per_ns": row.inverse_t1,
            "model_inverse_t1_per_ns": model_value,
            "model_t1_ns": 1.0 / model_value,
        }));
    }
    if let Some(out) = &args.out {
        let report = json!({
            "data": args.data.display().to_string(),
            "gamma_ratio": if args.gamma_table.is_some() { "table" } else { "constant 1" },
            "fit": result,
            "points": points,
        });
        let mut m = manifest("lifetime", &args.common, &loaded);
        m.extra("t1_hom_ns", t1_hom);
        write_report(out, &report, m)?;
    }
    outcome
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NotConverged(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SimulatePhase(a) => simulate_phase(a),
        Command::Lineshape(a) => lineshape(a),
        Command::Fit(a) => fit(a),
        Command::BetaSweep(a) => beta_sweep(a),
        Command::Lifetime(a) => lifetime(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
