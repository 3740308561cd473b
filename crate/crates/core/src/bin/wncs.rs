use std::error::Error;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wncs::delay_approx::{ise_default, ApproxKind};
use wncs::delay_est::{reference_trace, replay, write_estimate_csv};
use wncs::lti::{ContinuousTf, DiscreteTf};
use wncs::pid::design_pi_root_locus;
use wncs::plant::{MOTOR_NUM, MOTOR_POLE};
use wncs::scenario::{compute_metrics, run_closed_loop, write_outputs, ScenarioConfig, PRESETS};
use wncs::stability::{default_grid, encirclements, gain_crossover, nyquist_locus, phase_margin};
use wncs::sysid::{arx_to_first_order_ct, fit_arx, normalize, percent_fit, read_sample_file};

type Res = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "wncs", version, about = "Wireless networked motor-control simulator and design tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write run.csv, metrics.csv and speed.dat.
    Simulate(SimulateArgs),
    /// Fit an ARX model to a `t,u,y` CSV.
    Identify(IdentifyArgs),
    /// Root-locus PI design on a first-order discrete plant.
    DesignPi(DesignArgs),
    /// Step-response ISE of each delay approximation against the true delay.
    IseTable(IseArgs),
    /// Phase margins and Nyquist encirclements for a list of delays.
    Stability(StabilityArgs),
    /// Replay the reference RTT experiment through the delay estimator.
    EstimatorDemo(EstimatorArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON scenario file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    na: usize,
    #[arg(long, default_value_t = 1)]
    nb: usize,
    #[arg(long, default_value_t = 1)]
    nk: usize,
    /// Fit on raw data instead of min-max normalized data.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, default_value_t = 0.94)]
    zeta: f64,
    #[arg(long, default_value_t = 0.1)]
    wd_over_ws: f64,
    /// Plant numerator `b` of `b z⁻¹/(1 − p z⁻¹)`.
    #[arg(long, default_value_t = MOTOR_NUM)]
    num: f64,
    #[arg(long, default_value_t = MOTOR_POLE)]
    pole: f64,
    #[arg(long, default_value_t = 0.02)]
    sample_time: f64,
}

#[derive(Args)]
struct IseArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.12,0.24,0.3,1")]
    taus: Vec<f64>,
}

#[derive(Args)]
struct StabilityArgs {
    /// Loop delays in seconds.
    #[arg(long, value_delimiter = ',', default_value = "0,0.04,0.12,0.18,0.24,0.3,0.4,0.6,1,2")]
    tau_list: Vec<f64>,
    /// Gain `K` of `K/(s + a)`.
    #[arg(long, default_value_t = 4.159)]
    gain: f64,
    #[arg(long, default_value_t = 3.888)]
    pole: f64,
    /// Also write margins.csv and one Nyquist data file per delay here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, default_value_t = 20)]
    period_ms: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn simulate(a: SimulateArgs) -> Res {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => ScenarioConfig::from_json_file(path)?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => unreachable!("clap requires one of --config/--preset"),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let record = run_closed_loop(&cfg)?;
    let metrics = compute_metrics(&record, cfg.setpoint.target());
    write_outputs(&a.out, &record, &metrics)?;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!(
        "{} rows -> {}\novershoot {}%  settling {} s  sse {:.3} rps  ise {:.3}  trailing-half ise {:.3}",
        record.rows.len(),
        a.out.display(),
        opt(metrics.overshoot_pct),
        opt(metrics.settling_time_s),
        metrics.steady_state_error,
        metrics.ise,
        metrics.trailing_half_ise
    );
    Ok(())
}

fn identify(a: IdentifyArgs) -> Res {
    let mut series = read_sample_file(&a.data)?;
    if !a.raw {
        series = normalize(&series)?;
    }
    let fit = fit_arx(&series, a.na, a.nb, a.nk)?;
    let m = &fit.model;
    let sim = m.simulate(series.inputs())?;
    println!("a = {:?}", m.a_coeffs);
    println!("b = {:?}", m.b_coeffs);
    println!("nk = {}  rows = {}  residual ss = {:.6e}", m.delay_nk, fit.rows, fit.residual_ss);
    println!("fit = {:.2}%", percent_fit(&sim, series.outputs())?);
    if let Ok(ct) = arx_to_first_order_ct(m) {
        println!("continuous: {:.4}/(s + {:.4})", ct.num()[0], ct.den()[0]);
    }
    Ok(())
}

fn design_pi(a: DesignArgs) -> Res {
    let plant = DiscreteTf::new(vec![0.0, a.num], vec![1.0, -a.pole], a.sample_time)?;
    let d = design_pi_root_locus(&plant, a.zeta, a.wd_over_ws)?;
    println!("dominant pole = {:.4} {:+.4}j", d.dominant_pole.re, d.dominant_pole.im);
    println!("zero = {:.4}  K = {:.4}", d.zero, d.loop_gain);
    println!("kp = {:.4}  ki = {:.4}", d.gains.kp, d.gains.ki);
    println!("residuals: angle {:.3e} deg, magnitude {:.3e}", d.angle_residual_deg, d.magnitude_residual);
    Ok(())
}

fn ise_table(a: IseArgs) -> Res {
    let mut out = io::stdout().lock();
    write!(out, "kind")?;
    for t in &a.taus {
        write!(out, ",{t}")?;
    }
    writeln!(out, ",average")?;
    for kind in ApproxKind::ALL {
        write!(out, "{kind}")?;
        let mut sum = 0.0;
        for &t in &a.taus {
            let r = ise_default(kind, t)?;
            sum += r.ise;
            write!(out, ",{:.6}", r.ise)?;
        }
        writeln!(out, ",{:.6}", sum / a.taus.len() as f64)?;
    }
    Ok(())
}

fn stability(a: StabilityArgs) -> Res {
    let g = ContinuousTf::first_order(a.gain, a.pole)?;
    let wg = gain_crossover(&g)?;
    let grid = default_grid(Some(wg));
    let mut rows = vec!["tau_s,omega_g,phase_margin_deg,stable,encirclements".to_string()];
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
    }
    for &tau in &a.tau_list {
        let m = phase_margin(&g, tau)?;
        let locus = nyquist_locus(&g, tau, &grid)?;
        let n = encirclements(&locus)?;
        rows.push(format!("{tau},{:.6},{:.3},{},{n}", m.gain_crossover_omega, m.phase_margin_deg, m.stable));
        if let Some(dir) = &a.out {
            let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("nyquist_tau_{tau}.dat")))?);
            writeln!(f, "# omega re im")?;
            for (w, p) in locus.closed() {
                writeln!(f, "{w:.6e} {:.9} {:.9}", p.re, p.im)?;
            }
        }
    }
    let text = rows.join("\n") + "\n";
    print!("{text}");
    if let Some(dir) = &a.out {
        fs::write(dir.join("margins.csv"), text)?;
    }
    Ok(())
}

fn estimator_demo(a: EstimatorArgs) -> Res {
    let rows = replay(&reference_trace(), a.period_ms)?;
    match a.out {
        Some(path) => write_estimate_csv(fs::File::create(path)?, &rows)?,
        None => write_estimate_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().cmd {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify(a),
        Command::DesignPi(a) => design_pi(a),
        Command::IseTable(a) => ise_table(a),
        Command::Stability(a) => stability(a),
        Command::EstimatorDemo(a) => estimator_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
