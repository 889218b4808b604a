use clap::{Parser, Subcommand};
use hybrid_coverage::engine::{check_theorems, CheckerReport, Scenario, Simulation, Verdict};
use hybrid_coverage::geometry::Spheroid;
use hybrid_coverage::io::{write_checker, write_run};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Output directory for `simulate` and `check` when `--out` is absent.
const OUT_ENV: &str = "HYBRID_COVERAGE_OUT";

#[derive(Parser)]
#[command(name = "hybrid-coverage", version, about = "Persistent coverage and intruder interception on a spheroid")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write metrics, events and the checker report.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Step length in seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated time in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the interception, scheduling and avoidance conditions.
    Check {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortest path between two points given by geodetic latitude and longitude in degrees.
    Geodesic {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        c: f64,
        #[arg(allow_negative_numbers = true)]
        lat1: f64,
        #[arg(allow_negative_numbers = true)]
        lon1: f64,
        #[arg(allow_negative_numbers = true)]
        lat2: f64,
        #[arg(allow_negative_numbers = true)]
        lon2: f64,
    },
    /// Equal-area latitude bands for N agents.
    Partition {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        n: usize,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn verdict_code(v: Verdict) -> ExitCode {
    match v {
        Verdict::Pass => ExitCode::SUCCESS,
        Verdict::Fail => ExitCode::from(1),
        Verdict::Warn => ExitCode::from(2),
    }
}

fn print_report(r: &CheckerReport) {
    let i = &r.interception;
    println!(
        "interception  {:?}  R_det/U_int = {:.3} s, P_max/U_agt = {:.3} s (P_max = {:.3}), margin {:.3} s",
        i.verdict, i.detection_time, i.travel_time, i.p_max, i.margin
    );
    let s = &r.schedule;
    println!(
        "schedule      {:?}  T*/N = {:.3} s, T_rtb = {:.3} s, detection to impact in [{:.3}, {:.3}] s, margin [{:.3}, {:.3}] s: {}",
        s.verdict,
        s.window,
        s.return_time,
        s.detection_to_impact[0],
        s.detection_to_impact[1],
        s.margin[0],
        s.margin[1],
        s.note
    );
    let a = &r.avoidance;
    println!(
        "avoidance     {:?}  R = {} > {} (margin {}), {:.3} after one full-speed step",
        a.verdict, a.trigger_distance, a.required, a.margin, a.stepped_trigger_distance
    );
    let c = &r.capacity;
    println!(
        "capacity      {:?}  {:.2} nominal impacts per {:.3} s window for {} interceptors",
        c.verdict, c.nominal_impacts, c.window, c.interceptors
    );
}

fn load(path: &Path) -> Result<Scenario, String> {
    let sc = Scenario::load(path).map_err(|e| e.to_string())?;
    sc.validate().map_err(|e| e.to_string())?;
    Ok(sc)
}

fn simulate(
    path: &Path,
    seed: Option<u64>,
    dt: Option<f64>,
    duration: Option<f64>,
    out: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let mut sc = load(path)?;
    if let Some(s) = seed {
        sc.simulation.seed = s;
    }
    if let Some(dt) = dt {
        sc.simulation.dt_s = dt;
    }
    if let Some(d) = duration {
        sc.simulation.duration_s = d;
    }
    sc.validate().map_err(|e| e.to_string())?;
    let dir = out_dir(out);
    let report = check_theorems(&sc);
    let sim = Simulation::new(sc).map_err(|e| e.to_string())?;
    let mesh = sim.mesh().clone();
    let output = sim.run();
    write_run(&dir, &sc, &mesh, &output, &report).map_err(|e| format!("writing {}: {e}", dir.display()))?;
    let intercepted = output.particles.iter().filter(|p| p.intercepted()).count();
    let last = output.metrics.last().map_or(0.0, |m| m.e_norm);
    println!(
        "{} steps, {} particles, {} intercepted, final E_norm {:.4}; outputs in {}",
        output.metrics.len(),
        output.particles.len(),
        intercepted,
        last,
        dir.display()
    );
    match output.fault {
        Some(f) => Err(format!("{} fault: {f}", f.class())),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Simulate { scenario, seed, dt, duration, out } => simulate(&scenario, seed, dt, duration, out),
        Cmd::Check { scenario, out } => {
            let sc = load(&scenario)?;
            let report = check_theorems(&sc);
            let dir = out_dir(out);
            write_checker(&dir, &report).map_err(|e| format!("writing {}: {e}", dir.display()))?;
            print_report(&report);
            Ok(verdict_code(report.overall()))
        }
        Cmd::Geodesic { a, c, lat1, lon1, lat2, lon2 } => {
            let s = Spheroid::new(a, c).map_err(|e| e.to_string())?;
            let p1 = s.point_from_geodetic(lat1.to_radians(), lon1.to_radians());
            let p2 = s.point_from_geodetic(lat2.to_radians(), lon2.to_radians());
            let g = s.geodesic(&p1, &p2);
            println!("distance {}", g.distance);
            println!("heading_deg {}", g.initial_heading.to_degrees());
            println!("method {:?}", g.method);
            println!("fallback {}", g.used_antipodal_fallback);
            println!("converged {}", g.converged);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Partition { a, c, n } => {
            if n < 2 {
                return Err(format!("partitioning needs N >= 2, got {n}"));
            }
            let s = Spheroid::new(a, c).map_err(|e| e.to_string())?;
            let z = s.partition_bounds(n).map_err(|e| e.to_string())?;
            let target = s.surface_area() / (n - 1) as f64;
            println!("band,z_hi,z_lo,area,rel_error");
            for (k, w) in z.windows(2).enumerate() {
                let area = s.zone_area(w[1], w[0]);
                println!("{},{},{},{},{:.3e}", k + 1, w[0], w[1], area, (area - target).abs() / target);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
