use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rtac_core::executive::{
    observability_from_config, read_events_csv, read_trajectory_csv, run_closed_loop, scenario_from_config,
    verify_tables, write_events_csv, write_svg, write_trajectory_csv, RunOutcome, VerifyContext,
};
use rtac_core::observability::{observability_draws, DrawOutcome};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "rtac", version, about = "Event-triggered adaptive control simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and print its verdict sheet.
    Simulate {
        config: PathBuf,
        /// Print the verdict sheet as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run the observability algorithm on random parameter draws.
    CheckObservability {
        config: PathBuf,
        /// Write the machine-readable summary here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Re-check the invariants from a pair of CSV files.
    Verify {
        events_csv: PathBuf,
        trajectory_csv: PathBuf,
        /// True parameter, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta_true: Option<Vec<f64>>,
        /// Dwell cap T.
        #[arg(long)]
        dwell: Option<f64>,
        /// Certified N from an observability check.
        #[arg(long)]
        n_cert: Option<usize>,
    },
    /// Render a trajectory CSV as an SVG plot.
    Plot {
        trajectory_csv: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn read_doc(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `N` shared by every draw, or `None` when some draw is not certified.
fn certified_n(outcomes: &[DrawOutcome]) -> Option<usize> {
    outcomes
        .iter()
        .map(|o| o.report.n.filter(|_| o.report.certified))
        .try_fold(0, |acc, n| n.map(|n| acc.max(n)))
}

fn simulate(config: &Path, as_json: bool) -> Result<bool> {
    let doc = read_doc(config)?;
    let mut cfg = scenario_from_config(&doc)?;
    if let Some(obs) = &cfg.observability {
        let plant = cfg.model.poly_plant()?;
        let outcomes = observability_draws(&plant, &obs.draws, &obs.algorithm)?;
        cfg.scenario.certified_n = certified_n(&outcomes);
        match cfg.scenario.certified_n {
            Some(n) => eprintln!("observability: {} draws certified, N = {n}", outcomes.len()),
            None => eprintln!("observability: not certified on every draw; N-dependent checks skipped"),
        }
    }
    let r = run_closed_loop(&cfg.scenario)?;
    let d = cfg.scenario.model.dims();

    if let Some(p) = &cfg.output.trajectory_csv {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_trajectory_csv(&r.table(), BufWriter::new(f))?;
    }
    if let Some(p) = &cfg.output.events_csv {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_events_csv(&r.events, d.n, d.l, BufWriter::new(f))?;
    }
    if let Some(p) = &cfg.output.plot_svg {
        write_svg(&r.table(), p)?;
    }

    if as_json {
        let summary = json!({
            "outcome": r.outcome,
            "events": r.events.len(),
            "t_id": r.t_id,
            "final_estimate": r.estimate_at(r.t_final),
            "certified_n": r.certified_n,
            "verdicts": r.verdicts,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        match &r.outcome {
            RunOutcome::Completed => println!("completed at t = {}", r.t_final),
            RunOutcome::Aborted(msg) => println!("aborted: {msg}"),
        }
        println!("events: {}", r.events.len());
        match r.t_id {
            Some(t) => println!("identified at t = {t}"),
            None => println!("not identified"),
        }
        println!("final estimate: {:?}", r.estimate_at(r.t_final));
        print!("{}", r.verdicts);
    }
    Ok(r.verdicts.all_passed())
}

fn check_observability(config: &Path, summary: Option<&Path>) -> Result<bool> {
    let doc = read_doc(config)?;
    let (spec, _theta, obs) = observability_from_config(&doc)?;
    let plant = spec.poly_plant()?;
    let outcomes = observability_draws(&plant, &obs.draws, &obs.algorithm)?;
    for (k, o) in outcomes.iter().enumerate() {
        println!("draw {}:", k + 1);
        print!("{}", o.report);
    }
    let n = certified_n(&outcomes);
    let all = n.is_some();
    println!(
        "{} of {} draws certified",
        outcomes.iter().filter(|o| o.report.certified).count(),
        outcomes.len()
    );

    let draws: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            let witnesses: Vec<Value> = o
                .report
                .steps
                .iter()
                .flat_map(|s| {
                    s.certificates.iter().enumerate().filter_map(move |(i, c)| {
                        c.witness
                            .as_ref()
                            .map(|w| json!({"step": s.step, "index": i + 1, "witness": w}))
                    })
                })
                .collect();
            json!({
                "theta": o.report.theta,
                "estimates": o.estimates,
                "certified": o.report.certified,
                "proof": o.report.is_proof(),
                "N": o.report.n,
                "index_sets": o.report.index_sets(),
                "witnesses": witnesses,
            })
        })
        .collect();
    let doc = json!({
        "model": spec.name(),
        "verdict": if all { "certified" } else { "not_certified" },
        "N": n,
        "draws": draws,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    match summary {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(all)
}

fn verify(
    events_csv: &Path,
    trajectory_csv: &Path,
    theta_true: Option<Vec<f64>>,
    dwell: Option<f64>,
    n_cert: Option<usize>,
) -> Result<bool> {
    let open = |p: &Path| File::open(p).with_context(|| format!("opening {}", p.display()));
    let events = read_events_csv(open(events_csv)?)?;
    let table = read_trajectory_csv(open(trajectory_csv)?)?;
    if let (Some(t), Some(e)) = (&theta_true, events.first()) {
        if t.len() != e.estimate.len() {
            bail!("--theta-true has {} entries, the events have {}", t.len(), e.estimate.len());
        }
    }
    let ctx = VerifyContext {
        theta_true,
        dwell,
        certified_n: n_cert,
        aborted: None,
    };
    let sheet = verify_tables(&events, &table, &ctx);
    print!("{sheet}");
    Ok(sheet.all_passed())
}

fn plot(trajectory_csv: &Path, output: &Path) -> Result<bool> {
    let f = File::open(trajectory_csv).with_context(|| format!("opening {}", trajectory_csv.display()))?;
    let table = read_trajectory_csv(f)?;
    write_svg(&table, output)?;
    println!("wrote {}", output.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate { config, json } => simulate(&config, json),
        Command::CheckObservability { config, summary } => check_observability(&config, summary.as_deref()),
        Command::Verify {
            events_csv,
            trajectory_csv,
            theta_true,
            dwell,
            n_cert,
        } => verify(&events_csv, &trajectory_csv, theta_true, dwell, n_cert),
        Command::Plot { trajectory_csv, output } => plot(&trajectory_csv, &output),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
