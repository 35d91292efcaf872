//! Command-line front end: single laps, tuning runs, archive comparison and
//! plot-data export.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use mpfc_tune::config::{materialize, ApproachSetting, RunConfig, TRACK_COLUMNS};
use mpfc_tune::controller::WeightVector;
use mpfc_tune::optimizer::{
    hv_curve, read_ledger, run_pareto, run_weighted_sum, save_hv_csv, write_ledger, ArchiveFile, EvaluationRecord,
    LedgerWriter, Session,
};
use mpfc_tune::pareto::{hypervolume_within, normalize_front, reference_point, Objectives};
use mpfc_tune::sim::evaluate_weights;
use mpfc_tune::track::Track;

#[derive(Parser)]
#[command(name = "mpfc-tune", version, about = "Bayesian tuning of model predictive path-following controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// output directory; overrides the configured one
    #[arg(long, short, env = "MPFC_TUNE_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one lap and write its log and objectives
    Simulate {
        #[command(flatten)]
        common: Common,
        /// seven comma-separated weights q_x,q_y,q_psi,q_a,r_a,r_omega,r_vartheta;
        /// the configured expert weights when omitted
        #[arg(long)]
        weights: Option<Numbers<7>>,
    },
    /// Run the configured optimization
    Tune {
        #[command(flatten)]
        common: Common,
        /// continue from the ledger in the output directory
        #[arg(long)]
        resume: bool,
        /// override the configured approach
        #[arg(long, value_parser = parse_approach)]
        approach: Option<ApproachSetting>,
    },
    /// Compare archives by hypervolume on a shared reference point
    Compare {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
        /// normalization baseline e_jerk,e_v,e_lat; taken from the first archive when omitted
        #[arg(long)]
        baseline: Option<Numbers<3>>,
        /// reference point = factor times the componentwise worst normalized member
        #[arg(long, default_value_t = 1.1)]
        reference_factor: f64,
        #[arg(long, short, env = "MPFC_TUNE_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Write the sampled reference path and its text description
    ExportTrack {
        #[command(flatten)]
        common: Common,
        /// sampling distance along the path, m
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
    },
    /// Print the hypervolume of archives
    Hv {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
        /// reference point in normalized objectives e_jerk,e_v,e_lat
        #[arg(long)]
        reference: Option<Numbers<3>>,
        /// divide objectives by this e_jerk,e_v,e_lat first; raw objectives when omitted
        #[arg(long)]
        baseline: Option<Numbers<3>>,
    },
}

/// Exactly `N` comma-separated numbers.
#[derive(Clone, Copy, Debug)]
struct Numbers<const N: usize>([f64; N]);

impl<const N: usize> std::str::FromStr for Numbers<N> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<Result<_, _>>()?;
        let n = v.len();
        v.try_into().map(Self).map_err(|_| format!("expected {N} comma-separated numbers, got {n}"))
    }
}

fn parse_approach(s: &str) -> Result<ApproachSetting, String> {
    match s {
        "weighted" => Ok(ApproachSetting::Weighted),
        "pareto" => Ok(ApproachSetting::Pareto),
        _ => Err(format!("expected `weighted` or `pareto`, got `{s}`")),
    }
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate { common, weights } => simulate(&common, weights),
        Command::Tune { common, resume, approach } => tune(&common, resume, approach),
        Command::Compare { archives, baseline, reference_factor, out } => {
            compare(&archives, baseline, reference_factor, out)
        }
        Command::ExportTrack { common, spacing } => export_track(&common, spacing),
        Command::Hv { archives, reference, baseline } => hv(&archives, reference, baseline),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Loaded and validated configuration plus the resolved output directory.
fn setup(common: &Common) -> Result<(RunConfig, Track, PathBuf), Failure> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display())).usage()?,
        None => RunConfig::default(),
    };
    let track = cfg.validate().context("invalid configuration").usage()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    materialize(&cfg, &out).with_context(|| format!("writing to {}", out.display())).runtime()?;
    Ok((cfg, track, out))
}

fn fmt_triple(v: &[f64]) -> String {
    format!("e_jerk={:.6e} e_v={:.6e} e_lat={:.6e}", v[0], v[1], v[2])
}

fn simulate(common: &Common, weights: Option<Numbers<7>>) -> Result<(), Failure> {
    let (cfg, track, out) = setup(common)?;
    let weights = match weights {
        Some(w) => WeightVector::from_array(w.0),
        None => cfg.tuning.expert,
    };
    weights.validate().usage()?;
    if !cfg.tuning.bo.weight_box.contains(&weights) {
        return Err(Failure::Usage(anyhow!("weights {:?} lie outside the configured weight box", weights.to_array())));
    }
    let (objectives, log) = evaluate_weights(&track, &cfg.controller, &cfg.vehicle, &cfg.simulation, &weights);
    log.save_csv(&out.join("lap.csv")).runtime()?;
    let o = objectives.ok_or_else(|| anyhow!("the simulation did not take a single step")).runtime()?;
    std::fs::write(out.join("objectives.json"), serde_json::to_string_pretty(&o).runtime()?).runtime()?;
    println!("{} g={:+}", fmt_triple(&o.values()), o.g);
    println!("steps={} lap_complete={}", log.steps(), log.lap_complete);
    Ok(())
}

fn tune(common: &Common, resume: bool, approach: Option<ApproachSetting>) -> Result<(), Failure> {
    let (mut cfg, track, out) = setup(common)?;
    if let Some(a) = approach {
        cfg.tuning.approach = a;
        materialize(&cfg, &out).runtime()?;
    }
    let ledger_path = out.join("ledger.jsonl");
    let replay = if resume {
        let r = read_ledger(&ledger_path).with_context(|| format!("reading {}", ledger_path.display())).usage()?;
        // rewrite without a truncated tail before appending
        write_ledger(&ledger_path, &r).runtime()?;
        r
    } else {
        if ledger_path.exists() && std::fs::metadata(&ledger_path).runtime()?.len() > 0 {
            return Err(Failure::Usage(anyhow!(
                "{} exists; pass --resume to continue it or choose another output directory",
                ledger_path.display()
            )));
        }
        write_ledger(&ledger_path, &[]).runtime()?;
        Vec::new()
    };
    if !replay.is_empty() {
        eprintln!("replaying {} recorded evaluations", replay.len());
    }
    let mut writer = LedgerWriter::append_to(&ledger_path).runtime()?;
    let tuning = cfg.tuning.clone();
    let evaluator = |w: &WeightVector| evaluate_weights(&track, &cfg.controller, &cfg.vehicle, &cfg.simulation, w).0;
    let sink = |r: &EvaluationRecord| {
        match r.objectives {
            Some(o) => eprintln!("eval {:>5}: g={:+} {} ({:.2} s)", r.index, o.g, fmt_triple(&o.values()), r.sim_time),
            None => eprintln!("eval {:>5}: no simulation step", r.index),
        }
        writer.append(r)
    };
    let mut session = Session::new(tuning.bo.clone(), evaluator).with_replay(replay).with_sink(sink);
    let expert = Some(&tuning.expert);
    match tuning.approach {
        ApproachSetting::Weighted => {
            let weightings = tuning.weightings().usage()?;
            run_weighted_sum(&mut session, &weightings, tuning.budget_per_weight, expert)
        }
        ApproachSetting::Pareto => run_pareto(&mut session, tuning.budget, expert),
    }
    .context("optimization failed")
    .runtime()?;
    let (records, _) = session.into_parts();
    write_outputs(&records, tuning.bo.include_expert, &out).runtime()
}

fn write_outputs(records: &[EvaluationRecord], has_expert: bool, out: &Path) -> anyhow::Result<()> {
    let baseline = records.first().filter(|_| has_expert).and_then(EvaluationRecord::feasible_values);
    let file = ArchiveFile::from_records(records, baseline);
    file.save(&out.join("archive.json"))?;
    file.archive.save_csv(&out.join("archive.csv"))?;
    let norm = baseline.unwrap_or([1.0; 3]);
    let front = normalize_front(&file.archive.objectives(), &norm)?;
    let mut hv = 0.0;
    if !front.is_empty() {
        let reference = reference_point(&[&front], 1.1)?;
        let curve = hv_curve(records, &norm, &reference)?;
        save_hv_csv(&curve, &out.join("hv_curve.csv"))?;
        hv = curve.last().map_or(0.0, |p| p.hypervolume);
    }
    println!("evaluations={} run_time={:.1}s archive={} hv={:.6}", file.evaluations, file.run_time, file.archive.len(), hv);
    Ok(())
}

/// Loads archives and normalizes their fronts by the baseline.
fn load_normalized(
    paths: &[PathBuf],
    baseline: Option<Objectives>,
) -> Result<(Vec<ArchiveFile>, Vec<Vec<Objectives>>, Objectives), Failure> {
    let files: Vec<ArchiveFile> = paths
        .iter()
        .map(|p| ArchiveFile::load(p).with_context(|| format!("reading archive {}", p.display())))
        .collect::<anyhow::Result<_>>()
        .usage()?;
    let baseline = baseline
        .or(files[0].baseline)
        .ok_or_else(|| anyhow!("no baseline given and the first archive has none"))
        .usage()?;
    let fronts = files
        .iter()
        .map(|f| normalize_front(&f.archive.objectives(), &baseline))
        .collect::<Result<Vec<_>, _>>()
        .usage()?;
    Ok((files, fronts, baseline))
}

fn shared_reference(fronts: &[Vec<Objectives>], factor: f64) -> Result<Objectives, Failure> {
    let refs: Vec<&[Objectives]> = fronts.iter().map(Vec::as_slice).collect();
    reference_point(&refs, factor).context("all archives are empty").usage()
}

fn compare(
    paths: &[PathBuf],
    baseline: Option<Numbers<3>>,
    factor: f64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (files, fronts, baseline) = load_normalized(paths, baseline.map(|b| b.0))?;
    let reference = shared_reference(&fronts, factor)?;
    println!("baseline {}", fmt_triple(&baseline));
    println!("reference {}", fmt_triple(&reference));
    println!("{:<40} {:>12} {:>14} {:>10}", "archive", "evaluations", "run time [s]", "HV");
    for ((p, f), front) in paths.iter().zip(&files).zip(&fronts) {
        let hv = hypervolume_within(front, &reference);
        println!("{:<40} {:>12} {:>14.1} {:>10.6}", p.display(), f.evaluations, f.run_time, hv);
    }
    let out = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).runtime()?;
    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(out.join("compare.csv"))?;
        w.write_record(["archive", "index", "e_jerk", "e_v", "e_lat"])?;
        for ((p, f), front) in paths.iter().zip(&files).zip(&fronts) {
            for (m, v) in f.archive.members.iter().zip(front) {
                w.write_record([
                    p.display().to_string(),
                    m.index.to_string(),
                    v[0].to_string(),
                    v[1].to_string(),
                    v[2].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    };
    write().runtime()
}

fn hv(paths: &[PathBuf], reference: Option<Numbers<3>>, baseline: Option<Numbers<3>>) -> Result<(), Failure> {
    let baseline = Some(baseline.map_or([1.0; 3], |b| b.0));
    let (_, fronts, _) = load_normalized(paths, baseline)?;
    let reference = match reference {
        Some(r) => r.0,
        None => shared_reference(&fronts, 1.1)?,
    };
    for (p, front) in paths.iter().zip(&fronts) {
        println!("{} {:.12}", p.display(), hypervolume_within(front, &reference));
    }
    Ok(())
}

fn export_track(common: &Common, spacing: f64) -> Result<(), Failure> {
    if !(spacing > 0.0) {
        return Err(Failure::Usage(anyhow!("spacing must be positive")));
    }
    let (_, track, out) = setup(common)?;
    std::fs::write(out.join("track.txt"), track.to_text()).runtime()?;
    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(out.join("track.csv"))?;
        w.write_record(TRACK_COLUMNS)?;
        let n = (track.s_max() / spacing).ceil() as usize;
        let half = 0.5 * track.lane_width();
        for k in 0..=n {
            let s = (k as f64 * spacing).min(track.s_max());
            let p = track.eval_path(s)?;
            let (sn, cs) = p.psi_ref.sin_cos();
            let row = [
                s,
                p.x_ref,
                p.y_ref,
                p.psi_ref,
                track.curvature(s),
                track.speed_limit(s)?,
                p.x_ref - half * sn,
                p.y_ref + half * cs,
                p.x_ref + half * sn,
                p.y_ref - half * cs,
            ];
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    };
    write().runtime()?;
    println!("wrote {} and {}", out.join("track.csv").display(), out.join("track.txt").display());
    Ok(())
}
