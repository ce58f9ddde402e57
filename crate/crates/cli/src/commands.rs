use std::io::Write;
use std::path::{Path, PathBuf};

use gesture_corrector::base::{evaluate, BasePipeline, GesturePredictor};
use gesture_corrector::corrector::{correction_latency_probe, CorrectorBundle, CorrectorState, TrainingReport};
use gesture_corrector::eval::{
    best_point, classify_event, delta_grid, distance_histogram, intdim_grid, sweep as sweep_set, table1_report,
    write_histogram_csv, write_intdim_csv, write_sweep_csv, write_sweep_rows, write_table1_csv, EventCounts,
    SweepPoint, SWEEP_HEADER,
};
use gesture_corrector::features::Dataset;
use gesture_corrector::synth::{generate, SynthSplits};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{header_line, Staged};
use crate::{CliError, Command};

pub const SPLITS: [&str; 4] = ["base_train", "base_test", "new_user_train", "new_user_test"];
/// Sets swept by `sweep`, in the order their rows appear in sweep.csv.
pub const SWEEP_SETS: [&str; 3] = ["new_user_train", "new_user_test", "base_train"];

/// Folds subcommand flags into the configuration.
pub fn apply_overrides(cfg: &mut RunConfig, command: &Command) {
    fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
        if let Some(v) = src {
            *dst = v.clone();
        }
    }
    let p = &mut cfg.paths;
    match command {
        Command::Synth(a) => {
            set(&mut p.data_dir, &a.out_dir);
            set(&mut cfg.synth.users, &a.users);
            set(&mut cfg.synth.samples_per_gesture, &a.samples_per_gesture);
            set(&mut cfg.synth.shift_multiplier, &a.shift_multiplier);
        }
        Command::TrainBase(a) => {
            set(&mut p.data_dir, &a.data_dir);
            set(&mut p.base_model, &a.out);
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.base.model, &a.model);
            if a.pcs.is_some() {
                cfg.base.pcs = a.pcs;
            }
            set(&mut cfg.base.poly_degree, &a.poly_degree);
        }
        Command::TrainCorrector(a) => {
            set(&mut p.base_model, &a.base_model);
            set(&mut p.data_dir, &a.data_dir);
            set(&mut p.corrector, &a.out);
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.corrector.pcs, &a.pcs);
            set(&mut cfg.corrector.degree, &a.degree);
            set(&mut cfg.corrector.delta, &a.delta);
            set(&mut cfg.corrector.min_error_class, &a.min_error_class);
        }
        Command::Sweep(a) => {
            set(&mut p.base_model, &a.base_model);
            set(&mut p.corrector, &a.corrector);
            set(&mut p.data_dir, &a.data_dir);
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.sweep.grid, &a.grid);
        }
        Command::Correct(a) => {
            set(&mut p.base_model, &a.base_model);
            set(&mut p.corrector, &a.corrector);
            set(&mut cfg.corrector.delta, &a.delta);
        }
        Command::Intdim(a) => {
            set(&mut p.data_dir, &a.data_dir);
            set(&mut p.out_dir, &a.out_dir);
            set(&mut cfg.intdim.max_samples, &a.max_samples);
            set(&mut cfg.intdim.alpha, &a.alpha);
        }
    }
}

fn load_split(cfg: &RunConfig, name: &str) -> Result<Dataset, CliError> {
    Ok(Dataset::load(&cfg.paths.split(name))?)
}

fn dataset_bytes(header: &str, ds: &Dataset) -> Result<Vec<u8>, CliError> {
    let mut buf = header.as_bytes().to_vec();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn report_written(out: &mut dyn Write, paths: &[PathBuf]) -> Result<(), CliError> {
    for p in paths {
        writeln!(out, "wrote {}", p.display()).map_err(stdout_err)?;
    }
    Ok(())
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io("<stdout>", e)
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(stdout_err)?
    };
}

pub fn synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let splits = generate(&cfg.synth_config())?;
    let header = header_line(
        "synth",
        cfg.seed,
        &[
            ("users", cfg.synth.users.to_string()),
            ("shift_multiplier", cfg.synth.shift_multiplier.to_string()),
        ],
    );
    let mut staged = Staged::default();
    for (name, ds) in SPLITS.iter().zip(split_list(&splits)) {
        say!(out, "{name}: {} samples", ds.len());
        staged.add(cfg.paths.split(name), dataset_bytes(&header, ds)?);
    }
    report_written(out, &staged.commit()?)
}

fn split_list(s: &SynthSplits) -> [&Dataset; 4] {
    [&s.base_train, &s.base_test, &s.new_user_train, &s.new_user_test]
}

pub fn train_base(cfg: &RunConfig, args: &crate::TrainBaseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let base_cfg = cfg.base_config()?;
    let train = load_split(cfg, "base_train")?;
    let test = load_split(cfg, "base_test")?;
    let new_user = if args.table1 {
        Some((load_split(cfg, "new_user_train")?, load_split(cfg, "new_user_test")?))
    } else {
        None
    };
    let model = BasePipeline::fit(&train, &base_cfg)?;
    say!(out, "model {} on {} PCs (seed {})", base_cfg.kind, base_cfg.pcs, cfg.seed);
    say!(out, "train accuracy {:.4}", evaluate(&model, &train)?.accuracy);
    say!(out, "test accuracy {:.4}", evaluate(&model, &test)?.accuracy);

    let mut staged = Staged::default();
    staged.add(&cfg.paths.base_model, json_bytes(&model)?);
    if let Some((nu_train, nu_test)) = new_user {
        let splits = SynthSplits {
            base_train: train,
            base_test: test,
            new_user_train: nu_train,
            new_user_test: nu_test,
        };
        let table = table1_report(&base_cfg, &splits)?;
        for (name, row) in ["trained on base_train", "trained on new_user_train"].iter().zip(&table.rows) {
            say!(
                out,
                "{name}: base_train {:.4} base_test {:.4} new_user_train {:.4} new_user_test {:.4}",
                row[0],
                row[1],
                row[2],
                row[3]
            );
        }
        let mut buf = header_line("train-base", cfg.seed, &[("model", base_cfg.kind.to_string())]).into_bytes();
        write_table1_csv(&mut buf, &table).map_err(|e| CliError::io("table1.csv", e))?;
        staged.add(cfg.paths.out_dir.join("table1.csv"), buf);
    }
    report_written(out, &staged.commit()?)
}

pub fn train_corrector(cfg: &RunConfig, args: &crate::TrainCorrectorArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.bins == 0 {
        return Err(CliError::Config("histogram needs at least one bin".into()));
    }
    let base = BasePipeline::load(&cfg.paths.base_model)?;
    let data_path = args.data.clone().unwrap_or_else(|| cfg.paths.split("new_user_train"));
    let data = Dataset::load(&data_path)?;
    let training = CorrectorBundle::train(&base, &data, cfg.corrector_config())?;
    let r = &training.report;
    print_training(out, &training.bundle, r)?;

    let mut staged = Staged::default();
    staged.add(&cfg.paths.corrector, json_bytes(&training.bundle)?);
    staged.add(cfg.paths.out_dir.join("corrector_report.json"), json_bytes(r)?);
    if let (Some(det), Some(split)) = (training.bundle.detector(), &training.split) {
        let features = base.whitened_pcs_matrix(&data, cfg.corrector.pcs)?;
        let h = distance_histogram(
            det,
            &features.select_rows(&split.correct),
            &features.select_rows(&split.errors),
            args.bins,
        )?;
        let mut buf = header_line("train-corrector", cfg.seed, &[("bins", args.bins.to_string())]).into_bytes();
        write_histogram_csv(&mut buf, &h).map_err(|e| CliError::io("histogram.csv", e))?;
        staged.add(cfg.paths.out_dir.join("histogram.csv"), buf);
    }
    report_written(out, &staged.commit()?)
}

fn print_training(out: &mut dyn Write, bundle: &CorrectorBundle, r: &TrainingReport) -> Result<(), CliError> {
    let mode = match bundle.state {
        CorrectorState::PassThrough => "pass-through",
        CorrectorState::DetectOnly { .. } => "detect-only",
        CorrectorState::Full { .. } => "full",
    };
    say!(out, "samples {} correct {} errors {}", r.samples, r.correct, r.errors);
    if r.errors == 0 {
        say!(out, "notice: base model made no errors; writing a pass-through corrector");
    }
    for (t, n) in &r.error_type_counts {
        say!(out, "error type {t}: {n}");
    }
    for (t, n) in &r.dropped {
        say!(out, "dropped error type {t}: {n}");
    }
    if let Some(d) = bundle.detector() {
        say!(
            out,
            "theta_min {} theta_max {} delta {} theta {}",
            d.theta_min(),
            d.theta_max(),
            d.delta(),
            d.theta()
        );
        say!(out, "lifted dim {} whitened dim {}", r.lifted_dim, r.whitened_dim);
    }
    say!(out, "mode {mode}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct SetSummary<'a> {
    set: &'a str,
    samples: usize,
    base_accuracy: f64,
    best: SweepPoint,
    /// Largest TPR among points with FPR ≤ 0.05.
    tpr_at_fpr_05: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    seed: u64,
    grid: usize,
    degree: usize,
    sets: Vec<SetSummary<'a>>,
    /// Δ with the largest gain on new_user_test.
    best_delta: f64,
    new_user_test_gain: f64,
    base_train_change_at_best: f64,
}

pub fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let deltas = delta_grid(cfg.sweep.grid)?;
    let base = BasePipeline::load(&cfg.paths.base_model)?;
    let bundle = CorrectorBundle::load(&cfg.paths.corrector)?;
    let sets = SWEEP_SETS
        .iter()
        .map(|name| load_split(cfg, name))
        .collect::<Result<Vec<_>, _>>()?;
    let points = sets
        .iter()
        .map(|ds| sweep_set(&base, &bundle, ds, &deltas))
        .collect::<Result<Vec<_>, _>>()?;

    let header = header_line(
        "sweep",
        cfg.seed,
        &[("grid", cfg.sweep.grid.to_string()), ("sets", SWEEP_SETS.join(","))],
    );
    let mut all = header.clone().into_bytes();
    writeln!(all, "{SWEEP_HEADER}").map_err(stdout_err)?;
    let mut staged = Staged::default();
    let mut summaries = Vec::new();
    for ((name, ds), pts) in SWEEP_SETS.iter().zip(&sets).zip(&points) {
        write_sweep_rows(&mut all, pts).map_err(|e| CliError::io("sweep.csv", e))?;
        let mut one = header.clone().into_bytes();
        write_sweep_csv(&mut one, pts).map_err(|e| CliError::io("sweep.csv", e))?;
        staged.add(cfg.paths.out_dir.join(format!("sweep_{name}.csv")), one);
        let best = best_point(pts).expect("non-empty grid").clone();
        let tpr_at_fpr_05 = pts.iter().filter(|p| p.fpr <= 0.05).map(|p| p.tpr).fold(0.0, f64::max);
        say!(
            out,
            "{name}: base {:.4} best Δ {:.2} corrected {:.4} ({:+.4}), max TPR at FPR<=0.05 {:.3}",
            best.base_accuracy,
            best.delta,
            best.corrected_accuracy,
            best.accuracy_delta,
            tpr_at_fpr_05
        );
        summaries.push(SetSummary {
            set: name,
            samples: ds.len(),
            base_accuracy: best.base_accuracy,
            best,
            tpr_at_fpr_05,
        });
    }
    let test_best = summaries[1].best.delta;
    let at = deltas.iter().position(|&d| d == test_best).expect("Δ from grid");
    let summary = SweepSummary {
        seed: cfg.seed,
        grid: cfg.sweep.grid,
        degree: bundle.config.degree,
        best_delta: test_best,
        new_user_test_gain: summaries[1].best.accuracy_delta,
        base_train_change_at_best: points[2][at].accuracy_delta,
        sets: summaries,
    };
    say!(
        out,
        "at Δ {:.2}: new_user_test {:+.4}, base_train {:+.4}",
        summary.best_delta,
        summary.new_user_test_gain,
        summary.base_train_change_at_best
    );
    staged.add(cfg.paths.out_dir.join("sweep.csv"), all);
    staged.add(cfg.paths.out_dir.join("sweep_summary.json"), json_bytes(&summary)?);
    report_written(out, &staged.commit()?)
}

/// Column order of the `correct` output.
pub const CORRECT_HEADER: &str = "user_id,truth,base_pred,flagged,score,matched_type,final,event";

pub fn correct(cfg: &RunConfig, args: &crate::CorrectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.probe_latency == Some(0) {
        return Err(CliError::Config("latency probe needs at least one call".into()));
    }
    let base = BasePipeline::load(&cfg.paths.base_model)?;
    let mut bundle = CorrectorBundle::load(&cfg.paths.corrector)?;
    if args.delta.is_some() {
        bundle = bundle.with_delta(cfg.corrector.delta)?;
    }
    let data = Dataset::load(&args.input)?;

    let mut buf = header_line("correct", cfg.seed, &[("delta", bundle.config.delta.to_string())]).into_bytes();
    writeln!(buf, "{CORRECT_HEADER}").map_err(stdout_err)?;
    let mut counts = EventCounts::default();
    let mut base_right = 0;
    for (s, row) in data.samples().iter().zip(data.flat().row_iter()) {
        let (y_pred, o) = bundle.correct(&base, row)?;
        let event = classify_event(s.label, y_pred, &o);
        counts.add(event);
        base_right += usize::from(y_pred == s.label);
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{}",
            s.user_id,
            s.label,
            y_pred,
            u8::from(o.flagged),
            o.score,
            o.matched_type.map(|t| t.to_string()).unwrap_or_default(),
            o.final_label,
            event
        )
        .map_err(stdout_err)?;
    }
    let n = data.len().max(1) as f64;
    say!(
        out,
        "{} rows: base accuracy {:.4}, corrected accuracy {:.4}",
        data.len(),
        base_right as f64 / n,
        counts.corrected_accuracy()
    );
    for (e, c) in gesture_corrector::eval::PredictionEvent::ALL.iter().zip(counts.0) {
        say!(out, "  {e}: {c}");
    }
    if let Some(calls) = args.probe_latency {
        match bundle.detector() {
            Some(det) => {
                let stats = correction_latency_probe(det, bundle.error_types(), calls, cfg.seed)?;
                say!(
                    out,
                    "latency over {} calls: median {:.3} µs, p99 {:.3} µs, max {:.3} µs",
                    stats.calls,
                    stats.median_ns as f64 / 1e3,
                    stats.p99_ns as f64 / 1e3,
                    stats.max_ns as f64 / 1e3
                );
            }
            None => say!(out, "latency probe skipped: pass-through corrector does no work"),
        }
    }
    let mut staged = Staged::default();
    staged.add(&args.out, buf);
    report_written(out, &staged.commit()?)
}

/// Evenly strided subset of at most `max` rows.
pub fn strided(ds: &Dataset, max: usize) -> Dataset {
    if ds.len() <= max {
        return ds.clone();
    }
    let idx: Vec<usize> = (0..max).map(|i| i * ds.len() / max).collect();
    ds.subset(&idx)
}

pub fn intdim(cfg: &RunConfig, args: &crate::IntdimArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let input: PathBuf = args.input.clone().unwrap_or_else(|| cfg.paths.split("base_train"));
    let target = args.out.clone().unwrap_or_else(|| cfg.paths.out_dir.join("intdim.csv"));
    let data = strided(&Dataset::load(&input)?, cfg.intdim.max_samples);
    let i = &cfg.intdim;
    let cells = intdim_grid(data.flat(), &i.pcs, &i.degrees, i.alpha)?;
    say!(out, "{} samples from {}", data.len(), display(&input));
    for c in &cells {
        log::info!("pcs {} degree {}: {} features, n = {}", c.pcs, c.degree, c.features, c.dimension);
    }
    for &p in &i.pcs {
        let row: Vec<String> = cells
            .iter()
            .filter(|c| c.pcs == p)
            .map(|c| match c.dimension.value() {
                Some(v) => format!("{v:6.2}"),
                None => format!("{:>6}", "inf"),
            })
            .collect();
        say!(out, "pcs {p}: {}", row.join(" "));
    }
    let mut buf = header_line(
        "intdim",
        cfg.seed,
        &[("samples", data.len().to_string()), ("alpha", i.alpha.to_string())],
    )
    .into_bytes();
    write_intdim_csv(&mut buf, &cells).map_err(|e| CliError::io(&target, e))?;
    let mut staged = Staged::default();
    staged.add(target, buf);
    report_written(out, &staged.commit()?)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Prediction-level check used by tests: a loaded model agrees with the
/// original on every row.
pub fn same_predictions(a: &impl GesturePredictor, b: &impl GesturePredictor, data: &Dataset) -> Result<bool, CliError> {
    for row in data.flat().row_iter() {
        if a.predict_label(row)? != b.predict_label(row)? {
            return Ok(false);
        }
    }
    Ok(true)
}
