//! Summary tables and SVG figures for a finished experiment directory.
//!
//! `emit_report` reads `manifest.json` plus the per-arm artifacts written by
//! the runner and emits a `report/` subdirectory containing seed-aggregated
//! CSV tables (mean over seeds with a 1.96 * sem half-width) and static SVG
//! plots. Online learning curves pool `(env_step, score)` points across seeds
//! per arm group and summarize them with [`bin_curve`]'s ten equal-count bins;
//! when a run is too short to fill ten bins the points are grouped by exact
//! x instead. Everything is a pure function of the directory contents, so
//! regenerating a report is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::bench::config::{fmt_float, ExperimentKind};
use crate::bench::eval::{bin_curve, mean_ci95};
use crate::bench::runner::{fstr, read_manifest, write_csv, CROSSING_SCORE};
use crate::{Error, Result};

/// Build all tables and figures for the experiment at `dir`.
///
/// Returns the paths written (under `<dir>/report/`). Fails if the directory
/// has no manifest or no successful arms.
pub fn emit_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(dir)?;
    let kind_str = manifest["kind"].as_str().unwrap_or_default().to_string();
    let kind = ExperimentKind::ALL
        .iter()
        .copied()
        .find(|k| k.as_str() == kind_str)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment kind {kind_str:?}")))?;
    let arms = ok_arms(&manifest)?;
    let out = dir.join("report");
    fs::create_dir_all(&out)?;
    match kind {
        ExperimentKind::OfflineSweep | ExperimentKind::Privileged => {
            sweep_report(&out, &manifest, &arms)
        }
        ExperimentKind::Compression => compression_report(&out, &manifest, &arms),
        ExperimentKind::NoiseGrid => noise_report(dir, &out, &manifest, &arms),
        ExperimentKind::SigmaSAblation => sigma_report(&out, &manifest, &arms),
        ExperimentKind::Dagger => dagger_report(dir, &out, &manifest, &arms),
        ExperimentKind::Kickstart => kickstart_report(dir, &out, &manifest, &arms),
    }
}

/// Successful arms as `(id, summary)` pairs, in manifest order.
fn ok_arms(manifest: &Value) -> Result<Vec<(String, Value)>> {
    let arms: Vec<(String, Value)> = manifest["arms"]
        .as_array()
        .map(|a| a.as_slice())
        .unwrap_or_default()
        .iter()
        .filter(|a| a["status"] == "ok")
        .map(|a| {
            (
                a["id"].as_str().unwrap_or_default().to_string(),
                a["summary"].clone(),
            )
        })
        .collect();
    if arms.is_empty() {
        return Err(Error::InvalidArgument(
            "report: manifest has no successful arms".into(),
        ));
    }
    Ok(arms)
}

fn field(summary: &Value, key: &str) -> Result<f64> {
    summary[key]
        .as_f64()
        .ok_or_else(|| Error::InvalidArgument(format!("arm summary missing numeric {key:?}")))
}

fn str_list(value: &Value) -> Vec<String> {
    value
        .as_array()
        .map(|a| a.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|v| v.as_str().unwrap_or_default().to_string())
        .collect()
}

fn f64_list(value: &Value) -> Vec<f64> {
    value
        .as_array()
        .map(|a| a.as_slice())
        .unwrap_or_default()
        .iter()
        .filter_map(Value::as_f64)
        .collect()
}

/// Mean, 1.96 * sem and count of `field` over the arms matching `pred`.
fn group_stat<F: Fn(&Value) -> bool>(
    arms: &[(String, Value)],
    pred: F,
    key: &str,
) -> Result<Option<(f64, f64, usize)>> {
    let mut xs = Vec::new();
    for (_, summary) in arms.iter().filter(|(_, s)| pred(s)) {
        xs.push(field(summary, key)?);
    }
    if xs.is_empty() {
        return Ok(None);
    }
    let (mean, _, ci95) = mean_ci95(&xs);
    Ok(Some((mean, ci95, xs.len())))
}

fn save_csv(
    files: &mut Vec<PathBuf>,
    path: PathBuf,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    write_csv(&path, header, rows)?;
    files.push(path);
    Ok(())
}

fn save_svg(files: &mut Vec<PathBuf>, path: PathBuf, plot: &Plot) -> Result<()> {
    fs::write(&path, render_svg(plot))?;
    files.push(path);
    Ok(())
}

// ---------------------------------------------------------------------------
// Offline kinds
// ---------------------------------------------------------------------------

/// Dataset-size sweep (also used by the privileged-observation transfer
/// experiment): score vs trajectory count per method, plus the smallest
/// dataset size at which each method clears 90% of the expert.
fn sweep_report(out: &Path, manifest: &Value, arms: &[(String, Value)]) -> Result<Vec<PathBuf>> {
    let methods = str_list(&manifest["config"]["methods"]);
    let grid = f64_list(&manifest["config"]["trajectory_grid"]);
    let mut files = Vec::new();

    let mut rows = Vec::new();
    let mut crossing_rows = Vec::new();
    let mut series = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        let mut points = Vec::new();
        let mut band = Vec::new();
        let mut crossing: Option<f64> = None;
        for &n in &grid {
            let stat = group_stat(
                arms,
                |s| s["method"] == *method.as_str() && s["n_trajectories"] == n as u64,
                "test_score",
            )?;
            let Some((mean, ci, seeds)) = stat else {
                continue;
            };
            rows.push(vec![
                method.clone(),
                fstr(n),
                fstr(mean),
                fstr(ci),
                seeds.to_string(),
            ]);
            if crossing.is_none() && mean >= CROSSING_SCORE {
                crossing = Some(n);
            }
            let x = n.log10();
            points.push((x, mean));
            band.push((x, mean - ci, mean + ci));
        }
        crossing_rows.push(vec![
            method.clone(),
            crossing.map(fstr).unwrap_or_default(),
        ]);
        series.push(Series {
            label: method.clone(),
            color: PALETTE[mi % PALETTE.len()].to_string(),
            points,
            band: Some(band),
        });
    }
    save_csv(
        &mut files,
        out.join("scores_by_n.csv"),
        &["method", "n_trajectories", "mean_test_score", "ci95", "seeds"],
        &rows,
    )?;
    save_csv(
        &mut files,
        out.join("crossing.csv"),
        &["method", "smallest_n_at_score_0p9"],
        &crossing_rows,
    )?;
    let plot = Plot {
        title: format!("Test score vs dataset size ({})", manifest["name"].as_str().unwrap_or("")),
        x_label: "expert trajectories (log scale)".into(),
        y_label: "expert-normalized score".into(),
        series,
        y_refs: vec![(1.0, "expert".into()), (CROSSING_SCORE, "90% expert".into())],
        x_refs: Vec::new(),
        x_ticks: Some(grid.iter().map(|&n| (n.log10(), fstr(n))).collect()),
    };
    save_svg(&mut files, out.join("fig_scores_by_n.svg"), &plot)?;
    Ok(files)
}

/// Torso-capacity study: score per (method, torso) and the score drop of each
/// torso relative to the highest-capacity torso in the grid.
fn compression_report(
    out: &Path,
    manifest: &Value,
    arms: &[(String, Value)],
) -> Result<Vec<PathBuf>> {
    let methods = str_list(&manifest["config"]["methods"]);
    let torsos: Vec<String> = manifest["config"]["torso_grid"]
        .as_array()
        .map(|a| a.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|t| {
            f64_list(t)
                .iter()
                .map(|w| fstr(*w))
                .collect::<Vec<_>>()
                .join("x")
        })
        .collect();
    // Reference = the widest torso (largest total hidden units, earliest wins).
    let width = |tag: &str| -> f64 {
        tag.split('x')
            .filter_map(|w| w.parse::<f64>().ok())
            .sum::<f64>()
    };
    let reference = torsos
        .iter()
        .cloned()
        .reduce(|best, t| if width(&t) > width(&best) { t } else { best })
        .ok_or_else(|| Error::InvalidArgument("compression report: empty torso grid".into()))?;

    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut drop_rows = Vec::new();
    let mut series = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        let score = |torso: &str| {
            group_stat(
                arms,
                |s| s["method"] == *method.as_str() && s["torso"] == *torso,
                "test_score",
            )
        };
        let reference_score = score(&reference)?.map(|(mean, _, _)| mean);
        let mut points = Vec::new();
        let mut band = Vec::new();
        for (ti, torso) in torsos.iter().enumerate() {
            let Some((mean, ci, seeds)) = score(torso)? else {
                continue;
            };
            rows.push(vec![
                method.clone(),
                torso.clone(),
                fstr(mean),
                fstr(ci),
                seeds.to_string(),
            ]);
            if let Some(ref_score) = reference_score {
                if *torso != reference {
                    drop_rows.push(vec![
                        method.clone(),
                        reference.clone(),
                        torso.clone(),
                        fstr(ref_score - mean),
                    ]);
                }
            }
            points.push((ti as f64, mean));
            band.push((ti as f64, mean - ci, mean + ci));
        }
        series.push(Series {
            label: method.clone(),
            color: PALETTE[mi % PALETTE.len()].to_string(),
            points,
            band: Some(band),
        });
    }
    save_csv(
        &mut files,
        out.join("scores_by_torso.csv"),
        &["method", "torso", "mean_test_score", "ci95", "seeds"],
        &rows,
    )?;
    save_csv(
        &mut files,
        out.join("compression_drop.csv"),
        &["method", "reference_torso", "torso", "score_drop"],
        &drop_rows,
    )?;
    let plot = Plot {
        title: "Test score vs policy torso".into(),
        x_label: "torso (hidden widths)".into(),
        y_label: "expert-normalized score".into(),
        series,
        y_refs: vec![(1.0, "expert".into())],
        x_refs: Vec::new(),
        x_ticks: Some(
            torsos
                .iter()
                .enumerate()
                .map(|(i, t)| (i as f64, t.clone()))
                .collect(),
        ),
    };
    save_svg(&mut files, out.join("fig_scores_by_torso.svg"), &plot)?;
    Ok(files)
}

/// Evaluation-noise robustness: per-method score across the action-noise
/// grid (from the per-arm `noise.csv` files) plus worst-case drops.
fn noise_report(
    dir: &Path,
    out: &Path,
    manifest: &Value,
    arms: &[(String, Value)],
) -> Result<Vec<PathBuf>> {
    let methods = str_list(&manifest["config"]["methods"]);
    let grid = f64_list(&manifest["config"]["eval_noise_grid"]);
    // score[sigma] -> per-seed test scores, read from each arm's noise table.
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut robust_rows = Vec::new();
    let mut series = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        let ids: Vec<&String> = arms
            .iter()
            .filter(|(_, s)| s["method"] == *method.as_str())
            .map(|(id, _)| id)
            .collect();
        let mut curve: Vec<(f64, f64, f64, usize)> = Vec::new();
        for &sigma in &grid {
            let mut scores = Vec::new();
            for id in &ids {
                let path = dir.join("arms").join(id).join("noise.csv");
                let text = fs::read_to_string(&path)?;
                for record in text.lines().skip(1) {
                    let cells: Vec<&str> = record.split(',').collect();
                    if cells.len() == 4 && cells[0].parse::<f64>().ok() == Some(sigma) {
                        scores.push(cells[3].parse::<f64>().map_err(|e| {
                            Error::InvalidArgument(format!("{}: bad score: {e}", path.display()))
                        })?);
                    }
                }
            }
            if scores.is_empty() {
                continue;
            }
            let (mean, _, ci) = mean_ci95(&scores);
            rows.push(vec![
                method.clone(),
                fstr(sigma),
                fstr(mean),
                fstr(ci),
                scores.len().to_string(),
            ]);
            curve.push((sigma, mean, ci, scores.len()));
        }
        if let Some(&(clean_sigma, clean, _, _)) = curve.first() {
            let &(worst_sigma, worst, _, _) = curve
                .iter()
                .reduce(|a, b| if b.1 < a.1 { b } else { a })
                .expect("non-empty curve");
            robust_rows.push(vec![
                method.clone(),
                fstr(clean_sigma),
                fstr(clean),
                fstr(worst_sigma),
                fstr(worst),
                fstr(clean - worst),
            ]);
        }
        series.push(Series {
            label: method.clone(),
            color: PALETTE[mi % PALETTE.len()].to_string(),
            points: curve.iter().map(|&(x, y, _, _)| (x, y)).collect(),
            band: Some(curve.iter().map(|&(x, y, c, _)| (x, y - c, y + c)).collect()),
        });
    }
    save_csv(
        &mut files,
        out.join("scores_by_noise.csv"),
        &["method", "eval_sigma", "mean_test_score", "ci95", "seeds"],
        &rows,
    )?;
    save_csv(
        &mut files,
        out.join("noise_robustness.csv"),
        &[
            "method",
            "clean_sigma",
            "clean_score",
            "worst_sigma",
            "worst_score",
            "max_drop",
        ],
        &robust_rows,
    )?;
    let plot = Plot {
        title: "Test score vs evaluation action noise".into(),
        x_label: "evaluation sigma".into(),
        y_label: "expert-normalized score".into(),
        series,
        y_refs: vec![(1.0, "expert".into())],
        x_refs: Vec::new(),
        x_ticks: None,
    };
    save_svg(&mut files, out.join("fig_scores_by_noise.svg"), &plot)?;
    Ok(files)
}

/// Perturbation-scale ablation: validation return and test score against the
/// sigma_s grid, with the validation-selected point marked.
fn sigma_report(out: &Path, manifest: &Value, arms: &[(String, Value)]) -> Result<Vec<PathBuf>> {
    let grid = f64_list(&manifest["config"]["sigma_s_grid"]);
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut band = Vec::new();
    for &sigma in &grid {
        let pred = |s: &Value| s["sigma_s"].as_f64() == Some(sigma);
        let Some((val_mean, _, seeds)) = group_stat(arms, pred, "best_val_mean")? else {
            continue;
        };
        let (score, score_ci, _) =
            group_stat(arms, pred, "test_score")?.expect("same group as best_val_mean");
        rows.push(vec![
            fstr(sigma),
            fstr(val_mean),
            fstr(score),
            fstr(score_ci),
            seeds.to_string(),
        ]);
        let x = sigma.log10();
        points.push((x, score));
        band.push((x, score - score_ci, score + score_ci));
    }
    save_csv(
        &mut files,
        out.join("scores_by_sigma_s.csv"),
        &[
            "sigma_s",
            "mean_val_return",
            "mean_test_score",
            "test_ci95",
            "seeds",
        ],
        &rows,
    )?;
    let selection = &manifest["selection"];
    let mut x_refs = Vec::new();
    if selection.is_object() {
        save_csv(
            &mut files,
            out.join("selection.csv"),
            &["rule", "group", "parameter", "validation_mean", "test_score_mean"],
            &[vec![
                selection["rule"].as_str().unwrap_or_default().to_string(),
                selection["group"].as_str().unwrap_or_default().to_string(),
                selection["parameter"].as_f64().map(fstr).unwrap_or_default(),
                selection["validation_mean"].as_f64().map(fstr).unwrap_or_default(),
                selection["test_score_mean"].as_f64().map(fstr).unwrap_or_default(),
            ]],
        )?;
        if let Some(chosen) = selection["parameter"].as_f64() {
            x_refs.push((chosen.log10(), "selected".to_string()));
        }
    }
    let plot = Plot {
        title: "Test score vs perturbation scale".into(),
        x_label: "sigma_s (log scale)".into(),
        y_label: "expert-normalized score".into(),
        series: vec![Series {
            label: "apc".into(),
            color: PALETTE[0].to_string(),
            points,
            band: Some(band),
        }],
        y_refs: vec![(1.0, "expert".into())],
        x_refs,
        x_ticks: Some(grid.iter().map(|&s| (s.log10(), fstr(s))).collect()),
    };
    save_svg(&mut files, out.join("fig_scores_by_sigma_s.svg"), &plot)?;
    Ok(files)
}

// ---------------------------------------------------------------------------
// Online kinds
// ---------------------------------------------------------------------------

/// One scored learning-curve point pooled across the seeds of an arm group.
struct GroupCurve {
    tag: String,
    /// `(index, x_min, x_max, mean, ci95, count)` rows.
    bins: Vec<(usize, f64, f64, f64, f64, usize)>,
}

/// Read `arms/<id>/curve.csv` and normalize eval means with the arm's own
/// score anchors (stored in its summary).
fn scored_curve(dir: &Path, id: &str, summary: &Value) -> Result<Vec<(f64, f64)>> {
    let null_mean = field(&summary["refs"], "null_mean")?;
    let expert_mean = field(&summary["refs"], "expert_mean")?;
    let gap = expert_mean - null_mean;
    if gap <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "arm {id}: expert ({expert_mean}) does not beat the null policy ({null_mean})"
        )));
    }
    let path = dir.join("arms").join(id).join("curve.csv");
    let text = fs::read_to_string(&path)?;
    let mut points = Vec::new();
    for record in text.lines().skip(1) {
        let cells: Vec<&str> = record.split(',').collect();
        if cells.len() < 3 {
            continue;
        }
        let x: f64 = cells[0].parse().map_err(|e| {
            Error::InvalidArgument(format!("{}: bad env_step: {e}", path.display()))
        })?;
        let mean: f64 = cells[2].parse().map_err(|e| {
            Error::InvalidArgument(format!("{}: bad eval_mean: {e}", path.display()))
        })?;
        points.push((x, (mean - null_mean) / gap));
    }
    Ok(points)
}

/// Pool scored curve points across one group's arms and bin them. Falls back
/// to exact-x grouping when there are fewer than ten pooled points.
fn pooled_bins(pooled: &[(f64, f64)]) -> Vec<(usize, f64, f64, f64, f64, usize)> {
    if let Ok(bins) = bin_curve(pooled) {
        return bins
            .iter()
            .map(|b| (b.index, b.x_min, b.x_max, b.mean, b.ci95, b.count))
            .collect();
    }
    let mut xs: Vec<f64> = pooled.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite x"));
    xs.dedup();
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let ys: Vec<f64> = pooled.iter().filter(|p| p.0 == x).map(|p| p.1).collect();
            let (mean, _, ci) = mean_ci95(&ys);
            (i, x, x, mean, ci, ys.len())
        })
        .collect()
}

fn group_curves<F: Fn(&Value) -> bool>(
    dir: &Path,
    arms: &[(String, Value)],
    tag: &str,
    pred: F,
) -> Result<Option<GroupCurve>> {
    let mut pooled = Vec::new();
    for (id, summary) in arms.iter().filter(|(_, s)| pred(s)) {
        pooled.extend(scored_curve(dir, id, summary)?);
    }
    if pooled.is_empty() {
        return Ok(None);
    }
    Ok(Some(GroupCurve {
        tag: tag.to_string(),
        bins: pooled_bins(&pooled),
    }))
}

fn curve_rows(curves: &[GroupCurve]) -> Vec<Vec<String>> {
    curves
        .iter()
        .flat_map(|c| {
            c.bins.iter().map(|&(i, x_min, x_max, mean, ci, count)| {
                vec![
                    c.tag.clone(),
                    i.to_string(),
                    fstr(x_min),
                    fstr(x_max),
                    fstr(mean),
                    fstr(ci),
                    count.to_string(),
                ]
            })
        })
        .collect()
}

fn curve_plot(title: &str, curves: &[GroupCurve]) -> Plot {
    let series = curves
        .iter()
        .enumerate()
        .map(|(i, c)| Series {
            label: c.tag.clone(),
            color: PALETTE[i % PALETTE.len()].to_string(),
            points: c
                .bins
                .iter()
                .map(|&(_, lo, hi, mean, _, _)| (0.5 * (lo + hi), mean))
                .collect(),
            band: Some(
                c.bins
                    .iter()
                    .map(|&(_, lo, hi, mean, ci, _)| (0.5 * (lo + hi), mean - ci, mean + ci))
                    .collect(),
            ),
        })
        .collect();
    Plot {
        title: title.into(),
        x_label: "environment steps".into(),
        y_label: "expert-normalized score".into(),
        series,
        y_refs: vec![(1.0, "expert".into()), (CROSSING_SCORE, "90% expert".into())],
        x_refs: Vec::new(),
        x_ticks: None,
    }
}

const CURVE_HEADER: [&str; 7] = ["group", "bin", "x_min", "x_max", "mean_score", "ci95", "count"];

/// Interactive-expert runs: binned curves per variant plus a final table with
/// mean crossing step.
fn dagger_report(
    dir: &Path,
    out: &Path,
    manifest: &Value,
    arms: &[(String, Value)],
) -> Result<Vec<PathBuf>> {
    let tags: Vec<String> = manifest["config"]["dagger_variants"]
        .as_array()
        .map(|a| a.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|v| v["tag"].as_str().unwrap_or_default().to_string())
        .collect();
    let mut files = Vec::new();
    let mut curves = Vec::new();
    let mut final_rows = Vec::new();
    for tag in &tags {
        let pred = |s: &Value| s["tag"] == *tag.as_str();
        if let Some(curve) = group_curves(dir, arms, tag, pred)? {
            curves.push(curve);
        }
        let group: Vec<&Value> = arms.iter().filter(|(_, s)| pred(s)).map(|(_, s)| s).collect();
        if group.is_empty() {
            continue;
        }
        let finals: Vec<f64> = group
            .iter()
            .map(|s| field(s, "final_val_score"))
            .collect::<Result<_>>()?;
        let (final_mean, _, final_ci) = mean_ci95(&finals);
        let crossings: Vec<f64> = group
            .iter()
            .filter_map(|s| s["steps_to_90"].as_f64())
            .collect();
        let mean_crossing = if crossings.is_empty() {
            String::new()
        } else {
            fstr(crossings.iter().sum::<f64>() / crossings.len() as f64)
        };
        final_rows.push(vec![
            tag.clone(),
            group[0]["objective"].as_str().unwrap_or_default().to_string(),
            group.len().to_string(),
            fstr(final_mean),
            fstr(final_ci),
            crossings.len().to_string(),
            mean_crossing,
        ]);
    }
    save_csv(&mut files, out.join("curves_binned.csv"), &CURVE_HEADER, &curve_rows(&curves))?;
    save_csv(
        &mut files,
        out.join("final.csv"),
        &[
            "tag",
            "objective",
            "seeds",
            "mean_final_score",
            "ci95",
            "crossed_seeds",
            "mean_steps_to_90",
        ],
        &final_rows,
    )?;
    let plot = curve_plot("Interactive-expert learning curves", &curves);
    save_svg(&mut files, out.join("fig_online_curves.svg"), &plot)?;
    Ok(files)
}

/// Distillation-augmented actor-critic runs: binned curves per lambda plus a
/// final validation/test table.
fn kickstart_report(
    dir: &Path,
    out: &Path,
    manifest: &Value,
    arms: &[(String, Value)],
) -> Result<Vec<PathBuf>> {
    let grid = f64_list(&manifest["config"]["lambda_grid"]);
    let mut files = Vec::new();
    let mut curves = Vec::new();
    let mut final_rows = Vec::new();
    for &lambda in &grid {
        let tag = format!("lam{}", fmt_float(lambda));
        let pred = |s: &Value| s["lambda"].as_f64() == Some(lambda);
        if let Some(curve) = group_curves(dir, arms, &tag, pred)? {
            curves.push(curve);
        }
        let val = group_stat(arms, pred, "final_val_score")?;
        let Some((val_mean, val_ci, seeds)) = val else {
            continue;
        };
        let (test_mean, test_ci, _) =
            group_stat(arms, pred, "test_score")?.expect("same group as final_val_score");
        final_rows.push(vec![
            fstr(lambda),
            seeds.to_string(),
            fstr(val_mean),
            fstr(val_ci),
            fstr(test_mean),
            fstr(test_ci),
        ]);
    }
    save_csv(&mut files, out.join("curves_binned.csv"), &CURVE_HEADER, &curve_rows(&curves))?;
    save_csv(
        &mut files,
        out.join("final.csv"),
        &[
            "lambda",
            "seeds",
            "mean_final_val_score",
            "val_ci95",
            "mean_test_score",
            "test_ci95",
        ],
        &final_rows,
    )?;
    let plot = curve_plot("Distillation learning curves", &curves);
    save_svg(&mut files, out.join("fig_online_curves.svg"), &plot)?;
    Ok(files)
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
];

struct Series {
    label: String,
    color: String,
    /// Plot-space positions (already log-transformed where the axis is log).
    points: Vec<(f64, f64)>,
    /// Optional `(x, low, high)` confidence band.
    band: Option<Vec<(f64, f64, f64)>>,
}

struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
    /// Horizontal dashed reference lines `(y, label)`.
    y_refs: Vec<(f64, String)>,
    /// Vertical dashed reference lines `(x, label)`.
    x_refs: Vec<(f64, String)>,
    /// Explicit tick positions and labels (categorical or log axes).
    x_ticks: Option<Vec<(f64, String)>>,
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round-number tick positions covering `[lo, hi]` (about five ticks).
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = range / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .expect("10 * mag >= raw");
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + 1e-9 * step {
        // Snap -0.0 and tiny float error to clean multiples.
        ticks.push((t / step).round() * step);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e5 || a < 1e-3 {
        format!("{v:e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn render_svg(plot: &Plot) -> String {
    // Data bounds over points, bands and reference lines.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in &plot.series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
        if let Some(band) = &s.band {
            for &(x, lo, hi) in band {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
    }
    for &(y, _) in &plot.y_refs {
        ys.push(y);
    }
    for &(x, _) in &plot.x_refs {
        xs.push(x);
    }
    if let Some(ticks) = &plot.x_ticks {
        xs.extend(ticks.iter().map(|t| t.0));
    }
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (SVG_W - MARGIN_L - MARGIN_R);
    let py = |y: f64| SVG_H - MARGIN_B - (y - y_min) / (y_max - y_min) * (SVG_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(svg, "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");

    // Grid and ticks.
    let x_ticks: Vec<(f64, String)> = plot.x_ticks.clone().unwrap_or_else(|| {
        nice_ticks(x_min, x_max)
            .into_iter()
            .map(|t| (t, fmt_tick(t)))
            .collect()
    });
    for (t, label) in &x_ticks {
        let x = px(*t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#e0e0e0\"/>",
            MARGIN_T,
            SVG_H - MARGIN_B
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            SVG_H - MARGIN_B + 16.0,
            xml_escape(label)
        );
    }
    for t in nice_ticks(y_min, y_max) {
        let y = py(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#e0e0e0\"/>",
            MARGIN_L,
            SVG_W - MARGIN_R
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 6.0,
            y + 4.0,
            xml_escape(&fmt_tick(t))
        );
    }

    // Reference lines.
    for (y, label) in &plot.y_refs {
        let yp = py(*y);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{:.2}\" y2=\"{yp:.2}\" stroke=\"#888\" \
             stroke-dasharray=\"6 4\"/>",
            MARGIN_L,
            SVG_W - MARGIN_R
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#666\">{}</text>",
            MARGIN_L + 4.0,
            yp - 4.0,
            xml_escape(label)
        );
    }
    for (x, label) in &plot.x_refs {
        let xp = px(*x);
        let _ = writeln!(
            svg,
            "<line x1=\"{xp:.2}\" y1=\"{:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"#888\" \
             stroke-dasharray=\"6 4\"/>",
            MARGIN_T,
            SVG_H - MARGIN_B
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#666\">{}</text>",
            xp + 4.0,
            MARGIN_T + 12.0,
            xml_escape(label)
        );
    }

    // Confidence bands beneath their lines.
    for s in &plot.series {
        if let Some(band) = &s.band {
            if band.len() >= 2 {
                let mut pts = String::new();
                for &(x, lo, _) in band {
                    let _ = write!(pts, "{:.2},{:.2} ", px(x), py(lo));
                }
                for &(x, _, hi) in band.iter().rev() {
                    let _ = write!(pts, "{:.2},{:.2} ", px(x), py(hi));
                }
                let _ = writeln!(
                    svg,
                    "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.15\"/>",
                    pts.trim_end(),
                    s.color
                );
            }
        }
    }
    for s in &plot.series {
        if s.points.len() >= 2 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                pts.join(" "),
                s.color
            );
        }
        if s.points.len() <= 40 {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\"/>",
                    px(x),
                    py(y),
                    s.color
                );
            }
        }
    }

    // Frame, labels, title, legend.
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"#444\"/>",
        SVG_W - MARGIN_L - MARGIN_R,
        SVG_H - MARGIN_T - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        0.5 * SVG_W,
        xml_escape(&plot.title)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        0.5 * SVG_W,
        SVG_H - 14.0,
        xml_escape(&plot.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\">{}</text>",
        0.5 * SVG_H,
        0.5 * SVG_H,
        xml_escape(&plot.y_label)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let y = MARGIN_T + 16.0 + 16.0 * i as f64;
        let x = SVG_W - MARGIN_R - 130.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\" \
             stroke-width=\"2\"/>",
            y - 4.0,
            x + 20.0,
            y - 4.0,
            s.color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"11\">{}</text>",
            x + 26.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::ExperimentConfig;
    use crate::bench::runner::{run_experiment, RunOptions};

    fn run(toml: &str, root: &Path) -> PathBuf {
        let cfg = ExperimentConfig::from_toml_str(toml).unwrap();
        run_experiment(&cfg, &RunOptions::new(root)).unwrap()
    }

    #[test]
    fn sweep_report_tables_and_figures() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = run(
            r#"
kind = "offline_sweep"
name = "rep-sweep"
env = "lqr2d"
methods = ["bc", "apc"]
trajectory_grid = [1, 2]
n_seeds = 2
student_hidden = [8]
validation_size = 3
test_size = 3

[train]
max_iters = 40
eval_period = 20
batch_chunks = 4

[aug]
m = 2
"#,
            tmp.path(),
        );
        let files = emit_report(&dir).unwrap();
        assert_eq!(files.len(), 3);
        for f in &files {
            assert!(f.exists(), "{} missing", f.display());
        }

        let scores = std::fs::read_to_string(dir.join("report/scores_by_n.csv")).unwrap();
        let lines: Vec<&str> = scores.lines().collect();
        assert_eq!(lines[0], "method,n_trajectories,mean_test_score,ci95,seeds");
        // 2 methods x 2 sizes, each over 2 seeds.
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("bc,1,"));
        assert!(lines[1].ends_with(",2"));

        // The aggregated mean matches the manifest's per-seed scores.
        let manifest = read_manifest(&dir).unwrap();
        let mut per_seed = Vec::new();
        for arm in manifest["arms"].as_array().unwrap() {
            if arm["id"].as_str().unwrap().starts_with("bc-n1-") {
                per_seed.push(arm["summary"]["test_score"].as_f64().unwrap());
            }
        }
        let want = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let got: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert!((got - want).abs() < 1e-12);

        let crossing = std::fs::read_to_string(dir.join("report/crossing.csv")).unwrap();
        assert_eq!(crossing.lines().count(), 3);

        let svg = std::fs::read_to_string(dir.join("report/fig_scores_by_n.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains(">bc</text>") && svg.contains(">apc</text>"));

        // Regeneration is byte-identical.
        let before = std::fs::read(dir.join("report/scores_by_n.csv")).unwrap();
        emit_report(&dir).unwrap();
        assert_eq!(std::fs::read(dir.join("report/scores_by_n.csv")).unwrap(), before);
    }

    #[test]
    fn dagger_report_scores_curves_with_arm_anchors() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = run(
            r#"
kind = "dagger"
name = "rep-dagger"
env = "lqr2d"
n_seeds = 2

[dagger]
beta = 0.0
env_step_budget = 60
eval_period_env_steps = 20
eval_size = 2
student_hidden = [8]

[dagger.rate]
batch_size = 4

[[dagger_variants]]
tag = "plain"
"#,
            tmp.path(),
        );
        let files = emit_report(&dir).unwrap();
        assert_eq!(files.len(), 3);

        let curves = std::fs::read_to_string(dir.join("report/curves_binned.csv")).unwrap();
        let lines: Vec<&str> = curves.lines().collect();
        assert_eq!(lines[0], "group,bin,x_min,x_max,mean_score,ci95,count");
        // 4 eval points per seed, 8 pooled -> exact-x fallback: one row per
        // distinct env step, each pooling the two seeds.
        assert_eq!(lines.len(), 5);
        for line in &lines[1..] {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], "plain");
            assert_eq!(cells[2], cells[3]);
            assert_eq!(cells[6], "2");
        }

        // Scored point = (mean - null) / (expert - null) with that arm's refs.
        let manifest = read_manifest(&dir).unwrap();
        let arm = &manifest["arms"][0];
        let id = arm["id"].as_str().unwrap();
        let refs = &arm["summary"]["refs"];
        let gap = refs["expert_mean"].as_f64().unwrap() - refs["null_mean"].as_f64().unwrap();
        let curve = std::fs::read_to_string(dir.join("arms").join(id).join("curve.csv")).unwrap();
        let first: Vec<&str> = curve.lines().nth(1).unwrap().split(',').collect();
        let mean: f64 = first[2].parse().unwrap();
        let want = (mean - refs["null_mean"].as_f64().unwrap()) / gap;
        let pts = scored_curve(&dir, id, &arm["summary"]).unwrap();
        assert!((pts[0].1 - want).abs() < 1e-15);

        let finals = std::fs::read_to_string(dir.join("report/final.csv")).unwrap();
        assert!(finals.starts_with("tag,objective,seeds,mean_final_score,"));
        assert_eq!(finals.lines().count(), 2);
        assert!(finals.lines().nth(1).unwrap().starts_with("plain,analytic_ce,2,"));
    }

    #[test]
    fn report_rejects_missing_or_empty_directories() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(emit_report(&tmp.path().join("nope")).is_err());
        // A manifest whose arms all failed yields a clear error.
        let dir = tmp.path().join("broken");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("manifest.json"),
            r#"{"kind": "offline_sweep", "arms": [{"id": "x", "status": "failed"}]}"#,
        )
        .unwrap();
        let err = emit_report(&dir).unwrap_err();
        assert!(err.to_string().contains("no successful arms"));
    }

    #[test]
    fn nice_ticks_and_formatting() {
        assert_eq!(nice_ticks(0.0, 1.0), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let t = nice_ticks(-3784.0, -3.6);
        assert!(t.len() >= 3 && t.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(fmt_tick(0.25), "0.25");
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(fmt_tick(200000.0), "2e5");
        assert_eq!(fmt_tick(1.0), "1");
    }

    #[test]
    fn binned_fallback_groups_exact_x() {
        let pooled = vec![(0.0, 1.0), (0.0, 3.0), (10.0, 5.0)];
        let bins = pooled_bins(&pooled);
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0], (0, 0.0, 0.0, 2.0, 1.96 * (2.0f64).sqrt() / (2.0f64).sqrt(), 2));
        assert_eq!(bins[1].5, 1);
        // With >= 10 points the equal-count binning kicks in.
        let many: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 1.0)).collect();
        assert_eq!(pooled_bins(&many).len(), 10);
    }
}
