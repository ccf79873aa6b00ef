//! CSV and SVG writers. Files are written to a temporary sibling and renamed
//! into place, so readers never observe a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rfggd_core::rfggd::{Case2Status, OnlineRun, OnlineTermination, StepNote, UpdateStatus};

use crate::error::{Result, RunError};
use crate::experiments::{FollowerReport, GridResult, IteratePath};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

/// Shortest representation that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn grid_csv(g: &GridResult) -> Vec<u8> {
    let rows = g.a_values.iter().enumerate().flat_map(|(i, a)| {
        g.b_values
            .iter()
            .enumerate()
            .map(move |(j, b)| vec![num(*a), num(*b), g.steps[i][j].to_string()])
    });
    csv_bytes(&["a", "b", "feasible_steps"], rows)
}

/// Heatmap of the grid with `a` along the horizontal axis.
pub fn grid_svg(g: &GridResult) -> String {
    let cell = 8usize;
    let (na, nb) = (g.a_values.len(), g.b_values.len());
    let (margin, width, height) = (40usize, na * cell, nb * cell);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="10">"#,
        width + 2 * margin,
        height + 2 * margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="15">feasible steps, c = {}, x0 = {} (max {})</text>"#,
        margin,
        g.c,
        g.x0,
        g.horizon_cap
    );
    for (i, row) in g.steps.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let level = (255.0 * *v as f64 / g.horizon_cap as f64).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({},{},{})"/>"#,
                margin + i * cell,
                margin + height - (j + 1) * cell,
                level,
                level / 2,
                255 - level
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">a</text>"#, margin + width / 2, height + margin + 25);
    let _ = writeln!(s, r#"<text x="10" y="{}">b</text>"#, margin + height / 2);
    s.push_str("</svg>\n");
    s
}

pub fn iterates_csv(paths: &[IteratePath]) -> Vec<u8> {
    let rows = paths.iter().enumerate().flat_map(|(k, p)| {
        p.points.iter().map(move |pt| {
            vec![
                k.to_string(),
                pt.iteration.to_string(),
                pt.phase.as_str().to_string(),
                num(pt.a),
                num(pt.b),
                pt.feasible_steps.to_string(),
            ]
        })
    });
    csv_bytes(&["init", "iteration", "phase", "a", "b", "feasible_steps"], rows)
}

pub fn feasibility_csv(paths: &[IteratePath]) -> Vec<u8> {
    let rows = paths.iter().enumerate().map(|(k, p)| {
        let curve: Vec<String> = p.feasibility_curve().map(|v| v.to_string()).collect();
        vec![
            k.to_string(),
            num(p.init.0),
            num(p.init.1),
            p.case2_iterations.to_string(),
            match p.end {
                crate::experiments::PathEnd::ReachedCap => "reached_cap".into(),
                crate::experiments::PathEnd::Stalled => "stalled".into(),
            },
            curve.join(" "),
        ]
    });
    csv_bytes(&["init", "a0", "b0", "case2_iterations", "end", "feasible_steps_by_iteration"], rows)
}

fn note(n: &StepNote) -> &'static str {
    match n {
        StepNote::Fixed => "fixed",
        StepNote::Case1(UpdateStatus::Accepted { .. }) => "case1_accepted",
        StepNote::Case1(UpdateStatus::NoChange) => "case1_no_change",
        StepNote::Case1(UpdateStatus::BacktrackExhausted) => "case1_backtrack_exhausted",
        StepNote::Case2(Case2Status::AlreadyFeasible) => "case2_already_feasible",
        StepNote::Case2(Case2Status::Extended) => "case2_extended",
        StepNote::Case2(Case2Status::Stalled) => "case2_stalled",
        StepNote::RolloutFailed => "rollout_failed",
    }
}

/// One row per applied input: the state it was applied at, the input, the
/// barriers at that state, the parameters in force and the objectives.
pub fn run_csv(run: &OnlineRun, barriers: &[[f64; 3]]) -> Vec<u8> {
    let rows = (0..run.inputs.len()).map(|k| {
        let mut row = vec![k.to_string(), num(run.times[k])];
        row.extend(run.states[k].iter().map(|v| num(*v)));
        row.extend(run.inputs[k].iter().map(|v| num(*v)));
        row.extend(barriers[k].iter().map(|v| num(*v)));
        row.extend(run.params[k].to_vector().iter().map(|v| num(*v)));
        row.push(num(run.horizon_objective[k]));
        row.push(num(run.rewards[k]));
        row.push(note(&run.notes[k]).to_string());
        row
    });
    csv_bytes(
        &[
            "step", "t", "x", "y", "psi", "v", "omega", "h_min", "h_max", "h_fov", "alpha0", "alpha1", "alpha2",
            "alpha3", "horizon_objective", "reward", "note",
        ],
        rows,
    )
}

pub fn rewards_csv(report: &FollowerReport) -> Vec<u8> {
    let (a, b) = (&report.adaptive, &report.baseline);
    let n = a.inputs.len().max(b.inputs.len());
    let get = |run: &OnlineRun, v: &Vec<f64>, k: usize| if k < run.inputs.len() { num(v[k]) } else { String::new() };
    let rows = (0..n).map(|k| {
        let t = if k < a.times.len() { a.times[k] } else { b.times[k] };
        vec![
            k.to_string(),
            num(t),
            get(a, &a.horizon_objective, k),
            get(b, &b.horizon_objective, k),
            get(a, &a.rewards, k),
            get(b, &b.rewards, k),
        ]
    });
    csv_bytes(
        &[
            "step",
            "t",
            "adaptive_horizon_objective",
            "baseline_horizon_objective",
            "adaptive_reward",
            "baseline_reward",
        ],
        rows,
    )
}

pub fn termination_str(t: &OnlineTermination) -> String {
    match t {
        OnlineTermination::Completed => "completed".into(),
        OnlineTermination::Infeasible { step } => format!("infeasible at step {step}"),
        OnlineTermination::Failed { step, error } => format!("failed at step {step}: {error}"),
    }
}
