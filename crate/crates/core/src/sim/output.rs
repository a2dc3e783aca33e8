use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::campaign::{BoundRow, CampaignReport, EpisodeOutcome};
use crate::error::Result;
use crate::gp::Dataset;
use crate::planning::{PlannedTrajectory, Point};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Position-plane tube boundary: for every plan knot the desired position
/// and the two points `rho` away along the path normal.
pub fn tube_polylines(plan: &PlannedTrajectory, rho: f64) -> Vec<(f64, Point, Point, Point)> {
    let n = plan.len();
    let pos = |k: usize| -> Point { [plan.states[k][0], plan.states[k][1]] };
    let mut out = Vec::with_capacity(n);
    let mut last_dir = [1.0, 0.0];
    for k in 0..n {
        let (a, b) = (pos(k.saturating_sub(1)), pos((k + 1).min(n - 1)));
        let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dz);
        // hold the last heading while the path is stationary
        if len > 1e-9 {
            last_dir = [dx / len, dz / len];
        }
        let nrm = [-last_dir[1], last_dir[0]];
        let p = pos(k);
        out.push((
            plan.time(k),
            p,
            [p[0] + rho * nrm[0], p[1] + rho * nrm[1]],
            [p[0] - rho * nrm[0], p[1] - rho * nrm[1]],
        ));
    }
    out
}

pub fn write_bounds_table<W: Write>(rows: &[BoundRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["n_data", "delta_h", "delta_hx", "delta_hxi", "used_h", "used_hx", "used_hxi", "conservative"])?;
    for r in rows {
        wr.write_record([
            r.n_data.to_string(),
            format!("{:e}", r.raw.value),
            format!("{:e}", r.raw.grad_x),
            format!("{:e}", r.raw.grad_xi),
            format!("{:e}", r.used.value),
            format!("{:e}", r.used.grad_x),
            format!("{:e}", r.used.grad_xi),
            r.conservative.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_tubes_table<W: Write>(report: &CampaignReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["episode", "n_data", "omega", "gamma", "rho", "certified", "sup_tracking_error", "penetrating_samples"])?;
    for e in &report.episodes {
        wr.write_record([
            e.index.to_string(),
            e.n_data.to_string(),
            format!("{:e}", e.omega),
            format!("{:e}", e.gamma),
            format!("{:e}", e.rho),
            e.certified.to_string(),
            format!("{:e}", e.sup_tracking_error),
            e.penetrating_samples.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn write_tube<W: Write>(plan: &PlannedTrajectory, rho: f64, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "xd_x", "xd_z", "left_x", "left_z", "right_x", "right_z"])?;
    for (t, c, l, r) in tube_polylines(plan, rho) {
        let mut rec = vec![format!("{t:.6}")];
        rec.extend([c, l, r].iter().flat_map(|p| p.iter().map(|v| format!("{v:e}"))));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// State against time with the `+-rho` envelope around the plan, at the
/// plan's knots.
fn write_envelope<W: Write>(ep: &EpisodeOutcome, w: W) -> Result<()> {
    let rho = ep.summary.rho;
    let n = ep.plan.states[0].len();
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    for i in 0..n {
        header.extend([format!("xd{i}"), format!("lo{i}"), format!("hi{i}"), format!("x{i}")]);
    }
    wr.write_record(&header)?;
    let stride = ((ep.plan.dt / ep.log.dt).round() as usize).max(1);
    for r in ep.log.rows.iter().step_by(stride) {
        let mut rec = vec![format!("{:.6}", r.t)];
        for i in 0..n {
            rec.extend([r.x_d[i], r.x_d[i] - rho, r.x_d[i] + rho, r.x[i]].iter().map(|v| format!("{v:e}")));
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundsFile<'a> {
    row: &'a BoundRow,
    learned: Option<&'a crate::bounds::RemainderBounds>,
}

/// Writes `campaign.json`, the bound and tube tables and one directory per
/// episode holding the plan, trace, certificate, bounds and plot data,
/// plus the training data when given.
/// Nothing is written for an empty episode list.
pub fn emit_outputs(report: &CampaignReport, episodes: &[EpisodeOutcome], dataset: Option<&Dataset>, dir: &Path) -> Result<()> {
    if episodes.is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    if let Some(d) = dataset {
        d.write_csv(create(&dir.join("dataset.csv"))?)?;
    }
    write_json(&dir.join("campaign.json"), report)?;
    write_bounds_table(&report.bounds, create(&dir.join("bounds.csv"))?)?;
    write_tubes_table(report, create(&dir.join("tubes.csv"))?)?;
    for ep in episodes {
        let d = dir.join(format!("episode_{}", ep.summary.index));
        std::fs::create_dir_all(&d)?;
        ep.plan.write_csv(create(&d.join("plan.csv"))?)?;
        ep.log.write_csv(create(&d.join("trace.csv"))?)?;
        write_json(&d.join("certificate.json"), &ep.certificate)?;
        write_json(
            &d.join("bounds.json"),
            &BoundsFile {
                row: &ep.bounds,
                learned: ep.learned.as_ref(),
            },
        )?;
        write_tube(&ep.plan, ep.summary.rho, create(&d.join("tube.csv"))?)?;
        write_envelope(ep, create(&d.join("envelope.csv"))?)?;
    }
    Ok(())
}
