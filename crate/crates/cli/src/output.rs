//! CSV emitters. Floats are written with 17 significant digits so that
//! re-parsing gives back the same bits.

use std::io::Write;

use vcrw_core::analysis::{StickFrame, SweepTable};
use vcrw_core::hybrid::TransitionKind;
use vcrw_core::model::{theta_index, Vec2};
use vcrw_core::sim::Sample;
use vcrw_core::{ContactMode, ModelParams, Outcome, Trajectory};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn timeseries_header(params: &ModelParams) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=4 {
        h.extend([format!("x{i}"), format!("z{i}"), format!("th{i}")]);
    }
    if params.variant.has_upper_body() {
        h.push("th5".into());
    }
    h.extend(["mode", "vgrf_rear", "vgrf_fore"].map(String::from));
    if params.variant.has_upper_body() {
        h.push("u".into());
    }
    h
}

fn timeseries_row(s: &Sample, params: &ModelParams) -> Vec<String> {
    let mut row = vec![num(s.t)];
    row.extend(s.q.iter().take(12).map(|&v| num(v)));
    if params.variant.has_upper_body() {
        row.push(num(s.q[theta_index(4)]));
    }
    let (rear, fore) = s.vertical_reactions();
    row.extend([s.mode.to_string(), num(rear), opt(fore)]);
    if params.variant.has_upper_body() {
        row.push(num(s.torque));
    }
    row
}

pub fn write_timeseries<W: Write>(out: W, traj: &Trajectory, params: &ModelParams) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(timeseries_header(params))?;
    for s in &traj.samples {
        w.write_record(timeseries_row(s, params))?;
    }
    w.flush()?;
    Ok(())
}

pub const EVENTS_HEADER: [&str; 5] = ["t", "kind", "rear", "fore", "impulse_norm"];

pub fn write_events<W: Write>(out: W, traj: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in &traj.events {
        // the double-support pair involved in the transition
        let mode = match e.kind {
            TransitionKind::Touchdown => e.post_mode,
            _ => e.pre_mode,
        };
        let (rear, fore) = match mode {
            ContactMode::Single(f) => (f.to_string(), String::new()),
            ContactMode::Double { rear, fore } => (rear.to_string(), fore.to_string()),
        };
        w.write_record([num(e.time), e.kind.label().to_string(), rear, fore, num(e.impulse.norm())])?;
    }
    w.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 7] = ["phi", "b", "period_mean", "length_mean", "speed_mean", "periodicity", "outcome"];

pub fn outcome_label(outcome: &Outcome) -> &'static str {
    match outcome {
        Outcome::Completed => "completed",
        Outcome::Failed { .. } => "failed",
    }
}

pub fn write_sweep<W: Write>(out: W, table: &SweepTable) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in &table.rows {
        let s = r.summary.as_ref();
        w.write_record([
            num(r.phi),
            num(r.b),
            opt(s.map(|s| s.period)),
            opt(s.map(|s| s.length)),
            opt(s.map(|s| s.speed)),
            s.map(|s| s.periodicity.to_string()).unwrap_or_default(),
            outcome_label(&r.outcome).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const STICK_HEADER: [&str; 6] = ["frame_idx", "segment_id", "x0", "z0", "x1", "z1"];

/// Limbs are `limb1`..`limb4` (tip A to tip B), the upper body is `upper`
/// (pin to free end); `center13` and `center24` are marker rows holding the
/// two welded centers of each cross.
pub fn write_stick<W: Write>(out: W, frames: &[StickFrame]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STICK_HEADER)?;
    let mut row = |idx: usize, id: &str, (a, b): (Vec2, Vec2)| {
        w.write_record([idx.to_string(), id.to_string(), num(a.x), num(a.y), num(b.x), num(b.y)])
    };
    for (idx, f) in frames.iter().enumerate() {
        for (i, seg) in f.limbs.iter().enumerate() {
            row(idx, &format!("limb{}", i + 1), *seg)?;
        }
        if let Some(seg) = f.upper_body {
            row(idx, "upper", seg)?;
        }
        row(idx, "center13", f.centers[0])?;
        row(idx, "center24", f.centers[1])?;
    }
    w.flush()?;
    Ok(())
}
