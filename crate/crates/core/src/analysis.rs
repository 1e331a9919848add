//! Gait descriptors, periodicity, slope sweeps and stick diagrams.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Result, VcrwError};
use crate::hybrid::TransitionEvent;
use crate::model::{tip_position, upper_body_axis, ModelParams, Vec2, LIMBS, UPPER_BODY_ANGLE};
use crate::model::{Foot, GeneralizedState, Side};
use crate::sim::{default_initial_state, simulate, InitialConditions, Outcome, SimConfig, StopRule, Trajectory};

/// One step, from a touchdown to the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    /// Time of the touchdown that opens the step, s.
    pub start: f64,
    pub period: f64,
    pub length: f64,
    pub speed: f64,
    /// Positive actuator work over the step, J.
    pub actuator_work: f64,
    pub specific_resistance: f64,
}

fn landing_point(event: &TransitionEvent, params: &ModelParams) -> Result<Vec2> {
    let foot = event
        .foot()
        .ok_or_else(|| VcrwError::Contract("touchdown event without a landing foot".into()))?;
    Ok(tip_position(&event.pre_state, params, foot))
}

/// Steps between consecutive touchdowns. Length is the horizontal distance
/// between landing points; SR is positive work over weight times length.
pub fn step_descriptors(traj: &Trajectory, params: &ModelParams) -> Result<Vec<StepRecord>> {
    let touchdowns: Vec<&TransitionEvent> = traj.touchdowns().collect();
    if touchdowns.len() < 2 {
        return Err(VcrwError::TooFewEvents {
            needed: 2,
            found: touchdowns.len(),
        });
    }
    let weight = params.total_mass() * params.gravity;
    touchdowns
        .windows(2)
        .enumerate()
        .map(|(index, pair)| {
            let (a, b) = (pair[0], pair[1]);
            let period = b.time - a.time;
            let length = landing_point(b, params)?.x - landing_point(a, params)?.x;
            let actuator_work = (b.actuator_work - a.actuator_work).max(0.0);
            Ok(StepRecord {
                index,
                start: a.time,
                period,
                length,
                speed: length / period,
                actuator_work,
                specific_resistance: actuator_work / (weight * length),
            })
        })
        .collect()
}

/// Period of a step sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Periodicity {
    Period(usize),
    Aperiodic,
}

impl fmt::Display for Periodicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Periodicity::Period(k) => write!(f, "{k}"),
            Periodicity::Aperiodic => f.write_str("aperiodic"),
        }
    }
}

pub const MAX_PERIOD: usize = 4;
pub const PERIODICITY_TOL: f64 = 1e-3;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Smallest `k ≤ 4` for which period and length repeat every `k` steps to a
/// relative `tol`. Needs at least `2k` records to accept `k`.
pub fn detect_periodicity(records: &[StepRecord], tol: f64) -> Periodicity {
    (1..=MAX_PERIOD)
        .filter(|&k| records.len() >= 2 * k)
        .find(|&k| {
            records.windows(k + 1).all(|w| {
                close(w[0].period, w[k].period, tol) && close(w[0].length, w[k].length, tol)
            })
        })
        .map_or(Periodicity::Aperiodic, Periodicity::Period)
}

/// Which steps the summary statistics are taken over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisWindow {
    /// Skip steps that start before this time, s.
    pub settle: f64,
    pub steps: usize,
}

impl AnalysisWindow {
    /// 20 steps after 100 s.
    pub fn passive() -> Self {
        AnalysisWindow {
            settle: 100.0,
            steps: 20,
        }
    }

    /// The first 40 steps.
    pub fn assisted() -> Self {
        AnalysisWindow {
            settle: 0.0,
            steps: 40,
        }
    }

    pub fn select<'a>(&self, records: &'a [StepRecord]) -> Result<&'a [StepRecord]> {
        let first = records.iter().position(|r| r.start >= self.settle);
        match first {
            Some(i) if records.len() - i >= self.steps => Ok(&records[i..i + self.steps]),
            _ => Err(VcrwError::TooFewEvents {
                needed: self.steps + 1,
                found: first.map_or(0, |i| records.len() - i + 1),
            }),
        }
    }

    /// Stop rule that ends a run once the window is covered.
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            after_time: self.settle,
            touchdowns: self.steps + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSummary {
    pub period: f64,
    pub length: f64,
    pub speed: f64,
    pub specific_resistance: f64,
    pub periodicity: Periodicity,
}

fn mean(records: &[StepRecord], f: impl Fn(&StepRecord) -> f64) -> f64 {
    records.iter().map(f).sum::<f64>() / records.len() as f64
}

pub fn summarize(records: &[StepRecord]) -> GaitSummary {
    GaitSummary {
        period: mean(records, |r| r.period),
        length: mean(records, |r| r.length),
        speed: mean(records, |r| r.speed),
        specific_resistance: mean(records, |r| r.specific_resistance),
        periodicity: detect_periodicity(records, PERIODICITY_TOL),
    }
}

/// Settings shared by every sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sim: SimConfig,
    pub initial: InitialConditions,
    pub window: AnalysisWindow,
}

impl SweepConfig {
    /// The run settings actually used per cell: long enough to cover the
    /// window, stopping as soon as it is covered, recording events only.
    pub fn cell_sim(&self) -> SimConfig {
        SimConfig {
            duration: self.sim.duration.max(self.window.settle + 2.0 * self.window.steps as f64 + 10.0),
            record_stride: usize::MAX,
            stop: Some(self.window.stop_rule()),
            ..self.sim.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub phi: f64,
    pub b: f64,
    /// Present only for completed runs that cover the window.
    pub summary: Option<GaitSummary>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Simulates one (φ, b) cell and summarizes it over the window.
pub fn sweep_cell(template: &ModelParams, phi: f64, b: f64, config: &SweepConfig) -> Result<SweepRow> {
    let params = template.clone().with_slope(phi).with_attach_offset(b);
    let (state, mode) = default_initial_state(&params, &config.initial)?;
    let traj = simulate(&params, &state, mode, &config.cell_sim())?;
    let summary = match traj.outcome {
        Outcome::Completed => {
            let records = step_descriptors(&traj, &params).ok();
            records.and_then(|r| config.window.select(&r).ok().map(summarize))
        }
        Outcome::Failed { .. } => None,
    };
    Ok(SweepRow {
        phi,
        b,
        summary,
        outcome: traj.outcome,
    })
}

/// One row per (φ, b), φ-major. Cells run in parallel; failures are
/// recorded in the row rather than raised.
pub fn slope_sweep(
    template: &ModelParams,
    phis: &[f64],
    bs: &[f64],
    config: &SweepConfig,
) -> Result<SweepTable> {
    if phis.is_empty() || bs.is_empty() {
        return Err(VcrwError::InvalidParameter {
            name: "sweep grid",
            reason: "needs at least one slope and one offset".into(),
        });
    }
    template.validate()?;
    config.sim.validate()?;
    let cells: Vec<(f64, f64)> = phis.iter().flat_map(|&p| bs.iter().map(move |&b| (p, b))).collect();
    let rows = cells
        .par_iter()
        .map(|&(phi, b)| sweep_cell(template, phi, b, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}

pub type Segment = (Vec2, Vec2);

/// Geometry of one stick-diagram frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StickFrame {
    pub t: f64,
    /// Tip A to tip B of each limb.
    pub limbs: [Segment; LIMBS],
    /// Pin to the free end of the upper body.
    pub upper_body: Option<Segment>,
    /// (G1, G3) and (G2, G4).
    pub centers: [Segment; 2],
}

impl StickFrame {
    pub fn from_state(state: &GeneralizedState, params: &ModelParams) -> StickFrame {
        let limbs = std::array::from_fn(|limb| {
            (
                tip_position(state, params, Foot { limb, side: Side::A }),
                tip_position(state, params, Foot { limb, side: Side::B }),
            )
        });
        let upper_body = params.variant.has_upper_body().then(|| {
            let pin = state.center(0);
            (pin, pin + params.upper_body.length * upper_body_axis(state.q[UPPER_BODY_ANGLE]))
        });
        StickFrame {
            t: state.t,
            limbs,
            upper_body,
            centers: [(state.center(0), state.center(2)), (state.center(1), state.center(3))],
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.limbs.iter().copied().chain(self.upper_body)
    }
}

/// Frames from every `stride`-th recorded sample with `t0 ≤ t ≤ t1`.
pub fn stick_diagram(
    traj: &Trajectory,
    params: &ModelParams,
    t0: f64,
    t1: f64,
    stride: usize,
) -> Result<Vec<StickFrame>> {
    if stride == 0 {
        return Err(VcrwError::InvalidParameter {
            name: "stride",
            reason: "must be at least 1".into(),
        });
    }
    let frames: Vec<StickFrame> = traj
        .samples
        .iter()
        .filter(|s| s.t >= t0 && s.t <= t1)
        .step_by(stride)
        .map(|s| StickFrame::from_state(&s.state(), params))
        .collect();
    if frames.is_empty() {
        return Err(VcrwError::EmptyRange { t0, t1 });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{nominal_pose, Variant};

    fn record(period: f64, length: f64) -> StepRecord {
        StepRecord {
            index: 0,
            start: 0.0,
            period,
            length,
            speed: length / period,
            actuator_work: 0.0,
            specific_resistance: 0.0,
        }
    }

    #[test]
    fn constant_sequence_is_period_one() {
        let r = vec![record(0.5, 0.23); 10];
        assert_eq!(detect_periodicity(&r, 1e-3), Periodicity::Period(1));
    }

    #[test]
    fn alternating_sequence_is_period_two() {
        let r: Vec<_> = (0..10)
            .map(|i| if i % 2 == 0 { record(0.5, 0.23) } else { record(0.45, 0.22) })
            .collect();
        assert_eq!(detect_periodicity(&r, 1e-3), Periodicity::Period(2));
    }

    #[test]
    fn drifting_sequence_is_aperiodic() {
        let r: Vec<_> = (0..12).map(|i| record(0.5 + 0.01 * i as f64, 0.23)).collect();
        assert_eq!(detect_periodicity(&r, 1e-3), Periodicity::Aperiodic);
    }

    #[test]
    fn short_sequence_cannot_prove_a_period() {
        let r = vec![record(0.5, 0.23)];
        assert_eq!(detect_periodicity(&r, 1e-3), Periodicity::Aperiodic);
    }

    #[test]
    fn window_skips_settling_steps() {
        let r: Vec<_> = (0..30)
            .map(|i| StepRecord {
                start: i as f64,
                ..record(1.0, 0.2)
            })
            .collect();
        let w = AnalysisWindow { settle: 5.0, steps: 10 };
        let sel = w.select(&r).unwrap();
        assert_eq!(sel.len(), 10);
        assert_eq!(sel[0].start, 5.0);
        let w = AnalysisWindow { settle: 25.0, steps: 10 };
        assert!(matches!(w.select(&r), Err(VcrwError::TooFewEvents { .. })));
    }

    #[test]
    fn summary_means() {
        let r = [record(0.4, 0.2), record(0.6, 0.24)];
        let s = summarize(&r);
        assert!((s.period - 0.5).abs() < 1e-15);
        assert!((s.length - 0.22).abs() < 1e-15);
        assert!((s.speed - 0.45).abs() < 1e-15);
    }

    #[test]
    fn empty_grid_rejected() {
        let p = ModelParams::table_one(Variant::Vcrw1);
        let cfg = SweepConfig {
            sim: SimConfig::default(),
            initial: InitialConditions::default(),
            window: AnalysisWindow::passive(),
        };
        assert!(slope_sweep(&p, &[], &[0.25], &cfg).is_err());
    }

    #[test]
    fn stick_frame_segments_pass_through_centers() {
        let p = ModelParams::level_assisted();
        let s = nominal_pose(&p, Vec2::new(0.1, 0.3), -0.2);
        let f = StickFrame::from_state(&s, &p);
        for (limb, (a, b)) in f.limbs.iter().enumerate() {
            assert!(((a + b) / 2.0 - s.center(limb)).norm() < 1e-15);
        }
        assert_eq!(f.segments().count(), 5);
        let (pin, end) = f.upper_body.unwrap();
        assert!(((end - pin).norm() - p.upper_body.length).abs() < 1e-15);
    }
}
