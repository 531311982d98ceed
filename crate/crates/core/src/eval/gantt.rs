use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::Schedule;
use crate::error::{Error, Result};
use crate::instance::{OpId, Time};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttBar {
    pub op_id: OpId,
    pub job: usize,
    pub index: usize,
    pub start: Time,
    pub finish: Time,
    /// `O{job},{index}`, both 1-based.
    pub label: String,
}

/// One row of bars per machine, each row sorted by start time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gantt {
    pub makespan: Time,
    pub machines: Vec<Vec<GanttBar>>,
}

/// Bars of a schedule grouped by machine. Overlapping bars on one machine
/// are an invariant violation.
pub fn emit_gantt(schedule: &Schedule) -> Result<Gantt> {
    let mut machines = Vec::with_capacity(schedule.num_machines);
    for m in 0..schedule.num_machines {
        let rows = schedule.machine_rows(m);
        for w in rows.windows(2) {
            if w[1].start < w[0].finish {
                return Err(Error::Invariant(format!(
                    "operations {} and {} overlap on machine {m}",
                    w[0].op_id, w[1].op_id
                )));
            }
        }
        machines.push(
            rows.into_iter()
                .map(|r| GanttBar {
                    op_id: r.op_id,
                    job: r.job,
                    index: r.idx,
                    start: r.start,
                    finish: r.finish,
                    label: format!("O{},{}", r.job + 1, r.idx + 1),
                })
                .collect(),
        );
    }
    if schedule.ops.iter().any(|o| o.machine >= schedule.num_machines) {
        return Err(Error::Invariant("operation on a machine outside the schedule".into()));
    }
    Ok(Gantt {
        makespan: schedule.makespan(),
        machines,
    })
}

const ROW_HEIGHT: f64 = 28.0;
const LEFT: f64 = 48.0;
const TOP: f64 = 12.0;
const WIDTH: f64 = 960.0;

fn job_colour(job: usize) -> String {
    // golden-angle hue spacing keeps neighbouring jobs apart
    let hue = (job as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},65%,62%)")
}

impl Gantt {
    pub fn num_bars(&self) -> usize {
        self.machines.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_svg(&self) -> String {
        let span = self.makespan.max(1) as f64;
        let scale = (WIDTH - LEFT - 16.0) / span;
        let height = TOP * 2.0 + ROW_HEIGHT * self.machines.len() as f64 + 20.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="10">"#
        );
        for (m, bars) in self.machines.iter().enumerate() {
            let y = TOP + ROW_HEIGHT * m as f64;
            let _ = writeln!(s, r#"<text x="4" y="{:.1}">M{}</text>"#, y + ROW_HEIGHT * 0.6, m + 1);
            for b in bars {
                let x = LEFT + b.start as f64 * scale;
                let w = (b.finish - b.start) as f64 * scale;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{:.1}" width="{w:.2}" height="{:.1}" fill="{}" stroke="black" stroke-width="0.5"><title>{} [{}, {}]</title></rect>"#,
                    y + 2.0,
                    ROW_HEIGHT - 4.0,
                    job_colour(b.job),
                    b.label,
                    b.start,
                    b.finish
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    x + w / 2.0,
                    y + ROW_HEIGHT * 0.6,
                    b.label
                );
            }
        }
        let axis = TOP + ROW_HEIGHT * self.machines.len() as f64;
        let end = LEFT + span * scale;
        let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{axis:.1}" x2="{end:.2}" y2="{axis:.1}" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{end:.2}" y="{:.1}" text-anchor="end">makespan {}</text>"#, axis + 14.0, self.makespan);
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ScheduledOp;

    fn op(op_id: usize, job: usize, idx: usize, machine: usize, start: Time, finish: Time) -> ScheduledOp {
        ScheduledOp {
            op_id,
            job,
            idx,
            machine,
            start,
            finish,
        }
    }

    #[test]
    fn chain_gives_adjacent_bars() {
        let s = Schedule {
            num_machines: 1,
            ops: vec![op(0, 0, 0, 0, 0, 3), op(1, 0, 1, 0, 3, 7)],
        };
        let g = emit_gantt(&s).unwrap();
        let bars: Vec<_> = g.machines[0].iter().map(|b| (b.start, b.finish)).collect();
        assert_eq!(bars, vec![(0, 3), (3, 7)]);
        assert_eq!(g.makespan, 7);
        assert_eq!(g.num_bars(), 2);
        assert_eq!(Gantt::from_json(&g.to_json().unwrap()).unwrap(), g);
        let svg = g.to_svg();
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("makespan 7"));
    }

    #[test]
    fn overlap_is_rejected() {
        let s = Schedule {
            num_machines: 1,
            ops: vec![op(0, 0, 0, 0, 0, 3), op(1, 1, 0, 0, 2, 5)],
        };
        assert!(matches!(emit_gantt(&s), Err(Error::Invariant(_))));
    }
}
