//! Episode traces: the logged record every evaluation statistic is computed
//! from.
//!
//! CSV layout, one row per step:
//!
//! ```text
//! session,episode,step,time,agent_x,agent_y,agent_heading,obstacle_x,
//! obstacle_y,action_index,collided,reached_goal,mean_0..mean_10,
//! var_0..var_10,cost_0..cost_10
//! ```
//!
//! `collided`/`reached_goal` carry the episode's terminal outcome (0/1),
//! repeated on every row of that episode. The `mean_i`/`var_i`/`cost_i`
//! blocks hold the per-primitive prediction mean, variance and joint cost at
//! that step, in primitive order.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::policy::PRIMITIVE_COUNT;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub time: f64,
    pub agent_pos: Vec2,
    pub agent_heading: f64,
    pub obstacle_pos: Vec2,
    pub action_index: usize,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub session: usize,
    pub episode: usize,
    pub steps: Vec<TraceStep>,
    pub collided: bool,
    pub reached_goal: bool,
}

impl EpisodeTrace {
    /// Summed per-primitive prediction variance at each step.
    pub fn step_uncertainties(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.variances.iter().sum())
    }
}

pub fn trace_csv_header() -> String {
    let mut header = String::from(
        "session,episode,step,time,agent_x,agent_y,agent_heading,obstacle_x,obstacle_y,action_index,collided,reached_goal",
    );
    for block in ["mean", "var", "cost"] {
        for i in 0..PRIMITIVE_COUNT {
            let _ = write!(header, ",{block}_{i}");
        }
    }
    header
}

pub fn traces_to_csv(traces: &[EpisodeTrace]) -> String {
    let mut out = trace_csv_header();
    out.push('\n');
    for trace in traces {
        for (step_idx, step) in trace.steps.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                trace.session,
                trace.episode,
                step_idx,
                step.time,
                step.agent_pos.x,
                step.agent_pos.y,
                step.agent_heading,
                step.obstacle_pos.x,
                step.obstacle_pos.y,
                step.action_index,
                trace.collided as u8,
                trace.reached_goal as u8,
            );
            for block in [&step.means, &step.variances, &step.costs] {
                for v in block.iter() {
                    let _ = write!(out, ",{v}");
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_traces_csv(traces: &[EpisodeTrace], path: &Path) -> Result<()> {
    std::fs::write(path, traces_to_csv(traces))?;
    Ok(())
}

/// Parse a trace CSV produced by [`traces_to_csv`].
pub fn read_traces_csv(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let text = std::fs::read_to_string(path)?;
    parse_traces_csv(&text).map_err(|msg| Error::DatasetFile(format!("{}: {msg}", path.display())))
}

pub fn parse_traces_csv(text: &str) -> std::result::Result<Vec<EpisodeTrace>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty trace file")?;
    if header != trace_csv_header() {
        return Err("unexpected trace header".into());
    }
    let mut traces: Vec<EpisodeTrace> = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 + 3 * PRIMITIVE_COUNT {
            return Err(format!("row {}: wrong field count", line_no + 2));
        }
        let parse_f = |s: &str| -> std::result::Result<f64, String> {
            s.parse().map_err(|_| format!("row {}: bad float {s:?}", line_no + 2))
        };
        let parse_u = |s: &str| -> std::result::Result<usize, String> {
            s.parse().map_err(|_| format!("row {}: bad integer {s:?}", line_no + 2))
        };
        let session = parse_u(fields[0])?;
        let episode = parse_u(fields[1])?;
        let step = TraceStep {
            time: parse_f(fields[3])?,
            agent_pos: Vec2::new(parse_f(fields[4])?, parse_f(fields[5])?),
            agent_heading: parse_f(fields[6])?,
            obstacle_pos: Vec2::new(parse_f(fields[7])?, parse_f(fields[8])?),
            action_index: parse_u(fields[9])?,
            means: fields[12..12 + PRIMITIVE_COUNT]
                .iter()
                .map(|s| parse_f(s))
                .collect::<std::result::Result<_, _>>()?,
            variances: fields[12 + PRIMITIVE_COUNT..12 + 2 * PRIMITIVE_COUNT]
                .iter()
                .map(|s| parse_f(s))
                .collect::<std::result::Result<_, _>>()?,
            costs: fields[12 + 2 * PRIMITIVE_COUNT..]
                .iter()
                .map(|s| parse_f(s))
                .collect::<std::result::Result<_, _>>()?,
        };
        let collided = fields[10] == "1";
        let reached_goal = fields[11] == "1";
        let need_new = traces
            .last()
            .map_or(true, |t| t.session != session || t.episode != episode);
        if need_new {
            traces.push(EpisodeTrace {
                session,
                episode,
                steps: Vec::new(),
                collided,
                reached_goal,
            });
        }
        traces.last_mut().expect("just ensured").steps.push(step);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace(session: usize, episode: usize, collided: bool) -> EpisodeTrace {
        EpisodeTrace {
            session,
            episode,
            steps: (0..3)
                .map(|i| TraceStep {
                    time: i as f64 * 0.1,
                    agent_pos: Vec2::new(i as f64, -0.25),
                    agent_heading: 0.1 * i as f64,
                    obstacle_pos: Vec2::new(3.0 - i as f64, 1.0),
                    action_index: i % PRIMITIVE_COUNT,
                    means: (0..PRIMITIVE_COUNT).map(|k| 0.01 * k as f64).collect(),
                    variances: (0..PRIMITIVE_COUNT).map(|k| 0.001 * k as f64).collect(),
                    costs: (0..PRIMITIVE_COUNT).map(|k| k as f64).collect(),
                })
                .collect(),
            collided,
            reached_goal: !collided,
        }
    }

    #[test]
    fn csv_round_trip_preserves_traces() {
        let traces = vec![sample_trace(0, 0, true), sample_trace(0, 1, false)];
        let csv = traces_to_csv(&traces);
        let parsed = parse_traces_csv(&csv).unwrap();
        assert_eq!(parsed, traces);
    }

    #[test]
    fn csv_output_is_deterministic() {
        let traces = vec![sample_trace(1, 2, false)];
        assert_eq!(traces_to_csv(&traces), traces_to_csv(&traces));
    }

    #[test]
    fn parser_rejects_foreign_header() {
        assert!(parse_traces_csv("a,b,c\n1,2,3\n").is_err());
    }
}
