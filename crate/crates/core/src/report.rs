//! Run outputs: per-step records, aggregation-round records, and the summary
//! derived from them. The summary is recomputable from the per-step records
//! (replay equality), and the file writers are deterministic so equal
//! reports produce byte-identical files.

use crate::channel::PayloadLedger;
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub agent: usize,
    pub x: f64,
    pub y: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub a_x: f64,
    pub a_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    /// Mean cumulative motion energy over agents [J].
    pub mean_energy: f64,
    /// Cumulative velocity-alignment metric phi_A(t).
    pub phi_a: f64,
    /// Cumulative collision-risk metric phi_C(t).
    pub phi_c: f64,
    /// Largest |HJB residual| this step across agents.
    pub hjb_residual_max: f64,
    /// Largest |FPK residual| this step across agents.
    pub fpk_residual_max: f64,
    /// Cumulative payload bits so far.
    pub cum_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub step: u64,
    pub candidates: Vec<usize>,
    pub participants: Vec<usize>,
    pub outages: u64,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algo: String,
    pub seed: u64,
    pub n_agents: usize,
    /// Steps actually simulated (the run stops when every agent arrives).
    pub steps_run: u64,
    pub arrived: usize,
    /// Mean first-entry time into the destination region [s]; agents that
    /// never arrive count at the horizon and set `truncated`.
    pub t_avg: f64,
    pub t_max: f64,
    pub truncated: bool,
    /// phi_A evaluated at t = T_avg.
    pub phi_a_at_t_avg: f64,
    /// phi_C evaluated at t = T_avg.
    pub phi_c_at_t_avg: f64,
    /// Motion energy to first arrival, mean and variance across agents [J].
    pub energy_mean: f64,
    pub energy_var: f64,
    /// Pairs that came within r_coll at any step.
    pub collision_events: u64,
    pub speed_max: f64,
    pub speed_mean: f64,
    pub speed_min: f64,
    pub payload: PayloadLedger,
    pub max_abs_hjb_residual: f64,
    pub max_abs_fpk_residual: f64,
    /// Residual envelopes respected and no non-finite value seen.
    pub bounded: bool,
    /// Any mean-field interaction hit a degenerate (zero-mass) density.
    pub degenerate_density: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub summary: Summary,
    pub trajectories: Vec<TrajectoryRow>,
    pub metrics: Vec<MetricsRow>,
    pub rounds: Vec<RoundRecord>,
}

pub const TRAJECTORIES_HEADER: &str = "step,agent,x,y,v_x,v_y,a_x,a_y";
pub const METRICS_HEADER: &str =
    "step,mean_energy,phi_a,phi_c,hjb_residual_max,fpk_residual_max,cum_bits";

impl SimReport {
    /// Write trajectories.csv, metrics.csv, summary.json, rounds.jsonl into
    /// `dir` (created if missing).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        let mut tf = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectories.csv"))?);
        writeln!(tf, "{TRAJECTORIES_HEADER}")?;
        for r in &self.trajectories {
            writeln!(
                tf,
                "{},{},{},{},{},{},{},{}",
                r.step, r.agent, r.x, r.y, r.v_x, r.v_y, r.a_x, r.a_y
            )?;
        }
        tf.flush()?;

        let mut mf = std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.csv"))?);
        writeln!(mf, "{METRICS_HEADER}")?;
        for r in &self.metrics {
            writeln!(
                mf,
                "{},{},{},{},{},{},{}",
                r.step,
                r.mean_energy,
                r.phi_a,
                r.phi_c,
                r.hjb_residual_max,
                r.fpk_residual_max,
                r.cum_bits
            )?;
        }
        mf.flush()?;

        let summary = serde_json::to_string_pretty(&self.summary)
            .expect("summary serialization cannot fail");
        std::fs::write(dir.join("summary.json"), summary + "\n")?;

        let mut rf = std::io::BufWriter::new(std::fs::File::create(dir.join("rounds.jsonl"))?);
        for r in &self.rounds {
            let line = serde_json::to_string(r).expect("round serialization cannot fail");
            writeln!(rf, "{line}")?;
        }
        rf.flush()?;
        Ok(())
    }

    /// One-line human summary for the terminal.
    pub fn summary_line(&self) -> String {
        let s = &self.summary;
        format!(
            "{} seed={} T_avg={:.1}s T_max={:.1}s energy={:.2}J phi_A={:.4} phi_C={:.4} collisions={} bits={:.0}",
            s.algo,
            s.seed,
            s.t_avg,
            s.t_max,
            s.energy_mean,
            s.phi_a_at_t_avg,
            s.phi_c_at_t_avg,
            s.collision_events,
            s.payload.bits
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_report() -> SimReport {
        SimReport {
            summary: Summary {
                algo: "hjb".into(),
                seed: 7,
                n_agents: 2,
                steps_run: 2,
                arrived: 2,
                t_avg: 0.2,
                t_max: 0.2,
                truncated: false,
                phi_a_at_t_avg: 0.1,
                phi_c_at_t_avg: 1.0,
                energy_mean: 0.5,
                energy_var: 0.0,
                collision_events: 0,
                speed_max: 1.0,
                speed_mean: 0.5,
                speed_min: 0.0,
                payload: PayloadLedger::default(),
                max_abs_hjb_residual: 0.3,
                max_abs_fpk_residual: 0.0,
                bounded: true,
                degenerate_density: false,
            },
            trajectories: vec![TrajectoryRow {
                step: 0,
                agent: 0,
                x: 1.0,
                y: 2.0,
                v_x: 0.0,
                v_y: 0.0,
                a_x: 0.5,
                a_y: -0.5,
            }],
            metrics: vec![MetricsRow {
                step: 0,
                mean_energy: 0.0,
                phi_a: 0.0,
                phi_c: 1.0,
                hjb_residual_max: 0.3,
                fpk_residual_max: 0.0,
                cum_bits: 256.0,
            }],
            rounds: vec![],
        }
    }

    #[test]
    fn writes_all_four_files_with_pinned_headers() {
        let dir = tempfile::tempdir().unwrap();
        let rep = tiny_report();
        rep.write_dir(dir.path()).unwrap();
        let traj = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        assert!(traj.starts_with("step,agent,x,y,v_x,v_y,a_x,a_y\n"));
        assert_eq!(traj.lines().count(), 2);
        let met = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(met.starts_with(
            "step,mean_energy,phi_a,phi_c,hjb_residual_max,fpk_residual_max,cum_bits\n"
        ));
        let sum = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: Summary = serde_json::from_str(&sum).unwrap();
        assert_eq!(parsed, rep.summary);
        assert!(dir.path().join("rounds.jsonl").exists());
    }

    #[test]
    fn writes_are_byte_identical_for_equal_reports() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        tiny_report().write_dir(d1.path()).unwrap();
        tiny_report().write_dir(d2.path()).unwrap();
        for name in ["trajectories.csv", "metrics.csv", "summary.json", "rounds.jsonl"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn summary_line_contains_key_fields() {
        let line = tiny_report().summary_line();
        assert!(line.contains("hjb"));
        assert!(line.contains("seed=7"));
        assert!(line.contains("T_avg=0.2s"));
    }
}
