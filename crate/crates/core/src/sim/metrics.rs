//! Measurements collected by a simulation run and their file formats.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cycles::{CycleId, Slot};
use crate::geometry::NodeId;

/// One structural event. Message-level events go to the per-message table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: f64,
    pub kind: LogKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    FerryDeployed,
    NodeFailure,
    FerryFailure,
    NodeRepair,
    FerryRepair,
    Subdivide,
    NodeFailureDetected,
    FerryFailureDetected,
    GrowthDetected,
    Unify,
    Redivide,
    Refresh,
    FerrySpawned,
    FerryReplaced,
    Rerouted,
    Rejected,
    CoverageViolation,
}

impl LogKind {
    /// Kinds that change the active cycle set.
    pub fn changes_plan(self) -> bool {
        matches!(self, LogKind::Unify | LogKind::Redivide | LogKind::Refresh)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::FerryDeployed => "ferry_deployed",
            LogKind::NodeFailure => "node_failure",
            LogKind::FerryFailure => "ferry_failure",
            LogKind::NodeRepair => "node_repair",
            LogKind::FerryRepair => "ferry_repair",
            LogKind::Subdivide => "subdivide",
            LogKind::NodeFailureDetected => "node_failure_detected",
            LogKind::FerryFailureDetected => "ferry_failure_detected",
            LogKind::GrowthDetected => "growth_detected",
            LogKind::Unify => "unify",
            LogKind::Redivide => "redivide",
            LogKind::Refresh => "refresh",
            LogKind::FerrySpawned => "ferry_spawned",
            LogKind::FerryReplaced => "ferry_replaced",
            LogKind::Rerouted => "rerouted",
            LogKind::Rejected => "rejected",
            LogKind::CoverageViolation => "coverage_violation",
        }
    }
}

/// Final state of one message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: u64,
    pub source: NodeId,
    pub terminal: NodeId,
    pub created_at: f64,
    pub delivered_at: Option<f64>,
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub source: NodeId,
    pub terminal: NodeId,
    pub delivered: u64,
    pub mean_delay: f64,
    pub p50_delay: f64,
    pub p95_delay: f64,
}

/// Time-average queue length and mean sojourn of one (cycle, slot) server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMetrics {
    pub cycle: CycleId,
    pub slot: Slot,
    pub visits: u64,
    pub mean_sojourn: f64,
    pub mean_in_system: f64,
}

/// Time-average number of messages stored at a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeQueueMetrics {
    pub node: NodeId,
    pub mean_stored: f64,
}

/// One failure and the plan changes that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEpisode {
    pub trigger: LogKind,
    pub target: u32,
    pub started_at: f64,
    /// Time of the last cycle-set change before the next scripted event.
    pub settled_at: f64,
    /// Longest expected turnaround among the cycles active at the trigger.
    pub turnaround: f64,
    pub turnarounds: f64,
    pub affected_layers: u32,
    pub plan_changes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComponents {
    /// Sum over pairs of demand rate times measured mean delay.
    pub delay: f64,
    /// Sum of the service rates in force at the end of the run.
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: String,
    pub horizon: f64,
    pub generated: u64,
    pub delivered: u64,
    pub in_flight: u64,
    /// Messages created before `horizon - drain` that were not delivered.
    pub undelivered_before_drain: u64,
    pub mean_delay: Option<f64>,
    pub pairs: Vec<PairMetrics>,
    pub servers: Vec<ServerMetrics>,
    pub node_queues: Vec<NodeQueueMetrics>,
    pub recovery: Vec<RecoveryEpisode>,
    pub coverage_violations: u64,
    pub realized_cost: CostComponents,
    pub final_cycles: usize,
    pub final_rates: BTreeMap<CycleId, f64>,
    #[serde(skip)]
    pub messages: Vec<MessageRecord>,
    #[serde(skip)]
    pub log: Vec<LogEntry>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// `id,source,terminal,created_at,delivered_at,hops`; undelivered rows
    /// leave `delivered_at` empty.
    pub fn messages_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "source", "terminal", "created_at", "delivered_at", "hops"]).expect("in-memory csv");
        for m in &self.messages {
            w.write_record([
                m.id.to_string(),
                m.source.0.to_string(),
                m.terminal.0.to_string(),
                m.created_at.to_string(),
                m.delivered_at.map(|t| t.to_string()).unwrap_or_default(),
                m.hops.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    /// `time,kind,detail`.
    pub fn events_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "kind", "detail"]).expect("in-memory csv");
        for e in &self.log {
            w.write_record([e.time.to_string(), e.kind.as_str().to_string(), e.detail.clone()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// Integral of a piecewise-constant count over time.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Level {
    pub count: u64,
    last: f64,
    area: f64,
}

impl Level {
    pub fn change(&mut self, now: f64, delta: i64) {
        self.area += self.count as f64 * (now - self.last);
        self.last = now;
        self.count = (self.count as i64 + delta).max(0) as u64;
    }

    pub fn mean(&self, until: f64) -> f64 {
        if until <= 0.0 {
            return 0.0;
        }
        (self.area + self.count as f64 * (until - self.last)) / until
    }
}

pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_integrates_counts() {
        let mut l = Level::default();
        l.change(0.0, 1);
        l.change(2.0, 1);
        l.change(3.0, -2);
        // 1 over [0,2), 2 over [2,3), 0 over [3,4)
        assert_eq!(l.mean(4.0), 1.0);
    }

    #[test]
    fn percentiles_pick_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.95), 5.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
