//! Throughput accounting: per-interval binning of the delivery log, the
//! handoff-duration rule, and byte-deterministic output files.

use serde::Serialize;
use std::fmt::Write as _;

/// One offered datagram: when it was sent and whether any copy reached the
/// station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub send_time_s: f64,
    pub delivered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalMetrics {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub throughput_bps: f64,
}

/// Bins the delivery log by send time. Throughput counts delivered payload
/// bits per interval second.
pub fn intervals_from_log(
    log: &[DeliveryRecord],
    payload_bytes: u32,
    interval_s: f64,
    duration_s: f64,
) -> Vec<IntervalMetrics> {
    let n = (duration_s / interval_s).round() as usize;
    let mut out: Vec<IntervalMetrics> = (0..n)
        .map(|i| IntervalMetrics {
            t_start_s: i as f64 * interval_s,
            t_end_s: (i + 1) as f64 * interval_s,
            sent: 0,
            delivered: 0,
            lost: 0,
            throughput_bps: 0.0,
        })
        .collect();
    for r in log {
        let i = (r.send_time_s / interval_s).floor() as usize;
        if i >= n {
            continue;
        }
        out[i].sent += 1;
        if r.delivered {
            out[i].delivered += 1;
        } else {
            out[i].lost += 1;
        }
    }
    for iv in &mut out {
        iv.throughput_bps = iv.delivered as f64 * payload_bytes as f64 * 8.0 / interval_s;
    }
    out
}

/// Handoff duration: the longest contiguous run of sub-threshold intervals
/// that starts at or after the window start. Returns the duration and the
/// start time of that run.
pub fn handoff_window(
    intervals: &[IntervalMetrics],
    threshold_bps: f64,
    window_start_s: f64,
) -> (f64, Option<f64>) {
    let mut best: Option<(usize, usize)> = None; // (start index, length)
    let mut run: Option<(usize, usize)> = None;
    for (i, iv) in intervals.iter().enumerate() {
        let below = iv.t_start_s >= window_start_s && iv.throughput_bps < threshold_bps;
        if below {
            run = Some(match run {
                Some((s, l)) => (s, l + 1),
                None => (i, 1),
            });
            if best.is_none_or(|(_, bl)| run.unwrap().1 > bl) {
                best = run;
            }
        } else {
            run = None;
        }
    }
    match best {
        Some((s, l)) => {
            let dt = intervals[s].t_end_s - intervals[s].t_start_s;
            (l as f64 * dt, Some(intervals[s].t_start_s))
        }
        None => (0.0, None),
    }
}

pub fn losses_in(log: &[DeliveryRecord], from_s: f64, to_s: f64) -> u64 {
    log.iter()
        .filter(|r| !r.delivered && r.send_time_s >= from_s && r.send_time_s < to_s)
        .count() as u64
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub mode: String,
    pub predictor: String,
    pub seed: u64,
    pub transport: String,
    pub duration_s: f64,
    pub datagram_payload_bytes: u32,
    pub sent_total: u64,
    pub delivered_total: u64,
    pub lost_total: u64,
    pub handoff_duration_s: f64,
    pub dip_start_s: Option<f64>,
    pub reassoc_time_s: Option<f64>,
}

pub fn intervals_csv(intervals: &[IntervalMetrics]) -> String {
    let mut s = String::from("t_start_s,t_end_s,sent,delivered,lost,throughput_bps\n");
    for iv in intervals {
        writeln!(
            s,
            "{:.3},{:.3},{},{},{},{:.1}",
            iv.t_start_s, iv.t_end_s, iv.sent, iv.delivered, iv.lost, iv.throughput_bps
        )
        .unwrap();
    }
    s
}

pub fn summary_json(summary: &ExperimentSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub mode: String,
    pub round: u32,
    pub seed: u64,
    pub handoff_duration_s: f64,
    pub dip_start_s: Option<f64>,
    pub lost_total: u64,
}

pub fn comparison_csv(rows: &[CompareRow], means: &[(String, f64)]) -> String {
    let mut s = String::from("mode,round,seed,handoff_duration_s,dip_start_s,lost_total\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.3},{},{}",
            r.mode,
            r.round,
            r.seed,
            r.handoff_duration_s,
            r.dip_start_s.map_or(String::new(), |d| format!("{d:.3}")),
            r.lost_total
        )
        .unwrap();
    }
    for (mode, mean) in means {
        writeln!(s, "{mode},mean,,{mean:.3},,").unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, ok: bool) -> DeliveryRecord {
        DeliveryRecord { send_time_s: t, delivered: ok }
    }

    #[test]
    fn binning_matches_hand_count() {
        let log = vec![
            rec(0.0, true),
            rec(0.49, false),
            rec(0.5, true),
            rec(0.99, true),
            rec(1.0, false),
            rec(2.1, true), // past the horizon, ignored
        ];
        let ivs = intervals_from_log(&log, 1000, 0.5, 2.0);
        assert_eq!(ivs.len(), 4);
        assert_eq!((ivs[0].sent, ivs[0].delivered, ivs[0].lost), (2, 1, 1));
        assert_eq!((ivs[1].sent, ivs[1].delivered), (2, 2));
        assert_eq!(ivs[2].lost, 1);
        assert_eq!(ivs[3].sent, 0);
        // 1 delivered datagram of 1000 bytes in 0.5 s
        assert_eq!(ivs[0].throughput_bps, 16_000.0);
        let sent: u64 = ivs.iter().map(|i| i.sent).sum();
        let acc: u64 = ivs.iter().map(|i| i.delivered + i.lost).sum();
        assert_eq!(sent, acc);
    }

    fn iv(t: f64, bps: f64) -> IntervalMetrics {
        IntervalMetrics {
            t_start_s: t,
            t_end_s: t + 0.5,
            sent: 0,
            delivered: 0,
            lost: 0,
            throughput_bps: bps,
        }
    }

    #[test]
    fn longest_run_wins() {
        let ivs = vec![
            iv(6.5, 7.0e6), // before the window, ignored
            iv(7.0, 9.0e6),
            iv(7.5, 7.0e6),
            iv(8.0, 6.0e6),
            iv(8.5, 9.0e6),
            iv(9.0, 7.9e6),
            iv(9.5, 7.9e6),
            iv(10.0, 7.9e6),
        ];
        let (dur, start) = handoff_window(&ivs, 8.0e6, 7.0);
        assert_eq!(dur, 1.5);
        assert_eq!(start, Some(9.0));
    }

    #[test]
    fn run_straddling_window_start_is_clipped() {
        let ivs = vec![iv(6.5, 1.0), iv(7.0, 1.0), iv(7.5, 1.0), iv(8.0, 9.0e6)];
        let (dur, start) = handoff_window(&ivs, 8.0e6, 7.0);
        assert_eq!(dur, 1.0);
        assert_eq!(start, Some(7.0));
    }

    #[test]
    fn no_dip_means_zero_duration() {
        let ivs = vec![iv(7.0, 9.0e6), iv(7.5, 8.5e6)];
        assert_eq!(handoff_window(&ivs, 8.0e6, 7.0), (0.0, None));
    }

    #[test]
    fn csv_is_stable() {
        let ivs = intervals_from_log(&[rec(0.1, true)], 1470, 0.5, 1.0);
        let a = intervals_csv(&ivs);
        let b = intervals_csv(&ivs);
        assert_eq!(a, b);
        assert!(a.starts_with("t_start_s,"));
        assert_eq!(a.lines().count(), 3);
    }
}
