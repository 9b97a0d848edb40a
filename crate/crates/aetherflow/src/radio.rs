//! Deterministic RF world: positions and mobility, log-distance path-loss
//! RSSI, station scanning/roaming, and per-attempt wireless delivery.
//!
//! Everything here is stepped exclusively by the simulation loop. All
//! randomness comes from one seeded generator, so a fixed seed and config
//! reproduce byte-identical event sequences.

use crate::dataplane::MgmtFrameKind;
use crate::wire::Mac;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

/// Minimum modeled distance; keeps the log term finite at the AP position.
pub const MIN_DISTANCE_M: f64 = 0.1;

/// Weakest RSSI at which an AP still hears a probe.
pub const RECEIVE_FLOOR_DBM: f64 = -90.0;

/// Per-attempt delivery is certain at or above this RSSI ...
pub const DELIVERY_FULL_DBM: f64 = -70.0;
/// ... and impossible at or below this one, linear in between.
pub const DELIVERY_ZERO_DBM: f64 = -90.0;

pub const MAX_DELIVERY_ATTEMPTS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn distance(self, other: Vec2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ApId(pub u32);

#[derive(Debug, Clone, Copy)]
pub struct PathLossParams {
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent_n: f64,
    pub shadow_sigma_db: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            pl0_db: 40.0,
            d0_m: 1.0,
            exponent_n: 3.0,
            shadow_sigma_db: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ApRadio {
    pub position: Vec2,
    pub tx_power_dbm: f64,
}

#[derive(Debug)]
pub struct RadioWorld {
    pub params: PathLossParams,
    pub aps: BTreeMap<ApId, ApRadio>,
    rng: ChaCha8Rng,
    shadow: Normal<f64>,
}

impl RadioWorld {
    pub fn new(params: PathLossParams, seed: u64) -> Self {
        assert!(params.exponent_n > 0.0, "path-loss exponent must be positive");
        let sigma = params.shadow_sigma_db.max(0.0);
        RadioWorld {
            params,
            aps: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            shadow: Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap(),
        }
    }

    pub fn add_ap(&mut self, id: ApId, position: Vec2, tx_power_dbm: f64) {
        self.aps.insert(id, ApRadio { position, tx_power_dbm });
    }

    pub fn set_tx_power(&mut self, id: ApId, tx_power_dbm: f64) {
        if let Some(ap) = self.aps.get_mut(&id) {
            ap.tx_power_dbm = tx_power_dbm;
        }
    }

    /// Log-distance path loss:
    /// rssi = tx_power - pl0 - 10 n log10(max(d, 0.1) / d0),
    /// plus seeded Gaussian shadowing when requested.
    pub fn rssi_at(&mut self, ap: ApId, sta_position: Vec2, with_noise: bool) -> f64 {
        if with_noise {
            self.rssi_sample(ap, sta_position)
        } else {
            self.rssi_clean(ap, sta_position)
        }
    }

    /// Noise-free RSSI.
    pub fn rssi_clean(&self, ap: ApId, sta_position: Vec2) -> f64 {
        let radio = &self.aps[&ap];
        let d = radio.position.distance(sta_position).max(MIN_DISTANCE_M);
        radio.tx_power_dbm
            - self.params.pl0_db
            - 10.0 * self.params.exponent_n * (d / self.params.d0_m).log10()
    }

    /// One shadowed RSSI sample (consumes randomness).
    pub fn rssi_sample(&mut self, ap: ApId, sta_position: Vec2) -> f64 {
        let base = self.rssi_clean(ap, sta_position);
        if self.params.shadow_sigma_db > 0.0 {
            base + self.shadow.sample(&mut self.rng)
        } else {
            base
        }
    }

    /// Per-attempt success probability, piecewise linear in RSSI.
    pub fn delivery_probability(rssi_dbm: f64) -> f64 {
        ((rssi_dbm - DELIVERY_ZERO_DBM) / (DELIVERY_FULL_DBM - DELIVERY_ZERO_DBM)).clamp(0.0, 1.0)
    }

    /// Attempts delivery at the given RSSI, up to the retry limit.
    pub fn deliver_at_rssi(&mut self, rssi_dbm: f64) -> DeliveryOutcome {
        let p = Self::delivery_probability(rssi_dbm);
        for attempt in 1..=MAX_DELIVERY_ATTEMPTS {
            if self.rng.gen_bool(p) {
                return DeliveryOutcome::Delivered { attempts: attempt };
            }
        }
        DeliveryOutcome::Failed { attempts: MAX_DELIVERY_ATTEMPTS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered { attempts: u8 },
    Failed { attempts: u8 },
}

impl DeliveryOutcome {
    pub fn delivered(&self) -> bool {
        matches!(self, DeliveryOutcome::Delivered { .. })
    }

    pub fn attempts(&self) -> u8 {
        match *self {
            DeliveryOutcome::Delivered { attempts } | DeliveryOutcome::Failed { attempts } => attempts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MobilityPlan {
    waypoints: Vec<(f64, Vec2)>,
}

impl MobilityPlan {
    pub fn new(waypoints: Vec<(f64, Vec2)>) -> Result<Self, String> {
        for w in waypoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(format!(
                    "waypoint times must be strictly increasing: {} then {}",
                    w[0].0, w[1].0
                ));
            }
        }
        if waypoints.is_empty() {
            return Err("mobility plan needs at least one waypoint".to_string());
        }
        Ok(MobilityPlan { waypoints })
    }

    pub fn stationary(pos: Vec2) -> Self {
        MobilityPlan { waypoints: vec![(0.0, pos)] }
    }

    /// Piecewise-linear interpolation, clamped at the ends.
    pub fn position_at(&self, t: f64) -> Vec2 {
        let wp = &self.waypoints;
        if t <= wp[0].0 {
            return wp[0].1;
        }
        for w in wp.windows(2) {
            let (t0, p0) = w[0];
            let (t1, p1) = w[1];
            if t <= t1 {
                let f = (t - t0) / (t1 - t0);
                return Vec2::new(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y));
            }
        }
        wp[wp.len() - 1].1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RoamParams {
    pub roam_threshold_dbm: f64,
    pub hysteresis_db: f64,
    pub scan_interval_s: f64,
    pub scan_duration_s: f64,
    pub auth_assoc_delay_s: f64,
    pub upstream_keepalive_s: f64,
}

impl Default for RoamParams {
    fn default() -> Self {
        RoamParams {
            roam_threshold_dbm: -75.0,
            hysteresis_db: 5.0,
            scan_interval_s: 0.5,
            scan_duration_s: 0.2,
            auth_assoc_delay_s: 0.05,
            upstream_keepalive_s: 1.0,
        }
    }
}

/// Something the station did this step that the APs (and harness) must see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StationEvent {
    /// Management frame arriving at an AP, with the RSSI the AP measures.
    Mgmt { ap: ApId, kind: MgmtFrameKind, rssi_dbm: f64 },
    /// Upstream data frame through the serving AP.
    Keepalive { ap: ApId },
}

#[derive(Debug, Clone, Copy)]
struct PendingJoin {
    ap: ApId,
    at_s: f64,
    reassociation: bool,
}

#[derive(Debug)]
pub struct StationAgent {
    pub mac: Mac,
    pub plan: MobilityPlan,
    pub params: RoamParams,
    pub roaming_enabled: bool,
    pub disassoc_on_leave: bool,
    pub position: Vec2,
    serving: Option<ApId>,
    assoc_time_s: f64,
    next_keepalive_s: f64,
    last_scan_s: f64,
    consecutive_better: u32,
    pending: Option<PendingJoin>,
    ever_associated: bool,
}

impl StationAgent {
    pub fn new(mac: Mac, plan: MobilityPlan, params: RoamParams) -> Self {
        let position = plan.position_at(0.0);
        StationAgent {
            mac,
            plan,
            params,
            roaming_enabled: true,
            disassoc_on_leave: true,
            position,
            serving: None,
            assoc_time_s: 0.0,
            next_keepalive_s: f64::INFINITY,
            last_scan_s: f64::NEG_INFINITY,
            consecutive_better: 0,
            pending: None,
            ever_associated: false,
        }
    }

    pub fn serving_ap(&self) -> Option<ApId> {
        self.serving
    }

    /// Forced deauthentication (e.g. controller DropStation): forget the
    /// association and re-scan on the next step.
    pub fn kicked(&mut self) {
        self.serving = None;
        self.pending = None;
        self.consecutive_better = 0;
    }

    fn aps_in_range(&self, world: &RadioWorld) -> Vec<(ApId, f64)> {
        world
            .aps
            .keys()
            .map(|&id| (id, world.rssi_clean(id, self.position)))
            .filter(|&(_, rssi)| rssi >= RECEIVE_FLOOR_DBM)
            .collect()
    }

    fn begin_join(&mut self, world: &RadioWorld, now: f64, out: &mut Vec<StationEvent>) {
        let candidates = self.aps_in_range(world);
        for &(ap, rssi) in &candidates {
            out.push(StationEvent::Mgmt { ap, kind: MgmtFrameKind::Probe, rssi_dbm: rssi });
        }
        let Some(&(best, _)) = candidates
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        else {
            return;
        };
        let delay = if self.ever_associated {
            self.params.scan_duration_s + self.params.auth_assoc_delay_s
        } else {
            0.0 // the initial association predates the experiment clock
        };
        self.pending = Some(PendingJoin {
            ap: best,
            at_s: now + delay,
            reassociation: self.ever_associated,
        });
    }

    /// Advances the station to `now` (positions come from the mobility plan)
    /// and returns the frames it emitted.
    ///
    /// Roaming measurements are noise-free: station firmware averages RSSI
    /// over many beacon samples, so the scan decision sees the trend, not
    /// per-frame shadowing.
    pub fn step(&mut self, world: &RadioWorld, now: f64) -> Vec<StationEvent> {
        let mut out = Vec::new();
        self.position = self.plan.position_at(now);

        if let Some(p) = self.pending {
            if now >= p.at_s {
                let rssi = world.rssi_clean(p.ap, self.position);
                out.push(StationEvent::Mgmt { ap: p.ap, kind: MgmtFrameKind::Auth, rssi_dbm: rssi });
                let kind = if p.reassociation { MgmtFrameKind::Reassoc } else { MgmtFrameKind::Assoc };
                out.push(StationEvent::Mgmt { ap: p.ap, kind, rssi_dbm: rssi });
                self.serving = Some(p.ap);
                self.ever_associated = true;
                self.assoc_time_s = now;
                self.next_keepalive_s = now + self.params.upstream_keepalive_s;
                self.pending = None;
                self.consecutive_better = 0;
            }
            return out;
        }

        match self.serving {
            None => {
                self.begin_join(world, now, &mut out);
                // immediate joins complete within the same step
                if let Some(p) = self.pending {
                    if now >= p.at_s {
                        out.extend(self.step_pending_now(world, now));
                    }
                }
            }
            Some(serving) => {
                while now >= self.next_keepalive_s {
                    out.push(StationEvent::Keepalive { ap: serving });
                    self.next_keepalive_s += self.params.upstream_keepalive_s;
                }
                if self.roaming_enabled {
                    let serving_rssi = world.rssi_clean(serving, self.position);
                    if serving_rssi < self.params.roam_threshold_dbm
                        && now - self.last_scan_s >= self.params.scan_interval_s
                    {
                        self.last_scan_s = now;
                        let candidates = self.aps_in_range(world);
                        for &(ap, rssi) in &candidates {
                            out.push(StationEvent::Mgmt {
                                ap,
                                kind: MgmtFrameKind::Probe,
                                rssi_dbm: rssi,
                            });
                        }
                        let best_other = candidates
                            .iter()
                            .filter(|&&(ap, _)| ap != serving)
                            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                            .copied();
                        match best_other {
                            Some((best, best_rssi))
                                if best_rssi > serving_rssi + self.params.hysteresis_db =>
                            {
                                self.consecutive_better += 1;
                                if self.consecutive_better >= 2 {
                                    if self.disassoc_on_leave {
                                        out.push(StationEvent::Mgmt {
                                            ap: serving,
                                            kind: MgmtFrameKind::Disassoc,
                                            rssi_dbm: serving_rssi,
                                        });
                                    }
                                    self.serving = None;
                                    self.next_keepalive_s = f64::INFINITY;
                                    self.pending = Some(PendingJoin {
                                        ap: best,
                                        at_s: now
                                            + self.params.scan_duration_s
                                            + self.params.auth_assoc_delay_s,
                                        reassociation: true,
                                    });
                                    self.consecutive_better = 0;
                                }
                            }
                            _ => self.consecutive_better = 0,
                        }
                    }
                }
            }
        }
        out
    }

    fn step_pending_now(&mut self, world: &RadioWorld, now: f64) -> Vec<StationEvent> {
        let mut out = Vec::new();
        if let Some(p) = self.pending {
            if now >= p.at_s {
                let rssi = world.rssi_clean(p.ap, self.position);
                out.push(StationEvent::Mgmt { ap: p.ap, kind: MgmtFrameKind::Auth, rssi_dbm: rssi });
                let kind = if p.reassociation { MgmtFrameKind::Reassoc } else { MgmtFrameKind::Assoc };
                out.push(StationEvent::Mgmt { ap: p.ap, kind, rssi_dbm: rssi });
                self.serving = Some(p.ap);
                self.ever_associated = true;
                self.assoc_time_s = now;
                self.next_keepalive_s = now + self.params.upstream_keepalive_s;
                self.pending = None;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(sigma: f64) -> RadioWorld {
        let params = PathLossParams { shadow_sigma_db: sigma, ..Default::default() };
        let mut w = RadioWorld::new(params, 1);
        w.add_ap(ApId(1), Vec2::new(0.0, 0.0), 20.0);
        w.add_ap(ApId(2), Vec2::new(120.0, 0.0), 20.0);
        w
    }

    #[test]
    fn rssi_at_reference_distance() {
        let w = world(0.0);
        // d = d0 = 1 m: the log term vanishes, rssi = tx - pl0 = -20 dBm
        assert!((w.rssi_clean(ApId(1), Vec2::new(1.0, 0.0)) - (-20.0)).abs() < 1e-9);
    }

    #[test]
    fn rssi_at_ten_meters() {
        let w = world(0.0);
        // 20 - 40 - 10*3*log10(10) = -50 dBm
        assert!((w.rssi_clean(ApId(1), Vec2::new(10.0, 0.0)) - (-50.0)).abs() < 1e-9);
    }

    #[test]
    fn rssi_monotone_in_distance() {
        let w = world(0.0);
        let mut last = f64::INFINITY;
        for d in [0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0] {
            let r = w.rssi_clean(ApId(1), Vec2::new(d, 0.0));
            assert!(r < last, "rssi must strictly decrease with distance (d={d})");
            last = r;
        }
    }

    #[test]
    fn rssi_linear_in_tx_power() {
        let mut w = world(0.0);
        let pos = Vec2::new(33.0, 7.0);
        let base = w.rssi_clean(ApId(1), pos);
        for delta in [-10.0, -3.0, 2.5, 7.0] {
            w.set_tx_power(ApId(1), 20.0 + delta);
            assert!((w.rssi_clean(ApId(1), pos) - (base + delta)).abs() < 1e-9);
            w.set_tx_power(ApId(1), 20.0);
        }
    }

    #[test]
    fn min_distance_clamp() {
        let w = world(0.0);
        let at_ap = w.rssi_clean(ApId(1), Vec2::new(0.0, 0.0));
        let at_clamp = w.rssi_clean(ApId(1), Vec2::new(0.1, 0.0));
        assert_eq!(at_ap, at_clamp);
    }

    #[test]
    fn delivery_rate_matches_retry_model() {
        // p = 0.5 at -80 dBm; delivery rate = 1 - (1-p)^3 = 0.875
        let mut w = world(0.0);
        let n = 10_000;
        let delivered = (0..n)
            .filter(|_| w.deliver_at_rssi(-80.0).delivered())
            .count();
        let rate = delivered as f64 / n as f64;
        assert!((rate - 0.875).abs() < 0.02, "rate={rate}");
    }

    #[test]
    fn delivery_edges() {
        let mut w = world(0.0);
        assert_eq!(w.deliver_at_rssi(-60.0), DeliveryOutcome::Delivered { attempts: 1 });
        assert_eq!(
            w.deliver_at_rssi(-95.0),
            DeliveryOutcome::Failed { attempts: MAX_DELIVERY_ATTEMPTS }
        );
    }

    fn default_plan() -> MobilityPlan {
        MobilityPlan::new(vec![
            (0.0, Vec2::new(40.0, 0.0)),
            (6.9, Vec2::new(68.1, 0.0)),
            (9.0, Vec2::new(83.0, 0.0)),
            (30.0, Vec2::new(95.0, 0.0)),
        ])
        .unwrap()
    }

    fn run_station(
        plan: MobilityPlan,
        params: RoamParams,
        horizon_s: f64,
    ) -> Vec<(f64, StationEvent)> {
        let w = world(0.0);
        let mut sta = StationAgent::new(Mac([2, 0, 0, 0, 0, 1]), plan, params);
        let mut events = Vec::new();
        let ticks = (horizon_s / 0.01).round() as u64;
        for k in 0..=ticks {
            let now = k as f64 * 0.01;
            for ev in sta.step(&w, now) {
                events.push((now, ev));
            }
        }
        events
    }

    #[test]
    fn stationary_station_never_roams() {
        let events = run_station(
            MobilityPlan::stationary(Vec2::new(10.0, 0.0)),
            RoamParams::default(),
            30.0,
        );
        assert!(!events.iter().any(|(_, e)| matches!(
            e,
            StationEvent::Mgmt { kind: MgmtFrameKind::Reassoc, .. }
        )));
    }

    #[test]
    fn default_mobility_reassociates_near_eight_seconds() {
        let events = run_station(default_plan(), RoamParams::default(), 15.0);
        let (t, ev) = events
            .iter()
            .find(|(_, e)| matches!(e, StationEvent::Mgmt { kind: MgmtFrameKind::Reassoc, .. }))
            .expect("station must reassociate");
        assert!((t - 8.0).abs() <= 0.25, "reassociation at t={t}");
        if let StationEvent::Mgmt { ap, .. } = ev {
            assert_eq!(*ap, ApId(2));
        }
    }

    #[test]
    fn infinite_hysteresis_prevents_roaming() {
        let params = RoamParams { hysteresis_db: f64::INFINITY, ..Default::default() };
        let events = run_station(default_plan(), params, 30.0);
        assert!(!events.iter().any(|(_, e)| matches!(
            e,
            StationEvent::Mgmt { kind: MgmtFrameKind::Reassoc, .. }
        )));
    }

    #[test]
    fn serving_weakens_candidate_strengthens_before_commit() {
        let w = world(0.0);
        let plan = default_plan();
        let mut last1 = f64::INFINITY;
        let mut last2 = f64::NEG_INFINITY;
        let mut t = 2.0;
        while t <= 7.9 {
            let pos = plan.position_at(t);
            let r1 = w.rssi_clean(ApId(1), pos);
            let r2 = w.rssi_clean(ApId(2), pos);
            assert!(r1 <= last1 + 1e-12);
            assert!(r2 >= last2 - 1e-12);
            last1 = r1;
            last2 = r2;
            t += 0.1;
        }
    }

    #[test]
    fn keepalives_every_second_while_associated() {
        let events = run_station(
            MobilityPlan::stationary(Vec2::new(10.0, 0.0)),
            RoamParams::default(),
            5.05,
        );
        let keepalives: Vec<f64> = events
            .iter()
            .filter(|(_, e)| matches!(e, StationEvent::Keepalive { .. }))
            .map(|(t, _)| *t)
            .collect();
        assert_eq!(keepalives.len(), 5);
        for (i, t) in keepalives.iter().enumerate() {
            assert!((t - (i as f64 + 1.0)).abs() < 0.011);
        }
    }

    #[test]
    fn waypoint_times_must_increase() {
        assert!(MobilityPlan::new(vec![
            (0.0, Vec2::new(0.0, 0.0)),
            (0.0, Vec2::new(1.0, 0.0)),
        ])
        .is_err());
    }

    #[test]
    fn determinism_same_seed_same_outcomes() {
        let run = || {
            let mut w = world(2.0);
            let mut out = Vec::new();
            for _ in 0..100 {
                out.push(w.rssi_sample(ApId(1), Vec2::new(50.0, 0.0)).to_bits());
                out.push(w.deliver_at_rssi(-80.0).attempts() as u64);
            }
            out
        };
        assert_eq!(run(), run());
    }
}
