//! L2 fast-handoff controller application.
//!
//! The app manages the downstream flow entries for one mobile station
//! across a wired switch and two APs. A handoff epoch runs in three
//! phases: predict that the station is about to move, multicast its
//! downstream traffic to both the current and the predicted AP (with a
//! speculative entry at the target), then redirect to plain unicast as
//! soon as the station is heard associating at its new AP. If the
//! prediction never materializes the multicast is reverted at a deadline.

use crate::controller::{ControllerCore, CtlError, NetworkView};
use crate::dataplane::WirelessEvent;
use crate::wire::{Action, FlowModBody, FlowModCommand, Mac, MatchSet, WirelessEventKind};

pub const UNICAST_PRIORITY: u16 = 100;
pub const MULTICAST_PRIORITY: u16 = 110;
pub const DEFAULT_FIRE_AT_S: f64 = 7.0;
pub const DEFAULT_TREND_MARGIN_DB: f64 = 3.0;
pub const DEFAULT_REVERT_TIMEOUT_S: f64 = 15.0;
pub const TREND_STREAK: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    /// Fires once at the first tick at or past the given time.
    Fixed { fire_at_s: f64 },
    /// Fires when some other AP's RSSI EWMA beats the serving AP's by the
    /// margin on two consecutive fresh samples.
    Trend { margin_db: f64 },
}

/// One AP as the app sees it: its datapath, the switch port leading to it,
/// and the wireless logical port the station attaches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApRef {
    pub datapath_id: u64,
    pub switch_port: u32,
    pub wireless_lport: u32,
}

#[derive(Debug, Clone)]
pub struct HandoffConfig {
    pub sta: Mac,
    pub predictor: Predictor,
    pub revert_timeout_s: f64,
    pub switch_datapath_id: u64,
    pub from_ap: ApRef,
    pub to_ap: ApRef,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Idle,
    Multicasting { deadline_us: u64 },
    Redirected,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Multicasting { .. } => "multicasting",
            Phase::Redirected => "redirected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseTransition {
    pub t_us: u64,
    pub from: &'static str,
    pub to: &'static str,
    pub reason: String,
}

#[derive(Debug)]
pub struct HandoffApp {
    pub cfg: HandoffConfig,
    pub phase: Phase,
    fired: bool,
    base_ap: Option<ApRef>,
    trend_streak: u32,
    trend_last_sample_us: Option<u64>,
    pub log: Vec<PhaseTransition>,
}

fn add_entry(m: MatchSet, priority: u16, outputs: &[u32]) -> FlowModBody {
    FlowModBody {
        command: FlowModCommand::Add,
        priority,
        idle_timeout_s: 0,
        hard_timeout_s: 0,
        match_set: m,
        actions: outputs.iter().map(|&p| Action::Output(p)).collect(),
    }
}

fn del_entry(m: MatchSet, priority: u16) -> FlowModBody {
    FlowModBody {
        command: FlowModCommand::DeleteStrict,
        priority,
        idle_timeout_s: 0,
        hard_timeout_s: 0,
        match_set: m,
        actions: Vec::new(),
    }
}

impl HandoffApp {
    pub fn new(cfg: HandoffConfig) -> Self {
        HandoffApp {
            cfg,
            phase: Phase::Idle,
            fired: false,
            base_ap: None,
            trend_streak: 0,
            trend_last_sample_us: None,
            log: Vec::new(),
        }
    }

    fn transition(&mut self, t_us: u64, to: Phase, reason: impl Into<String>) {
        self.log.push(PhaseTransition {
            t_us,
            from: self.phase.name(),
            to: to.name(),
            reason: reason.into(),
        });
        self.phase = to;
    }

    fn ap_ref(&self, datapath_id: u64) -> Option<ApRef> {
        [self.cfg.from_ap, self.cfg.to_ap]
            .into_iter()
            .find(|a| a.datapath_id == datapath_id)
    }

    fn sta_match(&self) -> MatchSet {
        MatchSet::eth_dst(self.cfg.sta)
    }

    fn switch_conn(&self, ctl: &ControllerCore) -> Option<usize> {
        ctl.conn_by_datapath(self.cfg.switch_datapath_id)
    }

    /// Drives the epoch clock: fires the predictor and enforces the revert
    /// deadline. Call once per tick before pumping connections so the
    /// resulting flow mods reach the switch in the same tick.
    pub fn on_tick(&mut self, ctl: &mut ControllerCore, now_us: u64) -> Result<(), CtlError> {
        match self.phase {
            Phase::Redirected => {
                // the epoch closes one tick after redirect so tests can
                // observe the terminal state
                self.transition(now_us, Phase::Idle, "epoch closed");
            }
            Phase::Multicasting { deadline_us } if now_us >= deadline_us => {
                self.revert(ctl, now_us)?;
            }
            Phase::Multicasting { .. } => {}
            Phase::Idle => {
                if self.base_ap.is_some() && self.predictor_fires(&ctl.view, now_us) {
                    self.begin_multicast(ctl, now_us)?;
                }
            }
        }
        Ok(())
    }

    fn predictor_fires(&mut self, view: &NetworkView, now_us: u64) -> bool {
        match self.cfg.predictor {
            Predictor::Fixed { fire_at_s } => {
                if self.fired || (now_us as f64) < fire_at_s * 1e6 {
                    false
                } else {
                    self.fired = true;
                    true
                }
            }
            Predictor::Trend { margin_db } => self.trend_fires(view, margin_db),
        }
    }

    fn trend_fires(&mut self, view: &NetworkView, margin_db: f64) -> bool {
        let Some(serving) = self.base_ap else { return false };
        let key = (self.cfg.sta, serving.datapath_id, serving.wireless_lport);
        let Some(serving_series) = view.series.get(&key) else { return false };
        let Some((last_t, _)) = serving_series.last() else { return false };
        // one evaluation per fresh serving-side sample
        if self.trend_last_sample_us == Some(last_t) {
            return false;
        }
        self.trend_last_sample_us = Some(last_t);
        let serving_ewma = serving_series.ewma().unwrap();
        // best rival EWMA; ties break toward the lower (dpid, lport)
        let rival = view
            .series
            .iter()
            .filter(|((sta, dpid, lport), _)| {
                *sta == self.cfg.sta
                    && (*dpid, *lport) != (serving.datapath_id, serving.wireless_lport)
            })
            .filter_map(|(k, s)| s.ewma().map(|e| (k, e)))
            .max_by(|(ka, ea), (kb, eb)| {
                ea.partial_cmp(eb).unwrap().then_with(|| kb.cmp(ka))
            });
        match rival {
            Some((_, ewma)) if ewma > serving_ewma + margin_db => {
                self.trend_streak += 1;
            }
            _ => self.trend_streak = 0,
        }
        if self.trend_streak >= TREND_STREAK {
            self.trend_streak = 0;
            true
        } else {
            false
        }
    }

    fn begin_multicast(&mut self, ctl: &mut ControllerCore, now_us: u64) -> Result<(), CtlError> {
        let from = self.base_ap.expect("multicast only after base install");
        let to = if from == self.cfg.from_ap { self.cfg.to_ap } else { self.cfg.from_ap };
        if let Some(conn) = self.switch_conn(ctl) {
            ctl.send_flow_mod(
                conn,
                add_entry(
                    self.sta_match(),
                    MULTICAST_PRIORITY,
                    &[from.switch_port, to.switch_port],
                ),
            )?;
        }
        // speculative entry at the predicted AP so the first downstream
        // frame after reassociation already has a path
        if let Some(conn) = ctl.conn_by_datapath(to.datapath_id) {
            ctl.send_flow_mod(
                conn,
                add_entry(self.sta_match(), UNICAST_PRIORITY, &[to.wireless_lport]),
            )?;
        }
        let deadline_us = now_us + (self.cfg.revert_timeout_s * 1e6).round() as u64;
        self.transition(
            now_us,
            Phase::Multicasting { deadline_us },
            format!("predicted move to dpid {}", to.datapath_id),
        );
        Ok(())
    }

    /// Feed every wireless event the controller surfaces. Association and
    /// reassociation drive the base install and the redirect phase.
    pub fn on_event(
        &mut self,
        ctl: &mut ControllerCore,
        datapath_id: u64,
        ev: &WirelessEvent,
    ) -> Result<(), CtlError> {
        if ev.sta_mac != self.cfg.sta {
            return Ok(());
        }
        if !matches!(
            ev.kind,
            WirelessEventKind::Association | WirelessEventKind::Reassociation
        ) {
            return Ok(());
        }
        let Some(joined) = self.ap_ref(datapath_id) else { return Ok(()) };
        match self.phase {
            Phase::Idle | Phase::Redirected => {
                if self.base_ap.is_none() {
                    self.install_base(ctl, joined)?;
                    self.base_ap = Some(joined);
                } else if self.base_ap != Some(joined) {
                    // unpredicted move: repoint unicast without an epoch
                    self.repoint(ctl, joined)?;
                    self.base_ap = Some(joined);
                }
            }
            Phase::Multicasting { .. } => {
                self.redirect(ctl, joined, ev.timestamp_us)?;
            }
        }
        Ok(())
    }

    fn install_base(&mut self, ctl: &mut ControllerCore, ap: ApRef) -> Result<(), CtlError> {
        if let Some(conn) = self.switch_conn(ctl) {
            ctl.send_flow_mod(
                conn,
                add_entry(self.sta_match(), UNICAST_PRIORITY, &[ap.switch_port]),
            )?;
        }
        if let Some(conn) = ctl.conn_by_datapath(ap.datapath_id) {
            ctl.send_flow_mod(
                conn,
                add_entry(self.sta_match(), UNICAST_PRIORITY, &[ap.wireless_lport]),
            )?;
        }
        Ok(())
    }

    fn repoint(&mut self, ctl: &mut ControllerCore, joined: ApRef) -> Result<(), CtlError> {
        let old = self.base_ap.expect("repoint only after base install");
        if let Some(conn) = self.switch_conn(ctl) {
            ctl.send_flow_mod(
                conn,
                add_entry(self.sta_match(), UNICAST_PRIORITY, &[joined.switch_port]),
            )?;
        }
        if let Some(conn) = ctl.conn_by_datapath(joined.datapath_id) {
            ctl.send_flow_mod(
                conn,
                add_entry(self.sta_match(), UNICAST_PRIORITY, &[joined.wireless_lport]),
            )?;
        }
        if old != joined {
            if let Some(conn) = ctl.conn_by_datapath(old.datapath_id) {
                ctl.send_flow_mod(conn, del_entry(self.sta_match(), UNICAST_PRIORITY))?;
            }
        }
        Ok(())
    }

    fn redirect(&mut self, ctl: &mut ControllerCore, joined: ApRef, t_us: u64) -> Result<(), CtlError> {
        let old = self.base_ap.expect("multicast implies a base AP");
        if let Some(conn) = self.switch_conn(ctl) {
            ctl.send_flow_mod(conn, del_entry(self.sta_match(), MULTICAST_PRIORITY))?;
            ctl.send_flow_mod(
                conn,
                add_entry(self.sta_match(), UNICAST_PRIORITY, &[joined.switch_port]),
            )?;
        }
        // the joined AP holds its entry (speculative or pre-existing);
        // when the prediction missed and the station bounced back to its
        // old AP, the speculative entry at the target is torn down instead
        if old != joined {
            if let Some(conn) = ctl.conn_by_datapath(old.datapath_id) {
                ctl.send_flow_mod(conn, del_entry(self.sta_match(), UNICAST_PRIORITY))?;
            }
        } else {
            let speculative = if joined == self.cfg.from_ap { self.cfg.to_ap } else { self.cfg.from_ap };
            if let Some(conn) = ctl.conn_by_datapath(speculative.datapath_id) {
                ctl.send_flow_mod(conn, del_entry(self.sta_match(), UNICAST_PRIORITY))?;
            }
        }
        self.base_ap = Some(joined);
        self.transition(
            t_us,
            Phase::Redirected,
            format!("station associated at dpid {}", joined.datapath_id),
        );
        Ok(())
    }

    fn revert(&mut self, ctl: &mut ControllerCore, now_us: u64) -> Result<(), CtlError> {
        let base = self.base_ap.expect("multicast implies a base AP");
        let speculative = if base == self.cfg.from_ap { self.cfg.to_ap } else { self.cfg.from_ap };
        if let Some(conn) = self.switch_conn(ctl) {
            ctl.send_flow_mod(conn, del_entry(self.sta_match(), MULTICAST_PRIORITY))?;
        }
        if let Some(conn) = ctl.conn_by_datapath(speculative.datapath_id) {
            ctl.send_flow_mod(conn, del_entry(self.sta_match(), UNICAST_PRIORITY))?;
        }
        self.transition(now_us, Phase::Idle, "revert deadline reached");
        Ok(())
    }
}
