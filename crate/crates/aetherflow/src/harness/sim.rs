//! Deterministic experiment driver. One `Sim` owns the radio world, the
//! station agents, the switch and AP data planes, and (in aetherflow mode)
//! the controller plus the fast-handoff app, and steps everything on a
//! fixed 10 ms tick.
//!
//! Control-plane traffic flows through `Pipe` transports. Each tick the
//! controller pumps every connection to a barrier (an in-protocol echo),
//! processing messages per connection in a fixed order, so results are
//! identical over in-process queues and TCP loopback.

use crate::controller::{ControlEvent, ControllerCore, CtlError};
use crate::dataplane::{
    agent::Agent, DataPlane, DpError, EtherFrame, ForwardingMode, PportCaps,
    StationState, WirelessPhysicalPort,
};
use crate::handoff::{ApRef, HandoffApp, HandoffConfig, PhaseTransition, Predictor};
use crate::radio::{
    ApId, MobilityPlan, PathLossParams, RadioWorld, RoamParams, StationAgent, StationEvent, Vec2,
};
use crate::wire::{
    Action, DecodeError, Dot11Version, FlowModBody, FlowModCommand, LportOp, Mac, MatchSet,
    SecurityMode, WirelessEventKind,
};
use super::config::{Config, ConfigError, Mode, PredictorKind};
use super::metrics::{
    self, CompareRow, DeliveryRecord, ExperimentSummary, IntervalMetrics,
};
use super::transport::{pipe_pair, Pipe, TransportKind};
use thiserror::Error;

pub const TICK_US: u64 = 10_000;

/// Fixed AP port layout: wired uplink, radio, one logical port (BSS).
pub const AP_UPLINK_PORT: u32 = 1;
pub const AP_PHYS_PORT: u32 = 2;
pub const AP_LPORT: u32 = 3;

const KEEPALIVE_BYTES: u32 = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("controller: {0}")]
    Ctl(#[from] CtlError),
    #[error("agent decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum NodeKind {
    Switch,
    Ap { idx: usize },
}

struct Node {
    agent: Agent,
    kind: NodeKind,
    ctl_pipe: Box<dyn Pipe>,
    agent_pipe: Box<dyn Pipe>,
}

pub struct Sim {
    pub cfg: Config,
    transport: TransportKind,
    world: RadioWorld,
    stations: Vec<StationAgent>,
    nodes: Vec<Node>,
    switch_idx: usize,
    ctl: Option<ControllerCore>,
    app: Option<HandoffApp>,
    now_us: u64,
    sent_count: Vec<u64>,
    send_interval_s: f64,
    delivery: Vec<DeliveryRecord>,
    reassoc_time_s: Option<f64>,
    server_rx: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub intervals: Vec<IntervalMetrics>,
    pub summary: ExperimentSummary,
    pub delivery_log: Vec<DeliveryRecord>,
    pub phase_log: Vec<PhaseTransition>,
}

fn default_caps(tx_power_dbm: i8) -> PportCaps {
    PportCaps {
        versions_bitmap: 0x07,
        channels_bitmap: 0x07FF,
        tx_power_min_dbm: 0,
        tx_power_max_dbm: tx_power_dbm.max(20),
        security_bitmap: 0x03,
        max_aps: 4,
    }
}

impl Sim {
    pub fn new(cfg: &Config, transport: TransportKind) -> Result<Sim, SimError> {
        cfg.validate()?;
        let e = &cfg.experiment;
        let fwd_mode = match e.mode {
            Mode::Aetherflow => ForwardingMode::Flow,
            Mode::Bridge => ForwardingMode::Bridge,
        };

        let params = PathLossParams {
            pl0_db: cfg.radio.pl0_db,
            d0_m: cfg.radio.d0_m,
            exponent_n: cfg.radio.exponent_n,
            shadow_sigma_db: cfg.radio.shadow_sigma_db,
        };
        let mut world = RadioWorld::new(params, e.seed);
        for ap in &cfg.aps {
            world.add_ap(
                ApId(ap.datapath_id as u32),
                Vec2::new(ap.position[0], ap.position[1]),
                ap.tx_power_dbm as f64,
            );
        }

        let mut stations = Vec::new();
        for s in &cfg.stations {
            let plan = MobilityPlan::new(
                s.waypoints.iter().map(|w| (w[0], Vec2::new(w[1], w[2]))).collect(),
            )
            .map_err(SimError::Setup)?;
            let roam = RoamParams {
                roam_threshold_dbm: s.roam_threshold_dbm,
                hysteresis_db: s.hysteresis_db,
                scan_interval_s: s.scan_interval_s,
                scan_duration_s: s.scan_duration_s,
                auth_assoc_delay_s: s.auth_assoc_delay_s,
                upstream_keepalive_s: s.upstream_keepalive_s,
            };
            let mut agent = StationAgent::new(s.mac, plan, roam);
            agent.roaming_enabled = s.roaming;
            agent.disassoc_on_leave = s.disassoc_on_leave;
            stations.push(agent);
        }

        // node order fixes the control pump order: APs first, then the
        // switch, so flow mods triggered by AP events land on the switch
        // within the same tick
        let mut nodes = Vec::new();
        for (i, ap) in cfg.aps.iter().enumerate() {
            let mut dp = DataPlane::new(ap.datapath_id, fwd_mode);
            dp.add_wired_port(AP_UPLINK_PORT);
            dp.add_phys_port(WirelessPhysicalPort {
                port_id: AP_PHYS_PORT,
                dot11_version: Dot11Version::G,
                channel: ap.channel,
                tx_power_dbm: ap.tx_power_dbm,
                caps: default_caps(ap.tx_power_dbm),
            });
            let (ctl_pipe, agent_pipe) = pipe_pair(transport);
            nodes.push(Node {
                agent: Agent::new(dp),
                kind: NodeKind::Ap { idx: i },
                ctl_pipe,
                agent_pipe,
            });
        }
        let mut sw = DataPlane::new(cfg.switch.datapath_id, fwd_mode);
        sw.add_wired_port(cfg.switch.server_port);
        for ap in &cfg.aps {
            sw.add_wired_port(ap.switch_port);
        }
        let (ctl_pipe, agent_pipe) = pipe_pair(transport);
        nodes.push(Node { agent: Agent::new(sw), kind: NodeKind::Switch, ctl_pipe, agent_pipe });
        let switch_idx = nodes.len() - 1;

        let rate = e.offered_load_bps / (e.datagram_payload_bytes as f64 * 8.0);
        let mut sim = Sim {
            cfg: cfg.clone(),
            transport,
            world,
            sent_count: vec![0; stations.len()],
            stations,
            nodes,
            switch_idx,
            ctl: None,
            app: None,
            now_us: 0,
            send_interval_s: 1.0 / rate,
            delivery: Vec::new(),
            reassoc_time_s: None,
            server_rx: 0,
        };
        match e.mode {
            Mode::Aetherflow => sim.setup_control()?,
            Mode::Bridge => sim.setup_standalone()?,
        }
        Ok(sim)
    }

    /// Bridge baseline: no controller, the APs bring their BSS up locally.
    fn setup_standalone(&mut self) -> Result<(), SimError> {
        for node in &mut self.nodes {
            if let NodeKind::Ap { idx } = node.kind {
                let ap = &self.cfg.aps[idx];
                node.agent
                    .dp
                    .apply_lport_config(
                        LportOp::Create,
                        0,
                        AP_PHYS_PORT,
                        &ap.ssid,
                        ap.bssid,
                        SecurityMode::Open,
                    )
                    .map_err(|e| SimError::Setup(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Aetherflow mode: handshake with every datapath, configure the radios
    /// and BSSes in-protocol, install the static upstream entries, and arm
    /// the handoff app.
    fn setup_control(&mut self) -> Result<(), SimError> {
        let mut ctl = ControllerCore::new();
        for node in &mut self.nodes {
            ctl.register_connection();
            node.agent.start();
        }
        self.ctl = Some(ctl);
        for _ in 0..20 {
            for conn in 0..self.nodes.len() {
                self.pump_conn(conn)?;
            }
            if self.ctl.as_ref().unwrap().all_ready() {
                break;
            }
        }
        let ctl = self.ctl.as_mut().unwrap();
        if !ctl.all_ready() {
            return Err(SimError::Setup("handshake did not complete".into()));
        }

        let server = self.cfg.generator.server_mac;
        for (conn, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Ap { idx } => {
                    let ap = &self.cfg.aps[idx];
                    ctl.configure_pport(
                        conn,
                        AP_PHYS_PORT,
                        Dot11Version::G,
                        ap.channel,
                        ap.tx_power_dbm,
                    )?;
                    ctl.configure_lport(
                        conn,
                        LportOp::Create,
                        0,
                        AP_PHYS_PORT,
                        &ap.ssid,
                        ap.bssid,
                        SecurityMode::Open,
                    )?;
                    ctl.register_lport(conn, AP_LPORT);
                    ctl.send_flow_mod(
                        conn,
                        FlowModBody {
                            command: FlowModCommand::Add,
                            priority: 1,
                            idle_timeout_s: 0,
                            hard_timeout_s: 0,
                            match_set: MatchSet::eth_dst(server),
                            actions: vec![Action::Output(AP_UPLINK_PORT)],
                        },
                    )?;
                }
                NodeKind::Switch => {
                    ctl.send_flow_mod(
                        conn,
                        FlowModBody {
                            command: FlowModCommand::Add,
                            priority: 1,
                            idle_timeout_s: 0,
                            hard_timeout_s: 0,
                            match_set: MatchSet::eth_dst(server),
                            actions: vec![Action::Output(self.cfg.switch.server_port)],
                        },
                    )?;
                }
            }
        }

        let sta = &self.cfg.stations[0];
        let predictor = match self.cfg.experiment.predictor {
            PredictorKind::Fixed => Predictor::Fixed { fire_at_s: self.cfg.handoff.fire_at_s },
            PredictorKind::Trend => Predictor::Trend { margin_db: self.cfg.handoff.trend_margin_db },
        };
        let ap_ref = |ap: &super::config::ApCfg| ApRef {
            datapath_id: ap.datapath_id,
            switch_port: ap.switch_port,
            wireless_lport: AP_LPORT,
        };
        self.app = Some(HandoffApp::new(HandoffConfig {
            sta: sta.mac,
            predictor,
            revert_timeout_s: self.cfg.handoff.revert_timeout_s,
            switch_datapath_id: self.cfg.switch.datapath_id,
            from_ap: ap_ref(&self.cfg.aps[0]),
            to_ap: ap_ref(&self.cfg.aps[1]),
        }));

        // flush the configuration before the clock starts
        for conn in 0..self.nodes.len() {
            self.pump_conn(conn)?;
        }
        Ok(())
    }

    /// Pumps one connection to a barrier: flush, then exchange until the
    /// agent's reply to a fresh echo request comes back.
    fn pump_conn(&mut self, conn: usize) -> Result<(), SimError> {
        let ctl = self.ctl.as_mut().expect("pump only with a controller");
        let node = &mut self.nodes[conn];
        let barrier = ctl.send_echo_request(conn)?;
        let mut spins = 0u64;
        loop {
            let down = ctl.take_outbox_bytes(conn);
            if !down.is_empty() {
                node.ctl_pipe.send(&down);
            }
            let to_agent = node.agent_pipe.recv();
            if !to_agent.is_empty() {
                node.agent.dispatch_bytes(&to_agent)?;
            }
            let up = node.agent.take_outbox_bytes();
            if !up.is_empty() {
                node.agent_pipe.send(&up);
            }
            let to_ctl = node.ctl_pipe.recv();
            let mut done = false;
            if !to_ctl.is_empty() {
                for ev in ctl.dispatch_bytes(conn, &to_ctl)? {
                    match ev {
                        ControlEvent::EchoReply { xid, .. } if xid == barrier => done = true,
                        ControlEvent::Event { datapath_id, report, .. } => {
                            if let Some(app) = self.app.as_mut() {
                                app.on_event(ctl, datapath_id, &report)?;
                            }
                        }
                        _ => {}
                    }
                }
            }
            if done {
                return Ok(());
            }
            spins += 1;
            if spins > 10_000_000 {
                return Err(SimError::Setup(format!("connection {conn} stalled at barrier")));
            }
            std::thread::yield_now();
        }
    }

    pub fn time_s(&self) -> f64 {
        self.now_us as f64 / 1e6
    }

    pub fn app(&self) -> Option<&HandoffApp> {
        self.app.as_ref()
    }

    /// Outputs the switch would apply to a downstream frame toward `dst`.
    pub fn switch_outputs(&self, dst: Mac) -> Vec<u32> {
        self.nodes[self.switch_idx]
            .agent
            .dp
            .lookup_outputs(self.cfg.switch.server_port, dst)
    }

    pub fn reassoc_time_s(&self) -> Option<f64> {
        self.reassoc_time_s
    }

    fn ap_node_idx(&self, ap: ApId) -> usize {
        self.cfg
            .aps
            .iter()
            .position(|a| ApId(a.datapath_id as u32) == ap)
            .expect("station events only reference configured APs")
    }

    fn handle_station_event(&mut self, si: usize, ev: StationEvent, now_s: f64) {
        match ev {
            StationEvent::Mgmt { ap, kind, rssi_dbm } => {
                let ni = self.ap_node_idx(ap);
                let mac = self.stations[si].mac;
                match self.nodes[ni].agent.dp.handle_mgmt(AP_LPORT, kind, mac, rssi_dbm) {
                    Ok(events) => {
                        for w in events {
                            if w.kind == WirelessEventKind::Reassociation {
                                self.reassoc_time_s = Some(now_s);
                            }
                            if self.ctl.is_some() {
                                self.nodes[ni].agent.push_event(w);
                            }
                        }
                    }
                    // a redundant frame (e.g. probe race) is not fatal
                    Err(DpError::Wireless(..)) => {}
                    Err(e) => panic!("unexpected mgmt error: {e}"),
                }
            }
            StationEvent::Keepalive { ap } => {
                let ni = self.ap_node_idx(ap);
                let mac = self.stations[si].mac;
                let frame = EtherFrame {
                    src: mac,
                    dst: self.cfg.generator.server_mac,
                    length_bytes: KEEPALIVE_BYTES,
                    flow_seq: u64::MAX,
                    created_at_us: self.now_us,
                };
                self.nodes[ni].agent.dp.record_wireless_rx(AP_LPORT, mac, KEEPALIVE_BYTES);
                self.inject(ni, AP_LPORT, frame);
            }
        }
    }

    /// Cascades a frame through the wired fabric. The topology is a star,
    /// so the work queue always drains.
    fn inject(&mut self, node_idx: usize, in_port: u32, frame: EtherFrame) {
        let mut queue = vec![(node_idx, in_port, frame)];
        while let Some((ni, ip, f)) = queue.pop() {
            let outputs = self.nodes[ni].agent.dp.forward(&f, ip, 0);
            for out in outputs {
                match self.nodes[ni].kind {
                    NodeKind::Switch => {
                        if out == self.cfg.switch.server_port {
                            self.server_rx += 1;
                        } else if let Some(ai) =
                            self.cfg.aps.iter().position(|a| a.switch_port == out)
                        {
                            queue.push((ai, AP_UPLINK_PORT, f));
                        }
                    }
                    NodeKind::Ap { idx } => {
                        if out == AP_UPLINK_PORT {
                            queue.push((self.switch_idx, self.cfg.aps[idx].switch_port, f));
                        } else if out == AP_LPORT {
                            self.wireless_tx(ni, idx, &f);
                        }
                    }
                }
            }
        }
    }

    /// Transmits a downstream frame over the air. Fails outright when the
    /// target station is not actually parked on this AP; otherwise delivery
    /// is per-attempt random at the sampled RSSI.
    fn wireless_tx(&mut self, ni: usize, ap_idx: usize, f: &EtherFrame) {
        let ap_id = ApId(self.cfg.aps[ap_idx].datapath_id as u32);
        let dp = &mut self.nodes[ni].agent.dp;
        let Some(si) = self.stations.iter().position(|s| s.mac == f.dst) else {
            return;
        };
        let attached = self.stations[si].serving_ap() == Some(ap_id)
            && dp.station_state(AP_LPORT, f.dst) >= StationState::Associated;
        if !attached {
            dp.record_wireless_tx(AP_LPORT, f.dst, f.length_bytes, false, 0);
            return;
        }
        let rssi = self.world.rssi_sample(ap_id, self.stations[si].position);
        let outcome = self.world.deliver_at_rssi(rssi);
        dp.record_wireless_tx(AP_LPORT, f.dst, f.length_bytes, outcome.delivered(), outcome.attempts());
        if outcome.delivered() && f.flow_seq != u64::MAX {
            self.delivery[f.flow_seq as usize].delivered = true;
        }
    }

    fn emit_traffic(&mut self, now_s: f64) {
        let payload = self.cfg.experiment.datagram_payload_bytes;
        let server = self.cfg.generator.server_mac;
        for si in 0..self.stations.len() {
            loop {
                let t_send = self.sent_count[si] as f64 * self.send_interval_s;
                if t_send > now_s || t_send >= self.cfg.experiment.duration_s {
                    break;
                }
                self.sent_count[si] += 1;
                let seq = self.delivery.len() as u64;
                self.delivery.push(DeliveryRecord { send_time_s: t_send, delivered: false });
                let frame = EtherFrame {
                    src: server,
                    dst: self.stations[si].mac,
                    length_bytes: payload,
                    flow_seq: seq,
                    created_at_us: self.now_us,
                };
                self.inject(self.switch_idx, self.cfg.switch.server_port, frame);
            }
        }
    }

    /// One 10 ms tick: radio and stations, then control plane, then data.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now_us = self.now_us;
        let now_s = now_us as f64 / 1e6;
        for node in &mut self.nodes {
            node.agent.dp.set_time(now_us);
        }
        if let Some(ctl) = self.ctl.as_mut() {
            ctl.set_time(now_us);
        }

        for si in 0..self.stations.len() {
            for ev in self.stations[si].step(&self.world, now_s) {
                self.handle_station_event(si, ev, now_s);
            }
            // the serving AP tracks the station's RSSI continuously
            if let Some(ap) = self.stations[si].serving_ap() {
                let ni = self.ap_node_idx(ap);
                let rssi = self.world.rssi_clean(ap, self.stations[si].position);
                let mac = self.stations[si].mac;
                self.nodes[ni].agent.dp.update_station_rssi(AP_LPORT, mac, rssi);
            }
        }

        // controller-initiated deauths bounce the station back to scanning
        for ni in 0..self.nodes.len() {
            let kicked = std::mem::take(&mut self.nodes[ni].agent.dp.kicked);
            for (_, mac) in kicked {
                if let Some(sta) = self.stations.iter_mut().find(|s| s.mac == mac) {
                    sta.kicked();
                }
            }
        }

        if self.ctl.is_some() {
            if let (Some(app), Some(ctl)) = (self.app.as_mut(), self.ctl.as_mut()) {
                app.on_tick(ctl, now_us)?;
            }
            self.ctl.as_mut().unwrap().poll_tick();
            for conn in 0..self.nodes.len() {
                self.pump_conn(conn)?;
            }
        }

        self.emit_traffic(now_s);
        self.now_us += TICK_US;
        Ok(())
    }

    pub fn run_to(&mut self, t_s: f64) -> Result<(), SimError> {
        while self.time_s() < t_s - 1e-9 {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunResult, SimError> {
        self.run_to(self.cfg.experiment.duration_s)?;
        let e = &self.cfg.experiment;
        let intervals = metrics::intervals_from_log(
            &self.delivery,
            e.datagram_payload_bytes,
            e.measure_interval_s,
            e.duration_s,
        );
        let (handoff_duration_s, dip_start_s) =
            metrics::handoff_window(&intervals, e.handoff_threshold_bps, e.handoff_window_start_s);
        let delivered_total = self.delivery.iter().filter(|r| r.delivered).count() as u64;
        let sent_total = self.delivery.len() as u64;
        let summary = ExperimentSummary {
            mode: e.mode.as_str().to_string(),
            predictor: match e.predictor {
                PredictorKind::Fixed => "fixed".to_string(),
                PredictorKind::Trend => "trend".to_string(),
            },
            seed: e.seed,
            transport: match self.transport {
                TransportKind::Local => "local".to_string(),
                TransportKind::Tcp => "tcp".to_string(),
            },
            duration_s: e.duration_s,
            datagram_payload_bytes: e.datagram_payload_bytes,
            sent_total,
            delivered_total,
            lost_total: sent_total - delivered_total,
            handoff_duration_s,
            dip_start_s,
            reassoc_time_s: self.reassoc_time_s,
        };
        Ok(RunResult {
            intervals,
            summary,
            delivery_log: self.delivery,
            phase_log: self.app.map(|a| a.log).unwrap_or_default(),
        })
    }
}

pub fn run_experiment(cfg: &Config, transport: TransportKind) -> Result<RunResult, SimError> {
    Sim::new(cfg, transport)?.finish()
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    /// (mode, mean handoff duration over all rounds)
    pub means: Vec<(String, f64)>,
    /// (mode, round index whose duration is the per-mode median)
    pub median_rounds: Vec<(String, u32)>,
}

/// Runs both modes for `rounds` seeded rounds each and aggregates the
/// handoff durations. Round k uses seed `base_seed + k`.
pub fn compare_modes(
    cfg: &Config,
    rounds: u32,
    base_seed: u64,
    transport: TransportKind,
) -> Result<CompareResult, SimError> {
    let mut rows = Vec::new();
    let mut means = Vec::new();
    let mut median_rounds = Vec::new();
    for mode in [Mode::Aetherflow, Mode::Bridge] {
        let mut durations = Vec::new();
        for round in 0..rounds {
            let mut c = cfg.clone();
            c.experiment.mode = mode;
            c.experiment.seed = base_seed + round as u64;
            let res = run_experiment(&c, transport)?;
            durations.push((res.summary.handoff_duration_s, round));
            rows.push(CompareRow {
                mode: mode.as_str().to_string(),
                round,
                seed: c.experiment.seed,
                handoff_duration_s: res.summary.handoff_duration_s,
                dip_start_s: res.summary.dip_start_s,
                lost_total: res.summary.lost_total,
            });
        }
        let mean = durations.iter().map(|(d, _)| d).sum::<f64>() / durations.len() as f64;
        means.push((mode.as_str().to_string(), mean));
        let mut sorted = durations.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[(sorted.len() - 1) / 2];
        median_rounds.push((mode.as_str().to_string(), median.1));
    }
    Ok(CompareResult { rows, means, median_rounds })
}

/// Writes intervals.csv and summary.json for one run.
pub fn write_run_outputs(res: &RunResult, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("intervals.csv"), metrics::intervals_csv(&res.intervals))?;
    std::fs::write(dir.join("summary.json"), metrics::summary_json(&res.summary))?;
    Ok(())
}

pub fn write_comparison(cmp: &CompareResult, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("comparison.csv"),
        metrics::comparison_csv(&cmp.rows, &cmp.means),
    )?;
    Ok(())
}
