//! Simulated switch/AP data plane: match-action flow table, wireless
//! physical and logical ports, the 802.11 station state machine, counters,
//! and the learning-bridge baseline.

use crate::wire::{
    Action, Dot11Version, FlowModBody, FlowModCommand, LportCounters, Mac, MatchSet,
    SecurityMode, StationStats, WirelessErrorCode, WirelessEventKind, RSSI_NOT_APPLICABLE,
};
use std::collections::BTreeMap;
use thiserror::Error;

pub const BRIDGE_AGING_US: u64 = 300_000_000; // 300 s

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DpError {
    #[error("flow entry not found for {command:?}")]
    FlowNotFound { command: FlowModCommand },
    #[error("flow mod Add requires at least one match field")]
    EmptyMatch,
    #[error("wireless error: {0:?} ({1})")]
    Wireless(WirelessErrorCode, String),
}

impl DpError {
    pub fn wireless_code(&self) -> Option<WirelessErrorCode> {
        match self {
            DpError::Wireless(c, _) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StationState {
    NotAuthenticated,
    Authenticated,
    Associated,
    Authorized,
}

/// Management frame kinds a station can send to an AP. Authorization is an
/// event, not a frame, so it is absent here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgmtFrameKind {
    Probe,
    Auth,
    Deauth,
    Assoc,
    Reassoc,
    Disassoc,
}

pub const ALL_MGMT_KINDS: [MgmtFrameKind; 6] = [
    MgmtFrameKind::Probe,
    MgmtFrameKind::Auth,
    MgmtFrameKind::Deauth,
    MgmtFrameKind::Assoc,
    MgmtFrameKind::Reassoc,
    MgmtFrameKind::Disassoc,
];

pub const ALL_STATES: [StationState; 4] = [
    StationState::NotAuthenticated,
    StationState::Authenticated,
    StationState::Associated,
    StationState::Authorized,
];

/// Open-security transition table. Returns the new state and the events the
/// transition emits, or None for an out-of-order frame (state unchanged).
///
/// Association and reassociation pass through Associated and settle in
/// Authorized in a single exchange, emitting two events.
pub fn mgmt_transition(
    state: StationState,
    kind: MgmtFrameKind,
) -> Option<(StationState, &'static [WirelessEventKind])> {
    use MgmtFrameKind::*;
    use StationState::*;
    use WirelessEventKind as E;
    match (state, kind) {
        (s, Probe) => Some((s, &[E::Probe])),
        (NotAuthenticated, Auth) => Some((Authenticated, &[E::Authentication])),
        (Authenticated, Assoc) => Some((Authorized, &[E::Association, E::Authorization])),
        (Authenticated, Reassoc) => Some((Authorized, &[E::Reassociation, E::Authorization])),
        (Associated, Disassoc) | (Authorized, Disassoc) => {
            Some((Authenticated, &[E::Disassociation]))
        }
        (_, Deauth) => Some((NotAuthenticated, &[E::Deauthentication])),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct PportCaps {
    pub versions_bitmap: u8,
    pub channels_bitmap: u16,
    pub tx_power_min_dbm: i8,
    pub tx_power_max_dbm: i8,
    pub security_bitmap: u8,
    pub max_aps: u8,
}

#[derive(Debug, Clone)]
pub struct WirelessPhysicalPort {
    pub port_id: u32,
    pub dot11_version: Dot11Version,
    pub channel: u8,
    pub tx_power_dbm: i8,
    pub caps: PportCaps,
}

#[derive(Debug, Clone)]
pub struct StationRecord {
    pub mac: Mac,
    pub state: StationState,
    pub rssi_current_dbm: f64,
    pub rssi_avg_dbm: f64,
    pub associated_since_us: u64,
    pub tx_pkts: u64,
    pub rx_pkts: u64,
}

pub const RSSI_EWMA_ALPHA: f64 = 0.3;

impl StationRecord {
    fn new(mac: Mac, rssi: f64) -> Self {
        StationRecord {
            mac,
            state: StationState::NotAuthenticated,
            rssi_current_dbm: rssi,
            rssi_avg_dbm: rssi,
            associated_since_us: 0,
            tx_pkts: 0,
            rx_pkts: 0,
        }
    }

    fn update_rssi(&mut self, rssi: f64) {
        self.rssi_current_dbm = rssi;
        self.rssi_avg_dbm = RSSI_EWMA_ALPHA * rssi + (1.0 - RSSI_EWMA_ALPHA) * self.rssi_avg_dbm;
    }
}

#[derive(Debug, Clone)]
pub struct WirelessLogicalPort {
    pub port_id: u32,
    pub parent_phys: u32,
    pub ssid: String,
    pub bssid: Mac,
    pub security: SecurityMode,
    pub stations: BTreeMap<Mac, StationRecord>,
    pub counters: LportCounters,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEntry {
    pub priority: u16,
    pub match_set: MatchSet,
    pub actions: Vec<Action>,
    pub idle_timeout_s: u16,
    pub hard_timeout_s: u16,
    pub pkts: u64,
    pub bytes: u64,
    created_us: u64,
    last_hit_us: u64,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtherFrame {
    pub src: Mac,
    pub dst: Mac,
    pub length_bytes: u32,
    pub flow_seq: u64,
    pub created_at_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardingMode {
    Flow,
    Bridge,
}

/// Outbound wireless event, reported to the controller as an EventReport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WirelessEvent {
    pub phys_port: u32,
    pub logical_port: u32,
    pub kind: WirelessEventKind,
    pub sta_mac: Mac,
    pub rssi_dbm: i8,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FrameCounters {
    pub frames_in: u64,
    pub frames_out: u64,
    pub frames_dropped: u64,
}

#[derive(Debug)]
pub struct DataPlane {
    pub datapath_id: u64,
    pub mode: ForwardingMode,
    now_us: u64,
    wired_ports: Vec<u32>,
    pub phys_ports: BTreeMap<u32, WirelessPhysicalPort>,
    pub lports: BTreeMap<u32, WirelessLogicalPort>,
    flows: Vec<FlowEntry>,
    flow_seq: u64,
    bridge_table: BTreeMap<Mac, (u32, u64)>,
    pub frame_counters: FrameCounters,
    /// Stations force-deauthenticated by the controller; the radio side
    /// drains this so those stations re-scan.
    pub kicked: Vec<(u32, Mac)>,
    pub log: Vec<String>,
}

impl DataPlane {
    pub fn new(datapath_id: u64, mode: ForwardingMode) -> Self {
        DataPlane {
            datapath_id,
            mode,
            now_us: 0,
            wired_ports: Vec::new(),
            phys_ports: BTreeMap::new(),
            lports: BTreeMap::new(),
            flows: Vec::new(),
            flow_seq: 0,
            bridge_table: BTreeMap::new(),
            frame_counters: FrameCounters::default(),
            kicked: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn set_time(&mut self, now_us: u64) {
        self.now_us = now_us;
        self.expire_flows();
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn add_wired_port(&mut self, port_id: u32) {
        self.wired_ports.push(port_id);
    }

    pub fn add_phys_port(&mut self, port: WirelessPhysicalPort) {
        self.phys_ports.insert(port.port_id, port);
    }

    /// All ports participating in forwarding: wired ports plus wireless
    /// logical ports. Physical radio ports never carry pipeline traffic.
    pub fn forwarding_ports(&self) -> Vec<u32> {
        let mut ports = self.wired_ports.clone();
        ports.extend(self.lports.keys().copied());
        ports
    }

    pub fn n_ports(&self) -> u32 {
        (self.wired_ports.len() + self.phys_ports.len() + self.lports.len()) as u32
    }

    fn next_port_id(&self) -> u32 {
        let max_existing = self
            .wired_ports
            .iter()
            .copied()
            .chain(self.phys_ports.keys().copied())
            .chain(self.lports.keys().copied())
            .max()
            .unwrap_or(0);
        max_existing + 1
    }

    // ---- flow table ----

    pub fn apply_flow_mod(&mut self, fm: &FlowModBody) -> Result<(), DpError> {
        let pos = self
            .flows
            .iter()
            .position(|e| e.match_set == fm.match_set && e.priority == fm.priority);
        match fm.command {
            FlowModCommand::Add => {
                if fm.match_set.is_empty() {
                    return Err(DpError::EmptyMatch);
                }
                self.flow_seq += 1;
                let entry = FlowEntry {
                    priority: fm.priority,
                    match_set: fm.match_set,
                    actions: fm.actions.clone(),
                    idle_timeout_s: fm.idle_timeout_s,
                    hard_timeout_s: fm.hard_timeout_s,
                    pkts: 0,
                    bytes: 0,
                    created_us: self.now_us,
                    last_hit_us: self.now_us,
                    seq: self.flow_seq,
                };
                match pos {
                    Some(i) => self.flows[i] = entry,
                    None => self.flows.push(entry),
                }
                Ok(())
            }
            FlowModCommand::Modify => match pos {
                Some(i) => {
                    self.flows[i].actions = fm.actions.clone();
                    Ok(())
                }
                None => Err(DpError::FlowNotFound { command: fm.command }),
            },
            FlowModCommand::DeleteStrict => match pos {
                Some(i) => {
                    self.flows.remove(i);
                    Ok(())
                }
                None => Err(DpError::FlowNotFound { command: fm.command }),
            },
        }
    }

    fn expire_flows(&mut self) {
        let now = self.now_us;
        self.flows.retain(|e| {
            if e.hard_timeout_s != 0 && now - e.created_us >= e.hard_timeout_s as u64 * 1_000_000 {
                return false;
            }
            if e.idle_timeout_s != 0 && now - e.last_hit_us >= e.idle_timeout_s as u64 * 1_000_000 {
                return false;
            }
            true
        });
    }

    fn entry_matches(entry: &MatchSet, in_port: u32, dst: Mac) -> bool {
        if let Some(p) = entry.in_port {
            if p != in_port {
                return false;
            }
        }
        if let Some(d) = entry.eth_dst {
            if d != dst {
                return false;
            }
        }
        true
    }

    /// Highest-priority match; ties break to the earliest-inserted entry.
    fn lookup_index(&self, in_port: u32, dst: Mac) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.flows.iter().enumerate() {
            if !Self::entry_matches(&e.match_set, in_port, dst) {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    let cur = &self.flows[b];
                    if e.priority > cur.priority
                        || (e.priority == cur.priority && e.seq < cur.seq)
                    {
                        best = Some(i);
                    }
                }
            }
        }
        best
    }

    /// Read-only table query: output ports the flow table would select.
    pub fn lookup_outputs(&self, in_port: u32, dst: Mac) -> Vec<u32> {
        self.lookup_index(in_port, dst)
            .map(|i| {
                self.flows[i]
                    .actions
                    .iter()
                    .map(|Action::Output(p)| *p)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn flow_table(&self) -> &[FlowEntry] {
        &self.flows
    }

    pub fn process_frame(&mut self, f: &EtherFrame, in_port: u32, _in_phys_port: u32) -> Vec<u32> {
        self.frame_counters.frames_in += 1;
        let outputs = match self.lookup_index(in_port, f.dst) {
            Some(i) => {
                let e = &mut self.flows[i];
                e.pkts += 1;
                e.bytes += f.length_bytes as u64;
                e.last_hit_us = self.now_us;
                e.actions.iter().map(|Action::Output(p)| *p).collect()
            }
            None => Vec::new(),
        };
        if outputs.is_empty() {
            self.frame_counters.frames_dropped += 1;
        } else {
            self.frame_counters.frames_out += outputs.len() as u64;
        }
        outputs
    }

    // ---- learning bridge ----

    pub fn bridge_forward(&mut self, f: &EtherFrame, in_port: u32) -> Vec<u32> {
        self.frame_counters.frames_in += 1;
        self.bridge_table.insert(f.src, (in_port, self.now_us));
        let learned = self.bridge_table.get(&f.dst).and_then(|&(port, seen)| {
            if self.now_us - seen < BRIDGE_AGING_US {
                Some(port)
            } else {
                None
            }
        });
        let outputs: Vec<u32> = match learned {
            Some(port) if port == in_port => Vec::new(),
            Some(port) => vec![port],
            None => self
                .forwarding_ports()
                .into_iter()
                .filter(|&p| p != in_port)
                .collect(),
        };
        if outputs.is_empty() {
            self.frame_counters.frames_dropped += 1;
        } else {
            self.frame_counters.frames_out += outputs.len() as u64;
        }
        outputs
    }

    /// Dispatches on the configured mode.
    pub fn forward(&mut self, f: &EtherFrame, in_port: u32, in_phys_port: u32) -> Vec<u32> {
        match self.mode {
            ForwardingMode::Flow => self.process_frame(f, in_port, in_phys_port),
            ForwardingMode::Bridge => self.bridge_forward(f, in_port),
        }
    }

    // ---- wireless ports and stations ----

    fn lport(&self, id: u32) -> Result<&WirelessLogicalPort, DpError> {
        self.lports.get(&id).ok_or_else(|| {
            DpError::Wireless(
                WirelessErrorCode::InvalidLogicalPort,
                format!("logical port {id}"),
            )
        })
    }

    fn lport_mut(&mut self, id: u32) -> Result<&mut WirelessLogicalPort, DpError> {
        self.lports.get_mut(&id).ok_or_else(|| {
            DpError::Wireless(
                WirelessErrorCode::InvalidLogicalPort,
                format!("logical port {id}"),
            )
        })
    }

    pub fn station_state(&self, lport: u32, sta: Mac) -> StationState {
        self.lports
            .get(&lport)
            .and_then(|lp| lp.stations.get(&sta))
            .map_or(StationState::NotAuthenticated, |r| r.state)
    }

    pub fn handle_mgmt(
        &mut self,
        lport_id: u32,
        kind: MgmtFrameKind,
        sta: Mac,
        rssi_dbm: f64,
    ) -> Result<Vec<WirelessEvent>, DpError> {
        let now = self.now_us;
        let phys = self.lport(lport_id)?.parent_phys;
        let lp = self.lport_mut(lport_id)?;

        let state = lp.stations.get(&sta).map_or(StationState::NotAuthenticated, |r| r.state);
        // Probes and first-contact Auth are valid without a record; every
        // other frame from an untracked station is out of order.
        if !lp.stations.contains_key(&sta)
            && !matches!(kind, MgmtFrameKind::Probe | MgmtFrameKind::Auth)
        {
            self.log.push(format!(
                "t={now}us lport={lport_id} out-of-order {kind:?} from unknown {sta}"
            ));
            return Err(DpError::Wireless(
                WirelessErrorCode::UnknownStation,
                format!("{kind:?} from unknown station {sta}"),
            ));
        }

        let Some((new_state, kinds)) = mgmt_transition(state, kind) else {
            self.log.push(format!(
                "t={now}us lport={lport_id} out-of-order {kind:?} from {sta} in state {state:?}"
            ));
            return Err(DpError::Wireless(
                WirelessErrorCode::UnknownStation,
                format!("out-of-order {kind:?} in state {state:?}"),
            ));
        };

        match kind {
            MgmtFrameKind::Probe => {
                if let Some(rec) = lp.stations.get_mut(&sta) {
                    rec.update_rssi(rssi_dbm);
                }
            }
            MgmtFrameKind::Auth => {
                lp.stations
                    .entry(sta)
                    .or_insert_with(|| StationRecord::new(sta, rssi_dbm))
                    .state = new_state;
            }
            MgmtFrameKind::Deauth => {
                lp.stations.remove(&sta);
            }
            _ => {
                let rec = lp.stations.get_mut(&sta).expect("record checked above");
                rec.state = new_state;
                rec.update_rssi(rssi_dbm);
                if matches!(kind, MgmtFrameKind::Assoc | MgmtFrameKind::Reassoc) {
                    rec.associated_since_us = now;
                }
            }
        }

        let event_rssi = if kind == MgmtFrameKind::Probe {
            rssi_dbm.round().clamp(-126.0, 126.0) as i8
        } else {
            RSSI_NOT_APPLICABLE
        };
        Ok(kinds
            .iter()
            .map(|&k| WirelessEvent {
                phys_port: phys,
                logical_port: lport_id,
                kind: k,
                sta_mac: sta,
                rssi_dbm: event_rssi,
                timestamp_us: now,
            })
            .collect())
    }

    pub fn drop_station(&mut self, lport_id: u32, sta: Mac) -> Result<WirelessEvent, DpError> {
        let phys = self.lport(lport_id)?.parent_phys;
        let lp = self.lport_mut(lport_id)?;
        match lp.stations.get(&sta) {
            Some(rec) if rec.state >= StationState::Authenticated => {}
            _ => {
                return Err(DpError::Wireless(
                    WirelessErrorCode::UnknownStation,
                    format!("drop of unknown station {sta}"),
                ))
            }
        }
        lp.stations.remove(&sta);
        self.kicked.push((lport_id, sta));
        Ok(WirelessEvent {
            phys_port: phys,
            logical_port: lport_id,
            kind: WirelessEventKind::Deauthentication,
            sta_mac: sta,
            rssi_dbm: RSSI_NOT_APPLICABLE,
            timestamp_us: self.now_us,
        })
    }

    pub fn update_station_rssi(&mut self, lport_id: u32, sta: Mac, rssi_dbm: f64) {
        if let Some(rec) = self
            .lports
            .get_mut(&lport_id)
            .and_then(|lp| lp.stations.get_mut(&sta))
        {
            rec.update_rssi(rssi_dbm);
        }
    }

    /// Records the outcome of a wireless transmit attempt sequence against
    /// the lport counters. `attempts` is the total number of attempts made;
    /// each failed attempt is a retry, a frame abandoned after the retry
    /// limit is a retry failure.
    pub fn record_wireless_tx(&mut self, lport_id: u32, sta: Mac, bytes: u32, delivered: bool, attempts: u8) {
        if let Some(lp) = self.lports.get_mut(&lport_id) {
            if delivered {
                lp.counters.tx_pkts += 1;
                lp.counters.tx_bytes += bytes as u64;
                lp.counters.retries += attempts.saturating_sub(1) as u64;
                if let Some(rec) = lp.stations.get_mut(&sta) {
                    rec.tx_pkts += 1;
                }
            } else {
                lp.counters.retries += attempts as u64;
                if attempts > 0 {
                    lp.counters.retry_failures += 1;
                }
            }
        }
    }

    pub fn record_wireless_rx(&mut self, lport_id: u32, sta: Mac, bytes: u32) {
        if let Some(lp) = self.lports.get_mut(&lport_id) {
            lp.counters.rx_pkts += 1;
            lp.counters.rx_bytes += bytes as u64;
            if let Some(rec) = lp.stations.get_mut(&sta) {
                rec.rx_pkts += 1;
            }
        }
    }

    pub fn collect_lport_stats(
        &self,
        lport_id: u32,
    ) -> Result<(LportCounters, Vec<StationStats>), DpError> {
        let lp = self.lport(lport_id)?;
        let stations = lp
            .stations
            .values()
            .filter(|r| r.state >= StationState::Associated)
            .map(|r| StationStats {
                mac: r.mac,
                rssi_current_dbm: r.rssi_current_dbm.round().clamp(-126.0, 126.0) as i8,
                rssi_avg_dbm: r.rssi_avg_dbm.round().clamp(-126.0, 126.0) as i8,
                connected_ms: (self.now_us - r.associated_since_us) / 1000,
            })
            .collect();
        Ok((lp.counters, stations))
    }

    pub fn apply_pport_config(
        &mut self,
        phys_port: u32,
        version: Dot11Version,
        channel: u8,
        tx_power_dbm: i8,
    ) -> Result<(), DpError> {
        let port = self.phys_ports.get_mut(&phys_port).ok_or_else(|| {
            DpError::Wireless(
                WirelessErrorCode::InvalidPhysPort,
                format!("physical port {phys_port}"),
            )
        })?;
        if !(1..=16).contains(&channel) || port.caps.channels_bitmap & (1 << (channel - 1)) == 0 {
            return Err(DpError::Wireless(
                WirelessErrorCode::InvalidChannel,
                format!("channel {channel}"),
            ));
        }
        if port.caps.versions_bitmap & version.bit() == 0 {
            return Err(DpError::Wireless(
                WirelessErrorCode::UnsupportedVersion,
                format!("{version:?}"),
            ));
        }
        port.dot11_version = version;
        port.channel = channel;
        port.tx_power_dbm = tx_power_dbm;
        Ok(())
    }

    pub fn apply_lport_config(
        &mut self,
        op: LportOp,
        logical_port: u32,
        phys_port: u32,
        ssid: &str,
        bssid: Mac,
        security: SecurityMode,
    ) -> Result<(u32, Vec<WirelessEvent>), DpError> {
        match op {
            LportOp::Create => {
                let phys = self.phys_ports.get(&phys_port).ok_or_else(|| {
                    DpError::Wireless(
                        WirelessErrorCode::InvalidPhysPort,
                        format!("physical port {phys_port}"),
                    )
                })?;
                let children = self
                    .lports
                    .values()
                    .filter(|lp| lp.parent_phys == phys_port)
                    .count();
                if children >= phys.caps.max_aps as usize {
                    return Err(DpError::Wireless(
                        WirelessErrorCode::TooManyAps,
                        format!("physical port {phys_port} already hosts {children} APs"),
                    ));
                }
                let id = self.next_port_id();
                self.lports.insert(
                    id,
                    WirelessLogicalPort {
                        port_id: id,
                        parent_phys: phys_port,
                        ssid: ssid.to_string(),
                        bssid,
                        security,
                        stations: BTreeMap::new(),
                        counters: LportCounters::default(),
                    },
                );
                Ok((id, Vec::new()))
            }
            LportOp::Modify => {
                let lp = self.lport_mut(logical_port)?;
                lp.ssid = ssid.to_string();
                lp.bssid = bssid;
                lp.security = security;
                Ok((logical_port, Vec::new()))
            }
            LportOp::Delete => {
                let _ = self.lport(logical_port)?;
                let lp = self.lports.get(&logical_port).unwrap();
                let phys = lp.parent_phys;
                let macs: Vec<Mac> = lp
                    .stations
                    .values()
                    .filter(|r| r.state >= StationState::Authenticated)
                    .map(|r| r.mac)
                    .collect();
                let now = self.now_us;
                let events: Vec<WirelessEvent> = macs
                    .iter()
                    .map(|&mac| WirelessEvent {
                        phys_port: phys,
                        logical_port,
                        kind: WirelessEventKind::Deauthentication,
                        sta_mac: mac,
                        rssi_dbm: RSSI_NOT_APPLICABLE,
                        timestamp_us: now,
                    })
                    .collect();
                for mac in macs {
                    self.kicked.push((logical_port, mac));
                }
                self.lports.remove(&logical_port);
                Ok((logical_port, events))
            }
        }
    }

    pub fn get_pport_caps(&self, phys_port: u32) -> Result<&WirelessPhysicalPort, DpError> {
        self.phys_ports.get(&phys_port).ok_or_else(|| {
            DpError::Wireless(
                WirelessErrorCode::InvalidPhysPort,
                format!("physical port {phys_port}"),
            )
        })
    }
}

pub use crate::wire::LportOp;

pub mod agent;
