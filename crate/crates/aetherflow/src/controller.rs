//! SDN controller core: datapath handshake, message dispatch, periodic
//! statistics polling, and the network view of station state and RSSI
//! series across all APs.

use crate::dataplane::WirelessEvent;
use crate::wire::{
    self, AetherMessage, DecodeError, Dot11Version, FlowModBody, Mac, Message, MessageBody,
    SecurityMode, WirelessErrorCode, WirelessEventKind, RSSI_NOT_APPLICABLE,
};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

pub const DEFAULT_POLL_PERIOD_US: u64 = 500_000;
pub const HANDSHAKE_TIMEOUT_US: u64 = 1_000_000;
pub const RSSI_SERIES_CAPACITY: usize = 64;
pub const VIEW_EWMA_ALPHA: f64 = 0.3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CtlError {
    #[error("peer speaks protocol version {got:#04x}")]
    VersionMismatch { got: u8 },
    #[error("handshake timed out after 1 s")]
    HandshakeTimeout,
    #[error("transport closed for connection {conn}")]
    TransportClosed { conn: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Switch,
    AccessPoint,
}

#[derive(Debug, Clone)]
pub struct CapsInfo {
    pub versions_bitmap: u8,
    pub channels_bitmap: u16,
    pub tx_power_min_dbm: i8,
    pub tx_power_max_dbm: i8,
    pub security_bitmap: u8,
    pub max_aps: u8,
}

#[derive(Debug, Clone)]
pub struct DatapathHandle {
    pub datapath_id: u64,
    pub role: Role,
    pub n_ports: u32,
    pub wireless_phys_ports: BTreeMap<u32, CapsInfo>,
}

#[derive(Debug)]
enum HsState {
    AwaitHello,
    AwaitFeatures { req_xid: u32 },
    AwaitCaps { pending: BTreeMap<u32, u32> },
    Ready,
}

#[derive(Debug)]
struct Connection {
    xid: u32,
    outbox: Vec<Message>,
    rx_buf: Vec<u8>,
    hs: HsState,
    handle: Option<DatapathHandle>,
    polled_lports: Vec<u32>,
    pending_stats: BTreeMap<u32, u32>,
    unanswered_polls: u64,
    hs_deadline_us: u64,
    closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Association {
    pub datapath_id: u64,
    pub logical_port: u32,
    pub since_us: u64,
}

#[derive(Debug, Default)]
pub struct RssiSeries {
    samples: VecDeque<(u64, f64)>,
    ewma: Option<f64>,
}

impl RssiSeries {
    /// Series timestamps are strictly increasing; stale samples are dropped.
    fn push(&mut self, t_us: u64, rssi: f64) {
        if let Some(&(last, _)) = self.samples.back() {
            if t_us <= last {
                return;
            }
        }
        if self.samples.len() == RSSI_SERIES_CAPACITY {
            self.samples.pop_front();
        }
        self.samples.push_back((t_us, rssi));
        self.ewma = Some(match self.ewma {
            Some(prev) => VIEW_EWMA_ALPHA * rssi + (1.0 - VIEW_EWMA_ALPHA) * prev,
            None => rssi,
        });
    }

    pub fn ewma(&self) -> Option<f64> {
        self.ewma
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<(u64, f64)> {
        self.samples.back().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u64, f64)> {
        self.samples.iter()
    }
}

/// Controller-wide state: one merged RSSI series per (station, AP logical
/// port), current association per station, and a capabilities cache.
#[derive(Debug, Default)]
pub struct NetworkView {
    pub series: BTreeMap<(Mac, u64, u32), RssiSeries>,
    pub associations: BTreeMap<Mac, Association>,
}

impl NetworkView {
    pub fn record_rssi(&mut self, sta: Mac, datapath_id: u64, lport: u32, t_us: u64, rssi: f64) {
        self.series
            .entry((sta, datapath_id, lport))
            .or_default()
            .push(t_us, rssi);
    }

    pub fn on_event(&mut self, datapath_id: u64, ev: &WirelessEvent) {
        match ev.kind {
            WirelessEventKind::Probe => {
                if ev.rssi_dbm != RSSI_NOT_APPLICABLE {
                    self.record_rssi(
                        ev.sta_mac,
                        datapath_id,
                        ev.logical_port,
                        ev.timestamp_us,
                        ev.rssi_dbm as f64,
                    );
                }
            }
            WirelessEventKind::Association | WirelessEventKind::Reassociation => {
                self.associations.insert(
                    ev.sta_mac,
                    Association {
                        datapath_id,
                        logical_port: ev.logical_port,
                        since_us: ev.timestamp_us,
                    },
                );
            }
            WirelessEventKind::Disassociation | WirelessEventKind::Deauthentication => {
                // only the currently recorded AP can clear the association
                if self.associations.get(&ev.sta_mac).is_some_and(|a| {
                    a.datapath_id == datapath_id && a.logical_port == ev.logical_port
                }) {
                    self.associations.remove(&ev.sta_mac);
                }
            }
            WirelessEventKind::Authentication | WirelessEventKind::Authorization => {}
        }
    }

    pub fn ewma(&self, sta: Mac, datapath_id: u64, lport: u32) -> Option<f64> {
        self.series.get(&(sta, datapath_id, lport)).and_then(|s| s.ewma())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlEvent {
    HandshakeComplete { conn: usize, datapath_id: u64, role: Role },
    Event { conn: usize, datapath_id: u64, report: WirelessEvent },
    StatsMerged { conn: usize, logical_port: u32 },
    WirelessError { conn: usize, code: WirelessErrorCode },
    EchoReply { conn: usize, xid: u32 },
}

#[derive(Debug)]
pub struct ControllerCore {
    conns: Vec<Connection>,
    pub view: NetworkView,
    pub poll_period_us: u64,
    next_poll_us: u64,
    now_us: u64,
    pub log: Vec<String>,
}

impl Default for ControllerCore {
    fn default() -> Self {
        Self::new()
    }
}

impl ControllerCore {
    pub fn new() -> Self {
        ControllerCore {
            conns: Vec::new(),
            view: NetworkView::default(),
            poll_period_us: DEFAULT_POLL_PERIOD_US,
            next_poll_us: DEFAULT_POLL_PERIOD_US,
            now_us: 0,
            log: Vec::new(),
        }
    }

    pub fn set_time(&mut self, now_us: u64) {
        self.now_us = now_us;
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Registers a fresh connection and opens the handshake with a Hello.
    pub fn register_connection(&mut self) -> usize {
        let id = self.conns.len();
        let mut conn = Connection {
            xid: 0,
            outbox: Vec::new(),
            rx_buf: Vec::new(),
            hs: HsState::AwaitHello,
            handle: None,
            polled_lports: Vec::new(),
            pending_stats: BTreeMap::new(),
            unanswered_polls: 0,
            hs_deadline_us: self.now_us + HANDSHAKE_TIMEOUT_US,
            closed: false,
        };
        conn.xid += 1;
        conn.outbox.push(Message::new(conn.xid, MessageBody::Hello));
        self.conns.push(conn);
        id
    }

    pub fn connection_count(&self) -> usize {
        self.conns.len()
    }

    pub fn is_ready(&self, conn: usize) -> bool {
        matches!(self.conns[conn].hs, HsState::Ready)
    }

    pub fn all_ready(&self) -> bool {
        self.conns.iter().all(|c| matches!(c.hs, HsState::Ready))
    }

    pub fn handshake_timed_out(&self, conn: usize) -> bool {
        !self.is_ready(conn) && self.now_us >= self.conns[conn].hs_deadline_us
    }

    pub fn handle(&self, conn: usize) -> Option<&DatapathHandle> {
        self.conns[conn].handle.as_ref()
    }

    pub fn conn_by_datapath(&self, datapath_id: u64) -> Option<usize> {
        self.conns
            .iter()
            .position(|c| c.handle.as_ref().is_some_and(|h| h.datapath_id == datapath_id))
    }

    /// Marks a logical port for periodic statistics polling.
    pub fn register_lport(&mut self, conn: usize, lport: u32) {
        self.conns[conn].polled_lports.push(lport);
    }

    pub fn unanswered_polls(&self, conn: usize) -> u64 {
        self.conns[conn].unanswered_polls
    }

    fn next_xid(&mut self, conn: usize) -> u32 {
        let c = &mut self.conns[conn];
        c.xid += 1;
        c.xid
    }

    fn push(&mut self, conn: usize, body: MessageBody) -> Result<u32, CtlError> {
        if self.conns[conn].closed {
            return Err(CtlError::TransportClosed { conn });
        }
        let xid = self.next_xid(conn);
        self.conns[conn].outbox.push(Message::new(xid, body));
        Ok(xid)
    }

    pub fn send_flow_mod(&mut self, conn: usize, fm: FlowModBody) -> Result<u32, CtlError> {
        self.push(conn, MessageBody::FlowMod(fm))
    }

    pub fn send_echo_request(&mut self, conn: usize) -> Result<u32, CtlError> {
        self.push(conn, MessageBody::EchoRequest)
    }

    pub fn configure_pport(
        &mut self,
        conn: usize,
        phys_port: u32,
        dot11_version: Dot11Version,
        channel: u8,
        tx_power_dbm: i8,
    ) -> Result<u32, CtlError> {
        self.push(
            conn,
            MessageBody::Experimenter(AetherMessage::PportConfigRequest {
                phys_port,
                dot11_version,
                channel,
                tx_power_dbm,
            }),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn configure_lport(
        &mut self,
        conn: usize,
        op: wire::LportOp,
        logical_port: u32,
        phys_port: u32,
        ssid: &str,
        bssid: Mac,
        security: SecurityMode,
    ) -> Result<u32, CtlError> {
        self.push(
            conn,
            MessageBody::Experimenter(AetherMessage::LportConfigRequest {
                op,
                logical_port,
                phys_port,
                ssid: ssid.to_string(),
                bssid,
                security,
            }),
        )
    }

    pub fn drop_station(&mut self, conn: usize, logical_port: u32, sta_mac: Mac) -> Result<u32, CtlError> {
        self.push(
            conn,
            MessageBody::Experimenter(AetherMessage::DropStation { logical_port, sta_mac }),
        )
    }

    pub fn request_caps(&mut self, conn: usize, phys_port: u32) -> Result<u32, CtlError> {
        self.push(
            conn,
            MessageBody::Experimenter(AetherMessage::PportCapsRequest { phys_port }),
        )
    }

    /// Every poll period, requests statistics from each registered AP
    /// logical port. Requests left unanswered from the previous period are
    /// counted and implicitly retried by the fresh request.
    pub fn poll_tick(&mut self) {
        while self.now_us >= self.next_poll_us {
            self.next_poll_us += self.poll_period_us;
            for conn in 0..self.conns.len() {
                if !self.is_ready(conn) || self.conns[conn].closed {
                    continue;
                }
                self.conns[conn].unanswered_polls +=
                    self.conns[conn].pending_stats.len() as u64;
                let lports = self.conns[conn].polled_lports.clone();
                for lport in lports {
                    if let Ok(xid) = self.push(
                        conn,
                        MessageBody::Experimenter(AetherMessage::LportStatsRequest {
                            logical_port: lport,
                        }),
                    ) {
                        self.conns[conn].pending_stats.insert(xid, lport);
                    }
                }
            }
        }
    }

    /// Feeds raw bytes from a connection; returns the control events the
    /// contained messages produced. A bad version during the handshake is a
    /// version mismatch and closes the connection.
    pub fn dispatch_bytes(
        &mut self,
        conn: usize,
        bytes: &[u8],
    ) -> Result<Vec<ControlEvent>, CtlError> {
        self.conns[conn].rx_buf.extend_from_slice(bytes);
        let buf = std::mem::take(&mut self.conns[conn].rx_buf);
        let (frames, rest) = match wire::frame_split(&buf) {
            Ok(v) => v,
            Err(DecodeError::BadVersion { got }) => {
                self.conns[conn].closed = true;
                return Err(CtlError::VersionMismatch { got });
            }
            Err(e) => {
                self.log.push(format!("conn {conn}: framing error: {e}"));
                return Ok(Vec::new());
            }
        };
        self.conns[conn].rx_buf = rest;
        let mut events = Vec::new();
        for f in frames {
            match wire::decode(&f) {
                Ok(msg) => events.extend(self.dispatch(conn, msg)),
                Err(DecodeError::BadVersion { got }) => {
                    self.conns[conn].closed = true;
                    return Err(CtlError::VersionMismatch { got });
                }
                Err(e) => self.log.push(format!("conn {conn}: decode error: {e}")),
            }
        }
        Ok(events)
    }

    pub fn dispatch(&mut self, conn: usize, msg: Message) -> Vec<ControlEvent> {
        let mut out = Vec::new();
        match msg.body {
            MessageBody::Hello => {
                if matches!(self.conns[conn].hs, HsState::AwaitHello) {
                    let req_xid = self
                        .push(conn, MessageBody::FeaturesRequest)
                        .expect("conn open during handshake");
                    self.conns[conn].hs = HsState::AwaitFeatures { req_xid };
                }
            }
            MessageBody::FeaturesReply { datapath_id, n_ports } => {
                let expected = match self.conns[conn].hs {
                    HsState::AwaitFeatures { req_xid } => req_xid == msg.xid,
                    _ => false,
                };
                if expected {
                    self.conns[conn].handle = Some(DatapathHandle {
                        datapath_id,
                        role: Role::Switch,
                        n_ports,
                        wireless_phys_ports: BTreeMap::new(),
                    });
                    // Probe every port for wireless capabilities; non-radio
                    // ports answer InvalidPhysPort, which is the discovery
                    // signal, not a failure.
                    let mut pending = BTreeMap::new();
                    for port in 1..=n_ports {
                        if let Ok(xid) = self.request_caps(conn, port) {
                            pending.insert(xid, port);
                        }
                    }
                    if pending.is_empty() {
                        out.extend(self.finish_handshake(conn));
                    } else {
                        self.conns[conn].hs = HsState::AwaitCaps { pending };
                    }
                }
            }
            MessageBody::Experimenter(am) => out.extend(self.dispatch_aether(conn, msg.xid, am)),
            MessageBody::EchoReply => out.push(ControlEvent::EchoReply { conn, xid: msg.xid }),
            MessageBody::Error { of_type, of_code, .. } => {
                self.log.push(format!("conn {conn}: error type={of_type} code={of_code}"));
            }
            MessageBody::EchoRequest => {
                let c = &mut self.conns[conn];
                c.outbox.push(Message::new(msg.xid, MessageBody::EchoReply));
            }
            MessageBody::FeaturesRequest | MessageBody::FlowMod(_) => {
                self.log.push(format!("conn {conn}: unexpected switch-bound message"));
            }
        }
        out
    }

    fn finish_handshake(&mut self, conn: usize) -> Vec<ControlEvent> {
        let handle = self.conns[conn].handle.as_mut().expect("features done");
        handle.role = if handle.wireless_phys_ports.is_empty() {
            Role::Switch
        } else {
            Role::AccessPoint
        };
        let datapath_id = handle.datapath_id;
        let role = handle.role;
        self.conns[conn].hs = HsState::Ready;
        vec![ControlEvent::HandshakeComplete { conn, datapath_id, role }]
    }

    fn dispatch_aether(&mut self, conn: usize, xid: u32, am: AetherMessage) -> Vec<ControlEvent> {
        let mut out = Vec::new();
        match am {
            AetherMessage::PportCapsReply {
                phys_port,
                versions_bitmap,
                channels_bitmap,
                tx_power_min_dbm,
                tx_power_max_dbm,
                security_bitmap,
                max_aps,
            } => {
                let mut done = false;
                if let HsState::AwaitCaps { pending } = &mut self.conns[conn].hs {
                    pending.remove(&xid);
                    done = pending.is_empty();
                }
                if let Some(h) = self.conns[conn].handle.as_mut() {
                    h.wireless_phys_ports.insert(
                        phys_port,
                        CapsInfo {
                            versions_bitmap,
                            channels_bitmap,
                            tx_power_min_dbm,
                            tx_power_max_dbm,
                            security_bitmap,
                            max_aps,
                        },
                    );
                }
                if done {
                    out.extend(self.finish_handshake(conn));
                }
            }
            AetherMessage::WirelessError { code, .. } => {
                let mut done = false;
                if let HsState::AwaitCaps { pending } = &mut self.conns[conn].hs {
                    if pending.remove(&xid).is_some() {
                        done = pending.is_empty();
                    }
                }
                if done {
                    out.extend(self.finish_handshake(conn));
                } else if self.is_ready(conn) {
                    // an error reply leaves the view untouched
                    self.conns[conn].pending_stats.remove(&xid);
                    self.log.push(format!("conn {conn}: wireless error {code:?}"));
                    out.push(ControlEvent::WirelessError { conn, code });
                }
            }
            AetherMessage::EventReport {
                phys_port,
                logical_port,
                event,
                sta_mac,
                rssi_dbm,
                timestamp_us,
            } => {
                let Some(datapath_id) = self.conns[conn].handle.as_ref().map(|h| h.datapath_id)
                else {
                    self.log.push(format!("conn {conn}: event before handshake, dropped"));
                    return out;
                };
                let report = WirelessEvent {
                    phys_port,
                    logical_port,
                    kind: event,
                    sta_mac,
                    rssi_dbm,
                    timestamp_us,
                };
                self.view.on_event(datapath_id, &report);
                out.push(ControlEvent::Event { conn, datapath_id, report });
            }
            AetherMessage::LportStatsReply { logical_port, stations, .. } => {
                let Some(datapath_id) = self.conns[conn].handle.as_ref().map(|h| h.datapath_id)
                else {
                    return out;
                };
                self.conns[conn].pending_stats.remove(&xid);
                let now = self.now_us;
                for s in stations {
                    self.view.record_rssi(
                        s.mac,
                        datapath_id,
                        logical_port,
                        now,
                        s.rssi_current_dbm as f64,
                    );
                }
                out.push(ControlEvent::StatsMerged { conn, logical_port });
            }
            other => {
                self.log.push(format!(
                    "conn {conn}: unexpected experimenter subtype {}",
                    other.subtype()
                ));
            }
        }
        out
    }

    pub fn has_outbox(&self, conn: usize) -> bool {
        !self.conns[conn].outbox.is_empty()
    }

    pub fn take_outbox_bytes(&mut self, conn: usize) -> Vec<u8> {
        let mut bytes = Vec::new();
        for m in self.conns[conn].outbox.drain(..) {
            bytes.extend(wire::encode(&m).expect("controller messages always encodable"));
        }
        bytes
    }
}
