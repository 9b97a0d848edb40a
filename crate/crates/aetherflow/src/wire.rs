//! Wire codec for the OpenFlow-1.3 subset and the wireless experimenter
//! messages.
//!
//! All records are big-endian and zero-padded to an 8-byte boundary. The
//! header `length` field always equals the total encoded size. `decode` is
//! the exact inverse of `encode` on encode's image, byte for byte.

use byteorder::{BigEndian, ByteOrder};
use std::fmt;
use thiserror::Error;

pub const OFP_VERSION: u8 = 0x04;
pub const HEADER_LEN: usize = 8;

/// Experimenter id carried by every wireless extension message. Foreign ids
/// decode to a distinct error so coexisting extensions stay distinguishable.
pub const AETHER_EXPERIMENTER_ID: u32 = 0xAE7A_F100;

/// Sentinel RSSI meaning "not applicable" (+127 dBm is physically impossible).
pub const RSSI_NOT_APPLICABLE: i8 = 0x7F;

pub const MSG_HELLO: u8 = 0;
pub const MSG_ERROR: u8 = 1;
pub const MSG_ECHO_REQUEST: u8 = 2;
pub const MSG_ECHO_REPLY: u8 = 3;
pub const MSG_EXPERIMENTER: u8 = 4;
pub const MSG_FEATURES_REQUEST: u8 = 5;
pub const MSG_FEATURES_REPLY: u8 = 6;
pub const MSG_FLOW_MOD: u8 = 14;

/// 48-bit MAC address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Mac(pub [u8; 6]);

impl fmt::Debug for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl serde::Serialize for Mac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Mac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Mac {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("bad MAC {s:?}: expected six colon-separated octets"));
        }
        for (i, p) in parts.iter().enumerate() {
            out[i] = u8::from_str_radix(p, 16).map_err(|_| format!("bad MAC octet {p:?}"))?;
        }
        Ok(Mac(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WirelessEventKind {
    Probe = 0,
    Authentication = 1,
    Deauthentication = 2,
    Association = 3,
    Reassociation = 4,
    Disassociation = 5,
    Authorization = 6,
}

impl WirelessEventKind {
    pub fn from_wire(v: u8) -> Option<Self> {
        use WirelessEventKind::*;
        Some(match v {
            0 => Probe,
            1 => Authentication,
            2 => Deauthentication,
            3 => Association,
            4 => Reassociation,
            5 => Disassociation,
            6 => Authorization,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dot11Version {
    B = 0,
    G = 1,
    N = 2,
}

impl Dot11Version {
    pub fn from_wire(v: u8) -> Option<Self> {
        Some(match v {
            0 => Dot11Version::B,
            1 => Dot11Version::G,
            2 => Dot11Version::N,
            _ => return None,
        })
    }

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecurityMode {
    Open = 0,
    Wpa2Psk = 1,
}

impl SecurityMode {
    pub fn from_wire(v: u8) -> Option<Self> {
        Some(match v {
            0 => SecurityMode::Open,
            1 => SecurityMode::Wpa2Psk,
            _ => return None,
        })
    }

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LportOp {
    Create = 0,
    Modify = 1,
    Delete = 2,
}

impl LportOp {
    pub fn from_wire(v: u8) -> Option<Self> {
        Some(match v {
            0 => LportOp::Create,
            1 => LportOp::Modify,
            2 => LportOp::Delete,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WirelessErrorCode {
    InvalidChannel = 0,
    InvalidPhysPort = 1,
    InvalidLogicalPort = 2,
    TooManyAps = 3,
    UnknownStation = 4,
    UnsupportedVersion = 5,
}

impl WirelessErrorCode {
    pub fn from_wire(v: u8) -> Option<Self> {
        use WirelessErrorCode::*;
        Some(match v {
            0 => InvalidChannel,
            1 => InvalidPhysPort,
            2 => InvalidLogicalPort,
            3 => TooManyAps,
            4 => UnknownStation,
            5 => UnsupportedVersion,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowModCommand {
    Add = 0,
    Modify = 1,
    DeleteStrict = 2,
}

impl FlowModCommand {
    pub fn from_wire(v: u8) -> Option<Self> {
        Some(match v {
            0 => FlowModCommand::Add,
            1 => FlowModCommand::Modify,
            2 => FlowModCommand::DeleteStrict,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct MatchSet {
    pub in_port: Option<u32>,
    pub eth_dst: Option<Mac>,
}

impl MatchSet {
    pub fn eth_dst(mac: Mac) -> Self {
        MatchSet {
            in_port: None,
            eth_dst: Some(mac),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.in_port.is_none() && self.eth_dst.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Output(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowModBody {
    pub command: FlowModCommand,
    pub priority: u16,
    pub idle_timeout_s: u16,
    pub hard_timeout_s: u16,
    pub match_set: MatchSet,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StationStats {
    pub mac: Mac,
    pub rssi_current_dbm: i8,
    pub rssi_avg_dbm: i8,
    pub connected_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LportCounters {
    pub tx_pkts: u64,
    pub rx_pkts: u64,
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub retries: u64,
    pub retry_failures: u64,
}

/// The nine wireless experimenter messages, subtype 0-8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AetherMessage {
    EventReport {
        phys_port: u32,
        logical_port: u32,
        event: WirelessEventKind,
        sta_mac: Mac,
        rssi_dbm: i8,
        timestamp_us: u64,
    },
    LportStatsRequest {
        logical_port: u32,
    },
    LportStatsReply {
        logical_port: u32,
        counters: LportCounters,
        stations: Vec<StationStats>,
    },
    PportConfigRequest {
        phys_port: u32,
        dot11_version: Dot11Version,
        channel: u8,
        tx_power_dbm: i8,
    },
    LportConfigRequest {
        op: LportOp,
        logical_port: u32,
        phys_port: u32,
        ssid: String,
        bssid: Mac,
        security: SecurityMode,
    },
    PportCapsRequest {
        phys_port: u32,
    },
    PportCapsReply {
        phys_port: u32,
        versions_bitmap: u8,
        channels_bitmap: u16,
        tx_power_min_dbm: i8,
        tx_power_max_dbm: i8,
        security_bitmap: u8,
        max_aps: u8,
    },
    DropStation {
        logical_port: u32,
        sta_mac: Mac,
    },
    WirelessError {
        code: WirelessErrorCode,
        detail: Vec<u8>,
    },
}

impl AetherMessage {
    pub fn subtype(&self) -> u16 {
        use AetherMessage::*;
        match self {
            EventReport { .. } => 0,
            LportStatsRequest { .. } => 1,
            LportStatsReply { .. } => 2,
            PportConfigRequest { .. } => 3,
            LportConfigRequest { .. } => 4,
            PportCapsRequest { .. } => 5,
            PportCapsReply { .. } => 6,
            DropStation { .. } => 7,
            WirelessError { .. } => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    Hello,
    EchoRequest,
    EchoReply,
    FeaturesRequest,
    FeaturesReply { datapath_id: u64, n_ports: u32 },
    FlowMod(FlowModBody),
    Error { of_type: u16, of_code: u16, data: Vec<u8> },
    Experimenter(AetherMessage),
}

impl MessageBody {
    pub fn type_code(&self) -> u8 {
        match self {
            MessageBody::Hello => MSG_HELLO,
            MessageBody::Error { .. } => MSG_ERROR,
            MessageBody::EchoRequest => MSG_ECHO_REQUEST,
            MessageBody::EchoReply => MSG_ECHO_REPLY,
            MessageBody::Experimenter(_) => MSG_EXPERIMENTER,
            MessageBody::FeaturesRequest => MSG_FEATURES_REQUEST,
            MessageBody::FeaturesReply { .. } => MSG_FEATURES_REPLY,
            MessageBody::FlowMod(_) => MSG_FLOW_MOD,
        }
    }
}

/// One protocol message: header xid plus typed body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub xid: u32,
    pub body: MessageBody,
}

impl Message {
    pub fn new(xid: u32, body: MessageBody) -> Self {
        Message { xid, body }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("list field {field} has {len} elements, exceeds 16-bit length")]
    ListTooLong { field: &'static str, len: usize },
    #[error("ssid is {len} bytes, maximum is 32")]
    SsidTooLong { len: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated while reading {field}: need {need} bytes, have {have}")]
    Truncated {
        field: &'static str,
        need: usize,
        have: usize,
    },
    #[error("bad protocol version {got:#04x}, expected 0x04")]
    BadVersion { got: u8 },
    #[error("unknown message type {got}")]
    UnknownType { got: u8 },
    #[error("unknown experimenter subtype {subtype}")]
    UnknownSubtype { subtype: u16 },
    #[error("foreign experimenter id {id:#010x}")]
    ForeignExperimenter { id: u32 },
    #[error("bad length for {field}: expected {expected}, got {got}")]
    BadLength {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("bad value {value} in field {field}")]
    BadValue { field: &'static str, value: u64 },
}

fn pad_to_8(buf: &mut Vec<u8>) {
    while !buf.len().is_multiple_of(8) {
        buf.push(0);
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::with_capacity(64) }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn i8(&mut self, v: i8) {
        self.buf.push(v as u8);
    }

    fn u16(&mut self, v: u16) {
        let mut b = [0u8; 2];
        BigEndian::write_u16(&mut b, v);
        self.buf.extend_from_slice(&b);
    }

    fn u32(&mut self, v: u32) {
        let mut b = [0u8; 4];
        BigEndian::write_u32(&mut b, v);
        self.buf.extend_from_slice(&b);
    }

    fn u64(&mut self, v: u64) {
        let mut b = [0u8; 8];
        BigEndian::write_u64(&mut b, v);
        self.buf.extend_from_slice(&b);
    }

    fn mac(&mut self, m: Mac) {
        self.buf.extend_from_slice(&m.0);
    }

    fn pad(&mut self, n: usize) {
        self.buf.extend(std::iter::repeat_n(0u8, n));
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn need(&self, field: &'static str, n: usize) -> Result<(), DecodeError> {
        if self.pos + n > self.buf.len() {
            Err(DecodeError::Truncated {
                field,
                need: n,
                have: self.buf.len() - self.pos,
            })
        } else {
            Ok(())
        }
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, DecodeError> {
        self.need(field, 1)?;
        let v = self.buf[self.pos];
        self.pos += 1;
        Ok(v)
    }

    fn i8(&mut self, field: &'static str) -> Result<i8, DecodeError> {
        Ok(self.u8(field)? as i8)
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, DecodeError> {
        self.need(field, 2)?;
        let v = BigEndian::read_u16(&self.buf[self.pos..]);
        self.pos += 2;
        Ok(v)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, DecodeError> {
        self.need(field, 4)?;
        let v = BigEndian::read_u32(&self.buf[self.pos..]);
        self.pos += 4;
        Ok(v)
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, DecodeError> {
        self.need(field, 8)?;
        let v = BigEndian::read_u64(&self.buf[self.pos..]);
        self.pos += 8;
        Ok(v)
    }

    fn mac(&mut self, field: &'static str) -> Result<Mac, DecodeError> {
        self.need(field, 6)?;
        let mut m = [0u8; 6];
        m.copy_from_slice(&self.buf[self.pos..self.pos + 6]);
        self.pos += 6;
        Ok(Mac(m))
    }

    fn skip(&mut self, field: &'static str, n: usize) -> Result<(), DecodeError> {
        self.need(field, n)?;
        self.pos += n;
        Ok(())
    }

    fn take(&mut self, field: &'static str, n: usize) -> Result<&'a [u8], DecodeError> {
        self.need(field, n)?;
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer::new();
    // Header placeholder; length patched at the end.
    w.u8(OFP_VERSION);
    w.u8(msg.body.type_code());
    w.u16(0);
    w.u32(msg.xid);

    match &msg.body {
        MessageBody::Hello
        | MessageBody::EchoRequest
        | MessageBody::EchoReply
        | MessageBody::FeaturesRequest => {}
        MessageBody::FeaturesReply { datapath_id, n_ports } => {
            w.u64(*datapath_id);
            w.u32(*n_ports);
            w.pad(4);
        }
        MessageBody::Error { of_type, of_code, data } => {
            if data.len() > u16::MAX as usize {
                return Err(EncodeError::ListTooLong { field: "error.data", len: data.len() });
            }
            w.u16(*of_type);
            w.u16(*of_code);
            w.u16(data.len() as u16);
            w.pad(2);
            w.bytes(data);
            pad_to_8(&mut w.buf);
        }
        MessageBody::FlowMod(fm) => {
            if fm.actions.len() > u16::MAX as usize {
                return Err(EncodeError::ListTooLong {
                    field: "flow_mod.actions",
                    len: fm.actions.len(),
                });
            }
            w.u8(fm.command as u8);
            w.u8(0);
            w.u16(fm.priority);
            w.u16(fm.idle_timeout_s);
            w.u16(fm.hard_timeout_s);
            // Match block: presence flags, in_port, eth_dst.
            let mut flags = 0u8;
            if fm.match_set.in_port.is_some() {
                flags |= 1;
            }
            if fm.match_set.eth_dst.is_some() {
                flags |= 2;
            }
            w.u8(flags);
            w.pad(3);
            w.u32(fm.match_set.in_port.unwrap_or(0));
            w.mac(fm.match_set.eth_dst.unwrap_or_default());
            w.pad(2);
            w.u16(fm.actions.len() as u16);
            w.pad(6);
            for a in &fm.actions {
                match a {
                    Action::Output(port) => {
                        w.u16(0); // action type: output
                        w.u16(8); // action len
                        w.u32(*port);
                    }
                }
            }
        }
        MessageBody::Experimenter(am) => {
            w.u32(AETHER_EXPERIMENTER_ID);
            w.u16(am.subtype());
            w.pad(2);
            encode_aether(&mut w, am)?;
        }
    }

    pad_to_8(&mut w.buf);
    debug_assert!(w.buf.len() <= u16::MAX as usize);
    let len = w.buf.len() as u16;
    BigEndian::write_u16(&mut w.buf[2..4], len);
    Ok(w.buf)
}

fn encode_aether(w: &mut Writer, am: &AetherMessage) -> Result<(), EncodeError> {
    use AetherMessage::*;
    match am {
        EventReport { phys_port, logical_port, event, sta_mac, rssi_dbm, timestamp_us } => {
            w.u32(*phys_port);
            w.u32(*logical_port);
            w.u8(*event as u8);
            w.mac(*sta_mac);
            w.i8(*rssi_dbm);
            w.u64(*timestamp_us);
        }
        LportStatsRequest { logical_port } => {
            w.u32(*logical_port);
            w.pad(4);
        }
        LportStatsReply { logical_port, counters, stations } => {
            if stations.len() > u16::MAX as usize {
                return Err(EncodeError::ListTooLong {
                    field: "lport_stats.stations",
                    len: stations.len(),
                });
            }
            w.u32(*logical_port);
            w.u16(stations.len() as u16);
            w.pad(2);
            w.u64(counters.tx_pkts);
            w.u64(counters.rx_pkts);
            w.u64(counters.tx_bytes);
            w.u64(counters.rx_bytes);
            w.u64(counters.retries);
            w.u64(counters.retry_failures);
            for s in stations {
                w.mac(s.mac);
                w.i8(s.rssi_current_dbm);
                w.i8(s.rssi_avg_dbm);
                w.u64(s.connected_ms);
            }
        }
        PportConfigRequest { phys_port, dot11_version, channel, tx_power_dbm } => {
            w.u32(*phys_port);
            w.u8(*dot11_version as u8);
            w.u8(*channel);
            w.i8(*tx_power_dbm);
            w.pad(1);
        }
        LportConfigRequest { op, logical_port, phys_port, ssid, bssid, security } => {
            let ssid_bytes = ssid.as_bytes();
            if ssid_bytes.len() > 32 {
                return Err(EncodeError::SsidTooLong { len: ssid_bytes.len() });
            }
            w.u8(*op as u8);
            w.pad(3);
            w.u32(*logical_port);
            w.u32(*phys_port);
            w.u8(*security as u8);
            w.pad(3);
            w.bytes(ssid_bytes);
            w.pad(32 - ssid_bytes.len());
            w.mac(*bssid);
            w.pad(2);
        }
        PportCapsRequest { phys_port } => {
            w.u32(*phys_port);
            w.pad(4);
        }
        PportCapsReply {
            phys_port,
            versions_bitmap,
            channels_bitmap,
            tx_power_min_dbm,
            tx_power_max_dbm,
            security_bitmap,
            max_aps,
        } => {
            w.u32(*phys_port);
            w.u8(*versions_bitmap);
            w.u8(*security_bitmap);
            w.u8(*max_aps);
            w.pad(1);
            w.u16(*channels_bitmap);
            w.i8(*tx_power_min_dbm);
            w.i8(*tx_power_max_dbm);
            w.pad(4);
        }
        DropStation { logical_port, sta_mac } => {
            w.u32(*logical_port);
            w.mac(*sta_mac);
            w.pad(6);
        }
        WirelessError { code, detail } => {
            if detail.len() > u16::MAX as usize {
                return Err(EncodeError::ListTooLong {
                    field: "wireless_error.detail",
                    len: detail.len(),
                });
            }
            w.u8(*code as u8);
            w.u8(0);
            w.u16(detail.len() as u16);
            w.pad(4);
            w.bytes(detail);
        }
    }
    Ok(())
}

pub fn decode(buf: &[u8]) -> Result<Message, DecodeError> {
    if buf.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            field: "header",
            need: HEADER_LEN,
            have: buf.len(),
        });
    }
    let version = buf[0];
    if version != OFP_VERSION {
        return Err(DecodeError::BadVersion { got: version });
    }
    let type_code = buf[1];
    let length = BigEndian::read_u16(&buf[2..4]) as usize;
    let xid = BigEndian::read_u32(&buf[4..8]);
    if !length.is_multiple_of(8) || length < HEADER_LEN {
        return Err(DecodeError::BadLength {
            field: "header.length",
            expected: HEADER_LEN,
            got: length,
        });
    }
    if buf.len() < length {
        return Err(DecodeError::Truncated {
            field: "body",
            need: length,
            have: buf.len(),
        });
    }
    // Never read past the declared length.
    let mut r = Reader::new(&buf[HEADER_LEN..length]);

    let body = match type_code {
        MSG_HELLO => MessageBody::Hello,
        MSG_ECHO_REQUEST => MessageBody::EchoRequest,
        MSG_ECHO_REPLY => MessageBody::EchoReply,
        MSG_FEATURES_REQUEST => MessageBody::FeaturesRequest,
        MSG_FEATURES_REPLY => {
            let datapath_id = r.u64("features_reply.datapath_id")?;
            let n_ports = r.u32("features_reply.n_ports")?;
            r.skip("features_reply.pad", 4)?;
            MessageBody::FeaturesReply { datapath_id, n_ports }
        }
        MSG_ERROR => {
            let of_type = r.u16("error.of_type")?;
            let of_code = r.u16("error.of_code")?;
            let data_len = r.u16("error.data_len")? as usize;
            r.skip("error.pad", 2)?;
            let data = r.take("error.data", data_len)?.to_vec();
            MessageBody::Error { of_type, of_code, data }
        }
        MSG_FLOW_MOD => {
            let cmd = r.u8("flow_mod.command")?;
            let command = FlowModCommand::from_wire(cmd).ok_or(DecodeError::BadValue {
                field: "flow_mod.command",
                value: cmd as u64,
            })?;
            r.skip("flow_mod.pad", 1)?;
            let priority = r.u16("flow_mod.priority")?;
            let idle_timeout_s = r.u16("flow_mod.idle_timeout")?;
            let hard_timeout_s = r.u16("flow_mod.hard_timeout")?;
            let flags = r.u8("flow_mod.match_flags")?;
            if flags & !3 != 0 {
                return Err(DecodeError::BadValue {
                    field: "flow_mod.match_flags",
                    value: flags as u64,
                });
            }
            r.skip("flow_mod.match_pad", 3)?;
            let in_port = r.u32("flow_mod.in_port")?;
            let eth_dst = r.mac("flow_mod.eth_dst")?;
            r.skip("flow_mod.match_pad2", 2)?;
            let n_actions = r.u16("flow_mod.n_actions")? as usize;
            r.skip("flow_mod.actions_pad", 6)?;
            let mut actions = Vec::with_capacity(n_actions);
            for _ in 0..n_actions {
                let atype = r.u16("action.type")?;
                if atype != 0 {
                    return Err(DecodeError::BadValue {
                        field: "action.type",
                        value: atype as u64,
                    });
                }
                let alen = r.u16("action.len")?;
                if alen != 8 {
                    return Err(DecodeError::BadLength {
                        field: "action.len",
                        expected: 8,
                        got: alen as usize,
                    });
                }
                actions.push(Action::Output(r.u32("action.port")?));
            }
            MessageBody::FlowMod(FlowModBody {
                command,
                priority,
                idle_timeout_s,
                hard_timeout_s,
                match_set: MatchSet {
                    in_port: if flags & 1 != 0 { Some(in_port) } else { None },
                    eth_dst: if flags & 2 != 0 { Some(eth_dst) } else { None },
                },
                actions,
            })
        }
        MSG_EXPERIMENTER => {
            let exp_id = r.u32("experimenter.id")?;
            if exp_id != AETHER_EXPERIMENTER_ID {
                return Err(DecodeError::ForeignExperimenter { id: exp_id });
            }
            let subtype = r.u16("experimenter.subtype")?;
            r.skip("experimenter.pad", 2)?;
            MessageBody::Experimenter(decode_aether(&mut r, subtype)?)
        }
        other => return Err(DecodeError::UnknownType { got: other }),
    };

    Ok(Message { xid, body })
}

fn decode_aether(r: &mut Reader<'_>, subtype: u16) -> Result<AetherMessage, DecodeError> {
    Ok(match subtype {
        0 => {
            let phys_port = r.u32("event.phys_port")?;
            let logical_port = r.u32("event.logical_port")?;
            let ev = r.u8("event.kind")?;
            let event = WirelessEventKind::from_wire(ev).ok_or(DecodeError::BadValue {
                field: "event.kind",
                value: ev as u64,
            })?;
            let sta_mac = r.mac("event.sta_mac")?;
            let rssi_dbm = r.i8("event.rssi")?;
            let timestamp_us = r.u64("event.timestamp")?;
            AetherMessage::EventReport {
                phys_port,
                logical_port,
                event,
                sta_mac,
                rssi_dbm,
                timestamp_us,
            }
        }
        1 => {
            let logical_port = r.u32("lport_stats_req.lport")?;
            r.skip("lport_stats_req.pad", 4)?;
            AetherMessage::LportStatsRequest { logical_port }
        }
        2 => {
            let logical_port = r.u32("lport_stats.lport")?;
            let n = r.u16("lport_stats.n_stations")? as usize;
            r.skip("lport_stats.pad", 2)?;
            let counters = LportCounters {
                tx_pkts: r.u64("lport_stats.tx_pkts")?,
                rx_pkts: r.u64("lport_stats.rx_pkts")?,
                tx_bytes: r.u64("lport_stats.tx_bytes")?,
                rx_bytes: r.u64("lport_stats.rx_bytes")?,
                retries: r.u64("lport_stats.retries")?,
                retry_failures: r.u64("lport_stats.retry_failures")?,
            };
            let mut stations = Vec::with_capacity(n);
            for _ in 0..n {
                stations.push(StationStats {
                    mac: r.mac("station.mac")?,
                    rssi_current_dbm: r.i8("station.rssi_current")?,
                    rssi_avg_dbm: r.i8("station.rssi_avg")?,
                    connected_ms: r.u64("station.connected_ms")?,
                });
            }
            AetherMessage::LportStatsReply { logical_port, counters, stations }
        }
        3 => {
            let phys_port = r.u32("pport_config.phys_port")?;
            let v = r.u8("pport_config.version")?;
            let dot11_version = Dot11Version::from_wire(v).ok_or(DecodeError::BadValue {
                field: "pport_config.version",
                value: v as u64,
            })?;
            let channel = r.u8("pport_config.channel")?;
            let tx_power_dbm = r.i8("pport_config.tx_power")?;
            r.skip("pport_config.pad", 1)?;
            AetherMessage::PportConfigRequest { phys_port, dot11_version, channel, tx_power_dbm }
        }
        4 => {
            let opv = r.u8("lport_config.op")?;
            let op = LportOp::from_wire(opv).ok_or(DecodeError::BadValue {
                field: "lport_config.op",
                value: opv as u64,
            })?;
            r.skip("lport_config.pad", 3)?;
            let logical_port = r.u32("lport_config.lport")?;
            let phys_port = r.u32("lport_config.phys_port")?;
            let secv = r.u8("lport_config.security")?;
            let security = SecurityMode::from_wire(secv).ok_or(DecodeError::BadValue {
                field: "lport_config.security",
                value: secv as u64,
            })?;
            r.skip("lport_config.pad2", 3)?;
            let raw_ssid = r.take("lport_config.ssid", 32)?;
            let end = raw_ssid.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
            let ssid = String::from_utf8(raw_ssid[..end].to_vec()).map_err(|_| {
                DecodeError::BadValue { field: "lport_config.ssid", value: 0 }
            })?;
            let bssid = r.mac("lport_config.bssid")?;
            r.skip("lport_config.pad3", 2)?;
            AetherMessage::LportConfigRequest { op, logical_port, phys_port, ssid, bssid, security }
        }
        5 => {
            let phys_port = r.u32("pport_caps_req.phys_port")?;
            r.skip("pport_caps_req.pad", 4)?;
            AetherMessage::PportCapsRequest { phys_port }
        }
        6 => {
            let phys_port = r.u32("pport_caps.phys_port")?;
            let versions_bitmap = r.u8("pport_caps.versions")?;
            let security_bitmap = r.u8("pport_caps.security")?;
            let max_aps = r.u8("pport_caps.max_aps")?;
            r.skip("pport_caps.pad", 1)?;
            let channels_bitmap = r.u16("pport_caps.channels")?;
            let tx_power_min_dbm = r.i8("pport_caps.tx_min")?;
            let tx_power_max_dbm = r.i8("pport_caps.tx_max")?;
            r.skip("pport_caps.pad2", 4)?;
            AetherMessage::PportCapsReply {
                phys_port,
                versions_bitmap,
                channels_bitmap,
                tx_power_min_dbm,
                tx_power_max_dbm,
                security_bitmap,
                max_aps,
            }
        }
        7 => {
            let logical_port = r.u32("drop_station.lport")?;
            let sta_mac = r.mac("drop_station.mac")?;
            r.skip("drop_station.pad", 6)?;
            AetherMessage::DropStation { logical_port, sta_mac }
        }
        8 => {
            let c = r.u8("wireless_error.code")?;
            let code = WirelessErrorCode::from_wire(c).ok_or(DecodeError::BadValue {
                field: "wireless_error.code",
                value: c as u64,
            })?;
            r.skip("wireless_error.pad", 1)?;
            let detail_len = r.u16("wireless_error.detail_len")? as usize;
            r.skip("wireless_error.pad2", 4)?;
            let detail = r.take("wireless_error.detail", detail_len)?.to_vec();
            AetherMessage::WirelessError { code, detail }
        }
        other => return Err(DecodeError::UnknownSubtype { subtype: other }),
    })
}

/// Splits a stream buffer into complete message frames plus the trailing
/// partial remainder. Safe to call incrementally with arbitrary chunking.
pub fn frame_split(stream: &[u8]) -> Result<(Vec<Vec<u8>>, Vec<u8>), DecodeError> {
    let mut msgs = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &stream[pos..];
        if rest.len() < HEADER_LEN {
            return Ok((msgs, rest.to_vec()));
        }
        if rest[0] != OFP_VERSION {
            return Err(DecodeError::BadVersion { got: rest[0] });
        }
        let length = BigEndian::read_u16(&rest[2..4]) as usize;
        if length < HEADER_LEN {
            return Err(DecodeError::BadLength {
                field: "header.length",
                expected: HEADER_LEN,
                got: length,
            });
        }
        if rest.len() < length {
            return Ok((msgs, rest.to_vec()));
        }
        msgs.push(rest[..length].to_vec());
        pos += length;
    }
}

/// One-line human-readable rendering: `<xid> <TYPE> key=value ...`
pub fn dump(msg: &Message) -> String {
    use MessageBody::*;
    let xid = msg.xid;
    match &msg.body {
        Hello => format!("{xid} HELLO"),
        EchoRequest => format!("{xid} ECHO_REQUEST"),
        EchoReply => format!("{xid} ECHO_REPLY"),
        FeaturesRequest => format!("{xid} FEATURES_REQUEST"),
        FeaturesReply { datapath_id, n_ports } => {
            format!("{xid} FEATURES_REPLY datapath_id={datapath_id:#018x} n_ports={n_ports}")
        }
        Error { of_type, of_code, data } => {
            format!("{xid} ERROR type={of_type} code={of_code} data_len={}", data.len())
        }
        FlowMod(fm) => {
            let m = &fm.match_set;
            let in_port = m.in_port.map_or("-".to_string(), |p| p.to_string());
            let eth_dst = m.eth_dst.map_or("-".to_string(), |d| d.to_string());
            let actions: Vec<String> = fm
                .actions
                .iter()
                .map(|Action::Output(p)| format!("Output({p})"))
                .collect();
            format!(
                "{xid} FLOW_MOD command={:?} priority={} idle={} hard={} in_port={in_port} eth_dst={eth_dst} actions=[{}]",
                fm.command,
                fm.priority,
                fm.idle_timeout_s,
                fm.hard_timeout_s,
                actions.join(",")
            )
        }
        Experimenter(am) => {
            use AetherMessage::*;
            match am {
                EventReport { phys_port, logical_port, event, sta_mac, rssi_dbm, timestamp_us } => {
                    format!(
                        "{xid} EVENT_REPORT phys={phys_port} lport={logical_port} event={event:?} sta={sta_mac} rssi={rssi_dbm} t_us={timestamp_us}"
                    )
                }
                LportStatsRequest { logical_port } => {
                    format!("{xid} LPORT_STATS_REQUEST lport={logical_port}")
                }
                LportStatsReply { logical_port, counters, stations } => {
                    format!(
                        "{xid} LPORT_STATS_REPLY lport={logical_port} tx_pkts={} rx_pkts={} tx_bytes={} rx_bytes={} retries={} retry_failures={} stations={}",
                        counters.tx_pkts,
                        counters.rx_pkts,
                        counters.tx_bytes,
                        counters.rx_bytes,
                        counters.retries,
                        counters.retry_failures,
                        stations.len()
                    )
                }
                PportConfigRequest { phys_port, dot11_version, channel, tx_power_dbm } => {
                    format!(
                        "{xid} PPORT_CONFIG_REQUEST phys={phys_port} version={dot11_version:?} channel={channel} tx_power={tx_power_dbm}"
                    )
                }
                LportConfigRequest { op, logical_port, phys_port, ssid, bssid, security } => {
                    format!(
                        "{xid} LPORT_CONFIG_REQUEST op={op:?} lport={logical_port} phys={phys_port} ssid={ssid:?} bssid={bssid} security={security:?}"
                    )
                }
                PportCapsRequest { phys_port } => {
                    format!("{xid} PPORT_CAPS_REQUEST phys={phys_port}")
                }
                PportCapsReply {
                    phys_port,
                    versions_bitmap,
                    channels_bitmap,
                    tx_power_min_dbm,
                    tx_power_max_dbm,
                    security_bitmap,
                    max_aps,
                } => {
                    format!(
                        "{xid} PPORT_CAPS_REPLY phys={phys_port} versions={versions_bitmap:#04x} channels={channels_bitmap:#06x} tx_power=[{tx_power_min_dbm},{tx_power_max_dbm}] security={security_bitmap:#04x} max_aps={max_aps}"
                    )
                }
                DropStation { logical_port, sta_mac } => {
                    format!("{xid} DROP_STATION lport={logical_port} sta={sta_mac}")
                }
                WirelessError { code, detail } => {
                    format!("{xid} WIRELESS_ERROR code={code:?} detail_len={}", detail.len())
                }
            }
        }
    }
}
