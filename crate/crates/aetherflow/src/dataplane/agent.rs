//! Switch agent: answers controller messages on behalf of a data plane and
//! reports wireless events upstream.

use super::{DataPlane, DpError, WirelessEvent};
use crate::wire::{
    self, AetherMessage, DecodeError, Message, MessageBody, WirelessErrorCode,
};

pub const OFPET_BAD_REQUEST: u16 = 1;
pub const OFPET_FLOW_MOD_FAILED: u16 = 5;

#[derive(Debug)]
pub struct Agent {
    pub dp: DataPlane,
    outbox: Vec<Message>,
    rx_buf: Vec<u8>,
    event_xid: u32,
}

impl Agent {
    pub fn new(dp: DataPlane) -> Self {
        Agent {
            dp,
            outbox: Vec::new(),
            rx_buf: Vec::new(),
            // Agent-initiated xids live in the upper half of the space so
            // they never collide with controller request xids.
            event_xid: 0x8000_0000,
        }
    }

    /// Queues the opening Hello.
    pub fn start(&mut self) {
        let xid = self.next_event_xid();
        self.outbox.push(Message::new(xid, MessageBody::Hello));
    }

    fn next_event_xid(&mut self) -> u32 {
        self.event_xid += 1;
        self.event_xid
    }

    /// Queues an EventReport for a wireless event raised by the data plane.
    pub fn push_event(&mut self, ev: WirelessEvent) {
        let xid = self.next_event_xid();
        self.outbox.push(Message::new(
            xid,
            MessageBody::Experimenter(AetherMessage::EventReport {
                phys_port: ev.phys_port,
                logical_port: ev.logical_port,
                event: ev.kind,
                sta_mac: ev.sta_mac,
                rssi_dbm: ev.rssi_dbm,
                timestamp_us: ev.timestamp_us,
            }),
        ));
    }

    pub fn push_wireless_error(&mut self, xid: u32, code: WirelessErrorCode, detail: &str) {
        self.outbox.push(Message::new(
            xid,
            MessageBody::Experimenter(AetherMessage::WirelessError {
                code,
                detail: detail.as_bytes().to_vec(),
            }),
        ));
    }

    fn reply_dp_error(&mut self, xid: u32, err: DpError) {
        match err.wireless_code() {
            Some(code) => self.push_wireless_error(xid, code, &err.to_string()),
            None => self.outbox.push(Message::new(
                xid,
                MessageBody::Error {
                    of_type: OFPET_FLOW_MOD_FAILED,
                    of_code: 0,
                    data: err.to_string().into_bytes(),
                },
            )),
        }
    }

    /// Feeds raw stream bytes; decodes complete frames and handles each
    /// message in order.
    pub fn dispatch_bytes(&mut self, bytes: &[u8]) -> Result<(), DecodeError> {
        self.rx_buf.extend_from_slice(bytes);
        let (frames, rest) = wire::frame_split(&self.rx_buf)?;
        self.rx_buf = rest;
        for f in frames {
            let msg = wire::decode(&f)?;
            self.handle_message(msg);
        }
        Ok(())
    }

    pub fn handle_message(&mut self, msg: Message) {
        let xid = msg.xid;
        match msg.body {
            MessageBody::Hello => {}
            MessageBody::EchoRequest => {
                self.outbox.push(Message::new(xid, MessageBody::EchoReply));
            }
            MessageBody::FeaturesRequest => {
                self.outbox.push(Message::new(
                    xid,
                    MessageBody::FeaturesReply {
                        datapath_id: self.dp.datapath_id,
                        n_ports: self.dp.n_ports(),
                    },
                ));
            }
            MessageBody::FlowMod(fm) => {
                if let Err(e) = self.dp.apply_flow_mod(&fm) {
                    self.reply_dp_error(xid, e);
                }
            }
            MessageBody::Experimenter(am) => self.handle_aether(xid, am),
            MessageBody::EchoReply | MessageBody::FeaturesReply { .. } | MessageBody::Error { .. } => {
                // Controller-to-switch direction never carries these.
                self.outbox.push(Message::new(
                    xid,
                    MessageBody::Error {
                        of_type: OFPET_BAD_REQUEST,
                        of_code: 0,
                        data: Vec::new(),
                    },
                ));
            }
        }
    }

    fn handle_aether(&mut self, xid: u32, am: AetherMessage) {
        match am {
            AetherMessage::LportStatsRequest { logical_port } => {
                match self.dp.collect_lport_stats(logical_port) {
                    Ok((counters, stations)) => self.outbox.push(Message::new(
                        xid,
                        MessageBody::Experimenter(AetherMessage::LportStatsReply {
                            logical_port,
                            counters,
                            stations,
                        }),
                    )),
                    Err(e) => self.reply_dp_error(xid, e),
                }
            }
            AetherMessage::PportConfigRequest { phys_port, dot11_version, channel, tx_power_dbm } => {
                if let Err(e) = self.dp.apply_pport_config(phys_port, dot11_version, channel, tx_power_dbm) {
                    self.reply_dp_error(xid, e);
                }
            }
            AetherMessage::LportConfigRequest { op, logical_port, phys_port, ssid, bssid, security } => {
                match self.dp.apply_lport_config(op, logical_port, phys_port, &ssid, bssid, security) {
                    Ok((_, events)) => {
                        for ev in events {
                            self.push_event(ev);
                        }
                    }
                    Err(e) => self.reply_dp_error(xid, e),
                }
            }
            AetherMessage::PportCapsRequest { phys_port } => match self.dp.get_pport_caps(phys_port) {
                Ok(port) => {
                    let caps = &port.caps;
                    self.outbox.push(Message::new(
                        xid,
                        MessageBody::Experimenter(AetherMessage::PportCapsReply {
                            phys_port,
                            versions_bitmap: caps.versions_bitmap,
                            channels_bitmap: caps.channels_bitmap,
                            tx_power_min_dbm: caps.tx_power_min_dbm,
                            tx_power_max_dbm: caps.tx_power_max_dbm,
                            security_bitmap: caps.security_bitmap,
                            max_aps: caps.max_aps,
                        }),
                    ));
                }
                Err(e) => self.reply_dp_error(xid, e),
            },
            AetherMessage::DropStation { logical_port, sta_mac } => {
                match self.dp.drop_station(logical_port, sta_mac) {
                    Ok(ev) => self.push_event(ev),
                    Err(e) => self.reply_dp_error(xid, e),
                }
            }
            AetherMessage::EventReport { .. }
            | AetherMessage::LportStatsReply { .. }
            | AetherMessage::PportCapsReply { .. }
            | AetherMessage::WirelessError { .. } => {
                self.outbox.push(Message::new(
                    xid,
                    MessageBody::Error {
                        of_type: OFPET_BAD_REQUEST,
                        of_code: 0,
                        data: Vec::new(),
                    },
                ));
            }
        }
    }

    pub fn has_outbox(&self) -> bool {
        !self.outbox.is_empty()
    }

    /// Drains queued messages as encoded wire bytes.
    pub fn take_outbox_bytes(&mut self) -> Vec<u8> {
        let mut out = Vec::new();
        for m in self.outbox.drain(..) {
            out.extend(wire::encode(&m).expect("agent messages always encodable"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataplane::{ForwardingMode, PportCaps, WirelessPhysicalPort};
    use crate::wire::{Dot11Version, Mac, SecurityMode};

    fn test_agent() -> Agent {
        let mut dp = DataPlane::new(2, ForwardingMode::Flow);
        dp.add_wired_port(1);
        dp.add_phys_port(WirelessPhysicalPort {
            port_id: 2,
            dot11_version: Dot11Version::G,
            channel: 6,
            tx_power_dbm: 20,
            caps: PportCaps {
                versions_bitmap: 0x07,
                channels_bitmap: 0x07FF,
                tx_power_min_dbm: 0,
                tx_power_max_dbm: 20,
                security_bitmap: 0x03,
                max_aps: 4,
            },
        });
        dp.apply_lport_config(
            crate::wire::LportOp::Create,
            0,
            2,
            "aether",
            Mac([2, 0, 0, 0, 1, 1]),
            SecurityMode::Open,
        )
        .unwrap();
        Agent::new(dp)
    }

    #[test]
    fn echo_and_features() {
        let mut agent = test_agent();
        agent.handle_message(Message::new(5, MessageBody::EchoRequest));
        agent.handle_message(Message::new(6, MessageBody::FeaturesRequest));
        let bytes = agent.take_outbox_bytes();
        let (frames, rest) = wire::frame_split(&bytes).unwrap();
        assert!(rest.is_empty());
        assert_eq!(wire::decode(&frames[0]).unwrap(), Message::new(5, MessageBody::EchoReply));
        assert_eq!(
            wire::decode(&frames[1]).unwrap(),
            Message::new(6, MessageBody::FeaturesReply { datapath_id: 2, n_ports: 3 })
        );
    }

    #[test]
    fn caps_request_on_non_phys_port_is_wireless_error() {
        let mut agent = test_agent();
        agent.handle_message(Message::new(
            9,
            MessageBody::Experimenter(AetherMessage::PportCapsRequest { phys_port: 1 }),
        ));
        let bytes = agent.take_outbox_bytes();
        let msg = wire::decode(&bytes).unwrap();
        assert!(matches!(
            msg.body,
            MessageBody::Experimenter(AetherMessage::WirelessError {
                code: WirelessErrorCode::InvalidPhysPort,
                ..
            })
        ));
        assert_eq!(msg.xid, 9);
    }
}
