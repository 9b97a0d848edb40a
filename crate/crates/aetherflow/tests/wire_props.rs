//! Property tests for the wire codec: round-trip identity and stream
//! reassembly under arbitrary chunking.

use aetherflow::wire::{
    self, Action, AetherMessage, Dot11Version, FlowModBody, FlowModCommand, LportCounters,
    LportOp, Mac, MatchSet, Message, MessageBody, SecurityMode, StationStats, WirelessErrorCode,
    WirelessEventKind,
};
use proptest::prelude::*;

fn mac_strategy() -> impl Strategy<Value = Mac> {
    any::<[u8; 6]>().prop_map(Mac)
}

fn event_kind() -> impl Strategy<Value = WirelessEventKind> {
    prop_oneof![
        Just(WirelessEventKind::Probe),
        Just(WirelessEventKind::Authentication),
        Just(WirelessEventKind::Deauthentication),
        Just(WirelessEventKind::Association),
        Just(WirelessEventKind::Reassociation),
        Just(WirelessEventKind::Disassociation),
        Just(WirelessEventKind::Authorization),
    ]
}

fn match_set() -> impl Strategy<Value = MatchSet> {
    (any::<Option<u32>>(), proptest::option::of(mac_strategy()))
        .prop_map(|(in_port, eth_dst)| MatchSet { in_port, eth_dst })
}

fn flow_mod() -> impl Strategy<Value = FlowModBody> {
    (
        prop_oneof![
            Just(FlowModCommand::Add),
            Just(FlowModCommand::Modify),
            Just(FlowModCommand::DeleteStrict)
        ],
        any::<u16>(),
        any::<u16>(),
        any::<u16>(),
        match_set(),
        proptest::collection::vec(any::<u32>().prop_map(Action::Output), 0..8),
    )
        .prop_map(|(command, priority, idle_timeout_s, hard_timeout_s, match_set, actions)| {
            FlowModBody { command, priority, idle_timeout_s, hard_timeout_s, match_set, actions }
        })
}

fn station_stats() -> impl Strategy<Value = StationStats> {
    (mac_strategy(), any::<i8>(), any::<i8>(), any::<u64>()).prop_map(
        |(mac, rssi_current_dbm, rssi_avg_dbm, connected_ms)| StationStats {
            mac,
            rssi_current_dbm,
            rssi_avg_dbm,
            connected_ms,
        },
    )
}

fn aether_message() -> impl Strategy<Value = AetherMessage> {
    prop_oneof![
        (any::<u32>(), any::<u32>(), event_kind(), mac_strategy(), any::<i8>(), any::<u64>())
            .prop_map(|(phys_port, logical_port, event, sta_mac, rssi_dbm, timestamp_us)| {
                AetherMessage::EventReport {
                    phys_port,
                    logical_port,
                    event,
                    sta_mac,
                    rssi_dbm,
                    timestamp_us,
                }
            }),
        any::<u32>().prop_map(|logical_port| AetherMessage::LportStatsRequest { logical_port }),
        (
            any::<u32>(),
            any::<[u64; 6]>(),
            proptest::collection::vec(station_stats(), 0..6)
        )
            .prop_map(|(logical_port, c, stations)| AetherMessage::LportStatsReply {
                logical_port,
                counters: LportCounters {
                    tx_pkts: c[0],
                    rx_pkts: c[1],
                    tx_bytes: c[2],
                    rx_bytes: c[3],
                    retries: c[4],
                    retry_failures: c[5],
                },
                stations,
            }),
        (
            any::<u32>(),
            prop_oneof![Just(Dot11Version::B), Just(Dot11Version::G), Just(Dot11Version::N)],
            any::<u8>(),
            any::<i8>()
        )
            .prop_map(|(phys_port, dot11_version, channel, tx_power_dbm)| {
                AetherMessage::PportConfigRequest { phys_port, dot11_version, channel, tx_power_dbm }
            }),
        (
            prop_oneof![Just(LportOp::Create), Just(LportOp::Modify), Just(LportOp::Delete)],
            any::<u32>(),
            any::<u32>(),
            "[ -~]{0,32}",
            mac_strategy(),
            prop_oneof![Just(SecurityMode::Open), Just(SecurityMode::Wpa2Psk)]
        )
            .prop_map(|(op, logical_port, phys_port, ssid, bssid, security)| {
                AetherMessage::LportConfigRequest { op, logical_port, phys_port, ssid, bssid, security }
            }),
        any::<u32>().prop_map(|phys_port| AetherMessage::PportCapsRequest { phys_port }),
        (any::<u32>(), any::<u8>(), any::<u16>(), any::<i8>(), any::<i8>(), any::<u8>(), any::<u8>())
            .prop_map(
                |(phys_port, versions_bitmap, channels_bitmap, tx_power_min_dbm, tx_power_max_dbm, security_bitmap, max_aps)| {
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
            ),
        (any::<u32>(), mac_strategy())
            .prop_map(|(logical_port, sta_mac)| AetherMessage::DropStation { logical_port, sta_mac }),
        (
            prop_oneof![
                Just(WirelessErrorCode::InvalidChannel),
                Just(WirelessErrorCode::InvalidPhysPort),
                Just(WirelessErrorCode::InvalidLogicalPort),
                Just(WirelessErrorCode::TooManyAps),
                Just(WirelessErrorCode::UnknownStation),
                Just(WirelessErrorCode::UnsupportedVersion)
            ],
            proptest::collection::vec(any::<u8>(), 0..64)
        )
            .prop_map(|(code, detail)| AetherMessage::WirelessError { code, detail }),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    (
        any::<u32>(),
        prop_oneof![
            Just(MessageBody::Hello),
            Just(MessageBody::EchoRequest),
            Just(MessageBody::EchoReply),
            Just(MessageBody::FeaturesRequest),
            (any::<u64>(), any::<u32>()).prop_map(|(datapath_id, n_ports)| {
                MessageBody::FeaturesReply { datapath_id, n_ports }
            }),
            flow_mod().prop_map(MessageBody::FlowMod),
            (any::<u16>(), any::<u16>(), proptest::collection::vec(any::<u8>(), 0..64)).prop_map(
                |(of_type, of_code, data)| MessageBody::Error { of_type, of_code, data }
            ),
            aether_message().prop_map(MessageBody::Experimenter),
        ],
    )
        .prop_map(|(xid, body)| Message::new(xid, body))
}

proptest! {
    #[test]
    fn roundtrip_identity(msg in message()) {
        let bytes = wire::encode(&msg).unwrap();
        prop_assert_eq!(bytes[0], 0x04);
        prop_assert_eq!(bytes.len() % 8, 0);
        let len = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
        prop_assert_eq!(len, bytes.len());
        let back = wire::decode(&bytes).unwrap();
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn frame_split_chunking_invariant(
        msgs in proptest::collection::vec(message(), 1..8),
        cuts in proptest::collection::vec(1usize..64, 1..16),
    ) {
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend(wire::encode(m).unwrap());
        }
        let (whole, rest) = wire::frame_split(&stream).unwrap();
        prop_assert!(rest.is_empty());
        prop_assert_eq!(whole.len(), msgs.len());

        // feed the same stream in arbitrary chunks through a reassembly buffer
        let mut buf: Vec<u8> = Vec::new();
        let mut collected = Vec::new();
        let mut pos = 0;
        let mut cut_iter = cuts.iter().cycle();
        while pos < stream.len() {
            let n = (*cut_iter.next().unwrap()).min(stream.len() - pos);
            buf.extend_from_slice(&stream[pos..pos + n]);
            pos += n;
            let (frames, keep) = wire::frame_split(&buf).unwrap();
            collected.extend(frames);
            buf = keep;
        }
        prop_assert!(buf.is_empty());
        prop_assert_eq!(collected, whole);
        let decoded: Vec<Message> = stream_msgs(&stream);
        prop_assert_eq!(decoded, msgs);
    }
}

fn stream_msgs(stream: &[u8]) -> Vec<Message> {
    let (frames, _) = wire::frame_split(stream).unwrap();
    frames.iter().map(|f| wire::decode(f).unwrap()).collect()
}
