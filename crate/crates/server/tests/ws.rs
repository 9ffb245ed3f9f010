use std::sync::Arc;
use std::time::{Duration, Instant};

use dextype_core::hand_model::HandKinematicModel;
use dextype_core::mapping::CalibrationPair;
use dextype_core::retrieval::RetrievalBackend;
use dextype_core::sim::Side;
use dextype_core::type_library::Library;
use dextype_server::protocol::{
    decode_server, encode_client, ClientMessage, ErrorCode, GloveFrame, Mode, SelectType, ServerMessage, Snapshot,
};
use dextype_server::{ws, Engine, Session, SessionConfig};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn connect(addr: std::net::SocketAddr) -> Client {
    let (client, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    client
}

async fn next_message(client: &mut Client) -> (u64, ServerMessage) {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(5), client.next()).await.expect("server went quiet");
        if let Message::Text(text) = frame.unwrap().unwrap() {
            return decode_server(text.as_bytes()).unwrap();
        }
    }
}

async fn snapshot_where(client: &mut Client, within: Duration, pred: impl Fn(&Snapshot) -> bool) -> Snapshot {
    let until = Instant::now() + within;
    loop {
        assert!(Instant::now() < until, "condition not reached in time");
        if let (_, ServerMessage::Snapshot(s)) = next_message(client).await {
            if pred(&s) {
                return *s;
            }
        }
    }
}

async fn send(client: &mut Client, seq: u64, message: &ClientMessage) {
    client.send(Message::Text(encode_client(seq, message).into())).await.unwrap();
}

fn sliders(value: f64, timestamp: f64) -> ClientMessage {
    ClientMessage::GloveFrame(GloveFrame {
        hand: Side::Right,
        fingertips: CalibrationPair::nominal().fingers.iter().map(|f| f.point_at(value).into()).collect(),
        wrist: None,
        timestamp,
    })
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn console_round_trip() {
    let model = Arc::new(HandKinematicModel::reference());
    let library = Arc::new(Library::bundled(&model).unwrap());
    let ty = library.get("curved-handle").unwrap().clone();
    let engine = Engine::new(Session::new(model, library.clone(), SessionConfig::default()), RetrievalBackend::DeterministicMatcher);
    let server = ws::start(engine, "127.0.0.1:0").await.unwrap();

    let mut client = connect(server.local_addr).await;
    let (first_seq, listing) = next_message(&mut client).await;
    let ServerMessage::Library(listing) = listing else { panic!("expected the library listing first") };
    assert_eq!(listing.types.len(), 30);
    assert_eq!(listing.hash, library.content_hash());

    let idle = snapshot_where(&mut client, Duration::from_secs(2), |_| true).await;
    assert_eq!(idle.mode, Mode::Idle);

    send(&mut client, 1, &ClientMessage::SelectType(SelectType { hand: Side::Right, type_id: "curved-handle".into() })).await;
    snapshot_where(&mut client, Duration::from_secs(2), |s| s.hands[1].active_type.as_deref() == Some("curved-handle")).await;

    for (seq, value) in (2u64..).zip([0.0, 0.5, 1.0]) {
        send(&mut client, seq, &sliders(value, seq as f64)).await;
        let expected: Vec<f64> = ty
            .stretch_posture
            .iter()
            .zip(ty.contract_posture.iter())
            .map(|(s, c)| s + (c - s) * value)
            .collect();
        let snap = snapshot_where(&mut client, Duration::from_secs(3), |s| {
            let h = &s.hands[1];
            h.ratios.iter().all(|r| (r - value).abs() < 1e-6)
                && h.joints.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-6)
        })
        .await;
        assert_eq!(snap.mode, Mode::Teleoperate);
    }

    client.send(Message::Text("{not json".into())).await.unwrap();
    let error = loop {
        if let (_, ServerMessage::Error(e)) = next_message(&mut client).await {
            break e;
        }
    };
    assert_eq!(error.error.code, ErrorCode::Malformed);
    send(&mut client, 1, &ClientMessage::Reset).await;
    let error = loop {
        if let (_, ServerMessage::Error(e)) = next_message(&mut client).await {
            break e;
        }
    };
    assert_eq!(error.error.code, ErrorCode::Sequence);

    let (last_seq, _) = next_message(&mut client).await;
    assert!(last_seq > first_seq);
    let before = snapshot_where(&mut client, Duration::from_secs(1), |_| true).await;
    client.close(None).await.unwrap();

    let mut again = connect(server.local_addr).await;
    assert!(matches!(next_message(&mut again).await, (1, ServerMessage::Library(l)) if l == listing));
    let after = snapshot_where(&mut again, Duration::from_secs(2), |_| true).await;
    assert!(after.tick >= before.tick);
    for (a, b) in after.hands.iter().zip(&before.hands) {
        assert_eq!(a.active_type, b.active_type);
        assert_eq!(a.joints, b.joints);
        assert_eq!(a.ratios, b.ratios);
        assert_eq!(a.calibration, b.calibration);
    }
    assert_eq!(after.mode, before.mode);

    let addr = server.local_addr;
    let health = tokio::task::spawn_blocking(move || http_get(addr, "/health")).await.unwrap();
    assert!(health.ends_with("ok"));
    server.shutdown();
}

fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).unwrap();
    body
}
