//! Live server: a control thread running the engine at the loop rate and
//! one WebSocket task per console.
//!
//! Connections forward requests to the control thread over a channel and
//! write glove frames straight into the per-hand mailboxes. Snapshots come
//! back through a watch channel, so a slow console only ever sees the newest
//! one; replies and broadcasts go through a per-connection queue.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc as std_mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use dextype_core::sim::Side;
use futures::{SinkExt, StreamExt};
use tokio::sync::{mpsc, watch};

use crate::engine::{Engine, LatestValue};
use crate::protocol::{decode_client, ClientMessage, GloveFrame, Outbox, SequenceCheck, ServerMessage, Snapshot};

pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8765";

enum Inbound {
    Connect { id: u64, outbox: mpsc::UnboundedSender<ServerMessage> },
    Message { id: u64, seq: u64, message: Box<ClientMessage> },
    Disconnect { id: u64 },
}

#[derive(Clone)]
struct Shared {
    inbound: std_mpsc::Sender<Inbound>,
    snapshots: watch::Receiver<Option<Arc<Snapshot>>>,
    gloves: [LatestValue<GloveFrame>; 2],
    fingers: usize,
    next_client: Arc<AtomicU64>,
}

/// A running server. Dropping it stops the control thread.
pub struct ServerHandle {
    pub local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    control: Option<JoinHandle<()>>,
    server: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.server.abort();
        if let Some(handle) = self.control.take() {
            let _ = handle.join();
        }
    }

    /// Waits until the HTTP server task ends.
    pub async fn wait(mut self) {
        let server = std::mem::replace(&mut self.server, tokio::spawn(async {}));
        let _ = server.await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn control_loop(
    mut engine: Engine,
    inbound: std_mpsc::Receiver<Inbound>,
    snapshots: watch::Sender<Option<Arc<Snapshot>>>,
    stop: Arc<AtomicBool>,
) {
    let period = Duration::from_secs_f64(engine.session().rig().controller.dt());
    let mut clients: HashMap<u64, mpsc::UnboundedSender<ServerMessage>> = HashMap::new();
    let mut deadline = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        loop {
            match inbound.try_recv() {
                Ok(Inbound::Connect { id, outbox }) => {
                    let _ = outbox.send(ServerMessage::Library(engine.library_listing()));
                    clients.insert(id, outbox);
                    engine.session_mut().clients = clients.len();
                }
                Ok(Inbound::Disconnect { id }) => {
                    clients.remove(&id);
                    engine.session_mut().clients = clients.len();
                }
                Ok(Inbound::Message { id, seq, message }) => {
                    let out = engine.submit(Some(seq), *message);
                    if let Some(tx) = clients.get(&id) {
                        for m in out.reply {
                            let _ = tx.send(m);
                        }
                    }
                    for m in out.broadcast {
                        for tx in clients.values() {
                            let _ = tx.send(m.clone());
                        }
                    }
                }
                Err(std_mpsc::TryRecvError::Empty) => break,
                Err(std_mpsc::TryRecvError::Disconnected) => return,
            }
        }
        let out = engine.tick();
        for m in out.broadcast {
            for tx in clients.values() {
                let _ = tx.send(m.clone());
            }
        }
        if let Some(s) = out.snapshot {
            snapshots.send_replace(Some(Arc::new(s)));
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            log::warn!("control tick {} overran by {:?}", out.tick, now - deadline);
            deadline = now;
        }
    }
}

/// Binds `addr` and starts serving `engine` on the current tokio runtime.
pub async fn start(engine: Engine, addr: &str) -> std::io::Result<ServerHandle> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local_addr = listener.local_addr()?;
    let (inbound_tx, inbound_rx) = std_mpsc::channel();
    let (snap_tx, snap_rx) = watch::channel(None);
    let shared = Shared {
        inbound: inbound_tx,
        snapshots: snap_rx,
        gloves: [engine.glove_slot(Side::Left), engine.glove_slot(Side::Right)],
        fingers: engine.session().rig().hand(Side::Left).calibration.fingers.len(),
        next_client: Arc::new(AtomicU64::new(1)),
    };
    let stop = Arc::new(AtomicBool::new(false));
    let control = {
        let stop = stop.clone();
        std::thread::Builder::new()
            .name("control".into())
            .spawn(move || control_loop(engine, inbound_rx, snap_tx, stop))?
    };
    let app = Router::new().route("/ws", get(upgrade)).route("/health", get(|| async { "ok" })).with_state(shared);
    let server = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("server stopped: {e}");
        }
    });
    log::info!("listening on {local_addr}");
    Ok(ServerHandle { local_addr, stop, control: Some(control), server })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(socket: WebSocket, shared: Shared) {
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    let (events_tx, mut events) = mpsc::unbounded_channel();
    if shared.inbound.send(Inbound::Connect { id, outbox: events_tx.clone() }).is_err() {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let mut outbox = Outbox::default();
    // The control thread answers Connect with the library listing.
    let Some(listing) = events.recv().await else { return };
    if sink.send(Message::Text(outbox.encode(&listing).into())).await.is_err() {
        let _ = shared.inbound.send(Inbound::Disconnect { id });
        return;
    }
    let mut snapshots = shared.snapshots.clone();
    snapshots.mark_changed();
    let mut sequence = SequenceCheck::default();
    loop {
        let outgoing = tokio::select! {
            incoming = stream.next() => {
                let bytes = match incoming {
                    Some(Ok(Message::Text(t))) => t.as_str().as_bytes().to_vec(),
                    Some(Ok(Message::Binary(b))) => b.to_vec(),
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                match receive(&shared, id, &bytes, &mut sequence) {
                    Ok(()) => continue,
                    Err(reply) => reply,
                }
            }
            event = events.recv() => match event {
                Some(m) => m,
                None => break,
            },
            changed = snapshots.changed() => {
                if changed.is_err() {
                    break;
                }
                let Some(snapshot) = snapshots.borrow_and_update().clone() else { continue };
                ServerMessage::Snapshot(Box::new((*snapshot).clone()))
            }
        };
        if sink.send(Message::Text(outbox.encode(&outgoing).into())).await.is_err() {
            break;
        }
    }
    let _ = shared.inbound.send(Inbound::Disconnect { id });
}

/// Routes one client frame. Returns the error to send back, if any.
fn receive(shared: &Shared, id: u64, bytes: &[u8], sequence: &mut SequenceCheck) -> Result<(), ServerMessage> {
    let (seq, message) = decode_client(bytes).map_err(|e| ServerMessage::error(e, None))?;
    sequence.accept(seq).map_err(|e| ServerMessage::error(e, Some(seq)))?;
    match message {
        ClientMessage::GloveFrame(frame) => {
            crate::session::validate_glove(&frame, shared.fingers).map_err(|e| ServerMessage::error(e, Some(seq)))?;
            shared.gloves[frame.hand.index()].publish(frame);
        }
        message => {
            let _ = shared.inbound.send(Inbound::Message { id, seq, message: Box::new(message) });
        }
    }
    Ok(())
}
