//! The control loop behind a session.
//!
//! The engine is driven one tick at a time. Each tick it applies the newest
//! glove frame per hand, collects finished retrievals, steps the rig and, at
//! 15 Hz, publishes a snapshot. Retrievals run on their own threads and hand
//! their result back through a channel that the tick polls without waiting,
//! so a slow model endpoint never delays a tick.

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};

use dextype_core::arm_control::VelocityCommand;
use dextype_core::retrieval::{retrieve, ManipulationPlan, RetrievalBackend, RetrievalError};
use dextype_core::sim::{Side, CONTROL_HZ, RECORD_HZ};

use crate::protocol::{ClientMessage, GloveFrame, LibraryListing, ServerMessage, Snapshot};
use crate::session::{Effect, Session};

/// Single-slot mailbox: writers replace the value, the reader takes the
/// newest one. Neither side ever waits on the other for more than the swap.
#[derive(Debug)]
pub struct LatestValue<T> {
    slot: Arc<Mutex<Option<T>>>,
}

impl<T> Clone for LatestValue<T> {
    fn clone(&self) -> Self {
        Self { slot: self.slot.clone() }
    }
}

impl<T> Default for LatestValue<T> {
    fn default() -> Self {
        Self { slot: Arc::new(Mutex::new(None)) }
    }
}

impl<T> LatestValue<T> {
    pub fn publish(&self, value: T) {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(value);
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

type RetrievalResult = (u64, Result<ManipulationPlan, RetrievalError>);

/// What one tick produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub commands: [VelocityCommand; 2],
    pub snapshot: Option<Snapshot>,
    /// Messages for every connected client.
    pub broadcast: Vec<ServerMessage>,
}

/// Replies to a submitted message.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Submitted {
    /// Messages for the sender only.
    pub reply: Vec<ServerMessage>,
    /// Messages for every connected client.
    pub broadcast: Vec<ServerMessage>,
}

pub struct Engine {
    session: Session,
    backend: RetrievalBackend,
    gloves: [LatestValue<GloveFrame>; 2],
    results_tx: Sender<RetrievalResult>,
    results_rx: Receiver<RetrievalResult>,
    in_flight: usize,
    next_snapshot: u64,
}

impl Engine {
    pub fn new(session: Session, backend: RetrievalBackend) -> Self {
        let (results_tx, results_rx) = mpsc::channel();
        Self {
            session,
            backend,
            gloves: Default::default(),
            results_tx,
            results_rx,
            in_flight: 0,
            next_snapshot: 0,
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    /// Retrievals started and not yet collected by a tick.
    pub fn retrievals_in_flight(&self) -> usize {
        self.in_flight
    }

    /// Mailbox for glove frames of `side`, for producers on other threads.
    pub fn glove_slot(&self, side: Side) -> LatestValue<GloveFrame> {
        self.gloves[side.index()].clone()
    }

    pub fn library_listing(&self) -> LibraryListing {
        let chains = self.session.rig().model().chains().iter().map(|c| c.name.clone()).collect();
        LibraryListing::new(self.session.library(), chains)
    }

    /// Applies a client message. Glove frames go through the hand's mailbox
    /// and take effect on the next tick.
    pub fn submit(&mut self, seq: Option<u64>, message: ClientMessage) -> Submitted {
        if let ClientMessage::GloveFrame(frame) = &message {
            let fingers = self.session.rig().hand(frame.hand).calibration.fingers.len();
            return match crate::session::validate_glove(frame, fingers) {
                Ok(()) => {
                    self.gloves[frame.hand.index()].publish(frame.clone());
                    Submitted::default()
                }
                Err(e) => Submitted { reply: vec![ServerMessage::error(e, seq)], broadcast: Vec::new() },
            };
        }
        match self.session.apply(&message) {
            Ok(effects) => {
                let mut out = Submitted::default();
                for effect in effects {
                    match effect {
                        Effect::Retrieve { request_id, request } => self.spawn_retrieval(request_id, request),
                        Effect::LibraryChanged => out.broadcast.push(ServerMessage::Library(self.library_listing())),
                    }
                }
                out
            }
            Err(e) => Submitted { reply: vec![ServerMessage::error(e, seq)], broadcast: Vec::new() },
        }
    }

    fn spawn_retrieval(&mut self, request_id: u64, request: dextype_core::retrieval::TaskRequest) {
        let library = self.session.library().clone();
        let backend = self.backend.clone();
        let tx = self.results_tx.clone();
        self.in_flight += 1;
        std::thread::spawn(move || {
            let result = retrieve(&request, &backend, &library);
            let _ = tx.send((request_id, result));
        });
    }

    /// Runs one control tick.
    pub fn tick(&mut self) -> TickOutput {
        for side in Side::BOTH {
            if let Some(frame) = self.gloves[side.index()].take() {
                if let Err(e) = self.session.apply(&ClientMessage::GloveFrame(frame)) {
                    log::warn!("dropped glove frame: {e}");
                }
            }
        }
        let mut broadcast = Vec::new();
        while let Ok((id, result)) = self.results_rx.try_recv() {
            self.in_flight -= 1;
            broadcast.extend(self.session.retrieval_done(id, result));
        }
        let tick = self.session.rig().tick();
        let commands = self.session.tick();
        let snapshot = if self.next_snapshot * CONTROL_HZ as u64 / RECORD_HZ as u64 <= tick {
            self.next_snapshot += 1;
            Some(self.session.snapshot())
        } else {
            None
        };
        TickOutput { tick, commands, snapshot, broadcast }
    }
}
