//! Live mode: the engine runs against the wall clock and talks NDJSON over
//! TCP. Each client gets a reader thread and a writer thread; all engine
//! state lives on one engine thread fed through a channel.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::config::EngineConfig;
use super::engine::{Engine, EngineError};
use super::protocol::{ClientMessage, ServerMessage, Snapshot};
use super::scenario::{Action, Input};
use crate::sync::BikerId;

pub const SNAPSHOT_PERIOD_S: f64 = 0.05;
/// Bikers owned by a dropped connection leave after this long unless rejoined.
pub const DISCONNECT_GRACE_S: f64 = 3.0;
const ACCEPT_POLL: Duration = Duration::from_millis(10);

type ClientId = u64;

enum Event {
    Connected(ClientId, Sender<String>),
    Line(ClientId, String),
    Disconnected(ClientId),
}

/// A running server. Dropping it shuts the server down.
pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the engine thread exits (after `shutdown` or a fault).
    pub fn wait(mut self) {
        self.join_all();
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.join_all();
    }

    fn join_all(&mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServeHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.join_all();
    }
}

/// Bind and start serving. The engine starts ticking immediately.
pub fn serve(config: EngineConfig, bind: impl ToSocketAddrs) -> io::Result<ServeHandle> {
    let engine = Engine::new(config).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let listener = TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, tx, stop))
    };
    let engine_thread = {
        let stop = stop.clone();
        thread::spawn(move || {
            if let Err(e) = engine_loop(engine, rx, &stop) {
                eprintln!("kinetree serve: {e}");
            }
            stop.store(true, Ordering::SeqCst);
        })
    };
    Ok(ServeHandle {
        addr,
        stop,
        threads: vec![acceptor, engine_thread],
    })
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next_id: ClientId = 0;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next_id;
                next_id += 1;
                if let Err(e) = spawn_client(id, stream, tx.clone()) {
                    eprintln!("kinetree serve: client setup failed: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                eprintln!("kinetree serve: accept failed: {e}");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
}

fn spawn_client(id: ClientId, stream: TcpStream, tx: Sender<Event>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut write_half = stream.try_clone()?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    if tx.send(Event::Connected(id, out_tx)).is_err() {
        return Ok(());
    }
    thread::spawn(move || {
        for line in out_rx {
            if write_half.write_all(line.as_bytes()).is_err() {
                break;
            }
        }
        let _ = write_half.shutdown(std::net::Shutdown::Both);
    });
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            if tx.send(Event::Line(id, line)).is_err() {
                return;
            }
        }
        let _ = tx.send(Event::Disconnected(id));
    });
    Ok(())
}

#[derive(Default)]
struct Session {
    clients: BTreeMap<ClientId, Sender<String>>,
    owner: BTreeMap<BikerId, ClientId>,
    /// Engine time at which an orphaned biker is removed.
    pending_leave: BTreeMap<BikerId, f64>,
}

impl Session {
    fn reply_error(&mut self, client: ClientId, message: String) {
        if let Some(tx) = self.clients.get(&client) {
            let _ = tx.send(ServerMessage::Error { message }.to_line());
        }
    }

    fn broadcast(&mut self, line: &str) {
        self.clients.retain(|_, tx| tx.send(line.to_owned()).is_ok());
    }

    fn handle(&mut self, engine: &mut Engine, event: Event) {
        match event {
            Event::Connected(id, tx) => {
                self.clients.insert(id, tx);
            }
            Event::Disconnected(id) => {
                self.clients.remove(&id);
                let deadline = engine.now_s() + DISCONNECT_GRACE_S;
                for (biker, owner) in &self.owner {
                    if *owner == id {
                        self.pending_leave.insert(*biker, deadline);
                    }
                }
            }
            Event::Line(id, line) => {
                if let Err(message) = self.handle_line(engine, id, &line) {
                    self.reply_error(id, message);
                }
            }
        }
    }

    fn handle_line(&mut self, engine: &mut Engine, client: ClientId, line: &str) -> Result<(), String> {
        let msg = ClientMessage::parse(line)?;
        let biker = BikerId(msg.biker());
        let t = engine.now_s();
        let action = match msg {
            ClientMessage::Join { .. } => {
                if self.pending_leave.remove(&biker).is_some() {
                    // Rejoin within the grace period keeps the cadence history.
                    self.owner.insert(biker, client);
                    return Ok(());
                }
                Action::Join
            }
            ClientMessage::Leave { .. } => Action::Leave,
            ClientMessage::Pedal { .. } => Action::Pedal,
        };
        engine
            .apply(&Input { t, biker, action })
            .map_err(|e: EngineError| e.to_string())?;
        match action {
            Action::Join => {
                self.owner.insert(biker, client);
            }
            Action::Leave => {
                self.owner.remove(&biker);
                self.pending_leave.remove(&biker);
            }
            Action::Pedal => {}
        }
        Ok(())
    }

    fn expire(&mut self, engine: &mut Engine) {
        let now = engine.now_s();
        let due: Vec<BikerId> = self
            .pending_leave
            .iter()
            .filter(|(_, &deadline)| deadline <= now)
            .map(|(b, _)| *b)
            .collect();
        for biker in due {
            self.pending_leave.remove(&biker);
            self.owner.remove(&biker);
            let _ = engine.apply(&Input {
                t: now,
                biker,
                action: Action::Leave,
            });
        }
    }
}

fn engine_loop(mut engine: Engine, rx: Receiver<Event>, stop: &AtomicBool) -> Result<(), EngineError> {
    let tick_hz = engine.config().tick_hz as f64;
    let start = Instant::now();
    let mut session = Session::default();
    let mut next_snapshot_s = 0.0;
    while !stop.load(Ordering::SeqCst) {
        let due = start + Duration::from_secs_f64(engine.tick() as f64 / tick_hz);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        while let Ok(event) = rx.try_recv() {
            session.handle(&mut engine, event);
        }
        session.expire(&mut engine);
        let (record, _) = match engine.step() {
            Ok(r) => r,
            Err(e) => {
                session.broadcast(
                    &ServerMessage::Error {
                        message: e.to_string(),
                    }
                    .to_line(),
                );
                return Err(e);
            }
        };
        if record.time_s + 1e-9 >= next_snapshot_s {
            next_snapshot_s += SNAPSHOT_PERIOD_S;
            let line = ServerMessage::State(Snapshot::new(&record, engine.cadences())).to_line();
            session.broadcast(&line);
        }
    }
    Ok(())
}
