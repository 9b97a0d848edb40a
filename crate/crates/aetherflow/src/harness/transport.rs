//! Control-channel transports. The simulation pumps bytes through a `Pipe`
//! pair and must behave identically whether the pair is an in-process byte
//! queue or a real TCP loopback connection.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::rc::Rc;

pub trait Pipe {
    /// Queues bytes toward the peer.
    fn send(&mut self, bytes: &[u8]);
    /// Drains whatever the peer has sent so far (never blocks).
    fn recv(&mut self) -> Vec<u8>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Local,
    Tcp,
}

pub fn pipe_pair(kind: TransportKind) -> (Box<dyn Pipe>, Box<dyn Pipe>) {
    match kind {
        TransportKind::Local => {
            let (a, b) = LocalPipe::pair();
            (Box::new(a), Box::new(b))
        }
        TransportKind::Tcp => {
            let (a, b) = TcpPipe::pair();
            (Box::new(a), Box::new(b))
        }
    }
}

/// In-process pipe: two shared byte queues.
pub struct LocalPipe {
    tx: Rc<RefCell<VecDeque<u8>>>,
    rx: Rc<RefCell<VecDeque<u8>>>,
}

impl LocalPipe {
    pub fn pair() -> (LocalPipe, LocalPipe) {
        let ab = Rc::new(RefCell::new(VecDeque::new()));
        let ba = Rc::new(RefCell::new(VecDeque::new()));
        (
            LocalPipe { tx: ab.clone(), rx: ba.clone() },
            LocalPipe { tx: ba, rx: ab },
        )
    }
}

impl Pipe for LocalPipe {
    fn send(&mut self, bytes: &[u8]) {
        self.tx.borrow_mut().extend(bytes);
    }

    fn recv(&mut self) -> Vec<u8> {
        self.rx.borrow_mut().drain(..).collect()
    }
}

/// Loopback TCP pipe in nonblocking mode.
pub struct TcpPipe {
    stream: TcpStream,
}

impl TcpPipe {
    pub fn pair() -> (TcpPipe, TcpPipe) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().unwrap();
        let client = TcpStream::connect(addr).expect("connect loopback");
        let (server, _) = listener.accept().expect("accept loopback");
        for s in [&client, &server] {
            s.set_nonblocking(true).unwrap();
            s.set_nodelay(true).unwrap();
        }
        (TcpPipe { stream: client }, TcpPipe { stream: server })
    }
}

impl Pipe for TcpPipe {
    fn send(&mut self, bytes: &[u8]) {
        let mut off = 0;
        while off < bytes.len() {
            match self.stream.write(&bytes[off..]) {
                Ok(n) => off += n,
                Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::yield_now(),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => panic!("tcp pipe write failed: {e}"),
            }
        }
    }

    fn recv(&mut self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut buf = [0u8; 4096];
        loop {
            match self.stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => out.extend_from_slice(&buf[..n]),
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => panic!("tcp pipe read failed: {e}"),
            }
        }
        out
    }
}
