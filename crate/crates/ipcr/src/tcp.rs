//! Length-prefixed frames over TCP. Client and server move raw frame bytes
//! only; encoding happens in the core crate.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use ipcr_core::wire::{payload_len, HEADER_LEN};
use ipcr_core::{ServerNode, Transport, TransportError};

/// Larger payloads are refused before allocation.
pub const MAX_PAYLOAD: usize = 256 << 20;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Result of reading one frame off a stream.
pub enum Incoming {
    Frame(Vec<u8>),
    /// The header failed validation; framing is lost after this.
    BadHeader([u8; HEADER_LEN]),
    Eof,
}

pub fn read_incoming(stream: &mut impl Read) -> io::Result<Incoming> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match stream.read(&mut header[got..])? {
            0 if got == 0 => return Ok(Incoming::Eof),
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => got += n,
        }
    }
    let len = match payload_len(&header) {
        Ok(len) if len <= MAX_PAYLOAD => len,
        _ => return Ok(Incoming::BadHeader(header)),
    };
    let mut frame = Vec::with_capacity(HEADER_LEN + len);
    frame.extend_from_slice(&header);
    frame.resize(HEADER_LEN + len, 0);
    stream.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(Incoming::Frame(frame))
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame(stream: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    match read_incoming(stream)? {
        Incoming::Frame(f) => Ok(Some(f)),
        Incoming::Eof => Ok(None),
        Incoming::BadHeader(_) => Err(io::Error::new(io::ErrorKind::InvalidData, "invalid frame header")),
    }
}

/// One connection per server, opened for the lifetime of the transport.
pub struct TcpTransport {
    endpoints: Vec<String>,
    streams: Vec<TcpStream>,
}

fn fail(server: usize, endpoint: &str, e: impl ToString) -> TransportError {
    TransportError { server, endpoint: endpoint.to_string(), message: e.to_string() }
}

impl TcpTransport {
    pub fn connect(endpoints: &[String], timeout: Duration) -> Result<Self, TransportError> {
        let streams = endpoints
            .iter()
            .enumerate()
            .map(|(n, ep)| {
                let addrs: Vec<SocketAddr> = ep.to_socket_addrs().map_err(|e| fail(n, ep, e))?.collect();
                let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses");
                for a in addrs {
                    match TcpStream::connect_timeout(&a, timeout) {
                        Ok(s) => {
                            s.set_read_timeout(Some(timeout)).map_err(|e| fail(n, ep, e))?;
                            s.set_write_timeout(Some(timeout)).map_err(|e| fail(n, ep, e))?;
                            s.set_nodelay(true).map_err(|e| fail(n, ep, e))?;
                            return Ok(s);
                        }
                        Err(e) => last = e,
                    }
                }
                Err(fail(n, ep, format!("unreachable: {last}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(TcpTransport { endpoints: endpoints.to_vec(), streams })
    }

    pub fn endpoints(&self) -> &[String] {
        &self.endpoints
    }
}

fn round_trip(stream: &mut TcpStream, request: &[u8]) -> io::Result<Vec<u8>> {
    stream.write_all(request)?;
    read_frame(stream)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed"))
}

impl Transport for TcpTransport {
    fn server_count(&self) -> usize {
        self.streams.len()
    }

    fn exchange(&mut self, requests: &[(usize, Vec<u8>)]) -> Result<Vec<Vec<u8>>, TransportError> {
        let mut slots: Vec<Option<&mut TcpStream>> = self.streams.iter_mut().map(Some).collect();
        let mut jobs = Vec::with_capacity(requests.len());
        for (n, req) in requests {
            let ep = self.endpoints.get(*n).map_or("?", String::as_str);
            let stream = slots
                .get_mut(*n)
                .and_then(Option::take)
                .ok_or_else(|| fail(*n, ep, "no such server, or addressed twice in one round"))?;
            jobs.push((*n, ep, stream, req.as_slice()));
        }
        thread::scope(|s| {
            let handles: Vec<_> = jobs
                .into_iter()
                .map(|(n, ep, stream, req)| s.spawn(move || round_trip(stream, req).map_err(|e| fail(n, ep, e))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("transport worker panicked")).collect()
        })
    }
}

fn handle_connection(mut stream: TcpStream, node: Arc<Mutex<ServerNode>>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    loop {
        let reply = match read_incoming(&mut stream)? {
            Incoming::Eof => return Ok(()),
            Incoming::Frame(request) => node.lock().unwrap_or_else(|p| p.into_inner()).handle(&request),
            Incoming::BadHeader(header) => {
                // typed error reply, then drop the connection
                let reply = node.lock().unwrap_or_else(|p| p.into_inner()).handle(&header);
                stream.write_all(&reply)?;
                return Ok(());
            }
        };
        stream.write_all(&reply)?;
    }
}

/// Accepts connections forever, one thread per connection. Sessions from
/// different connections interleave freely.
pub fn serve(listener: TcpListener, node: Arc<Mutex<ServerNode>>) -> io::Result<()> {
    for conn in listener.incoming() {
        let stream = conn?;
        let node = Arc::clone(&node);
        thread::spawn(move || {
            let _ = handle_connection(stream, node);
        });
    }
    Ok(())
}

/// Binds `addr` and serves in a background thread; returns the bound address.
pub fn spawn_server(node: ServerNode, addr: &str) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let node = Arc::new(Mutex::new(node));
    thread::spawn(move || serve(listener, node));
    Ok(local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipcr_core::wire::{Frame, MsgType};

    #[test]
    fn read_frame_boundaries() {
        let f = Frame::new(MsgType::Hello, [3; 16], vec![1]).encode();
        let mut two = f.clone();
        two.extend_from_slice(&f);
        let mut cur = io::Cursor::new(two);
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), f);
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), f);
        assert!(read_frame(&mut cur).unwrap().is_none());
        let mut cut = io::Cursor::new(f[..10].to_vec());
        assert_eq!(read_frame(&mut cut).unwrap_err().kind(), io::ErrorKind::UnexpectedEof);
        let mut bad = f.clone();
        bad[0] = b'X';
        assert_eq!(read_frame(&mut io::Cursor::new(bad)).unwrap_err().kind(), io::ErrorKind::InvalidData);
        let mut huge = f.clone();
        huge[22..26].copy_from_slice(&u32::MAX.to_le_bytes());
        assert_eq!(read_frame(&mut io::Cursor::new(huge)).unwrap_err().kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn unreachable_endpoint_is_named() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap().to_string();
        drop(l);
        let err = TcpTransport::connect(std::slice::from_ref(&addr), Duration::from_secs(2)).err().unwrap();
        assert_eq!(err.server, 0);
        assert!(err.to_string().contains(&addr));
    }
}
