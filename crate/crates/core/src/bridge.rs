//! Binary protocol for hosting a denoiser in a separate process.
//!
//! The bridge process talks over its stdin/stdout. All integers and reals
//! are little-endian.
//!
//! ```text
//! hello     "PNPH" version:u32                                   (bridge -> core, once)
//! request   "PNPD" version:u32 eps:f64 c:u32 h:u32 w:u32 data:[f32; c*h*w]
//! response  "PNPR" status:u32 c:u32 h:u32 w:u32 data:[f32; c*h*w]
//! ```
//!
//! A zero status means success and the shape must echo the request. One
//! request is in flight at a time. The core keeps `f64` internally and
//! converts at this boundary.

use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use crate::tensor::{ImageTensor, Shape};

pub const HELLO_MAGIC: [u8; 4] = *b"PNPH";
pub const REQUEST_MAGIC: [u8; 4] = *b"PNPD";
pub const RESPONSE_MAGIC: [u8; 4] = *b"PNPR";
pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Largest tensor accepted off the wire, in entries.
const MAX_ENTRIES: usize = 1 << 28;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("bad magic: expected {:?}, got {:?} ({})", String::from_utf8_lossy(.expected), String::from_utf8_lossy(.found), hex4(.found))]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("protocol version {found} not supported (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("response shape {found} does not match request shape {expected}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("frame declares {0} entries, above the limit")]
    Oversized(usize),

    #[error("bridge returned status {0}")]
    Status(u32),

    #[error("bridge did not answer within {0:?}")]
    Timeout(Duration),

    #[error("bridge closed its output")]
    Closed,

    #[error("could not launch bridge {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },

    #[error("non-finite value in bridge payload at entry {0}")]
    NonFinite(usize),

    #[error("bridge i/o: {0}")]
    Io(#[from] io::Error),
}

fn hex4(b: &[u8; 4]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect::<Vec<_>>().join(" ")
}

type Res<T> = std::result::Result<T, ProtocolError>;

fn read_array<const N: usize>(r: &mut impl Read) -> Res<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ProtocolError::Closed
        } else {
            ProtocolError::Io(e)
        }
    })?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Res<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn expect_magic(r: &mut impl Read, expected: [u8; 4]) -> Res<()> {
    let found = read_array::<4>(r)?;
    if found == expected {
        Ok(())
    } else {
        Err(ProtocolError::BadMagic { expected, found })
    }
}

fn read_shape(r: &mut impl Read) -> Res<Shape> {
    let c = read_u32(r)? as usize;
    let h = read_u32(r)? as usize;
    let w = read_u32(r)? as usize;
    let n = c.checked_mul(h).and_then(|v| v.checked_mul(w)).unwrap_or(usize::MAX);
    if n > MAX_ENTRIES {
        return Err(ProtocolError::Oversized(n));
    }
    Ok(Shape::new(c, h, w))
}

fn write_shape(out: &mut Vec<u8>, s: Shape) {
    for d in [s.channels, s.height, s.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

fn write_payload(out: &mut Vec<u8>, t: &ImageTensor) {
    for &v in t.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_payload(r: &mut impl Read, shape: Shape) -> Res<ImageTensor> {
    let mut bytes = vec![0u8; shape.len() * 4];
    r.read_exact(&mut bytes).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ProtocolError::Closed
        } else {
            ProtocolError::Io(e)
        }
    })?;
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(ProtocolError::NonFinite(i));
    }
    Ok(ImageTensor::from_raw(data, shape))
}

pub fn encode_hello() -> Vec<u8> {
    let mut out = HELLO_MAGIC.to_vec();
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out
}

pub fn decode_hello(r: &mut impl Read) -> Res<u32> {
    expect_magic(r, HELLO_MAGIC)?;
    let version = read_u32(r)?;
    if version != PROTOCOL_VERSION {
        return Err(ProtocolError::Version {
            expected: PROTOCOL_VERSION,
            found: version,
        });
    }
    Ok(version)
}

pub fn encode_request(eps: f64, x: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 4 * x.len());
    out.extend_from_slice(&REQUEST_MAGIC);
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out.extend_from_slice(&eps.to_le_bytes());
    write_shape(&mut out, x.shape());
    write_payload(&mut out, x);
    out
}

/// Reads one request. `Ok(None)` on a clean end of stream before any byte.
pub fn decode_request(r: &mut impl Read) -> Res<Option<(f64, ImageTensor)>> {
    let mut first = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut first[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(ProtocolError::Closed),
            n => got += n,
        }
    }
    if first != REQUEST_MAGIC {
        return Err(ProtocolError::BadMagic {
            expected: REQUEST_MAGIC,
            found: first,
        });
    }
    let version = read_u32(r)?;
    if version != PROTOCOL_VERSION {
        return Err(ProtocolError::Version {
            expected: PROTOCOL_VERSION,
            found: version,
        });
    }
    let eps = f64::from_le_bytes(read_array(r)?);
    let shape = read_shape(r)?;
    let x = read_payload(r, shape)?;
    Ok(Some((eps, x)))
}

pub fn encode_response(status: u32, x: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * x.len());
    out.extend_from_slice(&RESPONSE_MAGIC);
    out.extend_from_slice(&status.to_le_bytes());
    write_shape(&mut out, x.shape());
    write_payload(&mut out, x);
    out
}

/// An error response carries an empty payload.
pub fn encode_error_response(status: u32) -> Vec<u8> {
    let mut out = RESPONSE_MAGIC.to_vec();
    out.extend_from_slice(&status.to_le_bytes());
    write_shape(&mut out, Shape::new(0, 0, 0));
    out
}

/// Reads one response, checking its status and that its shape matches `expected`.
pub fn decode_response(r: &mut impl Read, expected: Shape) -> Res<ImageTensor> {
    expect_magic(r, RESPONSE_MAGIC)?;
    let status = read_u32(r)?;
    let shape = read_shape(r)?;
    if status != 0 {
        // Drain whatever payload was declared so the stream stays framed.
        read_payload(r, shape).ok();
        return Err(ProtocolError::Status(status));
    }
    if shape != expected {
        return Err(ProtocolError::ShapeMismatch { expected, found: shape });
    }
    read_payload(r, shape)
}

/// Serves requests from `input` until end of stream, answering each with
/// `f(eps, x)`. An `Err(status)` from `f` is sent as a non-zero status.
pub fn serve(
    input: &mut impl Read,
    output: &mut impl Write,
    mut f: impl FnMut(f64, ImageTensor) -> std::result::Result<ImageTensor, u32>,
) -> Res<()> {
    output.write_all(&encode_hello())?;
    output.flush()?;
    while let Some((eps, x)) = decode_request(input)? {
        let frame = match f(eps, x) {
            Ok(y) => encode_response(0, &y),
            Err(status) => encode_error_response(status.max(1)),
        };
        output.write_all(&frame)?;
        output.flush()?;
    }
    Ok(())
}

/// Byte source fed by a background thread, so reads can time out.
struct TimedReader {
    rx: Receiver<io::Result<Vec<u8>>>,
    pending: Vec<u8>,
    pos: usize,
    deadline: Instant,
    timeout: Duration,
    timed_out: bool,
}

impl TimedReader {
    fn new(mut source: impl Read + Send + 'static, timeout: Duration) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = vec![0u8; 1 << 16];
            loop {
                match source.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => {
                        if tx.send(Ok(buf[..n].to_vec())).is_err() {
                            break;
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            rx,
            pending: Vec::new(),
            pos: 0,
            deadline: Instant::now() + timeout,
            timeout,
            timed_out: false,
        }
    }

    fn arm(&mut self) {
        self.deadline = Instant::now() + self.timeout;
        self.timed_out = false;
    }
}

impl Read for TimedReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.pending.len() {
            let wait = self.deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(wait) {
                Ok(Ok(chunk)) => {
                    self.pending = chunk;
                    self.pos = 0;
                }
                Ok(Err(e)) => return Err(e),
                Err(RecvTimeoutError::Timeout) => {
                    self.timed_out = true;
                    return Err(io::Error::new(io::ErrorKind::TimedOut, "bridge timeout"));
                }
                Err(RecvTimeoutError::Disconnected) => return Ok(0),
            }
        }
        let n = out.len().min(self.pending.len() - self.pos);
        out[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// A running bridge subprocess.
pub struct BridgeClient {
    command: String,
    child: Child,
    stdin: ChildStdin,
    reader: TimedReader,
    timeout: Duration,
    requests: u64,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .field("requests", &self.requests)
            .finish_non_exhaustive()
    }
}

impl BridgeClient {
    /// Launches `command` through `sh -c` and waits for its hello frame.
    pub fn launch(command: &str, timeout: Duration) -> Res<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .process_group(0)
            .spawn()
            .map_err(|source| ProtocolError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = Self {
            command: command.to_string(),
            child,
            stdin,
            reader: TimedReader::new(stdout, timeout),
            timeout,
            requests: 0,
        };
        client.reader.arm();
        let hello = decode_hello(&mut client.reader);
        if let Err(e) = hello {
            let e = client.classify(e);
            client.kill();
            return Err(e);
        }
        Ok(client)
    }

    pub fn requests(&self) -> u64 {
        self.requests
    }

    fn classify(&self, e: ProtocolError) -> ProtocolError {
        match e {
            _ if self.reader.timed_out => ProtocolError::Timeout(self.timeout),
            ProtocolError::Io(io) if io.kind() == io::ErrorKind::TimedOut => ProtocolError::Timeout(self.timeout),
            other => other,
        }
    }

    /// Kills the whole process group: `sh -c` may fork the bridge rather
    /// than exec it, and killing only the shell would orphan the bridge.
    fn kill(&mut self) {
        if let Ok(pid) = i32::try_from(self.child.id()) {
            // SAFETY: plain syscall on a process group we created.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Sends one tensor and waits for the denoised result.
    pub fn denoise(&mut self, x: &ImageTensor, eps: f64) -> Res<ImageTensor> {
        self.requests += 1;
        let frame = encode_request(eps, x);
        if let Err(e) = self.stdin.write_all(&frame).and_then(|_| self.stdin.flush()) {
            return Err(if e.kind() == io::ErrorKind::BrokenPipe {
                ProtocolError::Closed
            } else {
                ProtocolError::Io(e)
            });
        }
        self.reader.arm();
        match decode_response(&mut self.reader, x.shape()) {
            Ok(y) => Ok(y),
            Err(e) => {
                let e = self.classify(e);
                // The stream is no longer framed after anything but a status error.
                if !matches!(e, ProtocolError::Status(_)) {
                    self.kill();
                }
                Err(e)
            }
        }
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        self.kill();
    }
}
