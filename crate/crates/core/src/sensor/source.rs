use std::collections::VecDeque;
use std::io::Read;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{read_framed, synth_observe, CostmapFrame, DegradationParams, SensorError};
use crate::geometry::Pose2D;
use crate::map::{PatchSpec, SchematicMap};
use crate::rng::SimRng;

/// Time comparisons tolerate this much floating-point slack.
const TIME_EPS: f64 = 1e-9;
/// Frames buffered between the external reader thread and the consumer.
const EXTERNAL_QUEUE: usize = 16;

/// Outcome of polling a frame source.
#[derive(Debug, Clone, PartialEq)]
pub enum FramePoll {
    Ready(CostmapFrame),
    /// Nothing due yet.
    Pending,
    /// The source will never produce another frame.
    Exhausted,
}

/// Renders degraded frames from the schematic map at a fixed cadence.
#[derive(Debug)]
pub struct SyntheticSource {
    map: Arc<SchematicMap>,
    spec: PatchSpec,
    params: DegradationParams,
    rate: f64,
    start_time: f64,
    next_index: u64,
    rng: SimRng,
    in_flight: VecDeque<CostmapFrame>,
}

impl SyntheticSource {
    pub fn new(
        map: Arc<SchematicMap>,
        spec: PatchSpec,
        params: DegradationParams,
        rate: f64,
        start_time: f64,
        rng: SimRng,
    ) -> Result<Self, SensorError> {
        params.validate()?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(SensorError::InvalidInput(format!("frame rate must be > 0, got {rate}")));
        }
        Ok(Self { map, spec, params, rate, start_time, next_index: 0, rng, in_flight: VecDeque::new() })
    }

    pub fn next_capture_time(&self) -> f64 {
        self.start_time + self.next_index as f64 / self.rate
    }

    /// Feeds the current true pose; captures every frame that has come due.
    pub fn observe(&mut self, t: f64, pose: &Pose2D) {
        while self.next_capture_time() <= t + TIME_EPS {
            let capture = self.next_capture_time();
            let frame = synth_observe(&self.map, pose, &self.spec, &self.params, capture, &mut self.rng);
            self.in_flight.push_back(frame);
            self.next_index += 1;
        }
    }

    fn poll(&mut self, t: f64) -> FramePoll {
        match self.in_flight.front() {
            Some(f) if f.timestamp <= t + TIME_EPS => FramePoll::Ready(self.in_flight.pop_front().unwrap()),
            _ => FramePoll::Pending,
        }
    }
}

/// Plays back recorded frames by timestamp.
#[derive(Debug, Default)]
pub struct ReplaySource {
    frames: VecDeque<CostmapFrame>,
}

impl ReplaySource {
    pub fn new(frames: impl IntoIterator<Item = CostmapFrame>) -> Self {
        Self { frames: frames.into_iter().collect() }
    }

    fn poll(&mut self, t: f64) -> FramePoll {
        match self.frames.front() {
            None => FramePoll::Exhausted,
            Some(f) if f.timestamp <= t + TIME_EPS => FramePoll::Ready(self.frames.pop_front().unwrap()),
            Some(_) => FramePoll::Pending,
        }
    }
}

/// Frames streamed by another process over the framed `CMAP` protocol.
///
/// A dedicated thread performs the blocking reads and hands parsed frames to
/// the consumer through a bounded queue.
pub struct ExternalSource {
    rx: Receiver<Result<CostmapFrame, SensorError>>,
    peeked: Option<CostmapFrame>,
    reader: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for ExternalSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSource").field("peeked", &self.peeked.is_some()).finish()
    }
}

impl ExternalSource {
    pub fn from_reader<R: Read + Send + 'static>(reader: R) -> Self {
        let (tx, rx) = sync_channel(EXTERNAL_QUEUE);
        let handle = std::thread::spawn(move || {
            let mut reader = std::io::BufReader::new(reader);
            loop {
                match read_framed(&mut reader) {
                    Ok(Some(frame)) => {
                        if tx.send(Ok(frame)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self { rx, peeked: None, reader: Some(handle) }
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, SensorError> {
        let stream = TcpStream::connect(addr)?;
        Ok(Self::from_reader(stream))
    }

    fn fill(&mut self, timeout: Option<Duration>) -> Result<bool, SensorError> {
        if self.peeked.is_some() {
            return Ok(true);
        }
        let msg = match timeout {
            None => match self.rx.try_recv() {
                Ok(m) => m,
                Err(TryRecvError::Empty) => return Ok(true),
                Err(TryRecvError::Disconnected) => return Ok(false),
            },
            Some(d) => match self.rx.recv_timeout(d) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => return Ok(true),
                Err(RecvTimeoutError::Disconnected) => return Ok(false),
            },
        };
        self.peeked = Some(msg?);
        Ok(true)
    }

    fn poll_inner(&mut self, t: f64, timeout: Option<Duration>) -> Result<FramePoll, SensorError> {
        if !self.fill(timeout)? {
            return Ok(FramePoll::Exhausted);
        }
        match &self.peeked {
            Some(f) if f.timestamp <= t + TIME_EPS => Ok(FramePoll::Ready(self.peeked.take().unwrap())),
            _ => Ok(FramePoll::Pending),
        }
    }

    /// Like polling through [`SensorSource::next_frame`] but waits up to
    /// `timeout` for the peer to deliver something.
    pub fn wait_frame(&mut self, t: f64, timeout: Duration) -> Result<FramePoll, SensorError> {
        self.poll_inner(t, Some(timeout))
    }
}

impl Drop for ExternalSource {
    fn drop(&mut self) {
        // The reader exits once the peer closes; don't block on it here.
        drop(self.reader.take());
    }
}

/// Where cost-map frames come from.
#[derive(Debug)]
pub enum SensorSource {
    Synthetic(SyntheticSource),
    Replay(ReplaySource),
    External(ExternalSource),
    /// No camera: the filter runs on IMU and wheel speed only.
    Disabled,
}

impl SensorSource {
    /// Gives sources that render from ground truth the current true pose.
    pub fn observe_truth(&mut self, t: f64, pose: &Pose2D) {
        if let SensorSource::Synthetic(s) = self {
            s.observe(t, pose);
        }
    }

    /// Next frame with timestamp at or before `sim_time`, if any.
    pub fn next_frame(&mut self, sim_time: f64) -> Result<FramePoll, SensorError> {
        match self {
            SensorSource::Synthetic(s) => Ok(s.poll(sim_time)),
            SensorSource::Replay(r) => Ok(r.poll(sim_time)),
            SensorSource::External(e) => e.poll_inner(sim_time, None),
            SensorSource::Disabled => Ok(FramePoll::Pending),
        }
    }
}
