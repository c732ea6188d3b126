//! Wire format for transmitted infrastructure features, average-byte
//! accounting and a deterministic latency + bandwidth link.
//!
//! Header layout (little-endian, 120 bytes):
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 4    | magic `VICF`                           |
//! | 4      | 2    | version (u16, currently 1)             |
//! | 6      | 1    | dtype (0 = f32, 1 = f16)               |
//! | 7      | 1    | rank (1..=4)                           |
//! | 8      | 16   | shape, 4 × u32, unused slots zero      |
//! | 24     | 2    | ccr (u16)                              |
//! | 26     | 2    | scr (u16)                              |
//! | 28     | 84   | camera `R ⊕ t ⊕ K`, 21 × f32           |
//! | 112    | 8    | capture time (f64, s)                  |
//!
//! The payload follows immediately: row-major elements of the given dtype.

use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraParams;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"VICF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 120;
pub const MAX_WIRE_RANK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireDtype {
    #[default]
    F32,
    F16,
}

impl WireDtype {
    pub fn code(self) -> u8 {
        match self {
            Self::F32 => 0,
            Self::F16 => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::F32),
            1 => Some(Self::F16),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F16 => 2,
        }
    }
}

/// One encoded transmission, header and payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub tensor: Tensor,
    pub camera: CameraParams,
    pub ccr: u16,
    pub scr: u16,
    pub dtype: WireDtype,
}

impl Packet {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn payload_len(&self) -> usize {
        self.bytes.len().saturating_sub(HEADER_LEN)
    }
}

pub fn serialize(ft: &Tensor, cam: &CameraParams, ccr: u16, scr: u16, dtype: WireDtype) -> Result<Packet> {
    if ft.rank() > MAX_WIRE_RANK {
        return Err(Error::config(format!(
            "wire tensors have rank <= {MAX_WIRE_RANK}, got {}",
            ft.rank()
        )));
    }
    let mut b = Vec::with_capacity(HEADER_LEN + ft.len() * dtype.size());
    b.extend_from_slice(&MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.push(dtype.code());
    b.push(ft.rank() as u8);
    for i in 0..MAX_WIRE_RANK {
        let e = ft.shape().get(i).copied().unwrap_or(0);
        let e = u32::try_from(e).map_err(|_| Error::config("tensor extent exceeds u32"))?;
        b.extend_from_slice(&e.to_le_bytes());
    }
    b.extend_from_slice(&ccr.to_le_bytes());
    b.extend_from_slice(&scr.to_le_bytes());
    for v in cam.flatten() {
        b.extend_from_slice(&(v as f32).to_le_bytes());
    }
    b.extend_from_slice(&cam.capture_time.to_le_bytes());
    debug_assert_eq!(b.len(), HEADER_LEN);
    match dtype {
        WireDtype::F32 => {
            for &v in ft.data() {
                b.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        WireDtype::F16 => {
            for &v in ft.data() {
                b.extend_from_slice(&f16::from_f64(v).to_le_bytes());
            }
        }
    }
    Ok(Packet { bytes: b })
}

fn le<const N: usize>(b: &[u8], at: usize) -> [u8; N] {
    b[at..at + N].try_into().expect("slice length checked")
}

pub fn deserialize(p: &Packet) -> Result<Decoded> {
    let b = &p.bytes;
    if b.len() < HEADER_LEN {
        return Err(Error::protocol(
            "length",
            format!("packet has {} bytes, header alone needs {HEADER_LEN}", b.len()),
        ));
    }
    if b[0..4] != MAGIC {
        return Err(Error::protocol("magic", format!("expected VICF, got {:?}", &b[0..4])));
    }
    let version = u16::from_le_bytes(le(b, 4));
    if version != VERSION {
        return Err(Error::protocol("version", format!("unsupported version {version}")));
    }
    let dtype = WireDtype::from_code(b[6]).ok_or_else(|| Error::protocol("dtype", format!("unknown code {}", b[6])))?;
    let rank = b[7] as usize;
    if rank == 0 || rank > MAX_WIRE_RANK {
        return Err(Error::protocol("rank", format!("rank {rank} outside 1..={MAX_WIRE_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..MAX_WIRE_RANK {
        let e = u32::from_le_bytes(le(b, 8 + 4 * i)) as usize;
        if (i < rank) != (e > 0) {
            return Err(Error::protocol("shape", format!("extent {e} in slot {i} for rank {rank}")));
        }
        if i < rank {
            shape.push(e);
        }
    }
    let ccr = u16::from_le_bytes(le(b, 24));
    let scr = u16::from_le_bytes(le(b, 26));
    let mut flat = [0.0f64; 21];
    for (i, v) in flat.iter_mut().enumerate() {
        *v = f32::from_le_bytes(le(b, 28 + 4 * i)) as f64;
    }
    let capture_time = f64::from_le_bytes(le(b, 112));
    let camera =
        CameraParams::from_flat(&flat, capture_time).map_err(|e| Error::protocol("camera", e.to_string()))?;

    let count = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::protocol("shape", "element count overflows"))?;
    let want = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::protocol("shape", "payload size overflows"))?;
    let payload = &b[HEADER_LEN..];
    if payload.len() != want {
        return Err(Error::protocol(
            "length",
            format!("payload has {} bytes, shape {shape:?} needs {want}", payload.len()),
        ));
    }
    let data: Vec<f64> = match dtype {
        WireDtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        WireDtype::F16 => payload
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f64())
            .collect(),
    };
    Ok(Decoded {
        tensor: Tensor::new(&shape, data)?,
        camera,
        ccr,
        scr,
        dtype,
    })
}

/// Mean total packet size in bytes.
pub fn average_byte(packets: &[Packet]) -> Result<f64> {
    if packets.is_empty() {
        return Err(Error::Usage("average byte needs at least one packet".into()));
    }
    Ok(packets.iter().map(|p| p.len() as f64).sum::<f64>() / packets.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// bits per second
    pub bandwidth: f64,
    /// seconds
    pub latency: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            bandwidth: 10e6,
            latency: 0.01,
            seed: 0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) || !(self.latency >= 0.0) {
            return Err(Error::config(format!(
                "link needs bandwidth > 0 and latency >= 0, got {} b/s, {} s",
                self.bandwidth, self.latency
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    /// seconds
    pub arrival_delay: f64,
    /// The bandwidth-dependent part of the delay (s).
    pub serialization_delay: f64,
}

pub fn transmit(packet: &Packet, link: &LinkConfig) -> Result<Delivery> {
    link.validate()?;
    let serialization_delay = 8.0 * packet.len() as f64 / link.bandwidth;
    Ok(Delivery {
        arrival_delay: link.latency + serialization_delay,
        serialization_delay,
    })
}

/// Writes a packet verbatim as a `.vicf` feature dump.
pub fn write_vicf(path: &Path, packet: &Packet) -> Result<()> {
    std::fs::write(path, packet.as_bytes())?;
    Ok(())
}

pub fn read_vicf(path: &Path) -> Result<Decoded> {
    deserialize(&Packet::from_bytes(std::fs::read(path)?))
}
