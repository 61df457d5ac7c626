//! Comparator decisions to bits: clocked sampling, LFSR whitening and the
//! bitstream file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvester::ReadoutRecord;
use crate::rtn::read_exact_at;

/// Ordered binary sequence. Every element is 0 or 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitStream {
    bits: Vec<u8>,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps `bits`, rejecting anything other than 0 and 1.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(i) = bits.iter().position(|&b| b > 1) {
            return Err(Error::data(format!("element {i} is {} (not a bit)", bits[i])));
        }
        Ok(Self { bits })
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self {
            bits: iter.into_iter().map(u8::from).collect(),
        }
    }

    /// Parses a string of '0'/'1' characters, ignoring whitespace.
    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for (i, c) in s.bytes().enumerate() {
            match c {
                b'0' => bits.push(0),
                b'1' => bits.push(1),
                c if c.is_ascii_whitespace() => {}
                c => {
                    return Err(Error::format(
                        i as u64,
                        format!("unexpected character {:?}", c as char),
                    ))
                }
            }
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// First `n` bits (or all, if shorter).
    pub fn prefix(&self, n: usize) -> BitStream {
        Self {
            bits: self.bits[..n.min(self.bits.len())].to_vec(),
        }
    }

    /// Packs LSB-first: bit `k` lands in byte `k / 8` at position `k % 8`.
    pub fn to_packed(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (b << i))
            })
            .collect()
    }

    pub fn from_packed(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::format(
                0,
                format!("{} payload bytes cannot hold exactly {len} bits", bytes.len()),
            ));
        }
        let bits = (0..len).map(|k| (bytes[k / 8] >> (k % 8)) & 1).collect();
        Ok(Self { bits })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BITS_MAGIC)?;
        w.write_all(&BITS_VERSION.to_le_bytes())?;
        w.write_all(&0u16.to_le_bytes())?;
        w.write_all(&(self.bits.len() as u64).to_le_bytes())?;
        w.write_all(&self.to_packed())?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; BITS_HEADER_LEN];
        read_exact_at(&mut r, &mut header, 0)?;
        Self::read_binary_body(&header, r)
    }

    fn read_binary_body<R: Read>(header: &[u8; BITS_HEADER_LEN], mut r: R) -> Result<Self> {
        if &header[0..4] != BITS_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"RTNB\""));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != BITS_VERSION {
            return Err(Error::format(4, format!("unsupported bitstream version {version}")));
        }
        let len = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let len = usize::try_from(len)
            .map_err(|_| Error::format(8, format!("bit length {len} too large")))?;
        let mut payload = vec![0u8; len.div_ceil(8)];
        read_exact_at(&mut r, &mut payload, BITS_HEADER_LEN as u64)?;
        let end = (BITS_HEADER_LEN + payload.len()) as u64;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::format(end, "length mismatch: trailing bytes after payload"));
        }
        if len % 8 != 0 {
            let last = payload[payload.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(Error::format(end - 1, "non-zero padding bits in final byte"));
            }
        }
        Self::from_packed(&payload, len)
    }

    /// '0'/'1' characters followed by a single newline.
    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<()> {
        let text: Vec<u8> = self.bits.iter().map(|&b| b'0' + b).collect();
        w.write_all(&text)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>, format: BitFormat) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match format {
            BitFormat::Binary => self.write_binary(&mut w)?,
            BitFormat::Ascii => self.write_ascii(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    /// Reads either format, sniffing the RTNB magic.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(BITS_MAGIC) {
            Self::read_binary(bytes)
        } else if bytes.len() >= 4 && !bytes[..4].iter().all(|b| b.is_ascii()) {
            Err(Error::format(0, "bad magic, expected \"RTNB\" or ASCII bits"))
        } else {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| Error::format(e.valid_up_to() as u64, "invalid UTF-8"))?;
            Self::parse(text)
        }
    }
}

impl std::ops::Index<usize> for BitStream {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.bits[i]
    }
}

/// On-disk bitstream encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitFormat {
    Binary,
    Ascii,
}

pub const BITS_MAGIC: &[u8; 4] = b"RTNB";
const BITS_VERSION: u16 = 1;
/// magic(4) + version(2) + reserved(2) + bit length(8)
pub const BITS_HEADER_LEN: usize = 16;

/// Sampling clock applied to a comparator decision stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Seconds between samples.
    pub sample_period: f64,
    /// Time of the first sample, seconds.
    pub start_offset: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sample_period: 2e-3,
            start_offset: 0.0,
        }
    }
}

/// Nearest-sample clocking: `bits[k] = decision(start_offset + k * sample_period)`.
pub fn sample_bits(record: &ReadoutRecord, sampler: &SamplerConfig) -> Result<BitStream> {
    let dt = record.dt;
    let n = record.decision.len();
    if !(sampler.sample_period.is_finite() && sampler.sample_period >= dt * (1.0 - 1e-9)) {
        return Err(Error::config(format!(
            "sample period {} s is shorter than the record step {dt} s",
            sampler.sample_period
        )));
    }
    if !(sampler.start_offset.is_finite() && sampler.start_offset >= 0.0) {
        return Err(Error::config("start offset must be non-negative"));
    }
    let duration = n as f64 * dt;
    if n == 0 || sampler.start_offset >= duration {
        return Ok(BitStream::new());
    }
    let count = ((duration - sampler.start_offset) / sampler.sample_period + 1e-9).floor() as usize;
    let bits = (0..count)
        .map(|k| {
            let t = sampler.start_offset + k as f64 * sampler.sample_period;
            let idx = ((t / dt).round() as usize).min(n - 1);
            record.decision[idx]
        })
        .collect();
    Ok(BitStream { bits })
}

/// Feedback polynomial, register width and start state of a Fibonacci LFSR.
///
/// Tap `t` (1-based, `t = width` is the highest-degree term) reads register
/// bit `width - t`; the output is bit 0 before each shift.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfsrConfig {
    pub width: u32,
    pub taps: Vec<u32>,
    pub seed_state: u64,
}

impl Default for LfsrConfig {
    /// x^16 + x^14 + x^13 + x^11 + 1.
    fn default() -> Self {
        Self {
            width: 16,
            taps: vec![16, 14, 13, 11],
            seed_state: 0xACE1,
        }
    }
}

impl LfsrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=64).contains(&self.width) {
            return Err(Error::config(format!(
                "LFSR width must be in [2, 64], got {}",
                self.width
            )));
        }
        if !self.taps.contains(&self.width) {
            return Err(Error::config(format!(
                "taps {:?} must include the register width {} (polynomial degree)",
                self.taps, self.width
            )));
        }
        let mut sorted = self.taps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.taps.len() || sorted[0] == 0 {
            return Err(Error::config(format!(
                "taps {:?} must be distinct positions in [1, {}]",
                self.taps, self.width
            )));
        }
        if self.seed_state == 0 {
            return Err(Error::config("LFSR seed state must be non-zero"));
        }
        if self.width < 64 && self.seed_state >> self.width != 0 {
            return Err(Error::config(format!(
                "seed state {:#x} does not fit in {} bits",
                self.seed_state, self.width
            )));
        }
        Ok(())
    }
}

/// Autonomous Fibonacci shift register.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u64,
    width: u32,
    tap_mask: u64,
}

impl Lfsr {
    pub fn new(cfg: &LfsrConfig) -> Result<Self> {
        cfg.validate()?;
        let tap_mask = cfg
            .taps
            .iter()
            .fold(0u64, |m, &t| m | (1u64 << (cfg.width - t)));
        Ok(Self {
            state: cfg.seed_state,
            width: cfg.width,
            tap_mask,
        })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_bit(&mut self) -> u8 {
        let out = (self.state & 1) as u8;
        let feedback = (self.state & self.tap_mask).count_ones() as u64 & 1;
        self.state = (self.state >> 1) | (feedback << (self.width - 1));
        out
    }
}

impl Iterator for Lfsr {
    type Item = u8;
    fn next(&mut self) -> Option<u8> {
        Some(self.next_bit())
    }
}

/// Additive scrambler: `out[k] = input[k] XOR keystream[k]`, with the
/// keystream produced by the register running from `seed_state`.
pub fn lfsr_whiten(input: &BitStream, cfg: &LfsrConfig) -> Result<BitStream> {
    let lfsr = Lfsr::new(cfg)?;
    Ok(BitStream {
        bits: input.bits.iter().zip(lfsr).map(|(&b, k)| b ^ k).collect(),
    })
}

/// The first `n` keystream bits (equivalently, the whitening of `n` zeros).
pub fn keystream(cfg: &LfsrConfig, n: usize) -> Result<BitStream> {
    Ok(BitStream {
        bits: Lfsr::new(cfg)?.take(n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(decision: Vec<u8>, dt: f64) -> ReadoutRecord {
        ReadoutRecord {
            dt,
            v_x: vec![0.0; decision.len()],
            v_y: None,
            decision,
        }
    }

    #[test]
    fn constant_decision_gives_constant_bits() {
        let r = record(vec![1; 1000], 1e-3);
        let bits = sample_bits(&r, &SamplerConfig { sample_period: 7e-3, start_offset: 0.0 }).unwrap();
        assert_eq!(bits.len(), 142);
        assert!(bits.as_slice().iter().all(|&b| b == 1));
    }

    #[test]
    fn identity_sampling() {
        let d: Vec<u8> = (0..64).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let r = record(d.clone(), 0.5);
        let bits = sample_bits(&r, &SamplerConfig { sample_period: 0.5, start_offset: 0.0 }).unwrap();
        assert_eq!(bits.as_slice(), &d[..]);
    }

    #[test]
    fn sampling_aliases_a_fast_toggle() {
        // 0,0,1,1,0,0,1,1,... sampled every fourth step.
        let d: Vec<u8> = (0..400).map(|i| ((i / 2) % 2) as u8).collect();
        let r = record(d, 1e-3);
        let bits = sample_bits(&r, &SamplerConfig { sample_period: 4e-3, start_offset: 0.0 }).unwrap();
        assert_eq!(bits.len(), 100);
        assert!(bits.as_slice().iter().all(|&b| b == 0));
    }

    #[test]
    fn offset_past_end_is_empty_and_short_period_rejected() {
        let r = record(vec![1; 10], 1.0);
        let s = SamplerConfig { sample_period: 1.0, start_offset: 10.0 };
        assert!(sample_bits(&r, &s).unwrap().is_empty());
        let s = SamplerConfig { sample_period: 0.5, start_offset: 0.0 };
        assert!(matches!(sample_bits(&r, &s), Err(Error::Config(_))));
    }

    #[test]
    fn default_polynomial_has_full_period() {
        let cfg = LfsrConfig::default();
        let mut lfsr = Lfsr::new(&cfg).unwrap();
        let start = lfsr.state();
        let mut period = 0u32;
        loop {
            lfsr.next_bit();
            period += 1;
            if lfsr.state() == start {
                break;
            }
            assert!(period < 70_000);
        }
        assert_eq!(period, 65_535);
    }

    #[test]
    fn whitening_zeros_yields_keystream_and_self_cancels() {
        let cfg = LfsrConfig::default();
        let zeros = BitStream::from_bits(vec![0; 500]).unwrap();
        let ks = keystream(&cfg, 500).unwrap();
        assert_eq!(lfsr_whiten(&zeros, &cfg).unwrap(), ks);
        let cancelled = lfsr_whiten(&ks, &cfg).unwrap();
        assert_eq!(cancelled.count_ones(), 0);
    }

    #[test]
    fn invalid_lfsr_configs() {
        let zero = LfsrConfig { seed_state: 0, ..LfsrConfig::default() };
        assert!(matches!(lfsr_whiten(&BitStream::new(), &zero), Err(Error::Config(_))));
        let no_degree = LfsrConfig { taps: vec![14, 13], ..LfsrConfig::default() };
        assert!(no_degree.validate().is_err());
        let narrow = LfsrConfig { width: 1, taps: vec![1], seed_state: 1 };
        assert!(narrow.validate().is_err());
        let too_wide_seed = LfsrConfig { seed_state: 1 << 16, ..LfsrConfig::default() };
        assert!(too_wide_seed.validate().is_err());
    }

    #[test]
    fn lsb_first_packing() {
        let s = BitStream::parse("10110001").unwrap();
        assert_eq!(s.to_packed(), vec![0x8D]);
    }

    #[test]
    fn empty_stream_is_header_only() {
        let mut buf = Vec::new();
        BitStream::new().write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16);
        assert_eq!(BitStream::read_binary(&buf[..]).unwrap(), BitStream::new());
    }

    #[test]
    fn format_errors_carry_offsets() {
        let s = BitStream::parse("101100011").unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 18);

        let mut bad = buf.clone();
        bad[1] = b'X';
        assert!(matches!(BitStream::read_binary(&bad[..]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            BitStream::read_binary(&buf[..17]),
            Err(Error::Format { offset: 17, .. })
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(BitStream::read_binary(&long[..]), Err(Error::Format { offset: 18, .. })));
        let mut padded = buf.clone();
        padded[17] |= 0x80;
        assert!(matches!(BitStream::read_binary(&padded[..]), Err(Error::Format { offset: 17, .. })));
        assert!(matches!(BitStream::read_binary(&buf[..10]), Err(Error::Format { offset: 10, .. })));
    }

    #[test]
    fn ascii_round_trip_and_sniffing() {
        let s = BitStream::parse("0110\n").unwrap();
        let mut buf = Vec::new();
        s.write_ascii(&mut buf).unwrap();
        assert_eq!(buf, b"0110\n");
        assert_eq!(BitStream::decode(&buf).unwrap(), s);
        assert!(matches!(BitStream::decode(b"01x1"), Err(Error::Format { offset: 2, .. })));
    }
}
