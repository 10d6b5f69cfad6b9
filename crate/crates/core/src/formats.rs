//! On-disk stage files.
//!
//! * trace: CSV, one intensity per line after `#` comment lines carrying the
//!   config digest and the DC level.
//! * ADC stream: raw little-endian u16 words plus a JSON sidecar.
//! * bits: raw packed bytes (LSB-first) plus a JSON sidecar.
//!
//! The sidecar of `name.bin` is `name.json`.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::acquisition::{AdcConfig, AdcStream};
use crate::error::{Error, Result};
use crate::extraction::BitStream;
use crate::optics::IntensityTrace;

pub const PACKING_LSB_FIRST: &str = "lsb_first";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Prefixes an I/O error with the file it concerns.
fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path.display().to_string(), e))?;
    fs::write(path, text + "\n").map_err(at(path))?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

/// Writes an intensity trace. Values use the shortest representation that
/// parses back to the same f64.
pub fn write_trace_csv(path: &Path, trace: &IntensityTrace, config_digest: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(at(path))?);
    writeln!(w, "# config_digest: {config_digest}")?;
    writeln!(w, "# dc_level: {}", trace.dc_level)?;
    writeln!(w, "intensity")?;
    for x in &trace.samples {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]; returns it with its config digest.
pub fn read_trace_csv(path: &Path) -> Result<(IntensityTrace, Option<String>)> {
    let what = || format!("trace file {}", path.display());
    let reader = BufReader::new(File::open(path).map_err(at(path))?);
    let mut digest = None;
    let mut dc_level = f64::NAN;
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line == "intensity" {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                match key.trim() {
                    "config_digest" => digest = Some(value.trim().to_string()),
                    "dc_level" => {
                        dc_level = value
                            .trim()
                            .parse()
                            .map_err(|e| Error::format(what(), format!("line {}: {e}", i + 1)))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        let x: f64 = line
            .parse()
            .map_err(|e| Error::format(what(), format!("line {}: {e}", i + 1)))?;
        samples.push(x);
    }
    if dc_level.is_nan() {
        return Err(Error::format(what(), "missing dc_level header"));
    }
    Ok((IntensityTrace { samples, dc_level }, digest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcMeta {
    pub samples: usize,
    pub bits: u32,
    pub v_min: f64,
    pub v_max: f64,
    pub clipped_count: u64,
    pub byte_order: String,
    pub config_digest: String,
}

/// Writes the codes as raw little-endian u16 words plus the sidecar.
pub fn write_adc(path: &Path, stream: &AdcStream, config_digest: &str) -> Result<()> {
    let mut bytes = Vec::with_capacity(stream.codes.len() * 2);
    for c in &stream.codes {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    fs::write(path, bytes).map_err(at(path))?;
    write_json(
        &sidecar_path(path),
        &AdcMeta {
            samples: stream.codes.len(),
            bits: stream.calib.bits,
            v_min: stream.calib.v_min,
            v_max: stream.calib.v_max,
            clipped_count: stream.clipped_count,
            byte_order: "little_endian".into(),
            config_digest: config_digest.into(),
        },
    )
}

pub fn read_adc(path: &Path) -> Result<(AdcStream, AdcMeta)> {
    let what = || format!("ADC file {}", path.display());
    let meta: AdcMeta = read_json(&sidecar_path(path))?;
    let bytes = fs::read(path).map_err(at(path))?;
    if bytes.len() % 2 != 0 || bytes.len() / 2 != meta.samples {
        return Err(Error::format(
            what(),
            format!(
                "{} bytes do not hold {} 16-bit samples",
                bytes.len(),
                meta.samples
            ),
        ));
    }
    let calib = AdcConfig::new(meta.bits, meta.v_min, meta.v_max)?;
    let codes: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if let Some(c) = codes.iter().find(|&&c| c > calib.max_code()) {
        return Err(Error::format(
            what(),
            format!("code {c} exceeds {}-bit range", meta.bits),
        ));
    }
    Ok((
        AdcStream {
            codes,
            calib,
            clipped_count: meta.clipped_count,
        },
        meta,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitsMeta {
    pub bit_len: usize,
    pub m_lsb: u32,
    pub packing: String,
    pub dropped_samples: u64,
    pub sha256: String,
    pub config_digest: String,
}

/// Writes packed bits plus the sidecar.
pub fn write_bits(
    path: &Path,
    bits: &BitStream,
    m_lsb: u32,
    dropped_samples: u64,
    config_digest: &str,
) -> Result<BitsMeta> {
    fs::write(path, bits.as_bytes()).map_err(at(path))?;
    let meta = BitsMeta {
        bit_len: bits.len(),
        m_lsb,
        packing: PACKING_LSB_FIRST.into(),
        dropped_samples,
        sha256: sha256_hex(bits.as_bytes()),
        config_digest: config_digest.into(),
    };
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

/// Reads packed bits. Without a sidecar the whole file is taken as
/// `8 · len` bits.
pub fn read_bits(path: &Path) -> Result<(BitStream, Option<BitsMeta>)> {
    let what = || format!("bit file {}", path.display());
    let bytes = fs::read(path).map_err(at(path))?;
    let side = sidecar_path(path);
    if !side.exists() {
        let n = bytes.len() * 8;
        return Ok((BitStream::from_bytes(bytes, n)?, None));
    }
    let meta: BitsMeta = read_json(&side)?;
    if meta.packing != PACKING_LSB_FIRST {
        return Err(Error::format(
            what(),
            format!("unsupported packing {:?}", meta.packing),
        ));
    }
    if sha256_hex(&bytes) != meta.sha256 {
        return Err(Error::format(
            what(),
            "payload does not match the sidecar checksum",
        ));
    }
    let bits = BitStream::from_bytes(bytes, meta.bit_len).map_err(|e| Error::format(what(), e))?;
    Ok((bits, Some(meta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Toml,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Toml => "toml",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "toml" => Ok(ReportFormat::Toml),
            other => Err(Error::config(format!(
                "unknown report format {other:?} (json, toml)"
            ))),
        }
    }
}

/// Writes `value` to `<stem>.<ext>` inside `dir`; returns the path.
pub fn write_report<T: Serialize>(
    dir: &Path,
    stem: &str,
    value: &T,
    format: ReportFormat,
) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        ReportFormat::Json => write_json(&path, value)?,
        ReportFormat::Toml => {
            let text = toml::to_string_pretty(value).map_err(|e| Error::format(stem, e))?;
            fs::write(&path, text).map_err(at(&path))?;
        }
    }
    Ok(path)
}

/// Writes a CSV with a header row and one row per record.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: std::fmt::Display,
{
    let mut w = BufWriter::new(File::create(path).map_err(at(path))?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}
