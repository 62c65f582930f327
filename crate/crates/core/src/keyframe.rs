//! Keyframe payload: the per-frame feature record a robot uploads instead of
//! raw RGB-D images.
//!
//! Text layout (OpenCV FileStorage flavoured YAML, fixed by this crate):
//!
//! ```text
//! %YAML:1.0
//! ---
//! KeyPoint:
//!    - [ <u>, <v>, <response>, <octave> ]        one line per feature
//! Depth: [ <d0>, <d1>, ... ]
//! Descriptor: !!opencv-matrix
//!    rows: <N>
//!    cols: 32
//!    dt: u
//!    data: [ <b0>,<b1>,... ]                      N*32 bytes, row-major
//! Time: <seconds since epoch>
//! ```
//!
//! Reals are written with 17 significant digits and a two-digit signed
//! exponent (`3.4756860351562500e+02`), so parsing then re-serializing is
//! byte-identical. Empty sequences are written as `[]`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const DESCRIPTOR_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPoint {
    pub u: f64,
    pub v: f64,
    pub response: f64,
    pub octave: i32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyframePayload {
    keypoints: Vec<KeyPoint>,
    depths: Vec<f64>,
    descriptors: Vec<[u8; DESCRIPTOR_BYTES]>,
    timestamp: f64,
}

impl KeyframePayload {
    pub fn new(
        keypoints: Vec<KeyPoint>,
        depths: Vec<f64>,
        descriptors: Vec<[u8; DESCRIPTOR_BYTES]>,
        timestamp: f64,
    ) -> Result<Self> {
        if keypoints.len() != depths.len() || keypoints.len() != descriptors.len() {
            return Err(Error::InvalidParams(format!(
                "keyframe lengths differ: {} keypoints, {} depths, {} descriptors",
                keypoints.len(),
                depths.len(),
                descriptors.len()
            )));
        }
        let reals = keypoints
            .iter()
            .flat_map(|k| [k.u, k.v, k.response])
            .chain(depths.iter().copied())
            .chain(std::iter::once(timestamp));
        if reals.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("keyframe contains a non-finite value".into()));
        }
        Ok(Self { keypoints, depths, descriptors, timestamp })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn keypoints(&self) -> &[KeyPoint] {
        &self.keypoints
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn descriptors(&self) -> &[[u8; DESCRIPTOR_BYTES]] {
        &self.descriptors
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 + self.len() * 240);
        out.push_str("%YAML:1.0\n---\n");
        if self.keypoints.is_empty() {
            out.push_str("KeyPoint: []\n");
        } else {
            out.push_str("KeyPoint:\n");
            for k in &self.keypoints {
                let _ = writeln!(
                    out,
                    "   - [ {}, {}, {}, {} ]",
                    fmt_real(k.u),
                    fmt_real(k.v),
                    fmt_real(k.response),
                    k.octave
                );
            }
        }
        out.push_str("Depth: ");
        write_seq(&mut out, self.depths.iter().map(|&d| fmt_real(d)), ", ");
        out.push_str("\nDescriptor: !!opencv-matrix\n");
        let _ = writeln!(out, "   rows: {}", self.descriptors.len());
        let _ = writeln!(out, "   cols: {DESCRIPTOR_BYTES}");
        out.push_str("   dt: u\n   data: ");
        write_seq(&mut out, self.descriptors.iter().flatten().map(u8::to_string), ",");
        let _ = writeln!(out, "\nTime: {}", fmt_real(self.timestamp));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines { inner: text.lines().enumerate() };
        lines.expect_exact("%YAML:1.0")?;
        lines.expect_exact("---")?;

        let (n, first) = lines.next_line()?;
        let mut keypoints = Vec::new();
        let depth_line = match first {
            "KeyPoint: []" => lines.next_line()?,
            "KeyPoint:" => loop {
                let (n, line) = lines.next_line()?;
                let Some(body) = line.strip_prefix("   - ") else { break (n, line) };
                let fields = parse_seq(n, body)?;
                let [u, v, response, octave] = fields.as_slice() else {
                    return Err(Error::parse(n, "keypoint needs 4 fields"));
                };
                keypoints.push(KeyPoint {
                    u: parse_real(n, u)?,
                    v: parse_real(n, v)?,
                    response: parse_real(n, response)?,
                    octave: octave.parse().map_err(|_| Error::parse(n, format!("bad octave `{octave}`")))?,
                });
            },
            _ => return Err(Error::parse(n, "expected `KeyPoint:`")),
        };

        let (n, line) = depth_line;
        let body = line.strip_prefix("Depth: ").ok_or_else(|| Error::parse(n, "expected `Depth:`"))?;
        let depths = parse_seq(n, body)?.iter().map(|s| parse_real(n, s)).collect::<Result<Vec<_>>>()?;

        lines.expect_exact("Descriptor: !!opencv-matrix")?;
        let rows: usize = lines.expect_field("   rows: ")?;
        let cols: usize = lines.expect_field("   cols: ")?;
        if cols != DESCRIPTOR_BYTES {
            return Err(Error::parse(0, format!("descriptor cols must be {DESCRIPTOR_BYTES}, got {cols}")));
        }
        lines.expect_exact("   dt: u")?;
        let (n, line) = lines.next_line()?;
        let body = line.strip_prefix("   data: ").ok_or_else(|| Error::parse(n, "expected `data:`"))?;
        let bytes = parse_seq(n, body)?
            .iter()
            .map(|s| s.parse::<u8>().map_err(|_| Error::parse(n, format!("bad byte `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if bytes.len() != rows * DESCRIPTOR_BYTES {
            return Err(Error::parse(n, format!("expected {} bytes, found {}", rows * DESCRIPTOR_BYTES, bytes.len())));
        }
        let descriptors = bytes
            .chunks_exact(DESCRIPTOR_BYTES)
            .map(|c| c.try_into().expect("chunk has descriptor length"))
            .collect();

        let (n, line) = lines.next_line()?;
        let t = line.strip_prefix("Time: ").ok_or_else(|| Error::parse(n, "expected `Time:`"))?;
        let timestamp = parse_real(n, t)?;
        if let Ok((n, extra)) = lines.next_line() {
            return Err(Error::parse(n, format!("unexpected trailing line `{extra}`")));
        }
        Self::new(keypoints, depths, descriptors, timestamp)
    }
}

struct Lines<'a, I: Iterator<Item = (usize, &'a str)>> {
    inner: I,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::parse(0, "unexpected end of keyframe text"))
    }

    fn expect_exact(&mut self, want: &str) -> Result<()> {
        let (n, line) = self.next_line()?;
        if line == want {
            Ok(())
        } else {
            Err(Error::parse(n, format!("expected `{want}`")))
        }
    }

    fn expect_field<T: std::str::FromStr>(&mut self, prefix: &str) -> Result<T> {
        let (n, line) = self.next_line()?;
        line.strip_prefix(prefix)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(n, format!("expected `{}<value>`", prefix.trim_start())))
    }
}

fn write_seq(out: &mut String, items: impl Iterator<Item = String>, sep: &str) {
    let mut items = items.peekable();
    if items.peek().is_none() {
        out.push_str("[]");
        return;
    }
    out.push_str("[ ");
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        out.push_str(&item);
    }
    out.push_str(" ]");
}

fn parse_seq(line: usize, body: &str) -> Result<Vec<&str>> {
    if body == "[]" {
        return Ok(Vec::new());
    }
    let inner = body
        .strip_prefix("[ ")
        .and_then(|b| b.strip_suffix(" ]"))
        .ok_or_else(|| Error::parse(line, "expected `[ ... ]`"))?;
    Ok(inner.split(',').map(str::trim).collect())
}

fn parse_real(line: usize, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(line, format!("bad real `{s}`"))),
    }
}

/// 17 significant digits with an OpenCV-style exponent (`e+02`); parses back
/// to the same `f64`.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x:.16e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent formatting");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}
