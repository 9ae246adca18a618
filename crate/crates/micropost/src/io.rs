//! File formats.
//!
//! CSV files start with an optional `# config_hash=<hex>` comment line, then
//! a one-line header. Readers skip other `#` lines. Floats are written in
//! shortest round-trip form, so identical runs give identical bytes.
//!
//! The binary framing for event and click streams is a flat sequence of
//! 16-byte records: a little-endian `u64` followed by a little-endian `f64`
//! time in ns. For emission events the `u64` is the pulse index (one record
//! per photon); for clicks it is the detector number, 1 or 2.

use std::io::{self, BufRead, Read, Write};

use micropost_core::analysis::G2Report;
use micropost_core::hbt::{Clicks, CorrelationHistogram};
use micropost_core::source::EmissionEvent;
use serde::Serialize;
use smallvec::smallvec;

const HASH_PREFIX: &str = "# config_hash=";

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Writes a header and rows, preceded by the config hash line.
pub fn write_csv<W: Write, R: Serialize>(
    mut w: W,
    hash: Option<&str>,
    header: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> io::Result<()> {
    if let Some(h) = hash {
        writeln!(w, "{HASH_PREFIX}{h}")?;
    }
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()
}

pub const SPECTRUM_HEADER: [&str; 2] = ["wavelength_nm", "reflectance"];
pub const HISTOGRAM_HEADER: [&str; 2] = ["tau_ns_bin_center", "counts"];
pub const DECAY_HEADER: [&str; 2] = ["detuning_nm", "gamma_per_ns"];
pub const EVENTS_HEADER: [&str; 2] = ["pulse_index", "time_ns"];
pub const RINGDOWN_HEADER: [&str; 2] = ["time_ns", "field"];
pub const STREAK_HEADER: [&str; 2] = ["time_ns", "counts"];

pub fn write_histogram<W: Write>(w: W, hash: Option<&str>, hist: &CorrelationHistogram) -> io::Result<()> {
    let rows = hist.counts.iter().enumerate().map(|(i, &c)| (hist.bin_center(i), c));
    write_csv(w, hash, &HISTOGRAM_HEADER, rows)
}

pub fn write_events_csv<W: Write>(w: W, hash: Option<&str>, events: &[EmissionEvent]) -> io::Result<()> {
    let rows = events.iter().flat_map(|e| e.times.iter().map(move |&t| (e.pulse_index, t)));
    write_csv(w, hash, &EVENTS_HEADER, rows)
}

/// A parsed two-column CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoColumns<A, B> {
    pub hash: Option<String>,
    pub header: [String; 2],
    pub rows: Vec<(A, B)>,
}

/// Reads a two-column CSV with a header line.
pub fn read_csv<R: Read, A, B>(r: R) -> io::Result<TwoColumns<A, B>>
where
    A: serde::de::DeserializeOwned,
    B: serde::de::DeserializeOwned,
{
    let mut text = String::new();
    io::BufReader::new(r).read_to_string(&mut text)?;
    let hash = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_string());
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?;
    if headers.len() != 2 {
        return Err(invalid(format!("expected 2 columns, header has {}", headers.len())));
    }
    let header = [headers[0].to_string(), headers[1].to_string()];
    let rows = rdr.deserialize().collect::<Result<Vec<(A, B)>, _>>().map_err(csv_err)?;
    Ok(TwoColumns { hash, header, rows })
}

/// Reads a histogram CSV. Bin centres must be uniformly spaced.
pub fn read_histogram<R: Read>(r: R) -> io::Result<(Option<String>, CorrelationHistogram)> {
    let t: TwoColumns<f64, u64> = read_csv(r)?;
    if t.rows.len() < 2 {
        return Err(invalid("histogram needs at least two bins"));
    }
    let n = t.rows.len();
    let first = t.rows[0].0;
    let bw = (t.rows[n - 1].0 - first) / (n - 1) as f64;
    if !(bw > 0.0) {
        return Err(invalid("bin centres must increase"));
    }
    for (i, &(c, _)) in t.rows.iter().enumerate() {
        if (c - (first + i as f64 * bw)).abs() > 1e-6 * bw.max(1.0) {
            return Err(invalid(format!("bin centres are not uniformly spaced (row {})", i + 1)));
        }
    }
    let hist = CorrelationHistogram {
        bin_width_ns: bw,
        range_ns: -(first - bw / 2.0),
        counts: t.rows.iter().map(|r| r.1).collect(),
    };
    Ok((t.hash, hist))
}

/// Writes one 16-byte record per photon.
pub fn write_events_bin<W: Write>(mut w: W, events: &[EmissionEvent]) -> io::Result<()> {
    for e in events {
        for &t in &e.times {
            w.write_all(&e.pulse_index.to_le_bytes())?;
            w.write_all(&t.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_records<R: Read>(r: R) -> io::Result<Vec<(u64, f64)>> {
    let mut r = io::BufReader::new(r);
    let mut out = Vec::new();
    let mut buf = [0u8; 16];
    loop {
        if r.fill_buf()?.is_empty() {
            return Ok(out);
        }
        r.read_exact(&mut buf).map_err(|_| invalid("truncated record"))?;
        let (a, b) = buf.split_at(8);
        out.push((u64::from_le_bytes(a.try_into().unwrap()), f64::from_le_bytes(b.try_into().unwrap())));
    }
}

/// Inverse of [`write_events_bin`]; photons of one pulse are regrouped.
pub fn read_events_bin<R: Read>(r: R) -> io::Result<Vec<EmissionEvent>> {
    let mut out: Vec<EmissionEvent> = Vec::new();
    for (pulse, t) in read_records(r)? {
        match out.last_mut() {
            Some(last) if last.pulse_index == pulse => last.times.push(t),
            _ => out.push(EmissionEvent { pulse_index: pulse, times: smallvec![t] }),
        }
    }
    Ok(out)
}

/// Writes all clicks in time order.
pub fn write_clicks_bin<W: Write>(mut w: W, clicks: &Clicks) -> io::Result<()> {
    for rec in clicks.records() {
        w.write_all(&(rec.detector as u64).to_le_bytes())?;
        w.write_all(&rec.time_ns.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_clicks_bin<R: Read>(r: R) -> io::Result<Clicks> {
    let mut clicks = Clicks::default();
    for (det, t) in read_records(r)? {
        match det {
            1 => clicks.det1.push(t),
            2 => clicks.det2.push(t),
            other => return Err(invalid(format!("detector number {other} is neither 1 nor 2"))),
        }
    }
    Ok(clicks)
}

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: impl Into<String>, value: impl std::fmt::Display) -> &mut Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parses text produced by the `Display` impl; `#` lines are skipped.
    pub fn parse(text: &str) -> Self {
        let pairs = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self(pairs)
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub const G2_HEADER: [&str; 16] = [
    "window_ns",
    "a0",
    "a0_err",
    "a1",
    "a1_err",
    "a_inf",
    "a_inf_err",
    "g2_zero",
    "g2_zero_err",
    "g_nearest",
    "g_nearest_err",
    "beta",
    "beta_err",
    "tau_b_ns",
    "tau_b_err",
    "envelope_chi2",
];

fn g2_fields(r: &G2Report) -> [f64; 16] {
    let e = &r.envelope;
    let [_, beta_err, tau_err] = e.std_errors.unwrap_or([f64::NAN; 3]);
    [
        r.window_ns,
        r.a0,
        r.a0_err,
        r.a1,
        r.a1_err,
        r.a_inf,
        r.a_inf_err,
        r.g2_zero,
        r.g2_zero_err,
        r.g_nearest,
        r.g_nearest_err,
        e.beta,
        beta_err,
        e.tau_b_ns,
        tau_err,
        e.chi2,
    ]
}

/// One CSV row per report.
pub fn write_g2_csv<W: Write>(w: W, hash: Option<&str>, reports: &[G2Report]) -> io::Result<()> {
    write_csv(w, hash, &G2_HEADER, reports.iter().map(g2_fields))
}

pub fn g2_key_values(r: &G2Report) -> KeyValues {
    let mut kv = KeyValues::default();
    for (k, v) in G2_HEADER.iter().zip(g2_fields(r)) {
        kv.push(*k, v);
    }
    kv
}

#[cfg(test)]
mod tests {
    use super::*;
    use micropost_core::hbt::HistogramSpec;

    #[test]
    fn histogram_round_trip() {
        let mut h = CorrelationHistogram::empty(&HistogramSpec::default());
        for (i, c) in h.counts.iter_mut().enumerate() {
            *c = (i * 7 % 13) as u64;
        }
        let mut buf = Vec::new();
        write_histogram(&mut buf, Some("abc"), &h).unwrap();
        let (hash, back) = read_histogram(buf.as_slice()).unwrap();
        assert_eq!(hash.as_deref(), Some("abc"));
        assert_eq!(back.counts, h.counts);
        assert!((back.bin_width_ns - h.bin_width_ns).abs() < 1e-12);
        assert!((back.range_ns - h.range_ns).abs() < 1e-9);
    }

    #[test]
    fn header_only_histogram_is_rejected() {
        assert!(read_histogram("tau_ns_bin_center,counts\n".as_bytes()).is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let mut kv = KeyValues::default();
        kv.push("q", 3412.5).push("name", "paper_stack");
        assert_eq!(KeyValues::parse(&kv.to_string()), kv);
    }
}
