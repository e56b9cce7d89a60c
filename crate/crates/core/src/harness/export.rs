//! CSV exports of intermediate signals and features.
//!
//! Signal files start with one `#` line recording the carriers and rate,
//! then a header row. Floats are written in shortest round-trip form.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::carrier::CarrierSet;
use crate::demodulation::BasebandFrame;
use crate::error::{Error, Result};
use crate::interference::MotionSignal;
use crate::segmentation::MotionFragment;

#[derive(Debug, Clone, PartialEq)]
struct SignalHeader {
    carriers_hz: Vec<u32>,
    amplitude: f64,
    rate_hz: f64,
}

fn header_line(carriers: &CarrierSet, rate_hz: f64) -> String {
    let list: Vec<String> = carriers.frequencies_hz.iter().map(u32::to_string).collect();
    format!(
        "# carriers_hz={} amplitude={} rate_hz={rate_hz}\n",
        list.join(";"),
        carriers.amplitude
    )
}

fn parse_header(line: &str) -> Result<SignalHeader> {
    let bad = || Error::Data(format!("malformed signal header '{}'", line.trim_end()));
    let body = line.strip_prefix('#').ok_or_else(bad)?;
    let (mut carriers_hz, mut amplitude, mut rate_hz) = (None, None, None);
    for field in body.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(bad)?;
        match k {
            "carriers_hz" => {
                carriers_hz = Some(v.split(';').map(|f| f.parse::<u32>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?)
            }
            "amplitude" => amplitude = Some(v.parse::<f64>().map_err(|_| bad())?),
            "rate_hz" => rate_hz = Some(v.parse::<f64>().map_err(|_| bad())?),
            _ => {}
        }
    }
    Ok(SignalHeader {
        carriers_hz: carriers_hz.ok_or_else(bad)?,
        amplitude: amplitude.ok_or_else(bad)?,
        rate_hz: rate_hz.ok_or_else(bad)?,
    })
}

fn write_signal<W: Write>(
    mut sink: W,
    carriers: &CarrierSet,
    rate_hz: f64,
    start_s: f64,
    names: (&str, &str),
    first: &[Vec<f64>],
    second: &[Vec<f64>],
) -> Result<()> {
    sink.write_all(header_line(carriers, rate_hz).as_bytes())?;
    let mut w = csv::Writer::from_writer(sink);
    let n = first.len();
    let mut head = vec!["t".to_string()];
    head.extend((1..=n).map(|k| format!("{}_{k}", names.0)));
    head.extend((1..=n).map(|k| format!("{}_{k}", names.1)));
    w.write_record(&head)?;
    let len = first.first().map_or(0, Vec::len);
    for i in 0..len {
        let mut row = vec![(start_s + i as f64 / rate_hz).to_string()];
        row.extend(first.iter().chain(second).map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

type SignalColumns = (SignalHeader, f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn read_signal<R: Read>(source: R) -> Result<SignalColumns> {
    let mut reader = BufReader::new(source);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = parse_header(&first)?;
    let n = header.carriers_hz.len();
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.len() != 1 + 2 * n {
        return Err(Error::Data(format!("expected {} columns for {n} carriers", 1 + 2 * n)));
    }
    let (mut a, mut b) = (vec![Vec::new(); n], vec![Vec::new(); n]);
    let mut start_s = None;
    for record in r.records() {
        let record = record?;
        let values: Vec<f64> = record
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Data(format!("bad number '{v}'"))))
            .collect::<Result<_>>()?;
        start_s.get_or_insert(values[0]);
        for k in 0..n {
            a[k].push(values[1 + k]);
            b[k].push(values[1 + n + k]);
        }
    }
    Ok((header, start_s.unwrap_or(0.0), a, b))
}

fn carriers_of(header: &SignalHeader) -> Result<CarrierSet> {
    CarrierSet::new(header.carriers_hz.clone(), header.amplitude)
}

/// Columns `t, I_1..I_N, Q_1..Q_N`.
pub fn write_baseband_csv<W: Write>(frame: &BasebandFrame, sink: W) -> Result<()> {
    write_signal(
        sink,
        &frame.carriers,
        frame.baseband_rate_hz,
        frame.start_s,
        ("I", "Q"),
        &frame.i_channels,
        &frame.q_channels,
    )
}

pub fn read_baseband_csv<R: Read>(source: R) -> Result<BasebandFrame> {
    let (header, start_s, i_channels, q_channels) = read_signal(source)?;
    Ok(BasebandFrame {
        carriers: carriers_of(&header)?,
        i_channels,
        q_channels,
        baseband_rate_hz: header.rate_hz,
        start_s,
    })
}

/// Columns `t, ig_1..ig_N, qg_1..qg_N`.
pub fn write_motion_csv<W: Write>(signal: &MotionSignal, sink: W) -> Result<()> {
    write_signal(
        sink,
        &signal.source_carriers,
        signal.rate_hz,
        signal.start_s,
        ("ig", "qg"),
        &signal.ig_channels,
        &signal.qg_channels,
    )
}

pub fn read_motion_csv<R: Read>(source: R) -> Result<MotionSignal> {
    let (header, start_s, ig_channels, qg_channels) = read_signal(source)?;
    Ok(MotionSignal {
        source_carriers: carriers_of(&header)?,
        ig_channels,
        qg_channels,
        rate_hz: header.rate_hz,
        start_s,
    })
}

/// One row per fragment: `start_s, end_s, snr_db`, then every resampled
/// channel in order (`x{channel}_{sample}`).
pub fn write_fragments_csv<W: Write>(fragments: &[MotionFragment], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let channels = fragments.first().map_or(0, |f| f.channels.len());
    let len = fragments.first().and_then(|f| f.channels.first()).map_or(0, Vec::len);
    let mut head = vec!["start_s".to_string(), "end_s".to_string(), "snr_db".to_string()];
    for c in 1..=channels {
        head.extend((1..=len).map(|k| format!("x{c}_{k}")));
    }
    w.write_record(&head)?;
    for f in fragments {
        if f.channels.len() != channels || f.channels.iter().any(|c| c.len() != len) {
            return Err(Error::Data("fragments differ in shape".into()));
        }
        let mut row = vec![f.start_s.to_string(), f.end_s.to_string(), f.snr_db.to_string()];
        row.extend(f.channels.iter().flatten().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `user_id, scenario, c_1..c_K`.
pub fn write_features_csv<W: Write>(rows: &[(String, String, Vec<f64>)], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let k = rows.first().map_or(0, |r| r.2.len());
    let mut head = vec!["user_id".to_string(), "scenario".to_string()];
    head.extend((1..=k).map(|i| format!("c_{i}")));
    w.write_record(&head)?;
    for (user, scenario, v) in rows {
        if v.len() != k {
            return Err(Error::Data("feature vectors differ in length".into()));
        }
        let mut row = vec![user.clone(), scenario.clone()];
        row.extend(v.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(source: R) -> Result<Vec<(String, String, Vec<f64>)>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let user = record.get(0).unwrap_or_default().to_string();
        let scenario = record.get(1).unwrap_or_default().to_string();
        let v = record
            .iter()
            .skip(2)
            .map(|x| x.parse::<f64>().map_err(|_| Error::Data(format!("bad number '{x}'"))))
            .collect::<Result<_>>()?;
        out.push((user, scenario, v));
    }
    Ok(out)
}

pub fn write_to_path(path: impl AsRef<Path>, f: impl FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    f(std::io::BufWriter::new(std::fs::File::create(path)?))
}
