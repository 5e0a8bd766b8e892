//! Detection and receiver file parsing, daily collapse, and segment
//! decomposition.
//!
//! Input formats:
//! - receivers CSV, header `receiver_id,lon,lat`; detection radius comes
//!   from run configuration (default 500 m).
//! - detections CSV, header `fish_id,timestamp,receiver_id`; timestamps are
//!   RFC 3339 / ISO 8601 with an explicit UTC offset.
//!
//! Detections are collapsed to at most one position per fish per UTC
//! calendar day (the latest detection of the day wins), and each pair of
//! consecutive daily detections becomes one segment to impute.

use std::collections::HashMap;
use std::io::Read;

use chrono::{DateTime, NaiveDate, Utc};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, Projection, Receiver};

/// One raw detection event.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub fish_id: String,
    pub timestamp: DateTime<Utc>,
    pub receiver_id: String,
}

/// One fish-day after the daily collapse. `day_index` counts days since the
/// fish's first detected day, starting at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyDetection {
    pub fish_id: String,
    pub day_index: i64,
    pub receiver_id: String,
}

/// One gap between two consecutive daily detections of a fish.
///
/// The segment spans `t_len` days: the start detection is day t = 1, the end
/// detection is day t = T, and the `n() = T - 2` days in between are
/// unobserved.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec {
    pub fish_id: String,
    /// 1-based segment ordinal within the fish's record.
    pub k: usize,
    pub start_receiver: Receiver,
    pub end_receiver: Receiver,
    /// Segment length T in days, including both endpoint days.
    pub t_len: usize,
}

impl SegmentSpec {
    pub fn new(
        fish_id: impl Into<String>,
        k: usize,
        start_receiver: Receiver,
        end_receiver: Receiver,
        t_len: usize,
    ) -> Result<Self> {
        if t_len < 2 {
            return Err(Error::Invalid(format!("segment length T={t_len} must be >= 2")));
        }
        Ok(Self { fish_id: fish_id.into(), k, start_receiver, end_receiver, t_len })
    }

    /// Number of unobserved days in the segment.
    pub fn n(&self) -> usize {
        self.t_len - 2
    }
}

/// The receiver network: projected receivers plus the projection that maps
/// between lon/lat and the planar working frame.
#[derive(Debug, Clone)]
pub struct ReceiverSet {
    receivers: Vec<Receiver>,
    by_id: HashMap<String, usize>,
    projection: Projection,
}

impl ReceiverSet {
    pub fn new(receivers: Vec<Receiver>, projection: Projection) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(receivers.len());
        for (i, r) in receivers.iter().enumerate() {
            if by_id.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateReceiver(r.id.clone()));
            }
        }
        Ok(Self { receivers, by_id, projection })
    }

    pub fn get(&self, id: &str) -> Option<&Receiver> {
        self.by_id.get(id).map(|&i| &self.receivers[i])
    }

    pub fn receivers(&self) -> &[Receiver] {
        &self.receivers
    }

    pub fn len(&self) -> usize {
        self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receivers.is_empty()
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = record.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(idx).ok_or_else(|| Error::Parse {
        line: record_line(record),
        msg: format!("missing field `{name}`"),
    })?;
    raw.trim().parse().map_err(|e| Error::Parse {
        line: record_line(record),
        msg: format!("bad `{name}` value `{raw}`: {e}"),
    })
}

/// Parse a receivers CSV and project all positions into a planar frame
/// anchored at the centroid of the network.
pub fn parse_receivers<R: Read>(reader: R, radius_m: f64) -> Result<ReceiverSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers().map_err(csv_err)?, &["receiver_id", "lon", "lat"])?;

    let mut rows: Vec<(String, GeoPoint)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let id: String = parse_field(&record, 0, "receiver_id")?;
        let lon: f64 = parse_field(&record, 1, "lon")?;
        let lat: f64 = parse_field(&record, 2, "lat")?;
        let point = GeoPoint::new(lon, lat).map_err(|e| Error::Parse {
            line: record_line(&record),
            msg: e.to_string(),
        })?;
        rows.push((id, point));
    }

    let projection = Projection::centered_on(&rows.iter().map(|(_, p)| *p).collect::<Vec<_>>());
    let receivers = rows
        .into_iter()
        .map(|(id, geo)| Receiver::new(id, projection.to_planar(geo), radius_m))
        .collect::<Result<Vec<_>>>()?;
    ReceiverSet::new(receivers, projection)
}

/// Parse a detections CSV. Records are returned in file order; sorting and
/// receiver resolution happen downstream.
pub fn parse_detections<R: Read>(reader: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers().map_err(csv_err)?, &["fish_id", "timestamp", "receiver_id"])?;

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let fish_id: String = parse_field(&record, 0, "fish_id")?;
        let raw_ts = record.get(1).unwrap_or("");
        let timestamp = DateTime::parse_from_rfc3339(raw_ts)
            .map_err(|e| Error::Parse {
                line: record_line(&record),
                msg: format!("bad `timestamp` value `{raw_ts}`: {e}"),
            })?
            .with_timezone(&Utc);
        let receiver_id: String = parse_field(&record, 2, "receiver_id")?;
        out.push(DetectionRecord { fish_id, timestamp, receiver_id });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    Error::Parse { line, msg: e.to_string() }
}

/// Collapse detections to one record per fish per UTC calendar day, keeping
/// the latest detection of the day (ties broken by receiver id so the result
/// does not depend on input order). Output is sorted by (fish_id,
/// day_index), with day_index relative to each fish's first detected day.
pub fn collapse_daily(detections: &[DetectionRecord]) -> Vec<DailyDetection> {
    // (fish, day) -> winning (timestamp, receiver)
    let mut best: HashMap<(String, NaiveDate), (DateTime<Utc>, String)> = HashMap::new();
    for d in detections {
        let day = d.timestamp.date_naive();
        let key = (d.fish_id.clone(), day);
        let candidate = (d.timestamp, d.receiver_id.clone());
        match best.get_mut(&key) {
            Some(current) if *current >= candidate => {}
            Some(current) => *current = candidate,
            None => {
                best.insert(key, candidate);
            }
        }
    }

    let mut rows: Vec<(String, NaiveDate, String)> =
        best.into_iter().map(|((fish, day), (_, rec))| (fish, day, rec)).collect();
    rows.sort();

    let mut out = Vec::with_capacity(rows.len());
    let mut first_day: HashMap<String, NaiveDate> = HashMap::new();
    for (fish, day, receiver_id) in rows {
        let first = *first_day.entry(fish.clone()).or_insert(day);
        out.push(DailyDetection {
            fish_id: fish,
            day_index: (day - first).num_days() + 1,
            receiver_id,
        });
    }
    out
}

/// Build the segment decomposition for one fish's sorted daily record.
///
/// Fewer than two daily detections leave nothing to impute and yield an
/// empty list.
pub fn build_segments(daily: &[DailyDetection], receivers: &ReceiverSet) -> Result<Vec<SegmentSpec>> {
    if let Some(w) = daily.windows(2).find(|w| w[0].fish_id != w[1].fish_id) {
        return Err(Error::Invalid(format!(
            "build_segments expects a single fish, found `{}` and `{}`",
            w[0].fish_id, w[1].fish_id
        )));
    }

    let resolve = |id: &str| -> Result<Receiver> {
        receivers.get(id).cloned().ok_or_else(|| Error::UnknownReceiver(id.to_string()))
    };

    let mut out = Vec::new();
    for (i, pair) in daily.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let t_len = (b.day_index - a.day_index + 1) as usize;
        out.push(SegmentSpec::new(
            a.fish_id.clone(),
            i + 1,
            resolve(&a.receiver_id)?,
            resolve(&b.receiver_id)?,
            t_len,
        )?);
    }
    Ok(out)
}
