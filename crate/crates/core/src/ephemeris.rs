//! TLE ingestion and relative Hill-track extraction for replay scenarios.
//!
//! Pipeline: parse TLE pairs, propagate each record until the next epoch on a
//! shared time grid, remove the junction jumps with a linear ramp, resample
//! with a natural cubic spline, recover circular elements of the mouse from
//! position and finite-difference velocity, and express the cat in the
//! mouse's Hill frame.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::MU_EARTH;
use crate::dynamics::propagate_circular;
use crate::error::{domain, Error, Result};
use crate::frames::{ecef_to_hill, OrbitalElements};

/// Default ephemeris cadence (s).
pub const EPHEMERIS_DT: f64 = 3.0;
const SECONDS_PER_DAY: f64 = 86_400.0;
const TLE_LINE_LEN: usize = 69;

/// One parsed two-line element set.
#[derive(Debug, Clone, PartialEq)]
pub struct TleRecord {
    pub name: Option<String>,
    pub sat_id: u32,
    pub epoch: DateTime<Utc>,
    pub line1: String,
    pub line2: String,
    /// Radians.
    pub inclination: f64,
    pub raan: f64,
    pub eccentricity: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    /// Revolutions per day.
    pub mean_motion: f64,
}

impl TleRecord {
    /// Epoch as seconds since the Unix epoch.
    pub fn epoch_s(&self) -> f64 {
        self.epoch.timestamp() as f64 + self.epoch.timestamp_subsec_nanos() as f64 * 1e-9
    }

    /// Semi-major axis implied by the mean motion (km).
    pub fn semi_major_axis(&self) -> f64 {
        let n = self.mean_motion * std::f64::consts::TAU / SECONDS_PER_DAY;
        (MU_EARTH / (n * n)).cbrt()
    }

    /// Circular elements at the record epoch.
    pub fn elements(&self) -> Result<OrbitalElements<f64>> {
        OrbitalElements::new(
            self.inclination,
            self.arg_perigee,
            self.raan,
            self.semi_major_axis(),
            self.mean_anomaly,
        )
    }
}

/// Modulo-10 checksum over the first 68 columns: digits count their value,
/// minus signs count one.
pub fn tle_checksum(line: &str) -> u8 {
    let sum: u32 = line
        .chars()
        .take(TLE_LINE_LEN - 1)
        .map(|c| match c {
            '0'..='9' => c as u32 - '0' as u32,
            '-' => 1,
            _ => 0,
        })
        .sum();
    (sum % 10) as u8
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn field(text: &str, from: usize, to: usize, line: usize) -> Result<&str> {
    text.get(from - 1..to)
        .map(str::trim)
        .ok_or_else(|| parse_err(line, format!("columns {from}-{to} missing")))
}

fn number<T: std::str::FromStr>(text: &str, from: usize, to: usize, line: usize) -> Result<T> {
    let raw = field(text, from, to, line)?;
    raw.parse()
        .map_err(|_| parse_err(line, format!("columns {from}-{to}: cannot parse {raw:?}")))
}

fn check_line(text: &str, number: char, line: usize) -> Result<()> {
    if text.len() < TLE_LINE_LEN || !text.is_ascii() {
        return Err(parse_err(line, format!("expected {TLE_LINE_LEN} ASCII columns")));
    }
    if !text.starts_with(number) || text.as_bytes()[1] != b' ' {
        return Err(parse_err(line, format!("expected line number {number}")));
    }
    let stated = text.as_bytes()[TLE_LINE_LEN - 1];
    if !stated.is_ascii_digit() || stated - b'0' != tle_checksum(text) {
        return Err(parse_err(line, "checksum mismatch"));
    }
    Ok(())
}

fn parse_epoch(year2: u32, day: f64, line: usize) -> Result<DateTime<Utc>> {
    let year = if year2 < 57 { 2000 + year2 } else { 1900 + year2 } as i32;
    if !(1.0..367.0).contains(&day) {
        return Err(parse_err(line, format!("epoch day {day} out of range")));
    }
    let start = NaiveDate::from_ymd_opt(year, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| parse_err(line, "invalid epoch year"))?
        .and_utc();
    let micros = ((day - 1.0) * SECONDS_PER_DAY * 1e6).round() as i64;
    Ok(start + Duration::microseconds(micros))
}

fn parse_pair(l1: &str, l2: &str, line1_no: usize, name: Option<String>) -> Result<TleRecord> {
    let line2_no = line1_no + 1;
    check_line(l1, '1', line1_no)?;
    check_line(l2, '2', line2_no)?;
    let id1: u32 = number(l1, 3, 7, line1_no)?;
    let id2: u32 = number(l2, 3, 7, line2_no)?;
    if id1 != id2 {
        return Err(parse_err(
            line2_no,
            format!("satellite number {id2} does not match {id1}"),
        ));
    }
    let year2: u32 = number(l1, 19, 20, line1_no)?;
    let day: f64 = number(l1, 21, 32, line1_no)?;
    let ecc_digits = field(l2, 27, 33, line2_no)?;
    let eccentricity: f64 = format!("0.{ecc_digits}")
        .parse()
        .map_err(|_| parse_err(line2_no, "cannot parse eccentricity"))?;
    let deg = |from, to| number::<f64>(l2, from, to, line2_no).map(f64::to_radians);
    Ok(TleRecord {
        name,
        sat_id: id1,
        epoch: parse_epoch(year2, day, line1_no)?,
        line1: l1.to_string(),
        line2: l2.to_string(),
        inclination: deg(9, 16)?,
        raan: deg(18, 25)?,
        eccentricity,
        arg_perigee: deg(35, 42)?,
        mean_anomaly: deg(44, 51)?,
        mean_motion: number(l2, 53, 63, line2_no)?,
    })
}

/// Parses two- or three-line element text. Blank lines are skipped; a line
/// that does not start a pair is taken as the name of the next record.
pub fn parse_tle(text: &str) -> Result<Vec<TleRecord>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut out = Vec::new();
    let mut name = None;
    let mut i = 0;
    while i < lines.len() {
        let (no, l) = lines[i];
        if l.starts_with("1 ") {
            let (_, l2) = *lines
                .get(i + 1)
                .ok_or_else(|| parse_err(no, "line 1 without a following line 2"))?;
            out.push(parse_pair(l, l2, no, name.take())?);
            i += 2;
        } else if l.starts_with("2 ") {
            return Err(parse_err(no, "line 2 without a preceding line 1"));
        } else {
            name = Some(l.trim().trim_start_matches("0 ").to_string());
            i += 1;
        }
    }
    Ok(out)
}

/// Records of one satellite in epoch order; duplicate epochs are rejected.
pub fn records_for(records: &[TleRecord], sat_id: u32) -> Result<Vec<TleRecord>> {
    let mut sel: Vec<TleRecord> = records.iter().filter(|r| r.sat_id == sat_id).cloned().collect();
    sel.sort_by_key(|r| r.epoch);
    if sel.windows(2).any(|w| w[0].epoch == w[1].epoch) {
        return Err(domain(format!("satellite {sat_id} has duplicate epochs")));
    }
    Ok(sel)
}

/// Source of ECEF states for a TLE record.
pub trait Propagator {
    /// Position and velocity `dt` seconds after the record epoch.
    fn state(&self, rec: &TleRecord, dt: f64) -> Result<(Vector3<f64>, Vector3<f64>)>;
}

/// Circular Kepler motion from the record's elements.
#[derive(Debug, Clone, Copy, Default)]
pub struct CircularKepler;

impl Propagator for CircularKepler {
    fn state(&self, rec: &TleRecord, dt: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
        Ok(propagate_circular(&rec.elements()?, dt))
    }
}

/// Uniformly spaced ECEF points.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSegment {
    /// Time of the first point (s, same clock as the TLE epochs).
    pub start: f64,
    pub dt: f64,
    pub points: Vec<Vector3<f64>>,
}

impl PropagationSegment {
    pub fn end(&self) -> f64 {
        self.start + self.dt * (self.points.len() - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points.len())
            .map(|i| self.start + self.dt * i as f64)
            .collect()
    }
}

/// Propagates `rec` on the grid `start + k dt` up to and including the first
/// grid time at or after `until`.
pub fn propagate_segment(
    rec: &TleRecord,
    start: f64,
    until: f64,
    dt: f64,
    propagator: &dyn Propagator,
) -> Result<PropagationSegment> {
    if !(dt > 0.0) {
        return Err(domain("segment timestep must be positive"));
    }
    if !(until > start) {
        return Err(domain("segment must end after it starts"));
    }
    let steps = ((until - start) / dt - 1e-9).ceil().max(1.0) as usize;
    let epoch = rec.epoch_s();
    let points = (0..=steps)
        .map(|k| propagator.state(rec, start + dt * k as f64 - epoch).map(|s| s.0))
        .collect::<Result<_>>()?;
    Ok(PropagationSegment { start, dt, points })
}

/// Continuous trajectory after discontinuity adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedTrajectory {
    pub start: f64,
    pub dt: f64,
    pub points: Vec<Vector3<f64>>,
    /// Remaining gap at each junction after adjustment (km).
    pub junction_residuals: Vec<f64>,
    /// Raw jump removed at each junction, the equivalent impulsive correction.
    pub corrections: Vec<Vector3<f64>>,
}

impl StitchedTrajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.points.len())
            .map(|i| self.start + self.dt * i as f64)
            .collect()
    }
}

/// Joins segments whose last and first samples share a time. Each non-final
/// segment of `k + 1` points gets `e i / k` added to point `i`, where `e` is
/// the jump to the next segment, and the duplicated junction sample is
/// dropped. The final segment is left untouched.
pub fn stitch_segments(segments: &[PropagationSegment]) -> Result<StitchedTrajectory> {
    let first = segments.first().ok_or_else(|| domain("no segments to stitch"))?;
    let dt = first.dt;
    for (j, s) in segments.iter().enumerate() {
        if s.points.len() < 2 {
            return Err(domain(format!("segment {j} has fewer than two points")));
        }
        if (s.dt - dt).abs() > 1e-12 * dt {
            return Err(domain("segments must share one timestep"));
        }
    }
    let mut points = Vec::new();
    let mut junction_residuals = Vec::new();
    let mut corrections = Vec::new();
    for (j, seg) in segments.iter().enumerate() {
        let Some(next) = segments.get(j + 1) else {
            points.extend_from_slice(&seg.points);
            break;
        };
        let gap = next.start - seg.end();
        if gap < -1e-6 * dt {
            return Err(domain(format!("segments {j} and {} overlap", j + 1)));
        }
        if gap > 1e-6 * dt {
            return Err(domain(format!("segments {j} and {} leave a gap", j + 1)));
        }
        let k = seg.points.len() - 1;
        let e = next.points[0] - seg.points[k];
        let adjusted: Vec<Vector3<f64>> = seg
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| p + e * (i as f64 / k as f64))
            .collect();
        junction_residuals.push((adjusted[k] - next.points[0]).norm());
        corrections.push(e);
        points.extend_from_slice(&adjusted[..k]);
    }
    Ok(StitchedTrajectory {
        start: first.start,
        dt,
        points,
        junction_residuals,
        corrections,
    })
}

/// Propagates a satellite's records in turn on the grid anchored at `t0`,
/// each until the next record's epoch and the last until `end`.
pub fn propagate_records(
    records: &[TleRecord],
    t0: f64,
    end: f64,
    dt: f64,
    propagator: &dyn Propagator,
) -> Result<StitchedTrajectory> {
    if records.is_empty() {
        return Err(domain("no records to propagate"));
    }
    let grid_at_or_after = |t: f64| t0 + ((t - t0) / dt - 1e-9).ceil() * dt;
    let mut segments = Vec::new();
    let mut start = grid_at_or_after(records[0].epoch_s().max(t0));
    for (j, rec) in records.iter().enumerate() {
        let until = match records.get(j + 1) {
            Some(next) => grid_at_or_after(next.epoch_s()).min(grid_at_or_after(end)),
            None => grid_at_or_after(end),
        };
        if until <= start {
            continue;
        }
        segments.push(propagate_segment(rec, start, until, dt, propagator)?);
        start = until;
        if until >= end {
            break;
        }
    }
    stitch_segments(&segments)
}

/// Natural cubic spline through 3-vector samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<Vector3<f64>>,
    m: Vec<Vector3<f64>>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[Vector3<f64>]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(domain("spline needs at least two matching samples"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("spline knots must be strictly increasing"));
        }
        // Tridiagonal system for the second derivatives, zero at both ends.
        let mut m = vec![Vector3::zeros(); n];
        if n > 2 {
            let inner = n - 2;
            let mut diag = vec![0.0; inner];
            let mut upper = vec![0.0; inner];
            let mut rhs = vec![Vector3::zeros(); inner];
            for k in 0..inner {
                let i = k + 1;
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0) * 6.0;
            }
            for k in 1..inner {
                let lower = x[k + 1] - x[k];
                let w = lower / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                let prev = rhs[k - 1];
                rhs[k] -= prev * w;
            }
            m[inner] = rhs[inner - 1] / diag[inner - 1];
            for k in (0..inner - 1).rev() {
                m[k + 1] = (rhs[k] - m[k + 2] * upper[k]) / diag[k];
            }
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, t: f64) -> Result<Vector3<f64>> {
        let (lo, hi) = self.span();
        let slack = 1e-9 * (hi - lo).abs().max(1.0);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(domain(format!("spline query {t} outside [{lo}, {hi}]")));
        }
        let t = t.clamp(lo, hi);
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return Ok(self.y[i]),
            Err(i) => i.clamp(1, self.x.len() - 1) - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        Ok(self.y[i] * a
            + self.y[i + 1] * b
            + (self.m[i] * (a * a * a - a) + self.m[i + 1] * (b * b * b - b)) * (h * h / 6.0))
    }
}

/// Spline-interpolated positions at `timestamps`.
pub fn resample_spline(times: &[f64], points: &[Vector3<f64>], timestamps: &[f64]) -> Result<Vec<Vector3<f64>>> {
    let spline = CubicSpline::new(times, points)?;
    timestamps.iter().map(|&t| spline.eval(t)).collect()
}

/// Forward differences `(x_{i+1} - x_i) / dt`; the last point repeats the
/// previous velocity.
pub fn finite_diff_velocity(points: &[Vector3<f64>], dt: f64) -> Result<Vec<Vector3<f64>>> {
    if points.len() < 2 {
        return Err(domain("velocity needs at least two points"));
    }
    if !(dt > 0.0) {
        return Err(domain("timestep must be positive"));
    }
    let mut v: Vec<Vector3<f64>> = points.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    v.push(*v.last().unwrap());
    Ok(v)
}

/// Circular elements whose reference point is `r` with orbit plane `r x v`,
/// plus the relative departure from circular speed and the radial velocity
/// fraction (the larger of the two).
pub fn circular_elements_from_state(r: &Vector3<f64>, v: &Vector3<f64>) -> Result<(OrbitalElements<f64>, f64)> {
    let h = r.cross(v);
    let (rn, hn) = (r.norm(), h.norm());
    if !(rn > 0.0 && hn > 0.0) {
        return Err(domain("state has no defined orbit plane"));
    }
    let hhat = h / hn;
    let inclination = hhat.z.clamp(-1.0, 1.0).acos();
    let node = Vector3::new(-h.y, h.x, 0.0);
    let (raan, node_hat) = if node.norm() > 1e-12 * hn {
        (node.y.atan2(node.x), node.normalize())
    } else {
        (0.0, Vector3::x())
    };
    let in_plane = hhat.cross(&node_hat);
    let u = r.dot(&in_plane).atan2(r.dot(&node_hat));
    let elems = OrbitalElements::new(inclination, 0.0, raan, rn, u)?;
    let speed_dev = (v.norm() / (MU_EARTH / rn).sqrt() - 1.0).abs();
    let radial = (r.dot(v) / (rn * v.norm())).abs();
    Ok((elems, speed_dev.max(radial)))
}

/// Time-indexed positions, the scenario exchange format
/// (`t_s,x_km,y_km,z_km`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioTrack {
    pub t: Vec<f64>,
    pub pos: Vec<Vector3<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    t_s: f64,
    x_km: f64,
    y_km: f64,
    z_km: f64,
}

impl ScenarioTrack {
    pub fn new(t: Vec<f64>, pos: Vec<Vector3<f64>>) -> Result<Self> {
        if t.len() != pos.len() {
            return Err(domain("track times and positions differ in length"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("track times must be strictly increasing"));
        }
        Ok(Self { t, pos })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["t_s", "x_km", "y_km", "z_km"] {
            return Err(Error::Format("track header must be t_s,x_km,y_km,z_km".into()));
        }
        let (mut t, mut pos) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: TrackRow = row?;
            t.push(row.t_s);
            pos.push(Vector3::new(row.x_km, row.y_km, row.z_km));
        }
        Self::new(t, pos)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (t, p) in self.t.iter().zip(&self.pos) {
            w.serialize(TrackRow {
                t_s: *t,
                x_km: p.x,
                y_km: p.y,
                z_km: p.z,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Hill-frame track of the cat plus a per-step non-circularity warning.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeTrack {
    pub track: ScenarioTrack,
    pub warnings: Vec<bool>,
}

/// Tolerance on [`circular_elements_from_state`]'s departure measure.
pub const CIRCULAR_TOLERANCE: f64 = 1e-2;

/// Expresses `cat` in the Hill frame of `mouse` at every shared timestamp.
pub fn relative_hill_track(times: &[f64], mouse: &[Vector3<f64>], cat: &[Vector3<f64>]) -> Result<RelativeTrack> {
    if mouse.len() != times.len() || cat.len() != times.len() {
        return Err(domain("mouse, cat and time arrays must share one timebase"));
    }
    if times.len() < 2 {
        return Err(domain("relative track needs at least two samples"));
    }
    let dt = times[1] - times[0];
    let vel = finite_diff_velocity(mouse, dt)?;
    let mut pos = Vec::with_capacity(times.len());
    let mut warnings = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let (elems, departure) = circular_elements_from_state(&mouse[i], &vel[i])?;
        pos.push(ecef_to_hill(&cat[i], &elems));
        warnings.push(departure > CIRCULAR_TOLERANCE);
    }
    Ok(RelativeTrack {
        track: ScenarioTrack::new(times.to_vec(), pos)?,
        warnings,
    })
}

/// Full ingestion: propagate both satellites from their TLE histories over
/// `[start, end]` on the ephemeris grid and extract the cat's Hill track.
pub fn ingest_pair(
    mouse: &[TleRecord],
    cat: &[TleRecord],
    start: f64,
    end: f64,
    dt: f64,
    propagator: &dyn Propagator,
) -> Result<RelativeTrack> {
    let m = propagate_records(mouse, start, end, dt, propagator)?;
    let c = propagate_records(cat, start, end, dt, propagator)?;
    relative_on_grid(&m.times(), &m.points, &c.times(), &c.points, dt)
}

/// Hill track of the cat from two ECEF position tracks on arbitrary
/// timebases, resampled onto a `dt` grid over their overlap.
pub fn ingest_tracks(mouse: &ScenarioTrack, cat: &ScenarioTrack, dt: f64) -> Result<RelativeTrack> {
    relative_on_grid(&mouse.t, &mouse.pos, &cat.t, &cat.pos, dt)
}

fn relative_on_grid(
    mt: &[f64],
    mp: &[Vector3<f64>],
    ct: &[f64],
    cp: &[Vector3<f64>],
    dt: f64,
) -> Result<RelativeTrack> {
    if !(dt > 0.0) {
        return Err(domain("sampling interval must be positive"));
    }
    let (Some(&m0), Some(&m1), Some(&c0), Some(&c1)) = (mt.first(), mt.last(), ct.first(), ct.last()) else {
        return Err(domain("empty trajectory"));
    };
    let lo = m0.max(c0);
    let hi = m1.min(c1);
    if !(hi > lo) {
        return Err(domain("mouse and cat trajectories do not overlap"));
    }
    let count = ((hi - lo) / dt + 1e-9).floor() as usize + 1;
    let stamps: Vec<f64> = (0..count).map(|k| lo + dt * k as f64).collect();
    let mp = resample_spline(mt, mp, &stamps)?;
    let cp = resample_spline(ct, cp, &stamps)?;
    let rel_t: Vec<f64> = stamps.iter().map(|t| t - lo).collect();
    relative_hill_track(&rel_t, &mp, &cp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::GEO_RADIUS;
    use approx::assert_relative_eq;
    use chrono::{Datelike, Timelike};
    use nalgebra::Rotation3;

    /// Builds a valid TLE pair from elements, filling the checksum column.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn make_tle(
        id: u32,
        year2: u32,
        day: f64,
        incl: f64,
        raan: f64,
        ecc7: u32,
        argp: f64,
        m: f64,
        mm: f64,
    ) -> String {
        let mut l1 = format!("1 {id:05}U 98067A   {year2:02}{day:012.8}  .00000000  00000-0  00000-0 0  999");
        let mut l2 = format!("2 {id:05} {incl:8.4} {raan:8.4} {ecc7:07} {argp:8.4} {m:8.4} {mm:11.8}    1");
        assert_eq!(l1.len(), 68, "{l1}");
        assert_eq!(l2.len(), 68, "{l2}");
        l1.push(char::from(b'0' + tle_checksum(&l1)));
        l2.push(char::from(b'0' + tle_checksum(&l2)));
        format!("{l1}\n{l2}\n")
    }

    #[test]
    fn checksum_counts_minus_as_one() {
        assert_eq!(tle_checksum("1 -"), 2);
        assert_eq!(tle_checksum("12345"), 5);
    }

    #[test]
    fn geo_tle_round_trip() {
        let text = format!(
            "SAT A\n{}",
            make_tle(41234, 24, 100.5, 0.0512, 271.3, 1234, 90.25, 180.5, 1.00271234)
        );
        let recs = parse_tle(&text).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.name.as_deref(), Some("SAT A"));
        assert_eq!(r.sat_id, 41234);
        assert_eq!((r.epoch.year(), r.epoch.ordinal(), r.epoch.hour()), (2024, 100, 12));
        assert_relative_eq!(r.inclination, 0.0512f64.to_radians(), epsilon = 1e-12);
        assert_relative_eq!(r.raan, 271.3f64.to_radians(), epsilon = 1e-12);
        assert_relative_eq!(r.eccentricity, 0.0001234, epsilon = 1e-15);
        assert_relative_eq!(r.arg_perigee, 90.25f64.to_radians(), epsilon = 1e-12);
        assert_relative_eq!(r.mean_anomaly, 180.5f64.to_radians(), epsilon = 1e-12);
        assert_relative_eq!(r.mean_motion, 1.00271234, epsilon = 1e-12);
        assert!((r.semi_major_axis() - GEO_RADIUS).abs() < 5.0);
    }

    #[test]
    fn corrupted_checksum_reports_line() {
        let good = make_tle(1, 24, 1.0, 0.0, 0.0, 0, 0.0, 0.0, 1.0027);
        let mut lines: Vec<String> = good.lines().map(String::from).collect();
        let last = lines[1].pop().unwrap();
        lines[1].push(if last == '0' { '1' } else { '0' });
        let text = format!("\n{}\n{}\n", lines[0], lines[1]);
        match parse_tle(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_tle("").unwrap().is_empty());
        assert!(parse_tle(&lines[0]).is_err());
    }

    fn geo_record(day: f64, m: f64) -> TleRecord {
        parse_tle(&make_tle(7, 24, day, 0.01, 10.0, 0, 0.0, m, 1.00273791))
            .unwrap()
            .remove(0)
    }

    #[test]
    fn segment_lengths_and_revolution() {
        let rec = geo_record(10.0, 0.0);
        let e = rec.epoch_s();
        let seg = propagate_segment(&rec, e, e + 3.0, 3.0, &CircularKepler).unwrap();
        assert_eq!(seg.points.len(), 2);
        // One sidereal day at this mean motion is one revolution.
        let day = SECONDS_PER_DAY / 1.00273791;
        let seg = propagate_segment(&rec, e, e + day, 3.0, &CircularKepler).unwrap();
        let mut swept = 0.0;
        for w in seg.points.windows(2) {
            swept += w[0].angle(&w[1]);
        }
        assert!(
            (swept - std::f64::consts::TAU).abs() < 3.0 * rec.mean_motion * std::f64::consts::TAU / SECONDS_PER_DAY
        );
        let a = rec.semi_major_axis();
        assert!(seg.points.iter().all(|p| (p.norm() / a - 1.0).abs() < 1e-3));
    }

    fn seg(start: f64, pts: &[[f64; 3]]) -> PropagationSegment {
        PropagationSegment {
            start,
            dt: 3.0,
            points: pts.iter().map(|p| Vector3::from(*p)).collect(),
        }
    }

    #[test]
    fn ramp_hand_example() {
        let a = seg(
            0.0,
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]],
        );
        let b = seg(9.0, &[[6.0, 0.0, 0.0], [7.0, 0.0, 0.0]]);
        let s = stitch_segments(&[a.clone(), b.clone()]).unwrap();
        // e = (3, 0, 0), k = 3: points 1..3 shift by 1, 2, 3.
        let xs: Vec<f64> = s.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0, 7.0]);
        assert_eq!(s.corrections, vec![Vector3::new(3.0, 0.0, 0.0)]);
        assert!(s.junction_residuals[0] < 1e-9);
        // Final segment untouched.
        assert_eq!(&s.points[3..], &b.points[..]);
    }

    #[test]
    fn continuous_segments_pass_through() {
        let a = seg(0.0, &[[0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [2.0, 1.0, 0.0]]);
        let b = seg(6.0, &[[2.0, 1.0, 0.0], [3.0, 1.0, 0.0]]);
        let s = stitch_segments(&[a.clone(), b.clone()]).unwrap();
        let mut expected = a.points[..2].to_vec();
        expected.extend_from_slice(&b.points);
        assert_eq!(s.points, expected);
        let overlap = seg(3.0, &[[9.0, 0.0, 0.0], [9.0, 0.0, 0.0]]);
        assert!(stitch_segments(&[a, overlap]).is_err());
    }

    #[test]
    fn multi_record_stitching_removes_jumps() {
        let recs = vec![geo_record(10.0, 0.0), geo_record(10.5, 180.3), geo_record(11.0, 0.6)];
        let t0 = recs[0].epoch_s();
        let s = propagate_records(&recs, t0, t0 + 1.5 * SECONDS_PER_DAY, 3.0, &CircularKepler).unwrap();
        assert_eq!(s.junction_residuals.len(), 2);
        assert!(s.junction_residuals.iter().all(|r| *r < 1e-9));
        assert!(s.corrections.iter().all(|c| c.norm() > 1.0));
        let max_step = s.points.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        assert!(max_step < 3.0 * 3.2);
    }

    #[test]
    fn spline_properties() {
        let x: Vec<f64> = (0..20).map(|i| 3.0 * i as f64).collect();
        let lin: Vec<Vector3<f64>> = x.iter().map(|t| Vector3::new(2.0 * t + 1.0, -t, 0.5)).collect();
        let s = CubicSpline::new(&x, &lin).unwrap();
        assert_eq!(s.eval(9.0).unwrap(), lin[3]);
        assert!((s.eval(10.3).unwrap() - Vector3::new(21.6, -10.3, 0.5)).norm() < 1e-9);
        assert!(s.eval(-1.0).is_err() && s.eval(100.0).is_err());
        let w = 7.292e-5;
        let xs: Vec<f64> = (0..400).map(|i| 3.0 * i as f64).collect();
        let sin: Vec<Vector3<f64>> = xs
            .iter()
            .map(|t| Vector3::new(GEO_RADIUS * (w * t).sin(), 0.0, 0.0))
            .collect();
        let s = CubicSpline::new(&xs, &sin).unwrap();
        for k in 10..390 {
            let t = 3.0 * k as f64 + 1.5;
            assert!((s.eval(t).unwrap().x - GEO_RADIUS * (w * t).sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn finite_difference_velocity_cases() {
        let still = vec![Vector3::new(1.0, 2.0, 3.0); 4];
        assert!(finite_diff_velocity(&still, 3.0)
            .unwrap()
            .iter()
            .all(|v| v.norm() == 0.0));
        let line: Vec<_> = (0..5).map(|i| Vector3::new(0.5 * 3.0 * i as f64, 0.0, 0.0)).collect();
        assert!(finite_diff_velocity(&line, 3.0)
            .unwrap()
            .iter()
            .all(|v| (v.x - 0.5).abs() < 1e-15));
        let e = OrbitalElements::equatorial(GEO_RADIUS, 0.0).unwrap();
        let track: Vec<_> = (0..100).map(|i| propagate_circular(&e, 3.0 * i as f64).0).collect();
        let v = finite_diff_velocity(&track, 3.0).unwrap();
        let circ = (MU_EARTH / GEO_RADIUS).sqrt();
        assert!(v.iter().all(|v| (v.norm() / circ - 1.0).abs() < 1e-3));
        assert!(finite_diff_velocity(&track[..1], 3.0).is_err());
    }

    fn orbit_track(e: &OrbitalElements<f64>, n: usize) -> (Vec<f64>, Vec<Vector3<f64>>) {
        let t: Vec<f64> = (0..n).map(|i| 3.0 * i as f64).collect();
        let p = t.iter().map(|&s| propagate_circular(e, s).0).collect();
        (t, p)
    }

    #[test]
    fn relative_track_cases() {
        let e = OrbitalElements::new(0.05, 0.0, 1.0, GEO_RADIUS, 0.3).unwrap();
        let (t, m) = orbit_track(&e, 50);
        let same = relative_hill_track(&t, &m, &m).unwrap();
        assert!(same.track.pos.iter().all(|p| p.norm() < 1e-9));
        assert!(same.warnings.iter().all(|w| !w));
        // Co-orbital leader: a small arc ahead shows up along-track.
        let ahead = e.with_mean_anomaly(0.3 + 1e-4);
        let (_, c) = orbit_track(&ahead, 50);
        let rel = relative_hill_track(&t, &m, &c).unwrap();
        for p in &rel.track.pos {
            assert!(p.y > 4.0 && p.y.abs() > 50.0 * p.x.abs().max(p.z.abs()));
        }
    }

    #[test]
    fn constructed_flyby_distance() {
        // Cat on a slightly inclined orbit crossing the mouse's position at
        // closest approach 8.2 km above the plane.
        let mouse = OrbitalElements::equatorial(GEO_RADIUS, 0.0).unwrap();
        let n = mouse.mean_motion();
        let t: Vec<f64> = (0..2000).map(|i| 3.0 * i as f64).collect();
        let tca = 3000.0;
        let m: Vec<_> = t.iter().map(|&s| propagate_circular(&mouse, s).0).collect();
        let c: Vec<_> = t
            .iter()
            .map(|&s| {
                let base = propagate_circular(&mouse, s).0;
                let along = Vector3::new(-(n * s).sin(), (n * s).cos(), 0.0);
                base + Vector3::new(0.0, 0.0, 8.2) + along * (0.002 * (s - tca))
            })
            .collect();
        let rel = relative_hill_track(&t, &m, &c).unwrap();
        let closest = rel.track.pos.iter().map(|p| p.norm()).fold(f64::MAX, f64::min);
        let truth = c.iter().zip(&m).map(|(a, b)| (a - b).norm()).fold(f64::MAX, f64::min);
        assert!((truth - 8.2).abs() < 1e-6);
        assert!((closest / truth - 1.0).abs() < 0.01);
    }

    #[test]
    fn track_csv_round_trip() {
        let tr = ScenarioTrack::new(
            vec![0.0, 3.0],
            vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.5, 0.25, 1e-3)],
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_s,x_km,y_km,z_km\n"));
        assert_eq!(ScenarioTrack::read_csv(&buf[..]).unwrap(), tr);
        assert!(ScenarioTrack::read_csv("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn ingest_pipeline() {
        let mouse = parse_tle(&make_tle(1, 24, 50.0, 0.02, 80.0, 0, 0.0, 10.0, 1.00273791)).unwrap();
        let cat = parse_tle(&format!(
            "{}{}",
            make_tle(2, 24, 50.0, 0.03, 80.0, 0, 0.0, 10.01, 1.00270000),
            make_tle(2, 24, 50.25, 0.03, 80.0, 0, 0.0, 100.3, 1.00270000)
        ))
        .unwrap();
        let cat = records_for(&cat, 2).unwrap();
        let start = mouse[0].epoch_s();
        let rel = ingest_pair(&mouse, &cat, start, start + 0.5 * SECONDS_PER_DAY, 3.0, &CircularKepler).unwrap();
        assert_eq!(rel.track.t[0], 0.0);
        assert_eq!(rel.track.len(), 14_401);
        assert!(rel.track.pos.iter().all(|p| p.norm() < 200.0));
    }

    #[test]
    fn ecef_tracks_on_mismatched_grids() {
        let e = OrbitalElements::equatorial(GEO_RADIUS, 0.0).unwrap();
        let ahead = e.with_mean_anomaly(2e-4);
        let grid = |start: f64, step: f64, n: usize| -> Vec<f64> { (0..n).map(|i| start + step * i as f64).collect() };
        let mt = grid(0.0, 10.0, 400);
        let ct = grid(35.0, 7.0, 500);
        let mouse = ScenarioTrack::new(mt.clone(), mt.iter().map(|&t| propagate_circular(&e, t).0).collect()).unwrap();
        let cat = ScenarioTrack::new(
            ct.clone(),
            ct.iter().map(|&t| propagate_circular(&ahead, t).0).collect(),
        )
        .unwrap();
        let rel = ingest_tracks(&mouse, &cat, 3.0).unwrap();
        assert_eq!(rel.track.t[0], 0.0);
        assert_eq!(rel.track.len(), ((3528.0 - 35.0) / 3.0) as usize + 1);
        let sep = GEO_RADIUS * 2e-4;
        for p in &rel.track.pos {
            assert!((p.y - sep).abs() < 1e-3 * sep, "{p:?}");
        }
        let far = ScenarioTrack::new(vec![1e6, 1e6 + 3.0], vec![Vector3::x(); 2]).unwrap();
        assert!(ingest_tracks(&mouse, &far, 3.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn hill_track_rotation_invariant(ax in -1.0..1.0f64, ay in -1.0..1.0f64, angle in 0.0..6.0f64, dm in -1e-3..1e-3f64, di in -1e-3..1e-3f64) {
                let e = OrbitalElements::new(0.1, 0.0, 0.7, GEO_RADIUS, 1.0).unwrap();
                let c_el = OrbitalElements::new(0.1 + di, 0.0, 0.7, GEO_RADIUS + 3.0, 1.0 + dm).unwrap();
                let (t, m) = orbit_track(&e, 30);
                let (_, c) = orbit_track(&c_el, 30);
                let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(ax, ay, 0.3)), angle);
                let mr: Vec<_> = m.iter().map(|p| rot * p).collect();
                let cr: Vec<_> = c.iter().map(|p| rot * p).collect();
                let a = relative_hill_track(&t, &m, &c).unwrap();
                let b = relative_hill_track(&t, &mr, &cr).unwrap();
                for (p, q) in a.track.pos.iter().zip(&b.track.pos) {
                    prop_assert!((p - q).norm() < 1e-6);
                }
            }

            #[test]
            fn spline_reproduces_knots(vals in proptest::collection::vec(-1e3..1e3f64, 3..30)) {
                let x: Vec<f64> = (0..vals.len()).map(|i| 3.0 * i as f64).collect();
                let y: Vec<_> = vals.iter().map(|v| Vector3::new(*v, -v, 2.0 * v)).collect();
                let s = CubicSpline::new(&x, &y).unwrap();
                for (xi, yi) in x.iter().zip(&y) {
                    prop_assert!((s.eval(*xi).unwrap() - yi).norm() < 1e-9);
                }
            }

            #[test]
            fn ramp_is_linear_in_index(ex in -10.0..10.0f64, k in 2usize..40) {
                let pts: Vec<[f64; 3]> = (0..=k).map(|i| [i as f64, 0.0, 0.0]).collect();
                let a = seg(0.0, &pts);
                let b = seg(3.0 * k as f64, &[[k as f64 + ex, 0.0, 0.0], [k as f64 + ex + 1.0, 0.0, 0.0]]);
                let s = stitch_segments(&[a.clone(), b]).unwrap();
                let added: Vec<f64> = (0..k).map(|i| s.points[i].x - a.points[i].x).collect();
                for w in added.windows(3) {
                    prop_assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-9);
                }
                prop_assert!(s.junction_residuals[0] < 1e-9);
            }
        }
    }
}
