//! Scenario track extraction from TLE histories or ECEF position tracks.

use std::path::Path;

use anyhow::{bail, Context, Result};
use catmouse::ephemeris::{
    ingest_pair, ingest_tracks, parse_tle, records_for, CircularKepler, RelativeTrack, ScenarioTrack, TleRecord,
};

pub fn load_tles(path: &Path) -> Result<Vec<TleRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_tle(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Records for `sat_id`, or for the first satellite in the file.
pub fn select(records: &[TleRecord], sat_id: Option<u32>) -> Result<Vec<TleRecord>> {
    let id = match sat_id {
        Some(id) => id,
        None => match records.first() {
            Some(r) => r.sat_id,
            None => bail!("no TLE records"),
        },
    };
    Ok(records_for(records, id)?)
}

#[derive(Debug, Clone)]
pub struct TleIngest {
    pub mouse: Vec<TleRecord>,
    pub cat: Vec<TleRecord>,
    /// Window start (s since the Unix epoch); defaults to the later of the
    /// two first epochs.
    pub start: Option<f64>,
    /// Window length (s).
    pub duration: f64,
    pub dt: f64,
}

pub fn from_tles(job: &TleIngest) -> Result<RelativeTrack> {
    let (Some(m0), Some(c0)) = (job.mouse.first(), job.cat.first()) else {
        bail!("both satellites need at least one TLE");
    };
    let start = job.start.unwrap_or(m0.epoch_s().max(c0.epoch_s()));
    Ok(ingest_pair(
        &job.mouse,
        &job.cat,
        start,
        start + job.duration,
        job.dt,
        &CircularKepler,
    )?)
}

pub fn from_ecef_tracks(mouse: &Path, cat: &Path, dt: f64) -> Result<RelativeTrack> {
    let m = ScenarioTrack::load(mouse).with_context(|| format!("loading {}", mouse.display()))?;
    let c = ScenarioTrack::load(cat).with_context(|| format!("loading {}", cat.display()))?;
    Ok(ingest_tracks(&m, &c, dt)?)
}
