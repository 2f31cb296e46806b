use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Exact header of station input files.
pub const STATION_HEADER: [&str; 6] = ["station", "lon_deg", "lat_deg", "year", "month", "value"];

/// One monitoring station's monthly series on the common month range.
#[derive(Debug, Clone, PartialEq)]
pub struct StationRecord {
    pub id: String,
    /// Longitude in radians.
    pub lon: f64,
    /// Latitude in radians.
    pub lat: f64,
    /// Year and month (1..=12) of the first series entry.
    pub start: (i32, u32),
    /// Monthly values; `None` marks a gap.
    pub series: Vec<Option<f64>>,
}

impl StationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.lat.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Data(format!("station {}: latitude out of range", self.id)));
        }
        if self.series.len() < 2 {
            return Err(Error::Data(format!(
                "station {}: a series needs at least 2 months, found {}",
                self.id,
                self.series.len()
            )));
        }
        Ok(())
    }

    /// Calendar month of the first entry, 0 = January.
    pub fn first_month(&self) -> usize {
        (self.start.1 - 1) as usize
    }

    pub fn missing_count(&self) -> usize {
        self.series.iter().filter(|v| v.is_none()).count()
    }
}

fn month_index(year: i32, month: u32) -> i64 {
    year as i64 * 12 + (month as i64 - 1)
}

struct Row {
    line: u64,
    lon: f64,
    lat: f64,
    month: i64,
    value: Option<f64>,
}

/// Reads station rows from `path`; see [`parse_station_csv`].
pub fn ingest_csv(path: &Path) -> Result<Vec<StationRecord>> {
    let file = std::fs::File::open(path)?;
    parse_station_csv(file)
}

/// Parses `station,lon_deg,lat_deg,year,month,value` rows. Stations keep
/// their order of first appearance and every series spans the months from
/// the earliest to the latest row of the file; months without a row, or with
/// an empty value, are gaps.
pub fn parse_station_csv<R: Read>(input: R) -> Result<Vec<StationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(STATION_HEADER.iter().copied()) {
        return Err(Error::Data(format!(
            "expected header `{}`, found `{}`",
            STATION_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<Row>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Data(format!("line {line}: {what}"));
        if rec.len() != STATION_HEADER.len() {
            return Err(bad("expected 6 fields"));
        }
        let field = |k: usize| rec[k].trim();
        let num = |k: usize| -> Result<f64> {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(&format!("`{}` is not a number in column {}", field(k), STATION_HEADER[k])))
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(bad("empty station id"));
        }
        let lon = num(1)?;
        let lat = num(2)?;
        if lat.abs() > 90.0 {
            return Err(bad("latitude outside [-90, 90]"));
        }
        let year: i32 = field(3).parse().map_err(|_| bad("bad year"))?;
        let month: u32 = field(4).parse().ok().filter(|m| (1..=12).contains(m)).ok_or_else(|| bad("bad month"))?;
        let value = if field(5).is_empty() { None } else { Some(num(5)?) };
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        if let Some(first) = entry.first() {
            if first.lon != lon || first.lat != lat {
                return Err(bad(&format!(
                    "station {id} coordinates differ from line {}",
                    first.line
                )));
            }
        }
        let m = month_index(year, month);
        if entry.iter().any(|r| r.month == m) {
            return Err(bad(&format!("station {id} repeats {year}-{month:02}")));
        }
        entry.push(Row {
            line,
            lon,
            lat,
            month: m,
            value,
        });
    }
    let Some(lo) = rows.values().flatten().map(|r| r.month).min() else {
        return Ok(Vec::new());
    };
    let hi = rows.values().flatten().map(|r| r.month).max().expect("nonempty");
    let len = (hi - lo + 1) as usize;
    let start = ((lo.div_euclid(12)) as i32, (lo.rem_euclid(12) + 1) as u32);
    Ok(order
        .into_iter()
        .map(|id| {
            let rs = &rows[&id];
            let mut series = vec![None; len];
            for r in rs {
                series[(r.month - lo) as usize] = r.value;
            }
            StationRecord {
                lon: rs[0].lon.to_radians(),
                lat: rs[0].lat.to_radians(),
                id,
                start,
                series,
            }
        })
        .collect())
}
