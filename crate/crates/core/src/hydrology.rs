//! Discharge ingestion and aggregation onto the optimisation time grid.
//!
//! Every year is mapped onto 365 nominal days starting on the first day of
//! the grid's start month. February 29 is folded into February 28, so every
//! year has the same number of steps and scenarios stay index-aligned.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_YEAR: usize = 365;

const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Length of one optimisation step.
///
/// `Custom(n)` splits the nominal year into `n` near-equal blocks; it exists
/// for toy grids in tests and tooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StepLength {
    Daily,
    Weekly,
    Monthly,
    Custom(usize),
}

impl fmt::Display for StepLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepLength::Daily => f.write_str("daily"),
            StepLength::Weekly => f.write_str("weekly"),
            StepLength::Monthly => f.write_str("monthly"),
            StepLength::Custom(n) => write!(f, "custom:{n}"),
        }
    }
}

impl FromStr for StepLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "day" => Ok(StepLength::Daily),
            "weekly" | "week" => Ok(StepLength::Weekly),
            "monthly" | "month" => Ok(StepLength::Monthly),
            other => {
                let n = other
                    .strip_prefix("custom:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| (1..=DAYS_PER_YEAR).contains(&n))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown grid '{s}'")))?;
                Ok(StepLength::Custom(n))
            }
        }
    }
}

impl From<StepLength> for String {
    fn from(s: StepLength) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for StepLength {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: StepLength,
    /// Calendar month (1–12) on which every year starts.
    pub year_start_month: u32,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::weekly()
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (year starts month {})",
            self.step, self.year_start_month
        )
    }
}

impl TimeGrid {
    pub fn new(step: StepLength, year_start_month: u32) -> Result<Self> {
        if !(1..=12).contains(&year_start_month) {
            return Err(Error::InvalidArgument(format!(
                "year start month {year_start_month} not in 1..=12"
            )));
        }
        if let StepLength::Custom(n) = step {
            if !(1..=DAYS_PER_YEAR).contains(&n) {
                return Err(Error::InvalidArgument(format!(
                    "custom grid with {n} steps"
                )));
            }
        }
        Ok(Self {
            step,
            year_start_month,
        })
    }

    pub fn daily() -> Self {
        Self {
            step: StepLength::Daily,
            year_start_month: 1,
        }
    }

    pub fn weekly() -> Self {
        Self {
            step: StepLength::Weekly,
            year_start_month: 1,
        }
    }

    pub fn monthly() -> Self {
        Self {
            step: StepLength::Monthly,
            year_start_month: 1,
        }
    }

    pub fn custom(steps_per_year: usize) -> Self {
        Self {
            step: StepLength::Custom(steps_per_year),
            year_start_month: 1,
        }
    }

    pub fn with_start_month(self, month: u32) -> Result<Self> {
        Self::new(self.step, month)
    }

    pub fn steps_per_year(&self) -> usize {
        match self.step {
            StepLength::Daily => 365,
            StepLength::Weekly => 52,
            StepLength::Monthly => 12,
            StepLength::Custom(n) => n,
        }
    }

    /// Nominal days `[start, end)` covered by step `i` of the year.
    pub fn step_bounds(&self, i: usize) -> (usize, usize) {
        let i = i % self.steps_per_year();
        match self.step {
            StepLength::Daily => (i, i + 1),
            StepLength::Weekly => (7 * i, if i == 51 { DAYS_PER_YEAR } else { 7 * i + 7 }),
            StepLength::Monthly => {
                let start: usize = (0..i).map(|k| self.month_len(k)).sum();
                (start, start + self.month_len(i))
            }
            StepLength::Custom(n) => (i * DAYS_PER_YEAR / n, (i + 1) * DAYS_PER_YEAR / n),
        }
    }

    pub fn step_days(&self, i: usize) -> usize {
        let (a, b) = self.step_bounds(i);
        b - a
    }

    /// Step of the year containing nominal day `day` (0..365).
    pub fn step_of_day(&self, day: usize) -> usize {
        debug_assert!(day < DAYS_PER_YEAR);
        match self.step {
            StepLength::Daily => day,
            StepLength::Weekly => (day / 7).min(51),
            StepLength::Monthly => {
                let mut acc = 0;
                for k in 0..12 {
                    acc += self.month_len(k);
                    if day < acc {
                        return k;
                    }
                }
                11
            }
            StepLength::Custom(n) => {
                let mut k = day * n / DAYS_PER_YEAR;
                while k + 1 < n && (k + 1) * DAYS_PER_YEAR / n <= day {
                    k += 1;
                }
                while k > 0 && k * DAYS_PER_YEAR / n > day {
                    k -= 1;
                }
                k
            }
        }
    }

    /// Calendar month (1–12) of nominal day `day`.
    pub fn month_of_day(&self, day: usize) -> u32 {
        let mut acc = 0;
        for k in 0..12 {
            acc += self.month_len(k);
            if day % DAYS_PER_YEAR < acc {
                return self.calendar_month(k);
            }
        }
        self.calendar_month(11)
    }

    /// Calendar month a step belongs to: the month containing its midpoint.
    pub fn step_month(&self, i: usize) -> u32 {
        let (a, b) = self.step_bounds(i);
        self.month_of_day((a + b) / 2)
    }

    /// Calendar month of the `k`-th month of the year (0-based).
    pub fn calendar_month(&self, k: usize) -> u32 {
        ((self.year_start_month as usize - 1 + k) % 12 + 1) as u32
    }

    fn month_len(&self, k: usize) -> usize {
        MONTH_DAYS[self.calendar_month(k) as usize - 1]
    }

    pub fn year_start(&self, start_year: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(start_year, self.year_start_month, 1)
            .expect("month validated on construction")
    }

    /// Label of the year starting in `start_year`: `1997` for calendar years,
    /// `1997/98` otherwise.
    pub fn year_label(&self, start_year: i32) -> String {
        if self.year_start_month == 1 {
            start_year.to_string()
        } else {
            format!("{start_year}/{:02}", (start_year + 1).rem_euclid(100))
        }
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self} vs {other}")))
        }
    }
}

/// Nominal day of `date` within the year starting at `start`. February 29 maps
/// onto February 28.
fn nominal_day(start: NaiveDate, date: NaiveDate) -> usize {
    let raw = (date - start).num_days() as usize;
    let mut leap_days = 0;
    let mut y = start.year();
    while y <= date.year() {
        if let Some(feb29) = NaiveDate::from_ymd_opt(y, 2, 29) {
            if feb29 >= start && feb29 <= date {
                leap_days += 1;
            }
        }
        y += 1;
    }
    raw - leap_days
}

fn next_year_start(start: NaiveDate) -> NaiveDate {
    NaiveDate::from_ymd_opt(start.year() + 1, start.month(), 1).expect("valid first of month")
}

/// Aggregates one year of daily discharges (m³/s) to per-step volumes (m³).
///
/// The series must start on the grid's year-start day and cover the full year
/// without gaps, in chronological order.
pub fn aggregate_to_grid(daily: &[(NaiveDate, f64)], grid: &TimeGrid) -> Result<Vec<f64>> {
    let Some(&(first, _)) = daily.first() else {
        return Err(Error::CoverageGap("empty series".into()));
    };
    if first.day() != 1 || first.month() != grid.year_start_month {
        return Err(Error::CoverageGap(format!(
            "series starts on {first}, expected day 1 of month {}",
            grid.year_start_month
        )));
    }
    let end = next_year_start(first);
    let expected = (end - first).num_days() as usize;
    if daily.len() != expected {
        return Err(Error::CoverageGap(format!(
            "{} days from {first}, expected {expected}",
            daily.len()
        )));
    }
    let mut volumes = vec![0.0; grid.steps_per_year()];
    for (k, &(date, q)) in daily.iter().enumerate() {
        if date != first + Duration::days(k as i64) {
            return Err(Error::CoverageGap(format!(
                "expected {} but found {date}",
                first + Duration::days(k as i64)
            )));
        }
        if !(q >= 0.0) {
            return Err(Error::InvalidArgument(format!("discharge {q} on {date}")));
        }
        volumes[grid.step_of_day(nominal_day(first, date))] += q * SECONDS_PER_DAY;
    }
    Ok(volumes)
}

/// One year of per-river inflow volumes on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroYear {
    pub label: String,
    pub start_year: i32,
    pub grid: TimeGrid,
    /// River id → per-step volumes (m³).
    pub flows: BTreeMap<String, Vec<f64>>,
}

impl HydroYear {
    pub fn new(start_year: i32, grid: TimeGrid, flows: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let year = Self {
            label: grid.year_label(start_year),
            start_year,
            grid,
            flows,
        };
        year.validate()?;
        Ok(year)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.steps_per_year();
        for (river, v) in &self.flows {
            if v.len() != n {
                return Err(Error::GridMismatch(format!(
                    "year {} river '{river}' has {} steps, grid has {n}",
                    self.label,
                    v.len()
                )));
            }
            if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "year {} river '{river}' has volume {x}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    pub fn rivers(&self) -> impl Iterator<Item = &str> {
        self.flows.keys().map(String::as_str)
    }

    pub fn total_volume(&self) -> f64 {
        self.flows.values().flatten().sum()
    }
}

/// Checks that all years share one grid and one river set.
pub fn check_years(years: &[HydroYear]) -> Result<TimeGrid> {
    let Some(first) = years.first() else {
        return Err(Error::InsufficientYears("no years given".into()));
    };
    let rivers: BTreeSet<&str> = first.rivers().collect();
    for y in years {
        first.grid.ensure_same(&y.grid)?;
        y.validate()?;
        let r: BTreeSet<&str> = y.rivers().collect();
        if r != rivers {
            return Err(Error::InvalidArgument(format!(
                "year {} has rivers {:?}, year {} has {:?}",
                y.label, r, first.label, rivers
            )));
        }
    }
    Ok(first.grid)
}

/// Result of reading a discharge file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub years: Vec<HydroYear>,
    /// Human-readable notes on years dropped as incomplete.
    pub dropped: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    river: String,
    date: String,
    discharge_m3s: String,
}

/// Reads `river,date,discharge_m3s` records and groups them into complete
/// years on `grid`. Incomplete years are dropped and reported.
pub fn read_discharge_csv<R: Read>(reader: R, grid: &TimeGrid) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut series: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();

    for (k, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line = k as u64 + 2;
        let row = rec.map_err(|e| Error::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(line),
            msg: e.to_string(),
        })?;
        let date =
            NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| Error::MalformedRow {
                line,
                msg: format!("bad date '{}': {e}", row.date),
            })?;
        let q: f64 = row.discharge_m3s.parse().map_err(|_| Error::MalformedRow {
            line,
            msg: format!("bad discharge '{}'", row.discharge_m3s),
        })?;
        if !q.is_finite() {
            return Err(Error::MalformedRow {
                line,
                msg: format!("bad discharge '{}'", row.discharge_m3s),
            });
        }
        if q < 0.0 {
            return Err(Error::NegativeDischarge {
                line,
                river: row.river,
                value: q,
            });
        }
        if row.river.is_empty() {
            return Err(Error::MalformedRow {
                line,
                msg: "empty river id".into(),
            });
        }
        let days = series.entry(row.river.clone()).or_default();
        if days.insert(date, q).is_some() {
            return Err(Error::DuplicateRecord {
                line,
                river: row.river,
                date: row.date,
            });
        }
    }

    let (Some(lo), Some(hi)) = (
        series
            .values()
            .filter_map(|d| d.keys().next())
            .min()
            .copied(),
        series
            .values()
            .filter_map(|d| d.keys().next_back())
            .max()
            .copied(),
    ) else {
        return Err(Error::NoCompleteYear);
    };

    let mut years = Vec::new();
    let mut dropped = Vec::new();
    let first_start = if lo.month() >= grid.year_start_month {
        lo.year()
    } else {
        lo.year() - 1
    };
    let mut start_year = first_start;
    loop {
        let start = grid.year_start(start_year);
        if start > hi {
            break;
        }
        let end = next_year_start(start);
        let mut flows = BTreeMap::new();
        let mut missing = Vec::new();
        for (river, days) in &series {
            let daily: Vec<(NaiveDate, f64)> =
                days.range(start..end).map(|(d, q)| (*d, *q)).collect();
            match aggregate_to_grid(&daily, grid) {
                Ok(v) => {
                    flows.insert(river.clone(), v);
                }
                Err(_) => missing.push(format!(
                    "{river} ({} of {} days)",
                    daily.len(),
                    (end - start).num_days()
                )),
            }
        }
        let label = grid.year_label(start_year);
        if missing.is_empty() {
            years.push(HydroYear::new(start_year, *grid, flows)?);
        } else if series
            .values()
            .any(|d| d.range(start..end).next().is_some())
        {
            let note = format!("year {label} incomplete: {}", missing.join(", "));
            log::warn!("{note}");
            dropped.push(note);
        }
        start_year += 1;
    }

    if years.is_empty() {
        return Err(Error::NoCompleteYear);
    }
    Ok(Ingested { years, dropped })
}

pub fn load_discharge_csv(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<Vec<HydroYear>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_discharge_csv(std::io::BufReader::new(file), grid)?.years)
}

/// A daily discharge record as written to the ingestion format.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub river: String,
    pub date: NaiveDate,
    pub discharge_m3s: f64,
}

pub fn write_discharge_csv<W: Write>(records: &[DailyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e),
    };
    w.write_record(["river", "date", "discharge_m3s"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.river.as_str(),
            &r.date.format("%Y-%m-%d").to_string(),
            &format!("{}", r.discharge_m3s),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Expands per-step volumes of consecutive grid years back into daily
/// discharges, each day of a step carrying the step's mean rate. February 29
/// is written with zero discharge so that re-ingestion reproduces the volumes
/// exactly.
pub fn volumes_to_daily(
    river: &str,
    volumes: &[f64],
    grid: &TimeGrid,
    first_year: i32,
) -> Vec<DailyRecord> {
    let spy = grid.steps_per_year();
    let mut out = Vec::new();
    for (y, chunk) in volumes.chunks(spy).enumerate() {
        let start = grid.year_start(first_year + y as i32);
        let end = next_year_start(start);
        let mut date = start;
        while date < end {
            let is_feb29 = date.month() == 2 && date.day() == 29;
            let q = if is_feb29 {
                0.0
            } else {
                let step = grid.step_of_day(nominal_day(start, date));
                chunk.get(step).copied().unwrap_or(0.0)
                    / (grid.step_days(step) as f64 * SECONDS_PER_DAY)
            };
            out.push(DailyRecord {
                river: river.to_string(),
                date,
                discharge_m3s: q,
            });
            date += Duration::days(1);
        }
    }
    out
}
