//! Event-file parsing and feature/ground-truth assembly.
//!
//! The pipeline here turns three inputs into model-ready arrays:
//! tab-delimited news-event files become a [`PanelCube`] of monthly counts per
//! country and event category, an annual index CSV becomes [`AnnualGpi`], and
//! the two meet in [`FeatureMatrix`] rows aligned with an upsampled
//! [`MonthlyGpiSeries`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};

/// Two uppercase ASCII letters locating where an event took place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("uppercase ASCII")
    }
}

impl FromStr for CountryCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() == 2 && b.iter().all(|c| c.is_ascii_uppercase()) {
            Ok(CountryCode([b[0], b[1]]))
        } else {
            Err(Error::data(format!("not a 2-letter country code: {s:?}")))
        }
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// An event-category base code: 2 to 4 decimal digits, compared as text.
/// Leading zeros are significant ("022" and "22" are different categories).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventCode(String);

impl EventCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for EventCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if (2..=4).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(EventCode(s.to_owned()))
        } else {
            Err(Error::data(format!("not a 2-4 digit event code: {s:?}")))
        }
    }
}

impl fmt::Display for EventCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for EventCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EventCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One parsed event row: when, what kind, where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub month: YearMonth,
    pub event_base_code: EventCode,
    pub country: CountryCode,
}

/// 0-based field positions of the three columns this crate reads.
///
/// The defaults fit both GDELT 1.0 daily layouts: the 57-column export
/// (through March 2013) and the 58-column export that appends SOURCEURL.
/// Both place MonthYear at 2, EventBaseCode at 27 and ActionGeo_CountryCode
/// at 51; only the declared width differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub month_year: usize,
    pub event_base_code: usize,
    pub action_geo_country_code: usize,
    /// Declared layout width, used only to validate the indices above.
    pub columns: Option<usize>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap { month_year: 2, event_base_code: 27, action_geo_country_code: 51, columns: Some(58) }
    }
}

impl ColumnMap {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.columns {
            let max = self.month_year.max(self.event_base_code).max(self.action_geo_country_code);
            if max >= w {
                return Err(Error::config(format!(
                    "column map index {max} does not fit the declared {w}-column layout"
                )));
            }
        }
        Ok(())
    }
}

/// Streaming parser over tab-delimited event lines.
///
/// Yields one [`EventRecord`] per well-formed line; lines with too few
/// columns or an unparsable month, code, or country are counted in
/// [`malformed_lines`](Self::malformed_lines) and skipped, never fatal.
/// Memory use is independent of input length.
pub struct GdeltReader<R> {
    lines: std::io::Lines<R>,
    map: ColumnMap,
    path: PathBuf,
    lines_read: u64,
    malformed: u64,
    done: bool,
}

impl<R: BufRead> GdeltReader<R> {
    fn new(input: R, map: &ColumnMap, path: PathBuf) -> Self {
        GdeltReader {
            lines: input.lines(),
            map: map.clone(),
            path,
            lines_read: 0,
            malformed: 0,
            done: false,
        }
    }

    /// Names the source in I/O errors.
    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = path.into();
        self
    }

    /// Lines seen so far, well-formed or not.
    pub fn lines_read(&self) -> u64 {
        self.lines_read
    }

    /// Lines skipped so far. Final once the iterator is exhausted.
    pub fn malformed_lines(&self) -> u64 {
        self.malformed
    }

    fn parse_line(&self, line: &str) -> Option<EventRecord> {
        let want_month = self.map.month_year;
        let want_code = self.map.event_base_code;
        let want_country = self.map.action_geo_country_code;
        let mut month = None;
        let mut code = None;
        let mut country = None;
        let last = want_month.max(want_code).max(want_country);
        for (i, field) in line.split('\t').enumerate() {
            if i == want_month {
                month = Some(field);
            }
            if i == want_code {
                code = Some(field);
            }
            if i == want_country {
                country = Some(field);
            }
            if i == last {
                break;
            }
        }
        Some(EventRecord {
            month: YearMonth::parse_compact(month?).ok()?,
            event_base_code: code?.parse().ok()?,
            country: country?.parse().ok()?,
        })
    }
}

impl<R: BufRead> Iterator for GdeltReader<R> {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.lines.next() {
                None => return None,
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(Error::io(self.path.clone(), e)));
                }
                Some(Ok(line)) => {
                    self.lines_read += 1;
                    match self.parse_line(&line) {
                        Some(rec) => return Some(Ok(rec)),
                        None => self.malformed += 1,
                    }
                }
            }
        }
    }
}

/// Opens a streaming parser over `input` with the given column positions.
pub fn parse_gdelt_events<R: BufRead>(input: R, map: &ColumnMap) -> GdeltReader<R> {
    GdeltReader::new(input, map, PathBuf::from("<input>"))
}

/// Parses everything up front. Convenience for small inputs and tests; use
/// the streaming reader for bulk files.
pub fn collect_gdelt_events<R: BufRead>(input: R, map: &ColumnMap) -> Result<(Vec<EventRecord>, u64)> {
    let mut reader = parse_gdelt_events(input, map);
    let mut records = Vec::new();
    for rec in &mut reader {
        records.push(rec?);
    }
    Ok((records, reader.malformed_lines()))
}

/// Monthly event counts keyed by (country, month, event code). An absent key
/// means zero events; stored counts are always at least 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PanelCube {
    by_country: BTreeMap<CountryCode, BTreeMap<(YearMonth, EventCode), u64>>,
}

impl PanelCube {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, rec: &EventRecord) {
        self.add_count(rec.country, rec.month, rec.event_base_code.clone(), 1);
    }

    pub fn add_count(&mut self, country: CountryCode, month: YearMonth, code: EventCode, n: u64) {
        if n == 0 {
            return;
        }
        *self.by_country.entry(country).or_default().entry((month, code)).or_insert(0) += n;
    }

    /// Merges another cube in; order of merges never changes the result.
    pub fn merge(&mut self, other: PanelCube) {
        for (country, cells) in other.by_country {
            for ((month, code), n) in cells {
                self.add_count(country, month, code, n);
            }
        }
    }

    pub fn get(&self, country: CountryCode, month: YearMonth, code: &EventCode) -> u64 {
        self.by_country
            .get(&country)
            .and_then(|cells| cells.get(&(month, code.clone())))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.by_country.is_empty()
    }

    /// Sum of all counts; equals the number of aggregated records.
    pub fn total_events(&self) -> u64 {
        self.by_country.values().flat_map(|cells| cells.values()).sum()
    }

    pub fn countries(&self) -> impl Iterator<Item = CountryCode> + '_ {
        self.by_country.keys().copied()
    }

    pub fn has_country(&self, country: CountryCode) -> bool {
        self.by_country.contains_key(&country)
    }

    /// Distinct event codes across all countries.
    pub fn distinct_codes(&self) -> usize {
        let mut codes = std::collections::BTreeSet::new();
        for cells in self.by_country.values() {
            for (_, code) in cells.keys() {
                codes.insert(code.clone());
            }
        }
        codes.len()
    }

    /// First and last month with any event for `country`.
    pub fn month_span(&self, country: CountryCode) -> Option<(YearMonth, YearMonth)> {
        let cells = self.by_country.get(&country)?;
        let first = cells.keys().next()?.0;
        let last = cells.keys().next_back()?.0;
        Some((first, last))
    }

    /// Flattened iteration in canonical (country, month, code) order.
    pub fn iter(&self) -> impl Iterator<Item = (CountryCode, YearMonth, &EventCode, u64)> + '_ {
        self.by_country.iter().flat_map(|(country, cells)| {
            cells.iter().map(move |((month, code), n)| (*country, *month, code, *n))
        })
    }

    /// Writes the cube as CSV, header `country,month,event_base_code,count`,
    /// rows sorted by key.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: csv::Error| Error::data(format!("panel write: {e}"));
        w.write_record(["country", "month", "event_base_code", "count"]).map_err(fail)?;
        for (country, month, code, n) in self.iter() {
            w.write_record([
                country.as_str(),
                &month.to_string(),
                code.as_str(),
                &n.to_string(),
            ])
            .map_err(fail)?;
        }
        w.flush().map_err(|e| Error::data(format!("panel write: {e}")))?;
        Ok(())
    }

    /// Reads a cube back from [`write_csv`](Self::write_csv) output.
    pub fn read_csv<R: std::io::Read>(input: R, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let head = r.headers().map_err(|e| Error::format(path, e.to_string()))?;
        let expect = ["country", "month", "event_base_code", "count"];
        if head != expect {
            return Err(Error::format(path, format!("expected header {expect:?}, got {head:?}")));
        }
        let mut cube = PanelCube::new();
        for (i, row) in r.records().enumerate() {
            let row = row.map_err(|e| Error::format(path, e.to_string()))?;
            let line = i + 2;
            if row.len() != 4 {
                return Err(Error::format(path, format!("line {line}: expected 4 fields")));
            }
            let country: CountryCode =
                row[0].parse().map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
            let month: YearMonth =
                row[1].parse().map_err(|e: Error| Error::format(path, format!("line {line}: {e}")))?;
            let code: EventCode =
                row[2].parse().map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
            let n: u64 = row[3]
                .parse()
                .map_err(|_| Error::format(path, format!("line {line}: bad count {:?}", &row[3])))?;
            if n == 0 {
                return Err(Error::format(path, format!("line {line}: zero count row")));
            }
            if cube.get(country, month, &code) != 0 {
                return Err(Error::format(path, format!("line {line}: duplicate key")));
            }
            cube.add_count(country, month, code, n);
        }
        Ok(cube)
    }
}

/// Groups parsed records into a [`PanelCube`]; count at each key is the
/// number of records carrying that key.
pub fn aggregate_counts(records: impl IntoIterator<Item = EventRecord>) -> PanelCube {
    let mut cube = PanelCube::new();
    for rec in records {
        cube.add(&rec);
    }
    cube
}

/// Annual index scores keyed by (country, year). Scores live in [1, 5].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnualGpi {
    entries: BTreeMap<(CountryCode, i32), f64>,
}

impl AnnualGpi {
    pub fn get(&self, country: CountryCode, year: i32) -> Option<f64> {
        self.entries.get(&(country, year)).copied()
    }

    pub fn insert(&mut self, country: CountryCode, year: i32, score: f64) -> Result<()> {
        if !(1.0..=5.0).contains(&score) {
            return Err(Error::data(format!("score {score} for {country}/{year} outside [1,5]")));
        }
        if self.entries.insert((country, year), score).is_some() {
            return Err(Error::data(format!("duplicate entry for {country}/{year}")));
        }
        Ok(())
    }

    pub fn countries(&self) -> Vec<CountryCode> {
        let mut out: Vec<CountryCode> = self.entries.keys().map(|(c, _)| *c).collect();
        out.dedup();
        out
    }

    /// (year, score) pairs for one country, ascending by year.
    pub fn years_for(&self, country: CountryCode) -> Vec<(i32, f64)> {
        self.entries
            .range((country, i32::MIN)..=(country, i32::MAX))
            .map(|((_, y), s)| (*y, *s))
            .collect()
    }
}

/// Loads an annual index CSV with header `country,year,score`.
pub fn load_gpi_annual<R: std::io::Read>(input: R, path: &Path) -> Result<AnnualGpi> {
    let mut r = csv::Reader::from_reader(input);
    let head = r.headers().map_err(|e| Error::format(path, e.to_string()))?;
    let expect = ["country", "year", "score"];
    if head != expect {
        return Err(Error::format(path, format!("expected header {expect:?}, got {head:?}")));
    }
    let mut gpi = AnnualGpi::default();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let line = i + 2;
        if row.len() != 3 {
            return Err(Error::format(path, format!("line {line}: expected 3 fields")));
        }
        let country: CountryCode =
            row[0].parse().map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let year: i32 = row[1]
            .parse()
            .map_err(|_| Error::format(path, format!("line {line}: bad year {:?}", &row[1])))?;
        let score: f64 = row[2]
            .parse()
            .map_err(|_| Error::format(path, format!("line {line}: bad score {:?}", &row[2])))?;
        gpi.insert(country, year, score)
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
    }
    Ok(gpi)
}

/// A country's index at monthly resolution: contiguous values from
/// `start_month`, each January equal to that year's annual score exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyGpiSeries {
    pub country: CountryCode,
    pub start_month: YearMonth,
    pub values: Vec<f64>,
}

impl MonthlyGpiSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn month_at(&self, i: usize) -> YearMonth {
        self.start_month.add_months(i as i64)
    }

    pub fn index_of(&self, month: YearMonth) -> Option<usize> {
        let d = self.start_month.months_until(month);
        if d >= 0 && (d as usize) < self.values.len() {
            Some(d as usize)
        } else {
            None
        }
    }

    pub fn get(&self, month: YearMonth) -> Option<f64> {
        self.index_of(month).map(|i| self.values[i])
    }
}

/// Expands annual scores to a monthly series: each annual value anchors
/// January of its year and months in between are linearly interpolated.
/// Nothing is extrapolated past the last anchor, so `A` consecutive anchors
/// produce `12(A-1) + 1` values ending at the final January.
pub fn upsample_gpi(annual: &AnnualGpi, country: CountryCode) -> Result<MonthlyGpiSeries> {
    let years = annual.years_for(country);
    if years.is_empty() {
        return Err(Error::data(format!("no annual scores for {country}")));
    }
    for pair in years.windows(2) {
        if pair[1].0 != pair[0].0 + 1 {
            return Err(Error::data(format!(
                "years for {country} are not consecutive: {} then {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    let mut values = Vec::with_capacity(12 * (years.len() - 1) + 1);
    for pair in years.windows(2) {
        let (_, a) = pair[0];
        let (_, b) = pair[1];
        for m in 0..12 {
            values.push(a + (b - a) * (m as f64) / 12.0);
        }
    }
    // Final anchor verbatim; the loop above stops one month short of it.
    values.push(years[years.len() - 1].1);
    Ok(MonthlyGpiSeries {
        country,
        start_month: YearMonth::new(years[0].0, 1)?,
        values,
    })
}

/// Dense monthly count features for one country: rows are contiguous months,
/// columns are event codes in ascending text order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub months: Vec<YearMonth>,
    pub codes: Vec<EventCode>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn n_codes(&self) -> usize {
        self.codes.len()
    }

    pub fn index_of(&self, month: YearMonth) -> Option<usize> {
        if self.months.is_empty() {
            return None;
        }
        let d = self.months[0].months_until(month);
        if d >= 0 && (d as usize) < self.months.len() {
            Some(d as usize)
        } else {
            None
        }
    }
}

/// Builds the design matrix for one country over an inclusive month range.
///
/// Columns are exactly the event codes observed for that country anywhere in
/// the range; months with no events contribute all-zero rows.
pub fn build_design_matrix(
    cube: &PanelCube,
    country: CountryCode,
    start: YearMonth,
    end: YearMonth,
) -> Result<FeatureMatrix> {
    if start > end {
        return Err(Error::data(format!("empty month range {start}..{end}")));
    }
    let cells = cube
        .by_country
        .get(&country)
        .ok_or_else(|| Error::data(format!("country {country} not present in the panel")))?;
    let n_months = start.months_until(end) as usize + 1;
    let months: Vec<YearMonth> = (0..n_months).map(|i| start.add_months(i as i64)).collect();

    let mut codes: Vec<EventCode> = Vec::new();
    for ((month, code), _) in cells.iter() {
        if *month >= start && *month <= end {
            codes.push(code.clone());
        }
    }
    codes.sort();
    codes.dedup();

    let mut values = Array2::zeros((n_months, codes.len()));
    for ((month, code), n) in cells.iter() {
        if *month >= start && *month <= end {
            let row = start.months_until(*month) as usize;
            let col = codes.binary_search(code).expect("code collected above");
            values[[row, col]] = *n as f64;
        }
    }
    Ok(FeatureMatrix { months, codes, values })
}
