//! Input tables, labels, year-based splits, the train-fit standardizer and
//! a synthetic fixture generator.
//!
//! Three CSV tables feed the model (header row required, UTF-8, `.` decimal
//! separator):
//!
//! - `playas.csv`: `playa_id, huc8, author, <static attributes>, centroid_x, centroid_y`
//! - `monthly.csv`: `playa_id, year, month, <weather columns>, water_pixels`
//! - `lulc.csv`: `playa_id, year, frac_<class>...`
//!
//! Which attribute, weather and land-cover columns are read is decided by a
//! [`FeatureSchema`]; the model input width follows from it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::SequenceSample;
use crate::numeric::Matrix;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// A calendar month.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Data(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }

    /// Months since year 0.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        Self {
            year: ordinal.div_euclid(12) as i32,
            month: ordinal.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Number of months from `first` through `last`, inclusive.
pub fn months_inclusive(first: YearMonth, last: YearMonth) -> usize {
    (last.ordinal() - first.ordinal() + 1).max(0) as usize
}

/// Inclusive year windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: (i32, i32),
    pub validation: (i32, i32),
    pub test: (i32, i32),
}

impl Default for SplitSpec {
    /// Train 1984–2010, validation 2011–2014, test 2015–2018.
    fn default() -> Self {
        Self {
            train: (1984, 2010),
            validation: (2011, 2014),
            test: (2015, 2018),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let windows = [self.train, self.validation, self.test];
        for (lo, hi) in windows {
            if lo > hi {
                return Err(Error::Config(format!("empty split window {lo}..={hi}")));
            }
        }
        if self.train.1 + 1 != self.validation.0 || self.validation.1 + 1 != self.test.0 {
            return Err(Error::Config(format!(
                "split windows must be contiguous and ordered: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn window(&self, split: Split) -> (i32, i32) {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

pub fn split_by_year(year: i32, spec: &SplitSpec) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|&s| {
            let (lo, hi) = spec.window(s);
            (lo..=hi).contains(&year)
        })
        .ok_or_else(|| Error::Data(format!("year {year} is outside every split window")))
}

/// 1 if at least one water pixel was detected.
pub fn derive_label(water_pixel_count: i64) -> Result<u8> {
    if water_pixel_count < 0 {
        return Err(Error::Data(format!(
            "negative water pixel count {water_pixel_count}"
        )));
    }
    Ok(u8::from(water_pixel_count >= 1))
}

/// Ordered numeric input columns, in three groups. Land-cover entries are
/// class names; their CSV columns are `frac_<class>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub weather: Vec<String>,
    pub static_attributes: Vec<String>,
    pub land_cover: Vec<String>,
}

pub const DEFAULT_WEATHER: [&str; 3] = ["temp_c", "precip_mm", "vpd"];
pub const DEFAULT_STATIC: [&str; 8] = [
    "area_acres",
    "wet_freq",
    "road_dist_ft",
    "sat_thickness",
    "healthy",
    "farmed",
    "modified",
    "cluster",
];
pub const DEFAULT_LAND_COVER: [&str; 13] = [
    "water",
    "urban",
    "clearcut",
    "mining",
    "barren",
    "deciduous",
    "evergreen",
    "mixed",
    "grassland",
    "shrubland",
    "cropland",
    "pasture",
    "wetland",
];

impl Default for FeatureSchema {
    fn default() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            weather: own(&DEFAULT_WEATHER),
            static_attributes: own(&DEFAULT_STATIC),
            land_cover: own(&DEFAULT_LAND_COVER),
        }
    }
}

impl FeatureSchema {
    pub fn width(&self) -> usize {
        self.weather.len() + self.static_attributes.len() + self.land_cover.len()
    }

    /// Feature names in model-input order.
    pub fn names(&self) -> Vec<String> {
        self.weather
            .iter()
            .chain(&self.static_attributes)
            .cloned()
            .chain(self.land_cover.iter().map(|c| lulc_column(c)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.names();
        if names.is_empty() {
            return Err(Error::Config("feature schema has no columns".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::Config(format!("duplicate feature {n:?}")));
            }
        }
        Ok(())
    }
}

pub fn lulc_column(class: &str) -> String {
    format!("frac_{class}")
}

/// Unit of a default-schema feature.
pub fn unit_of(name: &str) -> Option<&'static str> {
    Some(match name {
        "temp_c" => "°C",
        "precip_mm" => "mm",
        "vpd" => "hPa",
        "area_acres" => "acres",
        "wet_freq" => "fraction of months",
        "road_dist_ft" => "feet",
        "sat_thickness" => "feet",
        "healthy" | "farmed" | "modified" | "cluster" => "0/1 flag",
        n if n.starts_with("frac_") => "fraction",
        _ => return None,
    })
}

/// Dense category indices and the shared monthly timeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetVocab {
    /// Index `i` holds the id of playa `i`.
    pub playa_ids: Vec<String>,
    pub huc8: Vec<String>,
    pub authors: Vec<String>,
    pub first_month: YearMonth,
    pub last_month: YearMonth,
}

impl DatasetVocab {
    pub fn timeline_len(&self) -> usize {
        months_inclusive(self.first_month, self.last_month)
    }

    pub fn sizes(&self) -> crate::model::VocabSizes {
        crate::model::VocabSizes {
            playa_id: self.playa_ids.len(),
            huc8: self.huc8.len(),
            author: self.authors.len(),
        }
    }
}

/// Order ids numerically when both parse as integers, lexically otherwise.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i128>(), b.parse::<i128>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn sorted_unique<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = values.map(str::to_string).collect();
    v.sort_by(|a, b| compare_ids(a, b));
    v.dedup();
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlayaRow {
    pub playa_id: String,
    pub huc8: String,
    pub author: String,
    /// In `schema.static_attributes` order.
    pub attributes: Vec<f64>,
    pub centroid: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyRow {
    pub playa_id: String,
    pub month: YearMonth,
    /// In `schema.weather` order.
    pub weather: Vec<f64>,
    pub water_pixels: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LulcRow {
    pub playa_id: String,
    pub year: i32,
    /// In `schema.land_cover` order.
    pub fractions: Vec<f64>,
}

/// The three input tables as parsed rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTables {
    pub schema: FeatureSchema,
    pub playas: Vec<PlayaRow>,
    pub monthly: Vec<MonthlyRow>,
    pub lulc: Vec<LulcRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TablePaths {
    pub playas: PathBuf,
    pub monthly: PathBuf,
    pub lulc: PathBuf,
}

impl TablePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            playas: dir.join("playas.csv"),
            monthly: dir.join("monthly.csv"),
            lulc: dir.join("lulc.csv"),
        }
    }
}

struct CsvTable {
    path: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl CsvTable {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::in_file(path, e))?;
        let headers = reader.headers().map_err(|e| Error::in_file(path, e))?.clone();
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::in_file(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::in_file(&self.path, format!("missing column {name:?}")))
    }

    fn err(&self, line: u64, msg: impl fmt::Display) -> Error {
        Error::in_file(&self.path, format!("line {line}: {msg}"))
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, line: u64, col: usize) -> Result<&'r str> {
        rec.get(col)
            .ok_or_else(|| self.err(line, format!("missing field {col}")))
    }

    fn parse<T: std::str::FromStr>(
        &self,
        rec: &csv::StringRecord,
        line: u64,
        col: usize,
        name: &str,
    ) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.field(rec, line, col)?;
        raw.parse::<T>()
            .map_err(|e| self.err(line, format!("column {name}: cannot parse {raw:?}: {e}")))
    }
}

impl RawTables {
    pub fn read(paths: &TablePaths, schema: &FeatureSchema) -> Result<Self> {
        schema.validate()?;
        Ok(Self {
            schema: schema.clone(),
            playas: read_playas(&paths.playas, schema)?,
            monthly: read_monthly(&paths.monthly, schema)?,
            lulc: read_lulc(&paths.lulc, schema)?,
        })
    }

    /// Write the tables with shortest round-trip float formatting.
    pub fn write(&self, paths: &TablePaths) -> Result<()> {
        let s = &self.schema;
        let mut w = csv::Writer::from_path(&paths.playas)?;
        let mut header = vec!["playa_id".to_string(), "huc8".into(), "author".into()];
        header.extend(s.static_attributes.iter().cloned());
        header.extend(["centroid_x".to_string(), "centroid_y".into()]);
        w.write_record(&header)?;
        for p in &self.playas {
            let mut rec = vec![p.playa_id.clone(), p.huc8.clone(), p.author.clone()];
            rec.extend(p.attributes.iter().map(|v| v.to_string()));
            let (x, y) = p.centroid.unwrap_or((f64::NAN, f64::NAN));
            rec.extend([x.to_string(), y.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(&paths.monthly)?;
        let mut header = vec!["playa_id".to_string(), "year".into(), "month".into()];
        header.extend(s.weather.iter().cloned());
        header.push("water_pixels".into());
        w.write_record(&header)?;
        for m in &self.monthly {
            let mut rec = vec![
                m.playa_id.clone(),
                m.month.year.to_string(),
                m.month.month.to_string(),
            ];
            rec.extend(m.weather.iter().map(|v| v.to_string()));
            rec.push(m.water_pixels.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;

        write_lulc_csv(&paths.lulc, &s.land_cover, &self.lulc)
    }

    /// Keep only the first `n` playas in id order, with their rows.
    pub fn truncate_playas(&mut self, n: usize) {
        let mut ids: Vec<&str> = self.playas.iter().map(|p| p.playa_id.as_str()).collect();
        ids.sort_by(|a, b| compare_ids(a, b));
        let keep: std::collections::HashSet<String> =
            ids.into_iter().take(n).map(str::to_string).collect();
        self.playas.retain(|p| keep.contains(&p.playa_id));
        self.monthly.retain(|m| keep.contains(&m.playa_id));
        self.lulc.retain(|l| keep.contains(&l.playa_id));
    }
}

pub fn write_lulc_csv(path: &Path, classes: &[String], rows: &[LulcRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["playa_id".to_string(), "year".into()];
    header.extend(classes.iter().map(|c| lulc_column(c)));
    w.write_record(&header)?;
    for l in rows {
        let mut rec = vec![l.playa_id.clone(), l.year.to_string()];
        rec.extend(l.fractions.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_playas(path: &Path, schema: &FeatureSchema) -> Result<Vec<PlayaRow>> {
    let t = CsvTable::read(path)?;
    let id = t.column("playa_id")?;
    let huc = t.column("huc8")?;
    let author = t.column("author")?;
    let attrs: Vec<usize> = schema
        .static_attributes
        .iter()
        .map(|n| t.column(n))
        .collect::<Result<_>>()?;
    let cx = t.columns.get("centroid_x").copied();
    let cy = t.columns.get("centroid_y").copied();
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let mut attributes = Vec::with_capacity(attrs.len());
        for (&c, name) in attrs.iter().zip(&schema.static_attributes) {
            let v: f64 = t.parse(rec, line, c, name)?;
            if !v.is_finite() {
                return Err(t.err(line, format!("column {name}: non-finite value")));
            }
            attributes.push(v);
        }
        let centroid = match (cx, cy) {
            (Some(x), Some(y)) => {
                let x: f64 = t.parse(rec, line, x, "centroid_x")?;
                let y: f64 = t.parse(rec, line, y, "centroid_y")?;
                (x.is_finite() && y.is_finite()).then_some((x, y))
            }
            _ => None,
        };
        out.push(PlayaRow {
            playa_id: t.field(rec, line, id)?.to_string(),
            huc8: t.field(rec, line, huc)?.to_string(),
            author: t.field(rec, line, author)?.to_string(),
            attributes,
            centroid,
        });
    }
    Ok(out)
}

fn read_monthly(path: &Path, schema: &FeatureSchema) -> Result<Vec<MonthlyRow>> {
    let t = CsvTable::read(path)?;
    let id = t.column("playa_id")?;
    let year = t.column("year")?;
    let month = t.column("month")?;
    let water = t.column("water_pixels")?;
    let weather: Vec<usize> = schema
        .weather
        .iter()
        .map(|n| t.column(n))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let y: i32 = t.parse(rec, line, year, "year")?;
        let m: u32 = t.parse(rec, line, month, "month")?;
        let ym = YearMonth::new(y, m).map_err(|e| t.err(line, e))?;
        let mut values = Vec::with_capacity(weather.len());
        for (&c, name) in weather.iter().zip(&schema.weather) {
            let v: f64 = t.parse(rec, line, c, name)?;
            if !v.is_finite() {
                return Err(t.err(line, format!("column {name}: non-finite value")));
            }
            values.push(v);
        }
        let water_pixels: i64 = t.parse(rec, line, water, "water_pixels")?;
        derive_label(water_pixels).map_err(|e| t.err(line, e))?;
        out.push(MonthlyRow {
            playa_id: t.field(rec, line, id)?.to_string(),
            month: ym,
            weather: values,
            water_pixels,
        });
    }
    Ok(out)
}

fn read_lulc(path: &Path, schema: &FeatureSchema) -> Result<Vec<LulcRow>> {
    let t = CsvTable::read(path)?;
    let id = t.column("playa_id")?;
    let year = t.column("year")?;
    let names: Vec<String> = schema.land_cover.iter().map(|c| lulc_column(c)).collect();
    let cols: Vec<usize> = names.iter().map(|n| t.column(n)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let mut fractions = Vec::with_capacity(cols.len());
        for (&c, name) in cols.iter().zip(&names) {
            let v: f64 = t.parse(rec, line, c, name)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(t.err(line, format!("column {name}: fraction {v} outside [0, 1]")));
            }
            fractions.push(v);
        }
        let total: f64 = fractions.iter().sum();
        if total > 1.0 + 1e-6 {
            return Err(t.err(line, format!("land-cover fractions sum to {total} > 1")));
        }
        out.push(LulcRow {
            playa_id: t.field(rec, line, id)?.to_string(),
            year: t.parse(rec, line, year, "year")?,
            fractions,
        });
    }
    Ok(out)
}

/// Assembled sequences plus everything needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub split: SplitSpec,
    pub vocab: DatasetVocab,
    /// One per playa, in vocabulary order.
    pub samples: Vec<SequenceSample>,
}

/// Read the three tables and assemble one sequence per playa.
pub fn ingest_dataset(
    paths: &TablePaths,
    schema: &FeatureSchema,
    split: &SplitSpec,
) -> Result<Dataset> {
    assemble(&RawTables::read(paths, schema)?, split)
}

/// Build sequences from parsed tables. Static attributes repeat at every
/// month; land-cover fractions of a year apply to all of that year's months.
pub fn assemble(raw: &RawTables, split: &SplitSpec) -> Result<Dataset> {
    split.validate()?;
    let schema = &raw.schema;
    schema.validate()?;

    let playa_ids = sorted_unique(raw.playas.iter().map(|p| p.playa_id.as_str()));
    if playa_ids.len() != raw.playas.len() {
        return Err(Error::Data("duplicate playa_id in playas table".into()));
    }
    if playa_ids.is_empty() {
        return Err(Error::Data("playas table is empty".into()));
    }
    let index_of: HashMap<&str, usize> = playa_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let huc8 = sorted_unique(raw.playas.iter().map(|p| p.huc8.as_str()));
    let authors = sorted_unique(raw.playas.iter().map(|p| p.author.as_str()));
    let huc_index: HashMap<&str, usize> =
        huc8.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let author_index: HashMap<&str, usize> =
        authors.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    let mut playa_rows: Vec<Option<&PlayaRow>> = vec![None; playa_ids.len()];
    for p in &raw.playas {
        if p.attributes.len() != schema.static_attributes.len() {
            return Err(Error::Data(format!(
                "playa {}: {} attributes, schema has {}",
                p.playa_id,
                p.attributes.len(),
                schema.static_attributes.len()
            )));
        }
        playa_rows[index_of[p.playa_id.as_str()]] = Some(p);
    }

    let first_month = raw
        .monthly
        .iter()
        .map(|m| m.month)
        .min()
        .ok_or_else(|| Error::Data("monthly table is empty".into()))?;
    let last_month = raw.monthly.iter().map(|m| m.month).max().unwrap_or(first_month);
    let t_len = months_inclusive(first_month, last_month);

    let mut by_playa: Vec<Vec<Option<&MonthlyRow>>> = vec![vec![None; t_len]; playa_ids.len()];
    for m in &raw.monthly {
        let &i = index_of.get(m.playa_id.as_str()).ok_or_else(|| {
            Error::Data(format!(
                "monthly row {} references unknown playa {:?}",
                m.month, m.playa_id
            ))
        })?;
        if m.weather.len() != schema.weather.len() {
            return Err(Error::Data(format!(
                "playa {} {}: {} weather values, schema has {}",
                m.playa_id,
                m.month,
                m.weather.len(),
                schema.weather.len()
            )));
        }
        let t = (m.month.ordinal() - first_month.ordinal()) as usize;
        if by_playa[i][t].replace(m).is_some() {
            return Err(Error::Data(format!(
                "playa {} has duplicate rows for {}",
                m.playa_id, m.month
            )));
        }
    }

    let mut lulc: HashMap<(usize, i32), &LulcRow> = HashMap::new();
    for l in &raw.lulc {
        let &i = index_of.get(l.playa_id.as_str()).ok_or_else(|| {
            Error::Data(format!(
                "land-cover row {} references unknown playa {:?}",
                l.year, l.playa_id
            ))
        })?;
        if l.fractions.len() != schema.land_cover.len() {
            return Err(Error::Data(format!(
                "playa {} year {}: {} land-cover fractions, schema has {}",
                l.playa_id,
                l.year,
                l.fractions.len(),
                schema.land_cover.len()
            )));
        }
        if let Some(bad) = l.fractions.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!(
                "playa {} year {}: fraction {bad} outside [0, 1]",
                l.playa_id, l.year
            )));
        }
        if lulc.insert((i, l.year), l).is_some() {
            return Err(Error::Data(format!(
                "playa {} has duplicate land-cover rows for {}",
                l.playa_id, l.year
            )));
        }
    }

    let months: Vec<YearMonth> = (0..t_len)
        .map(|t| YearMonth::from_ordinal(first_month.ordinal() + t as i64))
        .collect();
    let split_mask: Vec<Split> = months
        .iter()
        .map(|m| split_by_year(m.year, split))
        .collect::<Result<_>>()?;

    let width = schema.width();
    let n_weather = schema.weather.len();
    let n_static = schema.static_attributes.len();
    let mut samples = Vec::with_capacity(playa_ids.len());
    for (i, id) in playa_ids.iter().enumerate() {
        let prow = playa_rows[i].expect("every vocabulary id comes from a playa row");
        let mut features = Matrix::zeros(t_len, width);
        let mut labels = Vec::with_capacity(t_len);
        for (t, slot) in by_playa[i].iter().enumerate() {
            let m = slot.ok_or_else(|| {
                Error::Data(format!("playa {id} is missing month {}", months[t]))
            })?;
            let l = lulc.get(&(i, months[t].year)).ok_or_else(|| {
                Error::Data(format!(
                    "playa {id} has no land-cover row for {}",
                    months[t].year
                ))
            })?;
            let row = features.row_mut(t);
            row[..n_weather].copy_from_slice(&m.weather);
            row[n_weather..n_weather + n_static].copy_from_slice(&prow.attributes);
            row[n_weather + n_static..].copy_from_slice(&l.fractions);
            labels.push(derive_label(m.water_pixels)?);
        }
        samples.push(SequenceSample {
            playa_id: id.clone(),
            playa_index: i,
            huc8_index: huc_index[prow.huc8.as_str()],
            author_index: author_index[prow.author.as_str()],
            features,
            labels,
            split_mask: split_mask.clone(),
            months: months.clone(),
        });
    }

    Ok(Dataset {
        schema: schema.clone(),
        split: *split,
        vocab: DatasetVocab {
            playa_ids,
            huc8,
            authors,
            first_month,
            last_month,
        },
        samples,
    })
}

impl Dataset {
    pub fn feature_names(&self) -> Vec<String> {
        self.schema.names()
    }

    /// Fraction of playas with no positive label anywhere in the record.
    pub fn never_inundated_fraction(&self) -> f64 {
        let dry = self
            .samples
            .iter()
            .filter(|s| s.labels.iter().all(|&l| l == 0))
            .count();
        dry as f64 / self.samples.len().max(1) as f64
    }

    pub fn split_summary(&self) -> Vec<SplitSummary> {
        Split::ALL
            .into_iter()
            .map(|split| {
                let mut months = 0;
                let mut playa_months = 0;
                let mut positives = 0;
                if let Some(first) = self.samples.first() {
                    months = first.split_mask.iter().filter(|s| **s == split).count();
                }
                for s in &self.samples {
                    for (l, tag) in s.labels.iter().zip(&s.split_mask) {
                        if *tag == split {
                            playa_months += 1;
                            positives += usize::from(*l);
                        }
                    }
                }
                SplitSummary {
                    split,
                    years: self.split.window(split),
                    months,
                    playa_months,
                    positives,
                    prevalence: positives as f64 / playa_months.max(1) as f64,
                }
            })
            .collect()
    }

    /// Replace every sample's features with their standardized values.
    pub fn standardize(&mut self, stats: &StandardizerStats) -> Result<()> {
        for s in &mut self.samples {
            s.features = apply_standardizer(stats, &s.features)?;
        }
        Ok(())
    }

    pub fn label_prevalence(&self) -> f64 {
        let total: usize = self.samples.iter().map(SequenceSample::len).sum();
        let pos: usize = self
            .samples
            .iter()
            .map(|s| s.labels.iter().map(|&l| usize::from(l)).sum::<usize>())
            .sum();
        pos as f64 / total.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub years: (i32, i32),
    pub months: usize,
    pub playa_months: usize,
    pub positives: usize,
    pub prevalence: f64,
}

/// Per-feature mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizerStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations below this are treated as a constant column.
pub const STD_FLOOR: f64 = 1e-12;

/// Fit on train-window playa-months only. Static and annual features count
/// once per month in which they appear.
pub fn fit_standardizer(dataset: &Dataset) -> Result<StandardizerStats> {
    fit_standardizer_on(dataset, &[Split::Train])
}

/// Fit on the playa-months whose split tag is in `splits`.
pub fn fit_standardizer_on(dataset: &Dataset, splits: &[Split]) -> Result<StandardizerStats> {
    let width = dataset.schema.width();
    let rows = || {
        dataset.samples.iter().flat_map(move |s| {
            (0..s.len())
                .filter(move |&t| splits.contains(&s.split_mask[t]))
                .map(move |t| s.features.row(t))
        })
    };
    let mut n = 0usize;
    let mut sum = vec![0.0; width];
    for row in rows() {
        if row.len() != width {
            return Err(Error::shape(
                "fit_standardizer",
                format!("{width} schema features"),
                format!("{} columns", row.len()),
            ));
        }
        n += 1;
        for (acc, v) in sum.iter_mut().zip(row) {
            *acc += v;
        }
    }
    if n == 0 {
        return Err(Error::Data(format!(
            "no playa-months in {splits:?} to fit the standardizer"
        )));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut ss = vec![0.0; width];
    for row in rows() {
        for ((acc, v), m) in ss.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let std = ss.iter().map(|s| (s / n as f64).sqrt()).collect();
    Ok(StandardizerStats {
        names: dataset.schema.names(),
        mean,
        std,
    })
}

/// `(x − mean) / std` per column; constant columns (std below
/// [`STD_FLOOR`]) are only centered, so their train values become zero.
pub fn apply_standardizer(stats: &StandardizerStats, features: &Matrix) -> Result<Matrix> {
    if features.cols() != stats.mean.len() || stats.mean.len() != stats.std.len() {
        return Err(Error::shape(
            "apply_standardizer",
            format!("{} fitted features", stats.mean.len()),
            format!("{} columns", features.cols()),
        ));
    }
    let mut out = features.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            let scale = if stats.std[c] < STD_FLOOR { 1.0 } else { stats.std[c] };
            *v = (*v - stats.mean[c]) / scale;
        }
    }
    Ok(out)
}

/// Synthetic fixture settings. Each playa gets an amplitude `A`, a phase
/// `φ` (months) and a threshold `θ = A · u` with `u` drawn from
/// `threshold_ratio`. Monthly precipitation is
/// `max(0, A·sin(2π(m − φ)/12) + noise)` and the playa is wet when the
/// precipitation of this and the previous month sum above `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_playas: usize,
    pub n_years: usize,
    pub seed: u64,
    /// First calendar year; defaults so that the record ends in 2018.
    pub start_year: Option<i32>,
    pub threshold_ratio: (f64, f64),
    /// Precipitation noise standard deviation as a fraction of `A`.
    pub noise_ratio: f64,
}

impl SynthConfig {
    pub fn new(n_playas: usize, n_years: usize, seed: u64) -> Self {
        Self {
            n_playas,
            n_years,
            seed,
            start_year: None,
            threshold_ratio: (0.9, 1.7),
            noise_ratio: 0.25,
        }
    }

    pub fn first_year(&self) -> i32 {
        self.start_year.unwrap_or(2019 - self.n_years as i32)
    }

    /// Last `k` years test, the `k` before validation, the rest train, with
    /// `k = max(1, n_years / 5)`.
    pub fn split_spec(&self) -> SplitSpec {
        let first = self.first_year();
        let last = first + self.n_years as i32 - 1;
        let k = (self.n_years / 5).max(1) as i32;
        SplitSpec {
            train: (first, last - 2 * k),
            validation: (last - 2 * k + 1, last - k),
            test: (last - k + 1, last),
        }
    }
}

pub fn synth_generate(n_playas: usize, n_years: usize, seed: u64) -> Result<Dataset> {
    let cfg = SynthConfig::new(n_playas, n_years, seed);
    let raw = synth_tables(&cfg)?;
    assemble(&raw, &cfg.split_spec())
}

/// Deterministic synthetic tables in the default schema.
pub fn synth_tables(cfg: &SynthConfig) -> Result<RawTables> {
    if cfg.n_playas < 2 || cfg.n_years < 3 {
        return Err(Error::Config(format!(
            "synthetic data needs at least 2 playas and 3 years, got {} and {}",
            cfg.n_playas, cfg.n_years
        )));
    }
    let (lo, hi) = cfg.threshold_ratio;
    if !(lo > 0.0 && lo <= hi) || !(cfg.noise_ratio >= 0.0) {
        return Err(Error::Config(format!("bad synthetic settings: {cfg:?}")));
    }
    let schema = FeatureSchema::default();
    let mut rng = rng::stream(cfg.seed, rng::streams::SYNTH);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let first = cfg.first_year();
    let n_months = cfg.n_years * 12;
    let n_huc = (cfg.n_playas / 10).max(2);
    let authors = ["A", "B", "C"];
    let split = cfg.split_spec();

    let mut playas = Vec::with_capacity(cfg.n_playas);
    let mut monthly = Vec::with_capacity(cfg.n_playas * n_months);
    let mut lulc = Vec::with_capacity(cfg.n_playas * cfg.n_years);

    for i in 0..cfg.n_playas {
        let id = (i + 1).to_string();
        let amplitude = rng.random_range(20.0..80.0);
        let phase = rng.random_range(0.0..12.0);
        let threshold = amplitude * rng.random_range(lo..=hi);
        let noise_sd = cfg.noise_ratio * amplitude;

        // One extra leading month so the first label has a predecessor.
        let precip: Vec<f64> = (0..=n_months)
            .map(|t| {
                let m = ((t + 11) % 12 + 1) as f64;
                let seasonal = amplitude * (2.0 * std::f64::consts::PI * (m - phase) / 12.0).sin();
                (seasonal + noise_sd * std_normal.sample(&mut rng)).max(0.0)
            })
            .collect();
        let labels: Vec<i64> = (1..=n_months)
            .map(|t| i64::from(precip[t] + precip[t - 1] > threshold))
            .collect();
        let wet_freq = labels.iter().sum::<i64>() as f64 / n_months as f64;

        for t in 0..n_months {
            let month = YearMonth::from_ordinal(YearMonth::new(first, 1)?.ordinal() + t as i64);
            let season = (2.0 * std::f64::consts::PI * (f64::from(month.month) - 4.0) / 12.0).sin();
            let temp = 14.0 + 12.0 * season + 2.0 * std_normal.sample(&mut rng);
            let vpd = (8.0 + 0.6 * temp + 1.5 * std_normal.sample(&mut rng)).max(0.0);
            let pixels = if labels[t] == 1 { rng.random_range(1..40) } else { 0 };
            monthly.push(MonthlyRow {
                playa_id: id.clone(),
                month,
                weather: vec![temp, precip[t + 1], vpd],
                water_pixels: pixels,
            });
        }

        let healthy = f64::from(rng.random_bool(0.5));
        let farmed = if healthy == 1.0 { 0.0 } else { f64::from(rng.random_bool(0.6)) };
        let modified = if healthy == 1.0 { 0.0 } else { 1.0 - farmed };
        playas.push(PlayaRow {
            playa_id: id.clone(),
            huc8: format!("{:08}", 11_020_000 + i % n_huc),
            author: authors[i % authors.len()].to_string(),
            attributes: vec![
                rng.random_range(0.5..60.0),
                wet_freq,
                rng.random_range(50.0..8000.0),
                rng.random_range(0.0..300.0),
                healthy,
                farmed,
                modified,
                f64::from(rng.random_bool(0.3)),
            ],
            centroid: Some((
                rng.random_range(-500_000.0..500_000.0),
                rng.random_range(1_000_000.0..2_000_000.0),
            )),
        });

        let weights: Vec<f64> = (0..schema.land_cover.len()).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let coverage = rng.random_range(0.85..1.0);
        for y in 0..cfg.n_years {
            let drift = 1.0 + 0.02 * (y as f64 / cfg.n_years as f64);
            let fractions: Vec<f64> = weights
                .iter()
                .map(|w| (w / total * coverage / drift).clamp(0.0, 1.0))
                .collect();
            lulc.push(LulcRow {
                playa_id: id.clone(),
                year: first + y as i32,
                fractions,
            });
        }
    }

    for s in Split::ALL {
        let (a, b) = split.window(s);
        let in_window = monthly.iter().filter(|m| (a..=b).contains(&m.month.year));
        let (mut pos, mut neg) = (0usize, 0usize);
        for m in in_window {
            if m.water_pixels > 0 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if pos == 0 || neg == 0 {
            return Err(Error::Config(format!(
                "synthetic {s} window {a}..={b} has {pos} positive and {neg} negative labels; \
                 both classes are required"
            )));
        }
    }

    Ok(RawTables {
        schema,
        playas,
        monthly,
        lulc,
    })
}

/// Map from playa id to centroid, for buffer extraction.
pub fn centroids(playas: &[PlayaRow]) -> BTreeMap<String, (f64, f64)> {
    playas
        .iter()
        .filter_map(|p| p.centroid.map(|c| (p.playa_id.clone(), c)))
        .collect()
}
