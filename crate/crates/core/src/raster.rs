//! Randomized buffer extraction of categorical raster classes.
//!
//! For each playa center, `n_points` points are drawn uniformly from the
//! disk of radius `radius` and the class under each point is tallied. The
//! tallies divided by `n_points` estimate the fraction of the buffer covered
//! by each class, including partial cells that an include/exclude
//! rasterization would get wrong.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{compare_ids, LulcRow};
use crate::rng;
use crate::{Error, Result};

/// North-up categorical raster with square cells. `values` are row-major
/// from the top (northernmost) row.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    /// Projected x of the left edge, meters.
    pub origin_x: f64,
    /// Projected y of the top edge, meters.
    pub origin_y: f64,
    pub cell_size: f64,
    pub nodata: i32,
    pub values: Vec<i32>,
    /// Class code to land-cover name. Several codes may share a name.
    pub classes: BTreeMap<i32, String>,
}

/// JSON sidecar describing a plain-text grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub nodata: i32,
    #[serde(default)]
    pub classes: BTreeMap<i32, String>,
    /// Whitespace-separated integer grid, relative to the header file.
    pub data: PathBuf,
}

impl RasterGrid {
    pub fn new(
        width: usize,
        height: usize,
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        nodata: i32,
        values: Vec<i32>,
    ) -> Result<Self> {
        let grid = Self {
            width,
            height,
            origin_x,
            origin_y,
            cell_size,
            nodata,
            values,
            classes: BTreeMap::new(),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_classes(mut self, classes: BTreeMap<i32, String>) -> Self {
        self.classes = classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::Config(format!("cell_size must be positive, got {}", self.cell_size)));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::Config("raster origin must be finite".into()));
        }
        if self.values.len() != self.width * self.height {
            return Err(Error::shape(
                "RasterGrid",
                format!("{}x{}", self.width, self.height),
                format!("{} values", self.values.len()),
            ));
        }
        Ok(())
    }

    pub fn value(&self, col: usize, row: usize) -> i32 {
        self.values[row * self.width + col]
    }

    /// Read a grid through its JSON header.
    pub fn read(header_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(header_path).map_err(|e| Error::in_file(header_path, e))?;
        let header: GridHeader =
            serde_json::from_str(&text).map_err(|e| Error::in_file(header_path, e))?;
        let data_path = header_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&header.data);
        let body = std::fs::read_to_string(&data_path).map_err(|e| Error::in_file(&data_path, e))?;
        let values = body
            .split_whitespace()
            .map(|tok| {
                tok.parse::<i32>()
                    .map_err(|e| Error::in_file(&data_path, format!("bad cell value {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = RasterGrid {
            width: header.width,
            height: header.height,
            origin_x: header.origin_x,
            origin_y: header.origin_y,
            cell_size: header.cell_size,
            nodata: header.nodata,
            values,
            classes: header.classes,
        };
        grid.validate().map_err(|e| Error::in_file(&data_path, e))?;
        Ok(grid)
    }

    /// Write the grid as `<stem>.txt` next to a JSON header at `header_path`.
    pub fn write(&self, header_path: &Path) -> Result<()> {
        let data_name = header_path
            .with_extension("txt")
            .file_name()
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("bad header path {}", header_path.display())))?;
        let header = GridHeader {
            width: self.width,
            height: self.height,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            cell_size: self.cell_size,
            nodata: self.nodata,
            classes: self.classes.clone(),
            data: data_name.clone(),
        };
        std::fs::write(header_path, serde_json::to_string_pretty(&header)?)?;
        let mut body = String::with_capacity(self.values.len() * 3);
        for row in self.values.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(i32::to_string).collect();
            body.push_str(&line.join(" "));
            body.push('\n');
        }
        let data_path = header_path.parent().unwrap_or_else(|| Path::new(".")).join(data_name);
        std::fs::write(data_path, body)?;
        Ok(())
    }

    /// Parse an ESRI ASCII grid (as exported from a single-band GeoTIFF).
    pub fn from_esri_ascii(text: &str, classes: BTreeMap<i32, String>) -> Result<Self> {
        let mut lines = text.lines();
        let mut keys: BTreeMap<String, f64> = BTreeMap::new();
        let mut first_data = None;
        for line in lines.by_ref() {
            let mut parts = line.split_whitespace();
            let (Some(k), Some(v)) = (parts.next(), parts.next()) else {
                continue;
            };
            let key = k.to_ascii_lowercase();
            if key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let v: f64 = v
                    .parse()
                    .map_err(|e| Error::Data(format!("ESRI header {k}: {e}")))?;
                keys.insert(key, v);
            } else {
                first_data = Some(line);
                break;
            }
        }
        let get = |k: &str| {
            keys.get(k)
                .copied()
                .ok_or_else(|| Error::Data(format!("ESRI header is missing {k}")))
        };
        let width = get("ncols")? as usize;
        let height = get("nrows")? as usize;
        let cell_size = get("cellsize")?;
        let nodata = keys.get("nodata_value").copied().unwrap_or(-9999.0) as i32;
        let origin_x = match keys.get("xllcorner") {
            Some(&x) => x,
            None => get("xllcenter")? - cell_size / 2.0,
        };
        let yll = match keys.get("yllcorner") {
            Some(&y) => y,
            None => get("yllcenter")? - cell_size / 2.0,
        };
        let values = first_data
            .into_iter()
            .chain(lines)
            .flat_map(str::split_whitespace)
            .map(|tok| {
                tok.parse::<f64>()
                    .map(|v| v.round() as i32)
                    .map_err(|e| Error::Data(format!("bad ESRI cell {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RasterGrid::new(
            width,
            height,
            origin_x,
            yll + height as f64 * cell_size,
            cell_size,
            nodata,
            values,
        )?
        .with_classes(classes))
    }
}

/// Class code under a point, or `None` when the point is off the grid.
///
/// Cells are half-open: column `⌊(x − origin_x)/cell⌋`, row
/// `⌊(origin_y − y)/cell⌋`, so a point on a shared edge belongs to the cell
/// with the larger index.
pub fn locate_cell(grid: &RasterGrid, point: (f64, f64)) -> Option<i32> {
    let col = ((point.0 - grid.origin_x) / grid.cell_size).floor();
    let row = ((grid.origin_y - point.1) / grid.cell_size).floor();
    if !(col >= 0.0 && row >= 0.0) || col >= grid.width as f64 || row >= grid.height as f64 {
        return None;
    }
    Some(grid.value(col as usize, row as usize))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferConfig {
    /// Meters.
    pub radius: f64,
    pub n_points: usize,
    pub base_seed: u64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            radius: 200.0,
            n_points: 5000,
            base_seed: 0,
        }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Config(format!("buffer radius must be positive, got {}", self.radius)));
        }
        if self.n_points == 0 {
            return Err(Error::Config("n_points must be at least 1".into()));
        }
        Ok(())
    }
}

/// Uniform point in the closed disk by rejection from the bounding square.
/// Each candidate consumes two `f64` draws (x, then y); the expected number
/// of candidates per accepted point is 4/π.
pub fn sample_point_in_disk<R: Rng + ?Sized>(rng: &mut R, center: (f64, f64), radius: f64) -> (f64, f64) {
    loop {
        let dx = radius * (2.0 * rng.random::<f64>() - 1.0);
        let dy = radius * (2.0 * rng.random::<f64>() - 1.0);
        if dx * dx + dy * dy <= radius * radius {
            return (center.0 + dx, center.1 + dy);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassKey {
    Class(i32),
    /// Off the grid or on the nodata code.
    NoData,
}

/// Point tallies for one buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct BufferFractions {
    pub n_points: usize,
    pub counts: BTreeMap<ClassKey, u64>,
}

impl BufferFractions {
    pub fn fraction(&self, key: ClassKey) -> f64 {
        self.counts.get(&key).copied().unwrap_or(0) as f64 / self.n_points as f64
    }

    pub fn fractions(&self) -> BTreeMap<ClassKey, f64> {
        self.counts
            .iter()
            .map(|(&k, &c)| (k, c as f64 / self.n_points as f64))
            .collect()
    }

    /// Fractions summed per class name; unnamed codes and nodata are left out.
    pub fn by_name(&self, classes: &BTreeMap<i32, String>) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for (k, &c) in &self.counts {
            if let ClassKey::Class(code) = k {
                if let Some(name) = classes.get(code) {
                    *counts.entry(name.clone()).or_default() += c;
                }
            }
        }
        counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / self.n_points as f64))
            .collect()
    }
}

/// Generator seed for one playa: `mix(base_seed, fnv1a(playa_id))`.
pub fn playa_seed(base_seed: u64, playa_id: &str) -> u64 {
    rng::mix(base_seed, rng::fnv1a(playa_id))
}

pub fn buffer_class_fractions(
    grid: &RasterGrid,
    center: (f64, f64),
    config: &BufferConfig,
    playa_id: &str,
) -> BufferFractions {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(playa_seed(config.base_seed, playa_id));
    let mut counts: BTreeMap<ClassKey, u64> = BTreeMap::new();
    for _ in 0..config.n_points {
        let p = sample_point_in_disk(&mut rng, center, config.radius);
        let key = match locate_cell(grid, p) {
            Some(code) if code != grid.nodata => ClassKey::Class(code),
            _ => ClassKey::NoData,
        };
        *counts.entry(key).or_default() += 1;
    }
    BufferFractions {
        n_points: config.n_points,
        counts,
    }
}

/// Land-cover rows for every playa and every `(year, grid)` pair, in
/// `(year, playa id)` order. Columns follow `class_names`; classes absent
/// from a buffer get 0.
pub fn extract_lulc(
    grids: &[(i32, RasterGrid)],
    centers: &BTreeMap<String, (f64, f64)>,
    config: &BufferConfig,
    class_names: &[String],
) -> Result<Vec<LulcRow>> {
    config.validate()?;
    let mut ids: Vec<(&String, &(f64, f64))> = centers.iter().collect();
    ids.sort_by(|a, b| compare_ids(a.0, b.0));
    let mut rows = Vec::with_capacity(grids.len() * ids.len());
    for (year, grid) in grids {
        grid.validate()?;
        let mut year_rows: Vec<LulcRow> = ids
            .par_iter()
            .map(|(id, center)| {
                let named = buffer_class_fractions(grid, **center, config, id).by_name(&grid.classes);
                LulcRow {
                    playa_id: (*id).clone(),
                    year: *year,
                    fractions: class_names
                        .iter()
                        .map(|c| named.get(c).copied().unwrap_or(0.0))
                        .collect(),
                }
            })
            .collect();
        rows.append(&mut year_rows);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_grid() -> RasterGrid {
        // 4x4 cells of 100 m, left half class 1, right half class 2.
        let values = (0..16).map(|i| if i % 4 < 2 { 1 } else { 2 }).collect();
        RasterGrid::new(4, 4, 0.0, 400.0, 100.0, -1, values).unwrap()
    }

    #[test]
    fn locate_cell_conventions() {
        let g = split_grid();
        assert_eq!(locate_cell(&g, (50.0, 350.0)), Some(1));
        assert_eq!(locate_cell(&g, (250.0, 350.0)), Some(2));
        assert_eq!(locate_cell(&g, (-0.1, 350.0)), None);
        assert_eq!(locate_cell(&g, (50.0, 400.1)), None);
        assert_eq!(locate_cell(&g, (400.0, 50.0)), None);
        // Shared vertical edge between columns 1 and 2 goes to column 2.
        assert_eq!(locate_cell(&g, (200.0, 350.0)), Some(2));
        let mut g2 = g.clone();
        g2.values[4] = 9; // row 1, col 0
        // Horizontal edge between rows 0 and 1 goes to row 1.
        assert_eq!(locate_cell(&g2, (50.0, 300.0)), Some(9));
        assert_eq!(locate_cell(&g2, (0.0, 300.0)), Some(9));
    }

    #[test]
    fn points_stay_in_disk_and_are_reproducible() {
        let mut a: ChaCha8Rng = rand::SeedableRng::seed_from_u64(5);
        let mut b: ChaCha8Rng = rand::SeedableRng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = sample_point_in_disk(&mut a, (10.0, -3.0), 200.0);
            assert!(((p.0 - 10.0).powi(2) + (p.1 + 3.0).powi(2)).sqrt() <= 200.0);
            assert_eq!(p, sample_point_in_disk(&mut b, (10.0, -3.0), 200.0));
        }
    }

    #[test]
    fn mean_radius_is_two_thirds() {
        let mut r: ChaCha8Rng = rand::SeedableRng::seed_from_u64(17);
        let n = 100_000;
        let radius = 200.0;
        let dists: Vec<f64> = (0..n)
            .map(|_| {
                let p = sample_point_in_disk(&mut r, (0.0, 0.0), radius);
                (p.0 * p.0 + p.1 * p.1).sqrt()
            })
            .collect();
        let mean = dists.iter().sum::<f64>() / n as f64;
        // Var[r] = R²/2 − (2R/3)² = R²/18.
        let sigma = (radius * radius / 18.0 / n as f64).sqrt();
        assert!((mean - 2.0 * radius / 3.0).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn single_class_buffer_is_exactly_one() {
        let g = RasterGrid::new(20, 20, 0.0, 2000.0, 100.0, -1, vec![7; 400]).unwrap();
        let f = buffer_class_fractions(&g, (1000.0, 1000.0), &BufferConfig::default(), "1");
        assert_eq!(f.fraction(ClassKey::Class(7)), 1.0);
        assert_eq!(f.counts.len(), 1);
    }

    #[test]
    fn off_grid_and_nodata_share_one_key() {
        let mut g = RasterGrid::new(4, 4, 0.0, 400.0, 100.0, -1, vec![3; 16]).unwrap();
        g.values[0] = -1;
        let cfg = BufferConfig {
            radius: 150.0,
            n_points: 4000,
            base_seed: 2,
        };
        let f = buffer_class_fractions(&g, (0.0, 400.0), &cfg, "corner");
        let total: u64 = f.counts.values().sum();
        assert_eq!(total, 4000);
        assert!(f.fraction(ClassKey::NoData) > 0.75);
        let sum: f64 = f.fractions().values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn content_outside_the_bounding_box_is_ignored() {
        let g = RasterGrid::new(30, 30, 0.0, 3000.0, 100.0, -1, vec![1; 900]).unwrap();
        let mut far = g.clone();
        for row in 0..30 {
            for col in 0..30 {
                if col < 10 || row > 20 {
                    far.values[row * 30 + col] = 5;
                }
            }
        }
        let cfg = BufferConfig::default();
        let center = (2000.0, 2000.0); // bounding box spans cols 18..22, rows 9..13
        assert_eq!(
            buffer_class_fractions(&g, center, &cfg, "p"),
            buffer_class_fractions(&far, center, &cfg, "p")
        );
    }

    #[test]
    fn playa_seeds_differ_per_id() {
        assert_ne!(playa_seed(1, "10"), playa_seed(1, "11"));
        assert_eq!(playa_seed(1, "10"), playa_seed(1, "10"));
    }

    #[test]
    fn named_fractions_merge_codes() {
        let values = (0..16).map(|i| if i % 4 < 2 { 15 } else { 16 }).collect();
        let classes = BTreeMap::from([(15, "wetland".to_string()), (16, "wetland".to_string())]);
        let g = RasterGrid::new(4, 4, 0.0, 400.0, 100.0, -1, values)
            .unwrap()
            .with_classes(classes);
        let f = buffer_class_fractions(&g, (200.0, 200.0), &BufferConfig::default(), "x");
        assert_eq!(f.by_name(&g.classes)["wetland"], 1.0);
    }

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = split_grid().with_classes(BTreeMap::from([(1, "grassland".into()), (2, "cropland".into())]));
        let header = dir.path().join("lc1990.json");
        g.write(&header).unwrap();
        assert_eq!(RasterGrid::read(&header).unwrap(), g);
    }

    #[test]
    fn esri_ascii_conversion() {
        let text = "ncols 3\nnrows 2\nxllcorner 100\nyllcorner 50\ncellsize 30\nNODATA_value -9999\n1 2 3\n4 5 -9999\n";
        let g = RasterGrid::from_esri_ascii(text, BTreeMap::new()).unwrap();
        assert_eq!((g.width, g.height), (3, 2));
        assert_eq!(g.origin_y, 110.0);
        assert_eq!(g.nodata, -9999);
        assert_eq!(locate_cell(&g, (105.0, 105.0)), Some(1));
        assert_eq!(locate_cell(&g, (165.0, 55.0)), Some(-9999));
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(RasterGrid::new(2, 2, 0.0, 0.0, 0.0, -1, vec![0; 4]).is_err());
        assert!(RasterGrid::new(2, 2, 0.0, 0.0, 1.0, -1, vec![0; 3]).is_err());
        let cfg = BufferConfig {
            n_points: 0,
            ..BufferConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
