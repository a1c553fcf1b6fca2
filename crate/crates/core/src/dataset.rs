//! Harvester experiment data: three machine settings (drum-concave distance,
//! fan speed, sieve openness) and three responses (broken seeds, product
//! loss, material other than grain).
//!
//! Files are delimited text with a header row naming the columns
//! `A,B,C,BS,PL,MOG` in any order and case. The delimiter is a tab if the
//! header line contains one, otherwise a comma. Lines starting with `#` are
//! comments.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Column {
    A,
    B,
    C,
    Bs,
    Pl,
    Mog,
}

impl Column {
    pub const ALL: [Column; 6] = [
        Column::A,
        Column::B,
        Column::C,
        Column::Bs,
        Column::Pl,
        Column::Mog,
    ];
    pub const INPUTS: [Column; 3] = [Column::A, Column::B, Column::C];
    pub const OUTPUTS: [Column; 3] = [Column::Bs, Column::Pl, Column::Mog];

    pub fn name(self) -> &'static str {
        match self {
            Column::A => "A",
            Column::B => "B",
            Column::C => "C",
            Column::Bs => "BS",
            Column::Pl => "PL",
            Column::Mog => "MOG",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Recommended fan speed range in rpm. Ingested rows outside it are logged.
pub const FAN_SPEED_RANGE: (f64, f64) = (440.0, 1060.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Threshing drum to concave distance, mm.
    pub a_drum_concave_distance: f64,
    /// rpm
    pub b_fan_speed: f64,
    /// mm
    pub c_sieve_openness: f64,
    pub bs_broken_seeds: f64,
    pub pl_product_loss: f64,
    pub mog_material_other_than_grain: f64,
}

impl Sample {
    /// Values in [`Column::ALL`] order.
    pub fn from_values(v: [f64; 6]) -> Self {
        Sample {
            a_drum_concave_distance: v[0],
            b_fan_speed: v[1],
            c_sieve_openness: v[2],
            bs_broken_seeds: v[3],
            pl_product_loss: v[4],
            mog_material_other_than_grain: v[5],
        }
    }

    pub fn values(&self) -> [f64; 6] {
        [
            self.a_drum_concave_distance,
            self.b_fan_speed,
            self.c_sieve_openness,
            self.bs_broken_seeds,
            self.pl_product_loss,
            self.mog_material_other_than_grain,
        ]
    }

    pub fn get(&self, col: Column) -> f64 {
        self.values()[col.index()]
    }

    pub fn inputs(&self) -> [f64; 3] {
        [
            self.a_drum_concave_distance,
            self.b_fan_speed,
            self.c_sieve_openness,
        ]
    }

    pub fn targets(&self) -> [f64; 3] {
        [
            self.bs_broken_seeds,
            self.pl_product_loss,
            self.mog_material_other_than_grain,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Synthetic {
        seed: u64,
        noise_scale: f64,
        surface_version: u32,
    },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Ingested => f.write_str("ingested"),
            Provenance::Synthetic {
                seed,
                noise_scale,
                surface_version,
            } => write!(
                f,
                "synthetic seed={seed} noise_scale={noise_scale} surface=v{surface_version}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    pub provenance: Provenance,
    pub normalization: Option<NormalizationSpec>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, provenance: Provenance) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (row, s) in samples.iter().enumerate() {
            for (col, v) in Column::ALL.iter().zip(s.values()) {
                if !v.is_finite() {
                    return Err(Error::ParseCell {
                        row: row + 1,
                        column: col.name().into(),
                        value: v.to_string(),
                    });
                }
            }
        }
        Ok(Dataset {
            samples,
            provenance,
            normalization: None,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Vec<Sample>> {
        indices
            .iter()
            .map(|&i| {
                self.samples.get(i).copied().ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "row index {i} out of range for {} rows",
                        self.len()
                    ))
                })
            })
            .collect()
    }

    /// Indices of rows whose fan speed lies outside [`FAN_SPEED_RANGE`].
    pub fn fan_speed_outliers(&self) -> Vec<usize> {
        let (lo, hi) = FAN_SPEED_RANGE;
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| !(lo..=hi).contains(&s.b_fan_speed))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn with_normalization(mut self, norm: NormalizationSpec) -> Self {
        self.normalization = Some(norm);
        self
    }

    /// Writes the dataset as comma-delimited text. Synthetic datasets get a
    /// leading `#` comment recording how they were generated.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if let Provenance::Synthetic { .. } = self.provenance {
            writeln!(out, "# {}", self.provenance)?;
        }
        let names: Vec<&str> = Column::ALL.iter().map(|c| c.name()).collect();
        writeln!(out, "{}", names.join(","))?;
        for s in &self.samples {
            let cells: Vec<String> = s.values().iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text)
}

/// Parses delimited text. Header names are matched after trimming and
/// ignoring case; extra columns are ignored.
pub fn ingest_str(text: &str) -> Result<Dataset> {
    let header_line = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .ok_or(Error::EmptyDataset)?;
    let delimiter = if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let mut positions = [0usize; 6];
    for col in Column::ALL {
        positions[col.index()] = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(col.name()))
            .ok_or(Error::MissingColumn(col.name()))?;
    }

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                row,
                expected: headers.len(),
                actual: record.len(),
            });
        }
        let mut values = [0.0; 6];
        for col in Column::ALL {
            let cell = &record[positions[col.index()]];
            values[col.index()] = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ParseCell {
                    row,
                    column: col.name().into(),
                    value: cell.into(),
                })?;
        }
        samples.push(Sample::from_values(values));
    }

    let dataset = Dataset::new(samples, Provenance::Ingested)?;
    let outliers = dataset.fan_speed_outliers();
    if !outliers.is_empty() {
        log::warn!(
            "{} row(s) have fan speed outside {:?} rpm (first at row {})",
            outliers.len(),
            FAN_SPEED_RANGE,
            outliers[0] + 1
        );
    }
    Ok(dataset)
}

/// Factor levels of the synthetic factorial grid.
pub const LEVELS_A_MM: [f64; 3] = [3.0, 6.5, 10.0];
pub const LEVELS_B_RPM: [f64; 3] = [440.0, 750.0, 1060.0];
pub const LEVELS_C_MM: [f64; 3] = [5.0, 10.0, 15.0];
pub const REPETITIONS: usize = 3;
pub const SURFACE_VERSION: u32 = 1;
pub const DEFAULT_NOISE_SCALE: f64 = 0.05;

/// Per-response noise unit: noise on a response has standard deviation
/// `noise_scale * unit`. The units are the surface intercepts.
pub const NOISE_UNITS: [f64; 3] = [0.5, 20.0, 3.0];

/// Noise-free synthetic response surface, version 1.
///
/// Factors are coded to `[-1, 1]`: `a = (A - 6.5) / 3.5`,
/// `b = (B - 750) / 310`, `c = (C - 10) / 5`. Then
///
/// ```text
/// BS  = 0.50 - 0.18a + 0.06b + 0.04c + 0.07a^2 + 0.03b^2 - 0.05ab + 0.02ac
/// PL  = 20.0 + 2.5a + 7.5b - 4.0c + 3.5b^2 + 1.5c^2 + 2.0bc - 1.0ab
/// MOG = 3.0 - 0.5a - 0.7b + 0.9c + 0.3a^2 + 0.25c^2 - 0.3bc + 0.15ab
/// ```
pub fn response_surface(a_mm: f64, b_rpm: f64, c_mm: f64) -> [f64; 3] {
    let a = (a_mm - 6.5) / 3.5;
    let b = (b_rpm - 750.0) / 310.0;
    let c = (c_mm - 10.0) / 5.0;
    let bs = 0.50 - 0.18 * a + 0.06 * b + 0.04 * c + 0.07 * a * a + 0.03 * b * b - 0.05 * a * b
        + 0.02 * a * c;
    let pl =
        20.0 + 2.5 * a + 7.5 * b - 4.0 * c + 3.5 * b * b + 1.5 * c * c + 2.0 * b * c - 1.0 * a * b;
    let mog =
        3.0 - 0.5 * a - 0.7 * b + 0.9 * c + 0.3 * a * a + 0.25 * c * c - 0.3 * b * c + 0.15 * a * b;
    [bs, pl, mog]
}

/// Full 3x3x3 factorial grid with [`REPETITIONS`] repetitions (81 rows),
/// responses from [`response_surface`] plus Gaussian noise. Rows are ordered
/// by A, then B, then C, then repetition.
pub fn synthesize(seed: u64, noise_scale: f64) -> Result<Dataset> {
    if !(noise_scale.is_finite() && noise_scale >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise_scale must be finite and >= 0, got {noise_scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = NOISE_UNITS.map(|u| Normal::new(0.0, noise_scale * u).unwrap());
    let mut samples = Vec::with_capacity(27 * REPETITIONS);
    for &a in &LEVELS_A_MM {
        for &b in &LEVELS_B_RPM {
            for &c in &LEVELS_C_MM {
                let surface = response_surface(a, b, c);
                for _ in 0..REPETITIONS {
                    let mut y = surface;
                    if noise_scale > 0.0 {
                        for (v, n) in y.iter_mut().zip(&noise) {
                            *v += n.sample(&mut rng);
                        }
                    }
                    samples.push(Sample::from_values([a, b, c, y[0], y[1], y[2]]));
                }
            }
        }
    }
    Dataset::new(
        samples,
        Provenance::Synthetic {
            seed,
            noise_scale,
            surface_version: SURFACE_VERSION,
        },
    )
}

/// Interval normalized values are mapped onto.
pub const TARGET_INTERVAL: [f64; 2] = [0.1, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

/// Per-column affine map sending `[min, max]` onto the target interval.
/// Values outside the fitted range map outside the interval; nothing is
/// clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    /// In [`Column::ALL`] order.
    pub ranges: [ColumnRange; 6],
    pub target: [f64; 2],
}

impl NormalizationSpec {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self> {
        Self::fit_with_target(samples, TARGET_INTERVAL)
    }

    pub fn fit_with_target<'a>(
        samples: impl IntoIterator<Item = &'a Sample>,
        target: [f64; 2],
    ) -> Result<Self> {
        let mut ranges = [ColumnRange {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }; 6];
        let mut any = false;
        for s in samples {
            any = true;
            for (r, v) in ranges.iter_mut().zip(s.values()) {
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
        if !any {
            return Err(Error::EmptyDataset);
        }
        for (col, r) in Column::ALL.iter().zip(&ranges) {
            if r.min.partial_cmp(&r.max) != Some(std::cmp::Ordering::Less) {
                return Err(Error::ConstantColumn(col.name()));
            }
        }
        Ok(NormalizationSpec { ranges, target })
    }

    /// Fits on the rows of `dataset` selected by `indices`.
    pub fn fit_rows(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        Self::fit(&dataset.select(indices)?)
    }

    pub fn normalize(&self, col: Column, x: f64) -> f64 {
        let r = self.ranges[col.index()];
        let [lo, hi] = self.target;
        lo + (x - r.min) / (r.max - r.min) * (hi - lo)
    }

    pub fn denormalize(&self, col: Column, y: f64) -> f64 {
        let r = self.ranges[col.index()];
        let [lo, hi] = self.target;
        r.min + (y - lo) / (hi - lo) * (r.max - r.min)
    }

    pub fn normalize_inputs(&self, s: &Sample) -> Vec<f64> {
        Column::INPUTS
            .iter()
            .map(|&c| self.normalize(c, s.get(c)))
            .collect()
    }

    pub fn normalize_targets(&self, s: &Sample) -> Vec<f64> {
        Column::OUTPUTS
            .iter()
            .map(|&c| self.normalize(c, s.get(c)))
            .collect()
    }

    /// Maps a network output vector back to original response units.
    pub fn denormalize_outputs(&self, y: &[f64]) -> Vec<f64> {
        Column::OUTPUTS
            .iter()
            .zip(y)
            .map(|(&c, &v)| self.denormalize(c, v))
            .collect()
    }

    pub fn normalize_sample(&self, s: &Sample) -> Sample {
        let v = s.values();
        Sample::from_values(std::array::from_fn(|i| {
            self.normalize(Column::ALL[i], v[i])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    /// Ascending.
    pub train: Vec<usize>,
    /// Ascending.
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Number of training rows: `round(fraction * n)`, halves rounded up.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Random partition of `0..n` into train and test indices. The permutation
/// is a seeded Fisher-Yates shuffle; each side is returned sorted.
pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let k = train_size(n, train_fraction);
    if k == 0 || k >= n {
        return Err(Error::EmptySplit {
            fraction: train_fraction,
            n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = perm[..k].to_vec();
    let mut test = perm[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}
