//! CSV ingestion, z-score normalization and Input-L-predict-O windowing.
//!
//! Splits are chronological; normalization statistics come from the
//! training split only and are applied to every split. Metrics computed
//! downstream are on the normalized scale by default.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const STD_EPSILON: f64 = 1e-8;

/// Ordered multivariate series as read from disk.
#[derive(Clone, Debug)]
pub struct RawSeries {
    /// Monotone ordering keys (epoch seconds or plain numerics).
    pub timestamps: Vec<f64>,
    /// T x D_in values, row-major.
    pub values: Vec<Vec<f64>>,
    pub columns: Vec<String>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Univariate view selecting a single target column.
    pub fn select_column(&self, name: &str) -> Result<RawSeries> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("unknown target column '{name}'")))?;
        Ok(RawSeries {
            timestamps: self.timestamps.clone(),
            values: self.values.iter().map(|r| vec![r[idx]]).collect(),
            columns: vec![name.to_string()],
        })
    }
}

/// Per-feature z-score statistics from the training split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub columns: Vec<String>,
}

impl NormStats {
    pub fn from_rows(rows: &[Vec<f64>], columns: &[String]) -> Self {
        let d = columns.len();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                mean[j] += r[j];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                let dv = r[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_EPSILON)).collect();
        NormStats { mean, std, columns: columns.to_vec() }
    }

    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            .collect()
    }

    pub fn denormalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| v * self.std[j] + self.mean[j])
            .collect()
    }

    pub fn normalize(&self, t: &Tensor) -> Tensor {
        let d = self.mean.len();
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        out
    }

    /// No-op statistics (mean 0, std 1) for data that is already scaled.
    pub fn identity(d: usize) -> Self {
        NormStats {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            columns: (0..d).map(|j| format!("f{j}")).collect(),
        }
    }

    pub fn denormalize(&self, t: &Tensor) -> Tensor {
        let d = self.mean.len();
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = *v * self.std[j] + self.mean[j];
        }
        out
    }
}

/// Normalized (sample, label) windows over one chronological split.
/// Windows are views: sample i is rows [i, i+L), its label the O rows
/// immediately following.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    data: Tensor,
    pub input_len: usize,
    pub horizon: usize,
    pub stats: NormStats,
}

impl WindowedDataset {
    pub fn new(rows: Vec<Vec<f64>>, input_len: usize, horizon: usize, stats: NormStats) -> Result<Self> {
        let normalized: Vec<Vec<f64>> = rows.iter().map(|r| stats.normalize_row(r)).collect();
        let data = if normalized.is_empty() {
            Tensor::zeros(&[0, stats.mean.len()])
        } else {
            Tensor::from_rows(&normalized)?
        };
        Ok(WindowedDataset { data, input_len, horizon, stats })
    }

    /// Wrap an already-normalized (T, d) tensor directly.
    pub fn from_tensor(data: Tensor, input_len: usize, horizon: usize, stats: NormStats) -> Result<Self> {
        if data.shape().len() != 2 || data.shape()[1] != stats.mean.len() {
            return Err(Error::Shape(format!(
                "from_tensor: data shape {:?} incompatible with {} feature stats",
                data.shape(),
                stats.mean.len()
            )));
        }
        Ok(WindowedDataset { data, input_len, horizon, stats })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    /// Number of windows: T_split - L - O + 1, clamped at 0.
    pub fn len(&self) -> usize {
        let need = self.input_len + self.horizon;
        let t = self.data.shape()[0];
        if t < need {
            0
        } else {
            t - need + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn sample(&self, i: usize) -> Tensor {
        self.rows(i, i + self.input_len)
    }

    pub fn label(&self, i: usize) -> Tensor {
        self.rows(i + self.input_len, i + self.input_len + self.horizon)
    }

    fn rows(&self, r0: usize, r1: usize) -> Tensor {
        let d = self.n_features();
        Tensor::new(vec![r1 - r0, d], self.data.data()[r0 * d..r1 * d].to_vec()).expect("window bounds")
    }

    /// Flattened sample and label for similarity computations.
    pub fn flat_pair(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        (self.sample(i).into_data(), self.label(i).into_data())
    }
}

fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v as f64);
    }
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y/%m/%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() as f64);
    }
    None
}

/// Load an ETT-style CSV: header row, a timestamp column (by default the
/// first), remaining columns numeric.
pub fn load_csv(path: &Path, date_column: &str) -> Result<RawSeries> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad header: {e}")))?
        .clone();
    let date_idx = if date_column.is_empty() {
        0
    } else {
        headers
            .iter()
            .position(|h| h == date_column)
            .ok_or_else(|| Error::Config(format!("date column '{date_column}' not in header")))?
    };
    let columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if columns.is_empty() {
        return Err(Error::Data("CSV has no value columns".into()));
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("row {}: {e}", row_no + 2)))?;
        let ts_str = record.get(date_idx).unwrap_or("");
        let ts = parse_timestamp(ts_str).ok_or_else(|| {
            Error::Data(format!("row {}, column {}: unparseable timestamp '{ts_str}'", row_no + 2, date_idx + 1))
        })?;
        let mut row = Vec::with_capacity(columns.len());
        for (i, cell) in record.iter().enumerate() {
            if i == date_idx {
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!("row {}, column {}: unparseable number '{cell}'", row_no + 2, i + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {}, column {}: non-finite value", row_no + 2, i + 1)));
            }
            row.push(v);
        }
        if let Some(&last) = timestamps.last() {
            if ts <= last {
                return Err(Error::Data(format!(
                    "row {}: timestamps not strictly increasing ({ts} after {last})",
                    row_no + 2
                )));
            }
        }
        timestamps.push(ts);
        values.push(row);
    }
    if values.is_empty() {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    Ok(RawSeries { timestamps, values, columns })
}

/// Chronological split + windowing. Normalization statistics come from
/// the training split. The training split must hold at least one window;
/// validation/test splits may be empty (their window count is then 0).
pub fn split_and_window(
    series: &RawSeries,
    input_len: usize,
    horizon: usize,
    ratios: [f64; 3],
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    if input_len == 0 || horizon == 0 {
        return Err(Error::Config("input_len and horizon must be >= 1".into()));
    }
    if ratios.iter().any(|r| *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be nonnegative and sum to 1, got {ratios:?}")));
    }
    let t = series.len();
    let n_train = (ratios[0] * t as f64).floor() as usize;
    let n_valid = (ratios[1] * t as f64).floor() as usize;
    let need = input_len + horizon;
    if n_train < need {
        return Err(Error::Config(format!(
            "training split has {n_train} rows but needs at least {need} (= input_len {input_len} + horizon {horizon})"
        )));
    }
    let train_rows = series.values[..n_train].to_vec();
    let valid_rows = series.values[n_train..n_train + n_valid].to_vec();
    let test_rows = series.values[n_train + n_valid..].to_vec();
    let stats = NormStats::from_rows(&train_rows, &series.columns);
    Ok((
        WindowedDataset::new(train_rows, input_len, horizon, stats.clone())?,
        WindowedDataset::new(valid_rows, input_len, horizon, stats.clone())?,
        WindowedDataset::new(test_rows, input_len, horizon, stats)?,
    ))
}

/// Synthetic benchmark series: per-feature phase-shifted sinusoid of the
/// given period, plus a linear trend and Gaussian noise.
pub fn synthetic_series(
    t_len: usize,
    n_features: usize,
    period: f64,
    amplitude: f64,
    slope: f64,
    noise_std: f64,
    seed: u64,
) -> RawSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut row = Vec::with_capacity(n_features);
        for j in 0..n_features {
            let phase = 2.0 * std::f64::consts::PI * j as f64 / n_features as f64;
            let base = amplitude * (2.0 * std::f64::consts::PI * t as f64 / period + phase).sin()
                + slope * t as f64;
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let noise = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            row.push(base + noise_std * noise);
        }
        values.push(row);
    }
    RawSeries {
        timestamps: (0..t_len).map(|t| t as f64).collect(),
        values,
        columns: (0..n_features).map(|j| format!("f{j}")).collect(),
    }
}

/// Write a series back out as CSV (timestamp column first).
pub fn save_csv(series: &RawSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["date".to_string()];
    header.extend(series.columns.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (ts, row) in series.timestamps.iter().zip(&series.values) {
        let mut rec = vec![format!("{ts}")];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_csv() {
        let f = write_temp_csv("date,a,b\n2020-01-01 00:00:00,1.0,2.0\n2020-01-01 01:00:00,3.0,4.0\n2020-01-01 02:00:00,5.0,6.0\n");
        let s = load_csv(f.path(), "date").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.n_features(), 2);
        assert_eq!(s.values[1], vec![3.0, 4.0]);
    }

    #[test]
    fn unparseable_cell_reports_position() {
        let f = write_temp_csv("date,a\n1,1.0\n2,abc\n");
        let err = load_csv(f.path(), "date").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let f = write_temp_csv("date,a\n5,1.0\n3,2.0\n");
        let err = load_csv(f.path(), "date").unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn univariate_selection() {
        let f = write_temp_csv("date,a,b\n1,1.0,2.0\n2,3.0,4.0\n");
        let s = load_csv(f.path(), "date").unwrap().select_column("b").unwrap();
        assert_eq!(s.n_features(), 1);
        assert_eq!(s.values, vec![vec![2.0], vec![4.0]]);
    }

    #[test]
    fn window_counting_oracle() {
        // T=20, L=4, O=2, ratios 0.6/0.2/0.2: train rows = 12 -> 12-4-2+1 = 7
        let s = synthetic_series(20, 1, 5.0, 1.0, 0.0, 0.0, 0);
        let (train, valid, _test) = split_and_window(&s, 4, 2, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!(train.len(), 7);
        // 4-row validation split cannot hold a 6-row window
        assert_eq!(valid.len(), 0);
    }

    #[test]
    fn window_counts_at_benchmark_scale() {
        // counting oracle for a 69,680-row series at L=96, O=96
        let t = 69_680usize;
        let s = synthetic_series(t, 2, 24.0, 1.0, 0.0, 0.0, 1);
        let (train, valid, test) = split_and_window(&s, 96, 96, [0.7, 0.1, 0.2]).unwrap();
        let n_train = (0.7 * t as f64).floor() as usize;
        let n_valid = (0.1 * t as f64).floor() as usize;
        let n_test = t - n_train - n_valid;
        assert_eq!(train.len(), n_train - 96 - 96 + 1);
        assert_eq!(valid.len(), n_valid - 96 - 96 + 1);
        assert_eq!(test.len(), n_test - 96 - 96 + 1);
    }

    #[test]
    fn too_short_split_is_config_error() {
        let s = synthetic_series(20, 1, 5.0, 1.0, 0.0, 0.0, 0);
        let err = split_and_window(&s, 10, 5, [0.6, 0.2, 0.2]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("15"), "{err}");
    }

    #[test]
    fn constant_feature_normalizes_to_zero() {
        let mut s = synthetic_series(40, 2, 5.0, 1.0, 0.0, 0.1, 3);
        for row in &mut s.values {
            row[1] = 7.0; // constant feature
        }
        let (train, _, _) = split_and_window(&s, 4, 2, [0.7, 0.1, 0.2]).unwrap();
        for i in 0..train.len() {
            let w = train.sample(i);
            for t in 0..4 {
                assert_eq!(w.get2(t, 1), 0.0);
            }
        }
    }

    #[test]
    fn normalize_roundtrip() {
        let s = synthetic_series(50, 3, 7.0, 1.0, 0.01, 0.2, 4);
        let stats = NormStats::from_rows(&s.values, &s.columns);
        for row in &s.values {
            let back = stats.denormalize_row(&stats.normalize_row(row));
            for (a, b) in back.iter().zip(row) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn labels_are_views_into_the_raw_series() {
        let s = synthetic_series(60, 2, 7.0, 1.0, 0.0, 0.1, 5);
        let (train, _, _) = split_and_window(&s, 5, 3, [0.7, 0.1, 0.2]).unwrap();
        let stats = train.stats.clone();
        for i in [0usize, 3, train.len() - 1] {
            let label = train.label(i);
            for t in 0..3 {
                let raw_row = &s.values[i + 5 + t];
                let norm = stats.normalize_row(raw_row);
                for j in 0..2 {
                    assert!((label.get2(t, j) - norm[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn splits_never_straddle_boundaries() {
        let s = synthetic_series(100, 1, 7.0, 1.0, 0.0, 0.1, 6);
        let (train, valid, test) = split_and_window(&s, 6, 4, [0.7, 0.1, 0.2]).unwrap();
        let n_train = 70;
        let n_valid = 10;
        // last train label row is within the train split
        let last = train.len() - 1;
        let _ = train.label(last); // in-bounds by construction
        assert!(last + 6 + 4 <= n_train);
        assert!(valid.len() == 0 || valid.len() + 6 + 4 - 1 <= n_valid);
        assert!(test.len() + 6 + 4 - 1 <= 100 - n_train - n_valid);
    }

    #[test]
    fn csv_roundtrip() {
        let s = synthetic_series(10, 2, 5.0, 1.0, 0.0, 0.0, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        save_csv(&s, &path).unwrap();
        let back = load_csv(&path, "date").unwrap();
        assert_eq!(back.len(), 10);
        for (a, b) in back.values.iter().zip(&s.values) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
