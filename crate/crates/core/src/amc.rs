//! Link adaptation table: SNR thresholds and the bit-rates they unlock.

use std::path::Path;

use crate::error::ConfigError;

/// Number of entries in the default table (one per CQI value).
pub const DEFAULT_ENTRIES: usize = 15;

/// Rate of the top (14 dB) entry of the default table, bps per allocation.
pub const DEFAULT_TOP_RATE_BPS: f64 = 700_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmcEntry {
    pub snr_threshold_linear: f64,
    pub rate_bps: f64,
}

impl AmcEntry {
    pub fn snr_threshold_db(&self) -> f64 {
        10.0 * self.snr_threshold_linear.log10()
    }
}

/// Ordered `(S_m, R_m)` pairs, `m = 1..=M`. Thresholds and rates are both
/// strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct AmcTable {
    entries: Vec<AmcEntry>,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl AmcTable {
    pub fn new(entries: Vec<AmcEntry>) -> Result<Self, ConfigError> {
        if entries.is_empty() {
            return Err(ConfigError::invalid("amc_table", "table needs at least one entry"));
        }
        for w in entries.windows(2) {
            if w[1].snr_threshold_linear <= w[0].snr_threshold_linear {
                return Err(ConfigError::invalid(
                    "amc_table",
                    "snr thresholds must be strictly increasing",
                ));
            }
            if w[1].rate_bps <= w[0].rate_bps {
                return Err(ConfigError::invalid(
                    "amc_table",
                    "rates must be strictly increasing",
                ));
            }
        }
        if entries
            .iter()
            .any(|e| !(e.snr_threshold_linear > 0.0 && e.rate_bps > 0.0 && e.rate_bps.is_finite()))
        {
            return Err(ConfigError::invalid(
                "amc_table",
                "thresholds and rates must be positive and finite",
            ));
        }
        Ok(Self { entries })
    }

    /// Builds a table from `(snr_db, rate_bps)` rows.
    pub fn from_db_rows(rows: &[(f64, f64)]) -> Result<Self, ConfigError> {
        Self::new(
            rows.iter()
                .map(|&(snr_db, rate_bps)| AmcEntry {
                    snr_threshold_linear: db_to_linear(snr_db),
                    rate_bps,
                })
                .collect(),
        )
    }

    /// Reads a CSV with header `snr_db,rate_bps`.
    pub fn from_csv_path(path: &Path) -> Result<Self, ConfigError> {
        let io_err = |e: csv::Error| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let mut reader = csv::Reader::from_path(path).map_err(io_err)?;
        let headers = reader.headers().map_err(io_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ConfigError::invalid("amc_table", format!("missing column `{name}`")))
        };
        let (snr_col, rate_col) = (col("snr_db")?, col("rate_bps")?);
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(io_err)?;
            let parse = |i: usize| -> Result<f64, ConfigError> {
                record
                    .get(i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| ConfigError::invalid("amc_table", e.to_string()))
            };
            rows.push((parse(snr_col)?, parse(rate_col)?));
        }
        Self::from_db_rows(&rows)
    }

    pub fn entries(&self) -> &[AmcEntry] {
        &self.entries
    }

    /// Number of rates `M`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry for the 1-based index `m`.
    pub fn entry(&self, m: usize) -> AmcEntry {
        self.entries[m - 1]
    }

    pub fn rate(&self, m: usize) -> f64 {
        self.entry(m).rate_bps
    }

    pub fn threshold(&self, m: usize) -> f64 {
        self.entry(m).snr_threshold_linear
    }

    pub fn lowest_rate(&self) -> f64 {
        self.entries[0].rate_bps
    }

    pub fn highest_rate(&self) -> f64 {
        self.entries[self.entries.len() - 1].rate_bps
    }

    /// Rate of the highest entry whose threshold is at or below `snr_db`.
    pub fn rate_at_db(&self, snr_db: f64) -> Option<f64> {
        snr_to_rate_index(db_to_linear(snr_db) * (1.0 + 1e-12), self).map(|m| self.rate(m))
    }
}

/// Default table: 15 thresholds at 0..=14 dB, rates following a truncated
/// Shannon curve `log2(1 + S)` scaled so the 14 dB entry is 700 kbps.
pub fn default_amc_table() -> AmcTable {
    let top = (1.0 + db_to_linear((DEFAULT_ENTRIES - 1) as f64)).log2();
    let rows: Vec<(f64, f64)> = (0..DEFAULT_ENTRIES)
        .map(|k| {
            let snr_db = k as f64;
            let rate = DEFAULT_TOP_RATE_BPS * (1.0 + db_to_linear(snr_db)).log2() / top;
            (snr_db, rate)
        })
        .collect();
    AmcTable::from_db_rows(&rows).expect("default table is monotone")
}

/// Largest 1-based `m` with `S_m <= snr`, or `None` below the first threshold.
pub fn snr_to_rate_index(snr_linear: f64, table: &AmcTable) -> Option<usize> {
    // thresholds are sorted, so the count of thresholds <= snr is the index
    let m = table
        .entries
        .partition_point(|e| e.snr_threshold_linear <= snr_linear);
    (m > 0).then_some(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_shape() {
        let t = default_amc_table();
        assert_eq!(t.len(), 15);
        for (k, e) in t.entries().iter().enumerate() {
            assert!((e.snr_threshold_db() - k as f64).abs() < 1e-9);
        }
        assert!((t.highest_rate() - 700_000.0).abs() < 1e-6);
        assert!(t.entries().windows(2).all(|w| w[1].rate_bps > w[0].rate_bps));
    }

    #[test]
    fn rate_index_boundaries() {
        let t = default_amc_table();
        assert_eq!(snr_to_rate_index(t.threshold(3), &t), Some(3));
        assert_eq!(snr_to_rate_index(t.threshold(1) * 0.999, &t), None);
        assert_eq!(snr_to_rate_index(0.0, &t), None);
        assert_eq!(snr_to_rate_index(1e6, &t), Some(15));
    }

    #[test]
    fn rejects_non_monotone_rates() {
        let err = AmcTable::from_db_rows(&[(0.0, 10.0), (1.0, 5.0)]).unwrap_err();
        assert_eq!(err.key(), Some("amc_table"));
        assert!(AmcTable::from_db_rows(&[]).is_err());
        assert!(AmcTable::from_db_rows(&[(2.0, 10.0), (1.0, 20.0)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("amc.csv");
        std::fs::write(&path, "snr_db,rate_bps\n0,100\n3,250\n6,400\n").unwrap();
        let t = AmcTable::from_csv_path(&path).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.rate(2), 250.0);
        assert!((t.entry(3).snr_threshold_db() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rate_at_db_matches_entries() {
        let t = default_amc_table();
        assert_eq!(t.rate_at_db(14.0), Some(t.highest_rate()));
        assert_eq!(t.rate_at_db(10.0), Some(t.rate(11)));
        assert_eq!(t.rate_at_db(-1.0), None);
    }

    proptest::proptest! {
        #[test]
        fn rate_index_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let t = default_amc_table();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(snr_to_rate_index(lo, &t) <= snr_to_rate_index(hi, &t));
        }
    }
}
