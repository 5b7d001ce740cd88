//! Benchmark and solve records with a fixed CSV schema.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "id,n,d,m,seed,sigma_min,gap,iters,converged,wall_time_seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub seed: Option<u64>,
    pub sigma_min: f64,
    pub gap: f64,
    pub iters: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl RunRecord {
    pub fn to_csv_row(&self) -> String {
        let mut out = String::new();
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            self.id,
            self.n,
            self.d,
            self.m,
            seed,
            format_f64(self.sigma_min),
            format_f64(self.gap),
            self.iters,
            self.converged,
            format_f64(self.wall_time_seconds)
        );
        out
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.trim_end().split(',').collect();
        if fields.len() != 10 {
            bail!("expected 10 fields, found {}", fields.len());
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .with_context(|| format!("field {} is not a number: `{}`", i + 1, fields[i]))
        };
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .with_context(|| format!("field {} is not a count: `{}`", i + 1, fields[i]))
        };
        Ok(Self {
            id: fields[0].to_string(),
            n: int(1)?,
            d: int(2)?,
            m: int(3)?,
            seed: match fields[4] {
                "" => None,
                s => Some(s.parse().with_context(|| format!("bad seed `{s}`"))?),
            },
            sigma_min: num(5)?,
            gap: num(6)?,
            iters: int(7)?,
            converged: fields[8]
                .parse()
                .map_err(|_| anyhow!("field 9 is not a boolean: `{}`", fields[8]))?,
            wall_time_seconds: num(9)?,
        })
    }
}

/// Parses a CSV document written with [`CSV_HEADER`].
pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => bail!("unexpected CSV header: {other:?}"),
    }
    lines
        .enumerate()
        .map(|(i, l)| RunRecord::from_csv_row(l).with_context(|| format!("CSV row {}", i + 2)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispersion {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn dispersion(times: &[f64]) -> Option<Dispersion> {
    if times.is_empty() {
        return None;
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    Some(Dispersion {
        mean: sorted.iter().sum::<f64>() / k as f64,
        median,
        min: sorted[0],
        max: sorted[k - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunRecord {
        RunRecord {
            id: "n50-t0".into(),
            n: 50,
            d: 50,
            m: 100,
            seed: Some(17),
            sigma_min: 0.1 + 0.2,
            gap: 1.0 / 3.0,
            iters: 12,
            converged: false,
            wall_time_seconds: 2.5e-3,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let r = sample();
        assert_eq!(RunRecord::from_csv_row(&r.to_csv_row()).unwrap(), r);
        let doc = format!("{CSV_HEADER}\n{}\n", r.to_csv_row());
        assert_eq!(parse_csv(&doc).unwrap(), vec![r]);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        assert!(RunRecord::from_csv_row("a,1,2").is_err());
        assert!(parse_csv("id,n\n").is_err());
    }

    #[test]
    fn dispersion_summary() {
        let d = dispersion(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((d.min, d.median, d.max, d.mean), (1.0, 2.5, 10.0, 4.0));
        assert!(dispersion(&[]).is_none());
    }
}
