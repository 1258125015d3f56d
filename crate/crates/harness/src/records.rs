//! Run records and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const CSV_HEADER: &str = "scheme,snr_db,seed,metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    F1Weighted,
    Accuracy,
    Psnr,
    Ap50,
    Recall,
    Ber,
    Fer,
    Bpp,
    SymbolsPerSample,
    WallMs,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::F1Weighted,
        Metric::Accuracy,
        Metric::Psnr,
        Metric::Ap50,
        Metric::Recall,
        Metric::Ber,
        Metric::Fer,
        Metric::Bpp,
        Metric::SymbolsPerSample,
        Metric::WallMs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1Weighted => "f1_weighted",
            Metric::Accuracy => "accuracy",
            Metric::Psnr => "psnr",
            Metric::Ap50 => "ap50",
            Metric::Recall => "recall",
            Metric::Ber => "ber",
            Metric::Fer => "fer",
            Metric::Bpp => "bpp",
            Metric::SymbolsPerSample => "symbols_per_sample",
            Metric::WallMs => "wall_ms",
        }
    }

    pub fn parse(name: &str) -> Option<Metric> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scheme: String,
    pub snr_db: f64,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
}

impl RunRecord {
    pub fn new(scheme: impl Into<String>, snr_db: f64, seed: u64, metric: Metric, value: f64) -> Self {
        Self { scheme: scheme.into(), snr_db, seed, metric, value }
    }
}

/// Six significant digits in plain decimal notation, trailing zeros trimmed.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("float formatting round-trips");
    let magnitude = rounded.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn sort_key(a: &RunRecord, b: &RunRecord) -> std::cmp::Ordering {
    a.scheme
        .cmp(&b.scheme)
        .then(a.snr_db.total_cmp(&b.snr_db))
        .then(a.seed.cmp(&b.seed))
        .then(a.metric.name().cmp(b.metric.name()))
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(sort_key);
}

/// CSV text with rows sorted by (scheme, snr_db, seed, metric).
pub fn to_csv(records: &[RunRecord]) -> String {
    let mut rows = records.to_vec();
    sort_records(&mut rows);
    let mut out = format!("{CSV_HEADER}\n");
    for r in &rows {
        writeln!(out, "{},{},{},{},{}", r.scheme, format_sig6(r.snr_db), r.seed, r.metric.name(), format_sig6(r.value))
            .expect("writing to a String");
    }
    out
}

pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(records)).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        bail!("missing CSV header '{CSV_HEADER}'");
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let [scheme, snr, seed, metric, value] = f[..] else {
                bail!("line {}: expected 5 fields", i + 2);
            };
            Ok(RunRecord {
                scheme: scheme.to_string(),
                snr_db: snr.parse().with_context(|| format!("line {}: snr_db", i + 2))?,
                seed: seed.parse().with_context(|| format!("line {}: seed", i + 2))?,
                metric: Metric::parse(metric).with_context(|| format!("line {}: unknown metric '{metric}'", i + 2))?,
                value: value.parse().with_context(|| format!("line {}: value", i + 2))?,
            })
        })
        .collect()
}
