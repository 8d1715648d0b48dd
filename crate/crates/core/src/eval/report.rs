//! CSV and JSON-lines artifacts. Reals are written in `{:.16e}` form, which
//! carries 17 significant digits and round-trips exactly.

use std::fs;
use std::path::Path;

use super::bench::{AblationRow, BenchmarkRecord, CorrelationReport};
use crate::error::{Error, Result};
use crate::proxies::ProxyValues;
use crate::space::Genome;

pub const RECORD_COLUMNS: [&str; 11] = [
    "genome",
    "params",
    "flops",
    "zico",
    "zico_mean_only",
    "zico_std_only",
    "grad_norm",
    "snip",
    "synflow",
    "accuracy",
    "seed",
];

/// Marker written for undefined correlations.
pub const NOT_A_VALUE: &str = "NA";

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_real(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_A_VALUE.to_string(), real)
}

/// Header plus rows, all fields already rendered.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn records_csv(records: &[BenchmarkRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let p = &r.proxies;
            let mut row = vec![r.genome.key()];
            row.extend(
                [
                    p.params,
                    p.flops,
                    p.zico,
                    p.zico_mean_only,
                    p.zico_std_only,
                    p.grad_norm,
                    p.snip,
                    p.synflow,
                    r.accuracy,
                ]
                .map(real),
            );
            row.push(r.seed.to_string());
            row
        })
        .collect();
    csv_string(&RECORD_COLUMNS, &rows)
}

pub fn emit_csv(records: &[BenchmarkRecord], path: &Path) -> Result<()> {
    write_file(path, &records_csv(records))
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str> {
    rec.get(i).ok_or_else(|| {
        Error::parse(
            None,
            format!("line {line}: missing column {}", RECORD_COLUMNS[i]),
        )
    })
}

fn num(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    let s = field(rec, i, line)?;
    s.parse().map_err(|_| {
        Error::parse(
            None,
            format!(
                "line {line}: {s:?} in column {} is not a number",
                RECORD_COLUMNS[i]
            ),
        )
    })
}

pub fn parse_records_csv(text: &str) -> Result<Vec<BenchmarkRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::parse(None, e.to_string()))?
        .clone();
    if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
        return Err(Error::Format {
            expected: RECORD_COLUMNS.join(","),
            actual: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(None, format!("line {line}: {e}")))?;
        let proxies = ProxyValues {
            params: num(&rec, 1, line)?,
            flops: num(&rec, 2, line)?,
            zico: num(&rec, 3, line)?,
            zico_mean_only: num(&rec, 4, line)?,
            zico_std_only: num(&rec, 5, line)?,
            grad_norm: num(&rec, 6, line)?,
            snip: num(&rec, 7, line)?,
            synflow: num(&rec, 8, line)?,
        };
        let seed = field(&rec, 10, line)?;
        out.push(BenchmarkRecord {
            genome: Genome::from_key(field(&rec, 0, line)?)?,
            proxies,
            accuracy: num(&rec, 9, line)?,
            seed: seed
                .parse()
                .map_err(|_| Error::parse(None, format!("line {line}: bad seed {seed:?}")))?,
        });
    }
    Ok(out)
}

pub fn correlation_csv(report: &CorrelationReport) -> String {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.proxy.clone(),
                opt_real(r.kendall_tau),
                opt_real(r.spearman_rho),
                r.n.to_string(),
                report.dataset.clone(),
                report.config_digest.clone(),
            ]
        })
        .collect();
    csv_string(
        &[
            "proxy",
            "kendall_tau",
            "spearman_rho",
            "n",
            "dataset",
            "config_digest",
        ],
        &rows,
    )
}

pub fn ablation_csv(axis: &str, rows: &[AblationRow]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.value.to_string(),
                opt_real(r.kendall_tau),
                opt_real(r.spearman_rho),
                r.is_default.to_string(),
            ]
        })
        .collect();
    csv_string(&[axis, "kendall_tau", "spearman_rho", "default"], &rows)
}

/// Human-readable correlation table.
pub fn correlation_table(report: &CorrelationReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| NOT_A_VALUE.to_string(), |x| format!("{x:+.3}"));
    let mut s = format!("{:<16} {:>8} {:>8}\n", "proxy", "KT", "SPR");
    for r in &report.rows {
        s.push_str(&format!(
            "{:<16} {:>8} {:>8}\n",
            r.proxy,
            fmt(r.kendall_tau),
            fmt(r.spearman_rho)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceKind;

    #[test]
    fn empty_records_give_header_only() {
        assert_eq!(records_csv(&[]), RECORD_COLUMNS.join(",") + "\n");
        assert!(parse_records_csv(&records_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let rec = BenchmarkRecord {
            genome: Genome {
                space: SpaceKind::Width,
                genes: vec![4, 32, 8],
            },
            proxies: ProxyValues {
                params: 1234.0,
                flops: 98765.0,
                zico: -0.1 / 3.0,
                zico_mean_only: 1e-300,
                zico_std_only: std::f64::consts::PI,
                grad_norm: 0.1 + 0.2,
                snip: 5e-324,
                synflow: 1.7976931348623157e308,
            },
            accuracy: 0.123_456_789_012_345_68,
            seed: u64::MAX,
        };
        let text = records_csv(std::slice::from_ref(&rec));
        assert_eq!(parse_records_csv(&text).unwrap(), vec![rec]);
    }

    #[test]
    fn header_mismatch_is_format_error() {
        assert!(matches!(
            parse_records_csv("genome,flops\n"),
            Err(Error::Format { .. })
        ));
    }
}
