//! Reading evaluation CSVs and rendering summary tables.

use std::fmt::Write as _;

use pmri_core::metrics::{EvalReport, EvalRow, CSV_HEADER};

use crate::CliError;

fn number(field: &str, line: usize, what: &str) -> Result<f64, CliError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::data(format!("line {line}: `{field}` is not a number ({what})")))?;
    if v.is_nan() {
        return Err(CliError::data(format!("line {line}: {what} is NaN")));
    }
    Ok(v)
}

/// Dataset IDs and method tags are written unquoted, so only plain tokens are accepted.
fn token<'a>(field: &'a str, line: usize, what: &str) -> Result<&'a str, CliError> {
    let plain = !field.is_empty() && field.chars().all(|c| c.is_ascii_alphanumeric() || "._-+".contains(c));
    if !plain {
        return Err(CliError::data(format!("line {line}: `{field}` is not a valid {what}")));
    }
    Ok(field)
}

/// Parses a report written by `evaluate`. Aggregate `mean` rows are dropped;
/// they are recomputed from the per-dataset rows.
pub fn parse_report(text: &str) -> Result<EvalReport, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("bad report header: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != CSV_HEADER {
        return Err(CliError::data(format!("unexpected report header `{headers}`")));
    }
    let mut report = EvalReport::default();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::data(format!("line {line}: {e}")))?;
        if rec.len() != 7 {
            return Err(CliError::data(format!("line {line}: expected 7 fields, got {}", rec.len())));
        }
        if &rec[0] == "mean" {
            continue;
        }
        let dice = if rec[4].is_empty() && rec[5].is_empty() && rec[6].is_empty() {
            None
        } else {
            let mut d = [0.0; 3];
            for (k, v) in d.iter_mut().enumerate() {
                *v = number(&rec[4 + k], line, "dice")?;
            }
            Some(d)
        };
        report.push(EvalRow {
            dataset_id: token(&rec[0], line, "dataset id")?.to_string(),
            method: token(&rec[1], line, "method tag")?.to_string(),
            snr_db: number(&rec[2], line, "snr_db")?,
            ssim: number(&rec[3], line, "ssim")?,
            dice,
        });
    }
    Ok(report)
}

/// Per-method means sorted by mean SNR, best first.
pub fn ranked_means(report: &EvalReport) -> Vec<EvalRow> {
    let mut means = report.means();
    means.sort_by(|a, b| b.snr_db.total_cmp(&a.snr_db).then_with(|| a.method.cmp(&b.method)));
    means
}

pub fn summary_table(report: &EvalReport) -> String {
    let means = ranked_means(report);
    let width = means.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>9}  {:>7}  {:>8}  {:>7}  {:>7}",
        "method", "snr_db", "ssim", "dice_csf", "dice_gm", "dice_wm"
    );
    for r in means {
        let dice = match r.dice {
            Some([a, b, c]) => format!("{a:>8.4}  {b:>7.4}  {c:>7.4}"),
            None => format!("{:>8}  {:>7}  {:>7}", "-", "-", "-"),
        };
        let _ = writeln!(s, "{:<width$}  {:>9.3}  {:>7.4}  {dice}", r.method, r.snr_db, r.ssim);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_core_csv() {
        let mut rep = EvalReport::default();
        rep.push(EvalRow {
            dataset_id: "ds000001".into(),
            method: "joint".into(),
            snr_db: f64::INFINITY,
            ssim: 1.0,
            dice: Some([1.0, 0.5, 0.25]),
        });
        rep.push(EvalRow {
            dataset_id: "ds000001".into(),
            method: "clear".into(),
            snr_db: 20.5,
            ssim: 0.75,
            dice: None,
        });
        let back = parse_report(&rep.to_csv()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn rejects_foreign_headers_and_bad_numbers() {
        assert!(parse_report("a,b\n1,2\n").is_err());
        let bad = format!("{CSV_HEADER}\nx,m,abc,0.5,,,\n");
        assert!(parse_report(&bad).is_err());
        let short = format!("{CSV_HEADER}\nx,m,1.0\n");
        assert!(parse_report(&short).is_err());
        let quoted = format!("{CSV_HEADER}\n\"x,y\",m,1.0,0.5,,,\n");
        assert!(parse_report(&quoted).is_err());
    }

    #[test]
    fn ranking_is_by_snr_descending() {
        let mut rep = EvalReport::default();
        for (m, snr) in [("a", 10.0), ("b", 30.0), ("c", 20.0)] {
            rep.push(EvalRow { dataset_id: "d".into(), method: m.into(), snr_db: snr, ssim: 0.5, dice: None });
        }
        let order: Vec<String> = ranked_means(&rep).into_iter().map(|r| r.method).collect();
        assert_eq!(order, ["b", "c", "a"]);
    }
}
