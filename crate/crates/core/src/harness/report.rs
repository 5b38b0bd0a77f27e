//! Report files: `summary.json`, `rates.csv`, one `cdf_<i>.csv` and
//! `trace_<i>.csv` per sweep point, and `provenance.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiment::ExperimentReport;

fn io_err(path: &Path, what: &str) -> impl FnOnce(std::io::Error) -> Error {
    let context = format!("{what} {}", path.display());
    move |source| Error::Io { context, source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            context: format!("writing {}", path.display()),
            source,
        },
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(&err)?;
    w.write_record(header).map_err(&err)?;
    for row in rows {
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(io_err(path, "flushing"))?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Write every report file into `out_dir` (created if needed) and return
/// their paths. Output depends only on `report`.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir, "creating"))?;
    let mut written = Vec::new();

    let summary = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&summary, json + "\n").map_err(io_err(&summary, "writing"))?;
    written.push(summary);

    let rates = out_dir.join("rates.csv");
    write_csv(
        &rates,
        &["sweep_value", "mean_rate", "stderr", "mean_rate_stage1", "mean_rate_stage2", "nmse", "snr_p10_db"],
        report.points.iter().map(|p| {
            vec![
                opt(p.sweep_value),
                p.mean_rate.to_string(),
                p.stderr.to_string(),
                p.mean_rate_stage1.to_string(),
                p.mean_rate_stage2.to_string(),
                opt(p.nmse),
                p.snr_p10_db.to_string(),
            ]
        }),
    )?;
    written.push(rates);

    for (i, p) in report.points.iter().enumerate() {
        let cdf = out_dir.join(format!("cdf_{i}.csv"));
        write_csv(&cdf, &["snr_db", "prob"], p.cdf.iter().map(|(v, q)| vec![v.to_string(), q.to_string()]))?;
        written.push(cdf);

        let trace = out_dir.join(format!("trace_{i}.csv"));
        write_csv(
            &trace,
            &["block", "snr_db"],
            p.trace.iter().enumerate().map(|(n, s)| vec![(n + 1).to_string(), s.to_string()]),
        )?;
        written.push(trace);
    }

    let prov = out_dir.join("provenance.txt");
    let pv = &report.provenance;
    let text = format!(
        "config_hash = {}\nmaster_seed = {}\ncode_version = {}\nn_trials = {}\nscenario = {}\nsweep = {}\n",
        pv.config_hash,
        pv.master_seed,
        pv.code_version,
        pv.n_trials,
        report.scenario,
        report.sweep_name.as_deref().unwrap_or("none"),
    );
    fs::write(&prov, text).map_err(io_err(&prov, "writing"))?;
    written.push(prov);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::{PointSummary, Provenance};
    use crate::harness::Scenario;

    fn report() -> ExperimentReport {
        ExperimentReport {
            scenario: Scenario::NoIrs,
            sweep_name: Some("tau1".into()),
            points: vec![PointSummary {
                sweep_value: Some(40.0),
                n_trials: 2,
                mean_rate: 1.25,
                stderr: 0.1,
                mean_rate_stage1: 1.0,
                mean_rate_stage2: 1.3,
                nmse: None,
                snr_p10_db: -3.5,
                cdf: vec![(-3.5, 0.0), (0.1, 0.5), (2.0, 1.0)],
                trace: vec![1.0, 2.5],
            }],
            provenance: Provenance {
                config_hash: "ab".into(),
                master_seed: 4,
                code_version: "0.1.0".into(),
                n_trials: 2,
            },
        }
    }

    #[test]
    fn files_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report(), dir.path()).unwrap();
        assert_eq!(paths.len(), 5);

        let mut rdr = csv::Reader::from_path(dir.path().join("cdf_0.csv")).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["snr_db", "prob"]);
        let back: Vec<(f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(back, report().points[0].cdf);

        let rates = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
        assert!(!rates.contains('\r'));
        assert_eq!(rates.lines().nth(1).unwrap(), "40,1.25,0.1,1,1.3,,-3.5");

        let json = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report());
        let prov = fs::read_to_string(dir.path().join("provenance.txt")).unwrap();
        assert!(prov.contains("config_hash = ab") && prov.contains("master_seed = 4"));
    }

    #[test]
    fn re_emission_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = emit_report(&report(), a.path()).unwrap();
        emit_report(&report(), b.path()).unwrap();
        emit_report(&report(), a.path()).unwrap();
        for p in pa {
            let name = p.file_name().unwrap();
            assert_eq!(fs::read(&p).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
    }

    #[test]
    fn unwritable_target_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, "x").unwrap();
        let err = emit_report(&report(), &file).unwrap_err().to_string();
        assert!(err.contains("occupied"), "{err}");
    }
}
