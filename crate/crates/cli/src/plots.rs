//! Plot data, the gnuplot script and the rest of a scenario's output
//! directory.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scenario::{ScenarioReport, Series, SeriesKind};

pub const SCRIPT_NAME: &str = "plots.gp";
pub const MANIFEST_NAME: &str = "manifest.json";

/// What was written and what was left out because it had no data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotManifest {
    pub files: Vec<String>,
    pub omitted: Vec<Omission>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Omission {
    pub section: String,
    pub reason: String,
}

fn csv_name(s: &Series) -> String {
    format!("{}.csv", s.name)
}

fn write_series(path: &Path, s: &Series) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", s.columns.join(","))?;
    for row in &s.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

fn script(written: &[&Series]) -> String {
    let mut out = String::new();
    out.push_str("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n");
    for s in written {
        let file = csv_name(s);
        let _ = writeln!(out, "\nset output '{}.png'\nset title '{}'", s.name, s.name.replace('_', " "));
        match s.kind {
            SeriesKind::LogLog => {
                let _ = writeln!(
                    out,
                    "set xlabel '{}'\nset ylabel '{}'\nplot '{file}' using 1:2 with points pt 7, '' using 1:3 with lines",
                    s.columns[0], s.columns[1]
                );
            }
            SeriesKind::Profile => {
                let _ = writeln!(
                    out,
                    "set xlabel '{}'\nset ylabel '{}'\nset logscale y\nplot '{file}' using 1:2 with lines\nunset logscale y",
                    s.columns[0], s.columns[1]
                );
            }
            SeriesKind::Heat => {
                let (x, y) = (&s.columns[0], s.columns.get(1).unwrap_or(&s.columns[0]));
                let _ = writeln!(
                    out,
                    "set xlabel '{x}'\nset ylabel '{y}'\nset size ratio -1\nplot '{file}' using 1:2:3 with points pt 5 ps 3 palette\nset size noratio"
                );
            }
        }
    }
    out
}

/// One CSV per nonempty series plus a gnuplot script covering them.
/// Empty series are listed in the manifest instead.
pub fn emit_plots(report: &ScenarioReport, dir: &Path) -> io::Result<PlotManifest> {
    fs::create_dir_all(dir)?;
    let mut manifest = PlotManifest::default();
    let mut written = Vec::new();
    for s in &report.series {
        if s.rows.is_empty() {
            manifest.omitted.push(Omission {
                section: s.name.clone(),
                reason: "no rows".into(),
            });
            continue;
        }
        write_series(&dir.join(csv_name(s)), s)?;
        manifest.files.push(csv_name(s));
        written.push(s);
    }
    if written.is_empty() {
        manifest.omitted.push(Omission {
            section: SCRIPT_NAME.into(),
            reason: "no plot data".into(),
        });
    } else {
        fs::write(dir.join(SCRIPT_NAME), script(&written))?;
        manifest.files.push(SCRIPT_NAME.into());
    }
    Ok(manifest)
}

/// Writes `report.json`, `timing.json`, bulky payload files, the plot files
/// and the manifest into `dir`; returns the paths written.
pub fn write_outputs(report: &ScenarioReport, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut manifest = emit_plots(report, dir)?;
    fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    singlab::io::write_json(&dir.join("timing.json"), &report.timing)?;
    manifest.files.extend(["report.json".to_string(), "timing.json".to_string()]);
    let payload = &report.payload;
    match &payload.rhs {
        Some(f) => {
            singlab::io::write_rhs(&dir.join("rhs"), f)?;
            singlab::io::write_integrability_csv(File::create(dir.join("rhs").join("integrability.csv"))?, f.diagnostics())?;
            manifest.files.push("rhs/".into());
        }
        None => manifest.omitted.push(Omission {
            section: "rhs".into(),
            reason: "scenario builds no right-hand side".into(),
        }),
    }
    match &payload.sd_map {
        Some(map) => {
            singlab::io::write_sdmap_csv(File::create(dir.join("sdmap.csv"))?, map)?;
            singlab::io::write_violations(&dir.join("usc_violations.json"), singlab::singdim::USC_SLACK, &payload.violations)?;
            manifest.files.extend(["sdmap.csv".to_string(), "usc_violations.json".to_string()]);
        }
        None => manifest.omitted.push(Omission {
            section: "sd map".into(),
            reason: "scenario computes no singular dimension map".into(),
        }),
    }
    manifest.files.push(MANIFEST_NAME.into());
    singlab::io::write_json(&dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest.files.iter().map(|f| dir.join(f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ScenarioConfig, ScenarioName};
    use crate::scenario::{Summary, Timing};

    fn report(series: Vec<Series>) -> ScenarioReport {
        let config = ScenarioConfig::preset(ScenarioName::Stein);
        ScenarioReport {
            scenario: config.scenario,
            config,
            proxy_note: String::new(),
            artifacts: vec![],
            checks: vec![],
            errors: vec![],
            results: Default::default(),
            series,
            summary: Summary {
                checks: 0,
                passed: 0,
                failed: vec![],
                errors: 0,
                criteria: Default::default(),
                all_passed: true,
            },
            timing: Timing::default(),
            payload: Default::default(),
        }
    }

    #[test]
    fn loglog_file_has_fit_columns() {
        let dir = tempfile::tempdir().unwrap();
        let s = Series::log_log("fit", &[(0.0, 1.0), (1.0, 2.5)], 1.5, 1.0);
        let m = emit_plots(&report(vec![s]), dir.path()).unwrap();
        assert_eq!(m.files, vec!["fit.csv", SCRIPT_NAME]);
        let text = fs::read_to_string(dir.path().join("fit.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "log_scale,log_value,fitted");
        assert_eq!(lines[2], "1e0,2.5e0,2.5e0");
        assert!(fs::read_to_string(dir.path().join(SCRIPT_NAME)).unwrap().contains("'fit.csv'"));
    }

    #[test]
    fn empty_sections_are_noted() {
        let dir = tempfile::tempdir().unwrap();
        let empty = Series {
            name: "nothing".into(),
            kind: SeriesKind::Profile,
            columns: vec!["x".into(), "y".into()],
            rows: vec![],
        };
        let m = emit_plots(&report(vec![empty]), dir.path()).unwrap();
        assert!(m.files.is_empty());
        assert_eq!(m.omitted.len(), 2);
        assert_eq!(m.omitted[0].section, "nothing");
        assert!(!dir.path().join("nothing.csv").exists());
        assert!(!dir.path().join(SCRIPT_NAME).exists());
    }

    #[test]
    fn outputs_list_report_and_missing_payload() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&report(vec![]), dir.path()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("report.json")));
        let m: PlotManifest = singlab::io::read_json(&dir.path().join(MANIFEST_NAME)).unwrap();
        let sections: Vec<&str> = m.omitted.iter().map(|o| o.section.as_str()).collect();
        assert_eq!(sections, vec![SCRIPT_NAME, "rhs", "sd map"]);
    }
}
