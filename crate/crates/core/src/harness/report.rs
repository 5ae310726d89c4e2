use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::kfold::EvolutionReport;
use super::sweep::SweepTable;

pub const REPORT_VERSION: u32 = 1;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

pub fn render_markdown(report: &EvolutionReport) -> String {
    let c = &report.config;
    let mut out = String::from("# Evolution report\n\n");
    let _ = writeln!(
        out,
        "Train world `{}`, evaluation world `{}`. Protocol: {} fold(s) x {} run(s).",
        report.train_world, report.eval_world, report.protocol.folds, report.protocol.runs
    );
    if report.protocol.leaky {
        out.push_str("\n**Leaky protocol:** evolution and evaluation use the same tasks.\n");
    }
    let _ = writeln!(
        out,
        "\nSeed {}, strategy {}, filter ratio {}, delta {}, retrieval k {}, label scale {}, epochs {}.\n",
        c.seed,
        c.strategy.as_str(),
        c.filter_ratio,
        c.delta,
        c.retrieval_k,
        c.label_scale,
        c.epochs
    );
    let _ = writeln!(
        out,
        "Base pass rate {:.3}. Final pass rate {:.3} (std {:.3}). Tokens used {} (setup {}).\n",
        report.base_pass_rate, report.final_pass_rate, report.final_pass_rate_std, report.tokens_used, report.setup_tokens
    );
    out.push_str("| Epoch | Library size | Pass rate | Mean F_tag | Mean A | Tokens | Time (ms) |\n");
    out.push_str("|---:|---:|---:|---:|---:|---:|---:|\n");
    for e in &report.epochs {
        let _ = writeln!(
            out,
            "| {} | {:.1} | {:.3} | {} | {} | {} | {} |",
            e.epoch,
            e.library_size,
            e.pass_rate,
            opt(e.mean_f_tag),
            opt(e.mean_alignment),
            e.tokens_used,
            e.wall_clock_ms
        );
    }
    let _ = writeln!(out, "\n{}", report.success_rule);
    out
}

/// Zeroes every wall-clock field so two reports can be compared byte for byte.
pub fn strip_wall_clock(report: &mut EvolutionReport) {
    report.wall_clock_ms = 0;
    for e in &mut report.epochs {
        e.wall_clock_ms = 0;
    }
    for c in &mut report.cells {
        for e in &mut c.epochs {
            e.wall_clock_ms = 0;
        }
    }
}

/// Writes `path` as JSON and a Markdown summary next to it with an `.md` extension.
pub fn emit_report(report: &EvolutionReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    let md = path.with_extension("md");
    fs::write(&md, render_markdown(report)).map_err(|e| Error::io(&md, e))
}

pub fn render_sweep_markdown(table: &SweepTable) -> String {
    let mut out = format!("# Sweep over {}\n\n", table.dimension);
    let _ = writeln!(
        out,
        "World seed {}, {} tasks. Run seed {}, {} fold(s) x {} run(s), {} epochs unless swept.\n",
        table.world.seed, table.world.n_tasks, table.config.seed, table.config.folds, table.config.runs, table.config.epochs
    );
    out.push_str("| Setting | Train | Eval | Epochs | Base | Pass rate | Std | Library size |\n");
    out.push_str("|---|---|---|---:|---:|---:|---:|---:|\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.1} |",
            r.setting, r.train_world, r.eval_world, r.epochs, r.base_pass_rate, r.pass_rate, r.pass_rate_std, r.library_size
        );
    }
    out
}

/// Writes serializable rows as CSV with a header line.
pub fn write_rows_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serializable rows as CSV text with a header line.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let err = |e: csv::Error| Error::Input(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(format!("csv: {e}")))
}

pub fn write_sweep_csv(table: &SweepTable, path: impl AsRef<Path>) -> Result<()> {
    write_rows_csv(&table.rows, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{mock_providers, run_kfold, RunConfig, SyntheticWorld, WorldConfig};

    #[test]
    fn empty_report_is_valid_json() {
        let r = EvolutionReport::empty(&RunConfig::default());
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["epochs"], serde_json::json!([]));
        assert_eq!(v["report_version"], 1);
    }

    #[test]
    fn json_round_trip() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let config = RunConfig {
            epochs: 1,
            runs: 1,
            ..RunConfig::default()
        };
        let r = run_kfold(&w, &config, &mock_providers(&[&w], &config)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        emit_report(&r, &path).unwrap();
        let back: EvolutionReport = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(fs::read_to_string(dir.path().join("report.md")).unwrap().contains("| Epoch |"));
    }

    #[test]
    fn golden_markdown() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let config = RunConfig::default();
        let mut r = run_kfold(&w, &config, &mock_providers(&[&w], &config)).unwrap();
        strip_wall_clock(&mut r);
        let md = render_markdown(&r);
        let golden = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/default_report.md");
        if std::env::var_os("SKILLFORGE_BLESS").is_some() {
            fs::write(golden, &md).unwrap();
        }
        assert_eq!(md, fs::read_to_string(golden).unwrap());
    }
}
