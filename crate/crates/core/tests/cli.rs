use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fwstack::report::sha256_file;
use fwstack::series::split_count;
use fwstack::synth::{logistic_family, CurveKind, CurveSpec, Role};

fn fwstack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fwstack")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small synthetic family with a constant region, plus a fast config.
fn fixture(dir: &Path) -> PathBuf {
    let mut fam = logistic_family(4, 2, 75, 3);
    fam.curves.push(CurveSpec {
        kind: CurveKind::Constant,
        role: Role::Holdout,
        ..CurveSpec::logistic("flat", 75, 40.0, 0.1, 0.0)
    });
    fs::write(dir.join("curves.toml"), fam.to_toml().unwrap()).unwrap();
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "synthetic = \"curves.toml\"\nn_runs = 2\nlstm_widths = [4, 6, 6]\nlstm_epochs = 3\n\
         mlp_hidden = [12, 12]\nmlp_epochs = 10\noutput_dir = \"out\"\n",
    )
    .unwrap();
    cfg
}

fn snapshot(dir: &Path) -> PathBuf {
    let mut text = String::from("Province/State,Country/Region,Lat,Long");
    for d in 0..70 {
        let date = chrono::NaiveDate::from_ymd_opt(2020, 1, 22).unwrap() + chrono::Duration::days(d);
        text.push_str(&date.format(",%-m/%-d/%y").to_string());
    }
    text.push('\n');
    let rows: [(&str, &str, Box<dyn Fn(i64) -> u64>); 3] = [
        ("", "Atlantis", Box::new(|d| (d * d) as u64)),
        ("North", "Lemuria", Box::new(|d| (3 * d) as u64)),
        ("South", "Lemuria", Box::new(|d| if d == 40 { 0 } else { d as u64 })),
    ];
    for (prov, country, f) in rows {
        text.push_str(&format!("{prov},{country},1.0,2.0"));
        for d in 0..70 {
            text.push_str(&format!(",{}", f(d)));
        }
        text.push('\n');
    }
    let p = dir.join("snapshot.csv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_single_horizon_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let data_hash = sha256_file(&dir.path().join("curves.toml")).unwrap();
    let out = dir.path().join("out");
    let o = fwstack(&["run", cfg.to_str().unwrap(), "--horizon", "7", "--holdout", "holdout-00,holdout-01"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let board = fs::read_to_string(out.join("leaderboard.csv")).unwrap();
    let lines: Vec<&str> = board.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "method,h7");
    assert_eq!(lines.len(), 8);
    assert!(!out.join("scores_h14.csv").exists());

    let o = fwstack(&["report", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tables = fs::read_to_string(out.join("report/tables.txt")).unwrap();
    let plot = fs::read_to_string(out.join("report/plot_holdout-00_h7.csv")).unwrap();
    let rows: Vec<Vec<&str>> = plot.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let forecast_rows = rows.iter().filter(|r| !r[2].is_empty()).count();
    assert_eq!(forecast_rows, 7);
    assert!(rows[..rows.len() - 7].iter().all(|r| r[2..].iter().all(|c| c.is_empty())));
    assert!(rows.iter().all(|r| r.len() == 9 && r[1].parse::<f64>().is_ok()));

    // the leaderboard table has the 7 methods and one horizon column
    let board_table: Vec<&str> = tables
        .lines()
        .skip_while(|l| !l.starts_with("sMAPE"))
        .skip(3)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(board_table.len(), 7, "{tables}");
    assert!(board_table.iter().all(|l| l.split('|').count() == 2));

    // regenerating the report changes nothing
    let o = fwstack(&["report", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("report/tables.txt")).unwrap(), tables);
    assert_eq!(fs::read_to_string(out.join("report/plot_holdout-00_h7.csv")).unwrap(), plot);

    // inputs are untouched
    assert_eq!(sha256_file(&dir.path().join("curves.toml")).unwrap(), data_hash);

    // a saved model file drives the forecast command
    let model = out.join("models/h7_run0_feature_weighted.json");
    let o = fwstack(&["forecast", "--config", cfg.to_str().unwrap(), "--region", "holdout-01", "--bundle", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap().is_finite()));
}

#[test]
fn features_one_row_per_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let o = fwstack(&["features", "--config", cfg.to_str().unwrap(), "--region", "train-01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap().len(), 8);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), split_count(75, 7, 7));
    for r in &rows {
        assert!(r.iter().skip(3).all(|c| c.parse::<f64>().unwrap().is_finite()));
    }

    let o = fwstack(&["features", "--config", cfg.to_str().unwrap(), "--region", "flat", "--horizon", "14"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), split_count(75, 14, 7));
    for r in rows {
        let cells: Vec<f64> = r.split(',').skip(4).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells, vec![0.0; 4], "{r}");
    }
}

#[test]
fn forecast_with_a_base_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let o = fwstack(&["forecast", "--config", cfg.to_str().unwrap(), "--region", "flat", "--model", "hw", "--horizon", "14"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "date,forecast");
    assert_eq!(lines.len(), 15);
    assert!(lines[1..].iter().all(|l| l.ends_with(",40")), "{text}");
    assert!(lines[1].starts_with("2020-05-15,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());

    let missing = dir.path().join("no-such.csv");
    let o = fwstack(&["run", "--snapshot", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such.csv"), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "synthetic = \"curves.toml\"\nhorizonz = [7]\n").unwrap();
    assert_eq!(fwstack(&["run", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(fwstack(&["run", cfg.to_str().unwrap(), "--horizon", "10"]).status.code(), Some(1));
    assert_eq!(
        fwstack(&["run", cfg.to_str().unwrap(), "--train", "train-00,train-01", "--holdout", "train-01"]).status.code(),
        Some(1)
    );

    let o = fwstack(&["features", "--config", cfg.to_str().unwrap(), "--region", "trian-00"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train-00"), "{}", stderr(&o));

    let o = fwstack(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn ingest_check_reports_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let snap = snapshot(dir.path());
    let o = fwstack(&["ingest-check", snap.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("3 rows, 70 dates"), "{text}");
    assert!(text.contains("Lemuria: 1 decreasing step(s), first at 2020-03-02"), "{text}");
    assert!(text.contains("1 region(s) with decreasing counts"));

    let o = fwstack(&["ingest-check", snap.to_str().unwrap(), "--region", "Atlantis"]);
    assert!(stdout(&o).contains("0 region(s)"));
    let o = fwstack(&["ingest-check", snap.to_str().unwrap(), "--region", "Atlantys"]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("broken.csv"), "Country,Lat\nx,1\n").unwrap();
    let o = fwstack(&["ingest-check", dir.path().join("broken.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
