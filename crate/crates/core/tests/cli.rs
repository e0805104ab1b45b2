mod common;

use common::*;

fn tiny_dir() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let census = write(dir.path(), "census.csv", TINY_CENSUS);
    let schema = write(dir.path(), "schema.toml", TINY_SCHEMA);
    (dir, census.to_str().unwrap().into(), schema.to_str().unwrap().into())
}

#[test]
fn full_census_precision_is_zero() {
    let (_d, census, schema) = tiny_dir();
    let o = qcaudit(&[
        "precision", "--census", &census, "--schema", &schema, "--sample-size", "7", "--replicates", "1000", "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    for row in v["precision"][0]["rows"].as_array().unwrap() {
        assert_eq!(row["epsilon"], 0.0);
        assert_eq!(row["meets_target"], true);
    }
}

#[test]
fn missing_target_is_a_finding() {
    let (_d, census, schema) = tiny_dir();
    let o = qcaudit(&["precision", "--census", &census, "--schema", &schema, "--sample-size", "3", "--replicates", "1000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("| X | Candidate X |"));
}

#[test]
fn missing_census_names_the_path() {
    let o = qcaudit(&["precision", "--census", "/nonexistent/census.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/census.csv"));
}

#[test]
fn config_errors_exit_two() {
    let (_d, census, schema) = tiny_dir();
    let base = ["--census", census.as_str(), "--schema", schema.as_str(), "--sample-size", "3"];
    let run = |extra: &[&str]| {
        let mut a = vec!["coverage"];
        a.extend_from_slice(&base);
        a.extend_from_slice(extra);
        qcaudit(&a)
    };
    let o = run(&["--confidence", "1.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("degenerate"));
    assert_eq!(run(&["--replicates", "10"]).status.code(), Some(2));
    assert_eq!(run(&["--sample-size", "1"]).status.code(), Some(2));
    assert_eq!(run(&["--format", "xml"]).status.code(), Some(2));
    let o = qcaudit(&["winner-gap", "--census", &census, "--leader", "X", "--runner-up", "X", "--sample-size", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let (d, census, schema) = tiny_dir();
    let cfg = write(d.path(), "audit.toml", "seed = 77\nreplicates = 2000\nsample_sizes = [3]\n");
    let o = qcaudit(&[
        "precision", "--config", cfg.to_str().unwrap(), "--census", &census, "--schema", &schema, "--seed", "5",
        "--replicates", "1000", "--format", "json",
    ]);
    let v = json(&o);
    assert_eq!(v["run"]["seed"], 77);
    assert_eq!(v["run"]["replicates"], 2000);
    assert_eq!(v["precision"][0]["sample_size"], 3);
}

#[test]
fn bias_without_capture_errors() {
    let (d, census, schema) = tiny_dir();
    let received = write(d.path(), "received.csv", "casilla_id,stratum_id,X,Y\na1,A,10,0\na3,A,6,4\nb2,B,3,7\n");
    let hw = write(d.path(), "hw.toml", "X = 5.0\nY = 5.0\nparticipation = 1.0\n");
    let o = qcaudit(&[
        "bias", "--census", &census, "--schema", &schema, "--received", received.to_str().unwrap(), "--half-widths",
        hw.to_str().unwrap(), "--replicates", "1000", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    for t in v["bias"]["sign_tests"].as_array().unwrap() {
        assert_eq!(t["p_value"], 1.0);
    }
    for r in v["bias"]["corrected"]["rows"].as_array().unwrap() {
        assert_eq!(r["as_received"], r["corrected"]);
    }
}

#[test]
fn bias_needs_received() {
    let (_d, census, schema) = tiny_dir();
    let o = qcaudit(&["bias", "--census", &census, "--schema", &schema]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_overvotes() {
    let d = tempfile::tempdir().unwrap();
    let census = write(d.path(), "census.csv", "casilla_id,stratum_id,lista_nominal,X,Y\na1,A,750,400,400\nb1,B,100,5,5\n");
    let o = qcaudit(&["validate", "--census", census.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("800 votes exceed lista nominal 750"));
    let (_d, clean, schema) = tiny_dir();
    assert_eq!(qcaudit(&["validate", "--census", &clean, "--schema", &schema]).status.code(), Some(0));
}

#[test]
fn bad_rows_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let census = write(d.path(), "census.csv", "casilla_id,stratum_id,lista_nominal,X,Y\na1,A,750,4,4\na1,A,100,5,5\n");
    let o = qcaudit(&["validate", "--census", census.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a1"));
}

#[test]
fn csv_output_writes_one_file_per_table() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--strata", "4", "--casillas-per-stratum", "30", "--received-size", "40", "--capture-error-rate", "0.1"]);
    let out = d.path().join("out");
    let p = |n: &str| d.path().join(n).to_str().unwrap().to_string();
    let o = qcaudit(&[
        "report", "--census", &p("census.csv"), "--schema", &p("schema.toml"), "--received", &p("received.csv"),
        "--sample-size", "20,40", "--replicates", "1000", "--format", "csv", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    for f in [
        "precision.csv",
        "coverage.csv",
        "coverage_histogram.csv",
        "bias.csv",
        "sign_test.csv",
        "winner_gap.csv",
        "winner_gap_histogram.csv",
        "run_timing.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(out.join("winner_gap_histogram.csv")).unwrap();
    let total: i64 = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<i64>().unwrap()).sum();
    assert_eq!(total, 1000);
}

#[test]
fn degenerate_gap_is_marked() {
    let d = tempfile::tempdir().unwrap();
    let census = write(
        d.path(),
        "census.csv",
        "casilla_id,stratum_id,lista_nominal,L,R\nc1,A,100,50,0\nc2,A,100,40,0\nc3,B,100,30,0\nc4,B,100,20,0\n",
    );
    let o = qcaudit(&[
        "winner-gap", "--census", census.to_str().unwrap(), "--sample-size", "2", "--replicates", "1000", "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["winner_gap"]["degenerate"], true);
    assert_eq!(v["winner_gap"]["empirical_neg_frac"]["value"], 0.0);
}

#[test]
fn dependence_grows_as_contenders_shrink() {
    // Simulated P(X=0) sits further from the binomial value with 2
    // contenders (whose errors are mirror images) than with 9.
    let gap = |profile: &str| {
        let d = tempfile::tempdir().unwrap();
        synth(d.path(), &["--strata", "10", "--casillas-per-stratum", "60", "--profile", profile, "--seed", "4"]);
        let p = |n: &str| d.path().join(n).to_str().unwrap().to_string();
        let o = qcaudit(&[
            "coverage", "--census", &p("census.csv"), "--sample-size", "120", "--replicates", "4000", "--format",
            "json", "--exclude-participation",
        ]);
        let v = json(&o);
        let cov = &v["coverage"];
        (cov["simulated"]["p_none"]["value"].as_f64().unwrap() - cov["binomial"]["p_none"].as_f64().unwrap()).abs()
    };
    let two = gap("0.55,0.45");
    let nine = gap("0.3,0.2,0.15,0.1,0.08,0.07,0.05,0.03,0.02");
    assert!(two > nine, "J=2 gap {two}, J=9 gap {nine}");
}

#[test]
fn tiny_report_is_fast_and_reproducible() {
    let (d, census, schema) = tiny_dir();
    let received = write(d.path(), "received.csv", "casilla_id,stratum_id,X,Y\na1,A,11,0\na3,A,6,4\nb2,B,3,7\n");
    let args = |out: &str| {
        vec![
            "report".to_string(),
            "--census".into(),
            census.clone(),
            "--schema".into(),
            schema.clone(),
            "--received".into(),
            received.to_str().unwrap().into(),
            "--sample-size".into(),
            "3".into(),
            "--replicates".into(),
            "20000".into(),
            "--format".into(),
            "json".into(),
            "--out-dir".into(),
            out.into(),
        ]
    };
    let start = std::time::Instant::now();
    let a = d.path().join("a");
    let b = d.path().join("b");
    for out in [&a, &b] {
        let argv = args(out.to_str().unwrap());
        let o = qcaudit(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    }
    assert!(start.elapsed().as_secs_f64() < 20.0);
    let ra = std::fs::read(a.join("report.json")).unwrap();
    let rb = std::fs::read(b.join("report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn synth_writes_inputs() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &["--strata", "3", "--casillas-per-stratum", "5", "--profile", "0.6,0.3,0.1", "--received-size", "6"]);
    let census = std::fs::read_to_string(d.path().join("census.csv")).unwrap();
    assert!(census.starts_with("casilla_id,stratum_id,lista_nominal,C1,C2,C3\n"));
    assert_eq!(census.lines().count(), 16);
    assert_eq!(std::fs::read_to_string(d.path().join("received.csv")).unwrap().lines().count(), 7);
    assert!(d.path().join("schema.toml").exists());
    assert_eq!(qcaudit(&["synth"]).status.code(), Some(2));
}
