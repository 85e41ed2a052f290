//! End-to-end runs of the `hubnet` binary: every subcommand, the exit-code
//! contract, config layering, and byte-identical reproducibility.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hubnet"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn hubnet");
    assert!(
        out.status.success(),
        "hubnet {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path -> file bytes for a whole tree.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                map.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    map
}

#[test]
fn simulate_rank_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "simulate", "--n", "12", "--r", "3", "--t", "200", "--seed", "11",
        "--sigma-e", "0.2", "--loading", "planted", "--out", path_str(&sim),
    ]);
    assert!(sim.join("series.csv").exists());
    assert!(sim.join("truth.json").exists());
    assert!(sim.join("run_config.json").exists());

    let series = sim.join("series.csv");
    let out = run_ok(&["rank", "--input", path_str(&series), "--h0", "1"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("ratio_rank,"), "stdout: {stdout}");
    assert!(stdout.contains("scree_rank,"));
    assert!(stdout.contains("index,eigenvalue"));

    let est = dir.path().join("est");
    run_ok(&[
        "estimate", "--input", path_str(&series), "--r", "3",
        "--truth", path_str(&sim.join("truth.json")),
        "--out", path_str(&est),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(est.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["left"]["r"], 3);
    let ve = report["variance_explained"].as_f64().unwrap();
    assert!(ve > 0.5, "variance explained {ve}");
    assert!(report["subspace_distance_left"].as_f64().unwrap() < 0.2);
    assert!(est.join("loadings_sumone.csv").exists());
    assert!(est.join("factors.csv").exists());
    assert!(est.join("eigenvalues.csv").exists());
}

#[test]
fn rolling_emits_thirty_labeled_windows() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "simulate", "--n", "10", "--r", "3", "--t", "408", "--seed", "3",
        "--start", "1982-01", "--loading", "planted", "--sigma-e", "0.2",
        "--out", path_str(&sim),
    ]);
    let roll = dir.path().join("roll");
    run_ok(&[
        "rolling", "--input", path_str(&sim.join("series.csv")),
        "--window", "60", "--step", "12", "--model", "sym", "--r", "3",
        "--anchors", "E01,E04,E07", "--out", path_str(&roll),
    ]);
    let mut window_dirs: Vec<String> = std::fs::read_dir(roll.join("windows"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    window_dirs.sort();
    let expect: Vec<String> = (1984..=2013).map(|y| y.to_string()).collect();
    assert_eq!(window_dirs, expect);
    for label in &expect {
        let wdir = roll.join("windows").join(label);
        assert!(wdir.join("loadings_sumone.csv").exists());
        assert!(wdir.join("factors.csv").exists());
        assert!(wdir.join("mean_factor.csv").exists());
        assert!(wdir.join("report.json").exists());
    }
    let table = std::fs::read_to_string(roll.join("rank_table.csv")).unwrap();
    assert!(table.starts_with("quantity,1984,"));
    assert_eq!(table.lines().count(), 4);
    assert!(roll.join("heatmap.csv").exists());
    assert!(roll.join("scree.csv").exists());
    assert!(roll.join("dendrogram.csv").exists());
    assert!(roll.join("network_1984_nodes.csv").exists());

    // Cluster from the artifacts, paper protocol k = 4.
    let clus = dir.path().join("clus");
    run_ok(&[
        "cluster", "--rolling-dir", path_str(&roll), "--k", "4",
        "--out", path_str(&clus),
    ]);
    let clusters = std::fs::read_to_string(clus.join("clusters.csv")).unwrap();
    assert_eq!(clusters.lines().count(), 11); // header + 10 entities
    let distinct: std::collections::BTreeSet<&str> = clusters
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(distinct.len(), 4);

    // Rebuild one window's network tables from artifacts; they must match
    // the files the rolling run wrote.
    let net = dir.path().join("net");
    run_ok(&[
        "export-network", "--rolling-dir", path_str(&roll), "--window", "1990",
        "--out", path_str(&net),
    ]);
    for name in [
        "network_1990_nodes.csv",
        "network_1990_edges.csv",
        "network_1990_country_edges.csv",
    ] {
        let rebuilt = std::fs::read(net.join(name)).unwrap();
        let original = std::fs::read(roll.join(name)).unwrap();
        assert_eq!(rebuilt, original, "{name} differs from the rolling output");
    }
}

#[test]
fn two_sided_rolling_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    // Planted (non-negative) loadings: sum-to-one normalization needs
    // mostly-positive columns, as flow data provides.
    run_ok(&[
        "simulate", "--n", "8", "--r", "3", "--loading", "planted",
        "--t", "84", "--seed", "5", "--sigma-e", "0.3", "--out", path_str(&sim),
    ]);
    let roll = dir.path().join("roll");
    run_ok(&[
        "rolling", "--input", path_str(&sim.join("series.csv")),
        "--model", "two", "--r", "3", "--r2", "2",
        "--out", path_str(&roll),
    ]);
    assert!(roll.join("heatmap_export.csv").exists());
    assert!(roll.join("heatmap_import.csv").exists());
    assert!(roll.join("dendrogram_joint.csv").exists());
    assert!(roll.join("dendrogram_export.csv").exists());
    assert!(roll.join("dendrogram_import.csv").exists());
    let wdir = roll.join("windows").join("1984");
    assert!(wdir.join("loadings_sumone_export.csv").exists());
    assert!(wdir.join("loadings_sumone_import.csv").exists());
    let table = std::fs::read_to_string(roll.join("rank_table.csv")).unwrap();
    // Two-sided cells are quoted "(left, right)" pairs.
    assert!(table.contains("\"("), "table: {table}");

    let clus = dir.path().join("clus");
    run_ok(&[
        "cluster", "--rolling-dir", path_str(&roll), "--side", "import",
        "--k", "2", "--out", path_str(&clus),
    ]);
    assert!(clus.join("clusters.csv").exists());
}

#[test]
fn mirror_ingest_and_smoothing() {
    let dir = tempfile::tempdir().unwrap();
    let exports = dir.path().join("exports.csv");
    let imports = dir.path().join("imports.csv");
    // Exporter reports (I -> J at 4.8) disagree with the importer report
    // (5.0); import side wins.
    std::fs::write(
        &exports,
        "exporter,importer,year,month,value\n\
         I,J,2000,1,4.8\nJ,I,2000,1,9.0\nI,J,2000,2,4.9\nJ,I,2000,2,9.1\n",
    )
    .unwrap();
    std::fs::write(
        &imports,
        "exporter,importer,year,month,value\n\
         I,J,2000,1,5.0\nJ,I,2000,1,9.0\nI,J,2000,2,5.1\nJ,I,2000,2,9.1\n",
    )
    .unwrap();
    let out = dir.path().join("panel");
    run_ok(&[
        "ingest", "--exports", path_str(&exports), "--imports", path_str(&imports),
        "--out", path_str(&out),
    ]);
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.contains("I,J,2000,1,5"), "series: {series}");

    // Smoothing drops endpoints: 3 months in, 1 out.
    let tri = dir.path().join("tri.csv");
    std::fs::write(
        &tri,
        "exporter,importer,year,month,value\n\
         A,B,2000,1,2\nB,A,2000,1,1\n\
         A,B,2000,2,4\nB,A,2000,2,1\n\
         A,B,2000,3,9\nB,A,2000,3,1\n",
    )
    .unwrap();
    let smooth = dir.path().join("smooth");
    run_ok(&[
        "ingest", "--input", path_str(&tri), "--smooth", "--out", path_str(&smooth),
    ]);
    let series = std::fs::read_to_string(smooth.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 3); // header + 2 cells x 1 month
    assert!(series.contains("A,B,2000,2,5"), "series: {series}");
}

#[test]
fn exit_codes_and_machine_readable_errors() {
    // Unknown flag: usage error, exit 2.
    let out = bin().args(["rank", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Contract violation: exit 1 with one error line carrying a code.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "exporter,importer,year,month,value\nA,B,2000,1,1.0\nA,B,2000,1,2.0\n",
    )
    .unwrap();
    let out = bin()
        .args(["rank", "--input", path_str(&bad)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let error_lines: Vec<&str> = stderr.lines().filter(|l| l.starts_with("error ")).collect();
    assert_eq!(error_lines.len(), 1, "stderr: {stderr}");
    assert!(
        error_lines[0].starts_with("error code=DUPLICATE_RECORD message="),
        "line: {}",
        error_lines[0]
    );

    // Missing cell under strict ingestion names the cell.
    let sparse = dir.path().join("sparse.csv");
    std::fs::write(
        &sparse,
        "exporter,importer,year,month,value\nA,B,2000,1,1.0\nB,A,2000,1,1.0\nA,B,2000,2,1.0\n",
    )
    .unwrap();
    let out = bin()
        .args(["rank", "--input", path_str(&sparse)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("code=MISSING_CELL"), "stderr: {stderr}");

    // Existing output directory is refused before any work happens.
    let exists = dir.path().join("already");
    std::fs::create_dir(&exists).unwrap();
    let out = bin()
        .args([
            "simulate", "--n", "4", "--t", "10", "--out", path_str(&exists),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_env_layering() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "simulate", "--n", "6", "--r", "2", "--t", "60", "--seed", "2",
        "--sigma-e", "0.2", "--out", path_str(&sim),
    ]);
    let series = sim.join("series.csv");
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "h0 = 2\nscree-threshold = 0.7\n").unwrap();

    // Config file applies.
    let est1 = dir.path().join("est1");
    run_ok(&[
        "estimate", "--config", path_str(&conf), "--input", path_str(&series),
        "--r", "2", "--out", path_str(&est1),
    ]);
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(est1.join("run_config.json")).unwrap())
            .unwrap();
    assert_eq!(echoed["h0"], 2);
    assert_eq!(echoed["scree_threshold"], 0.7);

    // Environment beats the file; the flag beats both.
    let est2 = dir.path().join("est2");
    let out = bin()
        .args([
            "estimate", "--config", path_str(&conf), "--input", path_str(&series),
            "--r", "2", "--h0", "3", "--out", path_str(&est2),
        ])
        .env("HUBNET_SCREE_THRESHOLD", "0.9")
        .output()
        .unwrap();
    assert!(out.status.success());
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(est2.join("run_config.json")).unwrap())
            .unwrap();
    assert_eq!(echoed["h0"], 3);
    assert_eq!(echoed["scree_threshold"], 0.9);
}

#[test]
fn determinism_makes_runs_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "simulate", "--n", "8", "--r", "2", "--t", "96", "--seed", "9",
        "--sigma-e", "0.3", "--loading", "planted", "--out", path_str(&sim),
    ]);
    let series = sim.join("series.csv");
    let args = |out: &Path| {
        vec![
            "rolling".to_string(),
            "--input".into(), path_str(&series).to_string(),
            "--window".into(), "48".into(),
            "--step".into(), "12".into(),
            "--r".into(), "2".into(),
            "--determinism".into(),
            "--out".into(), out.display().to_string(),
        ]
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = bin().args(args(out)).status().unwrap();
        assert!(status.success());
    }
    let snap_a = snapshot(&out_a);
    let snap_b = snapshot(&out_b);
    assert_eq!(
        snap_a.keys().collect::<Vec<_>>(),
        snap_b.keys().collect::<Vec<_>>()
    );
    for (rel, bytes) in &snap_a {
        if rel == Path::new("run_config.json") {
            // The echo records the output path itself; everything else in it
            // must match.
            let strip = |raw: &[u8]| -> serde_json::Value {
                let mut v: serde_json::Value = serde_json::from_slice(raw).unwrap();
                v.as_object_mut().unwrap().remove("out");
                v
            };
            assert_eq!(strip(bytes), strip(&snap_b[rel]));
            continue;
        }
        assert_eq!(bytes, &snap_b[rel], "artifact {} differs", rel.display());
    }

    // Simulation itself is seed-deterministic too.
    let sim2 = dir.path().join("sim2");
    run_ok(&[
        "simulate", "--n", "8", "--r", "2", "--t", "96", "--seed", "9",
        "--sigma-e", "0.3", "--loading", "planted", "--out", path_str(&sim2),
    ]);
    assert_eq!(
        std::fs::read(sim.join("series.csv")).unwrap(),
        std::fs::read(sim2.join("series.csv")).unwrap()
    );
}

#[test]
fn matrix_emission_writes_one_file_per_month() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_ok(&[
        "simulate", "--n", "4", "--r", "2", "--t", "6", "--seed", "1",
        "--out", path_str(&sim),
    ]);
    let out = dir.path().join("mat");
    run_ok(&[
        "ingest", "--input", path_str(&sim.join("series.csv")),
        "--emit", "matrices", "--out", path_str(&out),
    ]);
    let files: Vec<String> = std::fs::read_dir(out.join("matrices"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files.len(), 6);
    assert!(files.iter().any(|f| f == "X_1982-01.csv"));
    let text = std::fs::read_to_string(out.join("matrices/X_1982-01.csv")).unwrap();
    // Undefined diagonal prints as NA.
    assert!(text.lines().nth(1).unwrap().starts_with("E01,NA,"));
}
