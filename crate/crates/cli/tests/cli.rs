use std::process::{Command, Output};

fn ricci(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ricci"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RICCI_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn analyze_torus_passes_every_check() {
    let out = ricci(&["analyze", "--family", "torus", "--L", "5", "--d", "1", "--seed", "42", "--steps", "16"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"passed\": true"));
    assert!(!text.contains("\"passed\": false"));
    assert!(text.contains("\"check_id\": \"bonnet_myers\""));
}

#[test]
fn chain_file_analysis_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(&dir, "two.json", r#"{"states": ["a", "b"], "rates": [[0, 1], [1, 0]]}"#);
    let out = ricci(&["analyze", "--chain", &good, "--checks", "liyau,buser,mixing"], None);
    assert_eq!(out.status.code(), Some(0));

    let bad = write(&dir, "bad.json", r#"{"states": ["a", "b"], "rates": [[0, 1], [2, 0]], "pi": [0.5, 0.5]}"#);
    let out = ricci(&["analyze", "--chain", &bad], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detailed balance"));

    let broken = write(&dir, "broken.json", "{\n  \"states\": [\"a\"\n");
    let out = ricci(&["analyze", "--chain", &broken], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let out = ricci(&["analyze", "--family", "torus", "--checks", "nonsense"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_emits_one_row_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = ricci(
        &["sweep", "--family", "torus", "--L", "3..10", "--starts", "4", "--emit", "csv", "--out", path.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(path).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let scaled = r[col("lambda1")] * r[col("D_upper")].powi(2);
        assert!(scaled >= (-1.0f64).exp());
    }
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let args = ["analyze", "--family", "zero_range", "--K", "2", "--L", "3", "--steps", "8", "--samples", "6"];
    let one = ricci(&args, Some("1"));
    let many = ricci(&args, Some("4"));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, many.stdout);
}
