use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn tablelift(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tablelift"))
        .args(args)
        .env("TABLELIFT_DATA_DIR", data_dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

/// Writes a small lake under `root/lake` and its index to `root/lake.idx`.
fn small_lake(root: &Path) {
    let spec = root.join("spec.json");
    std::fs::write(
        &spec,
        r#"{ "table_count": 20, "query_rows": 60, "rows_per_table": 30, "seed": 3 }"#,
    )
    .unwrap();
    let lake = root.join("lake");
    let out = ok(&tablelift(
        root,
        &[
            "gen-lake",
            "--spec",
            spec.to_str().unwrap(),
            "-o",
            lake.to_str().unwrap(),
        ],
    ));
    assert!(out.contains("20 tables"), "{out}");
    let idx = root.join("lake.idx");
    ok(&tablelift(
        root,
        &[
            "index",
            "build",
            lake.join("corpus").to_str().unwrap(),
            "-o",
            idx.to_str().unwrap(),
        ],
    ));
}

#[test]
fn gen_lake_index_run_compare() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_lake(root);
    let lake = root.join("lake");
    assert!(lake.join("query.csv").exists());
    let meta: Value =
        serde_json::from_slice(&std::fs::read(lake.join("lake.json")).unwrap()).unwrap();
    assert_eq!(meta["key"], "game");
    assert_eq!(meta["signal_table_ids"].as_array().unwrap().len(), 1);

    let idx = root.join("lake.idx");
    let loaded: Value = serde_json::from_str(&ok(&tablelift(
        root,
        &["index", "load", idx.to_str().unwrap()],
    )))
    .unwrap();
    assert_eq!(loaded["tables"], 20);
    assert!(loaded["indexed_cells"].as_u64().unwrap() >= 19 * 30);

    let query = lake.join("query.csv");
    let out_dir = root.join("out");
    let stdout = ok(&tablelift(
        root,
        &[
            "run",
            "--index",
            idx.to_str().unwrap(),
            "--query",
            query.to_str().unwrap(),
            "--key",
            "game",
            "--task",
            "sales",
            "--mode",
            "join-select-align",
            "--k",
            "10",
            "--m",
            "3",
            "--tau",
            "0.6",
            "--seed",
            "1",
            "--entity-name",
            "game",
            "--out",
            out_dir.to_str().unwrap(),
        ],
    ));
    assert!(stdout.starts_with("Join-select-align: MSE"), "{stdout}");
    assert!(
        stdout.contains(meta["signal_table_ids"][0].as_str().unwrap()),
        "{stdout}"
    );
    let csv = std::fs::read_to_string(out_dir.join("enriched.csv")).unwrap();
    assert_eq!(csv.lines().count(), 61);
    let result: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["config"]["m"], 3);
    assert!(result["improvement_percent"].as_f64().unwrap() > 0.0);
    let saved: Vec<_> = std::fs::read_dir(root.join("runs")).unwrap().collect();
    assert_eq!(saved.len(), 1);

    let report_csv = root.join("report.csv");
    let text = ok(&tablelift(
        root,
        &[
            "compare",
            "--corpus",
            lake.join("corpus").to_str().unwrap(),
            "--query",
            query.to_str().unwrap(),
            "--key",
            "game",
            "--task",
            "sales",
            "--modes",
            "no_enrich,join,join_select_align",
            "--k",
            "10",
            "--m",
            "3",
            "--entity-name",
            "game",
            "--csv",
            report_csv.to_str().unwrap(),
        ],
    ));
    assert!(text.contains("Method"), "{text}");
    assert!(
        text.contains("No-enrich") && text.contains("Join-select-align"),
        "{text}"
    );
    assert_eq!(
        std::fs::read_to_string(&report_csv)
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_lake(root);
    let config = root.join("config.json");
    std::fs::write(
        &config,
        r#"{ "k": 5, "m": 2, "aggregation": { "kind": "hard" } }"#,
    )
    .unwrap();
    let out_dir = root.join("out");
    ok(&tablelift(
        root,
        &[
            "run",
            "--index",
            root.join("lake.idx").to_str().unwrap(),
            "--query",
            root.join("lake/query.csv").to_str().unwrap(),
            "--key",
            "game",
            "--task",
            "sales",
            "--config",
            config.to_str().unwrap(),
            "--m",
            "4",
            "--no-save",
            "--out",
            out_dir.to_str().unwrap(),
        ],
    ));
    let result: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["config"]["k"], 5);
    assert_eq!(result["config"]["m"], 4);
    assert_eq!(result["config"]["aggregation"]["kind"], "hard");
    assert!(!root.join("runs").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_lake(root);
    let idx = root.join("lake.idx");
    let query = root.join("lake/query.csv");
    let run = |extra: &[&str]| {
        let mut args = vec![
            "run",
            "--index",
            idx.to_str().unwrap(),
            "--query",
            query.to_str().unwrap(),
            "--no-save",
        ];
        args.extend_from_slice(extra);
        tablelift(root, &args)
    };
    let out = run(&["--key", "title", "--task", "sales"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown column: title"));

    let out = run(&["--key", "game", "--task", "sales", "--k", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be at least 1"));

    let out = run(&["--key", "game", "--task", "sales", "--mode", "sideways"]);
    assert!(!out.status.success());

    let garbage = root.join("garbage.idx");
    std::fs::write(&garbage, b"definitely not an index").unwrap();
    let out = tablelift(root, &["index", "load", garbage.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not an index file"));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(
        stream,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut body = String::new();
    stream.read_to_string(&mut body).ok()?;
    Some(body)
}

#[test]
fn serve_answers_health_checks() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_lake(root);
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_tablelift"))
        .args([
            "serve",
            "--index",
            root.join("lake.idx").to_str().unwrap(),
            "--port",
            &port.to_string(),
        ])
        .env("TABLELIFT_DATA_DIR", root)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let reply = loop {
        if let Some(reply) = http_get(port, "/api/health") {
            break reply;
        }
        assert!(
            start.elapsed() < Duration::from_secs(30),
            "service did not come up"
        );
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains(r#""tables":20"#), "{reply}");
}
