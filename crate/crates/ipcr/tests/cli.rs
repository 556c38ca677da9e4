use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_ipcr");

fn ipcr(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_worked_db(dir: &Path) -> String {
    let path = dir.join("w.txt");
    std::fs::write(&path, "# worked instance\n3 3 3\n2 2 0\n1 0 0\n1 2 3\n").unwrap();
    path.to_str().unwrap().to_owned()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts `ipcr serve` on an ephemeral port and returns its address.
fn serve(config: &Path) -> (Server, String) {
    let mut child = Command::new(BIN)
        .args(["serve", "--config", config.to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.split(" listening on ").nth(1).unwrap().split_whitespace().next().unwrap().to_owned();
    (Server(child), addr)
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = ipcr(&["gen", "--d", "3", "--R", "3", "--M", "12", "--seed", "9", "--out", dir.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["database.txt", "key.hex", "server-1.toml", "server-2.toml", "server-3.toml", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let db = std::fs::read_to_string(a.path().join("database.txt")).unwrap();
    assert!(db.lines().any(|l| l.trim() == "3 3 12"));
}

#[test]
fn query_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let db = write_worked_db(dir.path());
    let ok = ipcr(&["query", "--sim", &db, "--x", "1,2,0", "--immutable", "1", "--seed", "3"]);
    assert_eq!(ok.status.code(), Some(0));
    let out = stdout(&ok);
    assert!(out.contains("counterfactual: row 2"), "{out}");
    assert!(out.contains("distance: 4"), "{out}");
    assert!(out.contains("total 54"), "{out}");

    let none = ipcr(&["query", "--sim", &db, "--x", "1,2,0", "--immutable", "1,2,3", "--seed", "3"]);
    assert_eq!(none.status.code(), Some(3));

    let bad = ipcr(&["query", "--sim", &db, "--x", "1,2,9"]);
    assert_eq!(bad.status.code(), Some(2));
    let unreachable = ipcr(&["query", "--endpoint", "127.0.0.1:1,127.0.0.1:2,127.0.0.1:3", "--x", "1,2,0", "--timeout-secs", "2"]);
    assert_eq!(unreachable.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unreachable.stderr).contains("127.0.0.1:1"));
}

#[test]
fn single_phase_verbose_reports_hints() {
    let dir = tempfile::tempdir().unwrap();
    let db = write_worked_db(dir.path());
    let o = ipcr(&["query", "--scheme", "single-phase", "--sim", &db, "--x", "1,2,0", "--immutable", "1", "--verbose", "--seed", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("revealed: [28, 4, 9]"), "{out}");
    assert!(out.contains("immutable mismatches: [>=1, -, -]"), "{out}");
}

#[test]
fn leakage_csv_contains_single_phase_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("leak.csv");
    let o = ipcr(&["leakage", "--R", "3", "--d", "3", "--M", "3", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("scheme,|I|,policy,sampling_model,base,leakage\n"));
    let single: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("single-phase,") && l.contains(",iid-excluding-x,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let want = [1.1432, 1.4492, 1.4492, 1.1432];
    assert_eq!(single.len(), 4);
    for (g, w) in single.iter().zip(want) {
        assert!((g - w).abs() <= 0.005, "{single:?}");
    }
    assert!(dir.path().join("leak.manifest.json").exists());
}

#[test]
fn live_servers_match_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let gen = ipcr(&["gen", "--d", "3", "--R", "3", "--M", "10", "--seed", "5", "--out", out]);
    assert!(gen.status.success());
    let servers: Vec<(Server, String)> = (1..=3).map(|n| serve(&dir.path().join(format!("server-{n}.toml")))).collect();
    let endpoints = servers.iter().map(|s| s.1.as_str()).collect::<Vec<_>>().join(",");
    let db = dir.path().join("database.txt");
    let key = dir.path().join("key.hex");
    let common = ["--x", "1,2,0", "--immutable", "2", "--seed", "11", "--verbose", "--always-run-phase2"];

    let mut live_args = vec!["query", "--endpoint", &endpoints];
    live_args.extend(common);
    let live = ipcr(&live_args);
    let mut sim_args = vec!["query", "--sim", db.to_str().unwrap(), "--key-file", key.to_str().unwrap()];
    sim_args.extend(common);
    let sim = ipcr(&sim_args);

    assert_eq!(live.status.code(), sim.status.code());
    assert_eq!(stdout(&live), stdout(&sim));
    assert!(stdout(&live).contains("revealed:"));
}

#[test]
fn selftest_passes() {
    let o = ipcr(&["selftest", "--cases", "20", "--seed", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("all protocol runs agree with the oracle"));
}
