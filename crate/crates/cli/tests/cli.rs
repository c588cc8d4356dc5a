use std::process::{Command, Output};

fn setassoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setassoc"))
        .args(args)
        .output()
        .expect("spawn setassoc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gen_zipf_writes_plain_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.txt");
    let o = setassoc(&["gen-zipf", "--zipf-n", "100", "--zipf-len", "500", "--seed", "3", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let keys: Vec<u64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(keys.len(), 500);
    assert!(keys.iter().all(|&k| (1..=100).contains(&k)));
}

#[test]
fn run_on_a_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    std::fs::write(&path, "5\n5\n9\n5\n").unwrap();
    let o = setassoc(&["run", "--policy", "lru", "--km", "2", "--dm", "1", "--trace", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "restricted");
    assert_eq!(&row[9..12], &["4", "2", "0.5000"]);
}

#[test]
fn run_json_has_the_report_fields() {
    let o = setassoc(&["run", "--policy", "fifo-lru", "--kw", "2", "--dw", "2", "--km", "4", "--dm", "4", "--zipf-n", "1000", "--zipf-len", "2000", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for field in ["\"engine\"", "\"policy\": \"FIFOxLRU\"", "\"hit_ratio\"", "\"generator\"", "\"max_ops\""] {
        assert!(out.contains(field), "missing {field} in {out}");
    }
}

#[test]
fn sweep_over_k() {
    let o = setassoc(&["sweep", "--ks", "8,16,32,64", "--km", "8", "--dm", "64", "--zipf-n", "1000", "--zipf-len", "3000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let ds: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(ds, vec!["64", "32", "16", "8"]);
}

#[test]
fn check_reports_clean_lru() {
    let o = setassoc(&["check", "--policy", "lru", "--k", "2", "--d", "1", "--alphabet", "3", "--max-len", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("divergent=0"));
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let cases: &[&[&str]] = &[
        &["run", "--trace", "/definitely/not/here"],
        &["run", "--policy", "fifo-lru"],
        &["run", "--policy", "mru"],
        &["run", "--km", "0"],
        &["run", "--full"],
        &["sweep", "--ks", "3", "--km", "8", "--dm", "64"],
        &["run", "--km", "128", "--dm", "1", "--zipf-len", "10"],
    ];
    for args in cases {
        let o = setassoc(args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"), "{args:?}");
    }
}
