use std::fs;
use std::io::Read;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;

fn qefuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qefuse"))
        .args(args)
        .env_remove("QEFUSE_SCORER_URL")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const THREE: &str = r#"{"id":"a","source":"Fire at plant extinguished","candidates":["Fire at plant cleared","Fire in plant extinguished","Fire in plant cleared"],"reference":"Fire at plant extinguished"}
{"id":"b","source":"the cat sat on the mat","candidates":["the cat sat on a mat","a cat sat on the mat"],"reference":"the cat sat on the mat"}
{"id":"c","source":"one two three","candidates":["one two three"],"reference":"one two three"}
"#;

#[test]
fn fuse_writes_one_line_per_record() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", THREE);
    let out = dir.path().join("out.jsonl");
    let res = qefuse(&["fuse", "-i", s(&input), "-o", s(&out), "--scorer", "oracle"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let recs = lines(&out);
    let ids: Vec<&str> = recs.iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(recs[0]["output"], "Fire at plant extinguished");
    assert_eq!(recs[0]["method"], "fuse");
    assert!(recs[0]["stats"]["groups"].as_u64().unwrap() > 0);
}

#[test]
fn malformed_line_names_line_number() {
    let dir = TempDir::new().unwrap();
    let first = THREE.lines().next().unwrap();
    let input = write(&dir, "in.jsonl", &format!("{first}\n{{\"id\": \"x\", oops}}\n"));
    for cmd in ["fuse", "rerank"] {
        let res = qefuse(&[cmd, "-i", s(&input)]);
        assert_eq!(res.status.code(), Some(1));
        assert!(stderr(&res).contains("in.jsonl:2:"), "{}", stderr(&res));
    }
}

#[test]
fn invalid_records_exit_1() {
    let dir = TempDir::new().unwrap();
    let empty = write(
        &dir,
        "empty.jsonl",
        "{\"id\":\"e\",\"source\":\"s\",\"candidates\":[]}\n",
    );
    let res = qefuse(&["rerank", "-i", s(&empty)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("no candidates"));

    let first = THREE.lines().next().unwrap();
    let dup = write(&dir, "dup.jsonl", &format!("{first}\n{first}\n"));
    let res = qefuse(&["fuse", "-i", s(&dup)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(
        stderr(&res).contains("dup.jsonl:2: duplicate id `a`"),
        "{}",
        stderr(&res)
    );

    let res = qefuse(&["fuse", "-i", s(&dir.path().join("missing.jsonl"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn oracle_without_reference_fails_before_scoring() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{}\n{{\"id\":\"n\",\"source\":\"s\",\"candidates\":[\"x\"]}}\n",
        THREE.lines().next().unwrap()
    );
    let input = write(&dir, "in.jsonl", &body);
    let out = dir.path().join("out.jsonl");
    let res = qefuse(&["fuse", "-i", s(&input), "-o", s(&out), "--scorer", "oracle"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("in.jsonl:2: record `n` has no reference"));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", THREE);
    assert_eq!(qefuse(&["mbr", "-i", s(&input)]).status.code(), Some(1));
    assert_eq!(
        qefuse(&["fuse", "-i", s(&input), "--scorer", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(
        qefuse(&["fuse", "-i", s(&input), "--scorer", "http"]).status.code(),
        Some(1)
    );
    assert_eq!(qefuse(&["--help"]).status.code(), Some(0));
}

#[test]
fn mbr_on_identical_candidates_returns_first() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "in.jsonl",
        "{\"id\":\"1\",\"source\":\"s\",\"candidates\":[\"a b c\",\"a b c\",\"a b c\"]}\n\
         {\"id\":\"2\",\"source\":\"t\",\"candidates\":[\"x y\",\"x y\"]}\n",
    );
    for utility in ["bleu", "chrf"] {
        let out = dir.path().join(format!("{utility}.jsonl"));
        let res = qefuse(&["mbr", "-i", s(&input), "-o", s(&out), "--utility", utility]);
        assert!(res.status.success(), "{}", stderr(&res));
        for r in lines(&out) {
            assert_eq!(r["base_index"], 0);
            assert_eq!(r["score"], 1.0);
        }
    }
}

#[test]
fn rerank_single_candidate_pools() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", THREE);
    let out = dir.path().join("out.jsonl");
    let res = qefuse(&["rerank", "-i", s(&input), "-o", s(&out), "--pool-size", "1"]);
    assert!(res.status.success());
    let outputs: Vec<String> = lines(&out)
        .iter()
        .map(|r| r["output"].as_str().unwrap().to_owned())
        .collect();
    let firsts: Vec<String> = THREE
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["candidates"][0]
                .as_str()
                .unwrap()
                .to_owned()
        })
        .collect();
    assert_eq!(outputs, firsts);
}

#[test]
fn rerank_and_fuse_agree_without_divergence() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "in.jsonl",
        "{\"id\":\"1\",\"source\":\"a b c\",\"candidates\":[\"a b c\",\"a b c\"]}\n\
         {\"id\":\"2\",\"source\":\"d e\",\"candidates\":[\"x\"]}\n",
    );
    let (r, f) = (dir.path().join("r.jsonl"), dir.path().join("f.jsonl"));
    assert!(qefuse(&["rerank", "-i", s(&input), "-o", s(&r)]).status.success());
    assert!(qefuse(&["fuse", "-i", s(&input), "-o", s(&f)]).status.success());
    let outputs = |p: &Path| lines(p).iter().map(|r| r["output"].clone()).collect::<Vec<_>>();
    assert_eq!(outputs(&r), outputs(&f));
}

#[test]
fn eval_reports() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", THREE);
    let hyps = write(
        &dir,
        "hyps.jsonl",
        "{\"id\":\"c\",\"output\":\"one two three\"}\n\
         {\"id\":\"a\",\"output\":\"Fire at plant extinguished\"}\n\
         {\"id\":\"b\",\"output\":\"the cat sat on the mat\"}\n",
    );
    let report = dir.path().join("report.json");
    let res = qefuse(&["eval", "--hyps", s(&hyps), "-i", s(&input), "--report", s(&report)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["corpus"]["defect_rate"], 0.0);
    assert_eq!(v["corpus"]["mean_chrf"], 100.0);

    let junk = write(
        &dir,
        "junk.jsonl",
        "{\"id\":\"a\",\"output\":\"9182 7736 00\"}\n{\"id\":\"b\",\"output\":\"qqq zzz\"}\n{\"id\":\"c\",\"output\":\"\"}\n",
    );
    let res = qefuse(&["eval", "--hyps", s(&junk), "-i", s(&input), "--report", s(&report)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["corpus"]["defect_rate"], 100.0);

    let mixed = write(
        &dir,
        "mixed.jsonl",
        "{\"id\":\"a\",\"output\":\"Fire in plant cleared\"}\n{\"id\":\"b\",\"output\":\"the cat sat\"}\n{\"id\":\"c\",\"output\":\"one two three\"}\n",
    );
    let res = qefuse(&["eval", "--hyps", s(&mixed), "-i", s(&input), "--report", s(&report)]);
    assert!(res.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let sentences = v["sentences"].as_array().unwrap();
    let mean = |key: &str| sentences.iter().map(|x| x[key].as_f64().unwrap()).sum::<f64>() / 3.0;
    assert!((v["corpus"]["mean_bleu"].as_f64().unwrap() - mean("bleu")).abs() < 1e-12);
    assert!((v["corpus"]["mean_chrf"].as_f64().unwrap() - mean("chrf")).abs() < 1e-12);
    let defects = sentences.iter().filter(|x| x["defect"] == true).count() as f64;
    assert_eq!(v["corpus"]["defect_rate"].as_f64().unwrap(), 100.0 * defects / 3.0);
}

#[test]
fn eval_requires_references_and_outputs() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "in.jsonl",
        "{\"id\":\"a\",\"source\":\"s\",\"candidates\":[\"x\"]}\n",
    );
    let hyps = write(&dir, "hyps.jsonl", "{\"id\":\"a\",\"output\":\"x\"}\n");
    let res = qefuse(&["eval", "--hyps", s(&hyps), "-i", s(&input)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("no reference"));

    let input = write(&dir, "in2.jsonl", THREE);
    let res = qefuse(&["eval", "--hyps", s(&hyps), "-i", s(&input)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("no output for id `b`"), "{}", stderr(&res));
}

#[test]
fn bench_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("bench.csv");
    let res = qefuse(&[
        "bench",
        "--sizes",
        "5,10",
        "--methods",
        "rerank,mbr",
        "--sentences",
        "10",
        "--seed",
        "3",
        "--out",
        s(&csv),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let body = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = body.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        body.lines().next().unwrap(),
        "method,N,wall_time_s,scored_items,utility_calls"
    );
    assert_eq!(rows.len(), 5);
    assert_eq!((rows[1][0], rows[1][1], rows[1][3]), ("qe_rerank", "5", "50"));
    assert_eq!((rows[2][0], rows[2][1], rows[2][3]), ("qe_rerank", "10", "100"));
    assert_eq!((rows[3][0], rows[3][1], rows[3][4]), ("mbr", "5", "200"));

    let res = qefuse(&["bench", "--sizes", "5", "--methods", "magic"]);
    assert_eq!(res.status.code(), Some(1));
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn mock_scorer(extra: &[&str]) -> (Served, String) {
    let port = free_port().to_string();
    let mut args = vec!["mock-scorer", "--port", port.as_str()];
    args.extend_from_slice(extra);
    let child = Command::new(env!("CARGO_BIN_EXE_qefuse"))
        .args(&args)
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let served = Served(child);
    let url = format!("http://127.0.0.1:{port}");
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if let Ok(mut stream) = std::net::TcpStream::connect(("127.0.0.1", port.parse::<u16>().unwrap())) {
            use std::io::Write;
            stream
                .write_all(b"GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
                .unwrap();
            let mut resp = String::new();
            let _ = stream.read_to_string(&mut resp);
            assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
            return (served, url);
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    panic!("mock scorer did not start");
}

#[test]
fn http_scorer_matches_in_process() {
    let (_server, url) = mock_scorer(&[]);
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", THREE);
    let (local, remote) = (dir.path().join("local.jsonl"), dir.path().join("remote.jsonl"));
    assert!(qefuse(&["fuse", "-i", s(&input), "-o", s(&local)]).status.success());
    let res = qefuse(&[
        "fuse",
        "-i",
        s(&input),
        "-o",
        s(&remote),
        "--scorer",
        "http",
        "--scorer-url",
        &url,
        "--batch-size",
        "2",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(fs::read(&local).unwrap(), fs::read(&remote).unwrap());

    let env = Command::new(env!("CARGO_BIN_EXE_qefuse"))
        .args(["rerank", "-i", s(&input), "--scorer", "http"])
        .env("QEFUSE_SCORER_URL", &url)
        .output()
        .unwrap();
    assert!(env.status.success(), "{}", stderr(&env));
}

#[test]
fn scorer_failure_names_sentence() {
    let dir = TempDir::new().unwrap();
    let mut body: Vec<&str> = THREE.lines().collect();
    let refs = write(&dir, "refs.jsonl", THREE);
    let (_server, url) = mock_scorer(&["--scorer", "oracle", "--references", s(&refs)]);
    body.push(r#"{"id":"stray","source":"not in the reference file","candidates":["x","y"]}"#);
    let input = write(&dir, "in.jsonl", &(body.join("\n") + "\n"));
    for cmd in ["fuse", "rerank"] {
        let res = qefuse(&[
            cmd,
            "-i",
            s(&input),
            "--scorer",
            "http",
            "--scorer-url",
            &url,
            "--batch-size",
            "1",
        ]);
        assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
        assert!(stderr(&res).contains("`stray`"), "{}", stderr(&res));
    }
}

#[test]
fn mock_scorer_oracle_needs_references() {
    let res = qefuse(&["mock-scorer", "--port", "0", "--scorer", "oracle"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", THREE);
    let mut outs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("{run}.jsonl"));
        assert!(
            qefuse(&["fuse", "-i", s(&input), "-o", s(&out), "--beam", "3", "--no-cache"])
                .status
                .success()
        );
        outs.push(fs::read(out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}
