use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmonic")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn certify_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("a.cert");
    let knaps = dir.path().join("knaps");
    let params = data("extreme_1583.params");
    let o = run(&[
        "certify",
        "--params",
        params.to_str().unwrap(),
        "--ratio",
        "1583/1000",
        "--out",
        cert.to_str().unwrap(),
        "--jobs",
        "2",
        "--emit-knapsacks",
        knaps.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("certified: 1583/1000 (1.583000)"));
    assert!(knaps.join("class-13.knap").exists());

    let o = run(&["verify-cert", "--params", params.to_str().unwrap(), "--cert", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("accepted"));

    // Tamper with one mixing value: the verifier names the class.
    let text = fs::read_to_string(&cert).unwrap();
    let bad: String = text
        .lines()
        .map(|l| if l.starts_with("k 13 ") { "k 13 y3 1/1000".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let tampered = dir.path().join("tampered.cert");
    fs::write(&tampered, bad).unwrap();
    let o = run(&["verify-cert", "--params", params.to_str().unwrap(), "--cert", tampered.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("class 13"), "{}", stderr(&o));

    // A certificate for other parameters is rejected.
    let o = run(&["verify-cert", "--params", data("super_15884.params").to_str().unwrap(), "--cert", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("digest"));
}

#[test]
fn certify_below_the_bound_fails() {
    let o = run(&["certify", "--params", data("extreme_1583.params").to_str().unwrap(), "--ratio", "31/20"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not dual feasible"));
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["certify", "--params", "x", "--ratio", "3/0"]).status.code(), Some(2));
    let o = run(&["certify", "--params", "/nonexistent/p", "--ratio", "8/5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("harmonic: input-error:"));
    assert_eq!(run(&["lower-bound", "--case", "redfit4=9"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.params");
    fs::write(&junk, "mode: super\nsizes:\n1/2 0\n").unwrap();
    let o = run(&["pack", "--params", junk.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_params_output_loads_and_packs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen.params");
    let o = run(&["gen-params", "--config", data("extreme_1583.gen").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(&out).unwrap().contains("41783/100000 0\n41/100 87/5500"));
    let o = run(&["pack", "--params", out.to_str().unwrap(), "--seed", "5", "--count", "500", "--check-invariants"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn pack_trace_postprocess() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.trace");
    let stream = dir.path().join("run.stream");
    let params = data("extreme_1583.params");
    let p = params.to_str().unwrap();
    let args = [
        "pack",
        "--params",
        p,
        "--seed",
        "11",
        "--count",
        "3000",
        "--trace",
        trace.to_str().unwrap(),
        "--emit-stream",
        stream.to_str().unwrap(),
        "--check-invariants",
    ];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = stdout(&o);
    assert!(first.contains("invariant-violations: 0"));
    // Same seed, same output.
    assert_eq!(stdout(&run(&args)), first);

    // Packing the emitted stream gives the same bin count.
    let o = run(&["pack", "--params", p, "--stream", stream.to_str().unwrap()]);
    let bins = |s: &str| s.lines().find(|l| l.starts_with("bins:")).map(str::to_owned);
    assert_eq!(bins(&stdout(&o)), bins(&first));

    let o = run(&["postprocess", "--params", p, "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("post-conditions: ok"));
    assert!(s.contains("bound: holds"));

    // A trace whose recorded placement differs from the replay fails the check.
    let text = fs::read_to_string(&trace).unwrap();
    let line = text.lines().find(|l| l.starts_with("item=7 ")).unwrap().to_string();
    let bin = line.split_whitespace().find(|t| t.starts_with("bin=")).unwrap();
    let moved = line.replace(bin, "bin=999999");
    fs::write(&trace, text.replace(&line, &moved)).unwrap();
    let o = run(&["postprocess", "--params", p, "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("item 7"));
}

#[test]
fn lower_bound_reports() {
    for (case, want) in [("redfit4=2", "1.5762"), ("redfit4=1", "1.5788"), ("redfit4=3", "1.5872")] {
        let o = run(&["lower-bound", "--case", case]);
        assert_eq!(o.status.code(), Some(0));
        let s = stdout(&o);
        let line = s.lines().find(|l| l.starts_with("lower-bound:")).unwrap();
        let dec: f64 = line.rsplit('(').next().unwrap().trim_end_matches(')').parse().unwrap();
        assert!(dec >= want.parse::<f64>().unwrap(), "{case}: {line}");
    }
    let o = run(&["lower-bound", "--case", "redfit4=1", "--grid-step", "1/200"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("grid-min: "));
    assert!(stdout(&o).contains("slack: "));
    let o = run(&["lower-bound", "--case", "redfit4=2", "--grid-step", "1/100"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn adversary_runs() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("adv.stream");
    let o = run(&[
        "adversary",
        "--case",
        "redfit4=2",
        "--mode",
        "super",
        "--copies",
        "300",
        "--transcript",
        t.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("replay-extreme: "));
    let items = fs::read_to_string(&t).unwrap().lines().count();
    assert!(stdout(&o).contains(&format!("items: {items}")));

    let o = run(&["adversary", "--case", "2", "--mode", "super", "--copies", "100", "--pattern", "1,1,0,0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("opt: 100"));

    let o = run(&["adversary", "--case", "3", "--mode", "super", "--copies", "10"]);
    assert_eq!(o.status.code(), Some(2), "case 3 has no mixed input");
}
