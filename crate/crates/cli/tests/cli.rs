use std::path::Path;
use std::process::{Command, Output};

use fastcoreset::io::{load_coreset, load_dataset, Format};
use fastcoreset::{distortion, Power};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fastcoreset"));
    c.env_remove("FASTCORESET_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("some output")).expect("json output")
}

fn gen_mixture(dir: &Path, name: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    let out = run(&[
        "gen",
        "--kind",
        "gaussian-mixture",
        "--n",
        "2000",
        "--kappa",
        "4",
        "--d",
        "3",
        "-o",
        s(&p),
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn gen_coreset_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_mixture(dir.path(), "p.csv");
    let coreset = dir.path().join("c.bin");
    let report = dir.path().join("r.json");
    let out = run(&[
        "coreset",
        "-i",
        s(&data),
        "-o",
        s(&coreset),
        "--k",
        "4",
        "--m",
        "150",
        "--report",
        s(&report),
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["sampler"], "fast-coreset");

    let out = run(&["eval", "-i", s(&data), "-c", s(&coreset), "--k", "4", "--seed", "2"]);
    assert!(out.status.success());
    let v = json_line(&out);

    // the library computes the same number from the same files and seed
    let p = load_dataset(&data, Format::Csv).unwrap();
    let c = load_coreset(&coreset, Format::Binary).unwrap();
    assert_eq!(v["coreset_size"].as_u64().unwrap() as usize, c.len());
    let expect = distortion(&p, &c, 4, Power::KMeans, 2).unwrap();
    assert_eq!(v["distortion"].as_f64().unwrap(), expect);
    assert!((1.0..1.5).contains(&expect));
}

#[test]
fn seed_makes_output_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_mixture(dir.path(), "p.bin");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["coreset", "-i", s(&data), "-o", s(out), "--k", "4", "--sampler", "sensitivity", "--seed", "3"]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn threads_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_mixture(dir.path(), "p.bin");
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    assert!(run(&["coreset", "-i", s(&data), "-o", s(&a), "--k", "4", "--threads", "1"]).status.success());
    let o = bin()
        .args(["coreset", "-i", s(&data), "-o", s(&b), "--k", "4"])
        .env("FASTCORESET_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn stream_weights_cover_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_mixture(dir.path(), "p.csv");
    let out_path = dir.path().join("s.csv");
    let out = run(&["stream", "-i", s(&data), "-o", s(&out_path), "--k", "4", "--blocks", "4", "--m", "160"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_line(&out)["blocks"], 4);
    let c = load_coreset(&out_path, Format::Csv).unwrap();
    let total: f64 = c.weights().iter().sum();
    assert!((total / 2000.0 - 1.0).abs() < 0.1, "total weight {total}");
}

#[test]
fn csv_format_flag_overrides_extension() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("points.dat");
    let out =
        run(&["gen", "--kind", "c-outlier", "--n", "100", "--c", "3", "--d", "2", "-o", s(&p), "--format", "csv"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1"));
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn bench_spec_file_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let report = dir.path().join("report.json");
    std::fs::write(
        &spec,
        r#"{"datasets": [{"kind": "c-outlier", "n": 500, "c": 3, "d": 2, "seed": 1}],
            "samplers": [{"kind": "uniform"}, {"kind": "fast-coreset"}],
            "m_scalars": [20], "k": 3, "z": 2, "seeds": [0, 1]}"#,
    )
    .unwrap();
    let out = run(&["bench", s(&spec), "-o", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(report.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn bench_quick_preset_prints_csv() {
    let out = run(&["bench", "--paper-table3", "--quick"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("dataset,sampler,"));
    // 3 datasets x 2 samplers x 2 seeds
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("fast-coreset-no-spread-reduction"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["coreset", "-i", "x.csv", "-o", "y.csv"]).status.code(), Some(1));
    assert_eq!(run(&["coreset", "-i", "x.csv", "-o", "y.csv", "--k", "3", "--j", "2"]).status.code(), Some(1));
    assert_eq!(run(&["coreset", "-i", "x.csv", "-o", "y.csv", "--k", "3", "--z", "3"]).status.code(), Some(1));
    assert_eq!(
        run(&["coreset", "-i", "x.csv", "-o", "y.csv", "--k", "3", "--sampler", "welterweight", "--j", "9"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["bench"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(run(&["coreset", "-i", s(&missing), "-o", "y.csv", "--k", "3"]).status.code(), Some(2));

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    let out = run(&["coreset", "-i", s(&ragged), "-o", "y.csv", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    // coreset in a different dimension than the data
    let data = gen_mixture(dir.path(), "p.csv");
    let other = dir.path().join("o.csv");
    assert!(run(&["gen", "--kind", "c-outlier", "--n", "50", "--d", "2", "-o", s(&other)]).status.success());
    let c = dir.path().join("c.csv");
    assert!(run(&["coreset", "-i", s(&other), "-o", s(&c), "--k", "2", "--m", "20"]).status.success());
    assert_eq!(run(&["eval", "-i", s(&data), "-c", s(&c), "--k", "2"]).status.code(), Some(2));
}
