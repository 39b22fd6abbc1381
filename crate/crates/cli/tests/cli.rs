use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailfed"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("tailfed-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn config(dir: &PathBuf, body: &str) -> PathBuf {
    let p = dir.join("scenario.cfg");
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_reports() {
    let d = scratch("run");
    let cfg = config(&d, "n_pairs = 4\nhorizon_slots = 400\nprotocol = async\n");
    let out = d.join("out");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);
    let run_dir = out.join("async_k4");
    for f in [
        "config.txt",
        "metrics.csv",
        "excess_samples.csv",
        "events.csv",
    ] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(out.join("metrics.csv")).unwrap(),
        stdout(&o)
    );
}

#[test]
fn sweep_has_one_row_per_run_and_is_reproducible() {
    let d = scratch("sweep");
    let cfg = config(&d, "horizon_slots = 200\n");
    let go = |sub: &str| {
        let out = d.join(sub);
        let o = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--sweep-k",
            "4,8,16",
            "--protocol",
            "qsr,async",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (go("a"), go("b"));
    let rows = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(rows.lines().count(), 7);
    assert!(rows
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("3")));
    for f in [
        "metrics.csv",
        "async_k16/events.csv",
        "qsr_k8/excess_samples.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_errors_exit_3() {
    let d = scratch("badcfg");
    let unknown = config(&d, "no_such_key = 1\n");
    assert_eq!(
        run(&["run", "--config", unknown.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    let eps = config(&d, "outage_eps = 2\n");
    assert_eq!(
        run(&["run", "--config", eps.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn missing_file_exits_4() {
    let d = scratch("missing");
    let p = d.join("absent.cfg");
    assert_eq!(
        run(&["run", "--config", p.to_str().unwrap()]).status.code(),
        Some(4)
    );
    let s = d.join("absent.csv");
    assert_eq!(
        run(&["fit", "--samples", s.to_str().unwrap()])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn ccdf_without_samples_exits_6() {
    let d = scratch("nosamples");
    fs::write(d.join("excess_samples.csv"), "pair,excess_bits\n").unwrap();
    let o = run(&["ccdf", "--report", d.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
    assert!(!d.join("ccdf.csv").exists());
}

#[test]
fn fit_and_ccdf_on_exponential_samples() {
    let d = scratch("fit");
    let n = 2000;
    let mut csv = String::from("pair,excess_bits\n");
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        csv.push_str(&format!("0,{}\n", -100.0 * (1.0 - u).ln()));
    }
    let samples = d.join("excess_samples.csv");
    fs::write(&samples, csv).unwrap();

    let o = run(&["fit", "--samples", samples.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,sigma,xi,nll,epochs"));
    let f: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(f[0], n as f64);
    assert!((f[1] / 100.0 - 1.0).abs() < 0.05, "sigma {}", f[1]);
    assert!(f[2].abs() < 0.05, "xi {}", f[2]);

    let o = run(&["ccdf", "--report", d.to_str().unwrap()]);
    assert!(o.status.success());
    let table = fs::read_to_string(d.join("ccdf.csv")).unwrap();
    assert_eq!(table, stdout(&o));
    assert_eq!(
        table.lines().next(),
        Some("excess_bits,empirical_ccdf,fitted_ccdf")
    );
    assert_eq!(table.lines().count(), n + 1);
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(run(&["run", "--protocol", "bogus"]).status.code(), Some(2));
}
