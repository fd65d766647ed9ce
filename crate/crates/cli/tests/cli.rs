use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctxmdp::sweep::read_results;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ctxmdp"));
    c.env_remove("CTXMDP_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synth(dir: &Path, seed: &str) -> Output {
    run(&[
        "synth",
        "--out",
        s(dir),
        "--rows",
        "3",
        "--cols",
        "3",
        "--trajectories",
        "120",
        "--length",
        "20",
        "--seed",
        seed,
    ])
}

#[test]
fn synth_is_deterministic_and_rejects_empty_requests() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(code(&synth(&a, "5")), 0);
    assert_eq!(code(&synth(&b, "5")), 0);
    assert_eq!(files(&a), files(&b));
    assert_eq!(files(&a).len(), 3);
    let empty = run(&["synth", "--out", s(&t.path().join("c")), "--trajectories", "0"]);
    assert_eq!(code(&empty), 2);
}

#[test]
fn priors_write_normalized_tables() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "2");
    let out = t.path().join("priors");
    assert_eq!(
        code(&run(&["priors", "--data", s(&data), "--gamma", "1", "--out", s(&out)])),
        0
    );
    for name in ["p_x.csv", "p_joint.csv", "p_task.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let total: f64 = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{name} sums to {total}");
    }
}

/// Doubles one entry of the first row and renormalizes that row.
fn corrupt(src: &Path, dst: &Path) {
    let text = std::fs::read_to_string(src).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.iter().position(|l| *l == "key,output,prob").unwrap() + 1;
    let first_key = lines[start].split(',').next().unwrap().to_string();
    let row: Vec<usize> = (start..lines.len())
        .filter(|&i| lines[i].starts_with(&format!("{first_key},")))
        .collect();
    let mut probs: Vec<f64> = row
        .iter()
        .map(|&i| lines[i].rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let target = probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    probs[target] *= 2.0;
    let z: f64 = probs.iter().sum();
    let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    for (&i, p) in row.iter().zip(&probs) {
        let mut f: Vec<&str> = lines[i].split(',').collect();
        let v = format!("{:.16e}", p / z);
        f[2] = &v;
        out[i] = f.join(",");
    }
    std::fs::write(dst, out.join("\n") + "\n").unwrap();
}

#[test]
fn mech_then_audit_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "3");
    let m = t.path().join("m.csv");
    let prior = t.path().join("prior.csv");
    let lp = t.path().join("m.lp");
    let built = run(&[
        "mech",
        "--data",
        s(&data),
        "--mechanism",
        "LP+C-mDP",
        "--epsilon",
        "0.8",
        "--eta",
        "1.2",
        "--seed",
        "4",
        "--out",
        s(&m),
        "--prior-out",
        s(&prior),
        "--lp-out",
        s(&lp),
    ]);
    assert_eq!(code(&built), 0, "{}", String::from_utf8_lossy(&built.stderr));
    assert!(lp.exists());

    let report = t.path().join("report.csv");
    let ok = run(&[
        "audit",
        "--matrix",
        s(&m),
        "--nodes",
        s(&data.join("nodes.csv")),
        "--prior",
        s(&prior),
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let header = std::fs::read_to_string(&report).unwrap();
    assert!(header.starts_with("key_i,key_j,distance_km,pl,bound,slack"));

    let bad = t.path().join("bad.csv");
    corrupt(&m, &bad);
    let failed = run(&[
        "audit",
        "--matrix",
        s(&bad),
        "--nodes",
        s(&data.join("nodes.csv")),
        "--prior",
        s(&prior),
    ]);
    assert_eq!(code(&failed), 1);
    let stdout = String::from_utf8_lossy(&failed.stdout);
    assert!(stdout.contains("violated: q("), "{stdout}");

    let missing = run(&[
        "audit",
        "--matrix",
        s(&t.path().join("nope.csv")),
        "--nodes",
        s(&data.join("nodes.csv")),
    ]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn exponential_mechanism_audits_under_its_own_metric() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "6");
    let m = t.path().join("exp.csv");
    assert_eq!(
        code(&run(&[
            "mech",
            "--data",
            s(&data),
            "--mechanism",
            "expmech",
            "--epsilon",
            "1.0",
            "--out",
            s(&m)
        ])),
        0
    );
    let audit = run(&[
        "audit",
        "--matrix",
        s(&m),
        "--nodes",
        s(&data.join("nodes.csv")),
        "--eta",
        "5",
    ]);
    assert_eq!(code(&audit), 0, "{}", String::from_utf8_lossy(&audit.stdout));
}

#[test]
fn sweep_reruns_are_byte_identical_and_parse_back() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "7");
    let cfg = t.path().join("sweep.cfg");
    std::fs::write(&cfg, "# small sweep\neta=1.2\nepsilons=0.5,1.0\nseed=9\n").unwrap();
    let sweep = |out: &Path, workers: &str| {
        bin()
            .env("CTXMDP_WORKERS", workers)
            .args(["--config", s(&cfg), "sweep", "--data", s(&data), "--out", s(out)])
            .output()
            .unwrap()
    };
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let first = sweep(&a, "1");
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stdout));
    assert_eq!(code(&sweep(&b, "3")), 0);
    assert_eq!(files(&a), files(&b));

    let rows = read_results(&a.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows
        .iter()
        .all(|r| r.pass && r.expected_loss_km.is_some() && r.build_s.is_none()));
    assert_eq!(rows[0].epsilon, 0.5);

    let corr = run(&["stats-corr", "--table", s(&a.join("pvalues.csv"))]);
    let text = String::from_utf8_lossy(&corr.stdout);
    if std::fs::read_to_string(a.join("pvalues.csv")).unwrap().lines().count() > 3 {
        assert_eq!(code(&corr), 0);
        assert!(text.starts_with("feature,pearson,spearman,kendall"));
    } else {
        assert_eq!(code(&corr), 2);
    }
}

#[test]
fn command_line_flags_override_the_config_file() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("synth.cfg");
    std::fs::write(&cfg, "rows=2\ncols=2\ntrajectories=0\n").unwrap();
    let out = t.path().join("d");
    let failed = run(&["--config", s(&cfg), "synth", "--out", s(&out)]);
    assert_eq!(code(&failed), 2);
    let ok = run(&["--config", s(&cfg), "synth", "--out", s(&out), "--trajectories", "3"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let nodes = std::fs::read_to_string(out.join("nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 5);
    assert_eq!(
        code(&run(&[
            "--config",
            s(&t.path().join("none.cfg")),
            "synth",
            "--out",
            s(&out)
        ])),
        2
    );
}

#[test]
fn stats_commands() {
    let t = tempfile::tempdir().unwrap();
    let table = t.path().join("t.csv");
    std::fs::write(&table, "speed,time,p_value\n1,3,0.1\n2,2,0.2\n").unwrap();
    let short = run(&["stats-corr", "--table", s(&table), "--features", "speed,time"]);
    assert_eq!(code(&short), 2);
    std::fs::write(&table, "speed,time,p_value\n1,3,0.1\n2,2,0.2\n3,1,0.3\n4,4,0.4\n").unwrap();
    let out = t.path().join("corr.csv");
    assert_eq!(
        code(&run(&[
            "stats-corr",
            "--table",
            s(&table),
            "--features",
            "speed,time",
            "--out",
            s(&out)
        ])),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let speed: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(speed.iter().all(|v| (v - 1.0).abs() < 1e-12), "{text}");

    let pts = t.path().join("pts.csv");
    std::fs::write(&pts, "id,lat,lon\n1,0,0\n2,0,0.001\n3,0,0.002\n").unwrap();
    let dens = t.path().join("dens");
    assert_eq!(
        code(&run(&[
            "stats-density",
            "--points",
            s(&pts),
            "--k",
            "1",
            "--radius-m",
            "120",
            "--out",
            s(&dens)
        ])),
        0
    );
    let ccdf = std::fs::read_to_string(dens.join("ccdf.csv")).unwrap();
    assert_eq!(ccdf.lines().count(), 4);
    assert_eq!(
        code(&run(&[
            "stats-density",
            "--points",
            s(&pts),
            "--k",
            "3",
            "--out",
            s(&dens)
        ])),
        2
    );
}
