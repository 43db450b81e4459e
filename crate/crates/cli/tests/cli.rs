//! End-to-end checks of the binary: output layout, determinism, exit codes.

use std::process::Command;

fn ctrace() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctrace"))
}

fn run_ok(args: &[&str]) -> String {
    let out = ctrace().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "ctrace {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8")
}

#[test]
fn compute_reports_the_critical_point() {
    let csv = run_ok(&[
        "compute",
        "--offspring",
        "poisson:2.5",
        "--b",
        "1",
        "--p",
        "1",
        "--alpha",
        "0.6",
    ]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("b,p,alpha,y,verdict,theta"));
    let row = lines.next().expect("one row");
    assert!(row.contains("extinct"), "{row}");
    assert!(row.starts_with("1,1.00000000000,0.600000000000,1.00000000000"), "{row}");
}

#[test]
fn compute_without_tracing_gives_log_lambda() {
    let csv = run_ok(&[
        "compute",
        "--offspring",
        "poisson:2.5",
        "--b",
        "1",
        "--p",
        "0.4",
        "--alpha",
        "0",
    ]);
    let row = csv.lines().nth(1).expect("row");
    let theta: f64 = row.split(',').next_back().expect("theta").parse().expect("number");
    assert!((theta - 2.5f64.ln()).abs() < 1e-9);
}

#[test]
fn theta_curve_blanks_past_the_critical_point() {
    let csv = run_ok(&[
        "theta-curve",
        "--offspring",
        "poisson:2.5",
        "--b",
        "0",
        "--p",
        "0.4",
        "--alpha",
        "0:1:201",
    ]);
    let mut blank_started = false;
    let mut positive_seen = false;
    let mut last_theta = f64::NAN;
    for line in csv.lines().skip(1) {
        let (alpha, theta) = line.split_once(',').expect("two columns");
        let alpha: f64 = alpha.parse().expect("number");
        if theta.is_empty() {
            blank_started = true;
            // e_0(0.4) is about 0.613
            assert!(alpha > 0.608, "blank theta too early at alpha {alpha}");
        } else {
            assert!(!blank_started, "theta reappeared after the cutoff");
            last_theta = theta.parse().expect("number");
            if last_theta > 0.0 {
                positive_seen = true;
            }
        }
    }
    assert!(blank_started && positive_seen);
    // the exponent vanishes continuously at the cutoff
    assert!(last_theta < 0.02, "last theta before cutoff: {last_theta}");
}

#[test]
fn identical_seed_gives_byte_identical_output() {
    let args = [
        "simulate",
        "--offspring",
        "poisson:2.5",
        "--b",
        "1",
        "--p",
        "0.4",
        "--alpha",
        "0.5",
        "--horizon",
        "12",
        "--trials",
        "5",
        "--seed",
        "99",
    ];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(a, b);
    assert!(a.starts_with("trial,n,Z,ZCT,R0\n"));
    // cluster engine leaves the untreated column empty
    assert!(a.lines().nth(1).expect("row").contains(",,"));
}

#[test]
fn seed_env_var_is_honored() {
    let base = [
        "simulate",
        "--offspring",
        "poisson:2.5",
        "--b",
        "0",
        "--p",
        "0.5",
        "--alpha",
        "0.3",
        "--horizon",
        "8",
        "--trials",
        "3",
    ];
    let from_env = {
        let out = ctrace()
            .args(base)
            .env("CTRACE_SEED", "424242")
            .output()
            .expect("spawn");
        assert!(out.status.success());
        String::from_utf8(out.stdout).expect("utf8")
    };
    let from_flag = run_ok(&[&base[..], &["--seed", "424242"]].concat());
    assert_eq!(from_env, from_flag);
    let default = run_ok(&base);
    assert_ne!(from_env, default);
}

#[test]
fn direct_engine_tracks_the_untreated_process() {
    let csv = run_ok(&[
        "simulate",
        "--offspring",
        "poisson:2.5",
        "--b",
        "1",
        "--p",
        "0.4",
        "--alpha",
        "0.5",
        "--horizon",
        "6",
        "--engine",
        "direct",
        "--seed",
        "7",
    ]);
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let z: u64 = cols[2].parse().expect("Z tracked");
        let zct: u64 = cols[3].parse().expect("ZCT");
        assert!(zct <= z, "{line}");
    }
}

#[test]
fn json_embeds_the_resolved_config() {
    let out = run_ok(&[
        "critical",
        "--offspring",
        "poisson:2.5",
        "--b",
        "1",
        "--p",
        "1",
        "--format",
        "json",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&out).expect("json");
    assert_eq!(doc["op"], "critical");
    assert_eq!(doc["config"]["offspring"], "poisson:2.5");
    let eb = doc["rows"][0]["e_b"].as_f64().expect("e_b");
    assert!((eb - 0.6).abs() < 1e-9);
}

#[test]
fn mc_vn_reports_z_scores() {
    let csv = run_ok(&[
        "mc",
        "--op",
        "vn",
        "--offspring",
        "poisson:2.5",
        "--b",
        "1",
        "--p",
        "0.4",
        "--alpha",
        "0.5",
        "--trials",
        "20000",
        "--horizon",
        "4",
        "--seed",
        "3",
    ]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,estimate,stderr,analytic,z"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let z: f64 = cols[4].parse().expect("z");
        assert!(z.abs() < 5.0, "{line}");
    }
}

#[test]
fn verdict_boundary_flips_once_along_alpha() {
    let csv = run_ok(&[
        "compute",
        "--offspring",
        "poisson:2.5",
        "--b",
        "0",
        "--p",
        "0.4",
        "--alpha",
        "0:1:41",
    ]);
    let verdicts: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).expect("verdict"))
        .collect();
    let flips = verdicts.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(flips, 1, "{verdicts:?}");
    assert_eq!(*verdicts.first().expect("rows"), "survives");
    assert_eq!(*verdicts.last().expect("rows"), "extinct");
}

#[test]
fn usage_errors_exit_one() {
    let out = ctrace()
        .args(["compute", "--offspring", "zipf:2"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));
    let out = ctrace()
        .args(["critical", "--offspring", "poisson:2.5", "--p", "0"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn computation_errors_exit_two() {
    // two children always, nothing detected: doubles past a tiny cap
    let out = ctrace()
        .args([
            "simulate",
            "--offspring",
            "pmf:0,0,1",
            "--b",
            "1",
            "--p",
            "0",
            "--alpha",
            "0",
            "--horizon",
            "40",
            "--cap",
            "200",
            "--seed",
            "5",
        ])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("explosion cap"), "{err}");
}

#[test]
fn help_exits_zero() {
    let out = ctrace().arg("--help").output().expect("spawn");
    assert_eq!(out.status.code(), Some(0));
}
