use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gpdthresh::report::read_report;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpdthresh")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn every_flag_is_documented() {
    let mut cmd = gpdthresh::cli::command();
    cmd.build();
    for sub in cmd.get_subcommands_mut() {
        let name = sub.get_name().to_string();
        assert!(sub.get_about().is_some(), "subcommand {name} has no description");
        let help = sub.render_long_help().to_string();
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" || id == "version" {
                continue;
            }
            assert!(arg.get_help().is_some(), "{name} --{id} has no help text");
            let long = arg.get_long().unwrap_or_else(|| panic!("{name} {id} has no long flag"));
            assert!(help.contains(&format!("--{long}")), "{name} help omits --{long}");
        }
    }
}

#[test]
fn missing_data_file_exits_3_with_path() {
    let out = bin(&["fit", "--data", "/no/such/dir/losses.csv", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("/no/such/dir/losses.csv"), "{}", stderr(&out));
}

#[test]
fn bad_flag_is_usage_error() {
    assert_eq!(bin(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(bin(&["nonsense"]).status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_chain_settings_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "1\n2\n3\n4\n5\n").unwrap();
    let out = bin(&["fit", "--data", p(&data), "--seed", "1", "--iterations", "10", "--burn-in", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn non_positive_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "1\n-2\n3\n4\n").unwrap();
    let out = bin(&["fit", "--data", p(&data), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("row 2"));
}

#[test]
fn generate_then_fit_with_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sample.csv");
    let out = bin(&["generate", "--n", "300", "--seed", "5", "--out", p(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 300);

    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# short run\niterations = 300\nburn_in = 100\nprior = uniform\nchains = 2\n").unwrap();
    let report = dir.path().join("report.txt");
    let chains = dir.path().join("chains");
    let out = bin(&[
        "fit", "--data", p(&data), "--config", p(&conf), "--iterations", "400", "--seed", "7",
        "--out", p(&report), "--chain-dir", p(&chains),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = read_report(&report).unwrap();
    assert_eq!(r.command, "fit");
    assert_eq!(r.seed, 7);
    assert_eq!(r.n, 300);
    assert_eq!(r.chain.iterations, 400, "flag overrides file");
    assert_eq!(r.chain.burn_in, 100, "file overrides default");
    assert_eq!(r.chains, 2);
    let f = &r.fits[0];
    assert_eq!(f.label, "uniform");
    assert_eq!(f.chain_seeds.len(), 2);
    assert!(f.param("theta").is_some() && f.param("xi").is_some() && f.param("sigma").is_some());
    assert!(f.rhat("xi").is_some());
    assert!(chains.join("chain0.csv").exists() && chains.join("chain1.csv").exists());

    // The report echoes enough to rerun: same settings give the same bytes.
    let again = dir.path().join("again.txt");
    let out = bin(&[
        "fit", "--data", p(&data), "--config", p(&conf), "--iterations", "400", "--seed", "7",
        "--out", p(&again),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(&report).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn unseeded_run_prints_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let out = bin(&["generate", "--n", "50", "--out", p(&a)]);
    assert!(out.status.success());
    let err = stderr(&out);
    let seed: u64 = err
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .expect("seed printed")
        .trim()
        .parse()
        .unwrap();
    let b = dir.path().join("b.csv");
    assert!(bin(&["generate", "--n", "50", "--seed", &seed.to_string(), "--out", p(&b)]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn transform_prices() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    fs::write(&prices, "close\r\n100\r\n102\r\n101\r\n101\r\n").unwrap();
    let inc = dir.path().join("inc.csv");
    let out = bin(&["transform", "--input", p(&prices), "--header", "--column", "close", "--output", p(&inc)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("zero increment"));
    let v: Vec<f64> = fs::read_to_string(&inc).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(v.len(), 3);
    assert!((v[0] - 2.0).abs() < 1e-12);
    assert!((v[1] - 100.0 / 102.0).abs() < 1e-12);
    assert_eq!(v[2], 0.0);

    fs::write(&prices, "100\n0\n3\n").unwrap();
    let out = bin(&["transform", "--input", p(&prices), "--output", p(&inc)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn prior_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let values: String = (1..=40).map(|i| format!("{}\n", (i as f64).powf(1.5))).collect();
    fs::write(&data, values).unwrap();
    let out_path = dir.path().join("curve.csv");
    let out = bin(&["prior-curve", "--data", p(&data), "--xi", "0.5", "--sigma", "3", "--out", p(&out_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,value,log_mass,mass"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 30); // k = 2..=31 by default
    let total: f64 = rows.iter().map(|r| r[3]).sum();
    assert!((total - 1.0).abs() < 1e-10);
    // gaps grow, so mass grows
    assert!(rows.windows(2).all(|w| w[1][3] >= w[0][3]));

    // ξ ≤ 0 is outside the loss-based prior's domain
    let out = bin(&["prior-curve", "--data", p(&data), "--xi", "-0.1", "--sigma", "3"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn recovery_and_study_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("rec.txt");
    let out = bin(&[
        "recovery", "--n", "200", "--iterations", "200", "--burn-in", "100", "--chains", "2", "--seed", "3",
        "--out", p(&rep),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = read_report(&rep).unwrap();
    assert_eq!(r.command, "recovery");
    assert!(r.fit("kl").is_some() && r.fit("uniform").is_some());
    assert!(r.fit("kl").unwrap().prior_curve.is_some());
    assert!(r.notes.iter().any(|(k, _)| k == "truth.theta"));

    let study = dir.path().join("study.txt");
    let out = bin(&[
        "study", "--xi", "0.4", "--theta", "9", "--n", "150", "--replications", "2", "--iterations", "200",
        "--burn-in", "100", "--seed", "1", "--out", p(&study),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = gpdthresh::experiments::read_study(&study).unwrap();
    assert_eq!(s.cells.len(), 2);
}

#[test]
fn select_order_records_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(bin(&["generate", "--n", "200", "--seed", "2", "--out", p(&data)]).status.success());
    let rep = dir.path().join("r.txt");
    let out = bin(&[
        "fit", "--data", p(&data), "--select-order", "2", "--iterations", "200", "--burn-in", "100",
        "--chains", "2", "--seed", "4", "--out", p(&rep),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = read_report(&rep).unwrap();
    assert_eq!(r.fits.len(), 2);
    assert!(r.notes.iter().any(|(k, _)| k == "selected_r"));
    assert!(r.notes.iter().any(|(k, _)| k == "weights.r2"));
}
