use std::path::PathBuf;
use std::process::{Command, Output};

use kondo_core::cli::{embedded_config, render};

fn kondo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kondo")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kondo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn exit_codes() {
    assert_eq!(kondo(&["--help"]).status.code(), Some(0));
    assert_eq!(kondo(&[]).status.code(), Some(2));
    assert_eq!(kondo(&["spectrum"]).status.code(), Some(2));
    assert_eq!(kondo(&["spectrum", "--g", "1", "--j", "2"]).status.code(), Some(2));
    assert_eq!(kondo(&["spectrum", "--g", "1", "--lambda", "0"]).status.code(), Some(2));
    assert_eq!(kondo(&["condensate", "--g", "1", "--xi", "-0.5"]).status.code(), Some(2));
    assert_eq!(kondo(&["evolve", "--lambda-cont", "--g", "1"]).status.code(), Some(2));
    assert_eq!(kondo(&["spectrum", "--energies", "/nonexistent/file"]).status.code(), Some(2));
    let sub = kondo(&["spectrum", "--lambda", "3", "--j", "0.1"]);
    assert_eq!(sub.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&sub.stderr).contains("inverse coupling solve"));
    let far = kondo(&["condensate", "--lambda", "5", "--g", "1", "--kmax", "6"]);
    assert_eq!(far.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&far.stderr).contains("condensate profile"));
}

#[test]
fn selftest_passes() {
    let out = kondo(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let r = rows(&out);
    assert!(!r.is_empty());
    assert!(r.iter().all(|row| row.last().unwrap() == "pass"));
}

#[test]
fn spectrum_columns_and_values() {
    let out = kondo(&["spectrum", "--lambda", "1", "--g", "1:73"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "alpha,nu,Xprime,impurity_weight");
    let r = rows(&out);
    let nu: Vec<f64> = r.iter().map(|x| x[1].parse().unwrap()).collect();
    assert!((nu[0] + 3f64.sqrt()).abs() < 1e-15 && nu[1] == 0.0 && (nu[2] - 3f64.sqrt()).abs() < 1e-15);
    for row in &r {
        let xp: f64 = row[2].parse().unwrap();
        let w: f64 = row[3].parse().unwrap();
        assert!((xp - 3.0).abs() < 1e-14 && (w - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn condensate_profiles_show_the_symmetry_breaking() {
    let sym = rows(&kondo(&["condensate", "--lambda-cont", "--g", "1", "--xi", "0", "--kmax", "20"]));
    let asym = rows(&kondo(&["condensate", "--g", "1", "--xi", "0.5", "--kmax", "20"]));
    assert_eq!(sym.len(), 40);
    let psi = |r: &Vec<Vec<String>>, i: usize| r[i][2].parse::<f64>().unwrap();
    for i in 0..20 {
        assert_eq!(sym[i][0], format!("-{}", 20 - i));
        assert_eq!(psi(&sym, i), psi(&sym, 39 - i));
        assert!(psi(&asym, 39 - i) > psi(&asym, i));
        // even parts coincide across ξ
        assert_eq!(sym[i][4], asym[i][4]);
    }
}

#[test]
fn json_output_is_valid() {
    let out = kondo(&["running-coupling", "--lambda", "100", "--g", "1", "--format", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["config"]["command"], "running-coupling");
    assert_eq!(doc["columns"], serde_json::json!(["lambda", "g_abs", "j_inverse", "j", "af_ratio"]));
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["lambda"], 100);
    let j = rows[1]["j"].as_f64().unwrap();
    let ji = rows[1]["j_inverse"].as_f64().unwrap();
    assert!((j * ji - 1.0).abs() < 1e-15);
}

#[test]
fn config_round_trip() {
    let energies = scratch("energies.txt");
    std::fs::write(&energies, "0.9, 2.1 3.05\n4.2\n").unwrap();
    let grid = scratch("grid.cfg");
    std::fs::write(&grid, "# four levels\nlambda = 4\nslope = 1.0\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["excitations", "--energies", energies.to_str().unwrap(), "--g", "0.7:20", "--top", "6"],
        vec!["condensate", "--grid", grid.to_str().unwrap(), "--g", "1", "--xi", "0.3", "--kmax", "4"],
        vec!["evolve", "--lambda", "3", "--j", "1.5", "--t-final", "0.5", "--stride", "100", "--seed", "3"],
        vec!["spectrum", "--lambda-cont", "--g", "2", "--kmax", "5", "--format", "json"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for (i, args) in cases.iter().enumerate() {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = kondo(&args);
        assert!(first.status.success(), "{args:?}: {}", String::from_utf8_lossy(&first.stderr));
        let text = String::from_utf8(first.stdout.clone()).unwrap();
        let cfg = embedded_config(&text).unwrap();
        assert_eq!(render(&cfg).unwrap().0, text);
        let saved = scratch(&format!("saved{i}.out"));
        std::fs::write(&saved, &text).unwrap();
        let replay = kondo(&[args[0], "--replay", saved.to_str().unwrap()]);
        assert!(replay.status.success());
        assert_eq!(replay.stdout, first.stdout);
    }
    let saved = scratch("saved0.out");
    assert_eq!(kondo(&["spectrum", "--replay", saved.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn excitations_table() {
    let out = kondo(&["excitations", "--lambda", "1", "--g", "1", "--n-spins", "2"]);
    let r = rows(&out);
    let e: Vec<f64> = r.iter().map(|x| x[1].parse().unwrap()).collect();
    let s3 = 3f64.sqrt();
    assert_eq!(r.len(), 3);
    assert!((e[0] - s3 / 2.0).abs() < 1e-15 && (e[1] - s3 / 2.0).abs() < 1e-15 && (e[2] - s3).abs() < 1e-15);
    assert_eq!((r[2][2].as_str(), r[2][3].as_str()), ("2", "0"));
}

#[test]
fn evolve_table_conserves() {
    let out =
        kondo(&["evolve", "--lambda", "3", "--g", "0.8", "--t-final", "1", "--stride", "250", "--perturb", "0.1"]);
    assert!(out.status.success());
    let r = rows(&out);
    assert_eq!(r.len(), 5);
    let e0: f64 = r[0][1].parse().unwrap();
    let d0: f64 = r[0][2].parse().unwrap();
    for row in &r {
        assert!((row[1].parse::<f64>().unwrap() - e0).abs() < 1e-10);
        assert!((row[2].parse::<f64>().unwrap() - d0).abs() < 1e-10);
        assert!(row[4].parse::<f64>().unwrap() < 1e-10);
    }
}
