use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    format!("{}/../core/data/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gridctl-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn gridctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridctl"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_writes_csv() {
    let dir = scratch("csv");
    let out = gridctl(&[
        "simulate",
        &data("two_bus"),
        "--controller",
        "agc",
        "--out",
        dir.to_str().unwrap(),
        "--horizon",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,w_1,w_2,"));
    assert!(stdout(&out).contains("settling time"));
}

#[test]
fn simulate_writes_plot_data() {
    let dir = scratch("plot");
    let out = gridctl(&[
        "simulate",
        &data("four_bus_two_area_limited"),
        "--out",
        dir.to_str().unwrap(),
        "--format",
        "plot-data",
        "--dt",
        "0.02",
        "--horizon",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["freq.dat", "line_3_4.dat", "interarea.dat"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn certify_feasible_and_infeasible() {
    let ok = gridctl(&["certify", &data("two_bus_congested")]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("certified"));
    let bad = gridctl(&["certify", &data("infeasible")]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("infeasible"));
}

#[test]
fn gains_reports_bounds_and_violations() {
    let ok = gridctl(&["gains", &data("two_bus")]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("gain conditions hold"));

    let dir = scratch("gains");
    let text = fs::read_to_string(data("two_bus")).unwrap() + "\n[controller]\nK_u_hi = 0.5\n";
    let file = dir.join("tight.toml");
    fs::write(&file, text).unwrap();
    let bad = gridctl(&["gains", file.to_str().unwrap()]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn exit_codes() {
    assert_eq!(
        code(&gridctl(&["certify", "/nonexistent/scenario.toml"])),
        3
    );

    let dir = scratch("codes");
    let junk = dir.join("junk.toml");
    fs::write(&junk, "[[buses]]\nid = \"one\"\n").unwrap();
    assert_eq!(code(&gridctl(&["gains", junk.to_str().unwrap()])), 1);

    let blown = gridctl(&[
        "simulate",
        &data("ieee39"),
        "--dt",
        "0.05",
        "--horizon",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&blown), 2);

    // Output directory below a regular file cannot be created.
    let blocked = junk.join("out");
    let io = gridctl(&[
        "simulate",
        &data("two_bus"),
        "--horizon",
        "1",
        "--out",
        blocked.to_str().unwrap(),
    ]);
    assert_eq!(code(&io), 3);
}
