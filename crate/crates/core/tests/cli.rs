use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rotgpe(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rotgpe"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &str = "\
# small trap
element = eq1rot
xmin = -4
xmax = 4
ymin = -4
ymax = 4
nx = 12
ny = 12
tau = 0.02
T = 0.2
omega = 0.5
beta = 10
gammax = 1
gammay = 1
snapshots = 0, 0.1, 0.2
";

#[test]
fn conserve_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let stdout = ok(&rotgpe(&["conserve"], Some(&cfg), dir.path()));
    assert!(stdout.contains("max_rel_mass_err"), "{stdout}");
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let lines: Vec<&str> = series.lines().collect();
    assert_eq!(
        lines[0],
        "t,mass,rel_mass_err,energy,rel_energy_err,fp_iters"
    );
    // t = 0 plus ten steps
    assert_eq!(lines.len(), 12);
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn groundstate_feeds_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let gs_dir = dir.path().join("gs");
    let cfg = dir.path().join("gs.cfg");
    fs::write(&cfg, SMALL.replace("tau = 0.02", "tau = 0.05")).unwrap();
    let stdout = ok(&rotgpe(
        &["groundstate", "--element", "q1"],
        Some(&cfg),
        &gs_dir,
    ));
    assert!(stdout.contains("converged=true"), "{stdout}");
    let checkpoint = gs_dir.join("groundstate.txt");
    assert!(checkpoint.exists() && gs_dir.join("groundstate_density.txt").exists());

    let ev_cfg = dir.path().join("ev.cfg");
    fs::write(
        &ev_cfg,
        format!("{SMALL}initial = file:{}\n", checkpoint.display())
            .replace("element = eq1rot", "element = q1"),
    )
    .unwrap();
    let ev_dir = dir.path().join("ev");
    let stdout = ok(&rotgpe(&["evolve"], Some(&ev_cfg), &ev_dir));
    assert_eq!(stdout.matches("second_moment=").count(), 3, "{stdout}");
    for name in [
        "snapshot_t0.0000.txt",
        "snapshot_t0.1000.txt",
        "snapshot_t0.2000.txt",
        "final.txt",
        "series.csv",
    ] {
        assert!(ev_dir.join(name).exists(), "{name}");
    }
    let snap = fs::read_to_string(ev_dir.join("snapshot_t0.1000.txt")).unwrap();
    assert!(snap.starts_with("# rotgpe-snapshot v1"));

    // a checkpoint from another element is rejected
    let wrong = dir.path().join("wrong.cfg");
    fs::write(
        &wrong,
        format!("{SMALL}initial = file:{}\n", checkpoint.display()),
    )
    .unwrap();
    let o = rotgpe(&["evolve"], Some(&wrong), &dir.path().join("bad"));
    assert!(!o.status.success());
}

#[test]
fn accuracy_with_two_levels() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&rotgpe(
        &["accuracy", "--element", "q1", "--levels", "2"],
        None,
        dir.path(),
    ));
    assert!(stdout.starts_with("h,tau,l2_err,l2_rate,h1_err,h1_rate,superclose_err,superclose_rate,postproc_err,postproc_rate"), "{stdout}");
    assert!(stdout.contains("# fitted l2 slope"));
    let table = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(dir.path().join("convergence_final.csv").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "nx = 8\nomgea = 0.5\n").unwrap();
    let o = rotgpe(&["conserve"], Some(&cfg), dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("omgea"), "{err}");
    assert!(!dir.path().join("series.csv").exists());
}

#[test]
fn snapshot_off_the_time_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, SMALL.replace("0, 0.1, 0.2", "0, 0.13")).unwrap();
    assert!(!rotgpe(&["evolve"], Some(&cfg), dir.path()).status.success());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&rotgpe(&["evolve"], Some(&cfg), &a));
    ok(&rotgpe(&["evolve"], Some(&cfg), &b));
    for name in ["series.csv", "final.txt", "snapshot_t0.2000.txt"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}
