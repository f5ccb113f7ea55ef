use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DW: &str =
    "[model]\nname = double-well\nsigma = 0.6\n\n[domain]\nlower = 0\nupper = 2\nr = 0.04\n\n\
                  [sampler]\nT = 60\nburn_in = 1\nseed = 3\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fphybrid"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hybrid_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dw.ini", DW);
    let a = dir.path().join("a.fpgrid");
    let b = dir.path().join("b.fpgrid");
    for out in [&a, &b] {
        let o = run(&[
            "hybrid",
            "--config",
            s(&cfg),
            "--seed",
            "7",
            "--output",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("phase1_seconds=") && stdout.contains("l2_error="));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn error_table_has_four_by_four_layout() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        format!("{DW}\n[experiment]\nt_list = 20, 40, 60, 80\nh_list = 0.2, 0.1, 0.05, 0.04\n");
    let cfg = write(dir.path(), "dw.ini", &text);
    let out = dir.path().join("table.csv");
    let o = run(&[
        "error-table",
        "--config",
        s(&cfg),
        "--trials",
        "5",
        "--full-mass",
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == 5));
    for row in &rows[1..] {
        for cell in &row[1..] {
            assert!(cell.parse::<f64>().unwrap() > 0.0);
        }
    }
}

#[test]
fn render_of_a_3d_grid_fails_with_non_2d_class() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fphybrid::GridSpec::new(vec![0.0; 3], vec![1.0; 3], 0.5).unwrap();
    let d = fphybrid::GridDensity::from_fn(spec, fphybrid::Provenance::Analytic, |_| 1.0).unwrap();
    let grid = dir.path().join("cube.fpgrid");
    fphybrid::io::write_grid(&grid, &d).unwrap();
    let o = run(&["render", s(&grid), "--format", "pgm"]);
    assert_eq!(o.status.code(), Some(14));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error class=non-2d code=14"), "{err}");
}

#[test]
fn render_writes_pgm_for_2d_grid() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fphybrid::GridSpec::new(vec![0.0, 0.0], vec![1.0, 0.0], 1.0).unwrap();
    let d = fphybrid::GridDensity::new(spec, vec![0.0, 1.0], fphybrid::Provenance::Hybrid, 0, 1.0)
        .unwrap();
    let grid = dir.path().join("two.fpgrid");
    fphybrid::io::write_grid(&grid, &d).unwrap();
    let out = dir.path().join("two.pgm");
    let o = run(&["render", s(&grid), "--format", "pgm", "--output", s(&out)]);
    assert!(o.status.success());
    let bytes = std::fs::read(out).unwrap();
    assert!(bytes.ends_with(&[0, 0, 0xff, 0xff]));
}

#[test]
fn config_errors_carry_line_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.ini", &format!("{DW}stride = 0x\n"));
    let o = run(&["hybrid", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(12));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("class=config") && err.contains("line 14"),
        "{err}"
    );
}

#[test]
fn sample_then_solve_matches_hybrid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dw.ini", DW);
    let hist = dir.path().join("v.fpgrid");
    let solved = dir.path().join("u.fpgrid");
    let hybrid = dir.path().join("h.fpgrid");
    assert!(run(&["sample", "--config", s(&cfg), "--output", s(&hist)])
        .status
        .success());
    assert!(run(&[
        "solve",
        "--config",
        s(&cfg),
        "--histogram",
        s(&hist),
        "--output",
        s(&solved)
    ])
    .status
    .success());
    assert!(
        run(&["hybrid", "--config", s(&cfg), "--output", s(&hybrid)])
            .status
            .success()
    );
    let a = fphybrid::io::read_grid(&solved).unwrap();
    let b = fphybrid::io::read_grid(&hybrid).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn assemble_writes_matrix_and_rhs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dw.ini", DW);
    let out = dir.path().join("sys.coo");
    let o = run(&["assemble", "--config", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rhs = std::fs::read_to_string(dir.path().join("sys.coo.rhs")).unwrap();
    // 51 nodes: 49 interior rows plus the normalization row.
    assert_eq!(rhs.lines().count(), 50);
    assert_eq!(rhs.lines().last().unwrap().parse::<f64>().unwrap(), 25.0);
}

#[test]
fn glue_writes_one_file_per_part() {
    let dir = tempfile::tempdir().unwrap();
    let text = DW.replace("lower = 0", "lower = -2");
    let cfg = write(dir.path(), "dw.ini", &text);
    let out = dir.path().join("g.fpgrid");
    let o = run(&["glue", "--config", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("g.part0.fpgrid").exists());
    assert!(dir.path().join("g.part1.fpgrid").exists());
}

#[test]
fn help_documents_exit_codes() {
    let o = run(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("Exit codes") && text.contains("14 non-2d") && text.contains("12 config")
    );
}
