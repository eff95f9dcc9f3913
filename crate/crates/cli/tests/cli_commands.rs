use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use vpr_cli::commands::{speed_csv_path, GridArgs};
use vpr_cli::manifest::manifest_path;
use vpr_cli::{
    cmd_evaluate, cmd_match, cmd_simulate, cmd_speed, cmd_sweep, CliError, EvaluateArgs, MatchArgs,
    PairArgs, SimulateArgs, SpeedArgs, SweepArgs,
};
use vpr_core::depth_model::DepthRangeThreshold;
use vpr_core::evaluation::{localize, PipelineParams};
use vpr_core::traverse_store::load_traverse;

const SMALL: &str = "path_length=18\nlandmark_count=120\nchannel_count=16\nappearance_severity=0.5\naliasing_fraction=0.5\nseed=7\n";

fn simulate(root: &Path, config: &str) -> PathBuf {
    let cfg = root.join("world.cfg");
    fs::write(&cfg, config).unwrap();
    let out = root.join("sim");
    cmd_simulate(&SimulateArgs { config: cfg, out: out.clone() }).unwrap();
    out
}

fn pair(out: &Path, query: &str, reference: &str) -> PairArgs {
    PairArgs { query: out.join(query), reference: out.join(reference) }
}

fn grid(d: &[f64], l: &[usize]) -> GridArgs {
    GridArgs { d_grid: d.to_vec(), l_grid: l.to_vec(), radius: 10.0, n: 5, offset: 35.0 }
}

fn vpr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vpr")).args(args).output().unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_writes_four_traverses_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (sa, sb) = (simulate(a.path(), SMALL), simulate(b.path(), SMALL));
    let names: Vec<String> = fs::read_dir(&sa)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for name in ["forward-cond0", "reverse-cond0", "forward-cond1", "reverse-cond1", "world.txt", "manifest.txt"] {
        assert!(names.iter().any(|n| n == name), "{name} missing");
    }
    let ta = tree_bytes(&sa);
    let tb = tree_bytes(&sb);
    assert_eq!(ta.len(), tb.len());
    for ((pa, ba), (pb, bb)) in ta.iter().zip(&tb) {
        assert_eq!(pa, pb);
        if pa.file_name().unwrap() != "manifest.txt" {
            assert_eq!(ba, bb, "{}", pa.display());
        }
    }
}

#[test]
fn frame_count_follows_path_length_and_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "path_length=20\nframe_spacing=2\nlandmark_count=50\nchannel_count=8\nseed=1\n");
    let t = load_traverse::<f64>(&out.join("reverse-cond1")).unwrap();
    assert_eq!(t.len(), 11);
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "path_length=20\n").unwrap();
    let err = cmd_simulate(&SimulateArgs { config: cfg.clone(), out: dir.path().join("o") }).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));

    fs::write(&cfg, "seed=1\nwobble=3\n").unwrap();
    let out = vpr(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));
}

#[test]
fn self_match_gives_zero_scores_and_perfect_recall() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &SMALL.replace("appearance_severity=0.5", "appearance_severity=0"));
    let p = pair(&out, "forward-cond0", "forward-cond0");
    let csv = dir.path().join("self.csv");
    let matches = cmd_match(&MatchArgs { pair: p.clone(), d: Some(f64::INFINITY), l: 0, n: 5, stride: 1, out: csv.clone() }).unwrap();
    assert!(matches.iter().all(|m| m.matched == m.query && m.score == 0.0));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("query_id,matched_ref_id,score,candidate_list\n0,0,0,0;"));

    let curve_path = dir.path().join("curve.csv");
    let curve = cmd_evaluate(&EvaluateArgs { matches: csv, pair: p, offset: 0.0, radii: vec![0.0], out: curve_path.clone() }).unwrap();
    assert_eq!(curve.recall, vec![1.0]);
    assert_eq!(fs::read_to_string(curve_path).unwrap().lines().nth(1).unwrap(), format!("0.000000,1.000000,{}", matches.len()));
}

#[test]
fn match_rows_equal_library_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let p = pair(&out, "reverse-cond1", "forward-cond0");
    let csv = dir.path().join("m.csv");
    cmd_match(&MatchArgs { pair: p.clone(), d: Some(15.0), l: 4, n: 3, stride: 1, out: csv.clone() }).unwrap();

    let q = load_traverse::<f64>(&p.query).unwrap();
    let r = load_traverse::<f64>(&p.reference).unwrap();
    assert_eq!(q.len(), 10);
    let params = PipelineParams { depth_threshold: DepthRangeThreshold::Bounded(15.0), sequence_length: 4, stride: 1, top_n: 3 };
    let lib = localize(&q, &r, &params).unwrap();
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), lib.len());
    for (row, m) in rows.iter().zip(&lib) {
        assert_eq!(row[0].parse::<u32>().unwrap(), q.frames()[m.query].frame_id);
        assert_eq!(row[1].parse::<u32>().unwrap(), r.frames()[m.matched].frame_id);
        assert_eq!(row[2].parse::<f64>().unwrap(), m.score);
        let cands: Vec<u32> = row[3].split(';').map(|c| c.parse().unwrap()).collect();
        let want: Vec<u32> = m.candidates.iter().map(|&c| r.frames()[c].frame_id).collect();
        assert_eq!(cands, want);
    }
}

#[test]
fn match_defaults_depend_on_conditions_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let run = |q: &str, r: &str, name: &str| {
        let csv = dir.path().join(name);
        cmd_match(&MatchArgs { pair: pair(&out, q, r), d: None, l: 12, n: 5, stride: 1, out: csv.clone() }).unwrap();
        fs::read_to_string(manifest_path(&csv)).unwrap()
    };
    let cross = run("reverse-cond1", "forward-cond0", "cross.csv");
    assert!(cross.contains("param.d=10.000000\n"));
    assert!(cross.contains("param.l=12\n"));
    assert!(cross.contains("param.n=5\n"));
    assert!(!cross.contains("time"));
    let same = run("reverse-cond0", "forward-cond0", "same.csv");
    assert!(same.contains("param.d=50.000000\n"));
}

#[test]
fn odd_sequence_length_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let err = cmd_match(&MatchArgs { pair: pair(&out, "reverse-cond1", "forward-cond0"), d: None, l: 3, n: 5, stride: 1, out: dir.path().join("x.csv") }).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
    let status = vpr(&[
        "match", "--query", out.join("reverse-cond1").to_str().unwrap(),
        "--reference", out.join("forward-cond0").to_str().unwrap(),
        "--l", "5", "--out", dir.path().join("y.csv").to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn one_cell_sweep_equals_match_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let p = pair(&out, "reverse-cond1", "forward-cond0");
    let surface = cmd_sweep(&SweepArgs { pair: p.clone(), grid: grid(&[20.0], &[4]), stride: 1, out: dir.path().join("s.csv") }).unwrap();

    let m = dir.path().join("m.csv");
    cmd_match(&MatchArgs { pair: p.clone(), d: Some(20.0), l: 4, n: 5, stride: 1, out: m.clone() }).unwrap();
    let curve = cmd_evaluate(&EvaluateArgs { matches: m, pair: p, offset: 35.0, radii: vec![10.0], out: dir.path().join("c.csv") }).unwrap();
    assert_eq!(surface.cells[0].recall, Some(curve.recall[0]));
}

#[test]
fn unit_stride_speed_equals_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let p = pair(&out, "reverse-cond1", "forward-cond0");
    let g = grid(&[10.0, f64::INFINITY], &[0, 2, 4]);
    let sweep_csv = dir.path().join("sweep.csv");
    cmd_sweep(&SweepArgs { pair: p.clone(), grid: g.clone(), stride: 1, out: sweep_csv.clone() }).unwrap();
    let speed_dir = dir.path().join("speed");
    cmd_speed(&SpeedArgs { pair: p, grid: g, strides: vec![1], out: speed_dir.clone() }).unwrap();
    assert_eq!(fs::read(sweep_csv).unwrap(), fs::read(speed_csv_path(&speed_dir, 1)).unwrap());
}

#[test]
fn speed_writes_a_surface_and_manifest_per_stride() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let speed_dir = dir.path().join("speed");
    let surfaces = cmd_speed(&SpeedArgs {
        pair: pair(&out, "reverse-cond1", "forward-cond0"),
        grid: grid(&[10.0], &[0, 4]),
        strides: vec![1, 2, 4],
        out: speed_dir.clone(),
    })
    .unwrap();
    assert_eq!(surfaces.len(), 3);
    for m in [1, 2, 4] {
        let csv = speed_csv_path(&speed_dir, m);
        let text = fs::read_to_string(&csv).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some(&m.to_string()[..])));
        assert!(fs::read_to_string(manifest_path(&csv)).unwrap().contains(&format!("param.stride={m}\n")));
    }
}

#[test]
fn exit_codes_distinguish_validation_and_io() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let q = out.join("reverse-cond1");
    let r = out.join("forward-cond0");
    let broken = dir.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    for f in ["meta.txt", "poses.csv", "frames.bin"] {
        fs::copy(q.join(f), broken.join(f)).unwrap();
    }
    let mut bytes = fs::read(broken.join("frames.bin")).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(broken.join("frames.bin"), bytes).unwrap();

    let o = dir.path().join("m.csv");
    let code = |query: &Path, out: &Path| {
        vpr(&["match", "--query", query.to_str().unwrap(), "--reference", r.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status
            .code()
    };
    assert_eq!(code(&q, &o), Some(0));
    assert_eq!(code(&broken, &o), Some(3));
    // a regular file where the output directory should be
    let blocked = dir.path().join("file");
    fs::write(&blocked, "x").unwrap();
    assert_eq!(code(&q, &blocked.join("m.csv")), Some(4));

    let thr = Command::new(env!("CARGO_BIN_EXE_vpr"))
        .env("VPR_THREADS", "zero")
        .args(["match", "--query", q.to_str().unwrap(), "--reference", r.to_str().unwrap(), "--out", o.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(thr.status.code(), Some(2));
    let one = Command::new(env!("CARGO_BIN_EXE_vpr"))
        .env("VPR_THREADS", "1")
        .args(["match", "--query", q.to_str().unwrap(), "--reference", r.to_str().unwrap(), "--out", dir.path().join("m1.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(fs::read(&o).unwrap(), fs::read(dir.path().join("m1.csv")).unwrap());
}

#[test]
fn evaluate_rejects_unknown_frame_ids() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), SMALL);
    let m = dir.path().join("m.csv");
    fs::write(&m, "query_id,matched_ref_id,score,candidate_list\n0,999,0.1,999\n").unwrap();
    let err = cmd_evaluate(&EvaluateArgs {
        matches: m,
        pair: pair(&out, "reverse-cond1", "forward-cond0"),
        offset: 35.0,
        radii: vec![10.0],
        out: dir.path().join("c.csv"),
    })
    .unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
}

#[test]
fn help_documents_exit_codes() {
    let out = vpr(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["2  usage", "3  validation", "4  I/O", "VPR_THREADS"] {
        assert!(text.contains(needle), "{needle}");
    }
}
