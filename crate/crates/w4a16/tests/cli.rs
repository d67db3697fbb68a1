use std::fs;
use std::path::Path;
use std::process::Command;

use w4a16::commands::{cmd_gemm, cmd_quantize, cmd_random, cmd_traffic, GemmArgs};
use w4a16::formats::{load_matrix, load_packed, save_matrix, save_packed, PackedWeights};
use w4a16_core::engine::EngineKind;
use w4a16_core::quant::{dequantize_matrix, PackedInt4Matrix, QuantParams};
use w4a16_core::{Fp16Matrix, QuantMode, SplitKPlan};

fn small_plan() -> SplitKPlan {
    SplitKPlan::default().with_tiles(16, 16, 16).with_cores(4)
}

/// Columns of `(q - 8) * 2^-2`; every column reaches 7 steps.
fn grid_weights(k: usize, n: usize) -> Fp16Matrix {
    let values: Vec<f32> = (0..k * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            let q = if r == 0 { 15 } else { 1 + (r * 7 + c * 3) % 15 };
            (q as f32 - 8.0) * 0.25
        })
        .collect();
    Fp16Matrix::from_f32(k, n, &values).unwrap()
}

fn gemm_args(dir: &Path, engine: EngineKind, plan: SplitKPlan, out: &str) -> GemmArgs {
    GemmArgs {
        a: dir.join("a.f16m"),
        w: dir.join("w.w4a16"),
        engine,
        plan,
        config: None,
        out: dir.join(out),
        workers: 2,
    }
}

#[test]
fn quantize_grid_file_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let wf = grid_weights(40, 24);
    save_matrix(&dir.path().join("w.f16m"), &wf).unwrap();
    for mode in [QuantMode::PerChannel, QuantMode::PerTensor] {
        let out = dir.path().join("w.w4a16");
        let summary = cmd_quantize(&dir.path().join("w.f16m"), mode, &out).unwrap();
        assert_eq!(summary.max_abs_error, 0.0);
        assert_eq!((summary.rows, summary.cols), (40, 24));
        let packed = load_packed(&out).unwrap();
        assert_eq!(dequantize_matrix(&packed.matrix, &packed.params).unwrap(), wf);
    }
}

#[test]
fn quantize_random_file_error_is_within_half_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("w.f16m");
    cmd_random(64, 32, 9, &input).unwrap();
    let summary = cmd_quantize(&input, QuantMode::PerChannel, &dir.path().join("w.w4a16")).unwrap();
    assert!(summary.max_abs_error > 0.0);
    assert!(summary.max_abs_error <= summary.max_scale / 2.0 + 2f32.powi(-11));
}

#[test]
fn identity_activation_returns_dequantized_weights() {
    let dir = tempfile::tempdir().unwrap();
    let codes: Vec<u8> = (0..48 * 32).map(|i| ((i * 11) % 16) as u8).collect();
    let w = PackedWeights {
        matrix: PackedInt4Matrix::from_codes(48, 32, &codes).unwrap(),
        params: QuantParams::symmetric_per_channel((0..32).map(|c| 0.125 * (1 + c % 4) as f32).collect()).unwrap(),
    };
    save_packed(&dir.path().join("w.w4a16"), &w).unwrap();
    save_matrix(&dir.path().join("a.f16m"), &Fp16Matrix::identity(48)).unwrap();
    let expected = dequantize_matrix(&w.matrix, &w.params).unwrap();
    for engine in EngineKind::ALL {
        let args = gemm_args(dir.path(), engine, small_plan().with_splits(3), "c.f16m");
        let summary = cmd_gemm(&args).unwrap();
        assert_eq!(summary.traced, summary.modelled, "{}", engine.name());
        assert_eq!(load_matrix(&args.out).unwrap(), expected, "{}", engine.name());
    }
}

#[test]
fn single_split_and_data_parallel_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    cmd_random(20, 72, 1, &dir.path().join("a.f16m")).unwrap();
    cmd_random(72, 40, 2, &dir.path().join("wf.f16m")).unwrap();
    cmd_quantize(
        &dir.path().join("wf.f16m"),
        QuantMode::PerChannel,
        &dir.path().join("w.w4a16"),
    )
    .unwrap();
    let splitk = gemm_args(dir.path(), EngineKind::SplitK, small_plan(), "c1.f16m");
    let dp = gemm_args(dir.path(), EngineKind::DataParallel, small_plan(), "c2.f16m");
    let fp16 = gemm_args(dir.path(), EngineKind::Fp16, small_plan(), "c3.f16m");
    for args in [&splitk, &dp, &fp16] {
        cmd_gemm(args).unwrap();
    }
    let c1 = fs::read(&splitk.out).unwrap();
    assert_eq!(c1, fs::read(&dp.out).unwrap());
    assert_eq!(c1, fs::read(&fp16.out).unwrap());
}

#[test]
fn traffic_command_reports_all_engines() {
    let s = cmd_traffic(
        1,
        2048,
        8192,
        &SplitKPlan::default().with_splits(4),
        &EngineKind::ALL,
        None,
    )
    .unwrap();
    assert_eq!(s.engines.len(), 3);
    assert_eq!(s.engines[0].1.totals().weight_packed_read, 8_388_608);
    assert!(s.speedup.splitk_vs_dataparallel > 1.0);
    let text = s.to_string();
    assert!(text.contains("splitk:") && text.contains("speedup:"));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_w4a16"))
}

#[test]
fn binary_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let out = bin().args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    run(&[
        "random",
        "--rows",
        "8",
        "--cols",
        "64",
        "--seed",
        "3",
        "--out",
        &p("a.f16m"),
    ]);
    run(&[
        "random",
        "--rows",
        "64",
        "--cols",
        "32",
        "--seed",
        "4",
        "--out",
        &p("wf.f16m"),
    ]);
    let q = run(&[
        "quantize",
        "--input",
        &p("wf.f16m"),
        "--mode",
        "per-channel",
        "--out",
        &p("w.w4a16"),
    ]);
    assert!(q.contains("max abs error"));
    let g = run(&[
        "gemm",
        "--a",
        &p("a.f16m"),
        "--w",
        &p("w.w4a16"),
        "--engine",
        "splitk",
        "--split",
        "2",
        "--tile",
        "16,16,16",
        "--out",
        &p("c.f16m"),
    ]);
    assert!(g.contains("matches trace"), "{g}");
    assert_eq!(load_matrix(&dir.path().join("c.f16m")).unwrap().rows(), 8);

    let t = run(&["traffic", "--shape", "2048,8192", "--m", "16", "--split", "4"]);
    assert!(t.contains("splitk_vs_dp="));

    let csv = run(&[
        "sweep", "--shape", "32,64", "--m", "1,4", "--split", "1,2", "--tile", "16,16,16", "--seed", "5",
    ]);
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 3);
    run(&["sweep", "--model-only", "--workers", "2", "--out", &p("sweep.csv")]);
    assert_eq!(
        fs::read_to_string(dir.path().join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 6 * 5 * 2 * 3
    );
}

#[test]
fn binary_errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.f16m");
    let bad = dir.path().join("bad.f16m");
    fs::write(&bad, b"F16M\0\x01\0\0\0").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "quantize".into(),
            "--input".into(),
            missing.display().to_string(),
            "--out".into(),
            "x".into(),
        ],
        vec![
            "quantize".into(),
            "--input".into(),
            bad.display().to_string(),
            "--out".into(),
            "x".into(),
        ],
        vec!["traffic".into(), "--shape".into(), "2048".into()],
        vec![
            "traffic".into(),
            "--shape".into(),
            "64,64".into(),
            "--tile".into(),
            "10,16,16".into(),
        ],
        vec![
            "traffic".into(),
            "--shape".into(),
            "64,64".into(),
            "--engine".into(),
            "gpu".into(),
        ],
        vec!["sweep".into(), "--model-only".into(), "--m".into(), "0".into()],
    ];
    for args in cases {
        let out = bin().args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
}
