mod common;

use common::{bits, grid_instance, oracle_dequant, oracle_gemm, random_shape, F16Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use w4a16_core::engine::splitk_w4a16_run;
use w4a16_core::quant::{dequantize_matrix, PackedInt4Matrix, QuantParams};
use w4a16_core::{
    dataparallel_w4a16_gemm, fp16_gemm, splitk_w4a16_gemm, Fp16Matrix, ReusePolicy, Sequential, SplitKPlan,
};

fn plan() -> SplitKPlan {
    SplitKPlan::default().with_tiles(16, 16, 16).with_cores(5)
}

#[test]
fn all_engines_match_the_oracle_on_grid_instances() {
    let table = F16Table::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..60 {
        let (m, n, k) = random_shape(&mut rng, 64);
        let g = grid_instance(&mut rng, m, n, k);
        let b = dequantize_matrix(&g.w, &g.params).unwrap();
        assert_eq!(bits(&b), bits(&oracle_dequant(&table, &g.w, &g.params)));
        let expected = oracle_gemm(&table, &g.a, &b);
        for s in [1, 2, 3, 4] {
            let (c, _) = splitk_w4a16_gemm(&g.a, &g.w, &g.params, &plan().with_splits(s)).unwrap();
            assert_eq!(bits(&c), expected, "splitk S={s} M={m} N={n} K={k}");
        }
        let (c, _) = dataparallel_w4a16_gemm(&g.a, &g.w, &g.params, &plan()).unwrap();
        assert_eq!(bits(&c), expected, "dataparallel M={m} N={n} K={k}");
        let (c, _) = fp16_gemm(&g.a, &b, &plan()).unwrap();
        assert_eq!(bits(&c), expected, "fp16 M={m} N={n} K={k}");
    }
}

#[test]
fn splits_beyond_k_tiles_leave_zero_buffers() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = grid_instance(&mut rng, 3, 16, 20);
    let (c1, _) = splitk_w4a16_gemm(&g.a, &g.w, &g.params, &plan()).unwrap();
    let (c8, _, ws) = splitk_w4a16_run(&g.a, &g.w, &g.params, &plan().with_splits(8), &Sequential).unwrap();
    assert_eq!(bits(&c1), bits(&c8));
    assert_eq!(ws.split_buffers.len(), 8);
    let grid = plan().with_splits(8).grid(3, 16, 20);
    for (i, buf) in ws.split_buffers.iter().enumerate() {
        let empty = grid.split_k_tiles(i).is_empty();
        assert_eq!(buf.data().iter().all(|&v| v == 0.0), empty, "split {i}");
    }
    assert!(grid.split_k_tiles(7).len() == 2);
}

#[test]
fn split_factor_does_not_change_exact_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let (m, n, k) = random_shape(&mut rng, 64);
        let g = grid_instance(&mut rng, m, n, k);
        let (reference, _) = splitk_w4a16_gemm(&g.a, &g.w, &g.params, &plan()).unwrap();
        for s in [2, 4, 8] {
            let (c, _) = splitk_w4a16_gemm(&g.a, &g.w, &g.params, &plan().with_splits(s)).unwrap();
            assert_eq!(bits(&c), bits(&reference));
        }
    }
}

fn random_problem(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> (Fp16Matrix, PackedInt4Matrix, QuantParams) {
    let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let w: Vec<f32> = (0..k * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let (w, p) = w4a16_core::quant::quantize_matrix(
        &Fp16Matrix::from_f32(k, n, &w).unwrap(),
        w4a16_core::QuantMode::PerChannel,
    )
    .unwrap();
    (Fp16Matrix::from_f32(m, k, &a).unwrap(), w, p)
}

#[test]
fn split_factor_changes_random_results_by_at_most_one_rounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (m, n, k) = (rng.random_range(1..=32), 64, rng.random_range(64..=512));
        let (a, w, p) = random_problem(&mut rng, m, n, k);
        let (c1, _) = splitk_w4a16_gemm(&a, &w, &p, &plan()).unwrap();
        for s in [2, 4, 8] {
            let (c, _) = splitk_w4a16_gemm(&a, &w, &p, &plan().with_splits(s)).unwrap();
            for (x, y) in c1.data().iter().zip(c.data()) {
                let (x, y) = (x.to_f32(), y.to_f32());
                let scale = x.abs().max(y.abs()).max(2f32.powi(-14));
                // One f16 rounding plus f32 reassociation noise.
                assert!((x - y).abs() <= scale * 2f32.powi(-10) + 1e-5, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn reuse_policy_changes_traffic_not_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = grid_instance(&mut rng, 40, 48, 64);
    let p = plan().with_splits(2);
    let (c_unit, t_unit) = splitk_w4a16_gemm(&g.a, &g.w, &g.params, &p).unwrap();
    let (c_res, t_res) = splitk_w4a16_gemm(&g.a, &g.w, &g.params, &p.with_reuse(ReusePolicy::FullRowResident)).unwrap();
    assert_eq!(bits(&c_unit), bits(&c_res));
    assert!(t_res.traffic().total_bytes() < t_unit.traffic().total_bytes());
}
