use gossipmf_core::synthetic::gen_synthetic;
use nalgebra::DMatrix;

fn singular_values(m: usize, n: usize, values: &[f64]) -> Vec<f64> {
    let mat = DMatrix::from_row_slice(m, n, values);
    let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

#[test]
fn truth_has_numerical_rank_at_most_r() {
    for (size, rank, seed) in [(100, 10, 0), (100, 10, 1), (60, 4, 7), (40, 2, 3), (200, 10, 5)] {
        let (theta, x) = gen_synthetic(size, size, rank, 0.2, seed).unwrap();
        let sv = singular_values(size, size, theta.values());
        assert!(
            sv[rank] < 1e-8 * sv[0],
            "size {size} rank {rank}: sigma_r+1/sigma_1 = {}",
            sv[rank] / sv[0]
        );
        // the construction uses its whole rank budget
        assert!(sv[rank - 1] > 1e-6 * sv[0]);
        assert!(theta.values().iter().all(|v| (1.0..=5.0).contains(v)));
        assert_eq!(x.len(), size * size - (size * size) / 5);
    }
}

#[test]
fn rectangular_truth_keeps_rank_bound() {
    let (theta, _) = gen_synthetic(30, 80, 6, 0.5, 2).unwrap();
    let sv = singular_values(30, 80, theta.values());
    assert!(sv[6] < 1e-8 * sv[0]);
}
