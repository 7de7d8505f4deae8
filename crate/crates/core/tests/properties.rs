use csipred::codec::{flatten, unflatten};
use csipred::dataset::{window_count, NormStats};
use csipred::eval::{sum_rate, zf_precoder};
use csipred::graph::normalized_laplacian;
use csipred::numerics::{softmax_rows, unitary_dft_matrix, Complex64, RngStream};
use csipred::tensor_io::Tensor;
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = RngStream::new(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_preserves_energy(k in 1usize..40, seed in any::<u64>()) {
        let f = unitary_dft_matrix(k).unwrap();
        let mut rng = RngStream::new(seed);
        let x = ndarray::Array1::from_shape_fn(k, |_| Complex64::new(rng.normal(), rng.normal()));
        let y = x.dot(&f);
        let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((ex - ey).abs() <= 1e-12 * ex.max(1.0));
    }

    #[test]
    fn laplacian_rows_of_softmax_graph(n in 2usize..12, seed in any::<u64>()) {
        let a = softmax_rows(&matrix(n, n, seed));
        let w = (&a + &a.t()) / 2.0;
        let g = normalized_laplacian(&w).unwrap();
        // D^{1/2} 1 lies in the kernel of the normalised Laplacian
        let v = g.degree.mapv(f64::sqrt);
        let lv = g.laplacian.dot(&v);
        prop_assert!(lv.iter().all(|x| x.abs() < 1e-12));
        prop_assert!((0..n).all(|i| (g.laplacian[[i, i]] - (1.0 - w[[i, i]] / g.degree[i])).abs() < 1e-12));
    }

    #[test]
    fn flatten_roundtrip(nc in 1usize..6, nt in 1usize..6, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let h = Array2::from_shape_fn((nc, nt), |_| Complex64::new(rng.normal(), rng.normal()));
        let v = flatten(&h);
        prop_assert_eq!(v.len(), 2 * nc * nt);
        prop_assert_eq!(unflatten(v.view(), nc, nt).unwrap(), h);
    }

    #[test]
    fn normalisation_inverts(rows in 2usize..20, cols in 1usize..6, seed in any::<u64>()) {
        let data = matrix(rows, cols, seed);
        let stats = NormStats::fit(data.view()).unwrap();
        let mut x = data.clone();
        stats.normalize_rows(&mut x);
        stats.denormalize_rows(&mut x);
        prop_assert!(x.iter().zip(data.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn window_count_matches_enumeration(len in 0usize..80, k in 1usize..15, p in 1usize..10) {
        let brute = (0..len).filter(|&t| t + k + p <= len).count();
        prop_assert_eq!(window_count(len, k, p), brute);
    }

    #[test]
    fn zf_removes_interference(u in 1usize..5, extra in 0usize..4, seed in any::<u64>()) {
        let nt = u + extra;
        let mut rng = RngStream::new(seed);
        let h = Array2::from_shape_fn((u, nt), |_| Complex64::new(rng.normal(), rng.normal()));
        let Ok(v) = zf_precoder(&h) else { return Ok(()) };
        let g = h.dot(&v);
        for ((k, j), z) in g.indexed_iter() {
            if k != j {
                prop_assert!(z.norm() < 1e-9);
            }
        }
        // more power never lowers the rate
        prop_assert!(sum_rate(&h, &v, 10.0).unwrap() >= sum_rate(&h, &v, 1.0).unwrap());
    }

    #[test]
    fn tensor_container_roundtrip(d0 in 1usize..4, d1 in 1usize..5, d2 in 1usize..5, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let t = Tensor {
            dims: vec![d0 as u64, d1 as u64, d2 as u64],
            is_complex: true,
            data: (0..2 * d0 * d1 * d2).map(|_| rng.normal()).collect(),
            meta: b"{}".to_vec(),
        };
        let bytes = t.encode().unwrap();
        prop_assert_eq!(Tensor::decode(&bytes).unwrap(), t.clone());
        // every strict prefix is rejected
        let cut = (seed as usize) % bytes.len();
        prop_assert!(Tensor::decode(&bytes[..cut]).is_err());
    }
}
