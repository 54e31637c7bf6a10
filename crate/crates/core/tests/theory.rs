use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ricci_core::datasets::unit_ball_sample;
use ricci_core::theory::{
    gaussian_map, gram_matrix, preservation_trial, random_linear_image, relu_rewire, GraphKind,
    ProjectionRoute, RewireCase,
};
use ricci_core::PointCloud;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn gaussian_map_entry_variance() {
    let m = 1000;
    let a = gaussian_map(1000, m, 3);
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sigma2 = 1.0 / m as f64;
    let se = sigma2 * (2.0 / n).sqrt();
    assert!((var - sigma2).abs() < 5.0 * se, "{var} vs {sigma2}");
    assert_eq!(a, gaussian_map(1000, m, 3));
}

#[test]
fn projections_concentrate_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DVector::from_fn(8, |_, _| normal(&mut rng));
    let target = x.norm_squared();
    let draws = 10_000;
    let mean = (0..draws)
        .map(|s| (gaussian_map(8, 512, s) * &x).norm_squared())
        .sum::<f64>()
        / draws as f64;
    assert!((mean / target - 1.0).abs() < 0.01, "{mean} vs {target}");
}

/// Distortion `‖ψx − ψy‖² / ‖x − y‖²` for a fixed pair under one route.
fn distortions(route: ProjectionRoute, width: usize, depth: usize, draws: u64) -> Vec<f64> {
    let cloud = PointCloud::from_rows(&[vec![0.3, -0.2, 0.5], vec![-0.4, 0.1, 0.2]], None).unwrap();
    let base = cloud.sq_dist(0, 1);
    (0..draws)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let img = random_linear_image(&cloud, width, depth, route, &mut rng).unwrap();
            img.sq_dist(0, 1) / base
        })
        .collect()
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

#[test]
fn wishart_route_matches_direct_route_in_law() {
    for (width, depth) in [(16, 1), (64, 2), (128, 3)] {
        let direct = distortions(ProjectionRoute::Direct, width, depth, 4000);
        let wishart = distortions(ProjectionRoute::Wishart, width, depth, 4000);
        let (md, vd) = moments(&direct);
        let (mw, vw) = moments(&wishart);
        let se = ((vd + vw) / 4000.0).sqrt();
        assert!((md - mw).abs() < 5.0 * se, "means {md} vs {mw}");
        assert!((md - 1.0).abs() < 5.0 * (vd / 4000.0).sqrt());
        let want_var = (1.0 + 2.0 / width as f64).powi(depth as i32) - 1.0;
        for v in [vd, vw] {
            assert!((v / want_var - 1.0).abs() < 0.15, "variance {v} vs {want_var}");
        }
    }
}

#[test]
fn preservation_routes_agree_and_extremes_behave() {
    let cloud = unit_ball_sample(50, 3, 5).unwrap();
    let kind = GraphKind::Radius { r: 0.3 };
    let widths = [64, 256];
    let a = preservation_trial(&cloud, kind, &widths, 1, 400, 0.1, ProjectionRoute::Direct, 1).unwrap();
    let b = preservation_trial(&cloud, kind, &widths, 1, 400, 0.1, ProjectionRoute::Wishart, 2).unwrap();
    for (p, q) in a.proportion_preserved.iter().zip(&b.proportion_preserved) {
        let pooled = (p + q) / 2.0;
        let se = (2.0 * pooled * (1.0 - pooled) / 400.0).sqrt().max(1e-3);
        assert!((p - q).abs() < 4.0 * se, "{p} vs {q}");
    }
    let knn = GraphKind::Knn { k: 5 };
    let tiny = preservation_trial(&cloud, knn, &[1], 1, 200, 0.1, ProjectionRoute::Direct, 3).unwrap();
    assert!(tiny.proportion_preserved[0] < 0.05);
    let huge =
        preservation_trial(&cloud, kind, &[1 << 26], 1, 200, 0.1, ProjectionRoute::Auto, 4).unwrap();
    assert_eq!(huge.proportion_preserved[0], 1.0);
}

#[test]
fn deeper_linear_networks_preserve_less() {
    let cloud = unit_ball_sample(50, 3, 8).unwrap();
    let kind = GraphKind::Radius { r: 0.3 };
    let props: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|&d| {
            preservation_trial(&cloud, kind, &[2048], d, 400, 0.1, ProjectionRoute::Auto, 9)
                .unwrap()
                .proportion_preserved[0]
        })
        .collect();
    for w in props.windows(2) {
        assert!(w[1] <= w[0] + 0.05, "{props:?}");
    }
    assert!(props[3] < props[0]);
}

fn random_triple(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(3..=20);
    let mut v = || (0..n).map(|_| normal(rng)).collect::<Vec<f64>>();
    let (x, mut y, mut z) = (v(), v(), v());
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    if d(&x, &y) < d(&x, &z) {
        std::mem::swap(&mut y, &mut z);
    }
    (x, y, z)
}

fn check_rewiring(x: &[f64], y: &[f64], z: &[f64]) -> RewireCase {
    let r = relu_rewire(x, y, z).unwrap();
    let n = x.len();
    let gram = r.a.transpose() * &r.a;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((gram[(i, j)] - want).abs() < 1e-10);
        }
    }
    let (fx, fy, fz) = (
        r.apply(&DVector::from_column_slice(x)),
        r.apply(&DVector::from_column_slice(y)),
        r.apply(&DVector::from_column_slice(z)),
    );
    let (dxy, dxz) = ((&fx - &fy).norm(), (&fx - &fz).norm());
    assert!(dxy < dxz, "{dxy} !< {dxz}");
    r.case
}

#[test]
fn rewiring_reverses_distance_order_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let (x, y, z) = random_triple(&mut rng);
        assert_eq!(check_rewiring(&x, &y, &z), RewireCase::General);
    }
}

#[test]
fn rewiring_branches() {
    assert_eq!(
        check_rewiring(&[1.0, 0.0, 0.0], &[3.0, 0.0, 0.0], &[1.0, 1.0, 1.0]),
        RewireCase::YParallelX
    );
    assert_eq!(
        check_rewiring(&[1.0, 0.0, 0.0], &[-2.0, 0.0, 0.0], &[1.0, 1.0, 0.0]),
        RewireCase::YParallelX
    );
    assert_eq!(
        check_rewiring(&[0.0; 4], &[0.0, 2.0, -1.0, 0.5], &[0.3, 0.2, 0.1, -0.4]),
        RewireCase::ZeroX
    );
    assert_eq!(
        check_rewiring(&[-1.0, 0.0, 0.0], &[1.0, 2.0, 0.0], &[-1.0, 0.5, 0.5]),
        RewireCase::General
    );
}

#[test]
fn gram_matrix_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|_| {
            let v: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect()
        })
        .collect();
    let cloud = PointCloud::from_rows(&rows, None).unwrap();
    let h = gram_matrix(&cloud).unwrap();
    let draws = 200_000;
    let mut est = [[0.0; 5]; 5];
    for _ in 0..draws {
        let w: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
        let on: Vec<bool> = rows
            .iter()
            .map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() >= 0.0)
            .collect();
        for i in 0..5 {
            for j in 0..5 {
                if on[i] && on[j] {
                    est[i][j] += rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
    for i in 0..5 {
        for j in 0..5 {
            let mc = est[i][j] / draws as f64;
            assert!((mc - h[(i, j)]).abs() < 5.0 * 0.5 / (draws as f64).sqrt(), "{mc} vs {}", h[(i, j)]);
        }
    }
}
