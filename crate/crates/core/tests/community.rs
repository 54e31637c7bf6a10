mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ricci_core::community::{algebraic_connectivity, modularity, normalized_cut, Partition};

use support::oracles::{erdos_renyi, graph_from_edges, jacobi_eigenvalues, laplacian, modularity_double_sum};

#[test]
fn lambda2_agrees_with_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 5, 12, 20] {
        for p in [0.1, 0.3, 0.8] {
            let g = erdos_renyi(n, p, &mut rng);
            let want = jacobi_eigenvalues(laplacian(&g))[1].max(0.0);
            let got = algebraic_connectivity(&g).unwrap();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            if !g.is_connected() {
                assert!(got < 1e-9);
            }
        }
    }
}

#[test]
fn disjoint_cliques_split_perfectly() {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((base + i, base + j));
            }
        }
    }
    let g = graph_from_edges(8, &edges);
    let p = Partition::new(vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
    assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(normalized_cut(&g, &p).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modularity_matches_double_sum(
        seed in any::<u64>(),
        n in 4usize..16,
        labels in proptest::collection::vec(0u8..2, 16),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = erdos_renyi(n, 0.4, &mut rng);
        prop_assume!(g.n_edges() > 0);
        let labels = labels[..n].to_vec();
        let p = Partition::new(labels.clone()).unwrap();
        let q = modularity(&g, &p).unwrap();
        prop_assert!((q - modularity_double_sum(&g, &labels)).abs() < 1e-12);
        prop_assert!((q - modularity(&g, &p.swapped()).unwrap()).abs() < 1e-15);
        prop_assert!((-0.5..=1.0).contains(&q));
    }

    #[test]
    fn lambda2_never_drops_when_edges_are_added(seed in any::<u64>(), n in 3usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = erdos_renyi(n, 0.3, &mut rng);
        let mut edges = g.edges().to_vec();
        let extra = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).find(|e| !edges.contains(e));
        prop_assume!(extra.is_some());
        edges.push(extra.unwrap());
        let h = graph_from_edges(n, &edges);
        prop_assert!(algebraic_connectivity(&h).unwrap() >= algebraic_connectivity(&g).unwrap() - 1e-9);
    }
}
