mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sthawkes::precompute::{psi_error_norms, psi_exact, DEFAULT_EXACT_BUDGET};
use sthawkes::{precompute, PrecomputeOptions, Support, Window};

fn arb_instance() -> impl Strategy<Value = Instance> {
    (
        1usize..=2,
        2u32..=8,
        4u32..=12,
        1u32..=3,
        1u32..=4,
        0usize..60,
        any::<u64>(),
    )
        .prop_map(|(d, hx, ht, ws, wt, n, seed)| {
            let step = 0.25;
            let w = Window::new(hx as f64 * step, hx as f64 * step, ht as f64 * step).unwrap();
            let sup = Support::new(
                (ws.min(hx) as f64) * step,
                (ws.min(hx) as f64) * step,
                (wt.min(ht) as f64) * step,
            )
            .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            instance(random_catalog(&mut rng, d, w, n), sup, step)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binning_preserves_counts_and_rounds_to_nearest(inst in arb_instance()) {
        let g = &inst.grid;
        prop_assert_eq!(inst.binned.total_events(), inst.catalog.len());
        for j in 0..inst.catalog.dim() {
            let cells = inst.binned.cells(j);
            prop_assert_eq!(cells.iter().map(|c| c.count as usize).sum::<usize>(), inst.catalog.process(j).len());
            for (e, v) in inst.catalog.process(j).iter().zip(inst.binned.event_nodes(j)) {
                let (x, y, t) = g.node_coords(*v);
                let tol = 0.5 * g.step[0] + 1e-12;
                prop_assert!((x - e.x).abs() <= tol && (y - e.y).abs() <= tol && (t - e.t).abs() <= tol);
            }
        }
    }

    #[test]
    fn statistics_are_bounded_and_symmetric(inst in arb_instance()) {
        let pre = precompute(&inst.binned, &inst.grid, &PrecomputeOptions::default()).unwrap();
        let d = pre.dim();
        let l = inst.grid.kernel_len;
        for j in 0..d {
            let n = pre.counts[j] as f64;
            prop_assert!(pre.phi_grid(j).iter().all(|&v| (0.0..=n).contains(&v)));
            for i in 0..d {
                let ni = pre.counts[i] as f64;
                prop_assert!(pre.phi_events(i, j).iter().all(|&v| v >= 0.0 && v <= ni * n));
            }
            for k in 0..d {
                let a = pre.psi_tilde(j, k);
                let b = pre.psi_tilde(k, j);
                for ((x, y, t), v) in a.indexed_iter() {
                    let m = [2 * l[0] - 2 - x, 2 * l[1] - 2 - y, 2 * l[2] - 2 - t];
                    prop_assert_eq!(*v, b[m]);
                }
                // zero lag: sum over nodes of z_j z_k
                let zj = counts(&inst, j);
                let zk = counts(&inst, k);
                let dot: i64 = zj.iter().zip(zk.iter()).map(|(p, q)| p * q).sum();
                prop_assert_eq!(a[[l[0] - 1, l[1] - 1, l[2] - 1]], dot as f64);
            }
        }
    }

    #[test]
    fn exact_statistic_bounded_by_lag_statistic(inst in arb_instance()) {
        // every term of the exact sum also appears in the lag sum
        let mut pre = precompute(&inst.binned, &inst.grid, &PrecomputeOptions::default()).unwrap();
        let exact = psi_exact(&inst.binned, &inst.grid, DEFAULT_EXACT_BUDGET).unwrap();
        let l = inst.grid.kernel_len;
        let unflat = |f: usize| [f / (l[1] * l[2]), (f / l[2]) % l[1], f % l[2]];
        let d = pre.dim();
        for j in 0..d {
            for k in 0..d {
                let t = pre.psi_tilde(j, k);
                for ((r, c), &v) in exact[j * d + k].indexed_iter() {
                    let (a, b) = (unflat(r), unflat(c));
                    prop_assert!(v <= t[[b[0] + l[0] - 1 - a[0], b[1] + l[1] - 1 - a[1], b[2] + l[2] - 1 - a[2]]]);
                }
            }
        }
        pre.psi_exact = Some(exact);
        let norms = psi_error_norms(&pre).unwrap();
        prop_assert!(norms.rel_l1 >= 0.0 && norms.abs_l1.is_finite());
    }
}
