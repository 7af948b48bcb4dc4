use sthawkes::simulator::simulate_with;
use sthawkes::{simulate, ModelParams, SpatialFamily, Support, TemporalFamily, Window};

fn model(mu: Vec<f64>, alpha: Vec<f64>) -> ModelParams {
    ModelParams::uniform(
        mu,
        alpha,
        SpatialFamily::TruncGauss,
        TemporalFamily::Exponential,
        &[0.0, 0.0, 0.2, 2.0],
        Support::unit(),
    )
    .unwrap()
}

#[test]
fn no_excitation_is_poisson() {
    let w = Window::new(5.0, 5.0, 10.0).unwrap();
    let gt = model(vec![0.3], vec![0.0]);
    let runs = 400;
    let counts: Vec<f64> = (0..runs)
        .map(|s| simulate(&gt, w, s).unwrap().len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / runs as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let expected = 0.3 * w.volume();
    assert!((mean - expected).abs() < 4.0 * (expected / runs as f64).sqrt());
    // Poisson dispersion: variance near the mean
    assert!((var / expected - 1.0).abs() < 0.25, "{var} vs {expected}");
}

#[test]
fn branching_ratio_matches_excitation() {
    let w = Window::new(10.0, 10.0, 50.0).unwrap();
    let gt = model(vec![0.2, 0.1], vec![0.3, 0.2, 0.1, 0.4]);
    let sim = simulate_with(&gt, w, 5, false).unwrap();
    assert!(sim.parents.is_none());
    let ratios = sim.branching_ratios();
    for (r, a) in ratios.iter().zip(&gt.excitation) {
        let parents = sim.parent_counts.iter().copied().min().unwrap() as f64;
        assert!((r - a).abs() < 5.0 * (a / parents).sqrt(), "{ratios:?}");
    }
}

#[test]
fn multivariate_counts_follow_the_cluster_mean() {
    // stationary mean rates solve (I - A) lambda = mu
    let w = Window::new(15.0, 15.0, 40.0).unwrap();
    let a = [0.3, 0.2, 0.1, 0.4];
    let gt = model(vec![0.05, 0.02], a.to_vec());
    let det = (1.0 - a[0]) * (1.0 - a[3]) - a[1] * a[2];
    let lam = [
        ((1.0 - a[3]) * 0.05 + a[1] * 0.02) / det,
        (a[2] * 0.05 + (1.0 - a[0]) * 0.02) / det,
    ];
    let runs = 20;
    let mut mean = [0.0; 2];
    for s in 0..runs {
        let c = simulate(&gt, w, s).unwrap().counts();
        mean[0] += c[0] as f64 / runs as f64;
        mean[1] += c[1] as f64 / runs as f64;
    }
    for i in 0..2 {
        let expected = lam[i] * w.volume();
        // edge losses only remove events
        assert!(
            mean[i] <= expected * 1.03 && mean[i] >= expected * 0.9,
            "{mean:?} vs {lam:?}"
        );
    }
}

#[test]
fn genealogy_points_to_earlier_events() {
    let w = Window::new(5.0, 5.0, 20.0).unwrap();
    let gt = model(vec![0.2, 0.1], vec![0.3, 0.2, 0.1, 0.4]);
    let sim = simulate_with(&gt, w, 9, true).unwrap();
    let parents = sim.parents.unwrap();
    let mut children = 0;
    for (i, ps) in parents.iter().enumerate() {
        for (n, p) in ps.iter().enumerate() {
            if let Some((j, m)) = *p {
                assert!(sim.catalog.process(j)[m].t < sim.catalog.process(i)[n].t);
                children += 1;
            }
        }
    }
    assert!(children > 0);
}
