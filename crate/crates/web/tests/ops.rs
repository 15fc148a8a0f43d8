use csigan_web::{heatmap, penalty_values, train_tiny, ANTENNAS, TIME};

#[test]
fn heatmap_is_mean_then_sample_and_deterministic() {
    let a = heatmap(1.0, 0.1, 3, 2).unwrap();
    assert_eq!(a.len(), 2 * ANTENNAS * TIME);
    assert_eq!(a, heatmap(1.0, 0.1, 3, 2).unwrap());
    assert_ne!(a, heatmap(1.0, 0.1, 3, 1).unwrap());
    assert!(heatmap(1.0, -1.0, 3, 0).is_err());
}

#[test]
fn penalty_grid_matches_the_closed_form() {
    let (span, steps) = (2.0f32, 5);
    let grid = penalty_values(span, steps, 10.0).unwrap();
    assert_eq!(grid.len(), steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let w1 = -span + 2.0 * span * i as f32 / (steps - 1) as f32;
            let w2 = -span + 2.0 * span * j as f32 / (steps - 1) as f32;
            let norm = (w1 * w1 + w2 * w2 + 1e-12).sqrt();
            let want = 10.0 * (norm - 1.0).powi(2);
            assert!((grid[i * steps + j] - want).abs() <= 1e-4 * (1.0 + want), "({w1}, {w2})");
        }
    }
}

#[test]
fn tiny_training_runs_and_tracks_class_means() {
    let iters = 2000;
    let run = train_tiny(iters, 1).unwrap();
    assert_eq!(run.critic_losses().len(), iters);
    assert!(run.critic_losses().iter().chain(&run.gen_losses()).all(|v| v.is_finite()));
    // each generated class mean sits nearer its own real class mean than the others
    for c in 0..4 {
        let fake = run.fake_mean(c);
        let dist = |k: usize| -> f32 { run.real_mean(k).iter().zip(&fake).map(|(a, b)| (a - b).powi(2)).sum() };
        let own = dist(c);
        assert!((0..4).filter(|&k| k != c).all(|k| dist(k) > own), "class {c}");
    }
    assert_eq!(run.fake_sample(0, 7).len(), ANTENNAS * TIME);
}
