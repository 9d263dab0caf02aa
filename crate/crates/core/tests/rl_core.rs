use aentd3::nn::{two_hidden_layers, Activation, MlpNetwork};
use aentd3::rl::{
    clip_action, clipped_gaussian_noise, gaussian_noise, soft_update, ActionBounds, ReplayBuffer,
    Transition, TransitionDims,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIMS: TransitionDims = TransitionDims {
    state: 2,
    own_action: 1,
    partner_action: 1,
};

fn numbered(i: usize) -> Transition {
    Transition {
        state: vec![i as f64, 0.0],
        own_action: vec![0.0],
        partner_estimate: vec![0.0],
        reward: i as f64,
        next_state: vec![i as f64 + 1.0, 0.0],
        terminated: false,
    }
}

#[test]
fn full_buffer_keeps_the_newest_in_order() {
    let mut buf = ReplayBuffer::new(100, DIMS).unwrap();
    for i in 0..350 {
        buf.push(numbered(i)).unwrap();
        assert_eq!(buf.len(), (i + 1).min(100));
    }
    let rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
    let expected: Vec<f64> = (250..350).map(|i| i as f64).collect();
    assert_eq!(rewards, expected);
}

#[test]
fn samples_cover_the_buffer_uniformly() {
    let mut buf = ReplayBuffer::new(20, DIMS).unwrap();
    for i in 0..30 {
        buf.push(numbered(i)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 200_000;
    let mut counts = [0usize; 30];
    for t in buf.sample(n, &mut rng).unwrap() {
        counts[t.reward as usize] += 1;
    }
    assert!(counts[..10].iter().all(|&c| c == 0));
    // Binomial(n, 1/20): standard deviation sqrt(n p (1 - p)).
    let p = 1.0 / 20.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for &c in &counts[10..] {
        assert!((c as f64 - n as f64 * p).abs() < 5.0 * sd, "count {c}");
    }
}

#[test]
fn buffer_rejects_bad_shapes_and_empty_sampling() {
    let mut buf = ReplayBuffer::new(4, DIMS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(buf.sample(1, &mut rng).is_err());
    let mut t = numbered(0);
    t.partner_estimate.clear();
    assert_eq!(buf.push(t).unwrap_err().category(), "shape");
    assert!(ReplayBuffer::new(0, DIMS).is_err());
}

#[test]
fn gaussian_noise_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = gaussian_noise(400_000, 0.01, &mut rng);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Standard errors: sigma / sqrt(n) for the mean, sigma^2 sqrt(2 / n) for the variance.
    assert!(mean.abs() < 4.0 * 0.01 / n.sqrt());
    assert!((var - 1e-4).abs() < 4.0 * 1e-4 * (2.0 / n).sqrt());
}

#[test]
fn clipped_noise_tail_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000_000;
    let v = clipped_gaussian_noise(n, 0.2, 0.5, &mut rng);
    assert!(v.iter().all(|x| x.abs() <= 0.5));
    let at_bound = v.iter().filter(|x| x.abs() == 0.5).count() as f64 / n as f64;
    // P(|N(0, 0.2^2)| > 0.5) = erfc(2.5 / sqrt 2).
    let p = erfc(2.5 / 2f64.sqrt());
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((at_bound - p).abs() < 3.0 * se, "{at_bound} vs {p}");
}

/// Complementary error function by its continued fraction (x > 0).
fn erfc(x: f64) -> f64 {
    let mut f = 0.0;
    for k in (1..200).rev() {
        f = (k as f64 / 2.0) / (x + f);
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
}

#[test]
fn erfc_oracle_sanity() {
    // erfc(1) to 15 digits.
    assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-14);
}

#[test]
fn clipping_respects_bounds() {
    let b = ActionBounds::symmetric(0.04).unwrap();
    assert_eq!(clip_action(&[0.1, -0.1, 0.01], b), vec![0.04, -0.04, 0.01]);
    assert!(ActionBounds::new(0.1, -0.1).is_err());
}

fn net(seed: u64) -> MlpNetwork {
    MlpNetwork::new(&two_hidden_layers(3, 8, 2, Activation::Tanh), 0.04, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap()
}

#[test]
fn soft_update_is_the_affine_blend() {
    let online = net(1);
    for tau in [0.005, 0.3, 1.0] {
        let mut target = net(2);
        let before = target.clone();
        soft_update(&mut target, &online, tau).unwrap();
        for ((t, b), o) in target.params().iter().zip(before.params()).zip(online.params()) {
            assert_eq!(*t, tau * o + (1.0 - tau) * b);
        }
    }
}

#[test]
fn repeated_soft_updates_converge() {
    let online = net(3);
    let mut target = net(4);
    for _ in 0..5000 {
        soft_update(&mut target, &online, 0.005).unwrap();
    }
    let gap = target
        .params()
        .iter()
        .zip(online.params())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // Initial gaps are below 1, shrinking by 0.995 per update.
    assert!(gap < 0.995f64.powi(5000) * 2.0);
}

#[test]
fn soft_update_rejects_mismatched_layouts() {
    let mut a = net(5);
    let b = MlpNetwork::new(&two_hidden_layers(3, 4, 2, Activation::Tanh), 0.04, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    assert!(soft_update(&mut a, &b, 0.1).is_err());
}
