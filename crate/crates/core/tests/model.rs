use gibbspl_core::model::{pair_potential, papangelou, sufficient_stats, tail_stats};
use gibbspl_core::simulate::poisson_sample;
use gibbspl_core::{Configuration, LjParams, ModelSpec, Point, RandomStream, ThetaNatural, Window};
use proptest::prelude::*;

fn lj() -> ModelSpec {
    ModelSpec::lennard_jones(0.01).unwrap()
}

fn moderate() -> ThetaNatural {
    LjParams::new(100.0, 0.1, 0.5).unwrap().to_natural()
}

fn random_cfg(seed: u64, beta: f64, half: f64) -> Configuration {
    poisson_sample(beta, &Window::centered_square(half).unwrap(), &mut RandomStream::new(seed, 0))
}

// Independent brute-force oracle: Σ (σ/r)¹² and Σ (σ/r)⁶ with explicit powers.
fn lj_sums(points: &[Point], u: &Point, range: f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.0);
    for v in points {
        let r = ((v.x - u.x).powi(2) + (v.y - u.y).powi(2)).sqrt();
        if r > 0.0 && r <= range {
            a += r.powf(-12.0);
            b += r.powf(-6.0);
        }
    }
    (a, b)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn stats_match_explicit_sum() {
    let cfg = random_cfg(1, 100.0, 1.0);
    let mut rng = RandomStream::new(2, 0);
    for _ in 0..20 {
        let u = rng.uniform_in(cfg.window());
        for range in [0.3, f64::INFINITY] {
            let t = sufficient_stats(&lj(), &cfg, &u, range, false).unwrap();
            let (a, b) = lj_sums(cfg.points(), &u, range);
            assert_eq!(t[0], 1.0);
            assert!(rel(t[1], a) < 1e-12);
            assert!(rel(t[2], b) < 1e-12);
        }
    }
}

#[test]
fn truncation_error_is_the_tail_sum() {
    let cfg = random_cfg(3, 100.0, 0.5);
    let mut rng = RandomStream::new(4, 0);
    for _ in 0..20 {
        let u = rng.uniform_in(cfg.window());
        let near = sufficient_stats(&lj(), &cfg, &u, 0.3, false).unwrap();
        let all = sufficient_stats(&lj(), &cfg, &u, f64::INFINITY, false).unwrap();
        let far: Vec<Point> = cfg.points().iter().filter(|v| v.dist(&u) > 0.3).copied().collect();
        let (a, b) = lj_sums(&far, &u, f64::INFINITY);
        assert!((all[1] - near[1] - a).abs() <= 1e-9 * all[1]);
        assert!((all[2] - near[2] - b).abs() <= 1e-9 * all[2]);
    }
}

#[test]
fn log_lambda_is_minus_energy() {
    let m = lj();
    let th = moderate();
    let cfg = random_cfg(5, 50.0, 0.5);
    let mut rng = RandomStream::new(6, 0);
    for _ in 0..20 {
        let u = rng.uniform_in(cfg.window());
        let t = sufficient_stats(&m, &cfg, &u, f64::INFINITY, false).unwrap();
        let e: f64 = th.as_slice().iter().zip(&t).map(|(a, b)| a * b).sum();
        let l = papangelou(&m, &th, &cfg, &u, f64::INFINITY).unwrap();
        assert!((l.log_lambda() + e).abs() <= 1e-12 * e.abs().max(1.0));
    }
}

#[test]
fn tail_terms_dominated() {
    // for r ≥ 1 and γ₂ ≥ 2 + ε every G-term is at most the H-term
    let cfg = random_cfg(7, 20.0, 3.0);
    let mut rng = RandomStream::new(8, 0);
    for _ in 0..20 {
        let u = rng.uniform_in(cfg.window());
        for v in cfg.points() {
            let single = Configuration::new(*cfg.window(), vec![*v]).unwrap();
            if v.dist(&u) >= 1.0 {
                let (g, h) = tail_stats(&single, &u, 1.0, 6.0, 0.5);
                assert!(g <= h);
            }
        }
        let (g, h) = tail_stats(&cfg, &u, 1.0, 6.0, 0.5);
        assert!(g <= h);
    }
}

proptest! {
    #[test]
    fn adding_a_point_multiplies_lambda(seed in 0u64..1000, wx in -0.9..0.9f64, wy in -0.9..0.9f64) {
        let m = lj();
        let th = LjParams::new(100.0, 0.1, 0.5).unwrap().to_natural();
        let cfg = random_cfg(seed, 30.0, 1.0);
        let w = Point::new(wx, wy);
        let mut bigger = cfg.clone();
        prop_assume!(bigger.insert(w).is_ok());
        let u = RandomStream::new(seed, 1).uniform_in(cfg.window());
        prop_assume!(u.dist(&w) > 0.05);
        let before = papangelou(&m, &th, &cfg, &u, f64::INFINITY).unwrap();
        let after = papangelou(&m, &th, &bigger, &u, f64::INFINITY).unwrap();
        let phi = pair_potential(&m, &th, &Point::new(w.x - u.x, w.y - u.y)).unwrap();
        let lhs = after.log_lambda();
        let rhs = before.log_lambda() - phi;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn stats_are_additive(seed in 0u64..1000) {
        let m = lj();
        let a = random_cfg(seed, 30.0, 1.0);
        let b = random_cfg(seed + 10_000, 30.0, 1.0);
        let mut joint = a.clone();
        for p in b.points() {
            prop_assume!(joint.insert(*p).is_ok());
        }
        let u = RandomStream::new(seed, 2).uniform_in(a.window());
        let ta = sufficient_stats(&m, &a, &u, f64::INFINITY, false).unwrap();
        let tb = sufficient_stats(&m, &b, &u, f64::INFINITY, false).unwrap();
        let tj = sufficient_stats(&m, &joint, &u, f64::INFINITY, false).unwrap();
        for k in 1..3 {
            prop_assert!(rel(tj[k], ta[k] + tb[k]) < 1e-12);
        }
    }

    #[test]
    fn potential_changes_sign_at_sigma(sigma in 0.02..0.5f64, eps in 0.01..3.0f64, f in 0.3..3.0f64, angle in 0.0..6.28f64) {
        prop_assume!((f - 1.0).abs() > 1e-6);
        let th = LjParams::new(100.0, sigma, eps).unwrap().to_natural();
        let r = f * sigma;
        let v = Point::new(r * angle.cos(), r * angle.sin());
        let phi = pair_potential(&lj(), &th, &v).unwrap();
        if f < 1.0 { prop_assert!(phi > 0.0) } else { prop_assert!(phi < 0.0) }
    }

    #[test]
    fn tail_error_shrinks_with_range(seed in 0u64..500, r in 0.05..1.0f64, k in 1.0..3.0f64) {
        let m = lj();
        let cfg = random_cfg(seed, 40.0, 1.0);
        let u = RandomStream::new(seed, 3).uniform_in(cfg.window());
        let full = sufficient_stats(&m, &cfg, &u, f64::INFINITY, false).unwrap();
        let t1 = sufficient_stats(&m, &cfg, &u, r, false).unwrap();
        let t2 = sufficient_stats(&m, &cfg, &u, r * k, false).unwrap();
        let td = sufficient_stats(&m, &cfg, &u, cfg.window().diameter(), false).unwrap();
        for i in 1..3 {
            prop_assert!((full[i] - t2[i]).abs() <= (full[i] - t1[i]).abs());
            prop_assert_eq!(td[i], full[i]);
        }
    }
}
