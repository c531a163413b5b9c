use nlkpp::profiles::*;
use nlkpp::regimes::{cine_slacks, mm_inequality_check};
use nlkpp::Kernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::shooting_front;

fn check_bounds(sol: &FrontSolution, ctx: &WaveContext) {
    let p = &sol.profile;
    let d = p.derivative();
    for (i, &v) in p.values.iter().enumerate() {
        assert!(v > 0.0, "phi = {v} at {}", p.t(i));
        assert!(v <= ctx.u.value + 1e-6);
        assert!(d[i] < ctx.lambda * v + 1e-8, "phi' = {} vs {} at {}", d[i], ctx.lambda * v, p.t(i));
    }
}

#[test]
fn local_front_matches_shooting() {
    let c = 3.0;
    let ctx = WaveContext::new(c, Kernel::dirac(0.0)).unwrap();
    let sol = solve_front(&ctx, &SolveOptions::default()).unwrap();
    let p = &sol.profile;
    assert!(p.diagnostics.residual_sup < 1e-6);
    assert!(p.diagnostics.monotone);
    let shift = p.crossing(0.5).unwrap();
    let oracle = shooting_front(c);
    let dist = oracle
        .iter()
        .step_by(10)
        .filter(|(t, _)| t + shift >= p.t0 && t + shift <= p.t_end())
        .map(|(t, v)| (p.eval(t + shift) - v).abs())
        .fold(0.0, f64::max);
    assert!(dist < 1e-3, "sup distance {dist}");
    check_bounds(&sol, &ctx);
}

#[test]
fn advanced_kernel_front_is_monotone() {
    let ctx = WaveContext::new(2.5, Kernel::dirac(-0.5)).unwrap();
    let sol = solve_front(&ctx, &SolveOptions::default()).unwrap();
    assert!(sol.profile.diagnostics.residual_sup < 1e-6);
    assert!(sol.profile.diagnostics.monotone);
    check_bounds(&sol, &ctx);
}

#[test]
fn long_delay_front_oscillates_within_necessary_bounds() {
    let c = 2.5;
    let k = Kernel::dirac(5.0);
    let ctx = WaveContext::new(c, k.clone()).unwrap();
    let sol = solve_front(&ctx, &SolveOptions::default()).unwrap();
    let d = sol.profile.diagnostics;
    assert!(d.residual_sup < 1e-6);
    assert!(!d.monotone);
    let (s1, s2) = cine_slacks(d.p, d.big_p, k.alpha_plus(c).unwrap(), k.alpha_minus(c).unwrap());
    assert!(s1 >= -1e-6 && s2 >= -1e-6, "{s1}, {s2}");
    let m = mm_inequality_check(-d.big_p.ln(), -d.p.ln(), c, &k).unwrap();
    assert!(m.holds_first && m.holds_second, "{m:?}");
    check_bounds(&sol, &ctx);
}

fn random_weight(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 {
    let (a, w, ph) = (rng.random_range(0.0..0.4), rng.random_range(0.1..2.0), rng.random_range(0.0..6.3));
    let base = rng.random_range(0.1..0.5);
    move |t: f64| base + a * (0.5 + 0.5 * (w * t + ph).sin())
}

#[test]
fn operator_preserves_order() {
    let ctx = WaveContext::new(2.5, Kernel::dirac(-0.5)).unwrap();
    let (t0, dt, n) = ctx.default_grid();
    let up = upper_on_grid(&ctx, t0, dt, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let lo_w = random_weight(&mut rng);
        let gap = random_weight(&mut rng);
        let mut lo = up.clone();
        let mut hi = up.clone();
        for i in 0..n {
            let t = up.t(i);
            lo.values[i] = up.values[i] * lo_w(t);
            hi.values[i] = up.values[i] * (lo_w(t) + gap(t)).min(1.0);
        }
        lo.right_tail = RightTail::Constant(*lo.values.last().unwrap());
        hi.right_tail = RightTail::Constant(*hi.values.last().unwrap());
        let (a, b) = (am_apply(&lo, &ctx).unwrap(), am_apply(&hi, &ctx).unwrap());
        let worst = a.values.iter().zip(&b.values).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-12, "order violated by {worst}");
    }
}

#[test]
fn iterates_stay_between_lower_and_upper() {
    let ctx = WaveContext::new(2.5, Kernel::uniform(-1.0, 0.0, 41).unwrap()).unwrap();
    let (lower, _) = default_lower(&ctx).unwrap();
    let up = upper_on_grid(&ctx, lower.t0, lower.dt, lower.len()).unwrap();
    let mut phi = up.clone();
    for _ in 0..30 {
        phi = am_apply(&phi, &ctx).unwrap();
        for i in 0..phi.len() {
            assert!(phi.values[i] <= up.values[i] + 1e-10);
            assert!(phi.values[i] >= lower.values[i] - 1e-10);
        }
    }
}

#[test]
fn constants_zero_one_and_two_beta_are_fixed() {
    let ctx = WaveContext::new(3.0, Kernel::uniform(-1.0, 2.0, 31).unwrap()).unwrap();
    for v in [0.0, 1.0, 2.0 * ctx.beta] {
        let p = Profile::from_fn(-10.0, 0.02, 1001, |_| v, v, RightTail::Constant(v)).unwrap();
        let a = am_apply(&p, &ctx).unwrap();
        let e = a.values.iter().map(|x| (x - v).abs()).fold(0.0, f64::max);
        assert!(e < 1e-10 * (1.0 + v), "{v}: {e}");
    }
}
