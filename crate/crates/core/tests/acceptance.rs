//! Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::f64::consts::PI;
use std::time::Instant;

use nlkpp::dde::{self, ConnectionKind, ConnectionOptions, PeriodicOptions};
use nlkpp::pdesim::{simulate, InitialData, SimOptions};
use nlkpp::profiles::{self, toy_fronts, RightTail, SolveOptions, WaveContext};
use nlkpp::regimes::{a_star, cine_slacks, estm_bound, mm_inequality_check, pp_feasible_set};
use nlkpp::spectral::{self, C64};
use nlkpp::Kernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn spectral_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for c in [2.0, 2.1, 2.5, 3.0, 10.0, 100.0] {
        let (l, m) = spectral::quad_roots(c).map_err(|e| e.to_string())?;
        worst = worst.max((l * m - 1.0).abs()).max((l + m - c).abs());
    }
    ensure(worst <= 1e-12, || format!("identity error {worst:e}"))?;
    let (l, m) = spectral::quad_roots(2.5).map_err(|e| e.to_string())?;
    ensure(l == 0.5 && m == 2.0, || format!("c = 2.5 gives ({l}, {m})"))?;
    Ok(format!("max identity error {worst:e}; c = 2.5 -> ({l}, {m})"))
}

fn root_census() -> Outcome {
    let r1 = spectral::chi1_roots(1.0).map_err(|e| e.to_string())?;
    let omega = common::omega();
    ensure(r1.count == 1 && (r1.roots[0].re - omega).abs() < 1e-6, || {
        format!("tau = 1: count {} root {:?}", r1.count, r1.roots.first())
    })?;
    let r5 = spectral::chi1_roots(5.0).map_err(|e| e.to_string())?;
    let z1 = r5.roots[0].re;
    ensure(r5.count == 3 && z1 > 0.0 && z1 < 1.0 && r5.roots[1].re < z1, || {
        format!("tau = 5: {:?}", r5.roots)
    })?;
    let at_i = spectral::chi1(1.5 * PI, C64::new(0.0, 1.0)).norm();
    ensure(at_i <= 1e-12, || format!("|chi1(i)| = {at_i:e}"))?;
    Ok(format!(
        "z1(1) = {:.9}, tau = 5: count 3, z1 = {z1:.6}, Re z2 = {:.6}; |chi1(i)| = {at_i:.1e}",
        r1.roots[0].re, r5.roots[1].re
    ))
}

fn toy_model() -> Outcome {
    let t = toy_fronts().map_err(|e| e.to_string())?;
    let k = t.constants;
    ensure((k.root_half + 0.5).abs() <= 1e-12, || format!("root {}", k.root_half))?;
    ensure((k.z4 + 4.035).abs() <= 1e-3, || format!("z4 = {}", k.z4))?;
    ensure((k.x0 + 6.2402).abs() <= 1e-3 && (k.y0 - 10.054).abs() <= 1e-3, || {
        format!("complex root {} + {}i", k.x0, k.y0)
    })?;
    // a + b = 1/2 and a/2 − z₄b = 1, by Cramer's rule.
    let det = -k.z4 - 0.5;
    let (a, b) = ((-0.5 * k.z4 - 1.0) / det, (1.0 - 0.25) / det);
    ensure((k.a - a).abs() < 1e-12 && (k.b - b).abs() < 1e-12, || format!("a, b = {}, {}", k.a, k.b))?;
    ensure((a - 0.2878).abs() <= 5e-4 && (b - 0.2122).abs() <= 5e-4, || format!("a, b = {a}, {b}"))?;
    let outside = k.residual_outside.iter().fold(0.0f64, |m, v| m.max(*v));
    ensure(outside <= 1e-10, || format!("outside residual {outside:e}"))?;
    // φ₁ on the window: −0.75e^{−t/2} + 1 − 0.5e^{(t−cτ)/2}.
    let ct = 2.0 * 1.5f64.ln();
    let oracle = (0..=100_000)
        .map(|i| {
            let t = ct * i as f64 / 100_000.0;
            (-0.75 * (-0.5 * t).exp() + 1.0 - 0.5 * (0.5 * (t - ct)).exp()).abs()
        })
        .fold(0.0, f64::max);
    let window = k.residual_window[0];
    ensure((window - oracle).abs() <= 1e-6, || format!("window residual {window} vs {oracle}"))?;
    Ok(format!(
        "z4 = {:.4}, z = {:.4} + {:.4}i, a/b = {:.4}/{:.4}, outside residual {outside:.1e}, window residual {window:.6}",
        k.z4, k.x0, k.y0, k.a, k.b
    ))
}

fn monotone_classification() -> Outcome {
    for h in [0.5, 1.0, 2.0] {
        for c in [2.0, 2.5, 3.0] {
            let r = spectral::fang_zhao_negative_root(c, &Kernel::dirac(-h));
            ensure(r.root.is_some(), || format!("no root for h = {h}, c = {c}"))?;
        }
    }
    // λ² − 2.5λ − e^{−5λ} < 0 on a grid of [−40, 0); below −40 the exponential dominates.
    let h = |l: f64| l * l - 2.5 * l - (-5.0 * l).exp();
    let grid_max = (1..=400_000).map(|i| h(-i as f64 * 1e-4)).fold(f64::NEG_INFINITY, f64::max);
    let solver = spectral::fang_zhao_negative_root(2.5, &Kernel::dirac(5.0));
    ensure(grid_max < 0.0 && solver.root.is_none(), || {
        format!("delay 5: grid max {grid_max}, solver {:?}", solver.root)
    })?;
    Ok(format!("9/9 advanced cases have a root; delay 5 has none (grid max {grid_max:.3})"))
}

fn pp_geometry() -> Outcome {
    let set = pp_feasible_set(0.0, 0.3, 3.0, 400).map_err(|e| e.to_string())?;
    let (p, big_p) = set.extremes.ok_or("empty feasible set")?;
    ensure((p - 1.0).abs() <= 2.5e-3 && (big_p - 1.0).abs() <= 2.5e-3, || format!("extremes ({p}, {big_p})"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = rng.random_range(0.05..0.95);
        let ap = s * rng.random_range(0.0..1.0);
        let (pa, pb) = a_star(ap, s - ap).ok_or("no corner")?;
        let (s1, s2) = cine_slacks(pa, pb, ap, s - ap);
        worst = worst.max(s1.abs()).max(s2.abs());
    }
    ensure(worst <= 1e-12, || format!("corner slack {worst:e}"))?;
    let e = estm_bound(0.1, 0.2).map_err(|e| e.to_string())?;
    ensure((e - 7.70156).abs() <= 1e-4, || format!("bound {e}"))?;
    Ok(format!("collapse to ({p}, {big_p}); corner slack {worst:.1e}; bound {e:.5}"))
}

fn front_solver() -> Outcome {
    let check = |c: f64, k: Kernel| -> Result<profiles::FrontSolution, String> {
        let ctx = WaveContext::new(c, k).map_err(|e| e.to_string())?;
        let sol = profiles::solve_front(&ctx, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let p = &sol.profile;
        let d = p.derivative();
        for (i, &v) in p.values.iter().enumerate() {
            ensure(v > 0.0 && v <= ctx.u.value + 1e-6 && d[i] < ctx.lambda * v + 1e-8, || {
                format!("bounds fail at t = {} (phi {v}, phi' {})", p.t(i), d[i])
            })?;
        }
        ensure(p.diagnostics.residual_sup < 1e-6, || format!("residual {:e}", p.diagnostics.residual_sup))?;
        Ok(sol)
    };
    let local = check(3.0, Kernel::dirac(0.0))?;
    let p = &local.profile;
    let shift = p.crossing(0.5).ok_or("no half crossing")?;
    let dist = common::shooting_front(3.0)
        .iter()
        .filter(|(t, _)| t + shift >= p.t0 && t + shift <= p.t_end())
        .map(|(t, v)| (p.eval(t + shift) - v).abs())
        .fold(0.0, f64::max);
    ensure(dist < 1e-3, || format!("shooting distance {dist}"))?;
    let adv = check(2.5, Kernel::dirac(-0.5))?;
    ensure(adv.profile.diagnostics.monotone, || "advanced front not monotone".into())?;
    let k = Kernel::dirac(5.0);
    let del = check(2.5, k.clone())?;
    let d = del.profile.diagnostics;
    ensure(!d.monotone, || "delay-5 front is monotone".into())?;
    let (s1, s2) = cine_slacks(d.p, d.big_p, 0.0, k.alpha_minus(2.5).map_err(|e| e.to_string())?);
    ensure(s1 >= -1e-6 && s2 >= -1e-6, || format!("slacks {s1}, {s2}"))?;
    let mm = mm_inequality_check(-d.big_p.ln(), -d.p.ln(), 2.5, &k).map_err(|e| e.to_string())?;
    ensure(mm.holds_first && mm.holds_second, || format!("{mm:?}"))?;
    Ok(format!(
        "local: residual {:.1e}, shooting distance {dist:.1e}; advanced: residual {:.1e}; delay 5: residual {:.1e}, (p, P) = ({:.4}, {:.4}), slacks ({s1:.3}, {s2:.3})",
        p.diagnostics.residual_sup, adv.profile.diagnostics.residual_sup, d.residual_sup, d.p, d.big_p
    ))
}

fn operator_properties() -> Outcome {
    let ctx = WaveContext::new(2.5, Kernel::dirac(-0.5)).map_err(|e| e.to_string())?;
    for v in [0.0, 1.0, 2.0 * ctx.beta] {
        let p = profiles::Profile::from_fn(-10.0, 0.02, 1001, |_| v, v, RightTail::Constant(v)).map_err(|e| e.to_string())?;
        let a = profiles::am_apply(&p, &ctx).map_err(|e| e.to_string())?;
        let e = a.values.iter().map(|x| (x - v).abs()).fold(0.0, f64::max);
        ensure(e <= 1e-10 * (1.0 + v), || format!("constant {v} moves by {e:e}"))?;
    }
    let (t0, dt, n) = ctx.default_grid();
    let up = profiles::upper_on_grid(&ctx, t0, dt, n).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (w, ph, base, gap) = (
            rng.random_range(0.1..2.0),
            rng.random_range(0.0..6.3),
            rng.random_range(0.1..0.6),
            rng.random_range(0.0..0.4),
        );
        let mut lo = up.clone();
        let mut hi = up.clone();
        for i in 0..n {
            let s = 0.5 + 0.5 * (w * up.t(i) + ph).sin();
            lo.values[i] = up.values[i] * base * s;
            hi.values[i] = up.values[i] * (base * s + gap).min(1.0);
        }
        lo.right_tail = RightTail::Constant(lo.values[n - 1]);
        hi.right_tail = RightTail::Constant(hi.values[n - 1]);
        let a = profiles::am_apply(&lo, &ctx).map_err(|e| e.to_string())?;
        let b = profiles::am_apply(&hi, &ctx).map_err(|e| e.to_string())?;
        worst = a.values.iter().zip(&b.values).map(|(x, y)| x - y).fold(worst, f64::max);
    }
    ensure(worst <= 1e-12, || format!("order violated by {worst:e}"))?;
    let ctx = WaveContext::new(2.5, Kernel::uniform(-1.0, 0.0, 41).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (lower, _) = profiles::default_lower(&ctx).map_err(|e| e.to_string())?;
    let up = profiles::upper_on_grid(&ctx, lower.t0, lower.dt, lower.len()).map_err(|e| e.to_string())?;
    let mut phi = up.clone();
    let mut margin = f64::INFINITY;
    for _ in 0..30 {
        phi = profiles::am_apply(&phi, &ctx).map_err(|e| e.to_string())?;
        for i in 0..phi.len() {
            margin = margin.min(up.values[i] - phi.values[i]).min(phi.values[i] - lower.values[i]);
        }
    }
    ensure(margin >= -1e-10, || format!("iterates leave the order interval by {margin:e}"))?;
    Ok(format!("fixed constants ok; 20 ordered pairs (max A-difference {worst:.1e}); 30 iterates within bounds"))
}

fn hopf_orbit() -> Outcome {
    let o = dde::find_periodic(1.5 * PI + 0.1, 0.0, &PeriodicOptions::default()).map_err(|e| e.to_string())?;
    let h = dde::find_periodic(1.5 * PI + 0.05, 0.0, &PeriodicOptions::default()).map_err(|e| e.to_string())?;
    let formula = common::hopf_formula(0.1);
    let ratio = o.amplitude / h.amplitude;
    let cp = dde::critical_points(&o);
    ensure((o.period / (2.0 * PI) - 1.0).abs() <= 0.05, || format!("period {}", o.period))?;
    ensure((o.amplitude / formula - 1.0).abs() <= 0.15, || format!("amplitude {} vs {formula}", o.amplitude))?;
    ensure((ratio / 2f64.sqrt() - 1.0).abs() <= 0.1, || format!("amplitude ratio {ratio}"))?;
    ensure(cp == 2, || format!("{cp} critical points"))?;
    Ok(format!(
        "period {:.4} (2pi = {:.4}), amplitude {:.4} vs {formula:.4}, ratio {ratio:.4} vs sqrt 2, {cp} critical points",
        o.period,
        2.0 * PI,
        o.amplitude
    ))
}

fn floquet() -> Outcome {
    let base = dde::find_periodic(1.5 * PI + 0.1, 0.0, &PeriodicOptions::default()).map_err(|e| e.to_string())?;
    let mut coarse = base.clone();
    let mut fine = base;
    let mc = dde::floquet(&mut coarse, 100).map_err(|e| e.to_string())?;
    let mf = dde::floquet(&mut fine, 200).map_err(|e| e.to_string())?;
    let t = fine.trivial_multiplier().ok_or("no trivial multiplier")?;
    ensure((t.re - 1.0).hypot(t.im) <= 1e-2, || format!("trivial multiplier {t:?}"))?;
    ensure(fine.unstable_count(1e-3) == 1 && coarse.unstable_count(1e-3) == 1, || {
        format!("unstable counts {} / {}", coarse.unstable_count(1e-3), fine.unstable_count(1e-3))
    })?;
    let drift = mc.iter().zip(&mf).take(6).map(|(a, b)| (a.modulus - b.modulus).abs()).fold(0.0, f64::max);
    ensure(drift <= 1e-2, || format!("modulus drift {drift}"))?;
    dde::adjoint_periodic(&mut fine).map_err(|e| e.to_string())?;
    let s = fine.series();
    let norm = dde::solvability(&fine, |x| s.derivative_at(x, 1)).map_err(|e| e.to_string())?;
    ensure((norm - 1.0).abs() <= 1e-6, || format!("normalization {norm}"))?;
    Ok(format!(
        "top multiplier {:.4}, trivial {:.8}, drift under doubling {drift:.1e}, normalization {norm:.12}",
        mf[0].modulus, t.re
    ))
}

fn connections() -> Outcome {
    let run = dde::heteroclinic(5.0, &[0.0, 1e-3, 5e-3, 1e-2], ConnectionKind::ZeroToOne, &ConnectionOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(run.solutions.len() == 4, || format!("{} rungs converged", run.solutions.len()))?;
    let mut dists = Vec::new();
    let mut worst_rate: f64 = 0.0;
    for s in &run.solutions {
        ensure(s.residual < 1e-6, || format!("eps {}: residual {:e}", s.eps, s.residual))?;
        let expect = common::leading_root(5.0, s.eps);
        let rate = s.decay_rate.ok_or("no decay fit")?;
        worst_rate = worst_rate.max((rate / expect - 1.0).abs());
        dists.push(s.distance(&run.solutions[0]));
    }
    ensure(worst_rate <= 0.05, || format!("decay rate off by {worst_rate}"))?;
    ensure(dists.windows(2).all(|w| w[1] > w[0]), || format!("distances {dists:?}"))?;
    let tau = 1.5 * PI + 0.1;
    let p2p = dde::heteroclinic(tau, &[0.0, 5e-3], ConnectionKind::PeriodicToPoint, &ConnectionOptions::default())
        .map_err(|e| e.to_string())?;
    for s in &p2p.solutions {
        ensure(s.settled_at.is_some() && (s.right_value - 1.0).abs() < 1e-3, || {
            format!("eps {}: not settled", s.eps)
        })?;
    }
    let c = 5e-3f64.powf(-0.5);
    let profile = dde::to_wavefront(&p2p, c).map_err(|e| e.to_string())?;
    let period = p2p.solutions[1].orbit_period.ok_or("no orbit period")? * c;
    let tail = dde::tail_stats(&profile, period).map_err(|e| e.to_string())?;
    let measured = tail.period_estimate.ok_or("no tail period")?;
    ensure((measured / (2.0 * PI * c) - 1.0).abs() <= 0.1, || format!("tail period {measured}"))?;
    ensure(tail.critical_points == 2 && tail.min < 1.0 && tail.max > 1.0, || format!("{tail:?}"))?;
    Ok(format!(
        "ladder residual max {:.1e}, decay within {:.2}%, distances {:?}; p2p settled, tail period {measured:.2} vs 2pi c = {:.2}, range [{:.3}, {:.3}]",
        run.solutions.iter().map(|s| s.residual).fold(0.0, f64::max),
        100.0 * worst_rate,
        dists.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>(),
        2.0 * PI * c,
        tail.min,
        tail.max
    ))
}

fn pde_cross_check() -> Outcome {
    let run = |dx: f64| {
        let opts = SimOptions {
            dx,
            init: InitialData::Heaviside { at: 20.0 },
            t_end: 40.0,
            ..SimOptions::default()
        };
        simulate(&Kernel::dirac(0.0), &opts).map_err(|e| e.to_string())
    };
    let a = run(0.2)?;
    let b = run(0.1)?;
    let (va, vb) = (a.speed.ok_or("no speed")?, b.speed.ok_or("no speed")?);
    ensure((va - 2.0).abs() <= 0.1, || format!("speed {va}"))?;
    ensure((va / vb - 1.0).abs() <= 0.02, || format!("speeds {va} / {vb}"))?;
    let min = a.min_value.min(b.min_value);
    ensure(min >= -1e-12, || format!("min u {min:e}"))?;
    Ok(format!("speed {va:.4} (dx 0.2), {vb:.4} (dx 0.1); min u {min:e}"))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 11] = [
        ("spectral identities", 1.0, spectral_identities),
        ("chi1 root census", 5.0, root_census),
        ("toy model", 5.0, toy_model),
        ("monotone-front classification", 2.0, monotone_classification),
        ("(p, P) geometry", 10.0, pp_geometry),
        ("front solver", 60.0, front_solver),
        ("A_m operator properties", 30.0, operator_properties),
        ("Hopf periodic orbit", 60.0, hopf_orbit),
        ("Floquet spectrum", 120.0, floquet),
        ("connections", 300.0, connections),
        ("PDE cross-check", 60.0, pde_cross_check),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        let out = out.and_then(|d| {
            if secs <= *budget {
                Ok(d)
            } else {
                Err(format!("{d}; over the {budget} s budget"))
            }
        });
        match out {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.2} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
