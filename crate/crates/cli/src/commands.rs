use anyhow::{anyhow, bail, Result};
use nlkpp::dde::{self, ConnectionKind, ConnectionOptions, ConnectionRun, PeriodicOptions};
use nlkpp::kernel::LoadedKernel;
use nlkpp::pdesim::{self, SimOptions};
use nlkpp::profiles::toy::{toy_c_tau, TOY_C};
use nlkpp::profiles::{self, SolveOptions, WaveContext};
use nlkpp::regimes::{self, RegionCase};
use nlkpp::spectral::{self, C64};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{num, row, Artifacts};
use crate::config::*;

pub fn run(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<()> {
    let kernel = cfg.kernel.as_ref().map(|k| k.build()).transpose()?;
    match &cfg.command {
        Command::Roots(a) => roots(a, kernel.as_ref(), out),
        Command::Classify(a) => classify(a, need(&kernel)?, out),
        Command::Region(a) => region(a, out),
        Command::Front(a) => front(a, need(&kernel)?, out),
        Command::Toy(_) => toy(out),
        Command::Periodic(a) => periodic(a, out),
        Command::Connect(a) => connect(a, out),
        Command::Semiwave(a) => semiwave(a, out),
        Command::Simulate(a) => simulate(a, need(&kernel)?, out),
        Command::Atlas(a) => atlas(a, out),
    }
}

fn need(k: &Option<LoadedKernel>) -> Result<&LoadedKernel> {
    k.as_ref().ok_or_else(|| anyhow!("this command needs a kernel"))
}

fn required(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| anyhow!("--{name} is required for this function"))
}

fn roots(a: &RootsArgs, k: Option<&LoadedKernel>, out: &mut Artifacts) -> Result<()> {
    match a.function {
        RootFunction::Quad => {
            let c = required(a.c, "c")?;
            let (l, m) = spectral::quad_roots(c)?;
            let res = |z: f64| (z * z - c * z + 1.0).abs();
            out.json(
                "roots.json",
                &json!({
                    "function_id": "quad",
                    "params": {"c": c},
                    "count": 2,
                    "roots": [
                        {"re": l, "im": 0.0, "residual": res(l)},
                        {"re": m, "im": 0.0, "residual": res(m)},
                    ],
                }),
            )
        }
        RootFunction::FangZhao => {
            let c = required(a.c, "c")?;
            let k = k.ok_or_else(|| anyhow!("fang-zhao needs a kernel"))?;
            let r = spectral::fang_zhao_negative_root(c, &k.kernel);
            out.json(
                "roots.json",
                &json!({
                    "function_id": "fang_zhao",
                    "params": {"c": c},
                    "count": usize::from(r.root.is_some()),
                    "roots": r.root.map(|z| vec![json!({
                        "re": z, "im": 0.0,
                        "residual": spectral::fang_zhao_function(c, &k.kernel, z).abs(),
                    })]).unwrap_or_default(),
                    "scanned": r.scanned,
                    "diagnostic": r.diagnostic,
                    "kernel_raw_mass": k.raw_mass,
                }),
            )
        }
        RootFunction::Chi1 => out.json("roots.json", &spectral::chi1_roots(required(a.tau, "tau")?)?),
        RootFunction::EpsAdvanced => {
            let r = spectral::eps_advanced_roots(required(a.tau, "tau")?, required(a.eps, "eps")?, a.strip_lo)?;
            out.json("roots.json", &r)
        }
        RootFunction::ToySteady => {
            let r = spectral::toy_steady_report(
                a.c.unwrap_or(TOY_C),
                a.c_tau.unwrap_or_else(toy_c_tau),
                C64::new(a.near.0, a.near.1),
            )?;
            out.json("roots.json", &r)
        }
    }
}

fn classify(a: &ClassifyArgs, k: &LoadedKernel, out: &mut Artifacts) -> Result<()> {
    let rep = regimes::classify(a.c, &k.kernel, a.mstar)?;
    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        report: &'a regimes::RegimeReport,
        kernel_raw_mass: f64,
    }
    out.json(
        "report.json",
        &Report {
            report: &rep,
            kernel_raw_mass: k.raw_mass,
        },
    )
}

fn region(a: &RegionArgs, out: &mut Artifacts) -> Result<()> {
    let set = regimes::pp_feasible_set(a.aplus, a.aminus, a.pcap, a.n)?;
    out.csv(
        "region.csv",
        &["p", "P", "feasible01"],
        set.points().map(|(p, bp, ok)| vec![num(p), num(bp), u8::from(ok).to_string()]),
    )?;
    out.json(
        "region.json",
        &json!({
            "alpha_plus": a.aplus,
            "alpha_minus": a.aminus,
            "case": RegionCase::classify(a.aplus, a.aminus),
            "extremes": set.extremes,
            "a_star": set.a_star,
            "feasible_points": set.feasible.iter().filter(|b| **b).count(),
        }),
    )
}

fn front(a: &FrontArgs, k: &LoadedKernel, out: &mut Artifacts) -> Result<()> {
    let ctx = WaveContext::new(a.c, k.kernel.clone())?;
    let opts = SolveOptions {
        tol: a.tol,
        ..SolveOptions::default()
    };
    let sol = profiles::solve_front(&ctx, &opts)?;
    let p = &sol.profile;
    let d = p.derivative();
    let r = profiles::residual_values(p, a.c, &k.kernel)?;
    out.csv(
        "profile.csv",
        &["t", "phi", "dphi", "residual"],
        (0..p.len()).map(|i| row(&[p.t(i), p.values[i], d[i], r[i]])),
    )?;
    out.json(
        "front.json",
        &json!({
            "c": a.c,
            "method": sol.method,
            "iterations": sol.iterations,
            "fixed_point_error": sol.fixed_point_error,
            "diagnostics": p.diagnostics,
            "right_tail": p.right_tail,
            "u_bound": ctx.u,
            "lower": sol.lower,
            "kernel_raw_mass": k.raw_mass,
        }),
    )
}

fn toy(out: &mut Artifacts) -> Result<()> {
    let t = profiles::toy_fronts()?;
    let [p1, p2, p3] = &t.profiles;
    out.csv(
        "toy.csv",
        &["t", "phi1", "phi2", "phi3"],
        (0..p1.len()).map(|i| row(&[p1.t(i), p1.values[i], p2.values[i], p3.values[i]])),
    )?;
    out.json("constants.json", &json!({"constants": t.constants, "fronts": t.fronts}))
}

fn periodic(a: &PeriodicArgs, out: &mut Artifacts) -> Result<()> {
    let mut orbit = dde::find_periodic(a.tau, a.eps, &PeriodicOptions::default())?;
    let multipliers = dde::floquet(&mut orbit, a.n_disc)?;
    dde::adjoint_periodic(&mut orbit)?;
    let series = orbit.series();
    let normalization = dde::solvability(&orbit, |t| series.derivative_at(t, 1))?;
    out.csv(
        "orbit.csv",
        &["t", "p", "dp"],
        orbit.mesh.iter().map(|m| row(m)),
    )?;
    out.json(
        "periodic.json",
        &json!({
            "tau": a.tau,
            "eps": a.eps,
            "period": orbit.period,
            "gamma": orbit.gamma,
            "amplitude": orbit.amplitude,
            "hopf_amplitude": orbit.hopf_amplitude,
            "residual": orbit.residual,
            "critical_points": dde::critical_points(&orbit),
            "trivial_multiplier": orbit.trivial_multiplier(),
            "unstable_count": orbit.unstable_count(1e-3),
            "multipliers": multipliers.iter().take(12).collect::<Vec<_>>(),
            "adjoint": {
                "normalization": normalization,
                "mismatch": orbit.adjoint_mismatch,
            },
            "n_disc": a.n_disc,
        }),
    )
}

fn kind_of(k: KindArg) -> ConnectionKind {
    match k {
        KindArg::Het => ConnectionKind::ZeroToOne,
        KindArg::P2p => ConnectionKind::PeriodicToPoint,
    }
}

fn solution_summary(run: &ConnectionRun) -> Vec<serde_json::Value> {
    let base = run.solutions.iter().find(|s| s.eps == 0.0);
    run.solutions
        .iter()
        .map(|s| {
            json!({
                "eps": s.eps,
                "residual": s.residual,
                "refinement_gap": s.refinement_gap,
                "decay_rate": s.decay_rate,
                "expected_rate": s.expected_rate,
                "left_value": s.left_value,
                "right_value": s.right_value,
                "monotone": s.monotone,
                "delta_sign": s.delta_sign,
                "orbit_period": s.orbit_period,
                "settled_at": s.settled_at,
                "distance_to_eps0": base.map(|b| s.distance(b)),
            })
        })
        .collect()
}

fn connect(a: &ConnectArgs, out: &mut Artifacts) -> Result<()> {
    let ladder = a.ladder.clone().unwrap_or_else(|| dde::default_ladder(a.eps));
    let run = dde::heteroclinic(a.tau, &ladder, kind_of(a.kind), &ConnectionOptions::default())?;
    out.csv(
        "trajectory.csv",
        &["eps", "t", "y", "dy"],
        run.solutions
            .iter()
            .flat_map(|s| (0..s.y.len()).map(move |i| row(&[s.eps, s.t(i), s.y[i], s.dy[i]]))),
    )?;
    out.json(
        "connect.json",
        &json!({
            "tau": run.tau,
            "kind": run.kind,
            "eps_ladder": run.eps_ladder,
            "decay_fits": run.decay_fits,
            "c_star_proxy": run.c_star_proxy,
            "solutions": solution_summary(&run),
        }),
    )
}

fn semiwave(a: &SemiwaveArgs, out: &mut Artifacts) -> Result<()> {
    if !(a.c > 0.0) || !a.c.is_finite() {
        bail!("--c must be positive and finite");
    }
    let eps = a.c.powi(-2);
    let ladder = match a.kind {
        KindArg::Het => dde::default_ladder(eps),
        KindArg::P2p => vec![eps],
    };
    let run = dde::heteroclinic(a.tau, &ladder, kind_of(a.kind), &ConnectionOptions::default())?;
    let p = dde::to_wavefront(&run, a.c)?;
    let sol = run.solutions.last().ok_or_else(|| anyhow!("empty connection run"))?;
    let tail = match sol.orbit_period {
        Some(period) => Some(dde::tail_stats(&p, period * a.c)?),
        None => None,
    };
    out.csv(
        "profile.csv",
        &["t", "phi"],
        (0..p.len()).map(|i| row(&[p.t(i), p.values[i]])),
    )?;
    out.json(
        "semiwave.json",
        &json!({
            "tau": a.tau,
            "c": a.c,
            "eps": eps,
            "kind": run.kind,
            "right_tail": p.right_tail,
            "tail": tail,
            "expected_tail_period": sol.orbit_period.map(|w| w * a.c),
            "solutions": solution_summary(&run),
        }),
    )
}

fn simulate(a: &SimulateArgs, k: &LoadedKernel, out: &mut Artifacts) -> Result<()> {
    let d = SimOptions::default();
    let opts = SimOptions {
        length: a.length.unwrap_or(d.length),
        dx: a.dx.unwrap_or(d.dx),
        dt: a.dt,
        init: a.init.unwrap_or(d.init),
        t_end: a.t_end,
        snapshot_every: a.snap,
        level: a.level,
        ..d
    };
    let rep = pdesim::simulate(&k.kernel, &opts)?;
    out.csv(
        "snapshots.csv",
        &["t", "x", "u"],
        rep.snapshots
            .iter()
            .flat_map(|s| s.u.iter().enumerate().map(move |(i, u)| row(&[s.t, i as f64 * rep.dx, *u]))),
    )?;
    out.json(
        "speed.json",
        &json!({
            "speed": rep.speed,
            "speed_error": rep.speed_error,
            "level": opts.level,
            "dx": rep.dx,
            "dt": rep.dt,
            "steps": rep.steps,
            "t_end": rep.t_end,
            "min_value": rep.min_value,
            "max_value": rep.max_value,
            "front": rep.front,
            "kernel_raw_mass": k.raw_mass,
        }),
    )
}

fn grid((lo, hi, n): (f64, f64, usize)) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn atlas(a: &AtlasArgs, out: &mut Artifacts) -> Result<()> {
    let aps = grid(a.aplus_range);
    let ams = grid(a.aminus_range);
    let cells: Vec<(f64, f64)> = aps.iter().flat_map(|&p| ams.iter().map(move |&m| (p, m))).collect();
    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|&(ap, am)| -> Result<Vec<String>> {
            let set = regimes::pp_feasible_set(ap, am, a.pcap, a.n)?;
            let case = RegionCase::classify(ap, am).map_or("none", |c| c.label());
            let opt = |v: Option<f64>| v.map_or(String::new(), num);
            Ok(vec![
                num(ap),
                num(am),
                case.to_string(),
                opt(set.a_star.map(|s| s.0)),
                opt(set.a_star.map(|s| s.1)),
                opt(set.extremes.map(|e| e.0)),
                opt(set.extremes.map(|e| e.1)),
                set.feasible.iter().filter(|b| **b).count().to_string(),
            ])
        })
        .collect::<Result<_>>()?;
    out.csv(
        "atlas.csv",
        &["alpha_plus", "alpha_minus", "case", "a_star_p", "a_star_P", "p_min", "P_max", "feasible_points"],
        rows,
    )
}
