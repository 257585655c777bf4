//! Cross-module runs: curve files through the solvers, solutions into the
//! trigger sums, and the simulation against the deterministic solve.

use std::f64::consts::PI;
use std::io::Write;

use storval::analytic::{greeks, lambda_from_process, time_value_from_triggers, time_value_storage, AnalyticInputs, TriggerSet};
use storval::curves::{load_curve, make_sinusoid, SinusoidSpec, TimeGrid};
use storval::intrinsic::{solve_dp, solve_trigger, write_solution_csv, StorageSpec, Terminal};
use storval::process::PriceProcessSpec;
use storval::rolling::{estimate_time_value, simulate, SimulationConfig};

fn benchmark(n: usize) -> (TimeGrid, SinusoidSpec, StorageSpec) {
    let grid = TimeGrid::new(1.0, n).unwrap();
    let s = SinusoidSpec { f_c: 20.0, d_f: 5.0, n_humps: 4 };
    let spec = StorageSpec::simple(0.0, 2.0, -1.0, 1.0, 1.0, Terminal::Fixed { q_end: 1.0 });
    (grid, s, spec)
}

#[test]
fn dense_curve_file_matches_the_sampled_sinusoid() {
    let (grid, s, spec) = benchmark(200);
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "delivery,price").unwrap();
    for k in 0..500 {
        let t = k as f64 / 499.0;
        writeln!(f, "{t},{}", 20.0 + 5.0 * (4.0 * PI * t).sin()).unwrap();
    }
    f.flush().unwrap();
    let from_file = load_curve(f.path(), &grid).unwrap();
    let exact = make_sinusoid(&s, &grid).unwrap();
    let max_gap = from_file.prices.iter().zip(&exact.prices).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max_gap < 5e-3, "interpolation gap {max_gap}");

    let a = solve_trigger(&from_file, &spec).unwrap();
    let b = solve_trigger(&exact, &spec).unwrap();
    assert!((a.value - b.value).abs() < 1e-2 * b.value);
    assert!((a.segments[0].trigger - 20.0).abs() < 1e-2);

    let dp = solve_dp(&from_file, &spec, 401).unwrap();
    assert!((dp.value - a.value).abs() < 1e-6 * a.value.abs().max(1.0), "{} vs {}", dp.value, a.value);
}

#[test]
fn solution_csv_has_one_row_per_node() {
    let (grid, s, spec) = benchmark(48);
    let curve = make_sinusoid(&s, &grid).unwrap();
    let sol = solve_trigger(&curve, &spec).unwrap();
    let mut buf = Vec::new();
    write_solution_csv(&sol, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,volume,rate,trigger"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect()).collect();
    assert_eq!(rows.len(), 49);
    assert_eq!(rows[0][1], 1.0);
    assert!((rows[48][1] - 1.0).abs() < 1e-9);
}

#[test]
fn trigger_sums_from_the_solution_track_the_sinusoid_set() {
    let (grid, s, spec) = benchmark(730);
    let curve = make_sinusoid(&s, &grid).unwrap();
    let sol = solve_trigger(&curve, &spec).unwrap();
    let from_sol = TriggerSet::from_solution(&sol, &curve, &spec).unwrap();
    assert_eq!(from_sol.level, 20.0);
    assert_eq!(from_sol.times.len(), 4);
    // The last trading node sits before T_e, so the grid solve sees the crossings at 0, 1/4, 1/2, 3/4.
    let times = vec![0.0, 0.25, 0.5, 0.75];
    for (u, t) in from_sol.times.iter().zip(&times) {
        assert!((u - t).abs() < 2.0 * grid.dt(), "trigger time {u} vs {t}");
    }
    let exact = TriggerSet::new(
        20.0,
        2.0,
        times.clone(),
        times.iter().map(|&t| s.slope(1.0, t)).collect(),
        times.iter().map(|&t| s.curvature(1.0, t)).collect(),
    )
    .unwrap();
    for i in 0..4 {
        assert!((from_sol.slopes[i] / exact.slopes[i] - 1.0).abs() < 1e-3);
    }
    let pspec = PriceProcessSpec::lognormal(0.2, 2.0);
    let lam = lambda_from_process(&pspec, |t| s.value(1.0, t));
    let va = time_value_from_triggers(&from_sol, &lam, 1.0, false);
    let vb = time_value_from_triggers(&exact, &lam, 1.0, false);
    assert!((va / vb - 1.0).abs() < 1e-2, "{va} vs {vb}");
    let full = time_value_from_triggers(&TriggerSet::from_sinusoid(&s, 1.0, 2.0).unwrap(), &lam, 1.0, false);
    assert!(full > va);

    let g = greeks(&sol, &curve, &spec, &lam).unwrap();
    assert!(g.gamma >= 0.0 && g.delta.iter().all(|d| d.is_finite()));
}

#[test]
fn frozen_prices_keep_the_intrinsic_value() {
    let (grid, s, spec) = benchmark(96);
    let curve = make_sinusoid(&s, &grid).unwrap();
    let mut cfg = SimulationConfig::new(3, 9, grid);
    cfg.record_ledger = true;
    let sim = simulate(&cfg, &curve, &spec, &PriceProcessSpec::lognormal(0.0, 1.0)).unwrap();
    let p0 = solve_trigger(&curve, &spec).unwrap().value;
    for o in &sim.outcomes {
        assert!((o.p_terminal - p0).abs() < 1e-9 * p0);
        assert!((o.injected - o.released).abs() < 1e-9);
        assert_eq!(o.ledger.as_ref().unwrap().len(), 96);
    }
}

#[test]
fn volatile_runs_conserve_volume_and_stay_near_the_closed_form() {
    let (grid, s, spec) = benchmark(365);
    let curve = make_sinusoid(&s, &grid).unwrap();
    let pspec = PriceProcessSpec::lognormal(0.2236, 2.0);
    let mut cfg = SimulationConfig::new(200, 41, grid);
    cfg.antithetic = true;
    let sim = simulate(&cfg, &curve, &spec, &pspec).unwrap();
    for o in &sim.outcomes {
        assert!((o.injected - o.released).abs() < 1e-9, "path {} leaks volume", o.path_index);
        assert!(o.p_terminal >= o.p0 - 1e-9 * o.p0.abs());
    }
    let inp = AnalyticInputs { dr: 2.0, f_c: 20.0, d_f: 5.0, sigma0: 0.2236, kappa0: 0.0, alpha: 2.0, t_e: 1.0 };
    let v = time_value_storage(&inp).unwrap();
    let ratio = sim.rolling.mean / v;
    assert!((0.6..1.2).contains(&ratio), "ratio {ratio}");

    let again = estimate_time_value(&cfg, &curve, &spec, &pspec).unwrap();
    assert_eq!(again, sim.rolling);
}
