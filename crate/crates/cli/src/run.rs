use std::io::Write;

use anyhow::{bail, Context, Result};
use asep_core::coupling::{
    cutoff_experiment, localization_experiment, truncation_invariance, write_passage_csv, CutoffConfig,
    LocalizationConfig, TruncationConfig,
};
use asep_core::dynamics::{
    read_event_log, replica_initial, run_replicas, simulate, write_event_log, write_snapshot_csv, Chain,
    ObservationPlan,
};
use asep_core::exact::{
    build_generator, entropy_production_experiment, kv_second_moment_exact, kv_second_moment_mc,
    localized_semigroup_distance, one_block_gap, psi_density_constant, state_vector, GeneratorKind,
};
use asep_core::harness::{
    martingale_series, mean_profile_experiment, rterm_series, scaling_suite, write_scaling_csv,
    MartingaleConfig, RTermConfig, ScalingConfig, RTERM_NAMES,
};
use asep_core::lattice::{f_left, f_right, BoundaryRates, Geometry, LocalFunction, SpinConfiguration, SystemParams};
use asep_core::rng::{replica_rng, replica_substream};
use asep_core::robin::{integrate_she, verify_kernel_bounds, KernelBoundsConfig, RobinLaplacian};
use asep_core::stats::{ks_two_sample, mean};
use serde::Serialize;

use crate::config::{ExperimentConfig, KvMode, NamedObservable, Observable};
use crate::output::RunOutput;

pub fn dispatch(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    use crate::config::Kind::*;
    match cfg.kind.expect("kind resolved before dispatch") {
        Simulate => run_simulate(cfg, out),
        MeanProfile => run_mean_profile(cfg, out),
        Martingale => run_martingale(cfg, out),
        Rterms => run_rterms(cfg, out),
        KernelBounds => run_kernel_bounds(cfg, out),
        SheCompare => run_she_compare(cfg, out),
        Kv => run_kv(cfg, out),
        Semigroup => run_semigroup(cfg, out),
        Entropy => run_entropy(cfg, out),
        OneBlock => run_one_block(cfg, out),
        Localization => run_localization(cfg, out),
        Cutoff => run_cutoff(cfg, out),
        BoundaryParams => run_boundary_params(cfg, out),
    }
}

/// Replica index, snapshot CSV rows, optional binary event log.
type ReplicaFiles = (u64, Vec<u8>, Option<Vec<u8>>);

type ObservableFn = Box<dyn Fn(&[i8]) -> f64 + Sync>;

fn run_simulate(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let params = cfg.params()?;
    let initial = cfg.initial_data()?;
    if cfg.replicas == 0 {
        return Ok(());
    }
    let plan = ObservationPlan {
        times: cfg.observation_times(),
        record_events: cfg.record_events,
    };
    let len = params.sites();
    let first = cfg.first_replica;
    let indices: Vec<u64> = (first..first + cfg.replicas as u64).collect();
    let part = |r: u64| format!("replicas/replica_{r:06}.csv");
    // Per-replica files already on disk are kept, so an interrupted run can
    // be resumed with the same configuration.
    let todo: Vec<u64> = indices.iter().copied().filter(|&r| !out.path(&part(r)).exists()).collect();
    let results: Vec<Result<ReplicaFiles>> = run_replicas(cfg.seed, todo.len(), |k, _| {
        let r = todo[k as usize];
        let mut rng = replica_rng(cfg.seed, r);
        let eta = replica_initial(&initial, len, cfg.seed, r)?;
        let traj = simulate(&params, &eta, cfg.horizon, &plan, &mut rng)?;
        let mut csv = Vec::new();
        write_snapshot_csv(&mut csv, &params, &[(r, traj.snapshots)], false)?;
        let events = if cfg.record_events {
            let mut buf = Vec::new();
            write_event_log(&mut buf, &traj.events)?;
            Some(buf)
        } else {
            None
        };
        Ok((r, csv, events))
    });
    for res in results {
        let (r, csv, events) = res?;
        std::fs::create_dir_all(out.path("replicas"))?;
        std::fs::write(out.path(&part(r)), csv)?;
        if let Some(bytes) = events {
            let name = format!("replicas/events_{r:06}.bin");
            debug_assert!(read_event_log(&bytes).is_ok());
            std::fs::write(out.path(&name), bytes)?;
        }
    }
    let mut w = out.writer("snapshots.csv")?;
    writeln!(w, "replica,t,x,eta,h,Z")?;
    for &r in &indices {
        let name = part(r);
        let bytes = std::fs::read(out.path(&name)).with_context(|| format!("missing {name}"))?;
        w.write_all(&bytes)?;
        out.record(&name);
        if cfg.record_events {
            out.record(&format!("replicas/events_{r:06}.bin"));
        }
    }
    w.flush()?;
    out.plot(
        "plot_snapshots.gp",
        "snapshots.csv",
        "set xlabel 'x'\nset ylabel 'h'\nplot data using 3:5 with dots title 'height profiles'\n",
    )
}

fn run_mean_profile(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let params = cfg.params()?;
    if cfg.replicas == 0 {
        return Ok(());
    }
    let rep = mean_profile_experiment(&params, &cfg.initial_data()?, cfg.horizon, cfg.replicas, cfg.seed)?;
    let mut w = out.writer("mean_profile.csv")?;
    writeln!(w, "x,mean_Z,sem_Z,predicted_Z")?;
    for x in 0..rep.mean.len() {
        writeln!(w, "{x},{},{},{}", rep.mean[x], rep.sem[x], rep.predicted[x])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Summary {
        n: usize,
        time: f64,
        replicas: usize,
        max_relative_deviation: f64,
        max_relative_sem: f64,
    }
    out.json(
        "summary.json",
        &Summary {
            n: rep.n,
            time: rep.time,
            replicas: rep.replicas,
            max_relative_deviation: rep.max_relative_deviation,
            max_relative_sem: rep.max_relative_sem,
        },
    )?;
    println!("max relative deviation {:.5}", rep.max_relative_deviation);
    out.plot(
        "plot_mean_profile.gp",
        "mean_profile.csv",
        "set xlabel 'x'\nplot data using 1:2:3 with yerrorbars, data using 1:4 with lines\n",
    )
}

fn run_martingale(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let params = cfg.params()?;
    if cfg.replicas == 0 {
        return Ok(());
    }
    let rep = martingale_series(&MartingaleConfig {
        params,
        initial: cfg.initial_data()?,
        variant: cfg.variant,
        horizon: cfg.horizon,
        grid_points: cfg.observations,
        replicas: cfg.replicas,
        seed: cfg.seed,
    })?;
    let mut w = out.writer("martingale.csv")?;
    writeln!(w, "t,mean_M,sem_M,mean_M2_minus_bracket,sem_M2_minus_bracket")?;
    for (i, t) in rep.times.iter().enumerate() {
        let (m, s) = rep.martingale[i];
        let (q, qs) = rep.compensated_square[i];
        writeln!(w, "{t},{m},{s},{q},{qs}")?;
    }
    w.flush()?;
    println!("max |mean|/SEM {:.4}", rep.max_z_score());
    out.json("summary.json", &serde_json::json!({ "max_z_score": rep.max_z_score(), "replicas": rep.replicas }))?;
    out.plot(
        "plot_martingale.gp",
        "martingale.csv",
        "set xlabel 't'\nplot data using 1:2:3 with yerrorbars, data using 1:4:5 with yerrorbars\n",
    )
}

fn run_rterms(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    if cfg.replicas == 0 {
        return Ok(());
    }
    if let Some(grid) = &cfg.n_grid {
        let (rows, summary) = scaling_suite(&ScalingConfig {
            n_grid: grid.clone(),
            rates: cfg.rates()?,
            initial: cfg.initial_data()?,
            horizon: cfg.horizon,
            grid_points: cfg.observations,
            replicas: cfg.replicas,
            seed: cfg.seed,
        })?;
        write_scaling_csv(out.writer("scaling.csv")?, &rows)?;
        out.json("summary.json", &summary)?;
        return out.plot(
            "plot_scaling.gp",
            "scaling.csv",
            "set logscale xy\nset xlabel 'N'\nplot data using 1:(strcol(2) eq 'median_sup_R1' ? $4 : 1/0) with linespoints title 'R1'\n",
        );
    }
    let rep = rterm_series(&RTermConfig {
        params: cfg.params()?,
        initial: cfg.initial_data()?,
        variant: cfg.variant,
        horizon: cfg.horizon,
        grid_points: cfg.observations,
        replicas: cfg.replicas,
        seed: cfg.seed,
    })?;
    let mut w = out.writer("rterms.csv")?;
    writeln!(w, "t,term,mean,sem")?;
    for (k, name) in RTERM_NAMES.iter().enumerate() {
        for (i, t) in rep.times.iter().enumerate() {
            let (m, s) = rep.mean_series[k][i];
            writeln!(w, "{t},{name},{m},{s}")?;
        }
    }
    w.flush()?;
    out.json("summary.json", &rep_summary(&rep))?;
    out.plot(
        "plot_rterms.gp",
        "rterms.csv",
        "set xlabel 't'\nplot data using 1:(strcol(2) eq 'R1' ? $3 : 1/0) with linespoints title 'R1'\n",
    )
}

fn rep_summary(rep: &asep_core::harness::RTermReport) -> serde_json::Value {
    let medians: serde_json::Map<String, serde_json::Value> = RTERM_NAMES
        .iter()
        .zip(&rep.median_sup)
        .map(|(k, v)| ((*k).to_string(), serde_json::json!(v)))
        .collect();
    serde_json::json!({
        "n": rep.n,
        "replicas": rep.replicas,
        "median_sup": medians,
        "envelope_violations": rep.envelope_violations,
        "max_closure_error": rep.max_closure_error,
    })
}

fn run_kernel_bounds(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut kc = KernelBoundsConfig::default();
    if let Some(g) = &cfg.n_grid {
        kc.n_grid.clone_from(g);
    }
    if let Some(t) = &cfg.times {
        kc.times.clone_from(t);
    }
    if let Some(r) = &cfg.spatial_ratios {
        kc.spatial_ratios.clone_from(r);
    }
    if let Some(r) = &cfg.temporal_ratios {
        kc.temporal_ratios.clone_from(r);
    }
    kc.a = cfg.a.unwrap_or(kc.a);
    kc.b = cfg.b.unwrap_or(kc.b);
    let rep = verify_kernel_bounds(&kc)?;
    let mut w = out.writer("kernel_samples.csv")?;
    writeln!(w, "statistic,N,t,gap,value")?;
    for s in &rep.samples {
        writeln!(w, "{},{},{},{},{}", s.statistic, s.n, s.elapsed, s.gap, s.value)?;
    }
    w.flush()?;
    out.json(
        "kernel_bounds.json",
        &serde_json::json!({
            "config": kc,
            "sup_exponents": rep.sup_exponents,
            "spatial_exponents": rep.spatial_exponents,
            "temporal_exponents": rep.temporal_exponents,
            "sup_constant": rep.sup_constant,
            "spatial_constant": rep.spatial_constant,
            "temporal_constant": rep.temporal_constant,
        }),
    )?;
    let lap = RobinLaplacian::interval(cfg.n, kc.a, kc.b)?;
    let h = asep_core::robin::heat_kernel(&lap, kc.times[0])?;
    h.write_csv(out.writer("heat_kernel.csv")?)?;
    println!(
        "sup exponents {:?}, spatial {:?}, temporal {:?}",
        rep.sup_exponents, rep.spatial_exponents, rep.temporal_exponents
    );
    out.plot(
        "plot_kernel.gp",
        "kernel_samples.csv",
        "set logscale xy\nset xlabel 't'\nplot data using 3:(strcol(1) eq 'sup' ? $5 : 1/0) title 'sup H'\n",
    )
}

fn run_she_compare(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let params = cfg.params()?;
    if params.geometry != Geometry::Interval {
        bail!("field `geometry`: she-compare runs on the interval");
    }
    if cfg.replicas == 0 {
        return Ok(());
    }
    let n = params.n;
    let times = cfg.observation_times();
    let sites: Vec<usize> = [0, n / 4, n / 2, 3 * n / 4, n].to_vec();
    let initial = cfg.initial_data()?;
    let mc: Vec<Result<Vec<Vec<f64>>>> = run_replicas(cfg.seed, cfg.replicas, |r, rng| {
        let eta = replica_initial(&initial, n, cfg.seed, r)?;
        let mut chain = Chain::new(params.clone(), &eta)?;
        let mut rows = Vec::new();
        for &t in &times {
            chain.advance_to(t, rng, &mut ());
            rows.push(sites.iter().map(|&x| chain.log_z(x).exp()).collect());
        }
        Ok(rows)
    });
    let mc: Vec<Vec<Vec<f64>>> = mc.into_iter().collect::<Result<_>>()?;
    let z0: Vec<f64> = {
        let eta = replica_initial(&initial, n, cfg.seed, 0)?;
        Chain::new(params.clone(), &eta)?.field().z()
    };
    let lap = RobinLaplacian::interval(n, params.a, params.b)?;
    let steps: Vec<usize> = times.iter().map(|t| (t / cfg.dt).round().max(1.0) as usize).collect();
    let she: Vec<Result<Vec<Vec<f64>>>> = run_replicas(cfg.seed, cfg.replicas, |r, _| {
        let mut rng = replica_substream(cfg.seed, r, 7);
        let path = integrate_she(&lap, &z0, cfg.dt, *steps.last().unwrap(), &mut rng)?;
        Ok(steps.iter().map(|&k| sites.iter().map(|&x| path[k - 1][x]).collect()).collect())
    });
    let she: Vec<Vec<Vec<f64>>> = she.into_iter().collect::<Result<_>>()?;
    let tests = times.len() * sites.len();
    let threshold = 0.01 / tests as f64;
    let mut w = out.writer("she_compare.csv")?;
    writeln!(w, "t,x,ks_statistic,p_value,bonferroni_pass,mean_Z_lattice,mean_Z_she")?;
    let mut passes = 0;
    for (i, t) in times.iter().enumerate() {
        for (j, x) in sites.iter().enumerate() {
            let a: Vec<f64> = mc.iter().map(|r| r[i][j]).collect();
            let b: Vec<f64> = she.iter().map(|r| r[i][j]).collect();
            let (d, p) = ks_two_sample(&a, &b);
            let ok = p > threshold;
            passes += usize::from(ok);
            writeln!(w, "{t},{x},{d},{p},{ok},{},{}", mean(&a), mean(&b))?;
        }
    }
    w.flush()?;
    println!("one-point KS: {passes}/{tests} above the Bonferroni threshold (reported, not gating)");
    out.plot(
        "plot_she_compare.gp",
        "she_compare.csv",
        "set xlabel 't'\nplot data using 1:4 title 'KS p-value'\n",
    )
}

fn kv_observable(cfg: &ExperimentConfig, params: &SystemParams) -> Result<ObservableFn> {
    let obs = cfg.observable.clone().unwrap_or(Observable::Named(NamedObservable::FLeft));
    Ok(match obs {
        Observable::Named(NamedObservable::FLeft) => {
            let p = params.clone();
            Box::new(move |s: &[i8]| f_left(&p, s))
        }
        Observable::Named(NamedObservable::SpinPair) => Box::new(|s: &[i8]| f64::from(s[0] * s[1])),
        Observable::Table(t) => {
            if t.product_expectation(0.0).abs() > 1e-12 {
                bail!("field `observable`: the table must have mean zero under the uniform measure");
            }
            Box::new(move |s: &[i8]| t.eval(s))
        }
    })
}

fn left_only(rates: &BoundaryRates) -> BoundaryRates {
    let mut r = BoundaryRates::zero();
    r.alpha = rates.alpha.clone();
    r.gamma = rates.gamma.clone();
    r
}

fn run_kv(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let rates = left_only(&cfg.rates()?);
    let mode = cfg.kv_mode.unwrap_or(KvMode::Exact);
    let mut w = out.writer("kv.csv")?;
    writeln!(w, "N,tau,exact,mc_mean,mc_sem,mc_replicas")?;
    for n in cfg.n_grid() {
        let params = SystemParams::new(n, Geometry::LeftWindow { len: cfg.sites }, rates.clone())?;
        let d = kv_observable(cfg, &params)?;
        let tau = cfg.tau.unwrap_or((n as f64).powf(-2.0 + cfg.rho));
        let exact = if mode == KvMode::Mc {
            f64::NAN
        } else {
            let gen = build_generator(n, &rates, cfg.sites, GeneratorKind::LocalizedLeft)?;
            kv_second_moment_exact(&gen, &state_vector(cfg.sites, &|s| d(s)), tau)?
        };
        let (m, s, k) = if mode == KvMode::Exact || cfg.replicas == 0 {
            (f64::NAN, f64::NAN, 0)
        } else {
            let est = kv_second_moment_mc(n, &rates, cfg.sites, &|s| d(s), tau, cfg.replicas, cfg.seed)?;
            (est.mean, est.sem, est.replicas)
        };
        writeln!(w, "{n},{tau},{exact},{m},{s},{k}")?;
    }
    w.flush()?;
    out.plot(
        "plot_kv.gp",
        "kv.csv",
        "set logscale xy\nset xlabel 'N'\nplot data using 1:3 with linespoints title 'exact'\n",
    )
}

fn run_semigroup(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let rates = left_only(&cfg.rates()?);
    let mut w = out.writer("semigroup.csv")?;
    writeln!(w, "N,s,distance")?;
    for n in cfg.n_grid() {
        let s = cfg.tau.unwrap_or((n as f64).powf(-2.0 + cfg.rho));
        writeln!(w, "{n},{s},{}", localized_semigroup_distance(n, &rates, cfg.sites, s)?)?;
    }
    w.flush()?;
    out.plot(
        "plot_semigroup.gp",
        "semigroup.csv",
        "set logscale xy\nset xlabel 'N'\nplot data using 1:3 with linespoints\n",
    )
}

fn run_entropy(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let rates = cfg.rates()?;
    let grid = cfg.n_grid.clone().unwrap_or_else(|| vec![6, 8, 10, 12]);
    let candidates = |n: usize| {
        let half = SpinConfiguration::new((0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect())
            .expect("valid spins");
        vec![
            SpinConfiguration::all_plus(n).to_index(),
            SpinConfiguration::all_minus(n).to_index(),
            SpinConfiguration::alternating(n).to_index(),
            half.to_index(),
        ]
    };
    let rows = entropy_production_experiment(&grid, &rates, cfg.horizon, &candidates)?;
    let mut w = out.writer("entropy.csv")?;
    writeln!(w, "N,initial_state,initial_entropy,dirichlet_integral,final_entropy,bound_shape,ratio")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n, r.initial_state, r.initial_entropy, r.dirichlet_integral, r.final_entropy, r.bound_shape, r.ratio
        )?;
    }
    w.flush()?;
    out.plot(
        "plot_entropy.gp",
        "entropy.csv",
        "set xlabel 'N'\nplot data using 1:7 title 'normalized Dirichlet integral'\n",
    )
}

fn run_one_block(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let a = match &cfg.function {
        Some(f) => f.clone(),
        None => LocalFunction::from_fn(2, asep_core::lattice::Anchor::Left, |s| f64::from(s[0] * s[1]))?,
    };
    let mut rng = replica_rng(cfg.seed, 0);
    let mut w = out.writer("one_block.csv")?;
    writeln!(w, "block,ell,gap")?;
    let mut ell = 1;
    while ell <= cfg.ell {
        let gap = one_block_gap(&a, cfg.block, ell, cfg.samples, &mut rng)?;
        writeln!(w, "{},{ell},{gap}", cfg.block)?;
        ell *= 2;
    }
    w.flush()?;
    let blocks: Vec<usize> = (a.window_size()..=cfg.block.max(a.window_size())).collect();
    let c = psi_density_constant(&a, &blocks)?;
    out.json("summary.json", &serde_json::json!({ "psi_density_constant": c, "blocks": blocks }))?;
    out.plot(
        "plot_one_block.gp",
        "one_block.csv",
        "set logscale xy\nset xlabel 'ell'\nplot data using 2:3 with linespoints\n",
    )
}

fn run_localization(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let rates = cfg.rates()?;
    let mut rows = Vec::new();
    for n in cfg.n_grid() {
        let geometry = cfg.geometry_for(n)?;
        for &kappa in &cfg.kappa {
            rows.push(localization_experiment(&LocalizationConfig {
                n,
                rates: rates.clone(),
                geometry,
                window: cfg.window,
                kappa,
                tau: cfg.tau.unwrap_or((n as f64).powf(-2.0 + cfg.rho)),
                initial: cfg.initial_data()?,
                replicas: cfg.replicas,
                seed: cfg.seed,
                stop_after_hits: cfg.stop_after_hits,
            })?);
        }
    }
    write_passage_csv(out.writer("passage.csv")?, &rows)?;
    for r in &rows {
        println!("N={} kappa={} p_hat={} wilson_upper={}", r.n, r.kappa_or_l, r.p_hat, r.wilson_upper);
    }
    Ok(())
}

fn run_cutoff(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let rates = cfg.rates()?;
    let mut rows = Vec::new();
    for n in cfg.n_grid() {
        rows.push(cutoff_experiment(&CutoffConfig {
            n,
            rates: rates.clone(),
            l_short: cfg.l_short.unwrap_or(4 * n),
            l_long: cfg.l_long.unwrap_or(8 * n),
            window: cfg.window,
            horizon: cfg.horizon,
            initial: cfg.initial_data()?,
            replicas: cfg.replicas,
            seed: cfg.seed,
            stop_after_hits: cfg.stop_after_hits,
        })?);
    }
    write_passage_csv(out.writer("passage.csv")?, &rows)?;
    for r in &rows {
        println!("N={} L={} p_hat={} wilson_upper={}", r.n, r.kappa_or_l, r.p_hat, r.wilson_upper);
    }
    if cfg.replicas == 0 {
        return Ok(());
    }
    let mut reports = Vec::new();
    for n in cfg.n_grid() {
        let rep = truncation_invariance(&TruncationConfig {
            n,
            rates: rates.clone(),
            l_short: cfg.l_short.unwrap_or(4 * n),
            l_long: cfg.l_long.unwrap_or(8 * n),
            site: cfg.window.unwrap_or(n),
            horizon: cfg.horizon,
            initial: cfg.initial_data()?,
            replicas: cfg.replicas,
            seed: cfg.seed,
        })?;
        println!("N={n} truncation KS statistic {} p-value {}", rep.ks_statistic, rep.p_value);
        reports.push(serde_json::json!({
            "n": n,
            "ks_statistic": rep.ks_statistic,
            "p_value": rep.p_value,
            "mean_short": rep.mean_short,
            "mean_long": rep.mean_long,
            "replicas": rep.replicas,
        }));
    }
    out.json("truncation.json", &reports)
}

fn run_boundary_params(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let rates = cfg.rates()?;
    let params = cfg.params()?;
    let m = rates.left_window().max(rates.right_window()).max(1);
    let (mut el, mut er) = (0.0, 0.0);
    for i in 0..1usize << m {
        let eta = SpinConfiguration::from_index(i, m);
        el += f_left(&params, eta.spins());
        er += f_right(&params, eta.spins());
    }
    let scale = (1usize << m) as f64;
    let report = serde_json::json!({
        "A": rates.param_a(),
        "B": rates.param_b(),
        "A_printed": rates.param_a_printed(),
        "B_printed": rates.param_b_printed(),
        "mean_f_left": el / scale,
        "mean_f_right": er / scale,
    });
    println!("A={}", rates.param_a());
    println!("B={}", rates.param_b());
    println!("A (printed form)={}", rates.param_a_printed());
    println!("B (printed form)={}", rates.param_b_printed());
    out.json("boundary_params.json", &report)
}
