//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risloc::channel::ChannelModel;
use risloc::crb::{fim_eta, jacobian};
use risloc::estimator::{estimate_channel_params, PathOrder};
use risloc::fusion::{block_diagonal, exip_minimize, locate, Weighting};
use risloc::harness::multibs::{run_multi_bs, MultiBsSetup};
use risloc::harness::sweep::run_point;
use risloc::harness::{
    run_sweep, run_trial, write_csv, write_jsonl, ExperimentConfig, Method, OperatingPoint, PhaseChoice, Profile,
    Sweep, SweepRow, SweepValue, SweepVariable,
};
use risloc::risdesign::{random_phases, region_gain, AngularRegion};
use risloc::scene::{direction_and_angles, forward_map, ChannelParams, PositionParams, RisLink, Scene};

type Check = Result<String, String>;

fn desk() -> ExperimentConfig {
    ExperimentConfig::for_profile(Profile::Desk)
}

fn noiseless(mut c: ExperimentConfig) -> ExperimentConfig {
    c.snr_db = f64::INFINITY;
    c.fading = false;
    c.radio.rician_bu = f64::INFINITY;
    c.radio.rician_ru = f64::INFINITY;
    c
}

fn sweep_of(
    mut c: ExperimentConfig,
    variable: SweepVariable,
    values: Vec<SweepValue>,
    methods: Vec<Method>,
) -> ExperimentConfig {
    c.sweep = Sweep { variable, values };
    c.methods = methods;
    c
}

fn num(x: f64) -> SweepValue {
    SweepValue::Number(x)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn row(rows: &[SweepRow], method: Method) -> Result<&SweepRow, String> {
    rows.iter()
        .find(|r| r.method == method)
        .ok_or_else(|| format!("no row for {method}"))
}

/// Random admissible desk scenes: valid config and path energies at least 1 dB apart.
fn random_scenes(count: usize, seed: u64) -> Vec<ExperimentConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let mut c = noiseless(desk());
        let w = c.radio.bandwidth;
        c.scene.ue = [
            rng.gen_range(35.0..75.0),
            rng.gen_range(-15.0..30.0),
            rng.gen_range(-35.0..5.0),
        ];
        c.scene.clock_bias_ns = rng.gen_range(-8.0..8.0) / w * 1e9;
        c.scene.rotation_deg = [
            rng.gen_range(-15.0..15.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        ];
        if c.validate_point().is_err() {
            continue;
        }
        let Ok(point) = OperatingPoint::new(&c, 0) else {
            continue;
        };
        let mut e: Vec<f64> = point.nominal_eta.ris.iter().map(|p| p.gain.norm_sqr()).collect();
        e.push(point.nominal_eta.los.gain.norm_sqr());
        e.sort_by(|a, b| b.total_cmp(a));
        if e.windows(2).all(|p| p[0] >= p[1] * 10f64.powf(0.1)) {
            out.push(c);
        }
    }
    out
}

fn residual_energy(model: &ChannelModel, a: &[nalgebra::DMatrix<Complex64>], eta: &[f64]) -> f64 {
    let b = model.noiseless(&ChannelParams::from_slice(eta).unwrap()).unwrap();
    a.iter().zip(&b).map(|(x, y)| (x - y).norm_squared()).sum()
}

fn fim_matches_finite_differences() -> Check {
    let point = OperatingPoint::new(&desk(), 1).map_err(err)?;
    let eta = point.nominal_eta.to_vector();
    let sigma2 = point.noise_variance;
    let model = &point.model;
    let mu = model.noiseless(&point.nominal_eta).map_err(err)?;
    let w = point.config.radio.bandwidth;
    let gain = point.nominal_eta.los.gain.norm();
    // steps per coordinate: gains, delays and cosines live on very different scales
    let n = eta.len();
    let step: Vec<f64> = (0..n)
        .map(|i| {
            let local = if i < 7 { i } else { (i - 7) % 5 };
            let base = match local {
                0 | 1 => {
                    if i < 7 {
                        gain
                    } else {
                        point.nominal_eta.ris[(i - 7) / 5].gain.norm()
                    }
                }
                2 => 1.0 / w,
                _ => 1.0,
            };
            1e-4 * base
        })
        .collect();
    let f = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut e = eta.clone();
        e[di] += si * step[di];
        e[dj] += sj * step[dj];
        residual_energy(model, &mu, e.as_slice()) / sigma2
    };
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let h = (f(i, 1.0, j, 1.0) - f(i, 1.0, j, -1.0) - f(i, -1.0, j, 1.0) + f(i, -1.0, j, -1.0))
                / (4.0 * step[i] * step[j]);
            hess[(i, j)] = h;
            hess[(j, i)] = h;
        }
    }
    let fim = fim_eta(model, &point.nominal_eta, sigma2).map_err(err)?;
    // compare in step-scaled coordinates so every entry carries similar weight
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(step));
    let a = &scale * &fim * &scale;
    let b = &scale * &hess * &scale;
    let rel = (&a - &b).norm() / b.norm();
    if rel <= 1e-4 {
        Ok(format!("relative Frobenius error {rel:.2e}"))
    } else {
        Err(format!("relative Frobenius error {rel:.2e} > 1e-4"))
    }
}

fn jacobian_matches_central_differences() -> Check {
    let scene = desk().scene();
    let xi = scene.position_params(
        Complex64::new(3e-6, -1e-6),
        vec![Complex64::new(1e-6, 2e-7), Complex64::new(-4e-7, 3e-7)],
    );
    let analytic = jacobian(&xi, &scene).map_err(err)?;
    let base = xi.to_vector();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..base.len() {
        let eval = |s: f64| {
            let mut v = base.clone();
            v[j] += s * h;
            forward_map(&PositionParams::from_slice(v.as_slice()).unwrap(), &scene)
                .unwrap()
                .to_vector()
        };
        let column = (eval(1.0) - eval(-1.0)) / (2.0 * h);
        worst = worst.max((column - analytic.column(j)).amax());
    }
    if worst < 1e-6 {
        Ok(format!("max abs error {worst:.2e}"))
    } else {
        Err(format!("max abs error {worst:.2e} >= 1e-6"))
    }
}

fn noiseless_recovery() -> Check {
    let (mut worst_p, mut worst_c) = (0.0f64, 0.0f64);
    for c in random_scenes(10, 3) {
        let point = OperatingPoint::new(&c, 7).map_err(err)?;
        let outcome = run_trial(&point, &[Method::ProposedEnergy], 0).map_err(err)?;
        let est = outcome[0]
            .estimate
            .clone()
            .map_err(|e| format!("UE {:?}: {e}", c.scene.ue))?;
        worst_p = worst_p.max(est.position_error);
        worst_c = worst_c.max(est.clock_error);
    }
    let msg = format!("worst position error {worst_p:.2e} m, clock error {worst_c:.2e} s");
    if worst_p < 1e-5 && worst_c < 1e-13 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn efficiency_at_10db() -> Check {
    let c = sweep_of(
        desk(),
        SweepVariable::SnrDb,
        vec![num(10.0)],
        vec![Method::ProposedEnergy, Method::LsBaseline],
    );
    let (rows, _) = run_point(&c, &c.sweep.values[0]).map_err(err)?;
    let p = row(&rows, Method::ProposedEnergy)?;
    let l = row(&rows, Method::LsBaseline)?;
    let (rp, rl) = (p.rmse_position / p.peb, l.rmse_position / l.peb);
    let msg = format!(
        "proposed RMSE/PEB {rp:.3} ({}/{} ok), ls-baseline {rl:.3}, PEB {:.3e} m",
        p.trials_ok, p.trials, p.peb
    );
    if rp <= 2.0 && rp < rl {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// One estimate near the truth, expressed through per-path anchors moved by
/// up to `size` metres per axis. The WLS/ExIP gap is second order in `size`.
fn perturbed_estimate(scene: &Scene, truth: &ChannelParams, size: f64, rng: &mut ChaCha8Rng) -> ChannelParams {
    let c = risloc::scene::SPEED_OF_LIGHT;
    let mut jitter = || {
        Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * size
    };
    let shift = |origin: &Vector3<f64>| {
        let d = scene.ue - origin;
        scene.ue + d.normalize() * c * scene.clock_bias
    };
    let moved = |point: Vector3<f64>| {
        let xi = PositionParams {
            ue: point,
            clock_bias: 0.0,
            los_gain: truth.los.gain,
            ris_gains: truth.ris.iter().map(|r| r.gain).collect(),
        };
        forward_map(&xi, scene).unwrap()
    };
    let mut out = truth.clone();
    out.los = moved(shift(&Vector3::zeros()) + jitter()).los;
    for (q, p_r) in scene.ris.iter().enumerate() {
        out.ris[q] = moved(shift(p_r) + jitter()).ris[q];
    }
    out.los.gain *= Complex64::new(1.0 + 1e-4, -2e-4);
    for (q, r) in out.ris.iter_mut().enumerate() {
        r.gain *= Complex64::new(1.0 - 1e-4 * q as f64, 1e-4);
    }
    out
}

fn wls_equals_exip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for c in random_scenes(10, 9) {
        let point = OperatingPoint::new(&c, 1).map_err(err)?;
        let eta_hat = perturbed_estimate(&point.scene, &point.nominal_eta, 1e-4, &mut rng);
        let loc = locate(
            &eta_hat,
            &point.model,
            &point.scene.orientation,
            1.0,
            Weighting::PathBounds,
            &point.search,
        )
        .map_err(err)?;
        let start = point.scene.position_params(
            point.nominal_eta.los.gain,
            point.nominal_eta.ris.iter().map(|r| r.gain).collect(),
        );
        let exip = exip_minimize(&eta_hat, &block_diagonal(&loc.f_eta), &start, &point.scene, 200).map_err(err)?;
        worst = worst.max((exip.ue - loc.fusion.position).norm());
    }
    let msg = format!("worst WLS/ExIP position gap {worst:.2e} m");
    if worst < 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn clock_bias_invariance() -> Check {
    let w = desk().radio.bandwidth;
    let edge = 10.0 / w * 1e9;
    let c = sweep_of(
        desk(),
        SweepVariable::ClockBiasNs,
        vec![num(-edge), num(0.0), num(edge)],
        vec![Method::ProposedEnergy],
    );
    let out = run_sweep(&c).map_err(err)?;
    let rmse: Vec<f64> = out.rows.iter().map(|r| r.rmse_position).collect();
    let lo = rmse.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rmse.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let msg = format!(
        "RMSE {:.4}/{:.4}/{:.4} m, relative spread {spread:.3}",
        rmse[0], rmse[1], rmse[2]
    );
    if spread < 0.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn monotone_trends() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    let cases = [
        (SweepVariable::SnrDb, vec![num(0.0), num(10.0), num(20.0)]),
        (SweepVariable::RisElements, vec![num(16.0), num(64.0)]),
        (SweepVariable::TimeSlots, vec![num(32.0), num(64.0)]),
    ];
    for (variable, values) in cases {
        let c = sweep_of(desk(), variable, values, vec![Method::ProposedEnergy]);
        let out = run_sweep(&c).map_err(err)?;
        let r = &out.rows;
        for w in r.windows(2) {
            let allowed = 2.0 * (w[0].rmse_position_se.powi(2) + w[1].rmse_position_se.powi(2)).sqrt();
            if !(w[1].rmse_position <= w[0].rmse_position + allowed) {
                ok = false;
            }
        }
        notes.push(format!(
            "{} {}",
            variable.name(),
            r.iter()
                .map(|x| format!("{}:{:.4}", x.value, x.rmse_position))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Median per-trial error, failed trials counted as infinitely wrong.
fn median_with_failures(records: &[risloc::harness::TrialRecord]) -> f64 {
    let mut e: Vec<f64> = records
        .iter()
        .map(|r| r.position_error.unwrap_or(f64::INFINITY))
        .collect();
    e.sort_by(f64::total_cmp);
    let m = e.len() / 2;
    if e.len() % 2 == 1 {
        e[m]
    } else {
        0.5 * (e[m - 1] + e[m])
    }
}

fn design_benefit() -> Check {
    let mut medians = Vec::new();
    for choice in [PhaseChoice::Svd, PhaseChoice::Random] {
        let mut c = sweep_of(
            desk(),
            SweepVariable::SnrDb,
            vec![num(0.0)],
            vec![Method::ProposedEnergy],
        );
        c.design.phase_design = choice;
        let (_, records) = run_point(&c, &c.sweep.values[0]).map_err(err)?;
        medians.push(median_with_failures(&records));
    }
    let c = desk();
    let shape = c.arrays().ris;
    let scene = c.scene();
    let half = (
        c.design.half_width_deg[0].to_radians(),
        c.design.half_width_deg[1].to_radians(),
    );
    let profile = risloc::harness::run::design_profile(&c, &scene, 0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut designed, mut random) = (0.0, 0.0);
    for (q, p_r) in scene.ris.iter().enumerate() {
        let link = RisLink::new(*p_r).map_err(err)?;
        let d = direction_and_angles(p_r, &scene.ue).map_err(err)?;
        let region = AngularRegion::around(d.elevation, d.azimuth, half, (16, 16));
        designed += region_gain(shape, &profile.phases()[q], &link, &region);
        let draws = 200;
        random += (0..draws)
            .map(|_| region_gain(shape, &random_phases(shape.len(), &mut rng), &link, &region))
            .sum::<f64>()
            / draws as f64;
    }
    let msg = format!(
        "median error svd {:.4} m vs random {:.4} m; region gain svd {designed:.3e} vs random {random:.3e}",
        medians[0], medians[1]
    );
    if medians[0] < medians[1] && designed > random {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn energy_labels_match_oracle() -> Check {
    let mut c = desk();
    c.trials = 500;
    let point = OperatingPoint::new(&c, 0x9a7b).map_err(err)?;
    let mut separation = f64::INFINITY;
    let mut e: Vec<f64> = point.nominal_eta.ris.iter().map(|p| p.gain.norm_sqr()).collect();
    e.push(point.nominal_eta.los.gain.norm_sqr());
    e.sort_by(|a, b| b.total_cmp(a));
    for w in e.windows(2) {
        separation = separation.min(10.0 * (w[0] / w[1]).log10());
    }
    if separation < 3.0 {
        return Err(format!("scene separation {separation:.2} dB below 3 dB"));
    }
    use rayon::prelude::*;
    let hits: usize = (0..c.trials as u64)
        .into_par_iter()
        .map(|i| {
            let real = point.realise(i).ok()?;
            let est = estimate_channel_params(&real.obs, &point.model, &point.estimator).ok()?;
            let oracle = PathOrder::from_params(&real.truth).ok()?;
            Some(usize::from(est.order.kappa == oracle.kappa))
        })
        .map(|h| h.unwrap_or(0))
        .sum();
    let rate = hits as f64 / c.trials as f64;
    let msg = format!(
        "{hits}/{} labels match (nominal separation {separation:.1} dB)",
        c.trials
    );
    if rate >= 0.95 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn multi_bs_fusion() -> Check {
    let setup = MultiBsSetup::reference(&desk());
    let s = run_multi_bs(&setup, 200).map_err(err)?;
    let ratio = s.rmse_fused / s.peb_fused;
    let msg = format!(
        "single RMSE {:.4} m, fused {:.4} m, fused PEB {:.4} m, ratio {ratio:.3} ({}/{} ok)",
        s.rmse_single, s.rmse_fused, s.peb_fused, s.trials_ok, s.trials
    );
    if s.rmse_fused <= s.rmse_single && ratio <= 2.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Check {
    let mut c = sweep_of(
        desk(),
        SweepVariable::SnrDb,
        vec![num(0.0), num(10.0)],
        vec![Method::ProposedEnergy, Method::LsBaseline],
    );
    c.trials = 40;
    let render = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = run_sweep(&c).map_err(err)?;
        let (mut csv, mut log) = (Vec::new(), Vec::new());
        write_csv(&out.rows, &mut csv).map_err(err)?;
        write_jsonl(&out.records, &mut log).map_err(err)?;
        Ok((csv, log))
    };
    let first = render()?;
    let second = render()?;
    if first == second {
        Ok(format!(
            "{} CSV bytes and {} log bytes identical",
            first.0.len(),
            first.1.len()
        ))
    } else {
        Err("outputs differ between runs".into())
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("fim-finite-difference", fim_matches_finite_differences),
        ("jacobian-central-difference", jacobian_matches_central_differences),
        ("noiseless-recovery", noiseless_recovery),
        ("efficiency-10db", efficiency_at_10db),
        ("wls-exip-equivalence", wls_equals_exip),
        ("clock-bias-invariance", clock_bias_invariance),
        ("monotone-trends", monotone_trends),
        ("ris-design-benefit", design_benefit),
        ("energy-path-matching", energy_labels_match_oracle),
        ("multi-bs-fusion", multi_bs_fusion),
        ("determinism", determinism),
    ];
    // optional substring filters, e.g. `cargo test --test acceptance -- fusion`
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
