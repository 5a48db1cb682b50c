//! Full single-BS pipeline on a handful of trials: estimate the channel,
//! build per-path anchors and fuse them with and without covariance weights.

use risloc::estimator::estimate_channel_params;
use risloc::fusion::{locate, Weighting};
use risloc::harness::{ExperimentConfig, OperatingPoint, Profile};

fn main() -> risloc::Result<()> {
    let config = ExperimentConfig::for_profile(Profile::Desk);
    let point = OperatingPoint::new(&config, 5)?;
    let peb = point.bounds.map_or(f64::NAN, |b| b.peb);
    println!("PEB {peb:.4} m at {} dB", config.snr_db);
    println!("{:>5} {:>10} {:>10} {:>12}", "trial", "wls_m", "ls_m", "clock_err_ns");
    for trial in 0..8 {
        let real = point.realise(trial)?;
        let est = match estimate_channel_params(&real.obs, &point.model, &point.estimator) {
            Ok(e) => e,
            Err(e) => {
                println!("{trial:>5} estimation failed: {e}");
                continue;
            }
        };
        let run = |w| {
            locate(
                &est.eta,
                &point.model,
                &point.scene.orientation,
                real.obs.noise_variance,
                w,
                &point.search,
            )
        };
        let wls = run(Weighting::PathBounds)?;
        let ls = run(Weighting::Identity)?;
        println!(
            "{trial:>5} {:>10.4} {:>10.4} {:>12.4}",
            (wls.fusion.position - point.scene.ue).norm(),
            (ls.fusion.position - point.scene.ue).norm(),
            (wls.fusion.clock_bias - point.scene.clock_bias) * 1e9
        );
    }
    Ok(())
}
