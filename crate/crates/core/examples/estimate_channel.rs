//! Subspace estimation of the channel parameters from one noisy realisation,
//! compared with the truth.

use risloc::estimator::{estimate_channel_params, Labeling};
use risloc::harness::{ExperimentConfig, OperatingPoint, Profile};

fn main() -> risloc::Result<()> {
    let mut config = ExperimentConfig::for_profile(Profile::Desk);
    config.snr_db = 20.0;
    let point = OperatingPoint::new(&config, 9)?;
    let real = point.realise(0)?;

    for labeling in [Labeling::Energy, Labeling::Delay] {
        let spec = point.estimator.clone().with_labeling(labeling);
        let est = estimate_channel_params(&real.obs, &point.model, &spec)?;
        println!("{labeling:?} labeling, energy ranks {:?}", est.order.kappa);
        let w = config.radio.bandwidth;
        let t = &real.truth;
        let e = &est.eta;
        println!(
            "  LOS   delay error {:+.3e} bins  cosine errors {:+.1e} {:+.1e} {:+.1e} {:+.1e}",
            (e.los.delay - t.los.delay) * w,
            e.los.ue_g - t.los.ue_g,
            e.los.ue_s - t.los.ue_s,
            e.los.bs_g - t.los.bs_g,
            e.los.bs_s - t.los.bs_s
        );
        for (q, (a, b)) in e.ris.iter().zip(&t.ris).enumerate() {
            println!(
                "  RIS {q} delay error {:+.3e} bins  cosine errors {:+.1e} {:+.1e}  gain ratio {:.3}",
                (a.delay - b.delay) * w,
                a.ue_g - b.ue_g,
                a.ue_s - b.ue_s,
                a.gain.norm() / b.gain.norm()
            );
        }
    }
    Ok(())
}
