//! Position and clock-bias error bounds, and how each path would localise
//! the UE on its own.

use risloc::crb::{fim_eta, path_bounds, AnchorGeometry};
use risloc::harness::{ExperimentConfig, OperatingPoint, Profile};

fn main() -> risloc::Result<()> {
    let mut config = ExperimentConfig::for_profile(Profile::Desk);
    println!("{:>7} {:>12} {:>12}", "snr_db", "peb_m", "ceb_ns");
    for snr in [-10.0, 0.0, 10.0, 20.0, 30.0] {
        config.snr_db = snr;
        let point = OperatingPoint::new(&config, 1)?;
        if let Some(b) = point.bounds {
            println!("{snr:>7} {:>12.4e} {:>12.4e}", b.peb, b.ceb * 1e9);
        }
    }

    config.snr_db = 10.0;
    let point = OperatingPoint::new(&config, 1)?;
    let f = fim_eta(&point.model, &point.nominal_eta, point.noise_variance)?;
    let paths = path_bounds(&f, &AnchorGeometry::of_scene(&point.scene))?;
    let show = |name: String, cov: Option<nalgebra::Matrix3<f64>>| match cov {
        Some(c) => println!("{name:<6} anchor bound {:.4e} m", c.trace().sqrt()),
        None => println!("{name:<6} cannot localise alone"),
    };
    println!();
    show("LOS".into(), paths.los);
    for (q, c) in paths.ris.into_iter().enumerate() {
        show(format!("RIS {q}"), c);
    }
    Ok(())
}
