//! One noisy realisation of the RIS-aided MIMO-OFDM channel: link budget,
//! received power per subcarrier and the effective noise level.

use risloc::channel::{power_map, received_power};
use risloc::harness::{ExperimentConfig, OperatingPoint, Profile};

fn main() -> risloc::Result<()> {
    let config = ExperimentConfig::for_profile(Profile::Desk);
    let point = OperatingPoint::new(&config, 42)?;
    let real = point.realise(0)?;

    let eta = &real.truth;
    println!("path energies (dB):");
    println!("  LOS    {:7.2}", 10.0 * eta.los.gain.norm_sqr().log10());
    for (q, r) in eta.ris.iter().enumerate() {
        println!("  RIS {q}  {:7.2}", 10.0 * r.gain.norm_sqr().log10());
    }

    let obs = &real.obs.per_subcarrier;
    println!(
        "\n{} subcarriers of {}x{} observations, SNR {} dB",
        obs.len(),
        obs[0].nrows(),
        obs[0].ncols(),
        config.snr_db
    );
    println!(
        "noise sigma {:.3e}, scattered-path variance {:.3e}",
        point.sigma, point.scatter_variance
    );
    println!(
        "effective noise variance after de-precoding {:.3e}",
        real.obs.noise_variance
    );
    println!("mean observed power {:.3e}", received_power(obs, 1.0));

    let strongest = power_map(&obs[0]).iter().cloned().fold(0.0, f64::max);
    println!("strongest antenna pair on subcarrier 0: {strongest:.3e}");
    Ok(())
}
