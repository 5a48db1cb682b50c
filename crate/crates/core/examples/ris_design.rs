//! RIS phase design for a region of UE directions versus random phases.

use rand::SeedableRng;
use risloc::channel::ArrayShape;
use risloc::risdesign::{design_phase_single, random_phases, region_gain, AngularRegion, PowerIteration};
use risloc::scene::{direction_and_angles, reference_scene, RisLink};

fn main() -> risloc::Result<()> {
    let scene = reference_scene();
    let shape = ArrayShape::square(8);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    println!("{:>4} {:>10} {:>12} {:>12}", "ris", "half_deg", "designed", "random");
    for (q, p) in scene.ris.iter().enumerate() {
        let link = RisLink::new(*p)?;
        let towards = direction_and_angles(p, &scene.ue)?;
        for half in [1.0f64, 5.0, 10.0, 20.0] {
            let h = half.to_radians();
            let region = AngularRegion::around(towards.elevation, towards.azimuth, (h, h), (16, 16));
            let design = design_phase_single(shape, &link, &region, &PowerIteration::default())?;
            let random: f64 = (0..100)
                .map(|_| region_gain(shape, &random_phases(shape.len(), &mut rng), &link, &region))
                .sum::<f64>()
                / 100.0;
            println!("{q:>4} {half:>10} {:>12.4e} {random:>12.4e}", design.expected_gain);
        }
    }
    Ok(())
}
