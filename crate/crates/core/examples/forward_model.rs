//! Geometry to channel parameters: the forward map, its Jacobian and the
//! per-path anchors that the clock bias shifts along each path.

use num_complex::Complex64;
use risloc::crb::jacobian;
use risloc::scene::{delay_anchor, forward_map, reference_scene};

fn main() -> risloc::Result<()> {
    let scene = reference_scene();
    let xi = scene.position_params(
        Complex64::from_polar(1e-6, 0.3),
        vec![Complex64::from_polar(4e-7, -1.0); 2],
    );
    let eta = forward_map(&xi, &scene)?;

    println!(
        "UE at {:?}, clock bias {:.1} ns",
        scene.ue.as_slice(),
        scene.clock_bias * 1e9
    );
    let l = &eta.los;
    println!(
        "LOS   delay {:8.3} ns  UE cosines ({:+.4}, {:+.4})  BS cosines ({:+.4}, {:+.4})",
        l.delay * 1e9,
        l.ue_g,
        l.ue_s,
        l.bs_g,
        l.bs_s
    );
    for (q, r) in eta.ris.iter().enumerate() {
        println!(
            "RIS {q} delay {:8.3} ns  UE cosines ({:+.4}, {:+.4})",
            r.delay * 1e9,
            r.ue_g,
            r.ue_s
        );
    }

    let j = jacobian(&xi, &scene)?;
    println!(
        "\nJacobian {}x{}; delay sensitivity to x: {:.3e} s/m",
        j.nrows(),
        j.ncols(),
        j[(2, 0)]
    );

    let anchor = delay_anchor(&nalgebra::Vector3::zeros(), &scene.ue, scene.clock_bias);
    println!(
        "LOS anchor {:?} lies {:.2} m beyond the UE",
        anchor.as_slice(),
        (anchor - scene.ue).norm()
    );
    Ok(())
}
