//! RIS phase profiles that spread reflected power over a region of directions.
//!
//! The single-BS design beams the known incident wave towards the dominant
//! direction of the span of UE-side responses in the region. The multi-BS
//! design does the same for pairs of incident and departing directions.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ura_steering, ArrayShape};
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenvector, CMatrix, CVector};
use crate::scene::RisLink;

/// Elevation/azimuth box (radians) sampled on a regular grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularRegion {
    pub elevation: (f64, f64),
    pub azimuth: (f64, f64),
    pub grid: (usize, usize),
}

fn spaced(range: (f64, f64), n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (range.0 + range.1)];
    }
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

impl AngularRegion {
    pub fn point(elevation: f64, azimuth: f64) -> Self {
        AngularRegion {
            elevation: (elevation, elevation),
            azimuth: (azimuth, azimuth),
            grid: (1, 1),
        }
    }

    /// Box of half-widths `half` (radians) around a centre direction.
    pub fn around(elevation: f64, azimuth: f64, half: (f64, f64), grid: (usize, usize)) -> Self {
        AngularRegion {
            elevation: (elevation - half.0, elevation + half.0),
            azimuth: (azimuth - half.1, azimuth + half.1),
            grid,
        }
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        let el = spaced(self.elevation, self.grid.0);
        let az = spaced(self.azimuth, self.grid.1);
        el.iter().flat_map(|&e| az.iter().map(move |&a| (e, a))).collect()
    }

    pub fn len(&self) -> usize {
        self.grid.0.max(1) * self.grid.1.max(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same box on a grid `factor` times denser along each axis.
    pub fn refined(&self, factor: usize) -> Self {
        let f = factor.max(1);
        AngularRegion {
            grid: (self.grid.0.max(1) * f, self.grid.1.max(1) * f),
            ..*self
        }
    }
}

/// RIS response to a direction given by elevation/azimuth from the RIS.
pub fn ris_response(ris: ArrayShape, elevation: f64, azimuth: f64) -> CVector {
    let (se, ce) = elevation.sin_cos();
    ura_steering(ris, ce * azimuth.cos(), se)
}

/// Responses of every sample of a region as columns.
pub fn region_steering(ris: ArrayShape, region: &AngularRegion) -> CMatrix {
    let samples = region.samples();
    let mut m = CMatrix::zeros(ris.len(), samples.len());
    for (j, (e, a)) in samples.into_iter().enumerate() {
        m.set_column(j, &ris_response(ris, e, a));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDesign {
    pub phases: DVector<f64>,
    /// Mean normalised reflection gain over the region, on a refined grid.
    pub expected_gain: f64,
}

impl PhaseDesign {
    /// Unit-modulus reflection coefficients.
    pub fn coefficients(&self) -> CVector {
        coefficients(&self.phases)
    }
}

fn unit_phase(v: &CVector) -> DVector<f64> {
    v.map(|z| z.arg())
}

fn coefficients(phases: &DVector<f64>) -> CVector {
    phases.map(|p| Complex64::from_polar(1.0, p))
}

/// Mean of `|a_out^H diag(theta) a_in|^2` over all pairs of columns.
pub fn mean_pair_gain(phases: &DVector<f64>, incident: &CMatrix, departing: &CMatrix) -> f64 {
    let theta = coefficients(phases);
    let mut acc = 0.0;
    for i in 0..incident.ncols() {
        let through = theta.component_mul(&incident.column(i));
        for j in 0..departing.ncols() {
            acc += departing.column(j).dotc(&through).norm_sqr();
        }
    }
    acc / (incident.ncols() * departing.ncols()) as f64
}

/// Mean normalised gain towards a region for a wave arriving from the BS.
pub fn region_gain(ris: ArrayShape, phases: &DVector<f64>, link: &RisLink, region: &AngularRegion) -> f64 {
    let incident = CMatrix::from_columns(&[ura_steering(ris, link.ris_f, link.ris_s)]);
    mean_pair_gain(phases, &incident, &region_steering(ris, region))
}

fn check_ris(ris: ArrayShape) -> Result<()> {
    if ris.is_empty() {
        return Err(Error::InvalidInput("RIS without elements".into()));
    }
    Ok(())
}

/// Phase profile for one RIS served by a single BS.
pub fn design_phase_single(
    ris: ArrayShape,
    link: &RisLink,
    region: &AngularRegion,
    iteration: &PowerIteration,
) -> Result<PhaseDesign> {
    check_ris(ris)?;
    let steering = region_steering(ris, region);
    let gram = &steering * steering.adjoint();
    let start = steering.column(0).into_owned();
    let dominant = dominant_eigenvector(&gram, &start, iteration.tolerance, iteration.max_iterations)?;
    let incident = ura_steering(ris, link.ris_f, link.ris_s);
    let phases = DVector::from_fn(ris.len(), |m, _| dominant[m].arg() - incident[m].arg());
    let phases = phases.map(|p| p.rem_euclid(2.0 * PI));
    let expected_gain = region_gain(ris, &phases, link, &region.refined(2));
    Ok(PhaseDesign { phases, expected_gain })
}

/// Phase profile for one RIS shared by several BS whose directions lie in `bs_region`.
pub fn design_phase_multibs(
    ris: ArrayShape,
    ue_region: &AngularRegion,
    bs_region: &AngularRegion,
    iteration: &PowerIteration,
) -> Result<PhaseDesign> {
    check_ris(ris)?;
    let ue = region_steering(ris, ue_region);
    let bs = region_steering(ris, bs_region);
    // A_S^H A_S is the Hadamard product of the two Gram matrices
    let gram = (&ue * ue.adjoint()).component_mul(&(&bs * bs.adjoint()).map(|z| z.conj()));
    let start = gram.column(0).into_owned();
    let dominant = dominant_eigenvector(&gram, &start, iteration.tolerance, iteration.max_iterations)?;
    let phases = unit_phase(&dominant).map(|p| p.rem_euclid(2.0 * PI));
    let expected_gain = mean_pair_gain(
        &phases,
        &region_steering(ris, &bs_region.refined(2)),
        &region_steering(ris, &ue_region.refined(2)),
    );
    Ok(PhaseDesign { phases, expected_gain })
}

pub fn random_phases<R: Rng + ?Sized>(elements: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(elements, |_, _| rng.gen_range(0.0..2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{direction_and_angles, reference_scene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ue_direction(q: usize) -> (RisLink, f64, f64) {
        let scene = reference_scene();
        let link = RisLink::new(scene.ris[q]).unwrap();
        let d = direction_and_angles(&scene.ris[q], &scene.ue).unwrap();
        (link, d.elevation, d.azimuth)
    }

    #[test]
    fn point_region_gives_matched_beam() {
        let ris = ArrayShape::square(8);
        let (link, el, az) = ue_direction(0);
        let design =
            design_phase_single(ris, &link, &AngularRegion::point(el, az), &PowerIteration::default()).unwrap();
        assert!((design.expected_gain - 1.0).abs() < 1e-9);
        // the reflected-direction beam alone, before removing the incident phase
        let a = ris_response(ris, el, az);
        let tilde = CVector::from_fn(ris.len(), |m, _| Complex64::from_polar(1.0, a[m].arg()));
        assert!((a.dotc(&tilde).norm() - (ris.len() as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn design_beats_random_over_region() {
        let ris = ArrayShape::square(8);
        let (link, el, az) = ue_direction(1);
        let region = AngularRegion::around(el, az, (0.17, 0.17), (16, 16));
        let design = design_phase_single(ris, &link, &region, &PowerIteration::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let random = random_phases(ris.len(), &mut rng);
            assert!(region_gain(ris, &design.phases, &link, &region) > region_gain(ris, &random, &link, &region));
        }
    }

    #[test]
    fn multibs_with_point_bs_region_matches_single() {
        let ris = ArrayShape::square(8);
        let (link, el, az) = ue_direction(0);
        let region = AngularRegion::around(el, az, (0.1, 0.2), (6, 5));
        let toward_bs = direction_and_angles(&link.position, &nalgebra::Vector3::zeros()).unwrap();
        let bs_region = AngularRegion::point(toward_bs.elevation, toward_bs.azimuth);
        let it = PowerIteration {
            tolerance: 1e-13,
            max_iterations: 100_000,
        };
        let single = design_phase_single(ris, &link, &region, &it).unwrap();
        let multi = design_phase_multibs(ris, &region, &bs_region, &it).unwrap();
        let g_single = region_gain(ris, &single.phases, &link, &region);
        let g_multi = region_gain(ris, &multi.phases, &link, &region);
        assert!((g_single - g_multi).abs() < 1e-9 * g_single);
    }

    #[test]
    fn coefficients_have_unit_modulus() {
        let ris = ArrayShape::new(6, 5);
        let (link, el, az) = ue_direction(0);
        let region = AngularRegion::around(el, az, (0.2, 0.1), (7, 9));
        let design = design_phase_single(ris, &link, &region, &PowerIteration::default()).unwrap();
        assert!(design.coefficients().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let multi = design_phase_multibs(
            ris,
            &region,
            &AngularRegion::point(0.1, 2.9),
            &PowerIteration::default(),
        )
        .unwrap();
        assert!(multi.phases.iter().all(|p| (0.0..2.0 * PI).contains(p)));
    }

    #[test]
    fn random_phases_average_one_over_m() {
        let ris = ArrayShape::square(8);
        let (link, el, az) = ue_direction(0);
        let point = AngularRegion::point(el, az);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| region_gain(ris, &random_phases(ris.len(), &mut rng), &link, &point))
            .sum::<f64>()
            / draws as f64;
        // |sum of M unit phasors / M|^2 has mean 1/M
        let expect = 1.0 / ris.len() as f64;
        assert!((mean - expect).abs() < 0.05 * expect, "{mean}");
        let mut again = ChaCha8Rng::seed_from_u64(9);
        let mut first = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(random_phases(4, &mut again), random_phases(4, &mut first));
    }

    #[test]
    fn phase_only_objective_is_below_singular_bound() {
        let ris = ArrayShape::square(8);
        let (link, el, az) = ue_direction(1);
        let region = AngularRegion::around(el, az, (0.15, 0.15), (16, 16));
        let design = design_phase_single(ris, &link, &region, &PowerIteration::default()).unwrap();
        let steering = region_steering(ris, &region);
        let incident = ura_steering(ris, link.ris_f, link.ris_s);
        let tilde = CVector::from_fn(ris.len(), |m, _| {
            Complex64::from_polar(1.0, design.phases[m] + incident[m].arg())
        });
        let objective = (steering.adjoint() * &tilde).norm_squared();
        let sigma1 = steering.singular_values().max();
        assert!(objective <= sigma1 * sigma1 * ris.len() as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn doubling_the_grid_barely_moves_the_design() {
        let ris = ArrayShape::square(8);
        let (link, el, az) = ue_direction(0);
        let coarse = AngularRegion::around(el, az, (0.17, 0.17), (16, 16));
        let fine = coarse.refined(2);
        let reference = coarse.refined(4);
        let it = PowerIteration::default();
        let a = region_gain(
            ris,
            &design_phase_single(ris, &link, &coarse, &it).unwrap().phases,
            &link,
            &reference,
        );
        let b = region_gain(
            ris,
            &design_phase_single(ris, &link, &fine, &it).unwrap().phases,
            &link,
            &reference,
        );
        assert!((a - b).abs() < 0.02 * b, "{a} {b}");
    }

    #[test]
    fn multibs_design_beats_random() {
        let ris = ArrayShape::square(8);
        let ue_region = AngularRegion::around(-0.4, 0.6, (0.1, 0.1), (8, 8));
        let bs_region = AngularRegion::around(0.05, 2.8, (0.05, 0.1), (4, 4));
        let design = design_phase_multibs(ris, &ue_region, &bs_region, &PowerIteration::default()).unwrap();
        let incident = region_steering(ris, &bs_region);
        let departing = region_steering(ris, &ue_region);
        let ours = mean_pair_gain(&design.phases, &incident, &departing);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let random = (0..100)
            .map(|_| mean_pair_gain(&random_phases(ris.len(), &mut rng), &incident, &departing))
            .sum::<f64>()
            / 100.0;
        assert!(ours > random, "{ours} {random}");
    }

    #[test]
    fn region_sampling() {
        let r = AngularRegion::around(0.0, 0.0, (0.1, 0.2), (3, 2));
        let s = r.samples();
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], (-0.1, -0.2));
        assert_eq!(s[5], (0.1, 0.2));
        assert_eq!(AngularRegion::point(0.3, 0.4).samples(), vec![(0.3, 0.4)]);
    }
}
