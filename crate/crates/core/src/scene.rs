//! Scene geometry and the map from position parameters to channel parameters.
//!
//! The BS sits at the origin with its URA in the y-z plane, every RIS has
//! its URA in its local x-z plane and the UE array is rotated by an
//! orientation matrix `O`. Cosines seen by the UE array are the y/z rows of
//! `-O r` where `r` is the unit vector from the transmitter to the UE.

use nalgebra::{DVector, Matrix3, Rotation3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Two points closer than this are considered coincident.
const MIN_SEPARATION: f64 = 1e-6;

/// Smallest admissible gap between BS-side cosines of distinct RIS.
const MIN_COSINE_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub distance: f64,
    pub unit: Vector3<f64>,
    pub elevation: f64,
    pub azimuth: f64,
}

impl Direction {
    /// `[cos(el) cos(az), cos(el) sin(az), sin(el)]`, equal to `unit`.
    pub fn cosines(&self) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }
}

pub fn direction_and_angles(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Direction> {
    let rel = to - from;
    let distance = rel.norm();
    if !(distance > MIN_SEPARATION) {
        return Err(Error::DegenerateGeometry(format!(
            "points {from:?} and {to:?} coincide"
        )));
    }
    let unit = rel / distance;
    Ok(Direction {
        distance,
        unit,
        elevation: unit.z.clamp(-1.0, 1.0).asin(),
        azimuth: rel.y.atan2(rel.x),
    })
}

/// Rotation from yaw/pitch/roll in degrees (applied roll, pitch, yaw).
pub fn orientation_from_euler_deg(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(roll.to_radians(), pitch.to_radians(), yaw.to_radians()).into_inner()
}

/// Full UE-frame cosines `[f, g, s] = -O r` of a wave travelling along `r`.
pub fn ue_cosines(orientation: &Matrix3<f64>, travel: &Vector3<f64>) -> Vector3<f64> {
    -(orientation * travel)
}

/// Anchor `p_U - c * delta * r` for the ray from `p_ref` to `p_ue`.
pub fn clock_shifted_anchor(p_ref: &Vector3<f64>, p_ue: &Vector3<f64>, delta: f64) -> Vector3<f64> {
    let rel = p_ue - p_ref;
    p_ue - rel * (SPEED_OF_LIGHT * delta / rel.norm())
}

/// Point reached by travelling `c * tau` from `p_ref` towards the UE, where
/// `tau` already carries the clock bias: `p_U + c * delta * r`.
pub fn delay_anchor(p_ref: &Vector3<f64>, p_ue: &Vector3<f64>, delta: f64) -> Vector3<f64> {
    clock_shifted_anchor(p_ref, p_ue, -delta)
}

/// Unknowns of the positioning problem: position, clock bias and path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionParams {
    pub ue: Vector3<f64>,
    pub clock_bias: f64,
    pub los_gain: Complex64,
    pub ris_gains: Vec<Complex64>,
}

impl PositionParams {
    pub fn dim(ris_count: usize) -> usize {
        6 + 2 * ris_count
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.ris_gains.len()));
        v.extend_from_slice(self.ue.as_slice());
        v.push(self.clock_bias);
        v.push(self.los_gain.re);
        v.push(self.los_gain.im);
        for h in &self.ris_gains {
            v.push(h.re);
            v.push(h.im);
        }
        DVector::from_vec(v)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 6 || (v.len() - 6) % 2 != 0 {
            return Err(Error::Shape(format!("position vector of length {}", v.len())));
        }
        Ok(PositionParams {
            ue: Vector3::new(v[0], v[1], v[2]),
            clock_bias: v[3],
            los_gain: Complex64::new(v[4], v[5]),
            ris_gains: v[6..].chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosParams {
    pub gain: Complex64,
    pub delay: f64,
    pub ue_g: f64,
    pub ue_s: f64,
    pub bs_g: f64,
    pub bs_s: f64,
}

/// Reflected path through one RIS; `delay` covers the RIS-UE leg plus clock bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisPathParams {
    pub gain: Complex64,
    pub delay: f64,
    pub ue_g: f64,
    pub ue_s: f64,
}

/// Channel parameters `[Re h, Im h, tau, g_U, s_U, g_B, s_B]` followed by
/// `[Re h, Im h, tau_RU, g_U, s_U]` per RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub los: LosParams,
    pub ris: Vec<RisPathParams>,
}

impl ChannelParams {
    pub const LOS_LEN: usize = 7;
    pub const RIS_LEN: usize = 5;

    pub fn dim(ris_count: usize) -> usize {
        Self::LOS_LEN + Self::RIS_LEN * ris_count
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let l = &self.los;
        let mut v = vec![l.gain.re, l.gain.im, l.delay, l.ue_g, l.ue_s, l.bs_g, l.bs_s];
        for r in &self.ris {
            v.extend_from_slice(&[r.gain.re, r.gain.im, r.delay, r.ue_g, r.ue_s]);
        }
        DVector::from_vec(v)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < Self::LOS_LEN || (v.len() - Self::LOS_LEN) % Self::RIS_LEN != 0 {
            return Err(Error::Shape(format!("channel vector of length {}", v.len())));
        }
        Ok(ChannelParams {
            los: LosParams {
                gain: Complex64::new(v[0], v[1]),
                delay: v[2],
                ue_g: v[3],
                ue_s: v[4],
                bs_g: v[5],
                bs_s: v[6],
            },
            ris: v[Self::LOS_LEN..]
                .chunks(Self::RIS_LEN)
                .map(|c| RisPathParams {
                    gain: Complex64::new(c[0], c[1]),
                    delay: c[2],
                    ue_g: c[3],
                    ue_s: c[4],
                })
                .collect(),
        })
    }
}

/// BS-to-RIS geometry, known a priori at the UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisLink {
    pub position: Vector3<f64>,
    pub distance: f64,
    /// Propagation delay BS to RIS, free of clock bias.
    pub delay: f64,
    pub bs_g: f64,
    pub bs_s: f64,
    /// Cosines at the RIS of the direction pointing back to the BS.
    pub ris_f: f64,
    pub ris_s: f64,
}

impl RisLink {
    pub fn new(position: Vector3<f64>) -> Result<Self> {
        let dir = direction_and_angles(&Vector3::zeros(), &position)?;
        Ok(RisLink {
            position,
            distance: dir.distance,
            delay: dir.distance / SPEED_OF_LIGHT,
            bs_g: dir.unit.y,
            bs_s: dir.unit.z,
            ris_f: -dir.unit.x,
            ris_s: -dir.unit.z,
        })
    }
}

/// RIS-side cosines `(f, s)` of the departure towards a point.
pub fn ris_departure_cosines(ris: &Vector3<f64>, target: &Vector3<f64>) -> Result<(f64, f64, f64)> {
    let dir = direction_and_angles(ris, target)?;
    Ok((dir.unit.x, dir.unit.z, dir.distance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ue: Vector3<f64>,
    pub ris: Vec<Vector3<f64>>,
    pub orientation: Matrix3<f64>,
    pub clock_bias: f64,
}

impl Scene {
    pub fn ris_count(&self) -> usize {
        self.ris.len()
    }

    pub fn links(&self) -> Result<Vec<RisLink>> {
        self.ris.iter().map(|p| RisLink::new(*p)).collect()
    }

    /// Rejects coincident points and RIS that the BS cannot tell apart.
    pub fn validate(&self) -> Result<()> {
        let origin = Vector3::zeros();
        direction_and_angles(&origin, &self.ue)?;
        let links = self.links()?;
        for (q, link) in links.iter().enumerate() {
            direction_and_angles(&link.position, &self.ue)?;
            for other in &links[q + 1..] {
                if (link.bs_g - other.bs_g).abs() < MIN_COSINE_GAP || (link.bs_s - other.bs_s).abs() < MIN_COSINE_GAP {
                    return Err(Error::DegenerateGeometry(format!(
                        "RIS at {:?} and {:?} share BS-side cosines",
                        link.position, other.position
                    )));
                }
            }
        }
        let rot = self.orientation;
        if ((rot.transpose() * rot) - Matrix3::identity()).norm() > 1e-9 {
            return Err(Error::InvalidInput("orientation is not a rotation".into()));
        }
        Ok(())
    }

    /// Parameters of the scene itself with the given gains.
    pub fn position_params(&self, los_gain: Complex64, ris_gains: Vec<Complex64>) -> PositionParams {
        PositionParams {
            ue: self.ue,
            clock_bias: self.clock_bias,
            los_gain,
            ris_gains,
        }
    }
}

/// Geometric map from position parameters to channel parameters.
pub fn forward_map(xi: &PositionParams, scene: &Scene) -> Result<ChannelParams> {
    if xi.ris_gains.len() != scene.ris.len() {
        return Err(Error::Shape(format!(
            "{} RIS gains for {} RIS",
            xi.ris_gains.len(),
            scene.ris.len()
        )));
    }
    let los_dir = direction_and_angles(&Vector3::zeros(), &xi.ue)?;
    let ue_los = ue_cosines(&scene.orientation, &los_dir.unit);
    let los = LosParams {
        gain: xi.los_gain,
        delay: los_dir.distance / SPEED_OF_LIGHT + xi.clock_bias,
        ue_g: ue_los.y,
        ue_s: ue_los.z,
        bs_g: los_dir.unit.y,
        bs_s: los_dir.unit.z,
    };
    let ris = scene
        .ris
        .iter()
        .zip(&xi.ris_gains)
        .map(|(p_r, h)| {
            let dir = direction_and_angles(p_r, &xi.ue)?;
            let u = ue_cosines(&scene.orientation, &dir.unit);
            Ok(RisPathParams {
                gain: *h,
                delay: dir.distance / SPEED_OF_LIGHT + xi.clock_bias,
                ue_g: u.y,
                ue_s: u.z,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelParams { los, ris })
}

/// The reference scene used throughout the experiments.
pub fn reference_scene() -> Scene {
    Scene {
        ue: Vector3::new(50.0, 10.0, -20.0),
        ris: vec![Vector3::new(30.0, -5.0, -2.0), Vector3::new(16.0, 20.0, 31.0)],
        orientation: Matrix3::identity(),
        clock_bias: 50e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direction_of_axis_points() {
        let d = direction_and_angles(&Vector3::zeros(), &Vector3::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(d.distance, 3.0);
        assert_eq!(d.elevation, 0.0);
        assert_eq!(d.azimuth, 0.0);
        let up = direction_and_angles(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert!((up.elevation - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            direction_and_angles(&Vector3::zeros(), &Vector3::zeros()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn clock_shifted_anchor_halfway() {
        let d = 40.0;
        let a = clock_shifted_anchor(
            &Vector3::zeros(),
            &Vector3::new(d, 0.0, 0.0),
            d / (2.0 * SPEED_OF_LIGHT),
        );
        assert!((a - Vector3::new(d / 2.0, 0.0, 0.0)).norm() < 1e-12);
        let same = clock_shifted_anchor(&Vector3::zeros(), &Vector3::new(d, 1.0, 2.0), 0.0);
        assert_eq!(same, Vector3::new(d, 1.0, 2.0));
    }

    #[test]
    fn forward_map_reference_delays() {
        let scene = reference_scene();
        let xi = scene.position_params(Complex64::new(1.0, 0.0), vec![Complex64::new(1.0, 0.0); 2]);
        let eta = forward_map(&xi, &scene).unwrap();
        let d = (50.0f64 * 50.0 + 100.0 + 400.0).sqrt();
        assert!((eta.los.delay - (d / SPEED_OF_LIGHT + 50e-9)).abs() < 1e-18);
        // identity orientation: UE sees the negated BS-side cosines
        assert!((eta.los.ue_g + eta.los.bs_g).abs() < 1e-15);
        assert!((eta.los.ue_s + eta.los.bs_s).abs() < 1e-15);
        assert!((eta.los.bs_g - 10.0 / d).abs() < 1e-15);
    }

    #[test]
    fn vector_round_trips() {
        let scene = reference_scene();
        let xi = scene.position_params(
            Complex64::new(0.3, -0.2),
            vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)],
        );
        assert_eq!(PositionParams::from_slice(xi.to_vector().as_slice()).unwrap(), xi);
        let eta = forward_map(&xi, &scene).unwrap();
        assert_eq!(ChannelParams::from_slice(eta.to_vector().as_slice()).unwrap(), eta);
        assert_eq!(eta.to_vector().len(), ChannelParams::dim(2));
    }

    #[test]
    fn validate_rejects_aligned_ris() {
        let mut scene = reference_scene();
        scene.ris[1] = scene.ris[0] * 2.0;
        assert!(matches!(scene.validate(), Err(Error::DegenerateGeometry(_))));
        assert!(reference_scene().validate().is_ok());
    }

    fn point() -> impl Strategy<Value = Vector3<f64>> {
        (5.0..80.0f64, -40.0..40.0f64, -40.0..40.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn cosines_are_unit(p in point(), q in point()) {
            prop_assume!((p - q).norm() > 1e-3);
            let d = direction_and_angles(&q, &p).unwrap();
            prop_assert!((d.cosines().norm() - 1.0).abs() < 1e-12);
            prop_assert!((d.cosines() - d.unit).norm() < 1e-12);
        }

        #[test]
        fn forward_map_is_continuous(p in point(), step in proptest::array::uniform3(-1.0..1.0f64)) {
            let scene = reference_scene();
            prop_assume!(scene.ris.iter().all(|r| (r - p).norm() > 1.0));
            let xi = PositionParams { ue: p, ..scene.position_params(Complex64::new(1.0, 0.0), vec![Complex64::new(1.0, 0.0); 2]) };
            let moved = PositionParams { ue: p + Vector3::from(step) * 1e-6, ..xi.clone() };
            let a = forward_map(&xi, &scene).unwrap().to_vector();
            let b = forward_map(&moved, &scene).unwrap().to_vector();
            for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
                let delay = i == 2 || (i >= 7 && (i - 7) % 5 == 2);
                let limit = if delay { 2e-6 / SPEED_OF_LIGHT } else { 2e-6 };
                prop_assert!((x - y).abs() <= limit, "coordinate {} moved by {}", i, (x - y).abs());
            }
        }

        #[test]
        fn anchor_inverts_shift(p in point(), delta in -1e-7..1e-7f64) {
            let a = clock_shifted_anchor(&Vector3::zeros(), &p, delta);
            let r = p / p.norm();
            prop_assert!((a + r * (SPEED_OF_LIGHT * delta) - p).norm() < 1e-9);
        }

        #[test]
        fn ue_cosines_stay_in_unit_disc(p in point(), yaw in -180.0..180.0f64, pitch in -80.0..80.0f64, roll in -180.0..180.0f64) {
            let o = orientation_from_euler_deg(yaw, pitch, roll);
            let u = ue_cosines(&o, &(p / p.norm()));
            prop_assert!(u.y * u.y + u.z * u.z <= 1.0 + 1e-12);
        }
    }
}
