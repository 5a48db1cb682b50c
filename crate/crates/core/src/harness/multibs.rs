//! Two BS and two UEs sharing the same RIS, fused onto one target UE.
//!
//! Every BS array is parallel to the reference one, so each (BS, UE) pair
//! is simulated in coordinates translated to put that BS at the origin.

use nalgebra::{DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::channel::RisProfile;
use crate::error::{Error, Result};
use crate::fusion::{locate, multi_fuse, plug_in_position_cov, RelativeEstimate, Weighting};
use crate::linalg::spd_inverse;
use crate::risdesign::{design_phase_multibs, AngularRegion, PowerIteration};
use crate::scene::{direction_and_angles, PositionParams, Scene};

use super::config::ExperimentConfig;
use super::run::{mix_seed, OperatingPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiBsSetup {
    pub config: ExperimentConfig,
    pub base_stations: Vec<Vector3<f64>>,
    pub ues: Vec<Vector3<f64>>,
    /// Index of the UE whose position is reported.
    pub target: usize,
}

impl MultiBsSetup {
    /// BS at `[0,0,0]` and `[0,10,0]`, UEs at `[50,10,20]` and `[52,10,20]`.
    pub fn reference(config: &ExperimentConfig) -> Self {
        MultiBsSetup {
            config: config.clone(),
            base_stations: vec![Vector3::zeros(), Vector3::new(0.0, 10.0, 0.0)],
            ues: vec![Vector3::new(50.0, 10.0, 20.0), Vector3::new(52.0, 10.0, 20.0)],
            target: 0,
        }
    }

    fn ris(&self) -> Vec<Vector3<f64>> {
        self.config.scene().ris
    }

    /// Scene of one (BS, UE) pair in that BS's coordinates.
    pub fn pair_scene(&self, bs: usize, ue: usize) -> Scene {
        let origin = self.base_stations[bs];
        let mut scene = self.config.scene();
        scene.ue = self.ues[ue] - origin;
        scene.ris = self.ris().iter().map(|p| p - origin).collect();
        scene
    }

    /// One profile per RIS covering every UE and BS of the setup.
    pub fn design(&self) -> Result<RisProfile> {
        let shape = self.config.arrays().ris;
        let half = (
            self.config.design.half_width_deg[0].to_radians(),
            self.config.design.half_width_deg[1].to_radians(),
        );
        let grid = (self.config.design.grid[0], self.config.design.grid[1]);
        let phases = self
            .ris()
            .iter()
            .map(|r| {
                let target = direction_and_angles(r, &self.ues[self.target])?;
                let ue_region = AngularRegion::around(target.elevation, target.azimuth, half, grid);
                let towards_bs = self
                    .base_stations
                    .iter()
                    .map(|b| direction_and_angles(r, b))
                    .collect::<Result<Vec<_>>>()?;
                let span = |f: fn(&crate::scene::Direction) -> f64| {
                    towards_bs
                        .iter()
                        .map(f)
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
                };
                let bs_region = AngularRegion {
                    elevation: span(|d| d.elevation),
                    azimuth: span(|d| d.azimuth),
                    grid: (4, 4),
                };
                Ok(design_phase_multibs(shape, &ue_region, &bs_region, &PowerIteration::default())?.phases)
            })
            .collect::<Result<Vec<DVector<f64>>>>()?;
        Ok(RisProfile::from_phases(&phases))
    }
}

/// All pairs of a setup at one noise level.
#[derive(Debug, Clone)]
pub struct MultiBsPoint {
    pub setup: MultiBsSetup,
    /// `(bs, ue, point)` in setup order.
    pub pairs: Vec<(usize, usize, OperatingPoint)>,
}

impl MultiBsPoint {
    /// The noise level follows the configured SNR on the first BS and target UE.
    pub fn new(setup: &MultiBsSetup, key: u64) -> Result<Self> {
        let profile = setup.design()?;
        let first = OperatingPoint::with_profile(
            &setup.config,
            setup.pair_scene(0, setup.target),
            profile.clone(),
            None,
            key,
        )?;
        let sigma = first.sigma;
        let mut pairs = Vec::new();
        for bs in 0..setup.base_stations.len() {
            for ue in 0..setup.ues.len() {
                let point = OperatingPoint::with_profile(
                    &setup.config,
                    setup.pair_scene(bs, ue),
                    profile.clone(),
                    Some(sigma),
                    mix_seed(&[key, bs as u64, ue as u64]),
                )?;
                pairs.push((bs, ue, point));
            }
        }
        Ok(MultiBsPoint {
            setup: setup.clone(),
            pairs,
        })
    }

    fn target_pair(&self) -> &OperatingPoint {
        let t = self.setup.target;
        &self
            .pairs
            .iter()
            .find(|(b, u, _)| *b == 0 && *u == t)
            .expect("first BS pair")
            .2
    }

    /// PEB of the first BS alone and of the fusion of every pair with known offsets.
    pub fn bounds(&self) -> Result<(f64, f64)> {
        let single = self.target_pair().position_bound()?;
        let mut info = Matrix3::zeros();
        for (_, _, point) in &self.pairs {
            let cov = point.position_bound()?;
            info += cov
                .try_inverse()
                .ok_or_else(|| Error::Unidentifiable("pair bound".into()))?;
        }
        let fused = spd_inverse(&nalgebra::DMatrix::from_column_slice(3, 3, info.as_slice()))?;
        Ok((single.trace().sqrt(), fused.trace().sqrt()))
    }

    /// Target-UE position errors of the first BS alone and of the fused estimate.
    pub fn run_trial(&self, index: u64) -> Result<(f64, f64)> {
        let truth = self.setup.ues[self.setup.target];
        let mut estimates = Vec::with_capacity(self.pairs.len());
        let mut single = None;
        for (bs, ue, point) in &self.pairs {
            let real = point.realise(index)?;
            let est = crate::estimator::estimate_channel_params(&real.obs, &point.model, &point.estimator)?;
            let loc = locate(
                &est.eta,
                &point.model,
                &point.scene.orientation,
                real.obs.noise_variance,
                Weighting::PathBounds,
                &point.search,
            )?;
            let xi = PositionParams {
                ue: loc.fusion.position,
                clock_bias: loc.fusion.clock_bias,
                los_gain: est.eta.los.gain,
                ris_gains: est.eta.ris.iter().map(|p| p.gain).collect(),
            };
            let covariance = plug_in_position_cov(&loc.f_eta, &xi, &point.scene)?;
            let absolute = loc.fusion.position + self.setup.base_stations[*bs];
            if *bs == 0 && *ue == self.setup.target {
                single = Some((absolute - truth).norm());
            }
            estimates.push(RelativeEstimate {
                position: absolute,
                covariance,
                offset: self.setup.ues[*ue] - truth,
                offset_covariance: Matrix3::zeros(),
            });
        }
        let fused = multi_fuse(&estimates)?;
        Ok((single.expect("target pair present"), (fused - truth).norm()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiBsSummary {
    pub rmse_single: f64,
    pub rmse_fused: f64,
    pub peb_single: f64,
    pub peb_fused: f64,
    pub trials_ok: usize,
    pub trials: usize,
}

/// Monte-Carlo comparison of single-BS and fused positioning.
pub fn run_multi_bs(setup: &MultiBsSetup, trials: usize) -> Result<MultiBsSummary> {
    let key = mix_seed(&[setup.config.seed, 0x6d75_6c74_69]);
    let point = MultiBsPoint::new(setup, key)?;
    let (peb_single, peb_fused) = point.bounds()?;
    let results: Vec<Result<(f64, f64)>> = (0..trials as u64).into_par_iter().map(|i| point.run_trial(i)).collect();
    let ok: Vec<(f64, f64)> = results.into_iter().filter_map(|r| r.ok()).collect();
    let rms = |f: fn(&(f64, f64)) -> f64| (ok.iter().map(|e| f(e).powi(2)).sum::<f64>() / ok.len() as f64).sqrt();
    Ok(MultiBsSummary {
        rmse_single: rms(|e| e.0),
        rmse_fused: rms(|e| e.1),
        peb_single,
        peb_fused,
        trials_ok: ok.len(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Profile;

    #[test]
    fn noiseless_fusion_is_exact() {
        let mut config = ExperimentConfig::for_profile(Profile::Desk);
        config.snr_db = f64::INFINITY;
        config.fading = false;
        config.radio.rician_bu = f64::INFINITY;
        config.radio.rician_ru = f64::INFINITY;
        let setup = MultiBsSetup::reference(&config);
        let point = MultiBsPoint::new(&setup, 11).unwrap();
        assert_eq!(point.pairs.len(), 4);
        let (single, fused) = point.run_trial(0).unwrap();
        assert!(single < 1e-5 && fused < 1e-5, "{single} {fused}");
    }

    #[test]
    fn pair_scenes_are_translated() {
        let setup = MultiBsSetup::reference(&ExperimentConfig::for_profile(Profile::Desk));
        let s = setup.pair_scene(1, 1);
        assert_eq!(s.ue, Vector3::new(52.0, 0.0, 20.0));
        assert_eq!(s.ris[0], Vector3::new(30.0, -15.0, -2.0));
    }
}
