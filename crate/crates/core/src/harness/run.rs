//! One operating point of an experiment and the Monte-Carlo trials run at it.

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{
    effective_channel, noise_sigma, simulate_reception, synth_links, true_channel_params, Arrays, ChannelModel,
    LinkBudget, LinkPhases, Links, Precoder, RisProfile,
};
use crate::crb::{fim_eta, fim_xi, jacobian, peb_ceb, position_crb, ErrorBounds};
use crate::error::{Error, Result};
use crate::estimator::{estimate_channel_params, EstimatedEta, EstimatorSpec, Labeling};
use crate::fusion::{exip_minimize, locate, ClockSearch, Weighting};
use crate::risdesign::{design_phase_single, random_phases, AngularRegion, PowerIteration};
use crate::scene::{direction_and_angles, ChannelParams, PositionParams, RisLink, Scene};

use super::config::{ExperimentConfig, Method, PhaseChoice, SweepValue};

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of several words.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub fn value_key(value: &SweepValue) -> u64 {
    match value {
        SweepValue::Number(x) => x.to_bits(),
        SweepValue::Label(s) => s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
        }),
    }
}

/// Independent stream for one trial: the key selects the seed, the index the stream.
pub fn trial_rng(key: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Design-time stream, kept apart from every trial stream.
const DESIGN_STREAM: u64 = u64::MAX;

/// Noise reference: mean received power per antenna pair with every RIS at
/// unit beam gain, so the SNR does not depend on the phase design.
pub fn reference_power(links: &Links, arrays: &Arrays, tx_power: f64) -> f64 {
    let reflected: f64 = links
        .ris
        .iter()
        .map(|c| (c.bs_ris.gain * c.ris_ue.gain).norm_sqr())
        .sum();
    tx_power * (links.bs_ue.gain.norm_sqr() + reflected) / (arrays.bs.len() * arrays.ue.len()) as f64
}

/// RIS phases for a single-BS scene.
pub fn design_profile(config: &ExperimentConfig, scene: &Scene, key: u64) -> Result<RisProfile> {
    let ris = config.arrays().ris;
    match config.design.phase_design {
        PhaseChoice::Random => {
            let mut rng = trial_rng(key, DESIGN_STREAM);
            Ok(RisProfile::from_phases(
                &scene
                    .ris
                    .iter()
                    .map(|_| random_phases(ris.len(), &mut rng))
                    .collect::<Vec<_>>(),
            ))
        }
        PhaseChoice::Svd => {
            let half = (
                config.design.half_width_deg[0].to_radians(),
                config.design.half_width_deg[1].to_radians(),
            );
            let grid = (config.design.grid[0], config.design.grid[1]);
            let phases = scene
                .ris
                .iter()
                .map(|p| {
                    let link = RisLink::new(*p)?;
                    let towards_ue = direction_and_angles(p, &scene.ue)?;
                    let region = AngularRegion::around(towards_ue.elevation, towards_ue.azimuth, half, grid);
                    Ok(design_phase_single(ris, &link, &region, &PowerIteration::default())?.phases)
                })
                .collect::<Result<Vec<DVector<f64>>>>()?;
            Ok(RisProfile::from_phases(&phases))
        }
    }
}

/// Everything fixed across the trials of one sweep value.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub config: ExperimentConfig,
    pub key: u64,
    pub scene: Scene,
    pub arrays: Arrays,
    pub model: ChannelModel,
    pub profile: RisProfile,
    pub precoder: Precoder,
    pub sigma: f64,
    pub scatter_variance: f64,
    /// Effective noise variance of the de-precoded observation.
    pub noise_variance: f64,
    /// Channel parameters at nominal (unit) small-scale phases.
    pub nominal_eta: ChannelParams,
    /// `None` when the information matrix is singular at this point.
    pub bounds: Option<ErrorBounds>,
    pub estimator: EstimatorSpec,
    pub search: ClockSearch,
}

impl OperatingPoint {
    /// Operating point of `config` with its RIS phases designed from the config.
    pub fn new(config: &ExperimentConfig, key: u64) -> Result<Self> {
        let scene = config.scene();
        let profile = design_profile(config, &scene, key)?;
        Self::with_profile(config, scene, profile, None, key)
    }

    /// Operating point for an explicit scene and profile. `sigma` overrides
    /// the noise level otherwise derived from the configured SNR.
    pub fn with_profile(
        config: &ExperimentConfig,
        scene: Scene,
        profile: RisProfile,
        sigma: Option<f64>,
        key: u64,
    ) -> Result<Self> {
        scene.validate()?;
        let arrays = config.arrays();
        let radio = &config.radio;
        let model = ChannelModel::new(&arrays, radio, scene.links()?);
        let mut scratch = trial_rng(key, DESIGN_STREAM - 1);
        let nominal = synth_links(
            &scene,
            &arrays,
            radio,
            &LinkPhases::unit(scene.ris.len()),
            false,
            &mut scratch,
        )?;
        let nominal_eta = true_channel_params(&nominal, &scene, &profile)?;
        let sigma =
            sigma.unwrap_or_else(|| noise_sigma(config.snr_db, reference_power(&nominal, &arrays, radio.tx_power)));
        let precoder = Precoder::dft(arrays.bs.len(), radio.time_slots, radio.tx_power)?;
        let scatter_variance = if config.fading {
            LinkBudget::new(&scene, radio)?.scatter_variance(radio, arrays.ris)
        } else {
            0.0
        };
        let noise_variance = sigma * sigma / precoder.gamma + scatter_variance;
        let bounds = if noise_variance > 0.0 {
            let f_eta = fim_eta(&model, &nominal_eta, noise_variance)?;
            let xi = nominal_position_params(&scene, &nominal_eta);
            fim_xi(&f_eta, &jacobian(&xi, &scene)?).and_then(|f| peb_ceb(&f)).ok()
        } else {
            Some(ErrorBounds { peb: 0.0, ceb: 0.0 })
        };
        let mut estimator = EstimatorSpec::new(model.path_count(), radio.subcarriers);
        if let Some(n) = config.estimator.angle_points {
            estimator.angle_search.coarse_points = n;
        }
        if let Some(n) = config.estimator.delay_points {
            estimator.delay_search.coarse_points = n;
        }
        Ok(OperatingPoint {
            config: config.clone(),
            key,
            scene,
            arrays,
            model,
            profile,
            precoder,
            sigma,
            scatter_variance,
            noise_variance,
            nominal_eta,
            bounds,
            estimator,
            search: ClockSearch::for_bandwidth(radio.bandwidth),
        })
    }

    /// Position-block CRB at nominal phases.
    pub fn position_bound(&self) -> Result<nalgebra::Matrix3<f64>> {
        let f_eta = fim_eta(&self.model, &self.nominal_eta, self.noise_variance)?;
        let xi = nominal_position_params(&self.scene, &self.nominal_eta);
        position_crb(&fim_xi(&f_eta, &jacobian(&xi, &self.scene)?)?)
    }

    /// Draws one realisation and returns the observation with its true parameters.
    pub fn realise(&self, index: u64) -> Result<Realisation> {
        let mut rng = trial_rng(self.key, index);
        let radio = &self.config.radio;
        let ris_count = self.scene.ris.len();
        let phases = if self.config.fading {
            LinkPhases::random(ris_count, &mut rng)
        } else {
            LinkPhases::unit(ris_count)
        };
        let links = synth_links(&self.scene, &self.arrays, radio, &phases, self.config.fading, &mut rng)?;
        let truth = true_channel_params(&links, &self.scene, &self.profile)?;
        let channels = effective_channel(&links, &self.profile)?;
        let obs = simulate_reception(&channels, &self.precoder, self.sigma, self.scatter_variance, &mut rng)?;
        Ok(Realisation {
            xi: nominal_position_params(&self.scene, &truth),
            truth,
            obs,
        })
    }
}

fn nominal_position_params(scene: &Scene, eta: &ChannelParams) -> PositionParams {
    scene.position_params(eta.los.gain, eta.ris.iter().map(|p| p.gain).collect())
}

#[derive(Debug, Clone)]
pub struct Realisation {
    pub truth: ChannelParams,
    pub xi: PositionParams,
    pub obs: crate::channel::ObservationSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodEstimate {
    pub position: [f64; 3],
    pub clock_bias: f64,
    pub position_error: f64,
    pub clock_error: f64,
    /// Every estimated path sits closest to its own true path.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub estimate: std::result::Result<MethodEstimate, String>,
}

/// True when each estimated path is nearest to the true path with the same label.
pub fn paths_matched(estimate: &ChannelParams, truth: &ChannelParams, bandwidth: f64) -> bool {
    let points = |eta: &ChannelParams| {
        let mut v = vec![[eta.los.delay * bandwidth, eta.los.ue_g, eta.los.ue_s]];
        v.extend(eta.ris.iter().map(|p| [p.delay * bandwidth, p.ue_g, p.ue_s]));
        v
    };
    let est = points(estimate);
    let tru = points(truth);
    if est.len() != tru.len() {
        return false;
    }
    let dist = |a: &[f64; 3], b: &[f64; 3]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    est.iter().enumerate().all(|(i, e)| {
        let nearest = tru
            .iter()
            .enumerate()
            .min_by(|a, b| dist(e, a.1).total_cmp(&dist(e, b.1)))
            .map(|(j, _)| j);
        nearest == Some(i)
    })
}

fn finish(
    position: Vector3<f64>,
    clock_bias: f64,
    eta: &ChannelParams,
    real: &Realisation,
    point: &OperatingPoint,
) -> MethodEstimate {
    MethodEstimate {
        position: position.into(),
        clock_bias,
        position_error: (position - point.scene.ue).norm(),
        clock_error: (clock_bias - point.scene.clock_bias).abs(),
        matched: paths_matched(eta, &real.truth, point.config.radio.bandwidth),
    }
}

fn run_method(
    method: Method,
    point: &OperatingPoint,
    real: &Realisation,
    energy: &Result<EstimatedEta>,
) -> Result<MethodEstimate> {
    let orientation = &point.scene.orientation;
    match method {
        Method::ProposedEnergy | Method::LsBaseline => {
            let est = energy.as_ref().map_err(Clone::clone)?;
            let weighting = if method == Method::LsBaseline {
                Weighting::Identity
            } else {
                Weighting::PathBounds
            };
            let loc = locate(
                &est.eta,
                &point.model,
                orientation,
                real.obs.noise_variance,
                weighting,
                &point.search,
            )?;
            Ok(finish(
                loc.fusion.position,
                loc.fusion.clock_bias,
                &est.eta,
                real,
                point,
            ))
        }
        Method::ProposedDelay => {
            let spec = point.estimator.clone().with_labeling(Labeling::Delay);
            let est = estimate_channel_params(&real.obs, &point.model, &spec)?;
            let loc = locate(
                &est.eta,
                &point.model,
                orientation,
                real.obs.noise_variance,
                Weighting::PathBounds,
                &point.search,
            )?;
            Ok(finish(
                loc.fusion.position,
                loc.fusion.clock_bias,
                &est.eta,
                real,
                point,
            ))
        }
        Method::ExipOracle => {
            let est = energy.as_ref().map_err(Clone::clone)?;
            let variance = if real.obs.noise_variance > 0.0 {
                real.obs.noise_variance
            } else {
                1.0
            };
            let weight = fim_eta(&point.model, &est.eta, variance)?;
            let xi = exip_minimize(&est.eta, &weight, &real.xi, &point.scene, 100)?;
            Ok(finish(xi.ue, xi.clock_bias, &est.eta, real, point))
        }
    }
}

/// Runs every method on one shared realisation. Method failures are
/// recorded in the outcome; only a failure to simulate is an error.
pub fn run_trial(point: &OperatingPoint, methods: &[Method], index: u64) -> Result<Vec<MethodOutcome>> {
    let real = point.realise(index)?;
    let needs_energy = methods.iter().any(|m| *m != Method::ProposedDelay);
    let energy = if needs_energy {
        estimate_channel_params(&real.obs, &point.model, &point.estimator)
    } else {
        Err(Error::InvalidInput("not computed".into()))
    };
    Ok(methods
        .iter()
        .map(|&method| MethodOutcome {
            method,
            estimate: run_method(method, point, &real, &energy).map_err(|e| e.to_string()),
        })
        .collect())
}
