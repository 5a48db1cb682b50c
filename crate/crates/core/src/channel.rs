//! Array responses, multipath channel synthesis and noisy reception.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{kron, CMatrix, CVector};
use crate::scene::{
    direction_and_angles, ris_departure_cosines, ue_cosines, ChannelParams, RisLink, Scene, SPEED_OF_LIGHT,
};

/// Rows by columns of a uniform rectangular array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayShape {
    pub rows: usize,
    pub cols: usize,
}

impl ArrayShape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        ArrayShape { rows, cols }
    }

    pub const fn square(side: usize) -> Self {
        ArrayShape { rows: side, cols: side }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrays {
    pub bs: ArrayShape,
    pub ue: ArrayShape,
    pub ris: ArrayShape,
}

/// Half-wavelength ULA response `(1/sqrt(m)) [1, e^{i pi x}, ..]`.
pub fn ula_steering(len: usize, x: f64) -> CVector {
    let amp = 1.0 / (len as f64).sqrt();
    CVector::from_fn(len, |m, _| Complex64::from_polar(amp, PI * m as f64 * x))
}

pub fn ula_steering_derivative(len: usize, x: f64) -> CVector {
    let amp = 1.0 / (len as f64).sqrt();
    CVector::from_fn(len, |m, _| {
        Complex64::new(0.0, PI * m as f64) * Complex64::from_polar(amp, PI * m as f64 * x)
    })
}

/// URA response: row-axis ULA in `x` Kronecker column-axis ULA in `y`.
pub fn ura_steering(shape: ArrayShape, x: f64, y: f64) -> CVector {
    kron(&ula_steering(shape.rows, x), &ula_steering(shape.cols, y))
}

pub fn ura_steering_dx(shape: ArrayShape, x: f64, y: f64) -> CVector {
    kron(&ula_steering_derivative(shape.rows, x), &ula_steering(shape.cols, y))
}

pub fn ura_steering_dy(shape: ArrayShape, x: f64, y: f64) -> CVector {
    kron(&ula_steering(shape.rows, x), &ula_steering_derivative(shape.cols, y))
}

/// Frequency-domain delay response `b_k = e^{-i 2 pi k W tau / K}`.
pub fn delay_steering(subcarriers: usize, bandwidth: f64, tau: f64) -> Result<CVector> {
    let window = subcarriers as f64 / bandwidth;
    if !(0.0..=window).contains(&tau) {
        return Err(Error::AmbiguousDelay { delay: tau, window });
    }
    Ok(delay_steering_unchecked(subcarriers, bandwidth, tau))
}

pub(crate) fn delay_steering_unchecked(subcarriers: usize, bandwidth: f64, tau: f64) -> CVector {
    CVector::from_fn(subcarriers, |k, _| {
        Complex64::from_polar(1.0, -subcarrier_omega(k, subcarriers, bandwidth) * tau)
    })
}

/// Angular offset `2 pi k W / K` of subcarrier `k`.
pub fn subcarrier_omega(k: usize, subcarriers: usize, bandwidth: f64) -> f64 {
    2.0 * PI * k as f64 * bandwidth / subcarriers as f64
}

/// Free-space style path loss `lambda^2 / (16 pi^2 d^L)`.
pub fn path_loss(wavelength: f64, distance: f64, exponent: f64) -> f64 {
    wavelength * wavelength / (16.0 * PI * PI * distance.powf(exponent))
}

/// Share of a Rician link carried by the specular component.
pub fn specular_fraction(rician: f64) -> f64 {
    if rician.is_infinite() {
        1.0
    } else {
        rician / (1.0 + rician)
    }
}

pub fn scattered_fraction(rician: f64) -> f64 {
    if rician.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + rician)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub subcarriers: usize,
    pub bandwidth: f64,
    pub carrier: f64,
    pub time_slots: usize,
    pub tx_power: f64,
    pub rician_bu: f64,
    pub rician_ru: f64,
    pub pathloss_bu: f64,
    pub pathloss_ris: f64,
}

impl RadioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier
    }

    /// Unambiguous delay window `K / W`.
    pub fn delay_window(&self) -> f64 {
        self.subcarriers as f64 / self.bandwidth
    }
}

/// One path of the parametric model: `gain e^{-i w_k delay} ue_vec bs_vec^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTerm {
    pub gain: Complex64,
    pub delay: f64,
    pub ue_vec: CVector,
    pub bs_vec: CVector,
}

impl PathTerm {
    pub fn matrix(&self, omega: f64) -> CMatrix {
        let c = self.gain * Complex64::from_polar(1.0, -omega * self.delay);
        &self.ue_vec * self.bs_vec.adjoint() * c
    }
}

/// Noiseless channel as a function of the channel parameters, with the
/// BS-to-RIS geometry known. Paths are ordered RIS 1..Q, then LOS.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub bs: ArrayShape,
    pub ue: ArrayShape,
    pub subcarriers: usize,
    pub bandwidth: f64,
    pub links: Vec<RisLink>,
}

impl ChannelModel {
    pub fn new(arrays: &Arrays, radio: &RadioConfig, links: Vec<RisLink>) -> Self {
        ChannelModel {
            bs: arrays.bs,
            ue: arrays.ue,
            subcarriers: radio.subcarriers,
            bandwidth: radio.bandwidth,
            links,
        }
    }

    pub fn path_count(&self) -> usize {
        self.links.len() + 1
    }

    pub fn omega(&self, k: usize) -> f64 {
        subcarrier_omega(k, self.subcarriers, self.bandwidth)
    }

    pub fn path_terms(&self, eta: &ChannelParams) -> Result<Vec<PathTerm>> {
        if eta.ris.len() != self.links.len() {
            return Err(Error::Shape(format!(
                "{} reflected paths for {} RIS links",
                eta.ris.len(),
                self.links.len()
            )));
        }
        let mut terms: Vec<PathTerm> = eta
            .ris
            .iter()
            .zip(&self.links)
            .map(|(r, link)| PathTerm {
                gain: r.gain,
                delay: link.delay + r.delay,
                ue_vec: ura_steering(self.ue, r.ue_g, r.ue_s),
                bs_vec: ura_steering(self.bs, link.bs_g, link.bs_s),
            })
            .collect();
        let l = &eta.los;
        terms.push(PathTerm {
            gain: l.gain,
            delay: l.delay,
            ue_vec: ura_steering(self.ue, l.ue_g, l.ue_s),
            bs_vec: ura_steering(self.bs, l.bs_g, l.bs_s),
        });
        Ok(terms)
    }

    /// Per-subcarrier sum of the given terms.
    pub fn response(&self, terms: &[PathTerm]) -> Vec<CMatrix> {
        (0..self.subcarriers)
            .map(|k| {
                let w = self.omega(k);
                let mut h = CMatrix::zeros(self.ue.len(), self.bs.len());
                for t in terms {
                    h += t.matrix(w);
                }
                h
            })
            .collect()
    }

    pub fn noiseless(&self, eta: &ChannelParams) -> Result<Vec<CMatrix>> {
        Ok(self.response(&self.path_terms(eta)?))
    }
}

/// `gain e^{-i w_k delay} left right^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneLink {
    pub gain: Complex64,
    pub delay: f64,
    pub left: CVector,
    pub right: CVector,
}

impl RankOneLink {
    pub fn phasor(&self, omega: f64) -> Complex64 {
        self.gain * Complex64::from_polar(1.0, -omega * self.delay)
    }

    pub fn matrix(&self, omega: f64) -> CMatrix {
        &self.left * self.right.adjoint() * self.phasor(omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisChannel {
    pub bs_ris: RankOneLink,
    pub ris_ue: RankOneLink,
    /// Per-subcarrier scattered part of the RIS-UE link (empty when specular only).
    pub ris_ue_scatter: Vec<CMatrix>,
}

/// All physical links of one realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Links {
    pub subcarriers: usize,
    pub bandwidth: f64,
    pub bs_ue: RankOneLink,
    pub bs_ue_scatter: Vec<CMatrix>,
    pub ris: Vec<RisChannel>,
}

/// Large-scale power gains of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub bs_ue: f64,
    pub bs_ris: Vec<f64>,
    pub ris_ue: Vec<f64>,
}

impl LinkBudget {
    pub fn new(scene: &Scene, radio: &RadioConfig) -> Result<Self> {
        let lambda = radio.wavelength();
        let origin = nalgebra::Vector3::zeros();
        let d_bu = direction_and_angles(&origin, &scene.ue)?.distance;
        let mut bs_ris = Vec::new();
        let mut ris_ue = Vec::new();
        for p in &scene.ris {
            let d_br = direction_and_angles(&origin, p)?.distance;
            let d_ru = direction_and_angles(p, &scene.ue)?.distance;
            bs_ris.push(path_loss(lambda, d_br, radio.pathloss_ris));
            ris_ue.push(path_loss(lambda, d_ru, radio.pathloss_ris));
        }
        Ok(LinkBudget {
            bs_ue: path_loss(lambda, d_bu, radio.pathloss_bu),
            bs_ris,
            ris_ue,
        })
    }

    /// Variance of the scattered terms as seen in the de-precoded observation.
    pub fn scatter_variance(&self, radio: &RadioConfig, ris: ArrayShape) -> f64 {
        let m = ris.len() as f64;
        let reflected: f64 = self.bs_ris.iter().zip(&self.ris_ue).map(|(br, ru)| m * br * ru).sum();
        self.bs_ue * scattered_fraction(radio.rician_bu) + reflected * scattered_fraction(radio.rician_ru)
    }
}

/// Unit-modulus small-scale phases `alpha` of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPhases {
    pub bs_ue: Complex64,
    pub bs_ris: Vec<Complex64>,
    pub ris_ue: Vec<Complex64>,
}

impl LinkPhases {
    pub fn unit(ris_count: usize) -> Self {
        let one = Complex64::new(1.0, 0.0);
        LinkPhases {
            bs_ue: one,
            bs_ris: vec![one; ris_count],
            ris_ue: vec![one; ris_count],
        }
    }

    pub fn random<R: Rng + ?Sized>(ris_count: usize, rng: &mut R) -> Self {
        let mut draw = || Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
        let bs_ue = draw();
        let bs_ris = (0..ris_count).map(|_| draw()).collect();
        let ris_ue = (0..ris_count).map(|_| draw()).collect();
        LinkPhases { bs_ue, bs_ris, ris_ue }
    }
}

/// Reflection coefficients of every RIS (unit modulus).
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfile {
    pub coefficients: Vec<CVector>,
}

impl RisProfile {
    pub fn from_phases(phases: &[nalgebra::DVector<f64>]) -> Self {
        RisProfile {
            coefficients: phases
                .iter()
                .map(|p| p.map(|x| Complex64::from_polar(1.0, x)))
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(ris_count: usize, elements: usize, rng: &mut R) -> Self {
        let phases: Vec<_> = (0..ris_count)
            .map(|_| nalgebra::DVector::from_fn(elements, |_, _| rng.gen_range(0.0..2.0 * PI)))
            .collect();
        Self::from_phases(&phases)
    }

    pub fn phases(&self) -> Vec<nalgebra::DVector<f64>> {
        self.coefficients.iter().map(|c| c.map(|z| z.arg())).collect()
    }
}

pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(variance, rng);
        }
    }
    m
}

/// Draws all links of one realisation. Scattered components are only
/// generated when `scatter` is true and the Rician factor is finite.
pub fn synth_links<R: Rng + ?Sized>(
    scene: &Scene,
    arrays: &Arrays,
    radio: &RadioConfig,
    phases: &LinkPhases,
    scatter: bool,
    rng: &mut R,
) -> Result<Links> {
    scene.validate()?;
    if phases.bs_ris.len() != scene.ris.len() || phases.ris_ue.len() != scene.ris.len() {
        return Err(Error::Shape("link phases do not match the RIS count".into()));
    }
    let budget = LinkBudget::new(scene, radio)?;
    let (n, d, m) = (arrays.bs.len() as f64, arrays.ue.len() as f64, arrays.ris.len() as f64);
    let origin = nalgebra::Vector3::zeros();
    let k = radio.subcarriers;

    let los = direction_and_angles(&origin, &scene.ue)?;
    let ue_los = ue_cosines(&scene.orientation, &los.unit);
    let bs_ue = RankOneLink {
        gain: phases.bs_ue * (specular_fraction(radio.rician_bu) * budget.bs_ue * n * d).sqrt(),
        delay: los.distance / SPEED_OF_LIGHT + scene.clock_bias,
        left: ura_steering(arrays.ue, ue_los.y, ue_los.z),
        right: ura_steering(arrays.bs, los.unit.y, los.unit.z),
    };
    let scatter_bu = scattered_fraction(radio.rician_bu) * budget.bs_ue;
    let bs_ue_scatter = if scatter && scatter_bu > 0.0 {
        (0..k)
            .map(|_| gaussian_matrix(arrays.ue.len(), arrays.bs.len(), scatter_bu, rng))
            .collect()
    } else {
        Vec::new()
    };

    let mut ris = Vec::with_capacity(scene.ris.len());
    for (q, p) in scene.ris.iter().enumerate() {
        let link = RisLink::new(*p)?;
        let bs_ris = RankOneLink {
            gain: phases.bs_ris[q] * (budget.bs_ris[q] * m * n).sqrt(),
            delay: link.delay,
            left: ura_steering(arrays.ris, link.ris_f, link.ris_s),
            right: ura_steering(arrays.bs, link.bs_g, link.bs_s),
        };
        let (f_r, s_r, d_ru) = ris_departure_cosines(p, &scene.ue)?;
        let travel = (scene.ue - p) / d_ru;
        let u = ue_cosines(&scene.orientation, &travel);
        let ris_ue = RankOneLink {
            gain: phases.ris_ue[q] * (specular_fraction(radio.rician_ru) * budget.ris_ue[q] * m * d).sqrt(),
            delay: d_ru / SPEED_OF_LIGHT + scene.clock_bias,
            left: ura_steering(arrays.ue, u.y, u.z),
            right: ura_steering(arrays.ris, f_r, s_r),
        };
        let scatter_ru = scattered_fraction(radio.rician_ru) * budget.ris_ue[q];
        let ris_ue_scatter = if scatter && scatter_ru > 0.0 {
            (0..k)
                .map(|_| gaussian_matrix(arrays.ue.len(), arrays.ris.len(), scatter_ru, rng))
                .collect()
        } else {
            Vec::new()
        };
        ris.push(RisChannel {
            bs_ris,
            ris_ue,
            ris_ue_scatter,
        });
    }
    Ok(Links {
        subcarriers: k,
        bandwidth: radio.bandwidth,
        bs_ue,
        bs_ue_scatter,
        ris,
    })
}

/// Composite reflected gain `h_BR h_RU a_RU^H diag(theta) a_BR`.
pub fn reflected_gain(channel: &RisChannel, coefficients: &CVector) -> Complex64 {
    let beam = channel
        .ris_ue
        .right
        .dotc(&coefficients.component_mul(&channel.bs_ris.left));
    channel.bs_ris.gain * channel.ris_ue.gain * beam
}

/// Channel parameters of the specular components for a given RIS profile.
pub fn true_channel_params(links: &Links, scene: &Scene, profile: &RisProfile) -> Result<ChannelParams> {
    check_profile(links, profile)?;
    let gains: Vec<Complex64> = links
        .ris
        .iter()
        .zip(&profile.coefficients)
        .map(|(c, theta)| reflected_gain(c, theta))
        .collect();
    let xi = scene.position_params(links.bs_ue.gain, gains);
    crate::scene::forward_map(&xi, scene)
}

fn check_profile(links: &Links, profile: &RisProfile) -> Result<()> {
    if profile.coefficients.len() != links.ris.len() {
        return Err(Error::Shape(format!(
            "{} RIS profiles for {} RIS",
            profile.coefficients.len(),
            links.ris.len()
        )));
    }
    for (c, theta) in links.ris.iter().zip(&profile.coefficients) {
        if theta.len() != c.bs_ris.left.len() {
            return Err(Error::Shape(format!(
                "RIS profile of length {} for {} elements",
                theta.len(),
                c.bs_ris.left.len()
            )));
        }
    }
    Ok(())
}

/// `H_k = H_BU,k + sum_q H_RU,k,q diag(theta_q) H_BR,k,q` for every subcarrier.
pub fn effective_channel(links: &Links, profile: &RisProfile) -> Result<Vec<CMatrix>> {
    check_profile(links, profile)?;
    let out = (0..links.subcarriers)
        .map(|k| {
            let w = subcarrier_omega(k, links.subcarriers, links.bandwidth);
            let mut h = links.bs_ue.matrix(w);
            if let Some(s) = links.bs_ue_scatter.get(k) {
                h += s;
            }
            for (c, theta) in links.ris.iter().zip(&profile.coefficients) {
                // H_BR is rank one, so only its left vector passes through the RIS
                let incident = theta.component_mul(&c.bs_ris.left);
                let mut towards_ue = &c.ris_ue.left * (c.ris_ue.right.dotc(&incident) * c.ris_ue.phasor(w));
                if let Some(s) = c.ris_ue_scatter.get(k) {
                    towards_ue += s * &incident;
                }
                h += towards_ue * c.bs_ris.right.adjoint() * c.bs_ris.phasor(w);
            }
            h
        })
        .collect();
    Ok(out)
}

/// DFT-column pilots with `X X^H = gamma I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub x: CMatrix,
    pub gamma: f64,
}

impl Precoder {
    /// Cycles through the `N` DFT columns with per-slot power `p`. When `T`
    /// is not a multiple of `N` the columns used one extra time are scaled
    /// down so every direction carries the same energy.
    pub fn dft(antennas: usize, slots: usize, power: f64) -> Result<Self> {
        if slots < antennas || antennas == 0 {
            return Err(Error::InvalidInput(format!(
                "need at least {antennas} time slots, got {slots}"
            )));
        }
        let full = slots / antennas;
        let extra = slots % antennas;
        let mut x = CMatrix::zeros(antennas, slots);
        for t in 0..slots {
            let col = t % antennas;
            let uses = if col < extra { full + 1 } else { full };
            let scale = (power / antennas as f64 * full as f64 / uses as f64).sqrt();
            for n in 0..antennas {
                let phase = -2.0 * PI * (n * col) as f64 / antennas as f64;
                x[(n, t)] = Complex64::from_polar(scale, phase);
            }
        }
        Ok(Precoder {
            x,
            gamma: power * full as f64,
        })
    }
}

/// De-precoded observations `R_k X^H / gamma` and their effective noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub per_subcarrier: Vec<CMatrix>,
    pub noise_variance: f64,
}

/// Noise standard deviation giving `snr_db` against a received power.
pub fn noise_sigma(snr_db: f64, received_power: f64) -> f64 {
    (received_power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Mean received power per antenna and slot of noiseless channels.
pub fn received_power(channels: &[CMatrix], tx_power: f64) -> f64 {
    if channels.is_empty() {
        return 0.0;
    }
    let (d, n) = channels[0].shape();
    let total: f64 = channels.iter().map(|h| h.norm_squared()).sum();
    tx_power * total / (channels.len() as f64 * (d * n) as f64)
}

/// Transmits the pilots through `channels`, adds thermal noise and removes the precoder.
pub fn simulate_reception<R: Rng + ?Sized>(
    channels: &[CMatrix],
    precoder: &Precoder,
    sigma: f64,
    scatter_variance: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    let xh = precoder.x.adjoint();
    let inv_gamma = Complex64::new(1.0 / precoder.gamma, 0.0);
    let mut out = Vec::with_capacity(channels.len());
    for h in channels {
        if h.ncols() != precoder.x.nrows() {
            return Err(Error::Shape(format!(
                "channel with {} columns for a {}-antenna precoder",
                h.ncols(),
                precoder.x.nrows()
            )));
        }
        let mut r = h * &precoder.x;
        if sigma > 0.0 {
            r += gaussian_matrix(r.nrows(), r.ncols(), sigma * sigma, rng);
        }
        out.push(r * &xh * inv_gamma);
    }
    Ok(ObservationSet {
        per_subcarrier: out,
        noise_variance: sigma * sigma / precoder.gamma + scatter_variance,
    })
}

/// Real matrix with entries `|z|^2`, handy for power maps in examples.
pub fn power_map(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.norm_sqr())
}
