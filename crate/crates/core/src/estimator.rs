//! Channel-parameter estimation from de-precoded observations.
//!
//! The BS-side departure cosines of the LOS path come from a projected
//! beam search that removes the known RIS directions, delays and UE-side
//! cosines come from MUSIC on reshaped observation matrices, and paths are
//! labelled by ranking least-squares energies. Gains follow from a final
//! linear least-squares fit.

use num_complex::Complex64;

use crate::channel::{delay_steering_unchecked, ula_steering, ura_steering, ChannelModel, ObservationSet};
use crate::error::{Error, Result};
use crate::linalg::{golden_section_min, hermitian_eigen_desc, row_space_factor, CMatrix, CVector};
use crate::scene::{ChannelParams, LosParams, RisPathParams};

/// Relative energy gap under which two paths are considered tied.
const TIE_FRACTION: f64 = 0.01;
/// Largest accepted condition number of the gain regression.
const GAIN_CONDITION_LIMIT: f64 = 1e10;
/// Steering residuals shorter than this are skipped by the projected search.
const RESIDUAL_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSearchSpec {
    pub coarse_points: usize,
    /// Bracket width at which golden-section refinement stops, in units of
    /// the normalised search variable.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl PeakSearchSpec {
    pub fn for_paths(paths: usize) -> Self {
        PeakSearchSpec {
            coarse_points: 64 * paths,
            tolerance: 1e-14,
            max_iterations: 200,
        }
    }
}

/// How the delay estimates are attached to physical paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeling {
    /// Rank by least-squares energy against the order found at the BS side.
    Energy,
    /// Shortest delay is the LOS; reflected paths are ranked by energy.
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    pub angle_search: PeakSearchSpec,
    pub delay_search: PeakSearchSpec,
    pub labeling: Labeling,
}

impl EstimatorSpec {
    pub fn new(paths: usize, subcarriers: usize) -> Self {
        let angle_search = PeakSearchSpec::for_paths(paths);
        let delay_search = PeakSearchSpec {
            coarse_points: angle_search.coarse_points.max(16 * subcarriers),
            ..angle_search
        };
        EstimatorSpec {
            angle_search,
            delay_search,
            labeling: Labeling::Energy,
        }
    }

    pub fn with_labeling(mut self, labeling: Labeling) -> Self {
        self.labeling = labeling;
        self
    }
}

/// Energy rank of every physical path, ordered RIS 1..Q then LOS; rank 0 is strongest.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOrder {
    pub kappa: Vec<usize>,
    pub energies: Vec<f64>,
}

impl PathOrder {
    pub fn from_energies(energies: Vec<f64>, stage: &'static str) -> Result<Self> {
        let ranks = energy_ranks(&energies, stage)?;
        Ok(PathOrder { kappa: ranks, energies })
    }

    /// Order implied by the gains of known channel parameters.
    pub fn from_params(eta: &ChannelParams) -> Result<Self> {
        let mut e: Vec<f64> = eta.ris.iter().map(|r| r.gain.norm_sqr()).collect();
        e.push(eta.los.gain.norm_sqr());
        Self::from_energies(e, "oracle order")
    }

    pub fn path_count(&self) -> usize {
        self.kappa.len()
    }

    /// Physical path holding a given energy rank.
    pub fn path_of_rank(&self, rank: usize) -> usize {
        self.kappa.iter().position(|&k| k == rank).unwrap_or(rank)
    }
}

fn energy_ranks(energies: &[f64], stage: &'static str) -> Result<Vec<usize>> {
    let mut idx: Vec<usize> = (0..energies.len()).collect();
    idx.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]));
    for w in idx.windows(2) {
        let (hi, lo) = (energies[w[0]], energies[w[1]]);
        if hi - lo <= TIE_FRACTION * hi {
            return Err(Error::MatchingAmbiguous { stage });
        }
    }
    let mut ranks = vec![0; energies.len()];
    for (rank, &i) in idx.iter().enumerate() {
        ranks[i] = rank;
    }
    Ok(ranks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedEta {
    pub eta: ChannelParams,
    pub order: PathOrder,
    /// Raw delays as they came out of the spectral search.
    pub raw_delays: Vec<f64>,
}

/// Builds a real-indexed reshape of the observations; `place` maps
/// `(k, d, n)` to `(row, col)` and `conj` selects conjugation.
fn reshape<F>(obs: &ObservationSet, rows: usize, cols: usize, conj: bool, place: F) -> CMatrix
where
    F: Fn(usize, usize, usize) -> (usize, usize),
{
    let mut m = CMatrix::zeros(rows, cols);
    for (k, r) in obs.per_subcarrier.iter().enumerate() {
        for n in 0..r.ncols() {
            for d in 0..r.nrows() {
                let (i, j) = place(k, d, n);
                let z = r[(d, n)];
                m[(i, j)] = if conj { z.conj() } else { z };
            }
        }
    }
    m
}

struct Shapes {
    k: usize,
    d: usize,
    n: usize,
    n_rows: usize,
    n_cols: usize,
    d_rows: usize,
    d_cols: usize,
}

impl Shapes {
    fn of(model: &ChannelModel) -> Self {
        Shapes {
            k: model.subcarriers,
            d: model.ue.len(),
            n: model.bs.len(),
            n_rows: model.bs.rows,
            n_cols: model.bs.cols,
            d_rows: model.ue.rows,
            d_cols: model.ue.cols,
        }
    }

    fn bs_rows(&self, obs: &ObservationSet) -> CMatrix {
        let (nc, d) = (self.n_cols, self.d);
        reshape(obs, self.n_rows, nc * d * self.k, true, |k, di, n| {
            (n / nc, (k * d + di) * nc + n % nc)
        })
    }

    fn bs_cols(&self, obs: &ObservationSet) -> CMatrix {
        let (nr, nc, d) = (self.n_rows, self.n_cols, self.d);
        reshape(obs, nc, nr * d * self.k, true, |k, di, n| {
            (n % nc, (k * d + di) * nr + n / nc)
        })
    }

    fn ue_rows(&self, obs: &ObservationSet) -> CMatrix {
        let (dc, n) = (self.d_cols, self.n);
        reshape(obs, self.d_rows, dc * n * self.k, false, |k, d, ni| {
            (d / dc, (k * n + ni) * dc + d % dc)
        })
    }

    fn ue_cols(&self, obs: &ObservationSet) -> CMatrix {
        let (dr, dc, n) = (self.d_rows, self.d_cols, self.n);
        reshape(obs, dc, dr * n * self.k, false, |k, d, ni| {
            (d % dc, (k * n + ni) * dr + d / dc)
        })
    }

    fn delays(&self, obs: &ObservationSet) -> CMatrix {
        let n = self.n;
        reshape(obs, self.k, self.d * n, false, |k, d, ni| (k, d * n + ni))
    }
}

/// Orthonormal basis of the columns of `a` (Gram-Schmidt, two passes).
fn orthonormal_columns(a: &CMatrix) -> CMatrix {
    let mut q = CMatrix::zeros(a.nrows(), 0);
    for j in 0..a.ncols() {
        let mut v = a.column(j).into_owned();
        for _ in 0..2 {
            let proj = q.adjoint() * &v;
            v -= &q * proj;
        }
        let n = v.norm();
        if n > RESIDUAL_FLOOR {
            let v = v / Complex64::new(n, 0.0);
            let cols = q.ncols();
            q = q.insert_column(cols, Complex64::new(0.0, 0.0));
            let last = q.ncols() - 1;
            q.set_column(last, &v);
        }
    }
    q
}

fn steering_matrix(len: usize, cosines: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(len, cosines.len());
    for (j, &c) in cosines.iter().enumerate() {
        m.set_column(j, &ula_steering(len, c));
    }
    m
}

fn wrap(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let mut y = (x - lo).rem_euclid(span) + lo;
    if y >= hi {
        y -= span;
    }
    y
}

/// Minimises `cost` over a circular domain: coarse grid, then golden
/// section inside the bracket of each of the `count` deepest local minima.
fn circular_minima<F: Fn(f64) -> f64>(
    cost: F,
    lo: f64,
    hi: f64,
    count: usize,
    spec: &PeakSearchSpec,
    stage: &'static str,
) -> Result<Vec<f64>> {
    let n = spec.coarse_points.max(8);
    let cell = (hi - lo) / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| cost(lo + i as f64 * cell)).collect();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = grid[(i + n - 1) % n];
            let next = grid[(i + 1) % n];
            grid[i] < prev && grid[i] <= next
        })
        .collect();
    minima.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    if minima.len() < count {
        return Err(Error::PeakDeficit {
            stage,
            found: minima.len(),
            expected: count,
        });
    }
    let span = hi - lo;
    let mut out: Vec<f64> = minima[..count]
        .iter()
        .map(|&i| {
            let centre = lo + i as f64 * cell;
            let x = golden_section_min(
                |x| cost(wrap(x, lo, hi)),
                centre - cell,
                centre + cell,
                spec.tolerance * span,
                spec.max_iterations,
            );
            wrap(x, lo, hi)
        })
        .collect();
    for i in 0..out.len() {
        for j in i + 1..out.len() {
            let gap = (out[i] - out[j]).abs();
            if gap.min(span - gap) < 0.5 * cell {
                return Err(Error::PeakDeficit {
                    stage,
                    found: count - 1,
                    expected: count,
                });
            }
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Cosine of the one unknown path in the row space of `factor`, with the
/// known cosines projected out before the beam search.
pub fn projected_cosine_search(factor: &CMatrix, known: &[f64], spec: &PeakSearchSpec) -> Result<f64> {
    let len = factor.nrows();
    if known.len() + 1 > len {
        return Err(Error::InvalidInput(format!(
            "{len}-element axis cannot hold {} paths",
            known.len() + 1
        )));
    }
    let q_known = orthonormal_columns(&steering_matrix(len, known));
    let perp = factor - &q_known * (q_known.adjoint() * factor);
    let ceiling = perp.norm_squared();
    let cost = |g: f64| {
        let a = ula_steering(len, g);
        let a_perp = &a - &q_known * (q_known.adjoint() * &a);
        let n = a_perp.norm();
        if n < RESIDUAL_FLOOR {
            return ceiling;
        }
        let a_bar = a_perp / Complex64::new(n, 0.0);
        let resid = &perp - &a_bar * (a_bar.adjoint() * &perp);
        resid.norm_squared()
    };
    let best = circular_minima(cost, -1.0, 1.0, 1, spec, "departure search")?;
    Ok(best[0])
}

/// Least-squares row energies of `factor` on the given steering columns.
fn ls_energies(basis: &CMatrix, factor: &CMatrix) -> Result<Vec<f64>> {
    let gram = basis.adjoint() * basis;
    let rhs = basis.adjoint() * factor;
    let coef = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput("steering columns are linearly dependent".into()))?;
    Ok((0..coef.nrows()).map(|i| coef.row(i).norm_squared()).collect())
}

/// Energy ranks of the paths, ordered RIS 1..Q then LOS.
pub fn order_paths_by_energy(factor: &CMatrix, known: &[f64], los: f64) -> Result<PathOrder> {
    let mut cos = known.to_vec();
    cos.push(los);
    let energies = ls_energies(&steering_matrix(factor.nrows(), &cos), factor)?;
    PathOrder::from_energies(energies, "path order")
}

/// MUSIC minima of `|| W^H s(x) ||^2` for a unit-norm steering `s`.
fn music<S: Fn(f64) -> CVector>(
    cov: &CMatrix,
    signal_dim: usize,
    steering: S,
    lo: f64,
    hi: f64,
    spec: &PeakSearchSpec,
    stage: &'static str,
) -> Result<Vec<f64>> {
    let dim = cov.nrows();
    if signal_dim >= dim {
        return Err(Error::InvalidInput(format!(
            "{stage}: {signal_dim} paths leave no noise subspace in dimension {dim}"
        )));
    }
    let (_, vectors) = hermitian_eigen_desc(cov);
    let noise = vectors.columns(signal_dim, dim - signal_dim).into_owned();
    let noise_h = noise.adjoint();
    let cost = |x: f64| (&noise_h * steering(x)).norm_squared();
    circular_minima(cost, lo, hi, signal_dim, spec, stage)
}

/// Assigns raw values to physical paths by ranking their LS energies against `order`.
fn label_by_energy(values: &[f64], energies: &[f64], order: &PathOrder, stage: &'static str) -> Result<Vec<f64>> {
    let ranks = energy_ranks(energies, stage)?;
    let mut out = vec![0.0; values.len()];
    for (v, r) in values.iter().zip(ranks) {
        out[order.path_of_rank(r)] = *v;
    }
    Ok(out)
}

fn covariance(m: &CMatrix) -> CMatrix {
    m * m.adjoint()
}

fn estimate_ue_cosines(
    reshaped: &CMatrix,
    order: &PathOrder,
    spec: &PeakSearchSpec,
    stage: &'static str,
) -> Result<Vec<f64>> {
    let len = reshaped.nrows();
    let paths = order.path_count();
    let raw = music(
        &covariance(reshaped),
        paths,
        |g| ula_steering(len, g),
        -1.0,
        1.0,
        spec,
        stage,
    )?;
    let factor = row_space_factor(reshaped);
    let energies = ls_energies(&steering_matrix(len, &raw), &factor)?;
    label_by_energy(&raw, &energies, order, stage)
}

fn fit_gains(
    obs: &ObservationSet,
    model: &ChannelModel,
    delays: &[f64],
    ue: &[(f64, f64)],
    bs: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    let p = delays.len();
    let u: Vec<CVector> = ue.iter().map(|&(g, s)| ura_steering(model.ue, g, s)).collect();
    let v: Vec<CVector> = bs.iter().map(|&(g, s)| ura_steering(model.bs, g, s)).collect();
    let phasor = |i: usize, k: usize| Complex64::from_polar(1.0, -model.omega(k) * delays[i]);
    let mut gram = CMatrix::zeros(p, p);
    let mut rhs = CVector::zeros(p);
    for i in 0..p {
        for j in 0..p {
            let spectral: Complex64 = (0..model.subcarriers).map(|k| phasor(i, k).conj() * phasor(j, k)).sum();
            gram[(i, j)] = u[i].dotc(&u[j]) * v[j].dotc(&v[i]) * spectral;
        }
        rhs[i] = obs
            .per_subcarrier
            .iter()
            .enumerate()
            .map(|(k, r)| phasor(i, k).conj() * u[i].dotc(&(r * &v[i])))
            .sum();
    }
    let (vals, _) = hermitian_eigen_desc(&gram);
    let cond = vals[0] / vals[p - 1].max(f64::MIN_POSITIVE);
    if !(cond <= GAIN_CONDITION_LIMIT) {
        return Err(Error::GainIllConditioned(cond));
    }
    let h = gram.lu().solve(&rhs).ok_or(Error::GainIllConditioned(f64::INFINITY))?;
    Ok(h.iter().copied().collect())
}

fn check_dimensions(model: &ChannelModel) -> Result<()> {
    let paths = model.path_count();
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{what} too small for {paths} paths")))
        }
    };
    need(model.subcarriers > paths, "subcarrier count")?;
    need(model.ue.rows > paths, "UE array rows")?;
    need(model.ue.cols > paths, "UE array columns")?;
    need(model.bs.rows >= paths, "BS array rows")?;
    need(model.bs.cols >= paths, "BS array columns")
}

/// Full two-step estimate of the channel parameters.
pub fn estimate_channel_params(
    obs: &ObservationSet,
    model: &ChannelModel,
    spec: &EstimatorSpec,
) -> Result<EstimatedEta> {
    check_dimensions(model)?;
    if obs.per_subcarrier.len() != model.subcarriers {
        return Err(Error::Shape(format!(
            "{} subcarrier observations for a {}-subcarrier model",
            obs.per_subcarrier.len(),
            model.subcarriers
        )));
    }
    let q = model.links.len();
    let paths = q + 1;
    let shapes = Shapes::of(model);

    // BS-side departure of the LOS path
    let known_g: Vec<f64> = model.links.iter().map(|l| l.bs_g).collect();
    let known_s: Vec<f64> = model.links.iter().map(|l| l.bs_s).collect();
    let rows_factor = row_space_factor(&shapes.bs_rows(obs));
    let cols_factor = row_space_factor(&shapes.bs_cols(obs));
    let bs_g = projected_cosine_search(&rows_factor, &known_g, &spec.angle_search)?;
    let bs_s = projected_cosine_search(&cols_factor, &known_s, &spec.angle_search)?;
    let order = order_paths_by_energy(&rows_factor, &known_g, bs_g)?;

    // delays
    let window = model.subcarriers as f64 / model.bandwidth;
    let k_count = model.subcarriers;
    let norm = 1.0 / (k_count as f64).sqrt();
    let delay_vec = |u: f64| delay_steering_unchecked(k_count, model.bandwidth, u * window) * Complex64::new(norm, 0.0);
    let g_mat = shapes.delays(obs);
    let raw_u = music(
        &covariance(&g_mat),
        paths,
        delay_vec,
        0.0,
        1.0,
        &spec.delay_search,
        "delay search",
    )?;
    let raw_delays: Vec<f64> = raw_u.iter().map(|u| u * window).collect();
    let mut basis = CMatrix::zeros(k_count, paths);
    for (j, &u) in raw_u.iter().enumerate() {
        basis.set_column(j, &delay_vec(u));
    }
    let delay_energies = ls_energies(&basis, &row_space_factor(&g_mat))?;
    let delays = match spec.labeling {
        Labeling::Energy => label_by_energy(&raw_delays, &delay_energies, &order, "delay matching")?,
        Labeling::Delay => label_by_delay(&raw_delays, &delay_energies, &order)?,
    };

    // UE-side cosines
    let ue_g = estimate_ue_cosines(&shapes.ue_rows(obs), &order, &spec.angle_search, "arrival rows")?;
    let ue_s = estimate_ue_cosines(&shapes.ue_cols(obs), &order, &spec.angle_search, "arrival columns")?;

    let ue: Vec<(f64, f64)> = ue_g.iter().zip(&ue_s).map(|(&g, &s)| (g, s)).collect();
    let mut bs: Vec<(f64, f64)> = model.links.iter().map(|l| (l.bs_g, l.bs_s)).collect();
    bs.push((bs_g, bs_s));
    let gains = fit_gains(obs, model, &delays, &ue, &bs)?;

    let eta = ChannelParams {
        los: LosParams {
            gain: gains[q],
            delay: delays[q],
            ue_g: ue_g[q],
            ue_s: ue_s[q],
            bs_g,
            bs_s,
        },
        ris: (0..q)
            .map(|r| RisPathParams {
                gain: gains[r],
                delay: delays[r] - model.links[r].delay,
                ue_g: ue_g[r],
                ue_s: ue_s[r],
            })
            .collect(),
    };
    Ok(EstimatedEta { eta, order, raw_delays })
}

/// Shortest delay goes to the LOS; the others follow the energy order of the reflected paths.
fn label_by_delay(values: &[f64], energies: &[f64], order: &PathOrder) -> Result<Vec<f64>> {
    let q = values.len() - 1;
    let los = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let rest: Vec<usize> = (0..values.len()).filter(|&i| i != los).collect();
    let rest_energies: Vec<f64> = rest.iter().map(|&i| energies[i]).collect();
    let ranks = energy_ranks(&rest_energies, "delay matching")?;
    let mut ris_by_rank: Vec<usize> = (0..q).collect();
    ris_by_rank.sort_by_key(|&r| order.kappa[r]);
    let mut out = vec![0.0; values.len()];
    out[q] = values[los];
    for (idx, rank) in rest.iter().zip(ranks) {
        out[ris_by_rank[rank]] = values[*idx];
    }
    Ok(out)
}

/// MUSIC delay pseudo-spectrum `(tau, 1 / ||W^H b(tau)||^2)` on a uniform grid.
pub fn delay_pseudospectrum(obs: &ObservationSet, model: &ChannelModel, points: usize) -> Result<Vec<(f64, f64)>> {
    let shapes = Shapes::of(model);
    let g_mat = shapes.delays(obs);
    let dim = model.subcarriers;
    let paths = model.path_count();
    if paths >= dim {
        return Err(Error::InvalidInput("no noise subspace".into()));
    }
    let (_, vectors) = hermitian_eigen_desc(&covariance(&g_mat));
    let noise_h = vectors.columns(paths, dim - paths).adjoint();
    let window = dim as f64 / model.bandwidth;
    let norm = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    Ok((0..points)
        .map(|i| {
            let tau = window * i as f64 / points as f64;
            let b = delay_steering_unchecked(dim, model.bandwidth, tau) * norm;
            (tau, 1.0 / (&noise_h * b).norm_squared().max(f64::MIN_POSITIVE))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        effective_channel, simulate_reception, synth_links, true_channel_params, ArrayShape, Arrays, LinkPhases,
        Precoder, RadioConfig, RisProfile,
    };
    use crate::scene::reference_scene;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn radio() -> RadioConfig {
        RadioConfig {
            subcarriers: 48,
            bandwidth: 64e6,
            carrier: 30e9,
            time_slots: 32,
            tx_power: 1.0,
            rician_bu: f64::INFINITY,
            rician_ru: f64::INFINITY,
            pathloss_bu: 4.5,
            pathloss_ris: 2.0,
        }
    }

    fn arrays() -> Arrays {
        Arrays {
            bs: ArrayShape::square(4),
            ue: ArrayShape::square(4),
            ris: ArrayShape::square(8),
        }
    }

    fn noiseless_case(seed: u64) -> (ObservationSet, ChannelModel, ChannelParams) {
        let scene = reference_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = LinkPhases::random(2, &mut rng);
        let links = synth_links(&scene, &arrays(), &radio(), &phases, false, &mut rng).unwrap();
        // matched beams keep the reflected paths strong enough to rank
        let coefficients = links
            .ris
            .iter()
            .map(|c| {
                CVector::from_fn(arrays().ris.len(), |m, _| {
                    let z = c.ris_ue.right[m] * c.bs_ris.left[m].conj();
                    z / z.norm()
                })
            })
            .collect();
        let profile = RisProfile { coefficients };
        let h = effective_channel(&links, &profile).unwrap();
        let eta = true_channel_params(&links, &scene, &profile).unwrap();
        let pre = Precoder::dft(16, 32, 1.0).unwrap();
        let obs = simulate_reception(&h, &pre, 0.0, 0.0, &mut rng).unwrap();
        let model = ChannelModel::new(&arrays(), &radio(), scene.links().unwrap());
        (obs, model, eta)
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let (obs, model, eta) = noiseless_case(5);
        let spec = EstimatorSpec::new(3, model.subcarriers);
        let est = estimate_channel_params(&obs, &model, &spec).unwrap();
        let (e, t) = (&est.eta, &eta);
        let gain_ok = |a: Complex64, b: Complex64| (a - b).norm() < 1e-8 * b.norm();
        assert!(gain_ok(e.los.gain, t.los.gain));
        assert!((e.los.delay - t.los.delay).abs() < 1e-15);
        for (x, y) in [
            (e.los.ue_g, t.los.ue_g),
            (e.los.ue_s, t.los.ue_s),
            (e.los.bs_g, t.los.bs_g),
            (e.los.bs_s, t.los.bs_s),
        ] {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        for (a, b) in e.ris.iter().zip(&t.ris) {
            assert!(gain_ok(a.gain, b.gain));
            assert!((a.delay - b.delay).abs() < 1e-15);
            assert!((a.ue_g - b.ue_g).abs() < 1e-10 && (a.ue_s - b.ue_s).abs() < 1e-10);
        }
        assert_eq!(est.order.kappa, PathOrder::from_params(&eta).unwrap().kappa);
    }

    #[test]
    fn delay_labeling_finds_los_first() {
        let (obs, model, eta) = noiseless_case(9);
        let spec = EstimatorSpec::new(3, model.subcarriers).with_labeling(Labeling::Delay);
        let est = estimate_channel_params(&obs, &model, &spec).unwrap();
        assert!((est.eta.los.delay - eta.los.delay).abs() < 1e-15);
    }

    #[test]
    fn projected_search_finds_single_cosine() {
        let known = [0.4, -0.3];
        let a = steering_matrix(6, &[0.4, -0.3, 0.15]);
        let w = CMatrix::from_fn(3, 5, |i, j| {
            Complex64::new((i + 2 * j) as f64 * 0.3 + 1.0, (i as f64 - j as f64) * 0.2)
        });
        let factor = row_space_factor(&(a * w));
        let g = projected_cosine_search(&factor, &known, &PeakSearchSpec::for_paths(3)).unwrap();
        assert!((g - 0.15).abs() < 1e-10);
    }

    #[test]
    fn ties_are_reported() {
        assert!(matches!(
            PathOrder::from_energies(vec![1.0, 0.995, 0.2], "t"),
            Err(Error::MatchingAmbiguous { .. })
        ));
        let o = PathOrder::from_energies(vec![0.5, 0.1, 2.0], "t").unwrap();
        assert_eq!(o.kappa, vec![1, 2, 0]);
        assert_eq!(o.path_of_rank(0), 2);
    }

    #[test]
    fn music_reports_missing_peaks() {
        // rank-one covariance cannot show two spectral nulls
        let a = ula_steering(6, 0.2);
        let cov = &a * a.adjoint();
        let out = music(
            &cov,
            5,
            |g| ula_steering(6, g),
            -1.0,
            1.0,
            &PeakSearchSpec::for_paths(5),
            "test",
        );
        assert!(out.is_err());
    }

    #[test]
    fn wrap_into_window() {
        assert!((wrap(1.2, -1.0, 1.0) + 0.8).abs() < 1e-15);
        assert!((wrap(-0.1, 0.0, 1.0) - 0.9).abs() < 1e-15);
        assert_eq!(wrap(0.3, 0.0, 1.0), 0.3);
    }
}
