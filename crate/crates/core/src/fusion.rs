//! From channel parameters to a position and clock bias.
//!
//! Each path yields an anchor: a point the UE would occupy if the clock
//! bias were zero, plus the unit direction along which the bias shifts it.
//! The anchors are fused by weighted least squares with a one-dimensional
//! search over the clock bias.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};

use crate::channel::ChannelModel;
use crate::crb::{fim_eta, fim_xi, jacobian, path_bounds, AnchorGeometry};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_inverse_regularized};
use crate::scene::{forward_map, ChannelParams, LosParams, PositionParams, RisPathParams, Scene, SPEED_OF_LIGHT};

/// Largest negative excess `1 - g^2 - s^2` that is clipped rather than rejected.
const COSINE_SLACK: f64 = 0.05;

/// Upper bound on covariance re-evaluations after the first fusion.
const REWEIGHT_PASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorKind {
    Los,
    Ris(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathAnchor {
    pub kind: AnchorKind,
    pub position: Vector3<f64>,
    pub direction: Vector3<f64>,
    /// `None` when the path alone cannot bound its anchor.
    pub covariance: Option<Matrix3<f64>>,
    /// Set when the UE-side cosines had to be clipped onto the unit sphere.
    pub clipped: bool,
}

/// LOS anchor from the LOS channel parameters.
///
/// The four cosines are linear in the BS-side direction `z`; `cosine_cov`
/// is their covariance and weights the fit. Components of `z` the fit
/// cannot see are completed from `|z| = 1` on the side facing the array.
pub fn infer_los_anchor(
    los: &LosParams,
    orientation: &Matrix3<f64>,
    cosine_cov: &Matrix4<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let mut design = nalgebra::Matrix4x3::zeros();
    for c in 0..3 {
        design[(0, c)] = -orientation[(1, c)];
        design[(1, c)] = -orientation[(2, c)];
    }
    design[(2, 1)] = 1.0;
    design[(3, 2)] = 1.0;
    let observed = Vector4::new(los.ue_g, los.ue_s, los.bs_g, los.bs_s);
    let cov = DMatrix::from_column_slice(4, 4, cosine_cov.as_slice());
    let weight_dyn = spd_inverse_regularized(&cov)?;
    let weight = Matrix4::from_column_slice(weight_dyn.as_slice());
    // the fit ignores the weight scale; unit scale keeps the rank test well posed
    let weight = weight / weight.diagonal().max();
    let root = weight
        .cholesky()
        .ok_or_else(|| Error::DegenerateGeometry("LOS cosine weight is not positive definite".into()))?
        .l();
    let whitened = root.transpose() * design;
    let target = root.transpose() * observed;
    let normal = whitened.transpose() * whitened;
    let eig = SymmetricEigen::new(normal);
    let top = eig.eigenvalues.max();
    if !(top > 0.0) {
        return Err(Error::DegenerateGeometry("LOS cosines carry no direction".into()));
    }
    let mut null = Vec::new();
    let z = if eig.eigenvalues.min() > 1e-10 * top {
        // full rank: QR keeps the conditioning of the whitened design
        let qr = whitened.qr();
        qr.r()
            .solve_upper_triangular(&(qr.q().transpose() * target))
            .ok_or_else(|| Error::DegenerateGeometry("LOS fit is singular".into()))?
    } else {
        let rhs = whitened.transpose() * target;
        let mut z = Vector3::zeros();
        for i in 0..3 {
            let v = eig.eigenvectors.column(i).into_owned();
            if eig.eigenvalues[i] > 1e-10 * top {
                z += v * (v.dot(&rhs) / eig.eigenvalues[i]);
            } else {
                null.push(v);
            }
        }
        z
    };
    let norm2 = z.norm_squared();
    let direction = match null.len() {
        0 => z / norm2.sqrt(),
        1 if norm2 < 1.0 => {
            let n = null[0];
            let t = (1.0 - norm2).sqrt();
            let sign = if n.x < 0.0 { -1.0 } else { 1.0 };
            z + n * (sign * t)
        }
        1 => z / norm2.sqrt(),
        _ => {
            return Err(Error::DegenerateGeometry(
                "LOS cosines leave more than one direction unresolved".into(),
            ))
        }
    };
    let direction = direction / direction.norm();
    Ok((direction * (SPEED_OF_LIGHT * los.delay), direction))
}

/// Anchor of a reflected path; the third UE-side cosine is taken as
/// `-sqrt(1 - g^2 - s^2)`. Returns `(anchor, direction, clipped)`.
pub fn infer_ris_anchor(
    path: &RisPathParams,
    ris: &Vector3<f64>,
    orientation: &Matrix3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>, bool)> {
    let excess = 1.0 - path.ue_g * path.ue_g - path.ue_s * path.ue_s;
    if excess < -COSINE_SLACK {
        return Err(Error::InvalidCosines(excess));
    }
    let clipped = excess < 0.0;
    let ue = Vector3::new(-excess.max(0.0).sqrt(), path.ue_g, path.ue_s);
    let mut direction = -(orientation.transpose() * ue);
    direction /= direction.norm();
    Ok((ris + direction * (SPEED_OF_LIGHT * path.delay), direction, clipped))
}

fn cosine_block(f_inv: &DMatrix<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| f_inv[(3 + i, 3 + j)])
}

/// Anchors of every path with covariances from each path's own information block.
pub fn infer_anchors(
    eta: &ChannelParams,
    f_eta: &DMatrix<f64>,
    ris: &[Vector3<f64>],
    orientation: &Matrix3<f64>,
) -> Result<Vec<PathAnchor>> {
    if eta.ris.len() != ris.len() {
        return Err(Error::Shape(format!(
            "{} reflected paths for {} RIS",
            eta.ris.len(),
            ris.len()
        )));
    }
    let f_inv = spd_inverse_regularized(f_eta)?;
    let (los_pos, los_dir) = infer_los_anchor(&eta.los, orientation, &cosine_block(&f_inv))?;
    let mut ris_anchor = Vec::with_capacity(ris.len());
    for (path, p) in eta.ris.iter().zip(ris) {
        ris_anchor.push(infer_ris_anchor(path, p, orientation)?);
    }
    let mut anchors = vec![PathAnchor {
        kind: AnchorKind::Los,
        position: los_pos,
        direction: los_dir,
        covariance: None,
        clipped: false,
    }];
    for (q, (pos, dir, clipped)) in ris_anchor.into_iter().enumerate() {
        anchors.push(PathAnchor {
            kind: AnchorKind::Ris(q),
            position: pos,
            direction: dir,
            covariance: None,
            clipped,
        });
    }
    set_path_covariances(&mut anchors, f_eta, ris, orientation, 0.0)?;
    Ok(anchors)
}

/// Re-evaluates every anchor covariance at `anchor - c * clock_bias * direction`.
///
/// The fused residual of a path grows with the true path length, so once
/// a clock bias estimate exists the covariances are taken at the
/// bias-corrected points rather than at the anchors themselves.
pub fn set_path_covariances(
    anchors: &mut [PathAnchor],
    f_eta: &DMatrix<f64>,
    ris: &[Vector3<f64>],
    orientation: &Matrix3<f64>,
    clock_bias: f64,
) -> Result<()> {
    let shifted = |a: &PathAnchor| a.position - a.direction * (SPEED_OF_LIGHT * clock_bias);
    let los = anchors
        .iter()
        .find(|a| a.kind == AnchorKind::Los)
        .ok_or_else(|| Error::Shape("no LOS anchor".into()))?;
    let mut ris_points = vec![Vector3::zeros(); ris.len()];
    for a in anchors.iter() {
        if let AnchorKind::Ris(q) = a.kind {
            *ris_points
                .get_mut(q)
                .ok_or_else(|| Error::Shape(format!("anchor of RIS {q} beyond {} RIS", ris.len())))? = shifted(a);
        }
    }
    let geometry = AnchorGeometry {
        los: shifted(los),
        ris: ris_points,
        ris_positions: ris.to_vec(),
        orientation: *orientation,
    };
    let bounds = path_bounds(f_eta, &geometry)?;
    for a in anchors.iter_mut() {
        a.covariance = match a.kind {
            AnchorKind::Los => bounds.los,
            AnchorKind::Ris(q) => bounds.ris[q],
        };
    }
    Ok(())
}

/// Clock-bias search: uniform grid then Newton refinement of the profiled objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockSearch {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ClockSearch {
    /// `[-10/W, 10/W]` with 201 points.
    pub fn for_bandwidth(bandwidth: f64) -> Self {
        ClockSearch {
            lo: -10.0 / bandwidth,
            hi: 10.0 / bandwidth,
            points: 201,
            tolerance: 1e-22,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub position: Vector3<f64>,
    pub clock_bias: f64,
    pub objective: f64,
    /// False when every anchor direction is parallel and the bias was fixed at zero.
    pub clock_identifiable: bool,
    pub anchors_used: usize,
}

struct Weighted {
    point: Vector3<f64>,
    dir: Vector3<f64>,
    weight: Matrix3<f64>,
}

struct Profile {
    total_inv: Matrix3<f64>,
    mean_dir: Vector3<f64>,
    items: Vec<Weighted>,
}

impl Profile {
    fn new(items: Vec<Weighted>) -> Result<Self> {
        let total: Matrix3<f64> = items.iter().map(|w| w.weight).sum();
        let total_inv = total
            .try_inverse()
            .ok_or_else(|| Error::FusionImpossible("summed anchor weights are singular".into()))?;
        let mean_dir = total_inv * items.iter().map(|w| w.weight * w.dir).sum::<Vector3<f64>>();
        Ok(Profile {
            total_inv,
            mean_dir,
            items,
        })
    }

    fn position(&self, delta: f64) -> Vector3<f64> {
        let c = SPEED_OF_LIGHT * delta;
        self.total_inv
            * self
                .items
                .iter()
                .map(|w| w.weight * (w.point - w.dir * c))
                .sum::<Vector3<f64>>()
    }

    fn residuals(&self, delta: f64) -> (Vector3<f64>, Vec<Vector3<f64>>) {
        let p = self.position(delta);
        let c = SPEED_OF_LIGHT * delta;
        (p, self.items.iter().map(|w| w.point - p - w.dir * c).collect())
    }

    fn objective(&self, delta: f64) -> f64 {
        let (_, e) = self.residuals(delta);
        self.items.iter().zip(&e).map(|(w, e)| e.dot(&(w.weight * e))).sum()
    }

    fn slope(&self, delta: f64) -> f64 {
        let (_, e) = self.residuals(delta);
        -2.0 * SPEED_OF_LIGHT
            * self
                .items
                .iter()
                .zip(&e)
                .map(|(w, e)| w.dir.dot(&(w.weight * e)))
                .sum::<f64>()
    }

    fn curvature(&self) -> f64 {
        2.0 * SPEED_OF_LIGHT
            * SPEED_OF_LIGHT
            * self
                .items
                .iter()
                .map(|w| {
                    let d = self.mean_dir - w.dir;
                    d.dot(&(w.weight * d))
                })
                .sum::<f64>()
    }

    fn curvature_scale(&self) -> f64 {
        2.0 * SPEED_OF_LIGHT * SPEED_OF_LIGHT * self.items.iter().map(|w| w.weight.trace()).sum::<f64>()
    }
}

fn fuse_weighted(items: Vec<Weighted>, search: &ClockSearch) -> Result<FusionResult> {
    if items.is_empty() {
        return Err(Error::FusionImpossible("no anchor carries a finite covariance".into()));
    }
    let used = items.len();
    let profile = Profile::new(items)?;
    let curvature = profile.curvature();
    if !(curvature > 1e-12 * profile.curvature_scale()) {
        let position = profile.position(0.0);
        return Ok(FusionResult {
            position,
            clock_bias: 0.0,
            objective: profile.objective(0.0),
            clock_identifiable: false,
            anchors_used: used,
        });
    }
    let n = search.points.max(2);
    let mut best = search.lo;
    let mut best_value = f64::INFINITY;
    for i in 0..n {
        let d = search.lo + (search.hi - search.lo) * i as f64 / (n - 1) as f64;
        let v = profile.objective(d);
        if v < best_value {
            best_value = v;
            best = d;
        }
    }
    let mut delta = best;
    for _ in 0..search.max_iterations {
        let step = profile.slope(delta) / curvature;
        delta -= step;
        if step.abs() <= search.tolerance {
            break;
        }
    }
    Ok(FusionResult {
        position: profile.position(delta),
        clock_bias: delta,
        objective: profile.objective(delta),
        clock_identifiable: true,
        anchors_used: used,
    })
}

/// Weighted least-squares fusion with the anchors' own covariances.
pub fn wls_fuse(anchors: &[PathAnchor], search: &ClockSearch) -> Result<FusionResult> {
    let items = anchors
        .iter()
        .filter_map(|a| {
            let cov = a.covariance?;
            let w = cov.try_inverse()?;
            Some(Weighted {
                point: a.position,
                dir: a.direction,
                weight: (w + w.transpose()) * 0.5,
            })
        })
        .collect();
    fuse_weighted(items, search)
}

/// Unweighted least-squares fusion of every anchor.
pub fn ls_fuse(anchors: &[PathAnchor], search: &ClockSearch) -> Result<FusionResult> {
    let items = anchors
        .iter()
        .map(|a| Weighted {
            point: a.position,
            dir: a.direction,
            weight: Matrix3::identity(),
        })
        .collect();
    fuse_weighted(items, search)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    PathBounds,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub fusion: FusionResult,
    pub anchors: Vec<PathAnchor>,
    pub f_eta: DMatrix<f64>,
}

/// Channel-parameter estimate to position, using plug-in information for the weights.
pub fn locate(
    eta: &ChannelParams,
    model: &ChannelModel,
    orientation: &Matrix3<f64>,
    noise_variance: f64,
    weighting: Weighting,
    search: &ClockSearch,
) -> Result<Localization> {
    // the fused estimate is invariant to a common scaling of the weights
    let variance = if noise_variance > 0.0 { noise_variance } else { 1.0 };
    let f_eta = fim_eta(model, eta, variance)?;
    let ris: Vec<Vector3<f64>> = model.links.iter().map(|l| l.position).collect();
    let mut anchors = infer_anchors(eta, &f_eta, &ris, orientation)?;
    let mut fusion = match weighting {
        Weighting::PathBounds => wls_fuse(&anchors, search)?,
        Weighting::Identity => ls_fuse(&anchors, search)?,
    };
    if weighting == Weighting::PathBounds {
        for _ in 0..REWEIGHT_PASSES {
            set_path_covariances(&mut anchors, &f_eta, &ris, orientation, fusion.clock_bias)?;
            let next = wls_fuse(&anchors, search)?;
            let settled = (next.clock_bias - fusion.clock_bias).abs() <= 1e-15;
            fusion = next;
            if settled {
                break;
            }
        }
    }
    Ok(Localization { fusion, anchors, f_eta })
}

/// Position covariance bound evaluated at an estimate, for weighting in multi-BS fusion.
pub fn plug_in_position_cov(f_eta: &DMatrix<f64>, estimate: &PositionParams, scene: &Scene) -> Result<Matrix3<f64>> {
    let f_xi = fim_xi(f_eta, &jacobian(estimate, scene)?)?;
    let inv = spd_inverse(&f_xi)?;
    Ok(inv.fixed_view::<3, 3>(0, 0).into_owned())
}

/// `[eta_hat - F(xi)]^T W [eta_hat - F(xi)]`.
pub fn exip_objective(
    eta_hat: &ChannelParams,
    weight: &DMatrix<f64>,
    xi: &PositionParams,
    scene: &Scene,
) -> Result<f64> {
    let r = eta_hat.to_vector() - forward_map(xi, scene)?.to_vector();
    if weight.nrows() != r.len() {
        return Err(Error::Shape(format!(
            "weight of size {} for {} parameters",
            weight.nrows(),
            r.len()
        )));
    }
    Ok(r.dot(&(weight * &r)))
}

/// Keeps only the per-path diagonal blocks of a channel-parameter information matrix.
pub fn block_diagonal(f_eta: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f_eta.nrows();
    let block_of = |i: usize| if i < 7 { 0 } else { 1 + (i - 7) / 5 };
    DMatrix::from_fn(
        n,
        n,
        |i, j| if block_of(i) == block_of(j) { f_eta[(i, j)] } else { 0.0 },
    )
}

/// Gauss-Newton descent of the ExIP objective from `start`.
pub fn exip_minimize(
    eta_hat: &ChannelParams,
    weight: &DMatrix<f64>,
    start: &PositionParams,
    scene: &Scene,
    max_iterations: usize,
) -> Result<PositionParams> {
    let target = eta_hat.to_vector();
    let mut xi = start.to_vector();
    let mut value = exip_objective(eta_hat, weight, start, scene)?;
    for _ in 0..max_iterations {
        let current = PositionParams::from_slice(xi.as_slice())?;
        let j = jacobian(&current, scene)?;
        let r = &target - forward_map(&current, scene)?.to_vector();
        let normal = j.transpose() * weight * &j;
        let step: DVector<f64> = spd_inverse(&normal)? * (j.transpose() * weight * r);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &xi + &step * scale;
            let candidate = PositionParams::from_slice(trial.as_slice())?;
            if let Ok(v) = exip_objective(eta_hat, weight, &candidate, scene) {
                if v <= value {
                    xi = trial;
                    value = v;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        let moved = (step.rows(0, 3) * scale).norm();
        if !accepted || moved < 1e-13 {
            break;
        }
    }
    PositionParams::from_slice(xi.as_slice())
}

/// One single-BS estimate of UE `l'`, to be moved onto UE `l` by a relative offset.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeEstimate {
    pub position: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// Estimated `p_l' - p_l`.
    pub offset: Vector3<f64>,
    pub offset_covariance: Matrix3<f64>,
}

/// Fuses estimates from several BS and UEs into one position of the target UE.
/// Each term is weighted by the inverse of its total covariance.
pub fn multi_fuse(estimates: &[RelativeEstimate]) -> Result<Vector3<f64>> {
    if estimates.is_empty() {
        return Err(Error::FusionImpossible("no estimates to fuse".into()));
    }
    let mut total = Matrix3::zeros();
    let mut acc = Vector3::zeros();
    for e in estimates {
        let w = (e.covariance + e.offset_covariance)
            .try_inverse()
            .ok_or_else(|| Error::FusionImpossible("singular estimate covariance".into()))?;
        total += w;
        acc += w * (e.position - e.offset);
    }
    let inv = total
        .try_inverse()
        .ok_or_else(|| Error::FusionImpossible("summed weights are singular".into()))?;
    Ok(inv * acc)
}
