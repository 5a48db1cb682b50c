//! Fisher information of the channel parameters, its transformation to
//! position parameters and the resulting error bounds.
//!
//! Every derivative of the noiseless channel with respect to a channel
//! parameter is rank one per subcarrier, `c_i(k) u_i v_i^H`, so the
//! information matrix is assembled from inner products of the factors.

use nalgebra::{DMatrix, Matrix3, RowVector3, Vector3};
use num_complex::Complex64;

use crate::channel::{ura_steering, ura_steering_dx, ura_steering_dy, ChannelModel};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, CMatrix, CVector};
use crate::scene::{delay_anchor, ChannelParams, PositionParams, Scene, SPEED_OF_LIGHT};

/// One column of the channel derivative: `coefs[k] * u v^H` on subcarrier `k`.
#[derive(Debug, Clone)]
pub struct RankOneDerivative {
    pub coefs: Vec<Complex64>,
    pub u: CVector,
    pub v: CVector,
}

impl RankOneDerivative {
    pub fn matrix(&self, k: usize) -> CMatrix {
        &self.u * self.v.adjoint() * self.coefs[k]
    }
}

struct PathFactors {
    gain: Complex64,
    delay: f64,
    ue: (f64, f64),
    bs: (f64, f64),
}

fn path_derivatives(model: &ChannelModel, p: &PathFactors, with_bs_angles: bool, out: &mut Vec<RankOneDerivative>) {
    let k_count = model.subcarriers;
    let phasors: Vec<Complex64> = (0..k_count)
        .map(|k| Complex64::from_polar(1.0, -model.omega(k) * p.delay))
        .collect();
    let a_ue = ura_steering(model.ue, p.ue.0, p.ue.1);
    let a_bs = ura_steering(model.bs, p.bs.0, p.bs.1);
    let i = Complex64::new(0.0, 1.0);
    let scaled =
        |f: &dyn Fn(usize) -> Complex64| -> Vec<Complex64> { (0..k_count).map(|k| f(k) * phasors[k]).collect() };
    out.push(RankOneDerivative {
        coefs: phasors.clone(),
        u: a_ue.clone(),
        v: a_bs.clone(),
    });
    out.push(RankOneDerivative {
        coefs: scaled(&|_| i),
        u: a_ue.clone(),
        v: a_bs.clone(),
    });
    out.push(RankOneDerivative {
        coefs: scaled(&|k| -i * model.omega(k) * p.gain),
        u: a_ue.clone(),
        v: a_bs.clone(),
    });
    let gained = scaled(&|_| p.gain);
    out.push(RankOneDerivative {
        coefs: gained.clone(),
        u: ura_steering_dx(model.ue, p.ue.0, p.ue.1),
        v: a_bs.clone(),
    });
    out.push(RankOneDerivative {
        coefs: gained.clone(),
        u: ura_steering_dy(model.ue, p.ue.0, p.ue.1),
        v: a_bs.clone(),
    });
    if with_bs_angles {
        out.push(RankOneDerivative {
            coefs: gained.clone(),
            u: a_ue.clone(),
            v: ura_steering_dx(model.bs, p.bs.0, p.bs.1),
        });
        out.push(RankOneDerivative {
            coefs: gained,
            u: a_ue,
            v: ura_steering_dy(model.bs, p.bs.0, p.bs.1),
        });
    }
}

/// Derivatives of the noiseless channel, one per entry of the channel-parameter vector.
pub fn derivative_terms(model: &ChannelModel, eta: &ChannelParams) -> Result<Vec<RankOneDerivative>> {
    if eta.ris.len() != model.links.len() {
        return Err(Error::Shape(format!(
            "{} reflected paths for {} RIS links",
            eta.ris.len(),
            model.links.len()
        )));
    }
    let mut out = Vec::with_capacity(ChannelParams::dim(eta.ris.len()));
    let l = &eta.los;
    path_derivatives(
        model,
        &PathFactors {
            gain: l.gain,
            delay: l.delay,
            ue: (l.ue_g, l.ue_s),
            bs: (l.bs_g, l.bs_s),
        },
        true,
        &mut out,
    );
    for (r, link) in eta.ris.iter().zip(&model.links) {
        path_derivatives(
            model,
            &PathFactors {
                gain: r.gain,
                delay: link.delay + r.delay,
                ue: (r.ue_g, r.ue_s),
                bs: (link.bs_g, link.bs_s),
            },
            false,
            &mut out,
        );
    }
    Ok(out)
}

/// Dense derivatives `[parameter][subcarrier]`.
pub fn dh_deta(model: &ChannelModel, eta: &ChannelParams) -> Result<Vec<Vec<CMatrix>>> {
    Ok(derivative_terms(model, eta)?
        .iter()
        .map(|d| (0..model.subcarriers).map(|k| d.matrix(k)).collect())
        .collect())
}

/// Fisher information of the channel parameters under white noise of
/// variance `noise_variance`, summed over subcarriers.
pub fn fim_eta(model: &ChannelModel, eta: &ChannelParams, noise_variance: f64) -> Result<DMatrix<f64>> {
    if !(noise_variance > 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    let terms = derivative_terms(model, eta)?;
    let n = terms.len();
    let mut f = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (&terms[i], &terms[j]);
            let spatial = a.u.dotc(&b.u) * b.v.dotc(&a.v);
            let spectral: Complex64 = a.coefs.iter().zip(&b.coefs).map(|(x, y)| x.conj() * y).sum();
            let value = 2.0 / noise_variance * (spatial * spectral).re;
            f[(i, j)] = value;
            f[(j, i)] = value;
        }
    }
    Ok(f)
}

struct AngleGradients {
    elevation: f64,
    azimuth: f64,
    d_elevation: RowVector3<f64>,
    d_azimuth: RowVector3<f64>,
}

fn angle_gradients(rel: &Vector3<f64>) -> Result<AngleGradients> {
    let (x, y, z) = (rel.x, rel.y, rel.z);
    let rho2 = x * x + y * y;
    let d2 = rho2 + z * z;
    if !(rho2 > 1e-18) {
        return Err(Error::DegenerateGeometry(
            "direction along the vertical axis has no azimuth derivative".into(),
        ));
    }
    let rho = rho2.sqrt();
    Ok(AngleGradients {
        elevation: (z / d2.sqrt()).clamp(-1.0, 1.0).asin(),
        azimuth: y.atan2(x),
        d_elevation: RowVector3::new(-x * z, -y * z, rho2) / (d2 * rho),
        d_azimuth: RowVector3::new(-y, x, 0.0) / rho2,
    })
}

/// Gradients of `[cos el cos az, cos el sin az, sin el]` rotated by `frame`
/// (rows selected by the caller) with respect to the end point.
fn cosine_gradients(a: &AngleGradients) -> (Vector3<f64>, Vector3<f64>) {
    let (se, ce) = a.elevation.sin_cos();
    let (sa, ca) = a.azimuth.sin_cos();
    (
        Vector3::new(-se * ca, -se * sa, ce),
        Vector3::new(-ce * sa, ce * ca, 0.0),
    )
}

/// Rows: `[tau, g_U, s_U]` then, for the LOS only, `[g_B, s_B]`; columns: position.
fn geometric_rows(rel: &Vector3<f64>, orientation: &Matrix3<f64>, with_bs: bool) -> Result<DMatrix<f64>> {
    let a = angle_gradients(rel)?;
    let (dv_del, dv_daz) = cosine_gradients(&a);
    let rows = if with_bs { 5 } else { 3 };
    let mut out = DMatrix::zeros(rows, 3);
    let d = rel.norm();
    let tau_row = rel.transpose() / (SPEED_OF_LIGHT * d);
    out.row_mut(0).copy_from(&tau_row);
    // UE cosines are the y/z rows of -O v
    let ue_rows = -orientation;
    for (r, frame_row) in [(1usize, 1usize), (2, 2)] {
        let w = ue_rows.row(frame_row);
        let del = (w * dv_del)[0];
        let daz = (w * dv_daz)[0];
        out.row_mut(r).copy_from(&(a.d_elevation * del + a.d_azimuth * daz));
    }
    if with_bs {
        // g = v_y, s = v_z
        out.row_mut(3)
            .copy_from(&(a.d_elevation * dv_del.y + a.d_azimuth * dv_daz.y));
        out.row_mut(4)
            .copy_from(&(a.d_elevation * dv_del.z + a.d_azimuth * dv_daz.z));
    }
    Ok(out)
}

/// Jacobian of `[Re h, Im h, tau, g_U, s_U, g_B, s_B]` with respect to
/// `[anchor, Re h, Im h]`, the delay read as `|anchor| / c`.
pub fn los_path_jacobian(anchor: &Vector3<f64>, orientation: &Matrix3<f64>) -> Result<DMatrix<f64>> {
    let geo = geometric_rows(anchor, orientation, true)?;
    let mut j = DMatrix::zeros(7, 5);
    j[(0, 3)] = 1.0;
    j[(1, 4)] = 1.0;
    j.view_mut((2, 0), (5, 3)).copy_from(&geo);
    Ok(j)
}

/// Jacobian of `[Re h, Im h, tau_RU, g_U, s_U]` with respect to `[anchor, Re h, Im h]`.
pub fn ris_path_jacobian(
    anchor: &Vector3<f64>,
    ris: &Vector3<f64>,
    orientation: &Matrix3<f64>,
) -> Result<DMatrix<f64>> {
    let geo = geometric_rows(&(anchor - ris), orientation, false)?;
    let mut j = DMatrix::zeros(5, 5);
    j[(0, 3)] = 1.0;
    j[(1, 4)] = 1.0;
    j.view_mut((2, 0), (3, 3)).copy_from(&geo);
    Ok(j)
}

/// Jacobian of the channel parameters with respect to the position parameters.
pub fn jacobian(xi: &PositionParams, scene: &Scene) -> Result<DMatrix<f64>> {
    let q = scene.ris.len();
    if xi.ris_gains.len() != q {
        return Err(Error::Shape(format!("{} RIS gains for {q} RIS", xi.ris_gains.len())));
    }
    let mut j = DMatrix::zeros(ChannelParams::dim(q), PositionParams::dim(q));
    let los = los_path_jacobian(&xi.ue, &scene.orientation)?;
    j.view_mut((0, 0), (7, 3)).copy_from(&los.view((0, 0), (7, 3)));
    j[(0, 4)] = 1.0;
    j[(1, 5)] = 1.0;
    j[(2, 3)] = 1.0;
    for (r, p_r) in scene.ris.iter().enumerate() {
        let row = 7 + 5 * r;
        let col = 6 + 2 * r;
        let block = ris_path_jacobian(&xi.ue, p_r, &scene.orientation)?;
        j.view_mut((row, 0), (5, 3)).copy_from(&block.view((0, 0), (5, 3)));
        j[(row, col)] = 1.0;
        j[(row + 1, col + 1)] = 1.0;
        j[(row + 2, 3)] = 1.0;
    }
    Ok(j)
}

pub fn fim_xi(f_eta: &DMatrix<f64>, jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f_eta.nrows() != jac.nrows() || !f_eta.is_square() {
        return Err(Error::Shape(format!(
            "information {}x{} against Jacobian {}x{}",
            f_eta.nrows(),
            f_eta.ncols(),
            jac.nrows(),
            jac.ncols()
        )));
    }
    Ok(jac.transpose() * f_eta * jac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    /// Position error bound in metres.
    pub peb: f64,
    /// Clock-bias error bound in seconds.
    pub ceb: f64,
}

/// Position-block of the inverse information.
pub fn position_crb(f_xi: &DMatrix<f64>) -> Result<Matrix3<f64>> {
    let inv = spd_inverse(f_xi)?;
    Ok(inv.fixed_view::<3, 3>(0, 0).into_owned())
}

pub fn peb_ceb(f_xi: &DMatrix<f64>) -> Result<ErrorBounds> {
    let inv = spd_inverse(f_xi)?;
    Ok(ErrorBounds {
        peb: (inv[(0, 0)] + inv[(1, 1)] + inv[(2, 2)]).sqrt(),
        ceb: inv[(3, 3)].sqrt(),
    })
}

/// Bounds of the scene evaluated at its true parameters.
pub fn scene_bounds(
    model: &ChannelModel,
    xi: &PositionParams,
    scene: &Scene,
    noise_variance: f64,
) -> Result<ErrorBounds> {
    let eta = crate::scene::forward_map(xi, scene)?;
    let f = fim_eta(model, &eta, noise_variance)?;
    peb_ceb(&fim_xi(&f, &jacobian(xi, scene)?)?)
}

fn block(m: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    m.view((start, start), (len, len)).into_owned()
}

fn projected_position_cov(info: &DMatrix<f64>, jac: &DMatrix<f64>) -> Option<Matrix3<f64>> {
    let inv = spd_inverse(&(jac.transpose() * info * jac)).ok()?;
    Some(inv.fixed_view::<3, 3>(0, 0).into_owned())
}

/// Per-path position covariances; `None` marks a path whose own
/// information cannot localise its anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBounds {
    pub los: Option<Matrix3<f64>>,
    pub ris: Vec<Option<Matrix3<f64>>>,
}

/// Anchor of every path plus what is needed to differentiate it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGeometry {
    pub los: Vector3<f64>,
    pub ris: Vec<Vector3<f64>>,
    pub ris_positions: Vec<Vector3<f64>>,
    pub orientation: Matrix3<f64>,
}

impl AnchorGeometry {
    /// Anchors implied by the true position and clock bias of a scene.
    pub fn of_scene(scene: &Scene) -> Self {
        AnchorGeometry {
            los: delay_anchor(&Vector3::zeros(), &scene.ue, scene.clock_bias),
            ris: scene
                .ris
                .iter()
                .map(|p| delay_anchor(p, &scene.ue, scene.clock_bias))
                .collect(),
            ris_positions: scene.ris.clone(),
            orientation: scene.orientation,
        }
    }
}

/// Covariance bounds of each anchor using only that path's information block.
pub fn path_bounds(f_eta: &DMatrix<f64>, anchors: &AnchorGeometry) -> Result<PathBounds> {
    let q = anchors.ris.len();
    if f_eta.nrows() != ChannelParams::dim(q) || anchors.ris_positions.len() != q {
        return Err(Error::Shape(format!(
            "information of size {} for {q} reflected anchors",
            f_eta.nrows()
        )));
    }
    let j_los = los_path_jacobian(&anchors.los, &anchors.orientation)?;
    let los = projected_position_cov(&block(f_eta, 0, 7), &j_los);
    let ris = anchors
        .ris
        .iter()
        .zip(&anchors.ris_positions)
        .enumerate()
        .map(|(r, (a, p))| {
            let j = ris_path_jacobian(a, p, &anchors.orientation)?;
            Ok(projected_position_cov(&block(f_eta, 7 + 5 * r, 5), &j))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBounds { los, ris })
}

/// LOS anchor covariance from the LOS block of the full inverse information,
/// i.e. accounting for the nuisance of every other path.
pub fn los_marginal_bound(f_eta: &DMatrix<f64>, anchors: &AnchorGeometry) -> Result<Matrix3<f64>> {
    let cov_eta = block(&spd_inverse(f_eta)?, 0, 7);
    let info = spd_inverse(&cov_eta)?;
    let j = los_path_jacobian(&anchors.los, &anchors.orientation)?;
    projected_position_cov(&info, &j).ok_or_else(|| Error::Unidentifiable("LOS anchor not identifiable".into()))
}
