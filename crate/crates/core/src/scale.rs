//! Scale correction: an unscented Kalman filter fusing the unscaled
//! per-frame translation from the learned pose estimator with the metric
//! translation recovered by the classical feature path.
//!
//! The state is the current frame's relative translation `[t_x, t_y, t_z]`.
//! Prediction pushes sigma points through a transition that keeps each
//! point's magnitude and replaces its direction with the unscaled
//! estimate's; the update measures the metric translation directly
//! (`h = identity`) or, optionally, only its norm.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// State transition used by [`ukf_predict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransitionModel {
    /// Keep each sigma point's magnitude, replace its direction with the
    /// direction of the unscaled translation estimate.
    #[default]
    DirectionMagnitude,
    /// Identity dynamics. The filter is then linear, which the tests use to
    /// compare against a closed-form Kalman filter.
    Identity,
}

/// Measurement model used by [`ukf_update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeasurementModel {
    /// Measure the full metric translation vector, `h = identity`.
    #[default]
    FullVector,
    /// Measure only the norm of the metric translation; the correction is
    /// applied along the predicted direction.
    ScaleOnly,
}

/// Sigma-point spread parameters and noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Process noise Q (3x3, PSD).
    pub process_noise: Matrix3<f64>,
    /// Measurement noise R (3x3, PSD; only the (0,0) entry is used in
    /// scale-only mode).
    pub measurement_noise: Matrix3<f64>,
    /// Initial covariance is `prior_var * I`; covariance resets also
    /// restore it.
    pub prior_var: f64,
    pub transition: TransitionModel,
    pub measurement: MeasurementModel,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 2.0,
            kappa: 0.0,
            process_noise: Matrix3::identity() * 1e-8,
            measurement_noise: Matrix3::identity() * 1e-8,
            prior_var: 1e-6,
            transition: TransitionModel::default(),
            measurement: MeasurementModel::default(),
        }
    }
}

const N: usize = 3;

impl UkfParams {
    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (N as f64 + self.kappa) - N as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "ukf alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.prior_var < 0.0 {
            return Err(Error::invalid("ukf prior variance must be >= 0"));
        }
        check_psd("process noise", &self.process_noise)?;
        check_psd("measurement noise", &self.measurement_noise)?;
        Ok(())
    }
}

fn check_psd(what: &str, m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).abs().max() > 1e-9 {
        return Err(Error::invalid(format!("{what} matrix is not symmetric")));
    }
    let eig = m.symmetric_eigenvalues();
    if eig.min() < -1e-9 {
        return Err(Error::invalid(format!(
            "{what} matrix is not positive semi-definite (min eigenvalue {:.3e})",
            eig.min()
        )));
    }
    Ok(())
}

/// Filter state: translation mean, covariance and the parameters it was
/// created with. A value type; predict/update return new states.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub params: UkfParams,
}

impl UkfState {
    /// Re-inflates the covariance to the configured prior. Used when the
    /// metric measurement source has been failing for too long.
    pub fn reset_covariance(&mut self) {
        self.cov = Matrix3::identity() * self.params.prior_var;
    }
}

/// Initializes the filter at `t0` with covariance `prior_var * I`.
pub fn ukf_init(t0: Vector3<f64>, params: UkfParams) -> Result<UkfState> {
    params.validate()?;
    if !t0.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("initial translation must be finite"));
    }
    Ok(UkfState {
        mean: t0,
        cov: Matrix3::identity() * params.prior_var,
        params,
    })
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// from roundoff are clamped to zero so a singular covariance still works.
fn psd_sqrt(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = nalgebra::SymmetricEigen::new(*m);
    let mut d = Matrix3::zeros();
    for i in 0..N {
        d[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
    }
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

struct SigmaPoints {
    points: [Vector3<f64>; 2 * N + 1],
    w_mean: [f64; 2 * N + 1],
    w_cov: [f64; 2 * N + 1],
}

fn sigma_points(mean: &Vector3<f64>, cov: &Matrix3<f64>, p: &UkfParams) -> SigmaPoints {
    let lambda = p.lambda();
    let scale = N as f64 + lambda;
    let root = psd_sqrt(&(cov * scale));
    let mut points = [*mean; 2 * N + 1];
    for i in 0..N {
        let col = root.column(i).into_owned();
        points[1 + i] = mean + col;
        points[1 + N + i] = mean - col;
    }
    let mut w_mean = [1.0 / (2.0 * scale); 2 * N + 1];
    let mut w_cov = w_mean;
    w_mean[0] = lambda / scale;
    w_cov[0] = lambda / scale + (1.0 - p.alpha * p.alpha + p.beta);
    SigmaPoints {
        points,
        w_mean,
        w_cov,
    }
}

fn symmetrize(m: &mut Matrix3<f64>) {
    *m = (*m + m.transpose()) / 2.0;
}

/// Prediction step. Sigma points are propagated through the configured
/// transition driven by the unscaled translation estimate, and the
/// covariance grows by the process noise. A zero-norm unscaled estimate
/// skips the direction update and only inflates the covariance.
pub fn ukf_predict(s: &UkfState, t_unscaled: &Vector3<f64>) -> Result<UkfState> {
    if !t_unscaled.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("unscaled translation must be finite"));
    }
    let p = &s.params;

    let dir = match p.transition {
        TransitionModel::Identity => None,
        TransitionModel::DirectionMagnitude => {
            let n = t_unscaled.norm();
            if n < 1e-12 {
                // No direction information; inflate covariance only.
                let mut cov = s.cov + p.process_noise;
                symmetrize(&mut cov);
                return Ok(UkfState {
                    mean: s.mean,
                    cov,
                    params: p.clone(),
                });
            }
            Some(t_unscaled / n)
        }
    };

    let sp = sigma_points(&s.mean, &s.cov, p);
    let propagate = |x: &Vector3<f64>| -> Vector3<f64> {
        match dir {
            Some(d) => d * x.norm(),
            None => *x,
        }
    };

    let mut pushed = [Vector3::zeros(); 2 * N + 1];
    for (i, x) in sp.points.iter().enumerate() {
        pushed[i] = propagate(x);
    }
    // Anchor the weighted mean on the center point so coincident sigma
    // points reproduce it exactly despite weight roundoff.
    let mut mean = pushed[0];
    for (i, y) in pushed.iter().enumerate().skip(1) {
        mean += sp.w_mean[i] * (y - pushed[0]);
    }
    let mut cov = p.process_noise;
    for (i, y) in pushed.iter().enumerate() {
        let d = y - mean;
        cov += sp.w_cov[i] * d * d.transpose();
    }
    symmetrize(&mut cov);
    Ok(UkfState {
        mean,
        cov,
        params: p.clone(),
    })
}

/// Update step with the metric translation measurement. A singular
/// innovation covariance is regularized with `1e-12 * I` and logged.
pub fn ukf_update(s: &UkfState, t_scaled: &Vector3<f64>) -> Result<UkfState> {
    if !t_scaled.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("scaled translation must be finite"));
    }
    match s.params.measurement {
        MeasurementModel::FullVector => update_full(s, t_scaled),
        MeasurementModel::ScaleOnly => update_scale_only(s, t_scaled.norm()),
    }
}

fn update_full(s: &UkfState, z: &Vector3<f64>) -> Result<UkfState> {
    let p = &s.params;
    let sp = sigma_points(&s.mean, &s.cov, p);

    // h = identity: the measurement sigma points are the state points.
    let mut z_mean = sp.points[0];
    for (i, x) in sp.points.iter().enumerate().skip(1) {
        z_mean += sp.w_mean[i] * (x - sp.points[0]);
    }
    let mut s_cov = p.measurement_noise;
    let mut p_xz = Matrix3::zeros();
    for (i, x) in sp.points.iter().enumerate() {
        let dz = x - z_mean;
        let dx = x - s.mean;
        s_cov += sp.w_cov[i] * dz * dz.transpose();
        p_xz += sp.w_cov[i] * dx * dz.transpose();
    }
    symmetrize(&mut s_cov);

    let inv = match s_cov.try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
        _ => {
            log::warn!("innovation covariance singular; regularizing with 1e-12*I");
            (s_cov + Matrix3::identity() * 1e-12)
                .try_inverse()
                .ok_or_else(|| Error::invalid("innovation covariance not invertible"))?
        }
    };
    let gain = p_xz * inv;
    let mean = s.mean + gain * (z - z_mean);
    let mut cov = s.cov - gain * s_cov * gain.transpose();
    symmetrize(&mut cov);
    Ok(UkfState {
        mean,
        cov,
        params: p.clone(),
    })
}

fn update_scale_only(s: &UkfState, z: f64) -> Result<UkfState> {
    let p = &s.params;
    let sp = sigma_points(&s.mean, &s.cov, p);

    let mut hs = [0.0; 2 * N + 1];
    for (i, x) in sp.points.iter().enumerate() {
        hs[i] = x.norm();
    }
    let mut z_mean = hs[0];
    for (i, h) in hs.iter().enumerate().skip(1) {
        z_mean += sp.w_mean[i] * (h - hs[0]);
    }
    let mut s_var = p.measurement_noise[(0, 0)];
    let mut p_xz = Vector3::zeros();
    for (i, x) in sp.points.iter().enumerate() {
        let dz = hs[i] - z_mean;
        s_var += sp.w_cov[i] * dz * dz;
        p_xz += sp.w_cov[i] * (x - s.mean) * dz;
    }
    if s_var <= 1e-12 {
        log::warn!("scalar innovation variance singular; regularizing with 1e-12");
        s_var += 1e-12;
    }
    let gain = p_xz / s_var;
    let mean = s.mean + gain * (z - z_mean);
    let mut cov = s.cov - (gain * s_var) * gain.transpose();
    symmetrize(&mut cov);
    Ok(UkfState {
        mean,
        cov,
        params: p.clone(),
    })
}

/// Replaces the translation of an unscaled motion with the filter mean and
/// marks the result metric. The rotation passes through untouched.
pub fn correct_motion(m: &Pose, s: &UkfState) -> Pose {
    Pose::new(*m.rotation(), s.mean, true)
}
