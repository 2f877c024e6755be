//! Geometry-driven physical path-loss baseline (least-squares fit and
//! residual normalization) plus the empirical reference models: free-space,
//! alpha-beta-gamma and the 3GPP TR 38.901 UMi street-canyon pair.

use crate::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Floor applied to sigma_res to keep the residual standardization finite on
/// degenerate fits.
pub const SIGMA_RES_FLOOR: f64 = 1e-6;

/// Fitted physical baseline: PL = w0 + w1*log10(d) + w2*r_building
/// + w3*r_tree + w4*I_dyn, with the train-set residual statistics used for
/// target standardization. Coefficients are frozen after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub w: [f64; 5],
    pub mu_res: f64,
    pub sigma_res: f64,
    pub fit_rmse: f64,
    pub n_fit: usize,
}

impl BaselineModel {
    /// Stable identifier derived from the coefficient bits; used to detect
    /// checkpoint/dataset baseline mismatches.
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x100_0000_01b3);
        };
        for &w in &self.w {
            eat(w);
        }
        eat(self.mu_res);
        eat(self.sigma_res);
        eat(self.n_fit as f64);
        format!("{h:016x}")
    }
}

/// One training link for baseline fitting.
#[derive(Debug, Clone, Copy)]
pub struct LinkObservation {
    /// Tx-Rx distance, meters.
    pub d: f64,
    pub r_building: f64,
    pub r_tree: f64,
    pub i_dyn: f64,
    pub pl_raw: f64,
}

/// Alpha-beta-gamma empirical model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABGParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ABGParams {
    /// mmWave urban defaults used when the CLI does not fit the model.
    fn default() -> Self {
        Self {
            alpha: 3.4,
            beta: 19.2,
            gamma: 2.3,
        }
    }
}

/// Solve min ||A x - y|| via Householder QR. `a` is row-major n x m, n >= m.
/// Errors with RankDeficient when a diagonal of R collapses.
fn qr_least_squares(a: &mut [f64], y: &mut [f64], n: usize, m: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * m);
    assert_eq!(y.len(), n);
    let mut col_scale = 0.0f64;
    for j in 0..m {
        let norm: f64 = (0..n).map(|i| a[i * m + j] * a[i * m + j]).sum::<f64>().sqrt();
        col_scale = col_scale.max(norm);
    }
    for k in 0..m {
        // Householder vector for column k, rows k..n.
        let mut norm: f64 = (k..n).map(|i| a[i * m + k] * a[i * m + k]).sum::<f64>().sqrt();
        if norm <= col_scale * 1e-12 {
            return Err(CoreError::RankDeficient);
        }
        if a[k * m + k] > 0.0 {
            norm = -norm;
        }
        // v = x - norm*e_k, stored in place of the column.
        a[k * m + k] -= norm;
        let vtv: f64 = (k..n).map(|i| a[i * m + k] * a[i * m + k]).sum();
        if vtv <= 0.0 {
            return Err(CoreError::RankDeficient);
        }
        // Apply H = I - 2 v v^T / (v^T v) to the remaining columns and y.
        for j in (k + 1)..m {
            let dot: f64 = (k..n).map(|i| a[i * m + k] * a[i * m + j]).sum();
            let f = 2.0 * dot / vtv;
            for i in k..n {
                a[i * m + j] -= f * a[i * m + k];
            }
        }
        let dot: f64 = (k..n).map(|i| a[i * m + k] * y[i]).sum();
        let f = 2.0 * dot / vtv;
        for i in k..n {
            y[i] -= f * a[i * m + k];
        }
        // R diagonal entry replaces the column head.
        a[k * m + k] = norm;
    }
    // Back substitution on the upper triangle.
    let mut x = vec![0.0; m];
    for k in (0..m).rev() {
        let mut s = y[k];
        for j in (k + 1)..m {
            s -= a[k * m + j] * x[j];
        }
        let diag = a[k * m + k];
        if diag.abs() <= col_scale * 1e-12 {
            return Err(CoreError::RankDeficient);
        }
        x[k] = s / diag;
    }
    Ok(x)
}

/// Fit the physical baseline by ordinary least squares on
/// [1, log10(d), r_building, r_tree, I_dyn]. Residual mean and population
/// standard deviation are computed over the same links.
pub fn fit_baseline(links: &[LinkObservation]) -> Result<BaselineModel> {
    let rows: Vec<[f64; 4]> = links
        .iter()
        .map(|l| [l.d.log10(), l.r_building, l.r_tree, l.i_dyn])
        .collect();
    let targets: Vec<f64> = links.iter().map(|l| l.pl_raw).collect();
    fit_baseline_rows(&rows, &targets)
}

/// Same fit with log10(d) already computed (the form stored on graph edges).
/// Rows are [log10(d), r_building, r_tree, I_dyn].
pub fn fit_baseline_rows(rows: &[[f64; 4]], pl_raw: &[f64]) -> Result<BaselineModel> {
    let n = rows.len();
    assert_eq!(n, pl_raw.len());
    if n < 5 {
        return Err(CoreError::InvalidConfig(format!(
            "baseline fit needs at least 5 links, got {n}"
        )));
    }
    let m = 5;
    let mut a = Vec::with_capacity(n * m);
    for row in rows {
        a.push(1.0);
        a.extend_from_slice(row);
    }
    let mut y = pl_raw.to_vec();
    let x = qr_least_squares(&mut a, &mut y, n, m)?;
    let w = [x[0], x[1], x[2], x[3], x[4]];

    let mut residuals = Vec::with_capacity(n);
    for (row, &pl) in rows.iter().zip(pl_raw.iter()) {
        let base = w[0] + w[1] * row[0] + w[2] * row[1] + w[3] * row[2] + w[4] * row[3];
        residuals.push(pl - base);
    }
    let mu_res = residuals.iter().sum::<f64>() / n as f64;
    let var = residuals.iter().map(|r| (r - mu_res).powi(2)).sum::<f64>() / n as f64;
    let sigma_res = var.sqrt().max(SIGMA_RES_FLOOR);
    let fit_rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();

    Ok(BaselineModel {
        w,
        mu_res,
        sigma_res,
        fit_rmse,
        n_fit: n,
    })
}

/// Evaluate the physical baseline at a link.
pub fn baseline_pl(model: &BaselineModel, d: f64, r_building: f64, r_tree: f64, i_dyn: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    Ok(baseline_pl_log(model, d.log10(), r_building, r_tree, i_dyn))
}

/// Baseline evaluation with log10(d) supplied directly (bit-stable when the
/// log-distance is taken from stored edge features).
pub fn baseline_pl_log(model: &BaselineModel, log10_d: f64, r_building: f64, r_tree: f64, i_dyn: f64) -> f64 {
    model.w[0] + model.w[1] * log10_d + model.w[2] * r_building + model.w[3] * r_tree + model.w[4] * i_dyn
}

/// Standardized residual learning target.
pub fn residual_target(pl_raw: f64, pl_base: f64, mu_res: f64, sigma_res: f64) -> f64 {
    ((pl_raw - pl_base) - mu_res) / sigma_res
}

/// Inverse of `residual_target`: final path-loss estimate from a predicted
/// normalized residual.
pub fn reconstruct_pl(pl_base: f64, residual_hat: f64, mu_res: f64, sigma_res: f64) -> f64 {
    pl_base + residual_hat * sigma_res + mu_res
}

/// Free-space path loss, d in meters, fc in GHz.
pub fn fspl(d: f64, fc: f64) -> Result<f64> {
    if d <= 0.0 || fc <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    Ok(32.4 + 20.0 * d.log10() + 20.0 * fc.log10())
}

/// Alpha-beta-gamma empirical model, d in meters, fc in GHz.
pub fn abg(d: f64, fc: f64, params: &ABGParams) -> Result<f64> {
    if d <= 0.0 || fc <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    Ok(10.0 * params.alpha * d.log10() + params.beta + 10.0 * params.gamma * fc.log10())
}

/// Fit alpha and beta of the ABG model by least squares at a fixed carrier
/// frequency; gamma stays at its supplied value (it is not identifiable from
/// single-frequency data).
pub fn fit_abg(links: &[(f64, f64)], fc: f64, gamma: f64) -> Result<ABGParams> {
    if links.len() < 2 {
        return Err(CoreError::InvalidConfig("ABG fit needs at least 2 links".into()));
    }
    let n = links.len();
    let mut a = Vec::with_capacity(n * 2);
    let mut y = Vec::with_capacity(n);
    for &(d, pl) in links {
        if d <= 0.0 {
            return Err(CoreError::DegenerateLink);
        }
        a.push(1.0);
        a.push(d.log10());
        y.push(pl);
    }
    let x = qr_least_squares(&mut a, &mut y, n, 2)?;
    Ok(ABGParams {
        alpha: x[1] / 10.0,
        beta: x[0] - 10.0 * gamma * fc.log10(),
        gamma,
    })
}

const UMI_H_BS: f64 = 10.0;
const UMI_H_E: f64 = 1.0;
const LIGHT_SPEED: f64 = 3.0e8;

fn umi_check_height(h_ut: f64) -> Result<()> {
    if !(1.5..=22.5).contains(&h_ut) {
        return Err(CoreError::OutOfRange {
            name: "h_ut",
            value: h_ut,
            min: 1.5,
            max: 22.5,
        });
    }
    Ok(())
}

/// TR 38.901 UMi street-canyon LoS path loss with h_BS = 10 m. The 2D
/// distance is recovered from d3d and the antenna height difference.
pub fn umi_los(d3d: f64, fc: f64, h_ut: f64) -> Result<f64> {
    if d3d <= 0.0 || fc <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    umi_check_height(h_ut)?;
    let dh = UMI_H_BS - h_ut;
    let d2d = (d3d * d3d - dh * dh).max(0.0).sqrt();
    let d_bp = 4.0 * (UMI_H_BS - UMI_H_E) * (h_ut - UMI_H_E) * (fc * 1e9) / LIGHT_SPEED;
    let pl = if d2d <= d_bp {
        32.4 + 21.0 * d3d.log10() + 20.0 * fc.log10()
    } else {
        32.4 + 40.0 * d3d.log10() + 20.0 * fc.log10() - 9.5 * (d_bp * d_bp + dh * dh).log10()
    };
    Ok(pl)
}

/// The TR 38.901 UMi NLoS expression before the LoS lower bound is applied.
pub fn umi_nlos_branch(d3d: f64, fc: f64, h_ut: f64) -> Result<f64> {
    if d3d <= 0.0 || fc <= 0.0 {
        return Err(CoreError::DegenerateLink);
    }
    umi_check_height(h_ut)?;
    Ok(35.3 * d3d.log10() + 22.4 + 21.3 * fc.log10() - 0.3 * (h_ut - 1.5))
}

/// TR 38.901 UMi street-canyon NLoS path loss:
/// max(PL_LoS(d3d), PL'_NLoS(d3d)).
pub fn umi_nlos(d3d: f64, fc: f64, h_ut: f64) -> Result<f64> {
    let los = umi_los(d3d, fc, h_ut)?;
    let nlos = umi_nlos_branch(d3d, fc, h_ut)?;
    Ok(los.max(nlos))
}
