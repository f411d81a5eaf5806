//! Reduced cost `J(u) = ½‖y_u − y_d‖² + (ν/2)|u|²`, its adjoint gradient,
//! the second-order form and Taylor-remainder harnesses.

use crate::error::{Error, Result};
use crate::estimates::{exp_remainder1, exp_remainder2};
use crate::fem::{assemble_weighted_mass, dot, FeFunction};
use crate::pde::{Discretization, Nonlinearity, StateSolution};
use crate::sequences::Control;

/// State, adjoint and gradient at one control.
pub struct FirstOrder<'a> {
    pub u: Control,
    pub state: StateSolution<'a>,
    pub adjoint: FeFunction<'a>,
    pub j: f64,
    /// `d_i = φ(x_i) + ν u_i`
    pub gradient: Vec<f64>,
}

impl FirstOrder<'_> {
    /// `DJ(u) h`.
    pub fn directional(&self, h: &Control) -> f64 {
        self.gradient.iter().enumerate().map(|(i, d)| d * h.get(i)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorRow {
    pub rho: f64,
    pub r1: f64,
    pub r2: f64,
    /// `‖(e^{ρ z_ρ} − 1 − ρ z_ρ)/ρ‖_{L¹}`
    pub state_r1: f64,
    /// `‖(e^{ρ z_ρ} − 1 − ρ z_ρ − ρ² z_ρ²/2)/ρ²‖_{L¹}`
    pub state_r2: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DerivativeReport {
    pub j: f64,
    pub gradient: Vec<f64>,
    /// `D²J(u)[h, h]` for the supplied direction.
    pub second_order: Option<f64>,
    pub taylor: Vec<TaylorRow>,
    pub slope_r1: Option<f64>,
    pub slope_r2: Option<f64>,
    pub slope_state_r1: Option<f64>,
    pub slope_state_r2: Option<f64>,
    pub notes: Vec<String>,
}

fn error_vector(disc: &Discretization<'_>, y: &[f64]) -> Vec<f64> {
    y.iter().zip(disc.target()).map(|(y, yd)| y - yd).collect()
}

/// `J` from an already computed state.
pub fn cost_from_state(disc: &Discretization<'_>, state: &StateSolution<'_>, u: &Control) -> f64 {
    let e = error_vector(disc, state.values());
    let nu = disc.instance().nu;
    0.5 * disc.mass().bilinear(&e, &e) + 0.5 * nu * u.dot(u)
}

pub fn evaluate_j(disc: &Discretization<'_>, u: &Control) -> Result<f64> {
    let state = disc.solve_state(u)?;
    Ok(cost_from_state(disc, &state, u))
}

pub fn first_order<'a>(disc: &Discretization<'a>, u: &Control) -> Result<FirstOrder<'a>> {
    let state = disc.solve_state(u)?;
    first_order_from_state(disc, u, state)
}

/// Completes a state solve with the adjoint and gradient.
pub fn first_order_from_state<'a>(
    disc: &Discretization<'a>,
    u: &Control,
    state: StateSolution<'a>,
) -> Result<FirstOrder<'a>> {
    let j = cost_from_state(disc, &state, u);
    let adjoint = disc.solve_adjoint(&state)?;
    let nu = disc.instance().nu;
    let gradient = disc.values_at_sources(&adjoint).into_iter().enumerate().map(|(i, p)| p + nu * u.get(i)).collect();
    Ok(FirstOrder { u: u.clone(), state, adjoint, j, gradient })
}

pub fn evaluate_dj(disc: &Discretization<'_>, u: &Control) -> Result<DerivativeReport> {
    let fo = first_order(disc, u)?;
    Ok(DerivativeReport { j: fo.j, gradient: fo.gradient, ..DerivativeReport::default() })
}

/// Nodal weights `M_L g''(y) φ` of the curvature term of the discrete cost.
fn curvature_weights(disc: &Discretization<'_>, fo: &FirstOrder<'_>) -> Vec<f64> {
    match disc.instance().nonlinearity {
        Nonlinearity::Exponential => disc
            .lumped_masses()
            .iter()
            .zip(fo.state.values())
            .zip(fo.adjoint.values())
            .map(|((m, y), p)| m * y.exp() * p)
            .collect(),
        Nonlinearity::Linear => vec![0.0; fo.adjoint.values().len()],
    }
}

/// `D²J(u)[h, k] = z_hᵀ M z_k − Σ_j m_j e^{y_j} φ_j z_{h,j} z_{k,j} + ν h·k`.
///
/// This is the exact second derivative of the discrete cost: the tracking part
/// uses the consistent mass, the curvature part the lumped mass that carries
/// the nonlinearity in the state equation.
pub fn second_order_form(disc: &Discretization<'_>, fo: &FirstOrder<'_>, h: &Control, k: &Control) -> Result<f64> {
    let zh = disc.solve_linearized(&fo.state, h)?;
    let zk = if h == k { zh.clone() } else { disc.solve_linearized(&fo.state, k)? };
    Ok(second_order_from_directions(disc, fo, zh.values(), zk.values(), h, k))
}

pub fn second_order_from_directions(
    disc: &Discretization<'_>,
    fo: &FirstOrder<'_>,
    zh: &[f64],
    zk: &[f64],
    h: &Control,
    k: &Control,
) -> f64 {
    let w = curvature_weights(disc, fo);
    let tracking = disc.mass().bilinear(zh, zk);
    let curvature: f64 = (0..zh.len()).map(|j| w[j] * zh[j] * zk[j]).sum();
    let n = h.len().max(k.len());
    let reg: f64 = (0..n).map(|i| h.get(i) * k.get(i)).sum();
    tracking - curvature + disc.instance().nu * reg
}

/// Variant with the nodal weight `1 − e^y φ` integrated against `z_h z_k` by
/// the seven-point rule (consistent weighted mass). Differs from
/// [`second_order_form`] by a quadrature error of the mesh order.
pub fn second_order_form_consistent(
    disc: &Discretization<'_>,
    fo: &FirstOrder<'_>,
    h: &Control,
    k: &Control,
) -> Result<f64> {
    let zh = disc.solve_linearized(&fo.state, h)?;
    let zk = disc.solve_linearized(&fo.state, k)?;
    let g2 = disc.instance().nonlinearity == Nonlinearity::Exponential;
    let w: Vec<f64> = fo
        .state
        .values()
        .iter()
        .zip(fo.adjoint.values())
        .map(|(y, p)| if g2 { 1.0 - y.exp() * p } else { 1.0 })
        .collect();
    let mw = assemble_weighted_mass(disc.mesh(), &w, false)?;
    let n = h.len().max(k.len());
    let reg: f64 = (0..n).map(|i| h.get(i) * k.get(i)).sum();
    Ok(mw.bilinear(zh.values(), zk.values()) + disc.instance().nu * reg)
}

pub fn evaluate_d2j(disc: &Discretization<'_>, u: &Control, h: &Control, k: &Control) -> Result<f64> {
    let fo = first_order(disc, u)?;
    second_order_form(disc, &fo, h, k)
}

/// Least-squares slope of `log y` against `log x` over the positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// The default grid `10^{-1}, 10^{-1.5}, …, 10^{-3}`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..5).map(|i| 10f64.powf(-1.0 - 0.5 * i as f64)).collect()
}

fn is_probe_failure(e: &Error) -> bool {
    e.is_solver_failure() || matches!(e, Error::IllPosed { .. })
}

/// Tabulates the first- and second-order Taylor remainders of `J` and of
/// `e^{S}` along `u + ρh`. Probes whose state cannot be computed are kept as
/// skipped rows.
pub fn taylor_remainder_test(
    disc: &Discretization<'_>,
    u: &Control,
    h: &Control,
    rho_grid: &[f64],
) -> Result<DerivativeReport> {
    let fo = first_order(disc, u)?;
    let dj = fo.directional(h);
    let d2 = second_order_form(disc, &fo, h, h)?;
    let m = disc.lumped_masses();
    let mut rows = Vec::with_capacity(rho_grid.len());
    let mut notes = Vec::new();
    for &rho in rho_grid {
        let probe = u.add_scaled(rho, h);
        let state = match disc.solve_state(&probe) {
            Ok(s) => s,
            Err(e) if is_probe_failure(&e) => {
                notes.push(format!("rho={rho:e} skipped: {e}"));
                rows.push(TaylorRow {
                    rho,
                    r1: f64::NAN,
                    r2: f64::NAN,
                    state_r1: f64::NAN,
                    state_r2: f64::NAN,
                    skipped: true,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let jr = cost_from_state(disc, &state, &probe);
        let r1 = (jr - fo.j - rho * dj).abs();
        let r2 = (jr - fo.j - rho * dj - 0.5 * rho * rho * d2).abs();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (j, (yr, y)) in state.values().iter().zip(fo.state.values()).enumerate() {
            // ρ z_ρ = S(u + ρh) − S(u)
            let x = yr - y;
            s1 += m[j] * exp_remainder1(x).abs();
            s2 += m[j] * exp_remainder2(x).abs();
        }
        rows.push(TaylorRow { rho, r1, r2, state_r1: s1 / rho, state_r2: s2 / (rho * rho), skipped: false });
    }
    let live: Vec<&TaylorRow> = rows.iter().filter(|r| !r.skipped).collect();
    let rho: Vec<f64> = live.iter().map(|r| r.rho).collect();
    let col = |f: fn(&TaylorRow) -> f64| -> Vec<f64> { live.iter().map(|r| f(r)).collect() };
    Ok(DerivativeReport {
        j: fo.j,
        slope_r1: loglog_slope(&rho, &col(|r| r.r1)),
        slope_r2: loglog_slope(&rho, &col(|r| r.r2)),
        slope_state_r1: loglog_slope(&rho, &col(|r| r.state_r1)),
        slope_state_r2: loglog_slope(&rho, &col(|r| r.state_r2)),
        gradient: fo.gradient,
        second_order: Some(d2),
        taylor: rows,
        notes,
    })
}

/// `∫ (y − y_d) z_h`, the tracking-side pairing of the directional derivative.
pub fn tracking_pairing(disc: &Discretization<'_>, fo: &FirstOrder<'_>, h: &Control) -> Result<f64> {
    let z = disc.solve_linearized(&fo.state, h)?;
    let e = error_vector(disc, fo.state.values());
    Ok(dot(&disc.mass().matvec(&e), z.values()))
}
