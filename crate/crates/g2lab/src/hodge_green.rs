//! Hodge theory of `g_φ` on the torus: codifferential, Laplacian, the Green
//! operator on exact forms and the Hodge projections.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exterior7::{form_len, Form, DIM};
use crate::g2point::project2;
use crate::g2point::project3;
use crate::report::Report;
use crate::torus_field::{
    from_spectrum, spectral_contract_ik, spectral_wedge_ik, to_spectrum, FormField, G2Field,
    Grid, TangentVector,
};

/// Iterative solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub reproject_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-10,
            max_iter: 500,
            reproject_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.max_iter == 0 || self.reproject_every == 0 {
            return Err(Error::PreconditionFailed(format!("invalid solver config {self:?}")));
        }
        Ok(())
    }

    pub fn with_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Residual history of one solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

impl SolveStats {
    /// CSV rows `step,residual`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,residual\n");
        for (i, r) in self.history.iter().enumerate() {
            s.push_str(&format!("{i},{r:.6e}\n"));
        }
        s
    }
}

/// `u = GX`: the exact 3-form with `Δ_φ u = X`.
#[derive(Clone, Debug)]
pub struct PotentialForm {
    pub u: FormField,
    pub residual: f64,
    pub stats: SolveStats,
}

/// `δ = (−1)^p *d*` on `p`-forms.
pub fn codiff(omega: &FormField, phi: &G2Field) -> Result<FormField> {
    let p = omega.degree();
    if p == 0 {
        return Err(Error::DegreeUnderflow);
    }
    if omega.grid() != phi.grid() {
        return Err(Error::GridMismatch);
    }
    let inner = phi.star(omega).d_spectral()?;
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    Ok(phi.star(&inner).scale(sign))
}

/// `Δ = dδ + δd`.
pub fn hodge_laplacian(omega: &FormField, phi: &G2Field) -> Result<FormField> {
    let p = omega.degree();
    let mut out = FormField::zeros(omega.grid(), p);
    if p > 0 {
        out = out.add(&codiff(omega, phi)?.d_spectral()?)?;
    }
    if p < DIM {
        out = out.add(&codiff(&omega.d_spectral()?, phi)?)?;
    }
    Ok(out)
}

/// `Δφ = dτ`.
pub fn torsion_field(phi: &G2Field) -> FormField {
    phi.tau().clone()
}

/// Pointwise `s·G_p a · cell`, the coefficient-space Gram of `⟨·,·⟩_φ`.
fn weigh(a: &FormField, phi: &G2Field) -> FormField {
    let cell = a.grid().cell_volume();
    a.map(a.degree(), |pt, f| {
        let fr = phi.frame(pt);
        fr.metric().raise(f) * (fr.vol_density() * cell)
    })
}

/// Applies `k ↦ m(|k|²)·(ik∘ik)` in Fourier space, `wedge_first` choosing
/// `ik∧(ik⌟·)` or `ik⌟(ik∧·)`.
fn flat_multiplier(a: &FormField, wedge_first: bool, power: i32) -> FormField {
    let grid = a.grid();
    let p = a.degree();
    let c = form_len(p);
    let spec = to_spectrum(grid, a.data(), c);
    let mut out = if wedge_first {
        if p == 0 {
            return FormField::zeros(grid, 0);
        }
        spectral_wedge_ik(grid, &spectral_contract_ik(grid, &spec, p), p - 1)
    } else {
        if p == DIM {
            return FormField::zeros(grid, DIM);
        }
        spectral_contract_ik(grid, &spectral_wedge_ik(grid, &spec, p), p + 1)
    };
    scale_by_wavenumber(grid, &mut out, c, power);
    FormField::from_data(grid, p, from_spectrum(grid, out, c)).expect("sizes")
}

/// Multiplies by `−|k|^{−2·power}`, annihilating the zero mode.
fn scale_by_wavenumber(grid: &Grid, spec: &mut [Complex64], c: usize, power: i32) {
    spec.par_chunks_mut(c).enumerate().for_each(|(pt, chunk)| {
        let k = grid.wavevector(pt);
        let k2: f64 = k.iter().map(|x| x * x).sum();
        let factor = if k2 > 0.0 { -k2.powi(-power) } else { 0.0 };
        chunk.iter_mut().for_each(|z| *z *= factor);
    });
}

/// Flat exact projector `k∧(k⌟·)/|k|²`.
pub fn flat_project_exact(a: &FormField) -> FormField {
    flat_multiplier(a, true, 1)
}

/// Flat coexact projector `k⌟(k∧·)/|k|²`.
pub fn flat_project_coexact(a: &FormField) -> FormField {
    flat_multiplier(a, false, 1)
}

#[derive(Clone, Copy, PartialEq)]
enum Subspace {
    /// `dδ u = b` on exact `u`.
    Exact,
    /// `δd w = b`, solution up to closed forms.
    Coexact,
}

fn apply_operator(u: &FormField, phi: &G2Field, space: Subspace) -> Result<FormField> {
    match space {
        Subspace::Exact => codiff(u, phi)?.d_spectral(),
        Subspace::Coexact => codiff(&u.d_spectral()?, phi),
    }
}

fn norm_phi(e: &FormField, phi: &G2Field) -> f64 {
    e.coeff_dot(&weigh(e, phi)).max(0.0).sqrt()
}

/// Preconditioned CG for `W A u = W b` with `A` the chosen Laplacian branch.
fn pcg(
    rhs: &FormField,
    phi: &G2Field,
    cfg: &SolverConfig,
    space: Subspace,
    initial: Option<&FormField>,
) -> Result<(FormField, SolveStats)> {
    cfg.validate()?;
    if rhs.grid() != phi.grid() {
        return Err(Error::GridMismatch);
    }
    let precondition = |r: &FormField| match space {
        Subspace::Exact => flat_multiplier(r, true, 2),
        Subspace::Coexact => flat_multiplier(r, false, 2),
    };
    let reproject = |u: &FormField| match space {
        Subspace::Exact => flat_project_exact(u),
        Subspace::Coexact => u.clone(),
    };
    let rhs_norm = norm_phi(rhs, phi);
    let mut stats = SolveStats::default();
    let mut u = match initial {
        Some(u0) => reproject(u0),
        None => FormField::zeros(rhs.grid(), rhs.degree()),
    };
    if rhs_norm == 0.0 {
        stats.history.push(0.0);
        return Ok((FormField::zeros(rhs.grid(), rhs.degree()), stats));
    }
    let mut e = rhs.sub(&apply_operator(&u, phi, space)?)?;
    let mut res = norm_phi(&e, phi) / rhs_norm;
    stats.history.push(res);
    let mut r = weigh(&e, phi);
    let mut z = precondition(&r);
    let mut dir = z.clone();
    let mut rho = r.coeff_dot(&z);
    for it in 1..=cfg.max_iter {
        if res <= cfg.rel_tol {
            break;
        }
        let q = apply_operator(&dir, phi, space)?;
        let curvature = dir.coeff_dot(&weigh(&q, phi));
        if !(curvature > 0.0) {
            break;
        }
        let step = rho / curvature;
        u = u.axpy(step, &dir)?;
        if it % cfg.reproject_every == 0 {
            u = reproject(&u);
            e = rhs.sub(&apply_operator(&u, phi, space)?)?;
        } else {
            e = e.axpy(-step, &q)?;
        }
        res = norm_phi(&e, phi) / rhs_norm;
        stats.history.push(res);
        stats.iterations = it;
        r = weigh(&e, phi);
        z = precondition(&r);
        let rho_next = r.coeff_dot(&z);
        dir = z.axpy(rho_next / rho, &dir)?;
        rho = rho_next;
    }
    let e = rhs.sub(&apply_operator(&u, phi, space)?)?;
    res = norm_phi(&e, phi) / rhs_norm;
    stats.residual = res;
    if !(res <= cfg.rel_tol) {
        return Err(Error::NoConvergence {
            max_iter: cfg.max_iter,
            last_residual: res,
        });
    }
    Ok((u, stats))
}

/// Green operator on an exact `p`-form.
pub fn green_exact(
    x: &FormField,
    phi: &G2Field,
    cfg: &SolverConfig,
    initial: Option<&FormField>,
) -> Result<PotentialForm> {
    let (u, stats) = pcg(x, phi, cfg, Subspace::Exact, initial)?;
    Ok(PotentialForm {
        u,
        residual: stats.residual,
        stats,
    })
}

/// `u = GX` for a tangent vector.
pub fn green_apply(x: &TangentVector, phi: &G2Field, cfg: &SolverConfig) -> Result<PotentialForm> {
    green_exact(x.x(), phi, cfg, None)
}

/// Solves `δd w = b` for coexact right-hand side `b = δβ`, returning `dw`.
pub fn d_green_coexact(b: &FormField, phi: &G2Field, cfg: &SolverConfig) -> Result<(FormField, SolveStats)> {
    let (w, stats) = pcg(b, phi, cfg, Subspace::Coexact, None)?;
    Ok((w.d_spectral()?, stats))
}

/// `π_d β = G dδβ`.
pub fn project_exact(beta: &FormField, phi: &G2Field, cfg: &SolverConfig) -> Result<FormField> {
    let rhs = codiff(beta, phi)?.d_spectral()?;
    Ok(green_exact(&rhs, phi, cfg, None)?.u)
}

/// `π_d β = dGδβ`, the second formula.
pub fn project_exact_via_coexact(beta: &FormField, phi: &G2Field, cfg: &SolverConfig) -> Result<FormField> {
    Ok(d_green_coexact(&codiff(beta, phi)?, phi, cfg)?.0)
}

/// `π_δ β = δ G dβ`.
pub fn project_coexact(beta: &FormField, phi: &G2Field, cfg: &SolverConfig) -> Result<FormField> {
    let u = green_exact(&beta.d_spectral()?, phi, cfg, None)?.u;
    codiff(&u, phi)
}

/// `β − π_dβ − π_δβ`.
pub fn project_harmonic(beta: &FormField, phi: &G2Field, cfg: &SolverConfig) -> Result<FormField> {
    beta.sub(&project_exact(beta, phi, cfg)?)?
        .sub(&project_coexact(beta, phi, cfg)?)
}

/// Checks `π³₇ dα = 0` and `g(dα, φ) = g(α, τ)` for coclosed `α ∈ Ω²₁₄`.
pub fn verify_coclosed14(alpha: &FormField, phi: &G2Field, test_functions: &[FormField]) -> Result<Report> {
    const PRE_TOL: f64 = 1e-8;
    if alpha.degree() != 2 {
        return Err(Error::DegreeMismatch {
            left: alpha.degree(),
            right: 2,
        });
    }
    let scale = alpha.max_abs().max(1.0);
    let delta = codiff(alpha, phi)?.max_abs();
    if delta > PRE_TOL * scale {
        return Err(Error::PreconditionFailed(format!("|δα| = {delta:e}")));
    }
    let seven = (0..phi.grid().points())
        .map(|pt| project2(&alpha.at(pt), phi.frame(pt)).p7.max_abs())
        .fold(0.0, f64::max);
    if seven > PRE_TOL * scale {
        return Err(Error::PreconditionFailed(format!("|π₇α| = {seven:e}")));
    }
    let dalpha = alpha.d_spectral()?;
    let dscale = dalpha.max_abs().max(1e-300);
    let seven3 = (0..phi.grid().points())
        .map(|pt| project3(&dalpha.at(pt), phi.frame(pt)).p7.max_abs())
        .fold(0.0, f64::max);
    let mut report = Report::new("coclosed Omega^2_14 forms");
    report.record("pi7_d_alpha", if dalpha.max_abs() == 0.0 { 0.0 } else { seven3 / dscale }, 1e-7);
    let lhs = phi.inner(&dalpha, phi.phi());
    let rhs = phi.inner(alpha, phi.tau());
    let pointwise = lhs.sub(&rhs)?.max_abs() / lhs.max_abs().max(rhs.max_abs()).max(1e-300);
    report.record("phi_pairing_pointwise", if lhs.max_abs() == 0.0 && rhs.max_abs() == 0.0 { 0.0 } else { pointwise }, 1e-7);
    for f in test_functions {
        let a = phi.integrate(&lhs.mul_scalar(f)?);
        let b = phi.integrate(&rhs.mul_scalar(f)?);
        let r = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        report.record("phi_pairing_integrated", if a == 0.0 && b == 0.0 { 0.0 } else { r }, 1e-7);
    }
    Ok(report)
}

/// Constant `Ω²₁₄` form from a seed, on the flat structure.
pub fn constant_14_form(grid: &Grid, coeffs: &[f64; 21]) -> FormField {
    let beta = Form::from_slice(2, coeffs).expect("21 coefficients");
    let fr = crate::g2point::G2Frame::standard();
    FormField::constant(grid, &project2(&beta, &fr).p14)
}
