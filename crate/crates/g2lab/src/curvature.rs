//! Riemannian curvature of `g_φ`: a coordinate oracle from spectral
//! derivatives of `g_{ij}`, the closed-structure Ricci formula, the
//! Bakry–Emery bounds and the pullback of the Ebin metric.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exterior7::{tensor_inner, wedge, Form, Metric, SymTensor2, DIM};
use crate::g2point::{dense, isometric_family, op_j, project3, G2Frame};
use crate::report::Report;
use crate::torus_field::{FormField, G2Field, SymTensorField};

const GAMMA_LEN: usize = DIM * DIM * DIM;

#[inline]
fn gidx(k: usize, i: usize, j: usize) -> usize {
    (k * DIM + i) * DIM + j
}

/// Christoffel symbols, Ricci tensor and scalar curvature on a grid.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    christoffel: Vec<[f64; GAMMA_LEN]>,
    pub ricci: SymTensorField,
    pub scal: FormField,
}

impl CurvaturePack {
    /// `Γ^k_{ij}` at a grid point.
    pub fn christoffel(&self, pt: usize, k: usize, i: usize, j: usize) -> f64 {
        self.christoffel[pt][gidx(k, i, j)]
    }

    pub fn max_christoffel(&self) -> f64 {
        self.christoffel
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Metric components `g_{ab}`, `a ≤ b`, each as a scalar field.
fn metric_components(phi: &G2Field) -> Vec<((usize, usize), FormField)> {
    let grid = phi.grid();
    let mut out = Vec::with_capacity(28);
    for a in 0..DIM {
        for b in a..DIM {
            let values = (0..grid.points())
                .map(|pt| phi.frame(pt).metric().g()[(a, b)])
                .collect();
            out.push(((a, b), FormField::scalar(grid, values).expect("grid size")));
        }
    }
    out
}

/// Γ, Ric and Scal of `g_φ` from first and second spectral derivatives of
/// the metric components.
pub fn coordinate_curvature(phi: &G2Field) -> CurvaturePack {
    let grid = phi.grid().clone();
    let n = grid.points();
    let active: Vec<usize> = grid.active_axes().collect();
    // dg[m][a][b][pt], ddg[m][l][a][b][pt], zero along inactive axes.
    let mut dg = vec![vec![vec![0.0; n]; DIM * DIM]; DIM];
    let mut ddg = vec![vec![vec![0.0; n]; DIM * DIM]; DIM * DIM];
    for ((a, b), field) in metric_components(phi) {
        let first = field.partials();
        for &m in &active {
            let second = first[m].partials();
            for &l in &active {
                let v = second[l].data();
                ddg[m * DIM + l][a * DIM + b].copy_from_slice(v);
                ddg[m * DIM + l][b * DIM + a].copy_from_slice(v);
            }
            let v = first[m].data();
            dg[m][a * DIM + b].copy_from_slice(v);
            dg[m][b * DIM + a].copy_from_slice(v);
        }
    }

    let pointwise: Vec<([f64; GAMMA_LEN], SymTensor2, f64)> = (0..n)
        .into_par_iter()
        .map(|pt| {
            let ginv = phi.frame(pt).metric().ginv();
            let d = |m: usize, a: usize, b: usize| dg[m][a * DIM + b][pt];
            let dd = |m: usize, l: usize, a: usize, b: usize| ddg[m * DIM + l][a * DIM + b][pt];

            // Γ_{lij} = ½(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}).
            let mut low = [0.0; GAMMA_LEN];
            for l in 0..DIM {
                for i in 0..DIM {
                    for j in 0..DIM {
                        low[gidx(l, i, j)] = 0.5 * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                    }
                }
            }
            let mut gamma = [0.0; GAMMA_LEN];
            for k in 0..DIM {
                for i in 0..DIM {
                    for j in 0..DIM {
                        gamma[gidx(k, i, j)] = (0..DIM).map(|l| ginv[(k, l)] * low[gidx(l, i, j)]).sum();
                    }
                }
            }

            // ∂_m Γ^k_{ij} = ∂_m g^{kl} Γ_{lij} + g^{kl} ∂_m Γ_{lij}.
            let d_gamma = |m: usize, k: usize, i: usize, j: usize| -> f64 {
                let mut acc = 0.0;
                for l in 0..DIM {
                    let mut dginv = 0.0;
                    for a in 0..DIM {
                        for b in 0..DIM {
                            dginv -= ginv[(k, a)] * d(m, a, b) * ginv[(b, l)];
                        }
                    }
                    let dlow = 0.5 * (dd(m, i, j, l) + dd(m, j, i, l) - dd(m, l, i, j));
                    acc += dginv * low[gidx(l, i, j)] + ginv[(k, l)] * dlow;
                }
                acc
            };

            let ric = SymTensor2::from_fn(|i, j| {
                let mut r = 0.0;
                for &k in &active {
                    r += d_gamma(k, k, i, j);
                }
                if active.contains(&j) {
                    for k in 0..DIM {
                        r -= d_gamma(j, k, i, k);
                    }
                }
                for k in 0..DIM {
                    for l in 0..DIM {
                        r += gamma[gidx(k, k, l)] * gamma[gidx(l, i, j)]
                            - gamma[gidx(k, j, l)] * gamma[gidx(l, i, k)];
                    }
                }
                r
            });
            let scal = ric.trace(phi.frame(pt).metric());
            (gamma, ric, scal)
        })
        .collect();

    let mut christoffel = Vec::with_capacity(n);
    let mut ricci = Vec::with_capacity(n);
    let mut scal = Vec::with_capacity(n);
    for (g, r, s) in pointwise {
        christoffel.push(g);
        ricci.push(r);
        scal.push(s);
    }
    CurvaturePack {
        christoffel,
        ricci: SymTensorField::new(&grid, ricci).expect("grid size"),
        scal: FormField::scalar(&grid, scal).expect("grid size"),
    }
}

/// Pointwise `¼|τ|²g − ⅛ j_φ(2dτ − *(τ∧τ))`.
pub fn bryant_ricci_at(fr: &G2Frame, tau: &Form, dtau: &Form) -> SymTensor2 {
    let m = fr.metric();
    let tt = fr.star(&wedge(tau, tau).expect("degree 4"));
    let source = *dtau * 2.0 - tt;
    let j = op_j(fr.phi(), &source, m).expect("3-forms");
    m.as_tensor() * (0.25 * fr.inner(tau, tau)) - j * 0.125
}

/// Ricci tensor and scalar curvature of a closed structure from its torsion.
pub fn bryant_ricci(phi: &G2Field) -> Result<(SymTensorField, FormField)> {
    let tau = phi.tau();
    let dtau = tau.d_spectral()?;
    let grid = phi.grid();
    let ricci = SymTensorField::from_points(grid, |pt| bryant_ricci_at(phi.frame(pt), &tau.at(pt), &dtau.at(pt)));
    let scal = phi.inner(tau, tau).scale(-0.5);
    Ok((ricci, scal))
}

/// The same formula with the `Ω³₇` part of `2dτ − *(τ∧τ)` removed first.
fn bryant_ricci_projected(phi: &G2Field) -> Result<SymTensorField> {
    let tau = phi.tau();
    let dtau = tau.d_spectral()?;
    Ok(SymTensorField::from_points(phi.grid(), |pt| {
        let fr = phi.frame(pt);
        let t = tau.at(pt);
        let tt = fr.star(&wedge(&t, &t).expect("degree 4"));
        let source = dtau.at(pt) * 2.0 - tt;
        let p7 = project3(&source, fr).p7;
        let j = op_j(fr.phi(), &(source - p7), fr.metric()).expect("3-forms");
        fr.metric().as_tensor() * (0.25 * fr.inner(&t, &t)) - j * 0.125
    }))
}

/// Eigenvalues of `h` relative to `g`, increasing.
pub fn relative_eigenvalues(h: &SymTensor2, m: &Metric) -> Result<[f64; DIM]> {
    let l = m.g().cholesky().ok_or(Error::NonPositiveMetric)?.l();
    let linv = l.try_inverse().ok_or(Error::NonPositiveMetric)?;
    let reduced = linv * h.matrix() * linv.transpose();
    let eig = SymmetricEigen::new((reduced + reduced.transpose()) * 0.5);
    let mut out = [0.0; DIM];
    out.copy_from_slice(eig.eigenvalues.as_slice());
    out.sort_by(|a, b| a.total_cmp(b));
    Ok(out)
}

/// `τ_i{}^k τ_{kj}`.
fn tau_square(tau: &Form, m: &Metric) -> SymTensor2 {
    let t = crate::g2point::antisymmetric_matrix(tau);
    SymTensor2::symmetrize(&(t * m.ginv() * t))
}

/// Checks `−(2λ+|τ|²)/6·g ≤ Ric_f ≤ −(2λ−|τ|²)/6·g` and its scalar-curvature
/// form at every grid point, with `Ric_f = −(2λ+|τ|²)/6·g − ½τ_i{}^kτ_{kj}`.
pub fn bakry_emery(phi: &G2Field, lambda: f64) -> Result<Report> {
    let tau = phi.tau();
    let (_, scal) = bryant_ricci(phi)?;
    let mut report = Report::new(format!("Bakry-Emery bounds, lambda = {lambda}"));
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    let mut lower_scal = 0.0f64;
    let mut upper_scal = 0.0f64;
    for pt in 0..phi.grid().points() {
        let fr = phi.frame(pt);
        let m = fr.metric();
        let t = tau.at(pt);
        let t2 = fr.inner(&t, &t);
        let g = m.as_tensor();
        let ric_f = g * (-(2.0 * lambda + t2) / 6.0) - tau_square(&t, m) * 0.5;
        let scale = 1.0f64.max(lambda.abs() + t2);
        let margin = |h: SymTensor2| -> Result<(f64, f64)> {
            let e = relative_eigenvalues(&h, m)?;
            Ok((e[0], e[DIM - 1]))
        };
        let (lo, _) = margin(ric_f - g * (-(2.0 * lambda + t2) / 6.0))?;
        let (_, hi) = margin(ric_f - g * (-(2.0 * lambda - t2) / 6.0))?;
        lower = lower.max(-lo / scale);
        upper = upper.max(hi / scale);
        let s = scal.data()[pt];
        let (lo, _) = margin(ric_f - g * (-(lambda - s) / 3.0))?;
        let (_, hi) = margin(ric_f - g * (-(lambda + s) / 3.0))?;
        lower_scal = lower_scal.max(-lo / scale);
        upper_scal = upper_scal.max(hi / scale);
    }
    report.record("lower_bound", lower.max(0.0), 1e-9);
    report.record("upper_bound", upper.max(0.0), 1e-9);
    report.record("lower_bound_scal", lower_scal.max(0.0), 1e-9);
    report.record("upper_bound_scal", upper_scal.max(0.0), 1e-9);
    Ok(report)
}

/// `𝓕_*X = ½j_φX − ⅓g(X,φ)g` at a point.
pub fn ebin_pushforward_at(fr: &G2Frame, x: &Form) -> SymTensor2 {
    let m = fr.metric();
    op_j(fr.phi(), x, m).expect("3-forms") * 0.5 - m.as_tensor() * (fr.inner(x, fr.phi()) / 3.0)
}

pub fn ebin_pushforward(phi: &G2Field, x: &FormField) -> SymTensorField {
    SymTensorField::from_points(phi.grid(), |pt| ebin_pushforward_at(phi.frame(pt), &x.at(pt)))
}

/// `∫ g(A, B) vol`.
pub fn ebin_metric(phi: &G2Field, a: &SymTensorField, b: &SymTensorField) -> f64 {
    let values = (0..phi.grid().points())
        .map(|pt| tensor_inner(a.at(pt), b.at(pt), phi.frame(pt).metric()))
        .collect();
    phi.integrate(&FormField::scalar(phi.grid(), values).expect("grid size"))
}

/// Right-hand side of the pullback formula at a point.
pub fn ebin_pullback_density(fr: &G2Frame, x: &Form, y: &Form) -> f64 {
    let m = fr.metric();
    let (xf, yf) = (x.to_full(), y.to_full());
    let quartic = dense::psi_term(&xf, &yf, &fr.psi().to_full(), m.ginv())
        + dense::phi_phi_term(&xf, &yf, &fr.phi().to_full(), m.ginv());
    0.75 * fr.inner(x, y) - (11.0 / 18.0) * fr.inner(x, fr.phi()) * fr.inner(y, fr.phi()) + quartic / 16.0
}

/// `∫g(𝓕_*X, 𝓕_*Y)vol` against the closed-form pullback.
pub fn ebin_pullback_check(phi: &G2Field, x: &FormField, y: &FormField) -> Report {
    let lhs = ebin_metric(phi, &ebin_pushforward(phi, x), &ebin_pushforward(phi, y));
    let density = (0..phi.grid().points())
        .map(|pt| ebin_pullback_density(phi.frame(pt), &x.at(pt), &y.at(pt)))
        .collect();
    let rhs = phi.integrate(&FormField::scalar(phi.grid(), density).expect("grid size"));
    let mut report = Report::new("Ebin pullback");
    let scale = lhs.abs().max(rhs.abs());
    report.record("pullback_equality", if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale }, 1e-9);
    report
}

/// Tangent of `s ↦ P(cos s·(f₀,η₀) + sin s·(f₁,η₁))` at `s = 0` by five-point
/// differences, with `(f₀,η₀)`, `(f₁,η₁)` orthonormal in `ℝ ⊕ (T*, g_φ)`.
pub fn isometric_family_tangent(fr: &G2Frame, start: (f64, &Form), dir: (f64, &Form), h: f64) -> Result<Form> {
    let at = |s: f64| {
        let (c, sn) = (s.cos(), s.sin());
        let eta = *start.1 * c + *dir.1 * sn;
        let f = start.0 * c + dir.0 * sn;
        // Renormalise away roundoff in the constraint.
        let norm = (f * f + fr.inner(&eta, &eta)).sqrt();
        isometric_family(fr, f / norm, &(eta * (1.0 / norm)))
    };
    let (m2, m1, p1, p2) = (at(-2.0 * h)?, at(-h)?, at(h)?, at(2.0 * h)?);
    Ok((m2 - p2 + (p1 - m1) * 8.0) * (1.0 / (12.0 * h)))
}

/// Pointwise checks: Ebin kernel on `Ω³₇` and on isometric-family tangents,
/// and metric preservation along the family.
pub fn ebin_kernel_suite(fr: &G2Frame, trials: usize, seed: u64) -> Result<Report> {
    use crate::g2point::{frame_from_phi, random_form, trial_rng};
    use rand::Rng;
    let mut report = Report::new("Ebin kernel");
    let m = fr.metric();
    for trial in 0..trials as u64 {
        let mut rng = trial_rng(seed, trial);
        let eta = random_form(&mut rng, 1);
        let seven = fr.star(&wedge(&eta, fr.phi())?);
        let push = ebin_pushforward_at(fr, &seven);
        report.record("kernel_omega7", push.max_abs() / seven.max_abs().max(1e-300), 1e-7);

        // Orthonormal pair (f₀,η₀), (f₁,η₁) by Gram–Schmidt.
        let e0 = random_form(&mut rng, 1);
        let f0: f64 = rng.gen_range(-1.0..1.0);
        let n0 = (f0 * f0 + fr.inner(&e0, &e0)).sqrt();
        let (f0, e0) = (f0 / n0, e0 * (1.0 / n0));
        let e1 = random_form(&mut rng, 1);
        let f1: f64 = rng.gen_range(-1.0..1.0);
        let overlap = f0 * f1 + fr.inner(&e0, &e1);
        let (f1, e1) = (f1 - overlap * f0, e1 - e0 * overlap);
        let n1 = (f1 * f1 + fr.inner(&e1, &e1)).sqrt();
        let (f1, e1) = (f1 / n1, e1 * (1.0 / n1));

        let base = isometric_family(fr, f0, &e0)?;
        let base_frame = frame_from_phi(&base)?;
        let metric_gap = (base_frame.metric().g() - m.g()).amax();
        report.record("family_preserves_metric", metric_gap, 1e-8);
        let tangent = isometric_family_tangent(fr, (f0, &e0), (f1, &e1), 1e-3)?;
        let push = ebin_pushforward_at(&base_frame, &tangent);
        report.record("kernel_family_tangent", push.max_abs() / tangent.max_abs().max(1e-300), 1e-7);
    }
    Ok(report)
}

/// Report rows `check,max_violation,grid`.
pub fn curvature_csv(report: &Report, grid_label: &str) -> String {
    let mut s = String::from("check,max_violation,grid\n");
    for c in &report.checks {
        s.push_str(&format!("{},{:.6e},{}\n", c.name, c.max_residual, grid_label));
    }
    s
}

fn tensor_field_rel(a: &SymTensorField, b: &SymTensorField) -> f64 {
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        return 0.0;
    }
    a.sub(b).expect("same grid").max_abs() / scale
}

fn scalar_field_rel(a: &FormField, b: &FormField) -> f64 {
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        return 0.0;
    }
    a.sub(b).expect("same grid").max_abs() / scale
}

/// Coordinate curvature against the torsion formulas on a closed field.
pub fn curvature_suite(phi: &G2Field) -> Result<Report> {
    let mut report = Report::new("curvature");
    let pack = coordinate_curvature(phi);
    let (ricci, scal) = bryant_ricci(phi)?;
    report.record("ricci_bryant_vs_coordinate", tensor_field_rel(&ricci, &pack.ricci), 1e-6);
    report.record("scal_bryant_vs_coordinate", scalar_field_rel(&scal, &pack.scal), 1e-6);

    let trace = FormField::scalar(
        phi.grid(),
        (0..phi.grid().points())
            .map(|pt| ricci.at(pt).trace(phi.frame(pt).metric()))
            .collect(),
    )?;
    let scal_scale = scal.max_abs().max(1e-300);
    report.record(
        "bryant_trace_is_scal",
        if scal.max_abs() == 0.0 { trace.max_abs() } else { trace.sub(&scal)?.max_abs() / scal_scale },
        1e-9,
    );
    let ricci_scale = ricci.max_abs().max(1.0);
    report.record(
        "omega7_part_invisible",
        ricci.sub(&bryant_ricci_projected(phi)?)?.max_abs() / ricci_scale,
        1e-9,
    );

    let energy = phi.l2(phi.tau(), phi.tau());
    let total = phi.integrate(&pack.scal);
    let denom = (0.5 * energy).abs();
    report.record(
        "total_scal_vs_energy",
        if denom == 0.0 { total.abs() } else { (total + 0.5 * energy).abs() / denom },
        1e-8,
    );
    Ok(report)
}
