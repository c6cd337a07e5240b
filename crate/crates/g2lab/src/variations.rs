//! First variations along `φ(t) = φ + tX`: metric, volume, Hodge star, `ψ`,
//! codifferential, torsion, Laplacian, Green operator and `π_d`, with
//! central-difference verification.

use crate::error::{Error, Result};
use crate::g2point::{op_i, op_j, project3};
use crate::hodge_green::{codiff, green_exact, hodge_laplacian, project_exact, SolverConfig};
use crate::report::Report;
use crate::torus_field::{FormField, G2Field, SymTensorField, TangentVector};

/// Pointwise `i_ω h`.
pub fn op_i_field(h: &SymTensorField, omega: &FormField, phi: &G2Field) -> FormField {
    omega.map(omega.degree(), |pt, w| {
        op_i(h.at(pt), w, phi.frame(pt).metric()).expect("positive degree")
    })
}

/// Pointwise `j_a b`.
pub fn op_j_field(a: &FormField, b: &FormField, phi: &G2Field) -> SymTensorField {
    SymTensorField::from_points(phi.grid(), |pt| {
        op_j(&a.at(pt), &b.at(pt), phi.frame(pt).metric()).expect("equal degrees")
    })
}

/// Pointwise trace `Tr_g h` as a scalar field.
pub fn trace_field(h: &SymTensorField, phi: &G2Field) -> FormField {
    FormField::scalar(
        phi.grid(),
        (0..phi.grid().points())
            .map(|pt| h.at(pt).trace(phi.frame(pt).metric()))
            .collect(),
    )
    .expect("grid size")
}

/// `g_φ` as a tensor field.
pub fn metric_field(phi: &G2Field) -> SymTensorField {
    SymTensorField::from_points(phi.grid(), |pt| phi.frame(pt).metric().as_tensor())
}

/// `φ_t = X` with its type decomposition `3f₀φ + *(f₁∧φ) + f₃`.
pub struct VariationInput<'a> {
    pub phi: &'a G2Field,
    pub x: FormField,
    pub f0: FormField,
    pub f1: FormField,
    pub f3: FormField,
    p7: FormField,
    j_x: SymTensorField,
}

impl<'a> VariationInput<'a> {
    pub fn new(phi: &'a G2Field, x: &TangentVector) -> Result<VariationInput<'a>> {
        VariationInput::from_form(phi, x.x().clone())
    }

    /// From a bare 3-form direction; exactness is the caller's concern.
    pub fn from_form(phi: &'a G2Field, x: FormField) -> Result<VariationInput<'a>> {
        if x.grid() != phi.grid() {
            return Err(Error::GridMismatch);
        }
        if x.degree() != 3 {
            return Err(Error::DegreeMismatch {
                left: x.degree(),
                right: 3,
            });
        }
        let grid = phi.grid();
        let parts: Vec<_> = (0..grid.points())
            .map(|pt| project3(&x.at(pt), phi.frame(pt)))
            .collect();
        let f0 = FormField::scalar(grid, parts.iter().map(|d| d.f0).collect())?;
        let f1 = FormField::from_points(grid, 1, |pt| parts[pt].f1);
        let f3 = FormField::from_points(grid, 3, |pt| parts[pt].p27);
        let p7 = FormField::from_points(grid, 3, |pt| parts[pt].p7);
        let j_x = op_j_field(phi.phi(), &x, phi);
        Ok(VariationInput {
            phi,
            x,
            f0,
            f1,
            f3,
            p7,
            j_x,
        })
    }

    /// `max|3f₀φ + *(f₁∧φ) + f₃ − X|`.
    pub fn reconstruction_residual(&self) -> f64 {
        let phi = self.phi;
        let one = phi.phi().mul_scalar(&self.f0).expect("scalar").scale(3.0);
        let seven = phi.star(&self.f1.wedge(phi.phi()).expect("degrees"));
        one.add(&seven)
            .and_then(|s| s.add(&self.f3))
            .and_then(|s| s.sub(&self.x))
            .expect("same grid")
            .max_abs()
    }

    /// `j_φ(φ_t)`.
    pub fn j_x(&self) -> &SymTensorField {
        &self.j_x
    }

    /// `π³₇ φ_t`.
    pub fn pi7(&self) -> &FormField {
        &self.p7
    }

    /// `g(φ, φ_t) = 21 f₀`.
    pub fn g_phi_x(&self) -> FormField {
        self.f0.scale(21.0)
    }
}

/// `∂_t g = ½ j_φ(f₃) + 2f₀ g`.
pub fn var_metric(vi: &VariationInput) -> SymTensorField {
    let j3 = op_j_field(vi.phi.phi(), &vi.f3, vi.phi);
    SymTensorField::from_points(vi.phi.grid(), |pt| {
        let f0 = vi.f0.data()[pt];
        *j3.at(pt) * 0.5 + vi.phi.frame(pt).metric().as_tensor() * (2.0 * f0)
    })
}

/// `∂_t s = 7f₀ s` for the volume density `s`.
pub fn var_vol(vi: &VariationInput) -> FormField {
    vi.f0.mul_scalar(vi.phi.density()).expect("scalar").scale(7.0)
}

/// `**_t ω = (1+p)/3 g(φ,φ_t) ω − ½ i_ω j_φ(φ_t)` for fixed `ω`.
pub fn var_star(vi: &VariationInput, omega: &FormField) -> Result<FormField> {
    let p = omega.degree();
    if p == 0 {
        let scaled = omega.mul_scalar(&vi.g_phi_x())?.scale(1.0 / 3.0);
        return Ok(scaled);
    }
    let first = omega.mul_scalar(&vi.g_phi_x())?.scale((1 + p) as f64 / 3.0);
    let second = op_i_field(vi.j_x(), omega, vi.phi);
    first.axpy(-0.5, &second)
}

/// `**_t ω = (7−2p) f₀ ω − ½ i_ω j_φ(f₃)`, the type-split form.
pub fn var_star_split(vi: &VariationInput, omega: &FormField) -> Result<FormField> {
    let p = omega.degree() as f64;
    let first = omega.mul_scalar(&vi.f0)?.scale(7.0 - 2.0 * p);
    if omega.degree() == 0 {
        return Ok(first);
    }
    let j3 = op_j_field(vi.phi.phi(), &vi.f3, vi.phi);
    first.axpy(-0.5, &op_i_field(&j3, omega, vi.phi))
}

/// `∂_t ψ = 4f₀ψ + f₁∧φ − *f₃`.
pub fn var_psi(vi: &VariationInput) -> FormField {
    let phi = vi.phi;
    phi.psi()
        .mul_scalar(&vi.f0)
        .expect("scalar")
        .scale(4.0)
        .add(&vi.f1.wedge(phi.phi()).expect("degrees"))
        .and_then(|s| s.sub(&phi.star(&vi.f3)))
        .expect("same grid")
}

/// `δ_t ω = −7p f₀ δω + (7+7p) δ(f₀ω) + ½ i_{δω} j_φ(φ_t) − ½ δ[i_ω j_φ(φ_t)]`.
pub fn var_delta(vi: &VariationInput, omega: &FormField) -> Result<FormField> {
    let p = omega.degree();
    if p == 0 {
        return Err(Error::DegreeUnderflow);
    }
    let phi = vi.phi;
    let delta = codiff(omega, phi)?;
    let t1 = delta.mul_scalar(&vi.f0)?.scale(-7.0 * p as f64);
    let t2 = codiff(&omega.mul_scalar(&vi.f0)?, phi)?.scale(7.0 + 7.0 * p as f64);
    let t3 = if p > 1 {
        op_i_field(vi.j_x(), &delta, phi).scale(0.5)
    } else {
        FormField::zeros(phi.grid(), 0)
    };
    let t4 = codiff(&op_i_field(vi.j_x(), omega, phi), phi)?.scale(-0.5);
    t1.add(&t2)?.add(&t3)?.add(&t4)
}

/// `τ_t = −g(φ,φ_t)τ + ⅓δ[g(φ,φ_t)φ] + ½ i_τ j_φ(φ_t) − δφ_t + 2δπ³₇φ_t`.
///
/// The last term is the printed `½δ*[φ∧*(φ∧φ_t)]` with `*[φ∧*(φ∧·)]`
/// read as `4π³₇`.
pub fn var_torsion(vi: &VariationInput) -> Result<FormField> {
    let phi = vi.phi;
    let tau = phi.tau();
    let gpx = vi.g_phi_x();
    let t1 = tau.mul_scalar(&gpx)?.scale(-1.0);
    let t2 = codiff(&phi.phi().mul_scalar(&gpx)?, phi)?.scale(1.0 / 3.0);
    let t3 = op_i_field(vi.j_x(), tau, phi).scale(0.5);
    let t4 = codiff(&vi.x, phi)?.scale(-1.0);
    let t5 = codiff(vi.pi7(), phi)?.scale(2.0);
    t1.add(&t2)?.add(&t3)?.add(&t4)?.add(&t5)
}

/// `Δ_t ω = d[δ **_t ω − **_t δω]` for closed `ω`.
pub fn var_laplacian_closed(vi: &VariationInput, omega: &FormField) -> Result<FormField> {
    let d_omega = omega.d_spectral()?;
    let residual = d_omega.max_abs() / omega.max_abs().max(1.0);
    if residual > 1e-9 {
        return Err(Error::NotClosed { residual });
    }
    let phi = vi.phi;
    let delta = codiff(omega, phi)?;
    let a = codiff(&var_star(vi, omega)?, phi)?;
    let b = var_star(vi, &delta)?;
    a.sub(&b)?.d_spectral()
}

/// `(Δφ)_t` along the Laplacian flow:
/// `−Δ²φ + ⅓dδ[|τ|²φ] + ½d[i_τ j_φ(dτ)] − d[|τ|²τ]`.
pub fn laplacian_along_laplacian_flow(phi: &G2Field) -> Result<FormField> {
    let tau = phi.tau();
    let dtau = tau.d_spectral()?;
    let lap2 = hodge_laplacian(&dtau, phi)?;
    let tau_sq = phi.inner(tau, tau);
    let a = codiff(&phi.phi().mul_scalar(&tau_sq)?, phi)?.d_spectral()?;
    let j = op_j_field(phi.phi(), &dtau, phi);
    let b = op_i_field(&j, tau, phi).d_spectral()?;
    let c = tau.mul_scalar(&tau_sq)?.d_spectral()?;
    lap2.scale(-1.0).axpy(1.0 / 3.0, &a)?.axpy(0.5, &b)?.axpy(-1.0, &c)
}

/// `G_t Y = G d[**_t(δu)] − π_d(**_t u)` with `u = GY`.
pub fn var_green(vi: &VariationInput, y: &FormField, cfg: &SolverConfig) -> Result<FormField> {
    let phi = vi.phi;
    let u = green_exact(y, phi, cfg, None)?.u;
    let du = codiff(&u, phi)?;
    let first = green_exact(&var_star(vi, &du)?.d_spectral()?, phi, cfg, None)?.u;
    let second = project_exact(&var_star(vi, &u)?, phi, cfg)?;
    first.sub(&second)
}

/// `(π_d)_t Y = π_d **_t (Y − π_d Y)`.
pub fn var_pi_d(vi: &VariationInput, y: &FormField, cfg: &SolverConfig) -> Result<FormField> {
    let phi = vi.phi;
    let rest = y.sub(&project_exact(y, phi, cfg)?)?;
    project_exact(&var_star(vi, &rest)?, phi, cfg)
}

/// The structure `φ + tX`.
pub fn shifted(phi: &G2Field, x: &FormField, t: f64) -> Result<G2Field> {
    G2Field::from_phi(phi.phi().axpy(t, x)?)
}

/// Central difference of `eval(φ + tX)` at `t = 0`, halving `h` up to
/// four times if positivity fails.
pub fn central_difference(
    phi: &G2Field,
    x: &FormField,
    h: f64,
    eval: &dyn Fn(&G2Field) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, f64)> {
    let mut step = h;
    for halvings in 0..=4 {
        match (shifted(phi, x, step), shifted(phi, x, -step)) {
            (Ok(plus), Ok(minus)) => {
                let a = eval(&plus)?;
                let b = eval(&minus)?;
                let diff = a.iter().zip(&b).map(|(p, m)| (p - m) / (2.0 * step)).collect();
                return Ok((diff, step));
            }
            (Err(Error::NonPositiveForm { .. }), _) | (_, Err(Error::NonPositiveForm { .. })) => {
                if halvings == 4 {
                    return Err(Error::PositivityLost { halvings });
                }
                step *= 0.5;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    unreachable!("loop returns")
}

/// `max|a − b| / max|b|`.
pub fn relative_mismatch(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// One row of a finite-difference verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct FdRow {
    pub operator: String,
    pub h: f64,
    pub mismatch: f64,
    /// `mismatch(h) / mismatch(h/2)`.
    pub ratio: f64,
}

/// Compares a closed-form derivative with central differences at `h`
/// and `h/2`.
pub fn fd_compare(
    name: &str,
    formula: &[f64],
    phi: &G2Field,
    x: &FormField,
    h: f64,
    eval: &dyn Fn(&G2Field) -> Result<Vec<f64>>,
) -> Result<FdRow> {
    let (fd, used) = central_difference(phi, x, h, eval)?;
    let (fd_half, _) = central_difference(phi, x, used / 2.0, eval)?;
    let m1 = relative_mismatch(formula, &fd);
    let m2 = relative_mismatch(formula, &fd_half);
    Ok(FdRow {
        operator: name.to_string(),
        h: used,
        mismatch: m1,
        ratio: m1 / m2,
    })
}

pub fn fd_rows_to_csv(rows: &[FdRow]) -> String {
    let mut s = String::from("operator,h,mismatch,order_ratio\n");
    for r in rows {
        s.push_str(&format!("{},{:e},{:.6e},{:.4}\n", r.operator, r.h, r.mismatch, r.ratio));
    }
    s
}

fn tensor_data(t: &SymTensorField) -> Vec<f64> {
    t.values()
        .iter()
        .flat_map(|h| h.matrix().iter().copied().collect::<Vec<_>>())
        .collect()
}

/// Fixed test forms used by the suite: a closed 3-form and generic
/// 2- and 3-forms.
pub struct SuiteForms {
    pub closed3: FormField,
    pub generic2: FormField,
    pub generic3: FormField,
    pub y: TangentVector,
}

/// Every variation formula against central differences.
pub fn variation_suite(
    phi: &G2Field,
    x: &TangentVector,
    forms: &SuiteForms,
    h: f64,
    cfg: &SolverConfig,
) -> Result<(Report, Vec<FdRow>)> {
    let vi = VariationInput::new(phi, x)?;
    let xf = x.x();
    let mut rows = Vec::new();

    let formula = tensor_data(&var_metric(&vi));
    rows.push(fd_compare("var_metric", &formula, phi, xf, h, &|p| {
        Ok(tensor_data(&metric_field(p)))
    })?);

    let formula = var_vol(&vi).into_data();
    rows.push(fd_compare("var_vol", &formula, phi, xf, h, &|p| {
        Ok(p.density().data().to_vec())
    })?);

    for (name, omega) in [("var_star_p2", &forms.generic2), ("var_star_p3", &forms.generic3)] {
        let formula = phi.star(&var_star(&vi, omega)?).into_data();
        rows.push(fd_compare(name, &formula, phi, xf, h, &|p| Ok(p.star(omega).into_data()))?);
    }

    let formula = var_psi(&vi).into_data();
    rows.push(fd_compare("var_psi", &formula, phi, xf, h, &|p| Ok(p.psi().data().to_vec()))?);

    for (name, omega) in [("var_delta_p2", &forms.generic2), ("var_delta_p3", &forms.generic3)] {
        let formula = var_delta(&vi, omega)?.into_data();
        rows.push(fd_compare(name, &formula, phi, xf, h, &|p| {
            Ok(codiff(omega, p)?.into_data())
        })?);
    }

    let formula = var_torsion(&vi)?.into_data();
    rows.push(fd_compare("var_torsion", &formula, phi, xf, h, &|p| Ok(p.tau().data().to_vec()))?);

    let formula = var_laplacian_closed(&vi, &forms.closed3)?.into_data();
    rows.push(fd_compare("var_laplacian_closed", &formula, phi, xf, h, &|p| {
        Ok(hodge_laplacian(&forms.closed3, p)?.into_data())
    })?);

    let y = forms.y.x();
    let formula = var_green(&vi, y, cfg)?.into_data();
    rows.push(fd_compare("var_green", &formula, phi, xf, h, &|p| {
        Ok(green_exact(y, p, cfg, None)?.u.into_data())
    })?);

    let formula = var_pi_d(&vi, &forms.generic3, cfg)?.into_data();
    rows.push(fd_compare("var_pi_d", &formula, phi, xf, h, &|p| {
        Ok(project_exact(&forms.generic3, p, cfg)?.into_data())
    })?);

    let mut report = Report::new("variation formulas vs central differences");
    for r in &rows {
        let tol = if r.operator == "var_green" || r.operator == "var_pi_d" {
            1e-5
        } else {
            1e-6
        };
        report.record(&r.operator, r.mismatch, tol);
    }
    for r in &rows {
        if r.operator == "var_green" || r.operator == "var_pi_d" {
            continue;
        }
        report.record(&format!("{}_order", r.operator), (r.ratio - 4.0).abs(), 0.5);
    }
    Ok((report, rows))
}

/// `Tr_g ∂_t g = 14 f₀`.
pub fn var_metric_trace(vi: &VariationInput) -> FormField {
    trace_field(&var_metric(vi), vi.phi)
}
