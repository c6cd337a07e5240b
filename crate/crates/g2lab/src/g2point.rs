//! Pointwise G2 algebra: the metric of a positive 3-form, type
//! decompositions, the `i`/`j` operators, torsion spectra and the isometric
//! family of a frame.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exterior7::{
    contract_basis, form_inner, hodge_star, pullback, tensor_inner, wedge_basis,
    wedge_unchecked, Form, Matrix7, Metric, SymTensor2, DIM,
};
use crate::report::Report;

/// The standard positive 3-form.
pub fn phi0() -> Form {
    Form::from_labels(
        3,
        &[
            (1.0, "123"),
            (1.0, "145"),
            (1.0, "167"),
            (1.0, "246"),
            (1.0, "275"),
            (-1.0, "347"),
            (-1.0, "356"),
        ],
    )
}

/// A positive 3-form with its metric, dual 4-form and volume density.
#[derive(Clone, Debug)]
pub struct G2Frame {
    phi: Form,
    metric: Metric,
    psi: Form,
    vol_density: f64,
}

/// `B_{ij}` with `(e_i⌟φ)∧(e_j⌟φ)∧φ = B_{ij} e^{0…6}`.
pub fn b_matrix(phi: &Form) -> Matrix7 {
    let contractions: Vec<Form> = (0..DIM).map(|i| contract_basis(i, phi)).collect();
    let mut b = Matrix7::zeros();
    for i in 0..DIM {
        let wi = wedge_unchecked(&contractions[i], phi);
        for j in i..DIM {
            let v = wedge_unchecked(&contractions[j], &wi)[0];
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

/// Recovers `g_φ` from `B = 6 g √det g`.
pub fn frame_from_phi(phi: &Form) -> Result<G2Frame> {
    if phi.degree() != 3 {
        return Err(Error::DegreeMismatch {
            left: phi.degree(),
            right: 3,
        });
    }
    if !phi.is_finite() {
        return Err(Error::NonPositiveForm { point: None });
    }
    let b = b_matrix(phi);
    let chol = b.cholesky().ok_or(Error::NonPositiveForm { point: None })?;
    let det_b = chol.l().diagonal().product().powi(2);
    if !(det_b > 0.0) {
        return Err(Error::NonPositiveForm { point: None });
    }
    let s = (det_b / 6f64.powi(7)).powf(1.0 / 9.0);
    let metric = Metric::new(b / (6.0 * s)).map_err(|_| Error::NonPositiveForm { point: None })?;
    let psi = hodge_star(phi, &metric);
    Ok(G2Frame {
        phi: *phi,
        metric,
        psi,
        vol_density: s,
    })
}

impl G2Frame {
    pub fn standard() -> G2Frame {
        frame_from_phi(&phi0()).expect("standard form is positive")
    }

    #[inline]
    pub fn phi(&self) -> &Form {
        &self.phi
    }

    #[inline]
    pub fn psi(&self) -> &Form {
        &self.psi
    }

    #[inline]
    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    #[inline]
    pub fn vol_density(&self) -> f64 {
        self.vol_density
    }

    pub fn vol(&self) -> Form {
        let mut v = Form::zero(DIM);
        v[0] = self.vol_density;
        v
    }

    /// Frame of `A*φ`, transporting `ψ` and `g` along the pullback.
    pub fn pullback(&self, a: &Matrix7) -> Result<G2Frame> {
        let det = a.determinant();
        if !(det > 0.0) {
            return Err(Error::ConstraintViolated(format!(
                "pullback needs det A > 0, got {det}"
            )));
        }
        let metric = Metric::new(a.transpose() * self.metric.g() * a)?;
        Ok(G2Frame {
            phi: pullback(&self.phi, a),
            psi: pullback(&self.psi, a),
            vol_density: self.vol_density * det,
            metric,
        })
    }

    /// Replaces the dual 4-form; used to build negative controls.
    pub fn with_psi(mut self, psi: Form) -> G2Frame {
        self.psi = psi;
        self
    }

    pub fn star(&self, a: &Form) -> Form {
        hodge_star(a, &self.metric)
    }

    pub fn inner(&self, a: &Form, b: &Form) -> f64 {
        form_inner(a, b, &self.metric).expect("equal degrees")
    }
}

/// `β = π₇β + π₁₄β`.
#[derive(Clone, Copy, Debug)]
pub struct Decomp2 {
    pub p7: Form,
    pub p14: Form,
}

/// `η = 3f₀φ + *(f₁∧φ) + f₃`.
#[derive(Clone, Copy, Debug)]
pub struct Decomp3 {
    pub p1: Form,
    pub p7: Form,
    pub p27: Form,
    pub f0: f64,
    pub f1: Form,
}

impl Decomp3 {
    pub fn f3(&self) -> &Form {
        &self.p27
    }
}

pub fn project2(beta: &Form, fr: &G2Frame) -> Decomp2 {
    let star_wedge = fr.star(&wedge_unchecked(beta, &fr.phi));
    Decomp2 {
        p7: (*beta + star_wedge) * (1.0 / 3.0),
        p14: (*beta * 2.0 - star_wedge) * (1.0 / 3.0),
    }
}

pub fn project3(eta: &Form, fr: &G2Frame) -> Decomp3 {
    let g_phi_eta = fr.inner(eta, &fr.phi);
    let p1 = fr.phi * (g_phi_eta / 7.0);
    // *(φ∧*(φ∧η)) = −4η on Ω³₇.
    let f1 = fr.star(&wedge_unchecked(&fr.phi, eta)) * 0.25;
    let p7 = fr.star(&wedge_unchecked(&f1, &fr.phi));
    let p27 = *eta - p1 - p7;
    Decomp3 {
        p1,
        p7,
        p27,
        f0: g_phi_eta / 21.0,
        f1,
    }
}

/// `i_ω h`, full components `Σ_a h_{i_a}{}^m ω_{i₁…m…i_p}`.
pub fn op_i(h: &SymTensor2, omega: &Form, metric: &Metric) -> Result<Form> {
    let p = omega.degree();
    if p == 0 {
        return Err(Error::DegreeUnderflow);
    }
    let mixed = h.matrix() * metric.ginv();
    let contractions: Vec<Form> = (0..DIM).map(|m| contract_basis(m, omega)).collect();
    let mut out = Form::zero(p);
    for i in 0..DIM {
        let mut gamma = Form::zero(p - 1);
        for (m, c) in contractions.iter().enumerate() {
            let w = mixed[(i, m)];
            if w != 0.0 {
                gamma += *c * w;
            }
        }
        out += wedge_basis(i, &gamma);
    }
    Ok(out)
}

/// `j_ω ω₂ = ½[ω_{i a…}(ω₂)_j{}^{a…} + (i↔j)]`.
pub fn op_j(omega1: &Form, omega2: &Form, metric: &Metric) -> Result<SymTensor2> {
    let p = omega1.degree();
    if p != omega2.degree() {
        return Err(Error::DegreeMismatch {
            left: p,
            right: omega2.degree(),
        });
    }
    if p == 0 {
        return Err(Error::DegreeUnderflow);
    }
    let factorial: f64 = (1..p).map(|k| k as f64).product();
    let left: Vec<Form> = (0..DIM).map(|i| contract_basis(i, omega1)).collect();
    let right: Vec<Form> = (0..DIM)
        .map(|i| metric.raise(&contract_basis(i, omega2)))
        .collect();
    let mut m = Matrix7::zeros();
    for i in 0..DIM {
        for j in 0..DIM {
            m[(i, j)] = left[i].dot(&right[j]);
        }
    }
    Ok(SymTensor2::symmetrize(&(m * factorial)))
}

/// `j_φ(η)(u,v) = *(u⌟φ ∧ v⌟φ ∧ η)` on coordinate vectors.
pub fn op_j_wedge(eta: &Form, fr: &G2Frame) -> SymTensor2 {
    let contractions: Vec<Form> = (0..DIM).map(|i| contract_basis(i, &fr.phi)).collect();
    SymTensor2::from_fn(|i, j| {
        let top = wedge_unchecked(&wedge_unchecked(&contractions[i], &contractions[j]), eta)[0];
        top / fr.vol_density
    })
}

/// Spectrum of `τ_i{}^l τ_{lj}` for `τ ∈ Ω²₁₄`.
#[derive(Clone, Debug)]
pub struct TauSpectrum {
    /// Eigenvalues of `g⁻¹(τ g⁻¹ τ)`, increasing.
    pub eigenvalues: [f64; DIM],
    pub norm_sq: f64,
    /// `τ_i{}^l τ_{lj} τ^{ir} τ_r{}^j`.
    pub quartic_contraction: f64,
    /// `g(τ∘τ, τ∘τ)` with the halved tensor inner product.
    pub quartic_tensor_inner: f64,
}

pub fn tau_spectrum(tau: &Form, fr: &G2Frame) -> Result<TauSpectrum> {
    if tau.degree() != 2 {
        return Err(Error::DegreeMismatch {
            left: tau.degree(),
            right: 2,
        });
    }
    let norm_sq = fr.inner(tau, tau);
    let p7 = project2(tau, fr).p7;
    let residual = fr.inner(&p7, &p7).sqrt();
    if residual > 1e-8 * norm_sq.sqrt().max(1.0) {
        return Err(Error::NotIn14 { residual });
    }
    let t = antisymmetric_matrix(tau);
    let ginv = fr.metric.ginv();
    let square = SymTensor2::symmetrize(&(t * ginv * t));
    let l = fr
        .metric
        .g()
        .cholesky()
        .ok_or(Error::NonPositiveMetric)?
        .l();
    let linv = l.try_inverse().ok_or(Error::NonPositiveMetric)?;
    let reduced = linv * square.matrix() * linv.transpose();
    let eig = SymmetricEigen::new((reduced + reduced.transpose()) * 0.5);
    let mut eigenvalues = [0.0; DIM];
    eigenvalues.copy_from_slice(eig.eigenvalues.as_slice());
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let mixed = ginv * square.matrix();
    let quartic_contraction = (mixed * mixed).trace();
    Ok(TauSpectrum {
        eigenvalues,
        norm_sq,
        quartic_contraction,
        quartic_tensor_inner: tensor_inner(&square, &square, &fr.metric),
    })
}

/// The 7×7 antisymmetric matrix of a 2-form.
pub fn antisymmetric_matrix(beta: &Form) -> Matrix7 {
    let mut m = Matrix7::zeros();
    for i in 0..DIM {
        for j in 0..DIM {
            if i != j {
                m[(i, j)] = beta.component(&[i, j]);
            }
        }
    }
    m
}

/// Bryant's family `(f²−|η|²)φ + 2f*(η∧φ) + 2i_φ(η⊗η)` with `f²+|η|² = 1`.
pub fn isometric_family(fr: &G2Frame, f: f64, eta: &Form) -> Result<Form> {
    if eta.degree() != 1 {
        return Err(Error::DegreeMismatch {
            left: eta.degree(),
            right: 1,
        });
    }
    let eta_sq = fr.inner(eta, eta);
    let constraint = f * f + eta_sq - 1.0;
    if constraint.abs() > 1e-10 {
        return Err(Error::ConstraintViolated(format!(
            "f^2 + |eta|^2 - 1 = {constraint:e}"
        )));
    }
    Ok(isometric_family_unchecked(fr, f, eta))
}

pub(crate) fn isometric_family_unchecked(fr: &G2Frame, f: f64, eta: &Form) -> Form {
    let eta_sq = fr.inner(eta, eta);
    let square = SymTensor2::from_fn(|i, j| eta[i] * eta[j]);
    let quad = op_i(&square, &fr.phi, &fr.metric).expect("degree 3");
    fr.phi * (f * f - eta_sq) + fr.star(&wedge_unchecked(eta, &fr.phi)) * (2.0 * f) + quad * 2.0
}

/// `A = I + R` with `‖R‖_F = scale`; `det A > 0` whenever `scale < 1`.
pub fn random_near_identity(rng: &mut impl Rng, scale: f64) -> Matrix7 {
    let r = Matrix7::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let norm = r.norm();
    Matrix7::identity() + r * (scale * rng.gen_range(0.0..1.0) / norm.max(1e-300))
}

pub fn random_form(rng: &mut impl Rng, degree: usize) -> Form {
    let mut f = Form::zero(degree);
    for c in f.coeffs_mut() {
        *c = rng.gen_range(-1.0..1.0);
    }
    f
}

pub fn random_sym(rng: &mut impl Rng) -> SymTensor2 {
    SymTensor2::from_fn(|_, _| rng.gen_range(-1.0..1.0))
}

/// Traceless part `h − (Tr_g h / 7) g`.
pub fn traceless(h: &SymTensor2, metric: &Metric) -> SymTensor2 {
    *h - metric.as_tensor() * (h.trace(metric) / 7.0)
}

/// Per-trial RNG, independent of scheduling order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Dense tensors with every index explicit, first index slowest.
pub(crate) mod dense {
    use super::*;

    pub fn idx(ix: &[usize]) -> usize {
        ix.iter().fold(0, |acc, &i| acc * DIM + i)
    }

    /// Raises one slot of a rank-`rank` covariant array.
    pub fn raise(t: &[f64], rank: usize, slot: usize, ginv: &Matrix7) -> Vec<f64> {
        let stride = DIM.pow((rank - 1 - slot) as u32);
        let mut out = vec![0.0; t.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let a = (flat / stride) % DIM;
            let base = flat - a * stride;
            let mut acc = 0.0;
            for b in 0..DIM {
                acc += ginv[(a, b)] * t[base + b * stride];
            }
            *o = acc;
        }
        out
    }

    pub fn raise_all(t: &[f64], rank: usize, ginv: &Matrix7) -> Vec<f64> {
        (0..rank).fold(t.to_vec(), |acc, s| raise(&acc, rank, s, ginv))
    }

    /// `(η₁)_a{}^{jk} (η₂)^{abc} ψ_{jkbc}`.
    pub fn psi_term(e1: &[f64], e2: &[f64], psi: &[f64], ginv: &Matrix7) -> f64 {
        let e1m = raise(&raise(e1, 3, 1, ginv), 3, 2, ginv);
        let e2u = raise_all(e2, 3, ginv);
        let mut total = 0.0;
        for a in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    let x = e1m[idx(&[a, j, k])];
                    if x == 0.0 {
                        continue;
                    }
                    for b in 0..DIM {
                        for c in 0..DIM {
                            total += x * e2u[idx(&[a, b, c])] * psi[idx(&[j, k, b, c])];
                        }
                    }
                }
            }
        }
        total
    }

    /// `φ_{ajk} η₁^{ijk} φ_{ibc} η₂^{abc}`.
    pub fn phi_phi_term(e1: &[f64], e2: &[f64], phi: &[f64], ginv: &Matrix7) -> f64 {
        let e1u = raise_all(e1, 3, ginv);
        let e2u = raise_all(e2, 3, ginv);
        let mut left = [[0.0; DIM]; DIM];
        let mut right = [[0.0; DIM]; DIM];
        for a in 0..DIM {
            for i in 0..DIM {
                let mut l = 0.0;
                let mut r = 0.0;
                for j in 0..DIM {
                    for k in 0..DIM {
                        l += phi[idx(&[a, j, k])] * e1u[idx(&[i, j, k])];
                        r += phi[idx(&[i, j, k])] * e2u[idx(&[a, j, k])];
                    }
                }
                left[a][i] = l;
                right[a][i] = r;
            }
        }
        let mut total = 0.0;
        for a in 0..DIM {
            for i in 0..DIM {
                total += left[a][i] * right[a][i];
            }
        }
        total
    }

    /// `½(η_{ijk} φ_m{}^{jk} + η_{mjk} φ_i{}^{jk})`.
    pub fn local_j(eta: &[f64], phi: &[f64], ginv: &Matrix7) -> Matrix7 {
        let phim = raise(&raise(phi, 3, 1, ginv), 3, 2, ginv);
        let mut m = Matrix7::zeros();
        for i in 0..DIM {
            for n in 0..DIM {
                let mut acc = 0.0;
                for j in 0..DIM {
                    for k in 0..DIM {
                        acc += eta[idx(&[i, j, k])] * phim[idx(&[n, j, k])];
                    }
                }
                m[(i, n)] = acc;
            }
        }
        (m + m.transpose()) * 0.5
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1.0)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn tensor_rel(a: &SymTensor2, b: &SymTensor2) -> f64 {
    rel((a.matrix() - b.matrix()).amax(), a.max_abs().max(b.max_abs()))
}

fn form_rel(a: &Form, b: &Form) -> f64 {
    rel((*a - *b).max_abs(), a.max_abs().max(b.max_abs()))
}

fn scalar_rel(a: f64, b: f64) -> f64 {
    rel((a - b).abs(), a.abs().max(b.abs()))
}

/// The six contraction identities of `φ` and `ψ`, as residuals.
fn contraction_residuals(fr: &G2Frame) -> Vec<(&'static str, f64)> {
    use dense::idx;
    let ginv = fr.metric.ginv();
    let g = fr.metric.g();
    let phi = fr.phi.to_full();
    let psi = fr.psi.to_full();
    let phi_up0 = dense::raise(&phi, 3, 0, ginv);
    let phi_up01 = dense::raise(&phi_up0, 3, 1, ginv);
    let psi_up0 = dense::raise(&psi, 4, 0, ginv);
    let psi_up01 = dense::raise(&psi_up0, 4, 1, ginv);
    let psi_up012 = dense::raise(&psi_up01, 4, 2, ginv);
    let mut out = Vec::with_capacity(6);

    let (mut l, mut r) = (Vec::new(), Vec::new());
    for k in 0..DIM {
        for n in 0..DIM {
            let mut acc = 0.0;
            for a in 0..DIM {
                for b in 0..DIM {
                    acc += phi_up01[idx(&[a, b, k])] * phi[idx(&[a, b, n])];
                }
            }
            l.push(acc);
            r.push(6.0 * g[(k, n)]);
        }
    }
    out.push(("contraction_phi_phi_2", rel(max_diff(&l, &r), max_abs(&r))));

    let (mut l, mut r) = (Vec::new(), Vec::new());
    for ll in 0..DIM {
        for n in 0..DIM {
            let mut acc = 0.0;
            for a in 0..DIM {
                for b in 0..DIM {
                    for m in 0..DIM {
                        acc += psi_up012[idx(&[a, b, m, ll])] * psi[idx(&[a, b, m, n])];
                    }
                }
            }
            l.push(acc);
            r.push(24.0 * g[(ll, n)]);
        }
    }
    out.push(("contraction_psi_psi_3", rel(max_diff(&l, &r), max_abs(&r))));

    let (mut l, mut r) = (Vec::new(), Vec::new());
    for j in 0..DIM {
        for k in 0..DIM {
            for b in 0..DIM {
                for ll in 0..DIM {
                    let mut acc = 0.0;
                    for a in 0..DIM {
                        acc += phi_up0[idx(&[a, j, k])] * phi[idx(&[a, b, ll])];
                    }
                    l.push(acc);
                    r.push(
                        g[(j, b)] * g[(k, ll)] - g[(j, ll)] * g[(k, b)] + psi[idx(&[j, k, b, ll])],
                    );
                }
            }
        }
    }
    out.push(("contraction_phi_phi_1", rel(max_diff(&l, &r), max_abs(&r))));

    let (mut l, mut r) = (Vec::new(), Vec::new());
    for k in 0..DIM {
        for m in 0..DIM {
            for n in 0..DIM {
                let mut acc = 0.0;
                for a in 0..DIM {
                    for b in 0..DIM {
                        acc += phi_up01[idx(&[a, b, k])] * psi[idx(&[a, b, m, n])];
                    }
                }
                l.push(acc);
                r.push(4.0 * phi[idx(&[k, m, n])]);
            }
        }
    }
    out.push(("contraction_phi_psi_2", rel(max_diff(&l, &r), max_abs(&r))));

    let (mut l, mut r) = (Vec::new(), Vec::new());
    for j in 0..DIM {
        for k in 0..DIM {
            for b in 0..DIM {
                for m in 0..DIM {
                    for n in 0..DIM {
                        let mut acc = 0.0;
                        for a in 0..DIM {
                            acc += phi_up0[idx(&[a, j, k])] * psi[idx(&[a, b, m, n])];
                        }
                        l.push(acc);
                        r.push(
                            g[(j, b)] * phi[idx(&[k, m, n])] - g[(j, m)] * phi[idx(&[k, b, n])]
                                + g[(j, n)] * phi[idx(&[k, b, m])]
                                - g[(k, b)] * phi[idx(&[j, m, n])]
                                + g[(k, m)] * phi[idx(&[j, b, n])]
                                - g[(k, n)] * phi[idx(&[j, b, m])],
                        );
                    }
                }
            }
        }
    }
    out.push(("contraction_phi_psi_1", rel(max_diff(&l, &r), max_abs(&r))));

    let (mut l, mut r) = (Vec::new(), Vec::new());
    for k in 0..DIM {
        for ll in 0..DIM {
            for m in 0..DIM {
                for n in 0..DIM {
                    let mut acc = 0.0;
                    for a in 0..DIM {
                        for b in 0..DIM {
                            acc += psi_up01[idx(&[a, b, k, ll])] * psi[idx(&[a, b, m, n])];
                        }
                    }
                    l.push(acc);
                    r.push(
                        2.0 * psi[idx(&[k, ll, m, n])]
                            + 4.0 * (g[(k, m)] * g[(ll, n)] - g[(k, n)] * g[(ll, m)]),
                    );
                }
            }
        }
    }
    out.push(("contraction_psi_psi_2", rel(max_diff(&l, &r), max_abs(&r))));
    out
}

fn trial_residuals(base: &G2Frame, seed: u64, trial: u64) -> Vec<(&'static str, f64)> {
    let mut rng = trial_rng(seed, trial);
    let fr = if trial == 0 {
        base.clone()
    } else {
        let a = random_near_identity(&mut rng, 0.2);
        base.pullback(&a).expect("near-identity map")
    };
    let m = &fr.metric;
    let phi = fr.phi;
    let gt = m.as_tensor();
    let mut out = contraction_residuals(&fr);

    let i = |h: &SymTensor2, w: &Form| op_i(h, w, m).expect("positive degree");
    let j = |a: &Form, b: &Form| op_j(a, b, m).expect("matching degrees");

    out.push(("i_phi_g", form_rel(&i(&gt, &phi), &(phi * 3.0))));
    out.push(("j_phi_phi", tensor_rel(&j(&phi, &phi), &(gt * 6.0))));
    let mut worst = 0.0f64;
    for p in 1..=DIM {
        let w = random_form(&mut rng, p);
        worst = worst.max(form_rel(&i(&gt, &w), &(w * p as f64)));
    }
    out.push(("i_omega_g", worst));

    let h = random_sym(&mut rng);
    let h0 = traceless(&h, m);
    let ih0 = i(&h0, &phi);
    let d = project3(&ih0, &fr);
    out.push((
        "i_traceless_in_27",
        rel(d.p1.max_abs().max(d.p7.max_abs()), ih0.max_abs()),
    ));
    out.push(("j_i_traceless", tensor_rel(&j(&phi, &ih0), &(h0 * 4.0))));

    let f1 = random_form(&mut rng, 1);
    let seven = fr.star(&wedge_unchecked(&f1, &phi));
    out.push((
        "j_kills_omega7",
        rel(j(&phi, &seven).max_abs(), seven.max_abs()),
    ));

    let eta = random_form(&mut rng, 3);
    let d = project3(&eta, &fr);
    let j27 = j(&phi, &d.p27);
    out.push(("j_27_traceless", rel(j27.trace(m).abs(), j27.max_abs())));
    out.push(("i_j_on_27", form_rel(&i(&j27, &phi), &(d.p27 * 4.0))));
    out.push((
        "i_j_decomposition",
        form_rel(&i(&j(&phi, &eta), &phi), &(d.p1 * 18.0 + d.p27 * 4.0)),
    ));

    let fast = j(&phi, &eta);
    let wedge_def = op_j_wedge(&eta, &fr);
    let local = SymTensor2::symmetrize(&dense::local_j(&eta.to_full(), &phi.to_full(), m.ginv()));
    out.push((
        "j_local_expression",
        tensor_rel(&fast, &wedge_def).max(tensor_rel(&fast, &local)),
    ));

    let h1 = random_sym(&mut rng);
    let h2 = random_sym(&mut rng);
    let lhs = fr.inner(&i(&h1, &phi), &i(&h2, &phi));
    let rhs = 4.0 * tensor_inner(&h1, &h2, m) + h1.trace(m) * h2.trace(m);
    out.push(("norm_i", scalar_rel(lhs, rhs)));

    let eta1 = random_form(&mut rng, 3);
    let eta2 = random_form(&mut rng, 3);
    let (e1, e2) = (eta1.to_full(), eta2.to_full());
    let psi_full = fr.psi.to_full();
    let phi_full = phi.to_full();
    let lhs = tensor_inner(&j(&phi, &eta1), &j(&phi, &eta2), m);
    let rhs = 3.0 * fr.inner(&eta1, &eta2)
        + 0.25 * dense::psi_term(&e1, &e2, &psi_full, m.ginv())
        + 0.25 * dense::phi_phi_term(&e1, &e2, &phi_full, m.ginv());
    out.push(("norm_j", scalar_rel(lhs, rhs)));

    let d = project3(&eta1, &fr);
    let g_eta_phi = fr.inner(&eta1, &phi);
    out.push((
        "norm_pi1",
        scalar_rel(fr.inner(&d.p1, &d.p1), g_eta_phi * g_eta_phi / 7.0),
    ));
    let pi1_sq = fr.inner(&d.p1, &d.p1);
    let rhs = 0.25 * fr.inner(&eta1, &eta1) + 3.5 * pi1_sq
        - (dense::psi_term(&e1, &e1, &psi_full, m.ginv())
            + dense::phi_phi_term(&e1, &e1, &phi_full, m.ginv()))
            / 16.0;
    out.push(("norm_pi7", scalar_rel(fr.inner(&d.p7, &d.p7), rhs)));

    let mut worst = 0.0f64;
    for p in 1..=DIM {
        let w1 = random_form(&mut rng, p);
        let w2 = random_form(&mut rng, p);
        let hh = random_sym(&mut rng);
        worst = worst.max(scalar_rel(
            fr.inner(&i(&hh, &w1), &w2),
            fr.inner(&i(&hh, &w2), &w1),
        ));
    }
    out.push(("adjoint_i", worst));

    let mut worst_sym = 0.0f64;
    let mut worst_trace = 0.0f64;
    for p in 1..=DIM {
        let w1 = random_form(&mut rng, p);
        let w2 = random_form(&mut rng, p);
        worst_sym = worst_sym.max(tensor_rel(&j(&w1, &w2), &j(&w2, &w1)));
        let fact: f64 = (1..=p).map(|k| k as f64).product();
        worst_trace = worst_trace.max(scalar_rel(j(&w1, &w2).trace(m), fact * fr.inner(&w1, &w2)));
    }
    out.push(("j_symmetric", worst_sym));
    out.push(("j_trace", worst_trace));

    let mut worst = 0.0f64;
    for p in 2..=3usize {
        for q in 2..=3usize {
            let w1 = random_form(&mut rng, p);
            let w2 = random_form(&mut rng, p);
            let n1 = random_form(&mut rng, q);
            let n2 = random_form(&mut rng, q);
            let fp: f64 = (1..p).map(|k| k as f64).product();
            let fq: f64 = (1..q).map(|k| k as f64).product();
            let a = fr.inner(&i(&j(&n1, &n2), &w1), &w2);
            let b = 2.0 / fp * tensor_inner(&j(&n1, &n2), &j(&w1, &w2), m);
            let c = fq / fp * fr.inner(&n1, &i(&j(&w1, &w2), &n2));
            worst = worst.max(scalar_rel(a, b)).max(scalar_rel(a, c));
        }
    }
    out.push(("exchange_i_j", worst));
    out
}

/// Runs every pointwise identity on `trials` frames: `fr` itself and
/// near-identity pullbacks of it, with per-trial seeds.
pub fn identity_suite(fr: &G2Frame, trials: usize, seed: u64) -> Report {
    const TOL: f64 = 1e-9;
    let per_trial: Vec<Vec<(&'static str, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| trial_residuals(fr, seed, t))
        .collect();
    let mut report = Report::new("pointwise identities");
    for rows in per_trial {
        for (name, r) in rows {
            report.record(name, r, TOL);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior7::form_inner;
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn standard_frame_is_flat() {
        let fr = G2Frame::standard();
        assert!((fr.metric().g() - Matrix7::identity()).amax() < 1e-14);
        assert!((fr.vol_density() - 1.0).abs() < 1e-14);
        assert!((b_matrix(&phi0()) - Matrix7::identity() * 6.0).amax() < 1e-14);
        assert!((form_inner(fr.phi(), fr.phi(), fr.metric()).unwrap() - 7.0).abs() < 1e-12);
        assert!((fr.star(fr.phi()) - *fr.psi()).max_abs() < 1e-14);
    }

    #[test]
    fn scaled_form_scales_metric() {
        let lambda: f64 = 1.3;
        let fr = frame_from_phi(&(phi0() * lambda.powi(3))).unwrap();
        assert!((fr.metric().g() - Matrix7::identity() * lambda * lambda).amax() < 1e-12);
        assert!((fr.vol_density() - lambda.powi(7)).abs() < 1e-11);
    }

    #[test]
    fn pullback_transforms_metric() {
        let mut r = rng(3);
        for _ in 0..20 {
            let a = random_near_identity(&mut r, 0.2);
            let fr = frame_from_phi(&pullback(&phi0(), &a)).unwrap();
            let expected = a.transpose() * a;
            assert!((fr.metric().g() - expected).amax() < 1e-12);
            let moved = G2Frame::standard().pullback(&a).unwrap();
            assert!((moved.metric().g() - fr.metric().g()).amax() < 1e-12);
            assert!((*moved.psi() - *fr.psi()).max_abs() < 1e-12);
            assert!((moved.vol_density() - fr.vol_density()).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_negative_form_is_rejected() {
        assert!(matches!(
            frame_from_phi(&(-phi0())),
            Err(Error::NonPositiveForm { .. })
        ));
        assert!(frame_from_phi(&Form::zero(3)).is_err());
    }

    #[test]
    fn project2_examples() {
        let fr = G2Frame::standard();
        let u = [0.3, 0.0, 0.0, 0.0, -1.2, 0.0, 0.0];
        let beta = crate::exterior7::interior(&u, fr.phi()).unwrap();
        let d = project2(&beta, &fr);
        assert!(d.p14.max_abs() < 1e-14);
        let mut r = rng(5);
        let b = random_form(&mut r, 2);
        let d = project2(&b, &fr);
        assert!((d.p7 + d.p14 - b).max_abs() < 1e-14);
        let again = project2(&d.p14, &fr);
        assert!(again.p7.max_abs() < 1e-14);
        let psi_wedge = fr.star(&wedge_unchecked(fr.psi(), &d.p14));
        assert!(psi_wedge.max_abs() < 1e-14);
        let seven = fr.star(&wedge_unchecked(fr.phi(), &d.p7));
        assert!((seven - d.p7 * 2.0).max_abs() < 1e-13);
    }

    #[test]
    fn project3_examples() {
        let fr = G2Frame::standard();
        let d = project3(fr.phi(), &fr);
        assert!((d.p1 - *fr.phi()).max_abs() < 1e-14);
        assert!(d.p7.max_abs() < 1e-14 && d.p27.max_abs() < 1e-14);
        let mut r = rng(7);
        let a = random_form(&mut r, 1);
        let seven = fr.star(&wedge_unchecked(&a, fr.phi()));
        let d = project3(&seven, &fr);
        assert!((d.p7 - seven).max_abs() < 1e-13);
        let h = traceless(&random_sym(&mut r), fr.metric());
        let ih = op_i(&h, fr.phi(), fr.metric()).unwrap();
        let d = project3(&ih, &fr);
        assert!(d.p1.max_abs() < 1e-13 && d.p7.max_abs() < 1e-13);
    }

    #[test]
    fn torsion_spectrum_of_standard_example() {
        let fr = G2Frame::standard();
        let tau = Form::from_labels(2, &[(1.0, "23"), (-1.0, "67")]);
        let s = tau_spectrum(&tau, &fr).unwrap();
        assert!((s.norm_sq - 2.0).abs() < 1e-14);
        // Eigenvalues are −λ_i², each twice, plus a zero.
        let expected = [-1.0, -1.0, -1.0, -1.0, 0.0, 0.0, 0.0];
        for (a, b) in s.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", s.eigenvalues);
        }
        assert!((s.quartic_contraction - 4.0).abs() < 1e-12);
        let zero = tau_spectrum(&Form::zero(2), &fr).unwrap();
        assert!(zero.eigenvalues.iter().all(|e| e.abs() < 1e-15));
        assert!(matches!(
            tau_spectrum(&Form::from_labels(2, &[(1.0, "23")]), &fr),
            Err(Error::NotIn14 { .. })
        ));
    }

    #[test]
    fn isometric_family_examples() {
        let fr = G2Frame::standard();
        let same = isometric_family(&fr, 1.0, &Form::zero(1)).unwrap();
        assert!((same - *fr.phi()).max_abs() < 1e-15);
        let e1 = Form::basis(&[0]);
        let other = isometric_family(&fr, 0.0, &e1).unwrap();
        let fo = frame_from_phi(&other).unwrap();
        assert!((fo.metric().g() - fr.metric().g()).amax() < 1e-12);
        assert!((other - *fr.phi()).max_abs() > 0.5);
        assert!(matches!(
            isometric_family(&fr, 1.0, &e1),
            Err(Error::ConstraintViolated(_))
        ));
    }

    #[test]
    fn identity_suite_passes_on_standard_frame() {
        let report = identity_suite(&G2Frame::standard(), 1, 11);
        for c in &report.checks {
            assert!(c.max_residual <= 1e-10, "{report}");
        }
    }

    #[test]
    fn identity_suite_passes_on_random_frames() {
        let report = identity_suite(&G2Frame::standard(), 24, 12);
        assert!(report.all_passed(), "{report}");
        assert_eq!(report.checks.len(), 24);
    }

    #[test]
    fn identity_suite_detects_corrupted_psi() {
        let fr = G2Frame::standard();
        let bad = fr.clone().with_psi(*fr.psi() * 1.01);
        let report = identity_suite(&bad, 4, 13);
        assert!(!report.all_passed());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn decompositions_are_orthogonal_and_idempotent(seed in any::<u64>()) {
            let mut r = rng(seed);
            let fr = G2Frame::standard().pullback(&random_near_identity(&mut r, 0.2)).unwrap();
            let eta = random_form(&mut r, 3);
            let d = project3(&eta, &fr);
            prop_assert!((d.p1 + d.p7 + d.p27 - eta).max_abs() < 1e-12);
            prop_assert!(fr.inner(&d.p1, &d.p7).abs() < 1e-10);
            prop_assert!(fr.inner(&d.p1, &d.p27).abs() < 1e-10);
            prop_assert!(fr.inner(&d.p7, &d.p27).abs() < 1e-10);
            prop_assert!(fr.inner(&d.p27, fr.phi()).abs() < 1e-10);
            prop_assert!(wedge_unchecked(&d.p27, fr.phi()).max_abs() < 1e-10);
            prop_assert!(wedge_unchecked(&d.p27, fr.psi()).max_abs() < 1e-10);
            let dd = project3(&d.p7, &fr);
            prop_assert!((dd.p7 - d.p7).max_abs() < 1e-12);
            let seven = fr.star(&wedge_unchecked(&d.f1, fr.phi()));
            prop_assert!((seven - d.p7).max_abs() < 1e-12);
            prop_assert!((d.p1 - *fr.phi() * (3.0 * d.f0)).max_abs() < 1e-12);
            let beta = random_form(&mut r, 2);
            let b = project2(&beta, &fr);
            prop_assert!(fr.inner(&b.p7, &b.p14).abs() < 1e-10);
        }

        #[test]
        fn i_j_roundtrips(seed in any::<u64>()) {
            let mut r = rng(seed);
            let fr = G2Frame::standard().pullback(&random_near_identity(&mut r, 0.2)).unwrap();
            let h = traceless(&random_sym(&mut r), fr.metric());
            let ih = op_i(&h, fr.phi(), fr.metric()).unwrap();
            let back = op_j(fr.phi(), &ih, fr.metric()).unwrap();
            prop_assert!((back.matrix() - h.matrix() * 4.0).amax() < 1e-10);
            let eta = random_form(&mut r, 3);
            let d = project3(&eta, &fr);
            let ij = op_i(&op_j(fr.phi(), &eta, fr.metric()).unwrap(), fr.phi(), fr.metric()).unwrap();
            prop_assert!((ij - (d.p1 * 18.0 + d.p27 * 4.0)).max_abs() < 1e-10);
        }

        #[test]
        fn torsion_spectrum_bounds(seed in any::<u64>()) {
            let mut r = rng(seed);
            let fr = G2Frame::standard().pullback(&random_near_identity(&mut r, 0.2)).unwrap();
            let tau = project2(&random_form(&mut r, 2), &fr).p14;
            let s = tau_spectrum(&tau, &fr).unwrap();
            prop_assert!(s.eigenvalues[DIM - 1].abs() < 1e-9);
            prop_assert!(s.eigenvalues[0] >= -2.0 / 3.0 * s.norm_sq - 1e-9);
            let sum_sq: f64 = s.eigenvalues.iter().map(|e| e * e).sum();
            prop_assert!((sum_sq - s.quartic_contraction).abs() < 1e-10 * (1.0 + sum_sq));
            prop_assert!((s.quartic_contraction - 2.0 * s.quartic_tensor_inner).abs() < 1e-10 * (1.0 + sum_sq));
        }

        #[test]
        fn isometric_family_preserves_metric(seed in any::<u64>()) {
            let mut r = rng(seed);
            let fr = G2Frame::standard().pullback(&random_near_identity(&mut r, 0.2)).unwrap();
            let raw = random_form(&mut r, 1);
            let f: f64 = r.gen_range(-1.0..1.0);
            let scale = ((1.0 - f * f) / fr.inner(&raw, &raw)).sqrt();
            let eta = raw * scale;
            let bar = isometric_family(&fr, f, &eta).unwrap();
            let fb = frame_from_phi(&bar).unwrap();
            prop_assert!((fb.metric().g() - fr.metric().g()).amax() < 1e-10);
        }
    }
}
