//! Alternating tensors on an oriented 7-dimensional inner-product space.
//!
//! Indices are 0-based. A `p`-form stores one coefficient per strictly
//! increasing index tuple, in lexicographic order, so `coeffs[I]` is the
//! antisymmetric component `ω_{i₁…i_p}` with `i₁ < … < i_p`.
//! Orientation is `ε^{0…6} = +1` and `vol = √det g · dx^{0…6}`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};
use std::sync::LazyLock;

use nalgebra::SMatrix;

use crate::error::{Error, Result};

pub const DIM: usize = 7;
/// Largest number of coefficients of any degree (`C(7,3) = C(7,4)`).
pub const MAX_LEN: usize = 35;
const BINOM7: [usize; 8] = [1, 7, 21, 35, 35, 21, 7, 1];

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = nalgebra::SVector<f64, 7>;

/// Number of coefficients of a `p`-form.
#[inline]
pub fn form_len(p: usize) -> usize {
    BINOM7[p]
}

/// Sign of the permutation sorting the concatenation `a ++ b` of two
/// disjoint increasing index sets, given as bitmasks.
#[inline]
pub fn shuffle_sign(a: u8, b: u8) -> f64 {
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let y = rest.trailing_zeros();
        rest &= rest - 1;
        inversions += (a >> (y + 1)).count_ones();
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Increasing multi-indices of every degree with a reverse lookup.
pub struct MultiIndexTable {
    masks: [Vec<u8>; 8],
    slot: [usize; 128],
}

static TABLE: LazyLock<MultiIndexTable> = LazyLock::new(MultiIndexTable::build);

impl MultiIndexTable {
    pub fn get() -> &'static MultiIndexTable {
        &TABLE
    }

    fn build() -> Self {
        let mut masks: [Vec<u8>; 8] = Default::default();
        for (p, list) in masks.iter_mut().enumerate() {
            let mut tuple = Vec::with_capacity(p);
            push_combinations(0, p, &mut tuple, list);
        }
        let mut slot = [0usize; 128];
        for list in &masks {
            for (s, &m) in list.iter().enumerate() {
                slot[m as usize] = s;
            }
        }
        MultiIndexTable { masks, slot }
    }

    pub fn len(&self, p: usize) -> usize {
        self.masks[p].len()
    }

    pub fn masks(&self, p: usize) -> &[u8] {
        &self.masks[p]
    }

    #[inline]
    pub fn mask(&self, p: usize, slot: usize) -> u8 {
        self.masks[p][slot]
    }

    #[inline]
    pub fn slot_of_mask(&self, mask: u8) -> usize {
        self.slot[mask as usize]
    }

    /// The increasing index tuple stored in `slot`.
    pub fn tuple(&self, p: usize, slot: usize) -> Vec<usize> {
        mask_indices(self.masks[p][slot]).collect()
    }

    /// Canonical slot and permutation sign of an arbitrary index tuple.
    /// The sign is 0 when an index repeats.
    pub fn lookup(&self, indices: &[usize]) -> (usize, i8) {
        let mut mask = 0u8;
        let mut inversions = 0usize;
        for (a, &i) in indices.iter().enumerate() {
            if mask & (1 << i) != 0 {
                return (0, 0);
            }
            mask |= 1 << i;
            inversions += indices[..a].iter().filter(|&&j| j > i).count();
        }
        let sign = if inversions % 2 == 0 { 1 } else { -1 };
        (self.slot[mask as usize], sign)
    }
}

fn push_combinations(start: usize, remaining: usize, tuple: &mut Vec<usize>, out: &mut Vec<u8>) {
    if remaining == 0 {
        out.push(tuple.iter().fold(0u8, |m, &i| m | (1 << i)));
        return;
    }
    for i in start..=(DIM - remaining) {
        tuple.push(i);
        push_combinations(i + 1, remaining - 1, tuple, out);
        tuple.pop();
    }
}

/// Indices set in a bitmask, increasing.
pub fn mask_indices(mask: u8) -> impl Iterator<Item = usize> {
    (0..DIM).filter(move |i| mask & (1 << i) != 0)
}

/// A constant-coefficient `p`-form.
#[derive(Clone, Copy, PartialEq)]
pub struct Form {
    degree: usize,
    coeffs: [f64; MAX_LEN],
}

impl std::fmt::Debug for Form {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Form[{}]{:?}", self.degree, self.coeffs())
    }
}

impl Form {
    pub fn zero(degree: usize) -> Form {
        assert!(degree <= DIM, "degree {degree} out of range");
        Form {
            degree,
            coeffs: [0.0; MAX_LEN],
        }
    }

    pub fn scalar(value: f64) -> Form {
        let mut f = Form::zero(0);
        f.coeffs[0] = value;
        f
    }

    pub fn from_slice(degree: usize, coeffs: &[f64]) -> Result<Form> {
        if degree > DIM {
            return Err(Error::DegreeOverflow { left: degree, right: 0 });
        }
        if coeffs.len() != form_len(degree) {
            return Err(Error::LengthMismatch {
                expected: form_len(degree),
                got: coeffs.len(),
            });
        }
        let mut f = Form::zero(degree);
        f.coeffs[..coeffs.len()].copy_from_slice(coeffs);
        Ok(f)
    }

    /// The basis form `e^{i₁…i_p}` for an arbitrary (possibly unsorted) tuple.
    pub fn basis(indices: &[usize]) -> Form {
        let mut f = Form::zero(indices.len());
        let (slot, sign) = MultiIndexTable::get().lookup(indices);
        f.coeffs[slot] = sign as f64;
        f
    }

    /// Builds a form from terms `(c, word)` where `word` spells 1-based
    /// basis labels, e.g. `(1.0, "123")` for `e^{123}`.
    pub fn from_labels(degree: usize, terms: &[(f64, &str)]) -> Form {
        let mut f = Form::zero(degree);
        for &(c, word) in terms {
            let idx: Vec<usize> = word
                .chars()
                .map(|ch| ch.to_digit(10).expect("digit label") as usize - 1)
                .collect();
            assert_eq!(idx.len(), degree, "label {word} has wrong degree");
            f += Form::basis(&idx) * c;
        }
        f
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..form_len(self.degree)]
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        let n = form_len(self.degree);
        &mut self.coeffs[..n]
    }

    /// Antisymmetric component for an arbitrary index tuple.
    pub fn component(&self, indices: &[usize]) -> f64 {
        let (slot, sign) = MultiIndexTable::get().lookup(indices);
        sign as f64 * self.coeffs[slot]
    }

    /// Euclidean norm of the stored coefficients.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs().iter().all(|c| c.is_finite())
    }

    /// Full antisymmetric array of `7^p` entries, first index slowest.
    pub fn to_full(&self) -> Vec<f64> {
        let p = self.degree;
        let n = DIM.pow(p as u32);
        let mut out = vec![0.0; n];
        let mut idx = vec![0usize; p];
        for (flat, v) in out.iter_mut().enumerate() {
            let mut r = flat;
            for k in (0..p).rev() {
                idx[k] = r % DIM;
                r /= DIM;
            }
            *v = self.component(&idx);
        }
        out
    }

    /// Restricts a full antisymmetric array to increasing slots.
    pub fn from_full(degree: usize, full: &[f64]) -> Form {
        let table = MultiIndexTable::get();
        let mut f = Form::zero(degree);
        for s in 0..form_len(degree) {
            let flat = mask_indices(table.mask(degree, s)).fold(0, |acc, i| acc * DIM + i);
            f.coeffs[s] = full[flat];
        }
        f
    }

    pub fn dot(&self, other: &Form) -> f64 {
        self.coeffs().iter().zip(other.coeffs()).map(|(a, b)| a * b).sum()
    }
}

impl Index<usize> for Form {
    type Output = f64;
    fn index(&self, slot: usize) -> &f64 {
        &self.coeffs()[slot]
    }
}

impl IndexMut<usize> for Form {
    fn index_mut(&mut self, slot: usize) -> &mut f64 {
        &mut self.coeffs_mut()[slot]
    }
}

impl Add for Form {
    type Output = Form;
    fn add(mut self, rhs: Form) -> Form {
        self += rhs;
        self
    }
}

impl AddAssign for Form {
    fn add_assign(&mut self, rhs: Form) {
        assert_eq!(self.degree, rhs.degree, "adding forms of different degree");
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs.iter()) {
            *a += b;
        }
    }
}

impl Sub for Form {
    type Output = Form;
    fn sub(mut self, rhs: Form) -> Form {
        self -= rhs;
        self
    }
}

impl SubAssign for Form {
    fn sub_assign(&mut self, rhs: Form) {
        assert_eq!(self.degree, rhs.degree, "subtracting forms of different degree");
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs.iter()) {
            *a -= b;
        }
    }
}

impl Mul<f64> for Form {
    type Output = Form;
    fn mul(mut self, rhs: f64) -> Form {
        for a in self.coeffs.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Neg for Form {
    type Output = Form;
    fn neg(self) -> Form {
        self * -1.0
    }
}

/// `a ∧ b`.
pub fn wedge(a: &Form, b: &Form) -> Result<Form> {
    let (p, q) = (a.degree, b.degree);
    if p + q > DIM {
        return Err(Error::DegreeOverflow { left: p, right: q });
    }
    Ok(wedge_unchecked(a, b))
}

pub(crate) fn wedge_unchecked(a: &Form, b: &Form) -> Form {
    let table = MultiIndexTable::get();
    let (p, q) = (a.degree, b.degree);
    let mut out = Form::zero(p + q);
    for (i, &ma) in table.masks(p).iter().enumerate() {
        let ca = a.coeffs[i];
        if ca == 0.0 {
            continue;
        }
        for (j, &mb) in table.masks(q).iter().enumerate() {
            if ma & mb != 0 {
                continue;
            }
            let cb = b.coeffs[j];
            if cb == 0.0 {
                continue;
            }
            out.coeffs[table.slot_of_mask(ma | mb)] += shuffle_sign(ma, mb) * ca * cb;
        }
    }
    out
}

/// `e^i ∧ a` for a coordinate covector.
pub fn wedge_basis(i: usize, a: &Form) -> Form {
    let table = MultiIndexTable::get();
    let p = a.degree;
    assert!(p < DIM, "cannot raise degree 7");
    let mut out = Form::zero(p + 1);
    let bit = 1u8 << i;
    for (s, &m) in table.masks(p).iter().enumerate() {
        if m & bit != 0 {
            continue;
        }
        out.coeffs[table.slot_of_mask(m | bit)] += shuffle_sign(bit, m) * a.coeffs[s];
    }
    out
}

/// `e_i ⌟ a` for a coordinate vector.
pub fn contract_basis(i: usize, a: &Form) -> Form {
    let table = MultiIndexTable::get();
    let p = a.degree;
    assert!(p > 0, "cannot contract a 0-form");
    let mut out = Form::zero(p - 1);
    let bit = 1u8 << i;
    for (s, &m) in table.masks(p).iter().enumerate() {
        if m & bit == 0 {
            continue;
        }
        let rest = m & !bit;
        out.coeffs[table.slot_of_mask(rest)] += shuffle_sign(bit, rest) * a.coeffs[s];
    }
    out
}

/// `u ⌟ a` with `(u⌟a)_{i₂…} = u^j a_{j i₂…}`.
pub fn interior(u: &[f64; DIM], a: &Form) -> Result<Form> {
    if a.degree == 0 {
        return Err(Error::DegreeUnderflow);
    }
    let mut out = Form::zero(a.degree - 1);
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            out += contract_basis(i, a) * ui;
        }
    }
    Ok(out)
}

/// A symmetric 2-tensor `h_{ij}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor2(Matrix7);

impl SymTensor2 {
    pub fn zero() -> Self {
        SymTensor2(Matrix7::zeros())
    }

    pub fn identity() -> Self {
        SymTensor2(Matrix7::identity())
    }

    /// Symmetric part of an arbitrary matrix.
    pub fn symmetrize(m: &Matrix7) -> Self {
        SymTensor2((m + m.transpose()) * 0.5)
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix7::zeros();
        for i in 0..DIM {
            for j in i..DIM {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymTensor2(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix7 {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `Tr_g h = g^{ij} h_{ij}`.
    pub fn trace(&self, m: &Metric) -> f64 {
        m.ginv.component_mul(&self.0).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(self.0 + rhs.0)
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(self.0 - rhs.0)
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = SymTensor2;
    fn mul(self, rhs: f64) -> SymTensor2 {
        SymTensor2(self.0 * rhs)
    }
}

/// A positive definite metric with cached inverse, volume density and the
/// induced inner products on every exterior power.
#[derive(Clone, Debug)]
pub struct Metric {
    g: Matrix7,
    ginv: Matrix7,
    sqrt_det: f64,
    // Compound matrices Λ^p(g⁻¹), row-major C(7,p)×C(7,p), concatenated.
    compound: Vec<f64>,
}

const COMPOUND_OFFSETS: [usize; 9] = [0, 1, 50, 491, 1716, 2941, 3382, 3431, 3432];

impl Metric {
    pub fn new(g: Matrix7) -> Result<Metric> {
        let g = (g + g.transpose()) * 0.5;
        let chol = g.cholesky().ok_or(Error::NonPositiveMetric)?;
        let ginv = chol.inverse();
        let ginv = (ginv + ginv.transpose()) * 0.5;
        let sqrt_det = chol.l().diagonal().product();
        if !(sqrt_det > 0.0 && sqrt_det.is_finite()) {
            return Err(Error::NonPositiveMetric);
        }
        let compound = compound_matrices(&ginv);
        Ok(Metric {
            g,
            ginv,
            sqrt_det,
            compound,
        })
    }

    pub fn identity() -> Metric {
        Metric::new(Matrix7::identity()).expect("identity is positive")
    }

    #[inline]
    pub fn g(&self) -> &Matrix7 {
        &self.g
    }

    #[inline]
    pub fn ginv(&self) -> &Matrix7 {
        &self.ginv
    }

    #[inline]
    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    pub fn as_tensor(&self) -> SymTensor2 {
        SymTensor2(self.g)
    }

    /// The Gram matrix of `g` on `p`-forms, `G[I][J] = det(g⁻¹)_{I,J}`.
    #[inline]
    pub fn gram(&self, p: usize) -> &[f64] {
        &self.compound[COMPOUND_OFFSETS[p]..COMPOUND_OFFSETS[p + 1]]
    }

    /// Coefficients of the fully raised form `a^{I}` in increasing slots.
    pub fn raise(&self, a: &Form) -> Form {
        let p = a.degree;
        let n = form_len(p);
        let gram = self.gram(p);
        let mut out = Form::zero(p);
        let src = a.coeffs();
        for (i, o) in out.coeffs_mut().iter_mut().enumerate() {
            let row = &gram[i * n..(i + 1) * n];
            *o = row.iter().zip(src).map(|(x, y)| x * y).sum();
        }
        out
    }
}

/// Laplace expansion along the lowest row index of each minor.
fn compound_matrices(m: &Matrix7) -> Vec<f64> {
    let table = MultiIndexTable::get();
    let mut out = vec![0.0; COMPOUND_OFFSETS[8]];
    out[0] = 1.0;
    for p in 1..=DIM {
        let n = form_len(p);
        let nprev = form_len(p - 1);
        let (lower, upper) = out.split_at_mut(COMPOUND_OFFSETS[p]);
        let prev = &lower[COMPOUND_OFFSETS[p - 1]..];
        let cur = &mut upper[..n * n];
        for (si, &mi) in table.masks(p).iter().enumerate() {
            let i1 = mi.trailing_zeros() as usize;
            let irest = table.slot_of_mask(mi & !(1 << i1));
            for (sj, &mj) in table.masks(p).iter().enumerate() {
                let mut acc = 0.0;
                for (b, j) in mask_indices(mj).enumerate() {
                    let jrest = table.slot_of_mask(mj & !(1 << j));
                    let term = m[(i1, j)] * prev[irest * nprev + jrest];
                    if b % 2 == 0 {
                        acc += term;
                    } else {
                        acc -= term;
                    }
                }
                cur[si * n + sj] = acc;
            }
        }
    }
    out
}

/// Pullback `A*a` with `(A*a)(v₁,…) = a(Av₁,…)`.
pub fn pullback(a: &Form, map: &Matrix7) -> Form {
    let p = a.degree;
    let n = form_len(p);
    let comp = compound_matrices(map);
    let block = &comp[COMPOUND_OFFSETS[p]..COMPOUND_OFFSETS[p + 1]];
    let mut out = Form::zero(p);
    for (i, &ai) in a.coeffs().iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, o) in out.coeffs_mut().iter_mut().enumerate() {
            *o += ai * block[i * n + j];
        }
    }
    out
}

/// `g(a, b) = (1/p!) a_{i…} b_{j…} g^{ij}…`.
pub fn form_inner(a: &Form, b: &Form, m: &Metric) -> Result<f64> {
    if a.degree != b.degree {
        return Err(Error::DegreeMismatch {
            left: a.degree,
            right: b.degree,
        });
    }
    Ok(m.raise(a).dot(b))
}

/// `g(S, T) = ½ S_{ij} T_{kl} g^{ik} g^{jl}`.
pub fn tensor_inner(s: &SymTensor2, t: &SymTensor2, m: &Metric) -> f64 {
    let a = m.ginv * s.0;
    let b = m.ginv * t.0;
    0.5 * (a.transpose().component_mul(&b)).sum()
}

/// Hodge star with `b ∧ *a = g(b, a) vol`.
pub fn hodge_star(a: &Form, m: &Metric) -> Form {
    let table = MultiIndexTable::get();
    let p = a.degree;
    let raised = m.raise(a);
    let mut out = Form::zero(DIM - p);
    for (s, &mj) in table.masks(p).iter().enumerate() {
        let mk = 0x7f & !mj;
        out.coeffs[table.slot_of_mask(mk)] = shuffle_sign(mj, mk) * raised.coeffs[s];
    }
    out * m.sqrt_det
}

/// `vol = √det g · e^{0…6}`.
pub fn volume_form(m: &Metric) -> Form {
    let mut v = Form::zero(DIM);
    v.coeffs[0] = m.sqrt_det;
    v
}

/// Metric dual 1-form of a vector.
pub fn flat(u: &[f64; DIM], m: &Metric) -> Form {
    let v = m.g * Vector7::from_column_slice(u);
    Form::from_slice(1, v.as_slice()).expect("seven coefficients")
}

/// Randomised checks of the exterior algebra under random metrics: graded
/// commutativity, associativity, the star's defining identity, `** = 1` and
/// interior–wedge adjointness.
pub fn algebra_suite(trials: usize, seed: u64) -> crate::report::Report {
    use rand::{Rng, SeedableRng};
    const TOL: f64 = 1e-11;
    let mut report = crate::report::Report::new("exterior algebra");
    for t in 0..trials as u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t);
        let mut form = |p: usize| {
            let c: Vec<f64> = (0..form_len(p)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Form::from_slice(p, &c).expect("length")
        };
        let (a1, b2, c3, d3) = (form(1), form(2), form(3), form(3));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        rng.set_stream(t);
        let r = Matrix7::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        let a = Matrix7::identity() + r;
        let m = Metric::new(a.transpose() * a).expect("positive");
        let u: [f64; DIM] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let rel = |x: &Form, y: &Form| (*x - *y).max_abs() / x.max_abs().max(y.max_abs()).max(1.0);

        let lhs = wedge(&b2, &c3).expect("degree");
        let rhs = wedge(&c3, &b2).expect("degree");
        report.record("graded_commutative", rel(&lhs, &rhs), TOL);
        let lhs = wedge(&wedge(&a1, &b2).expect("degree"), &c3).expect("degree");
        let rhs = wedge(&a1, &wedge(&b2, &c3).expect("degree")).expect("degree");
        report.record("associative", rel(&lhs, &rhs), TOL);
        let lhs = wedge(&d3, &hodge_star(&c3, &m)).expect("degree");
        let rhs = volume_form(&m) * form_inner(&d3, &c3, &m).expect("degree");
        report.record("star_defining_identity", rel(&lhs, &rhs), TOL);
        report.record("star_involution", rel(&hodge_star(&hodge_star(&c3, &m), &m), &c3), TOL);
        let ua = interior(&u, &c3).expect("degree");
        let lhs = form_inner(&ua, &b2, &m).expect("degree");
        let rhs = form_inner(&c3, &wedge(&flat(&u, &m), &b2).expect("degree"), &m).expect("degree");
        report.record("interior_adjoint", (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0), TOL);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full_inner_oracle(a: &Form, b: &Form, m: &Metric) -> f64 {
        let p = a.degree();
        let fa = a.to_full();
        let fb = b.to_full();
        let n = DIM.pow(p as u32);
        let mut total = 0.0;
        let decode = |mut flat: usize| {
            let mut idx = vec![0; p];
            for k in (0..p).rev() {
                idx[k] = flat % DIM;
                flat /= DIM;
            }
            idx
        };
        for x in 0..n {
            if fa[x] == 0.0 {
                continue;
            }
            let ix = decode(x);
            for y in 0..n {
                let iy = decode(y);
                let w: f64 = ix.iter().zip(&iy).map(|(&i, &j)| m.ginv()[(i, j)]).product();
                total += fa[x] * fb[y] * w;
            }
        }
        total / (1..=p).product::<usize>() as f64
    }

    fn spd(entries: &[f64]) -> Metric {
        let a = Matrix7::from_fn(|i, j| entries[i * DIM + j]);
        Metric::new(Matrix7::identity() + a * a.transpose() * 0.3).unwrap()
    }

    fn form_strategy(p: usize) -> impl Strategy<Value = Form> {
        prop::collection::vec(-1.0f64..1.0, form_len(p))
            .prop_map(move |c| Form::from_slice(p, &c).unwrap())
    }

    fn metric_strategy() -> impl Strategy<Value = Metric> {
        prop::collection::vec(-1.0f64..1.0, 49).prop_map(|e| spd(&e))
    }

    fn phi0() -> Form {
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

    #[test]
    fn algebra_suite_passes() {
        let report = algebra_suite(200, 4);
        assert!(report.all_passed(), "{report}");
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn table_sizes_and_lookup() {
        let t = MultiIndexTable::get();
        let sizes: Vec<usize> = (0..=7).map(|p| t.len(p)).collect();
        assert_eq!(sizes, vec![1, 7, 21, 35, 35, 21, 7, 1]);
        assert_eq!(t.lookup(&[0, 1]), (0, 1));
        assert_eq!(t.lookup(&[1, 0]), (0, -1));
        assert_eq!(t.lookup(&[2, 2]).1, 0);
        assert_eq!(t.tuple(3, 34), vec![4, 5, 6]);
    }

    #[test]
    fn basis_wedges() {
        let e1 = Form::basis(&[0]);
        let e2 = Form::basis(&[1]);
        assert_eq!(wedge(&e1, &e2).unwrap(), Form::basis(&[0, 1]));
        assert_eq!(wedge(&e2, &e1).unwrap(), -Form::basis(&[0, 1]));
        assert!(matches!(
            wedge(&phi0(), &Form::zero(5)),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn phi0_wedge_psi0_is_seven_volumes() {
        let m = Metric::identity();
        let psi = hodge_star(&phi0(), &m);
        let top = wedge(&phi0(), &psi).unwrap();
        assert!((top[0] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn interior_examples() {
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut e3 = [0.0; DIM];
        e3[2] = 1.0;
        assert_eq!(interior(&e1, &Form::basis(&[0, 1])).unwrap(), Form::basis(&[1]));
        assert_eq!(interior(&e3, &Form::basis(&[0, 1])).unwrap(), Form::zero(1));
        let expected = Form::from_labels(2, &[(1.0, "23"), (1.0, "45"), (1.0, "67")]);
        assert_eq!(interior(&e1, &phi0()).unwrap(), expected);
        assert!(matches!(interior(&e1, &Form::scalar(1.0)), Err(Error::DegreeUnderflow)));
    }

    #[test]
    fn inner_product_examples() {
        let m = Metric::identity();
        assert!((form_inner(&phi0(), &phi0(), &m).unwrap() - 7.0).abs() < 1e-14);
        let e12 = Form::basis(&[0, 1]);
        assert_eq!(form_inner(&e12, &e12, &m).unwrap(), 1.0);
        assert!(form_inner(&e12, &phi0(), &m).is_err());
        let id = SymTensor2::identity();
        assert!((tensor_inner(&id, &id, &m) - 3.5).abs() < 1e-14);
        assert_eq!(tensor_inner(&id, &SymTensor2::zero(), &m), 0.0);
    }

    #[test]
    fn star_of_phi0_golden() {
        // Coefficient pattern of ψ₀ = *φ₀ under the fixed orientation.
        let psi = hodge_star(&phi0(), &Metric::identity());
        let golden = Form::from_labels(
            4,
            &[
                (1.0, "4567"),
                (1.0, "2367"),
                (1.0, "2345"),
                (1.0, "1357"),
                (-1.0, "1346"),
                (-1.0, "1256"),
                (-1.0, "1247"),
            ],
        );
        assert!((psi - golden).max_abs() < 1e-15, "{psi:?}");
    }

    #[test]
    fn star_of_one_and_volume() {
        let mut d = Matrix7::identity();
        d[(0, 0)] = 4.0;
        let m = Metric::new(d).unwrap();
        assert!((hodge_star(&Form::scalar(1.0), &m)[0] - 2.0).abs() < 1e-14);
        assert_eq!(volume_form(&Metric::identity())[0], 1.0);
        assert!((volume_form(&m)[0] - 2.0).abs() < 1e-14);
        let mut bad = Matrix7::identity();
        bad[(3, 3)] = -1.0;
        assert!(matches!(Metric::new(bad), Err(Error::NonPositiveMetric)));
    }

    #[test]
    fn compound_matches_minor_determinants() {
        let e: Vec<f64> = (0..49).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let m = spd(&e);
        let table = MultiIndexTable::get();
        for p in 0..=DIM {
            let n = form_len(p);
            for (si, &mi) in table.masks(p).iter().enumerate() {
                for (sj, &mj) in table.masks(p).iter().enumerate() {
                    let rows: Vec<usize> = mask_indices(mi).collect();
                    let cols: Vec<usize> = mask_indices(mj).collect();
                    let sub = nalgebra::DMatrix::from_fn(p, p, |a, b| m.ginv()[(rows[a], cols[b])]);
                    let det = if p == 0 { 1.0 } else { sub.determinant() };
                    assert!((m.gram(p)[si * n + sj] - det).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sqrt_det_matches_lu() {
        let e: Vec<f64> = (0..49).map(|k| ((k * 13 % 17) as f64 - 8.0) / 9.0).collect();
        let m = spd(&e);
        let det = m.g().lu().determinant();
        assert!((m.sqrt_det().powi(2) - det).abs() < 1e-12 * det);
        assert!(((m.g() * m.ginv()) - Matrix7::identity()).amax() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn wedge_graded_commutative(a in form_strategy(2), b in form_strategy(3)) {
            let ab = wedge(&a, &b).unwrap();
            let ba = wedge(&b, &a).unwrap();
            prop_assert!((ab - ba).max_abs() < 1e-13);
        }

        #[test]
        fn wedge_anticommutes_odd(a in form_strategy(1), b in form_strategy(3)) {
            let ab = wedge(&a, &b).unwrap();
            let ba = wedge(&b, &a).unwrap();
            prop_assert!((ab + ba).max_abs() < 1e-13);
        }

        #[test]
        fn wedge_associative(a in form_strategy(1), b in form_strategy(2), c in form_strategy(3)) {
            let left = wedge(&wedge(&a, &b).unwrap(), &c).unwrap();
            let right = wedge(&a, &wedge(&b, &c).unwrap()).unwrap();
            prop_assert!((left - right).max_abs() < 1e-13);
        }

        #[test]
        fn inner_matches_full_oracle(a in form_strategy(3), b in form_strategy(3), m in metric_strategy()) {
            let fast = form_inner(&a, &b, &m).unwrap();
            let slow = full_inner_oracle(&a, &b, &m);
            prop_assert!((fast - slow).abs() < 1e-11 * (1.0 + slow.abs()));
        }

        #[test]
        fn tensor_inner_matches_oracle(s in prop::collection::vec(-1.0f64..1.0, 49),
                                       t in prop::collection::vec(-1.0f64..1.0, 49),
                                       m in metric_strategy()) {
            let s = SymTensor2::symmetrize(&Matrix7::from_column_slice(&s));
            let t = SymTensor2::symmetrize(&Matrix7::from_column_slice(&t));
            let mut oracle = 0.0;
            for i in 0..7 { for j in 0..7 { for k in 0..7 { for l in 0..7 {
                oracle += s.get(i, j) * t.get(k, l) * m.ginv()[(i, k)] * m.ginv()[(j, l)];
            }}}}
            prop_assert!((tensor_inner(&s, &t, &m) - 0.5 * oracle).abs() < 1e-11 * (1.0 + oracle.abs()));
        }

        #[test]
        fn star_defining_identity(a in form_strategy(3), b in form_strategy(3), m in metric_strategy()) {
            let lhs = wedge(&b, &hodge_star(&a, &m)).unwrap()[0];
            let rhs = form_inner(&b, &a, &m).unwrap() * m.sqrt_det();
            prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()));
        }

        #[test]
        fn star_is_involution_and_isometry(c in prop::collection::vec(-1.0f64..1.0, 35),
                                           d in prop::collection::vec(-1.0f64..1.0, 35),
                                           p in 0usize..=7, m in metric_strategy()) {
            let n = form_len(p);
            let a = Form::from_slice(p, &c[..n]).unwrap();
            let b = Form::from_slice(p, &d[..n]).unwrap();
            let ss = hodge_star(&hodge_star(&a, &m), &m);
            prop_assert!((ss - a).max_abs() < 1e-11);
            let lhs = form_inner(&hodge_star(&a, &m), &hodge_star(&b, &m), &m).unwrap();
            let rhs = form_inner(&a, &b, &m).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()));
        }

        #[test]
        fn interior_is_adjoint_of_wedge(u in prop::array::uniform7(-1.0f64..1.0),
                                        a in form_strategy(2), b in form_strategy(3),
                                        m in metric_strategy()) {
            let lhs = form_inner(&wedge(&flat(&u, &m), &a).unwrap(), &b, &m).unwrap();
            let rhs = form_inner(&a, &interior(&u, &b).unwrap(), &m).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()));
            let twice = interior(&u, &interior(&u, &b).unwrap()).unwrap();
            prop_assert!(twice.max_abs() < 1e-14);
        }

        #[test]
        fn form_inner_equals_tensor_inner_on_two_forms(a in form_strategy(2), b in form_strategy(2),
                                                       m in metric_strategy()) {
            // An antisymmetric 2-tensor contracted with the tensor inner product.
            let fa = a.to_full();
            let fb = b.to_full();
            let mut tensor = 0.0;
            for i in 0..7 { for j in 0..7 { for k in 0..7 { for l in 0..7 {
                tensor += fa[i * 7 + j] * fb[k * 7 + l] * m.ginv()[(i, k)] * m.ginv()[(j, l)];
            }}}}
            tensor *= 0.5;
            let form = form_inner(&a, &b, &m).unwrap();
            prop_assert!((tensor - form).abs() < 1e-11 * (1.0 + form.abs()));
        }
    }
}
