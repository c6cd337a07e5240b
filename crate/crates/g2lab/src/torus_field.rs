//! Forms on a flat periodic 7-torus: grids, fields, the spectral exterior
//! derivative, quadrature, closed G2 fields and snapshot I/O.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exterior7::{
    form_inner, form_len, hodge_star, shuffle_sign, Form, MultiIndexTable, SymTensor2, DIM,
};
use crate::g2point::{frame_from_phi, phi0, trial_rng, G2Frame};

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// FFT plans and wavevectors of a grid.
pub(crate) struct Spectral {
    plans: [Option<AxisPlan>; DIM],
    /// Derivative wavevectors `2πk/L`, Nyquist entries zeroed.
    wavevectors: Vec<[f64; DIM]>,
    /// Signed integer mode numbers.
    modes: Vec<[i64; DIM]>,
}

/// A periodic grid on `∏[0, L_i)`.
#[derive(Clone)]
pub struct Grid {
    dims: [usize; DIM],
    lengths: [f64; DIM],
    spectral: Arc<OnceLock<Spectral>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.lengths == other.lengths
    }
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid({:?}, {:?})", self.dims, self.lengths)
    }
}

impl Grid {
    pub fn new(dims: [usize; DIM], lengths: [f64; DIM]) -> Result<Grid> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGrid("dimensions must be positive".into()));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidGrid("lengths must be positive".into()));
        }
        let points = dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        if !matches!(points, Some(p) if p <= 1 << 26) {
            return Err(Error::InvalidGrid("too many grid points".into()));
        }
        Ok(Grid {
            dims,
            lengths,
            spectral: Arc::new(OnceLock::new()),
        })
    }

    /// Unit-length torus.
    pub fn unit(dims: [usize; DIM]) -> Result<Grid> {
        Grid::new(dims, [1.0; DIM])
    }

    pub fn dims(&self) -> [usize; DIM] {
        self.dims
    }

    pub fn lengths(&self) -> [f64; DIM] {
        self.lengths
    }

    pub fn points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..DIM).map(|a| self.lengths[a] / self.dims[a] as f64).product()
    }

    pub fn total_volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn active_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..DIM).filter(|&a| self.dims[a] > 1)
    }

    /// Point stride of each axis; axis 0 is fastest.
    pub fn strides(&self) -> [usize; DIM] {
        let mut s = [1usize; DIM];
        for a in 1..DIM {
            s[a] = s[a - 1] * self.dims[a - 1];
        }
        s
    }

    pub fn multi_index(&self, pt: usize) -> [usize; DIM] {
        let mut out = [0usize; DIM];
        let mut rest = pt;
        for a in 0..DIM {
            out[a] = rest % self.dims[a];
            rest /= self.dims[a];
        }
        out
    }

    pub fn coord(&self, pt: usize) -> [f64; DIM] {
        let ix = self.multi_index(pt);
        std::array::from_fn(|a| self.lengths[a] * ix[a] as f64 / self.dims[a] as f64)
    }

    /// Largest admissible band limit: half the smallest active dimension.
    pub fn band_capacity(&self) -> usize {
        self.active_axes().map(|a| self.dims[a] / 2).min().unwrap_or(0)
    }

    pub(crate) fn spectral(&self) -> &Spectral {
        self.spectral.get_or_init(|| {
            let mut planner = FftPlanner::new();
            let plans = std::array::from_fn(|a| {
                (self.dims[a] > 1).then(|| AxisPlan {
                    forward: planner.plan_fft_forward(self.dims[a]),
                    inverse: planner.plan_fft_inverse(self.dims[a]),
                })
            });
            let mut wavevectors = Vec::with_capacity(self.points());
            let mut modes = Vec::with_capacity(self.points());
            for pt in 0..self.points() {
                let ix = self.multi_index(pt);
                let mut k = [0.0; DIM];
                let mut m = [0i64; DIM];
                for a in 0..DIM {
                    let n = self.dims[a];
                    let signed = if ix[a] <= n / 2 {
                        ix[a] as i64
                    } else {
                        ix[a] as i64 - n as i64
                    };
                    m[a] = signed;
                    let nyquist = n % 2 == 0 && ix[a] == n / 2;
                    if !nyquist {
                        k[a] = 2.0 * PI * signed as f64 / self.lengths[a];
                    }
                }
                wavevectors.push(k);
                modes.push(m);
            }
            Spectral {
                plans,
                wavevectors,
                modes,
            }
        })
    }

    pub(crate) fn wavevector(&self, pt: usize) -> [f64; DIM] {
        self.spectral().wavevectors[pt]
    }

    pub(crate) fn mode(&self, pt: usize) -> [i64; DIM] {
        self.spectral().modes[pt]
    }
}

/// Multi-channel FFT over every active axis. `channels` values per point.
pub(crate) fn fft(grid: &Grid, data: &mut [Complex64], channels: usize, inverse: bool) {
    let spectral = grid.spectral();
    let strides = grid.strides();
    for a in 0..DIM {
        let Some(plan) = &spectral.plans[a] else {
            continue;
        };
        let n = grid.dims[a];
        let step = strides[a] * channels;
        let fft = if inverse { &plan.inverse } else { &plan.forward };
        let bases: Vec<usize> = (0..grid.points())
            .filter(|&pt| (pt / strides[a]) % n == 0)
            .flat_map(|pt| (0..channels).map(move |c| pt * channels + c))
            .collect();
        let lines: Vec<Vec<Complex64>> = {
            let view: &[Complex64] = data;
            bases
                .par_chunks(64)
                .flat_map_iter(|chunk| {
                    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                    chunk
                        .iter()
                        .map(|&b| {
                            let mut line: Vec<Complex64> = (0..n).map(|m| view[b + m * step]).collect();
                            fft.process_with_scratch(&mut line, &mut scratch);
                            line
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
        for (&b, line) in bases.iter().zip(lines) {
            for (m, v) in line.into_iter().enumerate() {
                data[b + m * step] = v * scale;
            }
        }
    }
}

pub(crate) fn to_spectrum(grid: &Grid, data: &[f64], channels: usize) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft(grid, &mut out, channels, false);
    out
}

pub(crate) fn from_spectrum(grid: &Grid, mut spec: Vec<Complex64>, channels: usize) -> Vec<f64> {
    fft(grid, &mut spec, channels, true);
    spec.into_iter().map(|z| z.re).collect()
}

/// `e^i ∧ e^K = sign e^J` for every `p`-slot `K` and axis `i ∉ K`,
/// stored as `(K, i, J, sign)`.
pub(crate) fn raising_table(p: usize) -> &'static [(usize, usize, usize, f64)] {
    static TABLES: OnceLock<Vec<Vec<(usize, usize, usize, f64)>>> = OnceLock::new();
    &TABLES.get_or_init(|| {
        let t = MultiIndexTable::get();
        (0..DIM)
            .map(|p| {
                let mut rows = Vec::new();
                for (k, &mk) in t.masks(p).iter().enumerate() {
                    for i in 0..DIM {
                        let bit = 1u8 << i;
                        if mk & bit == 0 {
                            rows.push((k, i, t.slot_of_mask(mk | bit), shuffle_sign(bit, mk)));
                        }
                    }
                }
                rows
            })
            .collect()
    })[p]
}

/// `i k ∧ ω̂` on a spectrum of `p`-forms.
pub(crate) fn spectral_wedge_ik(grid: &Grid, spec: &[Complex64], p: usize) -> Vec<Complex64> {
    let (cin, cout) = (form_len(p), form_len(p + 1));
    let table = raising_table(p);
    let mut out = vec![Complex64::default(); grid.points() * cout];
    out.par_chunks_mut(cout).enumerate().for_each(|(pt, o)| {
        let k = grid.wavevector(pt);
        let src = &spec[pt * cin..(pt + 1) * cin];
        for &(ks, i, js, sign) in table {
            if k[i] != 0.0 {
                o[js] += Complex64::new(0.0, sign * k[i]) * src[ks];
            }
        }
    });
    out
}

/// `i k ⌟ ω̂` on a spectrum of `p`-forms.
pub(crate) fn spectral_contract_ik(grid: &Grid, spec: &[Complex64], p: usize) -> Vec<Complex64> {
    let (cin, cout) = (form_len(p), form_len(p - 1));
    let table = raising_table(p - 1);
    let mut out = vec![Complex64::default(); grid.points() * cout];
    out.par_chunks_mut(cout).enumerate().for_each(|(pt, o)| {
        let k = grid.wavevector(pt);
        let src = &spec[pt * cin..(pt + 1) * cin];
        for &(ks, i, js, sign) in table {
            if k[i] != 0.0 {
                o[ks] += Complex64::new(0.0, sign * k[i]) * src[js];
            }
        }
    });
    out
}

/// A `p`-form on every grid point, `data[pt·C(7,p) + slot]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    grid: Grid,
    degree: usize,
    data: Vec<f64>,
}

impl FormField {
    pub fn zeros(grid: &Grid, degree: usize) -> FormField {
        FormField {
            grid: grid.clone(),
            degree,
            data: vec![0.0; grid.points() * form_len(degree)],
        }
    }

    pub fn from_data(grid: &Grid, degree: usize, data: Vec<f64>) -> Result<FormField> {
        let expected = grid.points() * form_len(degree);
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(FormField {
            grid: grid.clone(),
            degree,
            data,
        })
    }

    pub fn constant(grid: &Grid, form: &Form) -> FormField {
        FormField::from_points(grid, form.degree(), |_| *form)
    }

    /// Scalar field as a 0-form.
    pub fn scalar(grid: &Grid, values: Vec<f64>) -> Result<FormField> {
        FormField::from_data(grid, 0, values)
    }

    pub fn from_fn(grid: &Grid, degree: usize, f: impl Fn(&[f64; DIM]) -> Form + Sync) -> FormField {
        FormField::from_points(grid, degree, |pt| f(&grid.coord(pt)))
    }

    /// Builds a field point by point, in parallel.
    pub fn from_points(grid: &Grid, degree: usize, f: impl Fn(usize) -> Form + Sync) -> FormField {
        let c = form_len(degree);
        let mut data = vec![0.0; grid.points() * c];
        data.par_chunks_mut(c).enumerate().for_each(|(pt, chunk)| {
            let v = f(pt);
            debug_assert_eq!(v.degree(), degree);
            chunk.copy_from_slice(v.coeffs());
        });
        FormField {
            grid: grid.clone(),
            degree,
            data,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn channels(&self) -> usize {
        form_len(self.degree)
    }

    pub fn at(&self, pt: usize) -> Form {
        let c = self.channels();
        Form::from_slice(self.degree, &self.data[pt * c..(pt + 1) * c]).expect("slot count")
    }

    pub fn set(&mut self, pt: usize, value: &Form) {
        let c = self.channels();
        self.data[pt * c..(pt + 1) * c].copy_from_slice(value.coeffs());
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_same(&self, other: &FormField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                left: self.degree,
                right: other.degree,
            });
        }
        Ok(())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &FormField) -> Result<FormField> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(x, y)| *x += a * y);
        Ok(out)
    }

    pub fn add(&self, other: &FormField) -> Result<FormField> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &FormField) -> Result<FormField> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> FormField {
        let mut out = self.clone();
        out.data.par_iter_mut().for_each(|x| *x *= a);
        out
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, f: &FormField) -> Result<FormField> {
        if f.degree != 0 {
            return Err(Error::DegreeMismatch {
                left: f.degree,
                right: 0,
            });
        }
        if self.grid != f.grid {
            return Err(Error::GridMismatch);
        }
        let c = self.channels();
        let mut out = self.clone();
        out.data
            .par_chunks_mut(c)
            .zip(f.data.par_iter())
            .for_each(|(chunk, s)| chunk.iter_mut().for_each(|x| *x *= s));
        Ok(out)
    }

    /// Pointwise `self ∧ other`.
    pub fn wedge(&self, other: &FormField) -> Result<FormField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.degree + other.degree > DIM {
            return Err(Error::DegreeOverflow {
                left: self.degree,
                right: other.degree,
            });
        }
        Ok(self.zip_map(other, self.degree + other.degree, |a, b| {
            crate::exterior7::wedge_unchecked(a, b)
        }))
    }

    pub(crate) fn zip_map(&self, other: &FormField, degree: usize, f: impl Fn(&Form, &Form) -> Form + Sync) -> FormField {
        FormField::from_points(&self.grid, degree, |pt| f(&self.at(pt), &other.at(pt)))
    }

    pub fn map(&self, degree: usize, f: impl Fn(usize, &Form) -> Form + Sync) -> FormField {
        FormField::from_points(&self.grid, degree, |pt| f(pt, &self.at(pt)))
    }

    /// Spectral exterior derivative.
    pub fn d_spectral(&self) -> Result<FormField> {
        if self.degree >= DIM {
            return Err(Error::DegreeOverflow {
                left: self.degree,
                right: 1,
            });
        }
        let spec = to_spectrum(&self.grid, &self.data, self.channels());
        let out = spectral_wedge_ik(&self.grid, &spec, self.degree);
        Ok(FormField {
            grid: self.grid.clone(),
            degree: self.degree + 1,
            data: from_spectrum(&self.grid, out, form_len(self.degree + 1)),
        })
    }

    /// Partial derivatives of every coefficient along each axis.
    pub fn partials(&self) -> [FormField; DIM] {
        let c = self.channels();
        let spec = to_spectrum(&self.grid, &self.data, c);
        std::array::from_fn(|a| {
            if self.grid.dims[a] == 1 {
                return FormField::zeros(&self.grid, self.degree);
            }
            let mut s = spec.clone();
            s.par_chunks_mut(c).enumerate().for_each(|(pt, chunk)| {
                let k = self.grid.wavevector(pt)[a];
                chunk.iter_mut().for_each(|z| *z *= Complex64::new(0.0, k));
            });
            FormField {
                grid: self.grid.clone(),
                degree: self.degree,
                data: from_spectrum(&self.grid, s, c),
            }
        })
    }

    /// Euclidean coefficient dot product, unweighted.
    pub fn coeff_dot(&self, other: &FormField) -> f64 {
        pairwise_sum(
            &self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        )
    }

    /// Translates by one cell along `axis`.
    pub fn roll(&self, axis: usize) -> FormField {
        let c = self.channels();
        let n = self.grid.dims[axis];
        let stride = self.grid.strides()[axis];
        let mut out = self.clone();
        for pt in 0..self.grid.points() {
            let i = (pt / stride) % n;
            let target = pt - i * stride + ((i + 1) % n) * stride;
            out.data[target * c..(target + 1) * c].copy_from_slice(&self.data[pt * c..(pt + 1) * c]);
        }
        out
    }
}

/// A symmetric 2-tensor at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: Grid,
    values: Vec<SymTensor2>,
}

impl SymTensorField {
    pub fn new(grid: &Grid, values: Vec<SymTensor2>) -> Result<SymTensorField> {
        if values.len() != grid.points() {
            return Err(Error::LengthMismatch {
                expected: grid.points(),
                got: values.len(),
            });
        }
        Ok(SymTensorField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_points(grid: &Grid, f: impl Fn(usize) -> SymTensor2 + Sync + Send) -> SymTensorField {
        SymTensorField {
            grid: grid.clone(),
            values: (0..grid.points()).into_par_iter().map(f).collect(),
        }
    }

    pub fn zeros(grid: &Grid) -> SymTensorField {
        SymTensorField::from_points(grid, |_| SymTensor2::zero())
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, pt: usize) -> &SymTensor2 {
        &self.values[pt]
    }

    pub fn values(&self) -> &[SymTensor2] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(SymTensor2::max_abs).fold(0.0, f64::max)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &SymTensorField) -> Result<SymTensorField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(SymTensorField::from_points(&self.grid, |pt| self.values[pt] + other.values[pt] * a))
    }

    pub fn sub(&self, other: &SymTensorField) -> Result<SymTensorField> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> SymTensorField {
        SymTensorField::from_points(&self.grid, |pt| self.values[pt] * a)
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    let (a, b) = values.split_at(mid);
    if values.len() > 1 << 14 {
        let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        x + y
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// `∫ f·s` over the torus with cell-volume quadrature.
pub fn integrate(f: &FormField, density: &FormField) -> Result<f64> {
    if f.grid != density.grid {
        return Err(Error::GridMismatch);
    }
    if f.degree != 0 || density.degree != 0 {
        return Err(Error::DegreeMismatch {
            left: f.degree.max(density.degree),
            right: 0,
        });
    }
    let products: Vec<f64> = f.data.iter().zip(&density.data).map(|(a, b)| a * b).collect();
    Ok(pairwise_sum(&products) * f.grid.cell_volume())
}

/// A closed positive 3-form field with its pointwise frames.
pub struct G2Field {
    phi: FormField,
    frames: Vec<G2Frame>,
    psi: FormField,
    density: FormField,
    tau: OnceLock<FormField>,
}

impl Clone for G2Field {
    fn clone(&self) -> Self {
        let tau = OnceLock::new();
        if let Some(t) = self.tau.get() {
            let _ = tau.set(t.clone());
        }
        G2Field {
            phi: self.phi.clone(),
            frames: self.frames.clone(),
            psi: self.psi.clone(),
            density: self.density.clone(),
            tau,
        }
    }
}

impl std::fmt::Debug for G2Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "G2Field({:?})", self.phi.grid)
    }
}

impl G2Field {
    /// Builds pointwise frames; fails at the first non-positive point.
    pub fn from_phi(phi: FormField) -> Result<G2Field> {
        if phi.degree != 3 {
            return Err(Error::DegreeMismatch {
                left: phi.degree,
                right: 3,
            });
        }
        let frames: Vec<Result<G2Frame>> = (0..phi.grid.points())
            .into_par_iter()
            .map(|pt| {
                frame_from_phi(&phi.at(pt)).map_err(|_| Error::NonPositiveForm { point: Some(pt) })
            })
            .collect();
        let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
        let grid = phi.grid.clone();
        let psi = FormField::from_points(&grid, 4, |pt| *frames[pt].psi());
        let density = FormField::scalar(&grid, frames.iter().map(G2Frame::vol_density).collect())?;
        Ok(G2Field {
            phi,
            frames,
            psi,
            density,
            tau: OnceLock::new(),
        })
    }

    pub fn flat(grid: &Grid) -> G2Field {
        G2Field::from_phi(FormField::constant(grid, &phi0())).expect("standard form is positive")
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.phi.grid
    }

    #[inline]
    pub fn phi(&self) -> &FormField {
        &self.phi
    }

    #[inline]
    pub fn psi(&self) -> &FormField {
        &self.psi
    }

    #[inline]
    pub fn frame(&self, pt: usize) -> &G2Frame {
        &self.frames[pt]
    }

    /// Volume density `√det g_φ` as a scalar field.
    #[inline]
    pub fn density(&self) -> &FormField {
        &self.density
    }

    /// `τ = δφ = −*dψ`.
    pub fn tau(&self) -> &FormField {
        self.tau.get_or_init(|| {
            let dpsi = self.psi.d_spectral().expect("degree 4");
            self.star(&dpsi).scale(-1.0)
        })
    }

    pub fn star(&self, a: &FormField) -> FormField {
        a.map(DIM - a.degree, |pt, f| hodge_star(f, self.frames[pt].metric()))
    }

    /// Pointwise `g_φ(a, b)` as a scalar field.
    pub fn inner(&self, a: &FormField, b: &FormField) -> FormField {
        let values = (0..self.grid().points())
            .into_par_iter()
            .map(|pt| form_inner(&a.at(pt), &b.at(pt), self.frames[pt].metric()).expect("equal degrees"))
            .collect();
        FormField::scalar(self.grid(), values).expect("grid size")
    }

    /// `∫ f vol_φ`.
    pub fn integrate(&self, f: &FormField) -> f64 {
        integrate(f, &self.density).expect("same grid")
    }

    /// `∫ g_φ(a, b) vol_φ`.
    pub fn l2(&self, a: &FormField, b: &FormField) -> f64 {
        self.integrate(&self.inner(a, b))
    }

    pub fn volume(&self) -> f64 {
        pairwise_sum(self.density.data()) * self.grid().cell_volume()
    }

    /// `max|dφ| / max|φ|`.
    pub fn closedness_residual(&self) -> f64 {
        self.phi.d_spectral().expect("degree 3").max_abs() / self.phi.max_abs().max(1e-300)
    }
}

/// An exact 3-form field `X = dα` carried with its potential.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    alpha: FormField,
    x: FormField,
}

impl TangentVector {
    pub fn from_potential(alpha: FormField) -> Result<TangentVector> {
        if alpha.degree != 2 {
            return Err(Error::DegreeMismatch {
                left: alpha.degree,
                right: 2,
            });
        }
        let x = alpha.d_spectral()?;
        Ok(TangentVector { alpha, x })
    }

    pub fn zero(grid: &Grid) -> TangentVector {
        TangentVector {
            alpha: FormField::zeros(grid, 2),
            x: FormField::zeros(grid, 3),
        }
    }

    #[inline]
    pub fn alpha(&self) -> &FormField {
        &self.alpha
    }

    #[inline]
    pub fn x(&self) -> &FormField {
        &self.x
    }

    pub fn scale(&self, a: f64) -> TangentVector {
        TangentVector {
            alpha: self.alpha.scale(a),
            x: self.x.scale(a),
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &TangentVector) -> Result<TangentVector> {
        Ok(TangentVector {
            alpha: self.alpha.axpy(a, &other.alpha)?,
            x: self.x.axpy(a, &other.x)?,
        })
    }
}

/// `φ = φ₀ + ε·dα`.
pub fn make_closed_g2(grid: &Grid, alpha: &FormField, epsilon: f64) -> Result<G2Field> {
    if alpha.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let x = TangentVector::from_potential(alpha.clone())?;
    let phi = FormField::constant(grid, &phi0()).axpy(epsilon, x.x())?;
    G2Field::from_phi(phi)
}

/// Random band-limited 2-form, scaled so that `max|dα| = 1`.
pub fn random_band_limited_2form(grid: &Grid, seed: u64, band_limit: usize) -> Result<FormField> {
    let capacity = grid.band_capacity();
    if band_limit > capacity {
        return Err(Error::BandLimitTooHigh {
            band: band_limit,
            limit: capacity,
        });
    }
    let c = form_len(2);
    let mut rng = trial_rng(seed, 0);
    let mut spec = vec![Complex64::default(); grid.points() * c];
    for pt in 0..grid.points() {
        let m = grid.mode(pt);
        let inside = m.iter().all(|k| k.unsigned_abs() as usize <= band_limit);
        let nonzero = m.iter().any(|&k| k != 0);
        for slot in 0..c {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            if inside && nonzero {
                spec[pt * c + slot] = Complex64::new(re, im);
            }
        }
    }
    let alpha = FormField::from_data(grid, 2, from_spectrum(grid, spec, c))?;
    let peak = alpha.d_spectral()?.max_abs();
    if peak == 0.0 {
        return Ok(alpha);
    }
    Ok(alpha.scale(1.0 / peak))
}

/// A random exact tangent vector `X = dα` with `max|X| = 1`.
pub fn random_exact_3form(grid: &Grid, seed: u64, band_limit: usize) -> Result<TangentVector> {
    TangentVector::from_potential(random_band_limited_2form(grid, seed, band_limit)?)
}

const MAGIC: &[u8; 4] = b"G2F1";

pub fn save_field(path: impl AsRef<Path>, field: &FormField) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 4 + 28 + 56 + field.data.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(field.degree as u32).to_le_bytes());
    for n in field.grid.dims {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in field.grid.lengths {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for x in &field.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<FormField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(Error::Format("truncated snapshot".into()));
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let degree = u32_at(take(4)?);
    if degree > DIM {
        return Err(Error::Format(format!("degree {degree}")));
    }
    let mut dims = [0usize; DIM];
    for d in &mut dims {
        *d = u32_at(take(4)?);
    }
    let mut lengths = [0.0; DIM];
    for l in &mut lengths {
        *l = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    }
    let grid = Grid::new(dims, lengths).map_err(|e| Error::Format(e.to_string()))?;
    let n = grid.points() * form_len(degree);
    let payload = take(n * 8)?;
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !take(1).is_err() {
        return Err(Error::Format("trailing bytes".into()));
    }
    FormField::from_data(&grid, degree, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid2(n: usize) -> Grid {
        Grid::unit([n, n, 1, 1, 1, 1, 1]).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = Grid::new([4, 3, 1, 1, 1, 1, 2], [1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(g.points(), 24);
        assert!((g.cell_volume() - 0.25 * 2.0 / 3.0 * 1.5).abs() < 1e-15);
        assert_eq!(g.active_axes().collect::<Vec<_>>(), vec![0, 1, 6]);
        assert_eq!(g.multi_index(5), [1, 1, 0, 0, 0, 0, 0]);
        assert!(Grid::unit([0, 1, 1, 1, 1, 1, 1]).is_err());
        assert!(Grid::new([1; 7], [1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid2(8);
        let f = FormField::constant(&g, &phi0());
        assert!(f.d_spectral().unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn derivative_of_sine_mode() {
        let g = Grid::new([16, 1, 1, 1, 1, 1, 1], [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let w = 2.0 * PI / 2.0;
        let f = FormField::from_fn(&g, 1, |x| Form::basis(&[1]) * (w * x[0]).sin());
        let df = f.d_spectral().unwrap();
        let expected = FormField::from_fn(&g, 2, |x| Form::basis(&[0, 1]) * (w * (w * x[0]).cos()));
        assert!(df.sub(&expected).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn d_squared_vanishes() {
        let g = Grid::unit([8, 6, 4, 1, 1, 1, 1]).unwrap();
        let alpha = random_band_limited_2form(&g, 1, 2).unwrap();
        let dd = alpha.d_spectral().unwrap().d_spectral().unwrap();
        assert!(dd.max_abs() < 1e-11);
        let top = random_band_limited_2form(&g, 2, 2).unwrap();
        let six = FormField::from_points(&g, 6, |pt| {
            let mut f = Form::zero(6);
            f.coeffs_mut().copy_from_slice(&top.at(pt).coeffs()[..7]);
            f
        });
        let dsix = six.d_spectral().unwrap();
        let ones = FormField::scalar(&g, vec![1.0; g.points()]).unwrap();
        let top_coeff = FormField::scalar(&g, dsix.data().to_vec()).unwrap();
        assert!(integrate(&top_coeff, &ones).unwrap().abs() < 1e-10);
        assert!(matches!(
            FormField::zeros(&g, 7).d_spectral(),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn d_commutes_with_translation() {
        let g = grid2(8);
        let a = random_band_limited_2form(&g, 3, 3).unwrap();
        for axis in [0, 1, 3] {
            let lhs = a.roll(axis).d_spectral().unwrap();
            let rhs = a.d_spectral().unwrap().roll(axis);
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn integration_examples() {
        let g = Grid::new([4, 4, 1, 1, 1, 1, 1], [2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 0.5]).unwrap();
        let ones = FormField::scalar(&g, vec![1.0; g.points()]).unwrap();
        assert!((integrate(&ones, &ones).unwrap() - 3.0).abs() < 1e-14);
        let sine = FormField::from_fn(&g, 0, |x| Form::scalar((PI * x[0]).sin()));
        assert!(integrate(&sine, &ones).unwrap().abs() < 1e-12);
        let other = Grid::unit([4, 4, 1, 1, 1, 1, 1]).unwrap();
        let wrong = FormField::scalar(&other, vec![1.0; 16]).unwrap();
        assert!(matches!(integrate(&ones, &wrong), Err(Error::GridMismatch)));
    }

    #[test]
    fn pairwise_sum_matches_sequential() {
        let mut rng = trial_rng(9, 0);
        let v: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - seq).abs() <= 1e-13 * v.iter().map(|x| x.abs()).sum::<f64>());
        assert_eq!(pairwise_sum(&v), pairwise_sum(&v));
    }

    #[test]
    fn closed_g2_examples() {
        let g = grid2(8);
        let flat = make_closed_g2(&g, &FormField::zeros(&g, 2), 0.0).unwrap();
        assert!(flat.tau().max_abs() < 1e-14);
        assert!((flat.volume() - 1.0).abs() < 1e-14);
        let alpha = random_band_limited_2form(&g, 4, 2).unwrap();
        let field = make_closed_g2(&g, &alpha, 0.05).unwrap();
        assert!(field.closedness_residual() < 1e-10);
        assert!(field.tau().max_abs() > 1e-4);
        let pt = 11;
        let fr = frame_from_phi(&field.phi().at(pt)).unwrap();
        assert!((fr.metric().g() - field.frame(pt).metric().g()).amax() < 1e-12);
        assert!(matches!(
            make_closed_g2(&g, &alpha, 1e3),
            Err(Error::NonPositiveForm { point: Some(_) })
        ));
    }

    #[test]
    fn torsion_is_type_14() {
        let g = grid2(32);
        let alpha = random_band_limited_2form(&g, 5, 2).unwrap();
        let field = make_closed_g2(&g, &alpha, 0.05).unwrap();
        let tau = field.tau();
        let mut worst = 0.0f64;
        for pt in 0..g.points() {
            let fr = field.frame(pt);
            let p7 = crate::g2point::project2(&tau.at(pt), fr).p7;
            worst = worst.max(p7.max_abs());
        }
        // Aliasing in the pointwise nonlinearity limits this to spectral accuracy.
        assert!(worst < 1e-6 * tau.max_abs(), "{worst}");
    }

    #[test]
    fn random_tangents_are_reproducible() {
        let g = grid2(8);
        let a = random_exact_3form(&g, 7, 2).unwrap();
        let b = random_exact_3form(&g, 7, 2).unwrap();
        let c = random_exact_3form(&g, 8, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.x().sub(c.x()).unwrap().max_abs() > 1e-3);
        assert!((a.x().max_abs() - 1.0).abs() < 1e-12);
        assert!(a.x().d_spectral().unwrap().max_abs() < 1e-11);
        assert!(matches!(
            random_exact_3form(&g, 7, 5),
            Err(Error::BandLimitTooHigh { band: 5, limit: 4 })
        ));
    }

    #[test]
    fn snapshot_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new([4, 2, 1, 1, 1, 1, 3], [1.0, 2.0, 1.0, 1.0, 1.0, 1.5, 1.0]).unwrap();
        let f = random_band_limited_2form(&g, 1, 1).unwrap();
        let path = dir.path().join("a.g2f");
        save_field(&path, &f).unwrap();
        let back = load_field(&path).unwrap();
        assert_eq!(back, f);
        let bytes = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("b.g2f");
        save_field(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), bytes);

        std::fs::write(&path2, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_field(&path2), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path2, &bad).unwrap();
        assert!(matches!(load_field(&path2), Err(Error::Format(_))));
        assert!(matches!(load_field(dir.path().join("missing")), Err(Error::Io(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn d_is_linear_and_nilpotent(seed in any::<u64>(), a in -2.0f64..2.0) {
            let g = grid2(6);
            let x = random_band_limited_2form(&g, seed, 2).unwrap();
            let y = random_band_limited_2form(&g, seed ^ 1, 3).unwrap();
            let lhs = x.axpy(a, &y).unwrap().d_spectral().unwrap();
            let rhs = x.d_spectral().unwrap().axpy(a, &y.d_spectral().unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
            prop_assert!(lhs.d_spectral().unwrap().max_abs() < 1e-11);
        }
    }
}
