//! Metrics on the tangent space of closed structures, the connection
//! candidates built from them, their torsion and contorsion, and
//! finite-difference compatibility checks.

use crate::error::{Error, Result};
use crate::hodge_green::{codiff, flat_project_exact, green_exact, project_exact, SolverConfig};
use crate::report::Report;
use crate::torus_field::{FormField, G2Field};
use crate::variations::{op_i_field, op_j_field, var_star, VariationInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// `∫ g(δu, δv) vol`.
    Dirichlet,
    /// `∫ g(X, Y) vol`.
    Laplacian,
    /// `∫ g(u, v) vol`.
    L2,
}

impl MetricKind {
    pub fn label(&self) -> &'static str {
        match self {
            MetricKind::Dirichlet => "GD",
            MetricKind::Laplacian => "GL",
            MetricKind::L2 => "GM",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConnectionKind {
    PA,
    PB,
    PC,
    /// `a D^{PA} + b D^{PB} + c D^{PC}`.
    Combo(f64, f64, f64),
    DD,
    DL,
    DM,
}

impl ConnectionKind {
    pub fn label(&self) -> String {
        match self {
            ConnectionKind::PA => "PA".into(),
            ConnectionKind::PB => "PB".into(),
            ConnectionKind::PC => "PC".into(),
            ConnectionKind::Combo(a, b, c) => format!("Combo({a};{b};{c})"),
            ConnectionKind::DD => "DD".into(),
            ConnectionKind::DL => "DL".into(),
            ConnectionKind::DM => "DM".into(),
        }
    }

    /// The metric this connection is built to be compatible with.
    pub fn matched_metric(&self) -> MetricKind {
        match self {
            ConnectionKind::DL => MetricKind::Laplacian,
            ConnectionKind::DM => MetricKind::L2,
            _ => MetricKind::Dirichlet,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, ConnectionKind::DD | ConnectionKind::DL | ConnectionKind::DM)
    }

    /// Coefficient of `Y_t` in `D_t Y`.
    pub fn velocity_weight(&self) -> f64 {
        match self {
            ConnectionKind::Combo(a, b, c) => a + b + c,
            _ => 1.0,
        }
    }
}

/// How many Green solves a [`Potentials`] carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PotentialDepth {
    /// `X` only.
    None,
    /// `u = GX` and `δu`.
    Green,
    /// Also `Gu` and `δGu`.
    Biharmonic,
}

impl PotentialDepth {
    pub fn for_connection(kind: ConnectionKind) -> PotentialDepth {
        match kind {
            ConnectionKind::DL => PotentialDepth::None,
            ConnectionKind::DM => PotentialDepth::Biharmonic,
            _ => PotentialDepth::Green,
        }
    }

    pub fn for_metric(kind: MetricKind) -> PotentialDepth {
        match kind {
            MetricKind::Laplacian => PotentialDepth::None,
            _ => PotentialDepth::Green,
        }
    }
}

/// A tangent vector with its potentials: `u = GX`, `δu`, and for the
/// `L²` metric `Gu` and `δGu`.
#[derive(Clone, Debug)]
pub struct Potentials {
    pub x: FormField,
    green: Option<(FormField, FormField)>,
    biharmonic: Option<(FormField, FormField)>,
}

impl Potentials {
    pub fn depth(&self) -> PotentialDepth {
        match (&self.green, &self.biharmonic) {
            (_, Some(_)) => PotentialDepth::Biharmonic,
            (Some(_), None) => PotentialDepth::Green,
            _ => PotentialDepth::None,
        }
    }

    pub fn u(&self) -> &FormField {
        &self.green.as_ref().expect("potentials computed at Green depth").0
    }

    pub fn delta_u(&self) -> &FormField {
        &self.green.as_ref().expect("potentials computed at Green depth").1
    }

    pub fn gu(&self) -> &FormField {
        &self.biharmonic.as_ref().expect("potentials computed at biharmonic depth").0
    }

    pub fn delta_gu(&self) -> &FormField {
        &self.biharmonic.as_ref().expect("potentials computed at biharmonic depth").1
    }
}

/// `(1+p)/3 g(α,β) φ − (1/(p−1)!) i_φ j_α β`, the form `R` with
/// `∫ g(**_Z α, β) = ∫ g(Z, R)` for every `Z`.
fn star_variation_dual(alpha: &FormField, beta: &FormField, phi: &G2Field) -> Result<FormField> {
    let p = alpha.degree();
    let fact: f64 = (1..p).map(|k| k as f64).product();
    let g = phi.inner(alpha, beta);
    let j = op_j_field(alpha, beta, phi);
    phi.phi()
        .mul_scalar(&g)?
        .scale((1 + p) as f64 / 3.0)
        .axpy(-1.0 / fact, &op_i_field(&j, phi.phi(), phi))
}

/// Connection and metric evaluator at a fixed structure.
pub struct ConnectionLab<'a> {
    phi: &'a G2Field,
    cfg: SolverConfig,
}

impl<'a> ConnectionLab<'a> {
    pub fn new(phi: &'a G2Field, cfg: SolverConfig) -> Result<ConnectionLab<'a>> {
        cfg.validate()?;
        Ok(ConnectionLab { phi, cfg })
    }

    pub fn phi(&self) -> &G2Field {
        self.phi
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn potentials(&self, x: &FormField) -> Result<Potentials> {
        self.potentials_to(x, PotentialDepth::Biharmonic, None)
    }

    /// Potentials up to `depth`, warm-starting the solves from `hint`.
    pub fn potentials_to(&self, x: &FormField, depth: PotentialDepth, hint: Option<&Potentials>) -> Result<Potentials> {
        if x.grid() != self.phi.grid() {
            return Err(Error::GridMismatch);
        }
        let mut out = Potentials {
            x: x.clone(),
            green: None,
            biharmonic: None,
        };
        if depth >= PotentialDepth::Green {
            let start = hint.and_then(|h| h.green.as_ref()).map(|g| &g.0);
            let u = green_exact(x, self.phi, &self.cfg, start)?.u;
            let delta_u = codiff(&u, self.phi)?;
            out.green = Some((u, delta_u));
        }
        if depth >= PotentialDepth::Biharmonic {
            let start = hint.and_then(|h| h.biharmonic.as_ref()).map(|g| &g.0);
            let gu = green_exact(out.u(), self.phi, &self.cfg, start)?.u;
            let delta_gu = codiff(&gu, self.phi)?;
            out.biharmonic = Some((gu, delta_gu));
        }
        Ok(out)
    }

    pub fn metric(&self, kind: MetricKind, x: &Potentials, y: &Potentials) -> f64 {
        match kind {
            MetricKind::Dirichlet => self.phi.l2(&x.delta_u(), &y.delta_u()),
            MetricKind::Laplacian => self.phi.l2(&x.x, &y.x),
            MetricKind::L2 => self.phi.l2(&x.u(), &y.u()),
        }
    }

    /// `𝓖(X, Y)` from bare tangent vectors.
    pub fn metric_eval(&self, kind: MetricKind, x: &FormField, y: &FormField) -> Result<f64> {
        if kind == MetricKind::Laplacian {
            return Ok(self.phi.l2(x, y));
        }
        let depth = PotentialDepth::for_metric(kind);
        Ok(self.metric(kind, &self.potentials_to(x, depth, None)?, &self.potentials_to(y, depth, None)?))
    }

    /// `∫ g(GX, Y) vol`, the second expression for the Dirichlet metric.
    pub fn dirichlet_via_green(&self, x: &Potentials, y: &Potentials) -> f64 {
        self.phi.l2(&x.u(), &y.x)
    }

    fn dd(&self, f: &FormField) -> Result<FormField> {
        codiff(f, self.phi)?.d_spectral()
    }

    fn pi_d(&self, f: &FormField) -> Result<FormField> {
        project_exact(f, self.phi, &self.cfg)
    }

    fn p_a(&self, vx: &VariationInput, y: &Potentials) -> Result<FormField> {
        Ok(var_star(vx, &y.delta_u())?.d_spectral()?.scale(0.5))
    }

    fn p_b(&self, vx: &VariationInput, y: &Potentials) -> Result<FormField> {
        let a = self.p_a(vx, y)?;
        let first = self.pi_d(&var_star(vx, &y.x)?)?;
        let second = self.dd(&var_star(vx, &y.u())?)?;
        a.axpy(0.5, &first.sub(&second)?)
    }

    fn p_c(&self, vx: &VariationInput, y: &Potentials) -> Result<FormField> {
        let a = self.p_a(vx, y)?;
        let first = self.pi_d(&var_star(vx, &y.x)?)?;
        let second = self.dd(&y.u().mul_scalar(&vx.f0)?)?.scale(28.0);
        let third = self.pi_d(&op_i_field(vx.j_x(), &y.x, self.phi))?.scale(0.5);
        a.axpy(0.5, &first.sub(&second)?.add(&third)?)
    }

    /// `¼d[2g(φ,X)δv + 2g(φ,Y)δu − i_{δv}j_φX − i_{δu}j_φY]
    ///  − ½dδ[g(δu,δv)φ − i_φ j_{δu}δv]`.
    fn p_d(&self, vx: &VariationInput, vy: &VariationInput, x: &Potentials, y: &Potentials) -> Result<FormField> {
        let phi = self.phi;
        let inner = y
            .delta_u()
            .mul_scalar(&vx.g_phi_x())?
            .scale(2.0)
            .axpy(2.0, &x.delta_u().mul_scalar(&vy.g_phi_x())?)?
            .sub(&op_i_field(vx.j_x(), &y.delta_u(), phi))?
            .sub(&op_i_field(vy.j_x(), &x.delta_u(), phi))?;
        let g = phi.inner(&x.delta_u(), &y.delta_u());
        let j = op_j_field(&x.delta_u(), &y.delta_u(), phi);
        let scalar_part = phi.phi().mul_scalar(&g)?.sub(&op_i_field(&j, phi.phi(), phi))?;
        inner.d_spectral()?.scale(0.25).axpy(-0.5, &self.dd(&scalar_part)?)
    }

    /// `⅔π_d[g(X,φ)Y + g(φ,Y)X − g(X,Y)φ] − ¼π_d[i_Y j_φX + i_X j_φY − i_φ j_X Y]`.
    fn p_l(&self, vx: &VariationInput, vy: &VariationInput, x: &Potentials, y: &Potentials) -> Result<FormField> {
        let phi = self.phi;
        let gxy = phi.inner(&x.x, &y.x);
        let first = y
            .x
            .mul_scalar(&vx.g_phi_x())?
            .add(&x.x.mul_scalar(&vy.g_phi_x())?)?
            .sub(&phi.phi().mul_scalar(&gxy)?)?;
        let jxy = op_j_field(&x.x, &y.x, phi);
        let second = op_i_field(vx.j_x(), &y.x, phi)
            .add(&op_i_field(vy.j_x(), &x.x, phi))?
            .sub(&op_i_field(&jxy, phi.phi(), phi))?;
        self.pi_d(&first.scale(2.0 / 3.0).axpy(-0.25, &second)?)
    }

    /// `d **_X δv + dδd **_X δGv − dδ **_X v`.
    fn l2_half(&self, vx: &VariationInput, y: &Potentials) -> Result<FormField> {
        let a = var_star(vx, &y.delta_u())?.d_spectral()?;
        let b = self.dd(&var_star(vx, &y.delta_gu())?.d_spectral()?)?;
        let c = self.dd(&var_star(vx, &y.u())?)?;
        a.add(&b)?.sub(&c)
    }

    /// Levi-Civita operator of the `L²` metric from the Koszul formula.
    fn p_m(&self, vx: &VariationInput, vy: &VariationInput, x: &Potentials, y: &Potentials) -> Result<FormField> {
        let phi = self.phi;
        let sym = self.l2_half(vx, y)?.add(&self.l2_half(vy, x)?)?;
        let dual = star_variation_dual(&x.u(), &y.u(), phi)?
            .sub(&star_variation_dual(&x.delta_u(), &y.delta_gu(), phi)?)?
            .sub(&star_variation_dual(&y.delta_u(), &x.delta_gu(), phi)?)?;
        let dual = self.dd(&self.dd(&dual)?)?;
        Ok(sym.add(&dual)?.scale(0.5))
    }

    /// `P(φ, X, Y)`.
    pub fn p_operator(&self, kind: ConnectionKind, x: &Potentials, y: &Potentials) -> Result<FormField> {
        let vx = VariationInput::from_form(self.phi, x.x.clone())?;
        match kind {
            ConnectionKind::PA => self.p_a(&vx, y),
            ConnectionKind::PB => self.p_b(&vx, y),
            ConnectionKind::PC => self.p_c(&vx, y),
            ConnectionKind::Combo(a, b, c) => {
                let pa = self.p_a(&vx, y)?;
                let pb = self.p_b(&vx, y)?;
                let pc = self.p_c(&vx, y)?;
                pa.scale(a).axpy(b, &pb)?.axpy(c, &pc)
            }
            ConnectionKind::DD | ConnectionKind::DL | ConnectionKind::DM => {
                let vy = VariationInput::from_form(self.phi, y.x.clone())?;
                match kind {
                    ConnectionKind::DD => self.p_d(&vx, &vy, x, y),
                    ConnectionKind::DL => self.p_l(&vx, &vy, x, y),
                    _ => self.p_m(&vx, &vy, x, y),
                }
            }
        }
    }

    /// `T(X, Y) = P(φ,X,Y) − P(φ,Y,X)`.
    pub fn torsion(&self, kind: ConnectionKind, x: &Potentials, y: &Potentials) -> Result<FormField> {
        self.p_operator(kind, x, y)?.sub(&self.p_operator(kind, y, x)?)
    }

    /// `𝓖^D⟨T^{PA}(X,Y), Z⟩` from its integral expression.
    pub fn torsion_pa_pairing(&self, x: &Potentials, y: &Potentials, z: &Potentials) -> Result<f64> {
        let phi = self.phi;
        let vx = VariationInput::from_form(phi, x.x.clone())?;
        let vy = VariationInput::from_form(phi, y.x.clone())?;
        let dw = &z.delta_u();
        let a = phi.inner(&y.delta_u(), dw).mul_scalar(&vx.g_phi_x())?;
        let b = phi.inner(&x.delta_u(), dw).mul_scalar(&vy.g_phi_x())?;
        let c = phi.inner(&op_i_field(vx.j_x(), &y.delta_u(), phi), dw);
        let e = phi.inner(&op_i_field(vy.j_x(), &x.delta_u(), phi), dw);
        let ones = FormField::scalar(phi.grid(), vec![1.0; phi.grid().points()])?;
        let integrand = a.sub(&b)?.scale(0.5).axpy(-0.25, &c.sub(&e)?)?;
        Ok(phi.l2(&integrand, &ones))
    }

    /// `S(Y,Z) = ¼d[i_{δw}j_φY − 2g(Y,φ)δw] + ½dδ[g(δv,δw)φ − i_φ j_{δv}δw]`.
    pub fn s_tensor(&self, y: &Potentials, z: &Potentials) -> Result<FormField> {
        let phi = self.phi;
        let vy = VariationInput::from_form(phi, y.x.clone())?;
        let dw = &z.delta_u();
        let first = op_i_field(vy.j_x(), dw, phi)
            .axpy(-2.0, &dw.mul_scalar(&vy.g_phi_x())?)?
            .d_spectral()?;
        let g = phi.inner(&y.delta_u(), dw);
        let j = op_j_field(&y.delta_u(), dw, phi);
        let second = self.dd(&phi.phi().mul_scalar(&g)?.sub(&op_i_field(&j, phi.phi(), phi))?)?;
        first.scale(0.25).axpy(0.5, &second)
    }

    /// `K(X,Y) = ½[T^{PA}(X,Y) + S(X,Y) + S(Y,X)]`.
    pub fn contorsion(&self, x: &Potentials, y: &Potentials) -> Result<FormField> {
        let t = self.torsion(ConnectionKind::PA, x, y)?;
        t.add(&self.s_tensor(x, y)?)?.add(&self.s_tensor(y, x)?).map(|f| f.scale(0.5))
    }
}

/// `(−f(2h) + 8f(h) − 8f(−h) + f(−2h)) / 12h` on flat vectors.
pub fn five_point_derivative(samples: [&[f64]; 4], h: f64) -> Vec<f64> {
    let [m2, m1, p1, p2] = samples;
    (0..m2.len())
        .map(|k| (-p2[k] + 8.0 * p1[k] - 8.0 * m1[k] + m2[k]) / (12.0 * h))
        .collect()
}

/// A sampled path `t ↦ (φ(t), Y(t))`.
pub type FieldPath<'p> = dyn Fn(f64) -> Result<(FormField, FormField)> + 'p;

/// `D_t Y = w·Y_t + P(φ(t₀), φ_t(t₀), Y(t₀))` with `φ_t`, `Y_t` by
/// five-point differences.
pub fn covariant_derivative(
    kind: ConnectionKind,
    path: &FieldPath,
    t0: f64,
    h: f64,
    cfg: &SolverConfig,
) -> Result<FormField> {
    let samples: Vec<(FormField, FormField)> = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| path(t0 + k * h))
        .collect::<Result<_>>()?;
    let phi_t = five_point_derivative(
        [samples[0].0.data(), samples[1].0.data(), samples[2].0.data(), samples[3].0.data()],
        h,
    );
    let y_t = five_point_derivative(
        [samples[0].1.data(), samples[1].1.data(), samples[2].1.data(), samples[3].1.data()],
        h,
    );
    let (phi_form, y) = path(t0)?;
    let phi = G2Field::from_phi(phi_form)?;
    let grid = phi.grid().clone();
    // Differences of exact paths are exact up to roundoff.
    let phi_t = flat_project_exact(&FormField::from_data(&grid, 3, phi_t)?);
    let y_t = flat_project_exact(&FormField::from_data(&grid, 3, y_t)?);
    let lab = ConnectionLab::new(&phi, cfg.clone())?;
    let px = lab.potentials(&phi_t)?;
    let py = lab.potentials(&y)?;
    lab.p_operator(kind, &px, &py)?
        .axpy(kind.velocity_weight(), &y_t)
}

/// One row of a compatibility table.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatibilityRow {
    pub connection: String,
    pub metric: &'static str,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

pub fn compatibility_to_csv(rows: &[CompatibilityRow]) -> String {
    let mut s = String::from("connection,metric,h,lhs,rhs,rel_err\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:e},{:.12e},{:.12e},{:.6e}\n",
            r.connection, r.metric, r.h, r.lhs, r.rhs, r.rel_err
        ));
    }
    s
}

/// Directions for a compatibility check along `φ + tX` with
/// `Y(t) = Y₀ + tY₁` and `Z(t) = Z₀ + tZ₁`.
#[derive(Clone, Debug)]
pub struct CompatibilityPath {
    pub x: FormField,
    pub y0: FormField,
    pub y1: FormField,
    pub z0: FormField,
    pub z1: FormField,
}

/// `d/dt 𝓖(Y,Z)` by five-point differences against
/// `𝓖(D_tY, Z) + 𝓖(Y, D_tZ)`.
pub fn compatibility_check(
    conn: ConnectionKind,
    metric: MetricKind,
    phi: &G2Field,
    path: &CompatibilityPath,
    h: f64,
    cfg: &SolverConfig,
) -> Result<CompatibilityRow> {
    let value = |t: f64| -> Result<f64> {
        let phi_t = G2Field::from_phi(phi.phi().axpy(t, &path.x)?).map_err(|e| match e {
            Error::NonPositiveForm { .. } => Error::PositivityLost { halvings: 0 },
            other => other,
        })?;
        let lab = ConnectionLab::new(&phi_t, cfg.clone())?;
        lab.metric_eval(metric, &path.y0.axpy(t, &path.y1)?, &path.z0.axpy(t, &path.z1)?)
    };
    let samples = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| value(k * h).map(|v| vec![v]))
        .collect::<Result<Vec<_>>>()?;
    let lhs = five_point_derivative([&samples[0], &samples[1], &samples[2], &samples[3]], h)[0];

    let lab = ConnectionLab::new(phi, cfg.clone())?;
    let px = lab.potentials(&path.x)?;
    let py = lab.potentials(&path.y0)?;
    let pz = lab.potentials(&path.z0)?;
    let w = conn.velocity_weight();
    let dy = lab.p_operator(conn, &px, &py)?.axpy(w, &path.y1)?;
    let dz = lab.p_operator(conn, &px, &pz)?.axpy(w, &path.z1)?;
    let rhs = lab.metric_eval(metric, &dy, &path.z0)? + lab.metric_eval(metric, &path.y0, &dz)?;
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(CompatibilityRow {
        connection: conn.label(),
        metric: metric.label(),
        h,
        lhs,
        rhs,
        rel_err: (lhs - rhs).abs() / scale,
    })
}

/// Relative size `‖a‖∞ / ‖scale‖∞`.
fn rel(a: &FormField, scale: f64) -> f64 {
    a.max_abs() / scale.max(f64::MIN_POSITIVE)
}

/// Torsion, contorsion and `S`-transfer identities on one triple.
pub fn torsion_contorsion_suite(lab: &ConnectionLab, x: &FormField, y: &FormField, z: &FormField) -> Result<Report> {
    let mut report = Report::new("torsion and contorsion");
    let px = lab.potentials(x)?;
    let py = lab.potentials(y)?;
    let pz = lab.potentials(z)?;
    let gd = |a: &FormField, b: &Potentials| -> Result<f64> {
        let pa = lab.potentials(a)?;
        Ok(lab.metric(MetricKind::Dirichlet, &pa, b))
    };

    let two = lab.metric(MetricKind::Dirichlet, &px, &py);
    let via_green = lab.dirichlet_via_green(&px, &py);
    report.record("dirichlet_two_formulas", (two - via_green).abs() / two.abs(), 1e-8);

    for kind in [ConnectionKind::DD, ConnectionKind::DL, ConnectionKind::DM] {
        let p = lab.p_operator(kind, &px, &py)?;
        let t = lab.torsion(kind, &px, &py)?;
        report.record(&format!("torsion_{}", kind.label()), rel(&t, p.max_abs()), 1e-9);
    }

    let t_xy = lab.torsion(ConnectionKind::PA, &px, &py)?;
    let scale = t_xy.max_abs();
    let t_yx = lab.torsion(ConnectionKind::PA, &py, &px)?;
    report.record("torsion_pa_antisymmetric", rel(&t_xy.add(&t_yx)?, scale), 1e-9);
    let lhs = gd(&t_xy, &pz)?;
    let rhs = lab.torsion_pa_pairing(&px, &py, &pz)?;
    report.record("torsion_pa_pairing", (lhs - rhs).abs() / lhs.abs().max(rhs.abs()), 1e-7);

    let s_yz = lab.s_tensor(&py, &pz)?;
    let rhs = gd(&s_yz, &px)?;
    report.record("s_transfer", (lhs - rhs).abs() / lhs.abs().max(rhs.abs()), 1e-7);

    let k_xy = lab.contorsion(&px, &py)?;
    let k_yx = lab.contorsion(&py, &px)?;
    report.record("contorsion_skew_part", rel(&k_xy.sub(&k_yx)?.sub(&t_xy)?, scale), 1e-7);

    let t_yz = lab.torsion(ConnectionKind::PA, &py, &pz)?;
    let t_zx = lab.torsion(ConnectionKind::PA, &pz, &px)?;
    let lhs = 2.0 * gd(&k_xy, &pz)?;
    let rhs = gd(&t_xy, &pz)? - gd(&t_yz, &px)? + gd(&t_zx, &py)?;
    let scale = lhs.abs().max(rhs.abs()).max(gd(&t_xy, &pz)?.abs());
    report.record("contorsion_pairing", (lhs - rhs).abs() / scale, 1e-7);

    let pa = lab.p_operator(ConnectionKind::PA, &px, &py)?;
    let pd = lab.p_operator(ConnectionKind::DD, &px, &py)?;
    report.record("pd_equals_pa_minus_k", rel(&pa.sub(&k_xy)?.sub(&pd)?, pd.max_abs()), 1e-9);

    for kind in [
        ConnectionKind::PA,
        ConnectionKind::PB,
        ConnectionKind::PC,
        ConnectionKind::DD,
        ConnectionKind::DL,
        ConnectionKind::DM,
    ] {
        let p = lab.p_operator(kind, &px, &py)?;
        report.record(&format!("exact_{}", kind.label()), rel(&p.d_spectral()?, p.max_abs().max(1.0)), 1e-10);
    }
    Ok(report)
}

/// The matched pairs plus two negative controls; returns the rows and
/// a report over the matched pairs only.
pub fn compatibility_suite(
    phi: &G2Field,
    path: &CompatibilityPath,
    h: f64,
    cfg: &SolverConfig,
) -> Result<(Report, Vec<CompatibilityRow>)> {
    let matched = [
        ConnectionKind::PA,
        ConnectionKind::PB,
        ConnectionKind::PC,
        ConnectionKind::Combo(0.5, 0.3, 0.2),
        ConnectionKind::DD,
        ConnectionKind::DL,
        ConnectionKind::DM,
    ];
    let mut report = Report::new("connection compatibility");
    let mut rows = Vec::new();
    for conn in matched {
        let row = compatibility_check(conn, conn.matched_metric(), phi, path, h, cfg)?;
        report.record(&format!("{}_{}", row.connection, row.metric), row.rel_err, 1e-5);
        rows.push(row);
    }
    for (conn, metric) in [
        (ConnectionKind::Combo(0.5, 0.3, 0.4), MetricKind::Dirichlet),
        (ConnectionKind::PA, MetricKind::Laplacian),
    ] {
        rows.push(compatibility_check(conn, metric, phi, path, h, cfg)?);
    }
    Ok((report, rows))
}
