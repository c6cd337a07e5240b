//! Volume and energy functionals, their gradients, RK4 gradient flows
//! with positivity backtracking, the Dirichlet split step and geodesic
//! integration.

use crate::connection_lab::{ConnectionKind, ConnectionLab, MetricKind, PotentialDepth, Potentials};
use crate::error::{Error, Result};
use crate::exterior7::Form;
use crate::g2point::project3;
use crate::hodge_green::{codiff, d_green_coexact, green_exact, hodge_laplacian, SolveStats, SolverConfig};
use crate::torus_field::{FormField, G2Field, Grid};
use crate::variations::{op_i_field, op_j_field, var_torsion, VariationInput};

/// `∫ vol_φ`.
pub fn volume(phi: &G2Field) -> f64 {
    phi.volume()
}

/// `(1/7) ∫ φ∧ψ`.
pub fn volume_wedge(phi: &G2Field) -> f64 {
    integrate_top(&phi.phi().wedge(phi.psi()).expect("3 + 4 = 7")) / 7.0
}

fn integrate_top(top: &FormField) -> f64 {
    top.data().iter().sum::<f64>() * top.grid().cell_volume()
}

/// `d Vol(X) = ⅓ ∫ g(X, φ) vol`.
pub fn vol_first_variation(phi: &G2Field, x: &FormField) -> f64 {
    phi.l2(x, phi.phi()) / 3.0
}

/// The five expressions of `d Vol(X)`: `⅓∫g(X,φ)vol`, `⅓∫X∧ψ`,
/// `⅓𝓖^D(X,Δφ)`, `⅓∫g(X,π_dφ)vol`, `⅓𝓖^M(X,Δ²φ)`.
pub fn volume_gradient_forms(phi: &G2Field, x: &FormField, cfg: &SolverConfig) -> Result<[f64; 5]> {
    let lab = ConnectionLab::new(phi, cfg.clone())?;
    let lap = hodge_laplacian(phi.phi(), phi)?;
    let bilap = hodge_laplacian(&lap, phi)?;
    let px = lab.potentials(x)?;
    let plap = lab.potentials_to(&lap, PotentialDepth::Green, None)?;
    let pbilap = lab.potentials(&bilap)?;
    let pi_d = pi_d_with_stats(phi.phi(), phi, cfg)?.0;
    Ok([
        vol_first_variation(phi, x),
        integrate_top(&x.wedge(phi.psi())?) / 3.0,
        lab.metric(MetricKind::Dirichlet, &px, &plap) / 3.0,
        phi.l2(x, &pi_d) / 3.0,
        lab.metric(MetricKind::L2, &px, &pbilap) / 3.0,
    ])
}

fn pi_d_with_stats(beta: &FormField, phi: &G2Field, cfg: &SolverConfig) -> Result<(FormField, SolveStats)> {
    let rhs = codiff(beta, phi)?.d_spectral()?;
    let sol = green_exact(&rhs, phi, cfg, None)?;
    Ok((sol.u, sol.stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnergyKind {
    /// `∫ |π_dφ|²`.
    L,
    /// `∫ |τ|²`.
    D,
    /// `∫ |dτ|²`.
    M,
}

impl EnergyKind {
    pub fn label(&self) -> &'static str {
        match self {
            EnergyKind::L => "EL",
            EnergyKind::D => "ED",
            EnergyKind::M => "EM",
        }
    }
}

pub fn energy(kind: EnergyKind, phi: &G2Field, cfg: &SolverConfig) -> Result<f64> {
    Ok(match kind {
        EnergyKind::L => {
            let a = pi_d_with_stats(phi.phi(), phi, cfg)?.0;
            phi.l2(&a, &a)
        }
        EnergyKind::D => phi.l2(phi.tau(), phi.tau()),
        EnergyKind::M => {
            let dtau = phi.tau().d_spectral()?;
            phi.l2(&dtau, &dtau)
        }
    })
}

/// `F` with `d𝓔(X) = ∫ g(X, F) vol` for exact `X`; not projected.
pub fn energy_gradient(kind: EnergyKind, phi: &G2Field, cfg: &SolverConfig) -> Result<FormField> {
    let p = phi.phi();
    let tau = phi.tau();
    match kind {
        EnergyKind::L => {
            let a = pi_d_with_stats(p, phi, cfg)?.0;
            let a_sq = phi.inner(&a, &a);
            let typed = FormField::from_points(phi.grid(), 3, |pt| {
                let parts = project3(&a.at(pt), phi.frame(pt));
                let mut out = Form::zero(3);
                for k in 0..35 {
                    out.coeffs_mut()[k] = 8.0 / 3.0 * parts.p1.coeffs()[k] + 2.0 * parts.p7.coeffs()[k]
                        - 2.0 * parts.p27.coeffs()[k];
                }
                out
            });
            let j = op_j_field(&a, &a, phi);
            p.mul_scalar(&a_sq)?
                .scale(-4.0 / 3.0)
                .axpy(0.5, &op_i_field(&j, p, phi))?
                .add(&typed)
        }
        EnergyKind::D => {
            let lap = tau.d_spectral()?;
            let tau_sq = phi.inner(tau, tau);
            let j = op_j_field(tau, tau, phi);
            lap.scale(-2.0)
                .axpy(-1.0 / 3.0, &p.mul_scalar(&tau_sq)?)?
                .add(&op_i_field(&j, p, phi))
        }
        EnergyKind::M => {
            let dtau = tau.d_spectral()?;
            let ddt = codiff(&dtau, phi)?;
            let dddt = ddt.d_spectral()?;
            let c1 = phi.inner(tau, &ddt);
            let c2 = phi.inner(p, &dddt);
            let c3 = phi.inner(&dtau, &dtau);
            let j1 = op_j_field(tau, &ddt, phi);
            let j2 = op_j_field(&dtau, &dtau, phi);
            // The printed *[*(dδdτ∧φ)∧φ] is −4π₇ in this orientation; the
            // variation needs +4π₇.
            let seven = FormField::from_points(phi.grid(), 3, |pt| project3(&dddt.at(pt), phi.frame(pt)).p7)
                .scale(4.0);
            p.mul_scalar(&c1)?
                .scale(-2.0)
                .axpy(2.0 / 3.0, &p.mul_scalar(&c2)?)?
                .axpy(2.0, &op_i_field(&j1, p, phi))?
                .axpy(-2.0, &dddt)?
                .add(&seven)?
                .axpy(4.0 / 3.0, &p.mul_scalar(&c3)?)?
                .axpy(-0.5, &op_i_field(&j2, p, phi))
        }
    }
}

/// Gradient flows of the decreasing-flow table and the volume flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowKind {
    /// `φ_t = Δφ`.
    Laplacian,
    /// `φ_t = π_dφ`.
    PiD,
    /// `φ_t = Δ²φ`.
    BiLaplacian,
    /// `φ_t = −π_d F^D`.
    Dirichlet,
    /// `φ_t = −A π_d F^a` with `A = 1, Δ, Δ²` for the metric.
    Table(EnergyKind, MetricKind),
}

impl FlowKind {
    pub fn label(&self) -> String {
        match self {
            FlowKind::Laplacian => "laplacian".into(),
            FlowKind::PiD => "pid".into(),
            FlowKind::BiLaplacian => "bilaplacian".into(),
            FlowKind::Dirichlet => "dirichlet".into(),
            FlowKind::Table(e, m) => format!("{}-{}", e.label(), m.label()),
        }
    }

    /// The functional this flow is monotone for: volume grows or the
    /// energy decreases.
    pub fn monotone_energy(&self) -> Option<EnergyKind> {
        match self {
            FlowKind::Dirichlet => Some(EnergyKind::D),
            FlowKind::Table(e, _) => Some(*e),
            _ => None,
        }
    }

    /// Differential order of the right-hand side.
    pub fn derivative_order(&self) -> i32 {
        match self {
            FlowKind::Laplacian | FlowKind::Dirichlet => 2,
            FlowKind::PiD => 0,
            FlowKind::BiLaplacian => 4,
            FlowKind::Table(e, m) => {
                let energy = match e {
                    EnergyKind::L => 0,
                    EnergyKind::D => 2,
                    EnergyKind::M => 4,
                };
                let metric = match m {
                    MetricKind::Laplacian => 0,
                    MetricKind::Dirichlet => 2,
                    MetricKind::L2 => 4,
                };
                energy + metric
            }
        }
    }

    /// Largest explicit RK4 step that is linearly stable for this flow on
    /// `grid`, from the Nyquist wavenumber. Nonlinear terms shrink it further.
    pub fn stable_dt(&self, grid: &Grid) -> f64 {
        let k2: f64 = grid
            .active_axes()
            .map(|a| {
                let k = std::f64::consts::PI * grid.dims()[a] as f64 / grid.lengths()[a];
                k * k
            })
            .sum();
        2.5 / k2.max(1.0).sqrt().powi(self.derivative_order())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub dt: f64,
    pub steps: usize,
    /// Keep `φ` every this many steps; `0` keeps none.
    pub snapshot_every: usize,
}

impl FlowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::PreconditionFailed(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Solver effort accumulated over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveTally {
    pub iterations: usize,
    pub residual: f64,
}

impl SolveTally {
    fn add(&mut self, stats: &SolveStats) {
        self.iterations += stats.iterations;
        self.residual = self.residual.max(stats.residual);
    }
}

/// Right-hand side of a flow at `φ`.
pub fn flow_rhs(kind: FlowKind, phi: &G2Field, cfg: &SolverConfig, tally: &mut SolveTally) -> Result<FormField> {
    let lap = |f: &FormField| codiff(f, phi).and_then(|d| d.d_spectral());
    match kind {
        FlowKind::Laplacian => phi.tau().d_spectral(),
        FlowKind::BiLaplacian => lap(&phi.tau().d_spectral()?),
        FlowKind::PiD => {
            let (a, stats) = pi_d_with_stats(phi.phi(), phi, cfg)?;
            tally.add(&stats);
            Ok(a)
        }
        FlowKind::Dirichlet => flow_rhs(FlowKind::Table(EnergyKind::D, MetricKind::Laplacian), phi, cfg, tally),
        FlowKind::Table(e, m) => {
            let f = energy_gradient(e, phi, cfg)?;
            let (fd, stats) = pi_d_with_stats(&f, phi, cfg)?;
            tally.add(&stats);
            let out = match m {
                MetricKind::Laplacian => fd,
                MetricKind::Dirichlet => lap(&fd)?,
                MetricKind::L2 => lap(&lap(&fd)?)?,
            };
            Ok(out.scale(-1.0))
        }
    }
}

/// `φ_t = dδγ` with `Δ δγ = −δF^D`, solved on coexact 2-forms.
pub fn dirichlet_split_rhs(phi: &G2Field, cfg: &SolverConfig) -> Result<(FormField, SolveStats)> {
    let f = energy_gradient(EnergyKind::D, phi, cfg)?;
    let b = codiff(&f, phi)?.scale(-1.0);
    d_green_coexact(&b, phi, cfg)
}

fn to_positivity_error(e: Error) -> Error {
    match e {
        Error::NonPositiveForm { .. } => Error::PositivityLost { halvings: 0 },
        other => other,
    }
}

/// One classical RK4 step of `φ_t = F(φ)` of size `dt`.
fn rk4_step(
    phi: &G2Field,
    dt: f64,
    rhs: &dyn Fn(&G2Field, &mut SolveTally) -> Result<FormField>,
    tally: &mut SolveTally,
) -> Result<G2Field> {
    let p = phi.phi();
    let k1 = rhs(phi, tally)?;
    let s2 = G2Field::from_phi(p.axpy(0.5 * dt, &k1)?)?;
    let k2 = rhs(&s2, tally)?;
    let s3 = G2Field::from_phi(p.axpy(0.5 * dt, &k2)?)?;
    let k3 = rhs(&s3, tally)?;
    let s4 = G2Field::from_phi(p.axpy(dt, &k3)?)?;
    let k4 = rhs(&s4, tally)?;
    let incr = k1.add(&k4)?.axpy(2.0, &k2)?.axpy(2.0, &k3)?;
    G2Field::from_phi(p.axpy(dt / 6.0, &incr)?)
}

/// RK4 with up to eight halvings of `dt` on loss of positivity.
fn rk4_backtracking(
    phi: &G2Field,
    dt: f64,
    rhs: &dyn Fn(&G2Field, &mut SolveTally) -> Result<FormField>,
    tally: &mut SolveTally,
) -> Result<(G2Field, f64)> {
    let mut step = dt;
    for halvings in 0..=8 {
        match rk4_step(phi, step, rhs, tally) {
            Ok(next) => return Ok((next, step)),
            Err(Error::NonPositiveForm { .. }) if halvings < 8 => step *= 0.5,
            Err(Error::NonPositiveForm { .. }) => return Err(Error::PositivityLost { halvings }),
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns")
}

/// One flow monitor row.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRow {
    pub step: usize,
    pub t: f64,
    pub vol: f64,
    pub el: f64,
    pub ed: f64,
    pub em: f64,
    pub dt: f64,
    pub solver_iters: usize,
    pub residual: f64,
}

pub fn monitor_csv(rows: &[MonitorRow]) -> String {
    let mut s = String::from("step,t,Vol,EL,ED,EM,dt,solver_iters,residual\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.10e},{:.15e},{:.15e},{:.15e},{:.15e},{:.6e},{},{:.3e}\n",
            r.step, r.t, r.vol, r.el, r.ed, r.em, r.dt, r.solver_iters, r.residual
        ));
    }
    s
}

fn monitor(step: usize, t: f64, dt: f64, phi: &G2Field, tally: SolveTally, cfg: &SolverConfig) -> Result<MonitorRow> {
    Ok(MonitorRow {
        step,
        t,
        vol: volume(phi),
        el: energy(EnergyKind::L, phi, cfg)?,
        ed: energy(EnergyKind::D, phi, cfg)?,
        em: energy(EnergyKind::M, phi, cfg)?,
        dt,
        solver_iters: tally.iterations,
        residual: tally.residual,
    })
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub rows: Vec<MonitorRow>,
    pub snapshots: Vec<(f64, FormField)>,
    /// `max_t |dφ(t)|`.
    pub max_closedness: f64,
    pub last: G2Field,
}

impl FlowRun {
    /// Largest step-to-step increase of the monotone quantity, relative
    /// to its value: volume must not drop, energies must not rise.
    pub fn worst_monotonicity(&self, kind: FlowKind) -> f64 {
        let pick = |r: &MonitorRow| match kind.monotone_energy() {
            Some(EnergyKind::L) => r.el,
            Some(EnergyKind::D) => r.ed,
            Some(EnergyKind::M) => r.em,
            None => -r.vol,
        };
        self.rows
            .windows(2)
            .map(|w| (pick(&w[1]) - pick(&w[0])) / pick(&w[0]).abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn run_flow(spec: &FlowSpec, phi0: &G2Field, cfg: &SolverConfig) -> Result<FlowRun> {
    spec.validate()?;
    cfg.validate()?;
    let rhs = |phi: &G2Field, tally: &mut SolveTally| flow_rhs(spec.kind, phi, cfg, tally);
    let mut phi = phi0.clone();
    let mut t = 0.0;
    let mut rows = vec![monitor(0, t, 0.0, &phi, SolveTally::default(), cfg)?];
    let mut snapshots = Vec::new();
    if spec.snapshot_every > 0 {
        snapshots.push((t, phi.phi().clone()));
    }
    let mut max_closedness = phi.closedness_residual();
    for step in 1..=spec.steps {
        let mut tally = SolveTally::default();
        let (next, used) = rk4_backtracking(&phi, spec.dt, &rhs, &mut tally)?;
        phi = next;
        t += used;
        max_closedness = max_closedness.max(phi.closedness_residual());
        rows.push(monitor(step, t, used, &phi, tally, cfg)?);
        if spec.snapshot_every > 0 && step % spec.snapshot_every == 0 {
            snapshots.push((t, phi.phi().clone()));
        }
    }
    Ok(FlowRun {
        rows,
        snapshots,
        max_closedness,
        last: phi,
    })
}

/// `φ, φ_t` and the connection whose geodesic is followed.
#[derive(Clone, Debug)]
pub struct GeodesicState {
    pub phi: G2Field,
    pub velocity: FormField,
    pub connection: ConnectionKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicRow {
    pub step: usize,
    pub t: f64,
    pub speed: f64,
    pub rel_drift: f64,
}

pub fn geodesic_csv(rows: &[GeodesicRow]) -> String {
    let mut s = String::from("step,t,speed,rel_drift\n");
    for r in rows {
        s.push_str(&format!("{},{:.10e},{:.15e},{:.6e}\n", r.step, r.t, r.speed, r.rel_drift));
    }
    s
}

#[derive(Clone, Debug)]
pub struct GeodesicRun {
    pub rows: Vec<GeodesicRow>,
    pub last: GeodesicState,
}

impl GeodesicRun {
    pub fn max_drift(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_drift.abs()).fold(0.0, f64::max)
    }

    pub fn final_drift(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.rel_drift.abs())
    }
}

fn geodesic_accel(
    kind: ConnectionKind,
    phi: &G2Field,
    v: &FormField,
    cfg: &SolverConfig,
    hint: &mut Option<Potentials>,
) -> Result<FormField> {
    let lab = ConnectionLab::new(phi, cfg.clone())?;
    let pv = lab.potentials_to(v, PotentialDepth::for_connection(kind), hint.as_ref())?;
    let acc = lab.p_operator(kind, &pv, &pv)?.scale(-1.0);
    *hint = Some(pv);
    Ok(acc)
}

/// `𝓖(φ_t, φ_t)` for the metric matched to the connection.
pub fn geodesic_speed(state: &GeodesicState, cfg: &SolverConfig) -> Result<f64> {
    let lab = ConnectionLab::new(&state.phi, cfg.clone())?;
    let m = state.connection.matched_metric();
    lab.metric_eval(m, &state.velocity, &state.velocity)
}

/// RK4 on `φ' = V`, `V' = −P(φ, V, V)` up to time `t_end`.
pub fn geodesic_integrate(state0: &GeodesicState, t_end: f64, dt: f64, cfg: &SolverConfig) -> Result<GeodesicRun> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::PreconditionFailed(format!("dt must be positive, got {dt}")));
    }
    let kind = state0.connection;
    let speed0 = geodesic_speed(state0, cfg)?;
    let mut rows = vec![GeodesicRow {
        step: 0,
        t: 0.0,
        speed: speed0,
        rel_drift: 0.0,
    }];
    let steps = (t_end / dt).round() as usize;
    let mut phi = state0.phi.clone();
    let mut v = state0.velocity.clone();
    let mut hint = None;
    for step in 1..=steps {
        let p = phi.phi();
        let a1 = geodesic_accel(kind, &phi, &v, cfg, &mut hint)?;
        let v1 = v.clone();
        let s2 = G2Field::from_phi(p.axpy(0.5 * dt, &v1)?).map_err(to_positivity_error)?;
        let v2 = v.axpy(0.5 * dt, &a1)?;
        let a2 = geodesic_accel(kind, &s2, &v2, cfg, &mut hint)?;
        let s3 = G2Field::from_phi(p.axpy(0.5 * dt, &v2)?).map_err(to_positivity_error)?;
        let v3 = v.axpy(0.5 * dt, &a2)?;
        let a3 = geodesic_accel(kind, &s3, &v3, cfg, &mut hint)?;
        let s4 = G2Field::from_phi(p.axpy(dt, &v3)?).map_err(to_positivity_error)?;
        let v4 = v.axpy(dt, &a3)?;
        let a4 = geodesic_accel(kind, &s4, &v4, cfg, &mut hint)?;
        let dphi = v1.add(&v4)?.axpy(2.0, &v2)?.axpy(2.0, &v3)?;
        let dv = a1.add(&a4)?.axpy(2.0, &a2)?.axpy(2.0, &a3)?;
        phi = G2Field::from_phi(p.axpy(dt / 6.0, &dphi)?).map_err(to_positivity_error)?;
        v = v.axpy(dt / 6.0, &dv)?;
        let state = GeodesicState {
            phi: phi.clone(),
            velocity: v.clone(),
            connection: kind,
        };
        let speed = geodesic_speed(&state, cfg)?;
        rows.push(GeodesicRow {
            step,
            t: step as f64 * dt,
            speed,
            rel_drift: (speed - speed0) / speed0,
        });
    }
    Ok(GeodesicRun {
        rows,
        last: GeodesicState {
            phi,
            velocity: v,
            connection: kind,
        },
    })
}

/// Central second difference of `𝓔^D` along `φ + tX` and the prediction
/// `2∫|τ_t|² vol`, at a torsion-free `φ`.
pub fn dirichlet_second_variation(phi: &G2Field, x: &FormField, h: f64) -> Result<(f64, f64)> {
    let tau = phi.tau().max_abs();
    if tau > 1e-10 {
        return Err(Error::PreconditionFailed(format!("torsion {tau:e} at the base point")));
    }
    let cfg = SolverConfig::default();
    let at = |t: f64| -> Result<f64> {
        let shifted = G2Field::from_phi(phi.phi().axpy(t, x)?).map_err(to_positivity_error)?;
        energy(EnergyKind::D, &shifted, &cfg)
    };
    let fd = (at(h)? - 2.0 * at(0.0)? + at(-h)?) / (h * h);
    let vi = VariationInput::from_form(phi, x.clone())?;
    let tau_t = var_torsion(&vi)?;
    Ok((fd, 2.0 * phi.l2(&tau_t, &tau_t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_field::{make_closed_g2, random_band_limited_2form, random_exact_3form, Grid};

    fn perturbed(n: usize, seed: u64) -> G2Field {
        let g = Grid::unit([n, n, 1, 1, 1, 1, 1]).unwrap();
        make_closed_g2(&g, &random_band_limited_2form(&g, seed, 2).unwrap(), 0.05).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default().with_tol(1e-12)
    }

    #[test]
    fn volume_of_scaled_flat_structure() {
        let g = Grid::new([4, 4, 1, 1, 1, 1, 1], [1.0, 2.0, 1.0, 1.5, 1.0, 1.0, 1.0]).unwrap();
        let flat = G2Field::flat(&g);
        assert!((volume(&flat) - 3.0).abs() < 1e-12);
        let lambda: f64 = 1.1;
        let scaled = G2Field::from_phi(flat.phi().scale(lambda.powi(3))).unwrap();
        assert!((volume(&scaled) - 3.0 * lambda.powi(7)).abs() < 1e-11);
        let phi = perturbed(8, 1);
        assert!((volume(&phi) - volume_wedge(&phi)).abs() < 1e-12 * volume(&phi));
    }

    #[test]
    fn volume_first_variation_identities() {
        let phi = perturbed(8, 2);
        let x = random_exact_3form(phi.grid(), 3, 2).unwrap().x().clone();
        let forms = volume_gradient_forms(&phi, &x, &cfg()).unwrap();
        for v in &forms[1..] {
            assert!((v - forms[0]).abs() < 1e-7 * forms[0].abs(), "{forms:?}");
        }
        let h = 1e-4;
        let plus = volume(&G2Field::from_phi(phi.phi().axpy(h, &x).unwrap()).unwrap());
        let minus = volume(&G2Field::from_phi(phi.phi().axpy(-h, &x).unwrap()).unwrap());
        let fd = (plus - minus) / (2.0 * h);
        assert!((fd - forms[0]).abs() < 1e-7 * forms[0].abs(), "{fd} vs {}", forms[0]);
        let flat = G2Field::flat(phi.grid());
        assert!(vol_first_variation(&flat, &x).abs() < 1e-14);
    }

    #[test]
    fn energies_vanish_on_flat() {
        let g = Grid::unit([8, 8, 1, 1, 1, 1, 1]).unwrap();
        let flat = G2Field::flat(&g);
        for k in [EnergyKind::L, EnergyKind::D, EnergyKind::M] {
            assert!(energy(k, &flat, &cfg()).unwrap().abs() < 1e-20);
            assert!(energy_gradient(k, &flat, &cfg()).unwrap().max_abs() < 1e-12);
        }
        let phi = perturbed(8, 4);
        assert!(energy(EnergyKind::D, &phi, &cfg()).unwrap() > 0.0);
    }

    fn energy_fd(kind: EnergyKind, n: usize) -> f64 {
        let phi = perturbed(n, 5);
        let c = cfg();
        let f = energy_gradient(kind, &phi, &c).unwrap();
        let mut worst = 0.0f64;
        for seed in 0..3 {
            let x = random_exact_3form(phi.grid(), 60 + seed, 2).unwrap().x().clone();
            let h = 1e-4;
            let e = |t: f64| energy(kind, &G2Field::from_phi(phi.phi().axpy(t, &x).unwrap()).unwrap(), &c).unwrap();
            let fd = (e(h) - e(-h)) / (2.0 * h);
            let predicted = phi.l2(&x, &f);
            worst = worst.max((fd - predicted).abs() / fd.abs());
        }
        worst
    }

    #[test]
    fn energy_gradients_match_fd() {
        for kind in [EnergyKind::D, EnergyKind::L, EnergyKind::M] {
            let r = energy_fd(kind, 16);
            println!("{kind:?}: {r:e}");
            assert!(r < 1e-5, "{kind:?}: {r}");
        }
    }

    #[test]
    fn laplacian_flow_is_stationary_on_flat() {
        let g = Grid::unit([4, 4, 1, 1, 1, 1, 1]).unwrap();
        let flat = G2Field::flat(&g);
        let spec = FlowSpec {
            kind: FlowKind::Laplacian,
            dt: 1e-3,
            steps: 3,
            snapshot_every: 1,
        };
        let run = run_flow(&spec, &flat, &cfg()).unwrap();
        assert_eq!(run.last.phi().sub(flat.phi()).unwrap().max_abs(), 0.0);
        assert_eq!(run.snapshots.len(), 4);
    }

    #[test]
    fn short_flows_are_monotone() {
        let phi = perturbed(8, 6);
        for (kind, dt) in [
            (FlowKind::Laplacian, 1e-4),
            (FlowKind::Dirichlet, 1e-4),
            (FlowKind::PiD, 1e-4),
            (FlowKind::BiLaplacian, 1e-7),
        ] {
            let spec = FlowSpec {
                kind,
                dt,
                steps: 5,
                snapshot_every: 0,
            };
            let run = run_flow(&spec, &phi, &cfg()).unwrap();
            assert!(run.worst_monotonicity(kind) <= 0.0, "{kind:?}: {}", run.worst_monotonicity(kind));
            assert!(run.max_closedness < 1e-9);
        }
        for e in [EnergyKind::L, EnergyKind::D, EnergyKind::M] {
            for m in [MetricKind::Laplacian, MetricKind::Dirichlet, MetricKind::L2] {
                let kind = FlowKind::Table(e, m);
                let spec = FlowSpec {
                    kind,
                    dt: 0.1 * kind.stable_dt(phi.grid()).min(1e-6),
                    steps: 1,
                    snapshot_every: 0,
                };
                let run = run_flow(&spec, &phi, &SolverConfig::default()).unwrap();
                assert!(run.worst_monotonicity(kind) <= 0.0, "{kind:?}: {}", run.worst_monotonicity(kind));
            }
        }
    }

    #[test]
    fn split_step_matches_projection() {
        let phi = perturbed(8, 7);
        let mut tally = SolveTally::default();
        let a = flow_rhs(FlowKind::Dirichlet, &phi, &cfg(), &mut tally).unwrap();
        let b = dirichlet_split_rhs(&phi, &cfg()).unwrap().0;
        assert!(a.sub(&b).unwrap().max_abs() < 1e-7 * a.max_abs());
        let flat = G2Field::flat(phi.grid());
        assert_eq!(dirichlet_split_rhs(&flat, &cfg()).unwrap().0.max_abs(), 0.0);
    }

    #[test]
    fn nonpositive_dt_rejected() {
        let phi = perturbed(4, 8);
        let spec = FlowSpec {
            kind: FlowKind::Laplacian,
            dt: 0.0,
            steps: 1,
            snapshot_every: 0,
        };
        assert!(matches!(run_flow(&spec, &phi, &cfg()), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn second_variation_at_flat_point() {
        let g = Grid::unit([8, 8, 1, 1, 1, 1, 1]).unwrap();
        let flat = G2Field::flat(&g);
        let x = random_exact_3form(&g, 9, 2).unwrap().x().clone();
        let (fd, predicted) = dirichlet_second_variation(&flat, &x, 1e-3).unwrap();
        assert!(predicted > 0.0);
        assert!((fd - predicted).abs() < 1e-4 * predicted, "{fd} vs {predicted}");
        let zero = FormField::zeros(&g, 3);
        let (fd, predicted) = dirichlet_second_variation(&flat, &zero, 1e-3).unwrap();
        assert_eq!((fd, predicted), (0.0, 0.0));
        let phi = perturbed(8, 10);
        assert!(dirichlet_second_variation(&phi, &x, 1e-3).is_err());
    }

    #[test]
    fn geodesic_from_rest_stays_put() {
        let phi = perturbed(8, 11);
        let state = GeodesicState {
            phi: phi.clone(),
            velocity: FormField::zeros(phi.grid(), 3),
            connection: ConnectionKind::DL,
        };
        let c = cfg();
        let lab = ConnectionLab::new(&phi, c.clone()).unwrap();
        let zero = lab.potentials(&state.velocity).unwrap();
        assert_eq!(lab.p_operator(ConnectionKind::DL, &zero, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn geodesic_speed_conserved_short() {
        let phi = perturbed(8, 12);
        let v = random_exact_3form(phi.grid(), 13, 2).unwrap().x().scale(0.1);
        for kind in [ConnectionKind::DL, ConnectionKind::DD, ConnectionKind::DM] {
            let state = GeodesicState {
                phi: phi.clone(),
                velocity: v.clone(),
                connection: kind,
            };
            let run = geodesic_integrate(&state, 0.05, 1e-2, &cfg()).unwrap();
            println!("{kind:?}: {:e}", run.max_drift());
            assert!(run.max_drift() < 1e-6, "{kind:?}: {}", run.max_drift());
        }
    }
}
