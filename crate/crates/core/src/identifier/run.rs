use alloc::vec;
use alloc::vec::Vec;

use super::{flow_matrix, settling_time, FlowConfig, Integrator, KoopmanEstimate};
use crate::error::{Error, Result};
use crate::filters::{predict_lifted, FilterState};
use crate::linalg::{dot, symmetric_eigen, Matrix};
use crate::memory::{HistoryStack, RecordSchedule, Replacement};
use crate::observables::{ObservableCatalog, ObservableLibrary};
use crate::ode::Rk4;
use crate::plant::{plant_derivative, probing_input, InputMap, PlantParams};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StackPolicy {
    /// `p`
    pub capacity: usize,
    /// Samples are recorded at `record_start + j (record_end − record_start) / p`.
    pub record_start: f64,
    pub record_end: f64,
    pub rank_tol: f64,
    pub replacement: Replacement,
}

impl Default for StackPolicy {
    fn default() -> Self {
        Self { capacity: 21, record_start: 0.0, record_end: 0.5, rank_tol: 1e-6, replacement: Replacement::Disabled }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunConfig {
    pub plant: PlantParams,
    pub x0: [f64; 2],
    pub dt: f64,
    pub t_final: f64,
    /// Filter gain `a`.
    pub filter_gain: f64,
    pub flow: FlowConfig,
    pub stack: StackPolicy,
    /// Integration stops once `‖g‖` falls below this after activation.
    pub stop_tol: f64,
    /// `‖Σ̃‖` threshold for the measured convergence time (needs the truth).
    pub sigma_tol: f64,
    /// Convergence certificate: `‖g‖ ≤ g_rel_tol · ‖g(t_a)‖`, or `‖g‖ < stop_tol`
    /// once activated and recording is over.
    pub g_rel_tol: f64,
    /// Keep every `log_stride`-th step in the trajectory; `0` keeps none.
    pub log_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            x0: [1.0, -1.0],
            dt: 1e-4,
            t_final: 5.0,
            filter_gain: 1.0,
            flow: FlowConfig::default(),
            stack: StackPolicy::default(),
            stop_tol: 1e-8,
            sigma_tol: 1e-3,
            g_rel_tol: 1e-3,
            log_stride: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, n_xi: usize, m: usize) -> Result<()> {
        self.plant.validate()?;
        self.flow.validate()?;
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::InvalidParameter("dt and t_final must be positive".into()));
        }
        if !(self.filter_gain > 0.0) {
            return Err(Error::InvalidParameter("filter gain must be positive".into()));
        }
        if self.stack.capacity == 0 {
            return Err(Error::InvalidParameter("history stack capacity must be >= 1".into()));
        }
        if !(self.stack.record_start < self.stack.record_end) {
            return Err(Error::InvalidParameter("record window must satisfy start < end".into()));
        }
        let _ = (n_xi, m);
        Ok(())
    }
}

/// One logged integration step.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepLog {
    pub t: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// Predicted normalized lifted state.
    pub xi_hat_bar: Vec<f64>,
    pub u: f64,
    pub n_s: f64,
    /// `‖ē(t)‖`
    pub e_norm: f64,
    /// `‖g‖`
    pub g_norm: f64,
    /// `V = ‖g‖²`
    pub v: f64,
    /// Running `∫ ‖g‖` from the activation time.
    pub regret: f64,
    /// `‖Σ̃‖_F` when the truth is known.
    pub sigma_err: Option<f64>,
    /// `[Â B̂]`, row-major.
    pub ab: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    /// First time the rank condition holds.
    pub activation_time: Option<f64>,
    pub g_at_activation: Option<f64>,
    /// `‖g(t_a)‖ / α`
    pub settling_time: Option<f64>,
    /// Time after `t_a` at which `‖Σ̃‖` first drops below `sigma_tol`.
    pub convergence_time: Option<f64>,
    /// Time after `t_a` at which `‖g‖ ≤ g_rel_tol ‖g(t_a)‖` first holds.
    pub g_convergence_time: Option<f64>,
    /// `∫ ‖g‖` over `[t_a, t_a + t*]`.
    pub regret: f64,
    /// `‖g(t_a)‖² / (2α)`
    pub regret_bound: Option<f64>,
    /// Time of the last scheduled recording.
    pub stack_complete_time: Option<f64>,
    /// Logged steps after the stack is complete where `V` increased while
    /// `‖g‖ > 10 δ`.
    pub lyapunov_violations: usize,
    pub lyapunov_checked: usize,
    /// Steps where the flow itself raised `V` on the frozen data of that step.
    pub flow_step_increases: usize,
    /// `sup ‖[Â B̂]‖_F` over the run.
    pub sup_estimate_norm: f64,
    pub final_g_norm: f64,
    pub final_e_norm: f64,
    pub final_sigma_error: Option<f64>,
    pub m_theta: f64,
    pub rank_condition: bool,
    pub t_end: f64,
    pub steps: u64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub estimate: KoopmanEstimate,
    pub stack: HistoryStack,
    pub summary: RunSummary,
    pub trajectory: Vec<StepLog>,
}

/// Frozen data of the flow over one step: `E(W) = W G − C`.
struct FlowKernel {
    g: Matrix,
    c: Matrix,
    g_pow_r: Option<Matrix>,
    eigen: Option<(Vec<f64>, Matrix)>,
}

impl FlowKernel {
    fn new(g: Matrix, c: Matrix, cfg: &FlowConfig) -> Self {
        let g_pow_r = (cfg.r > 0).then(|| g.pow(cfg.r));
        let eigen = (cfg.integrator == Integrator::ExactPath).then(|| symmetric_eigen(&g));
        Self { g, c, g_pow_r, eigen }
    }

    fn e(&self, w: &Matrix) -> Matrix {
        let mut e = w.matmul(&self.g);
        e.add_assign(&self.c.scaled(-1.0));
        e
    }

    fn rate(&self, w: &Matrix, cfg: &FlowConfig) -> Result<Matrix> {
        flow_matrix(&self.e(w), &self.g, self.g_pow_r.as_ref(), cfg)
    }

    fn v(&self, w: &Matrix) -> f64 {
        let n = self.e(w).frobenius_norm();
        n * n
    }

    fn rk4(&self, w: &Matrix, h: f64, cfg: &FlowConfig) -> Result<Matrix> {
        let stage = |base: &Matrix, k: &Matrix, s: f64| {
            let mut out = base.clone();
            out.add_assign(&k.scaled(s));
            out
        };
        let k1 = self.rate(w, cfg)?;
        let k2 = self.rate(&stage(w, &k1, 0.5 * h), cfg)?;
        let k3 = self.rate(&stage(w, &k2, 0.5 * h), cfg)?;
        let k4 = self.rate(&stage(w, &k3, h), cfg)?;
        let mut out = w.clone();
        out.add_assign(&k1.scaled(h / 6.0));
        out.add_assign(&k2.scaled(h / 3.0));
        out.add_assign(&k3.scaled(h / 3.0));
        out.add_assign(&k4.scaled(h / 6.0));
        Ok(out)
    }

    /// Advances `w` by `dt` in substeps of at most `cfg.dt_flow`. For the
    /// ideal law (`δ = 0`) a substep that does not decrease `V` is retried with half
    /// the step, up to 20 times, and dropped if it still overshoots.
    fn advance(&self, w: &mut Matrix, dt: f64, cfg: &FlowConfig, stop_tol: f64) -> Result<()> {
        if let Some((values, vectors)) = &self.eigen {
            return self.advance_exact(w, dt, cfg, stop_tol, values, vectors);
        }
        let n_sub = libm::ceil(dt / cfg.dt_flow - 1e-9).max(1.0) as usize;
        let h = dt / n_sub as f64;
        for _ in 0..n_sub {
            let e_norm = self.e(w).frobenius_norm();
            if e_norm < stop_tol {
                break;
            }
            if cfg.delta > 0.0 {
                *w = self.rk4(w, h, cfg)?;
                continue;
            }
            let v0 = e_norm * e_norm;
            let mut step = h;
            let mut accepted = None;
            for _ in 0..=20 {
                match self.rk4(w, step, cfg) {
                    Ok(next) if self.v(&next) < v0 => {
                        accepted = Some(next);
                        break;
                    }
                    Ok(_) | Err(Error::SingularFlow { .. }) => step *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            match accepted {
                Some(next) => *w = next,
                None => break,
            }
        }
        Ok(())
    }
    /// Frozen data turn the flow into `Ẇ = −c(t) E G^r`, `Ė = −c(t) E G^{r+1}`
    /// with a positive scalar `c`. With `s = ∫ c dt` the path is
    /// `E(s) = E₀ exp(−G^{r+1} s)`, so only `s` after time `dt` is unknown:
    ///
    /// ```text
    /// dt/ds = (δ + q(s)) / (α ‖E(s)‖),   q = ⟨E G^{r+1}, E⟩
    /// ```
    ///
    /// At `δ = 0` this integrates to `‖E(s)‖ = ‖E₀‖ − α t`. Directions with
    /// `λ(G) ≤ 1e−13 λ_max` are left untouched.
    fn advance_exact(
        &self,
        w: &mut Matrix,
        dt: f64,
        cfg: &FlowConfig,
        stop_tol: f64,
        values: &[f64],
        vectors: &Matrix,
    ) -> Result<()> {
        let e0 = self.e(w);
        let n0 = e0.frobenius_norm();
        if n0 < stop_tol {
            return Ok(());
        }
        let lam_max = values.last().copied().unwrap_or(0.0);
        let proj = e0.matmul(vectors);
        let mut modes = Vec::with_capacity(values.len());
        let mut floor2 = 0.0;
        for (k, &lam) in values.iter().enumerate() {
            let col = proj.column(k);
            let ck = dot(&col, &col);
            if lam > 1e-13 * lam_max && lam > 0.0 {
                modes.push(Mode { k, lam, mu: libm::pow(lam, (cfg.r + 1) as f64), c: ck });
            } else {
                floor2 += ck;
            }
        }
        if modes.is_empty() {
            return Ok(());
        }
        let s = if cfg.delta == 0.0 {
            path_time_ideal(&modes, floor2, n0, cfg.alpha * dt)
        } else {
            path_time_regularized(&modes, floor2, dt, cfg)
        };
        for m in &modes {
            let phi = if s.is_infinite() { 1.0 / m.lam } else { -libm::expm1(-m.mu * s) / m.lam };
            if phi == 0.0 {
                continue;
            }
            let pk = proj.column(m.k);
            let vk = vectors.column(m.k);
            w.add_outer(-phi, &pk, &vk);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Mode {
    k: usize,
    lam: f64,
    mu: f64,
    c: f64,
}

fn path_norm2(modes: &[Mode], floor2: f64, s: f64) -> f64 {
    floor2 + modes.iter().map(|m| m.c * libm::exp(-2.0 * m.mu * s)).sum::<f64>()
}

fn path_q(modes: &[Mode], s: f64) -> f64 {
    modes.iter().map(|m| m.c * m.mu * libm::exp(-2.0 * m.mu * s)).sum()
}

/// `s` at which `‖E(s)‖ = ‖E₀‖ − budget`, or `∞` if the budget reaches the
/// equilibrium.
fn path_time_ideal(modes: &[Mode], floor2: f64, n0: f64, budget: f64) -> f64 {
    let target = n0 - budget;
    if target <= libm::sqrt(floor2) || target <= 0.0 {
        return f64::INFINITY;
    }
    let t2 = target * target;
    let mu_max = modes.iter().fold(0.0f64, |a, m| a.max(m.mu));
    let mut lo = 0.0;
    let mut hi = 1.0 / mu_max;
    while path_norm2(modes, floor2, hi) > t2 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if path_norm2(modes, floor2, mid) > t2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `t(s) = dt` for `δ > 0`. Integrates `(s, t)` against
/// `τ = ln ‖E₀‖ − ln ‖E‖`, in which both rates stay bounded:
/// `ds/dτ = ‖E‖² / q`, `dt/dτ = ‖E‖ (1 + δ/q) / α`.
fn path_time_regularized(modes: &[Mode], floor2: f64, dt: f64, cfg: &FlowConfig) -> f64 {
    let rates = |s: f64| -> Option<(f64, f64)> {
        let q = path_q(modes, s);
        let n2 = path_norm2(modes, floor2, s) - floor2;
        if !(q > 0.0) || !(n2 > 0.0) {
            return None;
        }
        let n = libm::sqrt(path_norm2(modes, floor2, s));
        Some((n2 / q, n * (1.0 + cfg.delta / q) / cfg.alpha))
    };
    let rk4 = |s: f64, h: f64| -> Option<(f64, f64)> {
        let (a1, b1) = rates(s)?;
        let (a2, b2) = rates(s + 0.5 * h * a1)?;
        let (a3, b3) = rates(s + 0.5 * h * a2)?;
        let (a4, b4) = rates(s + h * a3)?;
        Some((s + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4), h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)))
    };
    let (mut s, mut t) = (0.0, 0.0);
    let mut h = 0.05;
    for _ in 0..100_000 {
        let Some((s_full, dt_full)) = rk4(s, h) else { return s };
        let half = rk4(s, 0.5 * h).and_then(|(sh, th)| rk4(sh, 0.5 * h).map(|(s2, t2)| (s2, th + t2)));
        let Some((s_half, dt_half)) = half else {
            h *= 0.5;
            continue;
        };
        let err = ((s_half - s_full).abs() / s_half.abs().max(1e-300)).max((dt_half - dt_full).abs() / dt.max(1e-300));
        if err > 1e-9 && h > 1e-12 {
            h *= 0.5;
            continue;
        }
        if t + dt_half >= dt {
            // final partial step: bisect on the step length
            let (mut lo, mut hi) = (0.0, h);
            let mut s_best = s;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                match rk4(s, 0.5 * mid).and_then(|(sh, th)| rk4(sh, 0.5 * mid).map(|(s2, t2)| (s2, th + t2))) {
                    Some((sm, tm)) if t + tm <= dt => {
                        lo = mid;
                        s_best = sm;
                    }
                    _ => hi = mid,
                }
                if hi - lo <= 1e-14 * h {
                    break;
                }
            }
            return s_best;
        }
        s = s_half;
        t += dt_half;
        if err < 1e-11 {
            h *= 2.0;
        }
    }
    s
}

struct Truth<'a> {
    est: &'a KoopmanEstimate,
}

impl Truth<'_> {
    fn error(&self, w: &Matrix) -> f64 {
        let mut d = w.clone();
        d.add_assign(&self.est.ab().scaled(-1.0));
        d.frobenius_norm()
    }
}

/// Co-integrates plant, filters, history stack and the regularized flow.
pub fn integrate_identifier(
    cfg: &RunConfig,
    catalog: &ObservableCatalog,
    library: &ObservableLibrary,
    input_map: &dyn InputMap,
    truth: Option<&KoopmanEstimate>,
) -> Result<RunOutcome> {
    let n = library.n_xi();
    let m = input_map.dim();
    let d = n + m;
    cfg.validate(n, m)?;
    if catalog.state_dim() != 2 {
        return Err(Error::Dimension { expected: 2, found: catalog.state_dim() });
    }
    if let Some(t) = truth {
        if t.n_xi() != n || t.m() != m {
            return Err(Error::Dimension { expected: n, found: t.n_xi() });
        }
    }
    let truth = truth.map(|est| Truth { est });

    let plant = cfg.plant;
    let a = cfg.filter_gain;
    let xi0 = library.lift(catalog, &cfg.x0)?;
    let mut filters = FilterState::new(xi0, m, a)?;
    let mut stack =
        HistoryStack::new(n, m, cfg.stack.capacity, cfg.stack.rank_tol).with_replacement(cfg.stack.replacement);
    let mut schedule =
        RecordSchedule::uniform(cfg.stack.record_start, cfg.stack.record_end, cfg.stack.capacity, cfg.dt);
    let stack_complete_time = schedule.last_step().map(|k| k as f64 * cfg.dt);

    // joint state: x (2), h (d), l (n)
    let mut y = vec![0.0; 2 + d + n];
    y[..2].copy_from_slice(&cfg.x0);
    let mut rk = Rk4::new(y.len());
    let mut xi_buf = vec![0.0; n];
    let mut psi_buf = vec![0.0; m];

    let mut est = KoopmanEstimate::zeros(n, m);
    let mut summary = RunSummary { stack_complete_time, ..RunSummary::default() };
    let mut trajectory = Vec::new();

    let steps = libm::round(cfg.t_final / cfg.dt) as u64;
    let mut prev_v: Option<f64> = None;
    let mut stopped = false;
    let mut prev_g: Option<(f64, f64)> = None;
    let mut regret = 0.0;
    let check_from = stack_complete_time.unwrap_or(0.0);

    let log_row = |t: f64,
                   y: &[f64],
                   est: &KoopmanEstimate,
                   filters: &FilterState,
                   e_norm: f64,
                   g_norm: f64,
                   regret: f64,
                   truth: &Option<Truth<'_>>|
     -> Result<StepLog> {
        let x = y[..2].to_vec();
        let xi = library.lift(catalog, &x)?;
        let snap = filters.normalize(&xi);
        Ok(StepLog {
            t,
            xi_hat_bar: predict_lifted(est, &snap)?,
            x,
            xi,
            u: probing_input(t, &plant),
            n_s: snap.n_s,
            e_norm,
            g_norm,
            v: g_norm * g_norm,
            regret,
            sigma_err: truth.as_ref().map(|tr| tr.error(est.ab())),
            ab: est.ab().as_slice().to_vec(),
        })
    };

    if cfg.log_stride > 0 {
        trajectory.push(log_row(0.0, &y, &est, &filters, 0.0, 0.0, 0.0, &truth)?);
    }

    let mut k = 0u64;
    let mut e_norm = 0.0;
    let mut g_norm = 0.0;
    while k < steps {
        let t0 = k as f64 * cfg.dt;
        rk.step(
            |s, state, ds| {
                let u = probing_input(s, &plant);
                let (x, rest) = state.split_at(2);
                let (h, l) = rest.split_at(d);
                let (dx, drest) = ds.split_at_mut(2);
                let (dh, dl) = drest.split_at_mut(d);
                plant_derivative(&plant, x, u, dx);
                library.lift_into(catalog, x, &mut xi_buf).expect("state dimension checked");
                input_map.apply(u, &mut psi_buf);
                FilterState::derivative(a, h, l, &xi_buf, &psi_buf, dh, dl);
            },
            t0,
            &mut y,
            cfg.dt,
        );
        k += 1;
        let t = k as f64 * cfg.dt;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t, what: "plant or filter state" });
        }
        filters.h.copy_from_slice(&y[2..2 + d]);
        filters.l.copy_from_slice(&y[2 + d..]);
        filters.t = t;

        let xi = library.lift(catalog, &y[..2])?;
        let snap = filters.normalize(&xi);
        if schedule.due(k) {
            stack.record(&snap)?;
        }

        let target = snap.target();
        let mut g_mat = stack.gram().clone();
        g_mat.add_outer(1.0, &snap.h_bar, &snap.h_bar);
        let mut c_mat = stack.cross().clone();
        c_mat.add_outer(1.0, &target, &snap.h_bar);
        let kernel = FlowKernel::new(g_mat, c_mat, &cfg.flow);

        if summary.activation_time.is_none() && stack.rank_condition().0 {
            let g0 = kernel.e(est.ab()).frobenius_norm();
            let t_star = settling_time(g0, cfg.flow.alpha);
            summary.activation_time = Some(t);
            summary.g_at_activation = Some(g0);
            summary.settling_time = Some(t_star);
            summary.regret_bound = Some(g0 * g0 / (2.0 * cfg.flow.alpha));
            prev_g = Some((t, g0));
        }

        let v_before = kernel.v(est.ab());
        kernel.advance(est.ab_mut(), cfg.dt, &cfg.flow, cfg.stop_tol)?;
        if !est.ab().is_finite() {
            return Err(Error::Divergence { t, what: "Koopman estimate" });
        }

        summary.sup_estimate_norm = summary.sup_estimate_norm.max(est.ab().frobenius_norm());
        let e_mat = kernel.e(est.ab());
        g_norm = e_mat.frobenius_norm();
        let e_now: Vec<f64> = {
            let mut e = est.apply(&snap.h_bar);
            for (ei, yi) in e.iter_mut().zip(&target) {
                *ei -= yi;
            }
            e
        };
        e_norm = libm::sqrt(dot(&e_now, &e_now));
        let v = g_norm * g_norm;
        if v > v_before {
            summary.flow_step_increases += 1;
        }

        if let (Some(t_a), Some(t_star)) = (summary.activation_time, summary.settling_time) {
            if let Some((tp, gp)) = prev_g {
                let hi = t.min(t_a + t_star);
                if hi > tp {
                    let g_hi = if t <= t_a + t_star { g_norm } else { gp + (g_norm - gp) * (hi - tp) / (t - tp) };
                    regret += 0.5 * (gp + g_hi) * (hi - tp);
                }
            }
            prev_g = Some((t, g_norm));
            if summary.convergence_time.is_none() {
                if let Some(tr) = &truth {
                    if tr.error(est.ab()) < cfg.sigma_tol {
                        summary.convergence_time = Some(t - t_a);
                    }
                }
            }
            if summary.g_convergence_time.is_none() {
                if let Some(g0) = summary.g_at_activation {
                    if g_norm <= cfg.g_rel_tol * g0 {
                        summary.g_convergence_time = Some(t - t_a);
                    }
                }
            }
        }
        if t > check_from {
            if let Some(pv) = prev_v {
                if g_norm > 10.0 * cfg.flow.delta {
                    summary.lyapunov_checked += 1;
                    if v > pv {
                        summary.lyapunov_violations += 1;
                    }
                }
            }
        }
        prev_v = Some(v);

        let stop = summary.activation_time.is_some() && schedule.finished() && g_norm < cfg.stop_tol;
        if cfg.log_stride > 0 && (k.is_multiple_of(cfg.log_stride as u64) || k == steps || stop) {
            trajectory.push(log_row(t, &y, &est, &filters, e_norm, g_norm, regret, &truth)?);
        }
        if stop {
            stopped = true;
            break;
        }
    }

    summary.regret = regret;
    summary.final_g_norm = g_norm;
    summary.final_e_norm = e_norm;
    summary.final_sigma_error = truth.as_ref().map(|tr| tr.error(est.ab()));
    let (ok, m_theta) = stack.rank_condition();
    summary.rank_condition = ok;
    summary.m_theta = m_theta;
    summary.t_end = k as f64 * cfg.dt;
    summary.steps = k;
    summary.converged = summary.activation_time.is_some() && (summary.g_convergence_time.is_some() || stopped);

    Ok(RunOutcome { estimate: est, stack, summary, trajectory })
}

/// Flow trace on frozen data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StaticTrace {
    pub times: Vec<f64>,
    pub g_norms: Vec<f64>,
    pub sigma_errors: Vec<f64>,
    pub estimate: Option<KoopmanEstimate>,
    /// First time `‖g‖ < stop_tol`.
    pub stop_time: Option<f64>,
}

impl StaticTrace {
    /// First logged time at which `‖Σ̃‖ < tol`.
    pub fn first_passage(&self, tol: f64) -> Option<f64> {
        self.times.iter().zip(&self.sigma_errors).find(|(_, e)| **e < tol).map(|(t, _)| *t)
    }

    pub fn regret_points(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.g_norms.iter().copied()).collect()
    }
}

/// Integrates the flow with `G = Σ h̄ h̄ᵀ` and `C = Σ y h̄ᵀ` held fixed, the
/// setting in which the settling-time and regret identities are exact.
pub fn integrate_static(
    initial: &KoopmanEstimate,
    gram: &Matrix,
    cross: &Matrix,
    truth: &KoopmanEstimate,
    cfg: &FlowConfig,
    t_final: f64,
    stop_tol: f64,
) -> Result<StaticTrace> {
    cfg.validate()?;
    let kernel = FlowKernel::new(gram.clone(), cross.clone(), cfg);
    let mut w = initial.ab().clone();
    let tr = Truth { est: truth };
    let mut trace = StaticTrace::default();
    let steps = libm::ceil(t_final / cfg.dt_flow - 1e-9) as u64;
    let push = |trace: &mut StaticTrace, t: f64, w: &Matrix| {
        trace.times.push(t);
        trace.g_norms.push(kernel.e(w).frobenius_norm());
        trace.sigma_errors.push(tr.error(w));
    };
    push(&mut trace, 0.0, &w);
    for k in 1..=steps {
        kernel.advance(&mut w, cfg.dt_flow, cfg, stop_tol)?;
        let t = k as f64 * cfg.dt_flow;
        push(&mut trace, t, &w);
        if *trace.g_norms.last().unwrap() < stop_tol {
            trace.stop_time = Some(t);
            break;
        }
    }
    trace.estimate = Some(KoopmanEstimate::from_ab(w));
    Ok(trace)
}
