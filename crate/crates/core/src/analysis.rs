//! Offline checks on a closed loop: equilibrium residuals, passivity
//! identities, observability rank of the linear potential-flow case and a
//! structural audit of which states each controller reads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::graph::NetworkTopology;
use crate::linalg::{numerical_rank, Matrix};
use crate::model::{psi, Variant};
use crate::real::{norm2, Real};
use crate::sim::{storage_v, storage_vdot, ClosedLoop, Equilibrium, Layout, Rk4};

/// Norms of the five equilibrium conditions, in order: plant balance, flow
/// controller, flow dissipation, input controller, input consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResidual<T> {
    pub r: [T; 5],
    pub max: T,
}

/// Evaluates the equilibrium conditions at `z` without the time constants:
///
/// - `r1 = ‖Ψ(x) − Bf(μ) + Eg(θ) − d‖`
/// - `r2 = ‖Bᵀ(y − ȳ) − (f(μ) − ξ)‖`
/// - `r3 = ‖f(μ) − ξ‖`
/// - `r4 = ‖−Eᵀ(y − ȳ) − (g(θ) − φ)‖`
/// - `r5 = ‖g(θ) − φ − QL(Qφ + r)‖`
///
/// Variants without `ξ` or `φ` report zero for the missing condition and use
/// their own controller law in `r2` and `r4`.
pub fn equilibrium_residual<T: Real>(sys: &ClosedLoop<T>, z: &[T], d: &[T], ybar: &[T]) -> Result<EquilibriumResidual<T>> {
    let lay = sys.layout();
    check_len("state", z.len(), lay.dim())?;
    check_len("d", d.len(), lay.n)?;
    check_len("ybar", ybar.len(), lay.n)?;
    let mut dz = vec![T::zero(); lay.dim()];
    let mut ws = sys.workspace();
    sys.rhs_into(d, ybar, z, &mut dz, &mut ws);
    let c = &sys.ctrl;
    let scaled = |range: std::ops::Range<usize>, t: &[T]| -> T {
        let v: Vec<T> = dz[range].iter().zip(t).map(|(&a, &b)| a * b).collect();
        norm2(&v)
    };
    let r = [
        scaled(lay.x(), &sys.plant.tx),
        scaled(lay.mu(), &c.t_mu),
        scaled(lay.xi(), &c.t_xi),
        scaled(lay.theta(), &c.t_theta),
        scaled(lay.phi(), &c.t_phi),
    ];
    let max = r.iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(EquilibriumResidual { r, max })
}

/// Largest relative mismatches between the closed-form storage derivatives
/// and the chain rule `∇V · ż` over random states.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivityReport<T> {
    pub trials: usize,
    /// Plant and flow-controller part `V₁`.
    pub v1_mismatch: T,
    /// Input-controller part `V₂`.
    pub v2_mismatch: T,
    /// Whole storage function.
    pub v_mismatch: T,
    /// Largest closed-form `V̇` seen; nonpositive when the loop is passive.
    pub max_vdot: T,
    /// Largest `(h(x) − h(x̄))ᵀ(Ψ(x) − Ψ(x̄))`, compartmental variant only.
    pub max_psi_term: Option<T>,
}

impl<T: Real> PassivityReport<T> {
    pub fn max_mismatch(&self) -> T {
        self.v1_mismatch.max(self.v2_mismatch).max(self.v_mismatch)
    }
}

struct Parts<T> {
    v1: T,
    v1_scale: T,
    v2: T,
    v2_scale: T,
}

fn chain_rule<T: Real>(sys: &ClosedLoop<T>, eq: &Equilibrium<T>, lay: &Layout, z: &[T], dz: &[T]) -> Parts<T> {
    let c = &sys.ctrl;
    let (mut v1, mut s1, mut v2, mut s2) = (T::zero(), T::zero(), T::zero(), T::zero());
    let acc = |v: &mut T, s: &mut T, term: T| {
        *v += term;
        *s += term.abs();
    };
    for (i, j) in lay.x().enumerate() {
        let g = sys.plant.tx[i] * (sys.plant.h[i].eval(z[j]) - eq.y[i]);
        acc(&mut v1, &mut s1, g * dz[j]);
    }
    for (k, j) in lay.mu().enumerate() {
        let g = c.t_mu[k] * (c.f[k].eval(z[j]) - eq.lambda[k]);
        acc(&mut v1, &mut s1, g * dz[j]);
    }
    for (k, j) in lay.xi().enumerate() {
        let g = c.t_xi[k] * (z[j] - eq.xi[k]);
        acc(&mut v1, &mut s1, g * dz[j]);
    }
    for (i, j) in lay.theta().enumerate() {
        let g = c.t_theta[i] * (c.g[i].eval(z[j]) - eq.u[i]);
        acc(&mut v2, &mut s2, g * dz[j]);
    }
    for (i, j) in lay.phi().enumerate() {
        let g = c.t_phi[i] * (z[j] - eq.phi[i]);
        acc(&mut v2, &mut s2, g * dz[j]);
    }
    Parts { v1, v1_scale: s1, v2, v2_scale: s2 }
}

/// Closed forms of the two halves of `V̇`:
/// `V̇₁ = (h − h̄)ᵀE(g − ḡ) − ‖f − ξ‖² [+ (h − h̄)ᵀ(Ψ − Ψ̄)]` and
/// `V̇₂ = −(h − h̄)ᵀE(g − ḡ) − wᵀLw − ‖g − φ‖²` with `w = Q(φ − φ̄)`.
fn closed_forms<T: Real>(sys: &ClosedLoop<T>, eq: &Equilibrium<T>, lay: &Layout, z: &[T]) -> (T, T, Option<T>) {
    let c = &sys.ctrl;
    let x = &z[lay.x()];
    let mut cross = T::zero();
    for (i, &node) in sys.topo.actuated().iter().enumerate() {
        let e = sys.plant.h[node].eval(x[node]) - eq.y[node];
        cross += e * (c.g[i].eval(z[lay.theta().start + i]) - eq.u[i]);
    }
    let mut v1 = cross;
    for (k, (&mu, &xi)) in z[lay.mu()].iter().zip(&z[lay.xi()]).enumerate() {
        let e = c.f[k].eval(mu) - xi;
        v1 -= e * e;
    }
    let psi_term = match (sys.variant, &sys.comp) {
        (Variant::Compartmental, Some(comp)) => {
            let p = psi(&sys.topo, &sys.plant, comp, x);
            let mut s = T::zero();
            for i in 0..lay.n {
                s += (sys.plant.h[i].eval(x[i]) - eq.y[i]) * (p[i] - eq.psi[i]);
            }
            v1 += s;
            Some(s)
        }
        _ => None,
    };
    let w: Vec<T> = z[lay.phi()].iter().enumerate().map(|(i, &ph)| c.q[i] * (ph - eq.phi[i])).collect();
    let mut v2 = -cross - c.laplacian_form(&w);
    for (i, (&th, &ph)) in z[lay.theta()].iter().zip(&z[lay.phi()]).enumerate() {
        let e = c.g[i].eval(th) - ph;
        v2 -= e * e;
    }
    (v1, v2, psi_term)
}

fn rel<T: Real>(a: T, b: T, scale: T) -> T {
    (a - b).abs() / scale.max(a.abs()).max(T::min_positive_value())
}

/// Draws a state around the reference: each coordinate moves by up to
/// `spread · (1 + |z̄|)`.
fn random_state<T: Real>(rng: &mut ChaCha8Rng, reference: &[T], spread: f64) -> Vec<T> {
    reference
        .iter()
        .map(|&r| r + T::lit(rng.gen_range(-spread..spread)) * (T::one() + r.abs()))
        .collect()
}

/// Compares the closed-form storage derivatives with `∇V · ż` on `trials`
/// random states around `eq`.
pub fn passivity_check<T: Real>(sys: &ClosedLoop<T>, eq: &Equilibrium<T>, trials: usize, seed: u64) -> Result<PassivityReport<T>> {
    if sys.variant == Variant::Reduced {
        return Err(Error::Validation("the reduced controller has no storage function".into()));
    }
    if trials == 0 {
        return Err(Error::Validation("passivity check needs at least one trial".into()));
    }
    let lay = sys.layout();
    let reference = eq.state(sys, T::zero()).z;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = sys.workspace();
    let mut dz = vec![T::zero(); lay.dim()];
    let mut report = PassivityReport {
        trials,
        v1_mismatch: T::zero(),
        v2_mismatch: T::zero(),
        v_mismatch: T::zero(),
        max_vdot: T::neg_infinity(),
        max_psi_term: None,
    };
    for _ in 0..trials {
        let z = random_state(&mut rng, &reference, 0.5);
        sys.rhs_into(&eq.d, &eq.y, &z, &mut dz, &mut ws);
        let parts = chain_rule(sys, eq, &lay, &z, &dz);
        let (v1, v2, psi_term) = closed_forms(sys, eq, &lay, &z);
        let vdot = storage_vdot(sys, eq, &z);
        report.v1_mismatch = report.v1_mismatch.max(rel(v1, parts.v1, parts.v1_scale));
        report.v2_mismatch = report.v2_mismatch.max(rel(v2, parts.v2, parts.v2_scale));
        report.v_mismatch =
            report.v_mismatch.max(rel(vdot, parts.v1 + parts.v2, parts.v1_scale + parts.v2_scale));
        report.max_vdot = report.max_vdot.max(vdot);
        if let Some(s) = psi_term {
            report.max_psi_term = Some(report.max_psi_term.map_or(s, |m| m.max(s)));
        }
    }
    Ok(report)
}

/// Relative mismatch between the closed-form `V̇(z)` and the central
/// difference of `V` along one RK4 step of size `dt` forward and backward.
pub fn vdot_finite_difference<T: Real>(sys: &ClosedLoop<T>, eq: &Equilibrium<T>, z: &[T], dt: T) -> T {
    let lay = sys.layout();
    let mut ws = sys.workspace();
    let mut rk = Rk4::new(lay.dim());
    let mut f = |_t: T, s: &[T], ds: &mut [T]| sys.rhs_into(&eq.d, &eq.y, s, ds, &mut ws);
    let mut fwd = z.to_vec();
    rk.step(&mut f, T::zero(), dt, &mut fwd);
    let mut bwd = z.to_vec();
    rk.step(&mut f, T::zero(), -dt, &mut bwd);
    let fd = (storage_v(sys, eq, &fwd) - storage_v(sys, eq, &bwd)) / (T::lit(2.0) * dt);
    let closed = storage_vdot(sys, eq, z);
    (fd - closed).abs() / closed.abs().max(T::min_positive_value())
}

/// Numerical rank of the stacked matrix with blocks `(−1)ᵏ EᵀYᵏ`,
/// `k = 0..n−1`, `Y = T_x⁻¹ B T_μ⁻¹ Bᵀ`, and whether it equals `n`.
///
/// Each block is rescaled to unit max-entry before the next power is taken,
/// which leaves the row space unchanged.
pub fn observability_rank<T: Real>(topo: &NetworkTopology, tx: &[T], tmu: &[T]) -> Result<(usize, bool)> {
    let n = topo.n();
    check_len("T_x", tx.len(), n)?;
    check_len("T_mu", tmu.len(), topo.m())?;
    if tx.iter().chain(tmu).any(|&t| !(t.is_finite() && t > T::zero())) {
        return Err(Error::Validation("time constants must be positive".into()));
    }
    let b: Matrix<T> = topo.incidence_matrix();
    let bt_scaled = Matrix::from_fn(topo.m(), n, |k, j| b[(j, k)] / tmu[k]);
    let y = Matrix::from_fn(n, n, |i, j| {
        let mut acc = T::zero();
        for k in 0..topo.m() {
            acc += b[(i, k)] * bt_scaled[(k, j)];
        }
        acc / tx[i]
    });
    let mut block: Matrix<T> = topo.input_indicator::<T>().transpose();
    let mut stacked = block.clone();
    for k in 1..n {
        block = block.matmul(&y);
        let s = block.max_abs();
        if s > T::zero() {
            block = block.scale(T::one() / s);
        }
        let signed = if k % 2 == 1 { block.scale(-T::one()) } else { block.clone() };
        stacked = stacked.vcat(&signed);
    }
    let rank = numerical_rank(&stacked);
    Ok((rank, rank == n))
}

/// Outcome of the structural audit; `violations` names every forbidden
/// dependency found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityReport {
    pub passed: bool,
    pub violations: Vec<String>,
}

/// Checks that each controller state's derivative reads only local and
/// neighbouring information.
pub fn sparsity_audit<T: Real>(sys: &ClosedLoop<T>) -> SparsityReport {
    let mut ws = sys.workspace();
    let (d, ybar) = audit_inputs(sys);
    sparsity_audit_with(sys, |z, dz| sys.rhs_into(&d, &ybar, z, dz, &mut ws))
}

fn audit_inputs<T: Real>(sys: &ClosedLoop<T>) -> (Vec<T>, Vec<T>) {
    let n = sys.layout().n;
    let ybar = sys.plant.h.iter().map(|h| if h.is_bounded() { h.midrange() } else { T::zero() }).collect();
    (vec![T::one(); n], ybar)
}

/// Allowed dependencies per state index, for rows of the controller states.
fn allowed<T: Real>(sys: &ClosedLoop<T>, lay: &Layout) -> Vec<Option<Vec<usize>>> {
    let mut out = vec![None; lay.dim()];
    let topo = &sys.topo;
    let lcom_nbrs = |i: usize| -> Vec<usize> {
        (0..lay.p).filter(|&j| j != i && sys.ctrl.lcom[(i, j)] != T::zero()).collect()
    };
    for (k, &(a, b)) in topo.edges().iter().enumerate() {
        let mut mu_ok = vec![a, b, lay.mu().start + k];
        if lay.has_xi {
            mu_ok.push(lay.xi().start + k);
            out[lay.xi().start + k] = Some(vec![lay.mu().start + k, lay.xi().start + k]);
        }
        out[lay.mu().start + k] = Some(mu_ok);
    }
    for (i, &node) in topo.actuated().iter().enumerate() {
        let mut th_ok = vec![node, lay.theta().start + i];
        if lay.has_phi {
            th_ok.push(lay.phi().start + i);
            let mut ph_ok = vec![lay.theta().start + i, lay.phi().start + i];
            ph_ok.extend(lcom_nbrs(i).into_iter().map(|j| lay.phi().start + j));
            out[lay.phi().start + i] = Some(ph_ok);
        } else {
            th_ok.extend(lcom_nbrs(i).into_iter().map(|j| lay.theta().start + j));
        }
        out[lay.theta().start + i] = Some(th_ok);
    }
    out
}

fn state_name(lay: &Layout, j: usize) -> String {
    let blocks = [("x", lay.x()), ("mu", lay.mu()), ("xi", lay.xi()), ("theta", lay.theta()), ("phi", lay.phi())];
    for (name, r) in blocks {
        if r.contains(&j) {
            return format!("{name}_{}", j - r.start + 1);
        }
    }
    format!("z_{j}")
}

/// [`sparsity_audit`] against an arbitrary right-hand side with the layout of
/// `sys`. Dependencies are detected by perturbing one coordinate at a time at
/// two random states and comparing outputs bit for bit.
pub fn sparsity_audit_with<T: Real, F: FnMut(&[T], &mut [T])>(sys: &ClosedLoop<T>, mut rhs: F) -> SparsityReport {
    let lay = sys.layout();
    let dim = lay.dim();
    let allowed = allowed(sys, &lay);
    let mut found = vec![vec![false; dim]; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(0xa0d1);
    let base = vec![T::zero(); dim];
    let mut f0 = vec![T::zero(); dim];
    let mut f1 = vec![T::zero(); dim];
    for _ in 0..2 {
        let z = random_state(&mut rng, &base, 1.0);
        rhs(&z, &mut f0);
        let mut zz = z.clone();
        for j in 0..dim {
            zz[j] = z[j] + T::lit(0.37) * (T::one() + z[j].abs());
            rhs(&zz, &mut f1);
            zz[j] = z[j];
            for i in 0..dim {
                if f1[i].to_f64_lossy().to_bits() != f0[i].to_f64_lossy().to_bits() {
                    found[i][j] = true;
                }
            }
        }
    }
    let mut violations = Vec::new();
    for (i, ok) in allowed.iter().enumerate() {
        let Some(ok) = ok else { continue };
        for j in 0..dim {
            if found[i][j] && !ok.contains(&j) {
                violations.push(format!("d{}/dt reads {}", state_name(&lay, i), state_name(&lay, j)));
            }
        }
    }
    SparsityReport { passed: violations.is_empty(), violations }
}
