//! Distributed flow and input controllers.
//!
//! Each law is written as a pure right-hand side. The `_into` forms write into
//! caller-owned buffers and are what the simulator uses.

use crate::error::{check_len, Error, Result};
use crate::graph::NetworkTopology;
use crate::linalg::Matrix;
use crate::real::Real;
use crate::saturation::Saturation;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig<T> {
    pub t_mu: Vec<T>,
    pub t_xi: Vec<T>,
    pub t_theta: Vec<T>,
    pub t_phi: Vec<T>,
    /// Flow maps `λ_k = f_k(μ_k)`.
    pub f: Vec<Saturation<T>>,
    /// Input maps `u_i = g_i(θ_i)`.
    pub g: Vec<Saturation<T>>,
    /// Cost `Σ ½ q_i u_i² + r_i u_i + s_i`.
    pub q: Vec<T>,
    pub r: Vec<T>,
    pub s: Vec<T>,
    pub lcom: Matrix<T>,
}

impl<T: Real> ControllerConfig<T> {
    /// Unit gains, zero linear cost, identity maps.
    pub fn unit(m: usize, p: usize, q: Vec<T>, lcom: Matrix<T>) -> Self {
        Self {
            t_mu: vec![T::one(); m],
            t_xi: vec![T::one(); m],
            t_theta: vec![T::one(); p],
            t_phi: vec![T::one(); p],
            f: vec![Saturation::identity(); m],
            g: vec![Saturation::identity(); p],
            q,
            r: vec![T::zero(); p],
            s: vec![T::zero(); p],
            lcom,
        }
    }

    pub fn validate(&self, topo: &NetworkTopology) -> Result<()> {
        let (m, p) = (topo.m(), topo.p());
        for (name, v, len) in [
            ("T_mu", &self.t_mu, m),
            ("T_xi", &self.t_xi, m),
            ("T_theta", &self.t_theta, p),
            ("T_phi", &self.t_phi, p),
            ("Q", &self.q, p),
        ] {
            check_len(name, v.len(), len)?;
            if v.iter().any(|&t| !(t.is_finite() && t > T::zero())) {
                return Err(Error::Validation(format!("{name} must be diagonal with positive entries")));
            }
        }
        check_len("r", self.r.len(), p)?;
        check_len("s", self.s.len(), p)?;
        check_len("f", self.f.len(), m)?;
        check_len("g", self.g.len(), p)?;
        if self.lcom.rows() != p || self.lcom.cols() != p {
            return Err(Error::Dimension(format!(
                "L^com: expected {p}x{p}, got {}x{}",
                self.lcom.rows(),
                self.lcom.cols()
            )));
        }
        if self.f.iter().chain(&self.g).any(|s| !s.is_strictly_increasing()) {
            return Err(Error::Validation(
                "Assumption 7: flow and input maps must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// `out = Q L (Q v + r)`.
    #[inline]
    pub fn qlq_into(&self, v: &[T], scratch: &mut [T], out: &mut [T]) {
        let p = self.q.len();
        for i in 0..p {
            scratch[i] = self.q[i] * v[i] + self.r[i];
        }
        for i in 0..p {
            let row = self.lcom.row(i);
            let mut acc = T::zero();
            for j in 0..p {
                acc += row[j] * scratch[j];
            }
            out[i] = self.q[i] * acc;
        }
    }

    /// `wᵀ L w` evaluated as `½ Σ a_ij (w_i − w_j)²`, exact in sign for
    /// balanced graphs.
    pub fn laplacian_form(&self, w: &[T]) -> T {
        let p = w.len();
        let mut acc = T::zero();
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    let a = -self.lcom[(i, j)];
                    if a != T::zero() {
                        let dw = w[i] - w[j];
                        acc += a * dw * dw;
                    }
                }
            }
        }
        acc / T::lit(2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T> {
    pub mu: Vec<T>,
    pub xi: Vec<T>,
    pub theta: Vec<T>,
    pub phi: Vec<T>,
}

fn error_into<T: Real>(y: &[T], ybar: &[T], out: &mut [T]) {
    for ((o, &a), &b) in out.iter_mut().zip(y).zip(ybar) {
        *o = a - b;
    }
}

/// Flow controller. Writes `μ̇`, `ξ̇` and `λ = f(μ)`; `ey` receives `y − ȳ`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn flow_ctrl_rhs_into<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    ey: &[T],
    mu: &[T],
    xi: &[T],
    mu_dot: &mut [T],
    xi_dot: &mut [T],
    lambda: &mut [T],
) {
    topo.bt(ey, mu_dot);
    for k in 0..mu.len() {
        let l = cfg.f[k].eval(mu[k]);
        lambda[k] = l;
        let diss = l - xi[k];
        mu_dot[k] = (mu_dot[k] - diss) / cfg.t_mu[k];
        xi_dot[k] = diss / cfg.t_xi[k];
    }
}

/// Input controller. Writes `θ̇`, `φ̇` and `u = g(θ)`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn input_ctrl_rhs_into<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    ey: &[T],
    theta: &[T],
    phi: &[T],
    theta_dot: &mut [T],
    phi_dot: &mut [T],
    u: &mut [T],
    scratch: &mut [T],
) {
    let p = theta.len();
    topo.et(ey, theta_dot);
    let (s1, s2) = scratch.split_at_mut(p);
    cfg.qlq_into(phi, s1, s2);
    for i in 0..p {
        let ui = cfg.g[i].eval(theta[i]);
        u[i] = ui;
        let diss = ui - phi[i];
        theta_dot[i] = (-theta_dot[i] - diss) / cfg.t_theta[i];
        phi_dot[i] = (diss - s2[i]) / cfg.t_phi[i];
    }
}

/// Potential-induced flows: `T_μ μ̇ = Bᵀ(y − ȳ)`.
#[inline]
pub fn potential_flow_rhs_into<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    ey: &[T],
    mu: &[T],
    mu_dot: &mut [T],
    lambda: &mut [T],
) {
    topo.bt(ey, mu_dot);
    for k in 0..mu.len() {
        lambda[k] = cfg.f[k].eval(mu[k]);
        mu_dot[k] /= cfg.t_mu[k];
    }
}

/// Controllers without the dissipation states:
/// `T_μ μ̇ = Bᵀ(y − ȳ)`, `T_θ θ̇ = −QL(Qg(θ) + r) − Eᵀ(y − ȳ)`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn reduced_ctrl_rhs_into<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    ey: &[T],
    mu: &[T],
    theta: &[T],
    mu_dot: &mut [T],
    theta_dot: &mut [T],
    lambda: &mut [T],
    u: &mut [T],
    scratch: &mut [T],
) {
    potential_flow_rhs_into(cfg, topo, ey, mu, mu_dot, lambda);
    let p = theta.len();
    for i in 0..p {
        u[i] = cfg.g[i].eval(theta[i]);
    }
    let (s1, s2) = scratch.split_at_mut(p);
    cfg.qlq_into(u, s1, s2);
    topo.et(ey, theta_dot);
    for i in 0..p {
        theta_dot[i] = (-s2[i] - theta_dot[i]) / cfg.t_theta[i];
    }
}

fn check_common<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    y: &[T],
    ybar: &[T],
) -> Result<Vec<T>> {
    cfg.validate(topo)?;
    check_len("y", y.len(), topo.n())?;
    check_len("ybar", ybar.len(), topo.n())?;
    let mut ey = vec![T::zero(); y.len()];
    error_into(y, ybar, &mut ey);
    Ok(ey)
}

/// Returns `(μ̇, ξ̇, λ)`.
pub fn flow_ctrl_rhs<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    y: &[T],
    ybar: &[T],
    mu: &[T],
    xi: &[T],
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let ey = check_common(cfg, topo, y, ybar)?;
    let m = topo.m();
    check_len("mu", mu.len(), m)?;
    check_len("xi", xi.len(), m)?;
    let (mut a, mut b, mut c) = (vec![T::zero(); m], vec![T::zero(); m], vec![T::zero(); m]);
    flow_ctrl_rhs_into(cfg, topo, &ey, mu, xi, &mut a, &mut b, &mut c);
    Ok((a, b, c))
}

/// Returns `(θ̇, φ̇, u)`.
pub fn input_ctrl_rhs<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    y: &[T],
    ybar: &[T],
    theta: &[T],
    phi: &[T],
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let ey = check_common(cfg, topo, y, ybar)?;
    let p = topo.p();
    check_len("theta", theta.len(), p)?;
    check_len("phi", phi.len(), p)?;
    let (mut a, mut b, mut c) = (vec![T::zero(); p], vec![T::zero(); p], vec![T::zero(); p]);
    let mut scratch = vec![T::zero(); 2 * p];
    input_ctrl_rhs_into(cfg, topo, &ey, theta, phi, &mut a, &mut b, &mut c, &mut scratch);
    Ok((a, b, c))
}

/// Returns `(μ̇, λ)`.
pub fn potential_flow_rhs<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    y: &[T],
    ybar: &[T],
    mu: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let ey = check_common(cfg, topo, y, ybar)?;
    let m = topo.m();
    check_len("mu", mu.len(), m)?;
    let (mut a, mut b) = (vec![T::zero(); m], vec![T::zero(); m]);
    potential_flow_rhs_into(cfg, topo, &ey, mu, &mut a, &mut b);
    Ok((a, b))
}

/// Returns `(μ̇, θ̇)`.
pub fn reduced_ctrl_rhs<T: Real>(
    cfg: &ControllerConfig<T>,
    topo: &NetworkTopology,
    y: &[T],
    ybar: &[T],
    mu: &[T],
    theta: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let ey = check_common(cfg, topo, y, ybar)?;
    let (m, p) = (topo.m(), topo.p());
    check_len("mu", mu.len(), m)?;
    check_len("theta", theta.len(), p)?;
    let (mut a, mut b) = (vec![T::zero(); m], vec![T::zero(); p]);
    let (mut l, mut u) = (vec![T::zero(); m], vec![T::zero(); p]);
    let mut scratch = vec![T::zero(); 2 * p];
    reduced_ctrl_rhs_into(cfg, topo, &ey, mu, theta, &mut a, &mut b, &mut l, &mut u, &mut scratch);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CommGraph;
    use proptest::prelude::*;

    fn cycle4() -> NetworkTopology {
        NetworkTopology::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![0, 1, 2, 3]).unwrap()
    }

    fn dh_config() -> ControllerConfig<f64> {
        let mut c = ControllerConfig::unit(
            4,
            4,
            vec![10.0, 9.0, 7.0, 6.0],
            CommGraph::undirected(4, &[(0, 1, 10.0), (1, 2, 10.0), (2, 3, 10.0), (3, 0, 10.0)])
                .laplacian()
                .unwrap(),
        );
        c.f = vec![Saturation::tanh(0.0, 14.0, 1.0).unwrap(); 4];
        c.g = vec![Saturation::tanh(0.0, 52.0, 1.0).unwrap(); 4];
        c.t_phi = vec![0.005; 4];
        c
    }

    #[test]
    fn flow_controller_at_rest() {
        let cfg = dh_config();
        let mu = [0.3, -0.1, 2.0, 0.0];
        let xi: Vec<f64> = mu.iter().map(|&m| cfg.f[0].eval(m)).collect();
        let (md, xd, _) = flow_ctrl_rhs(&cfg, &cycle4(), &[200.0; 4], &[200.0; 4], &mu, &xi).unwrap();
        assert_eq!(md, vec![0.0; 4]);
        assert_eq!(xd, vec![0.0; 4]);
    }

    #[test]
    fn flow_controller_single_edge() {
        let topo = NetworkTopology::new(2, vec![(0, 1)], vec![0]).unwrap();
        let cfg = ControllerConfig::unit(1, 1, vec![1.0], Matrix::zeros(1, 1));
        let (md, _, _) = flow_ctrl_rhs(&cfg, &topo, &[1.0, 0.0], &[0.0, 0.0], &[0.5], &[0.5]).unwrap();
        assert_eq!(md, vec![1.0]);
    }

    #[test]
    fn input_controller_at_rest() {
        let cfg = dh_config();
        // Qφ ∈ im(1): φ_i = c / q_i
        let phi: Vec<f64> = cfg.q.iter().map(|q| 268.0 / q).collect();
        let theta: Vec<f64> = phi.iter().map(|&p| cfg.g[0].inverse(p).unwrap()).collect();
        let (td, pd, _) = input_ctrl_rhs(&cfg, &cycle4(), &[210.0; 4], &[210.0; 4], &theta, &phi).unwrap();
        assert!(td.iter().all(|v| v.abs() < 1e-12), "{td:?}");
        assert!(pd.iter().all(|v| v.abs() < 1e-9), "{pd:?}");
    }

    #[test]
    fn input_controller_single_actuator() {
        let topo = NetworkTopology::new(1, vec![], vec![0]).unwrap();
        let mut cfg = ControllerConfig::unit(0, 1, vec![1.0], Matrix::zeros(1, 1));
        cfg.t_theta = vec![4.0];
        let (td, _, _) = input_ctrl_rhs(&cfg, &topo, &[-1.0], &[0.0], &[2.0], &[2.0]).unwrap();
        assert_eq!(td, vec![0.25]);
    }

    #[test]
    fn potential_flow_examples() {
        let topo = NetworkTopology::new(2, vec![(0, 1)], vec![0]).unwrap();
        let mut cfg: ControllerConfig<f64> = ControllerConfig::unit(1, 1, vec![1.0], Matrix::zeros(1, 1));
        let (md, _) = potential_flow_rhs(&cfg, &topo, &[5.0, 5.0], &[5.0, 5.0], &[3.0]).unwrap();
        assert_eq!(md, vec![0.0]);
        cfg.t_mu = vec![0.0135];
        let (md, l) = potential_flow_rhs(&cfg, &topo, &[165_001.0, 165_000.0], &[165_000.0; 2], &[7.0]).unwrap();
        assert!((md[0] - 74.074074074074).abs() < 1e-9);
        assert_eq!(l, vec![7.0]);
        let (md, _) = potential_flow_rhs(&cfg, &topo, &[3.0, 3.0], &[1.0, 1.0], &[0.0]).unwrap();
        assert_eq!(md, vec![0.0]);
    }

    #[test]
    fn reduced_controller_at_rest() {
        let topo = cycle4();
        let cfg = dh_config();
        let theta: Vec<f64> = cfg.q.iter().map(|q| cfg.g[0].inverse(268.0 / q).unwrap()).collect();
        let (md, td) = reduced_ctrl_rhs(&cfg, &topo, &[1.0; 4], &[1.0; 4], &[0.0; 4], &theta).unwrap();
        assert_eq!(md, vec![0.0; 4]);
        assert!(td.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn reduced_controller_oscillator_derivative() {
        // linear case, x̃ = 1 sin t, θ̃ = 1 cos t: θ̇ = −sin t
        let topo = cycle4();
        let cfg = ControllerConfig::unit(4, 4, vec![1.0; 4], CommGraph::complete(4, 1.0).laplacian().unwrap());
        let t = 0.7f64;
        let (md, td) = reduced_ctrl_rhs(&cfg, &topo, &[t.sin(); 4], &[0.0; 4], &[0.0; 4], &[t.cos(); 4]).unwrap();
        assert_eq!(md, vec![0.0; 4]);
        for v in td {
            assert!((v + t.sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_errors() {
        let cfg = dh_config();
        assert!(flow_ctrl_rhs(&cfg, &cycle4(), &[0.0; 3], &[0.0; 4], &[0.0; 4], &[0.0; 4]).is_err());
        assert!(input_ctrl_rhs(&cfg, &cycle4(), &[0.0; 4], &[0.0; 4], &[0.0; 2], &[0.0; 4]).is_err());
    }

    #[test]
    fn laplacian_form_matches_quadratic_form() {
        let cfg = dh_config();
        let w = [1.0, -2.0, 0.5, 3.0];
        let lw = cfg.lcom.mul_vec(&w);
        let direct: f64 = w.iter().zip(&lw).map(|(a, b)| a * b).sum();
        assert!((cfg.laplacian_form(&w) - direct).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn outputs_inside_ranges(mu in prop::collection::vec(-1e6..1e6f64, 4), th in prop::collection::vec(-1e6..1e6f64, 4)) {
            let cfg = dh_config();
            let (_, _, l) = flow_ctrl_rhs(&cfg, &cycle4(), &[0.0; 4], &[0.0; 4], &mu, &[0.0; 4]).unwrap();
            prop_assert!(l.iter().all(|&v| v > 0.0 && v < 14.0));
            let (_, _, u) = input_ctrl_rhs(&cfg, &cycle4(), &[0.0; 4], &[0.0; 4], &th, &[0.0; 4]).unwrap();
            prop_assert!(u.iter().all(|&v| v > 0.0 && v < 52.0));
        }

        #[test]
        fn hvdc_inputs_inside_range(th in prop::collection::vec(-1e6..1e6f64, 3)) {
            let topo = NetworkTopology::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![1, 2, 3]).unwrap();
            let mut cfg = ControllerConfig::unit(4, 3, vec![1.0; 3], CommGraph::undirected(3, &[(0, 1, 1e4), (1, 2, 1e4)]).laplacian().unwrap());
            cfg.g = vec![Saturation::tanh(130.0, 145.0, 1.0).unwrap(); 3];
            let (_, _, u) = input_ctrl_rhs(&cfg, &topo, &[0.0; 4], &[0.0; 4], &th, &[0.0; 3]).unwrap();
            prop_assert!(u.iter().all(|&v| v > 130.0 && v < 145.0));
        }

        #[test]
        fn laplacian_form_symmetric_part(w in prop::collection::vec(-100.0..100.0f64, 3)) {
            // balanced but not symmetric
            let l = CommGraph::new(3, vec![(0, 1, 2.0), (1, 2, 2.0), (2, 0, 2.0), (1, 0, 0.5), (2, 1, 0.5), (0, 2, 0.5)]).laplacian().unwrap();
            let lw = l.mul_vec(&w);
            let direct: f64 = w.iter().zip(&lw).map(|(a, b)| a * b).sum();
            let sym = l.transpose().mul_vec(&w);
            let direct_sym: f64 = w.iter().zip(lw.iter().zip(&sym)).map(|(a, (b, c))| a * (b + c) / 2.0).sum();
            let nw: f64 = w.iter().map(|v| v * v).sum();
            prop_assert!((direct - direct_sym).abs() <= 1e-12 * nw.max(1.0));
            prop_assert!(direct >= -1e-12 * nw);
        }
    }
}
