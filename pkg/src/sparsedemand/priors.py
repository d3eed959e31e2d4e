"""Prior densities and the conjugate conditionals for the sparsity layer."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LOG_2PI = np.log(2 * np.pi)


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    mu_beta: float | tuple = 0.0
    V_beta: float | tuple = 10.0
    mu_xi: float = 0.0
    V_xi: float = 10.0
    V_r: float | tuple = 0.5
    tau0_sq: float = 1e-3
    tau1_sq: float = 1.0
    a_phi: float = 1.0
    b_phi: float = 1.0

    def __post_init__(self):
        if not 0 < self.tau0_sq < self.tau1_sq:
            raise PriorError(f"need 0 < tau0_sq < tau1_sq, got {self.tau0_sq}, {self.tau1_sq}")
        if self.tau1_sq / self.tau0_sq > 10_000:
            warnings.warn(
                f"tau1_sq/tau0_sq = {self.tau1_sq / self.tau0_sq:g} exceeds 10,000; "
                "the sampler may mix poorly", stacklevel=2)
        if self.a_phi <= 0 or self.b_phi <= 0:
            raise PriorError("Beta parameters must be positive")
        for name in ("V_beta", "V_xi", "V_r"):
            if np.any(np.asarray(getattr(self, name), dtype=float) <= 0):
                raise PriorError(f"{name} must be positive")

    def mu_beta_vec(self, d):
        return np.broadcast_to(np.asarray(self.mu_beta, dtype=float), (d,))

    def V_beta_vec(self, d):
        return np.broadcast_to(np.asarray(self.V_beta, dtype=float), (d,))

    def V_r_vec(self, d):
        return np.broadcast_to(np.asarray(self.V_r, dtype=float), (d,))

    def eta_variance(self, gamma):
        return np.where(np.asarray(gamma, dtype=bool), self.tau1_sq, self.tau0_sq)


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def log_prior_beta(beta_bar, cfg: PriorConfig) -> float:
    beta_bar = np.asarray(beta_bar, dtype=float)
    d = beta_bar.size
    return float(np.sum(normal_logpdf(beta_bar, cfg.mu_beta_vec(d), cfg.V_beta_vec(d))))


def log_prior_r(r, cfg: PriorConfig) -> float:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return float(np.sum(normal_logpdf(r, 0.0, cfg.V_r_vec(r.size))))


def log_prior_xi_bar(xi_bar, cfg: PriorConfig) -> float:
    return float(np.sum(normal_logpdf(xi_bar, cfg.mu_xi, cfg.V_xi)))


def log_prior_eta(eta_t, gamma_t, cfg: PriorConfig) -> float:
    eta_t = np.asarray(eta_t, dtype=float)
    if np.shape(gamma_t) != eta_t.shape:
        raise PriorError("eta and gamma lengths differ")
    return float(np.sum(normal_logpdf(eta_t, 0.0, cfg.eta_variance(gamma_t))))


def gamma_log_odds(eta, phi, cfg: PriorConfig):
    """Log odds of slab membership; +/-inf at phi in {0, 1} or |eta| = inf."""
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        prior_odds = np.log(phi) - np.log1p(-phi)
        # log N(eta | 0, tau1^2) - log N(eta | 0, tau0^2), never inf - inf
        dens = -0.5 * np.log(cfg.tau1_sq / cfg.tau0_sq) + 0.5 * eta**2 * (1 / cfg.tau0_sq - 1 / cfg.tau1_sq)
    return prior_odds + dens


def gamma_success_prob(eta_jt, phi_t, cfg: PriorConfig):
    """Conditional probability that eta sits in the slab component."""
    if np.any((np.asarray(phi_t) < 0) | (np.asarray(phi_t) > 1)):
        raise PriorError("phi must lie in [0, 1]")
    eta_jt = np.asarray(eta_jt, dtype=float)
    phi_t = np.asarray(phi_t, dtype=float)
    with np.errstate(invalid="ignore"):
        lo = gamma_log_odds(eta_jt, phi_t, cfg)
    # phi = 0 rules the slab out even where the spike density underflows
    lo = np.where(phi_t == 0, -np.inf, lo)
    out = expit(lo)
    return float(out) if out.ndim == 0 else out


def phi_posterior(gamma_t, cfg: PriorConfig) -> tuple[float, float]:
    g = np.asarray(gamma_t, dtype=bool)
    k = int(g.sum())
    return cfg.a_phi + k, cfg.b_phi + g.size - k
