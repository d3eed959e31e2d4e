"""Demand inversion: the share contraction, the sparsity-restricted Newton
inversion, and the closed-form nested-logit solve.

These are diagnostics and oracles; the estimator itself never inverts shares.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import individual_log_probs


class InversionError(ValueError):
    pass


@dataclass(frozen=True)
class SparsePattern:
    """Per-market index sets whose shocks share a common value."""

    sets: tuple  # one tuple of 0-based product indices per market

    def __post_init__(self):
        for k in self.sets:
            if len(set(k)) != len(k):
                raise ValueError(f"duplicate indices in {k}")

    def validate(self, J_by_market):
        for k, J in zip(self.sets, J_by_market):
            if any(i < 0 or i >= J for i in k):
                raise ValueError(f"index out of range in {k} for J={J}")


def _check_shares(s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise InversionError("observed shares must be strictly positive")
    if s.sum() >= 1:
        raise InversionError("inside shares must sum to less than one")
    return s


def _shares_and_ind(X, delta, sd, nodes, rc_mask):
    log_s = individual_log_probs(X[None], delta[None], sd, nodes, rc_mask)[0]  # (J+1, R)
    s_ind = np.exp(log_s)
    return s_ind.mean(axis=1), s_ind


def contraction_invert(X, shares, beta_bar, r, nodes, rc_mask, tol=1e-12, max_iter=5000,
                       return_history=False):
    """Shocks xi solving observed = simulated inside shares for fixed (beta_bar, r).

    Iterates ``delta <- delta + log s - log sigma(delta)`` from the plain-logit
    inversion until the sup-norm change is at most ``tol``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s = _check_shares(shares)
    log_s = np.log(s)
    sd = np.exp(np.asarray(r, dtype=float))
    delta = log_s - np.log1p(-s.sum())
    hist = []
    for _ in range(max_iter):
        S, _ = _shares_and_ind(X, delta, sd, nodes, rc_mask)
        change = log_s - np.log(S[1:])
        delta = delta + change
        err = float(np.max(np.abs(change)))
        hist.append(err)
        if err <= tol:
            xi = delta - X @ np.asarray(beta_bar, dtype=float)
            return (xi, hist) if return_history else xi
    raise InversionError(f"contraction did not converge in {max_iter} iterations (residual {err:.3e})")


def _restricted_system(X, beta_bar, free, sparse):
    """Map unknowns (xi_free..., nu) to mean utilities for every product."""
    J = X.shape[0]
    Xb = X @ beta_bar
    E = np.zeros((J, len(free) + 1))
    E[free, np.arange(len(free))] = 1.0
    E[sparse, -1] = 1.0
    return Xb, E


def restricted_invert(X, shares, sparse, beta_bar, r, nodes, rc_mask, tol=1e-12, max_iter=100, start=None):
    """Solve for (xi of unrestricted products, common value nu) given a sparse set.

    Only the shares of the unrestricted products and of the first sparse
    product enter the system. ``shares`` is the full inside vector so that
    indexing stays in the caller's labels. Returns ``(xi_free, nu)``, with
    ``xi_free`` ordered as the unrestricted products appear.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    J = X.shape[0]
    sparse = sorted(set(int(k) for k in sparse))
    if not sparse:
        raise InversionError("sparse set is empty; use contraction_invert")
    free = [j for j in range(J) if j not in sparse]
    eqs = free + [sparse[0]]
    s = np.asarray(shares, dtype=float)
    if np.any(s[eqs] <= 0):
        raise InversionError("observed shares must be strictly positive")
    log_target = np.log(s[eqs])
    beta_bar = np.asarray(beta_bar, dtype=float)
    sd = np.exp(np.asarray(r, dtype=float))
    Xb, E = _restricted_system(X, beta_bar, free, sparse)

    def resid(theta):
        S, s_ind = _shares_and_ind(X, Xb + E @ theta, sd, nodes, rc_mask)
        return log_target - np.log(S[1:][eqs]), S, s_ind

    if start is None:
        # plain-logit guess using the representative share for the whole sparse set
        s_out = max(1.0 - s[free].sum() - len(sparse) * s[sparse[0]], 1e-3)
        theta = np.log(s[eqs]) - np.log(s_out) - Xb[eqs]
    else:
        theta = np.asarray(start, dtype=float).copy()
    F, S, s_ind = resid(theta)
    cond = np.nan
    for _ in range(max_iter):
        if np.max(np.abs(F)) <= tol:
            return theta[:-1], float(theta[-1])
        si = s_ind[1:]
        # d log sigma_j / d delta_k = mean_r s_rj (1[j=k] - s_rk) / sigma_j
        dS = (np.diag(si.mean(axis=1)) - si @ si.T / si.shape[1]) / S[1:, None]
        Jac = (dS @ E)[eqs]
        cond = np.linalg.cond(Jac)
        try:
            step = np.linalg.solve(Jac, F)
        except np.linalg.LinAlgError:
            break
        t, base = 1.0, np.sum(F**2)
        while t > 1e-10:
            Fn, Sn, sn = resid(theta + t * step)
            if np.all(np.isfinite(Fn)) and np.sum(Fn**2) < base:
                break
            t *= 0.5
        else:
            break
        theta, F, S, s_ind = theta + t * step, Fn, Sn, sn
    raise InversionError(
        f"restricted inversion failed (residual {np.max(np.abs(F)):.3e}, Jacobian condition {cond:.3e})"
    )


def embed_restricted(J, sparse, xi_free, nu):
    """Full shock vector from the restricted solution."""
    sparse = sorted(set(int(k) for k in sparse))
    free = [j for j in range(J) if j not in sparse]
    xi = np.empty(J)
    xi[free] = xi_free
    xi[sparse] = nu
    return xi


def nested_logit_shares(delta, nest_labels, lam):
    """Inside shares, outside share and within-nest shares of a one-level nested logit."""
    delta = np.asarray(delta, dtype=float)
    labels = np.asarray(nest_labels)
    scaled = delta / (1 - lam)
    within = np.empty_like(delta)
    inclusive = {}
    for g in np.unique(labels):
        m = labels == g
        D = np.exp(scaled[m]).sum()
        within[m] = np.exp(scaled[m]) / D
        inclusive[g] = D ** (1 - lam)
    denom = 1 + sum(inclusive.values())
    group_share = np.array([inclusive[g] for g in labels]) / denom
    return within * group_share, 1 / denom, within


def nested_logit_solve(shares, s0, X, nest_labels=None, sparse=(1, 2, 3), within=None):
    """Recover (xi of unrestricted products, nu, beta, lambda) by one linear solve.

    Each row reads ``xi_j + beta X_j + lambda log s_{j|g} = log(s_j / s_0)``
    with ``xi_j = nu`` on the sparse set. The system must be square.
    """
    s = np.asarray(shares, dtype=float)
    X = np.asarray(X, dtype=float)
    J = s.size
    if within is None:
        if nest_labels is None:
            raise ValueError("need nest labels or within-group shares")
        labels = np.asarray(nest_labels)
        within = np.array([s[j] / s[labels == labels[j]].sum() for j in range(J)])
    within = np.asarray(within, dtype=float)
    sparse = sorted(set(int(k) for k in sparse))
    free = [j for j in range(J) if j not in sparse]
    n = len(free) + 3
    if n != J:
        raise InversionError(f"system is {J} x {n}; needs as many equations as unknowns")
    M = np.zeros((J, n))
    M[free, np.arange(len(free))] = 1.0
    M[sparse, len(free)] = 1.0
    M[:, -2] = X
    M[:, -1] = np.log(within)
    if np.linalg.matrix_rank(M) < n or np.linalg.cond(M) > 1e12:
        raise InversionError("singular system: X collinear with sparsity indicators")
    sol = np.linalg.solve(M, np.log(s / s0))
    return sol[: len(free)], float(sol[len(free)]), float(sol[-2]), float(sol[-1])
