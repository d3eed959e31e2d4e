"""Data model and deterministic evaluations of the random-coefficients logit.

Markets are stored individually (``MarketData``) and packed into padded
``(T, Jmax)`` arrays for vectorized evaluation. Padded slots carry zero
quantity and minus-infinity utility, so they drop out of every sum.

Index 0 of every share vector is the outside good.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp


class DataError(ValueError):
    """Invalid or inconsistent market data."""


@dataclass(frozen=True)
class MarketData:
    market_id: object
    market_size: int
    q: np.ndarray
    X: np.ndarray
    product_ids: tuple = None

    def __post_init__(self):
        q = np.asarray(self.q)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if q.ndim != 1 or q.size < 1:
            raise DataError(f"market {self.market_id}: need at least one product")
        if X.shape[0] != q.size:
            raise DataError(
                f"market {self.market_id}: X has {X.shape[0]} rows for {q.size} products"
            )
        if not np.all(np.isfinite(X)):
            raise DataError(f"market {self.market_id}: non-finite characteristics")
        if np.any(q < 0) or not np.all(q == np.round(q)):
            raise DataError(f"market {self.market_id}: quantities must be non-negative integers")
        q = q.astype(np.int64)
        if int(self.market_size) != self.market_size or self.market_size <= 0:
            raise DataError(f"market {self.market_id}: market size must be a positive integer")
        if q.sum() > self.market_size:
            raise DataError(
                f"market {self.market_id}: quantities sum to {q.sum()} > market size {self.market_size}"
            )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "market_size", int(self.market_size))
        ids = tuple(range(1, q.size + 1)) if self.product_ids is None else tuple(self.product_ids)
        if len(ids) != q.size:
            raise DataError(f"market {self.market_id}: {len(ids)} product ids for {q.size} products")
        object.__setattr__(self, "product_ids", ids)

    @property
    def J(self) -> int:
        return self.q.size

    @property
    def q0(self) -> int:
        return self.market_size - int(self.q.sum())


@dataclass(frozen=True)
class Packed:
    """Padded array view of a dataset."""

    X: np.ndarray  # (T, Jmax, dX)
    q: np.ndarray  # (T, Jmax + 1), outside good first
    mask: np.ndarray  # (T, Jmax) real products
    J: np.ndarray  # (T,)
    N: np.ndarray  # (T,)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def Jmax(self) -> int:
        return self.X.shape[1]

    @property
    def dX(self) -> int:
        return self.X.shape[2]

    def take(self, idx) -> "Packed":
        return Packed(self.X[idx], self.q[idx], self.mask[idx], self.J[idx], self.N[idx])


@dataclass
class Dataset:
    markets: list
    rc_mask: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        if not self.markets:
            raise DataError("dataset has no markets")
        dims = {m.X.shape[1] for m in self.markets}
        if len(dims) != 1:
            raise DataError(f"markets disagree on characteristic dimension: {sorted(dims)}")
        self.rc_mask = np.asarray(self.rc_mask, dtype=bool)
        if self.rc_mask.shape != (self.d_X,):
            raise DataError(f"rc_mask has length {self.rc_mask.size}, expected {self.d_X}")
        if not self.columns:
            self.columns = tuple(f"x{k}" for k in range(self.d_X))
        if len(self.columns) != self.d_X:
            raise DataError("column names do not match characteristic dimension")

    @property
    def d_X(self) -> int:
        return self.markets[0].X.shape[1]

    @property
    def d_rc(self) -> int:
        return int(self.rc_mask.sum())

    @property
    def T(self) -> int:
        return len(self.markets)

    @property
    def J(self) -> np.ndarray:
        return np.array([m.J for m in self.markets])

    @cached_property
    def packed(self) -> Packed:
        T, Jmax = self.T, int(self.J.max())
        X = np.zeros((T, Jmax, self.d_X))
        q = np.zeros((T, Jmax + 1))
        mask = np.zeros((T, Jmax), dtype=bool)
        for t, m in enumerate(self.markets):
            X[t, : m.J] = m.X
            q[t, 0] = m.q0
            q[t, 1 : m.J + 1] = m.q
            mask[t, : m.J] = True
        N = np.array([m.market_size for m in self.markets], dtype=float)
        return Packed(X, q, mask, self.J, N)


@dataclass
class ParamState:
    """Full parameter vector; ``eta`` and ``gamma`` are padded to ``(T, Jmax)``.

    Padded entries are held at zero and never read.
    """

    beta_bar: np.ndarray
    r: np.ndarray
    xi_bar: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.beta_bar = np.asarray(self.beta_bar, dtype=float)
        self.r = np.atleast_1d(np.asarray(self.r, dtype=float))
        self.xi_bar = np.atleast_1d(np.asarray(self.xi_bar, dtype=float))
        self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(self.gamma)).astype(bool)
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.r)

    @classmethod
    def initial(cls, data: Dataset, beta_bar=None, r=None, xi_bar=None, phi=0.5):
        p = data.packed
        return cls(
            beta_bar=np.zeros(data.d_X) if beta_bar is None else beta_bar,
            r=np.full(data.d_rc, np.log(0.1)) if r is None else r,
            xi_bar=np.zeros(p.T) if xi_bar is None else xi_bar,
            eta=np.zeros((p.T, p.Jmax)),
            gamma=np.zeros((p.T, p.Jmax), dtype=bool),
            phi=np.full(p.T, phi),
        )

    def copy(self) -> "ParamState":
        return ParamState(
            self.beta_bar.copy(), self.r.copy(), self.xi_bar.copy(),
            self.eta.copy(), self.gamma.copy(), self.phi.copy(),
        )

    def eta_t(self, t: int, J: int) -> np.ndarray:
        return self.eta[t, :J]


@dataclass(frozen=True)
class RcDraws:
    nodes: np.ndarray  # (R0, d_rc)

    @property
    def R0(self) -> int:
        return self.nodes.shape[0]

    @classmethod
    def standard_normal(cls, R0: int, d_rc: int, rng: np.random.Generator) -> "RcDraws":
        if R0 < 1:
            raise ValueError("need at least one node")
        return cls(rng.standard_normal((R0, d_rc)))


def full_sd(data_rc_mask: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Per-characteristic random-coefficient SD, zero on fixed columns."""
    sd = np.zeros(data_rc_mask.size)
    sd[data_rc_mask] = np.exp(r)
    return sd


def compute_delta(market: MarketData, beta_bar, xi_bar_t, eta_t) -> np.ndarray:
    beta_bar = np.asarray(beta_bar, dtype=float)
    eta_t = np.asarray(eta_t, dtype=float)
    if beta_bar.shape != (market.X.shape[1],) or eta_t.shape != (market.J,):
        raise DataError(
            f"market {market.market_id}: dimension mismatch "
            f"(beta {beta_bar.shape}, eta {eta_t.shape}, X {market.X.shape})"
        )
    return market.X @ beta_bar + xi_bar_t + eta_t


def packed_delta(p: Packed, beta_bar, xi_bar, eta) -> np.ndarray:
    """(T, Jmax) mean utilities with -inf on padded slots."""
    delta = p.X @ beta_bar + xi_bar[:, None] + eta
    return np.where(p.mask, delta, -np.inf)


def _lse(u, axis):
    m = u.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(u - m).sum(axis=axis, keepdims=True))


def individual_log_probs(X, delta, sd_rc, nodes, rc_mask) -> np.ndarray:
    """Log choice probabilities per node, shape (T, J+1, R), outside first.

    ``sd_rc`` holds the SDs of the random-coefficient columns only. With every
    SD zero a single node is used so that the plain logit is reproduced exactly.
    """
    if np.any(np.isnan(delta)):
        raise DataError("NaN in mean utilities")
    T, J = delta.shape
    u = np.empty((T, J + 1, 1 if not np.any(sd_rc > 0) else nodes.shape[0]))
    u[:, 0, :] = 0.0
    if u.shape[2] == 1:
        u[:, 1:, 0] = delta
    else:
        u[:, 1:, :] = delta[:, :, None] + X[..., rc_mask] @ (nodes * sd_rc).T
    return u - _lse(u, axis=1)


def log_shares_from_individual(log_s_ind) -> np.ndarray:
    R = log_s_ind.shape[2]
    return logsumexp(log_s_ind, axis=2) - np.log(R)


def _log_mean_exp(log_s_ind):
    """log of the node average; falls back to log-sum-exp where shares underflow."""
    S = np.exp(log_s_ind).mean(axis=2)
    with np.errstate(divide="ignore"):
        out = np.log(S)
    low = S < 1e-250
    if low.any():
        out[low] = log_shares_from_individual(log_s_ind)[low]
    return out


def _loglik_terms(q, log_s) -> np.ndarray:
    return np.where(q > 0, q * np.where(q > 0, log_s, 0.0), 0.0).sum(axis=1)


def _plain_logit_derivs(log_s, q, with_value):
    """Single-node case: grad = q - N s, hess = -N (diag(s) - s s^T)."""
    s = np.exp(log_s[:, 1:])
    N = q.sum(axis=1)[:, None]
    grad = q[:, 1:] - N * s
    hess = N[..., None] * (s[:, :, None] * s[:, None, :])
    idx = np.arange(s.shape[1])
    hess[:, idx, idx] -= N * s
    if with_value:
        return _loglik_terms(q, log_s), grad, hess
    return grad, hess


def delta_derivs(log_s_ind, q, with_value=False):
    """Gradient and Hessian of sum_j q_j log sigma_j in the inside mean utilities.

    Returns ``(grad (T, J), hess (T, J, J))``, preceded by the per-market
    log-likelihood when ``with_value``. Every parameter block enters the mean
    utilities linearly, so block derivatives follow by projection.
    """
    R = log_s_ind.shape[2]
    if R == 1:
        return _plain_logit_derivs(log_s_ind[..., 0], q, with_value)
    s = np.exp(log_s_ind)  # (T, J+1, R)
    S = s.mean(axis=2)
    w = np.divide(q, S, out=np.zeros_like(S), where=S > 0)
    c = np.einsum("tjr,tj->tr", s, w)
    si = s[:, 1:, :]
    cs = si * c[:, None, :]
    grad = q[:, 1:] - cs.mean(axis=2)
    A = np.matmul(s, np.swapaxes(si, 1, 2)) / R  # (T, J+1, J)
    C = np.matmul(cs, np.swapaxes(si, 1, 2)) / R  # (T, J, J)
    wi = w[:, 1:]
    hess = 2 * C - (wi[:, :, None] + wi[:, None, :]) * A[:, 1:, :]
    idx = np.arange(si.shape[1])
    hess[:, idx, idx] += grad
    M = -A
    M[:, 1 + idx, idx] += S[:, 1:]
    w2 = np.divide(w, S, out=np.zeros_like(S), where=S > 0)
    hess -= np.matmul(np.swapaxes(M * w2[:, :, None], 1, 2), M)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    if with_value:
        with np.errstate(divide="ignore"):
            log_S = np.log(S)
        low = S < 1e-250
        if low.any():
            log_S[low] = log_shares_from_individual(log_s_ind)[low]
        return _loglik_terms(q, log_S), grad, hess
    return grad, hess


def project_derivs(delta_gh, Z):
    """Summed gradient and Hessian for a block with d delta / d theta = Z (T, J, p)."""
    g, H = delta_gh
    Zt = np.swapaxes(Z, 1, 2)
    H = np.matmul(Zt, np.matmul(H, Z)).sum(axis=0)
    return np.matmul(Zt, g[..., None]).sum(axis=0)[:, 0], 0.5 * (H + H.T)


class MarketEvaluator:
    """Vectorized likelihood kernels over the packed markets.

    With ``threads > 1`` the market axis is split into contiguous chunks that
    are evaluated concurrently; per-market results do not depend on the split.
    """

    def __init__(self, data: Dataset, draws: RcDraws, threads: int = 1):
        self.data = data
        self.p = data.packed
        self.rc_mask = data.rc_mask
        self.nodes = draws.nodes
        self.threads = max(1, int(threads))
        self._chunks = [c for c in np.array_split(np.arange(self.p.T), self.threads) if c.size]
        self._pool = ThreadPoolExecutor(self.threads) if len(self._chunks) > 1 else None
        self._sub = [self.p.take(c) for c in self._chunks]

    def _map(self, fn, *per_market):
        if self._pool is None:
            return fn(self.p, *per_market)
        jobs = [
            self._pool.submit(fn, sub, *(a[c] for a in per_market))
            for sub, c in zip(self._sub, self._chunks)
        ]
        out = [j.result() for j in jobs]
        if isinstance(out[0], tuple):
            return tuple(np.concatenate(parts) for parts in zip(*out))
        return np.concatenate(out)

    def delta(self, beta_bar, xi_bar, eta):
        return packed_delta(self.p, beta_bar, xi_bar, eta)

    def log_shares(self, delta, r) -> np.ndarray:
        sd = np.exp(r)
        return self._map(
            lambda p, d: _log_mean_exp(individual_log_probs(p.X, d, sd, self.nodes, self.rc_mask)),
            delta,
        )

    def loglik_by_market(self, delta, r) -> np.ndarray:
        sd = np.exp(r)

        def kernel(p, d):
            log_s = _log_mean_exp(individual_log_probs(p.X, d, sd, self.nodes, self.rc_mask))
            return _loglik_terms(p.q, log_s)

        return self._map(kernel, delta)

    def delta_derivs(self, delta, r, with_value=False):
        """Per-market (grad, hess) of the log-likelihood in the mean utilities.

        With ``with_value`` the per-market log-likelihood is returned first.
        """
        sd = np.exp(r)

        def kernel(p, d):
            return delta_derivs(individual_log_probs(p.X, d, sd, self.nodes, self.rc_mask), p.q, with_value)

        return self._map(kernel, delta)

    def beta_derivs(self, delta, r):
        """Log-likelihood, gradient and Hessian in beta_bar."""
        ll, g, H = self.delta_derivs(delta, r, with_value=True)
        return (ll.sum(), *project_derivs((g, H), self.p.X))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def simulate_shares(data: Dataset, params: ParamState, draws: RcDraws, t: int) -> np.ndarray:
    """Simulated shares (outside good first) of market ``t``."""
    m = data.markets[t]
    delta = compute_delta(m, params.beta_bar, params.xi_bar[t], params.eta_t(t, m.J))
    log_s = _log_mean_exp(
        individual_log_probs(m.X[None], delta[None], params.sigma, draws.nodes, data.rc_mask)
    )
    return np.exp(log_s[0])


def market_shares(X, delta, sd_rc, nodes, rc_mask) -> np.ndarray:
    """Shares of a single market from raw arrays (outside good first)."""
    log_s = _log_mean_exp(
        individual_log_probs(np.atleast_2d(X)[None], np.asarray(delta, float)[None],
                             np.asarray(sd_rc, float), nodes, np.asarray(rc_mask, bool))
    )
    return np.exp(log_s[0])


def log_likelihood(data: Dataset, params: ParamState, draws: RcDraws) -> float:
    ev = MarketEvaluator(data, draws)
    delta = ev.delta(params.beta_bar, params.xi_bar, params.eta)
    return float(np.sum(ev.loglik_by_market(delta, params.r)))


def grad_hessian_beta(data: Dataset, params: ParamState, draws: RcDraws, prior=None):
    """Gradient and Hessian in beta_bar of the log-likelihood (+ log prior if given)."""
    ev = MarketEvaluator(data, draws)
    delta = ev.delta(params.beta_bar, params.xi_bar, params.eta)
    _, g, H = ev.beta_derivs(delta, params.r)
    if prior is not None:
        V = prior.V_beta_vec(data.d_X)
        g = g - (params.beta_bar - prior.mu_beta_vec(data.d_X)) / V
        H = H - np.diag(1.0 / V)
    return g, H


def grad_hessian_eta(data: Dataset, params: ParamState, draws: RcDraws, t: int, prior=None):
    """Gradient and Hessian in eta_t of market t's log-likelihood (+ spike/slab prior)."""
    m = data.markets[t]
    delta = compute_delta(m, params.beta_bar, params.xi_bar[t], params.eta_t(t, m.J))
    log_s_ind = individual_log_probs(m.X[None], delta[None], params.sigma, draws.nodes, data.rc_mask)
    q = np.concatenate([[m.q0], m.q]).astype(float)[None]
    g, H = delta_derivs(log_s_ind, q)
    g, H = g[0], H[0]
    if prior is not None:
        var = prior.eta_variance(params.gamma[t, : m.J])
        g = g - params.eta_t(t, m.J) / var
        H = H - np.diag(1.0 / var)
    return g, H
