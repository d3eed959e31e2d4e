"""Synthetic data for the four Monte Carlo designs.

Utility is ``beta_p,i * p + beta_w * w + xi + eps`` with ``beta_p,i`` normal,
``w ~ U(1, 2)``, ``p = alpha + 0.3 w + u`` and ``u ~ N(0, 0.7^2)``. Designs
differ in the deviations ``eta*`` (sparse for 1/2, normal for 3/4) and in
whether ``alpha`` tracks them (2/4).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, MarketData

BETA_P, BETA_W, SIGMA_P, XI_BAR = -1.0, 0.5, 1.5, -1.0
COLUMNS = ("price", "w")


@dataclass(frozen=True)
class DgpConfig:
    design: int = 1
    J: int = 5
    T: int = 25
    N: int = 1000
    seed: int = 0
    replication: int = 0
    beta_p: float = BETA_P
    beta_w: float = BETA_W
    sigma_p: float = SIGMA_P
    xi_bar: float = XI_BAR
    expected_counts: bool = False

    def __post_init__(self):
        if self.design not in (1, 2, 3, 4):
            raise ValueError(f"design must be 1-4, got {self.design}")
        if self.J < 1 or self.T < 1 or self.N < 1:
            raise ValueError("J, T and N must be positive")


@dataclass
class GroundTruth:
    beta: np.ndarray
    sigma: np.ndarray
    xi_bar: np.ndarray
    eta: np.ndarray  # (T, J)
    alpha: np.ndarray
    u: np.ndarray
    design: int

    @property
    def r(self):
        return np.log(self.sigma)

    @property
    def xi(self):
        return self.xi_bar[:, None] + self.eta

    @property
    def sparse_mask(self):
        """True where the deviation is exactly zero."""
        return self.eta == 0

    def to_dict(self):
        return {
            "design": self.design,
            "beta": self.beta.tolist(),
            "sigma": self.sigma.tolist(),
            "xi_bar": self.xi_bar.tolist(),
            "eta": self.eta.tolist(),
            "alpha": self.alpha.tolist(),
            "u": self.u.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            beta=np.asarray(d["beta"], float), sigma=np.asarray(d["sigma"], float),
            xi_bar=np.asarray(d["xi_bar"], float), eta=np.asarray(d["eta"], float),
            alpha=np.asarray(d["alpha"], float), u=np.asarray(d["u"], float), design=int(d["design"]),
        )


def sparse_eta(J: int) -> np.ndarray:
    """First round(0.4 J) entries alternate +1, -1; the rest are zero."""
    k = int(np.floor(0.4 * J + 0.5))
    eta = np.zeros(J)
    eta[:k] = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    return eta


def _rng(cfg: DgpConfig):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.replication]))


def draw_design(cfg: DgpConfig, rng):
    """Deviations, price shifters, cost shocks and w for every (t, j)."""
    T, J = cfg.T, cfg.J
    w = rng.uniform(1.0, 2.0, size=(T, J))
    u = rng.normal(0.0, 0.7, size=(T, J))
    if cfg.design in (1, 2):
        eta = np.tile(sparse_eta(J), (T, 1))
    else:
        eta = rng.normal(0.0, 1.0 / 3.0, size=(T, J))
    alpha = np.zeros((T, J))
    if cfg.design == 2:
        alpha = np.where(eta == 1.0, 0.3, np.where(eta == -1.0, -0.3, 0.0))
    elif cfg.design == 4:
        alpha = np.where(eta >= 1 / 3, 0.3, np.where(eta <= -1 / 3, -0.3, 0.0))
    price = alpha + 0.3 * w + u
    return w, u, eta, alpha, price


def _consumer_choices(rng, mean_util, price, cfg: DgpConfig):
    """Quantities from N simulated consumers per market choosing argmax utility."""
    T, J = mean_util.shape
    q = np.zeros((T, J), dtype=np.int64)
    for t in range(T):
        bp = rng.normal(0.0, cfg.sigma_p, size=(cfg.N, 1))
        util = mean_util[t] + bp * price[t]
        util = np.concatenate([np.zeros((cfg.N, 1)), util], axis=1) + rng.gumbel(size=(cfg.N, J + 1))
        choice = util.argmax(axis=1)
        q[t] = np.bincount(choice, minlength=J + 1)[1:]
    return q


def true_shares(mean_util, price, sigma_p, n_nodes=64):
    """Model shares (outside first) at the truth by Gauss-Hermite quadrature."""
    x, wts = np.polynomial.hermite_e.hermegauss(n_nodes)
    wts = wts / wts.sum()
    util = mean_util[:, None, :] + sigma_p * x[None, :, None] * price[:, None, :]
    util = np.concatenate([np.zeros(util.shape[:2] + (1,)), util], axis=2)
    util -= util.max(axis=2, keepdims=True)
    e = np.exp(util)
    s_ind = e / e.sum(axis=2, keepdims=True)
    return np.einsum("r,trj->tj", wts, s_ind)


def _apportion(shares, N):
    """Largest-remainder integer counts summing to N."""
    raw = shares * N
    base = np.floor(raw).astype(np.int64)
    short = N - base.sum(axis=1)
    for t in range(raw.shape[0]):
        order = np.argsort(-(raw[t] - base[t]), kind="stable")
        base[t, order[: short[t]]] += 1
    return base


def gen_dataset(cfg: DgpConfig):
    """Return ``(Dataset, GroundTruth)`` for one replication."""
    rng = _rng(cfg)
    w, u, eta, alpha, price = draw_design(cfg, rng)
    xi = cfg.xi_bar + eta
    mean_util = cfg.beta_p * price + cfg.beta_w * w + xi
    if cfg.expected_counts:
        q = _apportion(true_shares(mean_util, price, cfg.sigma_p), cfg.N)[:, 1:]
    else:
        q = _consumer_choices(rng, mean_util, price, cfg)
    markets = [
        MarketData(market_id=t + 1, market_size=cfg.N, q=q[t], X=np.column_stack([price[t], w[t]]))
        for t in range(cfg.T)
    ]
    data = Dataset(markets, rc_mask=np.array([True, False]), columns=COLUMNS)
    truth = GroundTruth(
        beta=np.array([cfg.beta_p, cfg.beta_w]), sigma=np.array([cfg.sigma_p]),
        xi_bar=np.full(cfg.T, cfg.xi_bar), eta=eta, alpha=alpha, u=u, design=cfg.design,
    )
    return data, truth


def score_sparsity(gamma_mean, eta_true):
    """Mean posterior slab probability over truly nonzero and truly zero deviations.

    Either entry is ``None`` when that group is empty.
    """
    g = np.asarray(gamma_mean, dtype=float)
    e = np.asarray(eta_true, dtype=float)
    if g.shape != e.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {e.shape}")
    nz = e != 0
    hit = float(g[nz].mean()) if nz.any() else None
    false = float(g[~nz].mean()) if (~nz).any() else None
    return hit, false
