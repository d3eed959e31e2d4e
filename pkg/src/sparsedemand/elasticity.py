"""Own- and cross-price elasticities from posterior draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, ParamState, RcDraws, individual_log_probs, packed_delta


def _price_coefficients(beta_bar, r, nodes, rc_mask, price_col):
    """Per-node price coefficient; a fixed coefficient if price carries no RC."""
    b = beta_bar[price_col]
    if not rc_mask[price_col]:
        return np.full(nodes.shape[0], b)
    k = int(np.sum(rc_mask[:price_col]))
    return b + np.exp(r[k]) * nodes[:, k]


def elasticities_packed(X, delta, beta_bar, r, nodes, rc_mask, price_col):
    """Elasticity matrices for a stack of markets, shape (T, J, J).

    Entry (j, m) is the elasticity of product j's share with respect to the
    price of product m.
    """
    sd = np.exp(r)
    log_s = individual_log_probs(X, delta, sd, nodes, rc_mask)  # (T, J+1, R)
    s = np.exp(log_s[:, 1:, :])
    R = s.shape[2]
    bp = _price_coefficients(beta_bar, r, nodes, rc_mask, price_col)
    if R == 1:  # every SD is zero: one node, fixed coefficient
        bp = np.array([beta_bar[price_col]])
    S = s.mean(axis=2)
    sb = s * bp
    # mean_r b_r (diag(s_r) - s_r s_r^T)
    dS = -np.matmul(sb, np.swapaxes(s, 1, 2)) / R
    idx = np.arange(s.shape[1])
    dS[:, idx, idx] += sb.mean(axis=2)
    price = X[..., price_col]
    with np.errstate(divide="ignore", invalid="ignore"):
        E = dS * price[:, None, :] / S[:, :, None]
    return E


def elasticity_matrix(data: Dataset, params: ParamState, draws: RcDraws, t: int, price_col: int):
    m = data.markets[t]
    delta = m.X @ params.beta_bar + params.xi_bar[t] + params.eta[t, : m.J]
    return elasticities_packed(
        m.X[None], delta[None], params.beta_bar, params.r, draws.nodes, data.rc_mask, price_col
    )[0]


@dataclass
class ElasticityRequest:
    price_col: int
    markets: tuple | None = None  # positions; None means all
    draws: slice = slice(None)


@dataclass
class ElasticitySummary:
    market_index: np.ndarray
    J: np.ndarray
    mean: np.ndarray  # (T', Jmax, Jmax)
    sd: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    at_posterior_mean: np.ndarray
    own_mean: float  # across (j, t) of posterior-mean own elasticities
    own_sd: float
    own_at_mean_mean: float
    own_at_mean_sd: float

    @property
    def max_plugin_gap(self):
        """Largest |posterior mean elasticity - elasticity at posterior mean|."""
        d = np.abs(self.mean - self.at_posterior_mean)
        return float(np.nanmax(d))


def posterior_elasticity(samples, data: Dataset, request: ElasticityRequest) -> ElasticitySummary:
    p = data.packed
    idx = np.arange(p.T) if request.markets is None else np.asarray(request.markets)
    X, mask = p.X[idx], p.mask[idx]
    draws = range(samples.G)[request.draws]
    if len(draws) == 0:
        raise ValueError("no posterior draws selected")
    nodes = samples.nodes
    out = np.empty((len(draws), idx.size, p.Jmax, p.Jmax))
    for i, g in enumerate(draws):
        d = packed_delta(p, samples.beta[g], samples.xi_bar[g], samples.eta[g])[idx]
        out[i] = elasticities_packed(X, d, samples.beta[g], samples.r[g], nodes, data.rc_mask, request.price_col)
    pair = mask[:, :, None] & mask[:, None, :]
    out = np.where(pair, out, np.nan)
    mean = out.mean(axis=0)
    sd = out.std(axis=0, ddof=1) if len(draws) > 1 else np.zeros_like(mean)
    lo, hi = np.quantile(out, [0.025, 0.975], axis=0)

    sel = list(draws)
    b_m = samples.beta[sel].mean(0)
    r_m = samples.r[sel].mean(0)
    d_m = packed_delta(p, b_m, samples.xi_bar[sel].mean(0), samples.eta[sel].mean(0))[idx]
    at_mean = np.where(pair, elasticities_packed(X, d_m, b_m, r_m, nodes, data.rc_mask, request.price_col), np.nan)

    own = np.einsum("tjj->tj", mean)[mask]
    own_pm = np.einsum("tjj->tj", at_mean)[mask]
    return ElasticitySummary(
        market_index=idx, J=p.J[idx], mean=mean, sd=sd, ci_lo=lo, ci_hi=hi,
        at_posterior_mean=at_mean,
        own_mean=float(own.mean()), own_sd=float(own.std()),
        own_at_mean_mean=float(own_pm.mean()), own_at_mean_sd=float(own_pm.std()),
    )
