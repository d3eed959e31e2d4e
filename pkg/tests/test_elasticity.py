import numpy as np
import pytest

from sparsedemand.dgp import DgpConfig, gen_dataset
from sparsedemand.elasticity import ElasticityRequest, elasticity_matrix, posterior_elasticity
from sparsedemand.mcmc import PosteriorSamples
from sparsedemand.model import ParamState, RcDraws, market_shares


def dgp_state(data, sigma=1.5, beta=(-1.0, 0.5)):
    p = data.packed
    r = np.array([np.log(sigma) if sigma > 0 else -np.inf])
    return ParamState(np.array(beta), r, np.full(p.T, -1.0),
                      np.where(p.mask, 0.3, 0.0), p.mask.copy(), np.full(p.T, 0.5))


@pytest.fixture(scope="module")
def data():
    return gen_dataset(DgpConfig(design=1, J=5, T=6, seed=3))[0]


@pytest.fixture(scope="module")
def draws():
    return RcDraws(np.random.default_rng(0).standard_normal((200, 1)))


def shares_at(data, prm, draws, t, X):
    delta = X @ prm.beta_bar + prm.xi_bar[t] + prm.eta[t, : X.shape[0]]
    return market_shares(X, delta, prm.sigma, draws.nodes, data.rc_mask)[1:]


def test_plain_logit_closed_forms(data, draws):
    prm = dgp_state(data, sigma=0.0)
    t = 2
    E = elasticity_matrix(data, prm, draws, t, price_col=0)
    X = data.markets[t].X
    s, p, b = shares_at(data, prm, draws, t, X), X[:, 0], -1.0
    np.testing.assert_allclose(np.diag(E), b * p * (1 - s), rtol=1e-12)
    off = ~np.eye(5, dtype=bool)
    np.testing.assert_allclose(E[off], np.broadcast_to(-b * p * s, (5, 5))[off], rtol=1e-12)


def test_zero_price_coefficient(data, draws):
    prm = dgp_state(data, sigma=0.0, beta=(0.0, 0.5))
    np.testing.assert_array_equal(elasticity_matrix(data, prm, draws, 0, price_col=0), 0.0)


def test_fixed_price_coefficient_when_not_random(data, draws):
    prm = dgp_state(data, sigma=0.0)
    E_rc = elasticity_matrix(data, prm, draws, 1, price_col=0)
    # w carries no random coefficient: its elasticity is the plain formula with beta_w
    E_w = elasticity_matrix(data, prm, draws, 1, price_col=1)
    X = data.markets[1].X
    s = shares_at(data, prm, draws, 1, X)
    np.testing.assert_allclose(np.diag(E_w), 0.5 * X[:, 1] * (1 - s), rtol=1e-12)
    assert E_rc.shape == E_w.shape == (5, 5)


@pytest.mark.parametrize("t", range(6))
def test_matches_finite_differences(data, draws, t):
    prm = dgp_state(data)
    X = data.markets[t].X
    E = elasticity_matrix(data, prm, draws, t, price_col=0)
    s = shares_at(data, prm, draws, t, X)
    for m in range(X.shape[0]):
        h = 1e-6 * X[m, 0]
        up, dn = X.copy(), X.copy()
        up[m, 0] += h
        dn[m, 0] -= h
        ds = (shares_at(data, prm, draws, t, up) - shares_at(data, prm, draws, t, dn)) / (2 * h)
        np.testing.assert_allclose(E[:, m], ds * X[m, 0] / s, rtol=1e-4)


def test_iia_only_without_random_coefficients(data, draws):
    prm = dgp_state(data, sigma=0.0)
    E0 = elasticity_matrix(data, prm, draws, 0, price_col=0)
    E1 = elasticity_matrix(data, dgp_state(data), draws, 0, price_col=0)
    for m in range(5):
        rows = [j for j in range(5) if j != m]
        assert np.ptp(E0[rows, m]) <= 1e-12 * np.abs(E0[rows, m]).max()
        assert np.ptp(E1[rows, m]) > 1e-3 * np.abs(E1[rows, m]).max()


def samples_from(states, data, draws):
    p = data.packed
    stack = lambda name: np.array([getattr(s, name) for s in states])  # noqa: E731
    return PosteriorSamples(
        beta=stack("beta_bar"), r=stack("r"), xi_bar=stack("xi_bar"), eta=stack("eta"),
        gamma=stack("gamma"), phi=stack("phi"), J=p.J, columns=data.columns, rc_mask=data.rc_mask,
        market_ids=tuple(m.market_id for m in data.markets), nodes=draws.nodes,
    )


def test_degenerate_draws_collapse(data, draws):
    prm = dgp_state(data)
    es = posterior_elasticity(samples_from([prm] * 4, data, draws), data, ElasticityRequest(price_col=0))
    np.testing.assert_allclose(es.ci_lo, es.ci_hi, rtol=1e-13)
    np.testing.assert_allclose(es.mean, es.at_posterior_mean, rtol=1e-13)
    np.testing.assert_allclose(es.sd[~np.isnan(es.sd)], 0.0, atol=1e-13)
    np.testing.assert_allclose(es.mean[0], elasticity_matrix(data, prm, draws, 0, 0), rtol=1e-13)


def test_posterior_mean_differs_from_plugin(data, draws):
    rng = np.random.default_rng(1)
    states = []
    for _ in range(30):
        s = dgp_state(data, sigma=0.2, beta=(-2.0, 0.5))
        s.beta_bar = s.beta_bar + rng.normal(0, 0.1, 2)
        s.r = s.r + rng.normal(0, 0.2, 1)
        states.append(s)
    es = posterior_elasticity(samples_from(states, data, draws), data, ElasticityRequest(price_col=0))
    assert es.max_plugin_gap > 1e-4
    # every consumer's price coefficient is negative, so own elasticities
    # carry the opposite sign of the price
    price = data.packed.X[..., 0]
    assert np.all(np.einsum("tjj->tj", es.mean) * price < 0)
    assert np.all(np.einsum("tjj->tj", es.at_posterior_mean) * price < 0)


def test_request_subsets(data, draws):
    prm = dgp_state(data)
    smp = samples_from([prm] * 3, data, draws)
    es = posterior_elasticity(smp, data, ElasticityRequest(price_col=0, markets=(4, 1), draws=slice(0, 2)))
    assert es.mean.shape == (2, 5, 5)
    np.testing.assert_allclose(es.mean[0], elasticity_matrix(data, prm, draws, 4, 0), rtol=1e-13)
    with pytest.raises(ValueError):
        posterior_elasticity(smp, data, ElasticityRequest(price_col=0, draws=slice(0, 0)))
