"""Posterior sampler: TMH for slopes and deviations, RWMH for intercepts and
log-SDs, exact Gibbs draws for the inclusion indicators and probabilities.

The generic steps (``newton_mode``, ``tmh_step``, ``rwmh_step``) work on a
batch axis so that the per-market blocks run as one vectorized update.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .model import Dataset, MarketEvaluator, ParamState, RcDraws, project_derivs
from .priors import (
    PriorConfig,
    gamma_success_prob,
    normal_logpdf,
)

log = logging.getLogger(__name__)

BLOCKS = ("beta", "r", "xi", "eta", "gamma", "phi")


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class McmcConfig:
    total_draws: int = 5000
    burn_in: int = 2000
    seed: int = 0
    kappa_beta: float | None = None  # None: 2.38 / sqrt(dim)
    kappa_eta: float | None = None
    kappa_xi: float = 0.1
    kappa_r: float = 0.1
    calibrate: bool = True
    target_accept: tuple = (0.3, 0.5)
    newton_max_iter: int = 50
    newton_grad_tol: float = 1e-8
    thin: int = 1
    window: int = 100
    fixed_blocks: tuple = ()
    threads: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.total_draws:
            raise ValueError("need 0 <= burn_in < total_draws")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        bad = set(self.fixed_blocks) - set(BLOCKS)
        if bad:
            raise ValueError(f"unknown blocks {sorted(bad)}")

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.total_draws, self.thin))


# ---------------------------------------------------------------- generic steps

RIDGE_START, RIDGE_MAX = 1e-8, 1e-2


def _factor_pd(A):
    """Cholesky factors of a batch of symmetric matrices, ridging as needed.

    Returns ``(L, ok)``; rows with ``ok`` False could not be made positive
    definite with a ridge up to ``RIDGE_MAX * (1 + max|diag|)``.
    """
    B, p, _ = A.shape
    L = np.zeros_like(A)
    ok = np.ones(B, dtype=bool)
    try:
        return np.linalg.cholesky(A), ok
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(p)
    for b in range(B):
        scale = 1.0 + np.max(np.abs(np.diag(A[b])))
        eps = 0.0
        while True:
            try:
                L[b] = np.linalg.cholesky(A[b] + eps * scale * eye)
                break
            except np.linalg.LinAlgError:
                eps = RIDGE_START if eps == 0.0 else eps * 10
                if eps > RIDGE_MAX * (1 + 1e-9):
                    ok[b] = False
                    L[b] = np.sqrt(scale) * eye
                    break
    return L, ok


@dataclass
class NewtonResult:
    mode: np.ndarray
    chol: np.ndarray  # Cholesky factor of the negated Hessian at the mode
    ok: np.ndarray  # factor is a genuine (possibly ridged) PD factor
    converged: np.ndarray
    iterations: int
    start_value: np.ndarray = None

    @property
    def neg_hessian(self):
        return self.chol @ np.swapaxes(self.chol, -1, -2)


def newton_mode(logpost, derivs, start, max_iter=50, grad_tol=1e-8):
    """Batched damped Newton ascent.

    ``logpost(x)`` maps (B, p) to (B,); ``derivs(x)`` returns the value (B,),
    gradient (B, p) and Hessian (B, p, p). A 1-D ``start`` is treated as a
    batch of one and the result is squeezed back.
    """
    squeeze = np.ndim(start) == 1
    x = np.atleast_2d(np.asarray(start, dtype=float)).copy()
    f, g, H = derivs(x)
    if not np.all(np.isfinite(f)):
        raise SamplerError("non-finite objective at Newton start")
    f_start = f.copy()
    it = 0
    while it < max_iter:
        done = np.max(np.abs(g), axis=1) <= grad_tol
        if done.all():
            break
        it += 1
        L, _ = _factor_pd(-H)
        step = np.linalg.solve(L @ np.swapaxes(L, 1, 2), g[..., None])[..., 0]
        step[done] = 0.0
        xn = x + step
        fn, gn, Hn = derivs(xn)
        good = np.isfinite(fn) & (fn >= f - 1e-10 * (1 + np.abs(f)))
        if good.all():
            x, f, g, H = xn, fn, gn, Hn
            continue
        # backtrack the rows whose full step failed
        t = np.where(good, 1.0, 0.5)
        pending = ~good
        for _ in range(60):
            xt = x + t[:, None] * step
            ft = logpost(xt)
            ok = pending & np.isfinite(ft) & (ft >= f - 1e-10 * (1 + np.abs(f)))
            pending &= ~ok
            if not pending.any():
                break
            t[pending] *= 0.5
        t[pending] = 0.0
        x = x + t[:, None] * step
        f, g, H = derivs(x)
        if np.max(np.abs(step * t[:, None])) < 1e-14:
            break
    done = np.max(np.abs(g), axis=1) <= grad_tol
    L, ok = _factor_pd(-H)
    if squeeze:
        return NewtonResult(x[0], L[0], ok[0], done[0], it, f_start[0])
    return NewtonResult(x, L, ok, done, it, f_start)


def _mvn_quad(L, x, mode):
    """||L^T (x - mode)||^2 per batch row."""
    v = np.einsum("bij,bi->bj", L, x - mode)
    return np.sum(v * v, axis=1)


@dataclass
class StepInfo:
    accepted: np.ndarray
    log_alpha: np.ndarray
    fallback: np.ndarray = None
    newton_converged: np.ndarray = None


def tmh_step(logpost, derivs, current, kappa, rng, mask=None, max_iter=50, grad_tol=1e-8):
    """Tailored MH: independence proposal N(mode, kappa^2 (-H)^{-1}).

    Batch rows whose curvature cannot be made positive definite fall back to
    a random-walk proposal N(current, (0.1 kappa)^2 I) for this call.
    """
    cur = np.atleast_2d(np.asarray(current, dtype=float))
    B, p = cur.shape
    m = np.ones((B, p)) if mask is None else np.asarray(mask, dtype=float)
    z = rng.standard_normal((B, p)) * m
    u = rng.uniform(size=B)
    nr = newton_mode(logpost, derivs, cur, max_iter, grad_tol)
    mode, L, ok = nr.mode, nr.chol, nr.ok
    LT = np.swapaxes(L, 1, 2)
    prop = np.empty_like(cur)
    for b in range(B):
        if ok[b]:
            prop[b] = mode[b] + kappa * solve_triangular(LT[b], z[b], lower=False)
        else:
            prop[b] = cur[b] + 0.1 * kappa * z[b]
    lp_cur, lp_prop = nr.start_value, logpost(prop)
    log_alpha = lp_prop - lp_cur
    corr = (_mvn_quad(L, prop, mode) - _mvn_quad(L, cur, mode)) / (2 * kappa**2)
    log_alpha = log_alpha + np.where(ok, corr, 0.0)
    log_alpha = np.where(np.isfinite(lp_prop), log_alpha, -np.inf)
    acc = np.log(u) < log_alpha
    new = np.where(acc[:, None], prop, cur)
    return new, StepInfo(acc, log_alpha, ~ok, nr.converged)


def rwmh_step(logpost, current, chol_cov, rng):
    """Random-walk MH with proposal N(current, C), ``C = chol_cov chol_cov^T``."""
    cur = np.atleast_2d(np.asarray(current, dtype=float))
    B, p = cur.shape
    z = rng.standard_normal((B, p))
    u = rng.uniform(size=B)
    prop = cur + z @ np.asarray(chol_cov).T
    lp_prop = logpost(prop)
    log_alpha = np.where(np.isfinite(lp_prop), lp_prop - logpost(cur), -np.inf)
    acc = np.log(u) < log_alpha
    return np.where(acc[:, None], prop, cur), StepInfo(acc, log_alpha)


def gibbs_update_gamma(eta, phi, prior: PriorConfig, rng, mask=None):
    eta = np.atleast_2d(eta)
    probs = gamma_success_prob(eta, np.asarray(phi)[:, None], prior)
    u = rng.uniform(size=eta.shape)
    g = u < probs
    return g if mask is None else g & mask


def gibbs_update_phi(gamma, J, prior: PriorConfig, rng):
    k = np.atleast_2d(gamma).sum(axis=1)
    return rng.beta(prior.a_phi + k, prior.b_phi + np.asarray(J) - k)


def calibrate(kappa: float, rate: float, band=(0.3, 0.5)) -> float:
    """One window of multiplicative step-size adaptation."""
    if rate > band[1]:
        return kappa * 1.1
    if rate < band[0]:
        return kappa * 0.9
    return kappa


# ---------------------------------------------------------------- chain


@dataclass
class PosteriorSamples:
    beta: np.ndarray
    r: np.ndarray
    xi_bar: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    J: np.ndarray
    columns: tuple
    rc_mask: np.ndarray
    market_ids: tuple
    nodes: np.ndarray
    accept: dict = field(default_factory=dict)
    burn_accept: dict = field(default_factory=dict)
    calibration_log: list = field(default_factory=list)
    kappa: dict = field(default_factory=dict)
    S_r: np.ndarray = None
    flags: dict = field(default_factory=dict)

    @property
    def G(self) -> int:
        return self.beta.shape[0]

    def acceptance_rates(self) -> dict:
        return {k: (a / n if n else float("nan")) for k, (a, n) in self.accept.items()}

    def state(self, g: int) -> ParamState:
        return ParamState(self.beta[g], self.r[g], self.xi_bar[g], self.eta[g], self.gamma[g], self.phi[g])


def plain_logit_start(data: Dataset, prior: PriorConfig, max_iter=50, grad_tol=1e-8):
    """Joint (beta_bar, xi_bar) posterior mode with sigma = 0 and eta = 0."""
    p = data.packed
    T, dX = p.T, p.dX
    ev = MarketEvaluator(data, RcDraws(np.zeros((1, data.d_rc))))
    r0 = np.full(data.d_rc, -np.inf)
    eta0 = np.zeros((T, p.Jmax))
    Z = np.zeros((T, p.Jmax, dX + T))
    Z[..., :dX] = p.X
    Z[np.arange(T), :, dX + np.arange(T)] = 1.0
    Z[..., dX:] *= p.mask[..., None]
    mu_b, V_b = prior.mu_beta_vec(dX), prior.V_beta_vec(dX)
    prec = np.concatenate([1 / V_b, np.full(T, 1 / prior.V_xi)])
    mean = np.concatenate([mu_b, np.full(T, prior.mu_xi)])

    def lp(th):
        out = np.empty(th.shape[0])
        for i, x in enumerate(th):
            d = ev.delta(x[:dX], x[dX:], eta0)
            out[i] = ev.loglik_by_market(d, r0).sum() - 0.5 * np.sum(prec * (x - mean) ** 2)
        return out

    def dv(th):
        d = ev.delta(th[0, :dX], th[0, dX:], eta0)
        ll, g, H = ev.delta_derivs(d, r0, with_value=True)
        g, H = project_derivs((g, H), Z)
        f = ll.sum() - 0.5 * np.sum(prec * (th[0] - mean) ** 2)
        return np.array([f]), (g - prec * (th[0] - mean))[None], (H - np.diag(prec))[None]

    res = newton_mode(lp, dv, mean, max_iter, grad_tol)
    return res.mode[:dX], res.mode[dX:]


class Sampler:
    """One chain over the full posterior with fixed integration nodes."""

    def __init__(self, data: Dataset, prior: PriorConfig, cfg: McmcConfig,
                 draws: RcDraws | None = None, init: ParamState | None = None,
                 pooled_eta: bool = False):
        self.data, self.prior, self.cfg = data, prior, cfg
        ss = np.random.SeedSequence(cfg.seed)
        node_seed, chain_seed = ss.spawn(2)
        if draws is None:
            draws = RcDraws.standard_normal(200, data.d_rc, np.random.default_rng(node_seed))
        self.draws = draws
        self.rng = np.random.default_rng(chain_seed)
        self.ev = MarketEvaluator(data, draws, cfg.threads)
        self.p = data.packed
        self.mask = self.p.mask
        dX, d_rc, Jm = data.d_X, data.d_rc, self.p.Jmax
        self.kappa = {
            "beta": cfg.kappa_beta if cfg.kappa_beta is not None else 2.38 / np.sqrt(dX),
            "eta": cfg.kappa_eta if cfg.kappa_eta is not None else 2.38 / np.sqrt(Jm),
            "xi": cfg.kappa_xi,
            "r": cfg.kappa_r,
        }
        self.S_r = np.eye(d_rc)
        self.pooled_eta = pooled_eta
        self.tau_sq = prior.tau1_sq
        if init is None:
            b0, x0 = plain_logit_start(data, prior, cfg.newton_max_iter, cfg.newton_grad_tol)
            init = ParamState.initial(data, beta_bar=b0, xi_bar=x0)
            if pooled_eta:
                init.gamma = self.mask.copy()
        self.state = init.copy()
        self.state.eta = np.where(self.mask, self.state.eta, 0.0)
        self._check_init()
        self.flags = {"newton_nonconverged": 0, "rw_fallback": 0}

    # -- target pieces

    def _delta(self, s: ParamState, beta=None, xi=None, eta=None):
        return self.ev.delta(
            s.beta_bar if beta is None else beta,
            s.xi_bar if xi is None else xi,
            s.eta if eta is None else eta,
        )

    def _eta_var(self, gamma):
        if self.pooled_eta:
            return np.full(gamma.shape, self.tau_sq)
        return self.prior.eta_variance(gamma)

    def log_posterior_blocks(self, s: ParamState) -> dict:
        pr, dX = self.prior, self.data.d_X
        ll = self.ev.loglik_by_market(self._delta(s), s.r)
        return {
            "likelihood": float(ll.sum()),
            "beta": float(np.sum(normal_logpdf(s.beta_bar, pr.mu_beta_vec(dX), pr.V_beta_vec(dX)))),
            "r": float(np.sum(normal_logpdf(s.r, 0.0, pr.V_r_vec(s.r.size)))),
            "xi": float(np.sum(normal_logpdf(s.xi_bar, pr.mu_xi, pr.V_xi))),
            "eta": float(np.sum(np.where(self.mask, normal_logpdf(s.eta, 0.0, self._eta_var(s.gamma)), 0.0))),
        }

    def _check_init(self):
        for name, v in self.log_posterior_blocks(self.state).items():
            if not np.isfinite(v):
                raise SamplerError(f"non-finite log posterior at initialization in block '{name}'")

    # -- block updates

    def update_beta(self):
        s, pr, dX = self.state, self.prior, self.data.d_X
        mu, V = pr.mu_beta_vec(dX), pr.V_beta_vec(dX)

        def lp(b):
            return np.array([
                self.ev.loglik_by_market(self._delta(s, beta=x), s.r).sum()
                + np.sum(normal_logpdf(x, mu, V)) for x in b
            ])

        def dv(b):
            f, g, H = self.ev.beta_derivs(self._delta(s, beta=b[0]), s.r)
            f += np.sum(normal_logpdf(b[0], mu, V))
            return np.array([f]), (g - (b[0] - mu) / V)[None], (H - np.diag(1 / V))[None]

        new, info = tmh_step(lp, dv, s.beta_bar, self.kappa["beta"], self.rng,
                             max_iter=self.cfg.newton_max_iter, grad_tol=self.cfg.newton_grad_tol)
        s.beta_bar = new[0]
        return info

    def update_r(self):
        s, d = self.state, self.data.d_rc
        Vr = self.prior.V_r_vec(d)
        delta = self._delta(s)

        def lp(rr):
            return np.array([self.ev.loglik_by_market(delta, x).sum()
                             + np.sum(normal_logpdf(x, 0.0, Vr)) for x in rr])

        chol = np.linalg.cholesky(self.kappa["r"] * self.S_r)
        new, info = rwmh_step(lp, s.r, chol, self.rng)
        s.r = new[0]
        return info

    def update_xi(self):
        s, pr = self.state, self.prior

        def lp(x):
            d = self._delta(s, xi=x[:, 0])
            return self.ev.loglik_by_market(d, s.r) + normal_logpdf(x[:, 0], pr.mu_xi, pr.V_xi)

        new, info = rwmh_step(lp, s.xi_bar[:, None], np.array([[self.kappa["xi"]]]), self.rng)
        s.xi_bar = new[:, 0]
        return info

    def update_eta(self):
        s, mask = self.state, self.mask
        var = np.where(mask, self._eta_var(s.gamma), 1.0)

        def lp(E):
            ll = self.ev.loglik_by_market(self._delta(s, eta=E), s.r)
            return ll + np.sum(np.where(mask, normal_logpdf(E, 0.0, var), 0.0), axis=1)

        def dv(E):
            f, g, H = self.ev.delta_derivs(self._delta(s, eta=E), s.r, with_value=True)
            f = f + np.sum(np.where(mask, normal_logpdf(E, 0.0, var), 0.0), axis=1)
            g = g - np.where(mask, E / var, 0.0)
            H = H - np.einsum("tj,jk->tjk", 1 / var, np.eye(mask.shape[1]))
            return f, g, H

        new, info = tmh_step(lp, dv, s.eta, self.kappa["eta"], self.rng, mask=mask,
                             max_iter=self.cfg.newton_max_iter, grad_tol=self.cfg.newton_grad_tol)
        s.eta = np.where(mask, new, 0.0)
        return info

    def update_gamma(self):
        s = self.state
        if self.pooled_eta:
            s.gamma = self.mask.copy()
            return
        s.gamma = gibbs_update_gamma(s.eta, s.phi, self.prior, self.rng, self.mask)

    def update_phi(self):
        s = self.state
        s.phi = gibbs_update_phi(s.gamma, self.p.J, self.prior, self.rng)

    def update_tau(self, a0=1e-3, b0=1e-3):
        eta = self.state.eta[self.mask]
        shape = a0 + 0.5 * eta.size
        rate = b0 + 0.5 * np.sum(eta**2)
        self.tau_sq = rate / self.rng.gamma(shape)

    # -- driver

    def iterate(self) -> dict:
        out = {}
        fixed = self.cfg.fixed_blocks
        if "beta" not in fixed:
            out["beta"] = self.update_beta()
        if "r" not in fixed and self.data.d_rc > 0:
            out["r"] = self.update_r()
        if "xi" not in fixed:
            out["xi"] = self.update_xi()
        if "eta" not in fixed:
            out["eta"] = self.update_eta()
        if "gamma" not in fixed:
            self.update_gamma()
        if "phi" not in fixed:
            self.update_phi()
        if self.pooled_eta:
            self.update_tau()
        return out

    def run(self, progress=None) -> PosteriorSamples:
        cfg, s, p = self.cfg, self.state, self.p
        G = cfg.retained
        dX, d_rc = self.data.d_X, self.data.d_rc
        out = dict(
            beta=np.empty((G, dX)), r=np.empty((G, d_rc)), xi_bar=np.empty((G, p.T)),
            eta=np.empty((G, p.T, p.Jmax)), gamma=np.empty((G, p.T, p.Jmax), dtype=bool),
            phi=np.empty((G, p.T)),
        )
        tau_draws = np.empty(G) if self.pooled_eta else None
        mh_blocks = ("beta", "r", "xi", "eta")
        window = {k: [0, 0] for k in mh_blocks}
        burn = {k: [0, 0] for k in mh_blocks}
        kept = {k: [0, 0] for k in mh_blocks}
        cal_log = []
        r_hist = []
        half = cfg.burn_in // 2
        g = 0
        t0 = time.perf_counter()
        for it in range(cfg.total_draws):
            infos = self.iterate()
            in_burn = it < cfg.burn_in
            for k, info in infos.items():
                a, n = int(info.accepted.sum()), info.accepted.size
                tgt = burn if in_burn else kept
                tgt[k][0] += a
                tgt[k][1] += n
                window[k][0] += a
                window[k][1] += n
                if info.fallback is not None:
                    self.flags["rw_fallback"] += int(info.fallback.sum())
                if info.newton_converged is not None:
                    self.flags["newton_nonconverged"] += int((~info.newton_converged).sum())
            if in_burn and cfg.calibrate:
                if d_rc and cfg.burn_in >= 400 and half // 2 <= it < half:
                    r_hist.append(s.r.copy())
                if d_rc and it + 1 == half and len(r_hist) >= 50:
                    C = np.atleast_2d(np.cov(np.array(r_hist).T))
                    self.S_r = C + 1e-10 * np.eye(d_rc)
                    self.kappa["r"] = 2.38**2 / d_rc
                    cal_log.append({"iteration": it + 1, "event": "S_r", "S_r": self.S_r.tolist()})
                if (it + 1) % cfg.window == 0:
                    entry = {"iteration": it + 1}
                    for k, (a, n) in window.items():
                        if n:
                            rate = a / n
                            self.kappa[k] = calibrate(self.kappa[k], rate, cfg.target_accept)
                            entry[k] = (rate, self.kappa[k])
                    cal_log.append(entry)
            if (it + 1) % cfg.window == 0:
                window = {k: [0, 0] for k in mh_blocks}
            if not in_burn and (it - cfg.burn_in) % cfg.thin == 0:
                out["beta"][g] = s.beta_bar
                out["r"][g] = s.r
                out["xi_bar"][g] = s.xi_bar
                out["eta"][g] = s.eta
                out["gamma"][g] = s.gamma
                out["phi"][g] = s.phi
                if tau_draws is not None:
                    tau_draws[g] = self.tau_sq
                g += 1
            if progress and (it + 1) % progress == 0:
                log.info("iteration %d/%d (%.1fs)", it + 1, cfg.total_draws, time.perf_counter() - t0)
        self.ev.close()
        samples = PosteriorSamples(
            **out, J=p.J.copy(), columns=tuple(self.data.columns), rc_mask=self.data.rc_mask.copy(),
            market_ids=tuple(m.market_id for m in self.data.markets), nodes=self.draws.nodes,
            accept={k: tuple(v) for k, v in kept.items() if v[1]},
            burn_accept={k: tuple(v) for k, v in burn.items() if v[1]},
            calibration_log=cal_log, kappa=dict(self.kappa), S_r=self.S_r.copy(), flags=dict(self.flags),
        )
        if tau_draws is not None:
            samples.flags["tau_sq_mean"] = float(tau_draws.mean())
        return samples


def run_chain(data: Dataset, prior_cfg: PriorConfig, mcmc_cfg: McmcConfig,
              draws: RcDraws | None = None, init: ParamState | None = None,
              R0: int = 200, progress=None) -> PosteriorSamples:
    if draws is None:
        node_seed = np.random.SeedSequence(mcmc_cfg.seed).spawn(2)[0]
        draws = RcDraws.standard_normal(R0, data.d_rc, np.random.default_rng(node_seed))
    return Sampler(data, prior_cfg, mcmc_cfg, draws, init).run(progress)


def semi_auto_tau(data: Dataset, prior_cfg: PriorConfig, mcmc_cfg: McmcConfig,
                  draws: RcDraws | None = None, R0: int = 200):
    """Pre-fit under a common N(0, tau^2) on every deviation.

    Returns ``(1e-2 * tau_hat, 10 * tau_hat)`` with ``tau_hat`` the posterior
    mean of tau^2. Not used unless requested.
    """
    if draws is None:
        node_seed = np.random.SeedSequence(mcmc_cfg.seed).spawn(2)[0]
        draws = RcDraws.standard_normal(R0, data.d_rc, np.random.default_rng(node_seed))
    cfg = replace(mcmc_cfg, fixed_blocks=tuple(set(mcmc_cfg.fixed_blocks) | {"gamma", "phi"}))
    s = Sampler(data, prior_cfg, cfg, draws, pooled_eta=True).run()
    tau_hat = s.flags["tau_sq_mean"]
    return 1e-2 * tau_hat, 10 * tau_hat


# ---------------------------------------------------------------- summaries


def _interval(x, axis=0):
    lo, hi = np.quantile(x, [0.025, 0.975], axis=axis)
    return lo, hi


def summarize_draws(x):
    """Mean, SD, and equal-tailed 95% interval along the first axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("no draws to summarize")
    lo, hi = _interval(x)
    return x.mean(axis=0), x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1:]), lo, hi


@dataclass
class Summary:
    rows: list  # (name, mean, sd, ci_lo, ci_hi)
    gamma_mean: np.ndarray
    eta_mean: np.ndarray
    phi_mean: np.ndarray

    def get(self, name):
        for row in self.rows:
            if row[0] == name:
                return row
        raise KeyError(name)


def parameter_names(columns, rc_mask, market_ids):
    cols = list(columns)
    rc_cols = [c for c, m in zip(cols, rc_mask) if m]
    return ([f"beta[{c}]" for c in cols] + [f"sigma[{c}]" for c in rc_cols]
            + [f"r[{c}]" for c in rc_cols] + [f"xi_bar[{m}]" for m in market_ids])


def summarize(samples: PosteriorSamples) -> Summary:
    if samples.G == 0:
        raise ValueError("empty posterior sample")
    blocks = [samples.beta, np.exp(samples.r), samples.r, samples.xi_bar]
    names = parameter_names(samples.columns, samples.rc_mask, samples.market_ids)
    stats = [summarize_draws(b) for b in blocks]
    cols = [np.concatenate([s[i] for s in stats]) for i in range(4)]
    rows = [(n, *(float(c[k]) for c in cols)) for k, n in enumerate(names)]
    return Summary(
        rows=rows,
        gamma_mean=samples.gamma.mean(axis=0),
        eta_mean=samples.eta.mean(axis=0),
        phi_mean=samples.phi.mean(axis=0),
    )


def effective_sample_size(x) -> float:
    """Initial-positive-sequence ESS of a 1-D chain."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    var = x.var()
    if var == 0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (var * n)
    s = 0.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair < 0:
            break
        s += pair
    tau = 1 + 2 * s
    return float(n / max(tau, 1e-12))


def split_rhat(x) -> float:
    x = np.asarray(x, dtype=float)
    n = x.size // 2
    if n < 2:
        return float("nan")
    chains = np.stack([x[:n], x[n : 2 * n]])
    W = chains.var(axis=1, ddof=1).mean()
    B = n * chains.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))
