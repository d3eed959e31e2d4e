"""Compare MCMC marginals with a dense-grid posterior on a one-market, one-product logit.

gamma is held at 0, so eta has the spike prior. The grid integrates over
(beta, xi_bar, eta) directly. Prints posterior medians from both and the KS
p-value of the (ESS-thinned) chain against the grid CDF.

    python3 scripts/grid_oracle.py --draws 50000
"""
import argparse
import time

import numpy as np
from scipy import stats
from scipy.special import log_expit

from sparsedemand.mcmc import McmcConfig, effective_sample_size, run_chain
from sparsedemand.model import Dataset, MarketData, RcDraws
from sparsedemand.priors import PriorConfig


def marginal_cdfs(x, N, q, prior, n=401):
    axes = [np.linspace(-5, 5, n), np.linspace(-5, 5, n), np.linspace(-0.2, 0.2, 81)]
    B, XI, E = np.meshgrid(*axes, indexing="ij")
    d = x * B + XI + E
    lp = (q * log_expit(d) + (N - q) * log_expit(-d) - 0.5 * B ** 2 / prior.V_beta
          - 0.5 * XI ** 2 / prior.V_xi - 0.5 * E ** 2 / prior.tau0_sq)
    w = np.exp(lp - lp.max())
    out = []
    for k, grid in enumerate(axes):
        dens = w.sum(axis=tuple(i for i in range(3) if i != k))
        c = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        out.append((grid, c / c[-1]))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--x", type=float, default=0.5)
    ap.add_argument("--N", type=int, default=50)
    ap.add_argument("--q", type=int, default=15)
    ap.add_argument("--draws", type=int, default=50_000)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args(argv)

    prior = PriorConfig(V_beta=1.0, V_xi=1.0)
    data = Dataset([MarketData("a", args.N, np.array([args.q]), np.array([[args.x]]))], rc_mask=np.array([False]))
    cfg = McmcConfig(total_draws=args.draws + args.burn_in, burn_in=args.burn_in, seed=args.seed,
                     fixed_blocks=("gamma", "phi"))
    t0 = time.perf_counter()
    s = run_chain(data, prior, cfg, draws=RcDraws(np.zeros((1, 0))))
    print(f"chain: {time.perf_counter() - t0:.1f}s, acceptance {s.acceptance_rates()}")
    chains = (s.beta[:, 0], s.xi_bar[:, 0], s.eta[:, 0, 0])
    for name, x, (grid, c) in zip(("beta", "xi_bar", "eta"), chains, marginal_cdfs(args.x, args.N, args.q, prior)):
        ess = effective_sample_size(x)
        k = int(np.ceil(x.size / ess))
        p = stats.kstest(x[::k], lambda v: np.interp(v, grid, c)).pvalue
        print(f"{name:7s} median mcmc {np.median(x):+.4f} grid {np.interp(0.5, c, grid):+.4f}  "
              f"ESS {ess:7.0f}  KS p {p:.3f}")


if __name__ == "__main__":
    main()
