"""Monte Carlo replications: simulate, fit, and score bias and sparsity per replication.

    python3 scripts/run_monte_carlo.py --design 1 --reps 5 --out mc_dgp1.csv
"""
import argparse
import csv
import sys
import time

import numpy as np

from sparsedemand.dgp import DgpConfig, gen_dataset, score_sparsity
from sparsedemand.mcmc import McmcConfig, run_chain
from sparsedemand.priors import PriorConfig

FIELDS = ["design", "replication", "bias_xi_bar", "bias_beta_p", "bias_beta_w", "bias_sigma",
          "prob_nonzero", "prob_zero", "accept_beta", "accept_r", "accept_xi", "accept_eta", "seconds"]


def one_replication(args, rep):
    data, truth = gen_dataset(DgpConfig(design=args.design, J=args.J, T=args.T, N=args.N,
                                        seed=args.seed, replication=rep))
    cfg = McmcConfig(total_draws=args.total_draws, burn_in=args.burn_in, seed=args.chain_seed + rep,
                     threads=args.threads)
    t0 = time.perf_counter()
    s = run_chain(data, PriorConfig(), cfg, R0=args.R0)
    secs = time.perf_counter() - t0
    hit, false = score_sparsity(s.gamma.mean(axis=0), truth.eta)
    acc = s.acceptance_rates()
    beta = s.beta.mean(axis=0) - truth.beta
    return {
        "design": args.design, "replication": rep,
        "bias_xi_bar": s.xi_bar.mean() - truth.xi_bar.mean(),
        "bias_beta_p": beta[0], "bias_beta_w": beta[1],
        "bias_sigma": np.exp(s.r).mean(axis=0)[0] - truth.sigma[0],
        "prob_nonzero": hit, "prob_zero": false,
        "accept_beta": acc["beta"], "accept_r": acc["r"], "accept_xi": acc["xi"], "accept_eta": acc["eta"],
        "seconds": secs,
    }


def _num(v):
    return "n/a" if v is None else f"{v:.2f}"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--design", type=int, default=1, choices=(1, 2, 3, 4))
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--J", type=int, default=5)
    ap.add_argument("--T", type=int, default=25)
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--total-draws", type=int, default=5000)
    ap.add_argument("--burn-in", type=int, default=2000)
    ap.add_argument("--R0", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2024, help="data seed")
    ap.add_argument("--chain-seed", type=int, default=100, help="chain seed for replication 0")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="monte_carlo.csv")
    args = ap.parse_args(argv)

    rows = []
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, FIELDS, lineterminator="\n")
        w.writeheader()
        for rep in range(args.reps):
            row = one_replication(args, rep)
            rows.append(row)
            w.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in row.items()})
            fh.flush()
            print(f"rep {rep}: beta_p {row['bias_beta_p']:+.3f}  sigma {row['bias_sigma']:+.3f}  "
                  f"P1 {_num(row['prob_nonzero'])}  P0 {_num(row['prob_zero'])}  ({row['seconds']:.0f}s)",
                  file=sys.stderr)

    print(f"design {args.design}, {args.reps} replications")
    for k in FIELDS[2:6]:
        v = np.array([r[k] for r in rows])
        print(f"  {k:12s} mean {v.mean():+.3f}  mean abs {np.abs(v).mean():.3f}")
    for k in ("prob_nonzero", "prob_zero"):
        v = [r[k] for r in rows if r[k] is not None]
        print(f"  {k:12s} mean {np.mean(v):.3f}" if v else f"  {k:12s} n/a")


if __name__ == "__main__":
    main()
