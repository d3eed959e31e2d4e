"""Command-line interface: simulate | fit | summarize | elasticity | invert."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path


from . import __version__
from .dgp import DgpConfig, gen_dataset
from .elasticity import ElasticityRequest, posterior_elasticity
from .inversion import InversionError, contraction_invert, embed_restricted, restricted_invert
from .io import (
    ConfigError, FitConfig, config_text, fmt, load_config, load_dataset, read_draws,
    save_dataset, sha256_file, write_draws, write_elasticities, write_json, write_summaries,
    write_text,
)
from .mcmc import SamplerError, run_chain, summarize
from .model import DataError
from .priors import PriorError

log = logging.getLogger("sparsedemand")


def _fit_config(args) -> FitConfig:
    cfg = load_config(args.config) if args.config else FitConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    for name in ("total_draws", "burn_in", "thin"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if over:
        cfg = replace(cfg, mcmc=replace(cfg.mcmc, **over))
    return cfg


def _data_path(args, cfg: FitConfig) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    if cfg.model.data:
        p = Path(cfg.model.data)
        if not p.is_absolute() and args.config:
            p = Path(args.config).parent / p
        return p
    raise ConfigError("no dataset given: pass --data or set [model] data")


def _load_for(cfg: FitConfig, path):
    chars = list(cfg.model.characteristics) or None
    data = load_dataset(path, characteristics=chars, rc_columns=cfg.model.rc_columns)
    cfg.check_columns(data)
    return data


def _product_ids(data):
    return [m.product_ids for m in data.markets]


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = DgpConfig(design=args.design, J=args.J, T=args.T, N=args.N, seed=args.seed or 0,
                    replication=args.replication, expected_counts=args.expected_counts)
    data, truth = gen_dataset(cfg)
    save_dataset(data, out / "data.csv")
    write_json({"dgp": asdict(cfg), **truth.to_dict()}, out / "truth.json")
    log.info("wrote %s", out / "data.csv")


def cmd_fit(args):
    cfg = _fit_config(args)
    path = _data_path(args, cfg)
    data = _load_for(cfg, path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    samples = run_chain(data, cfg.prior, cfg.mcmc, R0=cfg.model.R0, progress=args.progress)
    wall = time.perf_counter() - t0
    pids = _product_ids(data)
    files = write_draws(samples, pids, out / "draws")
    summary = summarize(samples)
    write_summaries(summary, samples, pids, out)
    write_text(out / "config.ini", config_text(cfg))
    write_json({
        "config_hash": cfg.hash(),
        "data_hash": sha256_file(path),
        "data": str(path),
        "seed": cfg.mcmc.seed,
        "threads": cfg.mcmc.threads,
        "code_version": __version__,
        "wall_clock_seconds": wall,
        "acceptance_rates": samples.acceptance_rates(),
        "flags": samples.flags,
        "draw_hashes": {f: sha256_file(out / "draws" / f) for f in files},
    }, out / "manifest.json")
    for k, v in samples.acceptance_rates().items():
        log.info("acceptance %s: %.3f", k, v)


def cmd_summarize(args):
    src = Path(args.draws) if args.draws else Path(args.out) / "draws"
    samples, pids = read_draws(src)
    write_summaries(summarize(samples), samples, pids, Path(args.out))


def cmd_elasticity(args):
    src = Path(args.draws) if args.draws else Path(args.out) / "draws"
    samples, pids = read_draws(src)
    rc_cols = [c for c, m in zip(samples.columns, samples.rc_mask) if m]
    data = load_dataset(args.data, characteristics=list(samples.columns), rc_columns=rc_cols)
    if [str(m.market_id) for m in data.markets] != list(samples.market_ids):
        raise DataError("dataset markets do not match the stored draws")
    if args.price not in samples.columns:
        raise ConfigError(f"price column {args.price!r} not in {list(samples.columns)}")
    markets = None
    if args.markets:
        ids = [s.strip() for s in args.markets.split(",")]
        pos = {m: t for t, m in enumerate(samples.market_ids)}
        unknown = [m for m in ids if m not in pos]
        if unknown:
            raise DataError(f"unknown market id(s): {', '.join(unknown)}")
        markets = tuple(pos[m] for m in ids)
    req = ElasticityRequest(price_col=list(samples.columns).index(args.price), markets=markets)
    es = posterior_elasticity(samples, data, req)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_elasticities(es, samples.market_ids, pids, out / "elasticity.csv")
    log.info("mean own elasticity %.4f (at posterior mean %.4f)", es.own_mean, es.own_at_mean_mean)


def cmd_invert(args):
    """Shocks implied by observed shares at posterior-mean (beta_bar, r)."""
    src = Path(args.draws) if args.draws else Path(args.out) / "draws"
    samples, pids = read_draws(src)
    rc_cols = [c for c, m in zip(samples.columns, samples.rc_mask) if m]
    data = load_dataset(args.data, characteristics=list(samples.columns), rc_columns=rc_cols)
    beta, r = samples.beta.mean(0), samples.r.mean(0)
    sparse = [int(k) - 1 for k in args.sparse.split(",")] if args.sparse else None
    lines = ["market_id,product_id,xi,method"]
    for m in data.markets:
        shares = m.q / m.market_size
        if sparse is None:
            xi, how = contraction_invert(m.X, shares, beta, r, samples.nodes, data.rc_mask), "contraction"
        else:
            free, nu = restricted_invert(m.X, shares, sparse, beta, r, samples.nodes, data.rc_mask)
            xi, how = embed_restricted(m.J, sparse, free, nu), "restricted"
        lines += [f"{m.market_id},{m.product_ids[j]},{fmt(xi[j])},{how}" for j in range(m.J)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "xi.csv", "\n".join(lines) + "\n")


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [model], [prior], [mcmc] sections")
    common.add_argument("--seed", type=int, help="overrides [mcmc] seed")
    common.add_argument("--threads", type=int, help="worker threads; 1 gives canonical output")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sparsedemand", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    s.add_argument("--design", type=int, default=1, choices=(1, 2, 3, 4))
    s.add_argument("--J", type=int, default=5)
    s.add_argument("--T", type=int, default=25)
    s.add_argument("--N", type=int, default=1000)
    s.add_argument("--replication", type=int, default=0)
    s.add_argument("--expected-counts", action="store_true",
                   help="round expected quantities instead of sampling consumers")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", parents=[common], help="run the sampler")
    f.add_argument("--data", help="market CSV; overrides [model] data")
    f.add_argument("--total-draws", dest="total_draws", type=int)
    f.add_argument("--burn-in", dest="burn_in", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--progress", type=int, default=0, help="log every N iterations")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("summarize", parents=[common], help="summaries from stored draws")
    m.add_argument("--draws", help="draws directory (default OUT/draws)")
    m.set_defaults(func=cmd_summarize)

    e = sub.add_parser("elasticity", parents=[common], help="posterior price elasticities")
    e.add_argument("--data", required=True)
    e.add_argument("--draws")
    e.add_argument("--price", default="price")
    e.add_argument("--markets", help="comma-separated market ids (default all)")
    e.set_defaults(func=cmd_elasticity)

    i = sub.add_parser("invert", parents=[common], help="invert shares at posterior-mean parameters")
    i.add_argument("--data", required=True)
    i.add_argument("--draws")
    i.add_argument("--sparse", help="1-based product positions sharing one shock, e.g. 2,3,4")
    i.set_defaults(func=cmd_invert)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, DataError, PriorError, SamplerError, InversionError,
            FileNotFoundError, ValueError, OSError) as e:
        print(f"sparsedemand {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
