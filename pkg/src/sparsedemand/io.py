"""File formats: market CSVs, fit configs, stored draws and summary tables.

Every file is written with LF line endings and floats at 17 significant
digits, so a value written and read back is the same double.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .mcmc import McmcConfig, PosteriorSamples, Summary
from .model import DataError, Dataset, MarketData
from .priors import PriorConfig

FLOAT_FMT = "%.17g"
KEY_COLUMNS = ("market_id", "product_id", "quantity", "market_size")


def fmt(x) -> str:
    return FLOAT_FMT % x


def write_text(path, text: str):
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write(text)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- datasets


def _parse_int(text, what, row):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"row {row}: {what} {text!r} is not a number") from None
    if not v.is_integer():
        raise DataError(f"row {row}: {what} {text!r} is not an integer")
    return int(v)


def load_dataset(path, characteristics=None, rc_columns=("price",)) -> Dataset:
    """Read a long-format market CSV.

    Markets keep their order of first appearance and products their row
    order. ``characteristics`` defaults to every non-key column.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    missing = [c for c in KEY_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    if characteristics is None:
        characteristics = [h for h in header if h not in KEY_COLUMNS]
    characteristics = list(characteristics)
    missing = [c for c in characteristics if c not in header]
    if missing:
        raise DataError(f"{path}: missing characteristic column(s) {', '.join(missing)}")
    if not characteristics:
        raise DataError(f"{path}: no characteristic columns")
    bad_rc = [c for c in rc_columns if c not in characteristics]
    if bad_rc:
        raise DataError(f"{path}: random-coefficient column(s) {', '.join(bad_rc)} not among characteristics")
    col = {h: i for i, h in enumerate(header)}

    groups: dict = {}
    for n, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {n}: expected {len(header)} fields, got {len(row)}")
        mid = row[col["market_id"]]
        g = groups.setdefault(mid, {"pid": [], "q": [], "size": set(), "X": []})
        g["pid"].append(row[col["product_id"]])
        g["q"].append(_parse_int(row[col["quantity"]], "quantity", n))
        g["size"].add(_parse_int(row[col["market_size"]], "market_size", n))
        try:
            g["X"].append([float(row[col[c]]) for c in characteristics])
        except ValueError:
            raise DataError(f"row {n}: non-numeric characteristic") from None

    if not groups:
        raise DataError(f"{path}: no data rows")
    markets = []
    for mid, g in groups.items():
        if len(g["size"]) != 1:
            raise DataError(f"market {mid}: inconsistent market_size values {sorted(g['size'])}")
        if len(set(g["pid"])) != len(g["pid"]):
            raise DataError(f"market {mid}: duplicate product_id")
        size = g["size"].pop()
        q0 = size - sum(g["q"])
        if q0 < 0:
            raise DataError(f"market {mid}: negative outside quantity ({size} - {sum(g['q'])} = {q0})")
        markets.append(MarketData(mid, size, np.array(g["q"]), np.array(g["X"]), tuple(g["pid"])))
    rc_mask = np.array([c in rc_columns for c in characteristics])
    return Dataset(markets, rc_mask=rc_mask, columns=tuple(characteristics))


def dataset_csv(data: Dataset) -> str:
    out = io.StringIO()
    out.write(",".join(KEY_COLUMNS + tuple(data.columns)) + "\n")
    for m in data.markets:
        for j in range(m.J):
            vals = [str(m.market_id), str(m.product_ids[j]), str(int(m.q[j])), str(m.market_size)]
            vals += [fmt(x) for x in m.X[j]]
            out.write(",".join(vals) + "\n")
    return out.getvalue()


def save_dataset(data: Dataset, path):
    write_text(path, dataset_csv(data))


# ---------------------------------------------------------------- configuration


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    data: str = ""
    characteristics: tuple = ()  # empty: every non-key column
    rc_columns: tuple = ("price",)
    price_column: str = "price"
    R0: int = 200


@dataclass
class FitConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    model: ModelSection = field(default_factory=ModelSection)

    def to_dict(self):
        return {"prior": asdict(self.prior), "mcmc": asdict(self.mcmc), "model": asdict(self.model)}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def check_columns(self, data: Dataset):
        cols = list(data.columns)
        for c in (self.model.price_column, *self.model.rc_columns):
            if c not in cols:
                raise ConfigError(f"[model] column {c!r} not in dataset columns {cols}")


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(s, conv=str):
    return tuple(conv(x.strip()) for x in s.split(",") if x.strip())


def _parser_for(annotation):
    """Map a dataclass annotation string to a text parser."""
    a = str(annotation).replace(" ", "")
    if a == "bool":
        return _parse_bool
    if a == "int":
        return int
    if a == "float":
        return float
    if a == "str":
        return str
    if a == "float|None":
        return lambda s: None if s.strip().lower() in ("", "none", "auto") else float(s)
    if a == "float|tuple":
        return lambda s: (lambda v: v[0] if len(v) == 1 else v)(_parse_list(s, float))
    if a == "tuple":
        return _parse_list
    raise TypeError(f"no parser for {annotation}")


_SECTIONS = {"prior": PriorConfig, "mcmc": McmcConfig, "model": ModelSection}
_SPECIAL = {
    ("mcmc", "target_accept"): lambda s: _parse_list(s, float),
    ("mcmc", "fixed_blocks"): _parse_list,
}


def _line_of(text, section, key):
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip().lower() == key.lower():
            return n
    return None


def parse_config(text: str, source="<config>") -> FitConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    values = {}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        types = {f.name: f.type for f in fields(_SECTIONS[sec])}
        kw = {}
        for key, raw in cp.items(sec):
            where = f"{source}:{_line_of(text, sec, key)}: [{sec}] {key}"
            if key not in types:
                raise ConfigError(f"{where}: unknown field")
            conv = _SPECIAL.get((sec, key)) or _parser_for(types[key])
            try:
                kw[key] = conv(raw)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"{where}: {e}") from None
        values[sec] = kw
    built = {}
    for sec, cls in _SECTIONS.items():
        try:
            built[sec] = cls(**values.get(sec, {}))
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{source}: [{sec}] {e}") from None
    if built["model"].R0 < 1:
        raise ConfigError(f"{source}:{_line_of(text, 'model', 'R0')}: [model] R0: must be >= 1")
    return FitConfig(prior=built["prior"], mcmc=built["mcmc"], model=built["model"])


def load_config(path) -> FitConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), source=str(path))


def config_text(cfg: FitConfig) -> str:
    def show(v):
        if v is None:
            return "none"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (tuple, list)):
            return ", ".join(show(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = []
    for sec, obj in (("model", cfg.model), ("prior", cfg.prior), ("mcmc", cfg.mcmc)):
        lines.append(f"[{sec}]")
        lines += [f"{k} = {show(v)}" for k, v in asdict(obj).items()]
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------- draws


def _matrix_csv(header, M, int_fmt=False) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    if M.size:
        np.savetxt(out, M, fmt="%d" if int_fmt else FLOAT_FMT, delimiter=",", newline="\n")
    elif M.shape[0]:
        out.write("\n" * M.shape[0])
    return out.getvalue()


def _read_matrix(path, dtype=float):
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        body = f.read()
    names = header.split(",") if header else []
    if not names:
        n = body.count("\n")
        return names, np.empty((n, 0), dtype=dtype)
    M = np.loadtxt(io.StringIO(body), delimiter=",", dtype=dtype, ndmin=2)
    return names, M.reshape(-1, len(names))


def product_labels(J, market_ids, product_ids):
    return [f"{market_ids[t]}:{product_ids[t][j]}" for t in range(len(J)) for j in range(J[t])]


def write_draws(samples: PosteriorSamples, product_ids, directory):
    """One CSV per block plus ``index.json``; returns the written file names."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mask = np.arange(samples.eta.shape[2])[None, :] < samples.J[:, None]
    cols = list(samples.columns)
    rc_cols = [c for c, m in zip(cols, samples.rc_mask) if m]
    cells = product_labels(samples.J, samples.market_ids, product_ids)
    blocks = {
        "beta.csv": (cols, samples.beta, False),
        "r.csv": (rc_cols, samples.r, False),
        "xi_bar.csv": ([str(m) for m in samples.market_ids], samples.xi_bar, False),
        "eta.csv": (cells, samples.eta[:, mask], False),
        "gamma.csv": (cells, samples.gamma[:, mask].astype(np.int64), True),
        "phi.csv": ([str(m) for m in samples.market_ids], samples.phi, False),
        "nodes.csv": (rc_cols, samples.nodes, False),
    }
    for name, (header, M, is_int) in blocks.items():
        write_text(d / name, _matrix_csv(header, M, is_int))
    index = {
        "G": samples.G,
        "columns": cols,
        "rc_mask": [bool(x) for x in samples.rc_mask],
        "market_ids": [str(m) for m in samples.market_ids],
        "product_ids": [[str(p) for p in ids] for ids in product_ids],
        "J": [int(j) for j in samples.J],
        "files": list(blocks),
        "accept": {k: list(v) for k, v in samples.accept.items()},
        "burn_accept": {k: list(v) for k, v in samples.burn_accept.items()},
        "kappa": {k: float(v) for k, v in samples.kappa.items()},
        "S_r": None if samples.S_r is None else np.asarray(samples.S_r).tolist(),
        "flags": samples.flags,
    }
    write_text(d / "index.json", json.dumps(index, indent=2, sort_keys=True) + "\n")
    return list(blocks) + ["index.json"]


def read_draws(directory):
    """Inverse of ``write_draws``; returns ``(samples, product_ids)``."""
    d = Path(directory)
    try:
        index = json.loads((d / "index.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(f"{d}: no index.json; not a draws directory") from None
    J = np.array(index["J"], dtype=np.int64)
    T, Jmax, G = J.size, int(J.max()), index["G"]
    mask = np.arange(Jmax)[None, :] < J[:, None]

    def block(name, dtype=float):
        _, M = _read_matrix(d / name, dtype)
        if M.shape[0] != G and name != "nodes.csv":
            raise DataError(f"{d / name}: {M.shape[0]} rows, index says {G}")
        return M

    eta = np.zeros((G, T, Jmax))
    eta[:, mask] = block("eta.csv")
    gamma = np.zeros((G, T, Jmax), dtype=bool)
    gamma[:, mask] = block("gamma.csv", np.int64).astype(bool)
    samples = PosteriorSamples(
        beta=block("beta.csv"), r=block("r.csv"), xi_bar=block("xi_bar.csv"),
        eta=eta, gamma=gamma, phi=block("phi.csv"), J=J,
        columns=tuple(index["columns"]), rc_mask=np.array(index["rc_mask"], dtype=bool),
        market_ids=tuple(index["market_ids"]), nodes=block("nodes.csv"),
        accept={k: tuple(v) for k, v in index["accept"].items()},
        burn_accept={k: tuple(v) for k, v in index["burn_accept"].items()},
        kappa=index["kappa"], S_r=None if index["S_r"] is None else np.array(index["S_r"]),
        flags=index["flags"],
    )
    return samples, [tuple(p) for p in index["product_ids"]]


# ---------------------------------------------------------------- summary tables


def write_summaries(summary: Summary, samples: PosteriorSamples, product_ids, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = ["parameter,mean,sd,ci_lo,ci_hi"]
    lines += [",".join([name] + [fmt(v) for v in vals]) for name, *vals in summary.rows]
    write_text(d / "summary.csv", "\n".join(lines) + "\n")

    lines = ["market_id,product_id,gamma_mean,eta_mean"]
    for t, mid in enumerate(samples.market_ids):
        for j in range(samples.J[t]):
            lines.append(f"{mid},{product_ids[t][j]},{fmt(summary.gamma_mean[t, j])},{fmt(summary.eta_mean[t, j])}")
    write_text(d / "sparsity.csv", "\n".join(lines) + "\n")

    lines = ["market_id,phi_mean"]
    lines += [f"{mid},{fmt(summary.phi_mean[t])}" for t, mid in enumerate(samples.market_ids)]
    write_text(d / "phi.csv", "\n".join(lines) + "\n")
    return ["summary.csv", "sparsity.csv", "phi.csv"]


def read_table(path):
    """A summary CSV as a list of dicts with string values."""
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_elasticities(es, market_ids, product_ids, path):
    """One row per (market, j, m): elasticity of product j's share with respect to product m's price."""
    lines = ["market_id,j,m,mean,sd,ci_lo,ci_hi,at_posterior_mean"]
    for i, t in enumerate(es.market_index):
        for j in range(es.J[i]):
            for m in range(es.J[i]):
                vals = [es.mean[i, j, m], es.sd[i, j, m], es.ci_lo[i, j, m], es.ci_hi[i, j, m],
                        es.at_posterior_mean[i, j, m]]
                lines.append(",".join([str(market_ids[t]), str(product_ids[t][j]), str(product_ids[t][m])]
                                      + [fmt(v) for v in vals]))
    write_text(path, "\n".join(lines) + "\n")


def write_json(obj, path):
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")

