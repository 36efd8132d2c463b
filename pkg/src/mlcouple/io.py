"""CSV and JSON readers/writers for traces, power curves, regions and chains.

Floats are written with ``repr`` so every file round-trips exactly.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import MalformedFile
from .features import LikelihoodConfig, PowerCurve, Theta
from .mcmc import McmcConfig
from .region import FeasibleRegion
from .sim import MLParams, VoltageTrace

TRACE_COLUMNS = ("t", "v1", "v2")
GATING_COLUMNS = ("w1", "w2", "s1", "s2")
CHAIN_COLUMNS = ("iter", "accepted", "log_post", "Iapp", "gsyn", "pscale1", "pscale2",
                 "pleak1", "pleak2", "mstd1", "mstd2")


def _fmt(x):
    return repr(float(x))


def _read_table(path, required, optional=()):
    """Header-checked numeric table as a dict of float arrays."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise MalformedFile(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise MalformedFile(f"{path}: missing columns {missing}")
    extra = [c for c in header if c not in required and c not in optional]
    if extra:
        raise MalformedFile(f"{path}: unexpected columns {extra}")
    body = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise MalformedFile(f"{path}: non-numeric entry ({exc})") from exc
    if any(len(r) != len(header) for r in body):
        raise MalformedFile(f"{path}: ragged rows")
    data = data.reshape(len(body), len(header))
    return {name: data[:, j].copy() for j, name in enumerate(header)}


def _write_table(path, header, columns):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(x) for x in row])


# ---------------------------------------------------------------------------
# traces and power curves


def write_trace_csv(path, trace):
    header = list(TRACE_COLUMNS)
    cols = [trace.times, trace.v1, trace.v2]
    if trace.has_gating:
        header += list(GATING_COLUMNS)
        cols += [trace.w1, trace.w2, trace.s1, trace.s2]
    _write_table(path, header, cols)


def read_trace_csv(path):
    tab = _read_table(path, TRACE_COLUMNS, GATING_COLUMNS)
    present = [c for c in GATING_COLUMNS if c in tab]
    if present and len(present) != len(GATING_COLUMNS):
        raise MalformedFile(f"{path}: gating columns must be all present or all absent")
    if tab["t"].size < 2:
        raise MalformedFile(f"{path}: need at least two samples")
    for name, col in tab.items():
        if not np.all(np.isfinite(col)):
            raise MalformedFile(f"{path}: column {name} has non-finite values")
    try:
        return VoltageTrace(tab["t"], tab["v1"], tab["v2"],
                            *(tab.get(c) for c in GATING_COLUMNS))
    except ValueError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc


def write_power_csv(path, curve):
    _write_table(path, ["t", "P"], [curve.times, curve.P])


def read_power_csv(path, channel=0):
    tab = _read_table(path, ("t", "P"))
    return PowerCurve(tab["t"], tab["P"], channel)


# ---------------------------------------------------------------------------
# region


def write_region_csv(path, region):
    b = region.boundary if isinstance(region, FeasibleRegion) else np.asarray(region, float)
    _write_table(path, ["gsyn", "Iapp"], [b[:, 0], b[:, 1]])


def read_region_csv(path):
    tab = _read_table(path, ("gsyn", "Iapp"))
    pts = np.column_stack([tab["gsyn"], tab["Iapp"]])
    if not np.all(np.isfinite(pts)):
        raise MalformedFile(f"{path}: non-finite vertex")
    try:
        return FeasibleRegion.from_boundary(pts)
    except ValueError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# chains


def write_chain_csv(path, chain):
    th = chain.thetas()
    cols = [np.arange(len(chain)), chain.accepted().astype(int), chain.log_posteriors()]
    cols += [th[:, j] for j in range(th.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHAIN_COLUMNS)
        for row in zip(*cols):
            w.writerow([str(int(row[0])), str(int(row[1]))] + [_fmt(x) for x in row[2:]])


def read_chain_csv(path):
    """Chain columns as arrays: ``iter``, ``accepted`` (bool), ``log_post``, ``theta``."""
    tab = _read_table(path, CHAIN_COLUMNS)
    theta = np.column_stack([tab[c] for c in CHAIN_COLUMNS[3:]])
    return {"iter": tab["iter"].astype(int), "accepted": tab["accepted"].astype(bool),
            "log_post": tab["log_post"], "theta": theta}


# ---------------------------------------------------------------------------
# JSON


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with Path(path).open("w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with Path(path).open() as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc


def load_params_json(path, base=None):
    d = read_json(path)
    if not isinstance(d, dict):
        raise MalformedFile(f"{path}: expected a JSON object")
    try:
        return MLParams.from_dict(d, base)
    except (TypeError, ValueError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc


_CONFIG_KEYS = {"initial_theta", "mixing", "post_burnin_mixing", "iterations", "burn_in",
                "seed", "use_rejection_region", "region", "greedy", "jacobian", "likelihood"}
_LIKELIHOOD_KEYS = {"params", "ic", "dt", "degree", "data_spans", "model_spans",
                    "candidate_spans"}


def config_to_dict(config, region_path=None):
    lk = config.likelihood
    return {
        "initial_theta": config.initial_theta.to_dict(),
        "mixing": _listify(config.mixing),
        "post_burnin_mixing": _listify(config.post_burnin_mixing),
        "iterations": int(config.iterations),
        "burn_in": config.burn_in if config.burn_in == "auto" else int(config.burn_in),
        "seed": int(config.seed),
        "use_rejection_region": bool(config.use_rejection_region),
        "region": None if region_path is None else str(region_path),
        "greedy": bool(config.greedy),
        "jacobian": bool(config.jacobian),
        "likelihood": {
            "params": lk.params.to_dict(),
            "ic": [float(x) for x in lk.ic],
            "dt": float(lk.dt),
            "degree": int(lk.degree),
            "data_spans": _listify(lk.data_spans),
            "model_spans": _listify(lk.model_spans),
            "candidate_spans": _listify(lk.candidate_spans),
        },
    }


def _listify(x):
    if x is None:
        return None
    a = np.asarray(x, dtype=float)
    return float(a) if a.ndim == 0 else [float(v) for v in a]


def config_from_dict(d, base=None):
    """Build a McmcConfig; unknown keys raise MalformedFile.

    A ``region`` entry is a path to a region CSV.
    """
    base = base if base is not None else McmcConfig()
    if not isinstance(d, dict):
        raise MalformedFile("run config must be a JSON object")
    unknown = set(d) - _CONFIG_KEYS
    if unknown:
        raise MalformedFile(f"unknown run config keys: {sorted(unknown)}")
    try:
        kw = {}
        if "initial_theta" in d:
            kw["initial_theta"] = Theta(**{**base.initial_theta.to_dict(),
                                           **{k: float(v) for k, v in d["initial_theta"].items()}})
        for key in ("mixing", "post_burnin_mixing"):
            if key in d:
                kw[key] = _tuplify(d[key])
        for key in ("iterations", "seed"):
            if key in d:
                kw[key] = int(d[key])
        if "burn_in" in d:
            kw["burn_in"] = "auto" if d["burn_in"] == "auto" else int(d["burn_in"])
        for key in ("use_rejection_region", "greedy", "jacobian"):
            if key in d:
                kw[key] = bool(d[key])
        if d.get("region") is not None:
            kw["region"] = read_region_csv(d["region"])
        if "likelihood" in d:
            kw["likelihood"] = _likelihood_from_dict(d["likelihood"], base.likelihood)
        # dataclasses.replace would re-run validation on the merged fields
        merged = {f: getattr(base, f) for f in _CONFIG_KEYS}
        merged.update(kw)
        return McmcConfig(**merged)
    except MalformedFile:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise MalformedFile(f"invalid run config: {exc}") from exc


def _tuplify(x):
    if x is None:
        return None
    return float(x) if np.ndim(x) == 0 else tuple(float(v) for v in x)


def _likelihood_from_dict(d, base):
    unknown = set(d) - _LIKELIHOOD_KEYS
    if unknown:
        raise MalformedFile(f"unknown likelihood keys: {sorted(unknown)}")
    kw = {f: getattr(base, f) for f in _LIKELIHOOD_KEYS}
    if "params" in d:
        kw["params"] = MLParams.from_dict(d["params"], base.params)
    if "ic" in d:
        ic = tuple(float(v) for v in d["ic"])
        if len(ic) != 6:
            raise ValueError("ic needs 6 values")
        kw["ic"] = ic
    if "dt" in d:
        kw["dt"] = float(d["dt"])
    if "degree" in d:
        kw["degree"] = int(d["degree"])
    for key in ("data_spans", "model_spans", "candidate_spans"):
        if key in d:
            kw[key] = _tuplify(d[key])
    return LikelihoodConfig(**kw)
