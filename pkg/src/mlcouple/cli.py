"""Command-line front end: ``mlcouple simulate | power | region | estimate | smooth-check``.

Every command writes a JSON manifest next to its outputs. The manifest holds
the argument vector, so ``mlcouple <argv from manifest>`` reproduces the
output files byte for byte.

Exit codes: 0 success, 1 failed check, 2 bad configuration or input file,
3 simulation left the finite range, 4 initial guess outside the region,
5 data-side likelihood cache could not be built.
"""

import argparse
import datetime
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import (AllFailed, InitialOutsideRegion, InsufficientData, MalformedFile,
                         NonFinite, SingularFit, TooShort)
from .features import Theta, channel_features, p0_estimate
from .mcmc import McmcConfig, build_likelihood, combine_summaries, run_chains
from .region import builtin_region
from .sim import (DEFAULT_IC, MLParams, NetworkState, classify_dynamics,
                  simulate_deterministic, simulate_stochastic)
from .smooth import LwprConfig, default_span_grid, gcv_scores, gcv_select, smooth_trace

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NONFINITE, EXIT_OUTSIDE, EXIT_CACHE = 0, 1, 2, 3, 4, 5


class ConfigError(Exception):
    pass


def _floats(text, n=None, what="value"):
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what} needs {n} comma-separated numbers, got {len(vals)}")
    return vals


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _manifest(path, command, argv, config, outputs, started, **extra):
    m = {"command": command, "argv": list(argv), "config": config, "outputs": outputs,
         "started": started, "finished": _now()}
    m.update(extra)
    outputs.append(str(path))
    io.write_json(path, m)


def _r_squared(t, P):
    tc = t - t.mean()
    sxx = float(tc @ tc)
    dev = P - P.mean()
    syy = float(dev @ dev)
    if sxx == 0 or syy == 0:
        return float("nan")
    slope = float(tc @ dev) / sxx
    resid = dev - slope * tc
    return 1.0 - float(resid @ resid) / syy


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args, argv):
    started = _now()
    params = io.load_params_json(args.params) if args.params else MLParams()
    changes = {}
    for flag, name in (("iapp", "I_app"), ("gsyn", "g_syn"), ("delta", "delta")):
        if getattr(args, flag) is not None:
            changes[name] = getattr(args, flag)
    try:
        params = params.replace(**changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ic = NetworkState.from_array(_floats(args.ic, 6, "--ic")) if args.ic else DEFAULT_IC
    if args.t_end <= 0 or args.dt <= 0 or args.record_every < 1:
        raise ConfigError("--t-end and --dt must be positive, --record-every >= 1")
    if params.delta > 0:
        trace = simulate_stochastic(params, ic, args.t_end, args.dt, args.seed,
                                    args.record_every)
    else:
        trace = simulate_deterministic(params, ic, args.t_end, args.dt, args.record_every)
    out = Path(args.out)
    io.write_trace_csv(out, trace)
    try:
        label = classify_dynamics(trace)
        label_d = {"kind": label.kind, "phase_relation": label.phase_relation,
                   "amplitudes": list(label.amplitudes), "period": label.period}
        print(f"label: {label.kind} {label.phase_relation} "
              f"amplitudes={label.amplitudes[0]:.2f},{label.amplitudes[1]:.2f}")
    except TooShort as exc:
        label_d = {"kind": "unclassified", "reason": str(exc)}
        print(f"label: unclassified ({exc})")
    config = {"params": params.to_dict(), "ic": list(ic.to_array()), "t_end": args.t_end,
              "dt": args.dt, "record_every": args.record_every, "seed": args.seed}
    _manifest(_manifest_path(args, out), "simulate", argv, config, [str(out)], started,
              seed=args.seed, label=label_d)
    return EXIT_OK


def _manifest_path(args, out):
    return Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")


# ---------------------------------------------------------------------------
# power


def cmd_power(args, argv):
    started = _now()
    trace = io.read_trace_csv(args.trace)
    t = trace.times
    if args.span is not None and args.gcv:
        raise ConfigError("give either --span or --gcv, not both")
    gcv = {}
    if args.span is not None:
        try:
            LwprConfig(args.span, args.degree)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        spans = (args.span, args.span)
    else:
        grid = (_floats(args.spans, what="--spans") if args.spans
                else default_span_grid(t.size, args.degree, max_span=0.05))
        spans = []
        for name, y in (("v1", trace.v1), ("v2", trace.v2)):
            spans.append(gcv_select(t, y, grid, args.degree))
            gcv[name] = {"spans": list(map(float, grid)),
                         "scores": gcv_scores(t, y, grid, args.degree)}
    prefix = Path(args.out)
    outputs, channels = [], {}
    for k, (name, y) in enumerate((("v1", trace.v1), ("v2", trace.v2))):
        power, mean = channel_features(t, y, spans[k], args.degree, k)
        path = prefix.with_name(f"{prefix.name}_{name}.csv")
        io.write_power_csv(path, power)
        outputs.append(str(path))
        channels[name] = {"span": float(spans[k]), "mean_voltage": mean,
                          "p0": p0_estimate(power) if t.size >= 3 else float("nan"),
                          "r_squared": _r_squared(power.times, power.P),
                          "final_power": float(power.P[-1])}
        print(f"{name}: span={spans[k]:.6g} P(T)={power.P[-1]:.6g} "
              f"R2={channels[name]['r_squared']:.6f}")
    config = {"trace": str(args.trace), "degree": args.degree, "span": args.span,
              "gcv": bool(args.gcv or args.span is None), "spans_grid": args.spans}
    mpath = Path(args.manifest) if args.manifest else prefix.with_name(
        f"{prefix.name}.manifest.json")
    _manifest(mpath, "power", argv, config, outputs, started, spans=list(spans),
              channels=channels, gcv=gcv)
    return EXIT_OK


# ---------------------------------------------------------------------------
# region


def cmd_region(args, argv):
    region = io.read_region_csv(args.region) if args.region else builtin_region()
    print(f"vertices: {region.n_vertices}")
    print(f"triangles: {len(region.triangles)}")
    if args.area or not args.point:
        print(f"area: {region.area:.4f}")
    inside = 0
    for text in args.point or []:
        g, i = _floats(text, 2, "--point")
        ok = region.contains(g, i)
        inside += ok
        print(f"point {g:g},{i:g}: {'inside' if ok else 'outside'}")
    if args.point:
        print(f"inside: {inside} outside: {len(args.point) - inside}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate


def _estimate_config(args):
    base = McmcConfig()
    if args.config:
        base = io.config_from_dict(io.read_json(args.config))
    kw = {}
    init = base.initial_theta.to_dict()
    if args.iapp0 is not None:
        init["I_app"] = args.iapp0
    if args.gsyn0 is not None:
        init["g_syn"] = args.gsyn0
    try:
        kw["initial_theta"] = Theta(**init)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.iterations is not None:
        kw["iterations"] = args.iterations
    if args.burn_in is not None:
        kw["burn_in"] = "auto" if args.burn_in == "auto" else int(args.burn_in)
    if args.no_region:
        kw["use_rejection_region"] = False
    if args.greedy:
        kw["greedy"] = True
    if args.no_jacobian:
        kw["jacobian"] = False
    if args.region:
        kw["region"] = io.read_region_csv(args.region)
    if args.seed is not None:
        kw["seed"] = args.seed
    merged = {k: getattr(base, k) for k in ("initial_theta", "mixing", "post_burnin_mixing",
                                            "iterations", "burn_in", "seed",
                                            "use_rejection_region", "region", "greedy",
                                            "jacobian", "likelihood")}
    merged.update(kw)
    # a burn-in longer than the run (e.g. --iterations 0) leaves only the start
    if merged["burn_in"] != "auto" and merged["iterations"] <= merged["burn_in"]:
        merged["burn_in"] = 0
    try:
        return McmcConfig(**merged)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_estimate(args, argv):
    started = _now()
    config = _estimate_config(args)
    if args.seeds:
        seeds = [int(s) for s in _floats(args.seeds, what="--seeds")]
        if args.chains is not None and args.chains != len(seeds):
            raise ConfigError("--chains disagrees with the number of --seeds")
    else:
        seeds = [config.seed + k for k in range(args.chains or 1)]
    truth = None
    if args.truth:
        ti, tg = _floats(args.truth, 2, "--truth")
        truth = {"I_app": ti, "g_syn": tg}
    trace = io.read_trace_csv(args.data)
    region = config.get_region()
    init = config.initial_theta
    if config.use_rejection_region and not region.contains(init.g_syn, init.I_app):
        raise InitialOutsideRegion(
            f"initial (g_syn, I_app) = ({init.g_syn}, {init.I_app}) lies outside the region")
    try:
        lik = build_likelihood(trace, config)
    except (AllFailed, SingularFit, InsufficientData, NonFinite, ValueError) as exc:
        raise _CacheFailure(str(exc)) from exc
    chains = run_chains(None, config, seeds, lik, jobs=args.jobs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for s, ch in zip(seeds, chains):
        path = out / f"chain_seed{s}.csv"
        io.write_chain_csv(path, ch)
        outputs.append(str(path))
    summary = combine_summaries(chains, truth=truth)
    summary["seeds"] = seeds
    summary["burn_in"] = [c.burn_in for c in chains]
    summary["acceptance_rate"] = [c.acceptance_rate for c in chains]
    spath = out / "summary.json"
    io.write_json(spath, summary)
    outputs.append(str(spath))
    for name in ("I_app", "g_syn"):
        e = summary["overall"][name]
        err = f" error={e['percent_error']:.2f}%" if "percent_error" in e else ""
        print(f"{name}: mean={e['mean']:.4f} sd={e['sd']:.4f}{err}")
    _manifest(out / "manifest.json", "estimate", argv,
              io.config_to_dict(config, args.region), outputs, started, seeds=seeds,
              data=str(args.data), truth=truth,
              spans={"data": list(lik.data.spans), "model": list(lik.model_spans)})
    return EXIT_OK


class _CacheFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# smooth-check


def cmd_smooth_check(args, argv):
    """Quadratic-reproduction self test, or a GCV table for a trace."""
    if args.trace:
        trace = io.read_trace_csv(args.trace)
        grid = (_floats(args.spans, what="--spans") if args.spans
                else default_span_grid(len(trace), args.degree, max_span=0.05))
        for name, y in (("v1", trace.v1), ("v2", trace.v2)):
            scores = gcv_scores(trace.times, y, grid, args.degree)
            best = gcv_select(trace.times, y, grid, args.degree)
            for s, sc in zip(grid, scores):
                mark = " *" if s == best else ""
                print(f"{name} span={s:.6g} gcv={sc:.6g}{mark}")
        return EXIT_OK
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        n = int(rng.integers(30, 200))
        t = np.sort(rng.uniform(-5, 5, n))
        a, b, c = rng.normal(size=3) * [1.0, 3.0, 10.0]
        y = a * t * t + b * t + c
        sm = smooth_trace(t, y, LwprConfig(args.span, 2))
        scale = 1.0 + np.abs(y)
        err = max(np.max(np.abs(sm.y_hat - y) / scale),
                  np.max(np.abs(sm.dy_hat - (2 * a * t + b)) / (1.0 + np.abs(2 * a * t + b))),
                  np.max(np.abs(sm.d2y_hat - 2 * a) / (1.0 + abs(2 * a))))
        worst = max(worst, float(err))
    ok = worst < 1e-9
    print(f"quadratic reproduction: trials={args.trials} max_rel_error={worst:.3e} "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="mlcouple", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate the coupled pair and write a trace CSV")
    s.add_argument("--params", help="JSON file of model constants")
    s.add_argument("--iapp", type=float)
    s.add_argument("--gsyn", type=float)
    s.add_argument("--delta", type=float, help="voltage noise level (>0 selects Euler-Maruyama)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t-end", type=float, default=2000.0, help="ms (default 2000)")
    s.add_argument("--dt", type=float, default=0.05)
    s.add_argument("--record-every", type=int, default=1)
    s.add_argument("--ic", help="v1,v2,w1,w2,s1,s2")
    s.add_argument("--out", default="trace.csv")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("power", help="cumulative power of both channels of a trace")
    s.add_argument("trace")
    s.add_argument("--span", type=float)
    s.add_argument("--gcv", action="store_true", help="select spans by GCV (default)")
    s.add_argument("--spans", help="comma-separated GCV grid")
    s.add_argument("--degree", type=int, default=2)
    s.add_argument("--out", default="power", help="output prefix")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_power)

    s = sub.add_parser("region", help="area and membership queries")
    s.add_argument("--region", help="CSV with columns gsyn,Iapp")
    s.add_argument("--point", action="append", help="gsyn,Iapp (repeatable)")
    s.add_argument("--area", action="store_true")
    s.set_defaults(func=cmd_region)

    s = sub.add_parser("estimate", help="MCMC estimate of I_app and g_syn")
    s.add_argument("data", help="trace CSV")
    s.add_argument("--config", help="run config JSON")
    s.add_argument("--iapp0", type=float)
    s.add_argument("--gsyn0", type=float)
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in")
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", help="comma-separated seeds, one chain each")
    s.add_argument("--chains", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-region", action="store_true")
    s.add_argument("--region", help="CSV with columns gsyn,Iapp")
    s.add_argument("--greedy", action="store_true", help="accept only strict improvements")
    s.add_argument("--no-jacobian", action="store_true")
    s.add_argument("--truth", help="I_app,g_syn used for percent errors")
    s.add_argument("--out-dir", default="estimate_out")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("smooth-check", help="smoother self test or GCV table")
    s.add_argument("--trace")
    s.add_argument("--spans")
    s.add_argument("--span", type=float, default=0.3)
    s.add_argument("--degree", type=int, default=2)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_smooth_check)
    return p


_LIST_FLAGS = ("--ic", "--point", "--truth")


def _join_negative_lists(argv):
    # argparse reads "-3,-20,..." as an option; glue it to its flag
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _LIST_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_lists(argv))
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args, argv)
    except (ConfigError, MalformedFile) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFinite as exc:
        print(f"error: simulation diverged: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except InitialOutsideRegion as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OUTSIDE
    except _CacheFailure as exc:
        print(f"error: could not build the data likelihood cache: {exc}", file=sys.stderr)
        return EXIT_CACHE
    except (AllFailed, SingularFit, InsufficientData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
