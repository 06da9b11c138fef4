"""Command-line front end.

Subcommands: ``predict``, ``simulate``, ``clt-check``, ``stein-check``,
``counterexample``, ``oracle-selftest``, ``bench``.  All randomness flows
from ``--seed``; nothing is ever seeded from the clock, so identical
invocations produce byte-identical CSV files for any ``--threads`` value.
The only environment variable consulted is PRODNORM_THREADS (default worker
count); PRODNORM_KERNELS picks the kernel backend at import time.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__, backend
from .expr import parse_expression
from .harness import (
    AssertionSpec,
    ConfigError,
    ExperimentConfig,
    SizeSummary,
    config_from_mapping,
    format_csv,
    report_csv,
    run_clt,
    run_convergence,
    run_counterexample,
)
from .laws import parse_law
from .predict import FluctuationClass, PredictionRefused, predict
from .stein import (
    WeightedSumSpec,
    flat_weights,
    ramp_weights,
    spike_weights,
    verify_stein,
)

_WEIGHT_SHAPES = {"flat": flat_weights, "ramp": ramp_weights, "spike": spike_weights}


def _add_common(p, sizes=True):
    p.add_argument("--expr", help="factor-chain expression")
    p.add_argument("--config", help="JSON config file mirroring the experiment fields")
    if sizes:
        p.add_argument("--sizes", help="comma-separated strictly increasing sizes")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument(
        "--dim-ratios",
        help="per-symbol size multipliers, e.g. n1=2,n2=3/2 (default 1)",
    )
    p.add_argument(
        "--plot-script",
        help="also write a standalone plotting script consuming the CSV",
    )


def _parse_kv(text):
    out = {}
    for item in text.split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _build_config(args, statistic=None, require_expr=True) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    if args.expr is not None:
        data["expr"] = args.expr
    if getattr(args, "sizes", None):
        data["sizes"] = [int(s) for s in args.sizes.split(",")]
    if args.replicates is not None:
        data["replicates"] = args.replicates
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    if args.dim_ratios:
        data["dim_ratios"] = _parse_kv(args.dim_ratios)
    if statistic is not None and "statistic" not in data:
        data["statistic"] = statistic
    if getattr(args, "statistic", None):
        data["statistic"] = args.statistic
    if getattr(args, "epsilon", None) is not None:
        data["epsilon"] = args.epsilon
    if require_expr and "expr" not in data:
        raise ConfigError("an expression is required (--expr or config file)")
    return config_from_mapping(data)


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot a prodnorm CSV: per-size mean with 95% CI and the predicted limit."""
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {default_csv!r}
ns, means, cis, preds = [], [], [], []
with open(path) as fh:
    for line in fh:
        if line.startswith("#") or line.startswith("n,") or not line.strip():
            continue
        parts = line.rstrip("\\n").split(",")
        ns.append(int(parts[0]))
        means.append(float(parts[3]))
        cis.append(float(parts[5]))
        preds.append(float(parts[6]) if parts[6] else None)
fig, ax = plt.subplots(figsize=(6, 4))
ax.errorbar(ns, means, yerr=cis, fmt="o-", capsize=3, label="mean with 95% CI")
known = [(n, p) for n, p in zip(ns, preds) if p is not None]
if known:
    ax.plot([n for n, _ in known], [p for _, p in known], "k--", label="predicted limit")
ax.set_xlabel("size n")
ax.set_ylabel("statistic")
if len(ns) > 1 and min(ns) > 0:
    ax.set_xscale("log")
ax.legend()
fig.tight_layout()
fig.savefig(path + ".png", dpi=150)
print("wrote", path + ".png")
'''


def _write_plot_script(path: str, csv_path: str | None):
    with open(path, "w") as fh:
        fh.write(_PLOT_TEMPLATE.format(default_csv=csv_path or "report.csv"))


def _fail_lines(failures) -> int:
    for line in failures:
        print(f"ASSERTION FAILED: {line}", file=sys.stderr)
    return 1 if failures else 0


# -- subcommands -------------------------------------------------------------------


def cmd_predict(args) -> int:
    try:
        e = parse_expression(args.expr)
        result = predict(e)
    except PredictionRefused as refusal:
        print(f"prediction refused: {refusal}", file=sys.stderr)
        return 2
    pred = result.prediction
    print(f"expression: {args.expr}")
    print(f"normalization: {pred.normalization_text()}")
    print(f"limit: {pred.limit_text()}")
    print(
        "fluctuation class: "
        + (
            "deterministic limit"
            if pred.fluctuation is FluctuationClass.DETERMINISTIC_LIMIT
            else "Gaussian limit"
        )
    )
    print("base cases: " + ", ".join(tag.value for _, tag in pred.base_cases))
    if pred.moment_checks:
        print("moment assumptions:")
        for check in pred.moment_checks:
            sup = "inf" if check.available_sup == float("inf") else f"{check.available_sup:g}"
            print(
                f"  base {check.base_index + 1} ({check.base_case.value}) "
                f"factor {check.factor_position}: {check.law_text} needs order "
                f"{check.required_order:g}, finite below {sup}: "
                + ("ok" if check.satisfied else "VIOLATED")
            )
    for caveat in result.caveats:
        print(f"caveat: {caveat}")
    if args.dims:
        dims = {k: int(v) for k, v in _parse_kv(args.dims).items()}
        print(f"normalization at {args.dims}: {pred.normalization(dims)!r}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    if args.assert_tol is not None:
        cfg = config_from_mapping(
            {
                **cfg.to_jsonable(),
                "assertions": [
                    *(cfg.to_jsonable().get("assertions", [])),
                    {"kind": "mean_near_predicted", "tol": args.assert_tol},
                ],
            }
        )
    report = run_convergence(cfg, threads=args.threads)
    text = report_csv(report, command="simulate")
    _emit(text, cfg.out)
    if args.plot_script:
        _write_plot_script(args.plot_script, cfg.out)
    return _fail_lines(report.failures())


def cmd_clt(args) -> int:
    cfg = _build_config(args, statistic="normalized_sum")
    results = run_clt(cfg, threads=args.threads)
    rows = []
    extra = []
    for res in results:
        samples = res.samples
        import math

        from scipy.stats import t as student_t

        std = float(samples.std(ddof=1))
        rows.append(
            SizeSummary(
                n=res.n,
                dims=res.dims,
                replicates=samples.size,
                mean=float(samples.mean()),
                std=std,
                ci95=float(student_t.ppf(0.975, samples.size - 1))
                * std
                / math.sqrt(samples.size),
                predicted=0.0,
                seed=cfg.seed,
            )
        )
        extra.append(f"clt n={res.n} w1={res.w1!r} ks={res.ks!r}")
    text = format_csv("clt-check", cfg.to_jsonable(), cfg.seed, rows, extra)
    _emit(text, cfg.out)
    if args.plot_script:
        _write_plot_script(args.plot_script, cfg.out)
    for res in results:
        print(f"n={res.n}: W1={res.w1:.6g} KS={res.ks:.6g}")
    failures = []
    if args.max_w1 is not None:
        failures += [
            f"W1 at n={r.n} is {r.w1:.6g} > {args.max_w1}" for r in results if r.w1 > args.max_w1
        ]
    if args.max_ks is not None:
        failures += [
            f"KS at n={r.n} is {r.ks:.6g} > {args.max_ks}" for r in results if r.ks > args.max_ks
        ]
    return _fail_lines(failures)


def cmd_stein(args) -> int:
    law = parse_law(args.law)
    alphas = [float(a) for a in args.alpha.split(",")]
    shapes = args.weights.split(",")
    ns = [int(n) for n in args.n.split(",")]
    rows = []
    failures = []
    for n in ns:
        for shape in shapes:
            if shape not in _WEIGHT_SHAPES:
                raise ConfigError(f"unknown weight shape {shape!r}")
            for alpha in alphas:
                spec = WeightedSumSpec(_WEIGHT_SHAPES[shape](n), law, alpha)
                check = verify_stein(spec, args.replicates, args.seed)
                rows.append(
                    SizeSummary(
                        n=n,
                        dims=(
                            ("alpha", alpha),
                            ("law", args.law),
                            ("weights", shape),
                        ),
                        replicates=args.replicates,
                        mean=check.w1,
                        std=check.stderr,
                        ci95=3.0 * check.stderr,
                        predicted=check.bound,
                        seed=args.seed,
                    )
                )
                if not check.passed:
                    failures.append(
                        f"stein bound violated at n={n} alpha={alpha} weights={shape}: "
                        f"W1 {check.w1:.6g} > bound {check.bound:.6g} + 3se"
                    )
    text = format_csv(
        "stein-check",
        {
            "law": args.law,
            "alpha": alphas,
            "weights": shapes,
            "n": ns,
            "replicates": args.replicates,
            "seed": args.seed,
        },
        args.seed,
        rows,
    )
    _emit(text, args.out)
    if args.plot_script:
        _write_plot_script(args.plot_script, args.out)
    return _fail_lines(failures)


def cmd_counterexample(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    series = {}
    for name, heavy in (("heavy", True), ("control", False)):
        estimates = run_counterexample(
            args.epsilon, sizes, args.replicates, args.seed, heavy=heavy, threads=args.threads
        )
        series[name] = estimates
        for n, estimate in estimates:
            rows.append(
                SizeSummary(
                    n=n,
                    dims=(("epsilon", args.epsilon), ("series", name)),
                    replicates=args.replicates,
                    mean=estimate,
                    std=0.0,
                    ci95=0.0,
                    predicted=None,
                    seed=args.seed,
                )
            )
    text = format_csv(
        "counterexample",
        {
            "epsilon": args.epsilon,
            "sizes": sizes,
            "replicates": args.replicates,
            "seed": args.seed,
        },
        args.seed,
        rows,
    )
    _emit(text, args.out)
    if args.plot_script:
        _write_plot_script(args.plot_script, args.out)
    failures = []
    if args.assert_decreasing:
        heavy = [est for _, est in series["heavy"]]
        if not all(b < a for a, b in zip(heavy, heavy[1:])):
            failures.append(f"heavy-tail estimates not strictly decreasing: {heavy}")
    if args.control_floor is not None:
        low = [
            f"control estimate {est} at n={n} below floor {args.control_floor}"
            for n, est in series["control"]
            if est < args.control_floor
        ]
        failures += low
    return _fail_lines(failures)


def cmd_selftest(args) -> int:
    from . import selftest

    results = selftest.run_all(seed=args.seed)
    ok = True
    for name, passed, detail in results:
        print(f"selftest {name}: {'PASS' if passed else 'FAIL'} ({detail})")
        ok = ok and passed
    return 0 if ok else 1


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    reps = args.reps
    rng = np.random.default_rng(0)
    names = backend.available_backends()
    print(f"kernel benchmark, {reps} repetitions each (best time shown)")
    print(f"{'op':<12}{'size':<12}" + "".join(f"{name:>14}" for name in names))
    for n in sizes:
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        times = {}
        for name in names:
            previous = backend.use_backend(name)
            try:
                best = min(
                    _timed(lambda: backend.matmul(a, b)) for _ in range(reps)
                )
            finally:
                backend.use_backend(previous)
            times[name] = best
        print(
            f"{'matmul':<12}{f'{n}x{n}':<12}"
            + "".join(f"{times[name]:>13.4f}s" for name in names)
        )
        times = {}
        for name in names:
            previous = backend.use_backend(name)
            try:
                best = min(
                    _timed(lambda: backend.inf_norm(a)) for _ in range(reps)
                )
            finally:
                backend.use_backend(previous)
            times[name] = best
        print(
            f"{'inf_norm':<12}{f'{n}x{n}':<12}"
            + "".join(f"{times[name]:>13.4f}s" for name in names)
        )
    return 0


def _timed(fn) -> float:
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prodnorm",
        description="predict and verify operator norms of random matrix chains",
    )
    parser.add_argument("--version", action="version", version=f"prodnorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="print the asymptotic prediction for an expression")
    p.add_argument("--expr", required=True)
    p.add_argument("--dims", help="evaluate the normalization at n0=...,n1=...")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="Monte Carlo convergence run with CSV output")
    _add_common(p)
    p.add_argument(
        "--statistic",
        choices=["normalized_norm", "normalized_sum", "max_row_stat", "counterexample_indicator"],
    )
    p.add_argument("--epsilon", type=float, help="counterexample threshold exponent offset")
    p.add_argument(
        "--assert-tol",
        type=float,
        help="require |mean - predicted| <= tol at the largest size",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("clt-check", help="normalized entry-sum distribution versus Gaussian")
    _add_common(p)
    p.add_argument("--max-w1", type=float, help="fail when empirical W1 exceeds this")
    p.add_argument("--max-ks", type=float, help="fail when the KS statistic exceeds this")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("stein-check", help="verify the normal-approximation bound")
    p.add_argument("--law", required=True, help="entry law (centered, unit variance)")
    p.add_argument("--alpha", default="2,2.5,3", help="comma list in [2,3]")
    p.add_argument("--weights", default="flat,ramp,spike", help="comma list of shapes")
    p.add_argument("--n", default="100", help="comma list of summand counts")
    p.add_argument("--replicates", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--plot-script")
    p.set_defaults(func=cmd_stein)

    p = sub.add_parser(
        "counterexample",
        help="probability that a heavy-tail product norm stays below n^(3/2+eps)",
    )
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--sizes", default="200,400,800")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--plot-script")
    p.add_argument(
        "--assert-decreasing",
        action="store_true",
        help="fail unless heavy-tail estimates strictly decrease",
    )
    p.add_argument(
        "--control-floor",
        type=float,
        help="fail when a Gaussian-control estimate drops below this",
    )
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("oracle-selftest", help="run the built-in cross-validation checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("bench", help="compare the kernel backends")
    p.add_argument("--sizes", default="128,256,512")
    p.add_argument("--reps", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
