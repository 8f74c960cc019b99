"""Command-line interface: generate / learn / evaluate / bench / probe-invariants."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import _kernels as kernels
from .core import (
    Dataset,
    GeneralReLU,
    BiasedThreshold,
    Hypothesis,
    PiecewiseLinearMonotone,
    RegularityParams,
    activation_from_dict,
    activation_to_dict,
    squared_loss,
)
from .pipeline import PipelineConfig, run_pipeline, run_with_repeats
from .spectral import ScheduleConfig, build_band_partition
from .synth import (
    AdversarialBand,
    GroundTruth,
    ObliviousBounded,
    SignFlipTail,
    generate,
)
from .util import child_rng, normalize


def _seed_default(value):
    if value is not None:
        return int(value)
    return int(os.environ.get("SIM_SEED", "0"))


def _load_config_defaults(path) -> dict:
    """Key-value text config: one `key = value` per line, # comments."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _emit(obj, fh=None):
    (fh or sys.stdout).write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------


def _cmd_generate(args) -> int:
    seed = _seed_default(args.seed)
    rng = child_rng(seed, "truth-direction")
    w_star = normalize(rng.standard_normal(args.d))
    if args.model == "relu":
        sigma = GeneralReLU(bias=args.bias)
    elif args.model == "threshold":
        sigma = BiasedThreshold(bias=args.bias)
    elif args.model == "identity":
        sigma = PiecewiseLinearMonotone([-args.B, args.B], [-args.B, args.B])
    elif args.model == "pwl":
        spec = json.loads(args.pwl)
        sigma = PiecewiseLinearMonotone(np.asarray(spec["knots"]), np.asarray(spec["values"]))
    else:
        raise ValueError(f"unknown model {args.model}")
    params = RegularityParams(B=args.B, L=args.L, eps=args.eps)
    if args.noise == "none":
        noise = None
    elif args.noise == "oblivious":
        noise = ObliviousBounded(rate=args.rate, magnitude=args.magnitude)
    elif args.noise == "band":
        noise = AdversarialBand(rate=args.rate, center=args.center)
    elif args.noise == "signflip":
        noise = SignFlipTail(rate=args.rate)
    else:
        raise ValueError(f"unknown noise model {args.noise}")
    truth = GroundTruth(w_star=w_star, sigma=sigma, params=params, noise=noise)
    data = generate(truth, args.n, args.d, seed=seed)
    if args.binary:
        data.save_binary(args.out)
    else:
        data.save_text(args.out)
    if noise is None:
        noise_spec = None
    elif isinstance(noise, ObliviousBounded):
        noise_spec = {"kind": "oblivious", "rate": noise.rate, "magnitude": noise.magnitude}
    elif isinstance(noise, AdversarialBand):
        noise_spec = {"kind": "band", "rate": noise.rate, "center": noise.center}
    else:
        noise_spec = {"kind": "signflip", "rate": noise.rate}
    truth_path = args.truth or (str(args.out) + ".truth.json")
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "w_star": w_star.tolist(),
                "activation": activation_to_dict(sigma),
                "noise": noise_spec,
                "B": args.B,
                "L": args.L,
                "eps": args.eps,
                "n": args.n,
                "d": args.d,
                "seed": seed,
            },
            fh,
        )
    _emit({"written": str(args.out), "truth": truth_path, "n": args.n, "d": args.d})
    return 0


def _truth_from_sidecar(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    noise = None
    if spec.get("noise"):
        kind = spec["noise"]["kind"]
        if kind == "oblivious":
            noise = ObliviousBounded(spec["noise"]["rate"], spec["noise"]["magnitude"])
        elif kind == "band":
            noise = AdversarialBand(spec["noise"]["rate"], spec["noise"].get("center", 0.0))
        elif kind == "signflip":
            noise = SignFlipTail(spec["noise"]["rate"])
    return GroundTruth(
        w_star=np.asarray(spec["w_star"], dtype=float),
        sigma=activation_from_dict(spec["activation"]),
        params=RegularityParams(spec["B"], spec["L"], spec["eps"]),
        noise=noise,
    )


def _cmd_learn(args) -> int:
    seed = _seed_default(args.seed)
    data = Dataset.load(args.data)
    params = RegularityParams(B=args.B, L=args.L, eps=args.eps)
    schedule = None
    if args.T is not None or args.K is not None or args.decay is not None or args.step_fraction is not None:
        schedule = ScheduleConfig(
            decay=args.decay if args.decay is not None else 1.0 / 128.0,
            step_fraction=args.step_fraction if args.step_fraction is not None else 1.0 / 8.0,
            T=args.T,
            K=args.K,
        )
    config = PipelineConfig(
        params=params,
        n_samples=args.n,
        seed=seed,
        theta_grid_cap=args.theta_cap,
        schedule=schedule,
        beta=args.beta,
        fresh_split=args.fresh_split,
        paper_faithful=args.paper_faithful,
        collect_trace=args.trace is not None,
        max_candidates=args.max_candidates,
        spectral_sample_cap=args.spectral_cap,
        fit_sample_cap=args.fit_cap,
    )
    truth = _truth_from_sidecar(args.truth) if args.truth else None
    if args.repeats > 1:
        hyp, report = run_with_repeats(data, config, args.repeats, truth=truth)
    else:
        hyp, report = run_pipeline(data, config, truth=truth)
    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for tr in report.pop("traces", []):
                for rec in tr["records"]:
                    _emit({"start": tr["start"], "theta_bar": tr["theta_bar"], **rec}, fh)
    elif "traces" in report:
        report.pop("traces")
    hyp.save(args.out, B=params.B)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            _emit(report, fh)
    summary = {
        "out": str(args.out),
        "holdout_loss": report["holdout_loss"],
        "pool_size_tested": report["pool_size_tested"],
        "seconds": report["timings"]["total"],
    }
    if "angle_to_truth" in report:
        summary["angle_to_truth"] = report["angle_to_truth"]
    _emit(summary)
    return 0


def _cmd_evaluate(args) -> int:
    data = Dataset.load(args.data)
    hyp = Hypothesis.load(args.hyp)
    _emit({"loss": squared_loss(data, hyp), "n": data.n, "dim": data.dim})
    return 0


def _cmd_bench(args) -> int:
    from .core import Dataset as _DS

    rng = child_rng(_seed_default(args.seed), "bench")
    backends = ["numba", "numpy"] if args.kernels == "both" else [args.kernels]
    previous = kernels.BACKEND
    for d in args.d:
        for n in args.n:
            X = rng.standard_normal((n, d))
            w = normalize(rng.standard_normal(d))
            y = X @ w + 0.1 * rng.standard_normal(n)
            z = X @ w
            params = RegularityParams(B=3.0, L=1.0, eps=args.eps)
            partition = build_band_partition(params)
            jdx = partition.band_index(z)
            order = np.argsort(z, kind="stable")
            zs, ys = z[order], y[order]
            cs = np.minimum(np.diff(zs) * 10.0, np.ptp(ys) + 1.0)
            for backend in backends:
                kernels.set_backend(backend)
                # warm the jit before timing
                kernels.band_accumulate(X[:128], y[:128], z[:128], jdx[:128], partition.n_bands)
                kernels.iso_solve(ys[:128], cs[:127])
                for op, fn in (
                    (
                        "band_statistics",
                        lambda: kernels.band_accumulate(X, y, z, jdx, partition.n_bands),
                    ),
                    ("iso_solve", lambda: kernels.iso_solve(ys, cs)),
                    (
                        "halfspace_refine",
                        lambda: kernels.halfspace_refine(
                            X, (y > 0).astype(float), w.copy(), 0.0, 10, 0.1, 0.1, 8192
                        ),
                    ),
                ):
                    t0 = time.perf_counter()
                    for _ in range(args.iters):
                        fn()
                    dt = (time.perf_counter() - t0) / args.iters
                    _emit(
                        {
                            "op": op,
                            "kernel": backend,
                            "d": d,
                            "n": n,
                            "bands": partition.n_bands,
                            "seconds_per_call": dt,
                        }
                    )
    kernels.set_backend(previous)
    return 0


def _cmd_probe_invariants(args) -> int:
    from .probes import run_semigroup_suite, run_spectral_suite

    records = []
    if args.suite in ("semigroup", "all"):
        records.extend(run_semigroup_suite())
    if args.suite in ("spectral", "all"):
        records.extend(run_spectral_suite(mc_budget=args.mc_budget, seed=_seed_default(args.seed)))
    ok = True
    for rec in records:
        _emit(rec)
        ok = ok and rec["pass"]
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monosim",
        description="Robust learning of monotone single-index models under Gaussian inputs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset plus ground-truth sidecar")
    g.add_argument("--model", choices=["relu", "threshold", "identity", "pwl"], default="relu")
    g.add_argument("--bias", type=float, default=0.0)
    g.add_argument("--pwl", type=str, default=None, help='JSON {"knots": [...], "values": [...]}')
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--B", type=float, default=1.0)
    g.add_argument("--L", type=float, default=1.0)
    g.add_argument("--eps", type=float, default=0.1)
    g.add_argument("--noise", choices=["none", "oblivious", "band", "signflip"], default="none")
    g.add_argument("--rate", type=float, default=0.0)
    g.add_argument("--magnitude", type=float, default=0.0)
    g.add_argument("--center", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--binary", action="store_true")
    g.add_argument("--truth", default=None)
    g.set_defaults(func=_cmd_generate)

    l = sub.add_parser("learn", help="run the full pipeline on a dataset file")
    l.add_argument("--data", required=True)
    l.add_argument("--eps", type=float, required=True)
    l.add_argument("--B", type=float, required=True)
    l.add_argument("--L", type=float, required=True)
    l.add_argument("--seed", type=int, default=None)
    l.add_argument("--n", type=int, default=None, help="sample budget (default: whole file)")
    l.add_argument("--out", required=True, help="hypothesis JSON path")
    l.add_argument("--report", default=None, help="report JSONL path")
    l.add_argument("--truth", default=None, help="ground-truth sidecar for angle reporting")
    l.add_argument("--theta-cap", type=int, default=6)
    l.add_argument("--K", type=int, default=None)
    l.add_argument("--T", type=int, default=None)
    l.add_argument("--decay", type=float, default=None)
    l.add_argument("--step-fraction", type=float, default=None)
    l.add_argument("--beta", type=float, default=None)
    l.add_argument("--max-candidates", type=int, default=96)
    l.add_argument("--spectral-cap", type=int, default=40_000)
    l.add_argument("--fit-cap", type=int, default=60_000)
    l.add_argument("--fresh-split", action=argparse.BooleanOptionalAction, default=True)
    l.add_argument("--paper-faithful", action="store_true")
    l.add_argument("--trace", default=None, help="spectral trace JSONL path")
    l.add_argument("--repeats", type=int, default=1)
    l.set_defaults(func=_cmd_learn)

    e = sub.add_parser("evaluate", help="loss of a stored hypothesis on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--hyp", required=True)
    e.set_defaults(func=_cmd_evaluate)

    b = sub.add_parser("bench", help="kernel timing sweep, numba vs numpy")
    b.add_argument("--d", type=int, nargs="+", default=[10])
    b.add_argument("--n", type=int, nargs="+", default=[100_000])
    b.add_argument("--eps", type=float, default=0.1)
    b.add_argument("--iters", type=int, default=5)
    b.add_argument("--kernels", choices=["both", "numba", "numpy"], default="both")
    b.add_argument("--seed", type=int, default=None)
    b.set_defaults(func=_cmd_bench)

    p = sub.add_parser("probe-invariants", help="run the lemma/semigroup probe suites")
    p.add_argument("--suite", choices=["semigroup", "spectral", "all"], default="all")
    p.add_argument("--mc-budget", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_probe_invariants)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    for sp in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        sp.add_argument("--config", default=None, help="key = value defaults file")
    if known.config:
        defaults = _load_config_defaults(known.config)
        for sp in parser._subparsers._group_actions[0].choices.values():
            usable = {}
            for a in sp._actions:  # noqa: SLF001
                if a.dest in defaults:
                    usable[a.dest] = _coerce(defaults[a.dest], a)
                    a.required = False  # the config file satisfies it
            sp.set_defaults(**usable)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


def _coerce(raw: str, action) -> object:
    if action.type is int:
        return int(raw)
    if action.type is float:
        return float(raw)
    if isinstance(action, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw


if __name__ == "__main__":
    raise SystemExit(main())
