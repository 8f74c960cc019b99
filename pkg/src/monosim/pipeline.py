"""End-to-end orchestration: initialization, the angle-schedule grid,
spectral runs, candidate pooling and pruning, then isotonic testing."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, Hypothesis, RegularityParams, squared_loss, truncate_labels
from .gauss import angle
from .initializer import initialize
from .isotonic import IsoInstance, default_lipschitz_bound, solve_iso, test_and_select
from .spectral import ScheduleConfig, build_band_partition, spectral_optimization
from .synth import GroundTruth, estimate_opt
from .util import child_rng

DESK_THETA_CAP = 6
DESK_K = 2
DESK_T_CAP = 40
DESK_SPECTRAL_CAP = 40_000
DESK_FIT_CAP = 60_000
DESK_MAX_CANDIDATES = 96
PROXY_SUBSAMPLE = 2048


@dataclass
class PipelineConfig:
    params: RegularityParams
    n_samples: int | None = None
    seed: int = 0
    theta_grid: np.ndarray | None = None
    theta_grid_cap: int = DESK_THETA_CAP
    schedule: ScheduleConfig | None = None
    beta: float | None = None
    fresh_split: bool = True
    paper_faithful: bool = False
    collect_trace: bool = False
    max_candidates: int = DESK_MAX_CANDIDATES
    spectral_sample_cap: int | None = DESK_SPECTRAL_CAP
    fit_sample_cap: int | None = DESK_FIT_CAP

    def resolved_schedule(self) -> ScheduleConfig:
        if self.schedule is not None:
            return self.schedule
        if self.paper_faithful:
            return ScheduleConfig()
        base = ScheduleConfig()
        T, _ = base.resolve(self.params)
        return ScheduleConfig(T=min(T, DESK_T_CAP), K=DESK_K)

    def to_dict(self) -> dict:
        sched = self.resolved_schedule()
        T, K = sched.resolve(self.params)
        return {
            "B": self.params.B,
            "L": self.params.L,
            "eps": self.params.eps,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "theta_grid_cap": self.theta_grid_cap,
            "decay": sched.decay,
            "step_fraction": sched.step_fraction,
            "T": T,
            "K": K,
            "beta": self.beta,
            "fresh_split": self.fresh_split,
            "paper_faithful": self.paper_faithful,
            "max_candidates": self.max_candidates,
            "spectral_sample_cap": self.spectral_sample_cap,
        }


def build_theta_grid(
    params: RegularityParams, cap: int = DESK_THETA_CAP, paper_faithful: bool = False
) -> np.ndarray:
    """Angle schedule starts {k * eps/L}; the full arithmetic grid when it
    fits the cap, otherwise a geometric subsample of it (denser near small
    angles, where the schedule actually needs resolution)."""
    step = params.eps / params.L
    n_full = max(1, math.ceil((math.pi / 2) / step))
    if paper_faithful or n_full <= cap:
        ks = np.arange(1, n_full + 1)
    else:
        ks = np.unique(np.round(np.geomspace(1, n_full, cap)).astype(int))
    return np.minimum(ks * step, math.pi / 2)


@dataclass
class CandidatePool:
    """De-duplicated union of initializer and spectral candidates; the
    constant hypothesis is always entered alongside at testing time."""

    vectors: list[np.ndarray] = field(default_factory=list)
    _keys: set = field(default_factory=set)

    def add(self, w: np.ndarray) -> bool:
        key = np.round(np.asarray(w, dtype=float) / 5e-10).astype(np.int64).tobytes()
        if key in self._keys:
            return False
        self._keys.add(key)
        self.vectors.append(np.asarray(w, dtype=float))
        return True

    def __len__(self):
        return len(self.vectors)


def _proxy_prune(
    pool: CandidatePool,
    protected: int,
    fit_data: Dataset,
    beta: float,
    budget: int,
    seed: int,
) -> list[np.ndarray]:
    """Rank candidates by a subsampled isotonic fit loss and keep the best
    ``budget`` of them; the first ``protected`` pool entries always stay."""
    vectors = pool.vectors
    if len(vectors) <= budget:
        return vectors
    rng = child_rng(seed, "proxy")
    take = min(PROXY_SUBSAMPLE, fit_data.n)
    idx = rng.choice(fit_data.n, size=take, replace=False)
    Xs, ys = fit_data.X[idx], fit_data.y[idx]
    losses = np.empty(len(vectors))
    for i, w in enumerate(vectors):
        z = Xs @ w
        order = np.argsort(z, kind="stable")
        sol = solve_iso(IsoInstance(z=z[order], y=ys[order], beta=beta))
        losses[i] = sol.objective
    keep = set(range(min(protected, len(vectors))))
    for i in np.argsort(losses, kind="stable"):
        if len(keep) >= budget:
            break
        keep.add(int(i))
    return [vectors[i] for i in sorted(keep)]


def _split_dataset(data: Dataset, seed: int, fresh: bool) -> tuple[Dataset, ...]:
    if not fresh:
        return data, data, data, data
    perm = child_rng(seed, "split").permutation(data.n)
    quarters = np.array_split(perm, 4)
    if min(len(q) for q in quarters) < data.dim + 1:
        raise ValueError("dataset too small for a four-way fresh split; N >= 4(d+1) needed")
    return tuple(data.subset(q) for q in quarters)


THEORY_N = "N = Theta(d^2 B^12 L^8 / eps^10 * log(d B L / eps))"


def run_pipeline(
    data: Dataset, config: PipelineConfig, truth: GroundTruth | None = None
) -> tuple[Hypothesis, dict]:
    """Initialization -> spectral runs over every (start, angle) pair ->
    pooled candidates -> isotonic testing.  Returns the selected hypothesis
    and a JSON-serializable report."""
    params = config.params
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    warnings: list[str] = []

    if config.n_samples is not None and config.n_samples < data.n:
        idx = child_rng(config.seed, "budget").permutation(data.n)[: config.n_samples]
        data = data.subset(idx)
    if data.n < data.dim + 1:
        raise ValueError("need at least d + 1 samples")

    y_raw = data.y
    data = truncate_labels(data, params.B)
    fresh = config.fresh_split and not config.paper_faithful
    init_data, spectral_data, fit_data, holdout_data = _split_dataset(
        data, config.seed, fresh
    )

    tic = time.perf_counter()
    init_result = initialize(init_data, params, seed=config.seed)
    timings["initialize"] = time.perf_counter() - tic
    warnings.extend(init_result.warnings)

    partition = build_band_partition(params)
    if data.n < 100 * data.dim * partition.n_bands:
        warnings.append(
            f"N={data.n} is below the desk heuristic 100*d*I={100 * data.dim * partition.n_bands}; "
            f"the theoretical requirement is {THEORY_N}"
        )

    theta_grid = (
        np.asarray(config.theta_grid, dtype=float)
        if config.theta_grid is not None
        else build_theta_grid(params, config.theta_grid_cap, config.paper_faithful)
    )
    if np.any(theta_grid <= 0) or np.any(theta_grid > math.pi / 2 + 1e-12):
        raise ValueError("theta grid values must lie in (0, pi/2]")

    sched = config.resolved_schedule()
    spec_data = spectral_data
    cap = None if config.paper_faithful else config.spectral_sample_cap
    if cap is not None and spec_data.n > cap:
        idx = child_rng(config.seed, "spectral-cap").permutation(spec_data.n)[:cap]
        spec_data = spec_data.subset(idx)
    fit_cap = None if config.paper_faithful else config.fit_sample_cap
    if fit_cap is not None and fit_data.n > fit_cap:
        idx = child_rng(config.seed, "fit-cap").permutation(fit_data.n)[:fit_cap]
        fit_data = fit_data.subset(idx)

    pool = CandidatePool()
    for w0 in init_result.candidates:
        pool.add(w0)
    protected = len(pool)

    tic = time.perf_counter()
    traces = []
    for i, w0 in enumerate(init_result.candidates):
        for j, theta_bar in enumerate(theta_grid):
            res = spectral_optimization(
                spec_data,
                float(theta_bar),
                w0,
                params,
                schedule=sched,
                seed=int(child_rng(config.seed, "pair", i, j).integers(2**62)),
                partition=partition,
            )
            for w in res.vectors:
                pool.add(w)
            if config.collect_trace:
                traces.append({"start": i, "theta_bar": float(theta_bar), "trace": res.trace})
    timings["spectral"] = time.perf_counter() - tic

    pool_raw = len(pool)
    beta = config.beta if config.beta is not None else default_lipschitz_bound(params)
    tic = time.perf_counter()
    candidates = _proxy_prune(
        pool, protected, fit_data, beta, config.max_candidates, config.seed
    )
    timings["prune"] = time.perf_counter() - tic

    tic = time.perf_counter()
    hyp, records = test_and_select(
        candidates,
        fit_data,
        holdout_data,
        params,
        beta=config.beta,
        include_constant=True,
        w_star=None if truth is None else truth.w_star,
    )
    timings["select"] = time.perf_counter() - tic
    timings["total"] = time.perf_counter() - t0

    selected = next(r for r in records if r.get("selected"))
    pre_trunc_loss = float(np.mean((hyp.predict(data.X) - y_raw) ** 2))
    report = {
        "config": config.to_dict(),
        "n_used": data.n,
        "dim": data.dim,
        "split_sizes": [init_data.n, spec_data.n, fit_data.n, holdout_data.n],
        "n_bands": partition.n_bands,
        "theta_grid": theta_grid.tolist(),
        "initializer_candidates": len(init_result.candidates),
        "pool_size_raw": pool_raw,
        "pool_size_tested": len(candidates),
        "candidates": records,
        "selected": selected,
        "holdout_loss": selected["holdout_loss"],
        "pre_truncation_loss": pre_trunc_loss,
        "timings": timings,
        "warnings": warnings,
    }
    if truth is not None:
        report["opt_estimate"] = estimate_opt(truth, data)
        report["angle_to_truth"] = angle(hyp.w, truth.w_star)
    if config.collect_trace:
        report["traces"] = [
            {
                "start": t["start"],
                "theta_bar": t["theta_bar"],
                "records": t["trace"].records,
            }
            for t in traces
        ]
    return hyp, report


def run_with_repeats(
    data: Dataset, config: PipelineConfig, repeats: int, truth: GroundTruth | None = None
) -> tuple[Hypothesis, dict]:
    """Confidence amplification: rerun with fresh derived seeds and keep the
    best holdout loss."""
    best = None
    for r in range(max(1, repeats)):
        cfg = PipelineConfig(**{**config.__dict__, "seed": config.seed + 7919 * r})
        hyp, report = run_pipeline(data, cfg, truth=truth)
        report["repeat"] = r
        if best is None or report["holdout_loss"] < best[1]["holdout_loss"]:
            best = (hyp, report)
    return best
