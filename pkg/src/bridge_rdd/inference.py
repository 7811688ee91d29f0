"""Percentile bootstrap confidence intervals.

Each replicate resamples the main and auxiliary samples independently with
replacement (keeping both sizes), refits both bridges and recomputes every
estimator. Replicate ``b`` draws its indices from ``split_seed(seed, b)``
and refits from a fresh initialization seeded by
``split_seed(cfg.seed, seed, b)``, never from the fitted weights. With a fixed
epoch budget the fitted bridges depend on the initialization, so drawing it
anew per replicate lets the intervals reflect that source of variability as
well as the sampling noise. Interval endpoints are empirical quantiles with
linear interpolation between order statistics: for sorted draws
``d[0..B-1]`` the ``q``-quantile is ``d[k] + (h - k) * (d[k+1] - d[k])`` with
``h = q * (B - 1)`` and ``k = floor(h)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import AuxSample, MainSample
from .errors import NumericalError, ValidationError
from .estimators import ESTIMATORS, PointEstimates, estimate_all
from .minimax import FitConfig, fit_bridges, split_seed
from .parallel import ordered_map

TARGETS = ("tau0", "tau1", "ate")


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    estimator: str
    target: str
    point: float
    lower: float
    upper: float
    level: float
    B: int
    draws: np.ndarray | None = field(default=None, repr=False)

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def percentile_interval(draws, level: float) -> tuple[float, float]:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(draws, dtype=float), [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


def fit_and_estimate(main: MainSample, aux: AuxSample, cfg: FitConfig) -> PointEstimates:
    fb = fit_bridges(main, aux, cfg)
    return estimate_all(fb.h_hat, fb.f_hat, main, aux)


def _replicate(args) -> np.ndarray:
    main, aux, cfg, seed, b = args
    rng = np.random.default_rng(split_seed(seed, b))
    i = rng.integers(0, len(main), len(main))
    j = rng.integers(0, len(aux), len(aux))
    try:
        est = fit_and_estimate(main.take(i), aux.take(j), cfg.with_seed(split_seed(cfg.seed, seed, b)))
    except (ValidationError, NumericalError) as exc:
        raise type(exc)(f"bootstrap replicate {b} (seed {seed}) failed: {exc}") from exc
    return est.as_array()


def bootstrap_draws(main: MainSample, aux: AuxSample, cfg: FitConfig, B: int, seed: int,
                    jobs: int = 1) -> np.ndarray:
    """``(B, 3, 2)`` replicate estimates indexed by (replicate, estimator, w)."""
    if B < 2:
        raise ValueError("B must be >= 2")
    tasks = [(main, aux, cfg, seed, b) for b in range(B)]
    return np.stack(ordered_map(_replicate, tasks, jobs))


def intervals_from_draws(point: PointEstimates, draws: np.ndarray, level: float,
                         keep_draws: bool = False) -> list[BootstrapResult]:
    results = []
    for k, est in enumerate(ESTIMATORS):
        per_target = {"tau0": draws[:, k, 0], "tau1": draws[:, k, 1]}
        per_target["ate"] = per_target["tau1"] - per_target["tau0"]
        for target in TARGETS:
            d = per_target[target]
            lo, hi = percentile_interval(d, level)
            results.append(BootstrapResult(est, target, point.get(est, target), lo, hi, level,
                                           len(d), d.copy() if keep_draws else None))
    return results


def bootstrap(main: MainSample, aux: AuxSample, cfg: FitConfig, B: int = 1000, level: float = 0.95,
              seed: int = 0, jobs: int = 1, keep_draws: bool = False) -> list[BootstrapResult]:
    """Point estimates from the original fit plus percentile intervals.

    Returns one :class:`BootstrapResult` per (estimator, target), nine in all.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    point = fit_and_estimate(main, aux, cfg)
    draws = bootstrap_draws(main, aux, cfg, B, seed, jobs)
    return intervals_from_draws(point, draws, level, keep_draws)
