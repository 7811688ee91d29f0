"""Monte Carlo studies on the two synthetic designs.

Setting 1: ``U ~ Bernoulli(0.5)``, ``X | U ~ N(U - 0.5, 1)``, ``Y | U, W ~ N(U + 2W, 1)``.
Setting 2: ``U ~ Uniform(0, 1)``, ``X | U ~ N(U - 0.5, 1)``,
``Y | U, W ~ Bernoulli(sigmoid(2W - 0.6U))``. Both use threshold 0.

Replicate ``r`` at size ``n`` draws its data from ``split_seed(seed, n, r, 0)``
and fits from ``split_seed(seed, n, r, 1)``; the bootstrap for that replicate
uses ``split_seed(seed, n, r, 2)``. Reports are therefore reproducible from
``(seed, reps, B, cfg)`` alone and point estimates agree between the MSE,
coverage and misspecification studies.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dataset import AuxSample, MainSample
from .estimators import ESTIMATORS
from .inference import bootstrap_draws, fit_and_estimate, percentile_interval
from .minimax import FitConfig, split_seed
from .parallel import ordered_map


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def _draw_ux(rng, n, continuous_u):
    u = rng.uniform(0.0, 1.0, n) if continuous_u else rng.binomial(1, 0.5, n).astype(float)
    return u, rng.normal(u - 0.5, 1.0)


def gen_setting1(n1: int, n2: int, seed=None) -> tuple[MainSample, AuxSample]:
    rng = np.random.default_rng(seed)
    u, x = _draw_ux(rng, n1, False)
    w = (x >= 0).astype(float)
    y = rng.normal(u + 2.0 * w, 1.0)
    ua, xa = _draw_ux(rng, n2, False)
    return MainSample(x, w, y, 0.0), AuxSample(ua, xa, 0.0)


def gen_setting2(n1: int, n2: int, seed=None) -> tuple[MainSample, AuxSample]:
    rng = np.random.default_rng(seed)
    u, x = _draw_ux(rng, n1, True)
    w = (x >= 0).astype(float)
    y = rng.binomial(1, _sigmoid(2.0 * w - 0.6 * u)).astype(float)
    ua, xa = _draw_ux(rng, n2, True)
    return MainSample(x, w, y, 0.0), AuxSample(ua, xa, 0.0)


def _mean_sigmoid_linear(a: float, b: float) -> float:
    """``int_0^1 sigmoid(a + b u) du`` in closed form."""
    softplus = lambda t: max(t, 0.0) + math.log1p(math.exp(-abs(t)))  # noqa: E731
    return (softplus(a + b) - softplus(a)) / b


@dataclass(frozen=True)
class DgpSetting:
    name: str
    generate: Callable[[int, int, int], tuple[MainSample, AuxSample]]
    truths: tuple[float, float]
    lr: float

    def config(self, base: FitConfig | None = None) -> FitConfig:
        return replace(base or FitConfig(), lr=self.lr)


SETTINGS = {
    "setting1": DgpSetting("setting1", gen_setting1, (0.5, 2.5), 0.05),
    "setting2": DgpSetting("setting2", gen_setting2,
                           (_mean_sigmoid_linear(0.0, -0.6), _mean_sigmoid_linear(2.0, -0.6)), 0.1),
}


def get_setting(setting) -> DgpSetting:
    if isinstance(setting, DgpSetting):
        return setting
    key = str(setting).lower()
    key = {"1": "setting1", "2": "setting2"}.get(key, key)
    try:
        return SETTINGS[key]
    except KeyError:
        raise ValueError(f"unknown setting {setting!r}; expected one of {sorted(SETTINGS)}") from None


def true_tau(setting, w: int) -> float:
    return get_setting(setting).truths[w]


@dataclass(eq=False)
class McReport:
    """Replicate estimates and, for coverage studies, bootstrap intervals.

    Arrays are keyed by sample size with shape ``(reps, 3, 2)`` indexed by
    (replicate, estimator in ``ESTIMATORS`` order, w).
    """

    setting: str
    sizes: tuple[int, ...]
    reps: int
    truths: tuple[float, float]
    estimates: dict[int, np.ndarray]
    lower: dict[int, np.ndarray] = field(default_factory=dict)
    upper: dict[int, np.ndarray] = field(default_factory=dict)
    level: float | None = None
    B: int | None = None

    def errors(self, n: int) -> np.ndarray:
        return self.estimates[n] - np.asarray(self.truths)[None, None, :]

    def bias(self, n: int) -> np.ndarray:
        return self.errors(n).mean(axis=0)

    def mse(self, n: int) -> np.ndarray:
        return (self.errors(n) ** 2).mean(axis=0)

    def ate_estimates(self, n: int) -> np.ndarray:
        return self.estimates[n][:, :, 1] - self.estimates[n][:, :, 0]

    def ate_bias(self, n: int) -> np.ndarray:
        return self.ate_estimates(n).mean(axis=0) - (self.truths[1] - self.truths[0])

    @property
    def has_intervals(self) -> bool:
        return bool(self.lower)

    def coverage(self, n: int) -> np.ndarray:
        t = np.asarray(self.truths)[None, None, :]
        return ((self.lower[n] <= t) & (t <= self.upper[n])).mean(axis=0)

    def length(self, n: int) -> np.ndarray:
        return (self.upper[n] - self.lower[n]).mean(axis=0)

    def rows(self) -> list[dict]:
        """One row per (n, estimator, w)."""
        out = []
        for n in self.sizes:
            mse, bias = self.mse(n), self.bias(n)
            cov = self.coverage(n) if self.has_intervals else None
            length = self.length(n) if self.has_intervals else None
            for k, est in enumerate(ESTIMATORS):
                for w in (0, 1):
                    row = {"setting": self.setting, "n": n, "estimator": est, "w": w,
                           "truth": self.truths[w], "bias": bias[k, w], "mse": mse[k, w], "reps": self.reps}
                    if cov is not None:
                        row.update(coverage=cov[k, w], length=length[k, w], level=self.level, B=self.B)
                    out.append(row)
        return out

    def long_rows(self) -> list[dict]:
        """Per-replicate estimates in long format (plot-ready)."""
        out = []
        for n in self.sizes:
            est = self.estimates[n]
            for r in range(self.reps):
                for k, name in enumerate(ESTIMATORS):
                    for w in (0, 1):
                        out.append({"setting": self.setting, "n": n, "replicate": r, "estimator": name,
                                    "w": w, "estimate": est[r, k, w], "truth": self.truths[w]})
        return out

    def mse_table(self) -> str:
        head = ["number of data"] + [f"MSE of tau_{k}" for k in ESTIMATORS]
        body = [[str(n)] + [f"({m[k, 0]:.4f}, {m[k, 1]:.4f})" for k in range(3)]
                for n, m in ((n, self.mse(n)) for n in self.sizes)]
        return _table(head, body)

    def coverage_table(self) -> str:
        head = ["data size (w)"]
        for k in ESTIMATORS:
            head += [f"coverage of tau_{k}", f"length of tau_{k}"]
        body = []
        for n in self.sizes:
            cov, length = self.coverage(n), self.length(n)
            for w in (0, 1):
                row = [f"{n} ({w})"]
                for k in range(3):
                    row += [f"{100 * cov[k, w]:.1f}%", f"{length[k, w]:.4f}"]
                body.append(row)
        return _table(head, body)

    def text(self) -> str:
        title = f"{self.setting}: {self.reps} Monte Carlo replicates"
        parts = [title, "", self.mse_table()]
        if self.has_intervals:
            parts += ["", f"{100 * self.level:.0f}% bootstrap intervals, B={self.B}", "", self.coverage_table()]
        return "\n".join(parts) + "\n"


def _table(head: list[str], body: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    fmt = lambda r: " | ".join(c.rjust(wd) for c, wd in zip(r, widths))  # noqa: E731
    rule = "-+-".join("-" * wd for wd in widths)
    return "\n".join([fmt(head), rule] + [fmt(r) for r in body])


def _mc_replicate(args):
    setting, n, r, cfg, seed, B, level = args
    main, aux = setting.generate(n, n, split_seed(seed, n, r, 0))
    fit_cfg = cfg.with_seed(split_seed(seed, n, r, 1))
    point = fit_and_estimate(main, aux, fit_cfg).as_array()
    if not B:
        return point, None, None
    draws = bootstrap_draws(main, aux, fit_cfg, B, split_seed(seed, n, r, 2), jobs=1)
    lo = np.empty((3, 2))
    hi = np.empty((3, 2))
    for k in range(3):
        for w in (0, 1):
            lo[k, w], hi[k, w] = percentile_interval(draws[:, k, w], level)
    return point, lo, hi


def _run(setting, sizes, reps, cfg, seed, jobs, B=None, level=0.95) -> McReport:
    setting = get_setting(setting)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if B is not None and B < 2:
        raise ValueError("B must be >= 2")
    cfg = cfg if cfg is not None else setting.config()
    sizes = tuple(int(n) for n in sizes)
    tasks = [(setting, n, r, cfg, seed, B, level) for n in sizes for r in range(reps)]
    results = ordered_map(_mc_replicate, tasks, jobs, chunksize=1)
    report = McReport(setting.name, sizes, reps, setting.truths, {}, level=level if B else None, B=B)
    for i, n in enumerate(sizes):
        chunk = results[i * reps : (i + 1) * reps]
        report.estimates[n] = np.stack([c[0] for c in chunk])
        if B:
            report.lower[n] = np.stack([c[1] for c in chunk])
            report.upper[n] = np.stack([c[2] for c in chunk])
    return report


def run_mse_study(setting, sizes=(100, 200, 500, 1000), reps: int = 1000, cfg: FitConfig | None = None,
                  seed: int = 0, jobs: int | None = 1) -> McReport:
    """MSE of every estimator per sample size; ``cfg`` defaults to the setting's learning rate."""
    return _run(setting, sizes, reps, cfg, seed, jobs)


def run_coverage_study(setting, sizes=(100, 200, 500, 1000), reps: int = 1000, B: int = 1000,
                       cfg: FitConfig | None = None, seed: int = 0, jobs: int | None = 1,
                       level: float = 0.95) -> McReport:
    """Bootstrap coverage and average interval length per (estimator, w, n)."""
    return _run(setting, sizes, reps, cfg, seed, jobs, B, level)


MISSPEC = {"h_constant": ("h_kind", "h"), "f_constant": ("f_kind", "f"), "none": (None, None)}


@dataclass(eq=False)
class MisspecReport:
    which: str
    n: int
    report: McReport

    @property
    def broken(self) -> str | None:
        """Estimator relying only on the degraded bridge."""
        return MISSPEC[self.which][1]

    def bias(self) -> np.ndarray:
        return self.report.bias(self.n)

    def ate_bias(self) -> np.ndarray:
        return self.report.ate_bias(self.n)

    def mse(self) -> np.ndarray:
        return self.report.mse(self.n)

    def dr_protected(self) -> dict[str, bool]:
        """Per target, whether |bias(dr)| is below |bias| of the broken estimator."""
        if self.broken is None:
            return {}
        k, dr = ESTIMATORS.index(self.broken), ESTIMATORS.index("dr")
        b, ate = np.abs(self.bias()), np.abs(self.ate_bias())
        return {"tau0": bool(b[dr, 0] < b[k, 0]), "tau1": bool(b[dr, 1] < b[k, 1]),
                "ate": bool(ate[dr] < ate[k])}

    def rows(self) -> list[dict]:
        bias, mse, ate = self.bias(), self.mse(), self.ate_bias()
        flags = self.dr_protected()
        out = []
        for k, est in enumerate(ESTIMATORS):
            for target, b, m in (("tau0", bias[k, 0], mse[k, 0]), ("tau1", bias[k, 1], mse[k, 1]),
                                 ("ate", ate[k], None)):
                row = {"setting": self.report.setting, "misspecified": self.which, "n": self.n,
                       "estimator": est, "target": target, "bias": b}
                row["mse"] = m if m is not None else float(
                    np.mean((self.report.ate_estimates(self.n)[:, k]
                             - (self.report.truths[1] - self.report.truths[0])) ** 2))
                row["dr_protected"] = flags.get(target, "") if est == "dr" else ""
                out.append(row)
        return out

    def text(self) -> str:
        head = ["estimator", "bias tau0", "bias tau1", "bias ATE", "MSE tau0", "MSE tau1"]
        bias, mse, ate = self.bias(), self.mse(), self.ate_bias()
        body = [[est, f"{bias[k, 0]:+.4f}", f"{bias[k, 1]:+.4f}", f"{ate[k]:+.4f}",
                 f"{mse[k, 0]:.4f}", f"{mse[k, 1]:.4f}"] for k, est in enumerate(ESTIMATORS)]
        buf = io.StringIO()
        buf.write(f"{self.report.setting}, n={self.n}, {self.report.reps} replicates, "
                  f"misspecified: {self.which}\n\n")
        buf.write(_table(head, body) + "\n")
        if self.broken:
            buf.write(f"\ndr less biased than tau_{self.broken}: "
                      + ", ".join(f"{t}={v}" for t, v in self.dr_protected().items()) + "\n")
        return buf.getvalue()


def run_misspecification_study(setting, n: int = 1000, reps: int = 200, cfg: FitConfig | None = None,
                               which: str = "f_constant", seed: int = 0,
                               jobs: int | None = 1) -> MisspecReport:
    """Refit with one bridge restricted to the constant class.

    ``which="none"`` leaves both bridges as networks and reproduces
    :func:`run_mse_study` for the same seed.
    """
    if which not in MISSPEC:
        raise ValueError(f"which must be one of {sorted(MISSPEC)}")
    setting = get_setting(setting)
    cfg = cfg if cfg is not None else setting.config()
    attr = MISSPEC[which][0]
    if attr is not None:
        cfg = replace(cfg, **{attr: "constant"})
    return MisspecReport(which, int(n), run_mse_study(setting, (n,), reps, cfg, seed, jobs))
