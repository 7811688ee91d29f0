"""Point estimators of the mean potential outcomes and the ATE.

* ``tau_h``: average of the outcome bridge over the auxiliary sample, at the
  target arm ``w``.
* ``tau_f``: treatment-bridge weighted outcome mean over the main sample,
  restricted to rows in arm ``w``.
* ``tau_dr``: ``tau_f`` plus the auxiliary-sample augmentation
  ``mean_aux[(1 - f(x, w_i) I(w_i = w)) h(u, w)]``, where ``w_i = I(x_i >= c)``.

No propensity score is estimated; all weighting goes through the bridge ``f``.
Bridges are any callables ``bridge(a, w) -> array``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import AuxSample, MainSample
from .errors import EmptySample

ESTIMATORS = ("h", "f", "dr")


def _check(sample, name):
    if len(sample) == 0:
        raise EmptySample(f"{name} sample is empty")


def tau_h(h_hat, aux: AuxSample, w: int) -> float:
    _check(aux, "auxiliary")
    return float(np.mean(h_hat(aux.u, np.full(len(aux), float(w)))))


def tau_f(f_hat, main: MainSample, w: int) -> float:
    _check(main, "main")
    weights = f_hat(main.x, main.w) * (main.w == w)
    return float(np.mean(weights * main.y))


def tau_dr(h_hat, f_hat, main: MainSample, aux: AuxSample, w: int) -> float:
    _check(aux, "auxiliary")
    augment = (1.0 - f_hat(aux.x, aux.w) * (aux.w == w)) * h_hat(aux.u, np.full(len(aux), float(w)))
    return tau_f(f_hat, main, w) + float(np.mean(augment))


@dataclass(frozen=True)
class PointEstimates:
    tau0_h: float
    tau1_h: float
    tau0_f: float
    tau1_f: float
    tau0_dr: float
    tau1_dr: float

    @property
    def ate_h(self) -> float:
        return self.tau1_h - self.tau0_h

    @property
    def ate_f(self) -> float:
        return self.tau1_f - self.tau0_f

    @property
    def ate_dr(self) -> float:
        return self.tau1_dr - self.tau0_dr

    def get(self, estimator: str, target: str) -> float:
        """``target`` is one of ``tau0``, ``tau1``, ``ate``."""
        return getattr(self, f"{target}_{estimator}")

    def as_dict(self) -> dict[str, float]:
        out = asdict(self)
        for k in ESTIMATORS:
            out[f"ate_{k}"] = self.get(k, "ate")
        return out

    def as_array(self) -> np.ndarray:
        """``(3, 2)`` array indexed by (estimator, w)."""
        return np.array([[self.get(k, "tau0"), self.get(k, "tau1")] for k in ESTIMATORS])


def estimate_all(h_hat, f_hat, main: MainSample, aux: AuxSample) -> PointEstimates:
    # bridge outputs shared across the three estimators
    n2 = len(aux)
    _check(main, "main")
    _check(aux, "auxiliary")
    h0 = h_hat(aux.u, np.zeros(n2))
    h1 = h_hat(aux.u, np.ones(n2))
    f_main = f_hat(main.x, main.w)
    f_aux = f_hat(aux.x, aux.w)
    vals = {}
    for w, hw in ((0, h0), (1, h1)):
        tf = float(np.mean(f_main * (main.w == w) * main.y))
        vals[f"tau{w}_h"] = float(np.mean(hw))
        vals[f"tau{w}_f"] = tf
        vals[f"tau{w}_dr"] = tf + float(np.mean((1.0 - f_aux * (aux.w == w)) * hw))
    return PointEstimates(**vals)
