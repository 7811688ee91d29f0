"""Hypothesis classes for the bridge functions and the Adam optimizer.

A :class:`FunctionModel` maps ``(a, w)`` to a real number, where ``a`` is the
auxiliary variable (outcome bridge) or the running variable (treatment
bridge). Two kinds exist: a two-layer ReLU network with input ``[a, w]``, and
a constant per treatment level (used to build deliberately misspecified
bridges).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeMismatch

KINDS = {"two_layer_relu": _kernels.RELU, "constant": _kernels.CONSTANT}


@dataclass(frozen=True, eq=False)
class FunctionModel:
    kind: str
    theta: np.ndarray
    hidden_size: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if theta.size != n_params(self.kind, self.hidden_size):
            raise ShapeMismatch(f"{self.kind} with hidden_size={self.hidden_size} needs "
                                f"{n_params(self.kind, self.hidden_size)} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("model parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def code(self) -> int:
        return KINDS[self.kind]

    def __call__(self, a, w) -> np.ndarray:
        return eval_batch(self, a, w)

    def with_theta(self, theta) -> FunctionModel:
        return FunctionModel(self.kind, theta, self.hidden_size)

    def named(self) -> dict[str, np.ndarray]:
        """Parameter views keyed by layer name."""
        t, H = self.theta, self.hidden_size
        if self.kind == "constant":
            return {"c": t}
        return {"W1": t[: 2 * H].reshape(H, 2), "b1": t[2 * H : 3 * H],
                "W2": t[3 * H : 4 * H], "b2": t[4 * H :]}

    def dump(self) -> str:
        """Flat ``name: values`` text, for debugging only."""
        lines = [f"kind: {self.kind}"]
        for name, arr in self.named().items():
            lines.append(f"{name}: " + " ".join(repr(float(v)) for v in arr.ravel()))
        return "\n".join(lines) + "\n"


def n_params(kind: str, hidden_size: int) -> int:
    if kind == "constant":
        return 2
    if hidden_size < 1:
        raise ValueError("hidden_size must be >= 1")
    return 4 * hidden_size + 1


def relu_network(W1, b1, W2, b2) -> FunctionModel:
    W1 = np.asarray(W1, dtype=float).reshape(-1, 2)
    H = W1.shape[0]
    theta = np.concatenate([W1.ravel(), np.ravel(b1), np.ravel(W2), np.ravel(b2)])
    return FunctionModel("two_layer_relu", theta, H)


def constant(c0: float, c1: float) -> FunctionModel:
    return FunctionModel("constant", [c0, c1])


def init_model(kind: str, hidden_size: int = 10, seed=None) -> FunctionModel:
    """Seeded uniform(-s, s) initialization with ``s = 1/sqrt(fan_in)`` per layer.

    Constant models draw both levels from uniform(-1, 1).
    """
    rng = np.random.default_rng(seed)
    if kind == "constant":
        return FunctionModel(kind, rng.uniform(-1.0, 1.0, 2))
    H = int(hidden_size)
    s1, s2 = 1.0 / np.sqrt(2.0), 1.0 / np.sqrt(H)
    theta = np.concatenate([rng.uniform(-s1, s1, 3 * H), rng.uniform(-s2, s2, H + 1)])
    return FunctionModel(kind, theta, H)


def _pairs(a, w):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if a.shape != w.shape:
        a, w = np.broadcast_arrays(a, w)
    return a.ravel(), w.ravel()


def eval(model: FunctionModel, a: float, w: float) -> float:  # noqa: A001 - mirrors the model API
    return float(eval_batch(model, a, w)[0])


def eval_batch(model: FunctionModel, a, w, backend=None) -> np.ndarray:
    a, w = _pairs(a, w)
    return _kernels.forward(model.code, model.theta, model.hidden_size, a, w, backend)


def grad_params(model: FunctionModel, a, w, cotangent, backend=None) -> np.ndarray:
    """Gradient of ``sum_j cotangent[j] * model(a[j], w[j])`` w.r.t. ``model.theta``.

    The ReLU subgradient at exactly zero is taken as zero.
    """
    a, w = _pairs(a, w)
    cot = np.asarray(cotangent, dtype=float).ravel()
    if cot.shape != a.shape:
        raise ShapeMismatch(f"cotangent has {cot.size} entries for {a.size} inputs")
    return _kernels.backward(model.code, model.theta, model.hidden_size, a, w, cot, backend)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, lr: float = 0.05, **kw) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), 0, lr, **kw)


def adam_step(state: AdamState, params, grad) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and a new state."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not (params.shape == grad.shape == state.m.shape):
        raise ShapeMismatch(f"params {params.shape}, grad {grad.shape}, moments {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    new = params - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
