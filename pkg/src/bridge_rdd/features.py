"""Cosine critic bases for the closed-form inner maximization.

Two kinds are provided:

``cosine``
    ``(1 + w) * cos(i * a)`` for ``i = 1..d``. The w=1 block is twice the w=0
    block and cosines are even, so the critic cannot tell the two treatment
    arms apart; bridges fitted against it are not identified (see
    ``tests/test_features.py::TestIdentification``).
``cosine_arm`` (default)
    Separate blocks per arm, ``[(1 - w) * cos(i * a), w * cos(i * a)]``. Its
    span contains the ``cosine`` span.

``intercept=True`` adds the ``i = 0`` term (a constant per block).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("cosine", "cosine_arm")


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "cosine_arm"
    d: int = 10
    intercept: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if int(self.d) < 1:
            raise ValueError("basis dimension d must be >= 1")

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(0 if self.intercept else 1, self.d + 1, dtype=float)

    @property
    def dim(self) -> int:
        """Number of output columns."""
        k = self.d + int(self.intercept)
        return 2 * k if self.kind == "cosine_arm" else k


POOLED_BASIS = BasisSpec("cosine", 10, intercept=False)


def basis(a, w, spec: BasisSpec) -> np.ndarray:
    """Evaluate the critic basis on rows ``(a_j, w_j)``; returns ``(n, spec.dim)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    w = np.broadcast_to(np.asarray(w, dtype=float), a.shape)
    c = np.cos(np.multiply.outer(a, spec.frequencies))
    if spec.kind == "cosine":
        return (1.0 + w)[:, None] * c
    return np.hstack([(1.0 - w)[:, None] * c, w[:, None] * c])


def phi(x, w, spec: BasisSpec) -> np.ndarray:
    """Critic features over the running variable; a single row for scalar input."""
    out = basis(x, w, spec)
    return out[0] if np.ndim(x) == 0 else out


def psi(u, w, spec: BasisSpec) -> np.ndarray:
    """Critic features over the auxiliary variable."""
    out = basis(u, w, spec)
    return out[0] if np.ndim(u) == 0 else out


def psi_sum01(u, spec: BasisSpec) -> np.ndarray:
    """``psi(u, 0) + psi(u, 1)``."""
    return psi(u, 0.0, spec) + psi(u, 1.0, spec)
