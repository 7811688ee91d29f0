"""Exact finite discrete models of ``(U, X, W, Y)``.

Every expectation is a finite sum over the joint pmf of ``(U, X)``, with
``W = I(X >= c)`` and ``E[Y | U, X] = m(U, W)`` (so ``X`` affects ``Y`` only
through ``W`` given ``U``). Bridge equations become small linear systems,
which makes the three identification formulas checkable to machine
precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import AuxSample, MainSample
from .errors import NoSolution, ValidationError

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """``pmf[i, j] = P(U = u_levels[i], X = x_grid[j])``; ``m[i, w] = E[Y | U = u_i, W = w]``."""

    u_levels: np.ndarray
    x_grid: np.ndarray
    pmf: np.ndarray
    m: np.ndarray
    threshold: float = 0.0
    noise_sd: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u_levels, dtype=float).ravel()
        x = np.asarray(self.x_grid, dtype=float).ravel()
        p = np.asarray(self.pmf, dtype=float)
        m = np.asarray(self.m, dtype=float)
        if p.shape != (u.size, x.size):
            raise ValidationError(f"pmf shape {p.shape} != ({u.size}, {x.size})")
        if m.shape != (u.size, 2):
            raise ValidationError(f"m must have shape ({u.size}, 2)")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("pmf must be nonnegative and sum to 1")
        if len(np.unique(u)) != u.size or len(np.unique(x)) != x.size:
            raise ValidationError("u levels and x grid must be distinct")
        if np.any(p.sum(axis=1) <= 0):
            raise ValidationError("every u level needs positive mass")
        for name, arr in (("u_levels", u), ("x_grid", x), ("pmf", p), ("m", m)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        pi1 = self.propensity(1)
        if np.any(pi1 <= 0) or np.any(pi1 >= 1):
            bad = self.u_levels[(pi1 <= 0) | (pi1 >= 1)]
            raise ValidationError(f"latent positivity fails: u levels {bad} see only one side of the threshold")

    @property
    def w_grid(self) -> np.ndarray:
        return (self.x_grid >= self.threshold).astype(float)

    @property
    def p_u(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def p_x(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    def propensity(self, w: int) -> np.ndarray:
        """``P(W = w | U = u)`` per u level."""
        side = self.w_grid == w
        return self.pmf[:, side].sum(axis=1) / self.p_u

    def y_mean(self) -> np.ndarray:
        """``E[Y | X = x]`` per grid point (``W`` is a function of ``X``)."""
        wi = self.w_grid.astype(int)
        return (self.pmf * self.m[:, wi]).sum(axis=0) / self.p_x


def exact_tau(model: DiscreteModel, w: int) -> float:
    return float(model.p_u @ model.m[:, w])


def _side_system(model: DiscreteModel, w: int):
    side = np.flatnonzero(model.w_grid == w)
    pi = model.propensity(w)
    A = model.pmf[:, side] / (model.p_u * pi)[:, None]  # P(X = x | U, W = w)
    return side, A, 1.0 / pi


def solve_treatment_bridge(model: DiscreteModel) -> np.ndarray:
    """Minimum-norm ``f`` on the x grid with ``E[f(X, W) | U, W] = 1 / P(W | U)``.

    Returns ``f[j]`` for each grid point ``x_j`` (its arm is fixed by ``x_j``).
    Raises :class:`NoSolution` when the system for either arm is inconsistent.
    """
    f = np.zeros(model.x_grid.size)
    for w in (0, 1):
        side, A, b = _side_system(model, w)
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = np.abs(A @ sol - b).max()
        if resid > RESIDUAL_TOL * max(1.0, np.abs(b).max()):
            raise NoSolution(f"treatment bridge for w={w} has no exact solution (residual {resid:.3g})")
        f[side] = sol
    return f


def outcome_bridge_residual(model: DiscreteModel, h: np.ndarray) -> float:
    """Max over grid of ``|E[h(U, W) | X] - E[Y | X]|``."""
    wi = model.w_grid.astype(int)
    lhs = (model.pmf * h[:, wi]).sum(axis=0) / model.p_x
    return float(np.abs(lhs - model.y_mean()).max())


def solve_outcome_bridge(model: DiscreteModel, method: str = "regression") -> np.ndarray:
    """``h[i, w]`` solving ``E[h(U, W) | X, W] = E[Y | X, W]``.

    ``regression`` returns ``E[Y | U, W] = m`` itself, a bridge by construction.
    ``lstsq`` instead solves the defining equation per arm for the
    minimum-norm solution, which differs from ``m`` when the bridge is not
    unique.
    """
    if method == "regression":
        h = model.m.copy()
    elif method == "lstsq":
        h = np.zeros_like(model.m)
        ey = model.y_mean()
        for w in (0, 1):
            side = np.flatnonzero(model.w_grid == w)
            B = (model.pmf[:, side] / model.p_x[side]).T  # P(U = u | X = x)
            h[:, w], *_ = np.linalg.lstsq(B, ey[side], rcond=None)
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = outcome_bridge_residual(model, h)
    if resid > RESIDUAL_TOL * max(1.0, np.abs(model.m).max()):
        raise NoSolution(f"outcome bridge residual {resid:.3g}")
    return h


@dataclass(frozen=True)
class IdentificationReport:
    w: int
    tau: float
    outcome_formula: float
    weighting_formula: float
    doubly_robust_formula: float

    @property
    def max_discrepancy(self) -> float:
        vals = np.array([self.tau, self.outcome_formula, self.weighting_formula, self.doubly_robust_formula])
        return float(vals.max() - vals.min())


def identification_formulas(model: DiscreteModel, h: np.ndarray, f: np.ndarray, w: int):
    """Population values of ``E[h(U,w)]``, ``E[Y f(X,W) I(W=w)]`` and the DR combination."""
    wi = model.w_grid.astype(int)
    arm = (wi == w).astype(float)
    ey_ux = model.m[:, wi]  # E[Y | U, X]
    outcome = float(model.p_u @ h[:, w])
    weighting = float((model.pmf * ey_ux * (f * arm)[None, :]).sum())
    augment = float((model.pmf * h[:, [w]] * (1.0 - f * arm)[None, :]).sum())
    return outcome, weighting, weighting + augment


def verify_identification(model: DiscreteModel, tol: float = RESIDUAL_TOL,
                          outcome_method: str = "regression") -> list[IdentificationReport]:
    """Evaluate the three identification formulas for both arms.

    Raises :class:`AssertionError` if any pair disagrees by more than ``tol``.
    """
    h = solve_outcome_bridge(model, outcome_method)
    f = solve_treatment_bridge(model)
    reports = []
    for w in (0, 1):
        rep = IdentificationReport(w, exact_tau(model, w), *identification_formulas(model, h, f, w))
        if rep.max_discrepancy > tol:
            raise AssertionError(f"identification formulas disagree for w={w}: {rep}")
        reports.append(rep)
    return reports


class TabularBridge:
    """Callable bridge defined by a lookup table on a finite support.

    Outcome bridges are keyed by ``(u level, w)``, treatment bridges by grid
    point ``x`` (the arm is implied by ``x``).
    """

    def __init__(self, keys: np.ndarray, table: np.ndarray, by_arm: bool):
        self.keys = np.asarray(keys, dtype=float)
        self.table = np.asarray(table, dtype=float)
        self.by_arm = by_arm

    def __call__(self, a, w):
        a = np.asarray(a, dtype=float)
        idx = np.searchsorted(self.keys, a)
        idx = np.clip(idx, 0, self.keys.size - 1)
        if not np.all(self.keys[idx] == a):
            raise KeyError("input outside the bridge's support")
        if self.by_arm:
            return self.table[idx, np.asarray(w, dtype=float).astype(int)]
        return self.table[idx]


def outcome_bridge_fn(model: DiscreteModel, h: np.ndarray) -> TabularBridge:
    order = np.argsort(model.u_levels)
    return TabularBridge(model.u_levels[order], h[order], by_arm=True)


def treatment_bridge_fn(model: DiscreteModel, f: np.ndarray) -> TabularBridge:
    order = np.argsort(model.x_grid)
    return TabularBridge(model.x_grid[order], f[order], by_arm=False)


def sample(model: DiscreteModel, n: int, seed=None, n_aux: int | None = None):
    """Draw i.i.d. main ``(x, w, y)`` and independent auxiliary ``(u, x)`` rows."""
    rng = np.random.default_rng(seed)
    n_aux = n if n_aux is None else n_aux
    flat = model.pmf.ravel()
    nx = model.x_grid.size

    def draw(k):
        cell = rng.choice(flat.size, size=k, p=flat)
        return cell // nx, cell % nx

    ui, xj = draw(n)
    w = model.w_grid[xj]
    y = model.m[ui, w.astype(int)]
    if model.noise_sd > 0:
        y = y + rng.normal(0.0, model.noise_sd, n)
    main = MainSample(model.x_grid[xj], w, y, model.threshold)
    ua, xa = draw(n_aux)
    aux = AuxSample(model.u_levels[ua], model.x_grid[xa], model.threshold)
    return main, aux


def population_samples(model: DiscreteModel, total: int):
    """Samples whose empirical law equals the pmf exactly.

    Requires ``pmf * total`` to be integral. Outcomes are noise-free, so
    ``mean_main[g(X) Y] = E[g(X) Y]`` for every ``g``.
    """
    counts = model.pmf * total
    k = np.rint(counts).astype(int)
    if np.abs(counts - k).max() > 1e-9:
        raise ValidationError("pmf * total must be integral")
    ui, xj = np.nonzero(k)
    reps = k[ui, xj]
    ui, xj = np.repeat(ui, reps), np.repeat(xj, reps)
    w = model.w_grid[xj]
    main = MainSample(model.x_grid[xj], w, model.m[ui, w.astype(int)], model.threshold)
    aux = AuxSample(model.u_levels[ui], model.x_grid[xj], model.threshold)
    return main, aux


def random_model(rng, n_u: int = 2, per_side: int = 4, integer_total: int | None = None,
                 threshold: float = 0.0) -> DiscreteModel:
    """Random model with latent positivity; pmf entries are multiples of
    ``1/integer_total`` when given."""
    x = np.concatenate([threshold - np.sort(rng.uniform(0.1, 2.0, per_side)),
                        threshold + np.sort(rng.uniform(0.0, 2.0, per_side))])
    x[per_side] = threshold  # one grid point exactly at the threshold
    u = np.sort(rng.uniform(-1.0, 1.0, n_u))
    if integer_total is None:
        p = rng.uniform(0.2, 1.0, (n_u, 2 * per_side))
        p /= p.sum()
    else:
        k = rng.integers(1, 10, (n_u, 2 * per_side)).astype(float)
        scale = integer_total // int(k.sum())
        k *= scale
        k[0, 0] += integer_total - k.sum()
        p = k / integer_total
    m = rng.normal(0.0, 2.0, (n_u, 2))
    return DiscreteModel(u, x, p, m, threshold)


def read_fixture(path) -> DiscreteModel:
    """Parse a plain-text fixture with sections ``u``, ``x``, ``pmf``, ``m``.

    Each section header is a line ``[name]`` followed by whitespace-separated
    numbers (one pmf/m row per line). ``[threshold]`` and ``[noise_sd]`` are
    optional scalars.
    """
    sections: dict[str, list[list[float]]] = {}
    current = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections[current] = []
        elif current is None:
            raise ValidationError(f"{path}: data before first section header")
        else:
            sections[current].append([float(t) for t in line.split()])
    pmf = np.array(sections["pmf"])
    return DiscreteModel(
        np.concatenate(sections["u"]), np.concatenate(sections["x"]), pmf / pmf.sum(),
        np.array(sections["m"]),
        float(sections.get("threshold", [[0.0]])[0][0]),
        float(sections.get("noise_sd", [[0.0]])[0][0]),
    )
