"""Penalized minimax fitting of the outcome and treatment bridges.

With a linear critic ``alpha @ basis`` the inner maximization

    max_alpha  alpha @ v - lambda * mean[(alpha @ basis)^2] - gamma * |alpha|^2

is attained at ``alpha = M^{-1} v / 2`` with value ``v @ M^{-1} v / 4``, where
``M = lambda * mean[basis basis^T] + gamma * I``. The losses below return that
supremum, so a loss value is exactly the best penalized critic payoff:

* outcome bridge ``h(u, w)``:  ``v = mean_aux[phi(x, w) h(u, w)] - mean_main[phi(x, w) y]``,
  ``M`` averaged over main and auxiliary rows together;
* treatment bridge ``f(x, w)``: ``v = mean_aux[f(x, w) psi(u, w) - psi(u, 0) - psi(u, 1)]``,
  ``M`` averaged over auxiliary rows.

Auxiliary rows always use the derived treatment ``w = I(x >= c)``. ``M`` does
not depend on the bridge, so it is factorized once per fit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve

from . import _kernels
from .dataset import AuxSample, MainSample
from .errors import ConfigError, SingularSystem
from .features import BasisSpec, basis, psi_sum01
from .netfn import AdamState, FunctionModel, adam_step, grad_params, init_model

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters for both bridge fits.

    ``lam``/``lam_prime`` weight the critic's empirical L2 norm and
    ``gamma1``/``gamma2`` its coefficient norm, for the outcome and treatment
    problems respectively.
    """

    phi: BasisSpec = BasisSpec()
    psi: BasisSpec = BasisSpec()
    lam: float = 1.0
    lam_prime: float = 1.0
    gamma1: float = 0.03
    gamma2: float = 0.03
    epochs: int = 100
    lr: float = 0.05
    hidden_size: int = 10
    seed: int = 0
    h_kind: str = "two_layer_relu"
    f_kind: str = "two_layer_relu"

    def __post_init__(self):
        for name in ("lam", "lam_prime", "gamma1", "gamma2", "lr"):
            if not (getattr(self, name) > 0):
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")
        for name in ("h_kind", "f_kind"):
            if getattr(self, name) not in ("two_layer_relu", "constant"):
                raise ConfigError(f"{name} must be two_layer_relu or constant")

    def with_seed(self, seed: int) -> FitConfig:
        return replace(self, seed=int(seed))


# flat config file key -> (FitConfig field, parser)
_CONFIG_KEYS = {
    "lambda": ("lam", float),
    "lambda_prime": ("lam_prime", float),
    "gamma1": ("gamma1", float),
    "gamma2": ("gamma2", float),
    "epochs": ("epochs", int),
    "lr": ("lr", float),
    "hidden_size": ("hidden_size", int),
    "seed": ("seed", int),
    "h_kind": ("h_kind", str),
    "f_kind": ("f_kind", str),
}


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def config_from_mapping(values: dict[str, str], base: FitConfig | None = None) -> FitConfig:
    """Apply flat ``key -> text`` overrides on top of ``base``."""
    base = base or FitConfig()
    kw = {}
    phi, psi = base.phi, base.psi
    for key, raw in values.items():
        raw = str(raw).strip()
        try:
            if key in _CONFIG_KEYS:
                name, parse = _CONFIG_KEYS[key]
                kw[name] = parse(raw)
            elif key == "d1":
                phi = replace(phi, d=int(raw))
            elif key == "d2":
                psi = replace(psi, d=int(raw))
            elif key == "basis":
                phi, psi = replace(phi, kind=raw), replace(psi, kind=raw)
            elif key == "intercept":
                b = _parse_bool(raw)
                phi, psi = replace(phi, intercept=b), replace(psi, intercept=b)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return replace(base, phi=phi, psi=psi, **kw)


def load_config(path, base: FitConfig | None = None) -> FitConfig:
    """Read a flat ``key = value`` text file (``#`` starts a comment)."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":" if ":" in line else None
            if sep is None:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split(sep, 1))
            values[key] = value
    return config_from_mapping(values, base)


def dump_config(cfg: FitConfig) -> str:
    lines = [
        f"basis = {cfg.phi.kind}",
        f"intercept = {str(cfg.phi.intercept).lower()}",
        f"d1 = {cfg.phi.d}",
        f"d2 = {cfg.psi.d}",
    ]
    for key, (name, _) in _CONFIG_KEYS.items():
        lines.append(f"{key} = {getattr(cfg, name)}")
    return "\n".join(lines) + "\n"


def split_seed(root: int, *keys: int) -> int:
    """Derive an independent 63-bit seed from ``root`` and integer ``keys``.

    Uses numpy's SeedSequence hashing, so streams for different keys are
    statistically independent and the mapping is stable across platforms.
    """
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class MomentProblem:
    """Precomputed quadratic moment objective ``v @ M^{-1} v / 4``.

    ``v = G.T @ model(a, w) - target``. Rows of the bridge's inputs that share
    the same ``(a, w)`` pair are merged, with their basis rows summed into
    ``G``, so evaluation cost scales with the number of distinct inputs.
    """

    a: np.ndarray
    w: np.ndarray
    G: np.ndarray
    target: np.ndarray
    chol: np.ndarray  # lower Cholesky factor of 4 M
    M: np.ndarray
    gram: np.ndarray
    lam: float
    gamma: float

    def residual(self, outputs) -> np.ndarray:
        return self.G.T @ np.asarray(outputs, dtype=float) - self.target

    def solve(self, v) -> np.ndarray:
        """``(4 M)^{-1} v``."""
        return cho_solve((self.chol, True), v, check_finite=False)

    def value(self, outputs) -> float:
        v = self.residual(outputs)
        return float(v @ self.solve(v))

    def value_and_cotangent(self, outputs) -> tuple[float, np.ndarray]:
        """Loss and its derivative with respect to each merged output."""
        v = self.residual(outputs)
        s = self.solve(v)
        return float(v @ s), 2.0 * (self.G @ s)

    def model_value(self, model) -> float:
        return self.value(model(self.a, self.w))

    def loss_and_grad(self, model: FunctionModel) -> tuple[float, np.ndarray]:
        value, cot = self.value_and_cotangent(model(self.a, self.w))
        return value, grad_params(model, self.a, self.w, cot)

    def inner_objective(self, alpha, outputs) -> float:
        """Penalized critic objective at coefficients ``alpha``; its maximum is :meth:`value`."""
        alpha = np.asarray(alpha, dtype=float)
        return float(alpha @ self.residual(outputs) - self.lam * alpha @ self.gram @ alpha
                     - self.gamma * alpha @ alpha)


def _factor(M: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(4.0 * M)
    except np.linalg.LinAlgError:
        raise SingularSystem("penalized moment matrix is not positive definite") from None


def _merge(a, w, B, scale):
    order = np.lexsort((w, a))
    sa, sw = a[order], w[order]
    new = np.ones(len(sa), dtype=bool)
    new[1:] = (sa[1:] != sa[:-1]) | (sw[1:] != sw[:-1])
    starts = np.flatnonzero(new)
    G = np.add.reduceat(B[order], starts, axis=0)
    return sa[starts], sw[starts], np.ascontiguousarray(G * scale)


def _penalized(gram: np.ndarray, lam: float, gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise SingularSystem(f"ridge penalty must be > 0, got {gamma!r}")
    M = lam * gram + gamma * np.eye(gram.shape[0])
    return 0.5 * (M + M.T)


def outcome_problem(main: MainSample, aux: AuxSample, cfg: FitConfig) -> MomentProblem:
    phi_m = basis(main.x, main.w, cfg.phi)
    phi_a = basis(aux.x, aux.w, cfg.phi)
    n1, n2 = len(main), len(aux)
    gram = (phi_m.T @ phi_m + phi_a.T @ phi_a) / (n1 + n2)
    M = _penalized(gram, cfg.lam, cfg.gamma1)
    a, w, G = _merge(aux.u, aux.w, phi_a, 1.0 / n2)
    target = phi_m.T @ main.y / n1
    return MomentProblem(a, w, G, target, _factor(M), M, gram, cfg.lam, cfg.gamma1)


def treatment_problem(aux: AuxSample, cfg: FitConfig) -> MomentProblem:
    psi_a = basis(aux.u, aux.w, cfg.psi)
    n2 = len(aux)
    gram = psi_a.T @ psi_a / n2
    M = _penalized(gram, cfg.lam_prime, cfg.gamma2)
    a, w, G = _merge(aux.x, aux.w, psi_a, 1.0 / n2)
    target = psi_sum01(aux.u, cfg.psi).reshape(n2, -1).mean(axis=0)
    return MomentProblem(a, w, G, target, _factor(M), M, gram, cfg.lam_prime, cfg.gamma2)


def h_loss(h, main: MainSample, aux: AuxSample, cfg: FitConfig):
    """Outcome-bridge loss and its parameter gradient.

    ``h`` may be any callable ``h(u, w)``; the gradient is returned only for a
    :class:`FunctionModel` (``None`` otherwise).
    """
    prob = outcome_problem(main, aux, cfg)
    if isinstance(h, FunctionModel):
        return prob.loss_and_grad(h)
    return prob.model_value(h), None


def f_loss(f, aux: AuxSample, cfg: FitConfig):
    """Treatment-bridge loss and its parameter gradient (see :func:`h_loss`)."""
    prob = treatment_problem(aux, cfg)
    if isinstance(f, FunctionModel):
        return prob.loss_and_grad(f)
    return prob.model_value(f), None


@dataclass(frozen=True, eq=False)
class FitResult:
    model: FunctionModel
    trace: np.ndarray
    final_loss: float


def fit_problem(prob: MomentProblem, kind: str, cfg: FitConfig, seed: int, backend=None) -> FitResult:
    """Full-batch Adam on a precomputed moment problem from a seeded init."""
    model0 = init_model(kind, cfg.hidden_size, seed)
    theta, trace, final = _kernels.train(
        model0.code, model0.theta, model0.hidden_size, prob.a, prob.w, prob.G, prob.target,
        prob.chol, cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, cfg.epochs, backend,
    )
    return FitResult(model0.with_theta(theta), trace, final)


def fit_problem_stepwise(prob: MomentProblem, kind: str, cfg: FitConfig, seed: int) -> FitResult:
    """Unfused reference loop built from ``loss_and_grad`` and ``adam_step``."""
    model = init_model(kind, cfg.hidden_size, seed)
    state = AdamState.zeros(model.theta.size, cfg.lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS)
    trace = np.empty(cfg.epochs)
    for t in range(cfg.epochs):
        trace[t], g = prob.loss_and_grad(model)
        theta, state = adam_step(state, model.theta, g)
        model = model.with_theta(theta)
    return FitResult(model, trace, prob.model_value(model))


# Init streams for the two bridges are split off the config seed.
_H_STREAM, _F_STREAM = 1, 2


def fit_outcome_bridge(main: MainSample, aux: AuxSample, cfg: FitConfig, backend=None) -> FitResult:
    prob = outcome_problem(main, aux, cfg)
    return fit_problem(prob, cfg.h_kind, cfg, split_seed(cfg.seed, _H_STREAM), backend)


def fit_treatment_bridge(aux: AuxSample, cfg: FitConfig, backend=None) -> FitResult:
    prob = treatment_problem(aux, cfg)
    return fit_problem(prob, cfg.f_kind, cfg, split_seed(cfg.seed, _F_STREAM), backend)


@dataclass(frozen=True, eq=False)
class FittedBridges:
    h_hat: FunctionModel
    f_hat: FunctionModel
    h_loss: float
    f_loss: float
    h_trace: np.ndarray = field(repr=False)
    f_trace: np.ndarray = field(repr=False)


def fit_bridges(main: MainSample, aux: AuxSample, cfg: FitConfig, backend=None) -> FittedBridges:
    h = fit_outcome_bridge(main, aux, cfg, backend)
    f = fit_treatment_bridge(aux, cfg, backend)
    return FittedBridges(h.model, f.model, h.final_loss, f.final_loss, h.trace, f.trace)

