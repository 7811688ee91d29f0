"""Hot loops for the bridge networks.

Each kernel exists as a numba-compiled loop version (``*_nb``) and a
vectorized numpy version (``*_np``); ``forward``, ``backward`` and ``train``
dispatch on :data:`bridge_rdd._accel.USE_NUMBA`. Both produce the same
numbers up to floating-point summation order (the training loop is compiled
with reassociation enabled, so the two paths agree to ~1e-13, not bitwise).

Parameter layout for the two-layer ReLU model with ``H`` hidden units is a
flat vector ``[W1 (H x 2, row-major), b1 (H), W2 (H), b2]``; the constant
model is ``[c0, c1]``, one value per treatment level.
"""
import numpy as np
from scipy.linalg import solve_triangular

from . import _accel

RELU = 0
CONSTANT = 1


# ---------------------------------------------------------------- numpy path

def _unpack_np(theta, H):
    W1 = theta[: 2 * H].reshape(H, 2)
    return W1, theta[2 * H : 3 * H], theta[3 * H : 4 * H], theta[4 * H]


def forward_np(kind, theta, H, a, w):
    if kind == CONSTANT:
        return np.where(w > 0.5, theta[1], theta[0])
    W1, b1, W2, b2 = _unpack_np(theta, H)
    z = np.multiply.outer(a, W1[:, 0]) + np.multiply.outer(w, W1[:, 1]) + b1
    return np.maximum(z, 0.0) @ W2 + b2


def backward_np(kind, theta, H, a, w, cot):
    if kind == CONSTANT:
        t = w > 0.5
        return np.array([cot[~t].sum(), cot[t].sum()])
    W1, b1, W2, b2 = _unpack_np(theta, H)
    z = np.multiply.outer(a, W1[:, 0]) + np.multiply.outer(w, W1[:, 1]) + b1
    r = np.maximum(z, 0.0)
    dz = np.multiply.outer(cot, W2) * (z > 0.0)
    g = np.empty_like(theta)
    g[: 2 * H] = np.stack([dz.T @ a, dz.T @ w], axis=1).ravel()
    g[2 * H : 3 * H] = dz.sum(axis=0)
    g[3 * H : 4 * H] = r.T @ cot
    g[4 * H] = cot.sum()
    return g


def _chol_solve_np(L, v):
    z = solve_triangular(L, v, lower=True, check_finite=False)
    return solve_triangular(L, z, lower=True, trans="T", check_finite=False)


def train_np(kind, theta0, H, a, w, G, target, L, lr, beta1, beta2, eps, epochs):
    theta = theta0.copy()
    m = np.zeros_like(theta)
    s2 = np.zeros_like(theta)
    trace = np.empty(epochs)
    for t in range(1, epochs + 1):
        out = forward_np(kind, theta, H, a, w)
        v = G.T @ out - target
        s = _chol_solve_np(L, v)
        trace[t - 1] = v @ s
        g = backward_np(kind, theta, H, a, w, 2.0 * (G @ s))
        m = beta1 * m + (1.0 - beta1) * g
        s2 = beta2 * s2 + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = s2 / (1.0 - beta2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    v = G.T @ forward_np(kind, theta, H, a, w) - target
    final = float(v @ _chol_solve_np(L, v))
    return theta, trace, final


# ---------------------------------------------------------------- numba path

def _forward_loop(kind, theta, H, a, w):
    n = a.shape[0]
    out = np.empty(n)
    if kind == CONSTANT:
        for j in range(n):
            out[j] = theta[1] if w[j] > 0.5 else theta[0]
        return out
    b2 = theta[4 * H]
    for j in range(n):
        acc = b2
        for k in range(H):
            z = theta[2 * k] * a[j] + theta[2 * k + 1] * w[j] + theta[2 * H + k]
            if z > 0.0:
                acc += theta[3 * H + k] * z
        out[j] = acc
    return out


def _backward_loop(kind, theta, H, a, w, cot):
    n = a.shape[0]
    g = np.zeros(theta.shape[0])
    if kind == CONSTANT:
        for j in range(n):
            if w[j] > 0.5:
                g[1] += cot[j]
            else:
                g[0] += cot[j]
        return g
    for j in range(n):
        c = cot[j]
        g[4 * H] += c
        for k in range(H):
            z = theta[2 * k] * a[j] + theta[2 * k + 1] * w[j] + theta[2 * H + k]
            if z > 0.0:
                g[3 * H + k] += c * z
                dz = c * theta[3 * H + k]
                g[2 * k] += dz * a[j]
                g[2 * k + 1] += dz * w[j]
                g[2 * H + k] += dz
    return g


def _quad_form_loop(L, G, out, target, v, s):
    # v = G^T out - target; s = (L L^T)^{-1} v; returns v . s
    n, D = G.shape
    for d in range(D):
        v[d] = -target[d]
    for j in range(n):
        o = out[j]
        for d in range(D):
            v[d] += G[j, d] * o
    for i in range(D):
        acc = v[i]
        for k in range(i):
            acc -= L[i, k] * s[k]
        s[i] = acc / L[i, i]
    for i in range(D - 1, -1, -1):
        acc = s[i]
        for k in range(i + 1, D):
            acc -= L[k, i] * s[k]
        s[i] = acc / L[i, i]
    q = 0.0
    for d in range(D):
        q += v[d] * s[d]
    return q


def _train_loop(kind, theta0, H, a, w, G, target, L, lr, beta1, beta2, eps, epochs):
    # forward pass caches the hidden activations so backward reuses them
    theta = theta0.copy()
    P = theta.shape[0]
    n, D = G.shape
    m = np.zeros(P)
    s2 = np.zeros(P)
    v = np.empty(D)
    s = np.empty(D)
    g = np.empty(P)
    out = np.empty(n)
    R = np.empty((n, H))
    trace = np.empty(epochs + 1)
    relu = kind == RELU
    b1t = 1.0
    b2t = 1.0
    for t in range(epochs + 1):
        if relu:
            b2 = theta[4 * H]
            for j in range(n):
                acc = b2
                aj = a[j]
                wj = w[j]
                for k in range(H):
                    z = theta[2 * k] * aj + theta[2 * k + 1] * wj + theta[2 * H + k]
                    z = z if z > 0.0 else 0.0
                    R[j, k] = z
                    acc += theta[3 * H + k] * z
                out[j] = acc
        else:
            for j in range(n):
                out[j] = theta[1] if w[j] > 0.5 else theta[0]
        trace[t] = _quad_form_loop(L, G, out, target, v, s)
        if t == epochs:
            break
        for p in range(P):
            g[p] = 0.0
        for j in range(n):
            c = 0.0
            for d in range(D):
                c += G[j, d] * s[d]
            c *= 2.0
            if not relu:
                if w[j] > 0.5:
                    g[1] += c
                else:
                    g[0] += c
                continue
            g[4 * H] += c
            aj = a[j]
            wj = w[j]
            for k in range(H):
                z = R[j, k]
                if z > 0.0:
                    g[3 * H + k] += c * z
                    dz = c * theta[3 * H + k]
                    g[2 * k] += dz * aj
                    g[2 * k + 1] += dz * wj
                    g[2 * H + k] += dz
        b1t *= beta1
        b2t *= beta2
        for p in range(P):
            m[p] = beta1 * m[p] + (1.0 - beta1) * g[p]
            s2[p] = beta2 * s2[p] + (1.0 - beta2) * g[p] * g[p]
            theta[p] -= lr * (m[p] / (1.0 - b1t)) / (np.sqrt(s2[p] / (1.0 - b2t)) + eps)
    return theta, trace[:epochs].copy(), trace[epochs]


_forward_loop = _accel.njit(_forward_loop)
_backward_loop = _accel.njit(_backward_loop)
_quad_form_loop = _accel.njit(_quad_form_loop, fast=True)
forward_nb = _forward_loop
backward_nb = _backward_loop
train_nb = _accel.njit(_train_loop, fast=True)


# ---------------------------------------------------------------- dispatch

def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def forward(kind, theta, H, a, w, backend=None):
    fn = forward_nb if _use_numba(backend) else forward_np
    return fn(int(kind), _f64(theta), int(H), _f64(a), _f64(w))


def backward(kind, theta, H, a, w, cot, backend=None):
    fn = backward_nb if _use_numba(backend) else backward_np
    return fn(int(kind), _f64(theta), int(H), _f64(a), _f64(w), _f64(cot))


def train(kind, theta0, H, a, w, G, target, L, lr, beta1, beta2, eps, epochs, backend=None):
    fn = train_nb if _use_numba(backend) else train_np
    theta, trace, final = fn(
        int(kind), _f64(theta0), int(H), _f64(a), _f64(w), _f64(G), _f64(target), _f64(L),
        float(lr), float(beta1), float(beta2), float(eps), int(epochs),
    )
    return theta, trace, float(final)


def _use_numba(backend):
    if backend is None:
        return _accel.USE_NUMBA
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "numba" and _accel.NUMBA_AVAILABLE
