"""Non-recurrent baselines over flattened lookback windows.

Linear regression solves the ridge-jittered normal equations. The epsilon-
insensitive RBF support-vector regressor is trained by sequential minimal
optimization on the net dual coefficients beta_i = alpha_i - alpha_i*:
pick the steepest feasible pair, solve the two-variable subproblem exactly
(the epsilon|beta| kinks make it piecewise quadratic over at most three
segments), and stop when every point satisfies the KKT conditions within
tol. The equality constraint sum(beta) = 0 is preserved exactly by every
pair update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _binio
from .errors import (
    BadArtifact,
    ConfigError,
    DataError,
    DimensionMismatch,
    NonFiniteInput,
)
from .nets import _NET_MAGIC, _NET_VERSION, TAG_LINEAR, TAG_SVR


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float


def _check_xy(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y) or len(y) < 1:
        raise DataError(f"bad training shapes {x.shape} / {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NonFiniteInput()
    return x, y


def fit_linear(x: np.ndarray, y: np.ndarray, ridge: float = 1e-8) -> LinearModel:
    """Normal equations on [x, 1] with a ridge jitter for rank safety."""
    x, y = _check_xy(x, y)
    if ridge < 0:
        raise ConfigError(f"ridge must be non-negative, got {ridge}")
    a = np.hstack([x, np.ones((len(x), 1))])
    gram = a.T @ a + ridge * np.eye(a.shape[1])
    beta = np.linalg.solve(gram, a.T @ y)
    return LinearModel(weights=beta[:-1], bias=float(beta[-1]))


def predict_linear(model: LinearModel, x: np.ndarray) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != len(model.weights):
        raise DimensionMismatch(len(model.weights), x.shape[1])
    out = x @ model.weights + model.bias
    return float(out[0]) if single else out


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a_i - b_j||^2) for every pair of rows."""
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    c: float
    epsilon: float
    support_idx: np.ndarray
    converged: bool
    iterations: int
    dual_objective: float


def dual_objective(k: np.ndarray, y: np.ndarray, beta: np.ndarray, epsilon: float) -> float:
    """0.5 b'Kb - y'b + eps*||b||_1, the minimization form of the dual."""
    return float(0.5 * beta @ k @ beta - y @ beta + epsilon * np.abs(beta).sum())


def _kkt_violations(beta: np.ndarray, err: np.ndarray, epsilon: float, c: float) -> np.ndarray:
    """Per-point KKT residual given err = f(x) - y at the current bias.

    Free points must sit inside the tube, positive (negative) coefficients
    pin err to -eps (+eps), and bound coefficients may only overshoot.
    """
    atol = 1e-9 * max(1.0, c)
    at_zero = np.abs(beta) <= atol
    at_upper = beta >= c - atol
    at_lower = beta <= -c + atol
    pos_free = (beta > atol) & ~at_upper
    neg_free = (beta < -atol) & ~at_lower

    viol = np.zeros_like(beta)
    viol[at_zero] = np.maximum(0.0, np.abs(err[at_zero]) - epsilon)
    viol[pos_free] = np.abs(err[pos_free] + epsilon)
    viol[neg_free] = np.abs(err[neg_free] - epsilon)
    viol[at_upper & ~at_zero] = np.maximum(0.0, err[at_upper & ~at_zero] + epsilon)
    viol[at_lower & ~at_zero] = np.maximum(0.0, epsilon - err[at_lower & ~at_zero])
    return viol


def _bias(beta: np.ndarray, g_minus_y: np.ndarray, epsilon: float, c: float,
          up: np.ndarray, dn: np.ndarray,
          can_up: np.ndarray, can_dn: np.ndarray) -> float:
    atol = 1e-9 * max(1.0, c)
    interior = (np.abs(beta) > atol) & (np.abs(beta) < c - atol)
    if interior.any():
        # interior coefficients pin f(x_i) = y_i - eps*sign(beta_i) exactly
        return float(np.mean(-g_minus_y[interior] - epsilon * np.sign(beta[interior])))
    lo = -np.min(up[can_up]) if can_up.any() else None
    hi = np.min(dn[can_dn]) if can_dn.any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float((lo + hi) / 2.0)


def _pair_delta(
    k: np.ndarray, beta: np.ndarray, g_minus_y: np.ndarray,
    i: int, j: int, epsilon: float, c: float,
) -> tuple[float, float] | None:
    """Exact minimizer of the dual restricted to beta_i + beta_j constant.

    Returns (new beta_i, objective change) or None when no strict descent
    exists along this pair.
    """
    s = beta[i] + beta[j]
    lo = max(-c, s - c)
    hi = min(c, s + c)
    if not lo < hi:
        return None
    eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
    gd = g_minus_y[i] - g_minus_y[j]

    def delta(t: float) -> float:
        step = t - beta[i]
        return (
            0.5 * eta * step * step
            + gd * step
            + epsilon * (abs(t) - abs(beta[i]))
            + epsilon * (abs(s - t) - abs(beta[j]))
        )

    candidates = {lo, hi}
    breaks = sorted({lo, hi} | {b for b in (0.0, s) if lo < b < hi})
    if eta > 0.0:
        for left, right in zip(breaks[:-1], breaks[1:]):
            mid = (left + right) / 2.0
            sign1 = 1.0 if mid >= 0.0 else -1.0
            sign2 = 1.0 if (s - mid) >= 0.0 else -1.0
            t_star = beta[i] - (gd + epsilon * (sign1 - sign2)) / eta
            candidates.add(min(max(t_star, left), right))
    candidates.update(b for b in (0.0, s) if lo <= b <= hi)

    best_t, best_d = None, -1e-14
    for t in candidates:
        d = delta(t)
        if d < best_d:
            best_t, best_d = t, d
    if best_t is None:
        return None
    return float(best_t), float(best_d)


def fit_svr(
    x: np.ndarray,
    y: np.ndarray,
    c: float = 100.0,
    epsilon: float = 0.1,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    seed: int = 0,
) -> SvrModel:
    """SMO on the precomputed RBF Gram matrix; gamma defaults to
    1 / n_features. Hitting max_iter returns the best-so-far model with
    converged=False instead of raising."""
    x, y = _check_xy(x, y)
    if c <= 0 or epsilon < 0 or tol <= 0 or max_iter < 1:
        raise ConfigError(
            f"need c > 0, epsilon >= 0, tol > 0, max_iter >= 1; "
            f"got {c}/{epsilon}/{tol}/{max_iter}"
        )
    n, p = x.shape
    if gamma is None:
        gamma = 1.0 / p
    if gamma <= 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")

    k = rbf_kernel(x, x, gamma)
    beta = np.zeros(n)
    g = np.zeros(n)  # K @ beta, maintained incrementally
    rng = np.random.default_rng(seed)
    converged = False
    iterations = 0
    bias = 0.0

    for iterations in range(1, max_iter + 1):
        g_minus_y = g - y
        up = g_minus_y + epsilon * np.where(beta >= 0.0, 1.0, -1.0)
        dn = -g_minus_y + epsilon * np.where(beta <= 0.0, 1.0, -1.0)
        can_up = beta < c
        can_dn = beta > -c
        bias = _bias(beta, g_minus_y, epsilon, c, up, dn, can_up, can_dn)
        if _kkt_violations(beta, g_minus_y + bias, epsilon, c).max() < tol:
            converged = True
            break

        move = None
        up_masked = np.where(can_up, up, np.inf)
        dn_masked = np.where(can_dn, dn, np.inf)
        i = int(np.argmin(up_masked))
        j = int(np.argmin(dn_masked))
        if i != j:
            move = _pair_delta(k, beta, g_minus_y, i, j, epsilon, c)
            if move is not None:
                move = (i, j, move[0])
        if move is None:
            # steepest pair made no progress; seeded sweep over violators
            order_i = rng.permutation(n)
            order_j = rng.permutation(n)
            for i in order_i:
                if not can_up[i]:
                    continue
                for j in order_j:
                    if i == j or not can_dn[j]:
                        continue
                    found = _pair_delta(k, beta, g_minus_y, int(i), int(j), epsilon, c)
                    if found is not None:
                        move = (int(i), int(j), found[0])
                        break
                if move is not None:
                    break
        if move is None:
            converged = _kkt_violations(beta, g_minus_y + bias, epsilon, c).max() < tol
            break

        i, j, new_i = move
        s = beta[i] + beta[j]
        new_j = s - new_i
        g = g + (new_i - beta[i]) * k[:, i] + (new_j - beta[j]) * k[:, j]
        beta[i] = new_i
        beta[j] = new_j

    g_minus_y = g - y
    up = g_minus_y + epsilon * np.where(beta >= 0.0, 1.0, -1.0)
    dn = -g_minus_y + epsilon * np.where(beta <= 0.0, 1.0, -1.0)
    bias = _bias(beta, g_minus_y, epsilon, c, up, dn, beta < c, beta > -c)

    support = np.abs(beta) > 1e-12
    return SvrModel(
        support_vectors=x[support].copy(),
        dual_coef=beta[support].copy(),
        bias=bias,
        gamma=gamma,
        c=c,
        epsilon=epsilon,
        support_idx=np.nonzero(support)[0],
        converged=converged,
        iterations=iterations,
        dual_objective=dual_objective(k, y, beta, epsilon),
    )


def predict_svr(model: SvrModel, x: np.ndarray) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    p = model.support_vectors.shape[1]
    if x.shape[1] != p:
        raise DimensionMismatch(p, x.shape[1])
    out = rbf_kernel(x, model.support_vectors, model.gamma) @ model.dual_coef + model.bias
    return float(out[0]) if single else out


def save_linear(model: LinearModel, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_NET_MAGIC)
        _binio.write_u16(f, _NET_VERSION)
        _binio.write_u8(f, TAG_LINEAR)
        _binio.write_u64(f, len(model.weights))
        _binio.write_f64_array(f, model.weights)
        _binio.write_f64(f, model.bias)


def load_linear(path: str) -> LinearModel:
    with open(path, "rb") as f:
        _binio.expect_magic(f, _NET_MAGIC, path)
        version = _binio.read_u16(f, path)
        if version != _NET_VERSION:
            raise BadArtifact(path, f"unsupported model version {version}")
        tag = _binio.read_u8(f, path)
        if tag != TAG_LINEAR:
            raise BadArtifact(path, f"not a linear-model checkpoint (tag {tag})")
        p = _binio.read_u64(f, path)
        weights = _binio.read_f64_array(f, (p,), path)
        bias = _binio.read_f64(f, path)
    return LinearModel(weights=weights, bias=bias)


def save_svr(model: SvrModel, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_NET_MAGIC)
        _binio.write_u16(f, _NET_VERSION)
        _binio.write_u8(f, TAG_SVR)
        s, p = model.support_vectors.shape
        _binio.write_u64(f, s)
        _binio.write_u64(f, p)
        _binio.write_f64_array(f, model.support_vectors)
        _binio.write_f64_array(f, model.dual_coef)
        _binio.write_i64_array(f, model.support_idx)
        _binio.write_f64(f, model.bias)
        _binio.write_f64(f, model.gamma)
        _binio.write_f64(f, model.c)
        _binio.write_f64(f, model.epsilon)
        _binio.write_u8(f, int(model.converged))
        _binio.write_u64(f, model.iterations)
        _binio.write_f64(f, model.dual_objective)


def load_svr(path: str) -> SvrModel:
    with open(path, "rb") as f:
        _binio.expect_magic(f, _NET_MAGIC, path)
        version = _binio.read_u16(f, path)
        if version != _NET_VERSION:
            raise BadArtifact(path, f"unsupported model version {version}")
        tag = _binio.read_u8(f, path)
        if tag != TAG_SVR:
            raise BadArtifact(path, f"not an svr checkpoint (tag {tag})")
        s = _binio.read_u64(f, path)
        p = _binio.read_u64(f, path)
        support = _binio.read_f64_array(f, (s, p), path)
        coef = _binio.read_f64_array(f, (s,), path)
        idx = _binio.read_i64_array(f, s, path)
        bias = _binio.read_f64(f, path)
        gamma = _binio.read_f64(f, path)
        c = _binio.read_f64(f, path)
        epsilon = _binio.read_f64(f, path)
        converged = bool(_binio.read_u8(f, path))
        iterations = _binio.read_u64(f, path)
        objective = _binio.read_f64(f, path)
    return SvrModel(
        support_vectors=support, dual_coef=coef, bias=bias, gamma=gamma,
        c=c, epsilon=epsilon, support_idx=idx, converged=converged,
        iterations=iterations, dual_objective=objective,
    )
