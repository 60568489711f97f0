"""L2-regularized logistic solvers shared by reward, policy, and propensity fits.

Binary fits use damped Newton iterations with backtracking, so the
regularized objective is non-increasing step by step and the result is
deterministic. The intercept is never penalized. Multinomial fits go
through scipy's L-BFGS-B with an analytic gradient.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import fmin_l_bfgs_b
from scipy.special import logsumexp
from threadpoolctl import threadpool_limits

from .errors import FitError

GRAD_TOL = 1e-6
MAX_ITER = 500
_JITTER = 1e-10

# The per-arm problems here are small; multithreaded BLAS oversubscribes
# the worker and can be an order of magnitude slower than one thread.
_BLAS_LIMIT = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis."""
    scores = np.asarray(scores, dtype=float)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def binary_objective_and_grad(
    params: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    lam: float,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy plus (lam/2)*||coef||^2; intercept unpenalized.

    ``params`` packs the coefficient vector followed by the intercept.
    Exposed so the analytic gradient can be checked against finite
    differences.
    """
    coef, intercept = params[:-1], params[-1]
    z = X @ coef + intercept
    # log(1 + e^{-z}) and log(1 + e^{z}) without overflow
    loss = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
    obj = float(sample_weight @ loss + 0.5 * lam * coef @ coef)
    p = sigmoid(z)
    resid = sample_weight * (p - y)
    grad = np.empty_like(params)
    grad[:-1] = X.T @ resid + lam * coef
    grad[-1] = resid.sum()
    return obj, grad


def fit_binary_logistic(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    sample_weight: np.ndarray | None = None,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> tuple[np.ndarray, float, dict]:
    """Fit a weighted binary logistic regression by damped Newton steps.

    Returns (coef, intercept, info) where info records the objective
    trajectory, iteration count, and final gradient norm. Backtracking
    halves the step until the objective decreases, so the trajectory is
    monotone non-increasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.isfinite(X).all():
        raise FitError("non-finite feature values")
    n, n_feat = X.shape
    if sample_weight is None:
        sample_weight = np.ones(n)
    else:
        sample_weight = np.asarray(sample_weight, dtype=float)
        if (sample_weight < 0).any():
            raise FitError("sample weights must be non-negative")
    if lam < 0:
        raise FitError("ridge strength must be non-negative")

    params = np.zeros(n_feat + 1)
    penalty = np.append(np.full(n_feat, lam), 0.0)
    obj, grad = binary_objective_and_grad(params, X, y, sample_weight, lam)
    objectives = [obj]
    iterations = 0
    with threadpool_limits(limits=_BLAS_LIMIT):
        for iterations in range(1, max_iter + 1):
            if np.linalg.norm(grad) < tol:
                break
            z = X @ params[:-1] + params[-1]
            p = sigmoid(z)
            curv = sample_weight * p * (1.0 - p)
            hess = np.empty((n_feat + 1, n_feat + 1))
            hess[:-1, :-1] = (X * curv[:, None]).T @ X
            hess[:-1, -1] = X.T @ curv
            hess[-1, :-1] = hess[:-1, -1]
            hess[-1, -1] = curv.sum()
            hess[np.diag_indices_from(hess)] += penalty + _JITTER
            try:
                direction = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                direction = -grad
            step = 1.0
            while step > 1e-12:
                cand = params + step * direction
                cand_obj, cand_grad = binary_objective_and_grad(cand, X, y, sample_weight, lam)
                if cand_obj <= obj:
                    break
                step *= 0.5
            else:
                break  # no descent possible: numerically converged
            params, obj, grad = cand, cand_obj, cand_grad
            objectives.append(obj)
    grad_norm = float(np.linalg.norm(grad))
    info = {
        "iterations": iterations,
        "objectives": objectives,
        "converged": grad_norm < tol,
        "grad_norm": grad_norm,
    }
    return params[:-1], float(params[-1]), info


def multinomial_objective_and_grad(
    flat_params: np.ndarray,
    X: np.ndarray,
    actions: np.ndarray,
    n_arms: int,
    ridge: float,
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy plus (ridge/2)*||coef||^2; intercepts unpenalized."""
    n, n_feat = X.shape
    params = flat_params.reshape(n_arms, n_feat + 1)
    coef, intercept = params[:, :-1], params[:, -1]
    scores = X @ coef.T + intercept
    log_norm = logsumexp(scores, axis=1)
    obj = float(np.sum(log_norm - scores[np.arange(n), actions]))
    obj += 0.5 * ridge * float((coef * coef).sum())
    probs = np.exp(scores - log_norm[:, None])
    probs[np.arange(n), actions] -= 1.0
    grad = np.empty_like(params)
    grad[:, :-1] = probs.T @ X + ridge * coef
    grad[:, -1] = probs.sum(axis=0)
    return obj, grad.ravel()


def fit_multinomial_logistic(
    X: np.ndarray,
    actions: np.ndarray,
    n_arms: int,
    ridge: float,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit an L2-regularized multinomial logistic model with L-BFGS.

    Returns (coef, intercept) with shapes (K, F) and (K,). Deterministic
    for fixed inputs; stops at max-norm gradient below ``tol`` or the
    iteration cap.
    """
    X = np.asarray(X, dtype=float)
    actions = np.asarray(actions, dtype=np.int64)
    if not np.isfinite(X).all():
        raise FitError("non-finite feature values")
    if ridge < 0:
        raise FitError("ridge strength must be non-negative")
    n, n_feat = X.shape
    x0 = np.zeros(n_arms * (n_feat + 1))
    with threadpool_limits(limits=_BLAS_LIMIT):
        solution, _, _ = fmin_l_bfgs_b(
            multinomial_objective_and_grad,
            x0,
            args=(X, actions, n_arms, ridge),
            maxiter=max_iter,
            pgtol=tol,
            factr=10.0,
        )
    params = solution.reshape(n_arms, n_feat + 1)
    return params[:, :-1].copy(), params[:, -1].copy()
