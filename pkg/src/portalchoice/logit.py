"""Conditional logit for a single household.

Designs are dense arrays ``X`` of shape (T, J, p): T occasions, J
alternatives, p coefficients. ``chosen[t]`` is the index of the alternative
picked at occasion t. An optional boolean ``avail`` (T, J) masks out
alternatives that were not available at an occasion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import Config

log = logging.getLogger(__name__)

Z_95 = 1.959963984540054
NEWTON_STEP_TOL = 1e-4

SEPARATION = "separation"
SINGULAR_HESSIAN = "singular_hessian"
NON_ESTIMABLE = "non_estimable"
HIT_BOUND = "hit_bound"


@dataclass(frozen=True)
class HouseholdFit:
    household_id: str
    layout: tuple[str, ...]
    beta: Optional[np.ndarray]
    se: Optional[np.ndarray]
    loglik: float
    iterations: int
    converged: bool
    flags: frozenset = frozenset()
    n_occasions: int = 0
    # log-likelihood after every accepted step, starting value first
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def z(self) -> Optional[np.ndarray]:
        if self.beta is None or self.se is None:
            return None
        return self.beta / self.se


def softmax(v: np.ndarray, avail: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise softmax over the last axis with max-utility subtraction."""
    v = np.asarray(v, dtype=float)
    if avail is not None:
        v = np.where(avail, v, -np.inf)
    m = v.max(axis=-1, keepdims=True)
    e = np.exp(v - m)
    return e / e.sum(axis=-1, keepdims=True)


def _check_dims(beta: np.ndarray, X: np.ndarray) -> None:
    if X.ndim not in (2, 3):
        raise ValueError(f"design must be (J, p) or (T, J, p), got shape {X.shape}")
    if beta.ndim != 1 or beta.shape[0] != X.shape[-1]:
        raise ValueError(f"beta has length {beta.shape}, design has {X.shape[-1]} columns")
    if X.shape[-2] < 1:
        raise ValueError("an occasion needs at least one alternative")


def choice_probabilities(beta, X, avail=None) -> np.ndarray:
    """Choice probabilities for one occasion (J, p) or a stack (T, J, p)."""
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    _check_dims(beta, X)
    return softmax(X @ beta, avail)


def loglik(beta, X, chosen, avail=None) -> float:
    beta = np.asarray(beta, dtype=float)
    v = X @ beta
    if avail is not None:
        v = np.where(avail, v, -np.inf)
    m = v.max(axis=1)
    lse = m + np.log(np.exp(v - m[:, None]).sum(axis=1))
    return float(np.sum(v[np.arange(len(chosen)), chosen] - lse))


def loglik_grad_hess(beta, X, chosen, avail=None) -> tuple[float, np.ndarray, np.ndarray]:
    """Log-likelihood, gradient and Hessian summed over occasions."""
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    _check_dims(beta, X)
    if X.ndim != 3:
        raise ValueError("loglik_grad_hess needs a (T, J, p) design")
    T, J, p = X.shape
    chosen = np.asarray(chosen, dtype=np.intp)
    if chosen.shape != (T,):
        raise ValueError(f"chosen must have shape ({T},), got {chosen.shape}")

    v = X @ beta
    if avail is not None:
        v = np.where(avail, v, -np.inf)
    m = v.max(axis=1, keepdims=True)
    e = np.exp(v - m)
    s = e.sum(axis=1, keepdims=True)
    P = e / s
    rows = np.arange(T)
    ll = float(np.sum(v[rows, chosen] - m[:, 0] - np.log(s[:, 0])))

    # einsum without optimize runs plain C loops: a fixed summation order
    # independent of BLAS threading, so fits are bit-reproducible
    xbar = np.einsum("tj,tjk->tk", P, X)
    grad = (X[rows, chosen] - xbar).sum(axis=0)
    second = np.einsum("tj,tjk,tjl->kl", P, X, X)
    hess = np.einsum("tk,tl->kl", xbar, xbar) - second
    hess = 0.5 * (hess + hess.T)
    return ll, grad, hess


def _negdef(hess: np.ndarray, rtol: float = 1e-10) -> bool:
    if hess.size == 0:
        return False
    eig = np.linalg.eigvalsh(-hess)
    return bool(eig[0] > rtol * max(1.0, eig[-1]))


def standard_errors(hess: np.ndarray) -> Optional[np.ndarray]:
    """sqrt(diag((-H)^-1)), or None if H is not negative definite."""
    if not _negdef(hess):
        return None
    cov = np.linalg.inv(-hess)
    return np.sqrt(np.diag(cov))


def significance(beta: np.ndarray, se: Optional[np.ndarray]) -> list[str]:
    """'+', '-' or '0' per coefficient at the two-sided 95% level."""
    if se is None:
        return [""] * len(beta)
    z = np.asarray(beta) / np.asarray(se)
    return ["+" if zk > Z_95 else "-" if zk < -Z_95 else "0" for zk in z]


def _drop_degenerate(X, chosen, avail, household_id):
    if avail is None:
        if X.shape[1] < 2:
            log.warning("household %s: every occasion has a single alternative", household_id)
            return X[:0], chosen[:0], None
        return X, chosen, None
    keep = avail.sum(axis=1) >= 2
    if not keep.all():
        log.warning("household %s: dropping %d single-alternative occasion(s)",
                    household_id, int((~keep).sum()))
    return X[keep], chosen[keep], avail[keep]


POLISH_STEPS = 3


def _polish(beta, grad, hess, direction, free, X, chosen, avail, bound):
    """Final Newton refinements once the stopping tests pass.

    Near the optimum the likelihood changes by less than its own rounding
    error, so these steps are accepted on a shrinking gradient instead.
    They are not ascent iterations and are left out of the history.
    """
    gnorm = np.max(np.abs(grad[free]))
    for _ in range(POLISH_STEPS):
        cand = np.clip(beta + direction, -bound, bound)
        _, g_c, h_c = loglik_grad_hess(cand, X, chosen, avail)
        g_norm_c = np.max(np.abs(g_c[free]))
        if not np.isfinite(g_norm_c) or g_norm_c >= gnorm:
            break
        beta, grad, hess, gnorm = cand, g_c, h_c, g_norm_c
        try:
            chol = np.linalg.cholesky(-hess[np.ix_(free, free)])
        except np.linalg.LinAlgError:
            break
        direction = np.zeros_like(beta)
        direction[free] = np.linalg.solve(chol.T, np.linalg.solve(chol, grad[free]))
    return beta, grad, hess


def fit_household(
    X,
    chosen,
    *,
    layout: Optional[Sequence[str]] = None,
    household_id: str = "",
    config: Config = Config(),
    start=None,
    avail=None,
) -> HouseholdFit:
    """Maximize the household log-likelihood by damped Newton iterations.

    Coefficients are kept inside the box ``|beta_k| <= config.beta_bound``;
    a coefficient pushed onto the box edge marks the fit ``hit_bound``.
    Where the Hessian of the free block is not negative definite the
    iteration takes a plain gradient step instead.
    """
    X = np.asarray(X, dtype=float)
    chosen = np.asarray(chosen, dtype=np.intp)
    if avail is not None:
        avail = np.asarray(avail, dtype=bool)
    p = X.shape[2]
    layout = tuple(layout) if layout is not None else tuple(f"x{k}" for k in range(p))
    X, chosen, avail = _drop_degenerate(X, chosen, avail, household_id)
    T = X.shape[0]

    if X.shape[1] < 2 or T < p + config.min_occasions_margin:
        return HouseholdFit(household_id, layout, None, None, float("nan"), 0, False,
                            frozenset({NON_ESTIMABLE}), T)

    bound = config.beta_bound
    beta = np.zeros(p) if start is None else np.clip(np.asarray(start, dtype=float), -bound, bound)
    # ascent decisions and the history use one summation path, so accepted
    # steps never appear to lose likelihood through rounding
    ll = loglik(beta, X, chosen, avail)
    _, grad, hess = loglik_grad_hess(beta, X, chosen, avail)
    history = [ll]
    prev_ll = None
    converged = False
    iterations = 0

    while True:
        at_edge = ((beta >= bound) & (grad > 0)) | ((beta <= -bound) & (grad < 0))
        free = ~at_edge
        direction = np.zeros(p)
        if free.any():
            neg_hf = -hess[np.ix_(free, free)]
            try:
                chol = np.linalg.cholesky(neg_hf)
                direction[free] = np.linalg.solve(chol.T, np.linalg.solve(chol, grad[free]))
            except np.linalg.LinAlgError:
                direction[free] = grad[free]

        small_grad = np.max(np.abs(np.where(free, grad, 0.0))) <= config.grad_tol
        small_change = prev_ll is None or abs(ll - prev_ll) <= config.loglik_tol * max(abs(prev_ll), 1e-300)
        # under quasi-separation the gradient dies off while Newton steps stay near 1
        small_step = np.max(np.abs(direction)) <= NEWTON_STEP_TOL
        if small_grad and small_change and small_step:
            converged = True
            break
        if iterations >= config.max_iterations:
            break

        step = 1.0
        accepted = None
        for _ in range(config.max_halvings + 1):
            cand = np.clip(beta + step * direction, -bound, bound)
            ll_cand = loglik(cand, X, chosen, avail)
            if np.isfinite(ll_cand) and ll_cand >= ll:
                accepted = cand
                break
            step *= 0.5
        if accepted is None:
            # no ascent possible along this direction; stationary up to rounding
            converged = bool(small_grad)
            break

        iterations += 1
        prev_ll = ll
        beta, ll = accepted, ll_cand
        _, grad, hess = loglik_grad_hess(beta, X, chosen, avail)
        history.append(ll)

    if converged and free.any():
        beta, grad, hess = _polish(beta, grad, hess, direction, free, X, chosen, avail, bound)
        ll = loglik(beta, X, chosen, avail)

    flags = set()
    if np.any(np.abs(beta) >= bound):
        flags.update({HIT_BOUND, SEPARATION})
    se = None
    if not _negdef(hess):
        flags.add(SINGULAR_HESSIAN)
    elif converged and HIT_BOUND not in flags:
        se = standard_errors(hess)
    return HouseholdFit(household_id, layout, beta, se, ll, iterations, converged,
                        frozenset(flags), T, tuple(history))
