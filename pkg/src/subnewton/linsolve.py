"""Newton-direction solves: exact via Cholesky, inexact via conjugate
gradients under a two-part acceptance contract.

An inexact direction p for the system H p = -g is accepted when

  (a) ||H p + g|| <= theta1 ||g||          (relative residual), and
  (b) p'g <= -(1 - theta2) p'Hp            (sufficient descent).

The exact solution satisfies both for any theta1, theta2 in [0, 1).  CG
started from zero satisfies (b) automatically in exact arithmetic (its
residuals are orthogonal to the iterate), but (b) is still verified
explicitly and iteration continues if it ever fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# lambda_min below this multiple of lambda_max counts as numerically singular
PD_RTOL = 1e-12
EXACT_RESIDUAL_RTOL = 1e-10
MAX_REFINEMENTS = 3


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Factorization failed; caller should regularize or resample."""


@dataclass(frozen=True)
class InexactnessSpec:
    """Tolerances of the two-part acceptance contract."""

    theta1: float
    theta2: float
    max_iters: int = 500

    def __post_init__(self):
        if not 0 <= self.theta1 < 1:
            raise ValueError(f"theta1 must be in [0, 1), got {self.theta1}")
        if not 0 <= self.theta2 < 1:
            raise ValueError(f"theta2 must be in [0, 1), got {self.theta2}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class InexactDiagnostics:
    ok: bool
    residual_ratio: float
    descent_ratio: float


def solve_exact(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve H y = rhs for symmetric positive definite H via Cholesky.

    The residual is driven below 1e-10 * ||rhs|| with a few steps of
    iterative refinement; failure to reach that (or to factorize) raises
    ``NotPositiveDefiniteError``.
    """
    h = np.asarray(h, dtype=float)
    rhs = np.asarray(rhs, dtype=float).ravel()
    try:
        factor = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    y = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    for _ in range(MAX_REFINEMENTS):
        resid = rhs - h @ y
        if float(np.linalg.norm(resid)) <= EXACT_RESIDUAL_RTOL * rhs_norm:
            return y
        y = y + scipy.linalg.cho_solve(factor, resid, check_finite=False)
    if float(np.linalg.norm(rhs - h @ y)) <= EXACT_RESIDUAL_RTOL * rhs_norm:
        return y
    raise NotPositiveDefiniteError("refinement stalled; matrix numerically singular")


def is_invertible(h: np.ndarray) -> bool:
    eigs = np.linalg.eigvalsh(0.5 * (h + h.T))
    return float(eigs[0]) > PD_RTOL * max(1.0, float(eigs[-1]))


def _cg_iterates(h, g, budget):
    """Conjugate-gradient iterates for H p = -g from the zero start.

    Yields (p, residual_norm) after every update.  Stops early if rounding
    destroys the curvature d'Hd > 0.
    """
    p = np.zeros_like(g)
    r = -g.copy()          # residual of H p = -g
    d = r.copy()
    rr = float(r @ r)
    for _ in range(budget):
        hd = h @ d
        dhd = float(d @ hd)
        if dhd <= 0:
            return
        alpha = rr / dhd
        p = p + alpha * d
        r = r - alpha * hd
        rr_next = float(r @ r)
        yield p, np.sqrt(rr_next)
        d = r + (rr_next / rr) * d
        rr = rr_next


def solve_inexact(h: np.ndarray, g: np.ndarray, spec: InexactnessSpec) -> np.ndarray:
    """Direction p approximately solving H p = -g under the acceptance
    contract.

    CG runs from the zero start, stops at the first iterate meeting the
    residual condition, then checks the descent condition; if the latter
    fails, iteration continues.  theta1 = 0 or an exhausted budget falls
    back to the exact solve.
    """
    g = np.asarray(g, dtype=float).ravel()
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        raise ValueError("gradient is zero; nothing to solve")
    if spec.theta1 == 0.0:
        return -solve_exact(h, g)

    target = spec.theta1 * gnorm
    budget = min(spec.max_iters, g.size + 5)
    for p, res in _cg_iterates(h, g, budget):
        if res <= target and verify_inexact(h, g, p, spec).ok:
            return p
    p = -solve_exact(h, g)
    if not verify_inexact(h, g, p, spec).ok:
        raise NotPositiveDefiniteError("exact fallback violates the descent contract")
    return p


def verify_inexact(h, g, p, spec: InexactnessSpec) -> InexactDiagnostics:
    """Check both acceptance conditions; the two ratios feed solver traces.

    residual_ratio = ||Hp + g|| / ||g||  (condition (a): <= theta1)
    descent_ratio  = -p'g / p'Hp         (condition (b): >= 1 - theta2)

    A theta1 of zero means "numerically exact" and is checked against the
    exact-solve residual contract rather than a literal zero, which floating
    point cannot attain.
    """
    g = np.asarray(g, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return InexactDiagnostics(ok=False, residual_ratio=np.inf, descent_ratio=0.0)
    hp = h @ p
    residual_ratio = float(np.linalg.norm(hp + g)) / gnorm
    php = float(p @ hp)
    pg = float(p @ g)
    descent_ratio = -pg / php if php > 0 else 0.0
    ok = residual_ratio <= max(spec.theta1, EXACT_RESIDUAL_RTOL) \
        and pg <= -(1.0 - spec.theta2) * php
    return InexactDiagnostics(ok=ok, residual_ratio=residual_ratio,
                              descent_ratio=descent_ratio)
