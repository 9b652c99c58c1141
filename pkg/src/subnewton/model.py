"""Finite-sum GLM objectives with component-wise calculus and curvature constants.

The objective has the form

    F(x) = (1/n) sum_i f_i(x),
    f_i(x) = Phi(a_i'x) - b_i a_i'x + (reg/2) ||x||^2,

where Phi is the cumulant generating function of the family.  The l2
penalty is folded into every component so that the finite-sum structure is
exact: component means reproduce the full gradient/Hessian bit-for-bit.

Three families are provided: ridge regression (Phi(t) = t^2/2), logistic
regression (Phi(t) = ln(1+e^t)) and Poisson regression (Phi(t) = e^t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

# exp() arguments are clamped here; e^700 is just below the float64 overflow
# edge, so individual terms stay finite and only aggregate overflow can occur.
EXP_CLAMP = 700.0

# Hard ceiling for per-component gradient-norm bounds (Poisson blows up in
# exp(||x||^2/2)); callers compare against this to detect saturation.
BOUND_CAP = 1e300

# Exact smallest-eigenvalue computation of the data Gram term is only done up
# to this dimension; above it the strong-convexity estimate falls back to reg.
EXACT_GAMMA_MAX_DIM = 2000


class EvaluationError(ArithmeticError):
    """Objective or derivative evaluation produced a non-finite value."""


def _sigmoid(t):
    # branch on sign to avoid overflow in exp for large |t|
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class RidgeFamily:
    name = "ridge"
    curvature_hi = 1.0  # sup of Phi'' over R
    curvature_lo = 1.0  # inf of Phi'' over R

    @staticmethod
    def phi(t):
        return 0.5 * t * t

    @staticmethod
    def phi_prime(t):
        return np.asarray(t, dtype=float)

    @staticmethod
    def phi_double(t):
        return np.ones_like(t, dtype=float)

    @staticmethod
    def validate_labels(b):
        if not np.all(np.isfinite(b)):
            raise ValueError("ridge labels must be finite reals")


class LogisticFamily:
    name = "logistic"
    curvature_hi = 0.25
    curvature_lo = 0.0

    @staticmethod
    def phi(t):
        # ln(1+e^t) = max(t,0) + log1p(e^{-|t|})
        return np.logaddexp(0.0, t)

    @staticmethod
    def phi_prime(t):
        return _sigmoid(np.asarray(t, dtype=float))

    @staticmethod
    def phi_double(t):
        s = _sigmoid(np.asarray(t, dtype=float))
        return s * (1.0 - s)

    @staticmethod
    def validate_labels(b):
        if not np.all(np.isin(b, (0.0, 1.0))):
            raise ValueError("logistic labels must lie in {0, 1}")


class PoissonFamily:
    name = "poisson"
    curvature_hi = math.inf  # unbounded globally; bounded on a ball by caller
    curvature_lo = 0.0

    @staticmethod
    def phi(t):
        return np.exp(np.minimum(t, EXP_CLAMP))

    phi_prime = phi
    phi_double = phi

    @staticmethod
    def validate_labels(b):
        if np.any(b < 0) or not np.all(b == np.floor(b)):
            raise ValueError("poisson labels must be nonnegative integers")


FAMILIES = {
    "ridge": RidgeFamily,
    "logistic": LogisticFamily,
    "poisson": PoissonFamily,
}


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix plus labels.

    ``features`` is (n, p), dense ndarray or CSR sparse; ``labels`` is (n,).
    """

    features: object
    labels: np.ndarray

    def __post_init__(self):
        feats = self.features
        if sp.issparse(feats):
            object.__setattr__(self, "features", feats.tocsr())
        else:
            feats = np.asarray(feats, dtype=float)
            if feats.ndim != 2:
                raise ValueError("features must be a 2-D array")
            if not np.all(np.isfinite(feats)):
                raise ValueError("features contain non-finite entries")
            object.__setattr__(self, "features", feats)
        labels = np.asarray(self.labels, dtype=float).ravel()
        object.__setattr__(self, "labels", labels)
        n, p = self.features.shape
        if n < 1 or p < 1:
            raise ValueError("need n >= 1 rows and p >= 1 columns")
        if labels.shape[0] != n:
            raise ValueError(f"{labels.shape[0]} labels for {n} rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def storage(self) -> str:
        return "sparse" if sp.issparse(self.features) else "dense"

    def row_norms(self) -> np.ndarray:
        a = self.features
        if sp.issparse(a):
            return np.sqrt(np.asarray(a.multiply(a).sum(axis=1)).ravel())
        return np.linalg.norm(a, axis=1)

    def rows_dense(self, idx) -> np.ndarray:
        a = self.features[idx]
        return a.toarray() if sp.issparse(a) else a


@dataclass
class ConditionEstimates:
    """Curvature constants of a finite-sum objective.

    gamma is a strong-convexity lower bound of the full Hessian, big_k a
    smoothness upper bound, and per_component_k holds one smoothness bound
    per f_i.  khat(q) is the mean of the q largest per-component bounds; the
    condition numbers kappa = K/gamma and kappa_q = khat(q)/gamma follow.
    """

    gamma: float
    big_k: float
    per_component_k: np.ndarray
    lipschitz_l: float | None = None
    _prefix_means: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ks = np.asarray(self.per_component_k, dtype=float)
        order = np.sort(ks)[::-1]
        self.per_component_k = ks
        self._prefix_means = np.cumsum(order) / np.arange(1, ks.size + 1)

    @property
    def n(self) -> int:
        return self.per_component_k.size

    @property
    def strongly_convex(self) -> bool:
        return self.gamma > 0.0

    def khat(self, q: int) -> float:
        """Mean of the q largest per-component smoothness constants."""
        if not 1 <= q <= self.n:
            raise ValueError(f"q must be in [1, {self.n}], got {q}")
        return float(self._prefix_means[q - 1])

    @property
    def kappa(self) -> float:
        return self.big_k / self.gamma if self.gamma > 0 else math.inf

    @property
    def kappa1(self) -> float:
        return self.khat(1) / self.gamma if self.gamma > 0 else math.inf

    def kappa_q(self, q: int) -> float:
        return self.khat(q) / self.gamma if self.gamma > 0 else math.inf

    def kappa_tilde(self, sample_size: int, replacement: str) -> float:
        """Sampling condition number: kappa_1 when drawing with replacement,
        kappa_{|S|} without."""
        if replacement == "with":
            return self.kappa1
        if replacement == "without":
            return self.kappa_q(min(sample_size, self.n))
        raise ValueError(f"replacement must be 'with' or 'without', got {replacement!r}")


class ObjectiveModel:
    """A GLM finite-sum objective bound to a dataset.

    Per-dataset constants used by the gradient-norm bound are computed once
    at construction, so evaluating the bound at an iterate only costs ||x||.
    """

    def __init__(self, dataset: Dataset, family: str, reg: float = 0.0):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}; pick from {sorted(FAMILIES)}")
        if reg < 0:
            raise ValueError("l2 penalty weight must be nonnegative")
        self.dataset = dataset
        self.family = family
        self._fam = FAMILIES[family]
        self.reg = float(reg)
        self._fam.validate_labels(dataset.labels)

        norms = dataset.row_norms()
        absb = np.abs(dataset.labels)
        self._row_norms = norms
        self._max_row_norm = float(norms.max())
        self._max_bnorm = float((absb * norms).max())
        self._max_sq_plus_reg = float((norms**2).max() + self.reg)
        self._max_one_plus_b_norm = float(((1.0 + absb) * norms).max())
        # log of max_i ||a_i|| e^{||a_i||^2 / 2}, kept in log space to defer overflow
        with np.errstate(divide="ignore"):
            self._log_poisson_row = float(
                np.max(np.where(norms > 0, np.log(norms), -np.inf) + 0.5 * norms**2)
            )
        self.bound_cap = BOUND_CAP

    # -- scalar objective ------------------------------------------------

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def p(self) -> int:
        return self.dataset.p

    def _margins(self, x):
        t = self.dataset.features @ x
        return np.asarray(t).ravel()

    def value(self, x: np.ndarray) -> float:
        """F(x) = mean(Phi(a_i'x) - b_i a_i'x) + (reg/2)||x||^2."""
        x = self._check_x(x)
        with np.errstate(over="ignore", invalid="ignore"):
            t = self._margins(x)
            b = self.dataset.labels
            val = float(np.mean(self._fam.phi(t) - b * t)) \
                + 0.5 * self.reg * float(x @ x)
        if not math.isfinite(val):
            raise EvaluationError(f"objective value is non-finite at ||x||={np.linalg.norm(x):.3g}")
        return val

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """mean_i (Phi'(a_i'x) - b_i) a_i + reg * x."""
        x = self._check_x(x)
        t = self._margins(x)
        w = self._fam.phi_prime(t) - self.dataset.labels
        g = np.asarray(self.dataset.features.T @ w).ravel() / self.n + self.reg * x
        if not np.all(np.isfinite(g)):
            raise EvaluationError("gradient is non-finite")
        return g

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        """Gradient of the single component f_i; the mean over all i equals
        the full gradient."""
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range [0, {self.n})")
        x = self._check_x(x)
        a = self.dataset.rows_dense([i]).ravel()
        t = np.array([a @ x])
        w = float(self._fam.phi_prime(t)[0] - self.dataset.labels[i])
        return w * a + self.reg * x

    def component_hessian_accumulate(self, indices, x: np.ndarray) -> np.ndarray:
        """(1/|S|) sum_{j in S} Phi''(a_j'x) a_j a_j' + reg * I.

        Accumulation keeps the given index order, so identical index
        sequences produce bit-identical matrices.  S = 0..n-1 reproduces the
        full Hessian exactly.
        """
        idx = np.asarray(indices, dtype=int).ravel()
        if idx.size == 0:
            raise ValueError("empty sample")
        if idx.min() < 0 or idx.max() >= self.n:
            raise IndexError("sample index out of range")
        x = self._check_x(x)
        a_s = self.dataset.features[idx]
        t = np.asarray(a_s @ x).ravel()
        w = self._fam.phi_double(t)
        if sp.issparse(a_s):
            h = np.asarray(((a_s.multiply(w[:, None])).T @ a_s).todense(), dtype=float)
        else:
            h = (a_s * w[:, None]).T @ a_s
        h /= idx.size
        h[np.diag_indices_from(h)] += self.reg
        if not np.all(np.isfinite(h)):
            raise EvaluationError("hessian accumulation is non-finite")
        return h

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Full Hessian; same accumulation path as the all-indices sample."""
        return self.component_hessian_accumulate(np.arange(self.n), x)

    # -- bounds and constants ---------------------------------------------

    def gradient_norm_bound(self, x: np.ndarray) -> float:
        """G(x) with ||grad f_i(x)|| <= G(x) for every component.

        Family-specific closed forms over precomputed data constants; the
        Poisson bound saturates at ``bound_cap`` instead of overflowing.
        """
        x = self._check_x(x)
        xnorm = float(np.linalg.norm(x))
        if self.family == "ridge":
            return xnorm * self._max_sq_plus_reg + self._max_bnorm
        if self.family == "logistic":
            return self.reg * xnorm + self._max_one_plus_b_norm
        log_mid = 0.5 * xnorm**2 + self._log_poisson_row
        mid = math.exp(log_mid) if log_mid < math.log(BOUND_CAP) else BOUND_CAP
        return min(self.reg * xnorm + mid + self._max_bnorm, self.bound_cap)

    def curvature_constants(self, domain_radius: float | None = None) -> ConditionEstimates:
        """Per-component and aggregate curvature bounds.

        K_i = c_i ||a_i||^2 + reg with c_i the family's Phi'' bound; for
        Poisson, Phi'' is unbounded globally and is bounded over the ball
        ||x|| <= domain_radius instead (default radius 1, matching a start
        at the origin).  Guarantees then hold while iterates stay inside.

        gamma = reg + lambda_min of the data term when Phi'' has a positive
        global lower bound (ridge); otherwise gamma = reg.  The exact
        eigenvalue is only computed for p <= 2000.
        """
        norms = self._row_norms
        if self.family == "poisson":
            radius = 1.0 if domain_radius is None else float(domain_radius)
            if radius < 0:
                raise ValueError("domain radius must be nonnegative")
            coeff = np.exp(np.minimum(norms * radius, EXP_CLAMP))
        else:
            coeff = np.full(self.n, self._fam.curvature_hi)
        per_k = coeff * norms**2 + self.reg

        gamma = self.reg
        if self._fam.curvature_lo > 0 and self.p <= EXACT_GAMMA_MAX_DIM:
            gram = self._data_gram(np.full(self.n, self._fam.curvature_lo))
            eigs = np.linalg.eigvalsh(gram)
            lo, hi = float(eigs[0]), float(eigs[-1])
            # eigenvalues at rounding level of the top one are rank deficiency
            if lo > 1e-12 * max(1.0, hi):
                gamma = self.reg + lo

        if self.p <= EXACT_GAMMA_MAX_DIM:
            big_k = self.reg + float(np.linalg.eigvalsh(self._data_gram(coeff))[-1])
        else:
            big_k = float(np.mean(per_k))  # valid upper bound, avoids a p x p eigensolve
        return ConditionEstimates(gamma=gamma, big_k=big_k, per_component_k=per_k)

    def _data_gram(self, weights: np.ndarray) -> np.ndarray:
        a = self.dataset.features
        if sp.issparse(a):
            g = np.asarray(((a.multiply(weights[:, None])).T @ a).todense(), dtype=float)
        else:
            g = (a * weights[:, None]).T @ a
        return g / self.n

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.p:
            raise ValueError(f"iterate has dimension {x.shape[0]}, expected {self.p}")
        return x
