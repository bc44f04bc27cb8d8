"""Empirical-risk objectives with deterministic and minibatch gradient oracles."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``A`` (dense ndarray or CSR) with labels ``b``."""

    A: object
    b: np.ndarray

    def __post_init__(self):
        A = self.A
        if sp.issparse(A):
            A = sp.csr_matrix(A, dtype=float)
            if A.nnz and not np.all(np.isfinite(A.data)):
                raise ConfigurationError("design matrix contains non-finite entries")
        else:
            A = np.asarray(A, dtype=float)
            if A.ndim != 2:
                raise ConfigurationError("design matrix must be two-dimensional")
            if not np.all(np.isfinite(A)):
                raise ConfigurationError("design matrix contains non-finite entries")
        b = np.asarray(self.b, dtype=float).ravel()
        if b.shape[0] != A.shape[0]:
            raise ConfigurationError(f"{A.shape[0]} rows but {b.shape[0]} labels")
        if not np.all(np.isfinite(b)):
            raise ConfigurationError("labels contain non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    def row_sq_norms(self) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.A.multiply(self.A).sum(axis=1)).ravel()
        return np.einsum("ij,ij->i", self.A, self.A)

    def rows(self, idx):
        return self.A[idx]


class Objective:
    """Base class: ``psi(x)`` with gradient, minibatch gradient and curvature data.

    Attributes
    ----------
    mu : float
        Lower-curvature constant, ``psi(x) >= psi(y) + <psi'(y), x-y> - mu/2 ||x-y||^2``.
    smooth_L : float
        Upper bound on the gradient Lipschitz constant.
    nonsmooth_M : float
        Nonsmooth part of the upper model (0 for the smooth losses here).
    sigma : float
        Bound on the standard deviation of a single-sample stochastic gradient.
    """

    kind = "custom"
    mu = 0.0
    smooth_L = 0.0
    nonsmooth_M = 0.0
    sigma = 0.0
    n: Optional[int] = None
    d: int = 0

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad(self, x, batch) -> np.ndarray:
        return self.grad(x)

    def sample_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform minibatch indices, drawn with replacement."""
        if self.n is None:
            raise ConfigurationError("this objective has no finite sample set to draw minibatches from")
        if size < 1:
            raise ConfigurationError("batch size must be at least 1")
        return rng.integers(0, self.n, size=size)

    def _check_dim(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ConfigurationError(f"expected a vector of length {self.d}, got shape {x.shape}")
        return x

    def describe(self) -> dict:
        return {"kind": self.kind, "mu": self.mu, "L": self.smooth_L, "M": self.nonsmooth_M, "sigma": self.sigma}


class _EmpiricalLoss(Objective):
    def __init__(self, data: Dataset, sigma: Optional[float] = None):
        self.data = data
        self.n, self.d = data.n, data.d
        self._row_sq = data.row_sq_norms()
        self.smooth_L = self._lipschitz_bound()
        self.sigma = self._sigma_bound() if sigma is None else float(sigma)

    def _check_batch(self, batch):
        batch = np.asarray(batch, dtype=np.intp).ravel()
        if batch.size == 0:
            raise ConfigurationError("empty minibatch")
        if batch.min() < 0 or batch.max() >= self.n:
            raise ConfigurationError(f"minibatch indices must lie in [0, {self.n})")
        return batch

    def _margins(self, A, x):
        return np.asarray(A @ x).ravel()

    def _backproject(self, A, r):
        return np.asarray(A.T @ r).ravel()

    def value(self, x) -> float:
        x = self._check_dim(x)
        return self._loss(self._margins(self.data.A, x), self.data.b)

    def grad(self, x) -> np.ndarray:
        x = self._check_dim(x)
        A, b = self.data.A, self.data.b
        return self._backproject(A, self._dloss(self._margins(A, x), b)) / self.n

    def stoch_grad(self, x, batch) -> np.ndarray:
        """Average of per-sample gradients over ``batch`` (repeats allowed)."""
        x = self._check_dim(x)
        batch = self._check_batch(batch)
        A = self.data.rows(batch)
        b = self.data.b[batch]
        return self._backproject(A, self._dloss(self._margins(A, x), b)) / batch.size


class LogisticLoss(_EmpiricalLoss):
    """Mean of ``log(1 + exp(-b_i a_i^T x))`` with labels in {-1, +1}."""

    kind = "logistic"

    def __init__(self, data: Dataset, sigma: Optional[float] = None):
        labels = np.unique(data.b)
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ConfigurationError(f"logistic loss needs labels in {{-1, +1}}, found {labels[:5]}")
        super().__init__(data, sigma)

    def _lipschitz_bound(self):
        # row-norm bound on ||A||^2/(4n), avoids an SVD
        return float(np.sum(self._row_sq)) / (4.0 * self.n)

    def _sigma_bound(self):
        # each per-sample gradient has norm <= ||a_i||, and variance <= second moment
        return float(np.sqrt(np.max(self._row_sq))) if self.n else 0.0

    @staticmethod
    def _loss(z, b):
        return float(np.mean(np.logaddexp(0.0, -b * z)))

    @staticmethod
    def _dloss(z, b):
        return -b * expit(-b * z)


class SquaredLoss(_EmpiricalLoss):
    """Mean of ``(b_i - a_i^T x)^2``."""

    kind = "squared"

    def _lipschitz_bound(self):
        return 2.0 * float(np.sum(self._row_sq)) / self.n

    def _sigma_bound(self):
        # unbounded in general; report the spread of per-sample gradients at the origin
        b = self.data.b
        mean_g = self._backproject(self.data.A, -2.0 * b) / self.n
        var = 4.0 * float(np.mean(b * b * self._row_sq)) - float(np.dot(mean_g, mean_g))
        return float(np.sqrt(max(var, 0.0)))

    @staticmethod
    def _loss(z, b):
        return float(np.mean((b - z) ** 2))

    @staticmethod
    def _dloss(z, b):
        return -2.0 * (b - z)


class CustomObjective(Objective):
    """User-supplied ``value``/``grad`` callbacks.

    The curvature constants are taken on trust; nothing here can verify them.
    An optional ``stoch_grad_fn(x, rng)`` supplies a stochastic oracle.
    """

    kind = "custom"

    def __init__(
        self,
        value_fn: Callable[[np.ndarray], float],
        grad_fn: Callable[[np.ndarray], np.ndarray],
        d: int,
        mu: float = 0.0,
        smooth_L: float = 0.0,
        nonsmooth_M: float = 0.0,
        sigma: float = 0.0,
        stoch_grad_fn: Optional[Callable] = None,
    ):
        for name, val in (("mu", mu), ("smooth_L", smooth_L), ("nonsmooth_M", nonsmooth_M), ("sigma", sigma)):
            if val < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        self._value, self._grad, self._stoch = value_fn, grad_fn, stoch_grad_fn
        self.d = int(d)
        self.mu, self.smooth_L, self.nonsmooth_M, self.sigma = float(mu), float(smooth_L), float(nonsmooth_M), float(sigma)

    def value(self, x) -> float:
        return float(self._value(self._check_dim(x)))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self._grad(self._check_dim(x)), dtype=float)

    def stoch_grad(self, x, batch) -> np.ndarray:
        """``batch`` is forwarded as the random state when a stochastic callback exists."""
        if self._stoch is None:
            return self.grad(x)
        return np.asarray(self._stoch(self._check_dim(x), batch), dtype=float)


def make_objective(kind: str, data: Dataset) -> Objective:
    if kind == "logistic":
        return LogisticLoss(data)
    if kind == "squared":
        return SquaredLoss(data)
    raise ConfigurationError(f"unknown loss {kind!r} (expected logistic or squared)")
