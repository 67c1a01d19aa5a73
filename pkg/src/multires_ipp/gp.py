"""Scalar-input Gaussian-process regression with a squared-exponential kernel.

Zero prior mean. The noise variance is added to the diagonal of the
training covariance only; cross-covariances are noise free.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4
_LOG_2PI = math.log(2.0 * math.pi)


class GPError(ValueError):
    pass


class SingularKernelError(GPError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    length_scale: float = 0.01
    signal_variance: float = 1.0
    noise_variance: float = 0.2

    def __post_init__(self):
        if not self.length_scale > 0:
            raise GPError("length_scale must be > 0")
        if not self.signal_variance > 0:
            raise GPError("signal_variance must be > 0")
        if not self.noise_variance >= 0:
            raise GPError("noise_variance must be >= 0")

    def to_dict(self) -> dict:
        return {"length_scale": self.length_scale, "signal_variance": self.signal_variance,
                "noise_variance": self.noise_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(float(d["length_scale"]), float(d["signal_variance"]), float(d["noise_variance"]))


@dataclass(frozen=True)
class SearchSpace:
    """Grid of candidate hyperparameters for exhaustive LML search."""

    length_scales: tuple[float, ...] = tuple(np.logspace(-6, 1, 13).tolist())
    signal_variances: tuple[float, ...] = (0.25, 1.0, 4.0)
    noise_variances: tuple[float, ...] = (0.01, 0.05, 0.2)

    def candidates(self):
        # sorted so the first maximum found is the documented tie-break winner
        for ell, sf2, sn2 in itertools.product(sorted(self.length_scales), sorted(self.signal_variances),
                                               sorted(self.noise_variances)):
            yield Hyperparams(ell, sf2, sn2)

    def __len__(self):
        return len(self.length_scales) * len(self.signal_variances) * len(self.noise_variances)


def kernel(xi, xj, hyper: Hyperparams) -> np.ndarray:
    """Noise-free SE covariance ``sf2 * exp(-0.5 * (xi - xj)^2 / ell^2)`` (broadcasting)."""
    d = np.subtract.outer(np.asarray(xi, float), np.asarray(xj, float))
    return hyper.signal_variance * np.exp(-0.5 * (d / hyper.length_scale) ** 2)


def train_covariance(X, hyper: Hyperparams) -> np.ndarray:
    X = np.asarray(X, float)
    return kernel(X, X, hyper) + hyper.noise_variance * np.eye(X.size)


def _cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_START
    eye = np.eye(K.shape[0])
    while jitter <= _JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise SingularKernelError(f"kernel matrix not positive definite even with jitter {_JITTER_MAX}")


@dataclass(frozen=True, eq=False)
class GpModel:
    X: np.ndarray
    y: np.ndarray
    hyper: Hyperparams
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return int(self.X.size)

    def predict(self, X_star) -> tuple[np.ndarray, np.ndarray]:
        return predict(self, X_star)

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "hyper": self.hyper.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GpModel":
        return fit(d["X"], d["y"], Hyperparams.from_dict(d["hyper"]))


def fit(X, y, hyper: Hyperparams) -> GpModel:
    """Factorize ``K(X, X) + sn2 I`` and cache ``alpha = K^-1 y``."""
    X = np.array(X, dtype=float).ravel()
    y = np.array(y, dtype=float).ravel()
    if X.size != y.size:
        raise GPError(f"|X| = {X.size} but |y| = {y.size}")
    if X.size == 0:
        raise GPError("cannot fit a GP to zero observations")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise GPError("non-finite training data")
    L, jitter = _cholesky(train_covariance(X, hyper))
    alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
    for arr in (X, y, L, alpha):
        arr.setflags(write=False)
    return GpModel(X, y, hyper, L, alpha, jitter)


def predict(model: GpModel, X_star) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (clamped, non-negative) variance of the latent function."""
    if not isinstance(model, GpModel):
        raise GPError("predict() needs a fitted GpModel")
    xs = np.atleast_1d(np.asarray(X_star, dtype=float))
    K_s = kernel(model.X, xs, model.hyper)
    mu = K_s.T @ model.alpha
    v = solve_triangular(model.chol, K_s, lower=True)
    var = model.hyper.signal_variance - np.einsum("ij,ij->j", v, v)
    return mu, np.maximum(var, 0.0)


def log_marginal_likelihood(X, y, hyper: Hyperparams) -> float:
    model = fit(X, y, hyper)
    return _lml(model)


def _lml(model: GpModel) -> float:
    half_logdet = float(np.log(np.diag(model.chol)).sum())
    return float(-0.5 * model.y @ model.alpha - half_logdet - 0.5 * model.n * _LOG_2PI)


def optimize_hyperparams(X, y, search_space: SearchSpace | None = None,
                         default: Hyperparams | None = None) -> Hyperparams:
    """Exhaustive grid search for the LML maximizer.

    With fewer than three observations the defaults are returned unchanged.
    Ties resolve to the smallest length scale, then signal variance, then noise.
    """
    space = search_space if search_space is not None else SearchSpace()
    if len(space) == 0:
        raise GPError("empty hyperparameter search space")
    default = default if default is not None else Hyperparams()
    X = np.asarray(X, float).ravel()
    if X.size < 3:
        return default
    best, best_lml = None, -math.inf
    for hyper in space.candidates():
        try:
            value = log_marginal_likelihood(X, y, hyper)
        except SingularKernelError:
            continue
        if value > best_lml:
            best, best_lml = hyper, value
    if best is None:
        raise SingularKernelError("no hyperparameter candidate gives a factorizable kernel")
    return best
