"""Sparse GP surrogate giving a predictive std for any point predictor.

The surrogate never predicts a mean.  It only scores how far a standardized
input history lies from ``M`` inducing trajectories (the leading principal
directions of the standardized training inputs) and converts that into a
scalar predictive standard deviation shared by every output coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import Dataset, standardize_trajectory
from .errors import ConfigError, DataError, NumericError

PARAM_FLOOR = 1e-4
VAR_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    """RBF output scale ``l1`` (meters) and length scale ``l2``."""

    l1: float = 1.0
    l2: float = 1.0

    def __post_init__(self):
        if not (self.l1 >= PARAM_FLOOR and self.l2 >= PARAM_FLOOR):
            raise ConfigError(f"kernel scales must be >= {PARAM_FLOOR}: {self}")


def sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Frobenius distances between two stacks of trajectories.

    ``a`` is ``(N, L, D)`` or ``(L, D)``, ``b`` likewise; the result has the
    leading shapes of ``a`` then ``b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:]:
        raise DataError(f"shape mismatch {a.shape[-2:]} vs {b.shape[-2:]}")
    fa = a.reshape(a.shape[:-2] + (1,) * (b.ndim - 2) + (-1,))
    fb = b.reshape(b.shape[:-2] + (-1,))
    return np.sum((fa - fb) ** 2, axis=-1)


def kernel(x: np.ndarray, x2: np.ndarray, p: KernelParams) -> float | np.ndarray:
    """``l1^2 * exp(-|x - x2|_F^2 / (2 l2^2))``; broadcasts over stacks."""
    return p.l1**2 * np.exp(-sq_dist(x, x2) / (2.0 * p.l2**2))


def principal_directions(features: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``m`` eigenvectors of the feature covariance of ``features`` (N, P).

    Returns ``(vectors, eigenvalues)`` with vectors as rows of unit norm, the
    eigenvalues sorted non-increasing, and each vector's sign chosen so its
    largest-magnitude component is positive.
    """
    features = np.asarray(features, dtype=float)
    n, p = features.shape
    if n < 2:
        raise DataError("PCA needs at least two samples")
    if not 1 <= m <= min(n, p):
        raise ConfigError(f"M must lie in [1, {min(n, p)}], got {m}")
    centered = features - features.mean(axis=0)
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:m]
    vecs = evecs[:, order].T.copy()
    for v in vecs:
        if v[np.argmax(np.abs(v))] < 0:
            v *= -1.0
    return vecs, evals[order]


def fit_inducing(train: Dataset, m: int) -> tuple[np.ndarray, np.ndarray]:
    """``m`` inducing trajectories ``(m, L, D)`` and their PCA eigenvalues."""
    if len(train) < 2:
        raise DataError("fit_inducing needs at least two training samples")
    obs = standardize_trajectory(train.observed_array())
    n, L, D = obs.shape
    vecs, evals = principal_directions(obs.reshape(n, L * D), m)
    return vecs.reshape(m, L, D), evals


@dataclass(frozen=True, eq=False)
class GprSurrogate:
    """Inducing-point GP variance model with parameters ``(l1, l2, noise_std)``.

    The Cholesky factor of ``K_MM + noise_std^2 I`` is computed on
    construction, so every parameter change goes through :meth:`with_params`.
    """

    kernel: KernelParams
    noise_std: float
    inducing: np.ndarray
    _factor: tuple = field(init=False, repr=False)

    def __post_init__(self):
        ind = np.array(self.inducing, dtype=float)
        if ind.ndim != 3 or ind.shape[0] < 1:
            raise ConfigError(f"inducing must be (M, L, D) with M >= 1, got {ind.shape}")
        ind.setflags(write=False)
        object.__setattr__(self, "inducing", ind)
        if not self.noise_std >= 0.0 or not math.isfinite(self.noise_std):
            raise ConfigError(f"noise_std must be finite and nonnegative: {self.noise_std}")
        kmm = self.gram()
        if not np.allclose(kmm, kmm.T, rtol=0, atol=1e-12):
            raise NumericError("inducing Gram matrix is not symmetric")
        try:
            factor = cho_factor(kmm + self.noise_std**2 * np.eye(self.m), lower=True)
        except LinAlgError as exc:
            raise NumericError(f"K_MM + noise^2 I is not positive definite: {exc}") from None
        object.__setattr__(self, "_factor", factor)

    @property
    def m(self) -> int:
        return self.inducing.shape[0]

    @property
    def input_shape(self) -> tuple[int, int]:
        return self.inducing.shape[1], self.inducing.shape[2]

    def gram(self) -> np.ndarray:
        return kernel(self.inducing, self.inducing, self.kernel)

    def with_params(self, l1: float, l2: float, noise_std: float) -> "GprSurrogate":
        return replace(self, kernel=KernelParams(float(l1), float(l2)), noise_std=float(noise_std))

    def cross(self, x_std: np.ndarray) -> np.ndarray:
        """Kernel values between standardized input(s) and the inducing set."""
        return kernel(x_std, self.inducing, self.kernel)

    def mean_kernel(self, x_std: np.ndarray) -> np.ndarray:
        """Average kernel value against the inducing set (one per input)."""
        return self.cross(x_std).mean(axis=-1)

    def predictive_var(self, x_std: np.ndarray) -> np.ndarray:
        """Unclamped ``k(x,x) - K_xM [K_MM + s^2 I]^-1 K_xM^T``."""
        kxm = self.cross(x_std)
        sol = cho_solve(self._factor, np.atleast_2d(kxm).T)
        quad = np.einsum("ij,ji->i", np.atleast_2d(kxm), sol)
        var = self.kernel.l1**2 - quad
        return var.reshape(np.shape(kxm)[:-1])

    def sigma(self, observed: np.ndarray) -> np.ndarray | float:
        """Predictive std for raw (unstandardized) observed trajectories."""
        return predictive_std(self, standardize_trajectory(observed))


def predictive_std(g: GprSurrogate, x_std: np.ndarray) -> np.ndarray | float:
    """Predictive std for standardized input(s), variance floored at 1e-6."""
    var = g.predictive_var(x_std)
    out = np.sqrt(np.maximum(var, VAR_FLOOR))
    return float(out) if np.ndim(out) == 0 else out


def initial_surrogate(inducing: np.ndarray, l1: float = 1.0, l2: float | None = None,
                      noise_std: float = 0.1) -> GprSurrogate:
    """Surrogate with default starting parameters.

    The default length scale is ``sqrt(L * D)``, the typical Frobenius norm
    of a standardized input, so initial kernel values are O(1).
    """
    inducing = np.asarray(inducing, dtype=float)
    if l2 is None:
        l2 = math.sqrt(inducing.shape[1] * inducing.shape[2])
    return GprSurrogate(KernelParams(l1, l2), noise_std, inducing)


# --------------------------------------------------------------------------
# Loss on residual magnitude
# --------------------------------------------------------------------------


def loss_l2(g: GprSurrogate, residual_sq_mean, kbar) -> float:
    """Scalar-variance Gaussian NLL averaged over samples.

    Each sample contributes ``0.5 * r / v + 0.5 * log v + 0.5 * log(2 pi)``
    with ``r`` its mean squared residual and ``v = kbar + noise_std^2``.
    """
    r = np.asarray(residual_sq_mean, dtype=float)
    v = np.asarray(kbar, dtype=float) + g.noise_std**2
    return float(np.mean(0.5 * r / v + 0.5 * np.log(v) + 0.5 * LOG_2PI))


@dataclass(frozen=True)
class L2Gradient:
    loss: float
    d_l1: float
    d_l2: float
    d_noise: float
    d_residuals: np.ndarray


def grad_l2(g: GprSurrogate, inputs_std: np.ndarray, residuals: np.ndarray,
            sq_dists: np.ndarray | None = None) -> L2Gradient:
    """Loss and closed-form gradients for a batch.

    Args:
        inputs_std: standardized observed trajectories, ``(N, L, D)``.
        residuals: ``y - f(x)`` per sample, ``(N, J, D)`` (any trailing shape).
        sq_dists: optional cached ``sq_dist(inputs_std, g.inducing)``.
    """
    inputs_std = np.asarray(inputs_std, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    n = inputs_std.shape[0]
    if n == 0:
        raise DataError("grad_l2 needs a nonempty batch")
    l1, l2, s = g.kernel.l1, g.kernel.l2, g.noise_std
    d2 = sq_dist(inputs_std, g.inducing) if sq_dists is None else sq_dists  # (N, M)
    rbf = np.exp(-d2 / (2.0 * l2**2))
    kbar = l1**2 * rbf.mean(axis=1)
    v = kbar + s**2
    flat = residuals.reshape(n, -1)
    r = np.mean(flat**2, axis=1)
    loss = float(np.mean(0.5 * r / v + 0.5 * np.log(v) + 0.5 * LOG_2PI))

    dv = (0.5 / v - 0.5 * r / v**2) / n
    dkbar_dl1 = 2.0 * kbar / l1
    dkbar_dl2 = l1**2 * np.mean(rbf * d2, axis=1) / l2**3
    d_res = (flat / (v[:, None] * flat.shape[1] * n)).reshape(residuals.shape)
    return L2Gradient(
        loss=loss,
        d_l1=float(np.sum(dv * dkbar_dl1)),
        d_l2=float(np.sum(dv * dkbar_dl2)),
        d_noise=float(np.sum(dv) * 2.0 * s),
        d_residuals=d_res,
    )
