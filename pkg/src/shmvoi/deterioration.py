"""Power-law deterioration model ``D(t) = A t^B`` and its prior.

Parameter vectors are laid out as ``[A, B]`` (scour) or
``[A1, B1, A2, B2]`` (corrosion). Inference works in a transformed space
``z`` where every lognormal entry is replaced by its logarithm; the prior
in ``z`` is then an independent Gaussian.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError


def lognormal_from_mean_cv(mean: float, cv: float) -> tuple[float, float]:
    """Parameters (mu, sigma) of the underlying normal of a lognormal variable."""
    if not (mean > 0 and cv > 0):
        raise DomainError(f"need mean > 0 and cv > 0, got mean={mean}, cv={cv}")
    sigma = np.sqrt(np.log1p(cv**2))
    return float(np.log(mean) - 0.5 * sigma**2), float(sigma)


@dataclass(frozen=True)
class Marginal:
    family: str  # "lognormal" | "normal"
    mean: float
    cv: float

    def __post_init__(self):
        if self.family not in ("lognormal", "normal"):
            raise DomainError(f"unsupported distribution family {self.family!r}")
        if not self.cv > 0:
            raise DomainError(f"cv must be positive, got {self.cv}")
        if self.family == "lognormal" and not self.mean > 0:
            raise DomainError(f"lognormal mean must be positive, got {self.mean}")

    def z_moments(self) -> tuple[float, float]:
        """Mean and std of the transformed (Gaussian) variable."""
        if self.family == "lognormal":
            return lognormal_from_mean_cv(self.mean, self.cv)
        return self.mean, abs(self.mean) * self.cv


@dataclass(frozen=True)
class PriorSpec:
    """Independent marginals, one per entry of the parameter vector."""

    marginals: tuple[Marginal, ...]
    names: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def n_hotspots(self) -> int:
        return self.dim // 2

    @cached_property
    def log_mask(self) -> np.ndarray:
        return np.array([m.family == "lognormal" for m in self.marginals])

    @cached_property
    def z_mean(self) -> np.ndarray:
        return np.array([m.z_moments()[0] for m in self.marginals])

    @cached_property
    def z_std(self) -> np.ndarray:
        return np.array([m.z_moments()[1] for m in self.marginals])

    def to_natural(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.where(self.log_mask, np.exp(z), z)

    def to_z(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        mask = np.broadcast_to(self.log_mask, theta.shape)
        out = theta.copy()
        out[mask] = np.log(theta[mask])
        return out

    def log_density_z(self, z: np.ndarray) -> np.ndarray:
        """Gaussian log-density of the prior in transformed space (last axis = parameters)."""
        r = (np.asarray(z) - self.z_mean) / self.z_std
        return -0.5 * np.sum(r**2, axis=-1) - np.sum(np.log(self.z_std)) - 0.5 * self.dim * np.log(2 * np.pi)

    def sample(self, n: int, seed=None) -> np.ndarray:
        return sample_prior(self, n, seed)


SCOUR_PRIOR = PriorSpec(
    marginals=(Marginal("lognormal", 7.955e-4, 0.5), Marginal("normal", 2.0, 0.15)),
    names=("A", "B"),
)
CORROSION_PRIOR = PriorSpec(
    marginals=(
        Marginal("lognormal", 0.506, 0.4), Marginal("normal", 0.5, 0.15),
        Marginal("lognormal", 0.506, 0.4), Marginal("normal", 0.5, 0.15),
    ),
    names=("A1", "B1", "A2", "B2"),
)


def default_prior(case: str) -> PriorSpec:
    return {"scour": SCOUR_PRIOR, "corrosion": CORROSION_PRIOR}[case]


def sample_prior(spec: PriorSpec, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. parameter vectors (rows) in natural space."""
    if n < 1:
        raise DomainError(f"need n >= 1 samples, got {n}")
    rng = np.random.default_rng(seed)
    z = spec.z_mean + spec.z_std * rng.standard_normal((n, spec.dim))
    return spec.to_natural(z)


def evaluate(theta, t) -> np.ndarray:
    """Damage ``D_j(t) = A_j t^B_j`` per hotspot.

    ``theta`` has shape (..., 2 k) and ``t`` is a scalar or 1-D array of
    times. The result has shape (..., len(t), k); scalar ``t`` drops the
    time axis.
    """
    theta = np.asarray(theta, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time must be non-negative")
    A = theta[..., 0::2]
    B = theta[..., 1::2]
    tt = np.atleast_1d(t_arr)[:, None]
    with np.errstate(divide="ignore"):
        D = A[..., None, :] * tt ** B[..., None, :]
    if t_arr.ndim == 0:
        D = D[..., 0, :]
    return D


def ln_damage_moments(spec: PriorSpec, t: float, hotspot: int = 0) -> tuple[float, float]:
    """Closed-form mean and std of ln D(t) (ln A Gaussian, B Gaussian, independent)."""
    mA, sA = spec.marginals[2 * hotspot].z_moments()
    mB, sB = spec.marginals[2 * hotspot + 1].z_moments()
    lt = np.log(t)
    return mA + mB * lt, float(np.hypot(sA, sB * lt))
