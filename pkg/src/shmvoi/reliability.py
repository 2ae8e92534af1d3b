"""Time-variant reliability with a Gumbel annual-maximum demand.

Capacities are dimensionless (undamaged capacity 1). With interval
failure probabilities ``p_j = Pr(S_j > R(D(theta, t_j)))`` the accumulated
probability of failure over years 1..i is ``1 - prod_j (1 - p_j)`` and the
hazard in year i is the failure probability in that year given survival
up to the year before.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .deterioration import evaluate
from .errors import ConfigurationError, DomainError
from .surrogate import GridTable, PolySurface, fit_poly_surface, grid_indices

EULER_GAMMA = float(np.euler_gamma)


@dataclass(frozen=True)
class DemandModel:
    """Gumbel (max) distribution of the annual maximum load effect."""

    location: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"Gumbel scale must be positive, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.location + EULER_GAMMA * self.scale

    @property
    def std(self) -> float:
        return np.pi * self.scale / np.sqrt(6.0)

    @property
    def cv(self) -> float:
        return self.std / self.mean

    def cdf(self, s):
        return np.exp(-np.exp(-(np.asarray(s, dtype=float) - self.location) / self.scale))

    def sf(self, s):
        """Exceedance probability, accurate deep in the upper tail."""
        return -np.expm1(-np.exp(-(np.asarray(s, dtype=float) - self.location) / self.scale))

    def sample(self, n: int, seed=None) -> np.ndarray:
        return np.random.default_rng(seed).gumbel(self.location, self.scale, n)


def calibrate_demand(target_pf0: float = 1e-6, cv: float = 0.20) -> DemandModel:
    """Gumbel parameters with coefficient of variation ``cv`` and
    exceedance probability ``target_pf0`` at unit (undamaged) capacity.

    With ``k = pi / (sqrt(6) cv) - gamma`` the CV constraint gives
    ``a = k b``; the tail constraint ``(1 - a) / b = y`` with
    ``y = -ln(-ln(1 - pf0))`` then fixes ``b = 1 / (k + y)``.
    """
    if not 0 < target_pf0 < 1:
        raise DomainError(f"target_pf0 must lie in (0, 1), got {target_pf0}")
    if not cv > 0:
        raise DomainError(f"cv must be positive, got {cv}")
    k = np.pi / (np.sqrt(6.0) * cv) - EULER_GAMMA
    y = -np.log(-np.log1p(-target_pf0))
    b = 1.0 / (k + y)
    return DemandModel(location=float(k * b), scale=float(b))


# ---------------------------------------------------------------- capacity


class TableCapacity:
    """Nearest-neighbour capacity lookup on a damage grid (clamped to its range)."""

    def __init__(self, table: GridTable):
        self.table = table
        self.values = table.quantity("capacity")[:, 0]
        self.dim = table.dim

    def __call__(self, D) -> np.ndarray:
        D = np.asarray(D, dtype=float)
        idx = grid_indices(self.table, D, clamp=True)
        return self.values[idx].reshape(D.shape[:-1])


class PolyCapacity:
    """Capacity as the minimum of polynomial fits of the per-section stress ratios."""

    def __init__(self, surface: PolySurface):
        self.surface = surface
        self.dim = surface.dim

    def __call__(self, D) -> np.ndarray:
        D = np.asarray(D, dtype=float)
        return self.surface(D.reshape(-1, self.dim)).min(axis=-1).reshape(D.shape[:-1])


def capacity_curve(table: GridTable, kind: str | None = None, degree: int = 4):
    """Default capacity model: lookup for scour, polynomial surfaces for corrosion."""
    kind = kind or ("table" if table.case == "scour" else "poly")
    if kind == "table":
        return TableCapacity(table)
    if kind == "poly":
        return PolyCapacity(fit_poly_surface(table, "capacity_parts", degree))
    raise ConfigurationError(f"unknown capacity model {kind!r}")


# ---------------------------------------------------------------- per-sample curves


def interval_failure_prob(theta, t, capacity, demand: DemandModel) -> np.ndarray:
    """``Pr(S > R(D(theta, t)))`` for each theta (..., d) and time(s) t >= 1."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 1):
        raise DomainError("interval failure probabilities are defined for t >= 1")
    return demand.sf(capacity(evaluate(theta, t)))


def accumulate(p: np.ndarray) -> np.ndarray:
    """``1 - cumprod(1 - p)`` along the last axis, evaluated in log space."""
    return -np.expm1(np.cumsum(np.log1p(-np.asarray(p, dtype=float)), axis=-1))


def conditional_accumulated(theta, years, capacity, demand: DemandModel) -> np.ndarray:
    """Accumulated failure probability given theta for every year in ``years`` (= 1..i)."""
    years = np.asarray(years, dtype=float)
    if years.size and not np.array_equal(years, np.arange(1, years.size + 1)):
        raise ConfigurationError("years must be contiguous starting at 1")
    return accumulate(interval_failure_prob(theta, years, capacity, demand))


def hazard_from_pf(pf: np.ndarray) -> np.ndarray:
    """``h_i = (P_i - P_{i-1}) / (1 - P_{i-1})`` with ``P_0 = 0`` (last axis = years)."""
    pf = np.asarray(pf, dtype=float)
    prev = np.concatenate([np.zeros(pf.shape[:-1] + (1,)), pf[..., :-1]], axis=-1)
    return (pf - prev) / (1.0 - prev)


def pf_from_hazard(h: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hazard_from_pf`."""
    return accumulate(h)


@dataclass(frozen=True)
class ReliabilityCurve:
    years: np.ndarray
    pf: np.ndarray
    hazard: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    source: str = "prior"
    n_samples: int = 0
    horizon: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.pf) < -1e-15) or np.any((self.pf < 0) | (self.pf > 1)):
            raise DomainError("accumulated failure probabilities must be non-decreasing in [0, 1]")

    def band_area(self) -> float:
        if self.lower is None:
            return 0.0
        return float(np.sum(self.upper - self.lower))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["year", "pf", "hazard", "pf_p05", "pf_p95"])
        for i, y in enumerate(self.years):
            lo = "" if self.lower is None else f"{self.lower[i]:.10e}"
            hi = "" if self.upper is None else f"{self.upper[i]:.10e}"
            w.writerow([int(y), f"{self.pf[i]:.10e}", f"{self.hazard[i]:.10e}", lo, hi])
        return buf.getvalue()


def sample_curves(samples, capacity, demand: DemandModel, T: int = 50) -> np.ndarray:
    """Per-sample accumulated failure probabilities, (n, T)."""
    return conditional_accumulated(np.atleast_2d(samples), np.arange(1, T + 1), capacity, demand)


def _curve(per_sample: np.ndarray, source: str, horizon: int, bands: bool) -> ReliabilityCurve:
    pf = per_sample.mean(axis=0)
    lo = hi = None
    if bands:
        lo, hi = np.percentile(per_sample, [5, 95], axis=0)
    return ReliabilityCurve(
        years=np.arange(1, pf.size + 1), pf=pf, hazard=hazard_from_pf(pf), lower=lo, upper=hi,
        source=source, n_samples=per_sample.shape[0], horizon=horizon,
    )


def prior_reliability(samples, capacity, demand: DemandModel, T: int = 50, bands: bool = True) -> ReliabilityCurve:
    """Monte Carlo reliability curve over prior samples of theta."""
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 100 and samples.shape[0] != 1:
        raise ConfigurationError(f"prior reliability needs >= 100 samples, got {samples.shape[0]}")
    return _curve(sample_curves(samples, capacity, demand, T), "prior", 0, bands)


def posterior_reliability(posterior, capacity, demand: DemandModel, T: int = 50, bands: bool = True) -> ReliabilityCurve:
    """Reliability curve over posterior samples; the curve records the data horizon."""
    samples = np.atleast_2d(getattr(posterior, "samples", posterior))
    if samples.shape[0] == 0:
        raise ConfigurationError("posterior sample matrix is empty")
    horizon = int(getattr(posterior, "horizon", 0))
    return _curve(sample_curves(samples, capacity, demand, T), "posterior", horizon, bands)


def posterior_hazard(samples, year: int, horizon: int, capacity, demand: DemandModel) -> float:
    """Hazard in ``year`` estimated with samples conditioned on data through ``horizon``.

    The forecast must use data up to the previous year only, so
    ``horizon == year - 1`` is enforced.
    """
    if horizon != year - 1:
        raise ConfigurationError(f"hazard for year {year} needs data through year {year - 1}, got {horizon}")
    pf = conditional_accumulated(np.atleast_2d(samples), np.arange(1, year + 1), capacity, demand).mean(axis=0)
    prev = pf[-2] if year > 1 else 0.0
    return float((pf[-1] - prev) / (1.0 - prev))
