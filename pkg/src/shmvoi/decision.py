"""Life-cycle cost of a hazard-threshold repair rule, and the value of monitoring.

The rule repairs at the end of the year before the first year whose
(forecast) hazard reaches the threshold ``w``. Costs stop accumulating at
the repair. Expected costs are averages over a fixed set of parameter
samples; every per-sample quantity is kept so that prior, preposterior and
perfect-information analyses can be compared on identical samples.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, ConfigurationError, DomainError


@dataclass(frozen=True)
class CostModel:
    c_F: float = 1e7
    c_R: float = 1e4
    r: float = 0.02
    T: int = 50

    def __post_init__(self):
        if not (self.c_F >= 0 and self.c_R > 0):
            raise ConfigurationError("costs must satisfy c_F >= 0 and c_R > 0")
        if not 0 <= self.r < 1:
            raise ConfigurationError(f"discount rate must lie in [0, 1), got {self.r}")
        if self.T < 1:
            raise ConfigurationError(f"horizon must be >= 1 year, got {self.T}")

    @property
    def ratio(self) -> float:
        return self.c_R / self.c_F if self.c_F > 0 else np.inf

    @classmethod
    def from_ratio(cls, ratio: float, c_F: float = 1e7, **kw) -> "CostModel":
        return cls(c_F=c_F, c_R=ratio * c_F, **kw)


def discount(t, r: float = 0.02):
    """Annually compounded discount factor ``(1 + r)^-t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("discounting needs t >= 0")
    return (1.0 + r) ** (-t)


def default_w_grid(n: int = 200, low: float = 1e-6, high: float = 1e-1) -> np.ndarray:
    """Log-spaced thresholds plus ``inf`` (never repair)."""
    return np.append(np.logspace(np.log10(low), np.log10(high), n), np.inf)


NO_REPAIR = -1


def repair_time(hazard, w: float):
    """Year of repair (``None`` if the threshold is never reached).

    With the first year ``i`` (1-based) such that ``h_i >= w`` the repair
    happens at ``t = i - 1``; 0 means an immediate repair.
    """
    t = repair_times(np.asarray(hazard)[None, :], np.array([w]))[0, 0]
    return None if t == NO_REPAIR else int(t)


def repair_times(hazard: np.ndarray, w_grid: np.ndarray) -> np.ndarray:
    """Repair years for every hazard row and threshold: (n, W), NO_REPAIR if never."""
    hazard = np.atleast_2d(np.asarray(hazard, dtype=float))
    T = hazard.shape[1]
    running = np.maximum.accumulate(hazard, axis=1)
    out = np.empty((hazard.shape[0], w_grid.size), dtype=np.int64)
    for k in range(hazard.shape[0]):
        first = np.searchsorted(running[k], w_grid, side="left")  # first i (0-based) with running >= w
        out[k] = np.where(first >= T, NO_REPAIR, first)
    return out


def risk_cumulative(pf: np.ndarray, cost: CostModel) -> np.ndarray:
    """Discounted failure cost accumulated up to each year, with year 0 prepended.

    ``pf`` is (n, T) accumulated failure probabilities; the result is
    (n, T + 1) with entry ``t`` equal to
    ``sum_{i<=t} c_F (1+r)^-i (P_i - P_{i-1})``.
    """
    pf = np.atleast_2d(pf)
    inc = np.diff(pf, axis=1, prepend=0.0)
    years = np.arange(1, pf.shape[1] + 1)
    disc = cost.c_F * discount(years, cost.r) * inc
    return np.concatenate([np.zeros((pf.shape[0], 1)), np.cumsum(disc, axis=1)], axis=1)


def _costs(pf: np.ndarray, t_rep: np.ndarray, cost: CostModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample repair and risk costs for repair years ``t_rep`` (n, W)."""
    cum = risk_cumulative(pf, cost)
    T = pf.shape[1]
    stop = np.where(t_rep == NO_REPAIR, T, t_rep)
    risk = np.take_along_axis(cum, stop, axis=1)
    repair = np.where(t_rep == NO_REPAIR, 0.0, cost.c_R * discount(np.maximum(t_rep, 0), cost.r))
    return repair, risk


def sample_key(samples) -> str:
    """Fingerprint identifying a parameter sample set."""
    a = np.ascontiguousarray(np.asarray(samples, dtype=float))
    return hashlib.sha256(a.tobytes() + str(a.shape).encode()).hexdigest()[:16]


def batch_cv(values: np.ndarray, n_batches: int = 10) -> tuple[float, float]:
    """Batch-means standard error of the mean and the corresponding CV."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < n_batches:
        return float("nan"), float("nan")
    means = np.array([b.mean() for b in np.array_split(values, n_batches)])
    se = float(means.std(ddof=1) / np.sqrt(n_batches))
    m = values.mean()
    return se, (se / abs(m) if m != 0 else (0.0 if se == 0 else float("inf")))


@dataclass(frozen=True)
class LccOutcome:
    """Expected life-cycle cost of one threshold (per-sample costs retained)."""

    w: float
    t_repair: int | None
    repair: float
    risk: float
    provenance: str
    n_samples: int
    cv: float
    std_error: float
    key: str = ""
    per_sample: np.ndarray = field(default=None, repr=False, compare=False)
    repair_years: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def total(self) -> float:
        return self.repair + self.risk


def _outcome(w, t_single, repair, risk, provenance, key, years=None) -> LccOutcome:
    tot = repair + risk
    se, cv = batch_cv(tot)
    return LccOutcome(
        w=float(w), t_repair=t_single, repair=float(repair.mean()), risk=float(risk.mean()),
        provenance=provenance, n_samples=int(tot.size), cv=cv, std_error=se, key=key,
        per_sample=tot, repair_years=years,
    )


@dataclass(frozen=True)
class CostTable:
    """Costs of every threshold in a grid for one analysis."""

    w_grid: np.ndarray
    outcomes: tuple

    @property
    def totals(self) -> np.ndarray:
        return np.array([o.total for o in self.outcomes])

    def best(self) -> LccOutcome:
        """Lowest expected total; exact ties go to the larger threshold."""
        tot = self.totals
        return self.outcomes[int(np.flatnonzero(tot == tot.min())[-1])]


def optimize_w(evaluator, w_grid) -> tuple[float, LccOutcome]:
    """Exhaustive search; exact ties go to the larger threshold (fewer repairs)."""
    w_grid = np.asarray(w_grid, dtype=float)
    if w_grid.size == 0:
        raise ConfigurationError("threshold grid is empty")
    outs = [evaluator(w) for w in w_grid]
    tot = np.array([o.total for o in outs])
    best = int(np.flatnonzero(tot == tot.min())[-1])
    return float(w_grid[best]), outs[best]


def lcc_prior(pf_samples: np.ndarray, prior_hazard: np.ndarray, cost: CostModel, w_grid, key: str = "") -> CostTable:
    """Prior analysis: one repair year per threshold from the prior hazard curve."""
    w_grid = np.asarray(w_grid, dtype=float)
    t = repair_times(prior_hazard, w_grid)[0]
    n = pf_samples.shape[0]
    tt = np.broadcast_to(t, (n, t.size))
    repair, risk = _costs(pf_samples, tt, cost)
    outs = tuple(
        _outcome(w, None if t[j] == NO_REPAIR else int(t[j]), repair[:, j], risk[:, j], "prior", key)
        for j, w in enumerate(w_grid)
    )
    return CostTable(w_grid, outs)


def expected_lcc_prior(pf_samples, prior_hazard, cost: CostModel, w: float, key: str = "") -> LccOutcome:
    return lcc_prior(pf_samples, prior_hazard, cost, np.array([w]), key).outcomes[0]


def lcc_preposterior(pf_samples: np.ndarray, posterior_hazards: np.ndarray, cost: CostModel, w_grid,
                     key: str = "") -> CostTable:
    """Preposterior analysis: each sample's repair year follows its own forecast hazard sequence.

    ``posterior_hazards[k, i-1]`` is the hazard of year i given sample k's
    monitoring data through year i-1.
    """
    w_grid = np.asarray(w_grid, dtype=float)
    H = np.asarray(posterior_hazards, dtype=float)
    if H.shape != pf_samples.shape:
        raise AnalysisError(f"hazard matrix {H.shape} does not match failure curves {pf_samples.shape}")
    bad = np.argwhere(~np.isfinite(H))
    if bad.size:
        k, i = bad[0]
        raise AnalysisError(f"missing posterior hazard for sample {k}, year {i + 1}")
    t = repair_times(H, w_grid)
    repair, risk = _costs(pf_samples, t, cost)
    outs = tuple(
        _outcome(w, None, repair[:, j], risk[:, j], "preposterior", key, t[:, j]) for j, w in enumerate(w_grid)
    )
    return CostTable(w_grid, outs)


def expected_lcc_preposterior(pf_samples, posterior_hazards, cost: CostModel, w: float, key: str = "") -> LccOutcome:
    return lcc_preposterior(pf_samples, posterior_hazards, cost, np.array([w]), key).outcomes[0]


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    std_error: float

    @property
    def cv(self) -> float:
        return self.std_error / abs(self.value) if self.value != 0 else (0.0 if self.std_error == 0 else float("inf"))


def paired_difference(a: LccOutcome, b: LccOutcome) -> ValueEstimate:
    if a.key != b.key or a.n_samples != b.n_samples:
        raise AnalysisError("value of information needs both analyses on the same parameter samples")
    diff = a.per_sample - b.per_sample
    se, _ = batch_cv(diff)
    return ValueEstimate(float(a.total - b.total), se)


def voi(prior_optimum: LccOutcome, preposterior_optimum: LccOutcome) -> ValueEstimate:
    """Prior optimal expected cost minus preposterior optimal expected cost."""
    return paired_difference(prior_optimum, preposterior_optimum)


def lcc_perfect(pf_samples: np.ndarray, cost: CostModel, w_grid, key: str = "") -> LccOutcome:
    """Per-sample optimal cost when theta is known (hazard from that sample's own curve)."""
    from .reliability import hazard_from_pf

    w_grid = np.asarray(w_grid, dtype=float)
    t = repair_times(hazard_from_pf(pf_samples), w_grid)
    repair, risk = _costs(pf_samples, t, cost)
    tot = repair + risk
    rev = tot[:, ::-1]
    j = tot.shape[1] - 1 - np.argmin(rev, axis=1)  # ties toward larger w
    rows = np.arange(tot.shape[0])
    out = _outcome(np.nan, None, repair[rows, j], risk[rows, j], "perfect-information", key, t[rows, j])
    return out


def vppi(prior_optimum: LccOutcome, pf_samples: np.ndarray, cost: CostModel, w_grid, key: str = "") -> ValueEstimate:
    """Value of partial perfect information: prior optimum minus the perfect-information cost."""
    return paired_difference(prior_optimum, lcc_perfect(pf_samples, cost, w_grid, key or prior_optimum.key))
