"""Bayesian updating of deterioration parameters from yearly modal data.

All samplers and optimizers work on an unconstrained vector ``z`` in which
lognormal parameters appear through their logarithm (see
:class:`shmvoi.deterioration.PriorSpec`). Results are reported in natural
space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .deterioration import PriorSpec, evaluate
from .errors import ConfigurationError, InferenceError, NumericalError
from .vibration import ModalDataSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LikelihoodConfig:
    """Prediction-error model.

    ``c_lambda`` and ``c_phi`` are coefficients of variation, scalar or one
    per mode; ``c_phi`` also scales curvature errors.
    """

    c_lambda: float | tuple = 0.02
    c_phi: float | tuple = 0.02
    use_shapes: bool = False
    use_curvatures: bool = False
    n_modes: int = 6

    def __post_init__(self):
        if np.any(np.asarray(self.c_lambda) <= 0) or np.any(np.asarray(self.c_phi) <= 0):
            raise ConfigurationError("prediction-error coefficients must be positive")
        if self.use_shapes and self.use_curvatures:
            raise ConfigurationError("use_shapes and use_curvatures are mutually exclusive")
        if self.n_modes < 1:
            raise ConfigurationError(f"n_modes must be >= 1, got {self.n_modes}")

    @classmethod
    def for_case(cls, case: str, **kw) -> "LikelihoodConfig":
        """Eigenvalues only for scour; eigenvalues and curvatures for corrosion."""
        return cls(use_curvatures=(case == "corrosion"), **kw)

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        return self._coefficients

    @cached_property
    def _coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.n_modes
        return (np.broadcast_to(np.asarray(self.c_lambda, dtype=float), (m,)),
                np.broadcast_to(np.asarray(self.c_phi, dtype=float), (m,)))


@dataclass(frozen=True)
class History:
    """Stacked modal data of several years."""

    times: np.ndarray
    eigenvalues: np.ndarray  # (n_years, m)
    shapes: np.ndarray  # (n_years, m, n_s)
    curvatures: np.ndarray | None

    @classmethod
    def from_sets(cls, sets, n_modes: int) -> "History":
        sets = list(sets)
        if not sets:
            return cls(np.zeros(0), np.zeros((0, n_modes)), np.zeros((0, n_modes, 0)), None)
        if any(d.n_modes < n_modes for d in sets):
            raise ConfigurationError(f"data sets carry fewer than {n_modes} modes")
        curv = None
        if all(d.curvatures is not None for d in sets):
            curv = np.stack([d.curvatures[:n_modes] for d in sets])
        return cls(
            times=np.array([d.time for d in sets], dtype=float),
            eigenvalues=np.stack([d.eigenvalues[:n_modes] for d in sets]),
            shapes=np.stack([d.shapes[:n_modes] for d in sets]),
            curvatures=curv,
        )

    @property
    def n_years(self) -> int:
        return int(self.times.size)

    def head(self, i: int) -> "History":
        c = None if self.curvatures is None else self.curvatures[:i]
        return History(self.times[:i], self.eigenvalues[:i], self.shapes[:i], c)


def _vector_term(obs: np.ndarray, model: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Gaussian log-density of scale-free vector data, summed over years and modes.

    ``obs`` is (n_years, m, n_s) and ``model`` (..., n_years, m, n_s). The
    observed vector is first scaled by the least-squares factor ``gamma``
    onto the model vector; every component error then has std
    ``c * ||gamma * obs||``.
    """
    n_s = obs.shape[-1]
    oo = np.einsum("...k,...k->...", obs, obs)
    gamma = np.einsum("...k,...k->...", obs, model) / oo
    resid = np.sum((gamma[..., None] * obs - model) ** 2, axis=-1)
    sig2 = c**2 * gamma**2 * oo
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -0.5 * n_s * np.log(2 * np.pi * sig2) - 0.5 * resid / sig2
    val = np.where(sig2 > 0, val, -np.inf)
    return val.sum(axis=(-2, -1))


def history_log_likelihood(theta, hist: History, config: LikelihoodConfig, forward) -> np.ndarray:
    """Log-likelihood of a stacked history for one or many ``theta`` (..., d)."""
    theta = np.asarray(theta, dtype=float)
    if hist.n_years == 0:
        return np.zeros(theta.shape[:-1])
    m = config.n_modes
    c_lam, c_phi = config.coefficients()
    D = evaluate(theta, hist.times)
    parts = ("eigenvalues",) + (("shapes",) if config.use_shapes else ()) + (
        ("curvatures",) if config.use_curvatures else ())
    lam, shp, curv = forward.predict(D, parts)
    lam = lam[..., :m]
    if not np.all(np.isfinite(lam)):
        raise NumericalError("forward model returned non-finite eigenvalues")
    obs = hist.eigenvalues
    sig = c_lam * obs
    ll = np.sum(-0.5 * np.log(2 * np.pi * sig**2) - 0.5 * ((obs - lam) / sig) ** 2, axis=(-2, -1))
    if config.use_shapes:
        ll = ll + _vector_term(hist.shapes, shp[..., :m, :], c_phi)
    if config.use_curvatures:
        if hist.curvatures is None or curv is None:
            raise ConfigurationError("curvature likelihood requested but curvatures are missing")
        ll = ll + _vector_term(hist.curvatures, curv[..., :m, :], c_phi)
    return ll


def log_likelihood_single(theta, data: ModalDataSet, config: LikelihoodConfig, forward) -> np.ndarray:
    """Log-likelihood of one modal data set."""
    return history_log_likelihood(theta, History.from_sets([data], config.n_modes), config, forward)


def log_likelihood_history(theta, data, config: LikelihoodConfig, forward) -> np.ndarray:
    """Sum of yearly log-likelihoods, each at that year's damage."""
    hist = data if isinstance(data, History) else History.from_sets(data, config.n_modes)
    return history_log_likelihood(theta, hist, config, forward)


class LogPosterior:
    """Unnormalized log-posterior as a function of the transformed vector ``z``.

    ``prior=None`` means a flat prior in ``z``; a ``transform`` spec is then
    still needed to map ``z`` to natural parameters.
    """

    def __init__(self, prior: PriorSpec | None, data, config: LikelihoodConfig, forward,
                 transform: PriorSpec | None = None):
        self.prior = prior
        self.transform = transform or prior
        if self.transform is None:
            raise ConfigurationError("a parameter transform is required for a flat prior")
        self.config = config
        self.forward = forward
        self.history = data if isinstance(data, History) else History.from_sets(data, config.n_modes)
        self.n_evals = 0

    @property
    def dim(self) -> int:
        return self.transform.dim

    def log_prior(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.prior is None:
            return np.zeros(z.shape[:-1])
        return self.prior.log_density_z(z)

    def log_likelihood(self, z) -> np.ndarray:
        return history_log_likelihood(self.transform.to_natural(z), self.history, self.config, self.forward)

    def __call__(self, z) -> float | np.ndarray:
        self.n_evals += 1
        z = np.asarray(z, dtype=float)
        out = self.log_prior(z) + self.log_likelihood(z)
        return float(out) if out.ndim == 0 else out


class GaussianTarget:
    """Log-density of N(mean, cov) up to a constant (toy target and tests)."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.prec = np.linalg.inv(np.asarray(cov, dtype=float))
        self.dim = self.mean.size

    def __call__(self, z):
        r = np.asarray(z, dtype=float) - self.mean
        return -0.5 * float(r @ self.prec @ r)


# ---------------------------------------------------------------- results


@dataclass
class PosteriorResult:
    """Posterior summary; ``samples`` are in natural space, ``mean``/``cov`` in z."""

    method: str
    samples: np.ndarray
    z_samples: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    map_theta: np.ndarray | None = None
    horizon: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def natural_mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)


@dataclass(frozen=True)
class MapResult:
    z: np.ndarray
    value: float
    n_iter: int
    trace: tuple


def map_estimate(target, inits, xatol: float = 1e-6, fatol: float = 1e-8, maxiter: int | None = None) -> MapResult:
    """Maximize ``target`` by Nelder-Mead from each start in ``inits``; the best run wins."""
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    d = inits.shape[1]
    maxiter = maxiter or 1000 * d
    best, trace = None, []
    for x0 in inits:
        res = optimize.minimize(
            lambda z: -target(z), x0, method="Nelder-Mead",
            options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter, "maxfev": 2 * maxiter},
        )
        trace.append((x0.tolist(), float(-res.fun), int(res.nit), bool(res.success)))
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None or not np.isfinite(best.fun):
        raise InferenceError(f"MAP search failed from every start: {trace}")
    if not best.success:
        log.warning("MAP optimizer stopped on its budget: %s", best.message)
    return MapResult(z=best.x, value=float(-best.fun), n_iter=int(best.nit), trace=tuple(trace))


def fd_hessian(f, x: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian with steps ``rel_step * max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = rel_step * np.maximum(np.abs(x), 1.0)
    f0 = f(x)
    H = np.empty((d, d))
    E = np.diag(h)
    for i in range(d):
        H[i, i] = (f(x + E[i]) - 2 * f0 + f(x - E[i])) / h[i] ** 2
        for j in range(i):
            v = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j]))
            H[i, j] = H[j, i] = v / (4 * h[i] * h[j])
    return H


def laplace_approximation(target, mode: np.ndarray, rel_step: float = 1e-4):
    """Gaussian approximation (mode, inverse negative Hessian)."""
    H = fd_hessian(target, mode, rel_step)
    P = -0.5 * (H + H.T)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise InferenceError(
            "negative log-posterior Hessian is not positive definite at the MAP; use MCMC instead"
        ) from exc
    Linv = np.linalg.inv(L)
    return mode.copy(), Linv.T @ Linv


def laplace_posterior(target: LogPosterior, inits, n_samples: int = 10000, seed=None,
                      rel_step: float = 1e-4, horizon: int = 0) -> PosteriorResult:
    """MAP search followed by the Laplace approximation and Gaussian sampling."""
    mp = map_estimate(target, inits)
    mean, cov = laplace_approximation(target, mp.z, rel_step)
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal(mean, cov, size=n_samples, method="cholesky")
    tr = target.transform if isinstance(target, LogPosterior) else None
    to_nat = tr.to_natural if tr is not None else (lambda v: v)
    return PosteriorResult(
        method="laplace", samples=to_nat(z), z_samples=z, mean=mean, cov=cov,
        map_theta=to_nat(mp.z), horizon=horizon,
        diagnostics={"map_log_posterior": mp.value, "optimizer_iterations": mp.n_iter, "map_trace": list(mp.trace)},
    )


def adaptive_mcmc(target, n_samples: int = 5000, seed=None, init=None, init_cov=None,
                  burn_in: float = 0.2, adapt_start: int = 200, jitter: float = 1e-10,
                  horizon: int = 0, transform: PriorSpec | None = None) -> PosteriorResult:
    """Adaptive Metropolis with a Gaussian random-walk proposal.

    The chain has ``n_samples / (1 - burn_in)`` states; the first
    ``burn_in`` fraction is discarded. From step ``adapt_start`` the proposal
    covariance is ``2.38^2 / d`` times the running chain covariance plus
    ``jitter`` times the identity.
    """
    if n_samples < 1000:
        raise ConfigurationError(f"adaptive MCMC needs n_samples >= 1000, got {n_samples}")
    if not 0 <= burn_in < 1:
        raise ConfigurationError(f"burn_in must lie in [0, 1), got {burn_in}")
    x = np.asarray(init, dtype=float).copy()
    d = x.size
    n_total = int(np.ceil(n_samples / (1.0 - burn_in)))
    n_burn = n_total - n_samples
    scale = 2.38**2 / d
    C0 = np.eye(d) * 0.01 if init_cov is None else np.asarray(init_cov, dtype=float)
    L = np.linalg.cholesky(C0 + jitter * np.eye(d))
    rng = np.random.default_rng(seed)

    chain = np.empty((n_total, d))
    lp = target(x)
    if not np.isfinite(lp):
        raise InferenceError("MCMC initial state has zero posterior density")
    mean = np.zeros(d)
    M2 = np.zeros((d, d))
    accepted = 0
    accepted_after = 0
    for k in range(n_total):
        y = x + L @ rng.standard_normal(d)
        lq = target(y)
        if np.log(rng.random()) < lq - lp:
            x, lp = y, lq
            accepted += 1
            if k >= adapt_start:
                accepted_after += 1
        chain[k] = x
        # running moments (Welford)
        delta = x - mean
        mean += delta / (k + 1)
        M2 += np.outer(delta, x - mean)
        if k + 1 >= adapt_start:
            cov = M2 / k if k > 0 else C0
            try:
                L = np.linalg.cholesky(scale * cov + jitter * np.eye(d))
            except np.linalg.LinAlgError:
                pass  # keep the previous proposal
    kept = chain[n_burn:]
    rate_after = accepted_after / max(n_total - adapt_start, 1)
    warnings = []
    if not 0.05 <= rate_after <= 0.7:
        warnings.append(f"acceptance rate {rate_after:.3f} after adaptation outside [0.05, 0.7]")
    tr = transform or getattr(target, "transform", None)
    to_nat = tr.to_natural if tr is not None else (lambda v: v)
    return PosteriorResult(
        method="mcmc", samples=to_nat(kept), z_samples=kept, mean=kept.mean(axis=0),
        cov=np.cov(kept, rowvar=False), horizon=horizon,
        diagnostics={"acceptance_rate": accepted / n_total, "acceptance_rate_adapted": rate_after,
                     "n_total": n_total, "burn_in": n_burn, "warnings": warnings},
    )


def prior_result(prior: PriorSpec, n_samples: int, seed=None) -> PosteriorResult:
    """The prior expressed as a zero-data posterior."""
    rng = np.random.default_rng(seed)
    z = prior.z_mean + prior.z_std * rng.standard_normal((n_samples, prior.dim))
    return PosteriorResult(
        method="prior", samples=prior.to_natural(z), z_samples=z, mean=prior.z_mean.copy(),
        cov=np.diag(prior.z_std**2), horizon=0,
    )


def year_seed(seed, year: int) -> np.random.SeedSequence:
    """Independent stream for one year of a sequential update."""
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (int(year),))


def sequential_update(prior: PriorSpec, data, config: LikelihoodConfig, forward, method: str = "mcmc",
                      years=None, n_samples: int | None = None, seed=None, callback=None) -> list[PosteriorResult]:
    """Posterior after each year in ``years`` given all data up to that year.

    Every year is solved against the full history so far, warm-started from
    the previous year's result (MAP and posterior for Laplace, posterior mean
    and covariance for MCMC). With no data the prior is returned. If a year
    fails, the results obtained so far are attached to the raised error as
    ``partial``. ``callback(year, result)`` runs after every year; a true
    return value ends the sequence early.
    """
    if method not in ("mcmc", "laplace"):
        raise ConfigurationError(f"unknown inference method {method!r}")
    hist = data if isinstance(data, History) else History.from_sets(data, config.n_modes)
    n_samples = n_samples or (5000 if method == "mcmc" else 10000)
    if hist.n_years == 0:
        return [prior_result(prior, n_samples, seed)]
    years = list(range(1, hist.n_years + 1)) if years is None else sorted(int(y) for y in years)
    if years and (years[0] < 1 or years[-1] > hist.n_years):
        raise ConfigurationError(f"requested years {years[0]}..{years[-1]} exceed the {hist.n_years}-year history")
    out: list[PosteriorResult] = []
    prev_map, prev_mean, prev_cov = None, prior.z_mean, np.diag(prior.z_std**2)
    for year in years:
        target = LogPosterior(prior, hist.head(year), config, forward)
        try:
            if method == "laplace":
                inits = [prior.z_mean] if prev_map is None else [prev_map, prior.z_mean]
                res = laplace_posterior(target, inits, n_samples, year_seed(seed, year), horizon=year)
                prev_map = prior.to_z(res.map_theta)
            else:
                res = adaptive_mcmc(target, n_samples, year_seed(seed, year), init=prev_mean,
                                    init_cov=prev_cov * 2.38**2 / prior.dim, horizon=year)
        except (InferenceError, NumericalError) as exc:
            exc.partial = out
            raise
        prev_mean, prev_cov = res.mean, res.cov
        out.append(res)
        if callback is not None and callback(year, res):
            break
    return out
