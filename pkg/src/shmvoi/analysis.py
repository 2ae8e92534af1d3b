"""End-to-end pieces of a value-of-information study.

:class:`Study` bundles the models shared by all samples (prior, surrogate
forwards, capacity, demand). The heavy per-sample job is
:func:`hazard_sequence`: simulate a monitoring history for one parameter
sample, update the posterior year by year and forecast each next year's
hazard.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bayes import LikelihoodConfig, sequential_update
from .decision import CostModel, lcc_perfect, lcc_preposterior, lcc_prior, paired_difference, sample_key
from .deterioration import PriorSpec, evaluate
from .errors import IdentificationError, InferenceError, NumericalError
from .fe import BridgeModel, modal_analysis
from .reliability import DemandModel, accumulate, hazard_from_pf, interval_failure_prob, sample_curves
from .ssi import match_modes, ssi_identify
from .surrogate import ModalForward, damaged_model
from .vibration import ModalDataSet, SensorLayout, add_noise, curvature, fast_history, simulate_response

log = logging.getLogger(__name__)


def stream(master: int, *key: int) -> np.random.SeedSequence:
    """Deterministic child seed of ``master`` addressed by an integer path."""
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))


# stream ids
PRIOR_STREAM, DATA_STREAM, INFER_STREAM, SSI_STREAM = 1, 2, 3, 4


@dataclass(frozen=True, eq=False)
class Study:
    case: str
    prior: PriorSpec
    data_forward: ModalForward
    infer_forward: ModalForward
    likelihood: LikelihoodConfig
    capacity: object
    demand: DemandModel
    T: int = 50
    method: str = "laplace"
    n_post: int = 2000
    c_sim: float = 0.02
    w_max: float = 0.1


def ssi_history(model: BridgeModel, case: str, theta, years, layout: SensorLayout, reference: ModalForward,
                seed, noise: float = 0.02, with_curvature: bool = False, retries: int = 3,
                order: int = 24, block_rows: int = 40, **sim_kw) -> list[ModalDataSet]:
    """Yearly modal data from simulated accelerations of the damaged FE model.

    Each year the FE model at ``D(theta, t)`` is excited, the response is
    corrupted with noise and identified with SSI; identified modes are
    paired with the surrogate's tracked modes at the same damage. A failed
    identification is retried with a fresh excitation.
    """
    out = []
    D_all = evaluate(theta, np.asarray(years, dtype=float))
    for y, D in zip(years, D_all):
        dm = damaged_model(model, case, D)
        modal = modal_analysis(dm, max(2 * reference.n_modes, 12))
        _, ref_shapes, _ = reference.predict(D)
        for attempt in range(retries + 1):
            ss = stream(seed, int(y), attempt)
            s_sim, s_noise = ss.spawn(2)
            rec = simulate_response(dm, layout, seed=s_sim, modal=modal, n_modes=reference.n_modes, **sim_kw)
            rec = add_noise(rec, noise, seed=s_noise)
            try:
                raw = ssi_identify(rec, order=order, block_rows=block_rows, n_modes=reference.n_modes)
                ds = match_modes(raw, ref_shapes, n_modes=reference.n_modes, time=float(y))
                break
            except IdentificationError:
                if attempt == retries:
                    raise
                log.info("identification failed in year %s, retrying", y)
        if with_curvature:
            ds = curvature(ds, layout.x)
        out.append(ds)
    return out


def hazard_sequence(study: Study, theta, k: int, master: int, data=None) -> np.ndarray:
    """Forecast hazards ``h(t_i | data through t_{i-1})`` for i = 1..T for one sample.

    Year 1 uses the prior. Once the hazard passes ``study.w_max`` every
    finite threshold has triggered, so later years are filled with that
    value instead of being computed.
    """
    T = study.T
    if data is None:
        data = fast_history(study.data_forward, theta, np.arange(1, T), study.c_sim, stream(master, DATA_STREAM, k))
    H = np.full(T, np.nan)
    prior_draws = study.prior.sample(study.n_post, stream(master, INFER_STREAM, k, 0))
    H[0] = _forecast(study, prior_draws, 1)

    def step(year, res):
        H[year] = _forecast(study, res.samples, year + 1)
        return H[year] >= study.w_max

    if H[0] < study.w_max and T > 1:
        sequential_update(
            study.prior, data, study.likelihood, study.infer_forward, study.method,
            n_samples=study.n_post, seed=stream(master, INFER_STREAM, k, 1), callback=step,
        )
    last = np.flatnonzero(np.isfinite(H))[-1]
    H[last + 1:] = H[last]
    return H


def _forecast(study: Study, samples, year: int) -> float:
    p = interval_failure_prob(samples, np.arange(1, year + 1), study.capacity, study.demand)
    pf = accumulate(p).mean(axis=0)
    return float(hazard_from_pf(pf)[-1])


def _job(args):
    study, theta, k, master = args
    try:
        return k, hazard_sequence(study, theta, k, master), None
    except (InferenceError, NumericalError, IdentificationError) as exc:
        return k, None, f"{type(exc).__name__}: {exc}"


def preposterior_hazards(study: Study, thetas: np.ndarray, master: int, workers: int = 1,
                         progress=None) -> tuple[np.ndarray, dict]:
    """Hazard sequences for all samples; failed samples are reported in the second output."""
    jobs = [(study, thetas[k], k, master) for k in range(thetas.shape[0])]
    H = np.full((thetas.shape[0], study.T), np.nan)
    failures = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = ex.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
            for k, h, err in results:
                _store(H, failures, k, h, err, progress)
    else:
        for j in jobs:
            _store(H, failures, *_job(j), progress)
    return H, failures


def _store(H, failures, k, h, err, progress):
    if err is None:
        H[k] = h
    else:
        failures[k] = err
    if progress is not None:
        progress(k)


@dataclass(frozen=True)
class ValueTables:
    """Prior, preposterior and perfect-information results for several cost ratios."""

    ratios: tuple
    prior: tuple  # CostTable per ratio
    preposterior: tuple | None
    perfect: tuple  # LccOutcome per ratio

    def summary(self) -> list[dict]:
        rows = []
        for i, ratio in enumerate(self.ratios):
            p = self.prior[i].best()
            row = {
                "ratio": ratio, "prior_w": p.w, "prior_t_repair": p.t_repair, "prior_total": p.total,
                "prior_cv": p.cv, "perfect_total": self.perfect[i].total,
            }
            vp = paired_difference(p, self.perfect[i])
            row.update(vppi=vp.value, vppi_se=vp.std_error)
            if self.preposterior is not None:
                q = self.preposterior[i].best()
                vo = paired_difference(p, q)
                row.update(preposterior_w=q.w, preposterior_total=q.total, preposterior_cv=q.cv,
                           voi=vo.value, voi_se=vo.std_error)
            rows.append(row)
        return rows


def value_tables(pf: np.ndarray, thetas: np.ndarray, ratios, w_grid, H: np.ndarray | None = None,
                 c_F: float = 1e7, r: float = 0.02) -> ValueTables:
    """Cost tables for each ratio ``c_R / c_F``; the preposterior part needs hazards ``H``."""
    key = sample_key(thetas)
    prior_h = hazard_from_pf(pf.mean(axis=0))
    pri, pre, per = [], [], []
    for ratio in ratios:
        cost = CostModel.from_ratio(ratio, c_F=c_F, r=r, T=pf.shape[1])
        pri.append(lcc_prior(pf, prior_h, cost, w_grid, key))
        per.append(lcc_perfect(pf, cost, w_grid, key))
        if H is not None:
            pre.append(lcc_preposterior(pf, H, cost, w_grid, key))
    return ValueTables(tuple(ratios), tuple(pri), tuple(pre) if H is not None else None, tuple(per))


def failure_curves(study: Study, thetas) -> np.ndarray:
    return sample_curves(thetas, study.capacity, study.demand, study.T)
