"""``shm-voi``: configuration-driven pipeline stages with caching and manifests.

Every stage writes its tables into ``<output_dir>/<stage>/`` together with
``manifest.json``. A stage whose manifest matches the current configuration
hash and whose outputs are intact is skipped. Upstream results are computed
in-process when needed; heavy arrays (surrogate grids, hazard matrices)
live in ``<output_dir>/cache``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DATA_STREAM, INFER_STREAM, PRIOR_STREAM, SSI_STREAM, Study, preposterior_hazards, ssi_history, stream,
    value_tables,
)
from .bayes import sequential_update
from .config import StudyConfig, load_config
from .decision import CostModel, lcc_perfect, lcc_preposterior, lcc_prior, paired_difference, sample_key
from .deterioration import evaluate
from .errors import AnalysisError, ConfigurationError, ShmVoiError
from .fe import build_model, modal_analysis
from .reliability import (
    calibrate_demand, capacity_curve, hazard_from_pf, posterior_reliability, prior_reliability, sample_curves,
)
from .surrogate import cached_grid, make_forward
from .vibration import ModalDataSet, SensorLayout, fast_history

log = logging.getLogger("shmvoi")

STAGES = (
    "build-surrogate", "simulate-data", "update", "reliability", "lcc-prior",
    "lcc-preposterior", "voi", "vppi", "sensor-study",
)
# stream ids of the planted-truth experiment (the sample streams live in analysis)
TRUTH_DATA_STREAM, TRUTH_INFER_STREAM, PRIOR_MCS_STREAM = 5, 6, 7

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------- formatting


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "inf" if x == np.inf else f"{x:.12g}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    return buf.getvalue()


def _read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _seed_record(seq: np.random.SeedSequence) -> dict:
    return {"entropy": int(seq.entropy), "spawn_key": list(seq.spawn_key)}


# ---------------------------------------------------------------- run manifest


@dataclass
class RunManifest:
    stage: str
    config_hash: str
    config: dict
    version: str
    master_seed: int
    seeds: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    cache_hits: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json_text(self.__dict__)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(path.read_text()))


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


# ---------------------------------------------------------------- pipeline


class Pipeline:
    """Lazily built resources shared by the stages of one configuration."""

    def __init__(self, cfg: StudyConfig, workers: int = 1, emit_plots: bool = False):
        self.cfg = cfg
        self.workers = max(1, int(workers))
        self.emit_plots = emit_plots
        self.root = cfg.output
        self.cache_dir = self.root / "cache"
        self.cache_hits: dict = {}
        self.seeds: dict = {}
        self._forwards: dict = {}
        self._studies: dict = {}
        self._hazards: dict = {}
        self._done: set = set()

    # -- physical models

    @property
    def case(self) -> str:
        return self.cfg.study.case

    @property
    def seed(self) -> int:
        return self.cfg.study.seed

    @cached_property
    def model(self):
        return build_model(self.cfg.mesh)

    @cached_property
    def axes(self):
        g = self.cfg.grid
        if self.case == "scour":
            return (np.linspace(0.0, g.scour_max, g.scour_points),)
        ax = np.linspace(0.0, g.corrosion_max, g.corrosion_points)
        return (ax, ax.copy())

    @cached_property
    def table(self):
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        table, hit = cached_grid(self.case, self.cache_dir, self.cfg.mesh, self.axes, self.cfg.grid.n_modes,
                                 workers=self.workers)
        self.cache_hits["grid"] = hit
        return table

    def layout(self, n_sensors: int | None = None) -> SensorLayout:
        return SensorLayout.preset(self.model, n_sensors or self.cfg.study.sensors)

    def forward(self, n_sensors: int | None = None, smooth: bool = False):
        key = (n_sensors or self.cfg.study.sensors, smooth)
        if key not in self._forwards:
            g = self.cfg.grid
            self._forwards[key] = make_forward(self.table, self.layout(key[0]), smooth=smooth,
                                               eig_degree=g.eig_degree, vector_degree=g.vector_degree)
        return self._forwards[key]

    @cached_property
    def capacity(self):
        return capacity_curve(self.table, degree=self.cfg.grid.capacity_degree)

    @cached_property
    def demand(self):
        return calibrate_demand(self.cfg.demand.pf0, self.cfg.demand.cv)

    @cached_property
    def prior(self):
        return self.cfg.prior_spec()

    @cached_property
    def likelihood(self):
        return self.cfg.likelihood_config()

    # -- samples

    @cached_property
    def thetas(self) -> np.ndarray:
        seq = stream(self.seed, PRIOR_STREAM)
        self.seeds["theta"] = _seed_record(seq)
        return self.prior.sample(self.cfg.samples.n_theta, seq)

    @cached_property
    def pf(self) -> np.ndarray:
        return sample_curves(self.thetas, self.capacity, self.demand, self.cfg.cost.T)

    def study(self, n_sensors: int | None = None) -> Study:
        n = n_sensors or self.cfg.study.sensors
        if n not in self._studies:
            method = self.cfg.study.method
            s = self.cfg.samples
            self._studies[n] = Study(
                case=self.case, prior=self.prior, data_forward=self.forward(n),
                infer_forward=self.forward(n, smooth=method == "laplace"), likelihood=self.likelihood,
                capacity=self.capacity, demand=self.demand, T=self.cfg.cost.T, method=method,
                n_post=s.n_laplace if method == "laplace" else s.n_mcmc, c_sim=self.cfg.vibration.c_sim,
                w_max=self.cfg.w_grid.high,
            )
        return self._studies[n]

    def hazards(self, n_sensors: int | None = None) -> np.ndarray:
        """Preposterior hazard matrix (n_theta, T), cached on disk per sensor layout."""
        n = n_sensors or self.cfg.study.sensors
        if n in self._hazards:
            return self._hazards[n]
        path = self.cache_dir / f"hazards-{self.case}-{self.cfg.hash()}-{n}.npy"
        self.seeds["data"] = _seed_record(stream(self.seed, DATA_STREAM))
        self.seeds["inference"] = _seed_record(stream(self.seed, INFER_STREAM))
        thetas = self.thetas
        if path.exists():
            H = np.load(path)
            if H.shape == (thetas.shape[0], self.cfg.cost.T) and np.all(np.isfinite(H)):
                self.cache_hits[f"hazards-{n}"] = True
                self._hazards[n] = H
                return H
        self.cache_hits[f"hazards-{n}"] = False
        done = [0]

        def progress(k):
            done[0] += 1
            if done[0] % 10 == 0 or done[0] == thetas.shape[0]:
                log.info("preposterior %d/%d samples (%d sensors)", done[0], thetas.shape[0], n)

        H, failures = preposterior_hazards(self.study(n), thetas, self.seed, self.workers, progress)
        if failures:
            k, msg = min(failures.items())
            raise AnalysisError(f"{len(failures)} preposterior samples failed; first: sample {k}: {msg}")
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        np.save(path, H)
        self._hazards[n] = H
        return H

    # -- planted-truth experiment

    @cached_property
    def truth(self) -> np.ndarray:
        return np.asarray(self.cfg.update.truth, dtype=float)

    def history(self) -> list[ModalDataSet]:
        self.ensure("simulate-data")
        lines = (self.root / "simulate-data" / "history.jsonl").read_text().splitlines()
        return [ModalDataSet.from_dict(json.loads(line)) for line in lines if line]

    def posterior_samples(self) -> dict:
        self.ensure("update")
        out = {}
        for y in self.cfg.update.checkpoints:
            out[int(y)] = _read_csv(self.root / "update" / f"samples-year{int(y)}.csv")
        return out

    # -- stage execution

    def ensure(self, stage: str) -> None:
        if stage not in self._done:
            run_stage(stage, self)


def _manifest_config(cfg: StudyConfig) -> dict:
    doc = cfg.to_dict()
    doc["study"].pop("output_dir")
    return doc


def run_stage(stage: str, pipe: Pipeline) -> dict:
    """Run ``stage`` (skipping it when its outputs for this configuration exist).

    Returns ``{"stage", "skipped", "outputs"}``.
    """
    if stage not in STAGES:
        raise ConfigurationError(f"unknown stage {stage!r}; available: {', '.join(STAGES)}")
    cfg = pipe.cfg
    h = cfg.hash()
    stage_dir = pipe.root / stage
    mpath = stage_dir / "manifest.json"
    if mpath.exists():
        try:
            old = RunManifest.load(mpath)
        except (ValueError, TypeError):
            old = None
        if old is not None and old.config_hash == h:
            if old.config != json.loads(json_text(_manifest_config(cfg))):
                raise ConfigurationError(f"config hash collision in {mpath}: same hash, different content")
            intact = all(
                (stage_dir / name).exists() and _sha((stage_dir / name).read_text()) == digest
                for name, digest in old.outputs.items()
            )
            if intact:
                pipe._done.add(stage)
                log.info("%s: up to date (cache hit)", stage)
                return {"stage": stage, "skipped": True, "outputs": sorted(old.outputs)}
    started = _now()
    log.info("%s: running", stage)
    outputs = STAGE_FUNCS[stage](pipe)
    if not pipe.emit_plots:
        outputs = {k: v for k, v in outputs.items() if not k.startswith("plots/")}
    stage_dir.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        p = stage_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    man = RunManifest(
        stage=stage, config_hash=h, config=json.loads(json_text(_manifest_config(cfg))), version=__version__,
        master_seed=cfg.study.seed, seeds=dict(pipe.seeds), started=started, finished=_now(),
        cache_hits=dict(pipe.cache_hits), outputs={k: _sha(v) for k, v in sorted(outputs.items())},
    )
    mpath.write_text(man.to_json())
    pipe._done.add(stage)
    return {"stage": stage, "skipped": False, "outputs": sorted(outputs)}


# ---------------------------------------------------------------- stages


def stage_build_surrogate(pipe: Pipeline) -> dict:
    t = pipe.table
    modal = modal_analysis(pipe.model, pipe.cfg.grid.n_modes)
    info = {
        "case": t.case, "hash": t.meta.get("hash"), "grid_shape": list(t.grid_shape),
        "lower": t.lower.tolist(), "upper": t.upper.tolist(), "n_modes": t.n_modes,
        "capacity_min": float(t.capacity.min()), "capacity_max": float(t.capacity.max()),
    }
    if t.case == "corrosion":
        fw = pipe.forward()
        info["eigenvalue_fit_max_rel_residual"] = fw.eig_surface.max_rel_residual
        info["capacity_fit_max_rel_residual"] = pipe.capacity.surface.max_rel_residual
    out = {
        "surrogate.json": json_text(info),
        "modes.csv": csv_text(["mode", "frequency_hz", "eigenvalue"],
                              [(i + 1, f, lam) for i, (f, lam) in enumerate(zip(modal.frequencies, modal.eigenvalues))]),
    }
    pts = t.points()
    freqs = np.sqrt(t.eigenvalues.reshape(pts.shape[0], -1)) / (2 * np.pi)
    hdr = [f"D{i + 1}" for i in range(t.dim)] + [f"f{j + 1}" for j in range(freqs.shape[1])] + ["capacity"]
    out["plots/grid.csv"] = csv_text(hdr, np.column_stack([pts, freqs, t.capacity.reshape(-1)]))
    return out


def stage_simulate_data(pipe: Pipeline) -> dict:
    cfg = pipe.cfg
    years = np.arange(1, cfg.update.years + 1)
    theta = pipe.truth
    if cfg.study.data_path == "fast":
        seq = stream(pipe.seed, TRUTH_DATA_STREAM)
        data = fast_history(pipe.forward(), theta, years, cfg.vibration.c_sim, seq)
    else:
        seq = stream(pipe.seed, TRUTH_DATA_STREAM, SSI_STREAM)
        v = cfg.vibration
        data = ssi_history(pipe.model, pipe.case, theta, years, pipe.layout(), pipe.forward(), seq,
                           noise=v.noise, with_curvature=pipe.likelihood.use_curvatures, order=v.ssi_order,
                           block_rows=v.ssi_block_rows, fs=v.fs, duration=v.duration, damping=v.damping)
    pipe.seeds["planted-data"] = _seed_record(seq)
    D = evaluate(theta, years.astype(float))
    Dh = [f"D{i + 1}" for i in range(D.shape[1])]
    n_m = data[0].n_modes
    rows = [[int(y), *D[i], *data[i].frequencies] for i, y in enumerate(years)]
    return {
        "history.jsonl": "".join(json.dumps(ds.to_dict(), sort_keys=True) + "\n" for ds in data),
        "truth.csv": csv_text(["year", *Dh, *[f"f{j + 1}" for j in range(n_m)]], rows),
    }


def _quantiles(x, q=(5, 50, 95)):
    return np.percentile(x, q, axis=0)


def stage_update(pipe: Pipeline) -> dict:
    cfg = pipe.cfg
    data = pipe.history()
    method = cfg.update.method
    smooth = method == "laplace"
    n = cfg.samples.n_mcmc if method == "mcmc" else cfg.samples.n_laplace
    seq = stream(pipe.seed, TRUTH_INFER_STREAM)
    pipe.seeds["planted-inference"] = _seed_record(seq)
    checkpoints = sorted(int(y) for y in cfg.update.checkpoints)
    results = sequential_update(pipe.prior, data, pipe.likelihood, pipe.forward(smooth=smooth), method,
                                years=checkpoints, n_samples=n, seed=seq)
    T = cfg.cost.T
    d_true = evaluate(pipe.truth, float(T))
    prior_draws = pipe.prior.sample(n, stream(pipe.seed, TRUTH_INFER_STREAM, 0))
    names = list(pipe.prior.names) or [f"theta{i + 1}" for i in range(pipe.prior.dim)]
    k = d_true.size
    hdr = ["year", "method", "n_samples"]
    hdr += [f"{p}_{s}" for p in names for s in ("mean", "std")]
    hdr += [f"D{j + 1}_T_{s}" for j in range(k) for s in ("p05", "p50", "p95", "truth")]
    hdr += ["acceptance"]
    rows, out = [], {}

    def row(year, label, samples, acc):
        DT = evaluate(samples, float(T))
        q = _quantiles(DT)
        r = [year, label, samples.shape[0]]
        for i in range(len(names)):
            r += [samples[:, i].mean(), samples[:, i].std(ddof=1)]
        for j in range(k):
            r += [q[0, j], q[1, j], q[2, j], d_true[j]]
        return r + [acc]

    rows.append(row(0, "prior", prior_draws, None))
    for res in results:
        rows.append(row(res.horizon, res.method, res.samples, res.diagnostics.get("acceptance_rate")))
        out[f"samples-year{res.horizon}.csv"] = csv_text(names, res.samples)
    out["posterior.csv"] = csv_text(hdr, rows)
    out["diagnostics.json"] = json_text({str(r.horizon): r.diagnostics for r in results})
    ts = np.arange(0, T + 1, dtype=float)
    plot_rows = []
    for label, samples in [("prior", prior_draws)] + [(f"year{r.horizon}", r.samples) for r in results]:
        q = _quantiles(evaluate(samples, ts))
        for i, t in enumerate(ts):
            plot_rows.append([label, t, *q[:, i, :].T.ravel()])
    qh = [f"D{j + 1}_{s}" for j in range(k) for s in ("p05", "p50", "p95")]
    out["plots/damage-bands.csv"] = csv_text(["posterior", "t", *qh], plot_rows)
    return out


def stage_reliability(pipe: Pipeline) -> dict:
    cfg = pipe.cfg
    T = cfg.cost.T
    seq = stream(pipe.seed, PRIOR_MCS_STREAM)
    pipe.seeds["prior-mcs"] = _seed_record(seq)
    prior = prior_reliability(pipe.prior.sample(cfg.samples.n_prior_mcs, seq), pipe.capacity, pipe.demand, T)
    out = {"prior.csv": prior.to_csv()}
    for y, samples in pipe.posterior_samples().items():
        out[f"posterior-year{y}.csv"] = posterior_reliability(samples, pipe.capacity, pipe.demand, T).to_csv()
    truth = sample_curves(pipe.truth, pipe.capacity, pipe.demand, T)[0]
    out["truth.csv"] = csv_text(["year", "pf", "hazard"],
                                [(i + 1, p, h) for i, (p, h) in enumerate(zip(truth, hazard_from_pf(truth)))])
    return out


COST_HEADER = ["ratio", "w", "t_repair", "repair", "risk", "total", "cv", "std_error"]


def _cost_rows(ratio, table):
    return [[ratio, o.w, o.t_repair, o.repair, o.risk, o.total, o.cv, o.std_error] for o in table.outcomes]


def _theta_csv(pipe) -> str:
    return csv_text(list(pipe.prior.names), pipe.thetas)


def stage_lcc_prior(pipe: Pipeline) -> dict:
    cfg, key = pipe.cfg, sample_key(pipe.thetas)
    w_grid = cfg.w_values()
    prior_h = hazard_from_pf(pipe.pf.mean(axis=0))
    rows, best = [], []
    for ratio in cfg.cost.ratios:
        tab = lcc_prior(pipe.pf, prior_h, cfg.cost_model(ratio), w_grid, key)
        rows += _cost_rows(ratio, tab)
        b = tab.best()
        best.append([ratio, b.w, b.t_repair, b.repair, b.risk, b.total, b.cv, b.std_error])
    curve = [(i + 1, p, h) for i, (p, h) in enumerate(zip(pipe.pf.mean(axis=0), prior_h))]
    return {
        "costs.csv": csv_text(COST_HEADER, rows),
        "optimum.csv": csv_text(COST_HEADER, best),
        "theta.csv": _theta_csv(pipe),
        "prior-curve.csv": csv_text(["year", "pf", "hazard"], curve),
        "plots/lcc-vs-w.csv": csv_text(COST_HEADER, rows),
    }


def stage_lcc_preposterior(pipe: Pipeline) -> dict:
    cfg, key = pipe.cfg, sample_key(pipe.thetas)
    H = pipe.hazards()
    w_grid = cfg.w_values()
    rows, best = [], []
    for ratio in cfg.cost.ratios:
        tab = lcc_preposterior(pipe.pf, H, cfg.cost_model(ratio), w_grid, key)
        rows += _cost_rows(ratio, tab)
        b = tab.best()
        best.append([ratio, b.w, None, b.repair, b.risk, b.total, b.cv, b.std_error])
    T = H.shape[1]
    return {
        "costs.csv": csv_text(COST_HEADER, rows),
        "optimum.csv": csv_text(COST_HEADER, best),
        "hazards.csv": csv_text(["sample", *[f"h{i}" for i in range(1, T + 1)]],
                                [[k, *H[k]] for k in range(H.shape[0])]),
    }


def _value_rows(pipe: Pipeline, with_preposterior: bool):
    cfg = pipe.cfg
    H = pipe.hazards() if with_preposterior else None
    vt = value_tables(pipe.pf, pipe.thetas, cfg.cost.ratios, cfg.w_values(), H, c_F=cfg.cost.c_F, r=cfg.cost.r)
    return vt.summary()


def stage_voi(pipe: Pipeline) -> dict:
    rows = _value_rows(pipe, True)
    hdr = ["ratio", "prior_w", "prior_t_repair", "prior_total", "preposterior_w", "preposterior_total",
           "voi", "voi_se", "voi_cv"]
    table = [[r["ratio"], r["prior_w"], r["prior_t_repair"], r["prior_total"], r["preposterior_w"],
              r["preposterior_total"], r["voi"], r["voi_se"],
              r["voi_se"] / abs(r["voi"]) if r["voi"] else 0.0] for r in rows]
    return {"voi.csv": csv_text(hdr, table), "summary.json": json_text(rows)}


def stage_vppi(pipe: Pipeline) -> dict:
    rows = _value_rows(pipe, False)
    hdr = ["ratio", "prior_w", "prior_t_repair", "prior_total", "perfect_total", "vppi", "vppi_se"]
    table = [[r["ratio"], r["prior_w"], r["prior_t_repair"], r["prior_total"], r["perfect_total"], r["vppi"],
              r["vppi_se"]] for r in rows]
    return {"vppi.csv": csv_text(hdr, table), "summary.json": json_text(rows)}


def stage_sensor_study(pipe: Pipeline) -> dict:
    cfg, key = pipe.cfg, sample_key(pipe.thetas)
    cost = CostModel(c_F=cfg.cost.c_F, c_R=cfg.sensor_study.c_R, r=cfg.cost.r, T=cfg.cost.T)
    w_grid = cfg.w_values()
    prior_h = hazard_from_pf(pipe.pf.mean(axis=0))
    p = lcc_prior(pipe.pf, prior_h, cost, w_grid, key).best()
    perfect = lcc_perfect(pipe.pf, cost, w_grid, key)
    vppi = paired_difference(p, perfect)
    rows, summary = [], []
    for n in cfg.sensor_study.layouts:
        q = lcc_preposterior(pipe.pf, pipe.hazards(n), cost, w_grid, key).best()
        v = paired_difference(p, q)
        rows.append([n, cost.c_R, p.total, q.w, q.total, v.value, v.std_error, vppi.value, vppi.std_error])
        summary.append({"n_sensors": n, "c_R": cost.c_R, "prior_total": p.total, "preposterior_w": q.w,
                        "preposterior_total": q.total, "voi": v.value, "voi_se": v.std_error,
                        "vppi": vppi.value, "vppi_se": vppi.std_error})
    hdr = ["n_sensors", "c_R", "prior_total", "preposterior_w", "preposterior_total", "voi", "voi_se",
           "vppi", "vppi_se"]
    return {"voi.csv": csv_text(hdr, rows), "summary.json": json_text(summary)}


STAGE_FUNCS = {
    "build-surrogate": stage_build_surrogate,
    "simulate-data": stage_simulate_data,
    "update": stage_update,
    "reliability": stage_reliability,
    "lcc-prior": stage_lcc_prior,
    "lcc-preposterior": stage_lcc_preposterior,
    "voi": stage_voi,
    "vppi": stage_vppi,
    "sensor-study": stage_sensor_study,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shm-voi", description=__doc__.splitlines()[0])
    p.add_argument("stage", choices=STAGES + ("all",))
    p.add_argument("--config", type=Path, default=None, help="TOML study configuration (default: all defaults)")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes for per-sample jobs")
    p.add_argument("--scale", choices=("desk", "paper"), default=None, help="sample-count preset")
    p.add_argument("--output", type=Path, default=None, help="override the output directory")
    p.add_argument("--emit-plots", action="store_true", help="also write plot-ready CSVs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, scale=args.scale, seed=args.seed)
        if args.output is not None:
            cfg.study.output_dir = str(args.output)
        pipe = Pipeline(cfg, workers=args.workers, emit_plots=args.emit_plots)
        stages = STAGES if args.stage == "all" else (args.stage,)
        if args.stage == "all" and cfg.study.case == "scour":
            stages = tuple(s for s in STAGES if s != "sensor-study")
        for stage in stages:
            res = run_stage(stage, pipe)
            status = "cached" if res["skipped"] else "done"
            print(f"{stage}: {status} -> {cfg.output / stage}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShmVoiError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
