"""Study configuration: TOML schema, defaults, validation and hashing."""
from __future__ import annotations

import difflib
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .bayes import LikelihoodConfig
from .decision import CostModel, default_w_grid
from .deterioration import Marginal, PriorSpec, default_prior
from .errors import ConfigurationError, DomainError
from .fe import MeshConfig

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

CASES = ("scour", "corrosion")
SCALES = ("desk", "paper")
SENSOR_PRESETS = (12, 24)

TRUTH = {"scour": [9.85e-4, 2.28], "corrosion": [0.65, 0.55, 0.42, 0.48]}


@dataclass
class StudySection:
    case: str = "scour"
    seed: int = 2024
    output_dir: str = "runs"
    scale: str = "desk"
    data_path: str = "fast"
    method: str = "laplace"
    sensors: int = 0  # 0: 12 for scour, 24 for corrosion


@dataclass
class GridSection:
    scour_points: int = 301
    scour_max: float = 30.0
    corrosion_points: int = 61
    corrosion_max: float = 12.0
    n_modes: int = 6
    eig_degree: int = 4
    capacity_degree: int = 4
    vector_degree: int = 6


@dataclass
class PriorSection:
    # list of {family, mean, cv} tables, one per parameter; empty: case default
    marginals: list = field(default_factory=list)


@dataclass
class LikelihoodSection:
    c_lambda: float = 0.02
    c_phi: float = 0.02
    use_shapes: bool = False
    use_curvatures: bool | None = None  # None: case default


@dataclass
class VibrationSection:
    fs: float = 256.0
    duration: float = 600.0
    damping: float = 0.02
    noise: float = 0.02
    c_sim: float = 0.02
    ssi_order: int = 24
    ssi_block_rows: int = 40


@dataclass
class SamplesSection:
    n_theta: int = 0  # 0: scale default
    n_prior_mcs: int = 10000
    n_mcmc: int = 5000
    n_laplace: int = 0  # 0: scale default


@dataclass
class UpdateSection:
    truth: list = field(default_factory=list)  # empty: case default
    years: int = 50
    checkpoints: list = field(default_factory=lambda: [10, 25, 50])
    method: str = "mcmc"


@dataclass
class DemandSection:
    pf0: float = 1e-6
    cv: float = 0.2


@dataclass
class CostSection:
    c_F: float = 1e7
    ratios: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    r: float = 0.02
    T: int = 50


@dataclass
class WGridSection:
    n: int = 200
    low: float = 1e-6
    high: float = 1e-1


@dataclass
class SensorStudySection:
    layouts: list = field(default_factory=lambda: [24, 12])
    c_R: float = 3.5e4


@dataclass
class StudyConfig:
    study: StudySection = field(default_factory=StudySection)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    grid: GridSection = field(default_factory=GridSection)
    prior: PriorSection = field(default_factory=PriorSection)
    likelihood: LikelihoodSection = field(default_factory=LikelihoodSection)
    vibration: VibrationSection = field(default_factory=VibrationSection)
    samples: SamplesSection = field(default_factory=SamplesSection)
    update: UpdateSection = field(default_factory=UpdateSection)
    demand: DemandSection = field(default_factory=DemandSection)
    cost: CostSection = field(default_factory=CostSection)
    w_grid: WGridSection = field(default_factory=WGridSection)
    sensor_study: SensorStudySection = field(default_factory=SensorStudySection)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def hash(self) -> str:
        """Hash of the normalized configuration (independent of key order)."""
        doc = self.to_dict()
        doc["study"].pop("output_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def output(self) -> Path:
        return Path(self.study.output_dir)

    def prior_spec(self) -> PriorSpec:
        m = self.prior.marginals
        base = default_prior(self.study.case)
        if not m:
            return base
        return PriorSpec(tuple(Marginal(d["family"], float(d["mean"]), float(d["cv"])) for d in m), base.names)

    def likelihood_config(self) -> LikelihoodConfig:
        lk = self.likelihood
        return LikelihoodConfig(c_lambda=lk.c_lambda, c_phi=lk.c_phi, use_shapes=lk.use_shapes,
                                use_curvatures=bool(lk.use_curvatures), n_modes=self.grid.n_modes)

    def cost_model(self, ratio: float) -> CostModel:
        return CostModel.from_ratio(ratio, c_F=self.cost.c_F, r=self.cost.r, T=self.cost.T)

    def w_values(self):
        return default_w_grid(self.w_grid.n, self.w_grid.low, self.w_grid.high)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _section_types() -> dict:
    return {f.name: f.default_factory for f in fields(StudyConfig)}


def _coerce(path: str, value, default):
    """Type-check ``value`` against the default it replaces."""
    if isinstance(default, bool) or default is None and isinstance(value, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, (list, tuple)):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path}: expected a list, got {value!r}")
        return type(default)(value)
    return value


def validate_config(doc: dict | None, scale: str | None = None, seed: int | None = None,
                    check_physics: bool = True) -> tuple[StudyConfig | None, list[str]]:
    """Normalize a parsed document into a :class:`StudyConfig`.

    Returns ``(config, errors)``; ``config`` is None when any error was
    found. Every error message starts with the offending field path.
    """
    doc = dict(doc or {})
    errors: list[str] = []
    sections = {}
    factories = _section_types()
    for key in doc:
        if key not in factories:
            errors.append(_unknown(key, factories))
    for name, factory in factories.items():
        default = factory()
        raw = doc.get(name, {})
        if not isinstance(raw, dict):
            errors.append(f"{name}: expected a table")
            sections[name] = default
            continue
        known = {f.name: getattr(default, f.name) for f in fields(default)}
        values = {}
        for k, v in raw.items():
            if k not in known:
                errors.append(_unknown(f"{name}.{k}", {f"{name}.{n}": None for n in known}))
                continue
            try:
                values[k] = _coerce(f"{name}.{k}", v, known[k])
            except ConfigurationError as exc:
                errors.append(str(exc))
        if name == "mesh" and "span_lengths" in values:
            values["span_lengths"] = tuple(float(x) for x in values["span_lengths"])
        try:
            sections[name] = type(default)(**{**known, **values})
        except ConfigurationError as exc:
            errors.append(f"{name}: {exc}")
            sections[name] = default
    cfg = StudyConfig(**sections)
    if scale is not None:
        cfg.study.scale = scale
    if seed is not None:
        cfg.study.seed = int(seed)
    _apply_defaults(cfg)
    errors.extend(_cross_checks(cfg, check_physics and not errors))
    return (None if errors else cfg), errors


def _unknown(path: str, choices) -> str:
    leaf = path.split(".")[-1]
    names = [c.split(".")[-1] for c in choices]
    close = difflib.get_close_matches(leaf, names, n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    return f"{path}: unknown key{hint}"


def _apply_defaults(cfg: StudyConfig) -> None:
    s = cfg.study
    if s.sensors == 0:
        s.sensors = 12 if s.case == "scour" else 24
    if cfg.likelihood.use_curvatures is None:
        cfg.likelihood.use_curvatures = s.case == "corrosion" and not cfg.likelihood.use_shapes
    if cfg.samples.n_theta == 0:
        cfg.samples.n_theta = 200 if s.scale == "desk" else (1000 if s.case == "scour" else 2000)
    if cfg.samples.n_laplace == 0:
        cfg.samples.n_laplace = 2000 if s.scale == "desk" else 10000
    if not cfg.update.truth and s.case in TRUTH:
        cfg.update.truth = list(TRUTH[s.case])


def _cross_checks(cfg: StudyConfig, physics: bool) -> list[str]:
    e = []
    s = cfg.study
    if s.case not in CASES:
        e.append(f"study.case: must be one of {CASES}, got {s.case!r}")
    if s.scale not in SCALES:
        e.append(f"study.scale: must be one of {SCALES}, got {s.scale!r}")
    if s.data_path not in ("fast", "ssi"):
        e.append(f"study.data_path: must be 'fast' or 'ssi', got {s.data_path!r}")
    if s.method not in ("laplace", "mcmc"):
        e.append(f"study.method: must be 'laplace' or 'mcmc', got {s.method!r}")
    if cfg.update.method not in ("laplace", "mcmc"):
        e.append(f"update.method: must be 'laplace' or 'mcmc', got {cfg.update.method!r}")
    for path, n in [("study.sensors", s.sensors)] + [("sensor_study.layouts", n) for n in cfg.sensor_study.layouts]:
        if n not in SENSOR_PRESETS:
            e.append(f"{path}: unknown sensor preset {n!r}; available {SENSOR_PRESETS}")
    lk = cfg.likelihood
    if lk.c_lambda <= 0 or lk.c_phi <= 0:
        e.append("likelihood.c_lambda: prediction-error coefficients must be positive")
    if lk.use_shapes and lk.use_curvatures:
        e.append("likelihood.use_curvatures: cannot be combined with likelihood.use_shapes")
    sm = cfg.samples
    if sm.n_theta < 20:
        e.append(f"samples.n_theta: need at least 20 samples for batch-means errors, got {sm.n_theta}")
    if sm.n_prior_mcs < 100:
        e.append(f"samples.n_prior_mcs: need at least 100, got {sm.n_prior_mcs}")
    if sm.n_mcmc < 1000:
        e.append(f"samples.n_mcmc: need at least 1000, got {sm.n_mcmc}")
    if sm.n_laplace < 100:
        e.append(f"samples.n_laplace: need at least 100, got {sm.n_laplace}")
    dim = 2 if s.case == "scour" else 4
    if cfg.prior.marginals:
        if len(cfg.prior.marginals) != dim:
            e.append(f"prior.marginals: {s.case} needs {dim} marginals, got {len(cfg.prior.marginals)}")
        for i, m in enumerate(cfg.prior.marginals):
            path = f"prior.marginals[{i}]"
            if not isinstance(m, dict) or set(m) != {"family", "mean", "cv"}:
                e.append(f"{path}: expected a table with keys family, mean, cv")
                continue
            try:
                Marginal(m["family"], float(m["mean"]), float(m["cv"]))
            except (DomainError, TypeError, ValueError) as exc:
                e.append(f"{path}: {exc}")
    if len(cfg.update.truth) != dim:
        e.append(f"update.truth: {s.case} needs {dim} parameters, got {len(cfg.update.truth)}")
    if cfg.update.years < 1 or cfg.update.years >= cfg.cost.T + 1:
        e.append(f"update.years: must lie in 1..{cfg.cost.T}")
    if any(not 1 <= c <= cfg.update.years for c in cfg.update.checkpoints):
        e.append("update.checkpoints: every checkpoint must lie within the simulated years")
    c = cfg.cost
    if c.c_F < 0 or any(r <= 0 for r in c.ratios) or not c.ratios:
        e.append("cost.ratios: need a non-empty list of positive cost ratios and c_F >= 0")
    if not 0 <= c.r < 1:
        e.append(f"cost.r: discount rate must lie in [0, 1), got {c.r}")
    w = cfg.w_grid
    if not (0 < w.low < w.high) or w.n < 1:
        e.append("w_grid.low: need 0 < low < high and n >= 1")
    d = cfg.demand
    if not 0 < d.pf0 < 1 or d.cv <= 0:
        e.append("demand.pf0: need 0 < pf0 < 1 and cv > 0")
    v = cfg.vibration
    if v.noise < 0 or v.c_sim < 0:
        e.append("vibration.noise: noise levels must be non-negative")
    if v.ssi_order % 2 or v.ssi_order < 2 * cfg.grid.n_modes:
        e.append(f"vibration.ssi_order: must be even and >= {2 * cfg.grid.n_modes}")
    if v.ssi_block_rows * s.sensors <= v.ssi_order:
        e.append("vibration.ssi_block_rows: block_rows x sensors must exceed the model order")
    if physics and not e:
        from .fe import build_model, modal_analysis

        f = modal_analysis(build_model(cfg.mesh), cfg.grid.n_modes).frequencies
        f_last = f[cfg.grid.n_modes - 1]
        if v.fs <= 2.5 * f_last:
            e.append(f"vibration.fs: {v.fs:g} Hz is below the Nyquist margin 2.5 x f{cfg.grid.n_modes} "
                     f"= {2.5 * f_last:.2f} Hz (f{cfg.grid.n_modes} = {f_last:.2f} Hz)")
        if v.duration * f[0] < 1000:
            e.append(f"vibration.duration: {v.duration:g} s is shorter than 1000 periods of f1 = {f[0]:.2f} Hz")
    return e


def load_config(path=None, scale: str | None = None, seed: int | None = None) -> StudyConfig:
    """Parse and validate a TOML file (``None``: all defaults); raise on any error."""
    doc = {}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    cfg, errors = validate_config(doc, scale=scale, seed=seed)
    if errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
    return cfg
