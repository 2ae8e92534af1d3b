"""Damage-grid surrogates of the FE model.

A :class:`GridTable` stores, on a tensor grid of damage values, the tracked
modal eigenvalues, the vertical mode-shape components at every top-edge
node and the static capacity. Queries go through nearest-neighbour lookup,
multilinear interpolation or a total-degree polynomial fit
(:class:`PolySurface`). :class:`ModalForward` packages a table for a given
sensor layout as the forward model of the Bayesian update.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
import dataclasses
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BuildError, ConfigurationError, ExtrapolationError, FitError, ShmVoiError
from .fe import (
    BridgeModel, MeshConfig, apply_corrosion, apply_scour, build_model, governing_stress, modal_analysis,
)
from .vibration import second_difference

log = logging.getLogger(__name__)

DEFAULT_AXES = {
    "scour": (np.linspace(0.0, 30.0, 301),),
    "corrosion": (np.linspace(0.0, 12.0, 61), np.linspace(0.0, 12.0, 61)),
}


@dataclass(frozen=True, eq=False)
class GridTable:
    """Modal and static outputs on a tensor grid of damage values.

    Attributes
    ----------
    axes : tuple of ndarray
        Strictly increasing grid values, one array per damage dimension.
    eigenvalues : ndarray, shape (*grid, n_modes)
    shapes : ndarray, shape (*grid, n_modes, n_top)
        Vertical components at the top-edge nodes of the mass-normalized,
        tracked mode shapes.
    capacity_parts : ndarray, shape (*grid, n_parts)
        Stress ratio of each critical section; the capacity is their minimum.
    top_x : ndarray
        Abscissae of the top-edge nodes.
    """

    case: str
    axes: tuple
    eigenvalues: np.ndarray
    shapes: np.ndarray
    capacity_parts: np.ndarray
    top_x: np.ndarray
    n_track: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for ax in self.axes:
            if ax.ndim != 1 or np.any(np.diff(ax) <= 0):
                raise ConfigurationError("grid axes must be strictly increasing 1-D arrays")
        if self.eigenvalues.shape[: self.dim] != self.grid_shape:
            raise ConfigurationError("stored outputs do not match the grid shape")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def grid_shape(self) -> tuple:
        return tuple(ax.size for ax in self.axes)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[-1]

    @property
    def capacity(self) -> np.ndarray:
        return self.capacity_parts.min(axis=-1)

    @property
    def lower(self) -> np.ndarray:
        return np.array([ax[0] for ax in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([ax[-1] for ax in self.axes])

    def points(self) -> np.ndarray:
        """All grid points, (n_points, dim), in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def quantity(self, name: str) -> np.ndarray:
        """Stored values flattened over the grid: (n_points, ...)."""
        arr = {
            "eigenvalues": self.eigenvalues, "shapes": self.shapes,
            "capacity": self.capacity[..., None], "capacity_parts": self.capacity_parts,
        }.get(name)
        if arr is None:
            raise ConfigurationError(f"unknown grid quantity {name!r}")
        return arr.reshape(self.n_points, *arr.shape[self.dim:])

    # ---------------------------------------------------------------- persistence

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"axis{i}": ax for i, ax in enumerate(self.axes)}
        np.savez(
            path, eigenvalues=self.eigenvalues, shapes=self.shapes, capacity_parts=self.capacity_parts,
            top_x=self.top_x, **arrays,
        )
        meta = dict(self.meta, case=self.case, n_track=self.n_track)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "GridTable":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        with np.load(path) as z:
            n_ax = sum(1 for k in z.files if k.startswith("axis"))
            return cls(
                case=meta["case"], axes=tuple(z[f"axis{i}"] for i in range(n_ax)),
                eigenvalues=z["eigenvalues"], shapes=z["shapes"], capacity_parts=z["capacity_parts"],
                top_x=z["top_x"], n_track=int(meta["n_track"]), meta=meta,
            )


# ---------------------------------------------------------------- building


def damaged_model(model: BridgeModel, case: str, point) -> BridgeModel:
    point = np.atleast_1d(point)
    if case == "scour":
        return apply_scour(model, float(point[0]))
    if case == "corrosion":
        return apply_corrosion(model, float(point[0]), float(point[1]))
    raise ConfigurationError(f"unknown damage case {case!r}")


def _track(prev: np.ndarray, cand: np.ndarray, M) -> np.ndarray:
    """Indices into ``cand`` columns continuing the modes in ``prev`` (then sign-aligned)."""
    cross = prev.T @ (M @ cand)
    mac = cross**2 / np.outer(
        np.einsum("ij,ij->j", prev, M @ prev), np.einsum("ij,ij->j", cand, M @ cand)
    )
    pick = -np.ones(prev.shape[1], dtype=int)
    work = mac.copy()
    for _ in range(prev.shape[1]):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        pick[i] = j
        work[i, :] = -1.0
        work[:, j] = -1.0
    return pick


def _evaluate_line(model, case, line_points, start_shapes, n_modes, n_track, sigma0, with_capacity):
    """Modal and static outputs along a sequence of points, tracking modes from ``start_shapes``.

    Returns eigenvalues, top-edge shapes, capacity ratios and the list of
    full tracked shape matrices at every point.
    """
    top_vert = 2 * model.top_nodes() + 1
    prev = start_shapes
    out_lam, out_shp, out_cap, fulls = [], [], [], []
    for p in line_points:
        try:
            dm = damaged_model(model, case, p)
            sol = modal_analysis(dm, n_track)
            R = sigma0 / governing_stress(dm, case) if with_capacity else np.full(sigma0.shape, np.nan)
        except ShmVoiError as exc:
            raise BuildError(f"FE evaluation failed at damage point {tuple(np.atleast_1d(p))}: {exc}") from exc
        if prev is None:
            phi = sol.shapes[:, :n_modes]
            lam = sol.eigenvalues[:n_modes]
        else:
            pick = _track(prev, sol.shapes, model.M)
            phi = sol.shapes[:, pick]
            lam = sol.eigenvalues[pick]
            s = np.sign(np.einsum("ij,ij->j", prev, model.M @ phi))
            phi = phi * np.where(s == 0, 1.0, s)
        prev = phi
        fulls.append(phi)
        out_lam.append(lam)
        out_shp.append(phi[top_vert].T)
        out_cap.append(R)
    return np.array(out_lam), np.array(out_shp), np.array(out_cap), fulls


def _line_job(args):
    cfg, case, pts, start, n_modes, n_track, sigma0, cap = args
    return _evaluate_line(build_model(cfg), case, pts, start, n_modes, n_track, sigma0, cap)[:3]


def build_grid(
    case: str,
    config: MeshConfig | None = None,
    axes=None,
    n_modes: int = 6,
    n_track: int | None = None,
    capacity: bool = True,
    workers: int = 1,
) -> GridTable:
    """Evaluate the FE model over a damage grid with mode tracking.

    Modes are followed from the undamaged point by mass-weighted MAC
    against the neighbouring grid point, out of ``n_track`` candidate
    modes. For a 2-D grid the first axis is traversed at zero second-axis
    damage, then each line along the second axis starts from that point;
    lines are independent and may run in parallel.
    """
    if case not in DEFAULT_AXES:
        raise ConfigurationError(f"unknown damage case {case!r}")
    cfg = config or MeshConfig()
    axes = tuple(np.asarray(a, dtype=float) for a in (axes or DEFAULT_AXES[case]))
    if len(axes) != len(DEFAULT_AXES[case]):
        raise ConfigurationError(f"{case} grids need {len(DEFAULT_AXES[case])} axes")
    if any(np.any(a < 0) for a in axes):
        raise ConfigurationError("damage grid values must be non-negative")
    n_track = n_track or n_modes + 4
    model = build_model(cfg)
    sigma0 = governing_stress(model, case)

    if case == "scour":
        lam, shp, R, _ = _evaluate_line(model, case, axes[0], None, n_modes, n_track, sigma0, capacity)
    else:
        # the D2 = 0 line seeds one tracked line along D2 per D1 value
        first = [(d1, axes[1][0]) for d1 in axes[0]]
        lam0, shp0, R0, starts = _evaluate_line(model, case, first, None, n_modes, n_track, sigma0, capacity)
        jobs = [
            (cfg, case, [(d1, d2) for d2 in axes[1][1:]], starts[i], n_modes, n_track, sigma0, capacity)
            for i, d1 in enumerate(axes[0])
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_line_job, jobs))
        else:
            results = [_evaluate_line(model, *j[1:])[:3] for j in jobs]
        lam = np.stack([np.concatenate([lam0[i][None], r[0]]) for i, r in enumerate(results)])
        shp = np.stack([np.concatenate([shp0[i][None], r[1]]) for i, r in enumerate(results)])
        R = np.stack([np.concatenate([R0[i][None], r[2]]) for i, r in enumerate(results)])

    meta = {
        "mesh": asdict(cfg), "axes": [[float(a[0]), float(a[-1]), int(a.size)] for a in axes],
        "n_modes": n_modes,
    }
    return GridTable(
        case=case, axes=axes, eigenvalues=lam, shapes=shp, capacity_parts=R,
        top_x=model.coords[model.top_nodes(), 0].copy(), n_track=n_track, meta=meta,
    )


def grid_hash(case: str, config: MeshConfig | None = None, axes=None, n_modes: int = 6,
              n_track: int | None = None) -> str:
    cfg = config or MeshConfig()
    axes = axes or DEFAULT_AXES[case]
    doc = {
        "case": case, "mesh": asdict(cfg), "n_modes": n_modes, "n_track": n_track or n_modes + 4,
        "axes": [np.asarray(a, dtype=float).tolist() for a in axes], "format": 1,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def cached_grid(case: str, cache_dir, config: MeshConfig | None = None, axes=None,
                n_modes: int = 6, n_track: int | None = None, workers: int = 1):
    """Load a grid from ``cache_dir`` or build and store it.

    Returns ``(table, hit)``. The file name carries a hash of the build
    inputs and the sidecar manifest repeats it; a mismatch triggers a rebuild.
    """
    h = grid_hash(case, config, axes, n_modes, n_track)
    path = Path(cache_dir) / f"grid-{case}-{h}.npz"
    if path.exists() and path.with_suffix(".json").exists():
        try:
            table = GridTable.load(path)
            if table.meta.get("hash") == h:
                return table, True
        except (OSError, KeyError, ValueError):
            log.warning("corrupt grid cache %s, rebuilding", path)
    table = build_grid(case, config, axes, n_modes, n_track, workers=workers)
    table.meta["hash"] = h
    table.save(path)
    return table, False


# ---------------------------------------------------------------- queries


def nearest_index(axis: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the nearest axis value; exact ties go to the lower index."""
    x = np.asarray(x, dtype=float)
    hi = np.clip(np.searchsorted(axis, x), 1, axis.size - 1)
    lo = hi - 1
    take_lo = (x - axis[lo]) <= (axis[hi] - x)
    return np.where(take_lo, lo, hi) if axis.size > 1 else np.zeros_like(hi)


def _check_band(table: GridTable, pts: np.ndarray) -> None:
    step = np.array([ax[1] - ax[0] if ax.size > 1 else 0.0 for ax in table.axes])
    bad = np.any((pts < table.lower - step) | (pts > table.upper + step), axis=-1)
    if np.any(bad):
        p = pts[np.argmax(bad)]
        raise ExtrapolationError(
            f"damage point {tuple(p)} outside grid range {table.lower.tolist()}..{table.upper.tolist()}"
        )


def grid_indices(table: GridTable, points, clamp: bool = False) -> np.ndarray:
    """Flat indices of the nearest grid points of ``points`` (..., dim)."""
    pts = np.asarray(points, dtype=float).reshape(-1, table.dim)
    if not clamp:
        _check_band(table, pts)
    idx = [nearest_index(ax, pts[:, i]) for i, ax in enumerate(table.axes)]
    return np.ravel_multi_index(idx, table.grid_shape)


def lookup_nearest(table: GridTable, point) -> dict:
    """Outputs of the grid point nearest to ``point`` (Euclidean)."""
    k = int(grid_indices(table, point)[0])
    return {
        "index": k,
        "eigenvalues": table.quantity("eigenvalues")[k],
        "shapes": table.quantity("shapes")[k],
        "capacity": float(table.quantity("capacity")[k, 0]),
        "capacity_parts": table.quantity("capacity_parts")[k],
    }


def interpolate(table: GridTable, points, name: str) -> np.ndarray:
    """Multilinear interpolation of a stored quantity; points are clamped to the grid."""
    pts = np.clip(np.asarray(points, dtype=float).reshape(-1, table.dim), table.lower, table.upper)
    return _interp_values(table, table.quantity(name), pts)


# ---------------------------------------------------------------- polynomial surfaces


def _exponents(dim: int, degree: int) -> np.ndarray:
    return np.array([e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree])


@dataclass(frozen=True, eq=False)
class PolySurface:
    """Total-degree polynomial in inputs scaled to [-1, 1] over the fit box.

    ``coef`` has one column per output; ``max_rel_residual`` is the largest
    relative misfit of each output on the training points.
    """

    degree: int
    exponents: np.ndarray
    coef: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    max_rel_residual: np.ndarray
    mean_rel_residual: np.ndarray

    @property
    def dim(self) -> int:
        return self.exponents.shape[1]

    def _basis(self, X: np.ndarray) -> np.ndarray:
        s = 2.0 * (X - self.lower) / (self.upper - self.lower) - 1.0
        out = None
        for d in range(self.dim):
            vander = np.vander(s[:, d], self.degree + 1, increasing=True)
            cols = vander[:, self.exponents[:, d]]
            out = cols if out is None else out * cols
        return out

    def __call__(self, points, clamp: bool = True) -> np.ndarray:
        X = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if clamp:
            Xc = np.clip(X, self.lower, self.upper)
            if np.any(Xc != X):
                log.debug("polynomial surface query clamped to its fit range")
            X = Xc
        return self._basis(X) @ self.coef


def fit_poly(X, y, degree: int, lower=None, upper=None, max_cond: float = 1e10) -> PolySurface:
    """Least-squares total-degree fit of ``y`` (n,) or (n, q) on points ``X`` (n, dim)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(y, dtype=float)
    Y = Y.reshape(Y.shape[0], -1)
    lower = X.min(axis=0) if lower is None else np.asarray(lower, dtype=float)
    upper = X.max(axis=0) if upper is None else np.asarray(upper, dtype=float)
    if np.any(upper <= lower):
        raise FitError("degenerate fit box: every input needs a positive range")
    exps = _exponents(X.shape[1], degree)
    if X.shape[0] < exps.shape[0]:
        raise FitError(f"{X.shape[0]} points cannot determine {exps.shape[0]} coefficients")
    proto = PolySurface(degree, exps, np.zeros((exps.shape[0], Y.shape[1])), lower, upper,
                        np.zeros(Y.shape[1]), np.zeros(Y.shape[1]))
    V = proto._basis(X)
    if np.linalg.cond(V) > max_cond:
        raise FitError(f"ill-conditioned fit at degree {degree}; reduce the degree")
    coef = np.linalg.lstsq(V, Y, rcond=None)[0]
    if not np.all(np.isfinite(coef)):
        raise FitError("non-finite polynomial coefficients")
    scale = np.maximum(np.abs(Y), np.finfo(float).tiny)
    rel = np.abs(V @ coef - Y) / scale
    return PolySurface(degree, exps, coef, lower, upper, rel.max(axis=0), rel.mean(axis=0))


def fit_poly_surface(table: GridTable, quantity: str, degree: int = 4) -> PolySurface:
    """Fit ``quantity`` ('eigenvalues', 'capacity' or 'capacity_parts') over the grid."""
    if quantity not in ("eigenvalues", "capacity", "capacity_parts"):
        raise ConfigurationError(f"cannot fit a surface to {quantity!r}")
    return fit_poly(table.points(), table.quantity(quantity), degree, table.lower, table.upper)


def eval_surface(surface: PolySurface, point) -> np.ndarray:
    """Evaluate at one or more points, clamping to the fitted range."""
    out = surface(point)
    return out[0] if np.ndim(point) <= 1 else out


# ---------------------------------------------------------------- forward model


@dataclass(frozen=True, eq=False)
class ModalForward:
    """Forward model: damage -> (eigenvalues, sensor shapes, sensor curvatures).

    ``method`` selects how grid data are queried: 'nearest', 'linear' or
    'cubic'. Polynomial surfaces, when given, replace the grid data for
    that output (the shape and curvature surfaces produce flattened
    (modes x sensors) vectors). Queries outside the grid are clamped to its
    boundary.
    """

    table: GridTable
    sensor_index: np.ndarray
    spacing: float
    method: str = "nearest"
    eig_surface: PolySurface | None = None
    n_modes: int | None = None
    shape_surface: PolySurface | None = None
    curv_surface: PolySurface | None = None

    def __post_init__(self):
        if self.method not in ("nearest", "linear", "cubic"):
            raise ConfigurationError(f"unknown lookup method {self.method!r}")
        m = self.n_modes or self.table.n_modes
        if m > self.table.n_modes:
            raise ConfigurationError(f"grid stores {self.table.n_modes} modes, {m} requested")
        object.__setattr__(self, "n_modes", m)
        sh = self.table.quantity("shapes")[:, :m][..., self.sensor_index]
        object.__setattr__(self, "_shapes", sh)
        object.__setattr__(self, "_curv", second_difference(sh, self.spacing) if sh.shape[-1] >= 3 else None)
        object.__setattr__(self, "_lam", self.table.quantity("eigenvalues")[:, :m])

    @property
    def n_sensors(self) -> int:
        return int(self.sensor_index.size)

    def predict(self, D, parts=("eigenvalues", "shapes", "curvatures")):
        """Model outputs for damage ``D`` of shape (..., dim); leading axes are kept.

        Returns ``(eigenvalues, shapes, curvatures)``; entries not listed in
        ``parts`` (and curvatures for fewer than 3 sensors) are ``None``.
        """
        D = np.asarray(D, dtype=float)
        lead = D.shape[:-1]
        pts = np.clip(D.reshape(-1, self.table.dim), self.table.lower, self.table.upper)
        cache = {}

        def query(v):
            if not cache:
                if self.method == "nearest":
                    cache["idx"] = grid_indices(self.table, pts, clamp=True)
                else:
                    cache["flat"], cache["w"] = _stencil(self.table, pts, self.method)
            if self.method == "nearest":
                return v[cache["idx"]]
            return np.einsum("pc,pc...->p...", cache["w"], v[cache["flat"]])

        lam = shp = curv = None
        shape = (pts.shape[0], self.n_modes, self.n_sensors)
        if "eigenvalues" in parts:
            lam = self.eig_surface(pts)[:, : self.n_modes] if self.eig_surface is not None else query(self._lam)
        if "shapes" in parts:
            shp = self.shape_surface(pts).reshape(shape) if self.shape_surface is not None else query(self._shapes)
        if "curvatures" in parts and self._curv is not None:
            curv = self.curv_surface(pts).reshape(shape) if self.curv_surface is not None else query(self._curv)
        rs = lambda a: None if a is None else a.reshape(*lead, *a.shape[1:])
        return rs(lam), rs(shp), rs(curv)

    def with_method(self, method: str) -> "ModalForward":
        return dataclasses.replace(self, method=method)


def _stencil(table: GridTable, pts: np.ndarray, kind: str):
    """Flat grid indices (n, c) and weights (n, c) of a tensor-product interpolation stencil.

    ``kind`` is 'linear' (multilinear) or 'cubic' (Catmull-Rom, continuously
    differentiable; edge cells reuse the boundary value as the outer
    neighbour). Points must lie inside the grid.
    """
    offsets = np.array([0, 1]) if kind == "linear" else np.array([-1, 0, 1, 2])
    flat = np.zeros((pts.shape[0], 1), dtype=np.int64)
    weight = np.ones((pts.shape[0], 1))
    stride = 1
    for i in reversed(range(table.dim)):
        ax = table.axes[i]
        x = pts[:, i]
        hi = np.minimum(np.maximum(np.searchsorted(ax, x, side="right"), 1), ax.size - 1)
        lo = hi - 1
        t = (x - ax[lo]) / (ax[hi] - ax[lo])
        if kind == "linear":
            w = np.stack([1.0 - t, t], axis=1)
        else:
            t2, t3 = t * t, t * t * t
            w = np.stack([(-t3 + 2 * t2 - t), (3 * t3 - 5 * t2 + 2), (-3 * t3 + 4 * t2 + t), (t3 - t2)], axis=1) / 2
        nodes = np.minimum(np.maximum(lo[:, None] + offsets, 0), ax.size - 1)
        flat = (nodes[:, :, None] * stride + flat[:, None, :]).reshape(pts.shape[0], -1)
        weight = (w[:, :, None] * weight[:, None, :]).reshape(pts.shape[0], -1)
        stride *= ax.size
    return flat, weight


def _interp_values(table: GridTable, values: np.ndarray, pts: np.ndarray, kind: str = "linear") -> np.ndarray:
    """Tensor-product interpolation of per-point ``values`` (n_points, ...)."""
    flat, w = _stencil(table, pts, kind)
    return np.einsum("pc,pc...->p...", w, values[flat])


def make_forward(table: GridTable, layout, smooth: bool = False, eig_degree: int = 4,
                 vector_degree: int = 6, n_modes: int | None = None) -> ModalForward:
    """Forward model for a sensor layout.

    scour: nearest-neighbour for everything. corrosion: polynomial
    eigenvalues and nearest-neighbour shapes and curvatures.
    ``smooth=True`` gives a continuously differentiable forward for
    Hessian-based inference: cubic interpolation in 1-D, polynomial
    surfaces for shapes and curvatures in 2-D.
    """
    lookup = {round(float(x), 9): i for i, x in enumerate(table.top_x)}
    try:
        index = np.array([lookup[round(float(x), 9)] for x in layout.x])
    except KeyError as exc:
        raise ConfigurationError("sensor layout does not sit on the grid's top-edge nodes") from exc
    fw = ModalForward(table, index, layout.spacing, "nearest", None, n_modes)
    if table.case == "scour":
        return fw.with_method("cubic") if smooth else fw
    eig = fit_poly_surface(table, "eigenvalues", eig_degree)
    fw = dataclasses.replace(fw, eig_surface=eig)
    if not smooth:
        return fw
    X = table.points()
    shp = fit_poly(X, fw._shapes.reshape(X.shape[0], -1), vector_degree, table.lower, table.upper)
    curv = None
    if fw._curv is not None:
        curv = fit_poly(X, fw._curv.reshape(X.shape[0], -1), vector_degree, table.lower, table.upper)
    return dataclasses.replace(fw, method="cubic", shape_surface=shp, curv_surface=curv)
