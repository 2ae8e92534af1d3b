"""Synthetic monitoring data: ambient response, sensor noise and modal data sets."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .errors import ConfigurationError, DomainError
from .fe import BridgeModel, ModalSolution, modal_analysis


@dataclass(frozen=True)
class SensorLayout:
    """Vertical accelerometers on top-edge nodes, equally spaced."""

    nodes: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if self.nodes.size < 2:
            raise ConfigurationError("a layout needs at least 2 sensors")
        if np.unique(self.nodes).size != self.nodes.size:
            raise ConfigurationError("sensor nodes must be distinct")

    @property
    def n_sensors(self) -> int:
        return int(self.nodes.size)

    @property
    def dofs(self) -> np.ndarray:
        return 2 * self.nodes + 1

    @property
    def spacing(self) -> float:
        d = np.diff(self.x)
        return float(d.mean())

    @property
    def is_uniform(self) -> bool:
        d = np.diff(self.x)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=1e-12))

    @classmethod
    def equally_spaced(cls, model: BridgeModel, n: int) -> "SensorLayout":
        """``n`` top-edge nodes at a common node-aligned spacing, centred on the deck.

        The spacing is the multiple of the element length closest to
        ``L / (n + 1)`` that keeps the layout symmetric on the node grid.
        """
        if n < 2:
            raise ConfigurationError(f"need at least 2 sensors, got {n}")
        nx = model.config.nx
        target = nx / (n + 1)
        candidates = [k for k in range(1, nx // (n - 1) + 1) if (nx - (n - 1) * k) % 2 == 0]
        if not candidates:
            raise ConfigurationError(f"cannot place {n} symmetric sensors on {nx} elements")
        k = min(candidates, key=lambda c: (abs(c - target), -c))
        first = (nx - (n - 1) * k) // 2
        cols = first + k * np.arange(n)
        top = model.top_nodes()
        nodes = top[cols]
        return cls(nodes=nodes, x=model.coords[nodes, 0].copy())

    @classmethod
    def preset(cls, model: BridgeModel, name) -> "SensorLayout":
        n = int(name)
        if n not in (12, 24):
            raise ConfigurationError(f"unknown sensor preset {name!r}; available: 12, 24")
        return cls.equally_spaced(model, n)

    def index_in_top(self, model: BridgeModel) -> np.ndarray:
        """Positions of the sensors within ``model.top_nodes()``."""
        top = model.top_nodes()
        lookup = {int(n): i for i, n in enumerate(top)}
        return np.array([lookup[int(n)] for n in self.nodes])


@dataclass(frozen=True)
class AccelerationRecord:
    fs: float
    data: np.ndarray  # (n_sensors, n_samples)
    seed: int | None = None
    noisy: bool = False

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ConfigurationError("acceleration data must be (channels, samples)")
        if not np.all(np.isfinite(self.data)):
            raise ConfigurationError("acceleration record contains non-finite samples")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def duration(self) -> float:
        return self.data.shape[1] / self.fs

    def rms(self) -> np.ndarray:
        return np.sqrt(np.mean(self.data**2, axis=1))


@dataclass(frozen=True)
class ModalDataSet:
    """Identified (or emulated) modal data of one time instance.

    ``shapes`` and ``curvatures`` are (n_modes, n_sensors).
    """

    time: float
    eigenvalues: np.ndarray
    shapes: np.ndarray
    curvatures: np.ndarray | None = None
    mac: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if np.any(np.linalg.norm(self.shapes, axis=1) <= 0):
            raise DomainError("mode shapes must have non-zero norm")

    @property
    def n_modes(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues) / (2 * np.pi)

    def to_dict(self) -> dict:
        out = {
            "time": float(self.time),
            "eigenvalues": self.eigenvalues.tolist(),
            "shapes": self.shapes.tolist(),
        }
        if self.curvatures is not None:
            out["curvatures"] = self.curvatures.tolist()
        if self.mac is not None:
            out["mac"] = self.mac.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModalDataSet":
        curv = d.get("curvatures")
        mac = d.get("mac")
        return cls(
            time=float(d["time"]),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            shapes=np.asarray(d["shapes"], dtype=float),
            curvatures=None if curv is None else np.asarray(curv, dtype=float),
            mac=None if mac is None else np.asarray(mac, dtype=float),
        )


# ------------------------------------------------------------ response simulation


def _modal_filter(omega: float, zeta: float, dt: float):
    """ZOH-exact discrete transfer function from modal force to modal acceleration."""
    A = np.array([[0.0, 1.0], [-omega**2, -2.0 * zeta * omega]])
    B = np.array([[0.0], [1.0]])
    C = np.array([[-omega**2, -2.0 * zeta * omega]])
    D = np.array([[1.0]])
    Ad, Bd, Cd, Dd, _ = signal.cont2discrete((A, B, C, D), dt, method="zoh")
    num, den = signal.ss2tf(Ad, Bd, Cd, Dd)
    return num[0], den


def simulate_response(
    model: BridgeModel,
    layout: SensorLayout,
    fs: float = 256.0,
    duration: float = 600.0,
    damping=0.02,
    seed=None,
    amplitude: float = 1.0,
    n_modes: int = 6,
    n_sim: int | None = None,
    modal: ModalSolution | None = None,
) -> AccelerationRecord:
    """Vertical accelerations at the sensors under white-noise nodal forces.

    Every top-edge node carries an independent zero-mean Gaussian vertical
    force, held constant over each sample interval. The response is
    obtained by modal superposition of the lowest ``n_sim`` modes with modal
    damping ratios ``damping``; each mode is integrated exactly.
    """
    n_sim = n_sim or max(2 * n_modes, 12)
    if modal is None or modal.n_modes < n_sim:
        modal = modal_analysis(model, n_sim)
    f = modal.frequencies[:n_sim]
    if fs <= 2.5 * f[n_modes - 1]:
        raise ConfigurationError(
            f"fs={fs:g} Hz violates the Nyquist margin fs > 2.5 f{n_modes} = {2.5 * f[n_modes - 1]:.2f} Hz"
        )
    if duration * f[0] < 1000.0:
        raise ConfigurationError(
            f"duration={duration:g} s is shorter than 1000 fundamental periods ({1000.0 / f[0]:.1f} s)"
        )
    keep = f < 0.45 * fs  # modes that the sampling can represent
    omega = 2 * np.pi * f[keep]
    zeta = np.broadcast_to(np.asarray(damping, dtype=float), (n_sim,))[keep]
    phi = modal.shapes[:, :n_sim][:, keep]

    dt = 1.0 / fs
    n_out = int(round(duration * fs))
    n_warm = int(np.ceil(10.0 / (zeta.min() * omega.min()) * fs))
    rng = np.random.default_rng(seed)

    top_dofs = 2 * model.top_nodes() + 1
    # the modal force vector of i.i.d. nodal forces has covariance amplitude**2 * G
    G = phi[top_dofs].T @ phi[top_dofs]
    w, V = np.linalg.eigh(G)
    Lg = V * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((omega.size, n_warm + n_out))
    modal_force = amplitude * (Lg @ z)

    acc = np.empty_like(modal_force)
    for m in range(omega.size):
        b, a = _modal_filter(omega[m], zeta[m], dt)
        acc[m] = signal.lfilter(b, a, modal_force[m])
    y = phi[layout.dofs] @ acc[:, n_warm:]
    recorded = int(seed) if isinstance(seed, (int, np.integer)) else None
    return AccelerationRecord(fs=fs, data=y, seed=recorded)


def add_noise(record: AccelerationRecord, ratio: float = 0.02, seed=None) -> AccelerationRecord:
    """Per-channel Gaussian white noise with RMS ``ratio`` times the channel RMS."""
    if ratio < 0:
        raise DomainError(f"noise ratio must be non-negative, got {ratio}")
    if ratio == 0:
        return record
    rng = np.random.default_rng(seed)
    scale = ratio * record.rms()[:, None]
    noisy = record.data + scale * rng.standard_normal(record.data.shape)
    return replace(record, data=noisy, noisy=True)


# ------------------------------------------------------------ curvature


def second_difference(values: np.ndarray, spacing: float) -> np.ndarray:
    """Second derivative along the last axis of uniformly sampled ``values``.

    Central differences inside; one-sided second-order stencils at the ends
    (the 3-point stencil when only three samples exist).
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[-1]
    if n < 3:
        raise ConfigurationError(f"curvature needs at least 3 sensors, got {n}")
    h2 = spacing**2
    out = np.empty_like(v)
    out[..., 1:-1] = (v[..., :-2] - 2 * v[..., 1:-1] + v[..., 2:]) / h2
    if n == 3:
        out[..., 0] = out[..., 1]
        out[..., -1] = out[..., 1]
    else:
        out[..., 0] = (2 * v[..., 0] - 5 * v[..., 1] + 4 * v[..., 2] - v[..., 3]) / h2
        out[..., -1] = (2 * v[..., -1] - 5 * v[..., -2] + 4 * v[..., -3] - v[..., -4]) / h2
    return out


def curvature(data: ModalDataSet, spacing) -> ModalDataSet:
    """Attach mode-shape curvatures computed by finite differences.

    ``spacing`` is the sensor spacing, or the sensor abscissae (which must
    be uniform).
    """
    sp_arr = np.asarray(spacing, dtype=float)
    if sp_arr.ndim == 1:
        d = np.diff(sp_arr)
        if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise ConfigurationError("curvature requires uniformly spaced sensors")
        h = float(d[0])
    else:
        h = float(sp_arr)
    if not h > 0:
        raise ConfigurationError(f"sensor spacing must be positive, got {h}")
    return replace(data, curvatures=second_difference(data.shapes, h))


# ------------------------------------------------------------ fast path


def fast_modal_observation(forward, theta, t, c_sim: float = 0.02, seed=None) -> ModalDataSet:
    """Model modal data at damage D(theta, t) with Gaussian scatter of CoV ``c_sim``.

    Eigenvalues get relative errors; each shape (and curvature, if the
    forward model provides them) component gets an error whose std is
    ``c_sim`` times the vector norm.
    """
    return fast_history(forward, theta, [t], c_sim, seed)[0]


def fast_history(forward, theta, years, c_sim: float = 0.02, seed=None) -> list[ModalDataSet]:
    """One emulated modal data set per entry of ``years``."""
    if c_sim < 0:
        raise DomainError(f"c_sim must be non-negative, got {c_sim}")
    from .deterioration import evaluate

    years = np.asarray(years, dtype=float)
    D = evaluate(theta, years)
    lam, shapes, curv = forward.predict(D)
    rng = np.random.default_rng(seed)
    lam_obs = lam * (1.0 + c_sim * rng.standard_normal(lam.shape))
    nrm = np.linalg.norm(shapes, axis=-1, keepdims=True)
    shp_obs = shapes + c_sim * nrm * rng.standard_normal(shapes.shape)
    curv_obs = None
    if curv is not None:
        cn = np.linalg.norm(curv, axis=-1, keepdims=True)
        curv_obs = curv + c_sim * cn * rng.standard_normal(curv.shape)
    return [
        ModalDataSet(
            time=float(y), eigenvalues=lam_obs[i], shapes=shp_obs[i],
            curvatures=None if curv_obs is None else curv_obs[i],
        )
        for i, y in enumerate(years)
    ]
