"""Plane-stress finite-element model of the two-span benchmark bridge.

The beam is meshed with a structured grid of 4-node bilinear isoparametric
quadrilaterals (2x2 Gauss quadrature, consistent mass). The three supports
are translational springs attached to one node row, the mid-height row by
default; springs on the bottom row add an eccentric axial restraint
(arching) that stiffens the beam in bending. Damage enters
either through the middle-support vertical spring (scour) or through the
Young's modulus of two groups of bottom-row elements at the midspans
(corrosion).

All ``apply_*`` functions return a new :class:`BridgeModel`; the input
model is never mutated, so a built model can be shared between threads.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DomainError, NumericalError

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
# local node order: (-1,-1), (1,-1), (1,1), (-1,1)
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


@dataclass(frozen=True)
class MeshConfig:
    """Geometry, discretization, material and support data (SI units)."""

    span_lengths: tuple[float, float] = (12.0, 13.0)
    height: float = 0.6
    width: float = 0.1
    nx: int = 200
    ny: int = 6
    E0: float = 30e9
    nu: float = 0.2
    rho: float = 2000.0
    Kx: float = 1e8
    Ky: float = 1e7
    # node row carrying the support springs: "centroid" (mid-height) or "bottom"
    support_row: str = "centroid"

    def __post_init__(self):
        if self.nx < 2 or self.ny < 1:
            raise ConfigurationError(f"need nx >= 2 and ny >= 1, got nx={self.nx}, ny={self.ny}")
        positive = dict(
            L1=self.span_lengths[0], L2=self.span_lengths[1], height=self.height,
            width=self.width, E0=self.E0, rho=self.rho, Kx=self.Kx, Ky=self.Ky,
        )
        bad = [k for k, v in positive.items() if not v > 0]
        if bad:
            raise ConfigurationError(f"non-positive physical quantities: {', '.join(bad)}")
        if not -1.0 < self.nu < 0.5:
            raise ConfigurationError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        if self.support_row not in ("centroid", "bottom"):
            raise ConfigurationError(f"support_row must be 'centroid' or 'bottom', got {self.support_row!r}")

    @property
    def length(self) -> float:
        return float(self.span_lengths[0] + self.span_lengths[1])

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def dy(self) -> float:
        return self.height / self.ny

    @property
    def support_row_index(self) -> int:
        return self.ny // 2 if self.support_row == "centroid" else 0


def _constitutive(E: float, nu: float) -> np.ndarray:
    return E / (1.0 - nu**2) * np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]
    )


def _shape(xi, eta):
    return 0.25 * (1.0 + _XI * xi) * (1.0 + _ETA * eta)


def _strain_matrix(xi, eta, a, b):
    """B matrix of a rectangular a x b element at natural point (xi, eta)."""
    dN_dx = 0.25 * _XI * (1.0 + _ETA * eta) * (2.0 / a)
    dN_dy = 0.25 * _ETA * (1.0 + _XI * xi) * (2.0 / b)
    B = np.zeros((3, 8))
    B[0, 0::2] = dN_dx
    B[1, 1::2] = dN_dy
    B[2, 0::2] = dN_dy
    B[2, 1::2] = dN_dx
    return B


def element_matrices(a: float, b: float, nu: float, rho: float, thickness: float):
    """Stiffness (for unit Young's modulus) and consistent mass of an a x b quad."""
    D = _constitutive(1.0, nu)
    detJ = 0.25 * a * b
    ke = np.zeros((8, 8))
    me = np.zeros((8, 8))
    for xi in _GAUSS:
        for eta in _GAUSS:
            B = _strain_matrix(xi, eta, a, b)
            ke += B.T @ D @ B * detJ * thickness
            N = np.zeros((2, 8))
            N[0, 0::2] = _shape(xi, eta)
            N[1, 1::2] = _shape(xi, eta)
            me += rho * thickness * N.T @ N * detJ
    return ke, me


@dataclass(frozen=True, eq=False)
class BridgeModel:
    """Assembled bridge FE model.

    ``K`` includes the support springs. ``E`` holds the Young's modulus of
    every element; ``springs`` maps a global DOF to its spring stiffness.
    """

    config: MeshConfig
    coords: np.ndarray
    connectivity: np.ndarray
    E: np.ndarray
    springs: dict
    K: sp.csr_matrix
    M: sp.csr_matrix
    ke_unit: np.ndarray = field(repr=False)
    support_nodes: tuple[int, int, int] = ()
    scour_dof: int = -1
    hotspots: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_dof(self) -> int:
        return 2 * self.n_nodes

    @property
    def Ky_middle(self) -> float:
        return self.springs[self.scour_dof]

    def node_id(self, i: int, j: int) -> int:
        """Global node number of grid column ``i`` (x) and row ``j`` (y)."""
        return i * (self.config.ny + 1) + j

    def top_nodes(self) -> np.ndarray:
        ny = self.config.ny
        return np.arange(self.config.nx + 1) * (ny + 1) + ny

    def bottom_nodes(self) -> np.ndarray:
        return np.arange(self.config.nx + 1) * (self.config.ny + 1)

    def nearest_top_node(self, x: float) -> int:
        top = self.top_nodes()
        return int(top[np.argmin(np.abs(self.coords[top, 0] - x))])

    def element_dofs(self) -> np.ndarray:
        conn = self.connectivity
        dofs = np.empty((conn.shape[0], 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * conn
        dofs[:, 1::2] = 2 * conn + 1
        return dofs

    def replace(self, **changes) -> "BridgeModel":
        return dataclasses.replace(self, **changes)


def _structured_mesh(cfg: MeshConfig):
    nx, ny = cfg.nx, cfg.ny
    xs = np.linspace(0.0, cfg.length, nx + 1)
    ys = np.linspace(0.0, cfg.height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    n0 = i * (ny + 1) + j
    conn = np.column_stack([n0, n0 + (ny + 1), n0 + (ny + 1) + 1, n0 + 1])
    return coords, conn


def _assemble(dofs: np.ndarray, values: np.ndarray, n: int) -> sp.csr_matrix:
    """Scatter per-element 8x8 blocks ``values[e]`` into an n x n sparse matrix."""
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    return sp.csr_matrix((values.ravel(), (rows, cols)), shape=(n, n))


def _element_ids_at(cfg: MeshConfig, x: float, row: int = 0, count: int = 2) -> tuple[int, ...]:
    """Ids of ``count`` consecutive elements in ``row`` centred on abscissa ``x``."""
    count = min(count, cfg.nx)
    first = int(round(x / cfg.dx)) - count // 2
    first = min(max(first, 0), cfg.nx - count)
    return tuple(int(c * cfg.ny + row) for c in range(first, first + count))


def build_model(config: MeshConfig | None = None) -> BridgeModel:
    """Assemble stiffness and mass of the undamaged bridge with its springs."""
    cfg = config or MeshConfig()
    coords, conn = _structured_mesh(cfg)
    n_dof = 2 * coords.shape[0]
    ke, me = element_matrices(cfg.dx, cfg.dy, cfg.nu, cfg.rho, cfg.width)
    n_el = conn.shape[0]
    E = np.full(n_el, cfg.E0)

    dofs = np.empty((n_el, 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * conn
    dofs[:, 1::2] = 2 * conn + 1
    K = _assemble(dofs, E[:, None, None] * ke, n_dof)
    M = _assemble(dofs, np.broadcast_to(me, (n_el, 8, 8)), n_dof)

    row = np.arange(cfg.nx + 1) * (cfg.ny + 1) + cfg.support_row_index
    support_nodes = []
    for xs in (0.0, cfg.span_lengths[0], cfg.length):
        d = np.abs(coords[row, 0] - xs)
        k = int(np.argmin(d))
        if d[k] > 1e-6 * cfg.dx:
            raise ConfigurationError(f"no mesh node found for support at x={xs}; choose nx so supports fall on nodes")
        support_nodes.append(int(row[k]))
    springs = {}
    for node in support_nodes:
        springs[2 * node] = cfg.Kx
        springs[2 * node + 1] = cfg.Ky
    K = (K + _spring_matrix(springs, n_dof)).tocsr()

    L1, L2 = cfg.span_lengths
    hotspots = (_element_ids_at(cfg, 0.5 * L1), _element_ids_at(cfg, L1 + 0.5 * L2))
    return BridgeModel(
        config=cfg, coords=coords, connectivity=conn, E=E, springs=springs,
        K=K, M=M.tocsr(), ke_unit=ke, support_nodes=tuple(support_nodes),
        scour_dof=2 * support_nodes[1] + 1, hotspots=hotspots,
    )


def _spring_matrix(springs: dict, n: int) -> sp.csr_matrix:
    idx = np.fromiter(springs.keys(), dtype=np.int64)
    val = np.fromiter(springs.values(), dtype=float)
    return sp.csr_matrix((val, (idx, idx)), shape=(n, n))


def set_middle_support(model: BridgeModel, Ky: float) -> BridgeModel:
    """Return a copy with the middle-support vertical spring set to ``Ky``."""
    dof = model.scour_dof
    delta = Ky - model.springs[dof]
    springs = dict(model.springs)
    springs[dof] = Ky
    K = model.K + sp.csr_matrix(([delta], ([dof], [dof])), shape=model.K.shape)
    return model.replace(springs=springs, K=K.tocsr())


def set_element_modulus(model: BridgeModel, elements, E_new) -> BridgeModel:
    """Return a copy with ``E[elements] = E_new``, updating only those blocks of K."""
    elements = np.asarray(elements, dtype=np.int64)
    E_new = np.broadcast_to(np.asarray(E_new, dtype=float), elements.shape)
    dE = E_new - model.E[elements]
    E = model.E.copy()
    E[elements] = E_new
    dofs = model.element_dofs()[elements]
    dK = _assemble(dofs, dE[:, None, None] * model.ke_unit, model.n_dof)
    return model.replace(E=E, K=(model.K + dK).tocsr())


def apply_scour(model: BridgeModel, D: float) -> BridgeModel:
    """Middle-support vertical spring reduced to ``Ky0 / (1 + D)``."""
    if not D >= 0:
        raise DomainError(f"scour damage must be non-negative, got {D}")
    return set_middle_support(model, model.config.Ky / (1.0 + D))


def apply_corrosion(model: BridgeModel, D1: float, D2: float) -> BridgeModel:
    """Hotspot element moduli reduced to ``E0 / (1 + D_j)``."""
    if not (D1 >= 0 and D2 >= 0):
        raise DomainError(f"corrosion damage must be non-negative, got ({D1}, {D2})")
    E0 = model.config.E0
    h1, h2 = model.hotspots
    out = set_element_modulus(model, h1, E0 / (1.0 + D1))
    return set_element_modulus(out, h2, E0 / (1.0 + D2))


# ---------------------------------------------------------------- modal analysis


@dataclass(frozen=True)
class ModalSolution:
    """Lowest generalized eigenpairs of (K, M).

    ``shapes`` has one mass-normalized column per mode over all DOFs.
    """

    eigenvalues: np.ndarray
    shapes: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues) / (2.0 * np.pi)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size


def fix_signs(shapes: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(shapes), axis=0)
    s = np.sign(shapes[idx, np.arange(shapes.shape[1])])
    s[s == 0] = 1.0
    return shapes * s


def modal_analysis(model: BridgeModel, n_modes: int = 6) -> ModalSolution:
    """Lowest ``n_modes`` eigenpairs by shift-invert Lanczos about zero."""
    n = model.n_dof
    if not 1 <= n_modes <= n:
        raise DomainError(f"n_modes must lie in [1, {n}], got {n_modes}")
    if n_modes >= n - 1 or n <= 60:
        lam, phi = _dense_eig(model)
        lam, phi = lam[:n_modes], phi[:, :n_modes]
    else:
        try:
            # fixed start vector keeps results bit-reproducible
            v0 = np.ones(n)
            lam, phi = spla.eigsh(model.K.tocsc(), k=n_modes, M=model.M.tocsc(), sigma=0.0,
                                  which="LM", v0=v0)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(
                f"eigensolver did not converge: {len(exc.eigenvalues)} of {n_modes} pairs found"
            ) from exc
        except RuntimeError as exc:  # singular factorization
            raise NumericalError(f"shift-invert factorization failed: {exc}") from exc
        order = np.argsort(lam)
        lam, phi = lam[order], phi[:, order]
        # re-normalize against M to remove ARPACK round-off
        phi = phi / np.sqrt(np.einsum("ij,ij->j", phi, model.M @ phi))
    return ModalSolution(eigenvalues=lam, shapes=fix_signs(phi))


def _dense_eig(model: BridgeModel):
    import scipy.linalg as la

    lam, phi = la.eigh(model.K.toarray(), model.M.toarray())
    return lam, phi


# ---------------------------------------------------------------- statics


def distributed_load(model: BridgeModel, q: float = 1.0) -> np.ndarray:
    """Consistent nodal forces of a downward line load ``q`` [N/m] on the top edge."""
    top = model.top_nodes()
    f = np.zeros(model.n_dof)
    trib = np.full(top.size, model.config.dx)
    trib[[0, -1]] *= 0.5
    f[2 * top + 1] = -q * trib
    return f


def static_solve(model: BridgeModel, f: np.ndarray) -> np.ndarray:
    try:
        u = spla.spsolve(model.K.tocsc(), f)
    except RuntimeError as exc:
        raise NumericalError(f"singular stiffness matrix: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise NumericalError("static solution is not finite (singular stiffness matrix)")
    return u


# extrapolation from 2x2 Gauss points (ordered like the corner nodes) to corners
_GP_ORDER = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
_EXTRAP = np.array(
    [[_shape(np.sqrt(3.0) * xi, np.sqrt(3.0) * eta)[k] for k in range(4)] for xi, eta in _GP_ORDER]
)


def nodal_sigma_xx(model: BridgeModel, u: np.ndarray, elements) -> np.ndarray:
    """Element-wise corner values of sigma_xx extrapolated from the Gauss points.

    Returns an array of shape (len(elements), 4) in local corner order.
    """
    cfg = model.config
    elements = np.asarray(elements, dtype=np.int64)
    ue = u[model.element_dofs()[elements]]
    D = _constitutive(1.0, cfg.nu)
    gp = np.empty((elements.size, 4))
    for g, (xi, eta) in enumerate(_GP_ORDER):
        B = _strain_matrix(xi / np.sqrt(3.0), eta / np.sqrt(3.0), cfg.dx, cfg.dy)
        gp[:, g] = ue @ (D[0] @ B)
    gp *= model.E[elements]
    # corner value = sum_g N_g(corner in Gauss-point coordinates) * gp_g
    return gp @ _EXTRAP


def fiber_stress(model: BridgeModel, u: np.ndarray, x: float, fiber: str) -> float:
    """Governing |sigma_xx| at the extreme ``fiber`` ('top'|'bottom') of section x.

    The section's fiber node receives extrapolated values from the two
    elements sharing it; the larger magnitude governs.
    """
    cfg = model.config
    i = int(round(x / cfg.dx))
    row = cfg.ny - 1 if fiber == "top" else 0
    corner_left, corner_right = (2, 3) if fiber == "top" else (1, 0)
    vals = []
    if i > 0:
        e = (i - 1) * cfg.ny + row
        vals.append(nodal_sigma_xx(model, u, [e])[0, corner_left])
    if i < cfg.nx:
        e = i * cfg.ny + row
        vals.append(nodal_sigma_xx(model, u, [e])[0, corner_right])
    return float(np.max(np.abs(vals)))


def governing_stress(model: BridgeModel, case: str, u: np.ndarray | None = None) -> np.ndarray:
    """Critical normal stresses under the unit distributed load.

    scour: bottom fiber at mid second span (one value); corrosion: top
    fiber above each hotspot (two values).
    """
    if u is None:
        u = static_solve(model, distributed_load(model))
    L1, L2 = model.config.span_lengths
    if case == "scour":
        return np.array([fiber_stress(model, u, L1 + 0.5 * L2, "bottom")])
    if case == "corrosion":
        return np.array([fiber_stress(model, u, 0.5 * L1, "top"), fiber_stress(model, u, L1 + 0.5 * L2, "top")])
    raise ConfigurationError(f"unknown damage case {case!r}")


def static_capacity(model: BridgeModel, damage, case: str | None = None,
                    reference_stress=None) -> float:
    """Capacity of the damaged bridge relative to the undamaged one.

    ``damage`` is a scalar scour D or a pair (D1, D2) for corrosion. Each
    critical section is normalized by its own undamaged stress and the
    weakest section governs: ``R = min_j sigma_j(0) / sigma_j(D)``.
    ``model`` must be the undamaged model; ``reference_stress`` can carry
    precomputed undamaged stresses.
    """
    damage = np.atleast_1d(np.asarray(damage, dtype=float))
    if case is None:
        case = "scour" if damage.size == 1 else "corrosion"
    if case == "scour":
        damaged = apply_scour(model, float(damage[0]))
    else:
        damaged = apply_corrosion(model, float(damage[0]), float(damage[1]))
    sigma0 = np.asarray(reference_stress if reference_stress is not None else governing_stress(model, case))
    return float(np.min(sigma0 / governing_stress(damaged, case)))
