"""Output-only modal identification (covariance-driven SSI) and mode pairing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IdentificationError
from .vibration import AccelerationRecord, ModalDataSet


@dataclass(frozen=True)
class RawModes:
    """Physical poles returned by SSI, sorted by frequency.

    ``shapes`` is (n_poles, n_channels), real-valued.
    """

    frequencies: np.ndarray
    damping: np.ndarray
    shapes: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return (2 * np.pi * self.frequencies) ** 2

    @property
    def n_poles(self) -> int:
        return int(self.frequencies.size)


def output_correlations(y: np.ndarray, max_lag: int) -> np.ndarray:
    """Unbiased output correlation matrices ``R_i = E[y_{k+i} y_k^T]`` for i = 0..max_lag."""
    n_ch, N = y.shape
    if N <= max_lag:
        raise ConfigurationError(f"record of {N} samples is too short for {max_lag} lags")
    out = np.empty((max_lag + 1, n_ch, n_ch))
    for i in range(max_lag + 1):
        out[i] = y[:, i:] @ y[:, : N - i].T / (N - i)
    return out


def _realify(v: np.ndarray) -> np.ndarray:
    """Rotate a complex vector to the phase that maximizes its real part."""
    alpha = -0.5 * np.angle(np.sum(v**2))
    return np.real(v * np.exp(1j * alpha))


def ssi_identify(
    record: AccelerationRecord,
    order: int = 24,
    block_rows: int = 40,
    n_modes: int = 6,
    max_damping: float = 0.2,
) -> RawModes:
    """Covariance-driven stochastic subspace identification.

    The block Hankel matrix of output correlations at lags 1..2p-1
    (p = ``block_rows``) is factored by SVD and truncated to ``order``
    states. The state matrix follows from the shift structure of the
    observability matrix; its poles converted to continuous time give
    frequencies and damping, and the output matrix gives the mode shapes.

    Only stable, underdamped poles with positive imaginary part and damping
    below ``max_damping`` are returned.

    Raises
    ------
    IdentificationError
        If fewer than ``n_modes`` physical poles survive.
    """
    y = record.data - record.data.mean(axis=1, keepdims=True)
    n_ch = y.shape[0]
    p = block_rows
    if order > p * n_ch:
        raise ConfigurationError(f"model order {order} exceeds Hankel rank bound {p * n_ch}")
    R = output_correlations(y, 2 * p - 1)
    H = np.empty((p * n_ch, p * n_ch))
    for a in range(p):
        for b in range(p):
            H[a * n_ch:(a + 1) * n_ch, b * n_ch:(b + 1) * n_ch] = R[a + b + 1]
    U, s, _ = np.linalg.svd(H, full_matrices=False)
    O = U[:, :order] * np.sqrt(s[:order])
    C = O[:n_ch]
    A = np.linalg.lstsq(O[:-n_ch], O[n_ch:], rcond=None)[0]
    mu, psi = np.linalg.eig(A)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.log(mu) * record.fs
    wn = np.abs(lam)
    zeta = -np.real(lam) / np.where(wn > 0, wn, np.inf)
    f = wn / (2 * np.pi)
    ok = (np.imag(mu) > 0) & (zeta > 0) & (zeta < max_damping) & (f < 0.5 * record.fs)
    idx = np.flatnonzero(ok)
    idx = idx[np.argsort(f[idx])]
    if idx.size < n_modes:
        raise IdentificationError(f"only {idx.size} physical poles identified, {n_modes} required")
    shapes = np.array([_realify(C @ psi[:, k]) for k in idx])
    return RawModes(frequencies=f[idx], damping=zeta[idx], shapes=shapes)


def mac_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Modal assurance criterion between the rows of ``a`` and the rows of ``b``."""
    num = (a @ b.T) ** 2
    den = np.outer(np.einsum("ij,ij->i", a, a), np.einsum("ij,ij->i", b, b))
    return num / den


def match_modes(
    raw: RawModes,
    reference_shapes: np.ndarray,
    reference_eigenvalues: np.ndarray | None = None,
    n_modes: int = 6,
    min_mac: float = 0.8,
    time: float = 0.0,
) -> ModalDataSet:
    """Pair identified poles with reference modes by greedy highest MAC.

    ``reference_shapes`` is (n_ref, n_channels) with n_ref >= n_modes;
    extra reference modes only compete for poles so that higher modes do not
    steal a lower mode's pole. The returned data set holds the first
    ``n_modes`` reference modes, with each identified shape sign-aligned to
    its reference.

    Raises
    ------
    IdentificationError
        If a required mode has no partner or its MAC is below ``min_mac``.
    """
    ref = np.asarray(reference_shapes, dtype=float)
    if ref.shape[0] < n_modes:
        raise ConfigurationError(f"need {n_modes} reference modes, got {ref.shape[0]}")
    mac = mac_matrix(raw.shapes, ref)
    pair = -np.ones(ref.shape[0], dtype=int)
    best = np.zeros(ref.shape[0])
    work = mac.copy()
    for _ in range(min(work.shape)):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        if work[i, j] <= 0:
            break
        pair[j], best[j] = i, mac[i, j]
        work[i, :] = -1.0
        work[:, j] = -1.0
    missing = [m + 1 for m in range(n_modes) if pair[m] < 0 or best[m] < min_mac]
    if missing:
        worst = ", ".join(f"mode {m}: MAC {best[m - 1]:.3f}" for m in missing)
        raise IdentificationError(f"mode pairing failed below MAC {min_mac} ({worst})")
    sel = pair[:n_modes]
    shapes = raw.shapes[sel].copy()
    sign = np.sign(np.einsum("ij,ij->i", shapes, ref[:n_modes]))
    shapes *= np.where(sign == 0, 1.0, sign)[:, None]
    return ModalDataSet(time=time, eigenvalues=raw.eigenvalues[sel], shapes=shapes, mac=best[:n_modes])


def match_to_solution(raw: RawModes, reference, layout, n_modes: int = 6, min_mac: float = 0.8,
                      time: float = 0.0) -> ModalDataSet:
    """:func:`match_modes` against an FE :class:`~shmvoi.fe.ModalSolution` restricted to ``layout``."""
    ref = reference.shapes[layout.dofs].T
    return match_modes(raw, ref, reference.eigenvalues, n_modes=n_modes, min_mac=min_mac, time=time)
