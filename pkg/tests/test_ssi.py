import itertools

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from shmvoi.errors import ConfigurationError, IdentificationError
from shmvoi.fe import modal_analysis
from shmvoi.ssi import RawModes, mac_matrix, match_modes, match_to_solution, output_correlations, ssi_identify
from shmvoi.vibration import AccelerationRecord, SensorLayout, simulate_response


def two_dof_record(seed=0, fs=50.0, duration=2000.0):
    """Accelerations of a damped 2-DOF chain under white-noise forces (exact ZOH discretization)."""
    m = np.diag([1.0, 1.5])
    k = np.array([[3000.0, -1000.0], [-1000.0, 1000.0]])
    c = 0.002 * k + 0.01 * m
    mi = np.linalg.inv(m)
    A = np.block([[np.zeros((2, 2)), np.eye(2)], [-mi @ k, -mi @ c]])
    B = np.vstack([np.zeros((2, 2)), mi])
    C = np.hstack([-mi @ k, -mi @ c])
    D = mi
    sys_d = signal.cont2discrete((A, B, C, D), 1.0 / fs, method="zoh")
    n = int(duration * fs)
    u = np.random.default_rng(seed).standard_normal((n, 2))
    _, y, _ = signal.dlsim(sys_d[:4] + (1.0 / fs,), u)
    f_exact = np.sqrt(la.eigh(k, m, eigvals_only=True)) / (2 * np.pi)
    return AccelerationRecord(fs=fs, data=y.T.copy()), f_exact


def test_two_dof_frequencies():
    rec, f_exact = two_dof_record()
    raw = ssi_identify(rec, order=4, block_rows=20, n_modes=2)
    # damping shifts the modal frequencies below the undamped ones by well under 0.1 %
    np.testing.assert_allclose(raw.frequencies[:2], f_exact, rtol=1e-3)


def test_correlations_lag_zero():
    y = np.random.default_rng(1).standard_normal((3, 500))
    R = output_correlations(y, 4)
    np.testing.assert_allclose(R[0], y @ y.T / 500)
    with pytest.raises(ConfigurationError):
        output_correlations(y, 600)


def test_order_bound():
    rec = AccelerationRecord(fs=10.0, data=np.random.default_rng(0).standard_normal((2, 1000)))
    with pytest.raises(ConfigurationError):
        ssi_identify(rec, order=50, block_rows=10)


def test_white_noise_has_no_modes():
    rec = AccelerationRecord(fs=10.0, data=np.random.default_rng(0).standard_normal((2, 5000)))
    with pytest.raises(IdentificationError):
        ssi_identify(rec, order=4, block_rows=4, n_modes=6, max_damping=0.05)


@pytest.fixture(scope="module")
def bridge_case(model):
    layout = SensorLayout.preset(model, 24)
    sol = modal_analysis(model, 12)
    rec = simulate_response(model, layout, seed=3, modal=sol)
    return layout, sol, rec


def test_noise_free_bridge(bridge_case):
    layout, sol, rec = bridge_case
    raw = ssi_identify(rec)
    ds = match_to_solution(raw, sol, layout)
    np.testing.assert_allclose(ds.frequencies, sol.frequencies[:6], rtol=0.005)
    assert np.all(ds.mac >= 0.99)


def test_pairing_identity():
    ref = np.random.default_rng(2).standard_normal((6, 10))
    raw = RawModes(np.arange(1.0, 7.0), np.full(6, 0.02), ref.copy())
    ds = match_modes(raw, ref)
    np.testing.assert_allclose(ds.mac, 1.0)
    np.testing.assert_array_equal(ds.shapes, ref)


def test_pairing_sign_invariant():
    ref = np.random.default_rng(3).standard_normal((6, 10))
    signs = np.array([1, -1, -1, 1, -1, 1])[:, None]
    raw = RawModes(np.arange(1.0, 7.0), np.full(6, 0.02), ref * signs)
    ds = match_modes(raw, ref)
    np.testing.assert_allclose(ds.shapes, ref)


def test_pairing_recovers_permutation():
    rng = np.random.default_rng(4)
    ref = np.linalg.qr(rng.standard_normal((10, 6)))[0].T
    perm = rng.permutation(6)
    shapes = ref[perm] + 0.05 * rng.standard_normal((6, 10))
    raw = RawModes(np.arange(1.0, 7.0), np.full(6, 0.02), shapes)
    ds = match_modes(raw, ref, min_mac=0.5)
    mac = mac_matrix(shapes, ref)
    # brute force: the assignment maximizing total MAC
    best = max(itertools.permutations(range(6)), key=lambda p: sum(mac[p[j], j] for j in range(6)))
    np.testing.assert_allclose(ds.eigenvalues, raw.eigenvalues[list(best)])
    np.testing.assert_array_equal(np.argsort(perm), best)


def test_pairing_low_mac_raises():
    ref = np.eye(6)
    raw = RawModes(np.arange(1.0, 7.0), np.full(6, 0.02), np.ones((6, 6)) + np.eye(6) * 0.1)
    with pytest.raises(IdentificationError, match="MAC"):
        match_modes(raw, ref)


def test_pairing_missing_mode():
    ref = np.eye(6)
    raw = RawModes(np.arange(1.0, 5.0), np.full(4, 0.02), np.eye(6)[:4])
    with pytest.raises(IdentificationError):
        match_modes(raw, ref)


@given(st.integers(0, 10_000), st.floats(-100, 100).filter(lambda s: abs(s) > 1e-3))
def test_mac_bounded_and_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 8)), rng.standard_normal((4, 8))
    mac = mac_matrix(a, b)
    assert np.all((mac >= 0) & (mac <= 1 + 1e-12))
    np.testing.assert_allclose(mac_matrix(scale * a, b), mac, rtol=1e-9)
    np.testing.assert_allclose(np.diag(mac_matrix(a, a)), 1.0)
