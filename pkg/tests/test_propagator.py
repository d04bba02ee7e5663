import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from holoqed import _kernels as K
from holoqed.device import DeviceParams, build_static_hamiltonian
from holoqed.errors import AmplitudeBound
from holoqed.grape import random_waveform
from holoqed.propagator import (
    ControlSystem, Waveform, expm_hermitian, expm_pullback, hermitian_from_params, hermitian_param_gradient,
    project_amplitudes, propagate, propagate_with_gradient,
)

from conftest import random_hermitian

P = DeviceParams(cutoff=6)


def _wf(seed, n_ts=20, p=P, radius=1.0):
    return random_waveform(n_ts, p, np.random.default_rng(seed), radius)


def test_identity_without_static_terms():
    p = DeviceParams(chi=0.0, chi_prime=0.0, kerr=0.0, cutoff=5)
    assert np.allclose(propagate(p, Waveform.zeros(1, p.dt)), np.eye(10), atol=1e-15)


def test_zero_drive_gives_static_phases():
    wf = Waveform.zeros(37, P.dt)
    e = np.diag(build_static_hamiltonian(P)).real
    assert np.allclose(propagate(P, wf), np.diag(np.exp(-1j * e * wf.duration)), atol=1e-12)


def test_single_step_matches_scipy(rng):
    for _ in range(5):
        h = random_hermitian(16, rng)
        assert np.abs(expm_hermitian(h, 10.0) - expm(-10j * h)).max() < 1e-9


@given(st.integers(0, 10_000), st.integers(1, 30))
def test_unitarity(seed, n_ts):
    u = propagate(P, _wf(seed, n_ts))
    assert np.abs(u.conj().T @ u - np.eye(P.dim)).max() < 1e-10


@given(st.integers(0, 10_000))
def test_composition(seed):
    a, b = _wf(seed, 7), _wf(seed + 1, 5)
    assert np.abs(propagate(P, a.concat(b)) - propagate(P, b) @ propagate(P, a)).max() < 1e-10


def test_step_order_first_step_rightmost():
    a, b = _wf(3, 1), _wf(4, 1)
    ua, ub = propagate(P, a), propagate(P, b)
    assert np.allclose(propagate(P, a.concat(b)), ub @ ua, atol=1e-12)


def _fd_grad(p, wf, target, h):
    g = np.zeros(wf.amps.size)
    for k in range(wf.amps.size):
        for sgn in (1, -1):
            a = wf.amps.ravel().copy()
            a[k] += sgn * h
            u = ControlSystem.from_params(p).propagate(a.reshape(-1, 4))
            g[k] += sgn * abs(np.trace(target.conj().T @ u)) / (2 * h)
    return g


def test_gradient_vs_finite_differences(rng):
    wf = _wf(5, 6, radius=0.5)
    target = random_hermitian(P.dim, rng) + 1j * random_hermitian(P.dim, rng)
    _, g = propagate_with_gradient(P, wf, target)
    fd = _fd_grad(P, wf, target, 1e-7 * P.omega_max)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-5


def test_gradient_at_self_target():
    wf = _wf(6, 5, radius=0.5)
    target = propagate(P, wf)
    _, g = propagate_with_gradient(P, wf, target)
    fd = _fd_grad(P, wf, target, 1e-7 * P.omega_max)
    assert np.abs(g - fd).max() < 1e-5 * max(1.0, np.abs(fd).max())


def test_decoupled_generator_has_zero_gradient(rng):
    base = ControlSystem.from_params(P)
    ctrl = base.ctrl.copy()
    ctrl[2:] = 0
    sys_ = ControlSystem(base.h0, ctrl, P.dt)
    _, g = sys_.gradient(_wf(7, 1).amps, random_hermitian(P.dim, rng))
    assert np.all(g[:, 2:] == 0)


def test_expm_pullback_directional_derivative(rng):
    h, dh, x = random_hermitian(6, rng), random_hermitian(6, rng), rng.normal(size=(6, 6)) + 0j
    e, z = expm_pullback(h, x, 2.0)
    eps = 1e-6
    fd = (np.trace(expm_hermitian(h + eps * dh, 2.0) @ x) - np.trace(expm_hermitian(h - eps * dh, 2.0) @ x)) / (2 * eps)
    assert abs(np.trace(dh @ z) - fd) < 1e-7


def test_hermitian_param_gradient(rng):
    n = 4
    x = rng.normal(size=n * n)
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    g = hermitian_param_gradient(z)
    for k in range(n * n):
        dx = np.zeros(n * n)
        dx[k] = 1.0
        dh = hermitian_from_params(x + dx, n) - hermitian_from_params(x, n)
        assert g[k] == pytest.approx(np.real(np.trace(dh @ z)), abs=1e-12)


def test_projection_and_bound():
    a = np.array([[3.0, 4.0, 0.1, 0.0]])
    b = project_amplitudes(a, 1.0)
    assert np.hypot(*b[0, :2]) == pytest.approx(1.0)
    assert b[0, 2] == 0.1
    with pytest.raises(AmplitudeBound):
        propagate(P, Waveform(a, P.dt))


def test_waveform_json():
    wf = _wf(8, 3)
    d = wf.to_dict()
    assert set(d) == {"dt_ns", "steps"} and len(d["steps"][0]) == 4
    back = Waveform.from_json(wf.to_json())
    assert np.array_equal(back.amps, wf.amps) and back.dt == wf.dt


@pytest.mark.parametrize("name", ["step_eigensystems", "chain_product", "unitary_adjoint", "expm_derivative_traces"])
def test_numba_matches_numpy(name, rng):
    s = ControlSystem.from_params(P)
    amps = _wf(9, 12).amps
    w, v = K.step_eigensystems_np(s.h0, s.ctrl, amps)
    e = K.unitaries_from_eig_np(w, v, P.dt)
    gam = np.ascontiguousarray(random_hermitian(P.dim, rng) + 0j)
    _, x = K.unitary_adjoint_np(e, gam)
    args = {
        "step_eigensystems": (s.h0, s.ctrl, amps),
        "chain_product": (e,),
        "unitary_adjoint": (e, gam),
        "expm_derivative_traces": (w, v, P.dt, x, s.ctrl),
    }[name]
    a = getattr(K, name + "_np")(*args)
    b = getattr(K, name + "_nb")(*args)
    for u, w_ in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        assert np.abs(np.asarray(u) - np.asarray(w_)).max() < 1e-12
