import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from holoqed import qmps
from holoqed.classical import reference_tensor, uniform_ground_tensor
from holoqed.errors import NonConvergence
from holoqed.qmps import MpsTensor, SiteChannel, SpinChainModel

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def flip(cutoff):
    return np.kron(SX, np.eye(cutoff))


def haar(n, seed):
    return unitary_group.rvs(n, random_state=seed)


@pytest.fixture(scope="module")
def random_tensor():
    return qmps.extract_tensor(haar(6, 11))


# --- extraction ---------------------------------------------------------------

@pytest.mark.parametrize("cutoff", [1, 3, 5])
def test_identity_unitary_gives_vacuum_tensor(cutoff):
    t = qmps.extract_tensor(np.eye(2 * cutoff))
    np.testing.assert_allclose(t.a[0], np.eye(cutoff))
    np.testing.assert_allclose(t.a[1], 0)
    assert t.leakage == 0.0


def test_flip_gives_all_ones_tensor():
    t = qmps.extract_tensor(flip(4))
    np.testing.assert_allclose(t.a[0], 0)
    np.testing.assert_allclose(t.a[1], np.eye(4))


@settings(max_examples=25)
@given(seed=st.integers(0, 10**6), cutoff=st.integers(1, 6))
def test_full_cutoff_extraction_is_isometric(seed, cutoff):
    # qubit-|0> columns of a unitary are orthonormal, so sum_s A A^dag = I
    t = qmps.extract_tensor(haar(2 * cutoff, seed))
    assert t.isometry_residual() < 1e-12
    b = t.kraus()
    np.testing.assert_allclose(sum(x.conj().T @ x for x in b), np.eye(cutoff), atol=1e-12)


def test_truncated_extraction_reports_leakage():
    u = haar(10, 3)
    t = qmps.extract_tensor(u, bond_dim=3)
    expect = 1 - sum(np.sum(np.abs(u[s * 5:s * 5 + 3, :3]) ** 2) for s in range(2)) / 3
    assert t.leakage == pytest.approx(expect, abs=1e-14)
    assert 0 < t.leakage < 1
    with pytest.raises(ValueError):
        qmps.extract_tensor(u, bond_dim=6)


def test_tensor_json_round_trip(random_tensor):
    back = MpsTensor.from_dict(json.loads(qmps.tensor_to_json(random_tensor)))
    np.testing.assert_array_equal(back.a, random_tensor.a)


def test_tensor_shape_is_checked():
    with pytest.raises(ValueError):
        MpsTensor(np.zeros((3, 2, 2)))


# --- fixed point ----------------------------------------------------------------

def test_identity_channel_fixed_point_is_vacuum():
    t = MpsTensor(np.stack([np.eye(3), np.zeros((3, 3))]))
    ch = SiteChannel.from_tensor(t)
    np.testing.assert_allclose(ch.ops["I"] @ ch.vacuum(), ch.vacuum())
    rho = qmps.transfer_channel_fixed_point(t)
    np.testing.assert_allclose(rho, np.diag([1.0, 0, 0]), atol=1e-14)


def test_flip_channel_fixed_point_is_vacuum():
    rho = qmps.transfer_channel_fixed_point(qmps.extract_tensor(flip(3)))
    np.testing.assert_allclose(rho, np.diag([1.0, 0, 0]), atol=1e-14)


def test_stationary_methods_agree(random_tensor):
    ch = SiteChannel.from_tensor(random_tensor)
    ref = qmps.stationary_vector(ch, tol=1e-13)
    for name in ("doubling", "solve"):
        np.testing.assert_allclose(qmps.STATIONARY_METHODS[name](ch, 1e-13), ref, atol=1e-9)


def test_fixed_point_is_a_state(random_tensor):
    rho = qmps.transfer_channel_fixed_point(random_tensor)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    ch = SiteChannel.from_tensor(random_tensor)
    np.testing.assert_allclose(ch.ops["I"] @ rho.ravel(), rho.ravel(), atol=1e-9)


def test_non_mixing_channel_raises():
    # a cavity-only rotation on the qubit-|0> sector is unitary on the bond space
    c = 3
    w = haar(c, 5)
    u = np.eye(2 * c, dtype=complex)
    u[:c, :c] = w
    with pytest.raises(NonConvergence):
        qmps.transfer_channel_fixed_point(qmps.extract_tensor(u), max_iter=500)
    with pytest.raises(NonConvergence):
        qmps.doubled_stationary_vector(SiteChannel.from_unitary(u), max_doublings=12)


@pytest.fixture(scope="module")
def critical_ising():
    return SpinChainModel(1.0, 1.0, 0.0)


def test_critical_ising_d2_tensor_magnetization(critical_ising):
    # exact Jordan-Wigner value of <x> at the critical point is 2/pi
    _, t = reference_tensor(critical_ising, 2, chain_length=64, sweep_tol=1e-9)
    rho = qmps.transfer_channel_fixed_point(t)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(rho).min() >= -1e-12
    assert abs(qmps.local_expectation(t, "x") - 2 / np.pi) < 0.05


@pytest.mark.slow
def test_critical_ising_d16_tensor_energy(critical_ising):
    _, t = reference_tensor(critical_ising, 16, chain_length=64, sweep_tol=1e-9)
    assert abs(qmps.energy_density(t, critical_ising) + 4 / np.pi) < 1e-3


# --- energy and correlations ----------------------------------------------------

def test_vacuum_product_energy():
    t = qmps.extract_tensor(np.eye(4))
    m = SpinChainModel()
    assert qmps.correlation(t, "z", "z", 1) == pytest.approx(1.0)
    assert qmps.correlation(t, "z", "z", 2) == pytest.approx(1.0)
    assert qmps.correlation(t, "x", "x", 1) == pytest.approx(0.0)
    assert qmps.local_expectation(t, "x") == pytest.approx(0.0)
    assert qmps.energy_density(t, m) == pytest.approx(-(m.j_coupling - m.v_perturbation))
    assert qmps.energy_density(t, m) == pytest.approx(-0.5)


@pytest.mark.parametrize("r", [1, 2, 5])
def test_flip_correlations(r):
    t = qmps.extract_tensor(flip(3))
    assert qmps.correlation(t, "z", "z", r) == pytest.approx(1.0)
    assert qmps.local_expectation(t, "z") == pytest.approx(-1.0)


@pytest.mark.parametrize("r", [1, 3])
def test_vacuum_zx_correlation_vanishes(r):
    assert qmps.correlation(qmps.extract_tensor(np.eye(6)), "z", "x", r) == pytest.approx(0.0, abs=1e-14)


def test_correlation_rejects_zero_separation(random_tensor):
    with pytest.raises(ValueError):
        qmps.correlation(random_tensor, "z", "z", 0)


@pytest.mark.parametrize("pair", ["zz", "xx", "xz"])
def test_finite_chain_approaches_stationary_value(random_tensor, pair):
    a, b = pair
    for r in (1, 2, 4):
        far = qmps.chain_correlation(random_tensor, a, b, 60, 60 + r)
        assert far == pytest.approx(qmps.correlation(random_tensor, a, b, r), abs=1e-6)


def test_energy_matches_term_sum(random_tensor):
    m = SpinChainModel(0.7, 1.3, 0.4)
    c = qmps.correlation
    t = random_tensor
    expect = -(m.j_coupling * c(t, "z", "z", 1) + m.h_field * qmps.local_expectation(t, "x")
               - m.v_perturbation * (c(t, "x", "x", 1) + c(t, "z", "z", 2)))
    assert qmps.energy_density(t, m) == pytest.approx(expect, abs=1e-12)
    _, imag = qmps.energy_density(t, m, return_imag=True)
    assert abs(imag) < 1e-12


def test_energy_gradient_matches_finite_differences():
    from scipy.linalg import expm

    m = SpinChainModel()
    rng = np.random.default_rng(4)
    u = haar(6, 9)
    labels = ("I", "x", "z")

    def value(uu):
        ch = SiteChannel.from_kraus(qmps.kraus_from_unitary(uu), labels)
        return qmps.energy_and_channel_gradient(ch, m, penalty_weight=2.0, buffer_start=2, method="solve")[0]

    b = qmps.kraus_from_unitary(u)
    _, grads, _ = qmps.energy_and_channel_gradient(SiteChannel.from_kraus(b, labels), m, 2.0, 2, method="solve")
    gam = qmps.kraus_gradient(b, grads)
    # probe along unitary curves u exp(i h k) so the channel stays trace preserving
    for _ in range(3):
        k = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        k = k + k.conj().T
        h = 1e-6
        fd = (value(u @ expm(1j * h * k)) - value(u @ expm(-1j * h * k))) / (2 * h)
        db = qmps.kraus_from_unitary(u @ (1j * k))
        assert np.real(np.vdot(gam, db)) == pytest.approx(fd, rel=1e-5, abs=1e-7)


# --- sampling -------------------------------------------------------------------

def test_vacuum_samples_are_all_zero():
    s = qmps.sample_chain(np.eye(6), "zzzzz", 200, seed=1)
    assert s.shape == (200, 5)
    assert not s.any()


def test_flip_samples_are_all_one():
    assert qmps.sample_chain(flip(3), "zzzz", 100, seed=1).all()


def test_sampling_is_seeded():
    u = haar(6, 2)
    a = qmps.sample_chain(u, "zxzy", 300, seed=7)
    np.testing.assert_array_equal(a, qmps.sample_chain(u, "zxzy", 300, seed=7))
    assert not np.array_equal(a, qmps.sample_chain(u, "zxzy", 300, seed=8))


def test_sampled_zz_agrees_with_channel():
    m = SpinChainModel()
    res = uniform_ground_tensor(m, 2, seed=1)
    shots = 10_000
    s = qmps.sample_chain(res.unitary, "z" * 6, shots, seed=3)
    spins = 1 - 2 * s.astype(float)
    for r in (1, 2, 3):
        prod = spins[:, 2] * spins[:, 2 + r]
        exact = qmps.chain_correlation(res.tensor, "z", "z", 2, 2 + r)
        se = np.sqrt(max(1 - exact ** 2, 1e-12) / shots)
        assert abs(prod.mean() - exact) < 3 * se


def test_sampling_needs_sites():
    with pytest.raises(ValueError):
        qmps.sample_chain(np.eye(4), "", 10)
