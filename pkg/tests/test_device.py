import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holoqed.device import (
    SIGMA_X, DeviceParams, annihilation, build_drive_hamiltonian, build_static_hamiltonian, joint_operators,
    khz_to_angular,
)
from holoqed.errors import AmplitudeBound

P = DeviceParams()


def test_defaults_in_angular_units():
    assert P.chi == pytest.approx(-2 * np.pi * 2194e-6)
    assert P.chi_prime == pytest.approx(-2 * np.pi * 19e-6)
    assert P.kerr == pytest.approx(-2 * np.pi * 3.7e-6)
    assert P.omega_max == pytest.approx(2 * np.pi * 10e-3)
    assert (P.dt, P.t1_cavity, P.t1_qubit, P.t2_qubit) == (10.0, 2.7e6, 1.7e5, 4.3e4)


@pytest.mark.parametrize("kw", [{"cutoff": 1}, {"dt": 0}, {"omega_max": -1}, {"t2_qubit": 0}])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        DeviceParams(**kw)


def test_json_round_trip_uses_khz():
    d = json.loads(P.to_json())
    assert d["chi"] == pytest.approx(-2194.0)
    assert d["omega_max"] == pytest.approx(10_000.0)
    assert DeviceParams.from_json(P.to_json()) == P


def test_commutator_broken_only_at_top_level():
    a = annihilation(6)
    c = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(c[:5, :5], np.eye(5))
    assert c[5, 5] != 1


def test_static_matrix_elements():
    h = build_static_hamiltonian(P)
    c = P.cutoff
    assert h[0, 0] == 0
    assert h[1, 1].real == pytest.approx(P.chi / 2)
    assert h[1, 1].real == pytest.approx(khz_to_angular(-1097.0))
    # Kerr alone on |0,2>: K/2 * 2 = K
    kerr_only = build_static_hamiltonian(DeviceParams(chi=0.0, chi_prime=0.0, cutoff=c))
    assert kerr_only[2, 2].real == pytest.approx(P.kerr)
    n = joint_operators(c)["n"]
    assert np.abs(h @ n - n @ h).max() == 0
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0


def test_drive_examples():
    assert np.all(build_drive_hamiltonian(P, 0, 0) == 0)
    w = 0.3 * P.omega_max
    hq = build_drive_hamiltonian(P, 0, w)
    assert np.allclose(hq, w * np.kron(SIGMA_X, np.eye(P.cutoff)))
    hc = build_drive_hamiltonian(P, 1j * w, 0)
    assert hc[0, 1] == pytest.approx(1j * w)
    assert hc[1, 0] == pytest.approx(-1j * w)


def test_drive_bound():
    with pytest.raises(AmplitudeBound):
        build_drive_hamiltonian(P, 1.01 * P.omega_max, 0)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.integers(2, 7))
def test_drive_structure(a, b, c, d, cutoff):
    p = DeviceParams(cutoff=cutoff)
    s = p.omega_max / 2
    h = build_drive_hamiltonian(p, s * complex(a, b), s * complex(c, d))
    assert np.abs(h - h.conj().T).max() < 1e-14
    for i in range(2 * cutoff):
        for j in range(2 * cutoff):
            qi, ni = divmod(i, cutoff)
            qj, nj = divmod(j, cutoff)
            allowed = (qi == qj and abs(ni - nj) == 1) or (qi != qj and ni == nj)
            if not allowed:
                assert h[i, j] == 0
