"""Piecewise-constant evolution of the driven transmon-cavity system.

The total unitary is ``E_N ... E_2 E_1`` with ``E_j = exp(-i H(t_j) dt)``:
step 1 acts first and sits rightmost in the product.
"""
from dataclasses import dataclass
import json

import numpy as np

from . import _kernels as K
from .device import build_static_hamiltonian, control_operators
from .errors import AmplitudeBound, DimensionMismatch


@dataclass(frozen=True)
class Waveform:
    """Piecewise-constant complex drives.

    ``amps`` has shape (N_ts, 4) holding (Re Omega_c, Im Omega_c, Re Omega_q,
    Im Omega_q) per step, in rad/ns.
    """

    amps: np.ndarray
    dt: float

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.amps, dtype=float))
        if a.ndim != 2 or a.shape[1] != 4 or a.shape[0] < 1:
            raise ValueError(f"amps must have shape (N_ts >= 1, 4), got {a.shape}")
        object.__setattr__(self, "amps", a)

    @classmethod
    def from_complex(cls, omega_c, omega_q, dt):
        omega_c = np.asarray(omega_c, dtype=complex)
        omega_q = np.asarray(omega_q, dtype=complex)
        amps = np.stack([omega_c.real, omega_c.imag, omega_q.real, omega_q.imag], axis=1)
        return cls(amps, dt)

    @classmethod
    def zeros(cls, n_ts, dt):
        return cls(np.zeros((n_ts, 4)), dt)

    @property
    def n_ts(self):
        return self.amps.shape[0]

    @property
    def duration(self):
        return self.n_ts * self.dt

    @property
    def omega_c(self):
        return self.amps[:, 0] + 1j * self.amps[:, 1]

    @property
    def omega_q(self):
        return self.amps[:, 2] + 1j * self.amps[:, 3]

    def max_amplitude(self):
        return float(max(np.abs(self.omega_c).max(), np.abs(self.omega_q).max()))

    def check_bound(self, omega_max):
        peak = self.max_amplitude()
        if peak > omega_max * (1.0 + 1e-12):
            raise AmplitudeBound(f"waveform peak {peak:.6g} exceeds omega_max={omega_max:.6g}")

    def concat(self, other):
        if other.dt != self.dt:
            raise ValueError("cannot concatenate waveforms with different dt")
        return Waveform(np.vstack([self.amps, other.amps]), self.dt)

    def to_dict(self):
        return {"dt_ns": float(self.dt), "steps": self.amps.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["steps"], dtype=float).reshape(-1, 4), float(d["dt_ns"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def project_amplitudes(amps, omega_max):
    """Clip each complex amplitude (pairs of columns) onto the disc |Omega| <= omega_max."""
    a = np.array(amps, dtype=float, copy=True).reshape(-1, 2, 2)
    r = np.hypot(a[..., 0], a[..., 1])
    scale = np.where(r > omega_max, omega_max / np.maximum(r, 1e-300), 1.0)
    a *= scale[..., None]
    return a.reshape(np.shape(amps))


def expm_hermitian(h, t=1.0):
    """exp(-i h t) for Hermitian ``h`` via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if np.count_nonzero(h - np.diag(np.diag(h))) == 0:
        return np.diag(np.exp(-1j * t * np.diag(h).real))
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * t * w)) @ v.conj().T


def expm_pullback(h, x, t=1.0):
    """Z with tr(dE X) = tr(dH Z) for E = exp(-i h t), h Hermitian.

    Returns (E, Z); Z is the matrix-valued derivative used by every analytic
    gradient in the package.
    """
    h = np.asarray(h, dtype=complex)
    w, v = np.linalg.eigh(h)
    f = K._divided_difference_np(w, t)
    vh = v.conj().T
    e = (v * np.exp(-1j * t * w)) @ vh
    z = v @ (f.T * (vh @ x @ v)) @ vh
    return e, z


def hermitian_from_params(x, n):
    """Hermitian n x n matrix from n**2 reals: diagonal, then Re and Im of the upper triangle."""
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    h = np.diag(np.asarray(x[:n], dtype=complex))
    up = x[n:n + m] + 1j * x[n + m:n + 2 * m]
    h[iu] = up
    h[(iu[1], iu[0])] = np.conj(up)
    return h


def hermitian_param_gradient(z):
    """d/dx of Re tr(dH z) under :func:`hermitian_from_params`."""
    n = z.shape[0]
    iu = np.triu_indices(n, 1)
    zl, zu = z[(iu[1], iu[0])], z[iu]
    return np.concatenate([np.real(np.diag(z)), np.real(zl + zu), np.imag(zl) * -1 + np.imag(zu)])


class ControlSystem:
    """A static Hamiltonian plus real-amplitude control generators.

    H_j = h0 + sum_p amps[j, p] ctrl[p].  The cQED device is one instance
    (:meth:`from_params`); tests also build ones with generators removed.
    """

    def __init__(self, h0, ctrl, dt):
        self.h0 = np.ascontiguousarray(h0, dtype=complex)
        self.ctrl = np.ascontiguousarray(ctrl, dtype=complex)
        self.dt = float(dt)
        self.dim = self.h0.shape[0]

    @classmethod
    def from_params(cls, params):
        return cls(build_static_hamiltonian(params), control_operators(params.cutoff), params.dt)

    def step_data(self, amps):
        """(eigenvalues, eigenvectors, step unitaries) for every step."""
        amps = np.ascontiguousarray(amps, dtype=float)
        w, v = K.step_eigensystems(self.h0, self.ctrl, amps)
        e = K.unitaries_from_eig(w, v, self.dt)
        return w, v, e

    def propagate(self, amps):
        return K.chain_product(self.step_data(amps)[2])

    def gradient(self, amps, gamma):
        """U and d Re tr(gamma^dag U) / d amps, shape (N, P)."""
        w, v, e = self.step_data(amps)
        u, x = K.unitary_adjoint(e, np.ascontiguousarray(np.conj(gamma.T)))
        return u, K.expm_derivative_traces(w, v, self.dt, x, self.ctrl)

    def step_derivative_traces(self, w, v, x):
        return K.expm_derivative_traces(w, v, self.dt, np.ascontiguousarray(x), self.ctrl)


def _system(params, wf):
    if abs(wf.dt - params.dt) > 1e-12 * params.dt:
        raise ValueError(f"waveform dt={wf.dt} does not match device dt={params.dt}")
    wf.check_bound(params.omega_max)
    return ControlSystem.from_params(params)


def propagate(params, wf):
    """Total unitary of the waveform on the 2*cutoff joint space."""
    return _system(params, wf).propagate(wf.amps)


def propagate_with_gradient(params, wf, adjoint_target):
    """U and the gradient of |tr(adjoint_target^dag U)|.

    The gradient is flattened step-major, four entries per step in the order
    (Re Omega_c, Im Omega_c, Re Omega_q, Im Omega_q).
    """
    target = np.asarray(adjoint_target, dtype=complex)
    if target.shape != (params.dim, params.dim):
        raise DimensionMismatch(f"target shape {target.shape} != {(params.dim, params.dim)}")
    system = _system(params, wf)
    u = system.propagate(wf.amps)
    z = np.trace(target.conj().T @ u)
    phase = z / abs(z) if abs(z) > 0 else 1.0
    _, g = system.gradient(wf.amps, phase * target)
    return u, g.ravel()
