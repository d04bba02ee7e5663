"""Markovian decoherence on the transmon-cavity system.

Each time step applies the unitary step and then the dissipative update
generated by

    L = (1/T1c) D[a] + (1/T1q) D[sigma-] + (1/(4 T2q)) D[sigma_z],

with every time constant multiplied by ``scale``.  The qubit and cavity parts
of L act on different factors and commute, so the exact update is the tensor
product of a 4x4 qubit superoperator and a cavity superoperator, both
precomputed once.  Superoperators use row-major vectorisation.
"""
from dataclasses import dataclass
import json
import math

import numpy as np
from scipy.linalg import expm

from . import _kernels as K
from .device import SIGMA_MINUS, SIGMA_Z, annihilation, joint_operators
from .errors import DimensionMismatch, PositivityLoss
from .propagator import ControlSystem, expm_hermitian
from .qmps import INSERTIONS, SiteChannel

METHODS = ("exact_exponential", "first_order")
NS_PER_US = 1000.0


@dataclass(frozen=True)
class NoiseSpec:
    """Decoherence times in ns; ``scale`` multiplies all of them (inf = noiseless)."""

    t1_cavity: float = 2.7e6
    t1_qubit: float = 1.7e5
    t2_qubit: float = 4.3e4
    scale: float = 1.0
    method: str = "exact_exponential"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        for name in ("t1_cavity", "t1_qubit", "t2_qubit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def rates(self):
        """(cavity decay, qubit decay, dephasing prefactor) in 1/ns."""
        if math.isinf(self.scale):
            return 0.0, 0.0, 0.0
        s = self.scale
        return 1.0 / (s * self.t1_cavity), 1.0 / (s * self.t1_qubit), 1.0 / (4.0 * s * self.t2_qubit)

    def with_scale(self, scale):
        return NoiseSpec(self.t1_cavity, self.t1_qubit, self.t2_qubit, scale, self.method)

    def to_dict(self):
        return {
            "t1_cavity_us": self.t1_cavity / NS_PER_US,
            "t1_qubit_us": self.t1_qubit / NS_PER_US,
            "t2_qubit_us": self.t2_qubit / NS_PER_US,
            "scale": self.scale,
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d.get("t1_cavity_us", 2700.0)) * NS_PER_US,
            float(d.get("t1_qubit_us", 170.0)) * NS_PER_US,
            float(d.get("t2_qubit_us", 43.0)) * NS_PER_US,
            float(d.get("scale", 1.0)),
            d.get("method", "exact_exponential"),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def dissipator(o, rho):
    """D[O] rho = O rho O^dag - {O^dag O, rho} / 2."""
    o = np.asarray(o)
    rho = np.asarray(rho)
    if o.shape != rho.shape:
        raise DimensionMismatch(f"operator {o.shape} vs state {rho.shape}")
    od = o.conj().T
    odo = od @ o
    return o @ rho @ od - 0.5 * (odo @ rho + rho @ odo)


def dissipator_superop(o):
    """Row-major superoperator of D[O]."""
    o = np.asarray(o, dtype=complex)
    eye = np.eye(o.shape[0])
    odo = o.conj().T @ o
    return np.kron(o, o.conj()) - 0.5 * (np.kron(odo, eye) + np.kron(eye, odo.T))


def qubit_generator(noise):
    _, gq, gphi = noise.rates()
    return gq * dissipator_superop(SIGMA_MINUS) + gphi * dissipator_superop(SIGMA_Z)


def cavity_generator(noise, cutoff):
    gc, _, _ = noise.rates()
    return gc * dissipator_superop(annihilation(cutoff))


class Dissipation:
    """Precomputed exact dissipative update exp(dt L) for one (cutoff, noise, dt)."""

    def __init__(self, cutoff, noise, dt):
        self.cutoff = cutoff
        self.noise = noise
        self.dt = dt
        self.sq = np.ascontiguousarray(expm(dt * qubit_generator(noise)))
        sc = expm(dt * cavity_generator(noise, cutoff))
        sc[np.abs(sc) < 1e-18] = 0.0
        self.sc = np.ascontiguousarray(sc)
        rows, cols = np.nonzero(sc)
        self.c_rows = rows.astype(np.int64)
        self.c_cols = cols.astype(np.int64)
        self.c_vals = np.ascontiguousarray(sc[rows, cols])

    def kernel_args(self):
        return self.sq, self.sc, self.c_rows, self.c_cols, self.c_vals

    def apply(self, rho):
        rho = np.asarray(rho, dtype=complex)
        stack = rho[None] if rho.ndim == 2 else rho
        out = K._dissipate_np(stack, self.sq, self.sc)
        return out[0] if rho.ndim == 2 else out


def first_order_update(rho, noise, cutoff, dt):
    """The literal rho + dt * L rho (not completely positive for coarse dt)."""
    ops = joint_operators(cutoff)
    gc, gq, gphi = noise.rates()
    return rho + dt * (gc * dissipator(ops["a"], rho) + gq * dissipator(ops["sm"], rho)
                       + gphi * dissipator(ops["sz"], rho))


def _check_positive(rho, tol=1e-6):
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w[0] < -tol:
        raise PositivityLoss(f"state eigenvalue {w[0]:.3e} below -{tol:g}; reduce dt")


def noisy_step(params, noise, h, rho, dissipation=None):
    """One step: rho -> Diss(E rho E^dag) with E = exp(-i h dt)."""
    h = np.asarray(h)
    rho = np.asarray(rho, dtype=complex)
    if h.shape != (params.dim, params.dim) or rho.shape != h.shape:
        raise DimensionMismatch(f"expected {params.dim}x{params.dim} operators")
    e = expm_hermitian(h, params.dt)
    rho = e @ rho @ e.conj().T
    if noise.method == "first_order":
        rho = first_order_update(rho, noise, params.cutoff, params.dt)
        _check_positive(rho)
        return rho
    diss = dissipation if dissipation is not None else Dissipation(params.cutoff, noise, params.dt)
    return diss.apply(rho)


def _basis_inputs(cutoff):
    """|0><0|_q (x) |i><j| for every (i, j), stacked in row-major (i, j) order."""
    d = 2 * cutoff
    out = np.zeros((cutoff * cutoff, d, d), dtype=complex)
    for i in range(cutoff):
        for j in range(cutoff):
            out[i * cutoff + j, i, j] = 1.0
    return out


def _insertion_superops(final, cutoff, labels):
    """S_O[(n, n'), k] = sum_{q, q'} O[q', q] final[k][(q, n), (q', n')]."""
    k = final.shape[0]
    blocks = final.reshape(k, 2, cutoff, 2, cutoff)
    out = {}
    for lab in labels:
        o = INSERTIONS[lab]
        m = np.einsum("pq,kqnpm->knm", o, blocks)
        out[lab] = m.reshape(k, cutoff * cutoff).T.copy()
    return out


class NoisySite:
    """Forward/backward machinery for one waveform under noise (exact method)."""

    def __init__(self, params, noise, dissipation=None):
        if noise.method != "exact_exponential":
            raise ValueError("gradients are available for the exact_exponential method only")
        self.params = params
        self.noise = noise
        self.system = ControlSystem.from_params(params)
        self.diss = dissipation if dissipation is not None else Dissipation(params.cutoff, noise, params.dt)

    def forward(self, amps, labels=("I", "x", "z")):
        w, v, e = self.system.step_data(amps)
        rho0 = _basis_inputs(self.params.cutoff)
        traj = K.noisy_forward(e, *self.diss.kernel_args(), rho0)
        ops = _insertion_superops(traj[-1], self.params.cutoff, labels)
        return SiteChannel(ops), (w, v, e, traj)

    def backward(self, cache, grads):
        """d value / d amps given channel gradients ``grads[label]``."""
        w, v, e, traj = cache
        c = self.params.cutoff
        kk = c * c
        w_final = np.zeros((kk, 2 * c, 2 * c), dtype=complex)
        for lab, g in grads.items():
            o = INSERTIONS[lab].conj().T
            for k in range(kk):
                w_final[k] += np.kron(o, g[:, k].reshape(c, c))
        p = K.noisy_backward(e, *self.diss.kernel_args(), traj, w_final)
        return self.system.step_derivative_traces(w, v, p)


def noisy_site_superchannel(params, noise, wf, labels=("I", "x", "z")):
    """Site map of the noisy protocol (and its observable-inserted variants) as a SiteChannel."""
    wf.check_bound(params.omega_max)
    if noise.method == "exact_exponential":
        ch, _ = NoisySite(params, noise).forward(wf.amps, labels)
        return ch
    system = ControlSystem.from_params(params)
    _, _, e = system.step_data(wf.amps)
    rho = _basis_inputs(params.cutoff)
    for ej in e:
        rho = np.einsum("ab,kbc,dc->kad", ej, rho, ej.conj())
        rho = np.stack([first_order_update(r, noise, params.cutoff, params.dt) for r in rho])
    ch = SiteChannel(_insertion_superops(rho, params.cutoff, labels))
    _check_positive(choi_matrix(ch.ops["I"], params.cutoff))
    return ch


def choi_matrix(superop, dim):
    """Choi matrix sum_ij |i><j| (x) S(|i><j|) of a row-major superoperator."""
    s = superop.reshape(dim, dim, dim, dim)  # [n, n', i, j]
    return np.transpose(s, (2, 0, 3, 1)).reshape(dim * dim, dim * dim)
