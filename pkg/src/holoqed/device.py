"""Truncated transmon (two levels) x cavity (``cutoff`` levels) operators.

Basis ordering is qubit-major: joint index ``q * cutoff + n``.  The qubit
convention is |0> = ground/reset state with sigma_z = |0><0| - |1><1|, and the
lowering operator sigma_minus = |0><1| (decay towards |0>).

All frequencies are angular, in rad/ns; all times in ns.
"""
from dataclasses import asdict, dataclass, replace
import json

import numpy as np

from .errors import AmplitudeBound

TWO_PI = 2.0 * np.pi

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def khz_to_angular(f_khz):
    """Linear frequency in kHz -> angular frequency in rad/ns."""
    return TWO_PI * f_khz * 1e-6


def angular_to_khz(w):
    return w / (TWO_PI * 1e-6)


_FREQ_FIELDS = ("chi", "chi_prime", "kerr", "omega_max")


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of the transmon-cavity device.

    Frequencies are angular (rad/ns).  Defaults are the values of the device
    the simulations are modelled on: chi = -2pi*2194 kHz, chi' = -2pi*19 kHz,
    K = -2pi*3.7 kHz, a 2pi*10 MHz drive bound and 10 ns control steps.
    """

    chi: float = khz_to_angular(-2194.0)
    chi_prime: float = khz_to_angular(-19.0)
    kerr: float = khz_to_angular(-3.7)
    omega_max: float = khz_to_angular(10_000.0)
    dt: float = 10.0
    t1_cavity: float = 2_700_000.0
    t1_qubit: float = 170_000.0
    t2_qubit: float = 43_000.0
    cutoff: int = 8

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise ValueError(f"cutoff must be an integer >= 2, got {self.cutoff}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")
        for name in ("t1_cavity", "t1_qubit", "t2_qubit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def dim(self):
        return 2 * self.cutoff

    def with_cutoff(self, cutoff):
        return replace(self, cutoff=int(cutoff))

    def to_dict(self):
        """JSON-ready dict; frequencies in linear kHz, times in ns."""
        d = asdict(self)
        for k in _FREQ_FIELDS:
            d[k] = angular_to_khz(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in _FREQ_FIELDS:
            if k in d:
                d[k] = khz_to_angular(float(d[k]))
        if "cutoff" in d:
            d["cutoff"] = int(d["cutoff"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def annihilation(cutoff):
    """Cavity lowering operator on ``cutoff`` levels (no qubit factor)."""
    return np.diag(np.sqrt(np.arange(1, cutoff)), k=1).astype(complex)


def cavity_op(op):
    """Lift a cavity operator to the joint space (identity on the qubit)."""
    return np.kron(np.eye(2), op)


def qubit_op(op, cutoff):
    """Lift a 2x2 qubit operator to the joint space."""
    return np.kron(op, np.eye(cutoff))


def joint_operators(cutoff):
    """Dict of the standard joint-space operators: a, adag, n, sx, sy, sz, sm, sp."""
    a = annihilation(cutoff)
    return {
        "a": cavity_op(a),
        "adag": cavity_op(a.conj().T),
        "n": cavity_op(np.diag(np.arange(cutoff)).astype(complex)),
        "sx": qubit_op(SIGMA_X, cutoff),
        "sy": qubit_op(SIGMA_Y, cutoff),
        "sz": qubit_op(SIGMA_Z, cutoff),
        "sm": qubit_op(SIGMA_MINUS, cutoff),
        "sp": qubit_op(SIGMA_PLUS, cutoff),
    }


def static_energies(params):
    """Diagonal of H1 in the (q, n) basis, shape (2*cutoff,)."""
    n = np.arange(params.cutoff, dtype=float)
    nn1 = n * (n - 1.0)  # (a^dag)^2 a^2
    kerr = 0.5 * params.kerr * nn1
    disp = 0.5 * params.chi * n + 0.5 * params.chi_prime * nn1
    return np.concatenate([kerr + disp, kerr - disp])


def build_static_hamiltonian(params):
    """H1 = K/2 (a^dag)^2 a^2 + chi/2 n sz + chi'/2 (a^dag)^2 a^2 sz, in the H0 frame."""
    return np.diag(static_energies(params)).astype(complex)


def control_operators(cutoff):
    """Hermitian generators for the four real controls per time step.

    Order is (Re Omega_c, Im Omega_c, Re Omega_q, Im Omega_q), so that
    H_drive = sum_p x_p C_p equals Omega_c a + Omega_q sm + h.c.
    """
    ops = joint_operators(cutoff)
    a, ad, sm, sp = ops["a"], ops["adag"], ops["sm"], ops["sp"]
    return np.stack([a + ad, 1j * (a - ad), sm + sp, 1j * (sm - sp)])


def build_drive_hamiltonian(params, omega_c, omega_q):
    """Omega_c a + Omega_q sigma_minus + h.c.

    Raises AmplitudeBound if either amplitude exceeds ``params.omega_max``;
    that almost always means an optimizer step escaped its projection.
    """
    bound = params.omega_max * (1.0 + 1e-12)
    if abs(omega_c) > bound or abs(omega_q) > bound:
        raise AmplitudeBound(
            f"|omega_c|={abs(omega_c):.6g}, |omega_q|={abs(omega_q):.6g} exceed omega_max={params.omega_max:.6g}"
        )
    x = np.array([np.real(omega_c), np.imag(omega_c), np.real(omega_q), np.imag(omega_q)])
    return np.tensordot(x, control_operators(params.cutoff), axes=1)
