"""Gate-level synthesis with displacement, qubit-rotation and SNAP layers.

A layer is ``D(alpha) R(phi) S(theta)`` (S acts first) and a circuit applies
its layers in list order, so the first layer sits rightmost in the product.
Gates are ideal instantaneous unitaries on the truncated joint space; each
layer is charged a fixed duration.
"""
from dataclasses import dataclass, field
import json
import logging

import numpy as np
from scipy.optimize import minimize

from .device import PAULI, annihilation
from .errors import DimensionMismatch, LengthMismatch, NoProgress
from .grape import subspace_indices
from .propagator import expm_pullback

log = logging.getLogger(__name__)

LAYER_TIME_NS = 800.0
_PAULIS = (PAULI["x"], PAULI["y"], PAULI["z"])


def _displacement_generators(cutoff):
    a = annihilation(cutoff)
    ad = a.conj().T
    # alpha a - alpha* a^dag = -i (Re alpha * gx + Im alpha * gy)
    return 1j * (a - ad), -(a + ad)


def gate_displacement(alpha, cutoff):
    """exp(alpha a - alpha* a^dag) on the truncated cavity, tensored with the qubit identity.

    Exact exponential of the truncated generator, so always unitary; it only
    approximates the true displacement while |alpha|^2 is well below cutoff.
    """
    if cutoff < 2:
        raise ValueError("cutoff must be >= 2")
    gx, gy = _displacement_generators(cutoff)
    g = alpha.real * gx + alpha.imag * gy
    e, _ = expm_pullback(g, np.zeros_like(g))
    return np.kron(np.eye(2), e)


def gate_rotation(phi, cutoff):
    """exp(-i phi . sigma) on the qubit, tensored with the cavity identity."""
    phi = np.asarray(phi, dtype=float)
    g = sum(p * s for p, s in zip(phi, _PAULIS))
    e, _ = expm_pullback(g, np.zeros((2, 2)))
    return np.kron(e, np.eye(cutoff))


def gate_snap(theta, cutoff=None):
    """Diagonal exp(i theta_n sigma_z): e^{+i theta_n} on |0,n>, e^{-i theta_n} on |1,n>."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or (cutoff is not None and theta.size != cutoff):
        raise LengthMismatch(f"need {cutoff} SNAP phases, got {theta.size}")
    return np.diag(np.concatenate([np.exp(1j * theta), np.exp(-1j * theta)]))


@dataclass
class GateCircuit:
    """Layer parameters: alpha (n,), phi (n, 3), theta (n, cutoff)."""

    alpha: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    layer_time: float = LAYER_TIME_NS

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=complex))
        self.phi = np.asarray(self.phi, dtype=float).reshape(len(self.alpha), 3)
        self.theta = np.asarray(self.theta, dtype=float).reshape(len(self.alpha), -1)
        for arr in (self.alpha.real, self.alpha.imag, self.phi, self.theta):
            if not np.all(np.isfinite(arr)):
                raise ValueError("circuit parameters must be finite")

    @property
    def depth(self):
        return len(self.alpha)

    @property
    def cutoff(self):
        return self.theta.shape[1]

    @property
    def implementation_time(self):
        return self.depth * self.layer_time

    @classmethod
    def identity(cls, depth, cutoff, layer_time=LAYER_TIME_NS):
        return cls(np.zeros(depth, complex), np.zeros((depth, 3)), np.zeros((depth, cutoff)), layer_time)

    # flat real vector, per layer: Re alpha, Im alpha, phi (3), theta (cutoff)
    def to_vector(self):
        return np.hstack([self.alpha.real[:, None], self.alpha.imag[:, None], self.phi, self.theta]).ravel()

    @classmethod
    def from_vector(cls, x, cutoff, layer_time=LAYER_TIME_NS):
        m = np.asarray(x, dtype=float).reshape(-1, 5 + cutoff)
        return cls(m[:, 0] + 1j * m[:, 1], m[:, 2:5], m[:, 5:], layer_time)

    def append(self, other):
        return GateCircuit(np.concatenate([self.alpha, other.alpha]), np.vstack([self.phi, other.phi]),
                           np.vstack([self.theta, other.theta]), self.layer_time)

    def to_dict(self):
        return {
            "layer_time_ns": self.layer_time,
            "layers": [
                {"alpha": [float(a.real), float(a.imag)], "phi": p.tolist(), "theta": t.tolist()}
                for a, p, t in zip(self.alpha, self.phi, self.theta)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        layers = d["layers"]
        if not layers:
            raise ValueError("circuit has no layers")
        alpha = [complex(*l["alpha"]) for l in layers]
        phi = [l["phi"] for l in layers]
        theta = [l["theta"] for l in layers]
        if len({len(t) for t in theta}) != 1:
            raise LengthMismatch("all layers need the same number of SNAP phases")
        return cls(alpha, phi, theta, float(d.get("layer_time_ns", LAYER_TIME_NS)))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def implementation_time(circuit):
    return circuit.implementation_time


def _layer_gates(circuit):
    c = circuit.cutoff
    for a, p, t in zip(circuit.alpha, circuit.phi, circuit.theta):
        yield gate_snap(t, c)
        yield gate_rotation(p, c)
        yield gate_displacement(a, c)


def circuit_unitary(circuit):
    """Product of all gates, first layer (and within it the SNAP gate) rightmost."""
    u = np.eye(2 * circuit.cutoff, dtype=complex)
    for g in _layer_gates(circuit):
        u = g @ u
    return u


class CircuitObjective:
    """Subspace trace fidelity of a circuit and its exact parameter gradient."""

    def __init__(self, target, cutoff=None):
        self.target = np.asarray(target, dtype=complex)
        self.levels = self.target.shape[0] // 2
        self.cutoff = self.levels if cutoff is None else int(cutoff)
        if self.cutoff < self.levels:
            raise DimensionMismatch("simulation cutoff below the target's cavity levels")
        self.idx = subspace_indices(self.cutoff, self.levels)
        self.gx, self.gy = _displacement_generators(self.cutoff)
        self.norm = self.target.shape[0]

    def unitary(self, x):
        return circuit_unitary(GateCircuit.from_vector(x, self.cutoff))

    def fidelity(self, x):
        u = self.unitary(x)
        return float(abs(np.vdot(self.target, u[np.ix_(self.idx, self.idx)])) / self.norm)

    def value_and_grad(self, x):
        """(fidelity, d fidelity / dx)."""
        c = self.cutoff
        d = 2 * c
        layers = np.asarray(x, dtype=float).reshape(-1, 5 + c)
        gates = []  # (kind, small generator or params, full unitary, small unitary)
        for row in layers:
            th = row[5:]
            gates.append(("s", th, gate_snap(th, c), None))
            gq = sum(p * s for p, s in zip(row[2:5], _PAULIS))
            eq, _ = expm_pullback(gq, np.zeros((2, 2)))
            gates.append(("r", gq, np.kron(eq, np.eye(c)), eq))
            gc = row[0] * self.gx + row[1] * self.gy
            ec, _ = expm_pullback(gc, np.zeros((c, c)))
            gates.append(("d", gc, np.kron(np.eye(2), ec), ec))
        # prefix products B_k = E_{k-1} ... E_1
        prefix = [np.eye(d, dtype=complex)]
        for g in gates:
            prefix.append(g[2] @ prefix[-1])
        u = prefix[-1]
        z = np.vdot(self.target, u[np.ix_(self.idx, self.idx)])
        phase = z / abs(z) if abs(z) > 0 else 1.0
        gamma = np.zeros((d, d), dtype=complex)
        gamma[np.ix_(self.idx, self.idx)] = phase * self.target / self.norm
        gdag = gamma.conj().T
        grad = np.zeros_like(layers)
        suffix = np.eye(d, dtype=complex)  # A_k = E_M ... E_{k+1}
        for k in range(len(gates) - 1, -1, -1):
            kind, gen, full, small = gates[k]
            xk = prefix[k] @ gdag @ suffix  # tr(dE X_k)
            layer = k // 3
            if kind == "s":
                diag = np.diag(xk) * np.diag(full)
                grad[layer, 5:] = np.real(1j * diag[:c] - 1j * diag[c:])
            elif kind == "r":
                xq = np.einsum("anbn->ab", xk.reshape(2, c, 2, c))
                _, zq = expm_pullback(gen, xq)
                grad[layer, 2:5] = [np.real(np.trace(s @ zq)) for s in _PAULIS]
            else:
                xc = np.einsum("aman->mn", xk.reshape(2, c, 2, c))
                _, zc = expm_pullback(gen, xc)
                grad[layer, 0] = np.real(np.trace(self.gx @ zc))
                grad[layer, 1] = np.real(np.trace(self.gy @ zc))
            suffix = suffix @ full
        return abs(z) / self.norm, grad.ravel()


def _random_layer(cutoff, rng):
    alpha = rng.normal(scale=0.5) + 1j * rng.normal(scale=0.5)
    return np.concatenate([[alpha.real, alpha.imag], rng.uniform(-np.pi, np.pi, 3),
                           rng.uniform(-np.pi, np.pi, cutoff)])


def _optimize(obj, x0, max_iters):
    res = minimize(_neg, x0, args=(obj,), jac=True, method="L-BFGS-B", options={"maxiter": max_iters, "gtol": 1e-12, "ftol": 1e-16})
    return res.x, 1.0 - float(res.fun)


def _neg(x, obj):
    f, g = obj.value_and_grad(x)
    return 1.0 - f, -g


@dataclass
class CircuitSynthesis:
    """Result of :func:`synthesize_circuit`.

    ``history`` holds the best fidelity after each depth increment.
    """

    circuit: GateCircuit
    history: list = field(default_factory=list)
    circuits: list = field(default_factory=list)

    @property
    def fidelity(self):
        return self.history[-1]

    def first_depth_below(self, infidelity):
        for depth, f in enumerate(self.history, start=1):
            if 1.0 - f < infidelity:
                return depth
        return None


def synthesize_circuit(target, depth, seed=0, max_iters=300, batch=10, noise=0.05, cutoff=None,
                       tol_infidelity=None, stall_depths=None, layer_time=LAYER_TIME_NS):
    """Batch-sequential circuit synthesis.

    Depth 1 starts from ``batch`` random layers.  Each later depth appends a
    layer to the incumbent: one candidate gets an exact identity layer, the
    others a layer of Gaussian noise (std ``noise``); every candidate is then
    re-optimized in full and the best (ties: lowest candidate index) is kept.
    The incumbent itself is never discarded, so the best fidelity is
    nondecreasing in depth.

    Stops early once ``tol_infidelity`` is met.  With ``stall_depths`` set,
    raises NoProgress if that many consecutive increments gain < 1e-12.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    obj = CircuitObjective(target, cutoff)
    c = obj.cutoff
    rng = np.random.default_rng(seed)
    best_x, best_f = None, -np.inf
    for b in range(batch):
        x, f = _optimize(obj, _random_layer(c, rng), max_iters)
        if f > best_f + 1e-15:
            best_x, best_f = x, f
    history = [best_f]
    circuits = [GateCircuit.from_vector(best_x, c, layer_time)]
    stalled = 0
    while len(history) < depth:
        if tol_infidelity is not None and 1.0 - best_f < tol_infidelity:
            break
        incumbent_x, incumbent_f = best_x, best_f
        cand_x, cand_f = np.concatenate([incumbent_x, np.zeros(5 + c)]), incumbent_f
        for b in range(batch):
            layer = np.zeros(5 + c) if b == 0 else rng.normal(scale=noise, size=5 + c)
            x, f = _optimize(obj, np.concatenate([incumbent_x, layer]), max_iters)
            if f > cand_f + 1e-15:
                cand_x, cand_f = x, f
        best_x, best_f = cand_x, cand_f
        history.append(best_f)
        circuits.append(GateCircuit.from_vector(best_x, c, layer_time))
        log.debug("depth %d: infidelity %.3e", len(history), 1 - best_f)
        if stall_depths is not None:
            stalled = stalled + 1 if best_f - incumbent_f < 1e-12 else 0
            if stalled >= stall_depths and (tol_infidelity is None or 1 - best_f >= tol_infidelity):
                raise NoProgress(f"circuit fidelity stalled at {best_f:.12f}",
                                 best=circuits[-1], history=history)
    return CircuitSynthesis(circuits[-1], history, circuits)

