"""Translation-invariant quantum-circuit MPS built from one joint unitary.

A unitary U on qubit (x) cavity defines site tensors
``A[s, i, j] = <s, j| U |0, i>`` (i: cavity level before the site, j: after).
The cavity-side Kraus operators are ``B[s] = A[s].T``, i.e. the blocks
``U[s*c:(s+1)*c, :c]`` of the first ``c`` columns.  One site of the sequential
protocol maps the cavity state rho to ``sum_s B[s] rho B[s]^dag``.

Expectation values are computed from superoperators on row-major vectorised
cavity matrices (``vec(rho)[i*D + j] = rho[i, j]``).  A :class:`SiteChannel`
holds the plain site map plus versions with a qubit observable inserted before
the qubit is traced out; the noisy simulator produces the same object.
"""
from dataclasses import dataclass
import json

import numpy as np

from . import _kernels as K
from .device import PAULI
from .errors import NonConvergence

IDENTITY2 = np.eye(2, dtype=complex)
INSERTIONS = {"I": IDENTITY2, **PAULI}
# floor on the burn-in cap: tiny bond dimensions can still mix over tens of sites
MIN_ITERATIONS = 200


@dataclass(frozen=True)
class SpinChainModel:
    """Couplings of H = -sum_i [J z_i z_{i+1} + h x_i - V (x_i x_{i+1} + z_{i-1} z_{i+1})]."""

    j_coupling: float = 1.0
    h_field: float = 1.0
    v_perturbation: float = 0.5

    def to_dict(self):
        return {"j_coupling": self.j_coupling, "h_field": self.h_field, "v_perturbation": self.v_perturbation}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class MpsTensor:
    """Site tensor ``a[s, i, j] = A^s_ij`` with bond dimension ``a.shape[1]``.

    ``leakage`` is 1 - sum_s |A^s|_F^2 / D: zero for a full-cutoff extraction,
    positive when the bond space was truncated below the simulated cutoff.
    """

    a: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=complex)
        if self.a.ndim != 3 or self.a.shape[0] != 2 or self.a.shape[1] != self.a.shape[2]:
            raise ValueError(f"tensor must have shape (2, D, D), got {self.a.shape}")

    @property
    def bond_dim(self):
        return self.a.shape[1]

    def kraus(self):
        return np.ascontiguousarray(np.swapaxes(self.a, 1, 2))

    def isometry_residual(self):
        """max |sum_s A^s A^s^dag - I| (equivalently sum_s B^s^dag B^s - I)."""
        g = np.einsum("sij,skj->ik", self.a, self.a.conj())
        return float(np.abs(g - np.eye(self.bond_dim)).max())

    def to_dict(self):
        return {"bond_dim": self.bond_dim, "leakage": self.leakage,
                "a": np.stack([self.a.real, self.a.imag], axis=-1).tolist()}

    @classmethod
    def from_dict(cls, d):
        arr = np.asarray(d["a"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], float(d.get("leakage", 0.0)))


def kraus_from_unitary(u, bond_dim=None):
    """Cavity Kraus pair B[s] = U[s*c + j, i] for i, j < bond_dim."""
    u = np.asarray(u, dtype=complex)
    c = u.shape[0] // 2
    d = c if bond_dim is None else bond_dim
    return np.ascontiguousarray(np.stack([u[:d, :d], u[c:c + d, :d]]))


def extract_tensor(u, bond_dim=None):
    """Site tensor of the qMPS generated by ``u`` with the qubit reset to |0>."""
    u = np.asarray(u, dtype=complex)
    c = u.shape[0] // 2
    d = c if bond_dim is None else int(bond_dim)
    if not 1 <= d <= c:
        raise ValueError(f"bond_dim must be in 1..{c}")
    b = kraus_from_unitary(u, d)
    a = np.swapaxes(b, 1, 2)
    leakage = 0.0 if d == c else float(1.0 - np.sum(np.abs(a) ** 2) / d)
    return MpsTensor(a, leakage)


# ---------------------------------------------------------------------------
# superoperators


def kraus_superop(left, right):
    """Row-major superoperator of rho -> left rho right^dag."""
    return np.kron(left, right.conj())


class SiteChannel:
    """Plain and observable-inserted site maps on bond-space density matrices.

    ``ops[label]`` is the superoperator of rho -> tr_q[(O (x) 1) U (|0><0| (x) rho) U^dag]
    for O = identity ("I") or a Pauli ("x", "y", "z").
    """

    def __init__(self, ops, leakage=0.0):
        self.ops = {k: np.ascontiguousarray(v, dtype=complex) for k, v in ops.items()}
        self.dim = int(round(np.sqrt(self.ops["I"].shape[0])))
        self.leakage = leakage

    @classmethod
    def from_kraus(cls, b, labels=("I", "x", "y", "z"), leakage=0.0):
        ops = {}
        for lab in labels:
            o = INSERTIONS[lab]
            s = 0
            for s1 in range(2):
                for s2 in range(2):
                    if o[s2, s1] != 0:
                        s = s + o[s2, s1] * kraus_superop(b[s1], b[s2])
            ops[lab] = s
        return cls(ops, leakage)

    @classmethod
    def from_tensor(cls, t, labels=("I", "x", "y", "z")):
        if isinstance(t, SiteChannel):
            return t
        return cls.from_kraus(t.kraus(), labels, t.leakage)

    @classmethod
    def from_unitary(cls, u, bond_dim=None, labels=("I", "x", "y", "z")):
        return cls.from_tensor(extract_tensor(u, bond_dim), labels)

    def op(self, label):
        lab = label if label == "I" else label.lower()
        if lab not in self.ops:
            raise KeyError(f"channel has no '{label}' insertion")
        return self.ops[lab]

    def trace_vector(self):
        return np.eye(self.dim, dtype=complex).ravel()

    def vacuum(self):
        r = np.zeros(self.dim * self.dim, dtype=complex)
        r[0] = 1.0
        return r


def _as_channel(t):
    return t if isinstance(t, SiteChannel) else SiteChannel.from_tensor(t)


def stationary_vector(channel, tol=1e-10, max_iter=None):
    """Vectorised stationary state reached from the vacuum by repeated site maps."""
    d = channel.dim
    cap = max(10 * d * d, MIN_ITERATIONS) if max_iter is None else max_iter
    r, it, ok = K.fixed_point(channel.ops["I"], channel.vacuum(), tol, cap)
    if not ok:
        raise NonConvergence(f"site map did not settle within {cap} iterations")
    return r


def solved_stationary_vector(channel):
    """Stationary state from the linear system (1 - S + |vac> t^T) r = |vac>.

    Exact for channels with a unique fixed point, however slowly they mix;
    optimizers use it so that line searches through poorly mixing regions do
    not abort.
    """
    s = channel.ops["I"]
    vac = channel.vacuum()
    a = np.eye(s.shape[0], dtype=complex) - s + np.outer(vac, channel.trace_vector())
    try:
        r = np.linalg.solve(a, vac)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence("site map has no unique stationary state") from exc
    if not np.all(np.isfinite(r)):
        raise NonConvergence("site map has no unique stationary state")
    return r


def doubled_stationary_vector(channel, tol=1e-10, max_doublings=40):
    """Vacuum-start stationary state via S^(2^k) |vac>, squaring S each round.

    Same limit as burn-in (including channels whose buffer levels are nearly
    decoupled, where a linear solve is ill-conditioned) but reaches 2^k sites
    in k matrix products.  Raises NonConvergence for channels that never
    settle, e.g. periodic ones.
    """
    m = channel.ops["I"]
    t = channel.trace_vector()
    v = channel.vacuum()
    for _ in range(max_doublings):
        nv = m @ v
        nv = nv / (t @ nv)
        if np.abs(nv - v).max() < tol:
            return nv
        v = nv
        m = m @ m
    raise NonConvergence(f"site map did not settle within 2^{max_doublings} sites")


STATIONARY_METHODS = {
    "burn_in": stationary_vector,
    "doubling": doubled_stationary_vector,
    "solve": lambda ch, tol=None: solved_stationary_vector(ch),
}


def transfer_channel_fixed_point(t, tol=1e-10, max_iter=None):
    """Stationary bond-space density matrix of the site map, started from vacuum.

    Raises NonConvergence when ``10 * D**2`` iterations (or ``max_iter``) do
    not bring successive iterates within ``tol`` of each other.
    """
    ch = _as_channel(t)
    r = stationary_vector(ch, tol, max_iter)
    rho = r.reshape(ch.dim, ch.dim)
    return 0.5 * (rho + rho.conj().T)


def _chain_value(channel, labels, r):
    """tr[ S_{labels[-1]} ... S_{labels[0]} rho ] with rho given as a vector."""
    v = r
    for lab in labels:
        v = channel.op(lab) @ v
    return complex(channel.trace_vector() @ v)


def correlation(t, op_a, op_b, r, rho=None):
    """Full two-point function <sigma^a_0 sigma^b_r> in the stationary state."""
    if r < 1:
        raise ValueError("separation must be >= 1")
    ch = _as_channel(t)
    vec = stationary_vector(ch) if rho is None else np.asarray(rho).ravel()
    return _chain_value(ch, [op_a] + ["I"] * (r - 1) + [op_b], vec).real


def chain_correlation(t, op_a, op_b, i, j):
    """<sigma^a_i sigma^b_j> (i < j) on the finite chain grown from the cavity vacuum."""
    if not 0 <= i < j:
        raise ValueError("need 0 <= i < j")
    ch = _as_channel(t)
    return _chain_value(ch, ["I"] * i + [op_a] + ["I"] * (j - i - 1) + [op_b], ch.vacuum()).real


def local_expectation(t, op, rho=None):
    ch = _as_channel(t)
    vec = stationary_vector(ch) if rho is None else np.asarray(rho).ravel()
    return _chain_value(ch, [op], vec).real


ENERGY_TERMS = (
    # (weight key, operator chain, sign)
    ("j", ("z", "z"), -1.0),
    ("h", ("x",), -1.0),
    ("v", ("x", "x"), 1.0),
    ("v", ("z", "I", "z"), 1.0),
)


def _weight(model, key):
    return {"j": model.j_coupling, "h": model.h_field, "v": model.v_perturbation}[key]


def energy_density(t, model, rho=None, return_imag=False):
    """Energy per site: -[J C_zz(1) + h M_x - V (C_xx(1) + C_zz(2))]."""
    ch = _as_channel(t)
    vec = stationary_vector(ch) if rho is None else np.asarray(rho).ravel()
    e = sum(sign * _weight(model, key) * _chain_value(ch, chain, vec) for key, chain, sign in ENERGY_TERMS)
    return (e.real, e.imag) if return_imag else e.real


def buffer_projector(dim, start):
    p = np.zeros((dim, dim), dtype=complex)
    p[start:, start:] = np.eye(dim - start)
    return p


def buffer_population(rho, start):
    """Population of levels n >= start."""
    return float(np.real(np.trace(np.asarray(rho)[start:, start:])))


# ---------------------------------------------------------------------------
# gradients of the penalised energy with respect to the channel


def energy_and_channel_gradient(channel, model, penalty_weight=0.0, buffer_start=None, tol=1e-10,
                                method="burn_in"):
    """Penalised stationary energy and its gradient in the channel superoperators.

    Returns (value, grads, info) where ``grads[label]`` is G with
    d value = Re sum_label tr(G^dag dS_label).  The stationary state enters
    through an adjoint solve of (1 - S_I + r t^T)^T y = g - (g.r) t, which is
    regular whenever the fixed point is unique.  ``method`` picks how the
    stationary state is found: "burn_in", "doubling" or "solve".
    """
    ch = channel
    r = STATIONARY_METHODS[method](ch, tol)
    t = ch.trace_vector()
    ops = ch.ops
    value = 0.0
    g_r = np.zeros_like(r)
    grads = {lab: np.zeros_like(ops[lab]) for lab in ("I", "x", "z")}

    def add_outer(label, u, v, w):
        grads[label] += w * np.conj(np.outer(u, v))

    energy = 0.0
    for key, chain, sign in ENERGY_TERMS:
        w = sign * _weight(model, key)
        if w == 0.0:
            continue
        # forward partials: right[k] = S_{k-1} ... S_0 r ; left[k] = t^T S_{n-1} ... S_{k+1}
        right = [r]
        for lab in chain:
            right.append(ops[lab] @ right[-1])
        left = [t]
        for lab in reversed(chain):
            left.append(ops[lab].T @ left[-1])
        left = left[::-1]  # left[k] multiplies after S_{k-1}; left[len] = t
        energy += w * (t @ right[-1]).real
        for k, lab in enumerate(chain):
            add_outer(lab, left[k + 1], right[k], w)
        g_r += w * left[0]
    value = energy
    penalty = 0.0
    if penalty_weight and buffer_start is not None and buffer_start < ch.dim:
        pvec = buffer_projector(ch.dim, buffer_start).ravel()
        penalty = penalty_weight * (pvec @ r).real
        value += penalty
        g_r += penalty_weight * pvec
    # fixed point contribution
    c = g_r @ r
    a = np.eye(r.size, dtype=complex) - ops["I"] + np.outer(r, t)
    try:
        y = np.linalg.solve(a.T, g_r - c * t)
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(a.T, g_r - c * t, rcond=None)[0]
    add_outer("I", y, r, 1.0)
    info = {"energy": energy, "penalty": penalty, "rho": r.reshape(ch.dim, ch.dim)}
    return value, grads, info


def kraus_gradient(b, grads):
    """Pull channel gradients back to the Kraus pair.

    Returns Gamma with d value = Re sum_s tr(Gamma[s]^dag dB[s]).
    """
    d = b.shape[1]
    gam = np.zeros_like(b)
    for lab, g in grads.items():
        o = INSERTIONS[lab]
        g4 = g.reshape(d, d, d, d)  # [i, k, j, l] for kron(X, Y)[(i,k),(j,l)] = X_ij Y_kl
        for s1 in range(2):
            for s2 in range(2):
                c = o[s2, s1]
                if c == 0:
                    continue
                # c * kron(B[s1], conj(B[s2]))
                gam[s1] += np.conj(c) * np.einsum("ikjl,kl->ij", g4, b[s2])
                gam[s2] += c * np.einsum("ikjl,ij->kl", np.conj(g4), b[s1])
    return gam


# ---------------------------------------------------------------------------
# sequential sampling

BASIS_ROTATIONS = {
    "z": np.eye(2, dtype=complex),
    "x": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "y": np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2),
}


def sample_chain(u, bases, shots, seed=0, bond_dim=None):
    """Simulate the measure-and-reset protocol shot by shot.

    The cavity starts in vacuum; at each site U acts on |0>_q (x) cavity, the
    qubit is read out in ``bases[k]`` (one of "x", "y", "z") and reset.
    Returns an int8 array (shots, L); 0 means eigenvalue +1.
    """
    if len(bases) < 1:
        raise ValueError("need at least one site")
    b = kraus_from_unitary(u, bond_dim)
    rot = np.stack([BASIS_ROTATIONS[x.lower()] for x in bases])
    uniforms = np.random.default_rng(seed).random((int(shots), len(bases)))
    return K.sample_trajectories(b, rot, uniforms)


def correlation_rows(r_values, pairs, values):
    """CSV-ready rows (r, operator_pair, value)."""
    return [(int(r), f"{a}{b}", float(v)) for r, (a, b), v in zip(r_values, pairs, values)]


def tensor_to_json(t):
    return json.dumps(t.to_dict())
