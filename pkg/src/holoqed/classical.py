"""Classical references for the self-dual Ising chain.

Exact diagonalization for short chains, the free-fermion energy at V = 0,
two-site DMRG on open chains, extraction of a translation-invariant bulk
tensor, and completion of that tensor into a unitary target.

DMRG tensors are stored as arrays ``m[k]`` of shape (left, spin, right),
left-canonical: ``sum_{l,s} conj(m[l,s,r]) m[l,s,r'] = delta``.
"""
from dataclasses import dataclass, field
import json
import logging

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import NoConvergence, RankDeficiency, SizeExceeded
from . import qmps
from .propagator import expm_pullback, hermitian_from_params, hermitian_param_gradient
from .qmps import MpsTensor, SpinChainModel

log = logging.getLogger(__name__)

ED_MAX_SITES = 14
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
_I = np.eye(2)


# ---------------------------------------------------------------------------
# exact diagonalization


def _site_op(op, i, n):
    out = sp.identity(1, format="csr")
    for k in range(n):
        out = sp.kron(out, sp.csr_matrix(op) if k == i else sp.identity(2, format="csr"), format="csr")
    return out


def spin_chain_hamiltonian(model, l, boundary="open"):
    """Sparse SDIM Hamiltonian on ``l`` spins (site 0 is the most significant bit)."""
    if l > ED_MAX_SITES:
        raise SizeExceeded(f"exact diagonalization limited to {ED_MAX_SITES} sites, got {l}")
    if l < 1:
        raise ValueError("need at least one site")
    if boundary not in ("open", "periodic"):
        raise ValueError("boundary must be 'open' or 'periodic'")
    j, h, v = model.j_coupling, model.h_field, model.v_perturbation
    x = [_site_op(_X, i, l) for i in range(l)]
    z = [_site_op(_Z, i, l) for i in range(l)]
    ham = sp.csr_matrix((2 ** l, 2 ** l))
    per = boundary == "periodic"
    for i in range(l):
        ham = ham - h * x[i]
        if i + 1 < l or (per and l > 2):
            k = (i + 1) % l
            ham = ham - j * z[i] @ z[k] + v * x[i] @ x[k]
        if i + 2 < l or (per and l > 3):
            ham = ham + v * z[i] @ z[(i + 2) % l]
    return ham.tocsr()


def exact_ground_state(model, l, boundary="open"):
    """(energy, normalized state vector) of the lowest eigenpair."""
    ham = spin_chain_hamiltonian(model, l, boundary)
    if ham.shape[0] <= 64:
        w, v = np.linalg.eigh(ham.toarray())
        return float(w[0]), v[:, 0]
    w, v = eigsh(ham, k=1, which="SA", tol=1e-13, v0=np.ones(ham.shape[0]))
    return float(w[0]), v[:, 0]


def free_fermion_energy(l, j_coupling=1.0, h_field=1.0):
    """Ground energy of the open transverse-field Ising chain (V = 0).

    The quasiparticle energies are twice the singular values of the
    bidiagonal matrix with h on the diagonal and J above it.
    """
    m = np.diag(np.full(l, float(h_field))) + np.diag(np.full(l - 1, float(j_coupling)), 1)
    return -float(np.linalg.svd(m, compute_uv=False).sum())


CRITICAL_ISING_ENERGY = -4.0 / np.pi
CRITICAL_ISING_MX = 2.0 / np.pi


# ---------------------------------------------------------------------------
# DMRG


@dataclass
class DmrgConfig:
    chain_length: int = 128
    bond_dim: int = 16
    sweep_tol: float = 1e-7
    max_sweeps: int = 30
    seed: int = 0
    min_sweeps: int = 2

    def __post_init__(self):
        if self.chain_length < 4 or self.chain_length % 2:
            raise ValueError("chain_length must be even and >= 4")
        if self.bond_dim < 2:
            raise ValueError("bond_dim must be >= 2")


def sdim_mpo(model, l):
    """Bond-dimension-5 MPO of the SDIM Hamiltonian (open boundaries)."""
    j, h, v = model.j_coupling, model.h_field, model.v_perturbation
    w = np.zeros((5, 5, 2, 2))
    w[0, 0] = _I
    w[0, 1] = _Z
    w[0, 2] = _X
    w[1, 3] = _I
    w[0, 4] = -h * _X
    w[1, 4] = -j * _Z
    w[2, 4] = v * _X
    w[3, 4] = v * _Z
    w[4, 4] = _I
    ws = [w.copy() for _ in range(l)]
    ws[0] = w[:1]
    ws[-1] = w[:, 4:]
    return ws


@dataclass
class DmrgResult:
    energy: float
    tensors: list
    sweep_energies: list = field(default_factory=list)
    model: SpinChainModel = None

    @property
    def length(self):
        return len(self.tensors)

    def to_dict(self):
        return {
            "energy": self.energy,
            "sweep_energies": list(self.sweep_energies),
            "model": self.model.to_dict() if self.model else None,
            "tensors": [_pairs(t) for t in self.tensors],
        }

    @classmethod
    def from_dict(cls, d):
        model = SpinChainModel.from_dict(d["model"]) if d.get("model") else None
        return cls(float(d["energy"]), [_unpairs(t) for t in d["tensors"]], list(d.get("sweep_energies", [])), model)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _pairs(a):
    a = np.asarray(a)
    return np.stack([a.real, np.imag(a)], axis=-1).tolist()


def _unpairs(x):
    arr = np.asarray(x, dtype=float)
    out = arr[..., 0] + 1j * arr[..., 1]
    return out.real.copy() if not np.any(out.imag) else out


def _left_env(le, a, w):
    # le[x, w, y]: x ket bond, y bra bond
    t = np.tensordot(le, a, axes=(0, 0))  # w y s a
    t = np.tensordot(t, w, axes=([0, 2], [0, 3]))  # y a v t
    return np.tensordot(t, a.conj(), axes=([0, 3], [0, 1]))  # a v b


def _right_env(re, b, w):
    t = np.tensordot(b, re, axes=(2, 0))  # a s w y
    t = np.tensordot(t, w, axes=([1, 2], [3, 1]))  # a y v t
    return np.tensordot(t, b.conj(), axes=([1, 3], [2, 1]))  # a v b


def _two_site_matvec(le, w1, w2, re, shape):
    def mv(x):
        t = x.reshape(shape)
        y = np.tensordot(le, t, axes=(0, 0))  # w a s t b
        y = np.tensordot(y, w1, axes=([0, 2], [0, 3]))  # a t b v u
        y = np.tensordot(y, w2, axes=([1, 3], [3, 0]))  # a b u z r
        y = np.tensordot(y, re, axes=([1, 3], [0, 1]))  # a u r c
        return y.reshape(-1)

    return mv


def _random_mps(l, d, rng):
    dims = [1] + [min(2 ** min(k, l - k), d) for k in range(1, l)] + [1]
    tensors = []
    for k in range(l):
        a = rng.normal(size=(dims[k], 2, dims[k + 1]))
        q, _ = np.linalg.qr(a.reshape(dims[k] * 2, dims[k + 1]))
        tensors.append(q.reshape(dims[k], 2, q.shape[1]))
    # fix shapes after QR (dims can shrink)
    for k in range(l - 1):
        r = tensors[k].shape[2]
        if tensors[k + 1].shape[0] != r:
            tensors[k + 1] = tensors[k + 1][:r]
    return tensors


def dmrg_ground_state(model, cfg):
    """Two-site DMRG; returns a DmrgResult holding a left-canonical MPS.

    One sweep is a right-to-left pass followed by a left-to-right pass.
    Stops once consecutive sweep energies differ by less than ``sweep_tol``.
    """
    l, d = cfg.chain_length, cfg.bond_dim
    rng = np.random.default_rng(cfg.seed)
    ws = sdim_mpo(model, l)
    m = _random_mps(l, d, rng)
    le = [None] * (l + 1)
    re = [None] * (l + 1)
    le[0] = np.ones((1, 1, 1))
    re[l] = np.ones((1, 1, 1))
    for k in range(l):
        le[k + 1] = _left_env(le[k], m[k], ws[k])

    energies = []
    energy = np.inf

    def solve(k):
        theta = np.einsum("asb,btc->astc", m[k], m[k + 1])
        shape = theta.shape
        n = theta.size
        mv = _two_site_matvec(le[k], ws[k], ws[k + 1], re[k + 2], shape)
        if n <= 16:
            hm = np.column_stack([mv(e) for e in np.eye(n)])
            w, v = np.linalg.eigh(0.5 * (hm + hm.T))
            return w[0], v[:, 0].reshape(shape)
        op = LinearOperator((n, n), matvec=mv, dtype=float)
        w, v = eigsh(op, k=1, which="SA", v0=theta.ravel(), tol=1e-12, ncv=min(n, 20))
        return w[0], v[:, 0].reshape(shape)

    def split(theta, keep_left):
        a, s1, s2, c = theta.shape
        u, s, vh = np.linalg.svd(theta.reshape(a * s1, s2 * c), full_matrices=False)
        keep = max(1, min(d, int(np.sum(s > 1e-14 * s[0]))))
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        s = s / np.linalg.norm(s)
        if keep_left:
            return u.reshape(a, s1, keep), (s[:, None] * vh).reshape(keep, s2, c)
        return (u * s).reshape(a, s1, keep), vh.reshape(keep, s2, c)

    for sweep in range(cfg.max_sweeps):
        for k in range(l - 2, -1, -1):
            e, theta = solve(k)
            m[k], m[k + 1] = split(theta, keep_left=False)
            re[k + 1] = _right_env(re[k + 2], m[k + 1], ws[k + 1])
        for k in range(l - 1):
            e, theta = solve(k)
            m[k], m[k + 1] = split(theta, keep_left=True)
            le[k + 1] = _left_env(le[k], m[k], ws[k])
        e = float(e)
        energies.append(e)
        log.debug("dmrg sweep %d: E = %.14f", sweep, e)
        if sweep + 1 >= cfg.min_sweeps and abs(energy - e) < cfg.sweep_tol:
            # last site absorbed the norm; it is already normalized, so the chain is left-canonical
            return DmrgResult(e, _left_canonicalize(m), energies, model)
        energy = e
    raise NoConvergence(f"DMRG did not reach |dE| < {cfg.sweep_tol} in {cfg.max_sweeps} sweeps (last {energy})")


def _left_canonicalize(m):
    out = []
    carry = np.ones((1, 1))
    for k, a in enumerate(m):
        a = np.einsum("xa,asb->xsb", carry, a)
        if k == len(m) - 1:
            out.append(a / np.linalg.norm(a))
            break
        l, s, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l * s, r))
        out.append(q.reshape(l, s, q.shape[1]))
        carry = rr
    return out


def _right_density(tensors):
    """rho[k]: environment of bond k (between site k-1 and k) from the right."""
    l = len(tensors)
    rho = [None] * (l + 1)
    rho[l] = np.ones((1, 1))
    for k in range(l - 1, -1, -1):
        a = tensors[k]
        rho[k] = np.einsum("asb,bc,dsc->ad", a, rho[k + 1], a.conj())
    return rho


def mps_expectation(tensors, ops, rho=None):
    """<psi| prod_site ops[site] |psi> for a left-canonical MPS."""
    rho = _right_density(tensors) if rho is None else rho
    sites = sorted(ops)
    env = np.eye(tensors[sites[0]].shape[0])
    for k in range(sites[0], sites[-1] + 1):
        a = tensors[k]
        o = ops.get(k, _I)
        env = np.einsum("ab,asc,st,btd->cd", env, a.conj(), o, a)
    return float(np.real(np.einsum("cd,dc->", env, rho[sites[-1] + 1])))


def local_energies(result, sites=None):
    """Energy assigned to site i: -J z_i z_{i+1} - h x_i + V x_i x_{i+1} + V z_{i-1} z_{i+1}."""
    t = result.tensors
    model = result.model
    l = len(t)
    rho = _right_density(t)
    sites = range(1, l - 1) if sites is None else sites
    out = []
    for i in sites:
        e = -model.j_coupling * mps_expectation(t, {i: _Z, i + 1: _Z}, rho)
        e -= model.h_field * mps_expectation(t, {i: _X}, rho)
        e += model.v_perturbation * mps_expectation(t, {i: _X, i + 1: _X}, rho)
        e += model.v_perturbation * mps_expectation(t, {i - 1: _Z, i + 1: _Z}, rho)
        out.append(e)
    return np.array(out)


def _bulk_window(length, fraction=0.5):
    """Central sites and Hann weights covering ``fraction`` of the chain.

    The smooth taper suppresses the boundary-induced oscillations that a flat
    average over a few sites would pick up.
    """
    n = max(2, int(length * fraction))
    lo = (length - n) // 2
    sites = np.arange(lo, lo + n)
    w = np.hanning(n + 2)[1:-1]
    return sites, w / w.sum()


def bulk_energy_density(result, fraction=0.5):
    """Hann-weighted mean of the local energy over the central part of the chain."""
    sites, w = _bulk_window(result.length, fraction)
    sites = np.clip(sites, 1, result.length - 2)
    return float(np.dot(local_energies(result, sites), w))


def bulk_correlation(result, op_a, op_b, r, fraction=0.5):
    """Hann-weighted <sigma^a_i sigma^b_{i+r}> over central sites i."""
    ops = {"x": _X, "z": _Z}
    sites, w = _bulk_window(result.length - r, fraction)
    rho = _right_density(result.tensors)
    vals = [mps_expectation(result.tensors, {i: ops[op_a], i + r: ops[op_b]}, rho) for i in sites]
    return float(np.dot(vals, w))


def bulk_magnetization(result, fraction=0.5):
    sites, w = _bulk_window(result.length, fraction)
    rho = _right_density(result.tensors)
    return float(np.dot([mps_expectation(result.tensors, {i: _X}, rho) for i in sites], w))


# ---------------------------------------------------------------------------
# translation-invariant bulk tensor


def _polar(m):
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def _gauge_align(l0, l1, iters=200, tol=1e-13):
    """Unitaries (v, v2) minimising |l1 - v l0 v2| (v on the left bond, v2 on the right)."""
    dl, s, dr = l0.shape
    v = np.eye(l1.shape[0], dl)
    v2 = np.eye(dr, l1.shape[2])
    prev = np.inf
    for _ in range(iters):
        # v: Procrustes on the left index
        x = np.einsum("asb,bc->asc", l0, v2).reshape(dl, -1)
        v = _polar(l1.reshape(l1.shape[0], -1) @ x.conj().T)
        # v2: Procrustes on the right index
        y = np.einsum("xa,asb->xsb", v, l0).reshape(-1, dr)
        v2 = _polar(y.conj().T @ l1.reshape(-1, l1.shape[2]))
        err = np.linalg.norm(l1 - np.einsum("xa,asb,bc->xsc", v, l0, v2))
        if prev - err < tol:
            break
        prev = err
    return v, v2, err


def bulk_tensor(result, bond_dim=None, site=None):
    """Translation-invariant site tensor from the central region of a DMRG chain.

    The central left-canonical tensor is brought into the gauge in which its
    neighbour is (approximately) the same tensor, then rearranged into the
    sequential-circuit convention ``a[s, i, j] = L[j, s, i]``.  The reported
    ``alignment`` is the residual of that gauge match.
    """
    tensors = result.tensors if isinstance(result, DmrgResult) else list(result)
    k = len(tensors) // 2 if site is None else site
    l0, l1 = tensors[k], tensors[k + 1]
    if l0.shape[0] == 1 and l0.shape[2] == 1:
        a = l0.reshape(1, 2, 1)
        align = 0.0
    else:
        if l0.shape[0] != l0.shape[2] or l1.shape != l0.shape:
            raise ValueError("central tensors are not square; use a longer chain")
        v, _, align = _gauge_align(l0, l1)
        # with the left gauge fixed to identity, A = L[k] v
        a = np.einsum("asb,bc->asc", l0, v)
    d = a.shape[0]
    if bond_dim is not None and bond_dim < d:
        a = _truncate(a, bond_dim, tensors, k)
        d = bond_dim
    seq = np.transpose(a, (1, 2, 0))  # seq[s, i, j] = a[j, s, i]
    t = MpsTensor(seq)
    t.alignment = float(align)
    return t


def _truncate(a, d, tensors, k):
    rho = _right_density(tensors)[k + 1]
    w, u = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    p = u[:, np.argsort(w)[::-1][:d]]
    b = np.einsum("xa,asb,bc->xsc", p.conj().T, a, p)
    dl, s, dr = b.shape
    return _polar(b.reshape(dl * s, dr)).reshape(dl, s, dr)


# ---------------------------------------------------------------------------
# variational translation-invariant tensor


@dataclass
class UniformResult:
    tensor: MpsTensor
    energy: float
    iterations: int
    unitary: np.ndarray


def uniform_ground_tensor(model, bond_dim, init=None, seed=0, max_iter=2000, gtol=1e-9, jitter=1e-2):
    """Minimise the stationary energy density over isometric site tensors.

    The isometry is the qubit-|0> half of U = U0 exp(-i H) with H Hermitian on
    the 2D space; L-BFGS runs over the D^2 * 4 real entries of H with the exact
    gradient.  ``init`` (an MpsTensor) seeds U0; otherwise U0 is Haar-random.
    Useful when the central tensor of a finite chain is not translation
    invariant (e.g. boundary-induced incommensurate modulation).
    """
    d = int(bond_dim)
    n = 2 * d
    rng = np.random.default_rng(seed)
    if init is not None:
        kick = hermitian_from_params(rng.normal(size=n * n), n)
        u0 = _core_unitary(init) @ expm_pullback(jitter * kick, np.zeros((n, n)))[0]
    else:
        z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        q, r = np.linalg.qr(z)
        u0 = q * (np.diag(r) / np.abs(np.diag(r)))
    labels = ("I", "x", "z")

    def fun(x):
        e, _ = expm_pullback(hermitian_from_params(x, n), np.zeros((n, n)))
        u = u0 @ e
        b = qmps.kraus_from_unitary(u)
        val, grads, _ = qmps.energy_and_channel_gradient(qmps.SiteChannel.from_kraus(b, labels), model, method="solve")
        gam = qmps.kraus_gradient(b, grads)
        gu = np.zeros((n, n), dtype=complex)
        gu[:d, :d] = gam[0]
        gu[d:, :d] = gam[1]
        # Re tr(gu^dag u0 dE) = Re tr(dE X) with X = gu^dag u0
        _, z = expm_pullback(hermitian_from_params(x, n), gu.conj().T @ u0)
        return val, hermitian_param_gradient(z)

    res = minimize(fun, np.zeros(n * n), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15})
    u = u0 @ expm_pullback(hermitian_from_params(res.x, n), np.zeros((n, n)))[0]
    t = qmps.extract_tensor(u)
    return UniformResult(t, float(res.fun), int(res.nit), u)


def _core_unitary(t):
    cols = np.zeros((2 * t.bond_dim, t.bond_dim), dtype=complex)
    for s in range(2):
        cols[s * t.bond_dim:(s + 1) * t.bond_dim] = t.a[s].T
    return complete_isometry(cols)


# ---------------------------------------------------------------------------
# isometry -> unitary


@dataclass
class TargetUnitary:
    """Block-diagonal target on qubit (x) m_c levels with identity on buffer levels."""

    matrix: np.ndarray
    logical_dim: int
    note: str = "levels >= logical_dim carry the identity"

    @property
    def cutoff(self):
        return self.matrix.shape[0] // 2

    @property
    def core(self):
        m, c = self.logical_dim, self.cutoff
        idx = np.concatenate([np.arange(m), c + np.arange(m)])
        return self.matrix[np.ix_(idx, idx)]

    def to_dict(self):
        return {"logical_dim": self.logical_dim, "cutoff": self.cutoff, "note": self.note,
                "matrix": _pairs(self.matrix)}

    @classmethod
    def from_dict(cls, d):
        mat = np.asarray(d["matrix"], dtype=float)
        return cls(mat[..., 0] + 1j * mat[..., 1], int(d["logical_dim"]), d.get("note", ""))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def complete_isometry(cols, tol=1e-10):
    """Extend orthonormal columns to a unitary with canonical vectors in ascending order."""
    n, k = cols.shape
    sv = np.linalg.svd(cols, compute_uv=False)
    if sv.min() < tol:
        raise RankDeficiency(f"isometry columns are dependent (smallest singular value {sv.min():.3e})")
    basis = [c for c in cols.T]
    extra = []
    for e in np.eye(n, dtype=complex):
        if len(basis) == n:
            break
        v = e.copy()
        for _ in range(2):
            for b in basis:
                v -= np.vdot(b, v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v /= nv
            basis.append(v)
            extra.append(v)
    return np.column_stack([cols] + extra)


def embed_isometry(t, cutoff=None):
    """TargetUnitary whose qubit-|0> columns reproduce the tensor ``t``.

    Columns (0, i) of the 2*m_b core hold A^s_ij at row (s, j); the remaining
    columns come from Gram-Schmidt; levels m_b..cutoff-1 get the identity.
    """
    mb = t.bond_dim
    mc = 2 * mb if cutoff is None else int(cutoff)
    if mc < mb:
        raise ValueError(f"cutoff {mc} is smaller than the bond dimension {mb}")
    if t.isometry_residual() > 1e-8:
        raise RankDeficiency(f"tensor is not an isometry (residual {t.isometry_residual():.3e})")
    cols = np.zeros((2 * mb, mb), dtype=complex)
    for s in range(2):
        cols[s * mb:(s + 1) * mb, :] = t.a[s].T
    core = complete_isometry(cols)
    u = np.eye(2 * mc, dtype=complex)
    idx = np.concatenate([np.arange(mb), mc + np.arange(mb)])
    u[np.ix_(idx, idx)] = core
    return TargetUnitary(u, mb)


def reference_tensor(model, bond_dim, chain_length=128, sweep_tol=1e-10, max_sweeps=30, seed=0):
    """DMRG run followed by bulk-tensor extraction: (DmrgResult, MpsTensor)."""
    res = dmrg_ground_state(model, DmrgConfig(chain_length, bond_dim, sweep_tol, max_sweeps, seed))
    return res, bulk_tensor(res)
