"""Hot numeric loops.

Every kernel exists twice: a vectorised numpy version (``*_np``) and a loop
version compiled with numba (``*_nb``).  The public names at the bottom pick
one according to :data:`holoqed._accel.USE_NUMBA`, except for the kernels
where the compiled loop lost to numpy in the benchmark.  Both versions take and
return plain contiguous arrays so they can be swapped freely; the benchmark in
``benchmarks/bench_kernels.py`` times them against each other.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# per-step eigensystems and unitaries


def step_eigensystems_np(h0, ctrl, amps):
    """Eigen-decompose H_j = h0 + sum_p amps[j, p] ctrl[p] for every step j."""
    h = h0[None, :, :] + np.tensordot(amps, ctrl, axes=(1, 0))
    w, v = np.linalg.eigh(h)
    return w, np.ascontiguousarray(v)


def _step_eigensystems_nb(h0, ctrl, amps):
    n, d = amps.shape[0], h0.shape[0]
    w = np.empty((n, d))
    v = np.empty((n, d, d), dtype=np.complex128)
    for j in range(n):
        h = h0.copy()
        for p in range(ctrl.shape[0]):
            h += amps[j, p] * ctrl[p]
        wj, vj = np.linalg.eigh(h)
        w[j] = wj
        v[j] = vj
    return w, v


def unitaries_from_eig_np(w, v, dt):
    ph = np.exp(-1j * dt * w)
    return np.matmul(v * ph[:, None, :], np.conj(np.swapaxes(v, 1, 2)))


def _unitaries_from_eig_nb(w, v, dt):
    n, d = w.shape
    out = np.empty((n, d, d), dtype=np.complex128)
    for j in range(n):
        ph = np.exp(-1j * dt * w[j])
        vp = v[j] * ph.reshape(1, d)
        out[j] = np.dot(vp, np.conj(v[j]).T)
    return out


def chain_product_np(e):
    """E_N ... E_2 E_1 (first step applied first, i.e. rightmost)."""
    u = np.eye(e.shape[1], dtype=np.complex128)
    for j in range(e.shape[0]):
        u = e[j] @ u
    return u


def _chain_product_nb(e):
    u = np.eye(e.shape[1], dtype=np.complex128)
    for j in range(e.shape[0]):
        u = np.dot(e[j], u)
    return u


# ---------------------------------------------------------------------------
# exact derivative of exp(-i H dt) contracted with a matrix


def _divided_difference_np(w, dt):
    # F[k, l] = (e^{-i w_k dt} - e^{-i w_l dt}) / (w_k - w_l), stable form
    a = w[..., :, None] * dt
    b = w[..., None, :] * dt
    x = 0.5 * (a - b)
    return -1j * dt * np.exp(-0.5j * (a + b)) * np.sinc(x / np.pi)


def expm_derivative_traces_np(w, v, dt, x, ctrl):
    """Re tr(dE_j/dp  X_j) for every step j and generator p.

    Uses the spectral (Daleckii-Krein) form of the exact derivative of
    E = exp(-i H dt); shape (N, P).
    """
    f = _divided_difference_np(w, dt)
    vh = np.conj(np.swapaxes(v, 1, 2))
    y = vh @ x @ v
    z = v @ (np.swapaxes(f, 1, 2) * y) @ vh
    return np.real(np.einsum("pab,jba->jp", ctrl, z))


def _expm_derivative_traces_nb(w, v, dt, x, ctrl):
    n, d = w.shape
    npar = ctrl.shape[0]
    out = np.empty((n, npar))
    ft = np.empty((d, d), dtype=np.complex128)
    for j in range(n):
        for k in range(d):
            for l in range(d):
                a = w[j, l] * dt
                b = w[j, k] * dt
                hx = 0.5 * (a - b)
                s = 1.0 if abs(hx) < 1e-300 else np.sin(hx) / hx
                ft[k, l] = -1j * dt * np.exp(-0.5j * (a + b)) * s
        vj = v[j]
        vh = np.conj(vj).T
        y = np.dot(np.dot(vh, x[j]), vj)
        z = np.dot(np.dot(vj, ft * y), vh)
        for p in range(npar):
            acc = 0.0
            for a_ in range(d):
                for b_ in range(d):
                    acc += (ctrl[p, a_, b_] * z[b_, a_]).real
            out[j, p] = acc
    return out


def unitary_adjoint_np(e, gamma_dag):
    """X_j = L_j Gamma^dag R_j with L_j = E_{j-1}..E_1 and R_j = E_N..E_{j+1}.

    Then d Re tr(Gamma^dag U) / dp_j = Re tr(dE_j/dp X_j).  Returns (U, X).
    """
    n, d = e.shape[0], e.shape[1]
    left = np.empty_like(e)
    acc = np.eye(d, dtype=np.complex128)
    for j in range(n):
        left[j] = acc
        acc = e[j] @ acc
    u = acc
    x = np.empty_like(e)
    q = gamma_dag.astype(np.complex128)
    for j in range(n - 1, -1, -1):
        x[j] = left[j] @ q
        q = q @ e[j]
    return u, x


def _unitary_adjoint_nb(e, gamma_dag):
    n, d = e.shape[0], e.shape[1]
    left = np.empty_like(e)
    acc = np.eye(d, dtype=np.complex128)
    for j in range(n):
        left[j] = acc
        acc = np.dot(e[j], acc)
    u = acc
    x = np.empty_like(e)
    q = gamma_dag.copy()
    for j in range(n - 1, -1, -1):
        x[j] = np.dot(left[j], q)
        q = np.dot(q, e[j])
    return u, x


# ---------------------------------------------------------------------------
# transfer-channel power iteration


def fixed_point_np(s, r0, tol, max_iter):
    """Iterate r <- S r from r0 until max|r_{k+1} - r_k| < tol.

    Returns (r, iterations, converged).
    """
    r = r0.astype(np.complex128)
    for it in range(1, max_iter + 1):
        nxt = s @ r
        delta = np.max(np.abs(nxt - r))
        r = nxt
        if delta < tol:
            return r, it, True
    return r, max_iter, False


def _fixed_point_nb(s, r0, tol, max_iter):
    r = r0.copy()
    for it in range(1, max_iter + 1):
        nxt = np.dot(s, r)
        delta = np.max(np.abs(nxt - r))
        r = nxt
        if delta < tol:
            return r, it, True
    return r, max_iter, False


# ---------------------------------------------------------------------------
# sequential sampling with qubit reset (pure-state trajectories)


def sample_trajectories_np(kraus, rot, uniforms):
    """Shot-by-shot simulation of measure-and-reset sampling.

    ``kraus[s]`` maps cavity input to output when the qubit leaves in |s>;
    ``rot[k]`` is the 2x2 basis change applied to the qubit before a z readout
    at site k; ``uniforms`` has shape (shots, L).  Returns int8 outcomes.
    """
    shots, nsites = uniforms.shape
    dim = kraus.shape[1]
    psi = np.zeros((shots, dim), dtype=np.complex128)
    psi[:, 0] = 1.0
    out = np.zeros((shots, nsites), dtype=np.int8)
    kt = np.swapaxes(kraus, 1, 2)
    for k in range(nsites):
        b0 = psi @ kt[0]
        b1 = psi @ kt[1]
        phi0 = rot[k, 0, 0] * b0 + rot[k, 0, 1] * b1
        phi1 = rot[k, 1, 0] * b0 + rot[k, 1, 1] * b1
        p0 = np.sum(np.abs(phi0) ** 2, axis=1)
        p1 = np.sum(np.abs(phi1) ** 2, axis=1)
        p0 = p0 / (p0 + p1)
        hit1 = uniforms[:, k] >= p0
        out[:, k] = hit1
        new = np.where(hit1[:, None], phi1, phi0)
        psi = new / np.linalg.norm(new, axis=1)[:, None]
    return out


def _sample_trajectories_nb(kraus, rot, uniforms):
    shots, nsites = uniforms.shape
    dim = kraus.shape[1]
    out = np.zeros((shots, nsites), dtype=np.int8)
    psi = np.zeros(dim, dtype=np.complex128)
    for sh in range(shots):
        psi[:] = 0.0
        psi[0] = 1.0
        for k in range(nsites):
            b0 = np.dot(kraus[0], psi)
            b1 = np.dot(kraus[1], psi)
            phi0 = rot[k, 0, 0] * b0 + rot[k, 0, 1] * b1
            phi1 = rot[k, 1, 0] * b0 + rot[k, 1, 1] * b1
            p0 = np.sum(np.abs(phi0) ** 2)
            p1 = np.sum(np.abs(phi1) ** 2)
            if uniforms[sh, k] >= p0 / (p0 + p1):
                out[sh, k] = 1
                psi = phi1 / np.sqrt(p1)
            else:
                psi = phi0 / np.sqrt(p0)
    return out


# ---------------------------------------------------------------------------
# batched open-system stepping
#
# Density matrices are stored as (K, 2*c, 2*c) stacks.  Dissipation factorises
# into a 4x4 qubit superoperator ``sq`` acting on (q, q') and a cavity
# superoperator acting on (n, n'), the latter passed both dense (numpy path)
# and as COO triplets (numba path; amplitude damping is very sparse).


def _dissipate_np(rho, sq, sc):
    k, d, _ = rho.shape
    c = d // 2
    x = rho.reshape(k, 2, c, 2, c).transpose(0, 1, 3, 2, 4).reshape(k, 4, c * c)
    x = np.matmul(sq, x) @ sc.T
    return x.reshape(k, 2, 2, c, c).transpose(0, 1, 3, 2, 4).reshape(k, d, d)


def noisy_forward_np(e, sq, sc, c_rows, c_cols, c_vals, rho0):
    """Apply rho <- Diss(E_j rho E_j^dag) for each step; return every intermediate.

    Output shape (N + 1, K, d, d); index 0 is ``rho0``.
    """
    n = e.shape[0]
    traj = np.empty((n + 1,) + rho0.shape, dtype=np.complex128)
    traj[0] = rho0
    rho = rho0
    for j in range(n):
        rho = e[j] @ rho @ np.conj(e[j].T)
        rho = _dissipate_np(rho, sq, sc)
        traj[j + 1] = rho
    return traj


def noisy_backward_np(e, sq, sc, c_rows, c_cols, c_vals, traj, w_final):
    """Back-propagate the adjoint ``w_final`` and return P_j for every step.

    P_j satisfies d Re sum_k <W_k, rho_N^k> / dp_j = Re tr(dE_j/dp P_j).
    """
    n = e.shape[0]
    sq_h = np.conj(sq.T)
    sc_h = np.conj(sc.T)
    p = np.empty_like(e)
    w = w_final
    for j in range(n - 1, -1, -1):
        wt = _dissipate_np(w, sq_h, sc_h)
        rho = traj[j]
        eh = np.conj(e[j].T)
        a = rho @ eh @ np.conj(np.swapaxes(wt, 1, 2))
        b = np.conj(np.swapaxes(rho, 1, 2)) @ eh @ wt
        p[j] = np.sum(a + b, axis=0)
        w = eh @ wt @ e[j]
    return p


def _dissipate_nb(rho, sq, c_rows, c_cols, c_vals, c):
    k = rho.shape[0]
    tmp = np.zeros_like(rho)
    # qubit part: (q, q') <- sq[(q,q'), (p,p')]
    for b in range(k):
        for q in range(2):
            for qp in range(2):
                row = 2 * q + qp
                for pp in range(2):
                    for ppp in range(2):
                        coef = sq[row, 2 * pp + ppp]
                        if coef == 0:
                            continue
                        for n in range(c):
                            for m in range(c):
                                tmp[b, q * c + n, qp * c + m] += coef * rho[b, pp * c + n, ppp * c + m]
    out = np.zeros_like(rho)
    for b in range(k):
        for q in range(2):
            for qp in range(2):
                for t in range(c_vals.shape[0]):
                    r = c_rows[t]
                    s = c_cols[t]
                    out[b, q * c + r // c, qp * c + r % c] += c_vals[t] * tmp[b, q * c + s // c, qp * c + s % c]
    return out


_dissipate_jit = njit(_dissipate_nb) or _dissipate_nb


def _noisy_forward_nb(e, sq, sc, c_rows, c_cols, c_vals, rho0):
    n = e.shape[0]
    k, d = rho0.shape[0], rho0.shape[1]
    c = d // 2
    traj = np.empty((n + 1, k, d, d), dtype=np.complex128)
    traj[0] = rho0
    rho = rho0.copy()
    for j in range(n):
        ej = e[j]
        ejh = np.conj(ej).T
        for b in range(k):
            rho[b] = np.dot(np.dot(ej, rho[b]), ejh)
        rho = _dissipate_jit(rho, sq, c_rows, c_cols, c_vals, c)
        traj[j + 1] = rho
    return traj


def _noisy_backward_nb(e, sq, sc, c_rows, c_cols, c_vals, traj, w_final):
    n = e.shape[0]
    k, d = w_final.shape[0], w_final.shape[1]
    c = d // 2
    sq_h = np.conj(sq).T.copy()
    # adjoint of a COO operator swaps rows and cols and conjugates
    cv_h = np.conj(c_vals)
    p = np.empty_like(e)
    w = w_final.copy()
    for j in range(n - 1, -1, -1):
        wt = _dissipate_jit(w, sq_h, c_cols, c_rows, cv_h, c)
        ej = e[j]
        eh = np.conj(ej).T
        acc = np.zeros((d, d), dtype=np.complex128)
        for b in range(k):
            rho = traj[j, b]
            acc += np.dot(np.dot(rho, eh), np.conj(wt[b]).T)
            acc += np.dot(np.dot(np.conj(rho).T, eh), wt[b])
            w[b] = np.dot(np.dot(eh, wt[b]), ej)
        p[j] = acc
    return p


# ---------------------------------------------------------------------------

step_eigensystems_nb = njit(_step_eigensystems_nb)
unitaries_from_eig_nb = njit(_unitaries_from_eig_nb)
chain_product_nb = njit(_chain_product_nb)
expm_derivative_traces_nb = njit(_expm_derivative_traces_nb)
unitary_adjoint_nb = njit(_unitary_adjoint_nb)
fixed_point_nb = njit(_fixed_point_nb)
sample_trajectories_nb = njit(_sample_trajectories_nb)
noisy_forward_nb = njit(_noisy_forward_nb)
noisy_backward_nb = njit(_noisy_backward_nb)

if USE_NUMBA:
    step_eigensystems = step_eigensystems_nb
    unitaries_from_eig = unitaries_from_eig_nb
    chain_product = chain_product_nb
    expm_derivative_traces = expm_derivative_traces_nb
    unitary_adjoint = unitary_adjoint_nb
    fixed_point = fixed_point_nb
    # the compiled sampler and noisy sweeps measured slower than their numpy
    # versions at every cutoff tried (4 to 10), so numpy stays in charge there
    sample_trajectories = sample_trajectories_np
    noisy_forward = noisy_forward_np
    noisy_backward = noisy_backward_np
else:
    step_eigensystems = step_eigensystems_np
    unitaries_from_eig = unitaries_from_eig_np
    chain_product = chain_product_np
    expm_derivative_traces = expm_derivative_traces_np
    unitary_adjoint = unitary_adjoint_np
    fixed_point = fixed_point_np
    sample_trajectories = sample_trajectories_np
    noisy_forward = noisy_forward_np
    noisy_backward = noisy_backward_np
