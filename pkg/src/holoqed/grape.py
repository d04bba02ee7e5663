"""Pulse-level (GRAPE-style) synthesis of target unitaries."""
from dataclasses import dataclass, field
import logging

import numpy as np

from .device import DeviceParams
from .errors import DimensionMismatch, NoProgress
from .optim import ProjectedAdam
from .propagator import ControlSystem, Waveform, project_amplitudes

log = logging.getLogger(__name__)


def trace_fidelity(u, target):
    """|tr(target^dag u)| / dim; invariant under a global phase of either argument."""
    u = np.asarray(u)
    target = np.asarray(target)
    if u.shape != target.shape:
        raise DimensionMismatch(f"{u.shape} vs {target.shape}")
    return float(abs(np.vdot(target, u)) / u.shape[0])


def subspace_indices(cutoff, levels):
    """Joint-space indices of qubit (x) the lowest ``levels`` cavity levels."""
    n = np.arange(levels)
    return np.concatenate([n, cutoff + n])


def restrict(u, cutoff, levels):
    """Block of ``u`` acting on the lowest ``levels`` cavity levels (both qubit states)."""
    idx = subspace_indices(cutoff, levels)
    return u[np.ix_(idx, idx)]


@dataclass
class SynthesisProblem:
    """A unitary-synthesis task.

    ``target`` may be smaller than the simulated space: a target of dimension
    2m (m <= cutoff) is compared with the block of U acting on the lowest m
    cavity levels, so levels m..cutoff-1 act as unconstrained simulation
    headroom while leakage out of the block still costs fidelity.  With
    ``columns`` set, ``target`` is a 2m x k isometry prescribing only those
    input columns of the block.
    """

    target: np.ndarray
    params: DeviceParams = field(default_factory=DeviceParams)
    n_ts: int = 100
    seed: int = 0
    max_iters: int = 2000
    tol_infidelity: float = 1e-6
    lr: float = 0.1
    init_radius: float = 0.1
    init: Waveform = None
    stall_window: int = 50
    columns: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.target, dtype=complex)
        k = t.shape[0] if self.columns is None else len(self.columns)
        if t.ndim != 2 or t.shape != (t.shape[0], k) or t.shape[0] % 2:
            raise DimensionMismatch(f"target must be 2m x {k} with even 2m, got {t.shape}")
        if t.shape[0] > self.params.dim:
            raise DimensionMismatch(f"target dim {t.shape[0]} exceeds joint dim {self.params.dim}")
        if np.abs(t.conj().T @ t - np.eye(k)).max() > 1e-10:
            raise ValueError("target columns are not orthonormal to 1e-10")
        if self.n_ts < 1:
            raise ValueError("n_ts must be >= 1")
        self.target = t

    @property
    def levels(self):
        return self.target.shape[0] // 2


def random_waveform(n_ts, params, rng, radius=0.1):
    """Amplitudes uniform in the disc of radius ``radius * omega_max``."""
    r = radius * params.omega_max * np.sqrt(rng.uniform(size=(n_ts, 2)))
    phi = rng.uniform(0, 2 * np.pi, size=(n_ts, 2))
    z = r * np.exp(1j * phi)
    return Waveform.from_complex(z[:, 0], z[:, 1], params.dt)


class FidelityObjective:
    """Subspace trace fidelity and its gradient in the amplitudes."""

    def __init__(self, params, target, columns=None):
        self.params = params
        self.system = ControlSystem.from_params(params)
        self.target = np.asarray(target, dtype=complex)
        self.levels = self.target.shape[0] // 2
        self.idx = subspace_indices(params.cutoff, self.levels)
        self.cols = self.idx if columns is None else self.idx[np.asarray(columns)]
        self.norm = self.target.shape[1]

    def fidelity(self, amps):
        u = self.system.propagate(amps)
        return float(abs(np.vdot(self.target, u[np.ix_(self.idx, self.cols)])) / self.norm)

    def value_and_grad(self, amps):
        u = self.system.propagate(amps)
        z = np.vdot(self.target, u[np.ix_(self.idx, self.cols)])
        phase = z / abs(z) if abs(z) > 0 else 1.0
        gamma = np.zeros((self.params.dim, self.params.dim), dtype=complex)
        gamma[np.ix_(self.idx, self.cols)] = phase * self.target / self.norm
        _, g = self.system.gradient(amps, gamma)
        return abs(z) / self.norm, g


def synthesize(problem):
    """Maximise the trace fidelity over the drive amplitudes.

    Returns (best waveform, per-iteration fidelity).  Raises NoProgress (with
    the incumbent attached) if the running best improves by less than 1e-12
    over ``stall_window`` consecutive iterations before reaching the tolerance.
    """
    p = problem.params
    rng = np.random.default_rng(problem.seed)
    wf0 = problem.init if problem.init is not None else random_waveform(problem.n_ts, p, rng, problem.init_radius)
    if wf0.n_ts != problem.n_ts:
        raise ValueError("initial waveform length does not match n_ts")
    obj = FidelityObjective(p, problem.target, problem.columns)
    scale = p.omega_max

    def project(x):
        return project_amplitudes(x.reshape(-1, 4), 1.0).ravel()

    opt = ProjectedAdam(wf0.amps.ravel() / scale, project, lr=problem.lr)
    history = []
    best_f = -np.inf
    window_start = -np.inf
    stalled = 0
    for it in range(problem.max_iters + 1):
        f, g = obj.value_and_grad(opt.x.reshape(-1, 4) * scale)
        history.append(f)
        if f > best_f:
            best_f = f
        if 1.0 - best_f <= problem.tol_infidelity or it == problem.max_iters:
            opt.record(-f)
            break
        if best_f - window_start < 1e-12:
            stalled += 1
            if stalled >= problem.stall_window:
                opt.record(-f)
                best = Waveform(opt.best_x.reshape(-1, 4) * scale, p.dt)
                raise NoProgress(
                    f"fidelity stalled at {best_f:.12f} after {it} iterations", best=best, history=history
                )
        else:
            window_start = best_f
            stalled = 0
        opt.record(-f)
        opt.step(-g.ravel() * scale)
    best = Waveform(opt.best_x.reshape(-1, 4) * scale, p.dt)
    log.debug("synthesis finished: %d iterations, infidelity %.3e", len(history), 1 - best_f)
    return best, history
