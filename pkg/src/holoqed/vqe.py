"""Variational ground-state search over drive waveforms (holographic VQE).

The objective is the stationary energy density of the qMPS generated by the
waveform's unitary, using every simulated cavity level as bond space, plus
``penalty_weight`` times the stationary population of the buffer levels
n >= ``bond_levels``.  Gradients are exact: adjoint through the stationary
state and the channel, then through the pulse propagator (ideal) or the
noisy step sequence.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from . import qmps
from .device import DeviceParams
from .errors import AllRunsFailed, NonConvergence
from .classical import complete_isometry, uniform_ground_tensor
from .errors import NoProgress
from .grape import SynthesisProblem, random_waveform, synthesize
from .noise import NoiseSpec, NoisySite
from .optim import ProjectedAdam
from .propagator import ControlSystem, Waveform, project_amplitudes
from .qmps import SpinChainModel

log = logging.getLogger(__name__)

BUFFER_GAP = 6


@dataclass
class VqeProblem:
    model: SpinChainModel = field(default_factory=SpinChainModel)
    params: DeviceParams = field(default_factory=DeviceParams)
    n_ts: int = 200
    bond_levels: int = None
    penalty_weight: float = 10.0
    batch: int = 50
    seed: int = 0
    noise: NoiseSpec = None
    max_iters: int = 300
    lr: float = 0.001
    init_radius: float = 0.5
    init: Waveform = None
    init_jitter: float = 0.02
    warm_start: bool = False

    def __post_init__(self):
        if self.bond_levels is None:
            self.bond_levels = max(1, self.params.cutoff - BUFFER_GAP)
        if not 1 <= self.bond_levels <= self.params.cutoff:
            raise ValueError("bond_levels must lie in 1..cutoff")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not self.penalty_weight > 0:
            raise ValueError("penalty_weight must be positive")
        if self.n_ts < 1:
            raise ValueError("n_ts must be >= 1")

    @property
    def duration(self):
        return self.n_ts * self.params.dt


@dataclass
class Evaluation:
    value: float
    energy: float
    penalty: float
    buffer_population: float
    rho: np.ndarray


class VqeObjective:
    """Penalised energy of a waveform and its gradient in the amplitudes."""

    labels = ("I", "x", "z")

    def __init__(self, problem):
        self.problem = problem
        self.params = problem.params
        self.system = ControlSystem.from_params(problem.params)
        self.noisy = problem.noise is not None
        self.site = NoisySite(problem.params, problem.noise) if self.noisy else None

    def _channel(self, amps):
        if self.noisy:
            return self.site.forward(amps, self.labels)
        u = self.system.propagate(amps)
        b = qmps.kraus_from_unitary(u)
        return qmps.SiteChannel.from_kraus(b, self.labels), b

    def _score(self, ch):
        p = self.problem
        return qmps.energy_and_channel_gradient(ch, p.model, p.penalty_weight, p.bond_levels,
                                                method="doubling")

    def evaluate(self, amps):
        ch, _ = self._channel(amps)
        val, _, info = self._score(ch)
        return self._evaluation(val, info)

    def _evaluation(self, val, info):
        pop = qmps.buffer_population(info["rho"], self.problem.bond_levels)
        return Evaluation(float(val), float(info["energy"]), float(info["penalty"]), pop, info["rho"])

    def value_and_grad(self, amps):
        ch, aux = self._channel(amps)
        val, grads, info = self._score(ch)
        if self.noisy:
            g = self.site.backward(aux, grads)
        else:
            b = aux
            gam = qmps.kraus_gradient(b, grads)
            c = self.params.cutoff
            gu = np.zeros((2 * c, 2 * c), dtype=complex)
            gu[:c, :c] = gam[0]
            gu[c:, :c] = gam[1]
            _, g = self.system.gradient(amps, gu)
        return self._evaluation(val, info), g


def returning_target(t, cutoff):
    """Qubit-|0> columns (2*cutoff x cutoff) of a site unitary that never strands population.

    Input level i < D carries the tensor; D <= i < 2D is sent onto the
    orthogonal complement of the tensor's image inside the logical outputs
    (s, j < D); i >= 2D goes to (1, i - D), one rung down a ladder that ends
    in the logical block.  Leaked population therefore drains back instead
    of sitting in an identity block, which would dominate the stationary
    state of the chain.
    """
    d = t.bond_dim
    m = int(cutoff)
    if m < 2 * d:
        raise ValueError("cutoff must be at least twice the bond dimension")
    logical = np.concatenate([np.arange(d), m + np.arange(d)])
    cols = np.zeros((2 * d, d), dtype=complex)
    for s in range(2):
        cols[s * d:(s + 1) * d] = t.a[s].T
    core = complete_isometry(cols)
    out = np.zeros((2 * m, m), dtype=complex)
    out[logical, :2 * d] = core
    for i in range(2 * d, m):
        out[m + i - d, i] = 1.0
    return out


def warm_start(model, params, n_ts, bond_levels, seed=0, max_iters=3000):
    """GRAPE waveform approximating the uniform variational tensor at D = ``bond_levels``.

    Returns (Waveform, infidelity on the qubit-|0> columns, classical energy density).
    """
    ref = uniform_ground_tensor(model, bond_levels, seed=seed)
    c = params.cutoff
    target = returning_target(ref.tensor, c)
    prob = SynthesisProblem(target, params, n_ts, seed=seed, max_iters=max_iters, tol_infidelity=1e-4,
                            columns=np.arange(c))
    try:
        wf, hist = synthesize(prob)
    except NoProgress as exc:
        wf, hist = exc.best, exc.history
    return wf, 1.0 - max(hist), ref.energy


def objective(wf, problem):
    """(energy density, penalty) of the waveform's stationary state."""
    wf.check_bound(problem.params.omega_max)
    ev = VqeObjective(problem).evaluate(wf.amps)
    return ev.energy, ev.penalty


@dataclass
class RunSummary:
    seed: int
    status: str
    value: float = np.inf
    energy: float = np.nan
    penalty: float = np.nan
    buffer_population: float = np.nan
    iterations: int = 0
    trace: list = field(default_factory=list)

    def to_dict(self, with_trace=False):
        d = {k: getattr(self, k) for k in ("seed", "status", "value", "energy", "penalty", "buffer_population", "iterations")}
        if with_trace:
            d["trace"] = list(self.trace)
        return d


@dataclass
class VqeResult:
    waveform: Waveform
    energy: float
    penalty: float
    buffer_population: float
    runs: list

    @property
    def value(self):
        return self.energy + self.penalty


def optimize_waveform(obj, amps0, max_iters, lr):
    """Projected Adam on amplitudes scaled by omega_max; returns (best amps, trace, iterations)."""
    scale = obj.params.omega_max

    def project(x):
        return project_amplitudes(x.reshape(-1, 4), 1.0).ravel()

    opt = ProjectedAdam(np.asarray(amps0).ravel() / scale, project, lr=lr)
    trace = []
    it = 0
    for it in range(max_iters + 1):
        ev, g = obj.value_and_grad(opt.x.reshape(-1, 4) * scale)
        trace.append(ev.value)
        opt.record(ev.value)
        if it == max_iters:
            break
        opt.step(g.ravel() * scale)
    return opt.best_x.reshape(-1, 4) * scale, trace, it


def _run_batch(problem, obj):
    p = problem.params
    if problem.init is None and problem.warm_start:
        wf, inf, _ = warm_start(problem.model, p, problem.n_ts, problem.bond_levels, problem.seed)
        log.info("warm start synthesized to infidelity %.3e", inf)
        problem = VqeProblem(**{**problem.__dict__, "init": wf})
    seeds = np.random.SeedSequence(problem.seed).spawn(problem.batch)
    runs = []
    best = None
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        if problem.init is not None:
            # warm start: run 0 uses it as given, the others perturb it
            amps0 = problem.init.amps
            if k > 0:
                kick = random_waveform(problem.n_ts, p, rng, problem.init_jitter).amps
                amps0 = project_amplitudes(amps0 + kick, p.omega_max)
        else:
            amps0 = random_waveform(problem.n_ts, p, rng, problem.init_radius).amps
        run_seed = int(ss.generate_state(1)[0])
        try:
            amps, trace, iters = optimize_waveform(obj, amps0, problem.max_iters, problem.lr)
            ev = obj.evaluate(amps)
        except NonConvergence as exc:
            log.info("run %d failed: %s", k, exc)
            runs.append(RunSummary(run_seed, "nonconvergence"))
            continue
        runs.append(RunSummary(run_seed, "ok", ev.value, ev.energy, ev.penalty, ev.buffer_population, iters, trace))
        if best is None or ev.value < best[1].value:
            best = (amps, ev)
        log.debug("run %d: E = %.8f, penalty %.2e", k, ev.energy, ev.penalty)
    if best is None:
        raise AllRunsFailed(f"all {problem.batch} runs failed to converge")
    amps, ev = best
    return VqeResult(Waveform(amps, p.dt), ev.energy, ev.penalty, ev.buffer_population, runs)


def run_vqe(problem):
    """Best of ``batch`` seeded runs on the ideal (noiseless) objective."""
    if problem.noise is not None:
        problem = VqeProblem(**{**problem.__dict__, "noise": None})
    return _run_batch(problem, VqeObjective(problem))


def run_noisy_vqe(problem):
    """Best of ``batch`` runs on the noisy objective (exact dissipative method)."""
    if problem.noise is None:
        raise ValueError("run_noisy_vqe needs a NoiseSpec")
    return _run_batch(problem, VqeObjective(problem))


def relative_error(energy, reference):
    """1 - E / E0 (positive when the variational energy lies above E0 < 0)."""
    return 1.0 - energy / reference


def tradeoff_scan(model, params, durations_ns, scales, reference, ideal_batch=4, ideal_iters=300,
                  noisy_iters=60, seed=0, noise=None, bond_levels=None, lr=0.001):
    """Noisy energy error versus duration for several coherence multipliers.

    For each duration a warm-started ideal batch supplies the starting waveform; the noisy
    objective is then re-optimized at each scale in increasing order, each
    scale starting from the better of the ideal optimum and the previous
    scale's optimum.  Returns {scale: [(duration, energy, rel_error), ...]}.
    """
    base = noise or NoiseSpec()
    out = {s: [] for s in scales}
    for tau in durations_ns:
        n_ts = int(round(tau / params.dt))
        prob = VqeProblem(model, params, n_ts, bond_levels, batch=ideal_batch, seed=seed, max_iters=ideal_iters, lr=lr,
                          warm_start=True)
        ideal = run_vqe(prob)
        starts = [ideal.waveform]
        for s in sorted(scales):
            nprob = VqeProblem(model, params, n_ts, prob.bond_levels, batch=1, seed=seed,
                               noise=base.with_scale(s), max_iters=noisy_iters, lr=lr)
            obj = VqeObjective(nprob)
            best_start = min(starts, key=lambda w: obj.evaluate(w.amps).value)
            amps, _, _ = optimize_waveform(obj, best_start.amps, noisy_iters, lr)
            ev = obj.evaluate(amps)
            starts.append(Waveform(amps, params.dt))
            out[s].append((tau, ev.energy, relative_error(ev.energy, reference)))
            log.info("tau=%g scale=%g: E=%.6f", tau, s, ev.energy)
    return out
