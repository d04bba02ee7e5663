"""Experiment runners.  Each takes a RunContext and returns the results.json payload.

Figure tables are written through ``ctx.table`` so every CSV carries the
manifest hash.
"""
from dataclasses import dataclass
import json
import logging
from pathlib import Path

import numpy as np
from scipy.stats import unitary_group

from .. import classical, grape, qmps, snap, vqe
from ..device import DeviceParams
from ..errors import NoProgress
from ..noise import NoiseSpec
from ..propagator import ControlSystem, Waveform
from ..qmps import MpsTensor, SpinChainModel
from .runio import write_csv

log = logging.getLogger(__name__)


@dataclass
class RunContext:
    manifest: dict
    params: DeviceParams
    model: SpinChainModel
    noise: NoiseSpec
    problem: dict
    seed: int
    output_dir: Path
    mhash: str
    base_dir: Path = Path(".")

    @classmethod
    def from_manifest(cls, manifest, output_dir, mhash, base_dir="."):
        noise = NoiseSpec.from_dict(manifest["noise"]) if "noise" in manifest else NoiseSpec()
        return cls(manifest, DeviceParams.from_dict(manifest.get("params", {})),
                   SpinChainModel.from_dict(manifest.get("model", {})), noise,
                   dict(manifest.get("problem", {})), int(manifest.get("seed", 0)),
                   Path(output_dir), mhash, Path(base_dir))

    def table(self, name, header, rows):
        write_csv(self.output_dir / name, header, rows, self.mhash)
        return name

    def path(self, key):
        p = Path(self.problem[key])
        return p if p.is_absolute() else self.base_dir / p

    def get(self, key, default):
        return self.problem.get(key, default)


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _steps(ctx):
    """Durations as step counts, from tau_ns (scalar or list) or n_ts."""
    if "tau_ns" in ctx.problem:
        return [int(round(t / ctx.params.dt)) for t in _as_list(ctx.problem["tau_ns"])]
    return [int(ctx.get("n_ts", 100))]


# ---------------------------------------------------------------------------
# targets


def _sdim_tensor(ctx, bond_dim):
    return classical.uniform_ground_tensor(ctx.model, bond_dim, seed=ctx.seed)


def _target(ctx):
    """(target_id, TargetUnitary) for the synthesis experiments."""
    if "target_file" in ctx.problem:
        t = classical.TargetUnitary.from_json(ctx.path("target_file").read_text())
        return Path(ctx.problem["target_file"]).stem, t
    kind = ctx.get("target", "sdim")
    d = int(ctx.get("bond_dim", 2))
    mc = int(ctx.get("target_cutoff", 2 * d))
    if kind == "haar":
        u = unitary_group.rvs(2 * mc, random_state=np.random.default_rng(ctx.seed))
        return f"haar-{2 * mc}-seed{ctx.seed}", classical.TargetUnitary(u, mc, "Haar-random")
    ref = _sdim_tensor(ctx, d)
    m = ctx.model
    tid = f"sdim-J{m.j_coupling:g}-h{m.h_field:g}-V{m.v_perturbation:g}-D{d}-mc{mc}"
    return tid, classical.embed_isometry(ref.tensor, mc)


def _reference_energy(ctx):
    if "reference_energy" in ctx.problem:
        return float(ctx.problem["reference_energy"])
    cfg = classical.DmrgConfig(int(ctx.get("reference_chain_length", 64)),
                               int(ctx.get("reference_bond_dim", 16)), seed=ctx.seed)
    return classical.bulk_energy_density(classical.dmrg_ground_state(ctx.model, cfg))


# ---------------------------------------------------------------------------
# synthesis


def _grape_runs(ctx, target, tid):
    """Best-of-restarts GRAPE at each duration; returns result records."""
    records = []
    restarts = int(ctx.get("restarts", 1))
    for n_ts in _steps(ctx):
        best = None
        for k in range(restarts):
            seed = ctx.seed + k
            prob = grape.SynthesisProblem(target.matrix, ctx.params, n_ts, seed=seed,
                                          max_iters=int(ctx.get("max_iters", 2000)),
                                          tol_infidelity=float(ctx.get("tol_infidelity", 1e-4)),
                                          lr=float(ctx.get("lr", 0.1)))
            try:
                wf, hist = grape.synthesize(prob)
            except NoProgress as exc:
                wf, hist = exc.best, exc.history
            inf = 1.0 - max(hist)
            if best is None or inf < best["final_infidelity"]:
                best = {"target_id": tid, "n_ts": n_ts, "dt_ns": ctx.params.dt, "final_infidelity": inf,
                        "iterations": len(hist) - 1, "seed": seed, "waveform": wf.to_dict()}
        log.info("GRAPE n_ts=%d: infidelity %.3e", n_ts, best["final_infidelity"])
        records.append(best)
    return records


def synthesize_grape(ctx):
    tid, target = _target(ctx)
    records = _grape_runs(ctx, target, tid)
    d = target.logical_dim
    rows = [(d, r["n_ts"] * r["dt_ns"], r["final_infidelity"]) for r in records]
    csv = ctx.table("infidelity_vs_tau.csv", ["bond_dim", "tau_ns", "infidelity"], rows)
    return {"target_id": tid, "records": records, "tables": [csv]}


def _snap_run(ctx, target):
    depths = ctx.get("depths", None)
    depth = max(depths) if depths else int(ctx.get("depth", 8))
    res = snap.synthesize_circuit(target.matrix, depth, seed=ctx.seed, max_iters=int(ctx.get("max_iters", 300)),
                                  batch=int(ctx.get("batch", 10)), cutoff=ctx.get("snap_cutoff", None))
    return res


def _snap_rows(res):
    return [(k + 1, snap.implementation_time(c), 1.0 - f) for k, (c, f) in enumerate(zip(res.circuits, res.history))]


def synthesize_snap(ctx):
    tid, target = _target(ctx)
    res = _snap_run(ctx, target)
    rows = _snap_rows(res)
    csv = ctx.table("snap_infidelity_vs_depth.csv", ["depth", "implementation_time_ns", "infidelity"], rows)
    return {"target_id": tid, "depth": res.circuit.depth, "final_infidelity": 1.0 - res.fidelity,
            "circuit": res.circuit.to_dict(), "tables": [csv]}


def time_to_threshold(points, threshold):
    """Smallest implementation time whose infidelity is below ``threshold`` (None if never)."""
    hits = [t for t, inf in points if inf < threshold]
    return min(hits) if hits else None


def compare_control(ctx):
    tid, target = _target(ctx)
    thr = float(ctx.get("threshold", 1e-2))
    records = _grape_runs(ctx, target, tid)
    g_pts = [(r["n_ts"] * r["dt_ns"], r["final_infidelity"]) for r in records]
    res = _snap_run(ctx, target)
    s_pts = [(t, inf) for _, t, inf in _snap_rows(res)]
    rows = [("grape", t, inf) for t, inf in g_pts] + [("snap", t, inf) for t, inf in s_pts]
    csv = ctx.table("control_comparison.csv", ["series", "implementation_time_ns", "infidelity"], rows)
    tg, ts = time_to_threshold(g_pts, thr), time_to_threshold(s_pts, thr)
    ratio = ts / tg if tg and ts else None
    return {"target_id": tid, "threshold": thr, "grape_time_ns": tg, "snap_time_ns": ts, "speedup": ratio,
            "grape_records": records, "snap_circuit": res.circuit.to_dict(), "tables": [csv]}


# ---------------------------------------------------------------------------
# variational


def vqe_ideal(ctx):
    e0 = _reference_energy(ctx)
    cutoffs = ctx.get("cutoffs", None) or [ctx.params.cutoff]
    levels = _as_list(ctx.get("bond_levels", None))
    grid, traces, best = [], [], None
    for c in cutoffs:
        params = ctx.params.with_cutoff(c)
        for lv in levels:
            for n_ts in _steps(ctx):
                prob = vqe.VqeProblem(ctx.model, params, n_ts, lv, float(ctx.get("penalty_weight", 10.0)),
                                      int(ctx.get("batch", 10)), ctx.seed, max_iters=int(ctx.get("max_iters", 300)),
                                      lr=float(ctx.get("lr", 0.001)), warm_start=bool(ctx.get("warm_start", True)))
                res = vqe.run_vqe(prob)
                tau = n_ts * params.dt
                grid.append({"cutoff": c, "bond_levels": prob.bond_levels, "tau_ns": tau, "energy": res.energy,
                             "relative_error": vqe.relative_error(res.energy, e0),
                             "buffer_population": res.buffer_population,
                             "runs": [r.to_dict() for r in res.runs]})
                for k, run in enumerate(res.runs):
                    traces += [(c, prob.bond_levels, tau, k, i, v) for i, v in enumerate(run.trace)]
                if best is None or res.value < best[0].value:
                    best = (res, params)
    rows = [(g["cutoff"], g["bond_levels"], g["tau_ns"], g["energy"], g["relative_error"], g["buffer_population"])
            for g in grid]
    tables = [
        ctx.table("energy_vs_tau.csv", ["cutoff", "bond_levels", "tau_ns", "energy", "relative_error",
                                        "buffer_population"], rows),
        ctx.table("objective_traces.csv", ["cutoff", "bond_levels", "tau_ns", "run", "iteration", "objective"], traces),
    ]
    res, params = best
    m = ctx.model
    tables.append(ctx.table("energy.csv", ["J", "h", "V", "energy_density", "leakage"],
                            [(m.j_coupling, m.h_field, m.v_perturbation, res.energy, res.buffer_population)]))
    return {"reference_energy": e0, "grid": grid, "best": {"cutoff": params.cutoff, "energy": res.energy,
            "relative_error": vqe.relative_error(res.energy, e0), "buffer_population": res.buffer_population,
            "waveform": res.waveform.to_dict()}, "tables": tables}


def tradeoff_summary(curve):
    """Minimum of an error-vs-tau curve and whether it is interior."""
    errs = [e for _, _, e in curve]
    k = int(np.argmin(errs))
    return {"tau_ns": curve[k][0], "relative_error": errs[k], "interior": 0 < k < len(errs) - 1}


def vqe_noisy(ctx):
    e0 = _reference_energy(ctx)
    taus = [n * ctx.params.dt for n in _steps(ctx)]
    scales = [float(s) for s in ctx.get("scales", [1.0])]
    lv = ctx.get("bond_levels", None)
    out = vqe.tradeoff_scan(ctx.model, ctx.params, taus, scales, e0, ideal_batch=int(ctx.get("ideal_batch", 2)),
                            ideal_iters=int(ctx.get("ideal_iters", 300)), noisy_iters=int(ctx.get("noisy_iters", 60)),
                            seed=ctx.seed, noise=ctx.noise, bond_levels=lv, lr=float(ctx.get("lr", 0.001)))
    rows = [(s, tau, e, err) for s in scales for tau, e, err in out[s]]
    csv = ctx.table("energy_error_vs_tau.csv", ["noise_scale", "tau_ns", "energy", "relative_error"], rows)
    return {"reference_energy": e0, "curves": {str(s): out[s] for s in scales},
            "minima": {str(s): tradeoff_summary(out[s]) for s in scales}, "tables": [csv]}


# ---------------------------------------------------------------------------
# classical reference, correlations and sampling


def dmrg_reference(ctx):
    cfg = classical.DmrgConfig(int(ctx.get("chain_length", 128)), int(ctx.get("bond_dim", 16)),
                               float(ctx.get("sweep_tol", 1e-7)), int(ctx.get("max_sweeps", 30)), ctx.seed)
    res = classical.dmrg_ground_state(ctx.model, cfg)
    e = classical.bulk_energy_density(res)
    max_r = int(ctx.get("max_r", 8))
    pairs = ctx.get("pairs", ["zz", "xx"])
    corr = [(r, p, classical.bulk_correlation(res, p[0], p[1], r)) for p in pairs for r in range(1, max_r + 1)]
    m = ctx.model
    tables = [
        ctx.table("sweeps.csv", ["sweep", "energy"], list(enumerate(res.sweep_energies, start=1))),
        ctx.table("correlations.csv", ["r", "operator_pair", "value"], corr),
        ctx.table("energy.csv", ["J", "h", "V", "energy_density", "leakage"],
                  [(m.j_coupling, m.h_field, m.v_perturbation, e, 0.0)]),
    ]
    return {"chain_length": cfg.chain_length, "bond_dim": cfg.bond_dim, "total_energy": res.energy,
            "bulk_energy_density": e, "bulk_magnetization_x": classical.bulk_magnetization(res),
            "sweep_energies": list(res.sweep_energies), "tables": tables}


def _source_unitary(ctx):
    """(unitary, bond_dim or None, description) for the correlation/sampling source."""
    src = ctx.get("source", "uniform")
    if src == "waveform":
        wf = Waveform.from_json(ctx.path("waveform_file").read_text())
        wf.check_bound(ctx.params.omega_max)
        return ControlSystem.from_params(ctx.params).propagate(wf.amps), None, "waveform"
    if src == "tensor":
        t = MpsTensor.from_dict(json.loads(ctx.path("tensor_file").read_text()))
    else:
        t = _sdim_tensor(ctx, int(ctx.get("bond_dim", 2))).tensor
    return classical.embed_isometry(t).matrix, t.bond_dim, src


def correlations(ctx):
    max_r = int(ctx.get("max_r", 8))
    pairs = ctx.get("pairs", ["zz", "xx"])
    if ctx.get("source", "uniform") == "dmrg":
        return dmrg_reference(ctx)
    u, d, src = _source_unitary(ctx)
    t = qmps.extract_tensor(u, d)
    ch = qmps.SiteChannel.from_tensor(t)
    rho = qmps.stationary_vector(ch)
    rows = [(r, p, qmps.correlation(ch, p[0], p[1], r, rho)) for p in pairs for r in range(1, max_r + 1)]
    csv = ctx.table("correlations.csv", ["r", "operator_pair", "value"], rows)
    m = ctx.model
    e = qmps.energy_density(t, m)
    tab = ctx.table("energy.csv", ["J", "h", "V", "energy_density", "leakage"],
                    [(m.j_coupling, m.h_field, m.v_perturbation, e, t.leakage)])
    return {"source": src, "bond_dim": t.bond_dim, "energy_density": e, "tables": [csv, tab]}


def sample(ctx):
    sites = int(ctx.get("sites", 8))
    bases = ctx.get("bases", "z" * sites)
    shots = int(ctx.get("shots", 10_000))
    u, d, src = _source_unitary(ctx)
    bits = qmps.sample_chain(u, bases, shots, seed=ctx.seed, bond_dim=d)
    spins = 1 - 2 * bits.astype(float)
    ch = qmps.SiteChannel.from_unitary(u, d)
    rows = []
    for r in range(1, sites):
        est = float(np.mean(spins[:, 0] * spins[:, r]))
        pair = f"{bases[0].lower()}{bases[r].lower()}"
        exact = qmps.chain_correlation(ch, pair[0], pair[1], 0, r)
        rows.append((r, pair, est, exact, float(np.sqrt(max(1 - est ** 2, 0.0) / shots))))
    tables = [
        ctx.table("samples.csv", ["shot"] + [f"site{k}" for k in range(sites)],
                  [(i, *map(int, row)) for i, row in enumerate(bits)]),
        ctx.table("sampled_correlations.csv", ["r", "operator_pair", "value", "channel_value", "std_error"], rows),
    ]
    return {"source": src, "shots": shots, "bases": bases,
            "correlations": [{"r": r, "pair": p, "sampled": v, "channel": x, "std_error": s}
                             for r, p, v, x, s in rows], "tables": tables}


RUNNERS = {
    "synthesize_grape": synthesize_grape,
    "synthesize_snap": synthesize_snap,
    "compare_control": compare_control,
    "vqe_ideal": vqe_ideal,
    "vqe_noisy": vqe_noisy,
    "dmrg_reference": dmrg_reference,
    "correlations": correlations,
    "sample": sample,
}
