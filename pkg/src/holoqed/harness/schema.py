"""Run-manifest schema and cross-field checks."""
import json
import math
from pathlib import Path

import jsonschema

from ..device import DeviceParams
from ..errors import ManifestError
from ..vqe import BUFFER_GAP

EXPERIMENTS = (
    "synthesize_grape",
    "synthesize_snap",
    "compare_control",
    "vqe_ideal",
    "vqe_noisy",
    "dmrg_reference",
    "correlations",
    "sample",
)

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_num_or_list = {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]}
_int_or_list = {"oneOf": [_posint, {"type": "array", "items": _posint, "minItems": 1}]}

PARAMS_SCHEMA = {
    "type": "object",
    "properties": {
        "chi": _num, "chi_prime": _num, "kerr": _num, "omega_max": _pos, "dt": _pos,
        "t1_cavity": _pos, "t1_qubit": _pos, "t2_qubit": _pos,
        "cutoff": {"type": "integer", "minimum": 2},
    },
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {"j_coupling": _num, "h_field": _num, "v_perturbation": _num},
    "additionalProperties": False,
}

NOISE_SCHEMA = {
    "type": "object",
    "properties": {
        "t1_cavity_us": _pos, "t1_qubit_us": _pos, "t2_qubit_us": _pos, "scale": _pos,
        "method": {"enum": ["exact_exponential", "first_order"]},
    },
    "additionalProperties": False,
}

PROBLEM_SCHEMA = {
    "type": "object",
    "properties": {
        "target": {"enum": ["sdim", "haar"]},
        "target_file": {"type": "string"},
        "waveform_file": {"type": "string"},
        "tensor_file": {"type": "string"},
        "bond_dim": _posint,
        "target_cutoff": _posint,
        "tau_ns": _num_or_list,
        "n_ts": _posint,
        "max_iters": {"type": "integer", "minimum": 0},
        "lr": _pos,
        "tol_infidelity": _pos,
        "restarts": _posint,
        "depth": _posint,
        "depths": {"type": "array", "items": _posint, "minItems": 1},
        "batch": _posint,
        "snap_cutoff": _posint,
        "threshold": _pos,
        "bond_levels": _int_or_list,
        "cutoffs": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "penalty_weight": _pos,
        "warm_start": {"type": "boolean"},
        "reference_energy": _num,
        "reference_chain_length": {"type": "integer", "minimum": 4},
        "reference_bond_dim": {"type": "integer", "minimum": 2},
        "scales": {"type": "array", "items": _pos, "minItems": 1},
        "ideal_batch": _posint,
        "ideal_iters": {"type": "integer", "minimum": 0},
        "noisy_iters": {"type": "integer", "minimum": 0},
        "chain_length": {"type": "integer", "minimum": 4},
        "sweep_tol": _pos,
        "max_sweeps": _posint,
        "max_r": _posint,
        "pairs": {"type": "array", "items": {"type": "string", "pattern": "^[xyz]{2}$"}, "minItems": 1},
        "source": {"enum": ["waveform", "tensor", "uniform", "dmrg"]},
        "shots": _posint,
        "sites": {"type": "integer", "minimum": 2},
        "bases": {"type": "string", "pattern": "^[xyzXYZ]+$"},
    },
    "additionalProperties": False,
}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "params": PARAMS_SCHEMA,
        "model": MODEL_SCHEMA,
        "noise": NOISE_SCHEMA,
        "problem": PROBLEM_SCHEMA,
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}

_FILE_KEYS = ("target_file", "waveform_file", "tensor_file")


def load_manifest(path):
    """Parse JSON; raises ManifestError on unreadable or malformed input."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc


def schema_errors(manifest):
    v = jsonschema.Draft202012Validator(MANIFEST_SCHEMA)
    out = []
    for err in sorted(v.iter_errors(manifest), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in err.path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def _durations(problem):
    tau = problem.get("tau_ns")
    if tau is None:
        return []
    return list(tau) if isinstance(tau, list) else [tau]


def cross_field_violations(manifest, base_dir=None):
    """Consistency checks that a JSON schema cannot express."""
    out = []
    exp = manifest.get("experiment")
    problem = manifest.get("problem", {})
    try:
        params = DeviceParams.from_dict(manifest.get("params", {}))
    except (TypeError, ValueError) as exc:
        return [f"params: {exc}"]
    cutoffs = problem.get("cutoffs") or [params.cutoff]

    if exp in ("vqe_ideal", "vqe_noisy"):
        levels = problem.get("bond_levels")
        for c in cutoffs:
            if levels is None:
                if c - BUFFER_GAP < 1:
                    out.append(f"bond_levels: default Λ′ = Λ − {BUFFER_GAP} = {c - BUFFER_GAP} at Λ = {c}; "
                               "Λ′ would be negative (or zero); set problem.bond_levels explicitly")
            else:
                for lv in (levels if isinstance(levels, list) else [levels]):
                    if lv > c:
                        out.append(f"bond_levels: Λ′ = {lv} exceeds the cutoff Λ = {c}")

    taus = _durations(problem)
    n_ts = problem.get("n_ts")
    for tau in taus:
        steps = tau / params.dt
        if not math.isclose(steps, round(steps), rel_tol=0, abs_tol=1e-9):
            out.append(f"tau_ns: {tau} ns is not a whole number of {params.dt} ns steps")
        elif n_ts is not None and len(taus) == 1 and round(steps) != n_ts:
            out.append(f"n_ts: N_ts·Δt = {n_ts}·{params.dt} = {n_ts * params.dt} ns differs from declared τ = {tau} ns")

    if exp in ("synthesize_grape", "compare_control"):
        d = problem.get("bond_dim", 2)
        mc = problem.get("target_cutoff", 2 * d)
        if "target_file" not in problem:
            if mc < d:
                out.append(f"target_cutoff: m_c = {mc} is below the bond dimension {d}")
            if mc > params.cutoff:
                out.append(f"target_cutoff: m_c = {mc} exceeds the simulation cutoff Λ = {params.cutoff}")
    if exp == "vqe_noisy" and manifest.get("noise", {}).get("method", "exact_exponential") != "exact_exponential":
        out.append("noise.method: noisy VQE needs gradients, available only for exact_exponential")
    if exp in ("correlations", "sample"):
        src = problem.get("source", "uniform")
        need = {"waveform": "waveform_file", "tensor": "tensor_file"}.get(src)
        if need and need not in problem:
            out.append(f"problem.{need}: required when source is '{src}'")
    if exp == "sample" and "bases" in problem and "sites" in problem and len(problem["bases"]) != problem["sites"]:
        out.append("bases: length differs from sites")

    for key in _FILE_KEYS:
        if key in problem:
            p = Path(problem[key])
            if not p.is_absolute() and base_dir is not None:
                p = Path(base_dir) / p
            if not p.exists():
                out.append(f"problem.{key}: file not found: {problem[key]}")
    return out


def validate(manifest, base_dir=None):
    """Report dict {"schema": [...], "cross_field": [...], "valid": bool}."""
    errs = schema_errors(manifest)
    cross = [] if errs else cross_field_violations(manifest, base_dir)
    return {"schema": errs, "cross_field": cross, "valid": not errs and not cross}
