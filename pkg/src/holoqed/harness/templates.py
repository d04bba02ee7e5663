"""The five ready-made experiment manifests emitted by ``holoqed templates``."""

_SDIM = {"j_coupling": 1.0, "h_field": 1.0, "v_perturbation": 0.5}

TEMPLATES = {
    "grape_infidelity_vs_tau": {
        "description": "GRAPE infidelity versus waveform duration for the D=2 SDIM isometry",
        "experiment": "synthesize_grape",
        "seed": 0,
        "output_dir": "runs/grape_infidelity_vs_tau",
        "params": {"cutoff": 8},
        "model": _SDIM,
        "problem": {"target": "sdim", "bond_dim": 2, "target_cutoff": 4, "tau_ns": [500, 1000, 2000],
                    "max_iters": 3000, "restarts": 1},
    },
    "vqe_error_vs_tau": {
        "description": "Ideal VQE energy error versus duration for several usable bond levels",
        "experiment": "vqe_ideal",
        "seed": 0,
        "output_dir": "runs/vqe_error_vs_tau",
        "params": {"cutoff": 10},
        "model": _SDIM,
        "problem": {"bond_levels": [2, 4], "tau_ns": [1000, 2000], "batch": 4, "max_iters": 300},
    },
    "vqe_energy_vs_cutoff": {
        "description": "Ideal VQE energy versus simulation cutoff at fixed duration",
        "experiment": "vqe_ideal",
        "seed": 0,
        "output_dir": "runs/vqe_energy_vs_cutoff",
        "params": {"cutoff": 10},
        "model": _SDIM,
        "problem": {"cutoffs": [6, 8, 10], "bond_levels": 2, "tau_ns": 2000, "batch": 4, "max_iters": 300},
    },
    "stationary_correlations": {
        "description": "Stationary two-point functions of the D=4 variational tensor",
        "experiment": "correlations",
        "seed": 0,
        "output_dir": "runs/stationary_correlations",
        "model": _SDIM,
        "problem": {"source": "uniform", "bond_dim": 4, "max_r": 10, "pairs": ["zz", "xx"]},
    },
    "noisy_tradeoff": {
        "description": "Noisy VQE energy error versus duration for three coherence multipliers",
        "experiment": "vqe_noisy",
        "seed": 0,
        "output_dir": "runs/noisy_tradeoff",
        "params": {"cutoff": 8},
        "model": _SDIM,
        "noise": {"t1_cavity_us": 2700.0, "t1_qubit_us": 170.0, "t2_qubit_us": 43.0, "scale": 1.0},
        "problem": {"tau_ns": [1000, 2000, 4000, 8000], "scales": [1, 2, 3], "ideal_batch": 2,
                    "ideal_iters": 300, "noisy_iters": 60},
    },
}
