"""Time the numba kernels against their numpy twins on representative sizes.

    python benchmarks/bench_kernels.py [--repeat 5]

Each line reports the median wall time per call of both versions, the
speed-up, and the max abs difference of their outputs.  The first numba call
(compilation) is excluded.
"""
import argparse
import time

import numpy as np

from holoqed import _kernels as K
from holoqed.device import DeviceParams
from holoqed.grape import random_waveform
from holoqed.noise import Dissipation, NoiseSpec, _basis_inputs
from holoqed.propagator import ControlSystem
from holoqed.qmps import SiteChannel, kraus_from_unitary


def _median_time(fn, args, repeat):
    fn(*args)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        ts.append(time.perf_counter() - t)
    return float(np.median(ts))


def _maxdiff(a, b):
    if isinstance(a, tuple):
        return max(_maxdiff(x, y) for x, y in zip(a, b))
    return float(np.abs(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)).max())


def cases(cutoff=10, n_ts=200, seed=0):
    p = DeviceParams(cutoff=cutoff)
    rng = np.random.default_rng(seed)
    sys_ = ControlSystem.from_params(p)
    amps = random_waveform(n_ts, p, rng, 0.5).amps
    w, v = K.step_eigensystems_np(sys_.h0, sys_.ctrl, amps)
    e = K.unitaries_from_eig_np(w, v, p.dt)
    u = K.chain_product_np(e)
    gamma = np.ascontiguousarray(rng.normal(size=u.shape) + 1j * rng.normal(size=u.shape))
    _, x = K.unitary_adjoint_np(e, gamma)
    ch = SiteChannel.from_kraus(kraus_from_unitary(u), ("I",))
    s = ch.ops["I"]
    uni = rng.random((2000, 16))
    rot = np.stack([np.eye(2, dtype=complex)] * 16)
    b = kraus_from_unitary(u)
    small = DeviceParams(cutoff=6)
    ssys = ControlSystem.from_params(small)
    _, _, es = ssys.step_data(random_waveform(100, small, rng, 0.5).amps)
    diss = Dissipation(6, NoiseSpec(), small.dt)
    rho0 = _basis_inputs(6)
    traj = K.noisy_forward_np(es, *diss.kernel_args(), rho0)
    wfin = np.ascontiguousarray(rng.normal(size=traj[-1].shape) + 0j)
    return [
        ("step_eigensystems", K.step_eigensystems_np, K.step_eigensystems_nb, (sys_.h0, sys_.ctrl, amps)),
        ("unitaries_from_eig", K.unitaries_from_eig_np, K.unitaries_from_eig_nb, (w, v, p.dt)),
        ("chain_product", K.chain_product_np, K.chain_product_nb, (e,)),
        ("unitary_adjoint", K.unitary_adjoint_np, K.unitary_adjoint_nb, (e, gamma)),
        ("expm_derivative_traces", K.expm_derivative_traces_np, K.expm_derivative_traces_nb,
         (w, v, p.dt, x, sys_.ctrl)),
        ("fixed_point", K.fixed_point_np, K.fixed_point_nb, (s, ch.vacuum(), 1e-10, 400)),
        ("sample_trajectories", K.sample_trajectories_np, K.sample_trajectories_nb, (b, rot, uni)),
        ("noisy_forward", K.noisy_forward_np, K.noisy_forward_nb, (es, *diss.kernel_args(), rho0)),
        ("noisy_backward", K.noisy_backward_np, K.noisy_backward_nb, (es, *diss.kernel_args(), traj, wfin)),
    ]


def run(repeat=5, cutoff=10, n_ts=200):
    rows = []
    for name, f_np, f_nb, args in cases(cutoff, n_ts):
        t_np = _median_time(f_np, args, repeat)
        t_nb = _median_time(f_nb, args, repeat)
        rows.append((name, t_np, t_nb, t_np / t_nb, _maxdiff(f_np(*args), f_nb(*args))))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cutoff", type=int, default=10)
    ap.add_argument("--n-ts", type=int, default=200)
    a = ap.parse_args()
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max |diff|':>12}")
    for name, t_np, t_nb, sp, diff in run(a.repeat, a.cutoff, a.n_ts):
        print(f"{name:<24}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{sp:>10.2f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
