"""Compare the compiled and numpy kernel backends.

Times each hot kernel and a full filter step for every representation.

    python benchmarks/bench_kernels.py [--sizes 100 1000 10000] [--repeat 5]
"""

import argparse
import math
import timeit

import numpy as np

from lgfpf import kernels
from lgfpf.filter import FilterModel, GainConfig, ParticleEnsemble, Representation, step
from lgfpf.lie import GroupTag, quat_to_rotation_batch, random_quaternions
from lgfpf.rng import NoiseStream


def kernel_cases(k, n, rng):
    theta = rng.uniform(0, 2 * math.pi, n)
    q = random_quaternions(rng, n)
    r = quat_to_rotation_batch(q)
    h = rng.standard_normal(n)
    di = rng.standard_normal(n) * 1e-2
    base1 = rng.standard_normal(n) * 1e-2
    base3 = rng.standard_normal((n, 3)) * 1e-2
    k2, k4 = rng.standard_normal(2), rng.standard_normal(4)
    return {
        "assemble_phase": lambda: k.assemble_phase(theta, h),
        "assemble_matrix": lambda: k.assemble_matrix(r, h),
        "assemble_quat": lambda: k.assemble_quat(q, h),
        "assemble_fourier(3)": lambda: k.assemble_fourier(theta, h, 3),
        "heun_phase": lambda: k.heun_phase(theta, base1, di, k2),
        "heun_matrix": lambda: k.heun_matrix(r, base3, di, k4),
        "heun_quat": lambda: k.heun_quat(q, base3, di, k4),
        "advance_quat": lambda: k.advance_quat(q, base3),
    }


def step_cases(k, n, rng):
    q = random_quaternions(rng, n)
    so2 = FilterModel(GroupTag.SO2, 0.5, 0.3, np.sin)
    so3 = FilterModel(GroupTag.SO3, [0.5, -0.3, 0.2], [0.3, 0.3, 0.3], lambda x: x[:, 0, 0])
    cfg = GainConfig(backend=k)
    ensembles = {
        "step phase": (so2, ParticleEnsemble(Representation.PHASE, rng.uniform(0, 2 * math.pi, n), NoiseStream(0, "b"))),
        "step matrix": (so3, ParticleEnsemble(Representation.MATRIX, quat_to_rotation_batch(q), NoiseStream(0, "b"))),
        "step quaternion": (so3, ParticleEnsemble(Representation.QUATERNION, q, NoiseStream(0, "b"))),
    }
    return {name: (lambda m=m, e=e: step(e, m, 1e-3, 1e-3, cfg)) for name, (m, e) in ensembles.items()}


def best_time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 10000])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    names = kernels.available()
    if "cython" not in names:
        print("compiled extension not built; timing the numpy backend only")
    backends = {name: kernels.load(name) for name in names}
    header = f"{'case':<22}{'N':>7}" + "".join(f"{name + ' us':>14}" for name in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for n in args.sizes:
        rows = {}
        for name, k in backends.items():
            rng = np.random.default_rng(0)
            cases = {**kernel_cases(k, n, rng), **step_cases(k, n, rng)}
            for case, fn in cases.items():
                rows.setdefault(case, []).append(best_time(fn, args.repeat) * 1e6)
        for case, times in rows.items():
            line = f"{case:<22}{n:>7}" + "".join(f"{t:>14.1f}" for t in times)
            if len(times) == 2:
                line += f"{times[1] / times[0]:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
