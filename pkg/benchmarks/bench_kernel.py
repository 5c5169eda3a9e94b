"""Time the compiled event loop against the pure-Python one.

Usage::

    python benchmarks/bench_kernel.py [--patients 2000] [--repeat 5]

Both kernels receive the same image stream (one with-device world of the
default scenario at several traffic levels) and must return identical
departures; the script prints the best-of-``repeat`` time of each and the
speed-up.
"""

import argparse
import timeit

import numpy as np

from triageq.scenario import ClinicalScenario
from triageq.simulator import _pykernel, generate_images, replication_rng

try:
    from triageq.simulator import _ckernel
except ImportError:  # pragma: no cover
    _ckernel = None


def stream(s, n, seed=1):
    arrival, emergent, _, ai_pos, reading = generate_images(s, n, replication_rng(seed, 0))
    prio = np.where(emergent, 0, np.where(ai_pos, 1, 2)).astype(np.int64)
    return arrival, prio, reading, s.num_radiologists, 3


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--patients", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _ckernel is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'scenario':<22}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for rho, n_rad in ((0.3, 1), (0.8, 1), (0.8, 2)):
        s = ClinicalScenario(traffic=rho, fraction_emergent=0.3, num_radiologists=n_rad)
        args_k = stream(s, args.patients)
        py = _pykernel.simulate_world(*args_k)
        cy = _ckernel.simulate_world(*args_k)
        assert np.array_equal(py[0], cy[0]), "kernels disagree"
        t_py = min(timeit.repeat(lambda: _pykernel.simulate_world(*args_k), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: _ckernel.simulate_world(*args_k), number=1, repeat=args.repeat))
        label = f"rho={rho} radiologists={n_rad}"
        print(f"{label:<22}{t_py * 1e3:>12.2f}{t_cy * 1e3:>12.3f}{t_py / t_cy:>10.1f}")


if __name__ == "__main__":
    main()
