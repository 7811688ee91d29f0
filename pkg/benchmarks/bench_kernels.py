"""Compare the numba and numpy kernel backends.

Times a full bridge fit (100 Adam epochs on a precomputed moment problem) and
the raw forward/backward passes, and reports the largest disagreement between
the two backends' fitted parameters.

    python3 benchmarks/bench_kernels.py --sizes 500,1000,5000 --repeat 20
"""
import argparse
import time

import numpy as np

from bridge_rdd import _accel, _kernels
from bridge_rdd.minimax import fit_problem, outcome_problem, treatment_problem
from bridge_rdd.netfn import init_model
from bridge_rdd.simstudy import get_setting

BACKENDS = ("numpy", "numba")


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up (triggers compilation on first numba call)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench(setting: str, n: int, repeat: int) -> list[dict]:
    s = get_setting(setting)
    cfg = s.config()
    main, aux = s.generate(n, n, 0)
    problems = {"h": outcome_problem(main, aux, cfg), "f": treatment_problem(aux, cfg)}
    rows = []
    for name, prob in problems.items():
        fits = {b: fit_problem(prob, "two_layer_relu", cfg, 1, backend=b) for b in BACKENDS}
        gap = float(np.abs(fits["numba"].model.theta - fits["numpy"].model.theta).max())
        model = init_model("two_layer_relu", cfg.hidden_size, 1)
        cot = np.ones(prob.a.size)
        row = {"setting": setting, "n": n, "bridge": name, "support": prob.a.size, "max_param_gap": gap}
        for b in BACKENDS:
            row[f"fit_{b}_ms"] = 1e3 * best_of(lambda: fit_problem(prob, "two_layer_relu", cfg, 1, backend=b),
                                               repeat)
            row[f"fwdbwd_{b}_us"] = 1e6 * best_of(lambda: (
                _kernels.forward(model.code, model.theta, model.hidden_size, prob.a, prob.w, b),
                _kernels.backward(model.code, model.theta, model.hidden_size, prob.a, prob.w, cot, b)), repeat)
        row["fit_speedup"] = row["fit_numpy_ms"] / row["fit_numba_ms"]
        rows.append(row)
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--sizes", default="500,1000,5000")
    p.add_argument("--settings", default="setting1,setting2")
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    cols = ["setting", "n", "bridge", "support", "fit_numpy_ms", "fit_numba_ms", "fit_speedup",
            "fwdbwd_numpy_us", "fwdbwd_numba_us", "max_param_gap"]
    print(" ".join(f"{c:>15}" for c in cols))
    for setting in args.settings.split(","):
        for n in (int(v) for v in args.sizes.split(",")):
            for row in bench(setting, n, args.repeat):
                print(" ".join(f"{row[c]:>15.4g}" if isinstance(row[c], float) else f"{row[c]:>15}"
                               for c in cols))


if __name__ == "__main__":
    main()
