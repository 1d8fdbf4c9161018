"""Benchmark the compiled stepping kernel against the numpy fallback.

The backend is fixed at import time, so each measurement runs in a child
process with KIMURA_LAB_KERNEL set. Besides wall times, the script checks
that both backends produce bitwise-identical terminal states.

Usage: python benchmarks/bench_backends.py [--quick]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys

CASES = {
    "const-wf-1d 20k paths x 1k steps": {
        "model": "const-wf-1d",
        "n_paths": 20_000,
        "dt": 1e-3,
        "T": 1.0,
    },
    "const-wf-1d 2k paths x 10k steps": {
        "model": "const-wf-1d",
        "n_paths": 2_000,
        "dt": 1e-4,
        "T": 1.0,
    },
    "wf-with-free-coord 20k paths x 1k steps": {
        "model": "wf-with-free-coord",
        "n_paths": 20_000,
        "dt": 1e-3,
        "T": 1.0,
    },
    "log-drift singular 10k paths x 1k steps": {
        "model": "log-drift",
        "n_paths": 10_000,
        "dt": 1e-3,
        "T": 1.0,
        "singular": True,
    },
}


def run_case(spec: dict) -> dict:
    import time

    import numpy as np

    from kimura_lab import _kernels, catalog, engine

    model, z0 = catalog.build(spec["model"], {})
    cfg = engine.SimConfig(
        horizon_T=spec["T"],
        dt=spec["dt"],
        n_paths=spec["n_paths"],
        master_seed=2024,
        record_stride=int(round(spec["T"] / spec["dt"])),
    )
    sim = engine.simulate_singular if spec.get("singular") else engine.simulate_standard
    sim(model, cfg, z0)  # warm-up (coefficient callables, allocator)
    t0 = time.perf_counter()
    bundle = sim(model, cfg, z0)
    elapsed = time.perf_counter() - t0
    digest = hashlib.sha256(np.ascontiguousarray(bundle.states).tobytes()).hexdigest()
    return {"backend": _kernels.backend(), "seconds": elapsed, "digest": digest}


def child_main() -> None:
    spec = json.loads(os.environ["BENCH_CASE"])
    print(json.dumps(run_case(spec)))


def parent_main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="first case only")
    args = parser.parse_args()
    names = list(CASES)[:1] if args.quick else list(CASES)
    rows = []
    for name in names:
        results = {}
        for backend in ("c", "python"):
            env = dict(os.environ, KIMURA_LAB_KERNEL=backend, BENCH_CHILD="1",
                       BENCH_CASE=json.dumps(CASES[name]))
            out = subprocess.run(
                [sys.executable, os.path.abspath(__file__)],
                env=env, capture_output=True, text=True,
            )
            if out.returncode != 0:
                print(f"{name} [{backend}] failed:\n{out.stderr}", file=sys.stderr)
                return 1
            results[backend] = json.loads(out.stdout.strip().splitlines()[-1])
        same = results["c"]["digest"] == results["python"]["digest"]
        speedup = results["python"]["seconds"] / results["c"]["seconds"]
        rows.append((name, results["c"]["seconds"], results["python"]["seconds"], speedup, same))
    print(f"{'case':<44} {'c [s]':>8} {'python [s]':>11} {'speedup':>8}  identical")
    for name, tc, tp, speedup, same in rows:
        print(f"{name:<44} {tc:>8.3f} {tp:>11.3f} {speedup:>7.2f}x  {same}")
    if not all(r[4] for r in rows):
        print("ERROR: backends disagree", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    if os.environ.get("BENCH_CHILD") == "1":
        child_main()
    else:
        sys.exit(parent_main())
