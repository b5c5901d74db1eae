"""Compare the compiled and numpy geometry kernels on simulator-sized workloads.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each kernel runs on the same inputs under every available backend; results
are cross-checked against the numpy backend before timings are reported.
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from pepperharvest.geometry import kernels
from pepperharvest.geometry.index import _RADIUS_CELL_PAD, build_grid
from pepperharvest.sim.scene import PEPPER, SceneSpec, generate_scene


def workloads(seed: int = 0):
    scene = generate_scene(SceneSpec(row_length=1.0, pepper_count=2, rng_seed=seed))
    pepper = np.ascontiguousarray(scene.points[scene.labels == PEPPER][::2])
    rng = np.random.default_rng(seed)
    grid = build_grid(pepper, 0.02 * _RADIUS_CELL_PAD)
    knn_grid = build_grid(pepper, 0.01)
    comp_grid = build_grid(pepper, 0.01 * _RADIUS_CELL_PAD)
    offsets, nbr = kernels.radius_neighbors(pepper, *grid.args(), pepper, 0.02)
    normals = rng.normal(size=pepper.shape)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    centers = np.arange(len(pepper), dtype=np.int64)
    n_splat = 60_000
    u = rng.uniform(0, 640, n_splat)
    v = rng.uniform(0, 480, n_splat)
    z = rng.uniform(0.3, 1.5, n_splat)
    rad = rng.integers(0, 4, n_splat).astype(np.int64)

    def zbuf(impl):
        depth = np.full((480, 640), np.inf)
        index = np.full((480, 640), -1, dtype=np.int64)
        impl.zbuffer(u, v, z, rad, depth, index)
        return depth, index

    exclude = np.arange(len(pepper), dtype=np.int64)
    return len(pepper), {
        "radius_neighbors": lambda m: m.radius_neighbors(pepper, *grid.args(), pepper, 0.02),
        "knn": lambda m: m.knn(pepper, *knn_grid.args(), pepper, 16, exclude),
        "euclidean_components": lambda m: m.euclidean_components(pepper, *comp_grid.args(), 0.01),
        "patch_covariances": lambda m: m.patch_covariances(pepper, offsets, nbr),
        "angle_gaps": lambda m: m.angle_gaps(pepper, centers, normals, offsets, nbr),
        "zbuffer": zbuf,
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":
        return a.shape == b.shape and np.allclose(a, b, rtol=1e-9, atol=1e-15, equal_nan=True)
    return np.array_equal(a, b)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    n, jobs = workloads()
    print(f"backends: {', '.join(backends)}; pepper cloud of {n} points")
    rows = []
    for name, job in jobs.items():
        ref = job(backends["python"])
        row = {"kernel": name}
        for bname, impl in backends.items():
            if not _same(job(impl), ref):
                raise SystemExit(f"{name}: {bname} disagrees with the numpy backend")
            row[bname] = min(timeit.repeat(lambda: job(impl), number=1, repeat=args.repeat))
        rows.append(row)

    names = list(backends)
    print(f"{'kernel':<22}" + "".join(f"{b + ' (s)':>14}" for b in names) + ("     speedup" if len(names) > 1 else ""))
    for row in rows:
        line = f"{row['kernel']:<22}" + "".join(f"{row[b]:>14.4f}" for b in names)
        if "cython" in row:
            line += f"{row['python'] / row['cython']:>11.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
