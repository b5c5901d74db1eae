"""Pure numpy implementations of the geometry hot loops.

These define the semantics; ``_kernels.pyx`` must return identical results.
Grid arguments describe a uniform cell hash built by
:func:`pepperharvest.geometry.index.build_grid`: points are bucketed by
``floor((p - origin) / cell)``, ``order`` lists point indices sorted by cell
key and ``starts`` delimits each occupied cell (``keys`` ascending).
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"

_OFFSETS_1 = np.array(
    [(dx, dy, dz) for dz in (-1, 0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)],
    dtype=np.int64,
)


def _cell_coords(q, origin, cell):
    return np.floor((q - origin) / cell).astype(np.int64)


def _gather(cells, dims, order, keys, starts):
    """Point indices inside the given (m, 3) cell coordinates."""
    ok = np.all((cells >= 0) & (cells < dims), axis=1)
    cells = cells[ok]
    if len(cells) == 0:
        return np.empty(0, dtype=np.int64)
    ck = cells[:, 0] + dims[0] * (cells[:, 1] + dims[1] * cells[:, 2])
    pos = np.searchsorted(keys, ck)
    inside = pos < len(keys)
    pos, ck = pos[inside], ck[inside]
    pos = pos[keys[pos] == ck]
    if len(pos) == 0:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([order[starts[p] : starts[p + 1]] for p in pos])


def _shell_offsets(ring):
    if ring == 0:
        return np.zeros((1, 3), dtype=np.int64)
    r = np.arange(-ring, ring + 1)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    g = g[np.abs(g).max(axis=1) == ring]
    return g[:, ::-1].copy()


def _block_offsets(ring):
    if ring == 1:
        return _OFFSETS_1
    r = np.arange(-ring, ring + 1)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    return g[:, ::-1].copy()


def _sqdist(points, idx, q):
    d = points[idx] - q
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def radius_neighbors(points, origin, cell, dims, order, keys, starts, queries, r):
    """CSR neighbour lists: ``indices[offsets[i]:offsets[i+1]]`` ascending."""
    r2 = r * r
    ring = max(1, int(np.ceil(r / cell)))
    block = _block_offsets(ring)
    qc = _cell_coords(queries, origin, cell)
    parts = []
    offsets = np.zeros(len(queries) + 1, dtype=np.int64)
    for i in range(len(queries)):
        cand = _gather(qc[i] + block, dims, order, keys, starts)
        if len(cand):
            cand = np.sort(cand[_sqdist(points, cand, queries[i]) <= r2])
        parts.append(cand)
        offsets[i + 1] = offsets[i] + len(cand)
    indices = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return offsets, indices.astype(np.int64)


def knn(points, origin, cell, dims, order, keys, starts, queries, k, exclude):
    """k nearest neighbours ordered by (distance, index); -1/inf padding."""
    nq = len(queries)
    out_idx = np.full((nq, k), -1, dtype=np.int64)
    out_d = np.full((nq, k), np.inf)
    qc = _cell_coords(queries, origin, cell)
    for i in range(nq):
        c = qc[i]
        max_ring = int(max(np.max(np.abs(c)), np.max(np.abs(dims - 1 - c))))
        cand_i = []
        cand_d = []
        ring = 0
        while True:
            idx = _gather(c + _shell_offsets(ring), dims, order, keys, starts)
            if exclude[i] >= 0:
                idx = idx[idx != exclude[i]]
            if len(idx):
                cand_i.append(idx)
                cand_d.append(_sqdist(points, idx, queries[i]))
            n = sum(len(a) for a in cand_i)
            if n >= k:
                ai = np.concatenate(cand_i)
                ad = np.concatenate(cand_d)
                o = np.lexsort((ai, ad))
                bound = ring * cell * (1.0 - 1e-9)
                if ad[o[k - 1]] < bound * bound or ring >= max_ring:
                    out_idx[i] = ai[o[:k]]
                    out_d[i] = np.sqrt(ad[o[:k]])
                    break
            if ring >= max_ring:
                if n:
                    ai = np.concatenate(cand_i)
                    ad = np.concatenate(cand_d)
                    o = np.lexsort((ai, ad))
                    out_idx[i, :n] = ai[o]
                    out_d[i, :n] = np.sqrt(ad[o])
                break
            ring += 1
    return out_idx, out_d


def euclidean_components(points, origin, cell, dims, order, keys, starts, tol):
    """Flood-fill component labels; labels numbered by lowest member index."""
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    current = 0
    for seed in range(n):
        if labels[seed] >= 0:
            continue
        labels[seed] = current
        frontier = np.array([seed], dtype=np.int64)
        while len(frontier):
            _, nb = radius_neighbors(points, origin, cell, dims, order, keys, starts, points[frontier], tol)
            nb = np.unique(nb)
            nb = nb[labels[nb] < 0]
            labels[nb] = current
            frontier = nb
        current += 1
    return labels


def zbuffer(u, v, z, rad, depth, index):
    """Splat points as camera-facing discs; nearest depth wins, ties keep lowest index.

    ``depth`` and ``index`` are updated in place.
    """
    h, w = depth.shape
    ui = np.floor(u + 0.5).astype(np.int64)
    vi = np.floor(v + 0.5).astype(np.int64)
    for i in range(len(z)):
        r = int(rad[i])
        zi = z[i]
        for dv in range(-r, r + 1):
            row = vi[i] + dv
            if row < 0 or row >= h:
                continue
            for du in range(-r, r + 1):
                if du * du + dv * dv > r * r + r:
                    continue
                col = ui[i] + du
                if col < 0 or col >= w:
                    continue
                if zi < depth[row, col]:
                    depth[row, col] = zi
                    index[row, col] = i
    return depth, index


def _tangent_basis(n):
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a[0] * n[0] + a[1] * n[1] + a[2] * n[2]) * n
    e1 = e1 / np.sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2])
    e2 = np.array(
        [n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2], n[0] * e1[1] - n[1] * e1[0]]
    )
    return e1, e2


def angle_gaps(points, centers, normals, offsets, indices):
    """Largest angular gap between tangent-plane neighbour directions.

    ``centers[i]`` is the point whose neighbours are ``indices[offsets[i]:offsets[i+1]]``
    (the centre itself is skipped). Fewer than two usable directions gives 2*pi.
    """
    m = len(centers)
    out = np.empty(m)
    two_pi = 2.0 * np.pi
    for i in range(m):
        p = points[centers[i]]
        e1, e2 = _tangent_basis(normals[i])
        nb = indices[offsets[i] : offsets[i + 1]]
        nb = nb[nb != centers[i]]
        d = points[nb] - p
        x = d[:, 0] * e1[0] + d[:, 1] * e1[1] + d[:, 2] * e1[2]
        y = d[:, 0] * e2[0] + d[:, 1] * e2[1] + d[:, 2] * e2[2]
        keep = (x * x + y * y) > 0.0
        if np.count_nonzero(keep) < 2:
            out[i] = two_pi
            continue
        ang = np.sort(np.arctan2(y[keep], x[keep]))
        gaps = np.diff(ang)
        wrap = ang[0] + two_pi - ang[-1]
        out[i] = max(float(gaps.max()) if len(gaps) else 0.0, wrap)
    return out


def _segment_sum(values, offsets):
    counts = np.diff(offsets)
    out = np.zeros((len(counts),) + values.shape[1:])
    nz = counts > 0
    if np.any(nz):
        out[nz] = np.add.reduceat(values, offsets[:-1][nz], axis=0)
    return out


def patch_covariances(points, offsets, indices):
    """Covariance of each CSR neighbourhood, taken relative to its query point.

    Row ``i`` holds the neighbours of ``points[i]``; empty rows give zeros.
    """
    counts = np.diff(offsets)
    owner = np.repeat(np.arange(len(counts)), counts)
    d = points[indices] - points[owner]
    s1 = _segment_sum(d, offsets)
    s2 = _segment_sum(d[:, :, None] * d[:, None, :], offsets)
    safe = np.maximum(counts, 1)[:, None]
    mean = s1 / safe
    return s2 / safe[:, :, None] - mean[:, :, None] * mean[:, None, :]
