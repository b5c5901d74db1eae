# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled geometry hot loops. Semantics mirror ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, sqrt, atan2, fabs, M_PI
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.algorithm cimport sort

cnp.import_array()

ctypedef cnp.int64_t i64

BACKEND = "cython"


cdef inline i64 _find(const i64[::1] keys, i64 key) noexcept nogil:
    cdef i64 lo = 0
    cdef i64 hi = keys.shape[0]
    cdef i64 mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == key:
        return lo
    return -1


cdef inline double _sqd(const double[:, ::1] pts, i64 j, double x, double y, double z) noexcept nogil:
    cdef double dx = pts[j, 0] - x
    cdef double dy = pts[j, 1] - y
    cdef double dz = pts[j, 2] - z
    return dx * dx + dy * dy + dz * dz


cdef object _to_array(vector[i64]& v):
    cdef Py_ssize_t n = v.size()
    out = np.empty(n, dtype=np.int64)
    cdef i64[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = v[i]
    return out


def radius_neighbors(const double[:, ::1] points, const double[::1] origin, double cell,
                     const i64[::1] dims, const i64[::1] order, const i64[::1] keys,
                     const i64[::1] starts, const double[:, ::1] queries, double r):
    cdef Py_ssize_t nq = queries.shape[0]
    offsets = np.zeros(nq + 1, dtype=np.int64)
    cdef i64[::1] off = offsets
    cdef vector[i64] out
    cdef vector[i64] buf
    cdef double r2 = r * r
    cdef i64 ring = <i64>ceil(r / cell)
    if ring < 1:
        ring = 1
    cdef Py_ssize_t qi
    cdef i64 cx, cy, cz, ix, iy, iz, key, pos, j, p
    cdef double qx, qy, qz
    with nogil:
        for qi in range(nq):
            qx = queries[qi, 0]
            qy = queries[qi, 1]
            qz = queries[qi, 2]
            cx = <i64>floor((qx - origin[0]) / cell)
            cy = <i64>floor((qy - origin[1]) / cell)
            cz = <i64>floor((qz - origin[2]) / cell)
            buf.clear()
            for iz in range(cz - ring, cz + ring + 1):
                if iz < 0 or iz >= dims[2]:
                    continue
                for iy in range(cy - ring, cy + ring + 1):
                    if iy < 0 or iy >= dims[1]:
                        continue
                    for ix in range(cx - ring, cx + ring + 1):
                        if ix < 0 or ix >= dims[0]:
                            continue
                        key = ix + dims[0] * (iy + dims[1] * iz)
                        pos = _find(keys, key)
                        if pos < 0:
                            continue
                        for j in range(starts[pos], starts[pos + 1]):
                            p = order[j]
                            if _sqd(points, p, qx, qy, qz) <= r2:
                                buf.push_back(p)
            sort(buf.begin(), buf.end())
            for j in range(<i64>buf.size()):
                out.push_back(buf[j])
            off[qi + 1] = out.size()
    return offsets, _to_array(out)


def knn(const double[:, ::1] points, const double[::1] origin, double cell,
        const i64[::1] dims, const i64[::1] order, const i64[::1] keys,
        const i64[::1] starts, const double[:, ::1] queries, Py_ssize_t k,
        const i64[::1] exclude):
    cdef Py_ssize_t nq = queries.shape[0]
    out_idx = np.full((nq, k), -1, dtype=np.int64)
    out_d = np.full((nq, k), np.inf)
    cdef i64[:, ::1] oi = out_idx
    cdef double[:, ::1] od = out_d
    cdef vector[pair[double, i64]] cand
    cdef Py_ssize_t qi, t, n
    cdef i64 cx, cy, cz, ix, iy, iz, key, pos, j, p, ring, max_ring, m
    cdef double qx, qy, qz, bound
    with nogil:
        for qi in range(nq):
            qx = queries[qi, 0]
            qy = queries[qi, 1]
            qz = queries[qi, 2]
            cx = <i64>floor((qx - origin[0]) / cell)
            cy = <i64>floor((qy - origin[1]) / cell)
            cz = <i64>floor((qz - origin[2]) / cell)
            max_ring = 0
            # Chebyshev distance from the query cell to the farthest grid corner
            m = cx if cx > 0 else -cx
            if m > max_ring: max_ring = m
            m = dims[0] - 1 - cx
            if m < 0: m = -m
            if m > max_ring: max_ring = m
            m = cy if cy > 0 else -cy
            if m > max_ring: max_ring = m
            m = dims[1] - 1 - cy
            if m < 0: m = -m
            if m > max_ring: max_ring = m
            m = cz if cz > 0 else -cz
            if m > max_ring: max_ring = m
            m = dims[2] - 1 - cz
            if m < 0: m = -m
            if m > max_ring: max_ring = m
            cand.clear()
            ring = 0
            while True:
                for iz in range(cz - ring, cz + ring + 1):
                    if iz < 0 or iz >= dims[2]:
                        continue
                    for iy in range(cy - ring, cy + ring + 1):
                        if iy < 0 or iy >= dims[1]:
                            continue
                        for ix in range(cx - ring, cx + ring + 1):
                            if ix < 0 or ix >= dims[0]:
                                continue
                            if (ix - cx != ring and cx - ix != ring and iy - cy != ring
                                    and cy - iy != ring and iz - cz != ring and cz - iz != ring):
                                continue
                            key = ix + dims[0] * (iy + dims[1] * iz)
                            pos = _find(keys, key)
                            if pos < 0:
                                continue
                            for j in range(starts[pos], starts[pos + 1]):
                                p = order[j]
                                if p == exclude[qi]:
                                    continue
                                cand.push_back(pair[double, i64](_sqd(points, p, qx, qy, qz), p))
                n = cand.size()
                if n >= k:
                    sort(cand.begin(), cand.end())
                    bound = ring * cell * (1.0 - 1e-9)
                    if cand[k - 1].first < bound * bound or ring >= max_ring:
                        for t in range(k):
                            oi[qi, t] = cand[t].second
                            od[qi, t] = sqrt(cand[t].first)
                        break
                if ring >= max_ring:
                    sort(cand.begin(), cand.end())
                    for t in range(n):
                        oi[qi, t] = cand[t].second
                        od[qi, t] = sqrt(cand[t].first)
                    break
                ring += 1
    return out_idx, out_d


def euclidean_components(const double[:, ::1] points, const double[::1] origin, double cell,
                         const i64[::1] dims, const i64[::1] order, const i64[::1] keys,
                         const i64[::1] starts, double tol):
    cdef Py_ssize_t n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] lab = labels
    cdef vector[i64] queue
    cdef double r2 = tol * tol
    cdef i64 ring = <i64>ceil(tol / cell)
    if ring < 1:
        ring = 1
    cdef i64 seed, head, q, cx, cy, cz, ix, iy, iz, key, pos, j, p
    cdef i64 current = 0
    cdef double qx, qy, qz
    with nogil:
        for seed in range(n):
            if lab[seed] >= 0:
                continue
            lab[seed] = current
            queue.clear()
            queue.push_back(seed)
            head = 0
            while head < <i64>queue.size():
                q = queue[head]
                head += 1
                qx = points[q, 0]
                qy = points[q, 1]
                qz = points[q, 2]
                cx = <i64>floor((qx - origin[0]) / cell)
                cy = <i64>floor((qy - origin[1]) / cell)
                cz = <i64>floor((qz - origin[2]) / cell)
                for iz in range(cz - ring, cz + ring + 1):
                    if iz < 0 or iz >= dims[2]:
                        continue
                    for iy in range(cy - ring, cy + ring + 1):
                        if iy < 0 or iy >= dims[1]:
                            continue
                        for ix in range(cx - ring, cx + ring + 1):
                            if ix < 0 or ix >= dims[0]:
                                continue
                            key = ix + dims[0] * (iy + dims[1] * iz)
                            pos = _find(keys, key)
                            if pos < 0:
                                continue
                            for j in range(starts[pos], starts[pos + 1]):
                                p = order[j]
                                if lab[p] >= 0:
                                    continue
                                if _sqd(points, p, qx, qy, qz) <= r2:
                                    lab[p] = current
                                    queue.push_back(p)
            current += 1
    return labels


def zbuffer(const double[::1] u, const double[::1] v, const double[::1] z,
            const i64[::1] rad, double[:, ::1] depth, i64[:, ::1] index):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t h = depth.shape[0]
    cdef Py_ssize_t w = depth.shape[1]
    cdef Py_ssize_t i
    cdef i64 ui, vi, r, du, dv, row, col
    cdef double zi
    with nogil:
        for i in range(n):
            ui = <i64>floor(u[i] + 0.5)
            vi = <i64>floor(v[i] + 0.5)
            r = rad[i]
            zi = z[i]
            for dv in range(-r, r + 1):
                row = vi + dv
                if row < 0 or row >= h:
                    continue
                for du in range(-r, r + 1):
                    if du * du + dv * dv > r * r + r:
                        continue
                    col = ui + du
                    if col < 0 or col >= w:
                        continue
                    if zi < depth[row, col]:
                        depth[row, col] = zi
                        index[row, col] = i
    return np.asarray(depth), np.asarray(index)


def angle_gaps(const double[:, ::1] points, const i64[::1] centers, const double[:, ::1] normals,
               const i64[::1] offsets, const i64[::1] indices):
    cdef Py_ssize_t m = centers.shape[0]
    out = np.empty(m)
    cdef double[::1] o = out
    cdef vector[double] ang
    cdef Py_ssize_t i, t
    cdef i64 j, c, q
    cdef double nx, ny, nz, ax, ay, az, dot, e1x, e1y, e1z, e2x, e2y, e2z, nrm
    cdef double dx, dy, dz, x, y, best, g
    cdef double two_pi = 2.0 * M_PI
    with nogil:
        for i in range(m):
            c = centers[i]
            nx = normals[i, 0]
            ny = normals[i, 1]
            nz = normals[i, 2]
            if fabs(nx) < 0.9:
                ax = 1.0
                ay = 0.0
            else:
                ax = 0.0
                ay = 1.0
            az = 0.0
            dot = ax * nx + ay * ny + az * nz
            e1x = ax - dot * nx
            e1y = ay - dot * ny
            e1z = az - dot * nz
            nrm = sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
            e1x = e1x / nrm
            e1y = e1y / nrm
            e1z = e1z / nrm
            e2x = ny * e1z - nz * e1y
            e2y = nz * e1x - nx * e1z
            e2z = nx * e1y - ny * e1x
            ang.clear()
            for j in range(offsets[i], offsets[i + 1]):
                q = indices[j]
                if q == c:
                    continue
                dx = points[q, 0] - points[c, 0]
                dy = points[q, 1] - points[c, 1]
                dz = points[q, 2] - points[c, 2]
                x = dx * e1x + dy * e1y + dz * e1z
                y = dx * e2x + dy * e2y + dz * e2z
                if x * x + y * y > 0.0:
                    ang.push_back(atan2(y, x))
            if ang.size() < 2:
                o[i] = two_pi
                continue
            sort(ang.begin(), ang.end())
            best = ang[0] + two_pi - ang[ang.size() - 1]
            for t in range(1, <Py_ssize_t>ang.size()):
                g = ang[t] - ang[t - 1]
                if g > best:
                    best = g
            o[i] = best
    return out


def patch_covariances(const double[:, ::1] points, const i64[::1] offsets, const i64[::1] indices):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    out_arr = np.zeros((n, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, a, b
    cdef i64 j, k, cnt
    cdef double d[3]
    cdef double s1[3]
    cdef double s2[3][3]
    with nogil:
        for i in range(n):
            cnt = offsets[i + 1] - offsets[i]
            if cnt <= 0:
                continue
            for a in range(3):
                s1[a] = 0.0
                for b in range(3):
                    s2[a][b] = 0.0
            for k in range(offsets[i], offsets[i + 1]):
                j = indices[k]
                for a in range(3):
                    d[a] = points[j, a] - points[i, a]
                for a in range(3):
                    s1[a] += d[a]
                    for b in range(a, 3):
                        s2[a][b] += d[a] * d[b]
            for a in range(3):
                s1[a] /= cnt
            for a in range(3):
                for b in range(a, 3):
                    out[i, a, b] = s2[a][b] / cnt - s1[a] * s1[b]
                    out[i, b, a] = out[i, a, b]
    return out_arr
