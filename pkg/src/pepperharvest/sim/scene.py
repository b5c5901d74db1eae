"""Synthetic protected-cropping row: peppers, peduncles, leaves, stems.

World frame: x along the row, y away from the robot toward the crop, z up.
Every surface is a set of colored point samples with normals; the renderer
splats them. Ground truth (pepper centroids, peduncle centerlines) is kept
alongside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..camera import facing_row

BACKGROUND, PEPPER, PEDUNCLE, LEAF, STEM, TRELLIS = 0, 1, 2, 3, 4, 5
CLASS_NAMES = {0: "background", 1: "pepper", 2: "peduncle", 3: "leaf", 4: "stem", 5: "trellis"}

LIGHT_DIR = np.array([0.0, -0.8, 0.6])  # unit vector toward the light


@dataclass(frozen=True)
class SceneSpec:
    row_length: float = 3.0
    plant_spacing: float = 0.5
    pepper_count: int = 8
    pepper_size_range: tuple[float, float] = (0.075, 0.1)
    peduncle_length_mean: float = 0.05
    peduncle_length_std: float = 0.006
    leaf_occlusion_fraction: float = 0.3
    color_noise: float = 4.0
    depth_noise: float = 0.001
    rng_seed: int = 0
    row_y: float = 1.0
    pepper_height_range: tuple[float, float] = (0.75, 1.05)
    background_leaves_per_plant: int = 3
    difficult_pepper_fraction: float = 0.05
    difficult_peduncle_fraction: float = 0.05
    unripe_fraction: float = 0.0
    sample_spacing: float = 0.0015

    def __post_init__(self):
        if self.row_length <= 0 or self.plant_spacing <= 0:
            raise ValueError("row_length and plant_spacing must be positive")
        lo, hi = self.pepper_size_range
        if not 0 < lo <= hi:
            raise ValueError("pepper_size_range must be positive and ordered")
        if self.peduncle_length_mean <= 0 or self.peduncle_length_std < 0:
            raise ValueError("peduncle length must be positive")
        for name in (
            "leaf_occlusion_fraction",
            "difficult_pepper_fraction",
            "difficult_peduncle_fraction",
            "unripe_fraction",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.color_noise < 0 or self.depth_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if self.pepper_count < 0:
            raise ValueError("pepper_count must be non-negative")

    def with_(self, **kw) -> "SceneSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class Pepper:
    id: int
    center: np.ndarray
    axes: np.ndarray
    exponents: tuple[float, float]
    yaw: float
    peduncle_curve: np.ndarray
    peduncle_centroid: np.ndarray
    peduncle_radius: float
    peduncle_length: float
    ripe: bool = True
    difficult_shape: bool = False
    difficult_peduncle: bool = False

    @property
    def centroid(self) -> np.ndarray:
        return self.center

    @property
    def top(self) -> float:
        return float(self.center[2] + self.axes[2])


@dataclass(frozen=True)
class Leaf:
    center: np.ndarray
    normal: np.ndarray
    radius: float
    pepper_id: int = -1

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from points to the leaf disc."""
        d = np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.center
        h = d @ self.normal
        inplane = d - h[:, None] * self.normal
        r = np.linalg.norm(inplane, axis=1)
        return np.sqrt(h**2 + np.maximum(r - self.radius, 0.0) ** 2)

    def intersects_segment(self, a, b) -> bool:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        da = float((a - self.center) @ self.normal)
        db = float((b - self.center) @ self.normal)
        if da * db > 0:
            return False
        if da == db:
            return False
        t = da / (da - db)
        p = a + t * (b - a)
        return float(np.linalg.norm(p - self.center)) <= self.radius


@dataclass
class Scene:
    spec: SceneSpec
    points: np.ndarray
    colors: np.ndarray
    normals: np.ndarray
    labels: np.ndarray
    instances: np.ndarray
    splat: np.ndarray
    peppers: list[Pepper]
    leaves: list[Leaf]
    trellis_y: float
    trellis_color: np.ndarray = field(default_factory=lambda: np.array([96, 86, 72], dtype=np.uint8))

    def pepper(self, pepper_id: int) -> Pepper:
        for p in self.peppers:
            if p.id == pepper_id:
                return p
        from ..errors import UnknownPepper

        raise UnknownPepper(f"no pepper with id {pepper_id}")

    def pepper_points(self, pepper_id: int) -> tuple[np.ndarray, np.ndarray]:
        sel = (self.instances == pepper_id) & (self.labels == PEPPER)
        return self.points[sel], self.normals[sel]


# ---------------------------------------------------------------- sampling


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = math.pi * (1.0 + 5.0**0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _ellipsoid_area(a, b, c) -> float:
    p = 1.6075
    return 4 * math.pi * ((a**p * b**p + a**p * c**p + b**p * c**p) / 3.0) ** (1 / p)


def superellipsoid_shell(axes, exponents, spacing):
    """Surface points and outward unit normals of an axis-aligned superellipsoid."""
    a, b, c = axes
    e1, e2 = exponents
    n = max(64, int(_ellipsoid_area(a, b, c) / spacing**2))
    d = _fibonacci_sphere(n)

    def inner(x, y):
        return np.abs(x / a) ** (2 / e2) + np.abs(y / b) ** (2 / e2)

    f = inner(d[:, 0], d[:, 1]) ** (e2 / e1) + np.abs(d[:, 2] / c) ** (2 / e1)
    t = f ** (-e1 / 2.0)
    p = d * t[:, None]
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    g = np.maximum(inner(x, y), 1e-300) ** (e2 / e1 - 1.0)
    nx = g * np.abs(x / a) ** (2 / e2 - 1) * np.sign(x) / a
    ny = g * np.abs(y / b) ** (2 / e2 - 1) * np.sign(y) / b
    nz = np.abs(z / c) ** (2 / e1 - 1) * np.sign(z) / c
    nrm = np.stack([nx, ny, nz], axis=1)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return p, nrm


def tube(curve: np.ndarray, radius: float, spacing: float):
    """Surface samples around a polyline centerline."""
    seg = np.diff(curve, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seglen)])
    total = s[-1]
    ns = max(2, int(total / spacing) + 1)
    nc = max(6, int(2 * math.pi * radius / spacing))
    ss = np.linspace(0.0, total, ns)
    centers = np.stack([np.interp(ss, s, curve[:, k]) for k in range(3)], axis=1)
    tang = np.gradient(centers, axis=0)
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    ref = np.where(np.abs(tang[:, 2:3]) < 0.9, np.array([[0, 0, 1.0]]), np.array([[1.0, 0, 0]]))
    u = np.cross(tang, ref)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = np.cross(tang, u)
    ang = np.linspace(0, 2 * math.pi, nc, endpoint=False)
    # stagger alternate rings to avoid aligned seams
    ang = ang[None, :] + (np.arange(ns)[:, None] % 2) * (math.pi / nc)
    nrm = np.cos(ang)[..., None] * u[:, None, :] + np.sin(ang)[..., None] * w[:, None, :]
    pts = centers[:, None, :] + radius * nrm
    return pts.reshape(-1, 3), nrm.reshape(-1, 3)


def disc(center, normal, radius, spacing):
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    n = max(16, int(math.pi * radius**2 / spacing**2))
    i = np.arange(n) + 0.5
    r = radius * np.sqrt(i / n)
    th = i * math.pi * (3.0 - 5.0**0.5)
    ref = np.array([0, 0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0, 0])
    u = np.cross(normal, ref)
    u /= np.linalg.norm(u)
    w = np.cross(normal, u)
    pts = center + (r * np.cos(th))[:, None] * u + (r * np.sin(th))[:, None] * w
    return pts, np.tile(normal, (n, 1))


def _rgb_from_hsv(h_deg, s, v) -> np.ndarray:
    h = np.mod(np.asarray(h_deg, dtype=np.float64), 360.0) / 360.0
    s = np.clip(s, 0, 1)
    v = np.clip(v, 0, 1)
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.floor(np.stack([r, g, b], axis=-1) * 255 + 0.5).astype(np.uint8)


def shade(normals: np.ndarray, hue, sat, val, ambient=0.55) -> np.ndarray:
    lam = np.clip(np.abs(normals @ LIGHT_DIR), 0.0, 1.0)
    return _rgb_from_hsv(hue, sat, val * (ambient + (1 - ambient) * lam))


# ---------------------------------------------------------------- placement


def _peduncle_curve(base, length, bend, azimuth, n=24):
    s = np.linspace(0.0, length, n)
    theta = bend * s / length
    # closed-form integral of the unit tangent for a linearly growing bend
    if bend > 1e-9:
        horiz = length / bend * (1.0 - np.cos(theta))
        vert = length / bend * np.sin(theta)
    else:
        horiz = np.zeros_like(s)
        vert = s
    return base + np.stack([horiz * math.cos(azimuth), horiz * math.sin(azimuth), vert], axis=1)


def _overlap_fraction(d, psi, leaf_r, a, c, grid):
    q = np.array([d * math.cos(psi), d * math.sin(psi)])
    inside = np.sum((grid - q) ** 2, axis=1) <= leaf_r**2
    return float(inside.mean())


def _ellipse_grid(a, c, n=60):
    g = np.linspace(-1, 1, n)
    xx, zz = np.meshgrid(g, g)
    keep = xx**2 + zz**2 <= 1.0
    return np.stack([xx[keep] * a, zz[keep] * c], axis=1)


def place_occluding_leaf(pepper: Pepper, fraction: float, rng, standoff=0.4, vertical_offset=0.1) -> Leaf:
    """Leaf disc in front of a pepper covering about ``fraction`` of its silhouette.

    Coverage is solved in the view of the default close-range camera.
    """
    cam = facing_row(pepper.center + np.array([0.0, -standoff, vertical_offset]))[:3, 3]
    a = float(max(pepper.axes[0], pepper.axes[1]))
    c = float(pepper.axes[2])
    gap = rng.uniform(0.015, 0.03)
    y_leaf = pepper.center[1] - pepper.axes[1] - gap
    scale = (pepper.center[1] - cam[1]) / (y_leaf - cam[1])  # magnification on the pepper plane
    leaf_r = a * rng.uniform(1.0, 1.3)
    proj_r = leaf_r * scale
    psi = rng.uniform(0, 2 * math.pi)
    grid = _ellipse_grid(a, c)
    lo, hi = 0.0, a + c + proj_r
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _overlap_fraction(mid, psi, proj_r, a, c, grid) > fraction:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    target = pepper.center + np.array([d * math.cos(psi), 0.0, d * math.sin(psi)])
    center = cam + (target - cam) / scale
    tilt = rng.uniform(-0.25, 0.25, size=2)
    normal = np.array([tilt[0], -1.0, tilt[1]])
    normal /= np.linalg.norm(normal)
    return Leaf(center, normal, leaf_r, pepper.id)


def _sample_pepper(pid, center, rng, spec: SceneSpec, difficult_shape, difficult_peduncle, ripe):
    width = rng.uniform(*spec.pepper_size_range)
    a = width / 2.0
    b = a * rng.uniform(0.9, 1.0)
    c = a * rng.uniform(1.1, 1.4)
    if difficult_shape:
        c *= 1.6
    exps = (rng.uniform(0.55, 0.8), rng.uniform(0.6, 0.85))
    length = max(0.025, rng.normal(spec.peduncle_length_mean, spec.peduncle_length_std))
    if difficult_peduncle:
        length = rng.uniform(0.012, 0.018)
    bend = rng.uniform(0.3, 0.7)
    azimuth = math.pi / 2 + rng.uniform(-0.5, 0.5)  # mostly toward the stem (+y)
    base = center + np.array([0.0, 0.0, c - 0.003])
    curve = _peduncle_curve(base, length, bend, azimuth)
    # arc-length-uniform samples so the mean is the centerline centroid
    return Pepper(
        id=pid,
        center=center,
        axes=np.array([a, b, c]),
        exponents=exps,
        yaw=0.0,
        peduncle_curve=curve,
        peduncle_centroid=curve.mean(axis=0),
        peduncle_radius=rng.uniform(0.0045, 0.006),
        peduncle_length=length,
        ripe=ripe,
        difficult_shape=difficult_shape,
        difficult_peduncle=difficult_peduncle,
    )


def _place_centers(spec: SceneSpec, rng) -> list[np.ndarray]:
    n_plants = max(1, int(round(spec.row_length / spec.plant_spacing)))
    plants = (np.arange(n_plants) + 0.5) * spec.plant_spacing
    centers: list[np.ndarray] = []
    tries = 0
    while len(centers) < spec.pepper_count and tries < 10000:
        tries += 1
        px = plants[rng.integers(n_plants)]
        cand = np.array(
            [
                np.clip(px + rng.uniform(-0.15, 0.15), 0.08, spec.row_length - 0.08),
                spec.row_y + rng.normal(0.0, 0.008),
                rng.uniform(*spec.pepper_height_range),
            ]
        )
        if all(np.linalg.norm((cand - c)[[0, 2]]) > 0.16 for c in centers):
            centers.append(cand)
    if len(centers) < spec.pepper_count:
        raise ValueError("row too short to place the requested pepper count")
    return centers


def generate_scene(spec: SceneSpec) -> Scene:
    """Build a row scene; fully determined by ``spec`` (including ``rng_seed``)."""
    # independent streams so toggling leaves leaves the crop itself unchanged
    streams = np.random.SeedSequence([spec.rng_seed, 0x5CE7E]).spawn(5)
    rng, rng_color, rng_stem, rng_occ, rng_bg = (np.random.default_rng(s) for s in streams)
    sp = spec.sample_spacing
    parts = []  # (points, normals, colors, label, instance, splat)

    def add(pts, nrm, colors, label, inst, spacing):
        parts.append((pts, nrm, colors, np.full(len(pts), label, np.int8), np.full(len(pts), inst, np.int32),
                      np.full(len(pts), 0.75 * spacing)))

    centers = _place_centers(spec, rng)
    peppers = []
    for pid, center in enumerate(centers):
        difficult_shape = bool(rng.random() < spec.difficult_pepper_fraction)
        difficult_ped = bool(rng.random() < spec.difficult_peduncle_fraction)
        ripe = bool(rng.random() >= spec.unripe_fraction)
        peppers.append(_sample_pepper(pid, center, rng, spec, difficult_shape, difficult_ped, ripe))

    for p in peppers:
        pts, nrm = superellipsoid_shell(p.axes, p.exponents, sp)
        hue = rng_color.normal(0.0, 3.0) if p.ripe else rng_color.normal(110.0, 5.0)
        col = shade(
            nrm, hue + rng_color.normal(0, 1.5, len(pts)), rng_color.uniform(0.8, 0.9), rng_color.uniform(0.68, 0.78)
        )
        add(pts + p.center, nrm, col, PEPPER, p.id, sp)
        tp, tn = tube(p.peduncle_curve, p.peduncle_radius, sp)
        col = shade(tn, rng_color.normal(72.0, 4.0) + rng_color.normal(0, 2.0, len(tp)), 0.55, 0.5)
        add(tp, tn, col, PEDUNCLE, p.id, sp)

    stem_y = spec.row_y + 0.07
    n_plants = max(1, int(round(spec.row_length / spec.plant_spacing)))
    stem_sp = 2.0 * sp
    for i in range(n_plants):
        x = (i + 0.5) * spec.plant_spacing
        curve = np.array([[x, stem_y, 0.35], [x, stem_y, 1.45]])
        tp, tn = tube(curve, 0.008, stem_sp)
        add(tp, tn, shade(tn, 100.0 + rng_stem.normal(0, 3, len(tp)), 0.6, 0.45), STEM, -1, stem_sp)
    for p in peppers:
        # side shoot joining the peduncle tip to its plant stem
        tip = p.peduncle_curve[-1]
        sx = (np.floor(tip[0] / spec.plant_spacing) + 0.5) * spec.plant_spacing
        joint = np.array([sx, stem_y, tip[2] + 0.03])
        tp, tn = tube(np.array([tip, 0.5 * (tip + joint) + [0, 0, 0.01], joint]), 0.004, sp)
        add(tp, tn, shade(tn, 95.0 + rng_stem.normal(0, 3, len(tp)), 0.6, 0.45), STEM, -1, sp)

    leaves: list[Leaf] = []
    leaf_sp = 2.0 * sp
    if spec.leaf_occlusion_fraction > 0:
        for p in peppers:
            leaves.append(place_occluding_leaf(p, spec.leaf_occlusion_fraction, rng_occ))
    for i in range(n_plants):
        for _ in range(spec.background_leaves_per_plant):
            c = np.array(
                [
                    (i + 0.5) * spec.plant_spacing + rng_bg.uniform(-0.25, 0.25),
                    spec.row_y + rng_bg.uniform(0.09, 0.16),
                    rng_bg.uniform(0.5, 1.3),
                ]
            )
            nrm = np.array([rng_bg.uniform(-0.4, 0.4), -1.0, rng_bg.uniform(-0.4, 0.4)])
            leaves.append(Leaf(c, nrm / np.linalg.norm(nrm), rng_bg.uniform(0.04, 0.07)))
    for leaf in leaves:
        pts, nrm = disc(leaf.center, leaf.normal, leaf.radius, leaf_sp)
        lr = rng_occ if leaf.pepper_id >= 0 else rng_bg
        col = shade(nrm, 115.0 + lr.normal(0, 4, len(pts)), 0.65, 0.5)
        add(pts, nrm, col, LEAF, leaf.pepper_id, leaf_sp)

    pts, nrm, col, lab, inst, spl = (np.concatenate(x) for x in zip(*parts))
    return Scene(
        spec=spec,
        points=np.ascontiguousarray(pts),
        colors=np.ascontiguousarray(col),
        normals=nrm,
        labels=lab,
        instances=inst,
        splat=spl,
        peppers=peppers,
        leaves=leaves,
        trellis_y=spec.row_y + 0.3,
    )
