import numpy as np
import pytest

from pepperharvest.camera import (
    Intrinsics,
    RgbdFrame,
    facing_row,
    project_to_cloud,
    read_frame,
    world_to_pixel,
    write_frame,
)
from pepperharvest.color import GaussianColorModel
from pepperharvest.detect import (
    DetectParams,
    ImageBox,
    PepperTarget,
    close_range_viewpoint,
    detect_peppers,
    select_target,
)
from pepperharvest.errors import NoTargets
from pepperharvest.geometry import aabb
from pepperharvest.sim.harvest import SIM_PEPPER_MODEL, HarvestParams, identify
from pepperharvest.sim.render import render_rgbd
from pepperharvest.sim.scene import PEPPER, Scene, SceneSpec, generate_scene

from conftest import cloud

K = Intrinsics.default()


def flat_frame(rgb_value=(0, 0, 0), depth=1.0, shape=(480, 640)):
    rgb = np.zeros(shape + (3,), dtype=np.uint8)
    rgb[...] = rgb_value
    return RgbdFrame(rgb, np.full(shape, depth), K, np.eye(4))


def point_scene(points, spec=SceneSpec(pepper_count=0, color_noise=0, depth_noise=0)):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    return Scene(
        spec, pts, np.full((n, 3), 200, dtype=np.uint8), np.zeros((n, 3)), np.full(n, PEPPER, dtype=np.int8),
        np.zeros(n, dtype=np.int32), np.zeros(n), [], [], trellis_y=100.0,
    )


# ---------------------------------------------------------------- projection


def test_principal_point_projects_on_axis():
    f = flat_frame(depth=0.5)
    mask = np.zeros(f.shape, bool)
    # principal point (319.5, 239.5) sits between pixels; use a frame whose centre is a pixel
    k = Intrinsics(600.0, 600.0, 320.0, 240.0)
    f = RgbdFrame(f.rgb, f.depth, k, np.eye(4))
    mask[240, 320] = True
    np.testing.assert_allclose(project_to_cloud(f, mask).points, [[0, 0, 0.5]])


def test_unit_tangent_pixel():
    k = Intrinsics(600.0, 600.0, 320.0, 240.0, 1000, 480)
    f = RgbdFrame(np.zeros((480, 1000, 3), np.uint8), np.ones((480, 1000)), k, np.eye(4))
    mask = np.zeros(f.shape, bool)
    mask[240, 920] = True
    np.testing.assert_allclose(project_to_cloud(f, mask).points, [[1, 0, 1]])


def test_zero_depth_pixels_skipped():
    f = flat_frame(depth=0.0)
    assert len(project_to_cloud(f, np.ones(f.shape, bool))) == 0
    with pytest.raises(ValueError):
        project_to_cloud(f, np.ones((3, 3), bool))


def test_render_project_round_trip():
    pose = facing_row([0.0, 0.0, 1.0])
    # points placed on pixel-centre rays so the splat centre pixel is exact
    pix = [(100, 200, 0.7), (240, 320, 1.3), (400, 50, 0.45)]
    pts = []
    for r, c, d in pix:
        cam = np.array([(c - K.cx) * d / K.fx, (r - K.cy) * d / K.fy, d])
        pts.append(pose[:3, :3] @ cam + pose[:3, 3])
    frame = render_rgbd(point_scene(pts), pose, K, noise=False)
    for (r, c, _), p in zip(pix, pts):
        mask = np.zeros(frame.shape, bool)
        mask[r, c] = True
        np.testing.assert_allclose(project_to_cloud(frame, mask).points[0], p, atol=1e-6)
    u, v, z = world_to_pixel(frame, K, np.array(pts))
    np.testing.assert_allclose(np.stack([v, u], 1), [(r, c) for r, c, _ in pix], atol=1e-9)


def test_frame_files_round_trip(tmp_path):
    scene = generate_scene(SceneSpec(row_length=1.0, pepper_count=2, rng_seed=4))
    frame = render_rgbd(scene, close_range_viewpoint(scene.peppers[0].center))
    write_frame(tmp_path / "f", frame)
    back = read_frame(tmp_path / "f.ppm")
    np.testing.assert_array_equal(back.rgb, frame.rgb)
    assert np.abs(back.depth - frame.depth).max() <= 0.0005 + 1e-12
    np.testing.assert_allclose(back.camera_pose, frame.camera_pose)


# ---------------------------------------------------------------- detection


def visible_centroid(frame, pid):
    m = (frame.labels == PEPPER) & (frame.instances == pid)
    return project_to_cloud(frame, m).centroid()


def test_single_unoccluded_pepper_detected():
    spec = SceneSpec(row_length=1.0, pepper_count=1, leaf_occlusion_fraction=0.0, rng_seed=11)
    scene = generate_scene(spec)
    p = scene.peppers[0]
    frame = render_rgbd(scene, close_range_viewpoint(p.center))
    targets = detect_peppers(frame, SIM_PEPPER_MODEL, HarvestParams().detect)
    assert len(targets) == 1
    t = targets[0]
    assert identify(frame, t) == p.id
    assert np.linalg.norm(t.centroid - visible_centroid(frame, p.id)) < 0.01
    # the visible surface is the near half, so it sits in front of the true centre
    assert np.linalg.norm(t.centroid - p.center) < 0.05


def test_no_red_objects():
    assert detect_peppers(flat_frame((20, 160, 30)), SIM_PEPPER_MODEL, DetectParams(threshold=-6.0)) == []


def red_block(n_rows, n_cols, depth=2.0):
    f = flat_frame((0, 0, 0), depth=depth)
    f.rgb[100 : 100 + n_rows, 100 : 100 + n_cols] = (200, 20, 20)
    return f


def test_small_blob_below_min_cluster_size():
    model = GaussianColorModel([90.0, 0.9, 0.78], [50.0, 0.01, 0.02])
    params = DetectParams(threshold=-6.0)
    # at 2 m a pixel spans 3.3 mm, wider than the 2 mm voxel: one point per pixel
    assert detect_peppers(red_block(20, 25), model, params) == []
    big = detect_peppers(red_block(40, 40), model, params)
    assert len(big) == 1 and big[0].cluster_size == 1600


def test_targets_ordered_by_size():
    model = GaussianColorModel([90.0, 0.9, 0.78], [50.0, 0.01, 0.02])
    f = red_block(40, 40)
    f.rgb[300:345, 300:345] = (200, 20, 20)
    sizes = [t.cluster_size for t in detect_peppers(f, model, DetectParams(threshold=-6.0))]
    assert sizes == [2025, 1600]


def target(size, centroid):
    c = np.asarray(centroid, dtype=np.float64)
    pc = cloud([c])
    return PepperTarget(pc, c, aabb(pc), ImageBox(0, 0, 1, 1), size)


def test_select_target_cases():
    a, b = target(8000, [0, 0.9, 0]), target(5000, [0, 0.1, 0])
    assert select_target([b, a], [0, 0, 0]) is a
    near, far = target(8000, [0, 0.4, 0]), target(8000, [0, 0.9, 0])
    assert select_target([far, near], [0, 0, 0]) is near
    assert select_target([a], [0, 0, 0]) is a
    with pytest.raises(NoTargets):
        select_target([], [0, 0, 0])


def test_close_range_viewpoint_arithmetic():
    pose = close_range_viewpoint(np.array([0.0, 1.0, 1.0]), 0.4, 0.1)
    np.testing.assert_allclose(pose[:3, 3], [0, 0.6, 1.1])
    np.testing.assert_allclose(pose[:3, 2], [0, 1, 0])  # optical axis along +y
    pose = close_range_viewpoint(np.array([0.3, 1.0, 0.8]), 0.4, 0.0)
    ray = np.array([0.3, 1.0, 0.8]) - pose[:3, 3]
    np.testing.assert_allclose(np.cross(ray, pose[:3, 2]), 0, atol=1e-15)


def test_close_range_frame_has_more_target_pixels():
    scene = generate_scene(SceneSpec(rng_seed=2, leaf_occlusion_fraction=0.0))
    hp = HarvestParams()
    ratios = []
    for p in scene.peppers[:4]:
        far = render_rgbd(scene, facing_row([p.center[0], scene.spec.row_y - hp.long_range_standoff, hp.camera_height]))
        near = render_rgbd(scene, close_range_viewpoint(p.center, hp.standoff, hp.vertical_offset))
        count = lambda f: int(np.sum((f.labels == PEPPER) & (f.instances == p.id)))
        ratios.append(count(near) / count(far))
    assert min(ratios) >= 4.0
