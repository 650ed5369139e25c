import math

import numpy as np
import pytest

from domain.boxes import N_VIEWS, Box3D, Detection, PointCloud
from domain.errors import CapacityError, ConfigurationError, FormatError
from domain.geometry import bev_iou, points_in_box
from domain.view_geometry import ViewGeometry
from generator.dataset import get_splits, load_dataset, save_dataset, synthesize_split
from generator.scene_generator import MotionModel, boxes_at, generate_scene, simulate_sequence
from generator.scene_io import (
    decode_cloud,
    encode_cloud,
    format_boxes,
    parse_boxes,
    parse_detections,
    read_cloud,
    write_cloud,
    write_detections,
    read_detections,
)
from generator.sensors import project_footprints, render_views, sample_lidar
from relibev.selftest import tiny_config


def test_generate_scene_is_deterministic_and_non_overlapping():
    a = generate_scene(5, 4, 18.0, 3)
    b = generate_scene(5, 4, 18.0, 3)
    assert a == b
    assert len(a) == 4
    for i in range(len(a)):
        for j in range(i + 1, len(a)):
            assert bev_iou(a[i], a[j]) == 0.0


def test_generate_scene_keeps_boxes_inside_window_and_on_ground():
    for box in generate_scene(2, 5, 18.0, 3):
        assert box.center[2] == pytest.approx(box.size[2] / 2.0)
        reach = 0.5 * math.hypot(box.size[0], box.size[1])
        assert abs(box.center[0]) + reach <= 9.0 + 1e-9
        assert abs(box.center[1]) + reach <= 9.0 + 1e-9


def test_generate_scene_without_room_raises_capacity_error():
    with pytest.raises(CapacityError):
        generate_scene(0, 30, 8.0, 1)


def test_zero_objects_is_an_empty_scene():
    assert generate_scene(0, 0, 18.0, 3) == []


def test_boxes_advance_with_their_velocity():
    box = Box3D((3.0, 0.0, 0.8), (1.0, 2.0, 1.6), 0.0, 0, (1.0, -0.5))
    moved = boxes_at([box], 2, MotionModel(dt=0.5))[0]
    assert moved.center[:2] == pytest.approx((4.0, -0.5))


def test_ego_yaw_rotates_boxes_into_the_new_frame():
    box = Box3D((5.0, 0.0, 0.8), (1.0, 2.0, 1.6), 0.0, 0)
    motion = MotionModel(dt=1.0, ego_yaw_rate=math.pi / 2)
    moved = boxes_at([box], 1, motion)[0]
    assert moved.center[0] == pytest.approx(0.0, abs=1e-12)
    assert moved.center[1] == pytest.approx(-5.0)


def test_sample_lidar_point_count_and_tags():
    boxes = generate_scene(1, 3, 18.0, 3)
    cloud = sample_lidar(boxes, 500, 0.0, seed=9)
    assert len(cloud) == 500
    for index, box in enumerate(boxes):
        tagged = cloud.points[cloud.box_index == index, :3]
        assert np.all(points_in_box(tagged, box, tol=1e-5))
    # float32-representable coordinates
    assert np.array_equal(cloud.points, cloud.points.astype(np.float32).astype(np.float64))


def _boundary_gap(xyz, box):
    """Largest per-axis excess over the half size: 0 on a face, negative inside."""
    w, l, h = box.size
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx, dy = xyz[:, 0] - box.center[0], xyz[:, 1] - box.center[1]
    along = c * dx + s * dy
    across = -s * dx + c * dy
    up = xyz[:, 2] - box.center[2]
    return np.max(
        np.stack([np.abs(along) - l / 2, np.abs(across) - w / 2, np.abs(up) - h / 2]), axis=0
    )


def test_noiseless_surface_returns_lie_on_their_box():
    boxes = generate_scene(1, 3, 18.0, 3)
    n_points = 4000
    n_surface = n_points - int(round(0.3 * n_points))
    cloud = sample_lidar(boxes, n_points, 0.0, seed=11)
    assert np.sum(cloud.box_index >= 0) >= n_surface
    for index, box in enumerate(boxes):
        tagged = cloud.points[cloud.box_index == index, :3]
        # float32 storage: on the boundary up to single-precision resolution
        assert np.all(np.abs(_boundary_gap(tagged, box)) <= 1e-5)


def test_noisy_surface_returns_keep_their_source_box():
    boxes = generate_scene(1, 3, 18.0, 3)
    n_points = 4000
    n_surface = n_points - int(round(0.3 * n_points))
    cloud = sample_lidar(boxes, n_points, 0.2, seed=11)
    assert np.sum(cloud.box_index >= 0) >= n_surface
    for index, box in enumerate(boxes):
        tagged = cloud.points[cloud.box_index == index, :3]
        assert len(tagged) > 0
        # noise moves points off the faces, a few sigma at most
        assert np.all(_boundary_gap(tagged, box) <= 2.0)


def test_render_views_marks_footprints():
    geometry = ViewGeometry(height=4, width=16, n_classes=3, depth_code=4)
    box = Box3D((6.0, 0.0, 0.8), (1.9, 4.4, 1.6), 0.0, 1)
    views = render_views([box], geometry, seed=0, noise_level=0.0)
    assert views.shape == (N_VIEWS, *geometry.shape)
    footprints = project_footprints([box], geometry)
    assert footprints and footprints[0].view == 0
    fp = footprints[0]
    assert np.all(views[0, 1, fp.row0 : fp.row1, fp.col0 : fp.col1] == 1.0)
    assert not np.any(views[3])


@pytest.mark.parametrize("k", range(N_VIEWS))
def test_box_in_one_sector_imprints_only_that_view(k):
    geometry = ViewGeometry(height=4, width=16, n_classes=3, depth_code=4)
    theta = k * math.pi / 3 + math.radians(10.0)
    box = Box3D((6.0 * math.cos(theta), 6.0 * math.sin(theta), 0.5), (0.5, 0.5, 1.0), 0.0, 1)
    views = render_views([box], geometry, seed=0, noise_level=0.0)
    lit = [v for v in range(N_VIEWS) if np.any(views[v])]
    assert lit == [k]
    focal = (geometry.width / 2) / math.tan(math.pi / 6)
    expected = geometry.width / 2 + focal * math.tan(math.radians(10.0))
    (fp,) = project_footprints([box], geometry)
    assert fp.center_column == pytest.approx(expected, abs=1e-9)
    assert fp.col0 <= expected < fp.col1
    assert np.any(views[k, 1, :, int(math.floor(expected))] == 1.0)


def test_simulate_sequence_has_one_ego_step_per_transition():
    seq = simulate_sequence(3, T=3, n_objects=2)
    assert seq.T == 3
    assert len(seq.ego_motion) == 2
    assert [f.t for f in seq.frames] == [0, 1, 2]


def test_box_text_round_trip_is_exact():
    boxes = generate_scene(4, 3, 18.0, 3)
    assert parse_boxes(format_boxes(boxes)) == boxes


def test_box_text_rejects_bad_lines():
    with pytest.raises(FormatError):
        parse_boxes("0 1.0 2.0\n")
    with pytest.raises(FormatError):
        parse_boxes("0 a b c d e f g h i\n")


def test_detection_file_round_trip(tmp_path):
    box = Box3D((1.0, 2.0, 0.8), (1.0, 2.0, 1.6), 0.3, 2, (0.1, 0.2))
    dets = [Detection(box, 0.75)]
    write_detections(tmp_path / "dets.txt", dets)
    assert read_detections(tmp_path / "dets.txt") == dets
    with pytest.raises(FormatError):
        parse_detections("0 0.5 1 2 3\n")


def test_cloud_binary_round_trip(tmp_path):
    cloud = sample_lidar(generate_scene(6, 2, 18.0, 3), 64, 0.02, seed=6)
    write_cloud(tmp_path / "c.rfpc", cloud)
    loaded = read_cloud(tmp_path / "c.rfpc")
    assert np.array_equal(loaded.points, cloud.points)


def test_cloud_decoder_rejects_corrupt_data():
    data = encode_cloud(PointCloud(np.ones((3, 4))))
    with pytest.raises(FormatError):
        decode_cloud(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        decode_cloud(data[:-1])
    with pytest.raises(FormatError):
        decode_cloud(data[:3])


def test_dataset_directory_round_trip(tmp_path):
    cfg = tiny_config(**{"dataset.n_objects": 0})
    splits = {split: synthesize_split(cfg, split) for split in ("train", "test")}
    save_dataset(tmp_path, splits, cfg)
    loaded = load_dataset(tmp_path)
    assert [len(loaded[s]) for s in ("train", "test")] == [2, 2]
    for original, restored in zip(splits["train"], loaded["train"]):
        assert restored.seed == original.seed
        for f0, f1 in zip(original.frames, restored.frames):
            assert np.array_equal(f0.cloud.points, f1.cloud.points)
            assert np.array_equal(f0.views, f1.views)
            assert f0.gt_boxes == f1.gt_boxes


def test_dataset_rerun_is_byte_identical(tmp_path):
    cfg = tiny_config(**{"dataset.n_objects": 0})
    for name in ("a", "b"):
        splits = {split: synthesize_split(cfg, split) for split in ("train", "test")}
        save_dataset(tmp_path / name, splits, cfg)
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.*"))
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.*"))
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_empty_split_writes_manifest_with_empty_list(tmp_path):
    cfg = tiny_config(**{"dataset.train_scenes": 0, "dataset.test_scenes": 0})
    path = save_dataset(tmp_path, {"train": [], "test": []}, cfg)
    assert path.exists()
    assert load_dataset(tmp_path) == {"train": [], "test": []}


def test_dataset_path_without_manifest_is_a_configuration_error(tmp_path):
    cfg = tiny_config(**{"dataset.path": str(tmp_path)})
    with pytest.raises(ConfigurationError):
        get_splits(cfg)


def test_saved_dataset_keeps_sensor_tags(tmp_path):
    cfg = tiny_config()
    seq = simulate_sequence(7, T=2, n_objects=2, noise_sigma=0.2, n_points=600)
    save_dataset(tmp_path, {"train": [seq], "test": []}, cfg)
    (restored,) = load_dataset(tmp_path)["train"]
    for f0, f1 in zip(seq.frames, restored.frames):
        assert np.any(f0.cloud.box_index >= 0)
        assert np.array_equal(f0.cloud.box_index, f1.cloud.box_index)
