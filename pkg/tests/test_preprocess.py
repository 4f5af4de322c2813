import hashlib
import math
import threading

import numpy as np
import pytest

from hyperdf import preprocess as preprocess_module
from hyperdf.errors import DetectorUnavailable, NoFaceFound
from hyperdf.preprocess import (
    ArrayVideo,
    Face,
    StubDetector,
    VideoJob,
    align_face,
    crop_face,
    get_detector,
    landmarks_from_box,
    margin_box,
    preprocess_video,
    preprocess_videos,
    sample_frame_indices,
    similarity_to_canonical,
)
from hyperdf.schemas import PreprocessConfig


def _frame(size: int = 64, box=(20, 16, 40, 44), colour=(200, 120, 90)) -> np.ndarray:
    frame = np.full((size, size, 3), 30, dtype=np.uint8)
    x1, y1, x2, y2 = box
    frame[y1:y2, x1:x2] = colour
    return frame


def _digest(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(p.read_bytes())
    return h.hexdigest()


class TestFrameSampling:
    def test_even_spacing_includes_endpoints(self):
        assert sample_frame_indices(100, 5) == [0, 25, 50, 74, 99]
        assert sample_frame_indices(33, 32)[0] == 0
        assert sample_frame_indices(33, 32)[-1] == 32

    def test_short_video_uses_every_frame(self):
        assert sample_frame_indices(3, 32) == [0, 1, 2]

    def test_single_frame(self):
        assert sample_frame_indices(10, 1) == [0]

    def test_indices_unique_and_sorted(self):
        idx = sample_frame_indices(300, 32)
        assert len(idx) == 32 and idx == sorted(set(idx))

    @pytest.mark.parametrize("n,k", [(0, 4), (5, 0)])
    def test_invalid_arguments(self, n, k):
        with pytest.raises(ValueError):
            sample_frame_indices(n, k)


class TestCropping:
    def test_margin_box_is_square_and_centred(self):
        left, top, right, bottom = margin_box((10, 10, 30, 50), 1.3)
        assert right - left == bottom - top == 52
        assert (left + right) / 2 == pytest.approx(20, abs=0.5)
        assert (top + bottom) / 2 == pytest.approx(30, abs=0.5)

    def test_crop_near_border_is_padded(self):
        crop = crop_face(_frame(box=(0, 0, 20, 20)), (0, 0, 20, 20), 1.5, 24)
        assert crop.shape == (24, 24, 3)
        assert crop[0, 0].tolist() == [0, 0, 0]

    def test_stub_detector_finds_the_blob(self):
        faces = StubDetector().detect(_frame())
        assert len(faces) == 1
        assert faces[0].box == (20.0, 16.0, 40.0, 44.0)
        assert faces[0].landmarks.shape == (5, 2)

    def test_stub_detector_on_blank_frame(self):
        assert StubDetector().detect(np.zeros((32, 32, 3), dtype=np.uint8)) == []


class TestAlignment:
    box = (16.0, 12.0, 48.0, 52.0)

    def _rotated_face(self, degrees: float) -> Face:
        canonical = landmarks_from_box(self.box)
        centre = canonical.mean(axis=0)
        r = math.radians(degrees)
        rotation = np.array([[math.cos(r), -math.sin(r)], [math.sin(r), math.cos(r)]])
        return Face(self.box, (canonical - centre) @ rotation.T + centre)

    def test_similarity_maps_landmarks_onto_template(self):
        face = self._rotated_face(20.0)
        matrix = similarity_to_canonical(face)
        moved = np.hstack([face.landmarks, np.ones((5, 1))]) @ matrix.T
        np.testing.assert_allclose(moved, landmarks_from_box(self.box), atol=1e-3)
        (a, b, _), (c, d, _) = matrix
        assert a == pytest.approx(d, abs=1e-6) and b == pytest.approx(-c, abs=1e-6)
        assert math.hypot(a, c) == pytest.approx(1.0, abs=1e-4)
        assert math.degrees(math.atan2(c, a)) == pytest.approx(-20.0, abs=1e-3)

    def test_frame_warped_only_when_landmarks_are_off_template(self):
        frame = _frame()
        stub = StubDetector().detect(frame)[0]
        same, box = align_face(frame, stub)
        assert same is frame and box == stub.box
        warped, box = align_face(frame, self._rotated_face(15.0))
        assert warped.shape == frame.shape and box == self.box
        assert not np.array_equal(warped, frame)

class TestPreprocessVideo:
    config = PreprocessConfig(frames_per_video=4, crop_size=32)

    def test_deterministic_crops(self, tmp_path):
        video = ArrayVideo([_frame() for _ in range(10)])
        first = preprocess_video(video, self.config, StubDetector(), tmp_path / "a", "ds/real/0001")
        second = preprocess_video(video, self.config, StubDetector(), tmp_path / "b", "ds/real/0001")
        assert len(first) == 4
        assert _digest(first) == _digest(second)
        assert all(p.name.startswith("ds_real_0001_") for p in first)

    def test_frames_without_face_are_skipped(self, tmp_path):
        frames = [_frame() if i % 2 else np.zeros((64, 64, 3), dtype=np.uint8) for i in range(8)]
        crops = preprocess_video(ArrayVideo(frames), self.config, StubDetector(), tmp_path, "v")
        assert 0 < len(crops) < 4

    def test_no_face_anywhere(self, tmp_path):
        video = ArrayVideo([np.zeros((32, 32, 3), dtype=np.uint8)] * 5)
        with pytest.raises(NoFaceFound):
            preprocess_video(video, self.config, StubDetector(), tmp_path, "v")

    def test_largest_face_wins(self, tmp_path):
        class TwoFaces:
            def detect(self, frame):
                small, big = (2, 2, 6, 6), (20, 16, 40, 44)
                return [Face(small, landmarks_from_box(small)), Face(big, landmarks_from_box(big))]

        config = PreprocessConfig(frames_per_video=1, crop_size=16, bbox_margin=1.0)
        (path,) = preprocess_video(ArrayVideo([_frame()]), config, TwoFaces(), tmp_path, "v")
        assert path.exists()

    def test_fingerprint_tracks_config(self):
        base = PreprocessConfig()
        assert base.fingerprint() == PreprocessConfig().fingerprint()
        assert base.fingerprint() != PreprocessConfig(bbox_margin=1.5).fingerprint()
        assert base.fingerprint() != PreprocessConfig(frames_per_video=16).fingerprint()


class TestPreprocessVideos:
    def test_excluded_videos_are_tallied(self, tmp_path):
        config = PreprocessConfig(frames_per_video=2, crop_size=16)
        common = {"split": "train", "dataset": "fixture", "year": 2020}
        jobs = [
            VideoJob("fixture/real/a", "real", "fixture/real/a", "real", video=ArrayVideo([_frame()] * 3), **common),
            VideoJob(
                "fixture/real/b",
                "real",
                "fixture/real/b",
                "real",
                video=ArrayVideo([np.zeros((64, 64, 3), dtype=np.uint8)] * 3),
                **common,
            ),
        ]
        manifest = preprocess_videos(jobs, config, tmp_path, name="fixture")
        assert [r.video_id for r in manifest.records] == ["fixture/real/a"]
        assert list(manifest.excluded) == ["fixture/real/b"]
        assert manifest.preprocessing_fingerprint == config.fingerprint()

    def test_unknown_detector(self):
        with pytest.raises(DetectorUnavailable):
            get_detector("does-not-exist")

    def test_unreadable_and_empty_videos_are_excluded(self, tmp_path):
        class Broken(ArrayVideo):
            def read(self, index):
                raise OSError("decoder failed")

        config = PreprocessConfig(frames_per_video=2, crop_size=16)
        common = {"split": "train", "dataset": "fixture", "year": 2020}
        jobs = [
            VideoJob("fixture/real/a", "real", "fixture/real/a", "real", video=ArrayVideo([_frame()] * 3), **common),
            VideoJob("fixture/real/empty", "real", "fixture/real/empty", "real", video=ArrayVideo([]), **common),
            VideoJob("fixture/real/broken", "real", "fixture/real/broken", "real", video=Broken([_frame()] * 3), **common),
        ]
        manifest = preprocess_videos(jobs, config, tmp_path, name="fixture", workers=2)
        assert [r.video_id for r in manifest.records] == ["fixture/real/a"]
        assert sorted(manifest.excluded) == ["fixture/real/broken", "fixture/real/empty"]
        assert manifest.excluded["fixture/real/broken"].startswith("OSError")

    def test_each_worker_thread_has_its_own_detector(self, tmp_path, monkeypatch):
        threads_by_detector = {}

        class Recording(StubDetector):
            def detect(self, frame):
                threads_by_detector.setdefault(id(self), set()).add(threading.get_ident())
                return super().detect(frame)

        monkeypatch.setattr(preprocess_module, "get_detector", lambda name: Recording())
        config = PreprocessConfig(frames_per_video=2, crop_size=16)
        common = {"split": "train", "dataset": "fixture", "year": 2020}
        jobs = [
            VideoJob(f"fixture/real/{i}", "real", f"fixture/real/{i}", "real", video=ArrayVideo([_frame()] * 2), **common)
            for i in range(8)
        ]
        manifest = preprocess_videos(jobs, config, tmp_path, name="fixture", workers=4)
        assert len(manifest.records) == 8
        assert all(len(threads) == 1 for threads in threads_by_detector.values())
