"""Face-crop preprocessing: frame sampling, detection, alignment, cropping.

Per video: sample frames evenly, take the largest detected face, move its five
landmarks onto canonical positions inside the detected box with a similarity
transform, enlarge the box by the configured margin, crop a square, resize and
save it losslessly.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import cv2
import numpy as np
from tqdm import tqdm

from .errors import DetectorUnavailable, NoFaceFound
from .schemas import DatasetManifest, PreprocessConfig, VideoRecord

logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]

# left eye, right eye, nose, mouth left, mouth right; relative to the face box
CANONICAL_LANDMARKS = np.array([[0.3, 0.35], [0.7, 0.35], [0.5, 0.55], [0.35, 0.75], [0.65, 0.75]])
IDENTITY = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class Face:
    box: Box
    landmarks: np.ndarray  # (5, 2): left eye, right eye, nose, mouth left, mouth right
    score: float = 1.0

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.box
        return max(0.0, x2 - x1) * max(0.0, y2 - y1)


class FaceDetector(Protocol):
    def detect(self, frame: np.ndarray) -> List[Face]: ...


DETECTORS: Dict[str, Callable[[], FaceDetector]] = {}


def register_detector(name: str):
    def _register(factory: Callable[[], FaceDetector]):
        DETECTORS[name] = factory
        return factory

    return _register


def get_detector(name: str) -> FaceDetector:
    factory = DETECTORS.get(name)
    if factory is None:
        raise DetectorUnavailable(f"unknown face detector '{name}' (known: {sorted(DETECTORS)})")
    return factory()


def landmarks_from_box(box: Box) -> np.ndarray:
    x1, y1, x2, y2 = box
    w, h = x2 - x1, y2 - y1
    return np.stack([x1 + CANONICAL_LANDMARKS[:, 0] * w, y1 + CANONICAL_LANDMARKS[:, 1] * h], axis=1)


@register_detector("stub")
class StubDetector:
    """Finds blobs that differ from the frame's corner colour; deterministic."""

    def __init__(self, tolerance: int = 12, min_area: int = 16) -> None:
        self.tolerance = tolerance
        self.min_area = min_area

    def detect(self, frame: np.ndarray) -> List[Face]:
        background = frame[0, 0].astype(np.int16)
        diff = np.abs(frame.astype(np.int16) - background).max(axis=-1)
        mask = (diff > self.tolerance).astype(np.uint8)
        count, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        faces = []
        for label in range(1, count):
            x, y, w, h, area = stats[label]
            if area < self.min_area:
                continue
            box = (float(x), float(y), float(x + w), float(y + h))
            faces.append(Face(box=box, landmarks=landmarks_from_box(box)))
        return faces


@register_detector("mtcnn")
class MtcnnDetector:
    """MTCNN from facenet-pytorch (optional dependency)."""

    def __init__(self) -> None:
        try:
            from facenet_pytorch import MTCNN
        except ImportError as exc:
            raise DetectorUnavailable("the mtcnn detector needs the facenet-pytorch package") from exc
        self.model = MTCNN(keep_all=True, thresholds=[0.85, 0.95, 0.95], device="cpu")

    def detect(self, frame: np.ndarray) -> List[Face]:
        from PIL import Image

        boxes, probs, points = self.model.detect(Image.fromarray(frame), landmarks=True)
        if boxes is None:
            return []
        return [
            Face(box=tuple(float(v) for v in box), landmarks=np.asarray(pts, dtype=np.float64), score=float(p))
            for box, p, pts in zip(boxes, probs, points)
        ]


class VideoSource(Protocol):
    def __len__(self) -> int: ...

    def read(self, index: int) -> Optional[np.ndarray]: ...


class ArrayVideo:
    """In-memory RGB frames."""

    def __init__(self, frames: Sequence[np.ndarray]) -> None:
        self.frames = list(frames)

    def __len__(self) -> int:
        return len(self.frames)

    def read(self, index: int) -> Optional[np.ndarray]:
        return self.frames[index]


class VideoFile:
    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        capture = cv2.VideoCapture(str(self.path))
        self._count = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
        capture.release()

    def __len__(self) -> int:
        return self._count

    def read(self, index: int) -> Optional[np.ndarray]:
        capture = cv2.VideoCapture(str(self.path))
        try:
            capture.set(cv2.CAP_PROP_POS_FRAMES, index)
            ok, frame = capture.read()
        finally:
            capture.release()
        if not ok:
            return None
        return cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)


class FrameDirectory:
    """A directory of still images treated as a video, sorted by file name."""

    SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}

    def __init__(self, path: Union[str, Path]) -> None:
        self.files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in self.SUFFIXES)

    def __len__(self) -> int:
        return len(self.files)

    def read(self, index: int) -> Optional[np.ndarray]:
        frame = cv2.imread(str(self.files[index]), cv2.IMREAD_COLOR)
        return None if frame is None else cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)


def open_video(path: Union[str, Path]) -> VideoSource:
    path = Path(path)
    return FrameDirectory(path) if path.is_dir() else VideoFile(path)


def sample_frame_indices(n_frames: int, k: int) -> List[int]:
    """``k`` evenly spaced indices including both endpoints; all frames if fewer than ``k``."""
    if n_frames < 1 or k < 1:
        raise ValueError("n_frames and k must be >= 1")
    if n_frames <= k:
        return list(range(n_frames))
    if k == 1:
        return [0]
    step = (n_frames - 1) / (k - 1)
    return [int(math.floor(j * step + 0.5)) for j in range(k)]


def similarity_to_canonical(face: Face) -> Optional[np.ndarray]:
    """2x3 similarity matrix taking ``face.landmarks`` onto the canonical layout of ``face.box``."""
    target = landmarks_from_box(face.box).astype(np.float32)
    matrix, _ = cv2.estimateAffinePartial2D(face.landmarks.astype(np.float32), target, method=cv2.LMEDS)
    return matrix


def align_face(frame: np.ndarray, face: Face) -> Tuple[np.ndarray, Box]:
    """Warp ``frame`` so the landmarks sit on their canonical spots; the face box is unchanged."""
    matrix = similarity_to_canonical(face)
    if matrix is None:
        logger.debug("Landmarks too degenerate to align; using the raw frame")
        return frame, face.box
    if np.allclose(matrix, IDENTITY, atol=1e-6):
        return frame, face.box
    h, w = frame.shape[:2]
    aligned = cv2.warpAffine(frame, matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)
    return aligned, face.box


def margin_box(box: Box, margin: float) -> Tuple[int, int, int, int]:
    """Square box around ``box``'s centre with side ``max(w, h) * margin`` (integer pixels)."""
    x1, y1, x2, y2 = box
    side = max(x2 - x1, y2 - y1) * margin
    cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
    left = int(round(cx - side / 2))
    top = int(round(cy - side / 2))
    size = max(1, int(round(side)))
    return left, top, left + size, top + size


def crop_face(frame: np.ndarray, box: Box, margin: float, size: int) -> np.ndarray:
    left, top, right, bottom = margin_box(box, margin)
    h, w = frame.shape[:2]
    pad = max(0, -left, -top, right - w, bottom - h)
    if pad:
        frame = cv2.copyMakeBorder(frame, pad, pad, pad, pad, cv2.BORDER_CONSTANT, value=0)
    crop = frame[top + pad : bottom + pad, left + pad : right + pad]
    interpolation = cv2.INTER_AREA if crop.shape[0] > size else cv2.INTER_LINEAR
    return cv2.resize(crop, (size, size), interpolation=interpolation)


def save_crop(crop: np.ndarray, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(crop, cv2.COLOR_RGB2BGR)):
        raise OSError(f"failed to write crop {path}")
    return path


def preprocess_video(
    video: VideoSource,
    config: PreprocessConfig,
    detector: FaceDetector,
    out_dir: Union[str, Path],
    video_id: str,
) -> List[Path]:
    """Write one crop per sampled frame with a detectable face; raises ``NoFaceFound``."""
    out_dir = Path(out_dir)
    crops: List[Path] = []
    skipped = 0
    for index in sample_frame_indices(len(video), config.frames_per_video):
        frame = video.read(index)
        faces = detector.detect(frame) if frame is not None else []
        if not faces:
            skipped += 1
            continue
        face = max(faces, key=lambda f: f.area)
        box = face.box
        if config.alignment:
            frame, box = align_face(frame, face)
        crop = crop_face(frame, box, config.bbox_margin, config.crop_size)
        name = f"{video_id.replace('/', '_')}_{index:05d}.{config.output_format}"
        crops.append(save_crop(crop, out_dir / name))
    if skipped:
        logger.debug("Video %s: %d sampled frames without a face", video_id, skipped)
    if not crops:
        raise NoFaceFound(f"no face found in any sampled frame of {video_id}")
    return crops


@dataclass
class VideoJob:
    video_id: str
    label: str
    source_id: str
    generator: str
    split: str
    dataset: str
    year: int
    video: VideoSource = field(repr=False)


def preprocess_videos(
    jobs: Sequence[VideoJob],
    config: PreprocessConfig,
    out_dir: Union[str, Path],
    *,
    name: str,
    workers: int = 1,
) -> DatasetManifest:
    """Preprocess many videos in parallel; failed videos are excluded and tallied.

    A video fails when no sampled frame has a face, when it has no frames, or
    when it cannot be read. Each worker thread builds its own detector.
    """
    get_detector(config.detector)
    out_dir = Path(out_dir)
    local = threading.local()

    def _run(job: VideoJob):
        if not hasattr(local, "detector"):
            local.detector = get_detector(config.detector)
        try:
            if len(job.video) == 0:
                raise ValueError(f"video {job.video_id} has no frames")
            crops = preprocess_video(job.video, config, local.detector, out_dir / "crops", job.video_id)
        except NoFaceFound as exc:
            return job, None, str(exc)
        except (ValueError, OSError, cv2.error) as exc:
            logger.warning("Video %s could not be preprocessed: %s", job.video_id, exc)
            return job, None, f"{type(exc).__name__}: {exc}"
        return job, crops, None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(tqdm(pool.map(_run, jobs), total=len(jobs), desc="preprocess", disable=None))

    records: List[VideoRecord] = []
    excluded: Dict[str, str] = {}
    for job, crops, error in results:
        if crops is None:
            excluded[job.video_id] = error or "no face"
            continue
        records.append(
            VideoRecord(
                video_id=job.video_id,
                label=job.label,
                source_id=job.source_id,
                generator=job.generator,
                frame_paths=[str(p.resolve()) for p in crops],
                split=job.split,
                dataset=job.dataset,
                year=job.year,
            )
        )
    if excluded:
        logger.warning("Excluded %d of %d videos", len(excluded), len(jobs))
    return DatasetManifest(
        name=name,
        preprocessing_fingerprint=config.fingerprint(),
        records=records,
        excluded=excluded,
    )


__all__ = [
    "Face",
    "FaceDetector",
    "register_detector",
    "get_detector",
    "StubDetector",
    "MtcnnDetector",
    "ArrayVideo",
    "VideoFile",
    "FrameDirectory",
    "open_video",
    "sample_frame_indices",
    "align_face",
    "similarity_to_canonical",
    "margin_box",
    "crop_face",
    "preprocess_video",
    "VideoJob",
    "preprocess_videos",
]
