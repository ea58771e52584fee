"""Gesture samples, preprocessing, augmentation, splitting and the synthetic generator.

Pipeline order: normalize -> flip (whole set) -> split -> rotate / brighten (train only).
Manifests hold lightweight :class:`SampleRecord` rows; a record's ``transforms``
tuple is its lineage, so derived samples are materialized lazily from the
original they descend from.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

import cv2
import numpy as np
from PIL import Image
from scipy import ndimage

from . import CLASS_NAMES
from .featurestreams import (
    HAND_WIDTH,
    KEYPOINT_WIDTH,
    LEFT_OFFSET,
    RIGHT_OFFSET,
    keypoint_coordinate_masks,
    load_keypoints,
    save_keypoints,
    validate_keypoints,
)

FRAME_SIZE = 128
ROTATION_DEGREES = 10.0
BRIGHTNESS_RANGE = (0.5, 1.5)
BRIGHTNESS_SAMPLING = (0.7, 1.3)

# left/right landmark pairs of the 33-point pose model
POSE_MIRROR_PAIRS = (
    (1, 4), (2, 5), (3, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16),
    (17, 18), (19, 20), (21, 22), (23, 24), (25, 26), (27, 28), (29, 30), (31, 32),
)


class DataError(ValueError):
    pass


@dataclass
class GestureSample:
    frames: np.ndarray  # (T, H, W, C) in [0, 1]
    label: int
    keypoints: np.ndarray | None = None  # (T, 258)
    subject: str = ""
    sample_id: str = ""

    def __post_init__(self):
        if self.keypoints is not None and self.keypoints.shape[-1] == KEYPOINT_WIDTH:
            self.keypoints = snap_x_to_mirror_grid(self.keypoints)

    @property
    def T(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    label: int
    subject: str = ""
    path: str = ""
    root_id: str = ""
    transforms: tuple = ()  # e.g. (("flip",), ("brightness", 1.12))

    @property
    def root(self) -> str:
        return self.root_id or self.sample_id


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    class_names: tuple[str, ...] = CLASS_NAMES

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=int)

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels(), minlength=len(self.class_names))
        return {name: int(c) for name, c in zip(self.class_names, counts)}

    def subset(self, records: Iterable[SampleRecord]) -> "DatasetManifest":
        return DatasetManifest(list(records), self.class_names)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.60
    val: float = 0.20
    test: float = 0.20
    seed: int = 0
    subject_disjoint: bool = False

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0 or not math.isclose(
            self.train + self.val + self.test, 1.0, abs_tol=1e-9
        ):
            raise ValueError(f"split fractions must be nonnegative and sum to 1: {self}")


# ---------------------------------------------------------------------------
# pixels


def to_unit(u8: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 -> [0, 1]. Shared by the generator and the PNG loader so both agree bit for bit."""
    return u8.astype(dtype) / dtype(255)


def resize_normalize(frames, size: int = FRAME_SIZE, dtype=np.float32) -> np.ndarray:
    """Resize raw 0..255 frames to ``size`` x ``size`` and scale to [0, 1].

    Accepts (H, W), (H, W, C), (T, H, W) for grayscale, or (T, H, W, C).
    Downscaling uses area averaging, upscaling bilinear interpolation.
    """
    arr = np.asarray(frames)
    if arr.size == 0 or 0 in arr.shape:
        raise DataError(f"empty frame data of shape {arr.shape}")
    if arr.ndim == 2:
        arr = arr[None, :, :, None]
    elif arr.ndim == 3:
        arr = arr[..., None] if arr.shape[-1] not in (1, 3) else arr[None]
    if arr.ndim != 4:
        raise DataError(f"cannot interpret frames of shape {np.shape(frames)}")
    T, H, W, C = arr.shape
    out = np.empty((T, size, size, C), dtype=dtype)
    shrink = H >= size and W >= size
    interp = cv2.INTER_AREA if shrink else cv2.INTER_LINEAR
    for t in range(T):
        img = cv2.resize(arr[t].astype(np.float32), (size, size), interpolation=interp)
        out[t] = img.reshape(size, size, C)
    return np.clip(out / dtype(255), 0, 1).astype(dtype)


def snap_x_to_mirror_grid(kp: np.ndarray) -> np.ndarray:
    """Round x coordinates to multiples of 2**-(mantissa bits + 1).

    On that grid ``1 - x`` is exact, so mirroring twice restores every bit.
    Values move by at most half a grid step (1.1e-16 in float64).
    """
    if not np.issubdtype(kp.dtype, np.floating):
        return kp
    x, _, _, _ = keypoint_coordinate_masks()
    scale = kp.dtype.type(2.0 ** (np.finfo(kp.dtype).nmant + 1))
    cols = kp[..., x]
    snapped = np.round(cols * scale) / scale
    if np.array_equal(snapped, cols):
        return kp
    out = kp.copy()
    out[..., x] = snapped
    return out


def _flip_keypoints(kp: np.ndarray) -> np.ndarray:
    out = kp.copy()
    x, _, _, _ = keypoint_coordinate_masks()
    out[:, x] = 1.0 - kp[:, x]
    left = out[:, LEFT_OFFSET:RIGHT_OFFSET].copy()
    out[:, LEFT_OFFSET:RIGHT_OFFSET] = out[:, RIGHT_OFFSET:RIGHT_OFFSET + HAND_WIDTH]
    out[:, RIGHT_OFFSET:] = left
    pose = out[:, :LEFT_OFFSET].reshape(len(kp), 33, 4)
    a, b = np.array(POSE_MIRROR_PAIRS).T
    pose[:, np.r_[a, b]] = pose[:, np.r_[b, a]].copy()
    return out


def horizontal_flip(sample: GestureSample) -> GestureSample:
    """Mirror every frame left/right; keypoints get x -> 1 - x and left/right swaps."""
    frames = np.ascontiguousarray(sample.frames[:, :, ::-1, :])
    kp = None if sample.keypoints is None else _flip_keypoints(sample.keypoints)
    return replace(sample, frames=frames, keypoints=kp)


def rotation_matrix(degrees: float) -> np.ndarray:
    """Clockwise rotation on screen (y axis pointing down), acting on (x, y) column vectors."""
    th = math.radians(degrees)
    return np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])


def rotate_keypoints(kp: np.ndarray, degrees: float = ROTATION_DEGREES) -> np.ndarray:
    """Rotate landmark (x, y) pairs about (0.5, 0.5); results are clipped to the frame."""
    R = rotation_matrix(degrees)
    out = kp.copy()
    x, y, _, _ = keypoint_coordinate_masks()
    xy = np.stack([kp[:, x] - 0.5, kp[:, y] - 0.5])  # 2, T, P
    rx = R[0, 0] * xy[0] + R[0, 1] * xy[1] + 0.5
    ry = R[1, 0] * xy[0] + R[1, 1] * xy[1] + 0.5
    out[:, x] = np.clip(rx, 0.0, 1.0)
    out[:, y] = np.clip(ry, 0.0, 1.0)
    return out


def rotate_frames(frames: np.ndarray, degrees: float = ROTATION_DEGREES) -> np.ndarray:
    """Clockwise rotation about the image center, bilinear, zero fill outside the source."""
    T, H, W, C = frames.shape
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    # output (row, col) -> source (row, col) is the inverse (counter-clockwise) map
    inv = np.array([[c, -s], [s, c]])
    center = np.array([(H - 1) / 2.0, (W - 1) / 2.0])
    offset = center - inv @ center
    out = np.empty_like(frames)
    for t in range(T):
        for ch in range(C):
            out[t, :, :, ch] = ndimage.affine_transform(
                frames[t, :, :, ch], inv, offset=offset, order=1, mode="constant", cval=0.0
            )
    return np.clip(out, 0, 1)


def rotate10(sample: GestureSample, degrees: float = ROTATION_DEGREES) -> GestureSample:
    kp = None if sample.keypoints is None else rotate_keypoints(sample.keypoints, degrees)
    return replace(sample, frames=rotate_frames(sample.frames, degrees), keypoints=kp)


def adjust_brightness(sample: GestureSample, factor: float) -> GestureSample:
    lo, hi = BRIGHTNESS_RANGE
    if not lo <= factor <= hi:
        raise ValueError(f"brightness factor {factor} outside [{lo}, {hi}]")
    frames = np.clip(sample.frames * sample.frames.dtype.type(factor), 0, 1)
    return replace(sample, frames=frames.astype(sample.frames.dtype, copy=False))


TRANSFORMS: dict[str, Callable] = {
    "flip": lambda s: horizontal_flip(s),
    "rotate": lambda s, deg=ROTATION_DEGREES: rotate10(s, deg),
    "brightness": lambda s, f: adjust_brightness(s, f),
}


def apply_transforms(sample: GestureSample, transforms: tuple) -> GestureSample:
    for name, *args in transforms:
        sample = TRANSFORMS[name](sample, *args)
    return sample


# ---------------------------------------------------------------------------
# splitting and augmentation


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(manifest: DatasetManifest, spec: SplitSpec = SplitSpec()):
    """Stratified, seeded train/val/test split.

    Test takes ``test`` of each class, then validation takes its share of the
    remainder (``val / (train + val)``), reproducing the 80/20 then 75/25
    procedure. Records sharing a root (an original and its flipped copy)
    always land in the same split.
    """
    rng = np.random.default_rng(spec.seed)
    key = (lambda r: r.subject) if spec.subject_disjoint else (lambda r: r.root)
    groups: dict[str, list[SampleRecord]] = {}
    for rec in manifest.records:
        groups.setdefault(key(rec), []).append(rec)

    if spec.subject_disjoint:
        strata = {0: sorted(groups)}
    else:
        strata: dict[int, list[str]] = {}
        for k, recs in groups.items():
            strata.setdefault(recs[0].label, []).append(k)

    parts = {"train": [], "val": [], "test": []}
    for label in sorted(strata):
        keys = sorted(strata[label])
        if len(keys) < 3:
            name = manifest.class_names[label] if not spec.subject_disjoint else "subjects"
            raise DataError(f"{name!r} has {len(keys)} groups, fewer than the 3 splits")
        keys = [keys[i] for i in rng.permutation(len(keys))]
        n = len(keys)
        n_test = _round_half_up(n * spec.test)
        n_val = _round_half_up((n - n_test) * spec.val / (spec.train + spec.val))
        for name, chunk in (("test", keys[:n_test]), ("val", keys[n_test:n_test + n_val]),
                            ("train", keys[n_test + n_val:])):
            for k in chunk:
                parts[name].extend(groups[k])
    order = {r.sample_id: i for i, r in enumerate(manifest.records)}
    return tuple(
        manifest.subset(sorted(parts[name], key=lambda r: order[r.sample_id]))
        for name in ("train", "val", "test")
    )


@dataclass(frozen=True)
class AugmentConfig:
    flip: bool = False
    rotate: bool = False
    brightness: bool = False
    seed: int = 0

    @classmethod
    def from_names(cls, names: str | Iterable[str], seed: int = 0):
        if isinstance(names, str):
            names = [n.strip() for n in names.split(",") if n.strip()]
        names = set(names)
        unknown = names - {"flip", "rotate", "brightness"}
        if unknown:
            raise ValueError(f"unknown augmentations: {sorted(unknown)}")
        return cls("flip" in names, "rotate" in names, "brightness" in names, seed)


def sample_seed(seed: int, sample_id: str) -> np.random.Generator:
    """Counter-style generator keyed by (seed, sample id), independent of processing order."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode())])


def add_flipped(manifest: DatasetManifest) -> DatasetManifest:
    """One mirrored derivative per record; originals kept."""
    out = list(manifest.records)
    for rec in manifest.records:
        out.append(replace(rec, sample_id=rec.sample_id + "+flip", root_id=rec.root,
                           transforms=rec.transforms + (("flip",),)))
    return manifest.subset(out)


def augment_training_set(train: DatasetManifest, config: AugmentConfig) -> DatasetManifest:
    """Add a rotated and/or a brightened derivative of every training record."""
    out = list(train.records)
    for rec in train.records:
        if config.rotate:
            out.append(replace(rec, sample_id=rec.sample_id + "+rot", root_id=rec.root,
                               transforms=rec.transforms + (("rotate", ROTATION_DEGREES),)))
        if config.brightness:
            lo, hi = BRIGHTNESS_SAMPLING
            factor = float(sample_seed(config.seed, rec.sample_id + "+bright").uniform(lo, hi))
            out.append(replace(rec, sample_id=rec.sample_id + "+bright", root_id=rec.root,
                               transforms=rec.transforms + (("brightness", factor),)))
    return train.subset(out)


def build_splits(manifest: DatasetManifest, spec: SplitSpec, aug: AugmentConfig):
    """Flip the whole set, split, then augment the training split only."""
    if aug.flip:
        manifest = add_flipped(manifest)
    train, val, test = split_dataset(manifest, spec)
    train = augment_training_set(train, aug)
    return train, val, test


def leakage_check(train: DatasetManifest, val: DatasetManifest, test: DatasetManifest) -> None:
    """Raise if any lineage root appears in more than one split."""
    roots = [{r.root for r in m.records} for m in (train, val, test)]
    for (a, b), name in (((0, 2), "train/test"), ((1, 2), "val/test"), ((0, 1), "train/val")):
        shared = roots[a] & roots[b]
        if shared:
            raise DataError(f"{name} share {len(shared)} lineage roots, e.g. {sorted(shared)[:3]}")


def split_report(train, val, test) -> dict:
    return {
        name: {"total": len(m), "per_class": m.class_counts()}
        for name, m in (("train", train), ("val", val), ("test", test))
    }


class SampleStore:
    """Materializes records into samples from a mapping of originals (root id -> sample)."""

    def __init__(self, originals: Mapping[str, GestureSample]):
        self.originals = originals

    def __getitem__(self, rec: SampleRecord) -> GestureSample:
        base = self.originals[rec.root]
        return apply_transforms(replace(base, sample_id=rec.sample_id, label=rec.label),
                                rec.transforms)

    def load(self, manifest: DatasetManifest) -> list[GestureSample]:
        return [self[r] for r in manifest.records]


# ---------------------------------------------------------------------------
# synthetic gestures


def _blob(size, cx, cy, sigma):
    coords = (np.arange(size) + 0.5) / size
    gx = np.exp(-0.5 * ((coords - cx) / sigma) ** 2)
    gy = np.exp(-0.5 * ((coords - cy) / sigma) ** 2)
    return np.outer(gy, gx)


# hand landmark layout in units of the hand radius: wrist, then 5 fingers x 4 joints
_HAND_TEMPLATE = np.array(
    [[0.0, 0.9]]
    + [[(f - 2) * 0.35 + 0.12 * (f - 2) * j / 4, 0.5 - 0.35 * j] for f in range(5) for j in range(4)]
)
_THUMB_TIP = 4


def _hand_points(cx, cy, radius, thumb=0.0, rng=None, jitter=0.0):
    pts = np.empty((21, 3))
    pts[:, 0] = cx + radius * _HAND_TEMPLATE[:, 0]
    pts[:, 1] = cy + radius * _HAND_TEMPLATE[:, 1]
    pts[:, 2] = 0.0
    if thumb:
        pts[_THUMB_TIP, 0] = cx
        pts[_THUMB_TIP, 1] = cy - thumb * 2.2 * radius
    if rng is not None and jitter:
        pts[:, :2] += rng.normal(0, jitter, (21, 2))
    return pts


def _pose_points(rng):
    base = np.empty((33, 4))
    xs = np.linspace(0.35, 0.65, 33)
    base[:, 0] = xs
    base[:, 1] = 0.55 + 0.3 * np.abs(np.sin(np.arange(33)))
    base[:, 2] = 0.0
    base[:, 3] = 1.0
    base[:, :2] += rng.normal(0, 0.005, (33, 2))
    return base


def _trajectory(label, T, rng):
    """Per-frame (cx, cy, radius, thumb) for the moving hand of class ``label``."""
    t = np.linspace(0.0, 1.0, T)
    amp = rng.uniform(0.22, 0.3)
    base_x, base_y = 0.5 + rng.uniform(-0.05, 0.05, 2)
    r0 = rng.uniform(0.07, 0.09)
    cx = np.full(T, base_x)
    cy = np.full(T, base_y)
    rad = np.full(T, r0)
    thumb = np.zeros(T)
    name = CLASS_NAMES[label]
    if name == "Left":
        cx = base_x + amp * (1 - 2 * t)
    elif name == "Right":
        cx = base_x - amp * (1 - 2 * t)
    elif name == "Up":
        cy = base_y + amp * (1 - 2 * t)
    elif name == "Down":
        cy = base_y - amp * (1 - 2 * t)
    elif name in ("Hi", "Bye"):
        sign = 1.0 if name == "Hi" else -1.0
        cy = np.full(T, base_y - 0.2)
        cx = base_x + sign * amp * np.sin(2 * np.pi * t)
    elif name == "Open":
        rad = r0 * (0.6 + 1.1 * t)
    elif name == "Close":
        rad = r0 * (1.7 - 1.1 * t)
    elif name == "Thumbs up":
        thumb = np.ones(T)
    elif name == "Thumbs down":
        thumb = -np.ones(T)
    return cx, cy, rad, thumb


def synthesize_sample(label: int, T: int, size: int, channels: int, rng, sample_id="", subject=""):
    cx, cy, rad, thumb = _trajectory(label, T, rng)
    background = rng.uniform(0.0, 0.15)
    gain = rng.uniform(0.7, 1.0)
    frames = np.empty((T, size, size, channels))
    for t in range(T):
        img = _blob(size, cx[t], cy[t], rad[t])
        if thumb[t]:
            ty = cy[t] - thumb[t] * 1.6 * rad[t]
            img = np.maximum(img, _blob(size, cx[t], ty, rad[t] * 0.45))
        img = background + gain * img + rng.normal(0, 0.03, (size, size))
        frames[t] = img[:, :, None]
    u8 = np.clip(np.rint(frames * 255), 0, 255).astype(np.uint8)

    kp = np.zeros((T, KEYPOINT_WIDTH))
    pose = _pose_points(rng)
    moving_right = CLASS_NAMES[label] != "Right"  # "Right" is performed with the left hand
    rest = _hand_points(0.2 if moving_right else 0.8, 0.85, 0.06)
    for t in range(T):
        kp[t, :LEFT_OFFSET] = pose.reshape(-1)
        active = _hand_points(cx[t], cy[t], rad[t], thumb[t], rng, 0.003)
        right_block, left_block = (active, rest) if moving_right else (rest, active)
        kp[t, LEFT_OFFSET:RIGHT_OFFSET] = left_block.reshape(-1)
        kp[t, RIGHT_OFFSET:] = right_block.reshape(-1)
    x, y, _, _ = keypoint_coordinate_masks()
    kp[:, x] = np.clip(kp[:, x], 0, 1)
    kp[:, y] = np.clip(kp[:, y], 0, 1)
    return GestureSample(to_unit(u8), label, kp, subject, sample_id), u8


def synthesize_gestures(K: int = 10, n_per_class: int = 20, T: int = 30, seed: int = 0,
                        size: int = FRAME_SIZE, channels: int = 1, n_subjects: int = 5):
    """Procedural gesture set. Returns ``(manifest, {sample_id: GestureSample})``."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    if not 2 <= K <= len(CLASS_NAMES):
        raise ValueError(f"K must lie in [2, {len(CLASS_NAMES)}]")
    records, samples = [], {}
    for label in range(K):
        for i in range(n_per_class):
            sid = f"{_slug(CLASS_NAMES[label])}_{i:04d}"
            subject = f"s{i % n_subjects:02d}"
            rng = sample_seed(seed, sid)
            sample, _ = synthesize_sample(label, T, size, channels, rng, sid, subject)
            samples[sid] = sample
            records.append(SampleRecord(sid, label, subject))
    return DatasetManifest(records, CLASS_NAMES[:K]), samples


# ---------------------------------------------------------------------------
# on-disk layout: <root>/<class>/<sample_id>/frame_0000.png (+ keypoints.kp), manifest.tsv


def _slug(name: str) -> str:
    return name.replace(" ", "_")


def write_dataset(root, manifest: DatasetManifest, samples: Mapping[str, GestureSample]) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in manifest.records:
        s = samples[rec.sample_id]
        rel = Path(_slug(manifest.class_names[rec.label])) / rec.sample_id
        d = root / rel
        d.mkdir(parents=True, exist_ok=True)
        u8 = np.clip(np.rint(s.frames * 255), 0, 255).astype(np.uint8)
        for t in range(s.T):
            img = u8[t, :, :, 0] if u8.shape[-1] == 1 else u8[t]
            Image.fromarray(img).save(d / f"frame_{t:04d}.png", optimize=False)
        if s.keypoints is not None:
            save_keypoints(d / "keypoints.kp", s.keypoints)
        rows.append((rel.as_posix(), manifest.class_names[rec.label], rec.subject))
    with open(root / "manifest.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("path", "label", "subject"))
        w.writerows(rows)
    return root


def read_manifest(root, class_names=CLASS_NAMES) -> DatasetManifest:
    root = Path(root)
    path = root / "manifest.tsv"
    if not path.exists():
        raise DataError(f"no manifest.tsv under {root}")
    index = {name: i for i, name in enumerate(class_names)}
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None or not {"path", "label", "subject"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns path, label, subject")
        for row in reader:
            if row["label"] not in index:
                raise DataError(f"{path}: unknown class {row['label']!r}")
            sid = Path(row["path"]).name
            records.append(SampleRecord(sid, index[row["label"]], row["subject"], row["path"]))
    if not records:
        raise DataError(f"{path}: manifest is empty")
    used = sorted({r.label for r in records})
    K = used[-1] + 1
    return DatasetManifest(records, tuple(class_names[:K]))


def load_sample_dir(d, label: int = -1, subject: str = "", require_keypoints: bool = False) -> GestureSample:
    d = Path(d)
    files = sorted(d.glob("frame_*.png"))
    if not files:
        raise DataError(f"{d}: no frame_*.png files")
    imgs = [np.asarray(Image.open(f)) for f in files]
    u8 = np.stack(imgs)
    if u8.ndim == 3:
        u8 = u8[..., None]
    kp = None
    kp_path = d / "keypoints.kp"
    if kp_path.exists():
        kp = load_keypoints(kp_path).points
        if len(kp) != len(files):
            raise DataError(f"{d}: {len(files)} frames but {len(kp)} keypoint rows")
    elif require_keypoints:
        raise DataError(f"{d}: keypoints.kp missing")
    return GestureSample(to_unit(u8), label, kp, subject, d.name)


def load_dataset(root, class_names=CLASS_NAMES):
    """Returns ``(manifest, {sample_id: GestureSample})`` read from the directory layout."""
    root = Path(root)
    manifest = read_manifest(root, class_names)
    samples = {
        r.sample_id: load_sample_dir(root / r.path, r.label, r.subject) for r in manifest.records
    }
    return manifest, samples


def per_frame_centroid_accuracy(train: list[GestureSample], test: list[GestureSample], K: int) -> float:
    """Nearest-centroid classification of individual frames from raw pixels."""
    dim = train[0].frames[0].size
    sums = np.zeros((K, dim))
    counts = np.zeros(K)
    for s in train:
        sums[s.label] += s.frames.reshape(s.T, -1).sum(0)
        counts[s.label] += s.T
    centroids = sums / np.maximum(counts, 1)[:, None]
    correct = total = 0
    for s in test:
        f = s.frames.reshape(s.T, -1).astype(np.float64)
        d = ((f[:, None, :] - centroids[None]) ** 2).sum(-1)
        correct += int((np.argmin(d, axis=1) == s.label).sum())
        total += s.T
    return correct / total
