"""Per-frame feature producers for the three streams.

* :class:`TinyCNN` is a small time-distributed convolutional extractor
  (conv3x3 -> maxpool2 -> relu, twice, then a dense map to ``D`` features).
* ``load_features`` / ``save_features`` handle precomputed per-frame features.
* ``validate_keypoints`` enforces the 258-wide landmark layout.
* ``subsample_frames`` picks the anchor frames.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .linalg import ShapeError, Tensor, glorot_uniform

ANCHOR_INDICES = (0, 7, 15, 22, 29)

POSE_POINTS, POSE_DIMS = 33, 4
HAND_POINTS, HAND_DIMS = 21, 3
POSE_WIDTH = POSE_POINTS * POSE_DIMS  # 132
HAND_WIDTH = HAND_POINTS * HAND_DIMS  # 63
POSE_OFFSET = 0
LEFT_OFFSET = POSE_WIDTH  # 132
RIGHT_OFFSET = POSE_WIDTH + HAND_WIDTH  # 195
KEYPOINT_WIDTH = POSE_WIDTH + 2 * HAND_WIDTH  # 258


class FeatureFileError(ValueError):
    pass


class KeypointLayoutError(ValueError):
    pass


@dataclass
class FrameFeatureSequence:
    features: Tensor  # (T, D)
    source: str = "tiny_cnn"

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ShapeError(f"feature sequence must be (T>=1, D), got {self.features.shape}")
        if self.source not in ("tiny_cnn", "precomputed"):
            raise ValueError(f"unknown feature source {self.source!r}")

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]


@dataclass
class KeypointSequence:
    points: Tensor  # (T, 258)

    @property
    def pose(self) -> Tensor:
        return self.points[:, POSE_OFFSET:LEFT_OFFSET]

    @property
    def left_hand(self) -> Tensor:
        return self.points[:, LEFT_OFFSET:RIGHT_OFFSET]

    @property
    def right_hand(self) -> Tensor:
        return self.points[:, RIGHT_OFFSET:]


def keypoint_coordinate_masks():
    """Boolean masks over the 258 columns selecting x, y, z and visibility entries."""
    cols = np.arange(KEYPOINT_WIDTH)
    pose = cols < LEFT_OFFSET
    comp = np.where(pose, cols % POSE_DIMS, (cols - LEFT_OFFSET) % HAND_DIMS)
    x = comp == 0
    y = comp == 1
    z = comp == 2
    vis = pose & (comp == 3)
    return x, y, z, vis


def validate_keypoints(points) -> KeypointSequence:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != KEYPOINT_WIDTH:
        raise KeypointLayoutError(
            f"keypoint rows must have width {KEYPOINT_WIDTH} "
            f"(pose {POSE_WIDTH} + left {HAND_WIDTH} + right {HAND_WIDTH}), got shape {arr.shape}"
        )
    if arr.shape[0] < 1:
        raise KeypointLayoutError("keypoint sequence is empty")
    if not np.all(np.isfinite(arr)):
        raise KeypointLayoutError("keypoints contain non-finite values")
    x, y, _, vis = keypoint_coordinate_masks()
    for name, mask in (("x", x), ("y", y), ("visibility", vis)):
        vals = arr[:, mask]
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise KeypointLayoutError(
                f"{name} values must lie in [0, 1], found range [{vals.min()}, {vals.max()}]"
            )
    return KeypointSequence(arr)


def subsample_frames(seq, indices=ANCHOR_INDICES):
    """Rows ``indices`` of ``seq`` along its time axis (axis 0, or 1 for batched input)."""
    seq = np.asarray(seq)
    n = len(seq)
    bad = [i for i in indices if not 0 <= i < n]
    if bad:
        raise IndexError(f"anchor indices {bad} out of range for a sequence of length {n}")
    return seq[list(indices)]


# ---------------------------------------------------------------------------
# feature and keypoint files

_FEAT_HEADER = re.compile(r"^TRISTREAM-FEAT v1 T=(\d+) D=(\d+)(?: enc=(text|f64le))?$")
_KP_HEADER = re.compile(r"^TRISTREAM-KP v1 T=(\d+)$")


def save_features(path, features, binary: bool = False) -> None:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeError(f"features must be (T, D), got {feats.shape}")
    T, D = feats.shape
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"TRISTREAM-FEAT v1 T={T} D={D} enc=f64le\n".encode())
            fh.write(feats.astype("<f8").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(f"TRISTREAM-FEAT v1 T={T} D={D}\n")
            for row in feats:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _read_rows(lines, T, width, path):
    rows = []
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise FeatureFileError(f"{path}:{lineno}: {exc}") from None
        if len(row) != width:
            raise FeatureFileError(f"{path}:{lineno}: expected {width} values, found {len(row)}")
        rows.append(row)
    if len(rows) != T:
        raise FeatureFileError(f"{path}: header declares T={T} rows, found {len(rows)}")
    arr = np.array(rows, dtype=np.float64).reshape(T, width)
    if not np.all(np.isfinite(arr)):
        raise FeatureFileError(f"{path}: non-finite values")
    return arr


def load_features(path) -> FrameFeatureSequence:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    header = raw[: nl if nl >= 0 else len(raw)].decode("ascii", errors="replace").strip()
    m = _FEAT_HEADER.match(header)
    if not m:
        raise FeatureFileError(f"{path}: malformed header {header!r}")
    T, D = int(m.group(1)), int(m.group(2))
    if T < 1 or D < 1:
        raise FeatureFileError(f"{path}: header declares empty shape T={T} D={D}")
    body = raw[nl + 1:] if nl >= 0 else b""
    if m.group(3) == "f64le":
        n = len(body) // 8
        if len(body) != T * D * 8:
            raise FeatureFileError(
                f"{path}: header declares T={T} rows, found {n / D:g} rows of binary data"
            )
        arr = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(T, D)
        if not np.all(np.isfinite(arr)):
            raise FeatureFileError(f"{path}: non-finite values")
    else:
        arr = _read_rows(body.decode().splitlines(), T, D, path)
    return FrameFeatureSequence(arr, source="precomputed")


def save_keypoints(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != KEYPOINT_WIDTH:
        raise KeypointLayoutError(f"keypoints must be (T, {KEYPOINT_WIDTH}), got {pts.shape}")
    with open(path, "w") as fh:
        fh.write(f"TRISTREAM-KP v1 T={pts.shape[0]}\n")
        for row in pts:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_keypoints(path) -> KeypointSequence:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not _KP_HEADER.match(lines[0].strip()):
        raise FeatureFileError(f"{path}: malformed keypoint header")
    T = int(_KP_HEADER.match(lines[0].strip()).group(1))
    return validate_keypoints(_read_rows(lines[1:], T, KEYPOINT_WIDTH, path))


# ---------------------------------------------------------------------------
# TinyCNN


def _im2col(xp, k=3):
    """(N, H+2, W+2, C) padded input -> (N*H*W, k*k*C) patch matrix."""
    N, Hp, Wp, C = xp.shape
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # N, H, W, C, k, k
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, k * k * C)


def _col2im(dcols, shape, k=3):
    N, Hp, Wp, C = shape
    H, W = Hp - k + 1, Wp - k + 1
    d = dcols.reshape(N, H, W, k, k, C)
    dx = np.zeros(shape, dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + H, j:j + W, :] += d[:, :, :, i, j, :]
    return dx


def conv3x3_forward(x, w, b):
    """'Same' 3x3 convolution. x: (N, H, W, Cin), w: (Cout, 3, 3, Cin).

    Returns the output and the patch matrix, which the backward pass reuses.
    """
    N, H, W, _ = x.shape
    xp = np.zeros((N, H + 2, W + 2, x.shape[3]), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    cols = _im2col(xp)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(N, H, W, w.shape[0]), (cols, xp.shape)


def conv3x3_backward(saved, w, dout, need_dx=True):
    cols, padded_shape = saved
    Cout = dout.shape[-1]
    d2 = dout.reshape(-1, Cout)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(0)
    if not need_dx:
        return dw, db, None
    dx = _col2im(d2 @ w.reshape(Cout, -1), padded_shape)[:, 1:-1, 1:-1, :]
    return dw, db, dx


def maxpool2_forward(x):
    """2x2 max-pool, stride 2. Returns (pooled, window position of the max).

    Positions are 0..3 in row-major window order; ties go to the lowest position.
    """
    corners = (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])
    pooled = np.maximum(np.maximum(corners[0], corners[1]), np.maximum(corners[2], corners[3]))
    idx = np.full(pooled.shape, 3, dtype=np.uint8)
    for k in (2, 1, 0):
        idx[corners[k] == pooled] = k
    return pooled, idx


def maxpool2_backward(idx, dout, shape):
    dx = np.zeros(shape, dtype=dout.dtype)
    for k, (r, c) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dx[:, r::2, c::2] = np.where(idx == k, dout, 0)
    return dx


class TinyCNN:
    """Two conv stages (8 then 16 channels) and a dense projection to ``out_dim`` features."""

    def __init__(self, params: dict[str, Tensor], frame_size: int, channels: int):
        self.params = params
        self.frame_size = frame_size
        self.channels = channels

    @classmethod
    def init(cls, rng, frame_size: int = 128, channels: int = 1, out_dim: int = 64,
             widths=(8, 16), dtype=np.float64):
        if frame_size % 4:
            raise ValueError(f"frame size {frame_size} must be divisible by 4")
        c1, c2 = widths
        flat = (frame_size // 4) ** 2 * c2
        p = {
            "conv1.W": (rng.uniform(-1, 1, (c1, 3, 3, channels)) * np.sqrt(6.0 / (9 * channels + 9 * c1))),
            "conv1.b": np.zeros(c1),
            "conv2.W": (rng.uniform(-1, 1, (c2, 3, 3, c1)) * np.sqrt(6.0 / (9 * c1 + 9 * c2))),
            "conv2.b": np.zeros(c2),
            "dense.W": glorot_uniform(rng, (out_dim, flat)),
            "dense.b": np.zeros(out_dim),
        }
        return cls({k: v.astype(dtype) for k, v in p.items()}, frame_size, channels)

    @property
    def out_dim(self) -> int:
        return self.params["dense.W"].shape[0]

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + k: v for k, v in self.params.items()}

    def forward(self, frames: Tensor):
        """frames (..., H, W, C) -> features (..., D); every frame mapped independently."""
        frames = np.asarray(frames)
        if frames.ndim < 3 or frames.shape[-3:] != (self.frame_size, self.frame_size, self.channels):
            raise ShapeError(
                f"expected frames of shape (..., {self.frame_size}, {self.frame_size}, "
                f"{self.channels}), got {frames.shape}"
            )
        lead = frames.shape[:-3]
        p = self.params
        x = frames.reshape((-1,) + frames.shape[-3:]).astype(p["conv1.W"].dtype, copy=False)
        y1, s1 = conv3x3_forward(x, p["conv1.W"], p["conv1.b"])
        q1, i1 = maxpool2_forward(y1)
        a1 = np.maximum(q1, 0)
        y2, s2 = conv3x3_forward(a1, p["conv2.W"], p["conv2.b"])
        q2, i2 = maxpool2_forward(y2)
        a2 = np.maximum(q2, 0)
        flat = a2.reshape(a2.shape[0], -1)
        out = flat @ p["dense.W"].T + p["dense.b"]
        cache = {"lead": lead, "s1": s1, "y1": y1.shape, "i1": i1, "q1": q1,
                 "s2": s2, "y2": y2.shape, "i2": i2, "q2": q2, "flat": flat, "id": id(self)}
        return out.reshape(lead + (self.out_dim,)), cache

    def backward(self, cache, grad_features: Tensor, need_input_grad: bool = False):
        """Returns ``(param grads, grad_frames or None)``."""
        if cache.get("id") != id(self):
            raise ValueError("cache was produced by a different TinyCNN instance")
        p = self.params
        g = grad_features.reshape(-1, self.out_dim)
        if g.shape[0] != cache["flat"].shape[0]:
            raise ShapeError(f"gradient for {g.shape[0]} frames, cache holds {cache['flat'].shape[0]}")
        grads = {"dense.W": g.T @ cache["flat"], "dense.b": g.sum(0)}
        da2 = (g @ p["dense.W"]).reshape(cache["q2"].shape)
        dq2 = da2 * (cache["q2"] > 0)
        dy2 = maxpool2_backward(cache["i2"], dq2, cache["y2"])
        grads["conv2.W"], grads["conv2.b"], da1 = conv3x3_backward(cache["s2"], p["conv2.W"], dy2)
        dq1 = da1 * (cache["q1"] > 0)
        dy1 = maxpool2_backward(cache["i1"], dq1, cache["y1"])
        grads["conv1.W"], grads["conv1.b"], dx = conv3x3_backward(
            cache["s1"], p["conv1.W"], dy1, need_dx=need_input_grad)
        if need_input_grad:
            return grads, dx.reshape(cache["lead"] + dx.shape[1:])
        return grads, None


def tinycnn_forward(cnn: TinyCNN, frames: Tensor):
    feats, cache = cnn.forward(frames)
    if feats.ndim == 2:
        return FrameFeatureSequence(feats, "tiny_cnn"), cache
    return feats, cache


def tinycnn_backward(cnn: TinyCNN, cache, grad_features):
    return cnn.backward(cache, grad_features, need_input_grad=True)


def kink_margin(cnn: TinyCNN, frames: Tensor) -> float:
    """Smallest distance of any max-pool or relu decision from its switching point.

    Central differences are only meaningful when this exceeds the change a
    parameter perturbation can cause in the pre-pool activations.
    """
    p = cnn.params
    x = np.asarray(frames).reshape((-1,) + np.shape(frames)[-3:]).astype(np.float64)
    margins = []
    for stage in (1, 2):
        y, _ = conv3x3_forward(x, p[f"conv{stage}.W"], p[f"conv{stage}.b"])
        corners = np.stack([y[:, 0::2, 0::2], y[:, 0::2, 1::2], y[:, 1::2, 0::2], y[:, 1::2, 1::2]])
        top2 = np.sort(corners, axis=0)[-2:]
        margins.append(float((top2[1] - top2[0]).min()))
        margins.append(float(np.abs(top2[1]).min()))
        x = np.maximum(top2[1], 0)
    return min(margins)
