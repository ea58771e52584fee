"""Three-stream hybrid network: two pixel streams, one keypoint stream, concatenation fusion.

Stream 1: backbone A -> {LSTM -> GRU -> dense} and {gather anchors -> 3 x LSTM}
Stream 2: backbone B -> {GRU -> GRU -> dropout -> dense} and {gather anchors -> 3 x LSTM}
Stream 3: keypoints -> LSTM x 3 -> GRU x 2
Head:     dense(concat of enabled streams) -> softmax

Every recurrent branch is summarised by its final hidden state; branch
summaries are concatenated within a stream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .featurestreams import ANCHOR_INDICES, KEYPOINT_WIDTH, TinyCNN
from .linalg import ShapeError, Tensor, glorot_uniform, softmax
from .recurrent import RecurrentStack, make_stack

STREAMS = (1, 2, 3)


class StaleCacheError(RuntimeError):
    pass


class ModalityError(ValueError):
    pass


@dataclass(frozen=True)
class ThreeStreamConfig:
    T: int = 30
    anchor_indices: tuple[int, ...] = ANCHOR_INDICES
    frame_size: int = 128
    channels: int = 1
    D1: int = 64
    D2: int = 64
    hidden: int = 64
    dense_width: int = 64
    dropout_rate: float = 0.3
    K: int = 10
    enabled_streams: tuple[int, ...] = STREAMS
    backbone: str = "tinycnn"  # or "precomputed"
    reset_in_candidate: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "anchor_indices", tuple(int(i) for i in self.anchor_indices))
        object.__setattr__(self, "enabled_streams", tuple(sorted({int(s) for s in self.enabled_streams})))
        a = self.anchor_indices
        if not a or any(x >= y for x, y in zip(a, a[1:])) or a[0] < 0 or a[-1] >= self.T:
            raise ValueError(f"anchor indices {a} must be strictly increasing and lie in [0, {self.T})")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not self.enabled_streams:
            raise ValueError("at least one stream must be enabled")
        if not set(self.enabled_streams) <= set(STREAMS):
            raise ValueError(f"unknown streams in {self.enabled_streams}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.backbone not in ("tinycnn", "precomputed"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        for name in ("T", "frame_size", "channels", "D1", "D2", "hidden", "dense_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def stream_widths(self) -> dict[int, int]:
        return {1: self.dense_width + self.hidden, 2: self.dense_width + self.hidden, 3: self.hidden}

    @property
    def fusion_width(self) -> int:
        return sum(self.stream_widths[s] for s in self.enabled_streams)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ThreeStreamConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise KeyError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Batch:
    """Model inputs with a leading batch axis."""

    frames: Tensor | None = None  # (B, T, H, W, C)
    keypoints: Tensor | None = None  # (B, T, 258)
    features_a: Tensor | None = None  # (B, T, D1), precomputed mode
    features_b: Tensor | None = None  # (B, T, D2), precomputed mode
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        for x in (self.frames, self.keypoints, self.features_a):
            if x is not None:
                return x.shape[0]
        return 0

    @classmethod
    def from_samples(cls, samples, dtype=np.float64) -> "Batch":
        frames = np.stack([s.frames for s in samples]).astype(dtype, copy=False)
        kps = [s.keypoints for s in samples]
        keypoints = None if any(k is None for k in kps) else np.stack(kps).astype(dtype)
        labels = np.array([s.label for s in samples], dtype=int)
        return cls(frames=frames, keypoints=keypoints, labels=labels)


class Dense:
    """Affine map with an optional tanh, acting on row vectors."""

    def __init__(self, W, b, activation: str | None):
        self.W, self.b, self.activation = W, b, activation

    @classmethod
    def init(cls, rng, n_in, n_out, activation=None, dtype=np.float64):
        return cls(glorot_uniform(rng, (n_out, n_in)).astype(dtype), np.zeros(n_out, dtype), activation)

    def named(self, prefix):
        return {prefix + "W": self.W, prefix + "b": self.b}

    def forward(self, x):
        y = x @ self.W.T + self.b
        if self.activation == "tanh":
            y = np.tanh(y)
        return y, (x, y)

    def backward(self, cache, dy, prefix):
        x, y = cache
        if self.activation == "tanh":
            dy = dy * (1.0 - y * y)
        return {prefix + "W": dy.T @ x, prefix + "b": dy.sum(0)}, dy @ self.W


def _last_step_grad(d_summary, T):
    g = np.zeros((d_summary.shape[0], T, d_summary.shape[1]), d_summary.dtype)
    g[:, -1] = d_summary
    return g


class ThreeStreamModel:
    def __init__(self, config: ThreeStreamConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        dt = np.dtype(config.dtype)
        c = config
        h = c.hidden
        # every component is always built so ablated variants keep a full parameter set
        if c.backbone == "tinycnn":
            self.backbone_a = TinyCNN.init(rng, c.frame_size, c.channels, c.D1, dtype=dt)
            self.backbone_b = TinyCNN.init(rng, c.frame_size, c.channels, c.D2, dtype=dt)
        else:
            self.backbone_a = self.backbone_b = None
        self.s1_seq = make_stack(["lstm", "gru"], rng, c.D1, h, dt)
        self.s1_dense = Dense.init(rng, h, c.dense_width, "tanh", dt)
        self.s1_gather = make_stack(["lstm"] * 3, rng, c.D1, h, dt)
        self.s2_seq = make_stack(["gru", "gru"], rng, c.D2, h, dt)
        self.s2_dense = Dense.init(rng, h, c.dense_width, "tanh", dt)
        self.s2_gather = make_stack(["lstm"] * 3, rng, c.D2, h, dt)
        self.s3_seq = make_stack(["lstm"] * 3 + ["gru"] * 2, rng, KEYPOINT_WIDTH, h, dt)
        self.head = Dense.init(rng, c.fusion_width, c.K, None, dt)
        if not c.reset_in_candidate:
            for stack in self._stacks().values():
                for layer in stack.layers:
                    if layer.kind == "gru":
                        layer.reset_in_candidate = False
        self._forward_serial = 0
        self.audit()

    # ------------------------------------------------------------------ structure

    def _stacks(self) -> dict[str, RecurrentStack]:
        return {"s1.seq.": self.s1_seq, "s1.gather.": self.s1_gather, "s2.seq.": self.s2_seq,
                "s2.gather.": self.s2_gather, "s3.seq.": self.s3_seq}

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        if self.backbone_a is not None:
            out.update(self.backbone_a.named("s1.cnn."))
            out.update(self.backbone_b.named("s2.cnn."))
        for prefix, stack in self._stacks().items():
            out.update(stack.named(prefix))
        out.update(self.s1_dense.named("s1.dense."))
        out.update(self.s2_dense.named("s2.dense."))
        out.update(self.head.named("head."))
        return out

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.named_parameters().values()))

    def stream_of(self, name: str) -> int | None:
        return int(name[1]) if name.startswith("s") and name[1].isdigit() else None

    def audit(self) -> None:
        """Check that every declared output width feeds a matching input width."""
        c = self.config
        checks = [
            ("s1 backbone -> seq", c.D1, self.s1_seq.input_size),
            ("s1 backbone -> gather", c.D1, self.s1_gather.input_size),
            ("s1 seq -> dense", self.s1_seq.output_size, self.s1_dense.W.shape[1]),
            ("s2 backbone -> seq", c.D2, self.s2_seq.input_size),
            ("s2 backbone -> gather", c.D2, self.s2_gather.input_size),
            ("s2 seq -> dense", self.s2_seq.output_size, self.s2_dense.W.shape[1]),
            ("s3 keypoints -> seq", KEYPOINT_WIDTH, self.s3_seq.input_size),
            ("fusion -> head", c.fusion_width, self.head.W.shape[1]),
            ("s1 width", c.stream_widths[1], self.s1_dense.W.shape[0] + self.s1_gather.output_size),
            ("s2 width", c.stream_widths[2], self.s2_dense.W.shape[0] + self.s2_gather.output_size),
            ("s3 width", c.stream_widths[3], self.s3_seq.output_size),
        ]
        if self.backbone_a is not None:
            checks += [("backbone A out", self.backbone_a.out_dim, c.D1),
                       ("backbone B out", self.backbone_b.out_dim, c.D2)]
        bad = [f"{name}: {a} != {b}" for name, a, b in checks if a != b]
        if bad:
            raise ShapeError("model shape audit failed: " + "; ".join(bad))

    # ------------------------------------------------------------------ forward

    def _check_T(self, x, what):
        if x.shape[1] != self.config.T:
            raise ShapeError(f"{what} has {x.shape[1]} timesteps, config expects T={self.config.T}")

    def _pixel_input(self, stream: int, batch: Batch):
        """Per-frame features for stream 1 or 2, plus the backbone cache (None if precomputed)."""
        c = self.config
        if c.backbone == "precomputed":
            feats = batch.features_a if stream == 1 else batch.features_b
            if feats is None:
                raise ModalityError(f"precomputed backbone needs features for stream {stream}")
            feats = feats.astype(c.dtype, copy=False)
            self._check_T(feats, f"stream {stream} features")
            return feats, None
        if batch.frames is None:
            raise ModalityError("pixel streams need frames")
        self._check_T(batch.frames, "frames")
        cnn = self.backbone_a if stream == 1 else self.backbone_b
        return cnn.forward(batch.frames.astype(c.dtype, copy=False))

    def stream_forward(self, stream: int, batch: Batch, train: bool = False,
                       rng: np.random.Generator | None = None):
        """Summary vector (B, stream width) of one stream and its cache."""
        c = self.config
        dt = np.dtype(c.dtype)
        anchors = list(c.anchor_indices)
        if stream == 3:
            if batch.keypoints is None:
                raise ModalityError("stream 3 is enabled but the sample has no keypoints")
            kp = batch.keypoints.astype(dt, copy=False)
            self._check_T(kp, "keypoints")
            if kp.shape[-1] != KEYPOINT_WIDTH:
                raise ShapeError(f"keypoint width {kp.shape[-1]} != {KEYPOINT_WIDTH}")
            o, cs = self.s3_seq.forward(kp)
            return o[:, -1], {"seq": cs}

        feats, cnn_cache = self._pixel_input(stream, batch)
        seq, dense, gather = ((self.s1_seq, self.s1_dense, self.s1_gather) if stream == 1
                              else (self.s2_seq, self.s2_dense, self.s2_gather))
        o, cs = seq.forward(feats)
        summary = o[:, -1]
        mask = None
        if stream == 2 and train and c.dropout_rate > 0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            keep = 1.0 - c.dropout_rate
            mask = (rng.random(summary.shape) < keep).astype(dt) / dt.type(keep)
            summary = summary * mask
        d, cd = dense.forward(summary)
        og, cg = gather.forward(feats[:, anchors])
        cache = {"cnn": cnn_cache, "seq": cs, "dense": cd, "gather": cg, "T": feats.shape[1], "mask": mask}
        return np.concatenate([d, og[:, -1]], axis=1), cache

    def head_forward(self, parts: list[Tensor]):
        logits, ch = self.head.forward(np.concatenate(parts, axis=1))
        return softmax(logits, axis=1), logits, ch

    def forward(self, batch: Batch, train: bool = False, rng: np.random.Generator | None = None):
        """Class probabilities (B, K) and the cache needed by :meth:`backward`."""
        cache = {"streams": {}}
        parts = []
        for s in self.config.enabled_streams:
            part, cache["streams"][s] = self.stream_forward(s, batch, train, rng)
            parts.append(part)
        probs, logits, cache["head"] = self.head_forward(parts)
        cache["parts"] = parts
        cache["logits"] = logits
        self._forward_serial += 1
        cache["serial"] = self._forward_serial
        return probs, cache

    def predict_proba(self, batch: Batch) -> Tensor:
        return self.forward(batch, train=False)[0]

    # ------------------------------------------------------------------ backward

    def backward(self, cache, grad_logits: Tensor) -> dict[str, Tensor]:
        """Gradients of ``sum(grad_logits * logits)`` for every named parameter.

        Parameters of disabled streams receive zero gradients.
        """
        if cache.get("serial") != self._forward_serial:
            raise StaleCacheError("cache does not belong to the most recent forward pass")
        c = self.config
        anchors = list(c.anchor_indices)
        grads = {k: np.zeros_like(v) for k, v in self.named_parameters().items()}
        g_head, d_fused = self.head.backward(cache["head"], grad_logits, "head.")
        grads.update(g_head)
        widths = [c.stream_widths[s] for s in c.enabled_streams]
        pieces = dict(zip(c.enabled_streams, np.split(d_fused, np.cumsum(widths)[:-1], axis=1)))
        dw = c.dense_width

        for s, dpart in pieces.items():
            sc = cache["streams"][s]
            if s == 3:
                g, _ = self.s3_seq.backward(sc["seq"], _last_step_grad(dpart, c.T), "s3.seq.")
                grads.update(g)
                continue
            seq, dense, gather, cnn = ((self.s1_seq, self.s1_dense, self.s1_gather, self.backbone_a)
                                       if s == 1 else
                                       (self.s2_seq, self.s2_dense, self.s2_gather, self.backbone_b))
            g, d_summary = dense.backward(sc["dense"], dpart[:, :dw], f"s{s}.dense.")
            grads.update(g)
            if sc["mask"] is not None:
                d_summary = d_summary * sc["mask"]
            g, dfeat = seq.backward(sc["seq"], _last_step_grad(d_summary, sc["T"]), f"s{s}.seq.")
            grads.update(g)
            g, dgath = gather.backward(sc["gather"], _last_step_grad(dpart[:, dw:], len(anchors)),
                                       f"s{s}.gather.")
            grads.update(g)
            dfeat = dfeat.copy()
            dfeat[:, anchors] += dgath
            if sc["cnn"] is not None:
                g, _ = cnn.backward(sc["cnn"], dfeat)
                grads.update({f"s{s}.cnn.{k}": v for k, v in g.items()})
        return grads

    # ------------------------------------------------------------------ variants

    def load_parameters(self, values: dict[str, Tensor]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(values)
        extra = set(values) - set(params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for k, p in params.items():
            v = np.asarray(values[k])
            if v.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {v.shape} != model shape {p.shape}")
            p[...] = v


def ablate(config: ThreeStreamConfig, enabled_streams) -> ThreeStreamConfig:
    """Config for a variant that fuses only ``enabled_streams``."""
    enabled = tuple(sorted(set(enabled_streams)))
    if not enabled:
        raise ValueError("ablation needs at least one enabled stream")
    return replace(config, enabled_streams=enabled)
