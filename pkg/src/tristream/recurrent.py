"""GRU and LSTM cells, sequence unrolling and backpropagation through time.

Conventions shared by every function here:

* the gate input is the concatenation ``[h_prev, x]`` (hidden block first),
* weight matrices have shape ``(hidden, hidden + input)`` and act on row
  vectors as ``hx @ W.T``,
* batches are leading dimensions: a step takes ``h_prev`` of shape ``(h,)`` or
  ``(B, h)``; an unroll takes ``inputs`` of shape ``(T, d)`` or ``(B, T, d)``.

The GRU candidate uses the reset gate, ``tanh(W_h [r * h_prev, x] + b_h)``.
``reset_in_candidate=False`` gives the literal variant where the candidate
sees ``[h_prev, x]`` unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from .linalg import ShapeError, Tensor, glorot_uniform, sigmoid


class NonDeterminismError(RuntimeError):
    pass


def _dsigmoid(s):
    return s * (1.0 - s)


def _dtanh(t):
    return 1.0 - t * t


@dataclass
class GRUCellParams:
    W_z: Tensor
    W_r: Tensor
    W_h: Tensor
    b_z: Tensor | None = None
    b_r: Tensor | None = None
    b_h: Tensor | None = None
    reset_in_candidate: bool = True

    def __post_init__(self):
        shapes = {self.W_z.shape, self.W_r.shape, self.W_h.shape}
        if len(shapes) != 1:
            raise ShapeError(f"GRU weights disagree in shape: {sorted(shapes)}")
        h, hd = self.W_z.shape
        if hd <= h:
            raise ShapeError(f"GRU weight shape {self.W_z.shape} leaves no input columns")
        for b in (self.b_z, self.b_r, self.b_h):
            if b is not None and b.shape != (h,):
                raise ShapeError(f"GRU bias shape {b.shape} != ({h},)")

    kind = "gru"

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1] - self.W_z.shape[0]

    def named(self) -> dict[str, Tensor]:
        """Parameter arrays by name (live references, not copies)."""
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name.startswith(("W_", "b_")) and getattr(self, f.name) is not None
        }

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden: int,
             bias: bool = True, reset_in_candidate: bool = True, dtype=np.float64):
        shape = (hidden, hidden + input_size)
        w = [glorot_uniform(rng, shape).astype(dtype) for _ in range(3)]
        b = [np.zeros(hidden, dtype) if bias else None for _ in range(3)]
        return cls(*w, *b, reset_in_candidate=reset_in_candidate)

    @classmethod
    def zeros(cls, input_size: int, hidden: int, bias: bool = True, dtype=np.float64):
        shape = (hidden, hidden + input_size)
        return cls(*(np.zeros(shape, dtype) for _ in range(3)),
                   *((np.zeros(hidden, dtype) if bias else None) for _ in range(3)))


@dataclass
class LSTMCellParams:
    W_f: Tensor
    W_i: Tensor
    W_o: Tensor
    W_g: Tensor
    b_f: Tensor | None = None
    b_i: Tensor | None = None
    b_o: Tensor | None = None
    b_g: Tensor | None = None

    kind = "lstm"

    def __post_init__(self):
        shapes = {self.W_f.shape, self.W_i.shape, self.W_o.shape, self.W_g.shape}
        if len(shapes) != 1:
            raise ShapeError(f"LSTM weights disagree in shape: {sorted(shapes)}")
        h, hd = self.W_f.shape
        if hd <= h:
            raise ShapeError(f"LSTM weight shape {self.W_f.shape} leaves no input columns")
        for b in (self.b_f, self.b_i, self.b_o, self.b_g):
            if b is not None and b.shape != (h,):
                raise ShapeError(f"LSTM bias shape {b.shape} != ({h},)")

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def named(self) -> dict[str, Tensor]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if getattr(self, f.name) is not None
        }

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden: int,
             bias: bool = True, dtype=np.float64):
        shape = (hidden, hidden + input_size)
        w = [glorot_uniform(rng, shape).astype(dtype) for _ in range(4)]
        if not bias:
            return cls(*w)
        # forget bias of one keeps the cell state open early in training
        return cls(*w, np.ones(hidden, dtype), np.zeros(hidden, dtype),
                   np.zeros(hidden, dtype), np.zeros(hidden, dtype))

    @classmethod
    def zeros(cls, input_size: int, hidden: int, bias: bool = True, dtype=np.float64):
        shape = (hidden, hidden + input_size)
        return cls(*(np.zeros(shape, dtype) for _ in range(4)),
                   *((np.zeros(hidden, dtype) if bias else None) for _ in range(4)))


CellParams = GRUCellParams | LSTMCellParams


def _bias(b, like):
    return 0.0 if b is None else b


def _check_step(params, h_prev, x):
    if h_prev.shape[-1] != params.hidden or x.shape[-1] != params.input_size:
        raise ShapeError(
            f"step got h_prev {h_prev.shape} and x {x.shape} for a cell with "
            f"hidden={params.hidden}, input={params.input_size}"
        )
    if h_prev.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"batch shapes differ: h_prev {h_prev.shape}, x {x.shape}")


# ---------------------------------------------------------------------------
# single steps


def gru_step(params: GRUCellParams, h_prev: Tensor, x: Tensor):
    """One GRU update. Returns ``(h_new, cache)``; cache holds the gate values."""
    _check_step(params, h_prev, x)
    hx = np.concatenate([h_prev, x], axis=-1)
    z = sigmoid(hx @ params.W_z.T + _bias(params.b_z, hx))
    r = sigmoid(hx @ params.W_r.T + _bias(params.b_r, hx))
    if params.reset_in_candidate:
        hc = np.concatenate([r * h_prev, x], axis=-1)
    else:
        hc = hx
    n = np.tanh(hc @ params.W_h.T + _bias(params.b_h, hx))
    h_new = (1.0 - z) * h_prev + z * n
    cache = {"hx": hx, "hc": hc, "z": z, "r": r, "n": n, "h_prev": h_prev}
    return h_new, cache


def gru_step_backward(params: GRUCellParams, cache, dh_new):
    """Gradients of one GRU step. Returns ``(param_grads, dh_prev, dx)``."""
    h = params.hidden
    z, r, n, h_prev = cache["z"], cache["r"], cache["n"], cache["h_prev"]
    hx, hc = np.atleast_2d(cache["hx"]), np.atleast_2d(cache["hc"])
    dh_new2 = np.atleast_2d(dh_new)
    z2, r2, n2, hp2 = (np.atleast_2d(a) for a in (z, r, n, h_prev))

    dn_pre = dh_new2 * z2 * _dtanh(n2)
    dz_pre = dh_new2 * (n2 - hp2) * _dsigmoid(z2)
    dh_prev = dh_new2 * (1.0 - z2)
    dhc = dn_pre @ params.W_h
    if params.reset_in_candidate:
        dr_pre = dhc[:, :h] * hp2 * _dsigmoid(r2)
        dh_prev = dh_prev + dhc[:, :h] * r2
    else:
        dr_pre = np.zeros_like(dz_pre)
        dh_prev = dh_prev + dhc[:, :h]
    dx = dhc[:, h:]
    dhx = dz_pre @ params.W_z + dr_pre @ params.W_r
    dh_prev = dh_prev + dhx[:, :h]
    dx = dx + dhx[:, h:]

    grads = {"W_z": dz_pre.T @ hx, "W_r": dr_pre.T @ hx, "W_h": dn_pre.T @ hc}
    if params.b_z is not None:
        grads["b_z"] = dz_pre.sum(0)
        grads["b_r"] = dr_pre.sum(0)
        grads["b_h"] = dn_pre.sum(0)
    shape = np.shape(dh_new)
    return grads, dh_prev.reshape(shape), dx.reshape(shape[:-1] + (dx.shape[-1],))


def lstm_step(params: LSTMCellParams, h_prev: Tensor, c_prev: Tensor, x: Tensor):
    """One LSTM update. Returns ``(h_new, c_new, cache)``."""
    _check_step(params, h_prev, x)
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"c_prev {c_prev.shape} != h_prev {h_prev.shape}")
    hx = np.concatenate([h_prev, x], axis=-1)
    f = sigmoid(hx @ params.W_f.T + _bias(params.b_f, hx))
    i = sigmoid(hx @ params.W_i.T + _bias(params.b_i, hx))
    o = sigmoid(hx @ params.W_o.T + _bias(params.b_o, hx))
    g = np.tanh(hx @ params.W_g.T + _bias(params.b_g, hx))
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    cache = {"hx": hx, "f": f, "i": i, "o": o, "g": g, "c_prev": c_prev, "tc": tc}
    return h_new, c_new, cache


def lstm_step_backward(params: LSTMCellParams, cache, dh_new, dc_new):
    """Gradients of one LSTM step. Returns ``(param_grads, dh_prev, dc_prev, dx)``."""
    h = params.hidden
    f, i, o, g, c_prev, tc = (np.atleast_2d(cache[k]) for k in ("f", "i", "o", "g", "c_prev", "tc"))
    hx = np.atleast_2d(cache["hx"])
    dh = np.atleast_2d(dh_new)
    dc = np.atleast_2d(dc_new) + dh * o * _dtanh(tc)
    df = dc * c_prev * _dsigmoid(f)
    di = dc * g * _dsigmoid(i)
    do = dh * tc * _dsigmoid(o)
    dg = dc * i * _dtanh(g)
    dhx = df @ params.W_f + di @ params.W_i + do @ params.W_o + dg @ params.W_g
    grads = {"W_f": df.T @ hx, "W_i": di.T @ hx, "W_o": do.T @ hx, "W_g": dg.T @ hx}
    if params.b_f is not None:
        grads.update(b_f=df.sum(0), b_i=di.sum(0), b_o=do.sum(0), b_g=dg.sum(0))
    shape = np.shape(dh_new)
    dx = dhx[:, h:]
    return (grads, dhx[:, :h].reshape(shape), (dc * f).reshape(shape),
            dx.reshape(shape[:-1] + (dx.shape[-1],)))


# ---------------------------------------------------------------------------
# sequences


@dataclass
class UnrollCache:
    """Everything the backward pass needs from one unrolled layer."""

    params: CellParams
    inputs: Tensor  # (B, T, d)
    hs: Tensor  # (B, T + 1, h), hs[:, 0] is h0
    cs: Tensor | None  # LSTM only, same layout as hs
    gates: dict[str, Tensor] = field(default_factory=dict)  # each (B, T, h)
    squeezed: bool = False

    def __len__(self) -> int:
        return self.inputs.shape[1]


class BPTTGrads(NamedTuple):
    params: dict[str, Tensor]
    inputs: Tensor
    h0: Tensor
    c0: Tensor | None


def _split_w(W, h):
    return W[:, :h], W[:, h:]


def unroll_forward(params: CellParams, inputs: Tensor, h0: Tensor | None = None,
                   c0: Tensor | None = None):
    """Run a cell over a sequence. Returns ``(outputs, cache)``; ``outputs[..., t, :]`` is h_t."""
    squeezed = inputs.ndim == 2
    x = inputs[None] if squeezed else inputs
    if x.ndim != 3:
        raise ShapeError(f"unroll expects (T, d) or (B, T, d) inputs, got {inputs.shape}")
    B, T, d = x.shape
    if T < 1:
        raise ValueError("cannot unroll an empty sequence")
    if d != params.input_size:
        raise ShapeError(f"input width {d} != cell input size {params.input_size}")
    h = params.hidden
    dtype = np.result_type(x, params.W_z if params.kind == "gru" else params.W_f)

    def _state(s):
        if s is None:
            return np.zeros((B, h), dtype)
        s = np.asarray(s, dtype)
        return np.broadcast_to(s, (B, h)) if s.ndim == 1 else s

    hs = np.empty((B, T + 1, h), dtype)
    hs[:, 0] = _state(h0)

    if params.kind == "gru":
        Wzr = np.concatenate([params.W_z, params.W_r], axis=0)
        Wzrh, Wzrx = _split_w(Wzr, h)
        Whh, Whx = _split_w(params.W_h, h)
        # input projections for all timesteps in one product each
        bzr = 0.0 if params.b_z is None else np.concatenate([params.b_z, params.b_r])
        xzr = x @ Wzrx.T + bzr
        xn = x @ Whx.T + _bias(params.b_h, x)
        zr = np.empty((B, T, 2 * h), dtype)
        n = np.empty((B, T, h), dtype)
        for t in range(T):
            hp = hs[:, t]
            zr[:, t] = sigmoid(hp @ Wzrh.T + xzr[:, t])
            zt, rt = zr[:, t, :h], zr[:, t, h:]
            hin = rt * hp if params.reset_in_candidate else hp
            n[:, t] = np.tanh(hin @ Whh.T + xn[:, t])
            hs[:, t + 1] = hp + zt * (n[:, t] - hp)
        z, r = zr[..., :h], zr[..., h:]
        cache = UnrollCache(params, x, hs, None, {"z": z, "r": r, "n": n}, squeezed)
    else:
        cs = np.empty((B, T + 1, h), dtype)
        cs[:, 0] = _state(c0)
        W = np.concatenate([params.W_f, params.W_i, params.W_o, params.W_g], axis=0)
        Wh, Wx = _split_w(W, h)
        if params.b_f is not None:
            bias = np.concatenate([params.b_f, params.b_i, params.b_o, params.b_g])
        else:
            bias = 0.0
        xp = x @ Wx.T + bias
        acts = np.empty((B, T, 4 * h), dtype)
        for t in range(T):
            pre = hs[:, t] @ Wh.T + xp[:, t]
            a = acts[:, t]
            a[:, : 3 * h] = sigmoid(pre[:, : 3 * h])
            a[:, 3 * h:] = np.tanh(pre[:, 3 * h:])
            cs[:, t + 1] = a[:, :h] * cs[:, t] + a[:, h:2 * h] * a[:, 3 * h:]
            hs[:, t + 1] = a[:, 2 * h:3 * h] * np.tanh(cs[:, t + 1])
        cache = UnrollCache(params, x, hs, cs, {"acts": acts}, squeezed)

    out = hs[:, 1:]
    return (out[0] if squeezed else out), cache


def bptt_backward(cache: UnrollCache, grad_outputs: Tensor, grad_hT: Tensor | None = None,
                  grad_cT: Tensor | None = None) -> BPTTGrads:
    """Exact gradients of ``sum(grad_outputs * outputs)`` w.r.t. params, inputs and h0 (and c0)."""
    go = grad_outputs[None] if cache.squeezed else grad_outputs
    B, T, _ = cache.inputs.shape
    params = cache.params
    h = params.hidden
    if go.shape != (B, T, h):
        raise ShapeError(f"grad_outputs {grad_outputs.shape} does not match cache of length {T}")
    x, hs = cache.inputs, cache.hs
    dh = np.zeros((B, h), go.dtype) if grad_hT is None else np.array(grad_hT, go.dtype).reshape(B, h)

    if params.kind == "gru":
        z, r, n = cache.gates["z"], cache.gates["r"], cache.gates["n"]
        Wzh = params.W_z[:, :h]
        Wrh = params.W_r[:, :h]
        Whh = params.W_h[:, :h]
        dz_pre = np.empty((B, T, h), go.dtype)
        dr_pre = np.empty_like(dz_pre)
        dn_pre = np.empty_like(dz_pre)
        for t in range(T - 1, -1, -1):
            dh = dh + go[:, t]
            hp = hs[:, t]
            zt, rt, nt = z[:, t], r[:, t], n[:, t]
            dn_pre[:, t] = dnp = dh * zt * _dtanh(nt)
            dz_pre[:, t] = dzp = dh * (nt - hp) * _dsigmoid(zt)
            dhin = dnp @ Whh
            if params.reset_in_candidate:
                dr_pre[:, t] = drp = dhin * hp * _dsigmoid(rt)
                dh_prev = dh * (1.0 - zt) + dhin * rt
            else:
                dr_pre[:, t] = drp = 0.0
                dh_prev = dh * (1.0 - zt) + dhin
            dh = dh_prev + dzp @ Wzh + drp @ Wrh
        hp_all = hs[:, :-1]
        hx = np.concatenate([hp_all, x], axis=-1).reshape(B * T, -1)
        hin_all = r * hp_all if params.reset_in_candidate else hp_all
        hc = np.concatenate([hin_all, x], axis=-1).reshape(B * T, -1)
        dzf, drf, dnf = (a.reshape(B * T, h) for a in (dz_pre, dr_pre, dn_pre))
        grads = {"W_z": dzf.T @ hx, "W_r": drf.T @ hx, "W_h": dnf.T @ hc}
        if params.b_z is not None:
            grads.update(b_z=dzf.sum(0), b_r=drf.sum(0), b_h=dnf.sum(0))
        dx = (dz_pre @ params.W_z[:, h:] + dr_pre @ params.W_r[:, h:]
              + dn_pre @ params.W_h[:, h:])
        dc0 = None
    else:
        acts, cs = cache.gates["acts"], cache.cs
        W = np.concatenate([params.W_f, params.W_i, params.W_o, params.W_g], axis=0)
        Wh = W[:, :h]
        dpre = np.empty((B, T, 4 * h), go.dtype)
        dc = np.zeros((B, h), go.dtype) if grad_cT is None else np.array(grad_cT, go.dtype).reshape(B, h)
        for t in range(T - 1, -1, -1):
            dh = dh + go[:, t]
            a = acts[:, t]
            f, i, o, g = a[:, :h], a[:, h:2 * h], a[:, 2 * h:3 * h], a[:, 3 * h:]
            tc = np.tanh(cs[:, t + 1])
            dc = dc + dh * o * _dtanh(tc)
            dp = dpre[:, t]
            dp[:, :h] = dc * cs[:, t] * _dsigmoid(f)
            dp[:, h:2 * h] = dc * g * _dsigmoid(i)
            dp[:, 2 * h:3 * h] = dh * tc * _dsigmoid(o)
            dp[:, 3 * h:] = dc * i * _dtanh(g)
            dc = dc * f
            dh = dp @ Wh
        hx = np.concatenate([hs[:, :-1], x], axis=-1).reshape(B * T, -1)
        dW = dpre.reshape(B * T, 4 * h).T @ hx
        grads = dict(zip(("W_f", "W_i", "W_o", "W_g"), np.split(dW, 4, axis=0)))
        if params.b_f is not None:
            db = dpre.reshape(B * T, 4 * h).sum(0)
            grads.update(zip(("b_f", "b_i", "b_o", "b_g"), np.split(db, 4)))
        dx = dpre @ W[:, h:]
        dc0 = dc

    if cache.squeezed:
        return BPTTGrads(grads, dx[0], dh[0], None if dc0 is None else dc0[0])
    return BPTTGrads(grads, dx, dh, dc0)


class RecurrentStack:
    """Layers applied in sequence; each layer's full output sequence feeds the next."""

    def __init__(self, layers: list[CellParams]):
        for lower, upper in zip(layers, layers[1:]):
            if lower.hidden != upper.input_size:
                raise ShapeError(
                    f"stack width mismatch: {lower.kind} emits {lower.hidden}, "
                    f"next {upper.kind} expects {upper.input_size}"
                )
        self.layers = layers

    @property
    def output_size(self) -> int:
        return self.layers[-1].hidden

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for k, layer in enumerate(self.layers):
            for name, arr in layer.named().items():
                out[f"{prefix}{k}.{layer.kind}.{name}"] = arr
        return out

    def forward(self, inputs: Tensor):
        caches = []
        x = inputs
        for layer in self.layers:
            x, cache = unroll_forward(layer, x)
            caches.append(cache)
        return x, caches

    def backward(self, caches: list[UnrollCache], grad_outputs: Tensor, prefix: str = ""):
        """Returns ``(named param grads, grad_inputs)``."""
        grads = {}
        g = grad_outputs
        for k in range(len(self.layers) - 1, -1, -1):
            res = bptt_backward(caches[k], g)
            layer = self.layers[k]
            for name, arr in res.params.items():
                grads[f"{prefix}{k}.{layer.kind}.{name}"] = arr
            g = res.inputs
        return grads, g


def make_cell(kind: str, rng, input_size: int, hidden: int, dtype=np.float64) -> CellParams:
    if kind == "gru":
        return GRUCellParams.init(rng, input_size, hidden, dtype=dtype)
    if kind == "lstm":
        return LSTMCellParams.init(rng, input_size, hidden, dtype=dtype)
    raise ValueError(f"unknown cell kind {kind!r}")


def make_stack(kinds: list[str], rng, input_size: int, hidden: int | list[int],
               dtype=np.float64) -> RecurrentStack:
    widths = [hidden] * len(kinds) if isinstance(hidden, int) else list(hidden)
    layers, d = [], input_size
    for kind, h in zip(kinds, widths):
        layers.append(make_cell(kind, rng, d, h, dtype))
        d = h
    return RecurrentStack(layers)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckEntry:
    name: str
    size: int
    max_rel_error: float
    worst_index: tuple
    analytic: float
    numeric: float


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry]
    note: str = ""

    @property
    def passed(self) -> bool:
        return all(e.max_rel_error < self.tolerance for e in self.entries)

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    def table(self) -> str:
        rows = [f"{'parameter':<40} {'size':>7} {'max rel err':>12}  status"]
        for e in self.entries:
            status = "ok" if e.max_rel_error < self.tolerance else "FAIL"
            rows.append(f"{e.name:<40} {e.size:>7} {e.max_rel_error:>12.3e}  {status}")
        return "\n".join(rows)


def relative_error(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def gradient_check(
    loss_and_grads: Callable[[], tuple[float, dict[str, Tensor]]],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    loss_only: Callable[[], float] | None = None,
    loss_for: Callable[[str], Callable[[], float]] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients to central differences, entry by entry.

    ``loss_and_grads`` must read the arrays in ``params`` (which are perturbed
    in place and restored). ``loss_only`` is an optional cheaper forward pass;
    ``loss_for(name)`` may return one specialised to a single parameter, e.g.
    one that recomputes only the part of a network that parameter feeds.
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"gradient checks need float64 parameters; {name} is {p.dtype}")
    loss0, analytic = loss_and_grads()
    f = loss_only or (lambda: loss_and_grads()[0])
    if f() != loss0:
        raise NonDeterminismError("two forward evaluations with identical inputs disagree")

    entries = []
    for name, p in params.items():
        g = analytic.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        fn = loss_for(name) if loss_for is not None else f
        num = np.empty_like(p)
        if not p.flags.c_contiguous:
            raise ValueError(f"{name} must be C-contiguous to be perturbed in place")
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            fp = fn()
            flat[k] = old - eps
            fm = fn()
            flat[k] = old
            nflat[k] = (fp - fm) / (2 * eps)
        err = relative_error(g, num)
        idx = np.unravel_index(int(np.argmax(err)), p.shape) if p.size else ()
        entries.append(GradCheckEntry(
            name, p.size, float(err.max()) if p.size else 0.0, idx,
            float(g[idx]) if p.size else 0.0, float(num[idx]) if p.size else 0.0,
        ))
    return GradCheckReport(tolerance, entries)
