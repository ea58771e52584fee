"""Finite-difference verification suites for every hand-written backward pass.

Each suite builds a small float64 problem, evaluates a scalar objective
``sum(w * outputs)`` with fixed random weights ``w`` and compares the analytic
gradients of all parameters (and inputs where relevant) to central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .featurestreams import TinyCNN, kink_margin
from .linalg import softmax
from .model import Batch, ThreeStreamConfig, ThreeStreamModel
from .recurrent import GradCheckReport, bptt_backward, gradient_check, make_cell, make_stack, unroll_forward

SUITES = ("gru", "lstm", "stack", "tinycnn", "head", "model")


@dataclass
class SuiteResult:
    suite: str
    report: GradCheckReport
    seconds: float
    note: str = ""


def _cell_suite(kind: str, seed: int, T=5, d=4, h=3, B=2, eps=1e-5, tol=1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    cell = make_cell(kind, rng, d, h)
    params = {k: v for k, v in cell.named().items()}
    params["inputs"] = rng.normal(size=(B, T, d))
    params["h0"] = rng.normal(scale=0.5, size=(B, h))
    if kind == "lstm":
        params["c0"] = rng.normal(scale=0.5, size=(B, h))
    w = rng.normal(size=(B, T, h))
    wT = rng.normal(size=(B, h))

    def run():
        out, cache = unroll_forward(cell, params["inputs"], params["h0"], params.get("c0"))
        return float((w * out).sum() + (wT * out[:, -1]).sum()), cache

    def loss_and_grads():
        loss, cache = run()
        gout = w.copy()
        gout[:, -1] += wT
        g = bptt_backward(cache, gout)
        grads = dict(g.params)
        grads["inputs"], grads["h0"] = g.inputs, g.h0
        if kind == "lstm":
            grads["c0"] = g.c0
        return loss, grads

    return gradient_check(loss_and_grads, params, eps, tol, loss_only=lambda: run()[0])


def gru_suite(seed=0, **kw):
    return _cell_suite("gru", seed, **kw)


def lstm_suite(seed=0, **kw):
    return _cell_suite("lstm", seed, **kw)


def stack_suite(seed=0, kinds=("lstm", "gru", "lstm"), T=8, d=8, h=8, B=2, eps=1e-5, tol=1e-4):
    rng = np.random.default_rng(seed)
    stack = make_stack(list(kinds), rng, d, h)
    params = stack.named("")
    x = rng.normal(size=(B, T, d))
    params["inputs"] = x
    w = rng.normal(size=(B, T, h))

    def loss_only():
        out, _ = stack.forward(params["inputs"])
        return float((w * out).sum())

    def loss_and_grads():
        out, caches = stack.forward(params["inputs"])
        grads, gx = stack.backward(caches, w, "")
        grads["inputs"] = gx
        return float((w * out).sum()), grads

    return gradient_check(loss_and_grads, params, eps, tol, loss_only=loss_only)


def _smooth_frames(rng, n, size, channels, cnn, min_margin=2e-3, tries=200):
    """Random frames whose pool / relu decisions sit safely away from ties."""
    best = None
    for _ in range(tries):
        frames = rng.uniform(0, 1, (n, size, size, channels))
        m = kink_margin(cnn, frames)
        if best is None or m > best[0]:
            best = (m, frames)
        if m >= min_margin:
            break
    return best[1], best[0]


def tinycnn_suite(seed=0, size=8, channels=1, D=4, n=2, eps=1e-5, tol=1e-4):
    rng = np.random.default_rng(seed)
    cnn = TinyCNN.init(rng, size, channels, D)
    frames, margin = _smooth_frames(rng, n, size, channels, cnn)
    params = cnn.named("")
    params["frames"] = frames
    w = rng.normal(size=(n, D))

    def loss_only():
        return float((w * cnn.forward(params["frames"])[0]).sum())

    def loss_and_grads():
        feats, cache = cnn.forward(params["frames"])
        grads, dx = cnn.backward(cache, w, need_input_grad=True)
        grads["frames"] = dx
        return float((w * feats).sum()), grads

    report = gradient_check(loss_and_grads, params, eps, tol, loss_only=loss_only)
    report.note = f"kink margin {margin:.2e}"
    return report


def head_suite(seed=0, K=10, B=3, eps=1e-5, tol=1e-4):
    """Softmax followed by mean cross-entropy, checked against the logits."""
    from .traineval import batch_cross_entropy

    rng = np.random.default_rng(seed)
    params = {"logits": rng.normal(size=(B, K))}
    labels = rng.integers(0, K, B)

    def loss_and_grads():
        loss, g = batch_cross_entropy(softmax(params["logits"], axis=1), labels)
        return loss, {"logits": g}

    return gradient_check(loss_and_grads, params, eps, tol)


def toy_config(**overrides) -> ThreeStreamConfig:
    base = dict(T=4, anchor_indices=(0, 1, 2, 3), frame_size=16, channels=1, D1=8, D2=8,
                hidden=8, dense_width=8, dropout_rate=0.3, K=10)
    base.update(overrides)
    return ThreeStreamConfig(**base)


def toy_batch(config: ThreeStreamConfig, rng, B=2, model=None, min_margin=2e-3) -> Batch:
    """Random toy inputs.

    With a model given, each sample's frames are positive multiples of one base
    frame chosen for a large kink margin. Backbone biases are zero at init, so
    conv / relu / pool are positively homogeneous and scaling keeps every
    decision while moving the features over time.
    """
    shape = (config.frame_size, config.frame_size, config.channels)
    frames = rng.uniform(0, 1, (B, config.T) + shape)
    if model is not None and model.backbone_a is not None:
        for b in range(B):
            best = (-1.0, None)
            for _ in range(400):
                base = rng.uniform(0, 1, shape)
                m = min(kink_margin(model.backbone_a, base[None]), kink_margin(model.backbone_b, base[None]))
                if m > best[0]:
                    best = (m, base)
                if m >= min_margin:
                    break
            frames[b] = rng.uniform(0.5, 1.0, (config.T, 1, 1, 1)) * best[1]
    kp = rng.uniform(0, 1, (B, config.T, 258))
    return Batch(frames=frames, keypoints=kp, features_a=None, features_b=None,
                 labels=rng.integers(0, config.K, B))


def model_suite(seed=0, eps=1e-5, tol=1e-4, config: ThreeStreamConfig | None = None):
    """Whole network, training mode with dropout on (mask fixed per evaluation)."""
    config = config or toy_config()
    rng = np.random.default_rng(seed)
    model = ThreeStreamModel(config, seed=seed)
    batch = toy_batch(config, rng, model=model)
    w = rng.normal(size=(len(batch), config.K))
    params = model.named_parameters()
    drop_seed = seed + 1000

    def full():
        probs, cache = model.forward(batch, train=True, rng=np.random.default_rng(drop_seed))
        return float((w * cache["logits"]).sum()), cache

    def loss_and_grads():
        loss, cache = full()
        return loss, model.backward(cache, w)

    offsets = np.cumsum([0] + [config.stream_widths[k] for k in config.enabled_streams])
    head_columns = {k: slice(offsets[i], offsets[i + 1]) for i, k in enumerate(config.enabled_streams)}
    _, ref = full()
    anchors = list(config.anchor_indices)
    dw = config.dense_width

    def loss_for(name):
        # Everything the parameter does not feed adds a constant, so only the
        # branch it feeds is recomputed and only that branch's share of the
        # logits is summed. This keeps the rounding noise of the objective small.
        s = model.stream_of(name)
        if s is None or s not in head_columns:  # head, or a disabled stream (zero gradient)
            return lambda: full()[0]
        W_s = w @ model.head.W[:, head_columns[s]]
        branch = name.split(".")[1]
        if s == 3 or branch == "cnn":
            def whole_stream():
                # dropout draws happen in stream 2 alone, so a fresh rng reproduces the mask
                part, _ = model.stream_forward(s, batch, True, np.random.default_rng(drop_seed))
                return float((W_s * part).sum())
            return whole_stream
        sc = ref["streams"][s]
        feats = model._pixel_input(s, batch)[0]
        seq, dense, gather = ((model.s1_seq, model.s1_dense, model.s1_gather) if s == 1
                              else (model.s2_seq, model.s2_dense, model.s2_gather))
        if branch == "gather":
            Wg = W_s[:, dw:]
            return lambda: float((Wg * gather.forward(feats[:, anchors])[0][:, -1]).sum())
        Wd = W_s[:, :dw]
        mask = sc["mask"]

        def seq_branch():
            summary = seq.forward(feats)[0][:, -1]
            if mask is not None:
                summary = summary * mask
            return float((Wd * dense.forward(summary)[0]).sum())
        return seq_branch

    return gradient_check(loss_and_grads, params, eps, tol, loss_only=lambda: full()[0], loss_for=loss_for)


def stack_suites(seed=0):
    big = stack_suite(seed, ("lstm", "gru", "lstm"), T=8, d=8, h=8)
    small = stack_suite(seed, ("gru", "lstm"), T=4, d=2, h=3)
    return GradCheckReport(big.tolerance, big.entries +
                           [replace(e, name=f"small.{e.name}") for e in small.entries])


RUNNERS = {
    "gru": gru_suite,
    "lstm": lstm_suite,
    "stack": stack_suites,
    "tinycnn": tinycnn_suite,
    "head": head_suite,
    "model": model_suite,
}


def run_suites(names, seed=0) -> list[SuiteResult]:
    if "all" in names:
        names = SUITES
    out = []
    for name in names:
        if name not in RUNNERS:
            raise KeyError(f"unknown gradient-check suite {name!r}; choose from {', '.join(SUITES)} or all")
        t0 = time.perf_counter()
        rep = RUNNERS[name](seed)
        out.append(SuiteResult(name, rep, time.perf_counter() - t0, getattr(rep, "note", "")))
    return out
