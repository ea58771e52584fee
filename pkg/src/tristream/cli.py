"""``tristream`` command line: synth, train, eval, predict, gradcheck.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import CLASS_NAMES
from .dataio import (
    AugmentConfig,
    DataError,
    SampleStore,
    SplitSpec,
    build_splits,
    leakage_check,
    load_dataset,
    load_sample_dir,
    resize_normalize,
    split_report,
    synthesize_gestures,
    write_dataset,
)
from .featurestreams import FeatureFileError, KeypointLayoutError
from .linalg import ShapeError
from .model import ModalityError, ThreeStreamConfig, ThreeStreamModel
from .traineval import (
    TrainConfig,
    TrainingDivergedError,
    compute_metrics,
    evaluate,
    load_checkpoint,
    predict,
    read_history,
    report,
    save_checkpoint,
    substream,
    train,
    write_history,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("tristream")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configuration: one flat key/value namespace over model, training and data


@dataclass
class DataConfig:
    data_dir: str = ""
    augment: str = ""  # comma list of flip, rotate, brightness
    split_train: float = 0.6
    split_val: float = 0.2
    split_test: float = 0.2
    subject_disjoint: bool = False


_SECTIONS = (ThreeStreamConfig, TrainConfig, DataConfig)
_SKIP = {"seed"}  # seed lives at the top level


def config_schema() -> dict[str, tuple[type, object]]:
    """key -> (owning dataclass, default)."""
    schema: dict[str, tuple[type, object]] = {"seed": (int, 0)}
    for cls in _SECTIONS:
        inst = cls()
        for f in fields(cls):
            if f.name not in _SKIP:
                schema[f.name] = (cls, getattr(inst, f.name))
    return schema


def _coerce(key: str, raw, default):
    if isinstance(raw, str):
        text = raw.strip()
        try:
            if isinstance(default, bool):
                low = text.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(text)
                return low in ("true", "1", "yes")
            if isinstance(default, int):
                return int(text)
            if isinstance(default, float):
                return float(text)
            if isinstance(default, tuple):
                return tuple(int(v) for v in text.replace(",", " ").split())
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None
        return text
    return raw


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config file: {exc}") from None
    return dict(cp["run"])


def resolve_config(config_path: str | None, overrides: dict) -> dict:
    schema = config_schema()
    values = {k: d for k, (_, d) in schema.items()}
    raw = parse_config_text(Path(config_path).read_text()) if config_path else {}
    for k, v in list(raw.items()) + [(k, v) for k, v in overrides.items() if v is not None]:
        if k not in schema:
            raise UsageError(f"unknown config key {k!r}")
        values[k] = _coerce(k, v, schema[k][1])
    return values


def format_config(values: dict) -> str:
    lines = ["# resolved run configuration; pass back with --config to reproduce"]
    for k in sorted(values):
        v = values[k]
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def split_config(values: dict):
    def build(cls, **extra):
        kw = {f.name: values[f.name] for f in fields(cls) if f.name in values}
        kw.update(extra)
        try:
            return cls(**kw)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"invalid {cls.__name__}: {exc}") from None

    return build(ThreeStreamConfig), build(TrainConfig, seed=values["seed"]), build(DataConfig)


def add_override_flags(p: argparse.ArgumentParser) -> None:
    for key in config_schema():
        if key == "seed":
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="V",
                       help=argparse.SUPPRESS)


def _overrides(args) -> dict:
    out = {k: getattr(args, k, None) for k in config_schema() if k != "seed"}
    if getattr(args, "data", None):
        out["data_dir"] = args.data
    out["seed"] = args.seed
    return out


# ---------------------------------------------------------------------------
# data preparation


def prepare(samples, model_cfg: ThreeStreamConfig):
    """Match frame size and dtype of loaded samples to the model configuration."""
    out = []
    for s in samples:
        frames = s.frames
        if frames.shape[1] != model_cfg.frame_size:
            frames = resize_normalize(np.rint(frames * 255), model_cfg.frame_size)
        if frames.shape[-1] != model_cfg.channels:
            raise DataError(f"{s.sample_id}: {frames.shape[-1]} channels, config expects {model_cfg.channels}")
        if s.T != model_cfg.T:
            raise DataError(f"{s.sample_id}: {s.T} frames, config expects T={model_cfg.T}")
        out.append(replace(s, frames=frames))
    return out


def load_splits(values: dict):
    model_cfg, _, data_cfg = split_config(values)
    if not data_cfg.data_dir:
        raise UsageError("no dataset given (use --data or data_dir in the config)")
    root = Path(data_cfg.data_dir)
    if not root.exists():
        raise DataError(f"dataset directory {root} does not exist")
    manifest, originals = load_dataset(root)
    if len(manifest.class_names) != model_cfg.K:
        raise DataError(f"dataset has {len(manifest.class_names)} classes, model expects K={model_cfg.K}")
    seed = values["seed"]
    split_seed = int(substream(seed, "split").integers(2**62))
    aug_seed = int(substream(seed, "augment").integers(2**62))
    try:
        aug = AugmentConfig.from_names(data_cfg.augment, aug_seed)
        spec = SplitSpec(data_cfg.split_train, data_cfg.split_val, data_cfg.split_test, split_seed,
                         data_cfg.subject_disjoint)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_m, val_m, test_m = build_splits(manifest, spec, aug)
    leakage_check(train_m, val_m, test_m)
    store = SampleStore(originals)
    return (train_m, val_m, test_m), store


def _model_seed(seed: int) -> int:
    return int(substream(seed, "init").integers(2**62))


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    if args.n_per_class < 1:
        raise UsageError("--n-per-class must be at least 1")
    manifest, samples = synthesize_gestures(args.classes, args.n_per_class, args.T, args.seed,
                                            args.frame_size, args.channels)
    out = Path(args.out)
    try:
        write_dataset(out, manifest, samples)
    except OSError as exc:
        raise DataError(f"cannot write dataset to {out}: {exc}") from None
    print(f"wrote {len(manifest)} samples to {out}")
    for name, n in manifest.class_counts().items():
        print(f"  {name:<12} {n}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    history_path = out / "history.tsv"
    prior = []
    if args.resume:
        model, meta, opt_state = load_checkpoint(args.resume)
        values = meta["extra"]["run_config"]
        values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
        extra = {k: v for k, v in _overrides(args).items() if v is not None and k != "seed"}
        for k in ("epochs", "learning_rate", "patience"):
            if k in extra:
                values[k] = _coerce(k, extra[k], config_schema()[k][1])
        start_epoch = int(meta["epoch"])
        if history_path.exists():
            prior = [r for r in read_history(history_path) if r.epoch <= start_epoch]
    else:
        values = resolve_config(args.config, _overrides(args))
        start_epoch = 0
        model = None
    model_cfg, train_cfg, _ = split_config(values)
    (out / "resolved_config.cfg").write_text(format_config(values))
    print(format_config(values), end="")

    (train_m, val_m, test_m), store = load_splits(values)
    (out / "split.json").write_text(json.dumps(split_report(train_m, val_m, test_m), indent=2, sort_keys=True))
    train_set = prepare(store.load(train_m), model_cfg)
    val_set = prepare(store.load(val_m), model_cfg)

    optimizer = None
    if model is None:
        model = ThreeStreamModel(model_cfg, seed=_model_seed(values["seed"]))
    else:
        from .traineval import make_optimizer
        optimizer = make_optimizer(train_cfg)
        optimizer.load_state_dict(opt_state)

    history = list(prior)

    def checkpoint(rec):
        history.append(rec)
        write_history(history_path, history)

    result = train(model, train_set, val_set, train_cfg, start_epoch=start_epoch,
                   optimizer=optimizer, on_epoch=checkpoint)
    last = history[-1].epoch if history else start_epoch
    save_checkpoint(out / "checkpoint.ckpt", model, epoch=last, optimizer=result.optimizer,
                    extra={"run_config": {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}})
    status = "stopped early" if result.stopped_early else "finished"
    print(f"{status} after epoch {last}; artifacts in {out}")
    return EXIT_OK


def _load_run(checkpoint_path):
    model, meta, _ = load_checkpoint(checkpoint_path)
    values = meta["extra"].get("run_config")
    if values is None:
        raise DataError(f"{checkpoint_path}: checkpoint has no run configuration")
    return model, {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}


def cmd_eval(args) -> int:
    model, values = _load_run(args.checkpoint)
    if args.data:
        values["data_dir"] = args.data
    (train_m, val_m, test_m), store = load_splits(values)
    chosen = {"train": train_m, "val": val_m, "test": test_m}[args.split]
    if len(chosen) == 0:
        raise DataError(f"the {args.split} split is empty; no report written")
    samples = prepare(store.load(chosen), model.config)
    cm = evaluate(model, samples)
    metrics = compute_metrics(cm, chosen.class_names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "confusion.tsv", cm.counts, fmt="%d", delimiter="\t",
               header="\t".join(chosen.class_names), comments="")
    (out / "report.txt").write_text(report(metrics, "text"))
    (out / "report.json").write_text(report(metrics, "json"))
    print(report(metrics, "text"), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, _ = _load_run(args.checkpoint)
    cfg = model.config
    sample = load_sample_dir(args.sample, require_keypoints=3 in cfg.enabled_streams)
    sample = prepare([sample], cfg)[0]
    _, probs = predict(model, [replace(sample, label=0)])
    p = probs[0]
    k = int(np.argmax(p))
    names = CLASS_NAMES[: cfg.K]
    print(f"predicted: {names[k]}")
    for name, v in zip(names, p):
        print(f"  {name:<12} {v:.12f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suites

    ok = True
    for res in run_suites([args.scope], seed=args.seed):
        print(f"== {res.suite} ({res.seconds:.1f}s){'  ' + res.note if res.note else ''}")
        print(res.report.table())
        print(f"-> {'PASS' if res.report.passed else 'FAIL'} (max rel err {res.report.max_rel_error:.3e})")
        ok &= res.report.passed
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="runs/out")
    common.add_argument("--config", default=None, help="flat key = value file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tristream", allow_abbrev=False,
                                description="Three-stream gesture sequence classifier.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], allow_abbrev=False, help="write a synthetic gesture dataset")
    s.add_argument("--n-per-class", type=int, default=20)
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--T", type=int, default=30)
    s.add_argument("--frame-size", type=int, default=128)
    s.add_argument("--channels", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], allow_abbrev=False, help="split, augment and train")
    t.add_argument("--data", default=None, help="dataset directory")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    add_override_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], allow_abbrev=False, help="confusion matrix and metrics report")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", default=None)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", parents=[common], allow_abbrev=False, help="classify one sample directory")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("sample")
    pr.set_defaults(func=cmd_predict)

    from .gradcheck import SUITES
    g = sub.add_parser("gradcheck", parents=[common], allow_abbrev=False, help="finite-difference checks")
    g.add_argument("--scope", choices=SUITES + ("all",), default="all")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.captureWarnings(True)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModalityError, FeatureFileError, KeypointLayoutError, ShapeError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
