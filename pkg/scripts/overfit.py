"""Train the three-stream model on the synthetic gesture set and compare with a per-frame baseline.

    python scripts/overfit.py --frame-size 64 --hidden 32 --epochs 100
"""

import argparse
import time
from dataclasses import asdict, dataclass, fields

from tristream.dataio import SampleStore, SplitSpec, per_frame_centroid_accuracy, split_dataset, synthesize_gestures
from tristream.model import ThreeStreamConfig, ThreeStreamModel, ablate
from tristream.traineval import TrainConfig, evaluate_loss_acc, train


@dataclass
class OverfitExperiment:
    n_per_class: int = 20
    T: int = 30
    frame_size: int = 64
    hidden: int = 32
    features: int = 32  # per-frame CNN width for both pixel streams
    dtype: str = "float32"
    learning_rate: float = 3e-3
    batch_size: int = 16
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    streams: str = "1,2,3"


def load_data(exp: OverfitExperiment):
    manifest, samples = synthesize_gestures(10, exp.n_per_class, exp.T, seed=exp.seed, size=exp.frame_size)
    store = SampleStore(samples)
    return tuple(store.load(p) for p in split_dataset(manifest, SplitSpec(seed=exp.seed)))


def run(exp: OverfitExperiment, splits=None, verbose=True) -> dict:
    train_set, val_set, test_set = splits or load_data(exp)
    cfg = ThreeStreamConfig(T=exp.T, frame_size=exp.frame_size, D1=exp.features, D2=exp.features,
                            hidden=exp.hidden, dense_width=exp.hidden, dtype=exp.dtype)
    cfg = ablate(cfg, [int(s) for s in exp.streams.split(",")])
    model = ThreeStreamModel(cfg, seed=exp.seed)
    tc = TrainConfig(learning_rate=exp.learning_rate, epochs=exp.epochs, batch_size=exp.batch_size,
                     seed=exp.seed, patience=exp.patience)
    t0 = time.perf_counter()
    log = (lambda r: print(f"epoch {r.epoch:3d}  loss {r.train_loss:.4f}  train {r.train_acc:.3f}  "
                           f"val {r.val_acc:.3f}  {time.perf_counter() - t0:.0f}s", flush=True)) if verbose else None
    res = train(model, train_set, val_set, tc, on_epoch=log)
    return {
        "streams": exp.streams,
        "epochs": len(res.history),
        "seconds": time.perf_counter() - t0,
        "train_acc": evaluate_loss_acc(model, train_set)[1],
        "test_acc": evaluate_loss_acc(model, test_set)[1],
    }


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f in fields(OverfitExperiment):
        p.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    exp = OverfitExperiment(**vars(p.parse_args()))
    print(asdict(exp))
    splits = load_data(exp)
    print(f"per-frame nearest-centroid baseline: {per_frame_centroid_accuracy(splits[0], splits[2], 10):.1%}")
    out = run(exp, splits)
    print(f"train {out['train_acc']:.1%}  test {out['test_acc']:.1%}  after {out['epochs']} epochs, {out['seconds']:.0f}s")


if __name__ == "__main__":
    main()
