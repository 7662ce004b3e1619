"""SGD training loop, validation and model checkpoints for the toy detector."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data import augment, augment_image
from ..errors import DivergenceError, InvalidQuad, ParseError
from ..evaluation import GroundTruth, evaluate
from ..geometry import Quad, canonicalize
from ..grid import FpnLevel, grid_points, grid_shape
from ..losses import LossWeights
from ..postprocess import Detection, postprocess
from .model import ToyModel, feature_width, pooled_level, scene_arrays, scene_targets, window_features
from .scenes import TOY_CLASSES, generate_scene, make_rng

REFERENCE_ITERATIONS = 90_000
REFERENCE_WARMUP = 500

# Philox stream ids, one per independent use of a seed
STREAM_INIT, STREAM_TRAIN_SCENES, STREAM_BATCHES, STREAM_VAL_SCENES = 1, 2, 3, 4


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iterations: int = 6000
    base_lr: float = 0.01
    warmup_iters: int | None = None     # None: 500 scaled by iterations / 90k
    warmup_factor: float = 0.1          # warm-up starts at 0.001 = 0.1 * 0.01
    decay_at: tuple = (2 / 3, 8 / 9)    # 60k/90k and 80k/90k
    decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 2
    strategy: str = "direct"
    centerness: str = "oriented"
    alpha: float = 4.0
    width: int = 64
    tower_layers: int = 2
    anchor_scale: float = 4.0
    levels: tuple = (3, 4)
    image_size: int = 128
    train_scenes: int = 200
    val_scenes: int = 48
    val_seed: int = 1_000_003
    augment: bool = True
    eval_every: int = 0
    lambda_cls: float = 10.0

    @property
    def warmup(self) -> int:
        if self.warmup_iters is not None:
            return self.warmup_iters
        return int(round(REFERENCE_WARMUP * self.iterations / REFERENCE_ITERATIONS))

    @property
    def decay_iters(self) -> tuple:
        return tuple(int(round(f * self.iterations)) for f in self.decay_at)

    def lr_at(self, it: int) -> float:
        lr = self.base_lr
        for d in self.decay_iters:
            if it >= d:
                lr *= self.decay_factor
        if it < self.warmup:
            frac = it / max(self.warmup, 1)
            lr *= self.warmup_factor + (1.0 - self.warmup_factor) * frac
        return lr

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(lambda_cls=self.lambda_cls)

    @property
    def fpn_levels(self) -> tuple:
        return tuple(FpnLevel.of(l) for l in self.levels)


@dataclass
class TrainResult:
    model: ToyModel
    config: TrainConfig
    log: list = field(default_factory=list)        # per-iteration dicts
    validation: list = field(default_factory=list)  # (iteration, metrics)

    @property
    def final(self) -> dict:
        return self.validation[-1][1] if self.validation else {}


def make_scenes(seed: int, stream: int, n: int, size: int, prefix: str) -> list:
    rng = make_rng(seed, stream)
    return [generate_scene(rng, size, image_id=f"{prefix}{i:04d}") for i in range(n)]


_VAL_CACHE: dict = {}


def validation_set(config: TrainConfig):
    """Validation scenes and their arrays; shared by every run with the same val_seed."""
    key = (config.val_seed, config.val_scenes, config.image_size, config.levels, config.alpha,
           config.centerness)
    if key not in _VAL_CACHE:
        scenes = make_scenes(config.val_seed, STREAM_VAL_SCENES, config.val_scenes, config.image_size, "val")
        arrays = [scene_arrays(s, config.fpn_levels, config.alpha, config.centerness) for s in scenes]
        _VAL_CACHE.clear()
        _VAL_CACHE[key] = (scenes, arrays)
    return _VAL_CACHE[key]


_POOLED_OPS = {
    "hflip": lambda a: a[:, ::-1],
    "vflip": lambda a: a[::-1],
    "rot90": lambda a: np.rot90(a, 1),
    "rot180": lambda a: np.rot90(a, 2),
    "rot270": lambda a: np.rot90(a, 3),
}


def sample_augmentation(rng) -> tuple:
    """Random flips (p=0.5 each), then a rotation by 0/90/180/270 degrees with equal chance."""
    ops = []
    if rng.random() < 0.5:
        ops.append("hflip")
    if rng.random() < 0.5:
        ops.append("vflip")
    k = int(rng.integers(0, 4))
    if k:
        ops.append(("rot90", "rot180", "rot270")[k - 1])
    return tuple(ops)


def augment_scene(scene, ops):
    image, ann = scene.image, scene.annotations
    for op in ops:
        image = augment_image(op, image)
        ann = augment(op, ann)
    return replace(scene, image=image, annotations=ann)


class _TrainPool:
    """Training scenes kept as pooled grids; augmentation acts on the grids directly
    (block pooling commutes with flips and quarter turns) and targets are cached
    per (scene, augmentation)."""

    def __init__(self, scenes, config: TrainConfig):
        self.scenes = scenes
        self.config = config
        self.levels = config.fpn_levels
        size = config.image_size
        self.shapes = [grid_shape(l, size, size) for l in self.levels]
        self.pooled = [[pooled_level(s.image, l) for l in self.levels] for s in scenes]
        self.targets = {}

    def arrays(self, idx: int, ops: tuple) -> dict:
        key = (idx, ops)
        if key not in self.targets:
            ann = self.scenes[idx].annotations
            for op in ops:
                ann = augment(op, ann)
            c = self.config
            self.targets[key] = scene_targets(ann, c.image_size, c.image_size, self.levels, c.alpha, c.centerness)
        out = dict(self.targets[key])
        feats = []
        for (fine, coarse), (rows, cols) in zip(self.pooled[idx], self.shapes):
            for op in ops:
                fine, coarse = _POOLED_OPS[op](fine), _POOLED_OPS[op](coarse)
            feats.append(window_features(fine, coarse, rows, cols))
        out["x"] = np.concatenate(feats)
        return out


def _batch(arrays: list) -> dict:
    return {k: np.concatenate([a[k] for a in arrays]) for k in arrays[0]}


def train(config: TrainConfig, progress=None) -> TrainResult:
    """Run SGD with momentum, weight decay, linear warm-up and step decay.

    Bit-reproducible for a fixed config.  Raises DivergenceError on a
    non-finite loss.
    """
    model = ToyModel(feature_width(), len(TOY_CLASSES), config.strategy, config.centerness,
                     config.width, config.tower_layers, make_rng(config.seed, STREAM_INIT),
                     config.anchor_scale)
    scenes = make_scenes(config.seed, STREAM_TRAIN_SCENES, config.train_scenes, config.image_size, "train")
    pool = _TrainPool(scenes, config)
    rng = make_rng(config.seed, STREAM_BATCHES)
    weights = config.loss_weights
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    result = TrainResult(model, config)

    def scene_batch():
        picked = []
        for idx in rng.integers(0, len(scenes), config.batch_size):
            ops = sample_augmentation(rng) if config.augment else ()
            picked.append(pool.arrays(int(idx), ops))
        return _batch(picked)

    for it in range(config.iterations + 1):
        batch = scene_batch()
        if it == config.iterations:
            lt, _, _ = model.loss(batch, weights)
            result.log.append({"iteration": it, "lr": 0.0, "loss": lt.value, **lt.parts})
            if not math.isfinite(lt.value):
                raise DivergenceError(it, lt.value)
            break
        lr = config.lr_at(it)
        lt, grads = model.gradients(batch, weights)
        if not math.isfinite(lt.value):
            raise DivergenceError(it, lt.value)
        result.log.append({"iteration": it, "lr": lr, "loss": lt.value, **lt.parts})
        for name, p in model.params.items():
            v = velocity[name]
            v *= config.momentum
            v += grads[name] + config.weight_decay * p
            p -= lr * v
        if config.eval_every and it and it % config.eval_every == 0:
            result.validation.append((it, evaluate_model(model, config)))
        if progress is not None:
            progress(it, lt.value)
    result.validation.append((config.iterations, evaluate_model(model, config)))
    return result


def predicted_quads(arrays: dict, out: dict, size: int) -> np.ndarray:
    """Absolute corner coordinates (N, 4, 2) for every location of a scene."""
    return _location_points(arrays, size)[:, None, :] + arrays["stride"][:, None, None] * out["t"].reshape(-1, 4, 2)


_POINTS_CACHE: dict = {}


def _location_points(arrays, size):
    key = (size, tuple(np.unique(arrays["stride"]).tolist()))
    if key not in _POINTS_CACHE:
        pts = []
        for s in sorted(np.unique(arrays["stride"]).tolist()):
            level = FpnLevel.of(int(round(math.log2(s))))
            pts.append(grid_points(level, size, size).reshape(-1, 2))
        _POINTS_CACHE[key] = np.concatenate(pts)
    return _POINTS_CACHE[key]


def detections_for_scene(model: ToyModel, arrays: dict, image_id: str, size: int, out=None) -> list:
    """Dense predictions -> threshold / top-k / rotated NMS."""
    if out is None:
        out, _ = model.forward(arrays["x"])
    quads = predicted_quads(arrays, out, size)
    probs = out["cls_prob"]
    ctr = out["ctr_prob"]
    rows, classes = np.nonzero(probs >= 0.05)
    dets = []
    valid = {}
    for r, c in zip(rows.tolist(), classes.tolist()):
        if r not in valid:
            try:
                valid[r] = Quad(tuple(map(tuple, quads[r])))
            except InvalidQuad:
                try:
                    valid[r] = canonicalize(quads[r])
                except InvalidQuad:
                    valid[r] = None
        q = valid[r]
        if q is None:
            continue
        p = float(probs[r, c])
        o = float(ctr[r]) if ctr is not None else 1.0
        s = math.sqrt(p * o) if ctr is not None else p
        dets.append(Detection(q, c, p, o, s, image_id))
    return postprocess(dets)


def corner_errors(arrays: dict, out: dict) -> np.ndarray:
    """Per-positive mean corner distance in pixels, minimized over cyclic vertex order."""
    pos = arrays["cls"] >= 0
    if not pos.any():
        return np.zeros(0)
    s = arrays["stride"][pos][:, None, None]
    pred = out["t"][pos].reshape(-1, 4, 2) * s
    tgt = arrays["reg"][pos].reshape(-1, 4, 2) * s
    errs = [np.linalg.norm(pred - np.roll(tgt, -k, axis=1), axis=2).mean(axis=1) for k in range(4)]
    return np.min(errs, axis=0)


def evaluate_model(model: ToyModel, config: TrainConfig) -> dict:
    scenes, arrays = validation_set(config)
    dets_by_image, gts_by_image = {}, {}
    errs, ctr_pred, ctr_tgt = [], [], []
    for scene, arr in zip(scenes, arrays):
        out, _ = model.forward(arr["x"])
        iid = scene.annotations.image_id
        dets_by_image[iid] = detections_for_scene(model, arr, iid, config.image_size, out)
        gts_by_image[iid] = [GroundTruth(o.quad, scene.annotations.class_id(o.class_name), o.difficult)
                             for o in scene.annotations.objects]
        errs.append(corner_errors(arr, out))
        if out["ctr_prob"] is not None:
            pos = arr["cls"] >= 0
            ctr_pred.append(out["ctr_prob"][pos])
            ctr_tgt.append(arr["ctr"][pos])
    aps, m, match = evaluate(dets_by_image, gts_by_image, 0.5, class_ids=range(len(TOY_CLASSES)))
    metrics = {"map": m, "aps": aps, "corner_l2": float(np.concatenate(errs).mean()), "match": match}
    if ctr_pred:
        a, b = np.concatenate(ctr_pred), np.concatenate(ctr_tgt)
        metrics["ctr_corr"] = float(np.corrcoef(a, b)[0, 1]) if a.std() > 0 else 0.0
    return metrics


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"QDCK"
VERSION = 1


def save_checkpoint(model: ToyModel, path) -> None:
    """Flat little-endian binary: magic, version, count, then per array
    (name length, name, ndim, dims, float64 data)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(model.params)))
        for name, arr in model.params.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ParseError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    off = 12
    params = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + n].decode("utf-8")
        off += n
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    return params
