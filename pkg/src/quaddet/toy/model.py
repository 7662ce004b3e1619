"""Per-location network: pooled pixel windows -> trunk -> towers -> heads.

Everything is plain numpy with hand-written backpropagation.  Weights are
shared across pyramid levels because the input windows are stride-normalized.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..assignment import level_targets
from ..grid import FpnLevel, grid_shape
from ..strategies import IterativeHeadParams, StrategyKind, anchor_offsets, iterative_backward, iterative_forward

FINE_HALF = 4     # fine window: 2*4 cells of stride/2 pixels
COARSE_HALF = 3   # coarse window: 2*3+1 cells of stride pixels
FEATURE_OFFSET = 0.25


def feature_width(channels: int = 3) -> int:
    return ((2 * FINE_HALF) ** 2 + (2 * COARSE_HALF + 1) ** 2) * channels


def _pool(image, cell):
    h, w, c = image.shape
    if h % cell or w % cell:
        raise ValueError(f"image {h}x{w} not divisible by pooling cell {cell}")
    return image.reshape(h // cell, cell, w // cell, cell, c).mean(axis=(1, 3))


def pooled_level(image: np.ndarray, level: FpnLevel):
    """Zero-padded block means of the image at stride/2 and stride resolution.

    The padding is symmetric, so flips and quarter turns of the padded grids
    equal the padded grids of the transformed image.
    """
    s = level.stride
    img = np.asarray(image, dtype=np.float64) - FEATURE_OFFSET
    m, k = FINE_HALF, COARSE_HALF
    return (np.pad(_pool(img, s // 2), ((m, m), (m, m), (0, 0))),
            np.pad(_pool(img, s), ((k, k), (k, k), (0, 0))))


def window_features(fine: np.ndarray, coarse: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """(rows*cols, D) features from padded pooled grids, row-major over locations."""
    m, k = FINE_HALF, COARSE_HALF
    fw = sliding_window_view(fine, (2 * m, 2 * m), axis=(0, 1))   # (2*rows+1, 2*cols+1, C, 2m, 2m)
    fw = fw[1::2, 1::2][:rows, :cols]
    cw = sliding_window_view(coarse, (2 * k + 1, 2 * k + 1), axis=(0, 1))[:rows, :cols]
    out = np.empty((rows * cols, fw[0, 0].size + cw[0, 0].size))
    nf = fw[0, 0].size
    out[:, :nf] = fw.reshape(rows * cols, -1)
    out[:, nf:] = cw.reshape(rows * cols, -1)
    return out


def location_features(image: np.ndarray, level: FpnLevel) -> np.ndarray:
    """(rows*cols, D) window features for every location of ``level``, row-major."""
    h, w, _ = image.shape
    rows, cols = grid_shape(level, h, w)
    fine, coarse = pooled_level(image, level)
    return window_features(fine, coarse, rows, cols)


def scene_targets(annotations, image_h, image_w, levels, alpha: float = 4.0, centerness: str = "oriented"):
    cls_t, reg_t, ctr_t, cen_t, strides, owners = [], [], [], [], [], []
    for level in levels:
        lt = level_targets(annotations, level, image_h, image_w, alpha,
                           "oriented" if centerness == "none" else centerness)
        n = lt.class_ids.size
        cls_t.append(lt.class_ids.reshape(n))
        reg_t.append(lt.regression.reshape(n, 8))
        ctr_t.append(lt.centerness.reshape(n))
        cen_t.append(lt.center.reshape(n, 2))
        owners.append(lt.owner.reshape(n))
        strides.append(np.full(n, level.stride))
    return {
        "cls": np.concatenate(cls_t), "reg": np.concatenate(reg_t), "ctr": np.concatenate(ctr_t),
        "center": np.concatenate(cen_t), "stride": np.concatenate(strides), "owner": np.concatenate(owners),
    }


def scene_arrays(scene, levels, alpha: float = 4.0, centerness: str = "oriented"):
    """Features and targets of all levels of one scene as flat arrays."""
    h, w, _ = scene.image.shape
    out = scene_targets(scene.annotations, h, w, levels, alpha, centerness)
    out["x"] = np.concatenate([location_features(scene.image, level) for level in levels])
    return out


def _relu_stack(x, params, prefix, depth):
    acts = [x]
    h = x
    for i in range(depth):
        h = np.maximum(h @ params[f"{prefix}.{i}.W"] + params[f"{prefix}.{i}.b"], 0.0)
        acts.append(h)
    return acts


def _relu_stack_back(g, acts, params, prefix, depth, grads):
    for i in range(depth - 1, -1, -1):
        g = g * (acts[i + 1] > 0.0)
        grads[f"{prefix}.{i}.W"] = acts[i].T @ g
        grads[f"{prefix}.{i}.b"] = g.sum(axis=0)
        g = g @ params[f"{prefix}.{i}.W"].T
    return g


class ToyModel:
    """Trunk (1 ReLU layer) + classification / regression towers of ``tower_layers`` ReLU layers.

    The center-ness head sits on the regression tower; center-to-corner adds
    its own center tower and 2-output head.
    """

    def __init__(self, n_in, n_classes, strategy="direct", centerness="oriented", width=64,
                 tower_layers=2, rng=None, anchor_scale=4.0, prior=0.01):
        self.n_in = n_in
        self.n_classes = n_classes
        self.strategy = StrategyKind.parse(strategy)
        self.centerness = centerness
        self.width = width
        self.tower_layers = tower_layers
        self.anchor_scale = anchor_scale
        self.params = {}
        rng = rng if rng is not None else np.random.default_rng(0)
        self._init(rng, prior)

    # -- parameters ----------------------------------------------------------

    def _dense(self, rng, name, fan_in, fan_out, std=None):
        std = np.sqrt(2.0 / fan_in) if std is None else std
        self.params[f"{name}.W"] = rng.normal(0.0, std, (fan_in, fan_out))
        self.params[f"{name}.b"] = np.zeros(fan_out)

    def _init(self, rng, prior):
        f = self.width
        self._dense(rng, "trunk", self.n_in, f)
        towers = ["cls", "reg"] + (["center"] if self.strategy == StrategyKind.CENTER_TO_CORNER else [])
        for t in towers:
            for i in range(self.tower_layers):
                self._dense(rng, f"{t}.{i}", f, f)
        self._dense(rng, "cls.head", f, self.n_classes, std=0.01)
        self.params["cls.head.b"][:] = -np.log((1.0 - prior) / prior)
        if self.strategy == StrategyKind.ITERATIVE:
            for k in range(4):
                self._dense(rng, f"reg.iter{k}", f + 2 * k, 2, std=0.01)
        else:
            self._dense(rng, "reg.head", f, 8, std=0.01)
        if self.strategy == StrategyKind.CENTER_TO_CORNER:
            self._dense(rng, "center.head", f, 2, std=0.01)
        if self.centerness != "none":
            self._dense(rng, "ctr.head", f, 1, std=0.01)

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _iter_params(self):
        return IterativeHeadParams([self.params[f"reg.iter{k}.W"] for k in range(4)],
                                   [self.params[f"reg.iter{k}.b"] for k in range(4)])

    # -- forward / backward ----------------------------------------------------

    def forward(self, x):
        """Returns (outputs, cache).  Outputs: cls_prob, raw, t, center, ctr_prob."""
        from ..losses import sigmoid

        p = self.params
        L = self.tower_layers
        cache = {}
        h0 = np.maximum(x @ p["trunk.W"] + p["trunk.b"], 0.0)
        cache["x"], cache["h0"] = x, h0
        cache["cls"] = _relu_stack(h0, p, "cls", L)
        logits = cache["cls"][-1] @ p["cls.head.W"] + p["cls.head.b"]
        out = {"cls_prob": sigmoid(logits)}

        cache["reg"] = _relu_stack(h0, p, "reg", L)
        hr = cache["reg"][-1]
        if self.strategy == StrategyKind.ITERATIVE:
            raw, cache["iter_inputs"] = iterative_forward(hr, self._iter_params())
        else:
            raw = hr @ p["reg.head.W"] + p["reg.head.b"]
        out["raw"] = raw
        t = raw
        if self.strategy == StrategyKind.OFFSET:
            t = raw + anchor_offsets(self.anchor_scale)
        out["center"] = None
        if self.strategy == StrategyKind.CENTER_TO_CORNER:
            cache["center"] = _relu_stack(h0, p, "center", L)
            cen = cache["center"][-1] @ p["center.head.W"] + p["center.head.b"]
            out["center"] = cen
            t = raw + np.tile(cen, 4)
        out["t"] = t
        out["ctr_prob"] = None
        if self.centerness != "none":
            out["ctr_prob"] = sigmoid(hr @ p["ctr.head.W"] + p["ctr.head.b"])[:, 0]
        return out, cache

    def backward(self, out, cache, grad):
        """``grad`` holds dLoss/d(cls_prob, reg_pred, ctr_pred, center_pred) from total_loss."""
        p = self.params
        L = self.tower_layers
        g = {}
        pc = out["cls_prob"]
        dlog = grad["cls_prob"] * pc * (1.0 - pc)
        hc = cache["cls"][-1]
        g["cls.head.W"] = hc.T @ dlog
        g["cls.head.b"] = dlog.sum(axis=0)
        dh0 = _relu_stack_back(dlog @ p["cls.head.W"].T, cache["cls"], p, "cls", L, g)

        dt = grad["reg_pred"]
        hr = cache["reg"][-1]
        if self.strategy == StrategyKind.ITERATIVE:
            dhr, gw, gb = iterative_backward(dt, cache["iter_inputs"], self._iter_params())
            for k in range(4):
                g[f"reg.iter{k}.W"], g[f"reg.iter{k}.b"] = gw[k], gb[k]
        else:
            g["reg.head.W"] = hr.T @ dt
            g["reg.head.b"] = dt.sum(axis=0)
            dhr = dt @ p["reg.head.W"].T
        if self.centerness != "none":
            po = out["ctr_prob"]
            dz = (grad["ctr_pred"] * po * (1.0 - po))[:, None]
            g["ctr.head.W"] = hr.T @ dz
            g["ctr.head.b"] = dz.sum(axis=0)
            dhr = dhr + dz @ p["ctr.head.W"].T
        dh0 = dh0 + _relu_stack_back(dhr, cache["reg"], p, "reg", L, g)

        if self.strategy == StrategyKind.CENTER_TO_CORNER:
            dcen = dt.reshape(-1, 4, 2).sum(axis=1)
            if grad.get("center_pred") is not None:
                dcen = dcen + grad["center_pred"]
            hcn = cache["center"][-1]
            g["center.head.W"] = hcn.T @ dcen
            g["center.head.b"] = dcen.sum(axis=0)
            dh0 = dh0 + _relu_stack_back(dcen @ p["center.head.W"].T, cache["center"], p, "center", L, g)

        dh0 = dh0 * (cache["h0"] > 0.0)
        g["trunk.W"] = cache["x"].T @ dh0
        g["trunk.b"] = dh0.sum(axis=0)
        return g

    def loss(self, batch, weights=None, out_cache=None):
        """Forward + objective.  Returns (LossTerm, outputs, cache)."""
        from ..losses import LossWeights, total_loss

        out, cache = out_cache if out_cache is not None else self.forward(batch["x"])
        lt = total_loss(
            out["cls_prob"], batch["cls"], out["t"], batch["reg"],
            ctr_pred=out["ctr_prob"], ctr_target=batch["ctr"],
            center_pred=out["center"], center_target=batch["center"],
            weights=weights or LossWeights(), strategy=self.strategy,
        )
        return lt, out, cache

    def gradients(self, batch, weights=None):
        lt, out, cache = self.loss(batch, weights)
        return lt, self.backward(out, cache, lt.gradient)
