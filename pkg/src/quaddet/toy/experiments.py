"""Multi-seed comparisons of strategies, center-ness modes and tower depth.

Every training run is memoized on its (frozen, hashable) TrainConfig, so the
comparison, the capacity sweep and the seed study can share runs within one
process without changing any result.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..evaluation import MatchResult, collect_heatmap
from ..raster import to_bytes, write_pnm
from ..strategies import StrategyKind
from .train import TrainConfig, train


class RunRecord(NamedTuple):
    config: TrainConfig
    map: float
    corner_l2: float
    params: int
    ctr_corr: float
    match: MatchResult
    model: object = None
    losses: tuple = ()    # training loss per iteration


_RUNS: dict = {}


def run_config(config: TrainConfig, progress=None) -> RunRecord:
    """Train one configuration (memoized) and keep its final validation metrics."""
    if config not in _RUNS:
        result = train(config)
        m = result.final
        _RUNS[config] = RunRecord(config, float(m["map"]), float(m["corner_l2"]),
                                  result.model.param_count, float(m.get("ctr_corr", float("nan"))),
                                  m["match"], result.model, tuple(r["loss"] for r in result.log))
        if progress is not None:
            progress(_RUNS[config])
    return _RUNS[config]


def clear_cache() -> None:
    _RUNS.clear()


def _mean_std(values) -> tuple:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), (float(v.std(ddof=1)) if v.size > 1 else 0.0)


def _csv_text(header_comment: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _config_comment(base: TrainConfig, seeds) -> str:
    return (f"seeds={' '.join(str(s) for s in seeds)} iterations={base.iterations} "
            f"train_scenes={base.train_scenes} val_scenes={base.val_scenes} val_seed={base.val_seed}")


# -- strategy x center-ness comparison ----------------------------------------

ROW_COLUMNS = ("strategy", "mode", "seed", "map", "corner_l2", "params", "ctr_corr")
SUMMARY_COLUMNS = ("strategy", "mode", "n", "map_mean", "map_std", "corner_l2_mean", "corner_l2_std")


@dataclass
class ComparisonReport:
    base: TrainConfig
    seeds: tuple
    rows: list = field(default_factory=list)       # one dict per (strategy, mode, seed)
    matches: dict = field(default_factory=dict)    # (strategy, mode) -> pooled MatchResult

    @property
    def summary(self) -> list:
        out = []
        keys = list(dict.fromkeys((r["strategy"], r["mode"]) for r in self.rows))
        for strategy, mode in keys:
            sel = [r for r in self.rows if r["strategy"] == strategy and r["mode"] == mode]
            mm, ms = _mean_std([r["map"] for r in sel])
            cm, cs = _mean_std([r["corner_l2"] for r in sel])
            out.append({"strategy": strategy, "mode": mode, "n": len(sel), "map_mean": mm, "map_std": ms,
                        "corner_l2_mean": cm, "corner_l2_std": cs})
        return out

    def mean(self, strategy: str, mode: str, metric: str = "map") -> float:
        for r in self.summary:
            if r["strategy"] == strategy and r["mode"] == mode:
                return r[f"{metric}_mean"]
        raise KeyError((strategy, mode))

    def gap(self, a: tuple, b: tuple, metric: str = "map") -> float:
        """mean(metric | a) - mean(metric | b) for (strategy, mode) pairs."""
        return self.mean(*a, metric) - self.mean(*b, metric)

    def to_csv(self) -> str:
        return _csv_text(_config_comment(self.base, self.seeds), ROW_COLUMNS, self.rows)

    def summary_csv(self) -> str:
        return _csv_text(_config_comment(self.base, self.seeds), SUMMARY_COLUMNS, self.summary)

    def heatmaps(self, strategy: str = "direct", bins=(50, 50)) -> dict:
        """Confidence-vs-IoU TP heatmaps per center-ness mode, pooled over seeds."""
        return {mode: collect_heatmap(m, bins=bins) for (s, mode), m in self.matches.items() if s == strategy}

    def write(self, out_dir) -> list:
        """CSV reports, heatmaps (PGM, text grid, PNG) and bar charts.  Returns written paths."""
        from ..plotting import comparison_figure, heatmap_figure

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []

        def put(name, text):
            p = out / name
            p.write_text(text)
            paths.append(p)

        put("comparison.csv", self.to_csv())
        put("comparison_summary.csv", self.summary_csv())
        for metric in ("map", "corner_l2"):
            p = out / f"comparison_{metric}.png"
            comparison_figure(self.summary, p, metric)
            paths.append(p)
        for mode, grid in self.heatmaps().items():
            stem = f"heatmap_direct_{mode}"
            put(f"{stem}.txt", grid.to_text())
            # row 0 of the raster is the highest confidence bin
            write_pnm(out / f"{stem}.pgm", to_bytes(grid.counts[::-1].astype(np.float64), 0.0,
                                                    max(1.0, float(grid.counts.max()))))
            heatmap_figure(grid.counts, out / f"{stem}.png", f"direct / {mode}")
            paths += [out / f"{stem}.pgm", out / f"{stem}.png"]
        return paths


def run_comparison(strategies=("direct", "center-to-corner"), modes=("none", "oriented"), seeds=range(5),
                   base: TrainConfig | None = None, progress=None) -> ComparisonReport:
    """Train every (strategy, mode, seed) combination and collect final validation metrics."""
    base = base or TrainConfig()
    seeds = tuple(int(s) for s in seeds)
    report = ComparisonReport(base, seeds)
    for strategy in (StrategyKind.parse(s).value for s in strategies):
        for mode in modes:
            records = []
            for seed in seeds:
                rec = run_config(replace(base, strategy=strategy, centerness=mode, seed=seed), progress)
                records.append(rec)
                report.rows.append({"strategy": strategy, "mode": mode, "seed": seed, "map": rec.map,
                                    "corner_l2": rec.corner_l2, "params": rec.params,
                                    "ctr_corr": rec.ctr_corr})
            report.matches[(strategy, mode)] = MatchResult.concatenate(r.match for r in records)
    return report


# -- capacity sweep ------------------------------------------------------------

CAPACITY_COLUMNS = ("depth", "params", "map", "seed")


@dataclass
class CapacityReport:
    base: TrainConfig
    seeds: tuple
    rows: list = field(default_factory=list)

    @property
    def depths(self) -> list:
        return sorted({r["depth"] for r in self.rows})

    def mean_std(self, depth: int) -> tuple:
        return _mean_std([r["map"] for r in self.rows if r["depth"] == depth])

    def params(self, depth: int) -> int:
        return next(r["params"] for r in self.rows if r["depth"] == depth)

    def deep_minus_best_shallow(self) -> float:
        """Mean mAP of the deepest tower minus the best mean mAP among shallower ones."""
        depths = self.depths
        if len(depths) < 2:
            raise ValueError("need at least two depths")
        return self.mean_std(depths[-1])[0] - max(self.mean_std(d)[0] for d in depths[:-1])

    def to_csv(self) -> str:
        return _csv_text(_config_comment(self.base, self.seeds), CAPACITY_COLUMNS, self.rows)

    def write(self, out_dir) -> list:
        from ..plotting import capacity_figure

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "capacity.csv").write_text(self.to_csv())
        depths = self.depths
        stats = [self.mean_std(d) for d in depths]
        capacity_figure(depths, [m for m, _ in stats], [s for _, s in stats], out / "capacity.png")
        return [out / "capacity.csv", out / "capacity.png"]


def capacity_sweep(depths=range(1, 9), seeds=range(5), base: TrainConfig | None = None,
                   progress=None) -> CapacityReport:
    """mAP of the direct strategy as the towers deepen; one row per (depth, seed)."""
    base = replace(base or TrainConfig(), strategy="direct")
    seeds = tuple(int(s) for s in seeds)
    report = CapacityReport(base, seeds)
    for depth in depths:
        for seed in seeds:
            rec = run_config(replace(base, tower_layers=int(depth), seed=seed), progress)
            report.rows.append({"depth": int(depth), "params": rec.params, "map": rec.map, "seed": seed})
    return report
