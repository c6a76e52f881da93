"""End-to-end desk-scale benchmark: generate, label, split, train, evaluate.

Every stage writes its output into a cache directory under a key derived from
the configuration, so a repeated run with the same settings reuses the
labeled dataset and the trained model.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ce_model import CEModelConfig, load_model, save_model, train
from .dataset import generate_labels, load_dataset, save_dataset, split_dataset
from .evaluation import evaluate
from .generator import TemplateConfig, generate_benchmark
from .planner.trajectory import PlannerConfig

log = logging.getLogger(__name__)

__all__ = ["BenchmarkConfig", "run_benchmark", "config_key"]

# bump when labeling or training code changes in a way that invalidates cached results
CACHE_EPOCH = 1


@dataclass
class BenchmarkConfig:
    shapes: tuple = ("bar", "rectangle")
    sites_per_shape: int = 4
    orientations: int = 10
    seed: int = 0
    fractions: tuple = (0.7, 0.2, 0.1)
    trials: int = 10000
    template: TemplateConfig = field(default_factory=TemplateConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    model: CEModelConfig = field(default_factory=CEModelConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["template"] = self.template.to_dict()
        d["model"] = self.model.to_dict()
        d["shapes"] = list(self.shapes)
        d["fractions"] = list(self.fractions)
        return d


def config_key(d: dict) -> str:
    text = json.dumps({"cache_epoch": CACHE_EPOCH, **d}, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _label_stage(cfg: BenchmarkConfig, out: Path):
    ds_path, stats_path = out / "dataset.jsonl", out / "label_stats.json"
    if ds_path.exists() and stats_path.exists():
        return load_dataset(ds_path), json.loads(stats_path.read_text())
    t0 = time.perf_counter()
    scenarios = generate_benchmark(cfg.template, list(cfg.shapes), cfg.sites_per_shape, cfg.orientations, cfg.seed)
    labeled, times = [], []
    for k, sc in enumerate(scenarios):
        sid = f"{sc.meta['site_id']}-o{sc.meta['orientation_index']:02d}"
        ls = generate_labels(sc, None, cfg.planner, scenario_id=sid)
        times.extend(ls.stats.get("pair_seconds", []))
        labeled.append(ls)
        log.info("[%d/%d] %s m=%d pairs=%d feasible=%d", k + 1, len(scenarios), sid, ls.m,
                 ls.stats["pairs"], ls.stats["feasible"])
    ds = split_dataset(labeled, cfg.fractions, cfg.seed)
    save_dataset(ds, ds_path)
    stats = {"scenarios": len(labeled), "pairs_solved": len(times),
             "mean_pair_seconds": float(np.mean(times)) if times else 0.0,
             "max_pair_seconds": float(np.max(times)) if times else 0.0,
             "label_seconds": time.perf_counter() - t0,
             "feasible_pairs": int(sum(sum(len(v) for v in ls.dc_sets.values()) for ls in labeled) // 2)}
    stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return ds, stats


def run_benchmark(cache_dir, cfg: BenchmarkConfig | None = None) -> dict:
    """Run (or reuse) every stage; returns the evaluation report plus timing and paths."""
    cfg = cfg or BenchmarkConfig()
    d = cfg.to_dict()
    label_key = config_key({k: d[k] for k in ("shapes", "sites_per_shape", "orientations", "seed",
                                                "fractions", "template", "planner")})
    root = Path(cache_dir)
    ldir = root / f"labels-{label_key}"
    ldir.mkdir(parents=True, exist_ok=True)
    ds, stats = _label_stage(cfg, ldir)
    mdir = ldir / f"model-{config_key(d['model'] | {'seed': cfg.seed})}"
    mdir.mkdir(exist_ok=True)
    model_path, hist_path = mdir / "model.json", mdir / "history.csv"
    if model_path.exists() and hist_path.exists():
        model = load_model(model_path)
        train_seconds = json.loads((mdir / "train_time.json").read_text())["seconds"]
    else:
        t0 = time.perf_counter()
        model, _ = train(ds, cfg.model, cfg.seed, history_path=hist_path)
        train_seconds = time.perf_counter() - t0
        save_model(model, model_path)
        (mdir / "train_time.json").write_text(json.dumps({"seconds": train_seconds}) + "\n")
    report_path = mdir / f"report-{cfg.trials}.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
    else:
        report = evaluate(model, ds, "test", cfg.trials, cfg.seed, group_by="object_id")
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return {"report": report, "label_stats": stats, "train_seconds": train_seconds,
            "dataset": str(ldir / "dataset.jsonl"), "model": str(model_path), "history": str(hist_path),
            "split_sizes": {s: len(ds.subset(s)) for s in ("train", "val", "test")}}
