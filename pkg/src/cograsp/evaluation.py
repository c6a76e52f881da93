"""Model evaluation over a dataset split: top-k success, pair classification, random baseline."""

from __future__ import annotations

import numpy as np

from .ce_model import CEModel, pair_probability, scenario_features
from .dataset import Dataset, LabeledScenario
from .ranking import (DegenerateLabels, admissible_mask, affinity_matrix, best_threshold_by_f1,
                      classification_metrics, random_baseline, random_baseline_exact, top_k_success)

__all__ = ["scenario_embeddings", "scenario_affinity", "evaluate", "REFERENCE_THRESHOLD"]

REFERENCE_THRESHOLD = 0.64
K_VALUES = (1, 3, 5)


def scenario_embeddings(model: CEModel, ls: LabeledScenario) -> tuple[np.ndarray, np.ndarray]:
    """Center embeddings of every grasp and context embeddings over the full grasp set."""
    f = scenario_features(ls.scenario, model.cfg.raster_size)
    ec = model.center_embeddings(f, np.arange(ls.m)).data
    ex = model.context_embeddings(f).data
    return ec, ex


def scenario_affinity(model: CEModel, ls: LabeledScenario, footprint: float = 0.30):
    ec, ex = scenario_embeddings(model, ls)
    mask = admissible_mask(ls.scenario, footprint)
    return affinity_matrix(ec, ex, mask), ec, ex, mask


def _pair_scores(model: CEModel, ls: LabeledScenario, ec, ex, mask):
    ii, jj = np.nonzero(~mask & ~np.eye(ls.m, dtype=bool))
    p = pair_probability(ec[ii], ex[jj], model.cfg.temperature)
    y = ls.label_matrix()[ii, jj]
    return np.atleast_1d(p), y


def evaluate(model: CEModel, dataset: Dataset, split: str = "test", trials: int = 10000, seed: int = 0,
             threshold_split: str = "val", group_by: str | None = None) -> dict:
    """Report dict for ``split``; the F1 threshold is chosen on ``threshold_split`` when it has both classes."""
    per, scores, labels = [], [], []
    base_rng = np.random.SeedSequence(seed)
    scenarios = dataset.subset(split)
    for n, (ls, ss) in enumerate(zip(scenarios, base_rng.spawn(len(scenarios)))):
        a, ec, ex, mask = scenario_affinity(model, ls)
        p, y = _pair_scores(model, ls, ec, ex, mask)
        scores.append(p)
        labels.append(y)
        row = {"id": ls.id, "m": ls.m, "feasible_pairs": int(y.sum()), "admissible_pairs": int(len(y)),
               "meta": ls.scenario.meta}
        sub_seed = int(ss.generate_state(1)[0])
        for k in K_VALUES:
            row[f"top{k}"] = bool(top_k_success(a, ls.dc_sets, k))
            row[f"random_top{k}"] = random_baseline(ls.m, ls.dc_sets, k, trials, sub_seed, mask)
            row[f"random_exact_top{k}"] = random_baseline_exact(ls.m, ls.dc_sets, k, mask)
        per.append(row)
    report = {"split": split, "scenarios": len(per), "trials": trials, "seed": seed, "per_scenario": per}
    report["aggregate"] = _aggregate(per)
    if group_by:
        groups: dict = {}
        for row in per:
            groups.setdefault(str(row["meta"].get(group_by)), []).append(row)
        report["groups"] = {g: _aggregate(rows) for g, rows in sorted(groups.items())}
    s = np.concatenate(scores) if scores else np.zeros(0)
    y = np.concatenate(labels) if labels else np.zeros(0, dtype=int)
    thr, source = REFERENCE_THRESHOLD, "reference"
    if threshold_split:
        tv = []
        for ls in dataset.subset(threshold_split):
            _, ec, ex, mask = scenario_affinity(model, ls)
            tv.append(_pair_scores(model, ls, ec, ex, mask))
        if tv:
            try:
                thr = best_threshold_by_f1(np.concatenate([t[0] for t in tv]), np.concatenate([t[1] for t in tv]))
                source = f"best F1 on {threshold_split}"
            except DegenerateLabels:
                pass
    if len(y):
        report["metrics"] = classification_metrics(s, y, thr).to_dict()
        report["metrics"]["threshold_source"] = source
        report["metrics_at_reference"] = classification_metrics(s, y, REFERENCE_THRESHOLD).to_dict()
    return report


def _aggregate(rows: list[dict]) -> dict:
    """Unweighted means over scenarios."""
    out = {"scenarios": len(rows)}
    if not rows:
        return out
    for k in K_VALUES:
        out[f"top{k}"] = float(np.mean([r[f"top{k}"] for r in rows]))
        out[f"random_top{k}"] = float(np.mean([r[f"random_top{k}"] for r in rows]))
        out[f"random_exact_top{k}"] = float(np.mean([r[f"random_exact_top{k}"] for r in rows]))
    return out
