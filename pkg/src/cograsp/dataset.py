"""Oracle labels, Dynamic Context sets, negative sampling, splits and the dataset file.

Dataset file (JSON lines, optionally gzip-compressed when the path ends in
``.gz``)::

    {"format": "cograsp.dataset", "version": 1, "seed": s, "count": n}
    {"id": ..., "split": "train"|"val"|"test", "dc_sets": {"0": [..], ...}, "scenario": {...}}
    ...

Keys are sorted so identical datasets serialize to identical bytes.
"""

from __future__ import annotations

import gzip
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .planner.regions import CorridorError, RegionSequence, regions_for_scenario
from .planner.trajectory import PlannerConfig, solve_trajectory
from .scenario import Scenario

log = logging.getLogger(__name__)

__all__ = [
    "FORMAT",
    "VERSION",
    "FormatVersionMismatch",
    "CorruptFile",
    "LabeledScenario",
    "Dataset",
    "NegativeSampleSpec",
    "admissible_pairs",
    "generate_labels",
    "negative_count",
    "negative_sample",
    "split_dataset",
    "save_dataset",
    "load_dataset",
]

FORMAT = "cograsp.dataset"
VERSION = 1
SPLITS = ("train", "val", "test")


class FormatVersionMismatch(ValueError):
    pass


class CorruptFile(ValueError):
    pass


@dataclass
class LabeledScenario:
    scenario: Scenario
    dc_sets: dict[int, list[int]]
    id: str = ""
    # timing and counts from the labeling run; not serialized so files stay reproducible
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = self.scenario.m
        for i, js in self.dc_sets.items():
            if not 0 <= i < m or any(not 0 <= j < m for j in js):
                raise ValueError("DC index out of range")
            if i in js:
                raise ValueError(f"self-pair in DC set of {i}")

    @property
    def m(self) -> int:
        return self.scenario.m

    def label(self, i: int, j: int) -> int:
        return int(j in self.dc_sets.get(i, ()))

    def label_matrix(self) -> np.ndarray:
        y = np.zeros((self.m, self.m), dtype=np.int8)
        for i, js in self.dc_sets.items():
            y[i, js] = 1
        return y

    def max_dc(self) -> int:
        return max((len(v) for v in self.dc_sets.values()), default=0)

    def to_dict(self) -> dict:
        return {"id": self.id,
                "dc_sets": {str(i): list(map(int, v)) for i, v in sorted(self.dc_sets.items())},
                "scenario": self.scenario.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledScenario":
        sc = Scenario.from_dict(d["scenario"])
        dc = {int(k): [int(j) for j in v] for k, v in d["dc_sets"].items()}
        return cls(sc, dc, str(d.get("id", "")))


def admissible_pairs(scenario: Scenario, footprint_radius: float = 0.30) -> list[tuple[int, int]]:
    """Unordered pairs i < j that do not share a grasp point and whose base discs do not overlap."""
    g = scenario.grasp_set
    if not g:
        return []
    idx = np.array([c.grasp_index for c in g])
    base = np.array([c.base for c in g], dtype=float)
    d = np.linalg.norm(base[:, None, :] - base[None, :, :], axis=-1)
    ok = (idx[:, None] != idx[None, :]) & (d >= 2 * footprint_radius)
    i, j = np.nonzero(np.triu(ok, 1))
    return list(zip(i.tolist(), j.tolist()))


def _solve_pairs(args):
    scenario, regions, cfg, pairs = args
    out = []
    for i, j in pairs:
        t0 = time.perf_counter()
        try:
            ok = solve_trajectory(scenario, scenario.grasp_set[i], scenario.grasp_set[j], regions, cfg).feasible
        except Exception as exc:  # the oracle's answer for a failing solve is "not feasible"
            log.warning("pair (%d, %d) raised %s: %s; labeled 0", i, j, type(exc).__name__, exc)
            ok = False
        out.append((i, j, bool(ok), time.perf_counter() - t0))
    return out


def generate_labels(scenario: Scenario, regions: RegionSequence | None = None,
                    cfg: PlannerConfig | None = None, jobs: int = 1, scenario_id: str = "") -> LabeledScenario:
    """Label every admissible pair with the trajectory oracle and collect the DC sets.

    The oracle is exactly symmetric in the two robots, so each unordered pair
    is solved once and the label is written for both orders.
    """
    cfg = cfg or PlannerConfig()
    t0 = time.perf_counter()
    dc: dict[int, list[int]] = {i: [] for i in range(scenario.m)}
    pairs = admissible_pairs(scenario, cfg.base_footprint_radius)
    if regions is None:
        try:
            regions = regions_for_scenario(scenario, cfg.base_footprint_radius)
        except CorridorError as exc:
            log.warning("scenario %s: corridor unavailable (%s); all %d pairs labeled 0",
                        scenario_id or "?", exc, len(pairs))
            return LabeledScenario(scenario, dc, scenario_id,
                                   {"pairs": len(pairs), "solved": 0, "feasible": 0,
                                    "seconds": time.perf_counter() - t0, "pair_seconds": []})
    if jobs > 1 and len(pairs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [pairs[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(jobs) as ex:
            results = [r for part in ex.map(_solve_pairs, [(scenario, regions, cfg, c) for c in chunks])
                       for r in part]
    else:
        results = _solve_pairs((scenario, regions, cfg, pairs))
    for i, j, ok, _ in results:
        if ok:
            dc[i].append(j)
            dc[j].append(i)
    for v in dc.values():
        v.sort()
    times = [r[3] for r in results]
    n_feasible = sum(r[2] for r in results)
    stats = {"pairs": len(pairs), "solved": len(results), "feasible": n_feasible,
             "seconds": time.perf_counter() - t0, "pair_seconds": times}
    log.info("scenario %s: m=%d pairs=%d feasible=%d elapsed=%.1fs", scenario_id or "?",
             scenario.m, len(pairs), n_feasible, stats["seconds"])
    return LabeledScenario(scenario, dc, scenario_id, stats)


@dataclass(frozen=True)
class NegativeSampleSpec:
    alpha: float = 1.10
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")


def negative_count(labeled: LabeledScenario, alpha: float) -> int:
    """K = ceil(alpha * max |DC|), at least 1."""
    # the small slack keeps products like 1.1 * 10 = 11.000000000000002 from rounding up
    return max(1, math.ceil(alpha * labeled.max_dc() - 1e-9))


def negative_sample(labeled: LabeledScenario, center: int, spec: NegativeSampleSpec,
                    rng: np.random.Generator | None = None) -> list[int]:
    """Uniform draws without replacement from the grasps outside DC(center) and center itself.

    Without ``rng`` the draw is seeded from ``(spec.seed, center)``.
    """
    m = labeled.m
    if m < 2:
        raise ValueError("need at least two grasp configurations")
    dc = labeled.dc_sets.get(center, [])
    k = negative_count(labeled, spec.alpha)
    excluded = np.zeros(m, dtype=bool)
    excluded[dc] = True
    excluded[center] = True
    pool = np.flatnonzero(~excluded)
    n = min(max(k - len(dc), 0), len(pool))
    if n == 0:
        return []
    rng = rng if rng is not None else np.random.default_rng([spec.seed, center])
    return sorted(rng.choice(pool, size=n, replace=False).tolist())


@dataclass
class Dataset:
    scenarios: list[LabeledScenario]
    split: dict[str, str]
    seed: int = 0

    def subset(self, name: str) -> list[LabeledScenario]:
        return [s for s in self.scenarios if self.split.get(s.id) == name]


def split_dataset(scenarios: list[LabeledScenario], fractions=(0.7, 0.2, 0.1), seed: int = 0) -> Dataset:
    """Seeded shuffle, then contiguous train/val/test blocks; val and test round down."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ValueError("scenario ids must be unique")
    n = len(scenarios)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(n * fractions[1] + 1e-9))
    n_test = int(math.floor(n * fractions[2] + 1e-9))
    n_train = n - n_val - n_test
    split = {}
    for rank, k in enumerate(order):
        split[ids[k]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return Dataset(list(scenarios), split, seed)


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    lines = [json.dumps({"format": FORMAT, "version": VERSION, "seed": ds.seed,
                         "count": len(ds.scenarios)}, sort_keys=True)]
    for ls in ds.scenarios:
        d = ls.to_dict()
        d["split"] = ds.split.get(ls.id, "train")
        lines.append(json.dumps(d, sort_keys=True))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    if path.suffix == ".gz":
        # no file name and a zero timestamp in the header keep the bytes reproducible
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        raw = path.read_bytes()
        if path.suffix == ".gz":
            raw = gzip.decompress(raw)
        lines = [ln for ln in raw.decode("utf-8").splitlines() if ln.strip()]
    except (OSError, EOFError, UnicodeDecodeError, gzip.BadGzipFile) as exc:
        raise CorruptFile(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise CorruptFile(f"{path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"bad header in {path}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise CorruptFile(f"{path} is not a dataset file")
    if header.get("version") != VERSION:
        raise FormatVersionMismatch(f"dataset version {header.get('version')!r}, expected {VERSION}")
    if header.get("count") != len(lines) - 1:
        raise CorruptFile(f"{path}: header announces {header.get('count')} scenarios, found {len(lines) - 1}")
    scenarios, split = [], {}
    for n, ln in enumerate(lines[1:], start=2):
        try:
            d = json.loads(ln)
            ls = LabeledScenario.from_dict(d)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"{path}:{n}: {exc}") from exc
        if d.get("split") not in SPLITS:
            raise CorruptFile(f"{path}:{n}: bad split {d.get('split')!r}")
        scenarios.append(ls)
        split[ls.id] = d["split"]
    return Dataset(scenarios, split, int(header.get("seed", 0)))
