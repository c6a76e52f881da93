"""Conditional Embedding model: center and context towers, probabilities, loss and training.

Both towers see the scenario through the same three summaries, each with its
own weights: the object polygon and the grasp set go through a per-element
MLP head and a bidirectional GRU that is mean-pooled, and the map raster goes
through a small strided convolutional encoder. The center tower combines these
with the center grasp; the context tower runs a second bidirectional GRU over
the context grasps so every row sees its neighbours in the sequence.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import CorruptFile, Dataset, FormatVersionMismatch, LabeledScenario, negative_count
from .geometry import inverse_pose, rasterize_scene, transform_points
from .nn.layers import MLP, BiGRU, ConvEncoder, ParameterStore, load_weights, save_weights
from .nn.optim import AdamW, OptimizerConfig, PlateauScheduler
from .nn.tensor import ShapeMismatch, Tensor, concat, l2_normalize, log_sigmoid
from .scenario import Scenario

log = logging.getLogger(__name__)

__all__ = [
    "CEModelConfig",
    "CEModel",
    "ScenarioFeatures",
    "scenario_features",
    "encode_center",
    "encode_context_set",
    "conditional_probability",
    "pair_probability",
    "loss_from_probabilities",
    "training_loss",
    "draw_triples",
    "train",
    "save_model",
    "load_model",
    "MODEL_FORMAT",
    "MODEL_VERSION",
]

MODEL_FORMAT = "cograsp.ce_model"
MODEL_VERSION = 1
GRASP_FEATURES = 8
VERTEX_FEATURES = 4


@dataclass(frozen=True)
class CEModelConfig:
    embed_dim: int = 44
    temperature: float = 6.15e-2
    batch_size: int = 37
    epochs: int = 83
    alpha: float = 1.10
    raster_size: int = 64
    head_hidden: int = 64
    gru_hidden: int = 32
    conv_channels: tuple = (8, 16, 32)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.raster_size < 8:
            raise ValueError("batch_size >= 1, epochs >= 0 and raster_size >= 8 required")
        if isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerConfig(**self.optimizer))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CEModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ScenarioFeatures:
    vertices: np.ndarray  # (nv, VERTEX_FEATURES)
    grasps: np.ndarray  # (m, GRASP_FEATURES)
    raster: np.ndarray  # (1, R, R)


def scenario_features(scenario: Scenario, raster_size: int = 64) -> ScenarioFeatures:
    """Network inputs: map-normalized world coordinates plus object-frame coordinates in meters.

    The polygon is listed in canonical winding order from its lexicographically
    smallest vertex; grasps keep the grasp-set order (grasp index, then angle).
    """
    m = scenario.map
    ext = np.array(m.extent, dtype=float)
    org = np.array(m.origin, dtype=float)
    start = scenario.start_pose
    inv = inverse_pose(start)
    body_v = scenario.object.canonical_vertices()
    world_v = transform_points(start, body_v)
    verts = np.hstack([(world_v - org) / ext, body_v])
    if scenario.grasp_set:
        base = np.array([g.base for g in scenario.grasp_set], dtype=float)
        grasp = np.array([g.grasp for g in scenario.grasp_set], dtype=float)
        grasps = np.hstack([(base - org) / ext, (grasp - org) / ext,
                            transform_points(inv, base), transform_points(inv, grasp)])
    else:
        grasps = np.zeros((0, GRASP_FEATURES))
    raster = rasterize_scene(m, scenario.object, start, raster_size)[None, :, :].astype(float)
    return ScenarioFeatures(verts, grasps, raster)


class _Tower:
    """Scenario summary shared by the structure of both towers (weights are per tower)."""

    def __init__(self, store: ParameterStore, name: str, cfg: CEModelConfig, rng: np.random.Generator):
        h, gh = cfg.head_hidden, cfg.gru_hidden
        self.v_head = MLP(store, f"{name}.v_head", [VERTEX_FEATURES, h, h], rng)
        self.v_gru = BiGRU(store, f"{name}.v_gru", h, gh, rng)
        self.g_head = MLP(store, f"{name}.g_head", [GRASP_FEATURES, h, h], rng)
        self.g_gru = BiGRU(store, f"{name}.g_gru", h, gh, rng)
        self.conv = ConvEncoder(store, f"{name}.map", list(cfg.conv_channels), rng)
        self.summary_dim = 4 * gh + self.conv.out_dim

    def summary(self, f: ScenarioFeatures) -> Tensor:
        v = self.v_gru(self.v_head(Tensor(f.vertices))).mean(axis=0, keepdims=True)
        g = self.g_gru(self.g_head(Tensor(f.grasps))).mean(axis=0, keepdims=True)
        mp = self.conv(Tensor(f.raster))
        return concat([v, g, mp], axis=-1)  # (1, summary_dim)


def _tile(row: Tensor, n: int) -> Tensor:
    return Tensor(np.ones((n, 1))) @ row


class CEModel:
    """Parameters of both towers; two independent networks."""

    def __init__(self, cfg: CEModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or CEModelConfig()
        c = self.cfg
        rng = np.random.default_rng(seed)
        self.store = ParameterStore()
        h, gh, d = c.head_hidden, c.gru_hidden, c.embed_dim
        # center tower
        self.c_tower = _Tower(self.store, "center", c, rng)
        self.c_head = MLP(self.store, "center.g_center", [GRASP_FEATURES, h, h], rng)
        self.c_out = MLP(self.store, "center.out", [h + self.c_tower.summary_dim, h, d], rng)
        # context tower
        self.x_tower = _Tower(self.store, "context", c, rng)
        self.x_head = MLP(self.store, "context.g_context", [GRASP_FEATURES, h, h], rng)
        self.x_gru = BiGRU(self.store, "context.seq", h + self.x_tower.summary_dim, gh, rng)
        self.x_out = MLP(self.store, "context.out", [2 * gh, h, d], rng)

    def center_embeddings(self, f: ScenarioFeatures, centers) -> Tensor:
        centers = np.asarray(centers, dtype=int)
        s = self.c_tower.summary(f)
        hc = self.c_head(Tensor(f.grasps[centers]))
        z = self.c_out(concat([hc, _tile(s, len(centers))], axis=-1))
        return l2_normalize(z)

    def context_embeddings(self, f: ScenarioFeatures, subset=None) -> Tensor:
        rows = f.grasps if subset is None else f.grasps[np.asarray(subset, dtype=int)]
        if len(rows) == 0:
            raise ValueError("context subset must be nonempty")
        s = self.x_tower.summary(f)
        hx = self.x_head(Tensor(rows))
        seq = self.x_gru(concat([hx, _tile(s, len(rows))], axis=-1))
        return l2_normalize(self.x_out(seq))


# -- functional interface ----------------------------------------------------------------


def encode_center(g_index: int, scenario: Scenario, model: CEModel,
                  features: ScenarioFeatures | None = None) -> np.ndarray:
    f = features or scenario_features(scenario, model.cfg.raster_size)
    return model.center_embeddings(f, [g_index]).data[0]


def encode_context_set(subset, scenario: Scenario, model: CEModel,
                       features: ScenarioFeatures | None = None) -> np.ndarray:
    f = features or scenario_features(scenario, model.cfg.raster_size)
    return model.context_embeddings(f, subset).data


def conditional_probability(e_center: np.ndarray, e_context: np.ndarray) -> np.ndarray:
    """Softmax over the dot products of every context embedding with the center embedding."""
    z = np.asarray(e_context, dtype=float) @ np.asarray(e_center, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def pair_probability(e_center, e_context, tau: float) -> float | np.ndarray:
    """sigmoid(e_context . e_center / tau); vectorized over leading axes."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    dot = np.sum(np.asarray(e_center, dtype=float) * np.asarray(e_context, dtype=float), axis=-1)
    out = np.exp(-np.logaddexp(0.0, -dot / tau))
    return float(out) if np.ndim(out) == 0 else out


def loss_from_probabilities(p_pos, p_neg) -> float:
    """Weighted negative log-likelihood of one center from its pair probabilities."""
    p_pos = np.asarray(p_pos, dtype=float)
    p_neg = np.asarray(p_neg, dtype=float)
    w = len(p_pos) / len(p_neg) if len(p_neg) else 0.0
    return float(-(np.log(p_pos).sum() + w * np.log1p(-p_neg).sum()))


@dataclass
class Triple:
    scenario: int  # index into the caller's scenario list
    center: int
    positives: list[int]
    negatives: list[int]


def _center_loss(dots: Tensor, n_pos: int, n_neg: int, tau: float) -> Tensor:
    """Loss of one center given its dots, positives first."""
    sign = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    weight = np.concatenate([np.ones(n_pos), np.full(n_neg, n_pos / n_neg if n_neg else 0.0)])
    return -(log_sigmoid(dots * (sign / tau)) * weight).sum()


def training_loss(triples: list[Triple], features: list[ScenarioFeatures], model: CEModel) -> Tensor:
    """Mean weighted loss over the centers of ``triples`` (centers with no positives are skipped)."""
    tau = model.cfg.temperature
    by_scenario: dict[int, list[Triple]] = {}
    for t in triples:
        if t.positives:
            by_scenario.setdefault(t.scenario, []).append(t)
    losses = []
    for si, ts in sorted(by_scenario.items()):
        f = features[si]
        ec = model.center_embeddings(f, [t.center for t in ts])
        ex = model.context_embeddings(f)
        for k, t in enumerate(ts):
            idx = np.array(t.positives + t.negatives, dtype=int)
            dots = (ex[idx] @ ec[k].reshape(-1, 1)).reshape(-1)
            losses.append(_center_loss(dots, len(t.positives), len(t.negatives), tau))
    if not losses:
        return Tensor(0.0)
    total = losses[0]
    for x in losses[1:]:
        total = total + x
    return total * (1.0 / len(losses))


def draw_triples(scenarios: list[LabeledScenario], alpha: float, rng: np.random.Generator) -> list[Triple]:
    """One triple per center with a nonempty DC set, negatives drawn from ``rng``."""
    out = []
    for si, ls in enumerate(scenarios):
        k = negative_count(ls, alpha)
        for c in range(ls.m):
            dc = ls.dc_sets.get(c, [])
            if not dc:
                continue
            excluded = np.zeros(ls.m, dtype=bool)
            excluded[dc] = True
            excluded[c] = True
            pool = np.flatnonzero(~excluded)
            n = min(max(k - len(dc), 0), len(pool))
            neg = sorted(rng.choice(pool, size=n, replace=False).tolist()) if n else []
            out.append(Triple(si, c, list(dc), neg))
    return out


def _batches(triples: list[Triple], size: int, rng: np.random.Generator) -> list[list[Triple]]:
    """Shuffle scenarios, keep each scenario's centers together, cut into batches of ``size``."""
    by: dict[int, list[Triple]] = {}
    for t in triples:
        by.setdefault(t.scenario, []).append(t)
    flat = []
    for si in rng.permutation(sorted(by)):
        group = by[int(si)]
        flat.extend(group[i] for i in rng.permutation(len(group)))
    return [flat[i:i + size] for i in range(0, len(flat), size)]


def _mean_loss(model: CEModel, triples: list[Triple], features, size: int) -> float:
    if not triples:
        return float("nan")
    total, n = 0.0, 0
    for i in range(0, len(triples), size):
        chunk = triples[i:i + size]
        k = sum(1 for t in chunk if t.positives)
        if k:
            total += training_loss(chunk, features, model).item() * k
            n += k
    return total / n if n else float("nan")


def train(dataset: Dataset, cfg: CEModelConfig | None = None, seed: int = 0,
          history_path=None, model: CEModel | None = None) -> tuple[CEModel, list[dict]]:
    """Minibatch AdamW training with a plateau schedule on the validation loss.

    Negatives for training are redrawn every epoch from one seeded stream; the
    validation negatives are drawn once and kept fixed so the schedule sees a
    stable objective.
    """
    cfg = cfg or CEModelConfig()
    model = model or CEModel(cfg, seed)
    train_set = dataset.subset("train")
    if not train_set:
        raise ValueError("training split is empty")
    val_set = dataset.subset("val")
    f_train = [scenario_features(ls.scenario, cfg.raster_size) for ls in train_set]
    f_val = [scenario_features(ls.scenario, cfg.raster_size) for ls in val_set]
    rng = np.random.default_rng([seed, 1])
    val_triples = draw_triples(val_set, cfg.alpha, np.random.default_rng([seed, 2]))
    opt = AdamW(model.store, cfg.optimizer)
    sched = PlateauScheduler(opt.lr, cfg.optimizer.schedule_factor, cfg.optimizer.schedule_patience)
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        triples = draw_triples(train_set, cfg.alpha, rng)
        tot, n = 0.0, 0
        for batch in _batches(triples, cfg.batch_size, rng):
            model.store.zero_grad()
            loss = training_loss(batch, f_train, model)
            loss.backward()
            opt.step()
            tot += loss.item() * len(batch)
            n += len(batch)
        train_loss = tot / n if n else float("nan")
        val_loss = _mean_loss(model, val_triples, f_val, cfg.batch_size)
        lr_used = opt.lr
        if not math.isnan(val_loss):
            opt.lr = sched.step(val_loss)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr_used})
        log.info("epoch %d train %.5f val %.5f lr %.3g (%.1fs)", epoch, train_loss, val_loss, lr_used,
                 time.perf_counter() - t0)
    if history_path is not None:
        write_history(history, history_path)
    return model, history


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["val_loss"]), repr(h["lr"])])


def save_model(model: CEModel, path) -> None:
    save_weights(model.store.state(), path,
                 {"model_format": MODEL_FORMAT, "model_version": MODEL_VERSION, "config": model.cfg.to_dict()})


def load_model(path, expect: CEModelConfig | None = None) -> CEModel:
    """Rebuild the model from the embedded config; ``expect`` guards the embedding size."""
    state, doc = load_weights(path)
    if doc.get("model_format") != MODEL_FORMAT:
        raise CorruptFile(f"{path} does not hold a CE model")
    if doc.get("model_version") != MODEL_VERSION:
        raise FormatVersionMismatch(f"model version {doc.get('model_version')!r}, expected {MODEL_VERSION}")
    try:
        cfg = CEModelConfig.from_dict(doc["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"bad model config in {path}: {exc}") from exc
    if expect is not None and expect.embed_dim != cfg.embed_dim:
        raise ShapeMismatch(f"model file has d={cfg.embed_dim}, expected d={expect.embed_dim}")
    model = CEModel(cfg)
    model.store.load_state(state)
    return model
