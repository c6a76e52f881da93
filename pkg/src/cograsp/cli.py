"""Command-line entry point: ``cograsp <command> [options]``.

Exit codes: 0 success, 2 invalid input or configuration, 3 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

log = logging.getLogger("cograsp")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

TRAINING_DEFAULTS = """training defaults (override with flags or the config file):
  embed size d            44
  temperature tau         6.15e-2
  batch size              37
  epochs                  83
  negative scale alpha    1.10
  learning rate           2.61e-4 (AdamW)
  weight decay            1e-4
  LR-schedule factor      0.3741
  schedule patience       3 epochs
"""


class InvalidInput(Exception):
    """Bad user input: reported with exit code 2."""


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise InvalidInput(f"no such file or directory: {path}")
    return p


def _load_json(path: str) -> dict:
    try:
        return json.loads(_existing(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON ({exc})") from exc


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill options from ``--config``; flags given on the command line win. Unknown keys are errors."""
    if not getattr(args, "config", None):
        return
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        raise InvalidInput("config file must hold a JSON object")
    allowed = {a.dest for a in parser._actions} - {"help", "config", "command", "func"}
    unknown = set(cfg) - allowed
    if unknown:
        raise InvalidInput(f"unknown config keys for '{args.command}': {sorted(unknown)}")
    explicit = set(getattr(args, "_explicit", ()))
    for k, v in cfg.items():
        if k not in explicit:
            setattr(args, k, v)


def _sub_dataclass(cls, overrides: dict | None, base=None):
    if not overrides:
        return base if base is not None else cls()
    names = {f.name for f in fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise InvalidInput(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return replace(base, **overrides) if base is not None else cls(**overrides)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"{cls.__name__}: {exc}") from exc


# -- commands ---------------------------------------------------------------------------


def cmd_gen_scenarios(args) -> int:
    from .generator import SHAPES, TemplateConfig, generate_site

    tcfg = _sub_dataclass(TemplateConfig, args.template)
    shapes = args.shapes.split(",") if isinstance(args.shapes, str) else list(args.shapes)
    for s in shapes:
        if s not in SHAPES:
            raise InvalidInput(f"unknown shape {s!r}; known: {sorted(SHAPES)}")
    if tcfg.passage_width != args.passage_width:
        tcfg = replace(tcfg, passage_width=args.passage_width)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    n = 0
    for shape in shapes:
        for s in range(args.sites):
            site = f"{shape}-{s}"
            for k, sc in enumerate(generate_site(tcfg, shape, args.count, rng, site)):
                (out / f"{site}-o{k:02d}.json").write_text(sc.to_json() + "\n")
                n += 1
    log.info("wrote %d scenarios to %s", n, out)
    return EXIT_OK


def _scenario_files(path: Path) -> list[Path]:
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise InvalidInput(f"no scenario files in {path}")
    return files


def cmd_label(args) -> int:
    from .dataset import generate_labels, save_dataset, split_dataset
    from .planner.trajectory import PlannerConfig
    from .scenario import load_scenario

    files = _scenario_files(_existing(args.scenarios))
    pcfg = _sub_dataclass(PlannerConfig, args.planner)
    fractions = tuple(float(x) for x in str(args.split).split(",")) if not isinstance(args.split, list) \
        else tuple(args.split)
    labeled, pair_times = [], []
    for f in files:
        try:
            sc = load_scenario(f, validate_schema=True)
        except Exception as exc:
            raise InvalidInput(f"{f}: {exc}") from exc
        t0 = time.perf_counter()
        ls = generate_labels(sc, None, pcfg, jobs=args.jobs, scenario_id=f.stem)
        pair_times.extend(ls.stats.get("pair_seconds", []))
        log.info("%s: m=%d pairs=%d feasible=%d %.1fs", f.stem, ls.m, ls.stats.get("pairs", 0),
                 ls.stats.get("feasible", 0), time.perf_counter() - t0)
        labeled.append(ls)
    try:
        ds = split_dataset(labeled, fractions, args.seed)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    save_dataset(ds, args.out)
    if args.stats:
        Path(args.stats).write_text(json.dumps({
            "scenarios": len(labeled), "pairs": len(pair_times),
            "mean_pair_seconds": float(np.mean(pair_times)) if pair_times else 0.0,
            "max_pair_seconds": float(np.max(pair_times)) if pair_times else 0.0,
        }, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _model_config(args):
    from .ce_model import CEModelConfig
    from .nn.optim import OptimizerConfig

    over = dict(args.model or {})
    opt = over.pop("optimizer", None)
    for key in ("epochs", "batch_size", "embed_dim", "temperature", "alpha"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    cfg = _sub_dataclass(CEModelConfig, over)
    lr = getattr(args, "learning_rate", None)
    if opt or lr is not None:
        opt = dict(opt or {})
        if lr is not None:
            opt["learning_rate"] = lr
        cfg = replace(cfg, optimizer=_sub_dataclass(OptimizerConfig, opt))
    return cfg


def cmd_train(args) -> int:
    from .ce_model import save_model, train
    from .dataset import load_dataset

    ds = load_dataset(_existing(args.dataset))
    cfg = _model_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    history = args.history or str(out.with_name("history.csv"))
    model, _ = train(ds, cfg, args.seed, history_path=history)
    save_model(model, out)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .ce_model import load_model
    from .dataset import load_dataset
    from .evaluation import evaluate

    ds = load_dataset(_existing(args.dataset))
    model = load_model(_existing(args.model))
    report = evaluate(model, ds, args.split, args.trials, args.seed, group_by=args.group_by)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    agg = report["aggregate"]
    log.info("top1 %.3f top3 %.3f top5 %.3f (random %.3f %.3f %.3f)", agg.get("top1", 0), agg.get("top3", 0),
             agg.get("top5", 0), agg.get("random_top1", 0), agg.get("random_top3", 0), agg.get("random_top5", 0))
    return EXIT_OK


def cmd_rank(args) -> int:
    from .ce_model import load_model, pair_probability
    from .evaluation import scenario_affinity
    from .dataset import LabeledScenario
    from .ranking import top_k_pairs
    from .scenario import load_scenario

    sc = load_scenario(_existing(args.scenario))
    if not sc.grasp_set:
        raise InvalidInput("scenario has no grasp set")
    if args.top_k < 1:
        raise InvalidInput("--top-k must be >= 1")
    model = load_model(_existing(args.model))
    a, ec, ex, _ = scenario_affinity(model, LabeledScenario(sc, {}))
    rows = []
    for i, j in top_k_pairs(a, args.top_k):
        rows.append({"center": i, "context": j, "affinity": float(a[i, j]),
                     "probability": pair_probability(ec[i], ex[j], model.cfg.temperature)})
    text = json.dumps(rows, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_plan(args) -> int:
    from .planner.regions import regions_for_scenario
    from .planner.trajectory import PlannerConfig, solve_trajectory
    from .scenario import load_scenario

    sc = load_scenario(_existing(args.scenario))
    i, j = args.pair
    if not (0 <= i < sc.m and 0 <= j < sc.m) or i == j:
        raise InvalidInput(f"pair ({i}, {j}) is not two distinct grasp indices below {sc.m}")
    pcfg = _sub_dataclass(PlannerConfig, args.planner)
    regions = regions_for_scenario(sc, pcfg.base_footprint_radius)
    sol = solve_trajectory(sc, sc.grasp_set[i], sc.grasp_set[j], regions, pcfg)
    d = sol.to_dict()
    d["pair"] = [i, j]
    Path(args.out).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    log.info("pair (%d, %d): feasible=%s objective=%.4f", i, j, sol.feasible, sol.objective_value)
    return EXIT_OK


def cmd_render(args) -> int:
    from .planner.trajectory import TrajectorySolution
    from .render import render_svg
    from .scenario import load_scenario

    sc = load_scenario(_existing(args.scenario))
    traj, pair = None, None
    if args.trajectory:
        d = _load_json(args.trajectory)
        traj = TrajectorySolution.from_dict(d)
        pair = tuple(d["pair"]) if "pair" in d else None
    if args.pair:
        pair = tuple(args.pair)
    Path(args.out).write_text(render_svg(sc, traj, pair, title=Path(args.scenario).stem))
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from exc


class _HelpFormatter(argparse.RawDescriptionHelpFormatter, argparse.ArgumentDefaultsHelpFormatter):
    """Keeps the epilog layout and shows defaults only where there is one."""

    def _get_help_string(self, action):
        if action.default is None or action.default is argparse.SUPPRESS:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(prog="cograsp", description="Cooperative grasp-pair ranking toolkit.",
                                epilog=TRAINING_DEFAULTS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--log-level", default="INFO", help="logging level")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, epilog=None):
        sp = sub.add_parser(name, help=help_, formatter_class=fmt, epilog=epilog)
        sp.add_argument("--config", help="JSON file with option values (keys are option names)")
        sp.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        sp.set_defaults(func=func)
        return sp

    g = add("gen-scenarios", cmd_gen_scenarios, "generate two-room transport scenarios")
    g.add_argument("--out", required=False, default="scenarios", help="output directory")
    g.add_argument("--shapes", default="bar,rectangle", help="comma-separated shape names")
    g.add_argument("--sites", type=int, default=3, help="maps per shape")
    g.add_argument("--count", type=int, default=24, help="start orientations per map")
    g.add_argument("--passage-width", type=float, default=0.65, help="passage width in meters")
    g.add_argument("--template", type=_json_arg, default=None, help="JSON overrides of the map template")

    lb = add("label", cmd_label, "label grasp pairs with the trajectory oracle")
    lb.add_argument("--scenarios", required=False, default="scenarios", help="scenario directory or file")
    lb.add_argument("--out", default="dataset.jsonl", help="dataset file (.jsonl or .jsonl.gz)")
    lb.add_argument("--jobs", type=int, default=1, help="worker processes per scenario")
    lb.add_argument("--split", default="0.7,0.2,0.1", help="train,val,test fractions")
    lb.add_argument("--stats", default=None, help="optional JSON file for timing statistics")
    lb.add_argument("--planner", type=_json_arg, default=None, help="JSON overrides of the planner config")

    tr = add("train", cmd_train, "train the embedding model", epilog=TRAINING_DEFAULTS)
    tr.add_argument("--dataset", default="dataset.jsonl", help="dataset file")
    tr.add_argument("--out", default="model.json", help="model file")
    tr.add_argument("--history", default=None, help="history CSV (default: history.csv next to the model)")
    tr.add_argument("--epochs", type=int, default=None, help="epochs (default 83)")
    tr.add_argument("--batch-size", type=int, default=None, help="batch size (default 37)")
    tr.add_argument("--embed-dim", type=int, default=None, help="embedding size d (default 44)")
    tr.add_argument("--temperature", type=float, default=None, help="temperature tau (default 6.15e-2)")
    tr.add_argument("--alpha", type=float, default=None, help="negative sampling scale (default 1.10)")
    tr.add_argument("--learning-rate", type=float, default=None, help="AdamW learning rate (default 2.61e-4)")
    tr.add_argument("--model", type=_json_arg, default=None, help="JSON overrides of the model config")

    ev = add("eval", cmd_eval, "evaluate a model on a dataset split")
    ev.add_argument("--dataset", default="dataset.jsonl", help="dataset file")
    ev.add_argument("--model", default="model.json", help="model file")
    ev.add_argument("--out", default="report.json", help="report file")
    ev.add_argument("--split", default="test", choices=["train", "val", "test"], help="split to evaluate")
    ev.add_argument("--trials", type=int, default=10000, help="random-baseline trials per scenario")
    ev.add_argument("--group-by", default=None, help="scenario meta key to group results by")
    ev.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; evaluation is fast")

    rk = add("rank", cmd_rank, "rank grasp pairs of one scenario")
    rk.add_argument("--scenario", required=True, help="scenario file")
    rk.add_argument("--model", default="model.json", help="model file")
    rk.add_argument("--top-k", type=int, default=5, help="number of pairs to output")
    rk.add_argument("--out", default=None, help="output JSON (default: stdout)")

    pl = add("plan", cmd_plan, "plan the joint trajectory for one grasp pair")
    pl.add_argument("--scenario", required=True, help="scenario file")
    pl.add_argument("--pair", type=int, nargs=2, required=True, metavar=("I", "J"), help="grasp indices")
    pl.add_argument("--out", default="trajectory.json", help="trajectory file")
    pl.add_argument("--planner", type=_json_arg, default=None, help="JSON overrides of the planner config")

    rd = add("render", cmd_render, "draw a scenario (and trajectory) as SVG")
    rd.add_argument("--scenario", required=True, help="scenario file")
    rd.add_argument("--trajectory", default=None, help="trajectory file from 'plan'")
    rd.add_argument("--pair", type=int, nargs=2, default=None, metavar=("I", "J"), help="pair to highlight")
    rd.add_argument("--out", default="scene.svg", help="SVG file")
    return p


def _explicit_dests(parser: argparse.ArgumentParser, argv: list[str]) -> set[str]:
    """Option destinations that appear literally on the command line."""
    flags = {}
    for sp in parser._subparsers._group_actions[0].choices.values():
        for a in sp._actions:
            for s in a.option_strings:
                flags[s] = a.dest
    return {flags[a.split("=")[0]] for a in argv if a.split("=")[0] in flags}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args._explicit = _explicit_dests(parser, argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        _apply_config(args, sub)
        return args.func(args)
    except InvalidInput as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        from .dataset import CorruptFile, FormatVersionMismatch

        if isinstance(exc, (CorruptFile, FormatVersionMismatch)):
            log.error("%s", exc)
            return EXIT_INVALID
        log.exception("command failed: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
