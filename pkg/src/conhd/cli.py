"""``conhd`` command line: diffuse | gen | train | eval | approx | bench | check.

Every command reads a strict JSON config, applies ``--seed`` and
``--override key=value`` on top, writes ``resolved_config.json`` into the
output directory and only then starts working. Exit codes: 0 success,
2 config error, 3 runtime error, 4 verification failure. Failures print a
single JSON object on stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import re
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("conhd")


class ConfigError(Exception):
    pass


class VerificationError(Exception):
    def __init__(self, message, failed):
        super().__init__(message)
        self.failed = failed


# ---------------------------------------------------------------------------
# config schemas: section -> {key: default}; ``None`` defaults accept null or a value


def _dataclass_defaults(cls, drop=("seed",)):
    out = {}
    for f in fields(cls):
        if f.name in drop:
            continue
        default = f.default
        out[f.name] = list(default) if isinstance(default, tuple) else default
    return out


def _model_defaults():
    from .neural.model import ModelConfig

    return _dataclass_defaults(ModelConfig)


def _schemas():
    from .bench import BenchConfig
    from .diffusion import DiffusionConfig
    from .enc.pipeline import ApproxConfig, TrainConfig
    from .verify import CHECK_DEFAULTS

    diffusion = _dataclass_defaults(DiffusionConfig)
    return {
        "diffuse": {
            "hypergraph": "", "features": "", "snapshot_every": None, "plot": True,
            "diffusion": diffusion,
        },
        "gen": {
            "kind": "", "hypergraph": None, "features": None,
            "n": 200, "m": 300, "edge_sizes": [2, 6], "communities": 4, "feature_noise": 0.5,
            "variants": 5, "proportions": [0.6, 0.2, 0.2], "noise_features": 0,
            "diffusion_kind": "CE", "samples": 100, "n_val": 20, "n_test": 20,
        },
        "train": {
            "dataset": "", "plot": True, "model": _model_defaults(), "train": _dataclass_defaults(TrainConfig),
            "embeddings": {"export": False, "nodes": None, "edges": None},
        },
        "eval": {"dataset": "", "checkpoint": "", "split": "test"},
        "approx": {
            "dataset": None, "kind": "CE", "n": 100, "m": 150, "edge_sizes": [2, 6], "plot": True,
            "model": {**_model_defaults(), "d": 64, "dropout": 0.0},
            "approx": _dataclass_defaults(ApproxConfig),
        },
        "bench": {
            "plot": True, "model": {**_model_defaults(), "d": 32, "dropout": 0.0},
            "bench": _dataclass_defaults(BenchConfig),
        },
        "check": {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in CHECK_DEFAULTS.items()},
    }


REQUIRED = {
    "diffuse": ["hypergraph", "features"],
    "gen": ["kind"],
    "train": ["dataset"],
    "eval": ["dataset", "checkpoint"],
}


def _key_pos(text: str, key: str, start: int = 0) -> int:
    m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, start)
    return m.start() if m else -1


def _key_line(text: str, key: str, start: int = 0) -> int:
    """1-based line of the first ``"key":`` at or after ``start`` (0 when absent)."""
    pos = _key_pos(text, key, start)
    return text.count("\n", 0, pos) + 1 if pos >= 0 else 0


def _no_duplicates(text):
    def hook(pairs):
        seen = set()
        for k, _ in pairs:
            if k in seen:
                raise ConfigError(f"line {_key_line(text, k)}: duplicate key {k!r}")
            seen.add(k)
        return dict(pairs)

    return hook


def _type_ok(default, value) -> bool:
    if default is None:
        return True
    if value is None:
        return False
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _merge(schema: dict, data: dict, text: str, path: str = "", start: int = 0) -> dict:
    out = copy.deepcopy(schema)
    for key, value in data.items():
        where = f"{path}{key}"
        if key not in schema:
            line = _key_line(text, key, start)
            allowed = ", ".join(sorted(schema))
            raise ConfigError(f"line {line}: unknown key {where!r} (allowed here: {allowed})")
        default = schema[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"line {_key_line(text, key, start)}: {where!r} must be an object")
            out[key] = _merge(default, value, text, where + ".", max(_key_pos(text, key, start), start))
        elif default is None or _type_ok(default, value):
            out[key] = value
        else:
            raise ConfigError(
                f"line {_key_line(text, key, start)}: {where!r} expects {type(default).__name__}, got {json.dumps(value)}"
            )
    return out


def _apply_override(cfg: dict, schema: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"--override {item!r}: expected key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node, sch = cfg, schema
    for i, part in enumerate(parts):
        if not isinstance(sch, dict) or part not in sch:
            raise ConfigError(f"--override {key!r}: unknown key")
        if i == len(parts) - 1:
            default = sch[part]
            if isinstance(default, dict) or not (default is None or _type_ok(default, value)):
                raise ConfigError(f"--override {key!r}: bad value {raw!r}")
            node[part] = value
        else:
            node, sch = node[part], sch[part]


def load_config(command: str, path, seed=None, overrides=(), out=None) -> dict:
    """Parse, validate and resolve a command config (raises ConfigError)."""
    schema = {**_schemas()[command], "seed": 0, "out": f"runs/{command}"}
    text = "{}"
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates(text), parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: config must be a JSON object")
    cfg = _merge(schema, data, text)
    for item in overrides:
        _apply_override(cfg, schema, item)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = str(out)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    for key in REQUIRED.get(command, []):
        if not cfg[key]:
            raise ConfigError(f"missing required key {key!r}")
    return cfg


def _reject_constant(name):
    raise ConfigError(f"non-standard JSON constant {name}")


def _build(cls, section: dict, where: str, **extra):
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in section.items()}
    try:
        return cls(**kwargs, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# ---------------------------------------------------------------------------
# commands


def cmd_diffuse(cfg: dict, out: Path) -> int:
    from .diffusion import DiffusionConfig, run_diffusion
    from .enc.data import read_features
    from .hypergraph import PairIndex, load_hypergraph

    dcfg = _build(DiffusionConfig, cfg["diffusion"], "diffusion", seed=cfg["seed"])
    if dcfg.method == "GD" and (dcfg.edge_reg, dcfg.node_reg) != ("CE", "CE"):
        raise ConfigError(f"diffusion: GD supports CE only, got {dcfg.edge_reg}/{dcfg.node_reg}; use ADMM")
    node_ids, X0 = read_features(cfg["features"])
    h = load_hypergraph(cfg["hypergraph"], node_ids=node_ids)
    idx = PairIndex(h)
    traj = run_diffusion(h, idx, X0[idx.pair_node], dcfg, snapshot_every=cfg["snapshot_every"])
    traj.write_csv(out / "trajectory.csv")
    H = traj.final.H
    with open(out / "final_H.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "edge_id"] + [f"h_{j + 1}" for j in range(H.shape[1])])
        for p in range(idx.P):
            w.writerow([h.node_label(idx.pair_node[p]), idx.pair_edge[p]] + [repr(float(x)) for x in H[p]])
    if cfg["plot"]:
        from .plotting import objective_curve

        res = {"edge": traj.residual_edge, "node": traj.residual_node} if traj.residual_edge else None
        objective_curve(traj.objectives, out / "objective.png", res, f"{dcfg.method} {dcfg.edge_reg}/{dcfg.node_reg}")
    write_json(out / "summary.json", {
        "steps": len(traj) - 1, "initial_objective": traj.objectives[0], "final_objective": traj.objectives[-1],
    })
    return EXIT_OK


def _source_hypergraph(cfg, seed):
    from .enc.data import read_features
    from .hypergraph import load_hypergraph, random_hypergraph
    from .seeding import derive_seed

    if cfg["hypergraph"]:
        node_ids, X0 = (None, None)
        if cfg["features"]:
            node_ids, X0 = read_features(cfg["features"])
        return load_hypergraph(cfg["hypergraph"], node_ids=node_ids), X0
    if cfg["features"]:
        raise ConfigError("'features' needs 'hypergraph'")
    lo, hi = cfg["edge_sizes"]
    return random_hypergraph(cfg["n"], cfg["m"], (lo, hi), seed=derive_seed(seed, "hypergraph")), None


def cmd_gen(cfg: dict, out: Path) -> int:
    from .diffusion import SEMISYNTHETIC, generate_semisynthetic
    from .enc import data
    from .enc.pipeline import sample_split
    from .hypergraph import PairIndex
    from .seeding import derive_seed

    kind, seed = cfg["kind"], cfg["seed"]
    props = tuple(cfg["proportions"])
    if kind == "outsider":
        if cfg["hypergraph"]:
            h, X0 = _source_hypergraph(cfg, seed)
            if X0 is None:
                raise ConfigError("outsider generation from a file needs 'features'")
        else:
            h, X0 = data.planted_hypergraph(
                cfg["n"], cfg["m"], cfg["communities"], tuple(cfg["edge_sizes"]), cfg["feature_noise"],
                seed=derive_seed(seed, "hypergraph"),
            )
        ds = data.make_outsider_dataset(h, X0, cfg["variants"], derive_seed(seed, "outsider"), props)
        data.write_enc_dataset(ds, out)
        retained = int(np.sum(h.edge_degree > 3))
        summary = {"kind": kind, "source_edges": h.m, "retained_edges": retained, "edges": ds.hypergraph.m}
    elif kind == "rank-label":
        h, _ = _source_hypergraph(cfg, seed)
        ds = data.make_rank_label_dataset(h, derive_seed(seed, "rank-label"), cfg["noise_features"], props)
        data.write_enc_dataset(ds, out)
        summary = {"kind": kind, "edges": h.m, "pairs": ds.index.P}
    elif kind == "semisynthetic":
        if cfg["diffusion_kind"] not in SEMISYNTHETIC:
            raise ConfigError(f"diffusion_kind must be one of {sorted(SEMISYNTHETIC)}")
        h, _ = _source_hypergraph(cfg, seed)
        idx = PairIndex(h)
        samples = generate_semisynthetic(h, idx, cfg["diffusion_kind"], cfg["samples"], derive_seed(seed, "samples"))
        try:
            split = sample_split(len(samples), cfg["n_val"], cfg["n_test"], seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        data.write_semisynthetic_dataset(out, h, samples, split)
        summary = {"kind": kind, "diffusion_kind": cfg["diffusion_kind"], "samples": len(samples),
                   **{k: len(v) for k, v in split.items()}}
    else:
        raise ConfigError(f"gen kind must be outsider, rank-label or semisynthetic, got {kind!r}")
    write_json(out / "summary.json", summary)
    return EXIT_OK


def _metrics_report(scores: dict) -> dict:
    return {k: scores.get(k) for k in ("micro_f1", "macro_f1", "mae", "per_class_f1")}


def cmd_train(cfg: dict, out: Path) -> int:
    from .enc import data, pipeline
    from .neural.model import ModelConfig
    from .neural.training import save_checkpoint

    model_cfg = _build(ModelConfig, cfg["model"], "model")
    train_cfg = _build(pipeline.TrainConfig, cfg["train"], "train", seed=cfg["seed"])
    ds = data.load_enc_dataset(cfg["dataset"])
    result = pipeline.train(ds, model_cfg, train_cfg)
    pipeline.write_train_log(result.log, out / "train_log.csv")
    save_checkpoint(out / "model.ckpt", result.model, {
        "in_features": ds.X0.shape[1], "num_classes": ds.num_classes, "best_epoch": result.best_epoch,
    })
    report = {"best_epoch": result.best_epoch, "best_val_micro_f1": result.best_val}
    if ds.split_edges("test").size:
        report["test"] = _metrics_report(pipeline.evaluate(ds, result.model, "test"))
    write_json(out / "metrics.json", report)
    emb = cfg["embeddings"]
    if emb["export"]:
        pipeline.export_embeddings(ds, result.model, out / "embeddings.csv", emb["nodes"], emb["edges"])
    if cfg["plot"]:
        from .plotting import learning_curve

        learning_curve(result.log, out / "learning_curve.png")
    return EXIT_OK


def cmd_eval(cfg: dict, out: Path) -> int:
    from .enc import data, pipeline
    from .neural.training import load_checkpoint

    if cfg["split"] not in data.SPLITS:
        raise ConfigError(f"split must be one of {list(data.SPLITS)}")
    ds = data.load_enc_dataset(cfg["dataset"])
    model, _ = load_checkpoint(cfg["checkpoint"])
    if model.in_features != ds.X0.shape[1] or model.out_dim != ds.num_classes:
        raise RuntimeError(
            f"checkpoint expects {model.in_features} features / {model.out_dim} classes, "
            f"dataset has {ds.X0.shape[1]} / {ds.num_classes}"
        )
    write_json(out / "metrics.json", _metrics_report(pipeline.evaluate(ds, model, cfg["split"])))
    return EXIT_OK


def cmd_approx(cfg: dict, out: Path) -> int:
    from .enc import data, pipeline
    from .neural.model import ModelConfig

    model_cfg = _build(ModelConfig, cfg["model"], "model")
    acfg = _build(pipeline.ApproxConfig, cfg["approx"], "approx", seed=cfg["seed"])
    if cfg["dataset"]:
        summary = Path(cfg["dataset"]) / "summary.json"
        if summary.exists():
            made = json.loads(summary.read_text()).get("diffusion_kind")
            if made and made != cfg["kind"]:
                raise ConfigError(f"kind {cfg['kind']!r} does not match dataset generated with {made!r}")
        h, samples, split = data.load_semisynthetic_dataset(cfg["dataset"])
    else:
        h, _ = _source_hypergraph({**cfg, "hypergraph": None, "features": None}, cfg["seed"])
        samples, split = None, None
    report = pipeline.approx_experiment(h, cfg["kind"], model_cfg, acfg, samples=samples, split=split)
    history = report.pop("history")
    with open(out / "approx_history.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_mae"])
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    report["mae_ratio"] = report["model_mae"] / report["identity_mae"] if report["identity_mae"] else None
    write_json(out / "approx_report.json", report)
    if cfg["plot"]:
        from .plotting import approx_curve

        approx_curve(history, report["model_mae"], report["identity_mae"], out / "approx.png")
    return EXIT_OK


def cmd_bench(cfg: dict, out: Path) -> int:
    from .bench import BENCH_COLUMNS, BenchConfig, run_bench
    from .neural.model import ModelConfig

    model_cfg = _build(ModelConfig, cfg["model"], "model")
    bcfg = _build(BenchConfig, cfg["bench"], "bench", seed=cfg["seed"])
    if bcfg.rungs < 2 or bcfg.base_pairs < 1 or bcfg.repeats < 1:
        raise ConfigError("bench needs rungs >= 2, base_pairs >= 1 and repeats >= 1")
    result = run_bench(model_cfg, bcfg)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for row in result["rows"]:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    write_json(out / "bench_report.json", {
        "exponent": result["exponent"], "intercept": result["intercept"], "ratios": result["ratios"],
    })
    if cfg["plot"]:
        from .plotting import scaling_plot

        rows = result["rows"]
        scaling_plot([r["sum_edge_degree"] for r in rows], [r["wall_time"] for r in rows],
                     result["exponent"], result["intercept"], out / "scaling.png")
    return EXIT_OK


def cmd_check(cfg: dict, out: Path, suites=None) -> int:
    from .verify import run_checks

    try:
        report = run_checks(cfg, suites)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    write_json(out / "check_report.json", report)
    if not report["passed"]:
        raise VerificationError("verification failed: " + ", ".join(report["failed"]), report["failed"])
    return EXIT_OK


COMMANDS = {
    "diffuse": cmd_diffuse, "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
    "approx": cmd_approx, "bench": cmd_bench, "check": cmd_check,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conhd", description="Co-representation hypergraph diffusion.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted key, JSON value; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}), file=sys.stderr)
    return code


def run(argv=None, suites=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.command, args.config, args.seed, args.override, args.out)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "resolved_config.json", {"command": args.command, **cfg})
        fn = COMMANDS[args.command]
        return fn(cfg, out, suites) if args.command == "check" else fn(cfg, out)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except VerificationError as exc:
        return _fail(EXIT_VERIFY, "verification", str(exc), failed=exc.failed)
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        log.debug("runtime failure", exc_info=True)
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
