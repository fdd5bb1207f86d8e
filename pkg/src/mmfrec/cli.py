"""``mmf`` command line: dataset statistics, training, evaluation and experiments.

Every command can read a YAML/JSON run file via ``--config``; flags given on
the command line override its fields. The resolved configuration is written
to ``<out>/run_config.json`` next to the outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .config import TrainConfig, Variant
from .dataset import (
    AttributeCatalog,
    SplitSpec,
    compute_dense_rate,
    compute_rate,
    load_attributes,
    load_ratings,
    save_split,
    split,
)
from .errors import ConfigError, MMFError
from .evaluation import evaluate, run_ablation, run_cold_start, run_sweep
from .interpret import explain, export_vectors
from .mf import mf_fit
from .mmf import MmfModel, mmf_fit
from .persist import load_model, save_model

logger = logging.getLogger("mmfrec")

COMMANDS = ("stats", "split", "train", "eval", "ablate", "coldstart", "sweep", "explain", "export-vectors")


@dataclass
class RunConfig:
    command: str
    ratings: str | None = None
    attributes: str | None = None
    model: str | None = None
    out: str | None = None
    kind: str = "mmf"
    variant: str = "full"
    name: str | None = None
    jobs: int = 1
    split: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    axis: str | None = None
    values: list = field(default_factory=list)
    topic_files: dict = field(default_factory=dict)
    user: str | None = None
    item: str | None = None
    k: int = 5
    which: str = "attributes"
    ids: list | None = None

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.train)

    def split_spec(self, default_kind="random") -> SplitSpec:
        s = dict(self.split)
        s.setdefault("kind", default_kind)
        s.setdefault("seed", self.train.get("seed", 0))
        return SplitSpec(**s)

    @property
    def dataset_name(self) -> str:
        if self.name:
            return self.name
        return Path(self.ratings).stem if self.ratings else "data"

    def to_dict(self):
        return asdict(self)


_NEEDS = {
    "stats": ("ratings",),
    "split": ("ratings", "out"),
    "train": ("ratings", "out"),
    "eval": ("ratings", "model"),
    "ablate": ("ratings", "attributes", "out"),
    "coldstart": ("ratings", "attributes", "out"),
    "sweep": ("ratings", "attributes", "out", "axis"),
    "explain": ("ratings", "attributes", "model", "user", "item"),
    "export-vectors": ("model", "out"),
}


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    missing = [n for n in _NEEDS[cfg.command] if getattr(cfg, n) in (None, "")]
    if missing:
        raise ConfigError(f"{cfg.command} needs: {', '.join('--' + m for m in missing)}")
    for name in ("ratings", "model"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"{name} file not found: {p}")
    if cfg.attributes is not None and cfg.command != "stats" and not Path(cfg.attributes).is_file():
        raise ConfigError(f"attributes file not found: {cfg.attributes}")
    if cfg.kind not in ("mf", "mmf"):
        raise ConfigError(f"model kind must be mf or mmf, got {cfg.kind!r}")
    cfg.variant = Variant.parse(cfg.variant).value
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    cfg.train_config()
    if cfg.command in ("split", "ablate", "coldstart", "sweep"):
        cfg.split_spec("item-cold-start" if cfg.command == "coldstart" else "random")
    if cfg.command == "sweep" and not cfg.values:
        raise ConfigError("sweep needs --values")
    if cfg.which not in ("attributes", "users"):
        raise ConfigError("--which must be attributes or users")
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error(ConfigError(message))
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON run file")
        p.add_argument("--ratings")
        p.add_argument("--attributes")
        p.add_argument("--model", help="fitted model file (eval, explain, export-vectors)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--name", help="dataset label used in reports")
        p.add_argument("--seed", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--variant")
        p.add_argument("--clamp", action="store_true", default=None)
        p.add_argument("--jobs", type=int)
        if name in ("split", "ablate", "coldstart", "sweep"):
            p.add_argument("--kind", dest="split_kind", choices=["random", "item-cold-start"])
            p.add_argument("--fraction", type=float)
        if name == "train":
            p.add_argument("--kind", choices=["mf", "mmf"])
        if name == "sweep":
            p.add_argument("--axis", choices=["latent_dim", "topic_count"])
            p.add_argument("--values", help="comma-separated, e.g. 5,10,15,20")
            p.add_argument("--topic-file", action="append", default=[], metavar="COUNT=PATH")
        if name == "explain":
            p.add_argument("--user")
            p.add_argument("--item")
            p.add_argument("--k", type=int)
        if name == "export-vectors":
            p.add_argument("--which", choices=["attributes", "users"])
            p.add_argument("--ids", help="comma-separated user ids or type:value attribute keys")
    return parser


def _read_config_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    data = _read_config_file(args.config) if args.config else {}
    data = dict(data)
    data.pop("command", None)
    cfg = RunConfig(command=args.command)
    for key, value in data.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    cfg.split = dict(cfg.split or {})
    cfg.train = dict(cfg.train or {})
    a = vars(args)
    for key in ("ratings", "attributes", "model", "out", "name", "variant", "jobs", "axis", "user", "item", "k", "which"):
        if a.get(key) is not None:
            setattr(cfg, key, a[key])
    if args.command == "train" and a.get("kind") is not None:
        cfg.kind = a["kind"]
    flag_to_train = {"seed": "seed", "dim": "dim", "lr": "learning_rate", "epochs": "epochs",
                     "lam": "lam", "batch": "batch", "clamp": "clamp_eval"}
    for flag, key in flag_to_train.items():
        if a.get(flag) is not None:
            cfg.train[key] = a[flag]
    if a.get("seed") is not None:
        cfg.split["seed"] = a["seed"]
    if a.get("split_kind") is not None:
        cfg.split["kind"] = a["split_kind"]
    if a.get("fraction") is not None:
        cfg.split["test_fraction"] = a["fraction"]
    if a.get("values"):
        cfg.values = [_number(v) for v in a["values"].split(",") if v.strip()]
    for spec in a.get("topic_file") or []:
        count, _, path = spec.partition("=")
        if not path:
            raise ConfigError(f"--topic-file expects COUNT=PATH, got {spec!r}")
        cfg.topic_files[str(int(count))] = path
    if a.get("ids"):
        cfg.ids = [x.strip() for x in a["ids"].split(",") if x.strip()]
    return validate(cfg)


def _number(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def _emit_error(exc: BaseException):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prepare_out(cfg: RunConfig) -> Path | None:
    if cfg.out is None:
        return None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_config.json", cfg.to_dict())
    return out


def _catalog(cfg: RunConfig) -> AttributeCatalog:
    return load_attributes(cfg.attributes)


def cmd_stats(cfg: RunConfig, out: Path | None) -> dict:
    ds = load_ratings(cfg.ratings)
    stats = {
        "dataset": cfg.dataset_name,
        "users": ds.n_users,
        "items": ds.n_items,
        "ratings": len(ds),
        "rate": compute_rate(ds),
    }
    lines = [
        f"dataset   {stats['dataset']}",
        f"users     {ds.n_users}",
        f"items     {ds.n_items}",
        f"ratings   {len(ds)}",
        f"rate      {stats['rate']:.3f}",
    ]
    if cfg.attributes is None or not Path(cfg.attributes).is_file():
        logger.warning("no attribute file%s; attribute statistics skipped",
                       f" at {cfg.attributes}" if cfg.attributes else "")
    else:
        cat = load_attributes(cfg.attributes)
        per_type = {t: 0 for t in cat.types}
        seen = set()
        for j in ds.item_ids:
            seen.update(cat.attrs_of(j))
        for k in seen:
            per_type[cat.type_of(k)] += 1
        stats["attribute_counts"] = per_type
        stats["items_without_attributes"] = len(cat.items_without_attributes(ds.item_ids))
        stats["dense_rate"] = compute_dense_rate(cat, ds.item_ids)
        for t, n in per_type.items():
            lines.append(f"{t:<9} {n}")
        lines.append(f"no-attrs  {stats['items_without_attributes']}")
        lines.append(f"dense     {stats['dense_rate']:.3f}")
    print("\n".join(lines))
    if out is not None:
        _write_json(out / "stats.json", stats)
    return stats


def cmd_split(cfg: RunConfig, out: Path):
    ds = load_ratings(cfg.ratings)
    spec = cfg.split_spec()
    train, test = split(ds, spec)
    save_split(train, test, spec, out)
    print(json.dumps({"train": len(train), "test": len(test)}))


def cmd_train(cfg: RunConfig, out: Path):
    ds = load_ratings(cfg.ratings)
    tc = cfg.train_config()
    if cfg.kind == "mf":
        model = mf_fit(ds, tc)
    else:
        model = mmf_fit(ds, _catalog(cfg) if cfg.attributes else AttributeCatalog([], [], {}), tc, cfg.variant)
    save_model(model, out / "model.json")
    with open(out / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for e, loss in enumerate(model.loss_trace, start=1):
            fh.write(f"{e},{loss!r}\n")
    print(json.dumps({"model": str(out / "model.json"), "final_loss": model.loss_trace[-1] if model.loss_trace else None}))


def cmd_eval(cfg: RunConfig, out: Path | None) -> dict:
    model = load_model(cfg.model)
    test = load_ratings(cfg.ratings)
    res = evaluate(model, test, bool(cfg.train.get("clamp_eval", False)))
    payload = {"model": model.kind, "rmse": res.rmse, "rmse_clamped": res.rmse_clamped,
               "clamp": res.clamp, "n_test": res.n, "n_fallback": res.n_fallback}
    if out is not None:
        _write_json(out / "eval.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return payload


def _report(cfg: RunConfig, out: Path, report):
    report.config["run"] = cfg.to_dict()
    report.write(out)
    print(report.to_csv(), end="")


def cmd_ablate(cfg: RunConfig, out: Path):
    ds = load_ratings(cfg.ratings)
    report = run_ablation(ds, _catalog(cfg), cfg.train_config(), cfg.split_spec(), cfg.dataset_name, cfg.jobs)
    _report(cfg, out, report)


def cmd_coldstart(cfg: RunConfig, out: Path):
    ds = load_ratings(cfg.ratings)
    report = run_cold_start(
        ds, _catalog(cfg), cfg.train_config(), cfg.split_spec("item-cold-start"), cfg.dataset_name, cfg.jobs
    )
    _report(cfg, out, report)


def cmd_sweep(cfg: RunConfig, out: Path):
    ds = load_ratings(cfg.ratings)
    report = run_sweep(
        ds, _catalog(cfg), cfg.train_config(), cfg.axis, cfg.values, cfg.topic_files,
        cfg.split_spec(), cfg.variant, cfg.dataset_name, cfg.jobs,
    )
    _report(cfg, out, report)


def cmd_explain(cfg: RunConfig, out: Path | None) -> dict:
    model = load_model(cfg.model)
    if not isinstance(model, MmfModel):
        raise ConfigError("explain needs an MMF model")
    report = explain(model, load_ratings(cfg.ratings), _catalog(cfg), str(cfg.user), str(cfg.item), int(cfg.k))
    if out is not None:
        _write_json(out / "explanation.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return report


def cmd_export_vectors(cfg: RunConfig, out: Path):
    model = load_model(cfg.model)
    if not isinstance(model, MmfModel):
        raise ConfigError("export-vectors needs an MMF model")
    ids = cfg.ids
    if ids is not None and cfg.which == "attributes":
        ids = [tuple(x.split(":", 1)) for x in ids]
    n = export_vectors(model, out / "vectors.csv", cfg.which, ids)
    print(json.dumps({"vectors": str(out / "vectors.csv"), "rows": n}))


_HANDLERS = {
    "stats": cmd_stats,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "coldstart": cmd_coldstart,
    "sweep": cmd_sweep,
    "explain": cmd_explain,
    "export-vectors": cmd_export_vectors,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        out = _prepare_out(cfg)
        _HANDLERS[cfg.command](cfg, out)
    except (MMFError, OSError, KeyError, ValueError, IndexError) as exc:
        _emit_error(exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
