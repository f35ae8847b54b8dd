"""Command line front end.

Subcommands: synth, train, evaluate, all.  A JSON config selects the dataset,
split, training hyperparameters, methods, and report formats; every field has
a default, any field can be overridden on the command line with dot-path
flags (e.g. --pcal.lambda=2.0), and the fully resolved config is written next
to the run artifacts so the run can be reproduced bit for bit.

Exit codes: 0 success, 2 config error, 3 data/schema error, 4 numeric
failure, 5 IO failure.
"""

import argparse
import copy
import datetime
import json
import os
import sys
import time

from .data import (SyntheticSpec, generate_synthetic, load_csv, load_schema,
                   split, standardize, write_csv)
from .errors import (ConfigError, ConstantTarget, DegenerateSplit, DimMismatch,
                     EmptyDataset, InvalidShape, InvalidSpec, IoError,
                     LengthMismatch, MalformedCell, MissingCheckpoint,
                     NoFeaturesRemain, NonFiniteGradient, NonFiniteLoss,
                     NotFitted, PcalError, SchemaError)
from .evaluation import METHODS, render_report, run_method
from .jsonio import read_json, sha256_file, write_json
from .seeding import derive_seed
from .trainer import (PcalConfig, load_training, save_training, train_pcal,
                      write_history)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

_DATA_ERRORS = (SchemaError, MalformedCell, EmptyDataset, InvalidSpec,
                DegenerateSplit, LengthMismatch, NoFeaturesRemain,
                ConstantTarget, InvalidShape, DimMismatch, NotFitted)
_NUMERIC_ERRORS = (NonFiniteLoss, NonFiniteGradient)

CONFIG_VERSION = "pcal-config-v1"
MANIFEST_VERSION = "pcal-manifest-v1"

REPORT_FORMATS = ("text-table", "json", "csv")
_FORMAT_FILES = {"text-table": "report.txt", "json": "reports.json",
                 "csv": "report.csv"}


def default_config():
    return {
        "version": CONFIG_VERSION,
        "seed": 42,
        "dataset": {"synthetic": {
            "n_rows": 5000,
            "n_private_driver_features": 2,
            "n_correlated_features": 3,
            "n_free_features": 3,
            "noise_std": 0.05,
            "seed": None,
        }},
        "split": {"eval_fraction": 0.2, "seed": None},
        "pcal": {**{k: v for k, v in PcalConfig().to_dict().items()},
                 "seed": None},
        "methods": list(METHODS),
        "output_dir": "pcal_run",
        "report_formats": list(REPORT_FORMATS),
    }


def _merge(base, override, path=""):
    """Recursive dict merge that rejects keys absent from the defaults."""
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config field {here!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, here)
        else:
            base[key] = value
    return base


def resolve_config(raw=None, overrides=None):
    """Materialize all defaults and derived seeds into a complete config."""
    config = default_config()
    raw = dict(raw or {})
    raw.pop("version", None)
    dataset = raw.pop("dataset", None)
    _merge(config, raw)
    if dataset is not None:
        config["dataset"] = _normalize_dataset(dataset)
    for path, value in (overrides or {}).items():
        _apply_override(config, path, value)

    root = config["seed"]
    if not isinstance(root, int):
        raise ConfigError(f"seed must be an integer, got {root!r}")
    if "synthetic" in config["dataset"]:
        if config["dataset"]["synthetic"].get("seed") is None:
            config["dataset"]["synthetic"]["seed"] = derive_seed(root, "data")
    if config["split"].get("seed") is None:
        config["split"]["seed"] = derive_seed(root, "split")
    if config["pcal"].get("seed") is None:
        config["pcal"]["seed"] = derive_seed(root, "pcal")

    frac = config["split"]["eval_fraction"]
    if not (isinstance(frac, (int, float)) and 0.0 < frac < 1.0):
        raise ConfigError(f"split.eval_fraction must be in (0, 1), got {frac!r}")
    methods = config["methods"]
    if (not isinstance(methods, list) or not methods
            or len(set(methods)) != len(methods)
            or any(m not in METHODS for m in methods)):
        raise ConfigError(f"methods must be a non-empty subset of {list(METHODS)} "
                          f"without duplicates, got {methods!r}")
    formats = config["report_formats"]
    if (not isinstance(formats, list) or not formats
            or any(f not in REPORT_FORMATS for f in formats)):
        raise ConfigError(f"report_formats must be a non-empty subset of "
                          f"{list(REPORT_FORMATS)}, got {formats!r}")
    # type-check the nested sections by constructing them once
    pcal_config_from(config)
    if "synthetic" in config["dataset"]:
        synthetic_spec_from(config)
    else:
        csv_cfg = config["dataset"]["csv"]
        for key in ("path", "schema_path"):
            if not isinstance(csv_cfg.get(key), str):
                raise ConfigError(f"dataset.csv.{key} must be a path string")
    return config


def _normalize_dataset(dataset):
    if not isinstance(dataset, dict) or len(dataset) != 1:
        raise ConfigError("dataset must contain exactly one of 'synthetic' or 'csv'")
    kind = next(iter(dataset))
    if kind == "synthetic":
        base = default_config()["dataset"]["synthetic"]
        _merge(base, dataset["synthetic"] or {}, "dataset.synthetic")
        return {"synthetic": base}
    if kind == "csv":
        entry = dict(dataset["csv"] or {})
        unknown = set(entry) - {"path", "schema_path"}
        if unknown:
            raise ConfigError(f"unknown dataset.csv fields: {sorted(unknown)}")
        return {"csv": entry}
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _apply_override(config, dotted, value):
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config field {dotted!r}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config field {dotted!r}")
    if isinstance(node[leaf], (dict, list)) and not isinstance(value, type(node[leaf])):
        raise ConfigError(f"{dotted!r} expects a {type(node[leaf]).__name__}")
    node[leaf] = value


def pcal_config_from(config):
    return PcalConfig.from_dict(config["pcal"])


def synthetic_spec_from(config):
    return SyntheticSpec(**config["dataset"]["synthetic"])


def load_dataset(config):
    """Materialize the configured dataset, raw (not standardized)."""
    dataset = config["dataset"]
    if "synthetic" in dataset:
        return generate_synthetic(synthetic_spec_from(config))
    entry = dataset["csv"]
    if not os.path.exists(entry["schema_path"]):
        raise SchemaError(f"schema file not found: {entry['schema_path']}")
    schema = load_schema(entry["schema_path"])
    return load_csv(entry["path"], schema)


# commands ---------------------------------------------------------------------

def cmd_synth(config, out_dir):
    """Generate the synthetic dataset and write CSV + schema."""
    if "synthetic" not in config["dataset"]:
        raise ConfigError("synth needs a dataset.synthetic config")
    ds = generate_synthetic(synthetic_spec_from(config))
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "dataset.csv")
    schema_path = os.path.join(out_dir, "schema.json")
    write_csv(ds, csv_path, schema_path)
    print(f"wrote {csv_path} ({ds.row_count} rows, {ds.n_features} features, "
          f"{ds.n_privacy} protected)")
    print(f"wrote {schema_path}")
    return [csv_path, schema_path]


def _prepared_dataset(config):
    ds = load_dataset(config)
    ds_std, _ = standardize(ds)
    return ds_std


def cmd_train(config, out_dir):
    """Train the masking net and dump checkpoints, history, and the config."""
    os.makedirs(out_dir, exist_ok=True)
    config_path = os.path.join(out_dir, "resolved_config.json")
    snapshot = copy.deepcopy(config)
    snapshot["output_dir"] = out_dir
    write_json(config_path, snapshot)

    ds = _prepared_dataset(config)
    train_ds, _ = split(ds, config["split"]["eval_fraction"],
                        config["split"]["seed"])
    state = train_pcal(pcal_config_from(config), train_ds)

    history_path = os.path.join(out_dir, "history.jsonl")
    write_history(state, history_path)
    check_dir = os.path.join(out_dir, "checkpoints")
    save_training(state, check_dir)
    written = [config_path, history_path] + [
        os.path.join(check_dir, name) for name in sorted(os.listdir(check_dir))]
    print(f"trained {len(state.history)} epochs "
          f"({state.restart_count} ensemble restarts); checkpoints in {check_dir}")
    return state, written


def cmd_evaluate(config, out_dir, checkpoint_dir=None, trained=None):
    """Score every requested method and write per-method + combined reports."""
    os.makedirs(out_dir, exist_ok=True)
    ds = _prepared_dataset(config)
    methods = config["methods"]
    if "PCAL" in methods and trained is None:
        checkpoint_dir = checkpoint_dir or os.path.join(out_dir, "checkpoints")
        trained = load_training(checkpoint_dir)

    reports = []
    written = []
    for method in methods:
        report = run_method(
            method, ds, pcal_config_from(config),
            root_seed=config["seed"],
            eval_fraction=config["split"]["eval_fraction"],
            split_seed=config["split"]["seed"],
            trained=trained if method == "PCAL" else None)
        reports.append(report)
        path = os.path.join(out_dir, f"report_{method}.json")
        write_json(path, report.to_dict())
        written.append(path)

    for fmt in config["report_formats"]:
        path = os.path.join(out_dir, _FORMAT_FILES[fmt])
        rendered = render_report(reports, fmt)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(rendered)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        written.append(path)

    if "text-table" in config["report_formats"]:
        print(render_report(reports, "text-table"), end="")
    for rep in reports:
        print(f"{rep.method}: utility {rep.utility_accuracy:.2f}%, "
              f"worst-case attack r2 {rep.worst_case_r2:.3f}")
    return reports, written


def cmd_all(config, out_dir, force=False):
    """synth (if synthetic) + train + evaluate + artifact manifest."""
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise IoError(f"output directory {out_dir} is not empty; "
                      "pass --force to overwrite")
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    if "synthetic" in config["dataset"]:
        artifacts += cmd_synth(config, out_dir)
    trained, written = cmd_train(config, out_dir)
    artifacts += written
    _, written = cmd_evaluate(config, out_dir, trained=trained)
    artifacts += written

    manifest_path = os.path.join(out_dir, "manifest.json")
    write_json(manifest_path, {
        "version": MANIFEST_VERSION,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "artifacts": {os.path.relpath(path, out_dir): sha256_file(path)
                      for path in sorted(artifacts)},
    })
    print(f"wrote {manifest_path} ({len(artifacts)} artifacts)")
    return artifacts + [manifest_path]


# argument handling -------------------------------------------------------------

def _parse_extra_overrides(extras):
    overrides = {}
    for token in extras:
        if not token.startswith("--") or "=" not in token:
            raise ConfigError(f"unrecognized argument {token!r} "
                              "(overrides look like --section.field=value)")
        key, _, raw_value = token[2:].partition("=")
        if not key:
            raise ConfigError(f"malformed override {token!r}")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        overrides[key] = value
    return overrides


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pcal",
        description="Train and audit a privacy-masking transform for tabular data.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("synth", "generate the configured synthetic dataset"),
                      ("train", "train the masking net"),
                      ("evaluate", "score the configured methods"),
                      ("all", "synth + train + evaluate + manifest")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="JSON config file (defaults apply without it)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty output directory")
        if name == "evaluate":
            p.add_argument("--checkpoints",
                           help="checkpoint directory (default: OUT/checkpoints)")
    return parser


def main(argv=None):
    """Entry point; returns the process exit code."""
    try:
        args, extras = _build_parser().parse_known_args(argv)
        overrides = _parse_extra_overrides(extras)
        raw = {}
        if args.config:
            if not os.path.exists(args.config):
                raise IoError(f"config file not found: {args.config}")
            try:
                raw = read_json(args.config)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError("config root must be a JSON object")
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        config = resolve_config(raw, overrides)
        out_dir = config["output_dir"]

        if args.command == "synth":
            cmd_synth(config, out_dir)
        elif args.command == "train":
            cmd_train(config, out_dir)
        elif args.command == "evaluate":
            cmd_evaluate(config, out_dir, checkpoint_dir=args.checkpoints)
        else:
            start = time.monotonic()
            cmd_all(config, out_dir, force=args.force)
            print(f"completed in {time.monotonic() - start:.1f}s")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IoError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def console_entry():
    raise SystemExit(main())
