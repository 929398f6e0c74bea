"""Command-line surface tying the pipeline together.

Subcommands: ``synth`` writes a synthetic corpus, ``train`` fits and
persists a model, ``block`` generates candidates with it, ``baseline``
runs the key and MinHash blockers, ``index`` saves a standalone LSH
index, ``inspect`` dumps per-token attention weights, and ``eval``
scores candidate files against labels.

Every command is deterministic given its configuration: all randomness
is derived from the configured seeds. Exit codes: 0 on success, 1 on
runtime failure, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

from .baselines import KeySpec, key_block, minhash_block
from .blocking import block, pe_ratio, read_candidates, write_candidates
from .config import ConfigError, RunConfig, load_config
from .data_model import DatasetError, export, write_labels
from .encoder import token_attention
from .evaluation import RunRecord, SynthSpec, metrics_csv, recall, summary_table, synthesize
from .lsh import LshIndex
from .model_io import load_model, save_model
from .signatures import SignatureModel
from .training import train

logger = logging.getLogger("sigblock")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI run configuration")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a configuration value (repeatable)",
    )


def _config(args) -> RunConfig:
    return load_config(args.config, args.overrides)


def cmd_synth(args) -> int:
    spec = SynthSpec(
        entity_count=args.entities,
        duplicates_per_entity=args.duplicates,
        regime=args.regime,
        typo_rate=args.typo_rate,
        token_drop_rate=args.token_drop_rate,
        missing_attr_rate=args.missing_attr_rate,
        attr_swap_rate=args.attr_swap_rate,
        version_suffix_rate=args.version_suffix_rate,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    dataset, labels = synthesize(spec, args.seed)
    export(dataset, args.out, args.format)
    write_labels(labels, args.labels_out)
    print(
        f"wrote {dataset.n} records to {args.out} and "
        f"{len(labels)} label pairs to {args.labels_out}"
    )
    return 0


def cmd_train(args) -> int:
    config = _config(args)
    dataset = config.load_dataset()
    labels = config.load_label_set(dataset)
    table = None
    if config.pretrained:
        from .text_embedding import load_pretrained

        if not Path(config.pretrained).exists():
            raise ConfigError(f"model.pretrained: no such file: {config.pretrained}")
        table = load_pretrained(
            config.pretrained,
            bucket_count=config.bucket_count,
            ngram_range=(config.ngram_min, config.ngram_max),
            seed=config.seed,
        )
    t0 = time.perf_counter()
    model = train(dataset, labels, config.training_config(), table)
    save_model(model, args.out)
    print(
        f"trained {model.num_signatures} signature(s) over {dataset.n} records "
        f"in {time.perf_counter() - t0:.1f}s -> {args.out}"
    )
    return 0


def _load_model_for(config: RunConfig, path: str) -> SignatureModel:
    if not Path(path).exists():
        raise ConfigError(f"no such model file: {path}")
    return load_model(path)


def cmd_block(args) -> int:
    config = _config(args)
    dataset = config.load_dataset()
    model = _load_model_for(config, args.model)
    model.validate_schema(dataset)
    theta = args.theta if args.theta is not None else config.theta
    if not 0.0 < theta < 1.0:
        raise ConfigError("theta must lie in (0, 1)")
    workers = args.workers or os.cpu_count() or 1
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    t0 = time.perf_counter()
    candidates = block(dataset, model, theta, config.lsh_params(), workers=workers)
    wall = time.perf_counter() - t0
    write_candidates(candidates, args.out)
    pe = pe_ratio(candidates, dataset) if dataset.n else 0.0
    print(
        f"candidates={len(candidates)} pe_ratio={pe:.4f} "
        f"wall_time_s={wall:.2f} -> {args.out}"
    )
    return 0


def cmd_baseline(args) -> int:
    config = _config(args)
    dataset = config.load_dataset()
    t0 = time.perf_counter()
    if args.method == "key":
        attributes = (
            tuple(args.key_attributes.split(","))
            if args.key_attributes
            else tuple(dataset.schema)
        )
        kind = args.key_kind
        if kind == "single" and len(attributes) > 1:
            attributes = attributes[:1]
        candidates = key_block(dataset, KeySpec(kind, attributes))
    elif args.method == "minhash":
        attributes = config.minhash_attributes or tuple(dataset.schema)
        theta = args.theta if args.theta is not None else config.minhash_theta
        if not 0.0 < theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        candidates = minhash_block(dataset, attributes, theta, config.minhash_params())
    else:
        raise ConfigError(f"unknown baseline method {args.method!r}")
    wall = time.perf_counter() - t0
    write_candidates(candidates, args.out, with_provenance=False)
    print(
        f"candidates={len(candidates)} pe_ratio={pe_ratio(candidates, dataset):.4f} "
        f"wall_time_s={wall:.2f} -> {args.out}"
    )
    return 0


def cmd_index(args) -> int:
    config = _config(args)
    dataset = config.load_dataset()
    model = _load_model_for(config, args.model)
    model.validate_schema(dataset)
    from .blocking import signature_matrix, _normalized

    records = list(dataset.all_records())
    sig, ok = _normalized(*signature_matrix(model, records))
    items = [
        (rec.record_id, s, sig[i, s])
        for i, rec in enumerate(records)
        for s in range(model.num_signatures)
        if ok[i, s]
    ]
    index = LshIndex.build(items, model.table.dim, config.lsh_params())
    index.save(args.out)
    print(f"indexed {len(index)} signature vectors into {args.out}")
    return 0


def cmd_inspect(args) -> int:
    config = _config(args)
    dataset = config.load_dataset()
    model = _load_model_for(config, args.model)
    model.validate_schema(dataset)
    records = list(dataset.all_records())
    if args.record_id is not None:
        records = [r for r in records if r.record_id == args.record_id]
        if not records:
            raise ConfigError(f"record id {args.record_id!r} not found")
    if args.limit is not None:
        records = records[: args.limit]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "attribute", "token", "weight"])
        for rec in records:
            for j, name in enumerate(model.schema):
                if args.attribute and name != args.attribute:
                    continue
                pairs = token_attention(model.encoders[j], model.table, rec.attributes[j])
                for token, weight in pairs:
                    writer.writerow([rec.record_id, name, token, repr(weight)])
    print(f"wrote attention weights for {len(records)} record(s) to {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = _config(args)
    if args.dataset:
        config.dataset = args.dataset
    if args.dataset_b:
        config.dataset_b = args.dataset_b
    if args.labels:
        config.labels = args.labels
    dataset = config.load_dataset()
    labels = config.load_label_set(dataset)
    if len(labels) == 0:
        raise ConfigError("label set is empty")
    runs: list[RunRecord] = []
    repeat_of: dict[str, int] = {}
    for item in args.candidates:
        if "=" not in item:
            raise ConfigError(f"candidates must look like method=path: {item!r}")
        method, path = item.split("=", 1)
        if not Path(path).exists():
            raise ConfigError(f"no such candidate file: {path}")
        candidates = read_candidates(path)
        rep = repeat_of.get(method, 0)
        repeat_of[method] = rep + 1
        runs.append(
            RunRecord(
                method=method,
                dataset=args.dataset_name,
                regime=args.regime,
                repeat=rep,
                recall=recall(candidates, labels),
                pe_ratio=pe_ratio(candidates, dataset),
                wall_time_s=0.0,
            )
        )
    text = metrics_csv(runs)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(summary_table(runs), end="")
    print(f"wrote {len(runs)} metric rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigblock",
        description="Learned-signature blocking for entity matching",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with labels")
    p.add_argument("--entities", type=int, required=True)
    p.add_argument("--duplicates", type=int, default=2)
    p.add_argument("--regime", choices=["clean", "dirty", "unstructured"], default="dirty")
    p.add_argument("--typo-rate", type=float, default=0.0)
    p.add_argument("--token-drop-rate", type=float, default=0.0)
    p.add_argument("--missing-attr-rate", type=float, default=0.0)
    p.add_argument("--attr-swap-rate", type=float, default=0.0)
    p.add_argument("--version-suffix-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "tsv", "jsonl"], default="csv")
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a signature model")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("block", help="generate candidate pairs with a model")
    _add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--theta", type=float, help="override lsh.theta")
    p.add_argument(
        "--workers",
        type=int,
        help="threads for LSH queries (default: all cores); any value"
        " produces identical output",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_block)

    p = sub.add_parser("baseline", help="run the key or MinHash baseline")
    _add_config_args(p)
    p.add_argument("--method", choices=["key", "minhash"], required=True)
    p.add_argument(
        "--key-kind",
        choices=["single", "conjunction", "disjunction"],
        default="disjunction",
    )
    p.add_argument("--key-attributes", help="comma-separated attribute names")
    p.add_argument("--theta", type=float, help="override minhash.theta")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("index", help="build and save a standalone LSH index")
    _add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("inspect", help="dump per-token attention weights")
    _add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--record-id")
    p.add_argument("--attribute")
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("eval", help="score candidate files against labels")
    _add_config_args(p)
    p.add_argument("--dataset", help="dataset path (overrides config)")
    p.add_argument("--dataset-b", help="second table for bipartite mode")
    p.add_argument("--labels", help="label file (overrides config)")
    p.add_argument(
        "--candidates",
        nargs="+",
        required=True,
        metavar="METHOD=PATH",
        help="candidate CSVs; repeat a method name for repeats",
    )
    p.add_argument("--dataset-name", default="dataset")
    p.add_argument("--regime", default="unknown")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
