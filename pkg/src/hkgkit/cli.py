"""``hkgkit`` command line: stats, decompose, curvature, train, eval.

Exit codes:
    0  success
    2  usage error (unknown subcommand or flag)
    3  invalid configuration (also: training diverged to a non-finite loss)
    4  data error (unreadable/malformed input, vocabulary or stats mismatch)

Failures print one line ``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .core import Vocab
from .decompose import METHODS, decompose_graph, read_triples, write_decomposed
from .evaluation import FilterIndex, evaluate
from .ingest import ParseError, compute_stats, diff_stats, find_split_files, load_graph, read_facts
from .models import HKG_AWARE, build_model, read_checkpoint
from .models.base import queries_from_facts, queries_from_triples
from .topology import build_simple_graph, curvature_report, distribution_to_csv, report_to_csv
from .training import ConfigError, TrainConfig, TrainingError, array_to_facts, save_result, train, write_trace

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA = 0, 2, 3, 4

log = logging.getLogger("hkgkit")


class DataError(Exception):
    pass


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str, argv: list[str], inputs: list[str], started: float, config: dict | None = None,
                   seed: int | None = None) -> None:
    manifest = {
        "command": ["hkgkit"] + list(argv),
        "tool_version": __version__,
        "config": config,
        "seed": seed,
        "inputs": {p: file_digest(p) for p in inputs if os.path.isfile(p)},
        "seconds": round(time.time() - started, 3),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_path(out: str) -> str:
    return os.path.join(out, "manifest.json") if os.path.isdir(out) else out + ".manifest.json"


# ------------------------------------------------------------------ commands

def cmd_stats(args, argv, started) -> int:
    graph = load_graph(args.train, args.valid, args.test, args.format)
    stats = compute_stats(graph)
    doc = json.dumps(stats.to_dict(), indent=2)
    print(stats.table(), file=sys.stderr)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(doc + "\n")
        write_manifest(_manifest_path(args.out), argv, [args.train, args.valid, args.test], started)
    else:
        print(doc)
    if args.expect:
        with open(args.expect, encoding="utf-8") as fh:
            expected = json.load(fh)
        diff = diff_stats(stats, expected)
        if diff:
            for line in diff:
                print(f"mismatch: {line}", file=sys.stderr)
            raise DataError(f"{len(diff)} statistic(s) differ from {args.expect}")
    return EXIT_OK


def cmd_decompose(args, argv, started) -> int:
    files = find_split_files(args.input)
    graph = load_graph(files["train"], files["valid"], files["test"], args.format)
    dg = decompose_graph(graph, args.method)
    summary = write_decomposed(dg, args.out)
    write_manifest(os.path.join(args.out, "manifest.json"), argv, list(files.values()), started)
    for name, s in summary["splits"].items():
        print(f"{name}: {s['facts']} facts -> {s['triples']} triples "
              f"({s['duplicates_removed']} duplicates removed)", file=sys.stderr)
    return EXIT_OK


def cmd_curvature(args, argv, started) -> int:
    path = args.input
    if os.path.isdir(path):
        path = os.path.join(path, "train.tsv")
    ents = Vocab()
    triples = read_triples(path, ents, Vocab())
    g = build_simple_graph(triples, len(ents))
    report = curvature_report(g, threads=args.threads)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_to_csv(report, ents.labels()))
    if args.distribution:
        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        with open(stem + ".distribution.csv", "w", encoding="utf-8") as fh:
            fh.write(distribution_to_csv(report))
    write_manifest(_manifest_path(args.out), argv, [path], started)
    print(f"edges={report.num_edges} over_squashing_proportion={report.proportion:.6f} "
          f"negative={report.n_negative} self_loops_dropped={g.self_loops_dropped} "
          f"duplicate_edges_dropped={g.duplicates_dropped}", file=sys.stderr)
    return EXIT_OK


_DATA_KEYS = ("train_file", "valid_file", "test_file", "data_dir", "format")


def _load_config(args) -> tuple[TrainConfig, dict]:
    raw: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    data = {k: raw.pop(k) for k in _DATA_KEYS if k in raw}
    overrides = {"decompose": args.decompose, "seed": args.seed, "epochs": args.epochs, "lr": args.lr}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    for k in ("train_file", "valid_file", "test_file", "data_dir", "format"):
        v = getattr(args, k, None)
        if v is not None:
            data[k] = v
    return TrainConfig.from_dict(raw), data


def _data_paths(data: dict) -> list[str]:
    if "data_dir" in data and not all(k in data for k in ("train_file", "valid_file", "test_file")):
        files = find_split_files(data["data_dir"])
        data.setdefault("train_file", files["train"])
        data.setdefault("valid_file", files["valid"])
        data.setdefault("test_file", files["test"])
    missing = [k for k in ("train_file", "valid_file", "test_file") if k not in data]
    if missing:
        raise ConfigError(f"no dataset given (missing {', '.join(missing)}); use --data DIR or --train/--valid/--test")
    return [data["train_file"], data["valid_file"], data["test_file"]]


def cmd_train(args, argv, started) -> int:
    config, data = _load_config(args)
    paths = _data_paths(data)
    graph = load_graph(*paths, fmt=data.get("format"))
    result = train(graph, args.model, config, time_budget=args.time_budget)
    save_result(args.out, result, graph)
    trace_path = args.trace or (args.out + ".trace.csv")
    write_trace(trace_path, result.trace)
    write_manifest(_manifest_path(args.out), argv, paths + ([args.config] if args.config else []), started,
                   config=config.to_dict(), seed=config.seed)
    print(f"trained {args.model} for {len(result.trace)} epochs in {result.seconds:.1f}s; "
          f"best epoch {result.best_epoch} valid MRR {result.best_mrr:.4f}", file=sys.stderr)
    return EXIT_OK


def load_model_from_checkpoint(path: str):
    header, params, extra, data = read_checkpoint(path)
    rng = np.random.default_rng(0)
    model = build_model(header["kind"], header["n_entities"], header["n_relations"], header["config"], rng,
                        edges=extra.get("edges"))
    model.load_state(params)
    return model, header, data


def cmd_eval(args, argv, started) -> int:
    model, header, data = load_model_from_checkpoint(args.ckpt)
    ents, rels = Vocab(header["entity_labels"]), Vocab(header["relation_labels"])
    try:
        test = read_facts(args.test, ents, rels, args.format, frozen=True)
    except ParseError as exc:
        if "unknown label" not in str(exc):
            raise
        probe_e, probe_r = ents.copy(), rels.copy()
        read_facts(args.test, probe_e, probe_r, args.format)
        raise DataError(
            f"vocabulary mismatch: checkpoint entity/relation hashes "
            f"{header['entity_vocab_hash']}/{header['relation_vocab_hash']} vs data "
            f"{probe_e.digest()}/{probe_r.digest()} ({exc})") from None
    if ents.digest() != header["entity_vocab_hash"] or rels.digest() != header["relation_vocab_hash"]:
        raise DataError(f"vocabulary mismatch: checkpoint {header['entity_vocab_hash']} vs data {ents.digest()}")
    known = array_to_facts(data["train_facts"]) + array_to_facts(data["valid_facts"])
    if header["kind"] in HKG_AWARE:
        m = header["max_arity"]
        trunc = [f if len(f.qualifiers) <= m else type(f)(f.subject, f.relation, f.object,
                                                           f.canonical_qualifiers()[:m]) for f in known + test]
        batches = [queries_from_facts(trunc[:len(known)], model.n_relations, m)]
        queries = queries_from_facts(trunc[len(known):], model.n_relations, m)
        filters = FilterIndex.build(batches + [queries], use_qualifiers=True)
    else:
        queries = queries_from_triples([f.triple for f in test], model.n_relations)
        filters = FilterIndex.build([queries_from_triples([f.triple for f in known], model.n_relations), queries],
                                    use_qualifiers=False)
    report = evaluate(model, queries, filters, header["n_candidates"])
    doc = report.to_dict()
    doc.update(model=header["kind"], decompose=header.get("decompose"), checkpoint=os.path.basename(args.ckpt))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    write_manifest(_manifest_path(args.out), argv, [args.ckpt, args.test], started)
    print(f"MRR {report.mrr:.4f}  H@1 {report.hits_at[1]:.4f}  H@3 {report.hits_at[3]:.4f}  "
          f"H@10 {report.hits_at[10]:.4f}  ({report.n_queries} queries)", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hkgkit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="{stats,decompose,curvature,train,eval}")
    sub.required = True

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", choices=("tsv", "json"))
    p.add_argument("--expect", help="JSON file with expected counts; mismatch exits 4")
    p.add_argument("--out", help="write the JSON document here instead of stdout")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("decompose", help="convert an HKG to triples")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--in", dest="input", required=True, help="directory with train/valid/test files")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "json"))
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("curvature", help="Balanced Forman curvature report")
    p.add_argument("--in", dest="input", required=True, help="triple file or decompose output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--distribution", action="store_true", help="also write (rank, ric) pairs")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--model", required=True, choices=("transh", "complex", "gnn", "formergnn"))
    p.add_argument("--decompose", choices=METHODS)
    p.add_argument("--config", help="JSON key-value config")
    p.add_argument("--out", required=True)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--train", dest="train_file")
    p.add_argument("--valid", dest="valid_file")
    p.add_argument("--test", dest="test_file")
    p.add_argument("--format", choices=("tsv", "json"))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--trace", help="CSV trace path (default: CKPT.trace.csv)")
    p.add_argument("--time-budget", type=float, help="stop after this many seconds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered link-prediction metrics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "json"))
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        return args.func(args, argv, started)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"error: training: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ParseError, FileNotFoundError, KeyError, ValueError, OSError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
