"""Command-line driver.

Exit codes: 0 success, 1 no match, 2 configuration or usage error,
3 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from .graph import GraphError, build_synthetic_cluster
from .grow import GrowError
from .harness import (
    ExperimentConfig,
    InstanceConfig,
    bench,
    build_hierarchy,
    resolve_suite,
    start_instance,
)
from .hierarchy import ConfigError, ParentHandle, decode_result
from .jgf import JGFError, dumps, load_graph, read_jgf, serialize_jgf
from .jobspec import JobSpecError, parse_jobspec, request_size
from .perfmodel import FitError, fit_samples, read_samples, report, samples_from_result, write_samples
from .transport import RemoteError, TcpChannel, TransportError, parse_address

EXIT_OK, EXIT_NO_MATCH, EXIT_CONFIG, EXIT_TRANSPORT = 0, 1, 2, 3

log = logging.getLogger("hgs")


def _shape_from_spec(text: str, racks: int) -> dict:
    """Cluster shape from a chain such as ``node:2 socket:4 core:64``."""
    spec = parse_jobspec(text)
    if spec.has_hints or len(spec.resources) != 1 or spec.resources[0].kind != "node":
        raise ConfigError("a graph spec is a single request starting at node")
    node = spec.resources[0]
    shape = {"nodes": node.count, "racks": racks}
    for child in node.children:
        if child.kind == "gpu":
            shape["gpus"] = child.count
        elif child.kind == "socket":
            shape["sockets"] = child.count
            for leaf in child.children:
                if leaf.kind not in ("core", "memory") or leaf.children:
                    raise ConfigError("sockets may hold only cores and memory")
                shape["cores" if leaf.kind == "core" else "memory"] = leaf.count
        else:
            raise ConfigError("unsupported node child %r" % child.kind)
    return shape


def cmd_build(args) -> int:
    if args.jgf:
        graph = load_graph(read_jgf(args.jgf))
    else:
        if not args.spec or not args.spec.strip():
            raise ConfigError("give a graph spec or --jgf")
        graph = build_synthetic_cluster(**_shape_from_spec(args.spec, args.racks),
                                        name=args.name)
    text = dumps(serialize_jgf(graph)) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print("size %d (%d vertices, %d edges)" % (graph.size, graph.num_vertices, graph.num_edges),
          file=sys.stderr)
    return EXIT_OK


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if getattr(args, "transport", None):
        cfg.transport = args.transport
    if getattr(args, "reps", None):
        cfg.repetitions = args.reps
    if getattr(args, "suite", None):
        cfg.suite = resolve_suite(args.suite)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out = args.out
    cfg.__post_init__()
    return cfg


def _print_result(result, n) -> None:
    print("outcome %s" % result.outcome)
    print("levels_traversed %d" % result.levels_traversed)
    print("size %d" % n)
    print("%-6s %-9s %11s %11s %11s %11s" % ("level", "transport", "match", "comms",
                                             "add_update", "total"))
    for t in result.timings:
        print("%-6d %-9s %11.6f %11.6f %11.6f %11.6f" % (
            t.level, t.transport or "-", t.match, t.comms, t.add_update, t.total))


def cmd_grow(args) -> int:
    spec = parse_jobspec(args.jobspec)
    if args.connect:
        handle = ParentHandle(TcpChannel(parse_address(args.connect)))
        try:
            result = decode_result(handle.control("grow", jobspec=args.jobspec))
        finally:
            handle.close()
    else:
        cfg = _load_config(args)
        with build_hierarchy(cfg) as h:
            result = h.leaf.match_grow(spec)
            if not all(h.inclusion()):
                log.error("inclusion chain broken after grow")
    n = result.subgraph.size if result.ok else 0
    _print_result(result, n)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_samples(samples_from_result(result, n), out / "samples.jsonl")
    return EXIT_OK if result.ok else EXIT_NO_MATCH


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "samples.jsonl"
    log_path.write_text("", encoding="utf-8")
    try:
        run = bench(cfg, log_path=log_path)
    except RuntimeError as exc:
        (out / "summary.json").write_text(json.dumps({"complete": False, "error": str(exc)}))
        raise
    (out / "summary.json").write_text(json.dumps(run.summary, indent=2) + "\n")
    print("%d trials, %d samples -> %s" % (run.trials, len(run.samples), log_path))
    print("%-6s %-6s %-11s %12s %12s" % ("n", "level", "phase", "median", "iqr"))
    for row in run.summary["groups"]:
        print("%-6d %-6d %-11s %12.6f %12.6f" % (row["n"], row["level"], row["phase"],
                                                 row["median"], row["iqr"]))
    cov = run.summary["coverage"]
    if cov:
        print("phase coverage of level time: median %.4f" % cov["median"])
    return EXIT_OK


def cmd_fit(args) -> int:
    models = fit_samples(read_samples(args.log), seed=args.seed or 0)
    doc, table = report(models)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def cmd_serve(args) -> int:
    inst = start_instance(InstanceConfig.from_file(args.config))
    host, port = inst.server.address
    print("listening %s:%d" % (host, port), flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait()
    except KeyboardInterrupt:
        pass
    inst.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="write a synthetic graph as canonical JGF")
    p.add_argument("spec", nargs="?", help='e.g. "node:2 socket:4 core:64"')
    p.add_argument("--jgf", help="re-encode an existing JGF file instead")
    p.add_argument("--racks", type=int, default=1)
    p.add_argument("--name", default="cluster0")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    def experiment_flags(p):
        p.add_argument("--config")
        p.add_argument("--transport", choices=("inproc", "tcp"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("grow", help="run one MatchGrow from the leaf")
    p.add_argument("jobspec")
    p.add_argument("--connect", help="HOST:PORT of a running leaf instance")
    experiment_flags(p)
    p.set_defaults(func=cmd_grow)

    p = sub.add_parser("bench", help="repeat a request suite and record timings")
    experiment_flags(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--suite", help="comma-separated t1..t8 / jobspecs, or a file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fit", help="fit timing models to a sample log")
    p.add_argument("log")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("serve", help="run one instance from an instance config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HGS_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TransportError, RemoteError) as exc:
        print("error: transport: %s" % exc, file=sys.stderr)
        return EXIT_TRANSPORT
    except (ConfigError, JobSpecError, JGFError, GraphError, FitError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except GrowError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_NO_MATCH


if __name__ == "__main__":
    sys.exit(main())
