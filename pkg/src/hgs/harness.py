"""Experiment configuration, benchmark loop and multi-process launcher."""

from __future__ import annotations

import gc
import json
import logging
import os
import random
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import build_synthetic_cluster
from .hierarchy import (
    LADDER_SPECS,
    LADDER_TOP,
    ConfigError,
    Hierarchy,
    ParentHandle,
    build_ladder,
)
from .jgf import load_graph, read_jgf
from .jobspec import REQUEST_SUITE, JobSpec, parse_jobspec, request_size
from .perfmodel import TimingSample, samples_from_result, write_samples
from .provider import MockProvider, load_catalog
from .transport import TcpChannel, parse_address

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """One benchmark or grow run.

    ``levels[0]`` describes the top graph (cluster shape dict or JGF path);
    each later entry is the jobspec that carves the next level out of its
    parent. ``tcp_links`` lists the child levels whose uplink uses TCP when
    ``transport`` is ``"tcp"``; empty means every link.
    """

    levels: list = field(default_factory=lambda: [dict(LADDER_TOP), *LADDER_SPECS])
    suite: list[str] = field(default_factory=lambda: ["t%d" % i for i in range(1, 8)])
    repetitions: int = 100
    transport: str = "inproc"
    tcp_links: list[int] = field(default_factory=list)
    inter_latency_s: float = 0.0
    fill: bool = True
    provider: dict | None = None
    seed: int = 0
    out: str = "results"

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("levels must not be empty")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.transport not in ("inproc", "tcp"):
            raise ConfigError("transport must be inproc or tcp")
        if not self.suite:
            raise ConfigError("the request suite is empty")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("cannot read config %s: %s" % (path, exc)) from None
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
        return cls(**raw)

    def to_json(self) -> dict:
        return asdict(self)

    def link_transports(self) -> list[str]:
        links = len(self.levels) - 1
        if self.transport == "inproc":
            return ["inproc"] * links
        tcp = set(self.tcp_links) or set(range(1, links + 1))
        return ["tcp" if i in tcp else "inproc" for i in range(1, links + 1)]

    def requests(self) -> list[tuple[str, JobSpec]]:
        return [(name, parse_jobspec(REQUEST_SUITE.get(name, name))) for name in self.suite]


def resolve_suite(text: str) -> list[str]:
    """``--suite`` value: comma-separated request names/specs, or a file of them."""
    path = Path(text)
    if path.is_file():
        lines = path.read_text(encoding="utf-8").splitlines()
        return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]
    return [t.strip() for t in text.split(",") if t.strip()]


def make_provider(cfg: dict | None):
    if not cfg:
        return None
    kwargs = {"seed": int(cfg.get("seed", 0))}
    if "catalog" in cfg:
        kwargs["catalog"] = load_catalog(cfg["catalog"])
    if "max_types" in cfg:
        kwargs["max_types"] = int(cfg["max_types"])
    return MockProvider(**kwargs)


def build_hierarchy(cfg: ExperimentConfig) -> Hierarchy:
    top = cfg.levels[0]
    if isinstance(top, str):
        top = load_graph(read_jgf(top))
    elif isinstance(top, dict):
        top = build_synthetic_cluster(**top)
    else:
        raise ConfigError("levels[0] must be a cluster shape or a JGF path")
    provider_level = int((cfg.provider or {}).get("level", 0))
    return build_ladder(cfg.levels[1:], top=top, fill=cfg.fill,
                        transports=cfg.link_transports(), latency=cfg.inter_latency_s,
                        provider=make_provider(cfg.provider), provider_level=provider_level,
                        specialization=bool((cfg.provider or {}).get("specialization", False)))


# -- benchmarking ----------------------------------------------------------------

@dataclass
class BenchRun:
    samples: list[TimingSample]
    summary: dict
    complete: bool
    trials: int
    coverage: list[float]


def _quartiles(values) -> dict:
    arr = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "iqr": float(q3 - q1), "count": int(arr.size)}


def summarize(samples: list[TimingSample], names: dict[int, str] | None = None) -> dict:
    groups: dict[tuple, list[float]] = {}
    for s in samples:
        groups.setdefault((s.n, s.level, s.phase), []).append(s.duration_s)
    out = []
    for (n, level, phase), vals in sorted(groups.items()):
        row = {"n": n, "level": level, "phase": phase, **_quartiles(vals)}
        if names and n in names:
            row["request"] = names[n]
        out.append(row)
    return {"groups": out}


def bench(cfg: ExperimentConfig, hierarchy: Hierarchy | None = None,
          hash_every: int = 10, log_path=None) -> BenchRun:
    """Run every suite request ``repetitions`` times from the leaf.

    Trials are interleaved across requests in seeded random order. All
    levels are restored to the initial snapshot before each trial, and the
    pre-trial state hash is compared to the first trial's periodically.
    """
    owned = hierarchy is None
    h = hierarchy or build_hierarchy(cfg)
    samples: list[TimingSample] = []
    coverage: list[float] = []
    names = {}
    trials = 0
    complete = False
    try:
        initial = h.snapshot()
        reference = h.hashes()
        requests = [(name, spec, request_size(spec)) for name, spec in cfg.requests()]
        names = {n: name for name, _, n in requests}
        rng = random.Random(cfg.seed)
        gc.collect()
        gc.disable()
        # one round runs every request once, in a fresh shuffled order, so
        # slow drift of the host lands on all sizes alike
        for _ in range(cfg.repetitions):
            rng.shuffle(requests)
            for name, spec, n in requests:
                h.restore(initial)
                if trials % hash_every == 0 and h.hashes() != reference:
                    raise RuntimeError("trial %d did not start from the initial state" % trials)
                result = h.leaf.match_grow(spec)
                if not result.ok:
                    raise RuntimeError("request %s failed during the benchmark" % name)
                trial = samples_from_result(result, n)
                samples.extend(trial)
                coverage.extend(t.coverage for t in result.timings)
                if log_path is not None:
                    write_samples(trial, log_path)
                trials += 1
            gc.collect()
        h.restore(initial)
        complete = True
    finally:
        gc.enable()
        if owned:
            h.close()
    summary = summarize(samples, names)
    summary["complete"] = complete
    summary["trials"] = trials
    summary["coverage"] = _quartiles(coverage) if coverage else None
    return BenchRun(samples, summary, complete, trials, coverage)


# -- multi-process mode ------------------------------------------------------------

@dataclass
class InstanceConfig:
    level: int
    listen: str = "127.0.0.1:0"
    parent: str | None = None
    spec: str | None = None
    jgf: str | None = None
    graph: dict | None = None
    fill: bool = False
    provider: dict | None = None
    specialization: bool = False
    timeout_s: float = 30.0
    latency_s: float = 0.0

    @classmethod
    def from_file(cls, path) -> "InstanceConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(**raw)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError("bad instance config %s: %s" % (path, exc)) from None


def start_instance(cfg: InstanceConfig):
    """Create the instance described by ``cfg`` and start serving it."""
    from .hierarchy import SchedulerInstance, join_parent

    provider = make_provider(cfg.provider)
    if cfg.level == 0:
        if cfg.jgf:
            graph = load_graph(read_jgf(cfg.jgf))
        elif cfg.graph:
            graph = build_synthetic_cluster(**cfg.graph)
        else:
            raise ConfigError("the top instance needs a jgf path or a graph shape")
        inst = SchedulerInstance(graph, 0, provider=provider)
    else:
        if not (cfg.parent and cfg.spec):
            raise ConfigError("a child instance needs a parent address and a spec")
        handle = ParentHandle(TcpChannel(parse_address(cfg.parent), cfg.timeout_s,
                                         cfg.latency_s))
        inst = join_parent(handle, cfg.spec, cfg.level, provider, cfg.specialization)
    if cfg.fill:
        inst.fill()
    host, port = parse_address(cfg.listen)
    inst.serve(host, port)
    return inst


def launch_processes(cfg: ExperimentConfig, workdir) -> list[tuple[subprocess.Popen, str]]:
    """One ``hgs serve`` process per level; returns (process, address) pairs, top first."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    procs: list[tuple[subprocess.Popen, str]] = []
    links = cfg.link_transports()
    try:
        for level, entry in enumerate(cfg.levels):
            # filling waits until every level has carved its share
            inst = {"level": level, "fill": False}
            if level == 0:
                inst["jgf" if isinstance(entry, str) else "graph"] = entry
                if cfg.provider:
                    inst["provider"] = cfg.provider
            else:
                inst["parent"] = procs[-1][1]
                inst["spec"] = entry
                if links[level - 1] == "tcp":
                    inst["latency_s"] = cfg.inter_latency_s
            path = workdir / ("instance%d.json" % level)
            path.write_text(json.dumps(inst, indent=2), encoding="utf-8")
            proc = subprocess.Popen([sys.executable, "-m", "hgs", "serve", "--config", str(path)],
                                    stdout=subprocess.PIPE, text=True,
                                    env=dict(os.environ, PYTHONUNBUFFERED="1"))
            line = proc.stdout.readline().strip()
            if not line.startswith("listening "):
                proc.kill()
                raise ConfigError("level %d failed to start" % level)
            procs.append((proc, line.split()[1]))
        if cfg.fill:
            for _, addr in procs[1:]:
                handle = ParentHandle(TcpChannel(parse_address(addr)))
                try:
                    handle.control("fill")
                finally:
                    handle.close()
    except BaseException:
        stop_processes(procs)
        raise
    return procs


def stop_processes(procs) -> None:
    for proc, _ in reversed(procs):
        proc.terminate()
    deadline = time.monotonic() + 5
    for proc, _ in procs:
        try:
            proc.wait(timeout=max(0.1, deadline - time.monotonic()))
        except subprocess.TimeoutExpired:
            proc.kill()
