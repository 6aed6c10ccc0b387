"""A deterministic mock cloud provider that answers grow requests with subgraphs.

Granted nodes hang below a zone vertex under the requester's root. Zone and
node basenames start with ``ext-`` so they never collide with local paths.
Each node holds one core vertex per CPU, one memory vertex per GB and its
GPUs directly, with no socket level.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .graph import VertexRecord
from .graph import Subgraph
from .jobspec import POLICIES, FleetHint, JobSpec

EXTERNAL_PREFIX = "ext-"
DEFAULT_ZONES = ("us-east-1a", "us-east-1b")
DEFAULT_MAX_TYPES = 300


class ProviderError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceType:
    name: str
    cpus: int
    memory_gb: int
    gpus: int = 0
    zones: tuple[str, ...] = DEFAULT_ZONES
    cost_rank: int = 0

    def __post_init__(self):
        if self.cpus < 1 or self.memory_gb < 1 or self.gpus < 0:
            raise ProviderError("%s: need cpus >= 1, memory_gb >= 1, gpus >= 0" % self.name)
        if not self.zones:
            raise ProviderError("%s: empty zone pool" % self.name)

    @property
    def subgraph_size(self) -> int:
        return 2 * (1 + self.cpus + self.memory_gb + self.gpus)

    def covers(self, cores: int, memory: int, gpus: int) -> bool:
        return self.cpus >= cores and self.memory_gb >= memory and self.gpus >= gpus


@dataclass(frozen=True)
class FleetRequest:
    total_count: int
    allowed_types: tuple[str, ...]
    policy: str = "cheapest_first"

    def __post_init__(self):
        if self.total_count < 1:
            raise ProviderError("fleet total_count must be >= 1")
        if not self.allowed_types:
            raise ProviderError("fleet needs at least one allowed type")
        if self.policy not in POLICIES:
            raise ProviderError("unknown fleet policy %r" % self.policy)

    @classmethod
    def from_hint(cls, hint: FleetHint) -> "FleetRequest":
        return cls(hint.total_count, tuple(hint.allowed_types), hint.policy)


DEFAULT_CATALOG = tuple(
    InstanceType(name, cpus, mem, gpus, DEFAULT_ZONES, rank)
    for rank, (name, cpus, mem, gpus) in enumerate([
        ("t2.micro", 1, 1, 0),
        ("t2.small", 1, 2, 0),
        ("t2.medium", 2, 4, 0),
        ("t2.large", 2, 8, 0),
        ("t2.xlarge", 4, 16, 0),
        ("t2.2xlarge", 8, 32, 0),
        ("g2.2xlarge", 8, 15, 1),
        ("g3.4xlarge", 16, 128, 4),
    ])
)


def load_catalog(path) -> tuple[InstanceType, ...]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return tuple(
            InstanceType(r["name"], int(r["cpus"]), int(r["memory_gb"]), int(r.get("gpus", 0)),
                         tuple(r.get("zones", DEFAULT_ZONES)), int(r.get("cost_rank", i)))
            for i, r in enumerate(raw)
        )
    except (KeyError, TypeError) as exc:
        raise ProviderError("bad catalog entry: %s" % exc) from None


def dump_catalog(catalog, path) -> None:
    rows = [dict(asdict(t), zones=list(t.zones)) for t in catalog]
    Path(path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")


@dataclass
class MockProvider:
    catalog: tuple[InstanceType, ...] = DEFAULT_CATALOG
    seed: int = 0
    max_types: int = DEFAULT_MAX_TYPES
    leased: set[str] = field(default_factory=set)

    def __post_init__(self):
        self.types = {t.name: t for t in self.catalog}
        if len(self.types) != len(self.catalog):
            raise ProviderError("duplicate instance type names in catalog")
        self.rng = random.Random(self.seed)
        self._serial = itertools.count(1)
        self._ids = itertools.count(1 << 30)

    def reset(self) -> None:
        self.rng = random.Random(self.seed)
        self._serial = itertools.count(1)
        self._ids = itertools.count(1 << 30)
        self.leased.clear()

    def instance_type(self, name: str) -> InstanceType:
        try:
            return self.types[name]
        except KeyError:
            raise ProviderError("unknown instance type %r" % name) from None

    def cheapest_covering(self, cores: int, memory: int = 0, gpus: int = 0) -> InstanceType:
        fits = [t for t in self.catalog if t.covers(cores, memory, gpus)]
        if not fits:
            raise ProviderError("no instance type offers %d cpus, %d GB, %d gpus"
                                % (cores, memory, gpus))
        return min(fits, key=lambda t: (t.cost_rank, t.name))

    # -- requests --------------------------------------------------------------

    def external_api(self, spec: JobSpec, anchor: VertexRecord | None = None) -> Subgraph:
        """Translate ``spec`` into provider instances and return them as a subgraph."""
        if spec.fleet is not None:
            return self.fleet_request(FleetRequest.from_hint(spec.fleet), anchor)
        if spec.instance_type is not None:
            picks = [self.instance_type(spec.instance_type)]
        else:
            totals = spec.totals()
            nodes = totals.get("node", 1)
            per = [-(-totals.get(k, 0) // nodes) for k in ("core", "memory", "gpu")]
            picks = [self.cheapest_covering(*per)] * nodes
        return self._grant([(t, t.zones[0]) for t in picks], anchor)

    def fleet_request(self, req: FleetRequest, anchor: VertexRecord | None = None) -> Subgraph:
        if len(req.allowed_types) > self.max_types:
            raise ProviderError("fleet lists %d instance types; the limit is %d"
                                % (len(req.allowed_types), self.max_types))
        allowed = sorted({self.instance_type(n) for n in req.allowed_types},
                         key=lambda t: (t.cost_rank, t.name))
        if req.policy == "cheapest_first":
            cheapest = allowed[0]
            picks = [(cheapest, cheapest.zones[0])] * req.total_count
        else:
            picks = []
            for _ in range(req.total_count):
                t = self.rng.choice(allowed)
                picks.append((t, self.rng.choice(t.zones)))
        return self._grant(picks, anchor)

    def release(self, paths) -> None:
        unknown = [p for p in paths if p not in self.leased]
        if unknown:
            raise ProviderError("not leased by this provider: %s" % ", ".join(unknown))
        self.leased.difference_update(paths)

    # -- subgraph construction -------------------------------------------------

    def _grant(self, picks, anchor: VertexRecord | None) -> Subgraph:
        if anchor is None:
            anchor = VertexRecord(next(self._ids), "cluster", "ext-cloud", 1, "/ext-cloud",
                                  anchor=True)
        records = [anchor]
        edges = []
        zones = {}
        for itype, zone in picks:
            if zone not in zones:
                base = EXTERNAL_PREFIX + zone
                z = VertexRecord(next(self._ids), "zone", base, 1,
                                 anchor.path + "/" + base, anchor=True)
                zones[zone] = z
                records.append(z)
                edges.append((anchor.path, z.path))
            z = zones[zone]
            base = "%si%05d-%s" % (EXTERNAL_PREFIX, next(self._serial),
                                   itype.name.replace(".", "-"))
            node = VertexRecord(next(self._ids), "node", base, 1, z.path + "/" + base)
            records.append(node)
            edges.append((z.path, node.path))
            for kind, count in (("core", itype.cpus), ("memory", itype.memory_gb),
                                ("gpu", itype.gpus)):
                for i in range(count):
                    leaf = VertexRecord(next(self._ids), kind, "%s%d" % (kind, i), 1,
                                        "%s/%s%d" % (node.path, kind, i))
                    records.append(leaf)
                    edges.append((node.path, leaf.path))
            self.leased.add(node.path)
        return Subgraph(records, edges)
