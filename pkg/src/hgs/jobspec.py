"""Resource requests.

Text syntax (counts are totals over the whole request)::

    spec   := [group] hint*
    group  := chain ("," chain)*
    chain  := item+              each item nests inside the previous one
    item   := KIND ":" COUNT ["[" group "]"]   a bracketed item ends its chain
    hint   := "instance=" NAME
            | "fleet=" COUNT ":" NAME ("," NAME)*
            | "policy=" ("cheapest_first" | "seeded_random")

``node:1 socket:2 core:32`` asks for one node holding two sockets of 16
cores each. ``node:1 [gpu:4, socket:2 [core:32, memory:8]]`` is a node with
four gpus and two sockets, each socket with 16 cores and 4 GB of memory.
Nested totals must divide evenly by their parent's total.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .graph import KIND_RANK

POLICIES = ("cheapest_first", "seeded_random")


class JobSpecError(ValueError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = "line %d, column %d: %s" % (line, column, message)
        super().__init__(message)
        self.line = line
        self.column = column


class JobSpecSyntaxError(JobSpecError):
    pass


class JobSpecSemanticError(JobSpecError):
    pass


@dataclass(frozen=True)
class Request:
    """``count`` units of ``kind`` per enclosing unit, each holding ``children``."""

    kind: str
    count: int
    children: tuple["Request", ...] = ()

    def cores_per_unit(self) -> int:
        if self.kind == "core":
            return 1
        return sum(c.count * c.cores_per_unit() for c in self.children)

    def kinds(self) -> set[str]:
        out = {self.kind}
        for c in self.children:
            out |= c.kinds()
        return out


@dataclass(frozen=True)
class FleetHint:
    total_count: int
    allowed_types: tuple[str, ...]
    policy: str = "cheapest_first"


@dataclass(frozen=True)
class JobSpec:
    resources: tuple[Request, ...] = ()
    instance_type: str | None = None
    fleet: FleetHint | None = None

    def __post_init__(self):
        validate(self)

    @property
    def has_hints(self) -> bool:
        return self.instance_type is not None or self.fleet is not None

    def totals(self) -> dict[str, int]:
        """Total requested vertices per kind."""
        out: dict[str, int] = {}

        def walk(req, mult):
            n = req.count * mult
            out[req.kind] = out.get(req.kind, 0) + n
            for c in req.children:
                walk(c, n)

        for r in self.resources:
            walk(r, 1)
        return out

    def to_json(self) -> dict:
        def enc(r):
            d = {"type": r.kind, "count": r.count}
            if r.children:
                d["with"] = [enc(c) for c in r.children]
            return d

        out = {"resources": [enc(r) for r in self.resources]}
        if self.instance_type is not None:
            out["instance_type"] = self.instance_type
        if self.fleet is not None:
            out["fleet"] = {
                "total_count": self.fleet.total_count,
                "allowed_types": list(self.fleet.allowed_types),
                "policy": self.fleet.policy,
            }
        return out

    @classmethod
    def from_json(cls, data: dict | str) -> "JobSpec":
        if isinstance(data, str):
            data = json.loads(data)

        def dec(d):
            return Request(d["type"], int(d["count"]),
                           tuple(dec(c) for c in d.get("with", ())))

        fleet = data.get("fleet")
        if fleet is not None:
            fleet = FleetHint(int(fleet["total_count"]), tuple(fleet["allowed_types"]),
                              fleet.get("policy", "cheapest_first"))
        return cls(tuple(dec(r) for r in data.get("resources", ())),
                   data.get("instance_type"), fleet)

    def __str__(self):
        return format_jobspec(self)


def _check_group(reqs, parent_kind, where=None):
    kinds_seen: set[str] = set()
    for r in reqs:
        if r.kind not in KIND_RANK:
            raise JobSpecSemanticError("unknown resource kind %r" % r.kind, *(where or ()))
        if r.count < 1:
            raise JobSpecSemanticError("count for %s must be >= 1" % r.kind, *(where or ()))
        if parent_kind is not None and KIND_RANK[r.kind] <= KIND_RANK[parent_kind]:
            raise JobSpecSemanticError(
                "%s cannot be nested inside %s" % (r.kind, parent_kind), *(where or ()))
        sub = r.kinds()
        if sub & kinds_seen:
            raise JobSpecSemanticError(
                "sibling requests overlap in kind %s" % ", ".join(sorted(sub & kinds_seen)),
                *(where or ()))
        kinds_seen |= sub
        _check_group(r.children, r.kind, where)


def validate(spec: JobSpec) -> None:
    _check_group(spec.resources, None)
    if spec.instance_type is not None and spec.fleet is not None:
        raise JobSpecSemanticError("instance and fleet hints are mutually exclusive")
    if spec.fleet is not None:
        if spec.fleet.total_count < 1:
            raise JobSpecSemanticError("fleet count must be >= 1")
        if not spec.fleet.allowed_types:
            raise JobSpecSemanticError("fleet needs at least one allowed type")
        if spec.fleet.policy not in POLICIES:
            raise JobSpecSemanticError("unknown fleet policy %r" % spec.fleet.policy)


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<hint>(?:instance|fleet|policy)=[^\s\[\]]+)"
    r"|(?P<item>[A-Za-z_]+:\d+)"
    r"|(?P<lbr>\[)|(?P<rbr>\])|(?P<comma>,)"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise JobSpecSyntaxError("unexpected character %r" % text[pos],
                                     line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            for i, ch in enumerate(m.group(), start=pos):
                if ch == "\n":
                    line, line_start = line + 1, i + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


@dataclass
class _Item:
    kind: str
    total: int
    tok: _Tok
    children: list = field(default_factory=list)


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind):
        tok = self.peek()
        if tok.kind != kind:
            what = tok.text or "end of input"
            raise JobSpecSyntaxError("expected %s, found %r" % (kind, what), tok.line, tok.col)
        self.i += 1
        return tok

    def item(self):
        tok = self.take("item")
        kind, count = tok.text.split(":")
        node = _Item(kind, int(count), tok)
        if kind not in KIND_RANK:
            raise JobSpecSemanticError("unknown resource kind %r" % kind, tok.line, tok.col)
        if node.total < 1:
            raise JobSpecSemanticError("count for %s must be >= 1" % kind, tok.line, tok.col)
        if self.peek().kind == "lbr":
            self.take("lbr")
            node.children = self.group()
            self.take("rbr")
        return node

    def chain(self):
        head = self.item()
        cur = head
        while self.peek().kind == "item":
            if cur.children:
                tok = self.peek()
                raise JobSpecSyntaxError("a bracketed request must end its chain",
                                         tok.line, tok.col)
            nxt = self.item()
            cur.children = [nxt]
            cur = nxt
        return head

    def group(self):
        items = [self.chain()]
        while self.peek().kind == "comma":
            self.take("comma")
            items.append(self.chain())
        return items

    def spec(self):
        items = self.group() if self.peek().kind == "item" else []
        instance = fleet_count = fleet_types = None
        policy = "cheapest_first"
        while self.peek().kind == "hint":
            tok = self.take("hint")
            key, value = tok.text.split("=", 1)
            if key == "instance":
                instance = value
            elif key == "policy":
                policy = value
            else:
                count, _, names = value.partition(":")
                if not count.isdigit() or not names:
                    raise JobSpecSyntaxError("fleet hint must read fleet=COUNT:TYPE[,TYPE...]",
                                             tok.line, tok.col)
                fleet_count = int(count)
                fleet_types = tuple(n for n in names.split(",") if n)
        self.take("eof")
        fleet = None
        if fleet_count is not None:
            fleet = FleetHint(fleet_count, fleet_types, policy)
        return items, instance, fleet


def _to_requests(items, parent_total, parent_kind):
    out = []
    for it in items:
        where = (it.tok.line, it.tok.col)
        if parent_kind is not None and KIND_RANK[it.kind] <= KIND_RANK[parent_kind]:
            raise JobSpecSemanticError(
                "%s cannot be nested inside %s" % (it.kind, parent_kind), *where)
        if it.total % parent_total:
            raise JobSpecSemanticError(
                "%s:%d does not divide evenly over %d %s" % (
                    it.kind, it.total, parent_total, parent_kind), *where)
        children = _to_requests(it.children, it.total, it.kind)
        out.append(Request(it.kind, it.total // parent_total, tuple(children)))
    return out


def parse_jobspec(text: str) -> JobSpec:
    items, instance, fleet = _Parser(text).spec()
    reqs = _to_requests(items, 1, None)
    if not reqs and instance is None and fleet is None:
        raise JobSpecSemanticError("empty request")
    try:
        return JobSpec(tuple(reqs), instance, fleet)
    except JobSpecSemanticError as exc:
        first = items[0].tok if items else None
        if first is None or exc.line is not None:
            raise
        raise JobSpecSemanticError(str(exc), first.line, first.col) from None


def format_jobspec(spec: JobSpec) -> str:
    def fmt(req, mult):
        total = req.count * mult
        head = "%s:%d" % (req.kind, total)
        if not req.children:
            return head
        if len(req.children) == 1:
            return head + " " + fmt(req.children[0], total)
        return head + " [" + ", ".join(fmt(c, total) for c in req.children) + "]"

    parts = []
    if spec.resources:
        parts.append(", ".join(fmt(r, 1) for r in spec.resources))
    if spec.instance_type is not None:
        parts.append("instance=" + spec.instance_type)
    if spec.fleet is not None:
        parts.append("fleet=%d:%s" % (spec.fleet.total_count, ",".join(spec.fleet.allowed_types)))
        if spec.fleet.policy != "cheapest_first":
            parts.append("policy=" + spec.fleet.policy)
    return " ".join(parts)


def request_size(spec: JobSpec) -> int:
    """Vertices plus in-edges of a subgraph satisfying ``spec`` exactly."""
    if spec.has_hints:
        raise JobSpecSemanticError("request_size is undefined for provider-hinted specs")
    return 2 * sum(spec.totals().values())


# the request suite used by the nested grow experiments
REQUEST_SUITE = {
    "t1": "node:64 socket:128 core:2048",
    "t2": "node:32 socket:64 core:1024",
    "t3": "node:16 socket:32 core:512",
    "t4": "node:8 socket:16 core:256",
    "t5": "node:4 socket:8 core:128",
    "t6": "node:2 socket:4 core:64",
    "t7": "node:1 socket:2 core:32",
    "t8": "socket:1 core:16",
}
