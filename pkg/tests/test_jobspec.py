import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgs.jobspec import (
    REQUEST_SUITE,
    JobSpec,
    JobSpecSemanticError,
    JobSpecSyntaxError,
    Request,
    format_jobspec,
    parse_jobspec,
    request_size,
)


@pytest.mark.parametrize(
    "name, size",
    [("t1", 4480), ("t2", 2240), ("t3", 1120), ("t4", 560), ("t5", 280), ("t6", 140),
     ("t7", 70), ("t8", 34)],
)
def test_suite_request_sizes(name, size):
    assert request_size(parse_jobspec(REQUEST_SUITE[name])) == size


def test_counts_become_per_unit():
    spec = parse_jobspec("node:2 socket:4 core:64")
    node = spec.resources[0]
    assert (node.count, node.children[0].count, node.children[0].children[0].count) == (2, 2, 16)
    assert spec.totals() == {"node": 2, "socket": 4, "core": 64}
    assert node.cores_per_unit() == 32


def test_bracketed_groups():
    text = "node:1 [gpu:4, socket:2 [core:32, memory:8]]"
    spec = parse_jobspec(text)
    assert spec.totals() == {"node": 1, "gpu": 4, "socket": 2, "core": 32, "memory": 8}
    # 47 vertices, each with an in-edge
    assert request_size(spec) == 94
    assert format_jobspec(spec) == text


def test_hints():
    spec = parse_jobspec("instance=t2.micro")
    assert spec.instance_type == "t2.micro" and spec.has_hints
    fleet = parse_jobspec("fleet=10:t2.micro,t2.small policy=seeded_random").fleet
    assert fleet.total_count == 10
    assert fleet.allowed_types == ("t2.micro", "t2.small")
    assert fleet.policy == "seeded_random"
    with pytest.raises(JobSpecSemanticError):
        request_size(spec)


@pytest.mark.parametrize(
    "text, exc, where",
    [
        ("node:2 socket:3 core:3", JobSpecSemanticError, (1, 8)),
        ("node:1 socket:0", JobSpecSemanticError, (1, 8)),
        ("core:4 socket:1", JobSpecSemanticError, (1, 8)),
        ("node:1\n  blade:2", JobSpecSemanticError, (2, 3)),
        ("node:1 [core:2", JobSpecSyntaxError, (1, 15)),
        ("node:1 socket:1 ?", JobSpecSyntaxError, (1, 17)),
        ("node:1 [socket:1] core:1", JobSpecSyntaxError, (1, 19)),
        ("fleet=x:t2.micro", JobSpecSyntaxError, (1, 1)),
    ],
)
def test_errors_carry_position(text, exc, where):
    with pytest.raises(exc) as info:
        parse_jobspec(text)
    assert (info.value.line, info.value.column) == where


@pytest.mark.parametrize(
    "text",
    ["", "instance=t2.micro fleet=2:t2.micro", "fleet=0:t2.micro",
     "fleet=1:t2.micro policy=fastest", "node:1 [core:2, socket:1 core:1]"],
)
def test_semantic_rejections(text):
    with pytest.raises(JobSpecSemanticError):
        parse_jobspec(text)


def test_json_round_trip():
    spec = parse_jobspec("node:2 [gpu:2, socket:4 core:8] ")
    assert JobSpec.from_json(spec.to_json()) == spec
    hinted = parse_jobspec("fleet=3:t2.micro")
    assert JobSpec.from_json(hinted.to_json()) == hinted


_kinds = ["node", "socket", "core"]


@st.composite
def chains(draw):
    start = draw(st.integers(0, 2))
    counts = [draw(st.integers(1, 4)) for _ in _kinds[start:]]
    req = None
    for kind, c in reversed(list(zip(_kinds[start:], counts))):
        req = Request(kind, c, (req,) if req else ())
    return JobSpec((req,))


@given(chains())
def test_format_parse_round_trip(spec):
    assert parse_jobspec(format_jobspec(spec)) == spec
