"""Timing samples, linear timing models and the nested-match cost bound."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

PHASES = ("match", "comms", "add_update")
TRANSPORTS = ("intra", "inter")


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class TimingSample:
    level: int
    phase: str
    n: int
    duration_s: float
    transport: str | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError("unknown phase %r" % self.phase)
        if self.duration_s < 0 or self.n < 0:
            raise ValueError("duration and n must be nonnegative")


@dataclass(frozen=True)
class LinearModel:
    beta: float
    beta0: float
    r2: float = float("nan")
    mape: float = float("nan")
    samples: int = 0

    def __post_init__(self):
        if self.beta < 0 or self.beta0 < 0:
            raise ValueError("model coefficients must be nonnegative")

    def predict(self, n):
        return self.beta * np.asarray(n, dtype=float) + self.beta0


# measured reference coefficients, keyed by link type; "attach" is add-update
REFERENCE_MODELS = {
    "inter": LinearModel(1.5829e-5, 0.0020992, r2=0.99774, mape=0.0090208),
    "intra": LinearModel(9.0824e-6, 0.00063196, r2=0.99990, mape=0.0027139),
    "attach": LinearModel(3.4583e-5, 0.0, r2=0.99991, mape=0.0088698),
}


def mape(predictions, observations) -> float:
    pred = np.asarray(predictions, dtype=float)
    obs = np.asarray(observations, dtype=float)
    if pred.shape != obs.shape or obs.size == 0:
        raise ValueError("need equal-length, nonempty inputs")
    if np.any(obs == 0):
        raise ValueError("MAPE is undefined for a zero observation")
    return float(np.mean(np.abs(pred - obs) / np.abs(obs)))


def r2_score(predictions, observations) -> float:
    pred = np.asarray(predictions, dtype=float)
    obs = np.asarray(observations, dtype=float)
    ss_res = float(np.sum((obs - pred) ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if np.allclose(pred, obs) else 0.0
    return 1.0 - ss_res / ss_tot


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    design = np.column_stack([x, np.ones_like(x)])
    (beta, beta0), *_ = np.linalg.lstsq(design, y, rcond=None)
    if beta0 < 0:
        # an intercept below zero is unphysical: refit through the origin
        beta, beta0 = float(x @ y / (x @ x)) if x @ x else 0.0, 0.0
    if beta < 0:
        beta, beta0 = 0.0, float(max(y.mean(), 0.0))
    return float(beta), float(beta0)


def fit_linear(n, durations, folds: int = 5, seed: int = 0) -> LinearModel:
    """Least-squares ``duration = beta * n + beta0`` with k-fold validation.

    The reported coefficients come from all data; ``r2`` and ``mape`` are
    averages over the held-out folds (contiguous blocks of a seeded shuffle).
    """
    x = np.asarray(n, dtype=float)
    y = np.asarray(durations, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("n and durations must be 1-d and equal length")
    if x.size < max(10, folds):
        raise FitError("need at least %d samples, got %d" % (max(10, folds), x.size))
    if np.unique(x).size < 2:
        raise FitError("degenerate design: every sample has the same n")

    order = np.random.default_rng(seed).permutation(x.size)
    r2s, mapes = [], []
    for test in np.array_split(order, folds):
        train = np.setdiff1d(order, test, assume_unique=True)
        beta, beta0 = _ols(x[train], y[train])
        pred = beta * x[test] + beta0
        r2s.append(r2_score(pred, y[test]))
        mapes.append(mape(pred, y[test]))
    beta, beta0 = _ols(x, y)
    return LinearModel(beta, beta0, float(np.mean(r2s)), float(np.mean(mapes)), int(x.size))


def fit_samples(samples: Iterable[TimingSample], seed: int = 0,
                min_samples: int = 10) -> dict[tuple[str, str | None], LinearModel]:
    """One model per (phase, transport) group."""
    groups = defaultdict(list)
    for s in samples:
        key = (s.phase, s.transport if s.phase == "comms" else None)
        groups[key].append(s)
    if not groups:
        raise FitError("no samples")
    out = {}
    for key, rows in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or "")):
        if len(rows) < min_samples:
            raise FitError("group %s/%s has only %d samples" % (key[0], key[1], len(rows)))
        out[key] = fit_linear([r.n for r in rows], [r.duration_s for r in rows], seed=seed)
    return out


# -- bound and aggregate predictor ---------------------------------------------

@dataclass(frozen=True)
class BoundParams:
    b: float
    s0: float
    t0: float
    beta: float = 0.0
    beta0: float = 0.0

    def __post_init__(self):
        if not self.b > 1:
            raise ValueError("branching factor must exceed 1")
        if self.s0 < 1:
            raise ValueError("s0 must be >= 1")


def geometric_bound(p: BoundParams) -> float:
    """Upper bound on total match time over every nested level."""
    return p.t0 * p.b * (1 - 1 / p.s0) / (p.b - 1) + p.beta0 * math.log(p.s0, p.b)


def max_levels(b: float, s0: float) -> int:
    """Smallest k with b**k >= s0."""
    k = max(0, math.ceil(math.log(s0, b)))
    while k > 0 and b ** (k - 1) >= s0:
        k -= 1
    while b ** k < s0:
        k += 1
    return k


def direct_sum(p: BoundParams) -> float:
    """Per-level linear cost summed term by term over ``max_levels`` levels."""
    return sum(p.beta * p.s0 * p.b ** -k + p.beta0 for k in range(max_levels(p.b, p.s0)))


def predict_t_mg(n: float, m_levels: int, p_pairs: int, q_levels: int, t0: float,
                 models: dict[str, LinearModel] = REFERENCE_MODELS) -> float:
    """Whole grow time: matching, inter and intra links, and per-level attach."""
    if min(n, m_levels, p_pairs, q_levels) < 0:
        raise ValueError("counts must be nonnegative")
    inter, intra, attach = models["inter"], models["intra"], models["attach"]
    return (2 * t0
            + m_levels * (inter.beta * n + inter.beta0)
            + p_pairs * (intra.beta * n + intra.beta0)
            + q_levels * n * attach.beta)


# -- sample log ----------------------------------------------------------------

def samples_from_result(result, n: int) -> list[TimingSample]:
    """Turn a grow result's per-level timings into samples of size ``n``."""
    out = []
    for t in result.timings:
        out.append(TimingSample(t.level, "match", n, t.match, t.transport))
        if t.transport is not None and t.comms > 0:
            out.append(TimingSample(t.level, "comms", n, t.comms, t.transport))
        if t.level > 0 and t.add_update > 0:
            out.append(TimingSample(t.level, "add_update", n, t.add_update, t.transport))
    return out


def write_samples(samples: Iterable[TimingSample], path, append: bool = True) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(asdict(s), sort_keys=True) + "\n")


def read_samples(path) -> list[TimingSample]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(TimingSample(**json.loads(line)))
        except (TypeError, ValueError) as exc:
            raise FitError("%s:%d: bad sample record (%s)" % (path, i, exc)) from None
    return out


def report(models: dict[tuple[str, str | None], LinearModel]) -> tuple[dict, str]:
    """JSON-ready report and a plain-text table."""
    rows = []
    for (phase, transport), m in models.items():
        rows.append({"phase": phase, "transport": transport, "beta": m.beta,
                     "beta0": m.beta0, "avg_mape": m.mape, "avg_r2": m.r2,
                     "samples": m.samples})
    header = "%-11s %-9s %12s %12s %10s %9s %7s" % (
        "phase", "transport", "beta", "beta0", "avg MAPE", "avg R2", "n")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append("%-11s %-9s %12.5g %12.5g %10.5g %9.5f %7d" % (
            r["phase"], r["transport"] or "-", r["beta"], r["beta0"], r["avg_mape"],
            r["avg_r2"], r["samples"]))
    return {"models": rows}, "\n".join(lines)
