"""Segment decomposition of a plan via shortest path on a robustness graph.

Nodes are the N+1 time points of a plan. Every forward pair (i, j) is an
edge whose divergence metric is the product of per-step expected metrics;
edges strictly below 1 are robust. Robust edges get cheaper the longer they
span, non-robust edges cost proportionally to their length, so the shortest
path prefers long open-loop segments and pays for closed-loop coverage only
where the plan does not contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import DivergenceProfile, segment_metric

ROBUST = "robust"
NON_ROBUST = "non_robust"


def edge_cost(i: int, j: int, robust: bool, robust_cost: float = 1.0, non_robust_cost: float = 1000.0) -> float:
    """Cost of covering steps [i, j) as one segment."""
    if not 0 <= i < j:
        raise IndexError(f"edge ({i}, {j}) must move forward")
    span = j - i
    return robust_cost / span if robust else non_robust_cost * span


@dataclass
class RobustnessGraph:
    """Dense DAG over plan time points with per-edge metric, flag, and cost."""

    n_steps: int
    metric: np.ndarray       # (N+1, N+1), metric[i, j] for i < j
    robust: np.ndarray       # (N+1, N+1) bool
    cost: np.ndarray         # (N+1, N+1)
    robust_cost: float
    non_robust_cost: float


def build_robustness_graph(
    profile: DivergenceProfile,
    robust_cost: float = 1.0,
    non_robust_cost: float = 1000.0,
) -> RobustnessGraph:
    """Evaluate every forward segment of the profile; robust means metric < 1."""
    if not robust_cost < non_robust_cost:
        raise ValueError("robust edge cost must be below the non-robust edge cost")
    n = len(profile.per_step_expected)
    metric = np.full((n + 1, n + 1), np.nan)
    robust = np.zeros((n + 1, n + 1), dtype=bool)
    cost = np.full((n + 1, n + 1), np.nan)
    for i in range(n):
        for j in range(i + 1, n + 1):
            m = segment_metric(profile, i, j)
            metric[i, j] = m
            robust[i, j] = m < 1.0
            cost[i, j] = edge_cost(i, j, m < 1.0, robust_cost, non_robust_cost)
    return RobustnessGraph(n, metric, robust, cost, robust_cost, non_robust_cost)


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    kind: str

    def __post_init__(self):
        if self.kind not in (ROBUST, NON_ROBUST):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not 0 <= self.start < self.end:
            raise ValueError("segment must move forward")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class SegmentPlan:
    """Ordered contiguous segments covering steps 0..N, plus the path cost."""

    segments: list[Segment]
    total_cost: float

    def __post_init__(self):
        prev = 0
        for seg in self.segments:
            if seg.start != prev:
                raise ValueError("segments must be contiguous from step 0")
            prev = seg.end

    @property
    def n_steps(self) -> int:
        return self.segments[-1].end if self.segments else 0

    def to_dict(self) -> dict:
        return {
            "total_cost": self.total_cost,
            "segments": [
                {"start": s.start, "end": s.end, "kind": s.kind} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentPlan":
        return cls(
            [Segment(s["start"], s["end"], s["kind"]) for s in d["segments"]],
            float(d["total_cost"]),
        )


def min_cost_path(graph: RobustnessGraph) -> SegmentPlan:
    """Exact shortest segment decomposition of the plan.

    Dynamic programming over the topological (time) order. Consecutive
    non-robust segments are merged afterwards (their costs are additive);
    remaining ties break toward fewer segments, then toward robust edges
    placed as early as possible.
    """
    n = graph.n_steps
    INF = float("inf")
    best_cost = [INF] * (n + 1)
    best_segs = [0] * (n + 1)
    pred = [-1] * (n + 1)
    best_cost[0] = 0.0
    for j in range(1, n + 1):
        for i in range(j):
            if best_cost[i] == INF:
                continue
            cand_cost = best_cost[i] + graph.cost[i, j]
            cand_segs = best_segs[i] + 1
            if cand_cost < best_cost[j] or (
                cand_cost == best_cost[j] and cand_segs < best_segs[j]
            ):
                best_cost[j] = cand_cost
                best_segs[j] = cand_segs
                pred[j] = i
            elif cand_cost == best_cost[j] and cand_segs == best_segs[j] and pred[j] >= 0:
                cand_robust = bool(graph.robust[i, j])
                cur_robust = bool(graph.robust[pred[j], j])
                if (cand_robust and not cur_robust) or (
                    cand_robust == cur_robust
                    and (i < pred[j] if cand_robust else i > pred[j])
                ):
                    best_segs[j] = cand_segs
                    pred[j] = i
    # backtrack
    raw = []
    j = n
    while j > 0:
        i = pred[j]
        raw.append(Segment(i, j, ROBUST if graph.robust[i, j] else NON_ROBUST))
        j = i
    raw.reverse()
    # merge runs of non-robust segments; their costs add up to the same total
    merged: list[Segment] = []
    for seg in raw:
        if merged and merged[-1].kind == NON_ROBUST and seg.kind == NON_ROBUST:
            merged[-1] = Segment(merged[-1].start, seg.end, NON_ROBUST)
        else:
            merged.append(seg)
    return SegmentPlan(merged, float(best_cost[n]))
