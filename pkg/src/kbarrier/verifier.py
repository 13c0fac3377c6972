"""Interval branch-and-bound verification of candidate certificates.

A candidate B is checked against the four certificate conditions over the
full state box by searching each *negated* condition for a satisfying
point:

    I :  x in X_I  and  B(x) > 0
    U :  x in X_U  and  B(x) <= lam                      (lam = (k-1)*eps)
    E1:  x in X,  B(x) <= lam  and  B(f1(x)) - B(x) - eps > 0
    E2:  x in X,  B(x) <= 0    and  B(fk(x)) - B(x) > 0

Each search subdivides its region box breadth-first, splitting along the
widest dimension.  A box is discarded once any constraint's interval
enclosure proves it infeasible; a box whose midpoint satisfies every
constraint under exact point evaluation is a concrete counterexample; a box
narrower than delta that can be neither discarded nor confirmed is reported
as delta-sat.  `Valid` is returned only when all four searches discard
everything.  Exploration is deterministic, so verdicts are reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Box, Const, Expr, Tape, neg, sub, lin_comb, substitute
from .learner import KBCSpec, SafetySpec
from .dynamics import LinearDataModel

__all__ = [
    "VerificationTask", "Verdict", "Constraint",
    "condition_exprs", "check_point", "verify", "verify_linear",
    "CONDITION_TAGS",
]

CONDITION_TAGS = ("I", "U", "E1", "E2")

# constraint kinds: "le0" requires expr <= 0, "gt0" requires expr > 0
Constraint = tuple[Expr, str]

_DEFAULT_MAX_BOXES = 5_000_000
_PRUNED_SINK_CAP = 50_000
# evaluation batch size: bounds peak register memory at wide search fronts
_EVAL_CHUNK = 32_768


@dataclass(frozen=True)
class VerificationTask:
    """Certificate, symbolic dynamics and search parameters for one verification run."""

    B: Expr
    f1_sym: tuple[Expr, ...]
    fk_sym: tuple[Expr, ...]
    spec: SafetySpec
    kbc: KBCSpec
    delta: float = 0.001
    max_boxes: int = _DEFAULT_MAX_BOXES

    def __post_init__(self):
        object.__setattr__(self, "f1_sym", tuple(self.f1_sym))
        object.__setattr__(self, "fk_sym", tuple(self.fk_sym))
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.max_boxes < 1:
            raise ValueError("max_boxes must be >= 1")
        n = self.spec.n
        if len(self.f1_sym) != n or len(self.fk_sym) != n:
            raise ValueError("symbolic dynamics dimension mismatch")


@dataclass(frozen=True)
class Verdict:
    """Outcome of a verification run.

    kind is one of "valid", "counterexample", "delta_sat", "exhausted".
    `condition` names the violated / undecided condition for the latter
    three; `point` carries the confirmed witness, `box` the undecided box.
    For a counterexample, `margin` is the exact violation amount at the
    point; for delta-sat it is the worst possible violation the enclosure
    allows over the box.
    """

    kind: str
    condition: str | None = None
    point: tuple[float, ...] | None = None
    box: Box | None = None
    margin: float | None = None
    boxes_explored: int = 0
    wall_time: float = 0.0

    @property
    def is_valid(self) -> bool:
        return self.kind == "valid"

    def to_json(self) -> str:
        payload: dict = {"verdict": self.kind, "boxes_explored": self.boxes_explored,
                         "wall_time": self.wall_time}
        if self.condition is not None:
            payload["condition"] = self.condition
        if self.point is not None:
            payload["point"] = list(self.point)
        if self.box is not None:
            payload["box"] = self.box.bounds()
        if self.margin is not None:
            payload["margin"] = self.margin
        return json.dumps(payload)


def condition_exprs(task: VerificationTask) -> list[tuple[str, list[Constraint], Box]]:
    """The four negated conditions as (tag, constraint set, search region)."""
    B = task.B
    lam = task.kbc.lam
    eps = task.kbc.epsilon
    B_f1 = substitute(B, task.f1_sym)
    B_fk = substitute(B, task.fk_sym)
    gate_lam: Constraint = (sub(B, Const(lam)) if lam != 0.0 else B, "le0")
    return [
        ("I", [(B, "gt0")], task.spec.X_I),
        ("U", [gate_lam], task.spec.X_U),
        ("E1", [gate_lam, (sub(sub(B_f1, B), Const(eps)) if eps != 0.0 else sub(B_f1, B), "gt0")],
         task.spec.X),
        ("E2", [(B, "le0"), (sub(B_fk, B), "gt0")], task.spec.X),
    ]


def check_point(task: VerificationTask, x: Sequence[float]) -> list[tuple[str, float]]:
    """Exact per-condition violation check at a single state.

    Returns (tag, margin) for every condition violated at x, the margin
    being the amount by which the violating inequality holds.  The level
    conditions I and U apply only inside their regions; the evolution
    conditions are evaluated unconditionally, i.e. the increase itself is
    reported even when x lies outside the sub-level set the search gates
    on, so the diagnostic matches what an ungated conventional certificate
    check would flag.
    """
    x = np.asarray(x, dtype=float)
    B = task.B
    tape = Tape([B] + [substitute(B, task.f1_sym), substitute(B, task.fk_sym)])
    b_x, b_f1, b_fk = (float(v[0]) for v in tape.eval_points(x[None, :]))
    lam, eps = task.kbc.lam, task.kbc.epsilon
    violations: list[tuple[str, float]] = []
    if task.spec.X_I.contains(x) and b_x > 0.0:
        violations.append(("I", b_x))
    if task.spec.X_U.contains(x) and b_x <= lam:
        violations.append(("U", lam - b_x))
    if b_f1 - b_x - eps > 0.0:
        violations.append(("E1", b_f1 - b_x - eps))
    if b_fk - b_x > 0.0:
        violations.append(("E2", b_fk - b_x))
    return violations


@dataclass
class _SearchResult:
    tag: str
    status: str                 # "clean", "cex", "delta", "exhausted"
    point: np.ndarray | None = None
    box: tuple[np.ndarray, np.ndarray] | None = None
    margin: float | None = None
    boxes: int = 0


def _search(tag: str, constraints: list[Constraint], region: Box, delta: float,
            budget: int, margin_expr: Expr, pruned_sink: list | None) -> _SearchResult:
    """Breadth-first interval subdivision over one negated-condition set."""
    exprs = [c[0] for c in constraints]
    kinds = [c[1] for c in constraints]
    tape = Tape(exprs + [margin_expr])
    lo = region.lo()[None, :].astype(float)
    hi = region.hi()[None, :].astype(float)
    used = 0
    first_delta: tuple[np.ndarray, np.ndarray, float] | None = None

    while lo.shape[0]:
        used += lo.shape[0]
        if used > budget:
            return _SearchResult(tag, "exhausted", boxes=used)

        m = lo.shape[0]
        feasible = np.ones(m, dtype=bool)
        margin_hi = np.empty(m)
        for start in range(0, m, _EVAL_CHUNK):
            sl = slice(start, min(start + _EVAL_CHUNK, m))
            enclosures = tape.eval_boxes(lo[sl], hi[sl])
            # nan-safe: a box stays feasible unless an enclosure *proves* violation
            chunk_ok = np.ones(sl.stop - sl.start, dtype=bool)
            for (enc_lo, enc_hi), kind in zip(enclosures[:-1], kinds):
                chunk_ok &= ~(enc_lo > 0.0) if kind == "le0" else ~(enc_hi <= 0.0)
            feasible[sl] = chunk_ok
            margin_hi[sl] = enclosures[-1][1]
        if pruned_sink is not None and not feasible.all():
            drop = ~feasible
            if len(pruned_sink) < _PRUNED_SINK_CAP:
                pruned_sink.extend((tag, bl, bh) for bl, bh in zip(lo[drop], hi[drop]))
        lo, hi = lo[feasible], hi[feasible]
        margin_hi = margin_hi[feasible]
        if not lo.shape[0]:
            break

        mid = 0.5 * (lo + hi)
        m = mid.shape[0]
        confirmed = np.ones(m, dtype=bool)
        for start in range(0, m, _EVAL_CHUNK):
            sl = slice(start, min(start + _EVAL_CHUNK, m))
            vals = tape.eval_points(mid[sl])
            chunk_ok = np.ones(sl.stop - sl.start, dtype=bool)
            for v, kind in zip(vals[:-1], kinds):
                chunk_ok &= (v <= 0.0) if kind == "le0" else (v > 0.0)
            confirmed[sl] = chunk_ok
        if confirmed.any():
            idx = int(np.argmax(confirmed))
            point = mid[idx]
            # re-evaluate the single point: vector and scalar libm paths may
            # disagree in the last bit, and a confirmed witness must re-verify
            single = tape.eval_points(point[None, :])
            ok = all(
                (float(v[0]) <= 0.0) if kind == "le0" else (float(v[0]) > 0.0)
                for v, kind in zip(single[:-1], kinds)
            )
            if ok:
                return _SearchResult(tag, "cex", point=point,
                                     margin=float(single[-1][0]), boxes=used)

        widths = hi - lo
        wmax = widths.max(axis=1)
        small = wmax < delta
        if small.any() and first_delta is None:
            idx = int(np.argmax(small))
            # worst possible violation the enclosure allows over this box
            first_delta = (lo[idx].copy(), hi[idx].copy(), float(margin_hi[idx]))
        keep = ~small
        lo, hi = lo[keep], hi[keep]
        if not lo.shape[0]:
            break

        dim = np.argmax(hi - lo, axis=1)
        mid = 0.5 * (lo + hi)
        rows = np.arange(lo.shape[0])
        hi_left = hi.copy()
        hi_left[rows, dim] = mid[rows, dim]
        lo_right = lo.copy()
        lo_right[rows, dim] = mid[rows, dim]
        lo = np.vstack([lo, lo_right])
        hi = np.vstack([hi_left, hi])

    if first_delta is not None:
        return _SearchResult(tag, "delta", box=(first_delta[0], first_delta[1]),
                             margin=first_delta[2], boxes=used)
    return _SearchResult(tag, "clean", boxes=used)


def _margin_expr(tag: str, constraints: list[Constraint]) -> Expr:
    """Violation-amount expression, sharing subtrees with the constraints."""
    if tag == "I":
        return constraints[0][0]          # B itself
    if tag == "U":
        return neg(constraints[0][0])     # lam - B
    return constraints[-1][0]             # the evolution increase


def verify(task: VerificationTask, pruned_sink: list | None = None) -> Verdict:
    """Run all four negated-condition searches and aggregate the verdict.

    A confirmed counterexample returns immediately (searches run in the
    fixed order I, U, E1, E2).  Otherwise the first delta-sat box found, if
    any, is reported; exceeding the box budget reports exhaustion; and only
    a fully discarded search space yields `valid`.

    `pruned_sink`, when given, collects (condition tag, lo, hi) triples of
    discarded boxes for soundness auditing.
    """
    t0 = time.perf_counter()
    total = 0
    first_delta: tuple[str, tuple[np.ndarray, np.ndarray], float] | None = None
    for tag, constraints, region in condition_exprs(task):
        budget = task.max_boxes - total
        if budget <= 0:
            return Verdict(kind="exhausted", boxes_explored=total,
                           wall_time=time.perf_counter() - t0)
        margin = _margin_expr(tag, constraints)
        result = _search(tag, constraints, region, task.delta, budget, margin, pruned_sink)
        total += result.boxes
        if result.status == "cex":
            return Verdict(kind="counterexample", condition=tag,
                           point=tuple(float(v) for v in result.point),
                           margin=result.margin, boxes_explored=total,
                           wall_time=time.perf_counter() - t0)
        if result.status == "exhausted":
            return Verdict(kind="exhausted", condition=tag, boxes_explored=total,
                           wall_time=time.perf_counter() - t0)
        if result.status == "delta" and first_delta is None:
            first_delta = (tag, result.box, result.margin)
    elapsed = time.perf_counter() - t0
    if first_delta is not None:
        tag, (blo, bhi), margin = first_delta
        box = Box.from_bounds(list(zip(blo, bhi)))
        return Verdict(kind="delta_sat", condition=tag, box=box, margin=margin,
                       boxes_explored=total, wall_time=elapsed)
    return Verdict(kind="valid", boxes_explored=total, wall_time=elapsed)


def verify_linear(B: Expr, model: LinearDataModel, spec: SafetySpec, kbc: KBCSpec,
                  delta: float = 0.001, max_boxes: int = _DEFAULT_MAX_BOXES) -> Verdict:
    """Verify against linear dynamics: f1 = A_hat x, fk = A_hat^k x in closed form."""
    from .expr import Var

    xs = [Var(i) for i in range(model.n)]
    A = model.A_hat
    Ak = np.linalg.matrix_power(A, kbc.k)
    f1 = tuple(lin_comb(A[i], xs) for i in range(model.n))
    fk = tuple(lin_comb(Ak[i], xs) for i in range(model.n))
    task = VerificationTask(B=B, f1_sym=f1, fk_sym=fk, spec=spec, kbc=kbc,
                            delta=delta, max_boxes=max_boxes)
    return verify(task)
