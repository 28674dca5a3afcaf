"""Exact 0-1 integer linear programming over candidate-pair labelings.

One binary variable per (pair, label); exactly one label per pair.  Beyond
that single-label rule the program carries four document constraint families:

* C1  every word has at least one incident real-labeled pair
* C2  a question-answer pair forces proximate_H or same-entity on the
      successor pair
* C3  one label per pair (kept implicit by the assignment encoding)
* C4  every word has at least one incident semantic pair
      (question-answer / same-entity / header-question)
* C5  a same-entity link between consecutive words forces proximate_H,
      same-entity or question-answer on the next consecutive pair

The solver is a best-first branch and bound over per-pair label domains with
constraint propagation; the lower bound is the sum of per-pair minimum costs
over the currently allowed labels, which is valid because every pair takes
exactly one label.  A feasibility repair of the greedy labeling provides the
starting incumbent, so a feasible answer exists at any time budget.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .graphs import (
    LABEL_INDEX,
    NUM_LABELS,
    REAL_LABELS,
    SEMANTIC_LABELS,
    ENTITY_LEVEL_LABELS,
    WordRelationGraph,
    WordRelationLabel,
    canonicalize_wrg,
)
from .ingest import Neighborhood

if TYPE_CHECKING:  # pragma: no cover
    from .model import ScoreTable

LABELS = tuple(WordRelationLabel)
QA = LABEL_INDEX[WordRelationLabel.QUESTION_ANSWER]
HQ = LABEL_INDEX[WordRelationLabel.HEADER_QUESTION]
PV = LABEL_INDEX[WordRelationLabel.PROXIMATE_V]
PH = LABEL_INDEX[WordRelationLabel.PROXIMATE_H]
SE = LABEL_INDEX[WordRelationLabel.SAME_ENTITY]
NO_REL = LABEL_INDEX[WordRelationLabel.NO_RELATION]

_REAL_MASK = sum(1 << LABEL_INDEX[z] for z in REAL_LABELS)
_SEMANTIC_MASK = sum(1 << LABEL_INDEX[z] for z in SEMANTIC_LABELS)
_ENTITY_MASK = sum(1 << LABEL_INDEX[z] for z in ENTITY_LEVEL_LABELS)
_FULL_MASK = (1 << NUM_LABELS) - 1
_C2_MASK = (1 << PH) | (1 << SE)
_C5_MASK = (1 << PH) | (1 << SE) | (1 << QA)


class InfeasibleProblemError(RuntimeError):
    """Raised when propagation proves a problem has no feasible labeling; the
    message carries the violated row set."""


@dataclass(frozen=True)
class ConstraintConfig:
    """Which constraint families are active and how the ambiguous ones are
    read.  ``c1_label_set`` chooses between all five real labels (default)
    and the entity-level labels only; ``c2_indexing`` chooses the successor
    pair of a question-answer pair (i, j): "successor" -> (j, j+1),
    "literal" -> (i, j+1)."""

    c1: bool = True
    c2: bool = True
    c4: bool = True
    c5: bool = True
    c1_label_set: str = "real"          # "real" | "entity"
    c2_indexing: str = "successor"      # "successor" | "literal"

    def __post_init__(self) -> None:
        if self.c1_label_set not in ("real", "entity"):
            raise ValueError(f"bad c1_label_set {self.c1_label_set!r}")
        if self.c2_indexing not in ("successor", "literal"):
            raise ValueError(f"bad c2_indexing {self.c2_indexing!r}")


@dataclass(frozen=True)
class Row:
    """One linear row: sum of u[p, z] over the option set >= rhs, where rhs is
    1 for covering rows and u[trigger] for implication rows.  ``opt_mask`` is
    a label bitmask shared by every option pair.  C3 rows are equalities
    (sum over all labels of one pair == 1)."""

    family: str
    opt_pairs: tuple[int, ...]
    opt_mask: int
    trigger: tuple[int, int] | None = None
    equality: bool = False

    @property
    def options(self) -> list[tuple[int, int]]:
        return [(p, z) for p in self.opt_pairs
                for z in range(NUM_LABELS) if self.opt_mask >> z & 1]

    def satisfied_by(self, labels: Sequence[int]) -> bool:
        hit = any(self.opt_mask >> labels[p] & 1 for p in self.opt_pairs)
        if self.equality:
            return True  # assignment semantics give one label per pair
        if self.trigger is not None:
            tp, tz = self.trigger
            return hit or labels[tp] != tz
        return hit


def constraint_rows(nbhd: Neighborhood, config: ConstraintConfig | None = None
                    ) -> list[Row]:
    """C1/C2/C4/C5 rows for a candidate neighborhood (C3 stays implicit)."""
    config = config or ConstraintConfig()
    rows: list[Row] = []
    n = nbhd.n_words
    incident: list[list[int]] = [[] for _ in range(n)]
    for p, (i, j) in enumerate(nbhd.pairs):
        incident[int(i)].append(p)
        incident[int(j)].append(p)

    c1_mask = _REAL_MASK if config.c1_label_set == "real" else _ENTITY_MASK
    for v in range(n):
        if not incident[v]:
            continue
        if config.c1:
            rows.append(Row("C1", tuple(incident[v]), c1_mask))
        if config.c4:
            rows.append(Row("C4", tuple(incident[v]), _SEMANTIC_MASK))

    if config.c2:
        for p, (i, j) in enumerate(nbhd.pairs):
            i, j = int(i), int(j)
            succ = (i, j + 1) if config.c2_indexing == "literal" else (j, j + 1)
            q = nbhd.index_of(*succ)
            if q is not None:
                rows.append(Row("C2", (q,), _C2_MASK, trigger=(p, QA)))

    if config.c5:
        for i in range(1, n - 1):
            p_prev = nbhd.index_of(i - 1, i)
            p_next = nbhd.index_of(i, i + 1)
            if p_prev is not None and p_next is not None:
                rows.append(Row("C5", (p_next,), _C5_MASK, trigger=(p_prev, SE)))
    return rows


@dataclass(frozen=True)
class IlpProblem:
    """Costs plus structured rows.  Variable (p, z) has column p * 6 + z; the
    objective is the sum of selected costs (negative log-probabilities), so
    the minimizer is the most likely feasible labeling."""

    pairs: np.ndarray            # (P, 2)
    n_words: int
    costs: np.ndarray            # (P, NUM_LABELS)
    rows: tuple[Row, ...]
    config: ConstraintConfig

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def n_variables(self) -> int:
        return self.n_pairs * NUM_LABELS

    def structural_rows(self) -> list[Row]:
        return [r for r in self.rows if not r.equality]


@dataclass(frozen=True)
class IlpSolution:
    labels: np.ndarray           # (P,) chosen label per pair
    objective: float
    nodes_explored: int
    optimal: bool
    wall_time: float

    def violated_rows(self, problem: IlpProblem) -> list[Row]:
        return [r for r in problem.structural_rows()
                if not r.satisfied_by(self.labels)]


def build_ilp(scores: "ScoreTable", nbhd: Neighborhood,
              config: ConstraintConfig | None = None) -> IlpProblem:
    """Costs are negative log-softmax probabilities per (pair, label)."""
    config = config or ConstraintConfig()
    costs = -scores.log_probs
    c3 = [Row("C3", (p,), _FULL_MASK, equality=True) for p in range(len(nbhd.pairs))]
    rows = tuple(c3) + tuple(constraint_rows(nbhd, config))
    return IlpProblem(pairs=nbhd.pairs, n_words=nbhd.n_words,
                      costs=np.asarray(costs, dtype=np.float64),
                      rows=rows, config=config)


def assignment_to_wrg(labels: np.ndarray, pairs: np.ndarray, n_words: int
                      ) -> WordRelationGraph:
    """Non-no-relation labels become edges; directed labels orient from the
    lower (earlier reading order) word to the higher."""
    edges = []
    for p in np.nonzero(np.asarray(labels) != NO_REL)[0]:
        i, j = int(pairs[p, 0]), int(pairs[p, 1])
        edges.append((i, LABELS[int(labels[p])], j))
    return canonicalize_wrg(WordRelationGraph(tuple(range(n_words)), tuple(edges)))


def decode(solution: IlpSolution, nbhd: Neighborhood) -> WordRelationGraph:
    return assignment_to_wrg(solution.labels, nbhd.pairs, nbhd.n_words)


# ---------------------------------------------------------------------------
# Feasibility repair (greedy incumbent)


def repair_assignment(labels: np.ndarray, problem: IlpProblem) -> np.ndarray:
    """Make a labeling feasible with low-cost local flips.

    Two passes: covering rows first (flip the cheapest incident pair to a
    semantic label; this never breaks another covering row), then implication
    rows in forward-pair order (set the successor pair to the cheapest safe
    option).  Flips made by the forward pass only ever activate rows whose
    successor pair is lexicographically later, so one sweep terminates with a
    feasible assignment.
    """
    labels = np.asarray(labels, dtype=np.int64).copy()
    C = problem.costs
    cover = [r for r in problem.structural_rows() if r.trigger is None]
    cover.sort(key=lambda r: r.family, reverse=True)  # C4 before C1
    trig = [r for r in problem.structural_rows() if r.trigger is not None]

    for row in cover:
        if row.satisfied_by(labels):
            continue
        best = None
        for p in row.opt_pairs:
            for z in range(NUM_LABELS):
                if row.opt_mask >> z & 1 and (row.opt_mask & _SEMANTIC_MASK) >> z & 1:
                    delta = C[p, z] - C[p, labels[p]]
                    if best is None or delta < best[0]:
                        best = (delta, p, z)
        if best is None:  # row allows no semantic label (entity-only C1)
            for p in row.opt_pairs:
                for z in range(NUM_LABELS):
                    if row.opt_mask >> z & 1:
                        delta = C[p, z] - C[p, labels[p]]
                        if best is None or delta < best[0]:
                            best = (delta, p, z)
        if best is None:
            raise InfeasibleProblemError(f"covering row has no options: {row}")
        labels[best[1]] = best[2]

    by_succ: dict[int, list[Row]] = {}
    for row in trig:
        by_succ.setdefault(row.opt_pairs[0], []).append(row)

    def succ_key(q: int) -> tuple[int, int]:
        return (int(problem.pairs[q, 0]), int(problem.pairs[q, 1]))

    for q in sorted(by_succ, key=succ_key):
        active = [r for r in by_succ[q]
                  if labels[r.trigger[0]] == r.trigger[1]]
        if not active or all(r.opt_mask >> labels[q] & 1 for r in active):
            continue
        allowed = _FULL_MASK
        for r in active:
            allowed &= r.opt_mask
        # keep q semantic if it currently is one, so covering rows stay whole
        if _SEMANTIC_MASK >> labels[q] & 1 and allowed & _SEMANTIC_MASK:
            allowed &= _SEMANTIC_MASK
        choices = [z for z in range(NUM_LABELS) if allowed >> z & 1]
        if not choices:
            raise InfeasibleProblemError(f"conflicting implication rows at pair {q}")
        labels[q] = min(choices, key=lambda z: (C[q, z], z))
    return labels


# ---------------------------------------------------------------------------
# Branch and bound


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    serial: int
    domains: np.ndarray = field(compare=False)


class _Propagator:
    """Domain propagation over structured rows with a pair -> rows index."""

    def __init__(self, problem: IlpProblem):
        self.rows = problem.structural_rows()
        self.touch: dict[int, list[int]] = {}
        for ridx, row in enumerate(self.rows):
            involved = set(row.opt_pairs)
            if row.trigger is not None:
                involved.add(row.trigger[0])
            for p in involved:
                self.touch.setdefault(p, []).append(ridx)

    def run(self, domains: np.ndarray, dirty: Iterable[int]) -> bool:
        """Shrink domains to a propagation fixpoint; False if infeasible."""
        queue = list(dict.fromkeys(dirty))
        queued = set(queue)
        while queue:
            p0 = queue.pop()
            queued.discard(p0)
            for ridx in self.touch.get(p0, ()):
                row = self.rows[ridx]
                changed: list[int] = []
                if row.trigger is None:
                    alive = [p for p in row.opt_pairs if domains[p] & row.opt_mask]
                    if not alive:
                        return False
                    if len(alive) == 1:
                        q = alive[0]
                        new = domains[q] & row.opt_mask
                        if new != domains[q]:
                            domains[q] = new
                            changed.append(q)
                else:
                    tp, tz = row.trigger
                    if not domains[tp] >> tz & 1:
                        continue
                    q = row.opt_pairs[0]
                    alive = domains[q] & row.opt_mask
                    if not alive:
                        new = domains[tp] & ~(1 << tz)
                        if not new:
                            return False
                        domains[tp] = new
                        changed.append(tp)
                    elif domains[tp] == 1 << tz:
                        if alive != domains[q]:
                            domains[q] = alive
                            changed.append(q)
                for c in changed:
                    if c not in queued:
                        queue.append(c)
                        queued.add(c)
        return True


class _Checker:
    """Vectorized row evaluation for a full assignment."""

    def __init__(self, problem: IlpProblem):
        rows = problem.structural_rows()
        self.rows = rows
        counts = [len(r.opt_pairs) for r in rows]
        self.flat_pairs = np.array([p for r in rows for p in r.opt_pairs],
                                   dtype=np.int64)
        self.flat_mask = np.repeat(np.array([r.opt_mask for r in rows],
                                            dtype=np.int64), counts)
        self.starts = np.cumsum([0] + counts[:-1]) if rows else np.zeros(0, dtype=np.int64)
        self.t_pair = np.array([r.trigger[0] if r.trigger else -1 for r in rows],
                               dtype=np.int64)
        self.t_label = np.array([r.trigger[1] if r.trigger else -1 for r in rows],
                                dtype=np.int64)

    def violated(self, labels: np.ndarray) -> list[int]:
        if not self.rows:
            return []
        hit = (self.flat_mask >> labels[self.flat_pairs] & 1).astype(bool)
        sat = np.logical_or.reduceat(hit, self.starts)
        active = np.ones(len(self.rows), dtype=bool)
        has_t = self.t_pair >= 0
        active[has_t] = labels[self.t_pair[has_t]] == self.t_label[has_t]
        return list(np.nonzero(active & ~sat)[0])


def _masked_argmin(costs: np.ndarray, domains: np.ndarray) -> tuple[np.ndarray, float]:
    allowed = (domains[:, None] >> np.arange(NUM_LABELS) & 1).astype(bool)
    masked = np.where(allowed, costs, np.inf)
    labels = np.argmin(masked, axis=1)
    bound = float(masked[np.arange(len(labels)), labels].sum())
    return labels, bound


def solve_branch_and_bound(problem: IlpProblem,
                           time_limit: float = 60.0,
                           max_nodes: int = 5000,
                           greedy_labels: np.ndarray | None = None) -> IlpSolution:
    """Exact best-first branch and bound.

    ``max_nodes`` is the deterministic budget (results are reproducible when
    it binds); ``time_limit`` is a wall-clock backstop.  On exhaustion the
    incumbent is returned with ``optimal=False``.
    """
    start = time.monotonic()
    P = problem.n_pairs
    if P == 0:
        return IlpSolution(np.zeros(0, dtype=np.int64), 0.0, 0, True, 0.0)

    C = problem.costs
    if greedy_labels is None:
        greedy_labels = np.argmin(C, axis=1)
    incumbent = repair_assignment(greedy_labels, problem)
    inc_obj = float(C[np.arange(P), incumbent].sum())

    prop = _Propagator(problem)
    checker = _Checker(problem)
    root = np.full(P, _FULL_MASK, dtype=np.int64)
    if not prop.run(root, range(P)):
        raise InfeasibleProblemError(
            "root propagation failed; violated rows: "
            f"{[str(r) for r in IlpSolution(incumbent, inc_obj, 0, False, 0.0).violated_rows(problem)]}")
    labels, bound = _masked_argmin(C, root)

    serial = 0
    heap = [_Node(bound, 0, serial, root)]
    nodes = 0
    optimal = True
    eps = 1e-12
    while heap:
        node = heapq.heappop(heap)
        if node.bound >= inc_obj - eps:
            break  # best-first: nothing left can improve
        nodes += 1
        if nodes > max_nodes or time.monotonic() - start > time_limit:
            optimal = False
            break
        labels, bound = _masked_argmin(C, node.domains)
        bad = checker.violated(labels)
        if not bad:
            assert bound <= inc_obj + eps, "relaxation bound exceeded incumbent"
            incumbent, inc_obj = labels, bound
            continue
        # branch on an unfixed pair from the violated rows: largest gap
        # between best and second-best allowed label
        cand: set[int] = set()
        for ridx in bad:
            row = checker.rows[ridx]
            cand.update(row.opt_pairs)
            if row.trigger is not None:
                cand.add(row.trigger[0])
        cand = {p for p in cand if bin(int(node.domains[p])).count("1") > 1}
        if not cand:  # propagation should prevent this; treat as pruned
            continue
        best_p, best_gap = -1, -1.0
        for p in sorted(cand):
            costs_p = [(C[p, z], z) for z in range(NUM_LABELS)
                       if node.domains[p] >> z & 1]
            costs_p.sort()
            gap = costs_p[1][0] - costs_p[0][0]
            if gap > best_gap:
                best_p, best_gap = p, gap
        z_star = labels[best_p]
        for keep in (True, False):
            child = node.domains.copy()
            child[best_p] = (1 << z_star) if keep else child[best_p] & ~(1 << z_star)
            if child[best_p] and prop.run(child, [best_p]):
                _, child_bound = _masked_argmin(C, child)
                if child_bound < inc_obj - eps:
                    serial += 1
                    heapq.heappush(heap, _Node(child_bound, node.neg_depth - 1,
                                               serial, child))
    return IlpSolution(labels=incumbent, objective=inc_obj,
                       nodes_explored=nodes, optimal=optimal,
                       wall_time=time.monotonic() - start)


# ---------------------------------------------------------------------------
# Brute force oracle

BRUTE_FORCE_LIMIT = 10


def brute_force(problem: IlpProblem) -> IlpSolution:
    """Exhaustive minimum over all single-label-per-pair assignments that
    satisfy every row.  Guarded to small instances."""
    start = time.monotonic()
    P = problem.n_pairs
    if P > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} pairs, got {P}")
    if P == 0:
        return IlpSolution(np.zeros(0, dtype=np.int64), 0.0, 0, True, 0.0)
    rows = problem.structural_rows()
    total = NUM_LABELS ** P
    best_obj, best_assign = np.inf, None
    chunk = 1 << 18
    radix = NUM_LABELS ** np.arange(P, dtype=np.int64)
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        assign = (idx[:, None] // radix[None, :]) % NUM_LABELS  # (m, P)
        ok = np.ones(len(idx), dtype=bool)
        for row in rows:
            hit = np.zeros(len(idx), dtype=bool)
            for p in row.opt_pairs:
                hit |= (row.opt_mask >> assign[:, p] & 1).astype(bool)
            if row.trigger is not None:
                tp, tz = row.trigger
                ok &= hit | (assign[:, tp] != tz)
            else:
                ok &= hit
        if not ok.any():
            continue
        objs = problem.costs[np.arange(P)[None, :], assign].sum(axis=1)
        objs[~ok] = np.inf
        k = int(np.argmin(objs))
        if objs[k] < best_obj:
            best_obj = float(objs[k])
            best_assign = assign[k].copy()
    if best_assign is None:
        raise InfeasibleProblemError("no feasible assignment exists")
    return IlpSolution(labels=best_assign.astype(np.int64), objective=best_obj,
                       nodes_explored=total, optimal=True,
                       wall_time=time.monotonic() - start)


# ---------------------------------------------------------------------------
# LP text dump (debug interface)


def dump_lp(problem: IlpProblem) -> str:
    """Problem in LP text format for cross-checking with external solvers."""
    def var(p: int, z: int) -> str:
        return f"u_{p}_{z}"

    lines = ["Minimize", " obj: " + " + ".join(
        f"{problem.costs[p, z]:.12g} {var(p, z)}"
        for p in range(problem.n_pairs) for z in range(NUM_LABELS))]
    lines.append("Subject To")
    for k, row in enumerate(problem.rows):
        terms = " + ".join(var(p, z) for p, z in row.options)
        if row.equality:
            lines.append(f" {row.family.lower()}_{k}: {terms} = 1")
        elif row.trigger is None:
            lines.append(f" {row.family.lower()}_{k}: {terms} >= 1")
        else:
            tp, tz = row.trigger
            lines.append(f" {row.family.lower()}_{k}: {terms} - {var(tp, tz)} >= 0")
    lines.append("Binary")
    lines.append(" " + " ".join(var(p, z) for p in range(problem.n_pairs)
                                for z in range(NUM_LABELS)))
    lines.append("End")
    return "\n".join(lines) + "\n"
