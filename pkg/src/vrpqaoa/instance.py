"""Link-based VRP instances, their constraint sets, and a brute-force oracle.

Conventions used across the package:

* Directed links are ordered lexicographically, e.g. for three nodes
  ``[(0,1), (0,2), (1,0), (1,2), (2,0), (2,1)]``.  Variable q of this list
  is qubit/bit q.
* Bitstrings are printed with variable 0 leftmost, so the string maps to
  an integer index via ``int(bits, 2)`` (bit 0 is the most significant).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .encode import QuboProblem

EQUAL = "equal"
AT_LEAST = "at-least"

#: Largest node count for which subtour subsets are enumerated.
DEFAULT_SUBTOUR_NODE_BUDGET = 6

#: Largest variable count accepted by exhaustive enumeration.
BRUTE_FORCE_LIMIT = 24


class InstanceTooLargeError(ValueError):
    """Instance exceeds an enumeration budget (subtour subsets or 2^n scan)."""


def bitstring_index(bits: str) -> int:
    """Integer index of a printed bitstring (leftmost character = bit 0 = MSB)."""
    return int(bits, 2)


def index_bitstring(index: int, n: int) -> str:
    """Inverse of :func:`bitstring_index`."""
    return format(index, f"0{n}b")


def _bit_column(n: int, q: int) -> np.ndarray:
    """Value of variable q across all 2^n assignment indices."""
    idx = np.arange(1 << n, dtype=np.int64)
    return (idx >> (n - 1 - q)) & 1


@dataclass(frozen=True)
class VrpInstance:
    """A link-based VRP instance; node 0 is the depot."""

    distances: tuple[tuple[float, ...], ...]
    vehicles: int

    def __post_init__(self) -> None:
        m = len(self.distances)
        if m < 2:
            raise ValueError("need at least a depot and one customer")
        if any(len(row) != m for row in self.distances):
            raise ValueError("distance matrix must be square")
        if any(w < 0 for row in self.distances for w in row):
            raise ValueError("distances must be nonnegative")
        if any(self.distances[i][i] != 0 for i in range(m)):
            raise ValueError("diagonal of the distance matrix must be zero")
        if self.vehicles < 1:
            raise ValueError("vehicle count must be >= 1")

    @property
    def node_count(self) -> int:
        return len(self.distances)

    @property
    def customers(self) -> range:
        return range(1, self.node_count)

    def distance(self, i: int, j: int) -> float:
        return self.distances[i][j]

    @classmethod
    def from_dict(cls, payload: dict) -> "VrpInstance":
        distances = tuple(tuple(float(w) for w in row) for row in payload["distances"])
        return cls(distances=distances, vehicles=int(payload["vehicles"]))

    @classmethod
    def from_json(cls, path: str) -> "VrpInstance":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"distances": [list(row) for row in self.distances], "vehicles": self.vehicles}


@dataclass(frozen=True)
class LinkVariableIndex:
    """Bijection between directed links (i, j) and bit/qubit positions."""

    links: tuple[tuple[int, int], ...]

    @classmethod
    def for_nodes(cls, node_count: int) -> "LinkVariableIndex":
        links = tuple((i, j) for i in range(node_count) for j in range(node_count) if i != j)
        return cls(links=links)

    @property
    def n(self) -> int:
        return len(self.links)

    def position(self, i: int, j: int) -> int:
        return self.links.index((i, j))

    def name(self, q: int) -> str:
        i, j = self.links[q]
        return f"x({i},{j})"


@dataclass(frozen=True)
class LinearConstraint:
    """Sum of unit-coefficient link variables compared against an integer."""

    variables: tuple[int, ...]
    rhs: int
    relation: str
    label: str = ""

    def __post_init__(self) -> None:
        if self.relation not in (EQUAL, AT_LEAST):
            raise ValueError(f"unknown relation {self.relation!r}")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("repeated variable in constraint")

    def holds(self, values: Sequence[int]) -> bool:
        total = sum(values[q] for q in self.variables)
        return total == self.rhs if self.relation == EQUAL else total >= self.rhs


@dataclass(frozen=True)
class ConstraintSet:
    n: int
    constraints: tuple[LinearConstraint, ...]

    def __post_init__(self) -> None:
        for c in self.constraints:
            if any(q >= self.n or q < 0 for q in c.variables):
                raise ValueError(f"constraint {c.label!r} references variable out of range")

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self) -> int:
        return len(self.constraints)


def build_constraints(
    inst: VrpInstance,
    subtour_node_budget: int = DEFAULT_SUBTOUR_NODE_BUDGET,
) -> ConstraintSet:
    """Degree, visit, and subtour-elimination constraints of an instance.

    Emission order: depot in-degree, depot out-degree, per-customer
    out-degree, per-customer in-degree, then one at-least-1 constraint per
    customer subset of size >= 2.  Exact duplicates (possible for the
    two-node instance) are dropped, keeping the first occurrence.  The
    out-degree-before-in-degree order makes the greedy XY-pair matching
    downstream pick out-degree pairs, which sit on adjacent qubits under
    the lexicographic link order.
    """
    m = inst.node_count
    if m > subtour_node_budget:
        raise InstanceTooLargeError(
            f"{m} nodes exceeds the subtour enumeration budget ({subtour_node_budget})"
        )
    idx = LinkVariableIndex.for_nodes(m)
    k = inst.vehicles
    constraints: list[LinearConstraint] = []

    def out_links(i: int) -> tuple[int, ...]:
        return tuple(idx.position(i, j) for j in range(m) if j != i)

    def in_links(i: int) -> tuple[int, ...]:
        return tuple(idx.position(j, i) for j in range(m) if j != i)

    constraints.append(LinearConstraint(in_links(0), k, EQUAL, "depot in-degree"))
    constraints.append(LinearConstraint(out_links(0), k, EQUAL, "depot out-degree"))
    for i in inst.customers:
        constraints.append(LinearConstraint(out_links(i), 1, EQUAL, f"node {i} out-degree"))
    for i in inst.customers:
        constraints.append(LinearConstraint(in_links(i), 1, EQUAL, f"node {i} in-degree"))
    for size in range(2, m):
        for subset in itertools.combinations(inst.customers, size):
            inside = set(subset)
            leaving = tuple(
                idx.position(i, j) for i in subset for j in range(m) if j not in inside
            )
            label = "subtour S={" + ",".join(str(i) for i in subset) + "}"
            constraints.append(LinearConstraint(leaving, 1, AT_LEAST, label))

    seen: set[tuple] = set()
    unique: list[LinearConstraint] = []
    for c in constraints:
        key = (tuple(sorted(c.variables)), c.rhs, c.relation)
        if key not in seen:
            seen.add(key)
            unique.append(c)
    return ConstraintSet(n=idx.n, constraints=tuple(unique))


def _as_values(bits: str | Sequence[int], n: int) -> list[int]:
    if isinstance(bits, str):
        if len(bits) != n:
            raise ValueError(f"expected {n} bits, got {len(bits)}")
        return [1 if ch == "1" else 0 for ch in bits]
    values = list(bits)
    if len(values) != n:
        raise ValueError(f"expected {n} bits, got {len(values)}")
    return values


def is_feasible(bits: str | Sequence[int], cs: ConstraintSet) -> bool:
    """True iff the assignment satisfies every constraint."""
    values = _as_values(bits, cs.n)
    return all(c.holds(values) for c in cs)


def route_cost(bits: str | Sequence[int], inst: VrpInstance) -> float:
    """Total distance of the active links, ignoring feasibility."""
    idx = LinkVariableIndex.for_nodes(inst.node_count)
    values = _as_values(bits, idx.n)
    return float(sum(inst.distance(i, j) * values[q] for q, (i, j) in enumerate(idx.links)))


def feasibility_mask(cs: ConstraintSet, n: int) -> np.ndarray:
    """Boolean feasibility of all 2^n assignments, vectorized."""
    if n > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{n} variables exceeds the enumeration limit")
    mask = np.ones(1 << n, dtype=bool)
    for c in cs:
        total = np.zeros(1 << n, dtype=np.int64)
        for q in c.variables:
            total += _bit_column(n, q)
        mask &= (total == c.rhs) if c.relation == EQUAL else (total >= c.rhs)
    return mask


@dataclass(frozen=True)
class BruteForceResult:
    """Exhaustive-scan optima, both unconstrained (QUBO) and feasibility-filtered."""

    qubo_argmin: tuple[str, ...]
    qubo_min: float
    feasible_optima: tuple[str, ...]
    feasible_cost: float
    feasible_count: int


def brute_force_optimum(
    inst: VrpInstance,
    qubo: "QuboProblem",
    tie_tol: float = 1e-9,
) -> BruteForceResult:
    """Scan all 2^n assignments for the QUBO minimum and the feasible cost minimum.

    The feasible side is computed from the raw constraints and link costs,
    independently of the penalty encoding, so it doubles as an oracle for it.
    """
    n = qubo.n
    if n > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{n} variables exceeds the enumeration limit")
    cs = build_constraints(inst)
    cols = [_bit_column(n, q).astype(float) for q in range(n)]

    values = np.full(1 << n, qubo.constant)
    for q, coeff in enumerate(qubo.linear):
        if coeff:
            values += coeff * cols[q]
    for (i, j), coeff in qubo.quadratic.items():
        if coeff:
            values += coeff * cols[i] * cols[j]
    qubo_min = float(values.min())
    qubo_argmin = tuple(
        index_bitstring(int(i), n) for i in np.flatnonzero(values <= qubo_min + tie_tol)
    )

    idx = LinkVariableIndex.for_nodes(inst.node_count)
    costs = np.zeros(1 << n)
    for q, (i, j) in enumerate(idx.links):
        w = inst.distance(i, j)
        if w:
            costs += w * cols[q]
    feasible = feasibility_mask(cs, n)
    count = int(feasible.sum())
    if count == 0:
        return BruteForceResult(qubo_argmin, qubo_min, (), math.inf, 0)
    best = float(costs[feasible].min())
    winners = feasible & (costs <= best + tie_tol)
    optima = tuple(index_bitstring(int(i), n) for i in np.flatnonzero(winners))
    return BruteForceResult(qubo_argmin, qubo_min, optima, best, count)
