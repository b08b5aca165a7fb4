"""Rate-pair bounds for the two key-agreement strategies.

Each bound is evaluated at a concrete auxiliary system (channels S, T, U, V
layered on the three-terminal source) and yields linear constraints on
(R1, R2).  Regions are assembled by enumerating auxiliary channels on a
simplex lattice and taking the union of the per-point constraint sets.

Families
--------
forward-inner   full joint p(u|s) p(v|t) p(s|x1) p(t|x2) p(x1,x2,x3);
                per-key bounds plus a sum bound.
forward-outer   same product parameterization (the listed Markov chains do
                not pin down the (S,T) coupling, so this is a lower
                approximation of the true outer bound -- the exact explicit
                rectangle is available separately via `explicit_outer`).
backward-inner  full joint p(u|s,t) p(s,t|x3) p(x1,x2,x3).
backward-outer  backward factorization restricted to channels satisfying the
                chains U - S - X3 and U - T - X3 (enforced by rejection).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .pmf import (
    BudgetExceededError,
    Channel,
    JointPmf,
    PmfError,
    VariableId,
    cond_mutual_information as cmi,
    entry_budget,
)

__all__ = [
    "INF",
    "RateConstraintSet",
    "RatePoint",
    "RateRegion",
    "GridSpec",
    "AuxSystem",
    "FamilyError",
    "forward_inner_point",
    "forward_outer_point",
    "explicit_outer",
    "backward_inner_point",
    "backward_outer_point",
    "enumerate_region",
    "single_key_capacity",
    "pareto_frontier",
    "upper_concave_envelope",
    "lattice_rows",
    "lattice_channels",
]

INF = math.inf

FAMILIES = ("forward-inner", "forward-outer", "backward-inner", "backward-outer")

MARKOV_TOL = 1e-9


class FamilyError(PmfError):
    """Auxiliary system does not satisfy the family's factorization contract."""


@dataclass(frozen=True)
class RateConstraintSet:
    """The region {(R1,R2) >= 0 : R1 <= r1_max, R2 <= r2_max, R1+R2 <= sum_max}."""

    r1_max: float
    r2_max: float
    sum_max: float = INF

    def contains(self, r1: float, r2: float, tol: float = 0.0) -> bool:
        return (
            r1 >= -tol
            and r2 >= -tol
            and r1 <= self.r1_max + tol
            and r2 <= self.r2_max + tol
            and r1 + r2 <= self.sum_max + tol
        )

    @property
    def max_r1(self) -> float:
        """Largest achievable R1 inside the set."""
        return min(self.r1_max, self.sum_max)

    @property
    def max_r2(self) -> float:
        return min(self.r2_max, self.sum_max)

    def r2_at(self, r1: float) -> float:
        """Largest feasible R2 at the given R1, or -inf if R1 infeasible."""
        if r1 > self.max_r1:
            return -INF
        return min(self.r2_max, self.sum_max - r1)

    def dominates(self, other: "RateConstraintSet") -> bool:
        return (
            self.r1_max >= other.r1_max
            and self.r2_max >= other.r2_max
            and self.sum_max >= other.sum_max
        )


@dataclass(frozen=True)
class RatePoint:
    constraints: RateConstraintSet
    descriptor: dict


@dataclass
class RateRegion:
    """Union of per-auxiliary constraint sets plus its Pareto frontier."""

    points: list
    frontier: list
    hull: list | None = None
    meta: dict = field(default_factory=dict)

    def contains(self, r1: float, r2: float, tol: float = 1e-12) -> bool:
        return any(p.constraints.contains(r1, r2, tol) for p in self.points)

    @property
    def constraint_sets(self) -> list:
        return [p.constraints for p in self.points]


# ---------------------------------------------------------------------------
# Auxiliary systems
# ---------------------------------------------------------------------------

class AuxSystem:
    """A source joint extended with auxiliary variables for one bound family."""

    __slots__ = ("base", "channels", "family", "full")

    def __init__(self, base, channels, family, full):
        if family not in FAMILIES:
            raise FamilyError(f"unknown family {family!r}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "channels", tuple(channels))
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "full", full)

    def __setattr__(self, *a):
        raise AttributeError("AuxSystem is immutable")

    @classmethod
    def forward(cls, base: JointPmf, ch_s: Channel, ch_t: Channel,
                ch_u: Channel, ch_v: Channel, family: str = "forward-inner") -> "AuxSystem":
        """Layer p(s|x1), p(t|x2), p(u|s), p(v|t) onto the source."""
        if family not in ("forward-inner", "forward-outer"):
            raise FamilyError(f"{family!r} is not a forward family")
        _expect(ch_s, ("X1",), ("S",))
        _expect(ch_t, ("X2",), ("T",))
        _expect(ch_u, ("S",), ("U",))
        _expect(ch_v, ("T",), ("V",))
        full = base.extend(ch_s).extend(ch_t).extend(ch_u).extend(ch_v)
        return cls(base, (ch_s, ch_t, ch_u, ch_v), family, full)

    @classmethod
    def backward(cls, base: JointPmf, ch_st: Channel, ch_u: Channel,
                 family: str = "backward-inner") -> "AuxSystem":
        """Layer p(s,t|x3) and p(u|s,t) onto the source."""
        if family not in ("backward-inner", "backward-outer"):
            raise FamilyError(f"{family!r} is not a backward family")
        _expect(ch_st, ("X3",), ("S", "T"))
        _expect(ch_u, ("S", "T"), ("U",))
        full = base.extend(ch_st).extend(ch_u)
        return cls(base, (ch_st, ch_u), family, full)

    def validate(self, tol: float = 1e-9) -> None:
        """Re-derive the full joint from base + channels and compare.

        For backward-outer systems, additionally checks the Markov chains
        U - S - X3 and U - T - X3.
        """
        rebuilt = self.base
        for ch in self.channels:
            rebuilt = rebuilt.extend(ch)
        if rebuilt.names != self.full.names:
            raise FamilyError(f"variable mismatch: {rebuilt.names} vs {self.full.names}")
        if float(np.max(np.abs(rebuilt.table - self.full.table))) > tol:
            raise FamilyError(f"full joint deviates from {self.family} factorization")
        if self.family == "backward-outer":
            for mid in ("S", "T"):
                residual = cmi(self.full, ("U",), ("X3",), (mid,))
                if residual > MARKOV_TOL:
                    raise FamilyError(
                        f"backward-outer requires U - {mid} - X3; residual {residual}"
                    )


def _expect(ch: Channel, from_names, to_names) -> None:
    if ch.from_names != tuple(from_names) or ch.to_names != tuple(to_names):
        raise FamilyError(
            f"expected channel {from_names} -> {to_names}, got "
            f"{ch.from_names} -> {ch.to_names}"
        )


# ---------------------------------------------------------------------------
# Per-auxiliary rate formulas
# ---------------------------------------------------------------------------

def _clamp(x: float) -> float:
    return x if x > 0.0 else 0.0


def forward_inner_point(aux: AuxSystem) -> RateConstraintSet:
    """Achievable constraints at one forward auxiliary point.

    r1 <= I(S;X3|T,U) - I(S;X2|T,U), r2 symmetrically, and
    R1+R2 <= I(S,T;X3|U,V) - I(S;X2|T,U) - I(T;X1|S,V) - I(S;T|U,V).
    """
    if aux.family != "forward-inner":
        raise FamilyError(f"need forward-inner, got {aux.family}")
    p = aux.full
    leak1 = cmi(p, ("S",), ("X2",), ("T", "U"))
    leak2 = cmi(p, ("T",), ("X1",), ("S", "V"))
    r1 = cmi(p, ("S",), ("X3",), ("T", "U")) - leak1
    r2 = cmi(p, ("T",), ("X3",), ("S", "V")) - leak2
    rsum = (
        cmi(p, ("S", "T"), ("X3",), ("U", "V"))
        - leak1
        - leak2
        - cmi(p, ("S",), ("T",), ("U", "V"))
    )
    return RateConstraintSet(_clamp(r1), _clamp(r2), _clamp(rsum))


def forward_outer_point(aux: AuxSystem) -> RateConstraintSet:
    """Outer constraints at one forward auxiliary point (no sum bound)."""
    if aux.family != "forward-outer":
        raise FamilyError(f"need forward-outer, got {aux.family}")
    p = aux.full
    r1 = cmi(p, ("S",), ("T", "X3"), ("U",)) - cmi(p, ("S",), ("X2",), ("U",))
    r2 = cmi(p, ("T",), ("S", "X3"), ("V",)) - cmi(p, ("T",), ("X1",), ("V",))
    return RateConstraintSet(_clamp(r1), _clamp(r2), INF)


def explicit_outer(base: JointPmf) -> RateConstraintSet:
    """The explicit rectangle R1 <= I(X1;X3|X2), R2 <= I(X2;X3|X1)."""
    r1 = cmi(base, ("X1",), ("X3",), ("X2",))
    r2 = cmi(base, ("X2",), ("X3",), ("X1",))
    return RateConstraintSet(r1, r2, INF)


def backward_inner_point(aux: AuxSystem) -> RateConstraintSet:
    if aux.family != "backward-inner":
        raise FamilyError(f"need backward-inner, got {aux.family}")
    p = aux.full
    r1 = cmi(p, ("S",), ("X1",), ("U",)) - cmi(p, ("S",), ("X2", "T"), ("U",))
    r2 = cmi(p, ("T",), ("X2",), ("U",)) - cmi(p, ("T",), ("X1", "S"), ("U",))
    return RateConstraintSet(_clamp(r1), _clamp(r2), INF)


def backward_outer_point(aux: AuxSystem, tol: float = MARKOV_TOL) -> RateConstraintSet:
    if aux.family != "backward-outer":
        raise FamilyError(f"need backward-outer, got {aux.family}")
    p = aux.full
    for mid in ("S", "T"):
        residual = cmi(p, ("U",), ("X3",), (mid,))
        if residual > tol:
            raise FamilyError(f"chain U - {mid} - X3 violated by {residual}")
    r1 = min(
        cmi(p, ("S",), ("X1",), ("U",)) - cmi(p, ("S",), ("X2",), ("U",)),
        cmi(p, ("S",), ("X1",), ("T", "U")) - cmi(p, ("S",), ("X2",), ("T", "U")),
    )
    r2 = min(
        cmi(p, ("T",), ("X2",), ("U",)) - cmi(p, ("T",), ("X1",), ("U",)),
        cmi(p, ("T",), ("X2",), ("S", "U")) - cmi(p, ("T",), ("X1",), ("S", "U")),
    )
    return RateConstraintSet(_clamp(r1), _clamp(r2), INF)


# ---------------------------------------------------------------------------
# Simplex lattice enumeration
# ---------------------------------------------------------------------------

def lattice_rows(m: int, q: int) -> list:
    """All probability rows of length m whose entries are multiples of 1/q.

    Lexicographically ordered compositions of q into m nonnegative parts.
    """
    if m < 1 or q < 1:
        raise PmfError(f"need m >= 1 and q >= 1, got m={m} q={q}")
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], q, m)
    return [np.array(row, dtype=np.float64) / q for row in out]


def lattice_channels(from_names, from_cards, to_vars, q: int) -> list:
    """Every channel whose conditional rows live on the 1/q simplex lattice."""
    to_vars = tuple(to_vars)
    cells = int(np.prod(from_cards))
    width = int(np.prod([v.cardinality for v in to_vars]))
    rows = lattice_rows(width, q)
    shape = tuple(from_cards) + tuple(v.cardinality for v in to_vars)
    channels = []
    for combo in product(range(len(rows)), repeat=cells):
        mat = np.stack([rows[i] for i in combo]).reshape(shape)
        channels.append(Channel(tuple(from_names), to_vars, mat))
    return channels


def lattice_channel_count(from_cards, to_cards, q: int) -> int:
    cells = int(np.prod(from_cards))
    width = int(np.prod(to_cards))
    return math.comb(q + width - 1, width - 1) ** cells


@dataclass(frozen=True)
class GridSpec:
    """Auxiliary alphabet sizes and the lattice denominator q."""

    card_s: int = 2
    card_t: int = 2
    card_u: int = 1
    card_v: int = 1
    q: int = 1

    def __post_init__(self):
        for label, c in (("S", self.card_s), ("T", self.card_t),
                         ("U", self.card_u), ("V", self.card_v)):
            if c < 1:
                raise PmfError(f"cardinality of {label} must be >= 1")
        if self.q < 1:
            raise PmfError("q must be >= 1")

    @classmethod
    def default_inner(cls, base: JointPmf, q: int = 1) -> "GridSpec":
        # |S| = |T| = alphabet size + 1, |U| = |V| = 2 keeps grids tractable
        card = max(v.cardinality for v in base.variables)
        return cls(card + 1, card + 1, 2, 2, q)


def _grid_channel_lists(base: JointPmf, family: str, grid: GridSpec) -> list:
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    c3 = base.variable("X3").cardinality
    s = VariableId("S", grid.card_s)
    t = VariableId("T", grid.card_t)
    u = VariableId("U", grid.card_u)
    v = VariableId("V", grid.card_v)
    if family.startswith("forward"):
        return [
            lattice_channels(("X1",), (c1,), (s,), grid.q),
            lattice_channels(("X2",), (c2,), (t,), grid.q),
            lattice_channels(("S",), (grid.card_s,), (u,), grid.q),
            lattice_channels(("T",), (grid.card_t,), (v,), grid.q),
        ]
    return [
        lattice_channels(("X3",), (c3,), (s, t), grid.q),
        lattice_channels(("S", "T"), (grid.card_s, grid.card_t), (u,), grid.q),
    ]


def grid_point_count(base: JointPmf, family: str, grid: GridSpec) -> int:
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    c3 = base.variable("X3").cardinality
    if family.startswith("forward"):
        return (
            lattice_channel_count((c1,), (grid.card_s,), grid.q)
            * lattice_channel_count((c2,), (grid.card_t,), grid.q)
            * lattice_channel_count((grid.card_s,), (grid.card_u,), grid.q)
            * lattice_channel_count((grid.card_t,), (grid.card_v,), grid.q)
        )
    return (
        lattice_channel_count((c3,), (grid.card_s, grid.card_t), grid.q)
        * lattice_channel_count((grid.card_s, grid.card_t), (grid.card_u,), grid.q)
    )


def _full_joint_entries(base: JointPmf, family: str, grid: GridSpec) -> int:
    n = int(np.prod([v.cardinality for v in base.variables]))
    if family.startswith("forward"):
        return n * grid.card_s * grid.card_t * grid.card_u * grid.card_v
    return n * grid.card_s * grid.card_t * grid.card_u


def _channel_descriptor(ch: Channel) -> dict:
    return {
        "from": list(ch.from_names),
        "to": [[v.name, v.cardinality] for v in ch.to_vars],
        "matrix": ch.matrix.tolist(),
    }


def enumerate_region(base: JointPmf, family: str, grid: GridSpec, *,
                     budget: int | None = None, workers: int = 0,
                     hull: bool = False, tol: float = MARKOV_TOL) -> RateRegion:
    """Union of the family's constraint sets over the whole channel lattice.

    Deterministic for a given grid regardless of `workers`: points are
    evaluated in lexicographic lattice order and reduced by index.
    backward-outer lattice points violating either required Markov chain
    beyond `tol` are skipped; the rejection count is reported in `meta`.
    """
    if family not in FAMILIES:
        raise FamilyError(f"unknown family {family!r}")
    n_points = grid_point_count(base, family, grid)
    cost = n_points * _full_joint_entries(base, family, grid)
    cap = entry_budget(budget)
    if cost > cap:
        raise BudgetExceededError(
            f"grid has {n_points} points ({cost} table entries total), budget {cap}"
        )
    lists = _grid_channel_lists(base, family, grid)
    combos = list(product(*lists))

    def evaluate(chs):
        if family == "forward-inner":
            aux = AuxSystem.forward(base, *chs, family=family)
            return forward_inner_point(aux)
        if family == "forward-outer":
            aux = AuxSystem.forward(base, *chs, family=family)
            return forward_outer_point(aux)
        aux = AuxSystem.backward(base, *chs, family=family)
        if family == "backward-inner":
            return backward_inner_point(aux)
        try:
            return backward_outer_point(aux, tol=tol)
        except FamilyError:
            return None

    if workers == 0:
        workers = os.cpu_count() or 1
    if workers > 1 and len(combos) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, combos, chunksize=max(1, len(combos) // (4 * workers))))
    else:
        results = [evaluate(c) for c in combos]

    points = []
    rejected = 0
    for chs, cset in zip(combos, results):
        if cset is None:
            rejected += 1
            continue
        points.append(RatePoint(cset, {"channels": [_channel_descriptor(c) for c in chs]}))
    frontier = pareto_frontier([p.constraints for p in points])
    region = RateRegion(
        points=points,
        frontier=frontier,
        hull=upper_concave_envelope(frontier) if hull else None,
        meta={"family": family, "evaluated": len(combos), "rejected": rejected,
              "grid": {"S": grid.card_s, "T": grid.card_t, "U": grid.card_u,
                       "V": grid.card_v, "q": grid.q}},
    )
    return region


def single_key_capacity(base: JointPmf, direction: str, grid: GridSpec, *,
                       budget: int | None = None) -> float:
    """Single-key capacity bound with the other user reduced to wiretapping.

    forward: max over p(s|x1), p(u|s) of I(S;X3|U) - I(S;X2|U) (clamped);
    backward: max over p(s|x3), p(u|s) of I(S;X1|U) - I(S;X2|U).
    """
    if direction not in ("forward", "backward"):
        raise PmfError(f"direction must be forward or backward, got {direction!r}")
    src = "X1" if direction == "forward" else "X3"
    target = "X3" if direction == "forward" else "X1"
    c_src = base.variable(src).cardinality
    s = VariableId("S", grid.card_s)
    u = VariableId("U", grid.card_u)
    n_points = (
        lattice_channel_count((c_src,), (grid.card_s,), grid.q)
        * lattice_channel_count((grid.card_s,), (grid.card_u,), grid.q)
    )
    size = int(np.prod([v.cardinality for v in base.variables])) * grid.card_s * grid.card_u
    cap = entry_budget(budget)
    if n_points * size > cap:
        raise BudgetExceededError(
            f"grid has {n_points} points ({n_points * size} table entries total), budget {cap}"
        )
    s_channels = lattice_channels((src,), (c_src,), (s,), grid.q)
    u_channels = lattice_channels(("S",), (grid.card_s,), (u,), grid.q)
    best = 0.0
    for ch_s in s_channels:
        extended = base.extend(ch_s)
        for ch_u in u_channels:
            full = extended.extend(ch_u)
            value = _clamp(
                cmi(full, ("S",), (target,), ("U",)) - cmi(full, ("S",), ("X2",), ("U",))
            )
            if value > best:
                best = value
    return best


# ---------------------------------------------------------------------------
# Pareto frontier of a union of constraint sets
# ---------------------------------------------------------------------------

def pareto_frontier(csets) -> list:
    """Pareto-maximal vertices of the union, sorted by increasing R1.

    Every listed pair is achievable and dominated by no other point of the
    union; R2 is non-increasing along the list.  Between consecutive
    vertices the exact boundary is the staircase/diagonal implied by the
    constituent sets.
    """
    sets = []
    for c in csets:
        r1 = _clamp(c.r1_max)
        r2 = _clamp(c.r2_max)
        sm = c.sum_max if c.sum_max == INF else _clamp(c.sum_max)
        sets.append(RateConstraintSet(r1, r2, sm))
    # prune dominated / duplicate sets
    maximal = []
    for c in sets:
        if any(o.dominates(c) for o in maximal):
            continue
        maximal = [o for o in maximal if not c.dominates(o)]
        maximal.append(c)
    if not maximal:
        return [(0.0, 0.0)]

    xs = {0.0}
    for c in maximal:
        xs.add(c.max_r1)
        if c.sum_max < INF:
            xs.add(_clamp(c.sum_max - c.r2_max))
        for o in maximal:
            if o.sum_max < INF:
                xs.add(_clamp(o.sum_max - c.r2_max))
    limit = max(c.max_r1 for c in maximal)
    candidates = sorted(x for x in xs if 0.0 <= x <= limit)

    verts = []
    for x in candidates:
        y = max(c.r2_at(x) for c in maximal)
        if y == -INF:
            continue
        if verts and abs(verts[-1][0] - x) < 1e-15:
            verts[-1] = (x, max(verts[-1][1], y))
        else:
            verts.append((x, y))
    # drop vertices dominated by a later one (y is non-increasing in x, so
    # only flat runs produce domination: keep the rightmost of each run)
    out = []
    for i, (x, y) in enumerate(verts):
        if any(xj >= x and yj >= y and (xj > x or yj > y) for xj, yj in verts[i + 1:]):
            continue
        out.append((x, y))
    return out if out else [(0.0, 0.0)]


def upper_concave_envelope(points) -> list:
    """Time-sharing hull of frontier points (upper concave majorant)."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if not pts:
        return [(0.0, 0.0)]
    # complete with the axis extremes so the hull spans the full R1 range
    ymax = max(y for _, y in pts)
    xmax = max(x for x, _ in pts)
    pts = sorted(set(pts) | {(0.0, ymax), (xmax, 0.0)})
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x0, y0), (x1, y1) = hull[-2], hull[-1]
            if (x1 - x0) * (p[1] - y0) - (p[0] - x0) * (y1 - y0) >= -1e-15:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull
