"""Closed-form special-case regions and their coincidence validation.

When the three sources form one of the recognized Markov chains, inner and
outer bounds meet and the exact key capacity region has a closed form.  The
validators here compute the closed forms, compare them against the grid
evaluators, and fuzz the chain-split inequality used by the converse
arguments.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .pmf import JointPmf, PmfError, VariableId, cond_mutual_information as cmi
from .region import (
    INF,
    AuxSystem,
    GridSpec,
    RateConstraintSet,
    RatePoint,
    RateRegion,
    explicit_outer,
    lattice_channels,
    pareto_frontier,
)

__all__ = [
    "ChainViolatedError",
    "CaseDiagnosis",
    "diagnose",
    "case1_region",
    "case2_region",
    "case3_region",
    "verify_coincidence",
    "region_gap",
    "lemma3_check",
    "telescoped_slack",
    "random_lemma3_joint",
]

CHAIN_TOL = 1e-9


class ChainViolatedError(PmfError):
    def __init__(self, chain: str, residual: float):
        super().__init__(f"Markov chain {chain} violated: residual {residual:.3e} bits")
        self.chain = chain
        self.residual = residual


@dataclass(frozen=True)
class CaseDiagnosis:
    """Conditional-MI residuals for the three recognized chains."""

    residual_x1_x2_x3: float   # I(X1;X3|X2)
    residual_x2_x1_x3: float   # I(X2;X3|X1)
    residual_x1_x3_x2: float   # I(X1;X2|X3)
    tol: float

    @property
    def chains(self) -> tuple:
        found = []
        if self.residual_x1_x2_x3 <= self.tol:
            found.append("X1-X2-X3")
        if self.residual_x2_x1_x3 <= self.tol:
            found.append("X2-X1-X3")
        if self.residual_x1_x3_x2 <= self.tol:
            found.append("X1-X3-X2")
        return tuple(found)

    def as_dict(self) -> dict:
        return {
            "residuals": {
                "X1-X2-X3": self.residual_x1_x2_x3,
                "X2-X1-X3": self.residual_x2_x1_x3,
                "X1-X3-X2": self.residual_x1_x3_x2,
            },
            "tol": self.tol,
            "chains": list(self.chains),
        }


def diagnose(base: JointPmf, tol: float = CHAIN_TOL) -> CaseDiagnosis:
    """Report which of the recognized source chains hold within tol."""
    return CaseDiagnosis(
        residual_x1_x2_x3=cmi(base, ("X1",), ("X3",), ("X2",)),
        residual_x2_x1_x3=cmi(base, ("X2",), ("X3",), ("X1",)),
        residual_x1_x3_x2=cmi(base, ("X1",), ("X2",), ("X3",)),
        tol=tol,
    )


def _single_point_region(cset: RateConstraintSet, label: str) -> RateRegion:
    point = RatePoint(cset, {"case": label})
    return RateRegion(points=[point], frontier=pareto_frontier([cset]),
                      meta={"case": label})


def case1_region(base: JointPmf, tol: float = CHAIN_TOL) -> RateRegion:
    """Exact region for X1 - X2 - X3 chains: the segment R1 = 0, R2 <= I(X2;X3|X1).

    Holds for both strategies; the backward deterministic point T = X3
    attains the segment, and the explicit outer rectangle collapses onto it.
    """
    residual = cmi(base, ("X1",), ("X3",), ("X2",))
    if residual > tol:
        raise ChainViolatedError("X1-X2-X3", residual)
    r2 = cmi(base, ("X2",), ("X3",), ("X1",))
    return _single_point_region(RateConstraintSet(0.0, r2, INF), "case1")


def case2_region(base: JointPmf, tol: float = CHAIN_TOL) -> RateRegion:
    """Exact forward region for X1 - X3 - X2 chains: the explicit rectangle."""
    residual = cmi(base, ("X1",), ("X2",), ("X3",))
    if residual > tol:
        raise ChainViolatedError("X1-X3-X2", residual)
    cset = explicit_outer(base)
    return _single_point_region(cset, "case2")


def case3_region(base: JointPmf, grid: GridSpec, tol: float = CHAIN_TOL,
                 budget=None) -> RateRegion:
    """Grid lower bound of the backward region for X1 - X3 - X2 chains.

    Lattice points must satisfy U - S - X3, U - T - X3 and S - X1 - X2 - T
    (all enforced by rejection within tol).  The conditional-independence
    consequence I(S;T|X1,U) = I(S;T|X2,U) = 0 is checked on every accepted
    point; violations are rejected and counted separately.  The maximum is a
    lower bound of the case region: no analytic construction is attempted.
    """
    residual = cmi(base, ("X1",), ("X2",), ("X3",))
    if residual > tol:
        raise ChainViolatedError("X1-X3-X2", residual)
    c3 = base.variable("X3").cardinality
    s = VariableId("S", grid.card_s)
    t = VariableId("T", grid.card_t)
    u = VariableId("U", grid.card_u)
    st_channels = lattice_channels(("X3",), (c3,), (s, t), grid.q)
    u_channels = lattice_channels(("S", "T"), (grid.card_s, grid.card_t), (u,), grid.q)
    points = []
    evaluated = 0
    chain_rejected = 0
    consequence_rejected = 0
    for ch_st, ch_u in product(st_channels, u_channels):
        evaluated += 1
        aux = AuxSystem.backward(base, ch_st, ch_u, family="backward-inner")
        p = aux.full
        chains_ok = (
            cmi(p, ("U",), ("X3",), ("S",)) <= tol
            and cmi(p, ("U",), ("X3",), ("T",)) <= tol
            and cmi(p, ("S",), ("X2", "T"), ("X1",)) <= tol
            and cmi(p, ("S", "X1"), ("T",), ("X2",)) <= tol
        )
        if not chains_ok:
            chain_rejected += 1
            continue
        consequence = max(
            cmi(p, ("S",), ("T",), ("X1", "U")),
            cmi(p, ("S",), ("T",), ("X2", "U")),
        )
        if consequence > max(tol, 1e-9):
            consequence_rejected += 1
            continue
        r1 = max(0.0, cmi(p, ("S",), ("X1",), ("U",)) - cmi(p, ("S",), ("X2",), ("U",)))
        r2 = max(0.0, cmi(p, ("T",), ("X2",), ("U",)) - cmi(p, ("T",), ("X1",), ("U",)))
        points.append(RatePoint(RateConstraintSet(r1, r2, INF), {"case": "case3"}))
    frontier = pareto_frontier([p.constraints for p in points])
    return RateRegion(points=points, frontier=frontier, meta={
        "case": "case3", "bound": "lower",
        "evaluated": evaluated,
        "chain_rejected": chain_rejected,
        "consequence_rejected": consequence_rejected,
    })


# ---------------------------------------------------------------------------
# Coincidence measurement
# ---------------------------------------------------------------------------

def _point_gap(px: float, py: float, csets) -> float:
    """One-sided Chebyshev distance from (px, py) into the union of csets."""
    best = INF
    for c in csets:
        d = max(0.0, px - min(c.r1_max, c.sum_max), py - min(c.r2_max, c.sum_max))
        if c.sum_max < INF:
            d = max(d, (px + py - c.sum_max) / 2.0)
        d = max(d, 0.0)
        if d < best:
            best = d
    return best


def region_gap(outer_frontier, inner_csets, samples_per_edge: int = 16) -> float:
    """Max one-sided gap from the outer frontier into the inner union.

    Probes every outer vertex plus evenly spaced points along frontier
    edges; each probe measures how far it must move down-left (Chebyshev)
    to enter the inner region.
    """
    if not inner_csets:
        inner_csets = [RateConstraintSet(0.0, 0.0, INF)]
    probes = list(outer_frontier)
    for (x0, y0), (x1, y1) in zip(outer_frontier, outer_frontier[1:]):
        for j in range(1, samples_per_edge):
            f = j / samples_per_edge
            probes.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
    return max(_point_gap(px, py, inner_csets) for px, py in probes)


def verify_coincidence(inner: RateRegion, outer: RateRegion, tol: float) -> tuple:
    """True iff the outer frontier is within tol of the inner region."""
    gap = region_gap(outer.frontier, inner.constraint_sets)
    return gap <= tol, gap


# ---------------------------------------------------------------------------
# Chain-split inequality (converse workhorse)
# ---------------------------------------------------------------------------

def _x2_tail(n: int, i: int) -> tuple:
    return tuple(f"X2_{j}" for j in range(i + 1, n + 1))


def _x3_head(n: int, i: int) -> tuple:
    return tuple(f"X3_{j}" for j in range(1, i + 1))


def lemma3_check(joint: JointPmf, n: int) -> tuple:
    """Evaluate the chain-split inequality exactly; returns (ok, slack).

    For arbitrary (K, F1, F2, X2_1..X2_n, X3_1..X3_n):

        I(K; X3^n, F2 | F1) - I(K; X2^n | F1)
          <= sum_i [ I(K; F2, X3_i | X3^{i-1}, X2_{i+1}^n, F1)
                     - I(K; X2_i | X3^{i-1}, X2_{i+1}^n, F1) ]

    slack = RHS - LHS, which telescopes to
    sum_{i<n} I(K; F2 | X3^i, X2_{i+1}^n, F1) >= 0.
    """
    needed = {"K", "F1", "F2"} | set(_x2_tail(n, 0)) | set(_x3_head(n, n))
    missing = needed - set(joint.names)
    if missing:
        raise PmfError(f"joint is missing variables {sorted(missing)}")
    lhs = (
        cmi(joint, ("K",), _x3_head(n, n) + ("F2",), ("F1",))
        - cmi(joint, ("K",), _x2_tail(n, 0), ("F1",))
    )
    rhs = 0.0
    for i in range(1, n + 1):
        cond = _x3_head(n, i - 1) + _x2_tail(n, i) + ("F1",)
        rhs += cmi(joint, ("K",), ("F2", f"X3_{i}"), cond)
        rhs -= cmi(joint, ("K",), (f"X2_{i}",), cond)
    slack = rhs - lhs
    return slack >= -1e-10, slack


def telescoped_slack(joint: JointPmf, n: int) -> float:
    """Closed form of the lemma3 slack, for cross-checking the evaluator."""
    total = 0.0
    for i in range(1, n):
        cond = _x3_head(n, i) + _x2_tail(n, i) + ("F1",)
        total += cmi(joint, ("K",), ("F2",), cond)
    return total


def random_lemma3_joint(rng: np.random.Generator, n: int) -> JointPmf:
    """Arbitrary random joint over (K, F1, F2, X2_1..n, X3_1..n), cards 2 or 3."""
    names = ["K", "F1", "F2"]
    names += [f"X2_{i}" for i in range(1, n + 1)]
    names += [f"X3_{i}" for i in range(1, n + 1)]
    cards = [int(rng.integers(2, 4)) for _ in names]
    flat = rng.dirichlet(np.ones(int(np.prod(cards))))
    variables = tuple(VariableId(nm, c) for nm, c in zip(names, cards))
    return JointPmf(variables, flat.reshape(cards))
