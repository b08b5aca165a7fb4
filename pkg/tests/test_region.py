import numpy as np
import pytest

from skregion.pmf import BudgetExceededError, Channel, VariableId
from skregion.region import (
    INF,
    AuxSystem,
    FamilyError,
    GridSpec,
    RateConstraintSet,
    backward_inner_point,
    backward_outer_point,
    single_key_capacity,
    enumerate_region,
    explicit_outer,
    forward_inner_point,
    forward_outer_point,
    pareto_frontier,
    upper_concave_envelope,
)
from skregion.sources import (
    broadcast_source,
    identity_source,
    independent_source,
    random_pmf,
    xor_source,
)
from conftest import oracle_cmi

E3 = broadcast_source("X3", 0.25, 0.25)
E6 = broadcast_source("X2", 0.25, 0.25)
CMI_VALUE = 0.143155878465832  # I(X1;X3|X2) for the quarter-noise broadcast pair


def forward_identity_aux(base, family="forward-inner"):
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    return AuxSystem.forward(
        base,
        Channel.identity("X1", c1, "S"),
        Channel.identity("X2", c2, "T"),
        Channel.constant("U", "S", c1),
        Channel.constant("V", "T", c2),
        family=family,
    )


def forward_constant_aux(base, family="forward-inner"):
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    return AuxSystem.forward(
        base,
        Channel.constant("S", "X1", c1),
        Channel.constant("T", "X2", c2),
        Channel.constant("U", "S", 1),
        Channel.constant("V", "T", 1),
        family=family,
    )


def backward_aux(base, s_is_x3: bool, t_is_x3: bool, family="backward-inner"):
    c3 = base.variable("X3").cardinality
    cs = c3 if s_is_x3 else 1
    ct = c3 if t_is_x3 else 1
    mat = np.zeros((c3, cs, ct))
    for x in range(c3):
        mat[x, x if s_is_x3 else 0, x if t_is_x3 else 0] = 1.0
    ch_st = Channel(("X3",), (VariableId("S", cs), VariableId("T", ct)), mat)
    ch_u = Channel(("S", "T"), (VariableId("U", 1),), np.ones((cs, ct, 1)))
    return AuxSystem.backward(base, ch_st, ch_u, family=family)


# ---------------------------------------------------------------------------
# Point evaluators
# ---------------------------------------------------------------------------

def test_forward_inner_xor_identity_exact_ones():
    pt = forward_inner_point(forward_identity_aux(xor_source()))
    assert pt.r1_max == 1.0
    assert pt.r2_max == 1.0
    assert pt.sum_max == 1.0


def test_forward_inner_constant_channels_zero():
    pt = forward_inner_point(forward_constant_aux(xor_source()))
    assert (pt.r1_max, pt.r2_max, pt.sum_max) == (0.0, 0.0, 0.0)


def test_forward_inner_independent_sources_zero():
    pt = forward_inner_point(forward_identity_aux(independent_source()))
    assert pt.r1_max == 0.0 and pt.r2_max == 0.0 and pt.sum_max == 0.0


def test_forward_inner_rejects_wrong_family():
    aux = forward_identity_aux(xor_source(), family="forward-outer")
    with pytest.raises(FamilyError):
        forward_inner_point(aux)


def test_forward_outer_xor_identity():
    pt = forward_outer_point(forward_identity_aux(xor_source(), "forward-outer"))
    assert pt.r1_max == pytest.approx(1.0, abs=1e-12)
    assert pt.r2_max == pytest.approx(1.0, abs=1e-12)
    assert pt.sum_max == INF


def test_forward_outer_constant_aux_zero():
    pt = forward_outer_point(forward_constant_aux(xor_source(), "forward-outer"))
    assert pt.r1_max == 0.0 and pt.r2_max == 0.0


def test_forward_outer_e3_matches_enumeration_oracle():
    pt = forward_outer_point(forward_identity_aux(E3, "forward-outer"))
    expected = oracle_cmi(E3, ["X1"], ["X2", "X3"]) - oracle_cmi(E3, ["X1"], ["X2"])
    assert pt.r1_max == pytest.approx(expected, abs=1e-12)


def test_explicit_outer_identical_bit():
    vs = (VariableId("X1", 2), VariableId("X2", 2), VariableId("X3", 2))
    table = np.zeros((2, 2, 2))
    table[0, 0, 0] = table[1, 1, 1] = 0.5
    from skregion.pmf import JointPmf
    pt = explicit_outer(JointPmf(vs, table))
    assert pt.r1_max == 0.0 and pt.r2_max == 0.0 and pt.sum_max == INF


def test_explicit_outer_xor():
    pt = explicit_outer(xor_source())
    assert pt.r1_max == pytest.approx(1.0) and pt.r2_max == pytest.approx(1.0)


def test_explicit_outer_e3_symmetric_value():
    pt = explicit_outer(E3)
    assert pt.r1_max == pytest.approx(0.143156, abs=1e-6)
    assert pt.r1_max == pytest.approx(pt.r2_max, abs=1e-12)


def test_backward_inner_e6_deterministic_t():
    pt = backward_inner_point(backward_aux(E6, s_is_x3=False, t_is_x3=True))
    assert pt.r2_max == pytest.approx(CMI_VALUE, abs=1e-9)
    assert pt.r1_max == 0.0
    assert pt.sum_max == INF


def test_backward_inner_xor_s_deterministic():
    pt = backward_inner_point(backward_aux(xor_source(), s_is_x3=True, t_is_x3=False))
    assert pt.r1_max == 0.0  # I(X3;X1) and I(X3;X2) are both zero


def test_backward_inner_constant_channels():
    pt = backward_inner_point(backward_aux(E6, False, False))
    assert pt.r1_max == 0.0 and pt.r2_max == 0.0


def test_backward_outer_e6_both_x3():
    pt = backward_outer_point(backward_aux(E6, True, True, "backward-outer"))
    assert pt.r1_max == 0.0  # second min-argument vanishes when S = T


def test_backward_outer_constant_s():
    pt = backward_outer_point(backward_aux(E6, False, True, "backward-outer"))
    assert pt.r1_max == 0.0


def test_backward_outer_e3_copies():
    pt = backward_outer_point(backward_aux(E3, True, True, "backward-outer"))
    assert pt.r1_max == 0.0 and pt.r2_max == 0.0


def test_backward_outer_markov_rejection():
    # S constant, T = X3, U = T: then I(U; X3 | S) = H(X3) > 0, breaking U - S - X3
    mat = np.zeros((2, 1, 2))
    mat[0, 0, 0] = mat[1, 0, 1] = 1.0
    ch_st = Channel(("X3",), (VariableId("S", 1), VariableId("T", 2)), mat)
    u = np.zeros((1, 2, 2))
    u[0, 0, 0] = u[0, 1, 1] = 1.0
    aux = AuxSystem.backward(E6, ch_st, Channel(("S", "T"), (VariableId("U", 2),), u),
                             family="backward-outer")
    with pytest.raises(FamilyError):
        backward_outer_point(aux)
    with pytest.raises(FamilyError):
        aux.validate()


def test_aux_validate_detects_corruption():
    aux = forward_identity_aux(E3)
    aux.validate()
    shape = aux.full.table.shape
    flat = np.full(np.prod(shape), 1.0 / np.prod(shape)).reshape(shape)
    from skregion.pmf import JointPmf
    tampered = AuxSystem(aux.base, aux.channels, aux.family,
                         JointPmf(aux.full.variables, flat))
    with pytest.raises(FamilyError):
        tampered.validate()


# ---------------------------------------------------------------------------
# Grid enumeration
# ---------------------------------------------------------------------------

def test_enumerate_xor_forward_inner_q1():
    region = enumerate_region(xor_source(), "forward-inner", GridSpec(2, 2, 1, 1, 1))
    assert (1.0, 0.0) in region.frontier
    assert (0.0, 1.0) in region.frontier
    for p in region.points:
        achievable_sum = min(p.constraints.r1_max + p.constraints.r2_max,
                             p.constraints.sum_max)
        assert achievable_sum <= 1.0 + 1e-9
    assert region.meta["evaluated"] == 16


def test_enumerate_independent_sources_trivial():
    for family in ("forward-inner", "backward-inner"):
        region = enumerate_region(independent_source(), family, GridSpec(2, 2, 1, 1, 1))
        assert region.frontier == [(0.0, 0.0)]


def test_enumerate_e6_backward_inner_deterministic_point():
    region = enumerate_region(E6, "backward-inner", GridSpec(1, 2, 1, 1, 1))
    max_r2 = max(r2 for _, r2 in region.frontier)
    assert max_r2 == pytest.approx(CMI_VALUE, abs=1e-9)


def test_enumerate_budget_exceeded_reports_points():
    with pytest.raises(BudgetExceededError) as exc:
        enumerate_region(E3, "forward-inner", GridSpec(3, 3, 3, 3, 6), budget=1000)
    assert "points" in str(exc.value)


def test_enumerate_deterministic_across_workers():
    regions = [
        enumerate_region(E3, "forward-inner", GridSpec(2, 2, 1, 1, 1), workers=w)
        for w in (1, 2, 8)
    ]
    ref = [(p.constraints.r1_max, p.constraints.r2_max, p.constraints.sum_max)
           for p in regions[0].points]
    for region in regions[1:]:
        got = [(p.constraints.r1_max, p.constraints.r2_max, p.constraints.sum_max)
               for p in region.points]
        assert got == ref
        assert region.frontier == regions[0].frontier


def test_grid_refinement_never_shrinks(rng):
    base = random_pmf(rng, (2, 2, 2))
    r1 = enumerate_region(base, "forward-inner", GridSpec(2, 2, 1, 1, 1))
    r2 = enumerate_region(base, "forward-inner", GridSpec(2, 2, 1, 1, 2))
    for x, y in r1.frontier:
        assert r2.contains(x, y, tol=1e-12)


def test_backward_outer_rejection_counted():
    region = enumerate_region(E6, "backward-outer", GridSpec(2, 1, 2, 1, 1))
    assert region.meta["evaluated"] == region.meta["rejected"] + len(region.points)
    # accepted points satisfy the chains by construction of the evaluator
    assert all(p.constraints.r1_max >= 0 for p in region.points)


def test_containment_in_explicit_outer(rng):
    # forward and backward inner grid points stay inside the explicit rectangle
    for _ in range(8):
        base = random_pmf(rng, (2, 2, 2))
        outer = explicit_outer(base)
        fwd = enumerate_region(base, "forward-inner", GridSpec(2, 2, 1, 1, 1))
        bwd = enumerate_region(base, "backward-inner", GridSpec(2, 2, 1, 1, 1))
        for region in (fwd, bwd):
            for p in region.points:
                assert p.constraints.r1_max <= outer.r1_max + 1e-9
                assert p.constraints.r2_max <= outer.r2_max + 1e-9


# ---------------------------------------------------------------------------
# Single-key degeneration
# ---------------------------------------------------------------------------

def test_single_key_forward_e3_value():
    value = single_key_capacity(E3, "forward", GridSpec(2, 1, 1, 1, 1))
    # achieved at S = X1: I(X1;X3) - I(X1;X2)
    expected = oracle_cmi(E3, ["X1"], ["X3"]) - oracle_cmi(E3, ["X1"], ["X2"])
    assert value == pytest.approx(expected, abs=1e-12)
    assert value == pytest.approx(0.143156, abs=1e-6)


def test_single_key_independent_zero():
    assert single_key_capacity(independent_source(), "forward", GridSpec(2, 1, 1, 1, 1)) == 0.0


def test_single_key_identity_pair_one():
    assert single_key_capacity(identity_source(), "forward",
                              GridSpec(2, 1, 1, 1, 1)) == pytest.approx(1.0)


def test_single_key_backward_uses_x3():
    value = single_key_capacity(E6, "backward", GridSpec(2, 1, 1, 1, 1))
    # S = X3 gives I(X3;X1) - I(X3;X2) < 0 for this chain: clamped to zero
    assert value == 0.0


def test_single_key_matches_region_projection(rng):
    grid = GridSpec(2, 1, 2, 1, 1)
    for _ in range(5):
        base = random_pmf(rng, (2, 2, 2))
        direct = single_key_capacity(base, "forward", grid)
        region = enumerate_region(base, "forward-inner", grid)
        projected = max(p.constraints.r1_max for p in region.points)
        assert abs(direct - projected) < 1e-12


def test_degeneration_formula_matches_point_evaluator(rng):
    # with T, V constant the inner point's r1 equals the single-key expression
    from skregion.pmf import cond_mutual_information as cmi
    for _ in range(5):
        base = random_pmf(rng, (2, 2, 2))
        rows = np.stack([rng.dirichlet(np.ones(2)) for _ in range(2)])
        urows = np.stack([rng.dirichlet(np.ones(2)) for _ in range(2)])
        aux = AuxSystem.forward(
            base,
            Channel(("X1",), (VariableId("S", 2),), rows),
            Channel.constant("T", "X2", 2),
            Channel(("S",), (VariableId("U", 2),), urows),
            Channel.constant("V", "T", 1),
        )
        pt = forward_inner_point(aux)
        expected = max(0.0, cmi(aux.full, ("S",), ("X3",), ("U",))
                       - cmi(aux.full, ("S",), ("X2",), ("U",)))
        assert pt.r1_max == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# Pareto frontier
# ---------------------------------------------------------------------------

def test_pareto_two_degenerate_segments():
    front = pareto_frontier([RateConstraintSet(1, 0, 1), RateConstraintSet(0, 1, 1)])
    assert front[0] == (0.0, 1.0)
    assert front[-1] == (1.0, 0.0)


def test_pareto_single_sum_constrained_set():
    front = pareto_frontier([RateConstraintSet(1, 1, 1)])
    assert front == [(0.0, 1.0), (1.0, 0.0)]


def test_pareto_rectangle_corner():
    front = pareto_frontier([RateConstraintSet(1, 1, INF)])
    assert front == [(1.0, 1.0)]


def test_pareto_empty_is_origin():
    assert pareto_frontier([]) == [(0.0, 0.0)]


def test_pareto_monotone_and_maximal():
    sets = [RateConstraintSet(1.0, 5.0, INF), RateConstraintSet(3.0, 4.0, 6.0)]
    front = pareto_frontier(sets)
    xs = [x for x, _ in front]
    ys = [y for _, y in front]
    assert xs == sorted(xs)
    assert all(ys[i] >= ys[i + 1] for i in range(len(ys) - 1))
    for i, (x, y) in enumerate(front):
        for j, (u, v) in enumerate(front):
            if i != j:
                assert not (u >= x and v >= y and (u > x or v > y))
    assert (1.0, 5.0) in front
    assert (3.0, 3.0) in front


def test_hull_is_concave_majorant():
    pts = [(0.0, 1.0), (0.5, 0.2), (1.0, 0.0)]
    hull = upper_concave_envelope(pts)
    assert hull[0] == (0.0, 1.0) and hull[-1] == (1.0, 0.0)
    assert (0.5, 0.2) not in hull
