"""Exact discrete probability algebra over named finite-alphabet variables.

Everything downstream (rate regions, codebooks, leakage enumeration) is built
on one currency: a dense joint probability table with named axes.  All
information measures are in bits (log base 2) and use the convention
0 * log 0 = 0.  Tables are immutable after construction and every operation
is a pure function, so values can be shared and evaluated concurrently.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PmfError",
    "BudgetExceededError",
    "ConsistencyError",
    "VariableId",
    "JointPmf",
    "Channel",
    "entry_budget",
    "cond_mutual_information",
    "mutual_information",
    "is_markov_chain",
    "iid_extension",
]

#: Default cap on dense table size, in entries.  Joints above the cap are
#: refused outright rather than silently degraded.
DEFAULT_ENTRY_BUDGET = 1 << 26

#: Conditional MI more negative than this is an arithmetic bug, not roundoff.
NEG_MI_TOLERANCE = 1e-12

NORMALIZATION_TOL = 1e-9


class PmfError(Exception):
    """Base error for this module."""


class BudgetExceededError(PmfError):
    """A requested table would exceed the configured entry budget."""


class ConsistencyError(PmfError):
    """An internally computed quantity violated a hard invariant."""


def entry_budget(override: int | None = None) -> int:
    """Current dense-table entry budget.

    The SKREGION_BUDGET environment variable overrides the built-in default;
    an explicit `override` argument wins over both.
    """
    if override is not None:
        return int(override)
    env = os.environ.get("SKREGION_BUDGET")
    if env:
        return int(env)
    return DEFAULT_ENTRY_BUDGET


@dataclass(frozen=True)
class VariableId:
    """A named finite-alphabet variable."""

    name: str
    cardinality: int

    def __post_init__(self):
        if not self.name:
            raise PmfError("variable name must be nonempty")
        if self.cardinality < 1:
            raise PmfError(f"cardinality of {self.name!r} must be >= 1")


class JointPmf:
    """Dense joint distribution over an ordered tuple of variables.

    Parameters
    ----------
    variables : sequence of VariableId
        Axis labels, in table axis order.  Names must be unique.
    table : array_like
        Nonnegative reals of shape ``tuple(v.cardinality for v in variables)``
        summing to 1 within 1e-9.
    """

    __slots__ = ("variables", "table")

    def __init__(self, variables, table, *, budget: int | None = None):
        variables = tuple(variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise PmfError(f"duplicate variable names in {names}")
        arr = np.asarray(table, dtype=np.float64)
        shape = tuple(v.cardinality for v in variables)
        if arr.shape != shape:
            raise PmfError(f"table shape {arr.shape} does not match cardinalities {shape}")
        if arr.size > entry_budget(budget):
            raise BudgetExceededError(
                f"table with {arr.size} entries exceeds budget {entry_budget(budget)}"
            )
        if arr.size and arr.min() < -1e-12:
            raise PmfError(f"negative probability {arr.min()} in table")
        total = float(arr.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise PmfError(f"table sums to {total}, not 1 within {NORMALIZATION_TOL}")
        arr = np.where(arr < 0.0, 0.0, arr)
        arr.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "table", arr)

    def __setattr__(self, *a):  # immutable
        raise AttributeError("JointPmf is immutable")

    # -- naming helpers -----------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise PmfError(f"unknown variable {name!r}; have {self.names}") from None

    def variable(self, name: str) -> VariableId:
        return self.variables[self.axis(name)]

    def _axes(self, names) -> list[int]:
        return [self.axis(n) for n in names]

    # -- operations ----------------------------------------------------------

    def marginalize(self, keep) -> "JointPmf":
        """Sum out every variable not in `keep`, preserving axis order."""
        keep = set(keep)
        unknown = keep - set(self.names)
        if unknown:
            raise PmfError(f"unknown variable(s) {sorted(unknown)}; have {self.names}")
        kept = tuple(v for v in self.variables if v.name in keep)
        drop = tuple(i for i, v in enumerate(self.variables) if v.name not in keep)
        out = np.sum(self.table, axis=drop) if drop else self.table
        return JointPmf(kept, out)

    def extend(self, channel: "Channel") -> "JointPmf":
        """Adjoin new variables through a conditional channel.

        The result is p(old) * p(new | from); the marginal over the old
        variables is unchanged.
        """
        for n in channel.from_names:
            self.axis(n)  # raises on unknown
        for v in channel.to_vars:
            if v.name in self.names:
                raise PmfError(f"variable {v.name!r} already present")
        from_cards = tuple(self.variable(n).cardinality for n in channel.from_names)
        if channel.matrix.shape[: len(from_cards)] != from_cards:
            raise PmfError(
                f"channel conditioned on cards {channel.matrix.shape[:len(from_cards)]}, "
                f"pmf has {from_cards}"
            )
        k = len(self.variables)
        old_subs = list(range(k))
        mat_subs = self._axes(channel.from_names) + list(range(k, k + len(channel.to_vars)))
        out_subs = old_subs + list(range(k, k + len(channel.to_vars)))
        out = np.einsum(self.table, old_subs, channel.matrix, mat_subs, out_subs)
        return JointPmf(self.variables + channel.to_vars, out)

    def entropy(self, names=None) -> float:
        """Joint entropy in bits of the given variable subset (all if None)."""
        if names is None:
            return _entropy_of(self.table)
        names = tuple(names)
        if not names:
            return 0.0
        return _entropy_of(self.marginalize(names).table)

    def prob(self, assignment: dict) -> float:
        """Probability of a full assignment {name: symbol index}."""
        idx = tuple(assignment[v.name] for v in self.variables)
        return float(self.table[idx])

    def __repr__(self):
        spec = ",".join(f"{v.name}={v.cardinality}" for v in self.variables)
        return f"JointPmf({spec})"


def _entropy_of(table: np.ndarray) -> float:
    t = table
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(t > 0.0, t * np.log2(np.where(t > 0.0, t, 1.0)), 0.0)
    return float(-x.sum())


class Channel:
    """Conditional distribution p(to | from) as a dense stochastic array.

    `matrix` has shape (from cardinalities..., to cardinalities...); each
    conditional slice over the `to` axes sums to 1 within 1e-9.
    """

    __slots__ = ("from_names", "to_vars", "matrix")

    def __init__(self, from_names, to_vars, matrix):
        from_names = tuple(from_names)
        to_vars = tuple(to_vars)
        arr = np.asarray(matrix, dtype=np.float64)
        to_shape = tuple(v.cardinality for v in to_vars)
        if arr.shape[len(arr.shape) - len(to_shape):] != to_shape:
            raise PmfError(f"matrix trailing shape {arr.shape} does not match to-vars {to_shape}")
        if len(arr.shape) != len(to_shape) + len(from_names):
            raise PmfError("matrix rank does not match from/to variable counts")
        if arr.size and arr.min() < -1e-12:
            raise PmfError("negative conditional probability")
        to_axes = tuple(range(len(from_names), arr.ndim))
        rows = arr.sum(axis=to_axes) if to_axes else arr
        if np.max(np.abs(rows - 1.0)) > NORMALIZATION_TOL:
            raise PmfError("conditional rows must sum to 1 within 1e-9")
        arr = np.where(arr < 0.0, 0.0, arr)
        arr.setflags(write=False)
        object.__setattr__(self, "from_names", from_names)
        object.__setattr__(self, "to_vars", to_vars)
        object.__setattr__(self, "matrix", arr)

    def __setattr__(self, *a):
        raise AttributeError("Channel is immutable")

    @property
    def to_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.to_vars)

    # -- constructors used throughout the package ----------------------------

    @staticmethod
    def identity(from_name: str, cardinality: int, to_name: str) -> "Channel":
        """Deterministic copy: new variable equals the source symbol."""
        return Channel((from_name,), (VariableId(to_name, cardinality),), np.eye(cardinality))

    @staticmethod
    def constant(to_name: str, from_name: str, from_cardinality: int) -> "Channel":
        """Degenerate channel to a one-symbol alphabet."""
        mat = np.ones((from_cardinality, 1))
        return Channel((from_name,), (VariableId(to_name, 1),), mat)

    @staticmethod
    def bsc(from_name: str, to_name: str, flip: float) -> "Channel":
        """Binary symmetric channel with the given crossover probability."""
        if not 0.0 <= flip <= 1.0:
            raise PmfError(f"flip probability {flip} outside [0, 1]")
        mat = np.array([[1.0 - flip, flip], [flip, 1.0 - flip]])
        return Channel((from_name,), (VariableId(to_name, 2),), mat)

    def __repr__(self):
        return f"Channel({self.from_names} -> {self.to_names})"


def cond_mutual_information(pmf: JointPmf, a, b, c=()) -> float:
    """Conditional mutual information I(A; B | C) in bits.

    A, B, C are disjoint variable-name collections; C may be empty.  Tiny
    negative values from floating-point cancellation (>= -1e-12) are clamped
    to zero; anything more negative raises ConsistencyError.
    """
    a, b, c = set(a), set(b), set(c)
    if (a & b) or (a & c) or (b & c):
        raise PmfError(f"variable sets must be disjoint: {sorted(a)}, {sorted(b)}, {sorted(c)}")
    if not a or not b:
        return 0.0
    value = (
        pmf.entropy(a | c)
        + pmf.entropy(b | c)
        - pmf.entropy(a | b | c)
        - pmf.entropy(c)
    )
    if value < 0.0:
        if value < -NEG_MI_TOLERANCE:
            raise ConsistencyError(f"conditional MI = {value} below -{NEG_MI_TOLERANCE}")
        return 0.0
    return value


def mutual_information(pmf: JointPmf, a, b) -> float:
    return cond_mutual_information(pmf, a, b, ())


def is_markov_chain(pmf: JointPmf, a, b, c, tol: float = 1e-9) -> bool:
    """True iff A - B - C holds, i.e. I(A; C | B) <= tol."""
    return cond_mutual_information(pmf, a, c, b) <= tol


def iid_extension(pmf: JointPmf, n: int, *, budget: int | None = None) -> JointPmf:
    """n-fold i.i.d. product distribution, one sequence variable per original.

    Each variable keeps its name and gets cardinality ``card ** n``; a symbol
    of the extension encodes the length-n sequence in base ``card``, most
    significant letter first.  Entropies scale by exactly n.
    """
    if n < 1:
        raise PmfError(f"extension length must be >= 1, got {n}")
    if n == 1:
        return pmf
    cards = [v.cardinality for v in pmf.variables]
    size = 1
    for c in cards:
        size *= c ** n
        if size > entry_budget(budget):
            raise BudgetExceededError(
                f"iid extension would need {math.prod(c ** n for c in cards)} entries, "
                f"budget is {entry_budget(budget)}"
            )
    k = len(cards)
    full = pmf.table
    for _ in range(n - 1):
        full = np.multiply.outer(full, pmf.table)
    # axis layout is (copy, variable); regroup to (variable, copy) then merge
    perm = [copy * k + j for j in range(k) for copy in range(n)]
    full = full.transpose(perm).reshape([c ** n for c in cards])
    variables = tuple(VariableId(v.name, v.cardinality ** n) for v in pmf.variables)
    return JointPmf(variables, full, budget=budget)
