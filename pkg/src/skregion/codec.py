"""Typical-set machinery and random-binning codebooks for both strategies.

Robust (strong) typicality with multiplicative tolerance is used throughout:
a tuple of length-n sequences is typical for a joint p when every joint cell
w satisfies |count_w / n - p_w| <= eps * p_w.  Cells with p_w = 0 must not
occur at all, which is what makes joint tests clean at small n.

A codebook enumerates the typical sequences of one key-carrying variable and
labels each with a triple (k, k', k''): k is the secret key (row), k' the
public column index, k'' the residual index inside the (k, k') cell.  Bin
counts are ceil(2^{n R}) with leftover sequences dealt round-robin, so every
bin level is balanced within one sequence.
"""

import math
from dataclasses import dataclass

import numpy as np

from .pmf import BudgetExceededError, JointPmf, PmfError, entry_budget

__all__ = [
    "CodecError",
    "InfeasibleRatesError",
    "ProtocolError",
    "EncoderNoSequence",
    "EncoderNoCover",
    "DecodeError",
    "DecodeNone",
    "DecodeAmbiguous",
    "WiretapNone",
    "WiretapAmbiguous",
    "TypicalityParams",
    "BinningParams",
    "EncodingResult",
    "Codebook",
    "JointTypicalityTest",
    "typical_sequences",
    "jointly_typical",
    "conditional_entropy",
    "forward_binning",
    "backward_binning",
    "build_forward_codebooks",
    "build_backward_codebooks",
    "forward_encode",
    "forward_decode",
    "backward_encode",
    "backward_decode",
    "wiretap_decode",
    "dump_codebook",
]

COUNT_FUZZ = 1e-9  # absolute guard for count-vs-bound float comparisons


class CodecError(Exception):
    pass


class InfeasibleRatesError(CodecError):
    """Rate targets cannot be realized as a codebook at this blocklength."""


class ProtocolError(CodecError):
    """A per-trial protocol failure, counted as an error upstream."""


class EncoderNoSequence(ProtocolError):
    pass


class EncoderNoCover(ProtocolError):
    pass


class DecodeError(ProtocolError):
    pass


class DecodeNone(DecodeError):
    pass


class DecodeAmbiguous(DecodeError):
    pass


class WiretapNone(DecodeError):
    pass


class WiretapAmbiguous(DecodeError):
    pass


@dataclass(frozen=True)
class TypicalityParams:
    n: int
    eps: float

    def __post_init__(self):
        if self.n < 1:
            raise CodecError(f"blocklength must be >= 1, got {self.n}")
        if self.eps <= 0:
            raise CodecError(f"eps must be > 0, got {self.eps}")


def conditional_entropy(pmf: JointPmf, a, c=()) -> float:
    """H(A | C) in bits."""
    a, c = set(a), set(c)
    if a & c:
        raise PmfError("conditioning set overlaps target set")
    return pmf.entropy(a | c) - pmf.entropy(c)


def _all_sequences(card: int, n: int, budget=None) -> np.ndarray:
    total = card ** n
    if total > entry_budget(budget):
        raise BudgetExceededError(
            f"{card}^{n} = {total} sequences exceeds budget {entry_budget(budget)}"
        )
    codes = np.arange(total, dtype=np.int64)
    seqs = np.empty((total, n), dtype=np.int8)
    for i in range(n - 1, -1, -1):
        seqs[:, i] = codes % card
        codes //= card
    return seqs


def typical_sequences(marginal: JointPmf, params: TypicalityParams, *,
                      budget=None) -> np.ndarray:
    """All robustly typical length-n sequences of a single variable.

    Returned as an (M, n) int8 array in lexicographic order.
    """
    if len(marginal.variables) != 1:
        raise CodecError(f"need a single-variable marginal, got {marginal.names}")
    card = marginal.variables[0].cardinality
    p = marginal.table
    n, eps = params.n, params.eps
    seqs = _all_sequences(card, n, budget)
    lo = n * p * (1.0 - eps) - COUNT_FUZZ
    hi = n * p * (1.0 + eps) + COUNT_FUZZ
    mask = np.ones(len(seqs), dtype=bool)
    for a in range(card):
        cnt = (seqs == a).sum(axis=1)
        mask &= (cnt >= lo[a]) & (cnt <= hi[a])
    return seqs[mask]


class JointTypicalityTest:
    """Precomputed cell bounds for robust joint typicality against one pmf."""

    def __init__(self, joint: JointPmf, params: TypicalityParams):
        self.joint = joint
        self.params = params
        self.names = joint.names
        cards = [v.cardinality for v in joint.variables]
        self.width = int(np.prod(cards))
        strides = []
        acc = 1
        for c in reversed(cards):
            strides.append(acc)
            acc *= c
        self.strides = dict(zip(reversed(joint.names), strides))
        p = joint.table.reshape(-1)
        n, eps = params.n, params.eps
        self.lo = n * p * (1.0 - eps) - COUNT_FUZZ
        self.hi = n * p * (1.0 + eps) + COUNT_FUZZ

    def _fixed_code(self, fixed: dict) -> np.ndarray:
        code = np.zeros(self.params.n, dtype=np.int64)
        for name, seq in fixed.items():
            code += np.asarray(seq, dtype=np.int64) * self.strides[name]
        return code

    def check(self, seqs: dict) -> bool:
        """Typicality of one complete tuple {variable name: length-n sequence}."""
        if set(seqs) != set(self.names):
            raise CodecError(f"need sequences for exactly {self.names}")
        lengths = {len(np.asarray(s)) for s in seqs.values()}
        if lengths != {self.params.n}:
            raise CodecError(f"sequence lengths {lengths} != n={self.params.n}")
        counts = np.bincount(self._fixed_code(seqs), minlength=self.width)
        return bool(np.all((counts >= self.lo) & (counts <= self.hi)))

    def mask(self, cand_name: str, cands: np.ndarray, fixed: dict) -> np.ndarray:
        """Boolean mask over candidate sequences for one free variable."""
        m = len(cands)
        if m == 0:
            return np.zeros(0, dtype=bool)
        codes = cands.astype(np.int64) * self.strides[cand_name] + self._fixed_code(fixed)
        offsets = np.arange(m, dtype=np.int64) * self.width
        flat = (codes + offsets[:, None]).reshape(-1)
        counts = np.bincount(flat, minlength=m * self.width).reshape(m, self.width)
        return np.all((counts >= self.lo) & (counts <= self.hi), axis=1)

    def pair_mask(self, name_a: str, cands_a: np.ndarray,
                  name_b: str, cands_b: np.ndarray, fixed: dict) -> np.ndarray:
        """Boolean mask of shape (len(cands_a), len(cands_b)) for pairs."""
        ma, mb = len(cands_a), len(cands_b)
        if ma == 0 or mb == 0:
            return np.zeros((ma, mb), dtype=bool)
        code_a = cands_a.astype(np.int64) * self.strides[name_a]
        code_b = cands_b.astype(np.int64) * self.strides[name_b] + self._fixed_code(fixed)
        codes = code_a[:, None, :] + code_b[None, :, :]
        offsets = np.arange(ma * mb, dtype=np.int64).reshape(ma, mb, 1) * self.width
        flat = (codes + offsets).reshape(-1)
        counts = np.bincount(flat, minlength=ma * mb * self.width)
        counts = counts.reshape(ma * mb, self.width)
        ok = np.all((counts >= self.lo) & (counts <= self.hi), axis=1)
        return ok.reshape(ma, mb)


def jointly_typical(seqs, joint: JointPmf, params: TypicalityParams) -> bool:
    """Robust joint typicality of a tuple of sequences, one per joint variable.

    `seqs` maps variable names to length-n integer sequences (a sequence
    tuple in the joint's variable order is also accepted).
    """
    if not isinstance(seqs, dict):
        seqs = dict(zip(joint.names, seqs))
    return JointTypicalityTest(joint, params).check(seqs)


# ---------------------------------------------------------------------------
# Binning parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinningParams:
    """Rates and integer bin counts for one key-carrying codebook."""

    rate_key: float    # R, the secret key rate (bits/symbol)
    rate_col: float    # R', the public column-index rate
    rate_cell: float   # R'', the residual rate absorbed inside a cell
    n_key: int
    n_col: int
    margins: dict      # reliability slack per condition (may be negative)

    def reliability_ok(self) -> bool:
        return all(v > 0.0 for v in self.margins.values())


def _bin_count(n: int, rate: float) -> int:
    return max(1, math.ceil(2.0 ** (n * rate) - COUNT_FUZZ))


def forward_binning(full: JointPmf, n: int, rate1: float, rate2: float,
                    eps1: float = 0.0) -> tuple:
    """Binning parameters for both forward codebooks.

    R'_1 = H(S|X2,U) - R1 and R'_2 = H(T|X1,V) - R2; negative public rates
    are structurally infeasible.  Reliability margins (R'_1 vs H(S|X3,T,U),
    R'_2 vs H(T|X3,S,V), and their sum vs H(S,T|X3,U,V)) are recorded but not
    enforced: a run at unreliable rates is a legitimate experiment.
    """
    rc1 = conditional_entropy(full, ("S",), ("X2", "U")) - rate1
    rc2 = conditional_entropy(full, ("T",), ("X1", "V")) - rate2
    if rc1 < -1e-12:
        raise InfeasibleRatesError(
            f"public rate R'1 = H(S|X2,U) - R1 = {rc1:.6f} is negative"
        )
    if rc2 < -1e-12:
        raise InfeasibleRatesError(
            f"public rate R'2 = H(T|X1,V) - R2 = {rc2:.6f} is negative"
        )
    need1 = conditional_entropy(full, ("S",), ("X3", "T", "U"))
    need2 = conditional_entropy(full, ("T",), ("X3", "S", "V"))
    need_sum = conditional_entropy(full, ("S", "T"), ("X3", "U", "V"))
    m1 = {"R'1 >= H(S|X3,T,U)": rc1 - need1,
          "R'1+R'2 >= H(S,T|X3,U,V)": rc1 + rc2 - need_sum}
    m2 = {"R'2 >= H(T|X3,S,V)": rc2 - need2,
          "R'1+R'2 >= H(S,T|X3,U,V)": rc1 + rc2 - need_sum}
    cell1 = float(np.clip(
        conditional_entropy(full, ("S",), ()) - rate1 - rc1, 0.0, None)) + eps1
    cell2 = float(np.clip(
        conditional_entropy(full, ("T",), ()) - rate2 - rc2, 0.0, None)) + eps1
    b1 = BinningParams(rate1, max(0.0, rc1), cell1, _bin_count(n, rate1), _bin_count(n, max(0.0, rc1)), m1)
    b2 = BinningParams(rate2, max(0.0, rc2), cell2, _bin_count(n, rate2), _bin_count(n, max(0.0, rc2)), m2)
    return b1, b2


def backward_binning(full: JointPmf, n: int, rate1: float, rate2: float,
                     eps1: float = 0.0) -> tuple:
    """Binning parameters for the backward codebooks held by user 3.

    R'_1 = H(S|X2,T,U) - R1 and R'_2 = H(T|X1,S,U) - R2; margins against
    the decoding requirements H(S|X1,U) and H(T|X2,U).
    """
    rc1 = conditional_entropy(full, ("S",), ("X2", "T", "U")) - rate1
    rc2 = conditional_entropy(full, ("T",), ("X1", "S", "U")) - rate2
    if rc1 < -1e-12:
        raise InfeasibleRatesError(
            f"public rate R'1 = H(S|X2,T,U) - R1 = {rc1:.6f} is negative"
        )
    if rc2 < -1e-12:
        raise InfeasibleRatesError(
            f"public rate R'2 = H(T|X1,S,U) - R2 = {rc2:.6f} is negative"
        )
    m1 = {"R'1 >= H(S|X1,U)": rc1 - conditional_entropy(full, ("S",), ("X1", "U"))}
    m2 = {"R'2 >= H(T|X2,U)": rc2 - conditional_entropy(full, ("T",), ("X2", "U"))}
    cell1 = float(np.clip(full.entropy(("S",)) - rate1 - rc1, 0.0, None)) + eps1
    cell2 = float(np.clip(full.entropy(("T",)) - rate2 - rc2, 0.0, None)) + eps1
    b1 = BinningParams(rate1, max(0.0, rc1), cell1, _bin_count(n, rate1), _bin_count(n, max(0.0, rc1)), m1)
    b2 = BinningParams(rate2, max(0.0, rc2), cell2, _bin_count(n, rate2), _bin_count(n, max(0.0, rc2)), m2)
    return b1, b2


# ---------------------------------------------------------------------------
# Codebooks
# ---------------------------------------------------------------------------

@dataclass
class Codebook:
    """Enumerated typical sequences of one variable with (k, k', k'') labels."""

    var: str
    cover_var: str
    sequences: np.ndarray   # (M, n) int8, lexicographic
    triples: np.ndarray     # (M, 3) int64 rows (k, k', k'')
    n_key: int
    n_col: int
    u_codebook: np.ndarray  # (Na, n) int8 cover codewords
    rates: BinningParams
    seed: int

    def __post_init__(self):
        self._cols = {}
        self._cells = {}
        self._lookup = {seq.tobytes(): i for i, seq in enumerate(self.sequences)}

    @property
    def size(self) -> int:
        return len(self.sequences)

    @property
    def max_cell(self) -> int:
        if self.size == 0:
            return 0
        counts = np.bincount(
            self.triples[:, 0] * self.n_col + self.triples[:, 1],
            minlength=self.n_key * self.n_col,
        )
        return int(counts.max())

    def column(self, col: int) -> np.ndarray:
        if col not in self._cols:
            self._cols[col] = np.flatnonzero(self.triples[:, 1] == col)
        return self._cols[col]

    def cell(self, key: int, col: int) -> np.ndarray:
        if (key, col) not in self._cells:
            self._cells[(key, col)] = np.flatnonzero(
                (self.triples[:, 0] == key) & (self.triples[:, 1] == col)
            )
        return self._cells[(key, col)]

    def index_of(self, seq: np.ndarray) -> int:
        return self._lookup[np.asarray(seq, dtype=np.int8).tobytes()]

    def triple_of(self, idx: int) -> tuple:
        k, kp, kpp = self.triples[idx]
        return int(k), int(kp), int(kpp)

    def sequence_of(self, key: int, col: int, cell: int) -> np.ndarray:
        members = self.cell(key, col)
        ranks = self.triples[members, 2]
        hit = members[ranks == cell]
        if len(hit) != 1:
            raise CodecError(f"no sequence with indices ({key},{col},{cell})")
        return self.sequences[hit[0]]


def _assign_bins(m: int, n_key: int, n_col: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded uniform shuffle, then hierarchical round-robin deal.

    Columns, rows within a column, and cells are each balanced within one
    sequence.
    """
    triples = np.empty((m, 3), dtype=np.int64)
    perm = rng.permutation(m)
    pos = np.arange(m)
    col = pos % n_col
    within = pos // n_col
    key = within % n_key
    cell = within // n_key
    triples[perm, 0] = key
    triples[perm, 1] = col
    triples[perm, 2] = cell
    return triples


def _draw_cover(marginal: JointPmf, count: int, n: int, rng) -> np.ndarray:
    p = marginal.table.reshape(-1)
    card = marginal.variables[0].cardinality
    return rng.choice(card, size=(count, n), p=p).astype(np.int8)


def _build_one(full, var, source_var, cover_var, params, binning, eps2, rng, budget):
    seqs = typical_sequences(full.marginalize({var}), params, budget=budget)
    if len(seqs) == 0:
        raise InfeasibleRatesError(f"typical set of {var} is empty at n={params.n}, eps={params.eps}")
    triples = _assign_bins(len(seqs), binning.n_key, binning.n_col, rng)
    cover_rate = (
        full.entropy((var,)) + full.entropy((cover_var,)) - full.entropy((var, cover_var))
    ) + eps2
    n_cover = _bin_count(params.n, max(0.0, cover_rate))
    u_cb = _draw_cover(full.marginalize({cover_var}), n_cover, params.n, rng)
    return Codebook(var, cover_var, seqs, triples, binning.n_key, binning.n_col,
                    u_cb, binning, 0)


def build_forward_codebooks(full: JointPmf, params: TypicalityParams,
                            rate1: float, rate2: float, seed: int, *,
                            eps1: float = 0.0, eps2: float = 0.05,
                            budget=None) -> tuple:
    """Codebooks of users 1 (over S, covered by U) and 2 (over T, covered by V).

    Deterministic function of `seed`.
    """
    b1, b2 = forward_binning(full, params.n, rate1, rate2, eps1)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    cb1 = _build_one(full, "S", "X1", "U", params, b1, eps2, rng, budget)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    cb2 = _build_one(full, "T", "X2", "V", params, b2, eps2, rng, budget)
    cb1.seed = cb2.seed = seed
    return cb1, cb2


def build_backward_codebooks(full: JointPmf, params: TypicalityParams,
                             rate1: float, rate2: float, seed: int, *,
                             eps1: float = 0.0, eps2: float = 0.05,
                             budget=None) -> tuple:
    """User 3's codebooks over S (for user 1's key) and T (user 2's key).

    Both are covered by the single U codeword list, which is drawn at rate
    I(S,T;U) + eps2 and stored on the S codebook (the T codebook carries a
    reference to the same array).
    """
    b1, b2 = backward_binning(full, params.n, rate1, rate2, eps1)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    seqs_s = typical_sequences(full.marginalize({"S"}), params, budget=budget)
    if len(seqs_s) == 0:
        raise InfeasibleRatesError(f"typical set of S is empty at n={params.n}")
    triples_s = _assign_bins(len(seqs_s), b1.n_key, b1.n_col, rng)
    rng2 = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    seqs_t = typical_sequences(full.marginalize({"T"}), params, budget=budget)
    if len(seqs_t) == 0:
        raise InfeasibleRatesError(f"typical set of T is empty at n={params.n}")
    triples_t = _assign_bins(len(seqs_t), b2.n_key, b2.n_col, rng2)
    cover_rate = (
        full.entropy(("S", "T")) + full.entropy(("U",)) - full.entropy(("S", "T", "U"))
    ) + eps2
    rng3 = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    u_cb = _draw_cover(full.marginalize({"U"}), _bin_count(params.n, max(0.0, cover_rate)),
                       params.n, rng3)
    cb_s = Codebook("S", "U", seqs_s, triples_s, b1.n_key, b1.n_col, u_cb, b1, seed)
    cb_t = Codebook("T", "U", seqs_t, triples_t, b2.n_key, b2.n_col, u_cb, b2, seed)
    return cb_s, cb_t


# ---------------------------------------------------------------------------
# Encoding / decoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodingResult:
    key: int
    col: int
    cell: int
    cover: int
    seq_index: int


def _uniform_pick(rng, candidates: np.ndarray) -> int:
    return int(candidates[rng.integers(len(candidates))])


def forward_encode(user: int, block: np.ndarray, codebook: Codebook,
                   full: JointPmf, params: TypicalityParams,
                   rng: np.random.Generator) -> EncodingResult:
    """Select a jointly typical codeword for the observed source block.

    The codeword is drawn uniformly from the set of codebook sequences
    jointly typical with the block, then a cover codeword index is drawn
    uniformly among those jointly typical with the selected codeword.
    """
    var, src = ("S", "X1") if user == 1 else ("T", "X2")
    block = np.asarray(block, dtype=np.int8)
    if len(block) != params.n:
        raise CodecError(f"block length {len(block)} != n={params.n}")
    test = JointTypicalityTest(full.marginalize({var, src}), params)
    mask = test.mask(var, codebook.sequences, {src: block})
    cands = np.flatnonzero(mask)
    if len(cands) == 0:
        raise EncoderNoSequence(f"no {var} codeword jointly typical with the {src} block")
    idx = _uniform_pick(rng, cands)
    seq = codebook.sequences[idx]
    cover_test = JointTypicalityTest(full.marginalize({var, codebook.cover_var}), params)
    cover_mask = cover_test.mask(codebook.cover_var, codebook.u_codebook, {var: seq})
    cover_cands = np.flatnonzero(cover_mask)
    if len(cover_cands) == 0:
        raise EncoderNoCover(f"no {codebook.cover_var} codeword covers the selected {var} sequence")
    a = _uniform_pick(rng, cover_cands)
    k, kp, kpp = codebook.triple_of(idx)
    return EncodingResult(k, kp, kpp, a, idx)


def forward_decode(x3_block: np.ndarray, indices: tuple, cb1: Codebook,
                   cb2: Codebook, full: JointPmf, params: TypicalityParams) -> tuple:
    """User 3's joint decoder: unique (s, t) in the announced columns.

    `indices` is (k', a, l', b).  Searches only the announced columns and
    accepts the pair iff the full tuple (s, t, x3, u, v) is jointly typical;
    conditional typicality given the covers is realized as full-tuple joint
    typicality.  Raises DecodeNone / DecodeAmbiguous otherwise.
    """
    kp, a, lp, b = indices
    x3_block = np.asarray(x3_block, dtype=np.int8)
    col_s = cb1.column(kp)
    col_t = cb2.column(lp)
    test = JointTypicalityTest(full.marginalize({"S", "T", "X3", "U", "V"}), params)
    fixed = {"X3": x3_block, "U": cb1.u_codebook[a], "V": cb2.u_codebook[b]}
    ok = test.pair_mask("S", cb1.sequences[col_s], "T", cb2.sequences[col_t], fixed)
    hits = np.argwhere(ok)
    if len(hits) == 0:
        raise DecodeNone("no jointly typical (s, t) pair in the announced columns")
    if len(hits) > 1:
        raise DecodeAmbiguous(f"{len(hits)} jointly typical pairs")
    i, j = hits[0]
    k_hat = int(cb1.triples[col_s[i], 0])
    l_hat = int(cb2.triples[col_t[j], 0])
    return k_hat, l_hat


def backward_encode(x3_block: np.ndarray, cb_s: Codebook, cb_t: Codebook,
                    full: JointPmf, params: TypicalityParams,
                    rng: np.random.Generator) -> tuple:
    """User 3 selects a jointly typical (s, t) pair for its block plus a cover.

    Returns (EncodingResult for s, EncodingResult for t); both share the
    cover index a.
    """
    x3_block = np.asarray(x3_block, dtype=np.int8)
    test = JointTypicalityTest(full.marginalize({"S", "T", "X3"}), params)
    ok = test.pair_mask("S", cb_s.sequences, "T", cb_t.sequences, {"X3": x3_block})
    hits = np.argwhere(ok)
    if len(hits) == 0:
        raise EncoderNoSequence("no (s, t) pair jointly typical with the X3 block")
    i, j = hits[rng.integers(len(hits))]
    s_seq, t_seq = cb_s.sequences[i], cb_t.sequences[j]
    cover_test = JointTypicalityTest(full.marginalize({"S", "T", "U"}), params)
    cover_mask = cover_test.mask("U", cb_s.u_codebook, {"S": s_seq, "T": t_seq})
    cover_cands = np.flatnonzero(cover_mask)
    if len(cover_cands) == 0:
        raise EncoderNoCover("no U codeword covers the selected (s, t) pair")
    a = _uniform_pick(rng, cover_cands)
    ks = cb_s.triple_of(int(i))
    kt = cb_t.triple_of(int(j))
    return (EncodingResult(ks[0], ks[1], ks[2], a, int(i)),
            EncodingResult(kt[0], kt[1], kt[2], a, int(j)))


def backward_decode(user: int, block: np.ndarray, col: int, a: int,
                    codebook: Codebook, full: JointPmf,
                    params: TypicalityParams) -> int:
    """User 1 or 2 decodes its key row from the announced column.

    Accepts the unique column member jointly typical with the user's own
    block and the announced cover codeword.
    """
    var, src = ("S", "X1") if user == 1 else ("T", "X2")
    block = np.asarray(block, dtype=np.int8)
    members = codebook.column(col)
    test = JointTypicalityTest(full.marginalize({var, src, "U"}), params)
    mask = test.mask(var, codebook.sequences[members],
                     {src: block, "U": codebook.u_codebook[a]})
    hits = np.flatnonzero(mask)
    if len(hits) == 0:
        raise DecodeNone(f"no {var} candidate typical with the {src} block")
    if len(hits) > 1:
        raise DecodeAmbiguous(f"{len(hits)} {var} candidates")
    return int(codebook.triples[members[hits[0]], 0])


def wiretap_decode(key: int, col: int, obs_block: np.ndarray, u_seq: np.ndarray,
                   codebook: Codebook, full: JointPmf, params: TypicalityParams,
                   obs_var: str = "X2") -> int:
    """The eavesdropper resolves the residual index inside a known cell.

    Given (k, k'), its own observation block, and the cover codeword, returns
    the unique k'' whose sequence is jointly typical with both.  This
    succeeding with high probability is exactly what caps the residual
    equivocation of the key.
    """
    obs_block = np.asarray(obs_block, dtype=np.int8)
    members = codebook.cell(key, col)
    test = JointTypicalityTest(
        full.marginalize({codebook.var, obs_var, codebook.cover_var}), params
    )
    mask = test.mask(codebook.var, codebook.sequences[members],
                     {obs_var: obs_block, codebook.cover_var: u_seq})
    hits = np.flatnonzero(mask)
    if len(hits) == 0:
        raise WiretapNone("no cell member typical with the observation")
    if len(hits) > 1:
        raise WiretapAmbiguous(f"{len(hits)} cell members typical")
    return int(codebook.triples[members[hits[0]], 2])


def dump_codebook(cb: Codebook) -> str:
    """Frozen debug dump: header then one '<seq> <k> <k\'> <k\'\'>' line per sequence."""
    n = cb.sequences.shape[1] if cb.size else 0
    card = int(cb.sequences.max()) + 1 if cb.size else 0
    lines = [f"n={n} |S|={card} bins={cb.n_key}x{cb.n_col}x{cb.max_cell} seed={cb.seed}"]
    for i in range(cb.size):
        digits = "".join(str(int(d)) for d in cb.sequences[i])
        k, kp, kpp = cb.triples[i]
        lines.append(f"{digits} {k} {kp} {kpp}")
    return "\n".join(lines) + "\n"
