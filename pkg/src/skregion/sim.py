"""End-to-end protocol trials and exact small-blocklength evaluation.

Monte Carlo mode samples i.i.d. source blocks, runs the random-binning
protocol, and estimates the reliability, leakage and key-uniformity
quantities empirically.  Exact mode enumerates every source block pair,
averages the encoder's selection distribution over its randomness for the
fixed seeded codebook, and computes the leakage mutual information and key
entropy exactly from the resulting joint.

Conventions shared by both modes: an encoder that finds no jointly typical
codeword (or no cover codeword) draws its key uniformly from its private
randomness and transmits index 0 on every public slot; the key(s) owned by
the failing encoder always count as reliability errors, the decoder still
runs on the transmitted indices, and the other key errs only if its own
decode fails or mismatches.  The leakage view for user 1's key is
(own source block, k', a) in the forward strategy and (block, k', l', a) in
the backward strategy; the adversary's private randomness is independent of
everything else and is omitted (adding an independent view variable changes
mutual information by < 1e-12, which the tests assert).
"""

import time
import zlib
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .codec import (
    DecodeAmbiguous,
    DecodeNone,
    EncoderNoCover,
    EncoderNoSequence,
    JointTypicalityTest,
    TypicalityParams,
    backward_binning,
    backward_decode,
    backward_encode,
    build_backward_codebooks,
    build_forward_codebooks,
    forward_binning,
    forward_decode,
    forward_encode,
    _all_sequences,
)
from .pmf import (
    BudgetExceededError,
    Channel,
    JointPmf,
    PmfError,
    VariableId,
    entry_budget,
    iid_extension,
)
from .region import AuxSystem, backward_inner_point, forward_inner_point
from .sources import broadcast_source, identity_source

__all__ = [
    "EpsParams",
    "SimConfig",
    "SimReport",
    "sample_sources",
    "run_trials",
    "exact_leakage",
    "exact_report",
    "exact_view_joint",
    "check_definition1",
    "identity_preset",
    "broadcast_forward_preset",
    "broadcast_backward_preset",
]


@dataclass(frozen=True)
class EpsParams:
    """Tolerance ladder: enc for codebooks/encoders, dec for decoders,
    cover for the cover-codeword rate slack, wiretap for the adversary."""

    enc: float = 1.0
    dec: float = 1.0
    cover: float = 0.05
    wiretap: float = 1.0

    @classmethod
    def from_margin(cls, margin: float) -> "EpsParams":
        e = max(0.5, 2.0 * margin)
        return cls(enc=e, dec=e, cover=0.05, wiretap=e)


@dataclass
class SimConfig:
    """Everything needed to reproduce a protocol experiment bit-exactly."""

    base: JointPmf
    direction: str                 # "forward" | "backward"
    channels: tuple                # AuxSystem channel tuple for the direction
    n: int
    rate1: float
    rate2: float
    margin: float
    eps: EpsParams
    trials: int
    codebook_seeds: tuple
    mode: str = "mc"               # "mc" | "exact"
    trial_seed: int = 2024
    exact_error: bool = True
    budget: int | None = None

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise PmfError(f"direction must be forward|backward, got {self.direction!r}")
        if self.mode not in ("mc", "exact"):
            raise PmfError(f"mode must be mc|exact, got {self.mode!r}")
        if self.trials < 1:
            raise PmfError("trials must be >= 1")
        if not self.codebook_seeds:
            raise PmfError("need at least one codebook seed")
        self._aux = None

    @property
    def aux(self) -> AuxSystem:
        if self._aux is None:
            if self.direction == "forward":
                self._aux = AuxSystem.forward(self.base, *self.channels)
            else:
                self._aux = AuxSystem.backward(self.base, *self.channels)
        return self._aux

    def inner_bound_point(self):
        if self.direction == "forward":
            return forward_inner_point(self.aux)
        return backward_inner_point(self.aux)


@dataclass
class SimReport:
    """Empirical or exact estimates of the six achievability quantities."""

    schema: int
    mode: str
    direction: str
    n: int
    trials: int
    seeds: list
    rate1: float
    rate2: float
    err_K: float | None
    err_L: float | None
    leak_K: float
    leak_L: float
    uniformity_gap_K: float
    uniformity_gap_L: float
    h_key_K: float
    h_key_L: float
    keyspace_K: float
    keyspace_L: float
    per_seed: list
    failures: dict
    warnings: list
    wall_clock: float = 0.0

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {
            "schema": self.schema,
            "mode": self.mode,
            "direction": self.direction,
            "n": self.n,
            "trials": self.trials,
            "seeds": list(self.seeds),
            "rate1": self.rate1,
            "rate2": self.rate2,
            "err_K": self.err_K,
            "err_L": self.err_L,
            "leak_K": self.leak_K,
            "leak_L": self.leak_L,
            "uniformity_gap_K": self.uniformity_gap_K,
            "uniformity_gap_L": self.uniformity_gap_L,
            "h_key_K": self.h_key_K,
            "h_key_L": self.h_key_L,
            "keyspace_K": self.keyspace_K,
            "keyspace_L": self.keyspace_L,
            "per_seed": self.per_seed,
            "failures": self.failures,
            "warnings": self.warnings,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    def summary_line(self) -> str:
        def fmt(x):
            return "n/a" if x is None else f"{x:.6f}"
        return (f"err_K={fmt(self.err_K)} err_L={fmt(self.err_L)} "
                f"leak_K={fmt(self.leak_K)} leak_L={fmt(self.leak_L)}")


def sample_sources(base: JointPmf, n: int, rng: np.random.Generator) -> tuple:
    """One i.i.d. block per source variable, drawn jointly from the base pmf."""
    flat = base.table.reshape(-1)
    cells = rng.choice(len(flat), size=n, p=flat)
    idx = np.unravel_index(cells, base.table.shape)
    return tuple(np.asarray(part, dtype=np.int8) for part in idx)


def _entropy_counts(counter: Counter) -> float:
    total = sum(counter.values())
    if total == 0:
        return 0.0
    h = 0.0
    for c in counter.values():
        p = c / total
        h -= p * np.log2(p)
    return float(h)


def _plugin_mi(pairs: Counter) -> float:
    total = sum(pairs.values())
    if total == 0:
        return 0.0
    left = Counter()
    right = Counter()
    for (k, v), c in pairs.items():
        left[k] += c
        right[v] += c
    mi = 0.0
    for (k, v), c in pairs.items():
        mi += (c / total) * np.log2(c * total / (left[k] * right[v]))
    return float(max(0.0, mi))


def _hash16(block: np.ndarray) -> int:
    return zlib.crc32(np.asarray(block, dtype=np.int8).tobytes()) & 0xFFFF


# ---------------------------------------------------------------------------
# Monte Carlo trials
# ---------------------------------------------------------------------------

class _Tally:
    __slots__ = ("trials", "err_k", "err_l", "fails", "k_view", "l_view", "k_counts", "l_counts")

    def __init__(self):
        self.trials = 0
        self.err_k = 0
        self.err_l = 0
        self.fails = Counter()
        self.k_view = Counter()
        self.l_view = Counter()
        self.k_counts = Counter()
        self.l_counts = Counter()

    def merge(self, other: "_Tally") -> None:
        self.trials += other.trials
        self.err_k += other.err_k
        self.err_l += other.err_l
        self.fails.update(other.fails)
        self.k_view.update(other.k_view)
        self.l_view.update(other.l_view)
        self.k_counts.update(other.k_counts)
        self.l_counts.update(other.l_counts)


class _Instance:
    """Codebooks plus cached typicality tests for one codebook seed."""

    def __init__(self, config: SimConfig, seed: int):
        self.config = config
        self.seed = seed
        self.full = config.aux.full
        self.enc_params = TypicalityParams(config.n, config.eps.enc)
        self.dec_params = TypicalityParams(config.n, config.eps.dec)
        self._exact_errs = None
        self._bwd_outcomes = None
        if config.direction == "forward":
            self.cb1, self.cb2 = build_forward_codebooks(
                self.full, self.enc_params, config.rate1, config.rate2, seed,
                eps2=config.eps.cover, budget=config.budget)
        else:
            self.cb1, self.cb2 = build_backward_codebooks(
                self.full, self.enc_params, config.rate1, config.rate2, seed,
                eps2=config.eps.cover, budget=config.budget)

    def run_trial(self, rng: np.random.Generator, tally: _Tally) -> None:
        cfg = self.config
        x1, x2, x3 = sample_sources(cfg.base, cfg.n, rng)
        tally.trials += 1
        if cfg.direction == "forward":
            self._forward_trial(rng, tally, x1, x2, x3)
        else:
            self._backward_trial(rng, tally, x1, x2, x3)

    def _forward_trial(self, rng, tally, x1, x2, x3):
        err_k = err_l = False
        try:
            e1 = forward_encode(1, x1, self.cb1, self.full, self.enc_params, rng)
            k, kp, a = e1.key, e1.col, e1.cover
        except EncoderNoSequence:
            tally.fails["enc1_no_sequence"] += 1
            k, kp, a = int(rng.integers(self.cb1.n_key)), 0, 0
            err_k = True
        except EncoderNoCover:
            tally.fails["enc1_no_cover"] += 1
            k, kp, a = int(rng.integers(self.cb1.n_key)), 0, 0
            err_k = True
        try:
            e2 = forward_encode(2, x2, self.cb2, self.full, self.enc_params, rng)
            l, lp, b = e2.key, e2.col, e2.cover
        except EncoderNoSequence:
            tally.fails["enc2_no_sequence"] += 1
            l, lp, b = int(rng.integers(self.cb2.n_key)), 0, 0
            err_l = True
        except EncoderNoCover:
            tally.fails["enc2_no_cover"] += 1
            l, lp, b = int(rng.integers(self.cb2.n_key)), 0, 0
            err_l = True

        tally.k_counts[k] += 1
        tally.l_counts[l] += 1
        tally.k_view[(k, (kp, a, _hash16(x2)))] += 1
        tally.l_view[(l, (lp, b, _hash16(x1)))] += 1

        try:
            k_hat, l_hat = forward_decode(
                x3, (kp, a, lp, b), self.cb1, self.cb2, self.full, self.dec_params)
            err_k = err_k or k_hat != k
            err_l = err_l or l_hat != l
        except DecodeNone:
            tally.fails["decode_none"] += 1
            err_k = err_l = True
        except DecodeAmbiguous:
            tally.fails["decode_ambiguous"] += 1
            err_k = err_l = True
        tally.err_k += err_k
        tally.err_l += err_l

    def _backward_trial(self, rng, tally, x1, x2, x3):
        failed = False
        try:
            es, et = backward_encode(x3, self.cb1, self.cb2, self.full, self.enc_params, rng)
            k, kp, a = es.key, es.col, es.cover
            l, lp = et.key, et.col
        except EncoderNoSequence:
            tally.fails["enc3_no_sequence"] += 1
            k, kp, a = int(rng.integers(self.cb1.n_key)), 0, 0
            l, lp = int(rng.integers(self.cb2.n_key)), 0
            failed = True
        except EncoderNoCover:
            tally.fails["enc3_no_cover"] += 1
            k, kp, a = int(rng.integers(self.cb1.n_key)), 0, 0
            l, lp = int(rng.integers(self.cb2.n_key)), 0
            failed = True

        tally.k_counts[k] += 1
        tally.l_counts[l] += 1
        tally.k_view[(k, (kp, lp, a, _hash16(x2)))] += 1
        tally.l_view[(l, (kp, lp, a, _hash16(x1)))] += 1

        if failed:
            tally.err_k += 1
            tally.err_l += 1
            return
        try:
            k_hat = backward_decode(1, x1, kp, a, self.cb1, self.full, self.dec_params)
            if k_hat != k:
                tally.err_k += 1
        except DecodeNone:
            tally.fails["decode1_none"] += 1
            tally.err_k += 1
        except DecodeAmbiguous:
            tally.fails["decode1_ambiguous"] += 1
            tally.err_k += 1
        try:
            l_hat = backward_decode(2, x2, lp, a, self.cb2, self.full, self.dec_params)
            if l_hat != l:
                tally.err_l += 1
        except DecodeNone:
            tally.fails["decode2_none"] += 1
            tally.err_l += 1
        except DecodeAmbiguous:
            tally.fails["decode2_ambiguous"] += 1
            tally.err_l += 1


def _run_seed(config: SimConfig, seed: int, workers: int) -> _Tally:
    inst = _Instance(config, seed)

    def run_chunk(bounds) -> _Tally:
        lo, hi = bounds
        local = _Tally()
        for t in range(lo, hi):
            rng = np.random.default_rng(np.random.SeedSequence([config.trial_seed, seed, t]))
            inst.run_trial(rng, local)
        return local

    tally = _Tally()
    if workers > 1 and config.trials > 1:
        step = max(1, config.trials // (workers * 4))
        chunks = [(lo, min(lo + step, config.trials)) for lo in range(0, config.trials, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(run_chunk, chunks):
                tally.merge(part)
    else:
        tally.merge(run_chunk((0, config.trials)))
    return tally


def run_trials(config: SimConfig, workers: int = 1) -> SimReport:
    """Monte Carlo protocol runs, averaged over the configured codebook seeds.

    Deterministic given the seed list: per-trial randomness is derived from
    (trial_seed, codebook seed, trial index), and accumulation uses integer
    counters, so results are identical for any worker count.
    """
    if config.mode != "mc":
        raise PmfError("run_trials requires mode='mc'")
    start = time.perf_counter()
    warnings = _margin_warnings(config)
    per_seed = []
    fails = Counter()
    n = config.n
    for seed in config.codebook_seeds:
        tally = _run_seed(config, seed, workers)
        inst_keyspace_k = np.log2(_keyspace(config, seed, 1)) / n
        inst_keyspace_l = np.log2(_keyspace(config, seed, 2)) / n
        h_k = _entropy_counts(tally.k_counts)
        h_l = _entropy_counts(tally.l_counts)
        per_seed.append({
            "seed": seed,
            "err_K": tally.err_k / tally.trials,
            "err_L": tally.err_l / tally.trials,
            "leak_K": _plugin_mi(tally.k_view) / n,
            "leak_L": _plugin_mi(tally.l_view) / n,
            "uniformity_gap_K": max(0.0, inst_keyspace_k - h_k / n),
            "uniformity_gap_L": max(0.0, inst_keyspace_l - h_l / n),
            "h_key_K": h_k / n,
            "h_key_L": h_l / n,
            "keyspace_K": inst_keyspace_k,
            "keyspace_L": inst_keyspace_l,
        })
        fails.update(tally.fails)

    def avg(key):
        return float(np.mean([row[key] for row in per_seed]))

    return SimReport(
        schema=1, mode="mc", direction=config.direction, n=n,
        trials=config.trials, seeds=list(config.codebook_seeds),
        rate1=config.rate1, rate2=config.rate2,
        err_K=avg("err_K"), err_L=avg("err_L"),
        leak_K=avg("leak_K"), leak_L=avg("leak_L"),
        uniformity_gap_K=avg("uniformity_gap_K"),
        uniformity_gap_L=avg("uniformity_gap_L"),
        h_key_K=avg("h_key_K"), h_key_L=avg("h_key_L"),
        keyspace_K=avg("keyspace_K"), keyspace_L=avg("keyspace_L"),
        per_seed=per_seed, failures=dict(sorted(fails.items())),
        warnings=warnings, wall_clock=time.perf_counter() - start,
    )


def _keyspace(config: SimConfig, seed: int, user: int) -> int:
    full = config.aux.full
    if config.direction == "forward":
        b1, b2 = forward_binning(full, config.n, config.rate1, config.rate2)
    else:
        b1, b2 = backward_binning(full, config.n, config.rate1, config.rate2)
    return (b1 if user == 1 else b2).n_key


def _margin_warnings(config: SimConfig) -> list:
    full = config.aux.full
    if config.direction == "forward":
        b1, b2 = forward_binning(full, config.n, config.rate1, config.rate2)
    else:
        b1, b2 = backward_binning(full, config.n, config.rate1, config.rate2)
    out = []
    for label, b in (("user 1", b1), ("user 2", b2)):
        for cond, slack in b.margins.items():
            if slack < -1e-12:
                out.append(f"{label}: reliability condition {cond} violated by {-slack:.6f} bits")
    return out


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

def _encoder_outcomes_forward(inst: _Instance, user: int) -> tuple:
    """Per source-block outcome distributions plus encoder-failure mass.

    Returns (outcomes, fail_weight): outcomes[code] lists ((key, col, cover),
    weight) for the successful encodings of that block (weights summing to
    1 - fail_weight[code]); fail_weight[code] is the probability that the
    encoder finds no codeword or no cover for the block.
    """
    cfg = inst.config
    cb = inst.cb1 if user == 1 else inst.cb2
    var, src = ("S", "X1") if user == 1 else ("T", "X2")
    full = inst.full
    card = full.variable(src).cardinality
    blocks = _all_sequences(card, cfg.n, cfg.budget)
    test = JointTypicalityTest(full.marginalize({var, src}), inst.enc_params)
    cover_test = JointTypicalityTest(full.marginalize({var, cb.cover_var}), inst.enc_params)
    cover_cands = [np.flatnonzero(cover_test.mask(cb.cover_var, cb.u_codebook, {var: seq}))
                   for seq in cb.sequences]
    outcomes = []
    fail = np.zeros(len(blocks))
    for code, block in enumerate(blocks):
        cands = np.flatnonzero(test.mask(var, cb.sequences, {src: block}))
        out = defaultdict(float)
        if len(cands) == 0:
            fail[code] = 1.0
        else:
            w_seq = 1.0 / len(cands)
            for idx in cands:
                covers = cover_cands[idx]
                if len(covers) == 0:
                    fail[code] += w_seq
                    continue
                k, kp, _ = cb.triple_of(int(idx))
                wa = w_seq / len(covers)
                for a in covers:
                    out[(k, kp, int(a))] += wa
        outcomes.append(sorted(out.items()))
    return outcomes, fail


def _encoder_outcomes_backward(inst: _Instance) -> tuple:
    """Per x3-block distributions [((k, kp, l, lp, a), weight), ...] + failure mass."""
    cfg = inst.config
    full = inst.full
    card = full.variable("X3").cardinality
    blocks = _all_sequences(card, cfg.n, cfg.budget)
    pair_test = JointTypicalityTest(full.marginalize({"S", "T", "X3"}), inst.enc_params)
    cover_test = JointTypicalityTest(full.marginalize({"S", "T", "U"}), inst.enc_params)
    cb_s, cb_t = inst.cb1, inst.cb2
    outcomes = []
    fail = np.zeros(len(blocks))
    for code, block in enumerate(blocks):
        ok = pair_test.pair_mask("S", cb_s.sequences, "T", cb_t.sequences, {"X3": block})
        hits = np.argwhere(ok)
        out = defaultdict(float)
        if len(hits) == 0:
            fail[code] = 1.0
        else:
            w_pair = 1.0 / len(hits)
            for i, j in hits:
                covers = np.flatnonzero(cover_test.mask(
                    "U", cb_s.u_codebook,
                    {"S": cb_s.sequences[i], "T": cb_t.sequences[j]}))
                if len(covers) == 0:
                    fail[code] += w_pair
                    continue
                k, kp, _ = cb_s.triple_of(int(i))
                l, lp, _ = cb_t.triple_of(int(j))
                wa = w_pair / len(covers)
                for a in covers:
                    out[(k, kp, l, lp, int(a))] += wa
        outcomes.append(sorted(out.items()))
    return outcomes, fail


def _pair_block_table(base: JointPmf, first: str, second: str, n: int, budget) -> np.ndarray:
    """p(first-block, second-block) as a (c1^n, c2^n) array."""
    pair = base.marginalize({first, second})
    ext = iid_extension(pair, n, budget=budget)
    table = ext.table
    if ext.names != (first, second):
        table = table.T
    return table


@dataclass
class ExactSide:
    leak: float
    uniformity_gap: float
    h_key: float
    keyspace: float
    err: float | None


def _exact_side(inst: _Instance, user: int) -> ExactSide:
    cfg = inst.config
    n = cfg.n
    if cfg.direction == "forward":
        return _exact_side_forward(inst, user)
    return _exact_side_backward(inst, user)


def _view_joint_forward(inst: "_Instance", user: int, outcomes, fail) -> np.ndarray:
    """Exact joint of (key, eavesdropper block, column index, cover index).

    Encoder-failure mass is spread uniformly over the key axis at the
    fallback transcript (column 0, cover 0), matching the trial convention.
    """
    cfg = inst.config
    n = cfg.n
    cb = inst.cb1 if user == 1 else inst.cb2
    src = "X1" if user == 1 else "X2"
    other = "X2" if user == 1 else "X1"
    n_other = inst.full.variable(other).cardinality ** n
    n_cover = len(cb.u_codebook)
    size = cb.n_key * n_other * cb.n_col * n_cover
    cap = entry_budget(cfg.budget)
    if size > cap:
        raise BudgetExceededError(f"exact view table needs {size} entries, budget {cap}")
    pair = _pair_block_table(cfg.base, src, other, n, cfg.budget)
    joint = np.zeros((cb.n_key, n_other, cb.n_col, n_cover))
    for code, outs in enumerate(outcomes):
        row = pair[code]
        for (k, kp, a), w in outs:
            joint[k, :, kp, a] += w * row
        if fail[code] > 0.0:
            joint[:, :, 0, 0] += (fail[code] / cb.n_key) * row
    return joint


def exact_view_joint(config: SimConfig, seed: int, user: int) -> np.ndarray:
    """Exact (key, block, public indices) joint for one forward codebook seed.

    Axes: key, eavesdropper source block code, column index, cover index.
    """
    if config.direction != "forward":
        raise PmfError("exact_view_joint currently covers the forward strategy")
    inst = _Instance(config, seed)
    outcomes, fail = _encoder_outcomes_forward(inst, user)
    return _view_joint_forward(inst, user, outcomes, fail)


def _exact_side_forward(inst: _Instance, user: int) -> ExactSide:
    cfg = inst.config
    n = cfg.n
    cb = inst.cb1 if user == 1 else inst.cb2
    outcomes, fail = _encoder_outcomes_forward(inst, user)
    joint = _view_joint_forward(inst, user, outcomes, fail)
    leak = _mi_first_axis(joint) / n
    pk = joint.sum(axis=(1, 2, 3))
    h_key = _h(pk)
    gap = max(0.0, (np.log2(cb.n_key) - h_key) / n)
    err = _exact_errors_forward(inst)[user - 1] if cfg.exact_error else None
    return ExactSide(leak, gap, h_key / n, np.log2(cb.n_key) / n, err)


def _exact_errors_forward(inst: _Instance) -> tuple:
    """Exact (err_K, err_L) for the forward strategy.

    Supported when user 2's auxiliary chain is degenerate (constant T and V
    alphabets), so the joint decoder depends on (k', a, x3) only.  err_K
    needs the (X1, X3) block pair table; err_L additionally couples to
    user 2's typical-set misses and needs the full block triple when those
    occur, all budget-gated.  Unsupported shapes yield (None, None).
    """
    if getattr(inst, "_exact_errs", None) is not None:
        return inst._exact_errs
    cfg = inst.config
    full = inst.full
    degenerate = (full.variable("T").cardinality == 1
                  and full.variable("V").cardinality == 1)
    n = cfg.n
    cards = [full.variable(v).cardinality for v in ("X1", "X2", "X3")]
    pair_cost = (cards[0] * cards[2]) ** n
    if not degenerate or pair_cost > entry_budget(cfg.budget):
        inst._exact_errs = (None, None)
        return inst._exact_errs
    cb = inst.cb1
    outcomes1, fail1 = _encoder_outcomes_forward(inst, 1)
    _, fail2 = _encoder_outcomes_forward(inst, 2)
    x3_blocks = _all_sequences(cards[2], n, cfg.budget)
    pair13 = _pair_block_table(cfg.base, "X1", "X3", n, cfg.budget)
    test = JointTypicalityTest(
        full.marginalize({"S", "T", "X3", "U", "V"}), inst.dec_params)
    const_t = inst.cb2.sequences[0]
    const_v = inst.cb2.u_codebook[0]
    decode_cache = {}

    def decode_row(kp: int, a: int) -> np.ndarray:
        # decoded key per x3 block, -1 for none/ambiguous
        if (kp, a) not in decode_cache:
            members = cb.column(kp)
            fixed = {"T": const_t, "V": const_v, "U": cb.u_codebook[a]}
            ok = test.pair_mask("S", cb.sequences[members], "X3", x3_blocks, fixed)
            counts = ok.sum(axis=0)
            result = np.full(len(x3_blocks), -1, dtype=np.int64)
            unique = counts == 1
            if unique.any():
                which = ok[:, unique].argmax(axis=0)
                result[unique] = cb.triples[members[which], 0]
            decode_cache[(kp, a)] = result
        return decode_cache[(kp, a)]

    err_k = float(pair13.sum(axis=1) @ fail1)
    dec_fail = np.zeros((len(outcomes1), len(x3_blocks)))
    for code, outs in enumerate(outcomes1):
        row = pair13[code]
        for (k, kp, a), w in outs:
            decoded = decode_row(kp, a)
            err_k += w * float(row[decoded != k].sum())
            dec_fail[code] += w * (decoded == -1)
        if fail1[code] > 0.0:
            dec_fail[code] += fail1[code] * (decode_row(0, 0) == -1)

    # user 2's key: its encoder failures, plus any decode failure
    err_l = None
    if fail2.max() == 0.0:
        err_l = float((pair13 * dec_fail).sum())
    elif int(np.prod(cards)) ** n <= entry_budget(cfg.budget):
        triple = iid_extension(cfg.base, n, budget=cfg.budget).table
        err_l = float(np.einsum("abc,b->", triple, fail2))
        weight13 = np.einsum("abc,b->ac", triple, 1.0 - fail2)
        err_l += float((weight13 * dec_fail).sum())
    inst._exact_errs = (err_k, err_l)
    return inst._exact_errs


def _exact_side_backward(inst: _Instance, user: int) -> ExactSide:
    cfg = inst.config
    n = cfg.n
    cb = inst.cb1 if user == 1 else inst.cb2
    obs = "X2" if user == 1 else "X1"
    outcomes, fail = _backward_outcomes_cached(inst)
    obs_card = inst.full.variable(obs).cardinality
    n_obs = obs_card ** n
    n_cover = len(inst.cb1.u_codebook)
    size = cb.n_key * n_obs * inst.cb1.n_col * inst.cb2.n_col * n_cover
    cap = entry_budget(cfg.budget)
    if size > cap:
        raise BudgetExceededError(f"exact view table needs {size} entries, budget {cap}")
    pair = _pair_block_table(cfg.base, "X3", obs, n, cfg.budget)
    joint = np.zeros((cb.n_key, n_obs, inst.cb1.n_col, inst.cb2.n_col, n_cover))
    for code, outs in enumerate(outcomes):
        row = pair[code]
        for (k, kp, l, lp, a), w in outs:
            key = k if user == 1 else l
            joint[key, :, kp, lp, a] += w * row
        if fail[code] > 0.0:
            joint[:, :, 0, 0, 0] += (fail[code] / cb.n_key) * row
    leak = _mi_first_axis(joint) / n
    pk = joint.sum(axis=tuple(range(1, joint.ndim)))
    h_key = _h(pk)
    gap = max(0.0, (np.log2(cb.n_key) - h_key) / n)
    err = _exact_err_backward(inst, user) if cfg.exact_error else None
    return ExactSide(leak, gap, h_key / n, np.log2(cb.n_key) / n, err)


def _backward_outcomes_cached(inst: _Instance) -> tuple:
    if getattr(inst, "_bwd_outcomes", None) is None:
        inst._bwd_outcomes = _encoder_outcomes_backward(inst)
    return inst._bwd_outcomes


def _exact_err_backward(inst: _Instance, user: int) -> float | None:
    """Exact key error for one backward decoder.

    User 3's encoder failures (fallback transcript) count fully against both
    keys; otherwise the per-user decode depends only on (column, cover, own
    block), so a block pair table suffices.
    """
    cfg = inst.config
    n = cfg.n
    cb = inst.cb1 if user == 1 else inst.cb2
    var, src = ("S", "X1") if user == 1 else ("T", "X2")
    src_card = inst.full.variable(src).cardinality
    if (src_card * inst.full.variable("X3").cardinality) ** n > entry_budget(cfg.budget):
        return None
    outcomes, fail = _backward_outcomes_cached(inst)
    blocks = _all_sequences(src_card, n, cfg.budget)
    pair = _pair_block_table(cfg.base, "X3", src, n, cfg.budget)
    test = JointTypicalityTest(inst.full.marginalize({var, src, "U"}), inst.dec_params)
    decode_cache = {}

    def decode_row(col: int, a: int) -> np.ndarray:
        if (col, a) not in decode_cache:
            members = cb.column(col)
            fixed = {"U": inst.cb1.u_codebook[a]}
            ok = test.pair_mask(var, cb.sequences[members], src, blocks, fixed)
            counts = ok.sum(axis=0)
            result = np.full(len(blocks), -1, dtype=np.int64)
            unique = counts == 1
            if unique.any():
                which = ok[:, unique].argmax(axis=0)
                result[unique] = cb.triples[members[which], 0]
            decode_cache[(col, a)] = result
        return decode_cache[(col, a)]

    err = float(pair.sum(axis=1) @ fail)
    for code, outs in enumerate(outcomes):
        row = pair[code]
        for (k, kp, l, lp, a), w in outs:
            key, col = (k, kp) if user == 1 else (l, lp)
            decoded = decode_row(col, a)
            err += w * float(row[decoded != key].sum())
    return err


def _h(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _mi_first_axis(joint: np.ndarray) -> float:
    flat = joint.reshape(joint.shape[0], -1)
    total = _h(flat.reshape(-1))
    hk = _h(flat.sum(axis=1))
    hv = _h(flat.sum(axis=0))
    return max(0.0, hk + hv - total)


def exact_leakage(config: SimConfig, workers: int = 1) -> tuple:
    """Exact (leak_K bits/symbol, uniformity_gap_K, err_K or None).

    Averaged over the configured codebook seeds; the underlying joint of
    (K, eavesdropper view) is computed by enumerating all source blocks and
    averaging the encoder's selection distribution over its randomness.
    """
    if config.mode != "exact":
        raise PmfError("exact_leakage requires mode='exact'")
    sides = [_exact_side(_Instance(config, seed), 1) for seed in config.codebook_seeds]
    leak = float(np.mean([s.leak for s in sides]))
    gap = float(np.mean([s.uniformity_gap for s in sides]))
    errs = [s.err for s in sides]
    err = None if any(e is None for e in errs) else float(np.mean(errs))
    return leak, gap, err


def exact_report(config: SimConfig, workers: int = 1) -> SimReport:
    """Full SimReport from exact enumeration (both keys)."""
    if config.mode != "exact":
        raise PmfError("exact_report requires mode='exact'")
    start = time.perf_counter()
    per_seed = []
    for seed in config.codebook_seeds:
        inst = _Instance(config, seed)
        k_side = _exact_side(inst, 1)
        l_side = _exact_side(inst, 2)
        per_seed.append({
            "seed": seed,
            "err_K": k_side.err, "err_L": l_side.err,
            "leak_K": k_side.leak, "leak_L": l_side.leak,
            "uniformity_gap_K": k_side.uniformity_gap,
            "uniformity_gap_L": l_side.uniformity_gap,
            "h_key_K": k_side.h_key, "h_key_L": l_side.h_key,
            "keyspace_K": k_side.keyspace, "keyspace_L": l_side.keyspace,
        })

    def avg(key):
        vals = [row[key] for row in per_seed]
        if any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    return SimReport(
        schema=1, mode="exact", direction=config.direction, n=config.n,
        trials=0, seeds=list(config.codebook_seeds),
        rate1=config.rate1, rate2=config.rate2,
        err_K=avg("err_K"), err_L=avg("err_L"),
        leak_K=avg("leak_K"), leak_L=avg("leak_L"),
        uniformity_gap_K=avg("uniformity_gap_K"),
        uniformity_gap_L=avg("uniformity_gap_L"),
        h_key_K=avg("h_key_K"), h_key_L=avg("h_key_L"),
        keyspace_K=avg("keyspace_K"), keyspace_L=avg("keyspace_L"),
        per_seed=per_seed, failures={},
        warnings=_margin_warnings(config),
        wall_clock=time.perf_counter() - start,
    )


def check_definition1(report: SimReport, eps: float) -> dict:
    """The six achievability conditions at tolerance eps, as booleans."""
    def lt(x):
        return x is not None and x < eps
    return {
        "reliability_K": lt(report.err_K),
        "reliability_L": lt(report.err_L),
        "leakage_K": lt(report.leak_K),
        "leakage_L": lt(report.leak_L),
        "rate": (report.h_key_K > report.rate1 - eps
                 and report.h_key_L > report.rate2 - eps),
        "uniformity": (report.uniformity_gap_K < eps
                       and report.uniformity_gap_L < eps),
    }


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _forward_channels(base: JointPmf, s_identity=True, t_identity=False):
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    ch_s = Channel.identity("X1", c1, "S") if s_identity else Channel.constant("S", "X1", c1)
    ch_t = Channel.identity("X2", c2, "T") if t_identity else Channel.constant("T", "X2", c2)
    card_s = c1 if s_identity else 1
    card_t = c2 if t_identity else 1
    ch_u = Channel.constant("U", "S", card_s)
    ch_v = Channel.constant("V", "T", card_t)
    return (ch_s, ch_t, ch_u, ch_v)


def identity_preset(n: int, *, trials: int = 1000, seeds=(1,), margin: float = 0.5,
                    mode: str = "mc") -> SimConfig:
    """Noiseless sanity configuration: X1 = X3, independent X2, S = X1.

    Every sequence is typical (eps = 1 on a uniform bit), so the encoder
    never fails and end-to-end error is exactly zero.
    """
    base = identity_source()
    aux_channels = _forward_channels(base)
    rate1 = margin * 1.0  # inner-bound point r1 = I(X1;X3) = 1 bit
    return SimConfig(base, "forward", aux_channels, n, rate1, 0.0, margin,
                     EpsParams(enc=1.0, dec=1.0), trials, tuple(seeds), mode)


def broadcast_forward_preset(n: int, *, flip_tap: float = 0.25, trials: int = 1000,
                             seeds=(1,), margin: float = 0.5, mode: str = "mc",
                             eps_enc: float = 0.75) -> SimConfig:
    """Forward demo on the broadcast chain arranged with user 3 at the center.

    User 1 observes the center bit exactly (noiseless key leg) and user 2
    taps it through a BSC(flip_tap).  With a genuine typical set
    (eps_enc < 1) the dominant error is the encoder's typical-set miss,
    which decays with n by concentration; leakage to the tapped leg is
    nonzero and shrinks per symbol as the residual binning absorbs it.
    """
    base = broadcast_source("X3", 0.0, flip_tap)
    aux_channels = _forward_channels(base)
    aux = AuxSystem.forward(base, *aux_channels)
    point = forward_inner_point(aux)
    rate1 = margin * point.r1_max
    return SimConfig(base, "forward", aux_channels, n, rate1, 0.0, margin,
                     EpsParams(enc=eps_enc, dec=1.0), trials, tuple(seeds), mode)


def broadcast_backward_preset(n: int, *, flip_tap: float = 0.25, trials: int = 1000,
                              seeds=(1,), margin: float = 0.5, mode: str = "mc",
                              eps_enc: float = 0.75) -> SimConfig:
    """Backward demo: user 3 holds the center, S = X3, T constant.

    User 1's leg is noiseless, user 2 taps through BSC(flip_tap); user 2's
    key space is trivial by construction.
    """
    base = broadcast_source("X3", 0.0, flip_tap)
    c3 = base.variable("X3").cardinality
    eye = np.eye(c3).reshape(c3, c3, 1)
    ch_st = Channel(("X3",), (VariableId("S", c3), VariableId("T", 1)), eye)
    ch_u = Channel(("S", "T"), (VariableId("U", 1),), np.ones((c3, 1, 1)))
    aux = AuxSystem.backward(base, ch_st, ch_u)
    point = backward_inner_point(aux)
    rate1 = margin * point.r1_max
    return SimConfig(base, "backward", (ch_st, ch_u), n, rate1, 0.0, margin,
                     EpsParams(enc=eps_enc, dec=1.0), trials, tuple(seeds), mode)
