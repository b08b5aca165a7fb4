"""Command-line interface: region computation, simulation, verification.

Subcommands
-----------
region     enumerate an inner/outer/explicit bound and write frontier.csv
           plus region.json
simulate   run the key-agreement protocol (Monte Carlo or exact) and write
           report.json
verify     diagnose source chains, evaluate the applicable closed-form case
           regions, and check coincidence against the computed bounds
lemmas     fuzz the chain-split inequality on random joints

Every output directory receives a manifest.json describing the run; outputs
are deterministic functions of the manifest (worker threads, output paths
and wall-clock never influence file contents).  Files are written to a
temporary name and atomically renamed, so failed runs leave no partial
files.  The SKREGION_BUDGET environment variable overrides the dense-table
entry budget.

Exit codes: 0 ok, 2 malformed distribution file, 3 budget exceeded,
4 infeasible rates, 5 claimed coincidence failed, 6 lemma violation.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
from importlib.metadata import PackageNotFoundError, version as pkg_version

import numpy as np

from .cases import (
    ChainViolatedError,
    case1_region,
    case2_region,
    case3_region,
    diagnose,
    lemma3_check,
    random_lemma3_joint,
    region_gap,
)
from .codec import InfeasibleRatesError
from .pmf import BudgetExceededError, Channel, JointPmf, PmfError, VariableId
from .region import (
    INF,
    AuxSystem,
    GridSpec,
    backward_inner_point,
    enumerate_region,
    explicit_outer,
    forward_inner_point,
    pareto_frontier,
)
from .sim import EpsParams, SimConfig, exact_report, run_trials
from .sources import triple_from_table

EXIT_OK = 0
EXIT_MALFORMED = 2
EXIT_BUDGET = 3
EXIT_INFEASIBLE = 4
EXIT_COINCIDENCE = 5
EXIT_LEMMA = 6


class DistributionFormatError(Exception):
    pass


class CoincidenceFailure(Exception):
    pass


def _tool_version() -> str:
    try:
        return pkg_version("skregion")
    except PackageNotFoundError:
        return "0.0.0"


# ---------------------------------------------------------------------------
# Distribution file format
# ---------------------------------------------------------------------------

def parse_distribution(text: str) -> JointPmf:
    """Parse the three-variable distribution format.

    Header ``vars: X1=<c1> X2=<c2> X3=<c3>``, then ``<x1> <x2> <x3> <prob>``
    lines; ``#`` starts a comment; omitted cells are zero.
    """
    header = None
    table = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 4 or parts[0] != "vars:":
                raise DistributionFormatError(
                    f"line {lineno}: expected 'vars: X1=<c> X2=<c> X3=<c>', got {raw!r}")
            cards = []
            for name, tok in zip(("X1", "X2", "X3"), parts[1:]):
                key, _, val = tok.partition("=")
                if key != name or not val.isdigit() or int(val) < 1:
                    raise DistributionFormatError(f"line {lineno}: bad variable spec {tok!r}")
                cards.append(int(val))
            header = tuple(cards)
            table = np.zeros(header)
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DistributionFormatError(f"line {lineno}: expected 'x1 x2 x3 prob', got {raw!r}")
        try:
            idx = tuple(int(p) for p in parts[:3])
            prob = float(parts[3])
        except ValueError as exc:
            raise DistributionFormatError(f"line {lineno}: {exc}") from None
        for i, (v, c) in enumerate(zip(idx, header)):
            if not 0 <= v < c:
                raise DistributionFormatError(
                    f"line {lineno}: index {v} out of range for X{i + 1} (cardinality {c})")
        if prob < 0:
            raise DistributionFormatError(f"line {lineno}: negative probability {prob}")
        if idx in seen:
            raise DistributionFormatError(f"line {lineno}: duplicate cell {idx}")
        seen.add(idx)
        table[idx] = prob
    if header is None:
        raise DistributionFormatError("empty distribution file")
    total = float(table.sum())
    if abs(total - 1.0) > 1e-9:
        raise DistributionFormatError(f"probabilities sum to {total!r}, not 1 within 1e-9")
    return triple_from_table(table)


def load_distribution(path: str) -> JointPmf:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_distribution(fh.read())


def format_distribution(pmf: JointPmf) -> str:
    cards = [v.cardinality for v in pmf.variables]
    lines = [f"vars: X1={cards[0]} X2={cards[1]} X3={cards[2]}"]
    for idx in np.ndindex(*cards):
        p = float(pmf.table[idx])
        if p > 0.0:
            lines.append(f"{idx[0]} {idx[1]} {idx[2]} {p!r}")
    return "\n".join(lines) + "\n"


def write_distribution(pmf: JointPmf, path: str) -> None:
    _atomic_write(path, format_distribution(pmf))


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_manifest(outdir: str, subcommand: str, flags: dict, seeds, dist_path) -> None:
    manifest = {
        "schema": 1,
        "tool": "skregion",
        "version": _tool_version(),
        "subcommand": subcommand,
        # execution details (threads, output paths) never enter the
        # manifest: identical manifests must reproduce identical outputs
        "flags": {k: v for k, v in sorted(flags.items())},
        "seeds": list(seeds),
        "input_digest": _digest(dist_path) if dist_path else None,
    }
    _atomic_write(os.path.join(outdir, "manifest.json"), _json_text(manifest))


def _fmt_rate(x: float) -> str:
    return "0" if x == 0.0 else f"{x:.9f}"


def frontier_csv(frontier) -> str:
    lines = ["R1,R2"]
    for r1, r2 in frontier:
        lines.append(f"{_fmt_rate(r1)},{_fmt_rate(r2)}")
    return "\n".join(lines) + "\n"


def _cset_json(c) -> dict:
    return {
        "r1_max": c.r1_max,
        "r2_max": c.r2_max,
        "sum_max": None if c.sum_max == INF else c.sum_max,
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _parse_cards(text: str | None, base: JointPmf, bound: str) -> GridSpec:
    if text is None:
        return GridSpec.default_inner(base, 1)
    spec = {}
    for tok in text.split(","):
        key, _, val = tok.strip().partition("=")
        if key not in ("S", "T", "U", "V") or not val.isdigit():
            raise DistributionFormatError(f"bad --cards entry {tok!r}")
        spec[key] = int(val)
    return GridSpec(spec.get("S", 2), spec.get("T", 2), spec.get("U", 1), spec.get("V", 1), 1)


def cmd_region(args) -> int:
    base = load_distribution(args.dist)
    grid = _parse_cards(args.cards, base, args.bound)
    grid = GridSpec(grid.card_s, grid.card_t, grid.card_u, grid.card_v, args.grid_q)
    if args.bound == "explicit":
        cset = explicit_outer(base)
        frontier = pareto_frontier([cset])
        doc = {
            "schema": 1,
            "direction": args.direction,
            "bound": "explicit",
            "points": [{"constraints": _cset_json(cset), "channels": None}],
            "frontier": [[r1, r2] for r1, r2 in frontier],
            "meta": {"family": "explicit-outer"},
        }
    else:
        family = f"{args.direction}-{args.bound}"
        region = enumerate_region(base, family, grid, workers=args.threads or 0,
                                  hull=args.hull)
        doc = {
            "schema": 1,
            "direction": args.direction,
            "bound": args.bound,
            "points": [
                {"constraints": _cset_json(p.constraints), "channels": p.descriptor["channels"]}
                for p in region.points
            ],
            "frontier": [[r1, r2] for r1, r2 in region.frontier],
            "meta": region.meta,
        }
        if args.hull:
            doc["hull"] = [[x, y] for x, y in region.hull]
        frontier = region.frontier
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, "region", {
        "dist": os.path.basename(args.dist), "direction": args.direction,
        "bound": args.bound, "grid_q": args.grid_q, "cards": args.cards,
        "hull": args.hull,
    }, [], args.dist)
    _atomic_write(os.path.join(args.out, "frontier.csv"), frontier_csv(frontier))
    _atomic_write(os.path.join(args.out, "region.json"), _json_text(doc))
    print(f"wrote {args.out}/frontier.csv ({len(frontier)} vertices)")
    return EXIT_OK


def _default_channels(base: JointPmf, direction: str, rate2: float):
    """Default auxiliary layout: identity key channels, constant covers.

    A user with no key target (rate 0) gets a constant channel, which keeps
    its side of the protocol degenerate and the exact error enumeration
    cheap; a keying user gets the identity channel on its source.
    """
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    c3 = base.variable("X3").cardinality
    if direction == "forward":
        ch_s = Channel.identity("X1", c1, "S")
        if rate2 > 0.0:
            ch_t = Channel.identity("X2", c2, "T")
            card_t = c2
        else:
            ch_t = Channel.constant("T", "X2", c2)
            card_t = 1
        return (
            ch_s,
            ch_t,
            Channel.constant("U", "S", c1),
            Channel.constant("V", "T", card_t),
        )
    eye = np.eye(c3).reshape(c3, c3, 1)
    ch_st = Channel(("X3",), (VariableId("S", c3), VariableId("T", 1)), eye)
    ch_u = Channel(("S", "T"), (VariableId("U", 1),), np.ones((c3, 1, 1)))
    return (ch_st, ch_u)


def cmd_simulate(args) -> int:
    base = load_distribution(args.dist)
    channels = _default_channels(base, args.direction, args.rate2)
    eps_enc = args.eps_enc if args.eps_enc is not None else max(0.25, 2.0 * args.margin)
    eps_dec = args.eps_dec if args.eps_dec is not None else max(3.0, 2.0 * args.margin)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    config = SimConfig(
        base, args.direction, channels, args.n, args.rate1, args.rate2,
        args.margin, EpsParams(enc=eps_enc, dec=eps_dec), args.trials, seeds,
        args.mode if args.mode != "mc" else "mc",
    )
    if args.mode == "exact":
        config.mode = "exact"
        report = exact_report(config, workers=args.threads or 1)
    else:
        report = run_trials(config, workers=args.threads or 1)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, "simulate", {
        "dist": os.path.basename(args.dist), "direction": args.direction,
        "n": args.n, "rate1": args.rate1, "rate2": args.rate2,
        "margin": args.margin, "trials": args.trials, "mode": args.mode,
        "eps_enc": eps_enc, "eps_dec": eps_dec,
    }, seeds, args.dist)
    _atomic_write(os.path.join(args.out, "report.json"),
                  _json_text(report.to_json_dict()))
    print(report.summary_line())
    for warning in report.warnings:
        print(f"warning: {warning}")
    print(f"wall clock: {report.wall_clock:.2f}s")
    return EXIT_OK


def _case1_check(base, grid_q, tol, swapped=False):
    """Case-1 coincidence: backward deterministic point vs the segment.

    The forward strategy cannot reach the segment (its sum constraint binds
    strictly below it for non-degenerate chains), so coincidence is checked
    where it genuinely holds: backward inner against the explicit outer.
    """
    work = base
    if swapped:
        perm = work.table.transpose(1, 0, 2)
        work = triple_from_table(perm)
    region1 = case1_region(work, tol)
    segment_r2 = region1.points[0].constraints.r2_max
    c3 = work.variable("X3").cardinality
    grid = GridSpec(1, c3, 1, 1, grid_q)
    inner = enumerate_region(work, "backward-inner", grid)
    outer = explicit_outer(work)
    gap = region_gap(pareto_frontier([outer]), inner.constraint_sets)
    # the deterministic T = X3 point must attain the segment height exactly
    eye = np.eye(c3).reshape(c3, 1, c3)
    ch_st = Channel(("X3",), (VariableId("S", 1), VariableId("T", c3)), eye)
    ch_u = Channel(("S", "T"), (VariableId("U", 1),), np.ones((1, c3, 1)))
    point = backward_inner_point(AuxSystem.backward(work, ch_st, ch_u))
    point_err = abs(point.r2_max - segment_r2)
    passed = gap <= tol and point_err <= 1e-9
    return {
        "applicable": True,
        "segment_r2": segment_r2,
        "deterministic_point_r2": point.r2_max,
        "deterministic_point_error": point_err,
        "outer_to_inner_gap": gap,
        "pass": bool(passed),
    }


def _case2_check(base, grid_q, tol):
    region2 = case2_region(base, tol)
    rect = region2.points[0].constraints
    c1 = base.variable("X1").cardinality
    c2 = base.variable("X2").cardinality
    aux = AuxSystem.forward(
        base,
        Channel.identity("X1", c1, "S"), Channel.identity("X2", c2, "T"),
        Channel.constant("U", "S", c1), Channel.constant("V", "T", c2),
    )
    corner = forward_inner_point(aux)
    corner_err = max(abs(corner.r1_max - rect.r1_max), abs(corner.r2_max - rect.r2_max))
    grid = GridSpec(c1, c2, 1, 1, grid_q)
    inner = enumerate_region(base, "forward-inner", grid)
    gap = region_gap(pareto_frontier([rect]), inner.constraint_sets)
    passed = corner_err <= 1e-9 and gap <= tol
    return {
        "applicable": True,
        "rectangle": _cset_json(rect),
        "identity_corner": [corner.r1_max, corner.r2_max],
        "corner_error": corner_err,
        "outer_to_inner_gap": gap,
        "pass": bool(passed),
    }


def _case3_check(base, grid_q, tol):
    c3 = base.variable("X3").cardinality
    grid = GridSpec(c3, c3, 1, 1, grid_q)
    region3 = case3_region(base, grid, tol)
    outer = explicit_outer(base)
    contained = all(
        outer.contains(p.constraints.r1_max, p.constraints.r2_max, tol)
        for p in region3.points
    )
    return {
        "applicable": True,
        "frontier": [[x, y] for x, y in region3.frontier],
        "contained_in_explicit_outer": bool(contained),
        "meta": region3.meta,
        "pass": bool(contained),
    }


def cmd_verify(args) -> int:
    base = load_distribution(args.dist)
    diag = diagnose(base, args.tol)
    doc = {"schema": 1, "diagnosis": diag.as_dict()}
    failures = []
    chains = diag.chains
    doc["case1"] = (_case1_check(base, args.grid_q, args.tol)
                    if "X1-X2-X3" in chains else {"applicable": False})
    doc["case1_swapped"] = (_case1_check(base, args.grid_q, args.tol, swapped=True)
                            if "X2-X1-X3" in chains else {"applicable": False})
    doc["case2"] = (_case2_check(base, args.grid_q, args.tol)
                    if "X1-X3-X2" in chains else {"applicable": False})
    doc["case3"] = (_case3_check(base, args.grid_q, args.tol)
                    if "X1-X3-X2" in chains else {"applicable": False})
    for name in ("case1", "case1_swapped", "case2", "case3"):
        if doc[name].get("applicable") and not doc[name]["pass"]:
            failures.append(name)
    doc["pass"] = not failures
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, "verify", {
        "dist": os.path.basename(args.dist), "tol": args.tol, "grid_q": args.grid_q,
    }, [], args.dist)
    _atomic_write(os.path.join(args.out, "verify.json"), _json_text(doc))
    if failures:
        print(f"coincidence FAILED for: {', '.join(failures)}")
        return EXIT_COINCIDENCE
    applicable = [n for n in ("case1", "case1_swapped", "case2", "case3")
                  if doc[n].get("applicable")]
    if applicable:
        print(f"coincidence pass: {', '.join(applicable)}")
    else:
        print("no special case applies")
    return EXIT_OK


def cmd_lemmas(args) -> int:
    rng = np.random.default_rng(args.seed)
    slacks = []
    for _ in range(args.draws):
        joint = random_lemma3_joint(rng, args.n)
        _, slack = lemma3_check(joint, args.n)
        slacks.append(slack)
    violations = sum(1 for s in slacks if s < -1e-10)
    doc = {
        "schema": 1,
        "draws": args.draws,
        "n": args.n,
        "seed": args.seed,
        "min_slack": min(slacks) if slacks else None,
        "mean_slack": float(np.mean(slacks)) if slacks else None,
        "violations": violations,
    }
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, "lemmas", {
        "draws": args.draws, "n": args.n, "seed": args.seed,
    }, [args.seed], None)
    _atomic_write(os.path.join(args.out, "lemmas.json"), _json_text(doc))
    print(f"draws={args.draws} violations={violations}"
          + (f" min_slack={doc['min_slack']:.3e}" if slacks else ""))
    return EXIT_LEMMA if violations else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skregion",
        description="Secret-key rate regions and key-agreement simulation "
                    "for a three-user source model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("region", help="enumerate a rate-region bound")
    p.add_argument("--dist", required=True)
    p.add_argument("--direction", choices=("forward", "backward"), required=True)
    p.add_argument("--bound", choices=("inner", "outer", "explicit"), required=True)
    p.add_argument("--grid-q", type=int, default=1)
    p.add_argument("--cards", default=None, help="e.g. S=3,T=3,U=2,V=2")
    p.add_argument("--hull", action="store_true",
                   help="also emit the time-sharing (upper concave) hull")
    p.add_argument("--threads", type=int, default=0, help="0 = auto")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("simulate", help="run the key-agreement protocol")
    p.add_argument("--dist", required=True)
    p.add_argument("--direction", choices=("forward", "backward"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rate1", type=float, default=0.0)
    p.add_argument("--rate2", type=float, default=0.0)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seeds", default="1", help="comma-separated codebook seeds")
    p.add_argument("--mode", choices=("mc", "exact"), default="mc")
    p.add_argument("--eps-enc", type=float, default=None)
    p.add_argument("--eps-dec", type=float, default=None)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="validate special-case coincidences")
    p.add_argument("--dist", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--grid-q", type=int, default=1)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("lemmas", help="fuzz the chain-split inequality")
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_lemmas)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DistributionFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleRatesError as exc:
        print(f"error: infeasible rates: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ChainViolatedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COINCIDENCE


if __name__ == "__main__":
    sys.exit(main())
