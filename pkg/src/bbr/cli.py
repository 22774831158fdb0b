"""``bbr`` command line: gen | phi | bogolyubov | pipeline | verify.

Exit codes: 0 pass, 1 certificate failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import formats
from .bogolyubov import bogolyubov_subspace
from .gf import BilinearForm, random_subspace
from .phi import DEFAULT_WORD, GridSet, Word, count_table, phi_robust, phi_word
from .pipeline import BilinearVariety, PipelineConfig, run_pipeline, run_pipeline_robust
from .setlab import DenseSet
from .verify import digit_string, verify

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _fraction(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None
    return value


def _codims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"codims must be comma-separated integers: {text!r}") from None


def _load_set(path, args) -> DenseSet | GridSet:
    A = formats.parse_set(formats.read_text(path))
    m = getattr(A, "m", None)
    for name, have in (("p", A.p), ("n", A.n), ("m", m)):
        want = getattr(args, name, None)
        if want is not None and want != have:
            raise UsageError(f"--{name} {want} does not match the file header ({name}={have})")
    return A


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        formats.write_text(out, text)


# ---------------------------------------------------------------------------
# generators


def planted_variety(p: int, m: int, n: int, codims, deletion: float, rng) -> tuple[GridSet, BilinearVariety]:
    """``{x in V0, y in W0, x^T M_i y = 0}`` with a ``deletion`` fraction of its points removed."""
    r1, r2, r3 = codims
    V0 = random_subspace(p, m, r1, rng)
    W0 = random_subspace(p, n, r2, rng)
    forms = []
    while len(forms) < r3:
        M = rng.integers(0, p, size=(m, n))
        if M.any():
            forms.append(BilinearForm(M, p))
    B0 = BilinearVariety(V0, W0, forms)
    mask = B0.mask().reshape(-1)
    members = np.flatnonzero(mask)
    drop = int(round(deletion * len(members)))
    if drop:
        mask[rng.choice(members, size=drop, replace=False)] = False
    return GridSet(p, m, n, mask.reshape(p**m, p**n)), B0


def generate(args) -> DenseSet | GridSet:
    rng = np.random.default_rng(args.seed)
    kind = args.kind
    if kind in ("graph", "from_file"):
        if not args.base:
            raise UsageError(f"--kind {kind} needs --base")
        base = formats.parse_set(formats.read_text(args.base))
        if kind == "from_file":
            return base
        if not isinstance(base, DenseSet):
            raise UsageError("--kind graph needs a linear base set")
        if args.m is None:
            raise UsageError("--kind graph needs --m")
        return GridSet(base.p, args.m, base.n, np.outer(np.ones(base.p**args.m, dtype=bool), base.mask))
    if args.n is None:
        raise UsageError(f"--kind {kind} needs --n")
    p, n, m = args.p, args.n, args.m
    if kind == "random":
        if not 0 <= args.density <= 1:
            raise UsageError("--density must lie in [0, 1]")
        if m is None:
            return DenseSet.random(p, n, args.density, rng)
        return GridSet.random(p, m, n, args.density, rng)
    if m is None:
        raise UsageError(f"--kind {kind} needs --m")
    if kind == "product":
        c = args.codims or (1, 1)
        if len(c) != 2:
            raise UsageError("product needs --codims r1,r2")
        return GridSet.product(random_subspace(p, m, c[0], rng), random_subspace(p, n, c[1], rng))
    if kind == "planted_variety":
        c = args.codims or (1, 1, 1)
        if len(c) != 3:
            raise UsageError("planted_variety needs --codims r1,r2,r3")
        return planted_variety(p, m, n, c, args.deletion, rng)[0]
    raise UsageError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    A = generate(args)
    _emit(formats.format_set(A, "mask" if args.mask else "points"), args.out)
    return EXIT_PASS


def cmd_phi(args) -> int:
    A = _load_set(args.set_file, args)
    if not isinstance(A, GridSet):
        raise UsageError("phi needs a grid set")
    w = Word.parse(args.word)
    mode = "exact" if args.mode == "exact" else "normalized"
    if args.table:
        _emit(formats.format_count_csv(count_table(A, w, mode)), args.out)
    elif args.eps is not None:
        _emit(formats.format_set(phi_robust(A, w, args.eps, mode)), args.out)
    else:
        _emit(formats.format_set(phi_word(A, w)), args.out)
    return EXIT_PASS


def cmd_bogolyubov(args) -> int:
    A = _load_set(args.set_file, args)
    if not isinstance(A, DenseSet):
        raise UsageError("bogolyubov needs a linear set")
    if A.size == 0:
        raise UsageError("bogolyubov needs a nonempty set")
    V, cert = bogolyubov_subspace(A, args.rho)
    if args.out:
        formats.write_text(args.out, formats.format_subspace(V))
    sys.stdout.write(json.dumps(cert.to_dict(), indent=2) + "\n")
    return EXIT_PASS if cert.passed else EXIT_FAIL


def cmd_pipeline(args) -> int:
    A = _load_set(args.set_file, args)
    if not isinstance(A, GridSet):
        raise UsageError("pipeline needs a grid set")
    if A.size == 0:
        raise UsageError("pipeline needs a nonempty set")
    config = PipelineConfig(
        word=str(Word.parse(args.word)),
        seed=args.seed,
        samples=args.samples,
        t_max=args.t_max,
        arithmetic=args.mode,
        timings=args.timings,
    )
    run = run_pipeline_robust if args.robust else run_pipeline
    B, report = run(A, config)
    _emit(formats.format_report(report), args.out)
    variety_path = args.variety
    if variety_path is None and args.out not in (None, "-"):
        variety_path = str(Path(args.out).with_suffix(".variety"))
    if variety_path:
        formats.write_text(variety_path, formats.format_variety(B))
    return EXIT_PASS if report["certificate"]["pass"] else EXIT_FAIL


def cmd_verify(args) -> int:
    B = formats.parse_variety(formats.read_text(args.variety_file))
    A = _load_set(args.set_file, args)
    if not isinstance(A, GridSet):
        raise UsageError("verify needs a grid set")
    res = verify(B, A, str(Word.parse(args.word)), args.eps)
    _emit(json.dumps(res.to_dict(), indent=2) + "\n", args.out)
    if not res.passed:
        x, y = res.witness
        sys.stderr.write(f"FAIL at x={digit_string(x)} y={digit_string(y)}\n")
    return EXIT_PASS if res.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=int, default=None, help="field size (checked against set headers)")
    common.add_argument("--n", type=int, default=None, help="y-side dimension")
    common.add_argument("--m", type=int, default=None, help="x-side dimension")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--word", default=str(DEFAULT_WORD), help="operator word over {h,v}, last letter applied first")
    common.add_argument("--eps", type=_fraction, default=None, help="robust threshold, e.g. 1/64")
    common.add_argument("--mode", choices=("exact", "float"), default="exact", help="arithmetic mode")
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")

    parser = argparse.ArgumentParser(prog="bbr", description="Bilinear Bogolyubov toolkit over F_p.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a set file")
    g.add_argument("--kind", choices=("random", "product", "planted_variety", "graph", "from_file"), default="random")
    g.add_argument("--density", type=float, default=0.4)
    g.add_argument("--codims", type=_codims, default=None, help="r1,r2 (product) or r1,r2,r3 (planted_variety)")
    g.add_argument("--deletion", type=float, default=0.1)
    g.add_argument("--base", default=None, help="input set for graph and from_file")
    g.add_argument("--mask", action="store_true", help="write p=2 linear sets as hex mask rows")
    g.set_defaults(func=cmd_gen, p=2)

    ph = sub.add_parser("phi", parents=[common], help="apply phi_w, phi_w^eps, or write the count table")
    ph.add_argument("set_file")
    ph.add_argument("--table", action="store_true", help="write the CSV count table")
    ph.set_defaults(func=cmd_phi)

    b = sub.add_parser("bogolyubov", parents=[common], help="spectral subspace inside 2A-2A")
    b.add_argument("set_file")
    b.add_argument("--rho", type=_fraction, default=None, help="spectrum threshold (default sqrt(alpha/2))")
    b.set_defaults(func=cmd_bogolyubov)

    pl = sub.add_parser("pipeline", parents=[common], help="build and certify a bilinear variety")
    pl.add_argument("set_file")
    pl.add_argument("--robust", action="store_true", help="robust variant with a measured eps")
    pl.add_argument("--samples", type=int, default=512)
    pl.add_argument("--t-max", type=int, default=64)
    pl.add_argument("--timings", action="store_true", help="record wall-clock timings in the report")
    pl.add_argument("--variety", default=None, help="variety output path (default: next to --out)")
    pl.set_defaults(func=cmd_pipeline)

    v = sub.add_parser("verify", parents=[common], help="independently recount and check a variety")
    v.add_argument("variety_file")
    v.add_argument("set_file")
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, formats.FormatError, ValueError) as exc:
        sys.stderr.write(f"bbr {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
