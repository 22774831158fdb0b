"""Text formats for sets, subspaces, varieties, count tables and reports.

Vectors are written as digit strings with the least significant coordinate
first (``x_0 x_1 ...``); digits above 9 use ``a-z``.  Membership masks
(``p = 2`` linear sets only) are hex rows of 64 indices each, bit ``i`` of a
row being index ``64 * row + i``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gf import BilinearForm, FieldParams, Subspace, point_digits, to_index
from .phi import CountTable, GridSet
from .setlab import DenseSet

DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"
MASK_ROW = 64


class FormatError(ValueError):
    pass


def _digits(v) -> str:
    return "".join(DIGITS[int(c)] for c in v)


def _parse_digits(text: str, p: int, n: int) -> np.ndarray:
    if len(text) != n:
        raise FormatError(f"expected {n} digits, got {text!r}")
    try:
        out = np.array([DIGITS.index(c) for c in text.lower()], dtype=np.int64)
    except ValueError:
        raise FormatError(f"bad digit in {text!r}") from None
    if n and out.max() >= p:
        raise FormatError(f"digit out of range for p={p} in {text!r}")
    return out


def _parse_header(line: str) -> dict:
    fields = {}
    for tok in line.split():
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        fields[key] = val
    for key in ("p", "n", "m"):
        if key in fields:
            try:
                fields[key] = int(fields[key])
            except ValueError:
                raise FormatError(f"header field {key} must be an integer") from None
    if "p" not in fields or "kind" not in fields:
        raise FormatError("header needs p= and kind=")
    return fields


def _lines(text: str) -> list[str]:
    return [ln.rstrip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


# ---------------------------------------------------------------------------
# sets


def format_set(A: DenseSet | GridSet, style: str = "points") -> str:
    """Shared set format; ``style='mask'`` is allowed for ``p = 2`` linear sets."""
    if isinstance(A, GridSet):
        if style != "points":
            raise FormatError("grid sets are written as points")
        out = [f"p={A.p} n={A.n} m={A.m} kind=grid", "points:"]
        dx, dy = point_digits(A.p, A.m), point_digits(A.p, A.n)
        for x, y in zip(*np.nonzero(A.mask)):
            out.append(f"{_digits(dx[x])} {_digits(dy[y])}")
        return "\n".join(out) + "\n"
    out = [f"p={A.p} n={A.n} kind=linear"]
    if style == "mask":
        if A.p != 2:
            raise FormatError("mask rows are only defined for p=2")
        out.append("mask:")
        bits = A.mask.astype(np.uint64)
        for start in range(0, bits.size, MASK_ROW):
            chunk = bits[start : start + MASK_ROW]
            word = int(sum(int(b) << i for i, b in enumerate(chunk)))
            out.append(f"{word:016x}")
        return "\n".join(out) + "\n"
    if style != "points":
        raise FormatError(f"unknown set style {style!r}")
    out.append("points:")
    digits = point_digits(A.p, A.n)
    out.extend(_digits(digits[i]) for i in A.indices())
    return "\n".join(out) + "\n"


def parse_set(text: str) -> DenseSet | GridSet:
    lines = _lines(text)
    if not lines:
        raise FormatError("empty set file")
    head = _parse_header(lines[0])
    p, kind = head["p"], head["kind"]
    if "n" not in head:
        raise FormatError("header needs n=")
    n = head["n"]
    try:
        FieldParams(p, n)
        if "m" in head:
            FieldParams(p, head["m"])
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if len(lines) < 2:
        raise FormatError("missing points: or mask: section")
    section, body = lines[1].strip(), lines[2:]
    if kind == "grid":
        if "m" not in head:
            raise FormatError("grid sets need m=")
        m = head["m"]
        if section != "points:":
            raise FormatError("grid sets must use a points: section")
        pairs = []
        for ln in body:
            parts = ln.split()
            if len(parts) != 2:
                raise FormatError(f"grid point needs two digit strings: {ln!r}")
            pairs.append((to_index(_parse_digits(parts[0], p, m), p), to_index(_parse_digits(parts[1], p, n), p)))
        return GridSet.from_index_pairs(pairs, p, m, n)
    if kind != "linear":
        raise FormatError(f"unknown set kind {kind!r}")
    if section == "points:":
        pts = [to_index(_parse_digits(ln.strip(), p, n), p) for ln in body]
        return DenseSet.from_indices(pts, p, n)
    if section == "mask:":
        if p != 2:
            raise FormatError("mask rows are only defined for p=2")
        size = p**n
        rows = (size + MASK_ROW - 1) // MASK_ROW
        if len(body) != rows:
            raise FormatError(f"expected {rows} mask rows, got {len(body)}")
        mask = np.zeros(rows * MASK_ROW, dtype=bool)
        for r, ln in enumerate(body):
            try:
                word = int(ln.strip(), 16)
            except ValueError:
                raise FormatError(f"bad mask row {ln!r}") from None
            for i in range(MASK_ROW):
                mask[r * MASK_ROW + i] = (word >> i) & 1
        if mask[size:].any():
            raise FormatError("mask sets bits beyond the ambient")
        return DenseSet(p, n, mask[:size])
    raise FormatError(f"unknown section {section!r}")


# ---------------------------------------------------------------------------
# subspaces and varieties


def _basis_block(tag: str, S: Subspace) -> list[str]:
    return [f"{tag}: dim={S.dim}"] + [_digits(v) for v in S.basis]


def _read_basis(lines: list[str], pos: int, tag: str, p: int, n: int) -> tuple[Subspace, int]:
    head = lines[pos].split()
    if len(head) != 2 or head[0] != f"{tag}:" or not head[1].startswith("dim="):
        raise FormatError(f"expected '{tag}: dim=<d>' at line {pos + 1}")
    dim = int(head[1][4:])
    rows = [_parse_digits(ln.strip(), p, n) for ln in lines[pos + 1 : pos + 1 + dim]]
    if len(rows) != dim:
        raise FormatError(f"{tag} basis is truncated")
    S = Subspace.span(np.array(rows, dtype=np.int64).reshape(dim, n), p, n)
    if S.dim != dim:
        raise FormatError(f"{tag} basis rows are dependent")
    return S, pos + 1 + dim


def format_subspace(S: Subspace) -> str:
    return "\n".join([f"p={S.p} n={S.n} kind=subspace"] + _basis_block("basis", S)) + "\n"


def parse_subspace(text: str) -> Subspace:
    lines = _lines(text)
    head = _parse_header(lines[0])
    if head["kind"] != "subspace":
        raise FormatError("not a subspace file")
    S, pos = _read_basis(lines, 1, "basis", head["p"], head["n"])
    if pos != len(lines):
        raise FormatError("trailing lines after the basis")
    return S


def format_variety(B) -> str:
    out = [f"p={B.p} n={B.n} m={B.m} kind=variety"]
    out += _basis_block("V", B.V)
    out += _basis_block("W", B.W)
    out.append(f"forms: count={len(B.forms)}")
    for i, b in enumerate(B.forms):
        out.append(f"form {i}:")
        out.extend(_digits(row) for row in b.matrix)
    return "\n".join(out) + "\n"


def parse_variety(text: str):
    from .pipeline import BilinearVariety

    lines = _lines(text)
    if not lines:
        raise FormatError("empty variety file")
    head = _parse_header(lines[0])
    if head["kind"] != "variety" or "m" not in head or "n" not in head:
        raise FormatError("not a variety file")
    p, m, n = head["p"], head["m"], head["n"]
    try:
        V, pos = _read_basis(lines, 1, "V", p, m)
        W, pos = _read_basis(lines, pos, "W", p, n)
        tag = lines[pos].split()
        if len(tag) != 2 or tag[0] != "forms:" or not tag[1].startswith("count="):
            raise FormatError("expected 'forms: count=<k>'")
        count = int(tag[1][6:])
        pos += 1
        forms = []
        for i in range(count):
            if lines[pos].strip() != f"form {i}:":
                raise FormatError(f"expected 'form {i}:'")
            rows = [_parse_digits(ln.strip(), p, n) for ln in lines[pos + 1 : pos + 1 + m]]
            if len(rows) != m:
                raise FormatError(f"form {i} is truncated")
            forms.append(BilinearForm(np.array(rows), p))
            pos += 1 + m
    except IndexError:
        raise FormatError("variety file is truncated") from None
    if pos != len(lines):
        raise FormatError("trailing lines after the forms")
    return BilinearVariety(V, W, forms)


# ---------------------------------------------------------------------------
# tables and reports


def format_count_csv(table: CountTable) -> str:
    out = ["x_index,y_index,count_or_density"]
    vals = table.values
    for x in range(vals.shape[0]):
        for y in range(vals.shape[1]):
            v = vals[x, y]
            out.append(f"{x},{y},{int(v) if table.mode == 'exact' else repr(float(v))}")
    return "\n".join(out) + "\n"


def format_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def parse_report(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"report is not valid JSON: {exc}") from None


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
