"""Instance and trace serialization.

* MPS (free or fixed format, binary problems only) is converted to the
  canonical ``min / <= / {0,1}`` form on read.
* Canonical JSON (schema ``ilp-canonical/1``) is a lossless dump of an
  :class:`~ilptemper.core.IlpInstance` with the matrix as parallel
  ``rows``/``cols``/``vals`` arrays.
* Run traces are CSV with 17 significant digits, so every float survives a
  write/read cycle exactly.
"""

import csv
import io as _io
import json
import math
import os
import pathlib

import numpy as np

from .core import build_instance
from .errors import (
    IlpValueError,
    IoFailure,
    MissingObjectiveRow,
    NonBinaryVariable,
    ParseError,
    SchemaVersionMismatch,
    UnsupportedSection,
    ValidationError,
)
from .tempering import TraceRecord

SCHEMA = "ilp-canonical/1"
TRACE_HEADER = ("wall_seconds", "step", "incumbent_obj", "best_energy", "feasible_found")


def _fmt(v):
    return format(float(v), ".17g")


def _read_text(source):
    """Accept text, bytes, a path-like or a stream; return (text, origin)."""
    if isinstance(source, bytes):
        return source.decode("utf-8"), None
    if isinstance(source, os.PathLike):
        source = os.fspath(source)
        try:
            with open(source, encoding="utf-8") as fh:
                return fh.read(), source
        except OSError as e:
            raise IoFailure(f"cannot read {source}: {e.strerror or e}") from e
    if isinstance(source, str):
        return source, None
    data = source.read()
    return (data.decode("utf-8") if isinstance(data, bytes) else data), getattr(source, "name", None)


# ---- MPS -------------------------------------------------------------------

_INF = 1e30


class _Tok:
    """Whitespace tokens of one line with their 1-based columns."""

    def __init__(self, line, lineno):
        self.lineno = lineno
        self.items = []
        pos = 0
        for part in line.split():
            pos = line.index(part, pos)
            self.items.append((part, pos + 1))
            pos += len(part)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i][0]

    def col(self, i):
        return self.items[i][1] if i < len(self.items) else None

    def error(self, cls, msg, i=0):
        return cls(msg, self.lineno, self.col(i))

    def number(self, i):
        try:
            v = float(self[i])
        except ValueError:
            raise self.error(ParseError, f"expected a number, got {self[i]!r}", i) from None
        if not math.isfinite(v):
            raise self.error(ParseError, f"non-finite value {self[i]!r}", i)
        return v


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_mps(source, name=None):
    """Parse a binary MPS model into a canonical instance.

    Rows of type L are kept, G rows are negated and E rows become a pair of
    opposite inequalities.  Every column must be binary: inside an
    ``INTORG``/``INTEND`` block with bounds within [0, 1] (the default), or
    declared ``BV``.  Bounds that fix a binary (``FX``, ``LO 1``, ``UP 0``)
    become extra rows.  ``OBJSENSE MAX`` negates the objective.  A constant
    on the objective row is dropped and recorded in ``metadata``.
    """
    text, origin = _read_text(source)
    model_name = ""
    sense = "MIN"
    obj_row = None
    row_type = {}  # name -> sense letter
    row_order = []
    col_index = {}
    col_integer = []
    col_tok = []
    entries = {}  # (row, col) -> value
    rhs = {}
    obj_constant = 0.0
    lo = {}
    up = {}
    bv = set()
    section = None
    in_int = False
    ended = False
    last_col = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith(("*", "$")):
            continue
        tok = _Tok(raw, lineno)
        if ended:
            raise tok.error(ParseError, "content after ENDATA")
        if not raw[0].isspace():
            head = tok[0].upper()
            if head == "NAME":
                model_name = " ".join(tok[i] for i in range(1, len(tok)))
                section = "NAME"
                continue
            if head in ("RANGES", "SOS"):
                raise tok.error(UnsupportedSection, f"{head} section is not supported")
            if head == "OBJSENSE":
                section = "OBJSENSE"
                if len(tok) > 1:
                    sense = _parse_sense(tok, 1)
                continue
            if head in ("ROWS", "COLUMNS", "RHS", "BOUNDS"):
                if len(tok) > 1:
                    raise tok.error(ParseError, f"unexpected token after {head}", 1)
                section = head
                continue
            if head == "ENDATA":
                ended = True
                continue
            raise tok.error(ParseError, f"unknown section {tok[0]!r}")

        if section == "OBJSENSE":
            sense = _parse_sense(tok, 0)
        elif section == "ROWS":
            if len(tok) != 2:
                raise tok.error(ParseError, "ROWS entries need a type and a name")
            kind = tok[0].upper()
            if kind not in ("N", "L", "G", "E"):
                raise tok.error(ParseError, f"unknown row type {tok[0]!r}")
            rname = tok[1]
            if rname in row_type:
                raise tok.error(ParseError, f"row {rname!r} declared twice", 1)
            if kind == "N":
                if obj_row is None:
                    obj_row = rname
                    row_type[rname] = "N"
                else:
                    # further free rows carry no constraint
                    row_type[rname] = "n"
                continue
            row_type[rname] = kind
            row_order.append(rname)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                mark = tok[2].strip("'").upper()
                if mark == "INTORG":
                    in_int = True
                elif mark == "INTEND":
                    in_int = False
                else:
                    raise tok.error(ParseError, f"unknown marker {tok[2]!r}", 2)
                continue
            if len(tok) not in (3, 5):
                raise tok.error(ParseError, "COLUMNS entries need a column and 1 or 2 (row, value) pairs")
            cname = tok[0]
            if cname not in col_index:
                col_index[cname] = len(col_integer)
                col_integer.append(in_int)
                col_tok.append(tok)
            elif cname != last_col:
                raise tok.error(ParseError, f"entries of column {cname!r} are not contiguous")
            last_col = cname
            j = col_index[cname]
            for i in (1, 3)[: (len(tok) - 1) // 2]:
                rname = tok[i]
                if rname not in row_type:
                    raise tok.error(ParseError, f"undeclared row {rname!r}", i)
                if (rname, j) in entries:
                    raise tok.error(ParseError, f"duplicate entry for ({rname}, {cname})", i)
                entries[(rname, j)] = tok.number(i + 1)
        elif section == "RHS":
            if len(tok) not in (2, 3, 4, 5):
                raise tok.error(ParseError, "malformed RHS entry")
            start = 1 if len(tok) % 2 == 1 else 0
            for i in range(start, len(tok), 2):
                rname = tok[i]
                if rname not in row_type:
                    raise tok.error(ParseError, f"undeclared row {rname!r}", i)
                v = tok.number(i + 1)
                if row_type[rname] == "N":
                    obj_constant = v
                elif row_type[rname] != "n":
                    rhs[rname] = v
        elif section == "BOUNDS":
            _parse_bound(tok, col_index, lo, up, bv)
        else:
            raise tok.error(ParseError, "data line outside of a section")

    if obj_row is None:
        raise MissingObjectiveRow("no objective (N) row declared")
    if not col_index:
        raise ValidationError("model has no columns")

    n = len(col_index)
    names = list(col_index)
    c = np.zeros(n)
    for (rname, j), v in entries.items():
        if rname == obj_row:
            c[j] = v
    if sense == "MAX":
        c = -c

    extra = []  # (col, coefficient, rhs) rows from bounds that fix a binary
    for j, cname in enumerate(names):
        if not (col_integer[j] or j in bv):
            raise col_tok[j].error(NonBinaryVariable, f"column {cname!r} is continuous")
        l, u = lo.get(j, 0.0), up.get(j, 1.0)
        if l <= -1 or u >= 2 or l > u or l > 1 or u < 0:
            raise col_tok[j].error(
                NonBinaryVariable, f"column {cname!r} has bounds [{l:g}, {u:g}] beyond [0, 1]")
        # integer bounds inside (-1, 2) leave {0,1} intersected with [l, u]
        if l > 0:
            extra.append((j, -1.0, -1.0))  # x >= 1
        if u < 1:
            extra.append((j, 1.0, 0.0))  # x <= 0

    rows, cols, vals, b = [], [], [], []
    by_row = {}
    for (rname, j), v in entries.items():
        if row_type[rname] in ("L", "G", "E"):
            by_row.setdefault(rname, []).append((j, v))

    def emit(items, sign, r):
        k = len(b)
        for j, v in items:
            rows.append(k)
            cols.append(j)
            vals.append(sign * v)
        b.append(sign * r)

    for rname in row_order:
        items = sorted(by_row.get(rname, []))
        r = rhs.get(rname, 0.0)
        kind = row_type[rname]
        if kind in ("L", "E"):
            emit(items, 1.0, r)
        if kind in ("G", "E"):
            emit(items, -1.0, r)
    for j, coef, r in extra:
        emit([(j, coef)], 1.0, r)

    meta = {"source_format": "mps", "sense": sense, "columns": ",".join(names)}
    if origin:
        meta["source"] = origin
    if obj_constant != 0.0:
        meta["objective_constant_dropped"] = _fmt(obj_constant)
    try:
        return build_instance(n, len(b), c, (np.array(rows, dtype=np.int64),
                                             np.array(cols, dtype=np.int64),
                                             np.array(vals, dtype=np.float64)),
                              b, name=name or model_name, metadata=meta)
    except IlpValueError as e:
        raise ValidationError(str(e)) from e


def _parse_sense(tok, i):
    word = tok[i].upper()
    if word in ("MAX", "MAXIMIZE"):
        return "MAX"
    if word in ("MIN", "MINIMIZE"):
        return "MIN"
    raise tok.error(ParseError, f"unknown objective sense {tok[i]!r}", i)


def _parse_bound(tok, col_index, lo, up, bv):
    if len(tok) < 2:
        raise tok.error(ParseError, "malformed BOUNDS entry")
    kind = tok[0].upper()
    if kind not in ("UP", "LO", "FX", "BV", "MI", "PL", "FR", "LI", "UI"):
        raise tok.error(ParseError, f"unknown bound type {tok[0]!r}")
    needs_value = kind not in ("BV", "MI", "PL", "FR")
    # an optional bound-set name precedes the column
    if needs_value:
        if len(tok) == 4:
            ci = 2
        elif len(tok) == 3:
            ci = 1
        else:
            raise tok.error(ParseError, f"{kind} bound needs a column and a value")
    else:
        if len(tok) == 2:
            ci = 1
        elif len(tok) == 3:
            ci = 1 if (tok[1] in col_index and _is_number(tok[2])) else 2
        elif len(tok) == 4:
            ci = 2
        else:
            raise tok.error(ParseError, f"malformed {kind} bound")
    cname = tok[ci]
    if cname not in col_index:
        raise tok.error(ParseError, f"bound on undeclared column {cname!r}", ci)
    j = col_index[cname]
    if kind in ("MI", "FR"):
        raise tok.error(NonBinaryVariable, f"column {cname!r} is unbounded below")
    if kind == "PL":
        up[j] = _INF
        return
    if kind == "BV":
        bv.add(j)
        return
    v = tok.number(ci + 1)
    if kind in ("UP", "UI"):
        up[j] = v
    elif kind in ("LO", "LI"):
        lo[j] = v
    else:
        lo[j] = up[j] = v


def write_mps(inst, sink=None):
    """Serialize as free-format MPS with every column a BV-bounded integer.

    Returns the text when ``sink`` is None, otherwise writes to a path or
    text stream.
    """
    out = _io.StringIO()
    out.write(f"NAME {inst.name or 'ilp'}\n")
    out.write("ROWS\n N obj\n")
    for k in range(inst.m):
        out.write(f" L r{k}\n")
    out.write("COLUMNS\n    MARKER 'MARKER' 'INTORG'\n")
    for j in range(inst.n):
        rws, vs = inst.column(j)
        if inst.c[j] != 0.0 or rws.size == 0:
            out.write(f"    x{j} obj {_fmt(inst.c[j])}\n")
        for r, v in zip(rws, vs):
            out.write(f"    x{j} r{r} {_fmt(v)}\n")
    out.write("    MARKER 'MARKER' 'INTEND'\n")
    out.write("RHS\n")
    for k in range(inst.m):
        if inst.b[k] != 0.0:
            out.write(f"    rhs r{k} {_fmt(inst.b[k])}\n")
    out.write("BOUNDS\n")
    for j in range(inst.n):
        out.write(f" BV bnd x{j}\n")
    out.write("ENDATA\n")
    return _emit(out.getvalue(), sink)


def _emit(text, sink):
    if sink is None:
        return text
    if isinstance(sink, (str, os.PathLike)):
        try:
            with open(sink, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as e:
            raise IoFailure(f"cannot write {os.fspath(sink)}: {e.strerror or e}") from e
        return None
    try:
        if isinstance(sink, (_io.RawIOBase, _io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
            sink.write(text.encode("utf-8"))
        else:
            sink.write(text)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return None


# ---- canonical JSON ----------------------------------------------------------

def write_canonical(inst):
    """Instance as a JSON-ready dict."""
    rows, cols, vals = inst.triplets()
    return {
        "schema": SCHEMA,
        "name": inst.name,
        "n": inst.n,
        "m": inst.m,
        "c": [float(v) for v in inst.c],
        "b": [float(v) for v in inst.b],
        "rows": rows.tolist(),
        "cols": cols.tolist(),
        "vals": [float(v) for v in vals],
        "metadata": {str(k): str(v) for k, v in inst.metadata.items()},
    }


def dumps_canonical(inst):
    return json.dumps(write_canonical(inst), separators=(",", ":"), sort_keys=True) + "\n"


def read_canonical(doc):
    """Inverse of :func:`write_canonical`; accepts a dict or JSON text."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, e.lineno, e.colno) from e
    if not isinstance(doc, dict):
        raise ValidationError("canonical document must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise SchemaVersionMismatch(f"expected schema {SCHEMA!r}, got {doc.get('schema')!r}")
    missing = [k for k in ("n", "m", "c", "b", "rows", "cols", "vals") if k not in doc]
    if missing:
        raise ValidationError(f"missing fields: {', '.join(missing)}")
    if not (len(doc["rows"]) == len(doc["cols"]) == len(doc["vals"])):
        raise ValidationError("rows, cols and vals differ in length")
    meta = doc.get("metadata") or {}
    if not isinstance(meta, dict):
        raise ValidationError("metadata must be an object")
    try:
        return build_instance(
            doc["n"], doc["m"], doc["c"],
            (np.asarray(doc["rows"], dtype=np.int64).reshape(-1),
             np.asarray(doc["cols"], dtype=np.int64).reshape(-1),
             np.asarray(doc["vals"], dtype=np.float64).reshape(-1)),
            doc["b"], name=doc.get("name", ""), metadata=meta)
    except (IlpValueError, TypeError, ValueError) as e:
        raise ValidationError(str(e)) from e


def save_instance(inst, path):
    """Write canonical JSON, or MPS when the path ends in ``.mps``."""
    if str(path).lower().endswith(".mps"):
        return write_mps(inst, path)
    return _emit(dumps_canonical(inst), path)


def load_instance(path):
    """Read canonical JSON or (by extension) MPS from ``path``."""
    path = os.fspath(path)
    text, _ = _read_text(pathlib.Path(path))
    if path.lower().endswith(".mps"):
        inst = read_mps(text)
        inst.metadata.setdefault("source", path)
        return inst
    return read_canonical(text)


# ---- traces ------------------------------------------------------------------

def write_trace(records, sink=None):
    """CSV of trace records; returns the text when ``sink`` is None."""
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in records:
        w.writerow((
            _fmt(r.wall_seconds),
            int(r.step),
            "" if r.incumbent_obj is None else _fmt(r.incumbent_obj),
            _fmt(r.best_energy),
            "true" if r.feasible_found else "false",
        ))
    return _emit(out.getvalue(), sink)


def read_trace(source):
    text, _ = _read_text(source)
    reader = csv.reader(_io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TRACE_HEADER:
        raise ParseError(f"trace header must be {','.join(TRACE_HEADER)}", 1, 1)
    out = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 5:
            raise ParseError(f"expected 5 fields, got {len(row)}", lineno, 1)
        try:
            flag = {"true": True, "false": False}[row[4]]
            out.append(TraceRecord(float(row[0]), int(row[1]),
                                   None if row[2] == "" else float(row[2]),
                                   float(row[3]), flag))
        except (KeyError, ValueError) as e:
            raise ParseError(f"bad trace field: {e}", lineno, 1) from e
    return out
