"""Delimited-text tables and atomic artifact writes.

Tables are comma separated with a mandatory header row. Lines starting
with ``#`` before the header carry artifact metadata (for example the
master seed) and are ignored by the readers. Floats are written with
``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
import warnings

import numpy as np

from .preprocess import CLASS_NAMES, FEATURES, Telemetry

LABEL_COLUMNS = tuple(f"f_{c}" for c in CLASS_NAMES)
TELEMETRY_COLUMNS = ("chainage_m", "timestamp_s") + FEATURES
STRATA_COLUMNS = ("chainage_m", "class", "thickness_m")
PREDICTION_COLUMNS = (("chainage_m", "main_class") + LABEL_COLUMNS +
                      ("w_kriging_mean", "var_kriging_mean", "var_rf_mean"))


class TableError(ValueError):
    pass


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to a sibling temp file, then rename it over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else bytes(data)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_table(columns, rows, meta=None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k} = {v}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_table(path, columns, rows, meta=None) -> None:
    atomic_write(path, format_table(columns, rows, meta))


def read_table(path, required=(), optional=()):
    """``(columns dict of string lists, meta dict)``; unknown columns warn."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].partition("=")
        meta[key.strip()] = val.strip()
        i += 1
    if i >= len(lines):
        raise TableError(f"{path}: missing header row")
    reader = csv.reader(lines[i:])
    header = [h.strip() for h in next(reader)]
    missing = [c for c in required if c not in header]
    if missing:
        raise TableError(f"{path}: missing columns {','.join(missing)}")
    known = set(required) | set(optional)
    extra = [h for h in header if h not in known]
    if extra:
        warnings.warn(f"{path}: ignoring unknown columns {','.join(extra)}", stacklevel=2)
    cols = {h: [] for h in header}
    for lineno, row in enumerate(reader, start=i + 2):
        if not row:
            continue
        if len(row) != len(header):
            raise TableError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for h, v in zip(header, row):
            cols[h].append(v.strip())
    return cols, meta


def _floats(path, cols, name):
    try:
        return np.array([float(v) for v in cols[name]], dtype=float)
    except ValueError as e:
        raise TableError(f"{path}: column {name}: {e}") from None


def read_telemetry(path, require_labels: bool = False) -> Telemetry:
    cols, _ = read_table(path, TELEMETRY_COLUMNS, LABEL_COLUMNS)
    has = [c in cols for c in LABEL_COLUMNS]
    if any(has) and not all(has):
        raise TableError(f"{path}: label columns must be all of {','.join(LABEL_COLUMNS)}")
    if require_labels and not all(has):
        raise TableError(f"{path}: label columns {','.join(LABEL_COLUMNS)} are required")
    X = np.column_stack([_floats(path, cols, f) for f in FEATURES]) if cols["chainage_m"] \
        else np.zeros((0, len(FEATURES)))
    labels = None
    if all(has):
        labels = np.column_stack([_floats(path, cols, c) for c in LABEL_COLUMNS]) \
            if cols["chainage_m"] else np.zeros((0, len(LABEL_COLUMNS)))
    return Telemetry(_floats(path, cols, "chainage_m"), _floats(path, cols, "timestamp_s"), X, labels)


def format_telemetry(t: Telemetry, meta=None) -> str:
    columns = TELEMETRY_COLUMNS + (LABEL_COLUMNS if t.labels is not None else ())
    rows = []
    for i in range(len(t)):
        row = [t.chainage[i], t.timestamp[i], *t.X[i]]
        if t.labels is not None:
            row += list(t.labels[i])
        rows.append(row)
    return format_table(columns, rows, meta)


def write_telemetry(path, t: Telemetry, meta=None) -> None:
    atomic_write(path, format_telemetry(t, meta))


def read_strata(path):
    """``(chainage, class index, thickness)`` arrays; classes given as I..VI."""
    from .preprocess import class_index

    cols, _ = read_table(path, STRATA_COLUMNS)
    try:
        cls = np.array([class_index(c) for c in cols["class"]], dtype=np.int64)
    except ValueError as e:
        raise TableError(f"{path}: column class: {e}") from None
    return _floats(path, cols, "chainage_m"), cls, _floats(path, cols, "thickness_m")


def read_samples(path):
    cols, _ = read_table(path, ("chainage_m", "value"))
    return _floats(path, cols, "chainage_m"), _floats(path, cols, "value")


def read_predictions(path):
    cols, meta = read_table(path, PREDICTION_COLUMNS)
    out = {c: _floats(path, cols, c) for c in PREDICTION_COLUMNS if c != "main_class"}
    out["main_class"] = np.array(cols["main_class"])
    return out, meta
