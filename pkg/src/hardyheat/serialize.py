"""Decimal-string JSON, RFC 4180 CSV and atomic file writes."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from gmpy2 import mpfr

_MPFR = type(mpfr(0))


def decimal(v) -> str:
    """Shortest round-tripping decimal text: every digit of an mpfr, repr of a double."""
    if isinstance(v, _MPFR):
        return str(v)
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def encode(obj):
    """Recursively replace numbers by decimal strings; ints and bools pass through."""
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [encode(v) for v in obj.tolist()]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating, _MPFR)):
        return decimal(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    return json.dumps(encode(obj), indent=2) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, (str, int)) else decimal(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write_text(path, dumps_csv(header, rows))
