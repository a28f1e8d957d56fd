"""CSV and flat key-value config helpers."""

import csv
import math
import os
from numbers import Integral, Real

from .errors import ConfigError


def format_value(v):
    """Round-trip text for a scalar: integers verbatim, floats with 17 significant digits."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, Integral):
        return str(int(v))
    if isinstance(v, Real):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(v)


def write_csv(path, header, rows):
    """Write ``rows`` under a header row; returns the path."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    """Return ``(header, rows)`` with every cell converted to float where possible."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for row in r:
            out = []
            for cell in row:
                try:
                    out.append(float(cell))
                except ValueError:
                    out.append(cell)
            rows.append(out)
    return header, rows


def parse_flat_config(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ConfigError(f"{source}:{n}: empty key")
        out[k] = v.strip()
    return out


def write_flat_config(path, items):
    with open(path, "w") as fh:
        for k, v in items:
            fh.write(f"{k} = {format_value(v)}\n")
    return path
