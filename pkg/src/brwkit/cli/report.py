"""Replica tables (CSV) and summary reports (JSON).

Floats are written with 17 significant digits so that parsing the output
reproduces every value bit for bit.  Non-finite numbers appear as empty CSV
cells and as ``null`` in JSON.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

import numpy as np

from .. import __version__

CSV_COLUMNS = ("replica_id", "seed", "survived", "n", "Z_n", "M_centered", "R_centered",
               "r_settled", "truncated_mass")


def fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        return ""
    return format(x, ".17g")


def _bool(b):
    return "true" if b else "false"


def replica_row(index, seed, outcome):
    return (
        str(index),
        str(seed),
        _bool(outcome.survived),
        str(outcome.measure_n),
        fmt_float(outcome.Z_hat),
        fmt_float(outcome.M_centered),
        fmt_float(outcome.R_centered),
        _bool(outcome.r_settled),
        fmt_float(outcome.truncated_mass),
    )


class ReplicaCSV:
    """Streaming writer for the replica table."""

    def __init__(self, stream):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(CSV_COLUMNS)

    def write(self, index, seed, outcome):
        self.writer.writerow(replica_row(index, seed, outcome))
        self.stream.flush()


def replica_csv(rows):
    """Render ``(index, seed, outcome)`` triples as a CSV document."""
    buf = io.StringIO()
    out = ReplicaCSV(buf)
    for index, seed, outcome in rows:
        out.write(index, seed, outcome)
    return buf.getvalue()


def read_replica_csv(text):
    """Parse a replica table back into dictionaries of typed values."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for key in CSV_COLUMNS:
            raw = rec[key]
            if key in ("replica_id", "seed", "n"):
                row[key] = int(raw)
            elif key in ("survived", "r_settled"):
                row[key] = raw == "true"
            else:
                row[key] = float(raw) if raw else math.inf
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# JSON


def to_plain(obj):
    """Convert reports into dicts, lists, strings, bools, ints and floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple) and hasattr(obj, "_fields"):
        return {k: to_plain(v) for k, v in zip(obj._fields, obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dump(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _dump(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        text = fmt_float(obj)
        if not text:
            return "null"
        return text if any(c in text for c in ".e") else text + ".0"
    return json.dumps(obj)


def dumps(obj, indent=2):
    return _dump(to_plain(obj), indent, 0) + "\n"


def provenance(cfg):
    return {
        "config_sha256": cfg.digest(),
        "master_seed": cfg.seed,
        "version": __version__,
        "kind": cfg.kind,
    }


def emit_report(report, cfg=None, fmt="json"):
    """Serialise a report; ``fmt='csv'`` expects ``(index, seed, outcome)`` rows."""
    if fmt == "csv":
        return replica_csv(report)
    if fmt != "json":
        raise ValueError(f"unknown format {fmt!r}")
    doc = {}
    if cfg is not None:
        doc["provenance"] = provenance(cfg)
        doc["config"] = cfg.resolved()
    doc["report"] = report
    return dumps(doc)


def parse_report(text):
    return json.loads(text)
