"""Record serialization, configuration files and run manifests.

Window CSV columns (frozen)::

    replicate,t,lambda,rank,size,surplus,s2bar,s3bar,mass_surplus_sum

Limit CSV columns (frozen)::

    replicate,lambda,rank,length,marks,area,mass_surplus_sum

``mass_surplus_sum`` is the per-snapshot sum over *all* components of
rescaled size times surplus, repeated on each rank row.

Configuration files hold one ``key = value`` pair per line; ``#`` starts a
comment.  Unknown keys are errors.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .experiments import SnapshotRecord

WINDOW_COLUMNS = ("replicate", "t", "lambda", "rank", "size", "surplus", "s2bar", "s3bar",
                  "mass_surplus_sum")
LIMIT_COLUMNS = ("replicate", "lambda", "rank", "length", "marks", "area", "mass_surplus_sum")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def window_rows(records):
    for rec in records:
        for k in range(len(rec.sizes)):
            yield (rec.replicate, rec.t, rec.lam, k + 1, rec.sizes[k], int(rec.surpluses[k]),
                   rec.s2bar, rec.s3bar, rec.mass_surplus_sum)


def limit_rows(records):
    for rec in records:
        areas = rec.areas if rec.areas is not None else np.full(len(rec.sizes), np.nan)
        for k in range(len(rec.sizes)):
            yield (rec.replicate, rec.lam, k + 1, rec.sizes[k], int(rec.surpluses[k]),
                   areas[k], rec.mass_surplus_sum)


def write_csv(fh, columns, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def write_jsonl(fh, records):
    for rec in records:
        fh.write(json.dumps({
            "replicate": rec.replicate, "t": None if math.isnan(rec.t) else rec.t,
            "lambda": rec.lam, "sizes": [float(v) for v in rec.sizes],
            "surpluses": [int(v) for v in rec.surpluses],
            "mass_surplus_sum": rec.mass_surplus_sum,
            "s2bar": None if math.isnan(rec.s2bar) else rec.s2bar,
            "s3bar": None if math.isnan(rec.s3bar) else rec.s3bar,
        }, sort_keys=True) + "\n")


def read_records(fh):
    """Load either CSV schema back into SnapshotRecords."""
    reader = csv.DictReader(fh)
    cols = tuple(reader.fieldnames or ())
    if cols == WINDOW_COLUMNS:
        size_key, surp_key = "size", "surplus"
    elif cols == LIMIT_COLUMNS:
        size_key, surp_key = "length", "marks"
    else:
        raise ValueError(f"unrecognized record columns: {cols}")
    groups = {}
    for row in reader:
        key = (int(row["replicate"]), float(row["lambda"]))
        g = groups.setdefault(key, {"rows": [], "row": row})
        g["rows"].append((int(row["rank"]), float(row[size_key]), int(row[surp_key])))
    out = []
    for (rep, lam), g in groups.items():
        rows = sorted(g["rows"])
        row = g["row"]
        out.append(SnapshotRecord(
            replicate=rep, t=float(row.get("t", "nan")), lam=lam,
            sizes=np.array([r[1] for r in rows]), surpluses=np.array([r[2] for r in rows]),
            mass_surplus_sum=float(row["mass_surplus_sum"]),
            s2bar=float(row.get("s2bar", "nan")), s3bar=float(row.get("s3bar", "nan"))))
    out.sort(key=lambda r: (r.lam, r.replicate))
    return out


# configuration -----------------------------------------------------------

CONFIG_SCHEMA = {
    "rule": str,
    "n": int,
    "gamma": float,
    "lambdas": "floats",
    "replicates": int,
    "top_k": int,
    "seed": int,
    "tol": float,
    "step": float,
    "horizon": float,
    "checkpoints": int,
    "grid_points": int,
    "seeds": int,
}


class ConfigFileError(ValueError):
    pass


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise ConfigFileError(f"line {lineno}: expected key = value")
        if key not in CONFIG_SCHEMA:
            raise ConfigFileError(f"line {lineno}: unknown key {key!r}")
        kind = CONFIG_SCHEMA[key]
        try:
            if kind == "floats":
                out[key] = [float(v) for v in val.replace(",", " ").split()]
            else:
                out[key] = kind(val)
        except ValueError:
            raise ConfigFileError(f"line {lineno}: bad value for {key}: {val!r}") from None
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


# manifest ----------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int = 0
    version: str = __version__
    timing: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)

    def add_output(self, path):
        self.outputs[str(path)] = file_digest(path)

    def to_json(self):
        return json.dumps({
            "tool": "critmc", "version": self.version, "command": self.command,
            "config": self.config, "master_seed": self.seed, "timing": self.timing,
            "outputs": self.outputs, "python": self.python,
        }, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


class Timer:
    def __init__(self):
        self.t0 = time.perf_counter()

    def elapsed(self):
        return time.perf_counter() - self.t0
