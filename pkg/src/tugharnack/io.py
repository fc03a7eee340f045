"""File formats: fields, traces, reports and experiment tables.

Every writer takes the producing configuration and embeds its hash and the
package version.  Nothing time-dependent is written, so identical inputs
give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import struct

import numpy as np

from . import __version__
from .dpp import FieldError, GridField

FIELD_MAGIC = b"GF"
FIELD_VERSION = 1


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else repr(f)
    return o


def canonical_json(obj, indent=None):
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, separators=(",", ": ") if indent else (",", ":"))


def config_hash(config):
    """First 16 hex digits of the SHA-256 of the canonical JSON."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def header(config):
    return {"config_hash": config_hash(config), "version": __version__}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_table(path, columns, rows, config):
    """CSV with two ``#`` comment lines (hash, version) then header and rows."""
    h = header(config)
    buf = _io.StringIO()
    buf.write(f"# config_hash={h['config_hash']}\n# version={h['version']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [r[c] for c in columns] if isinstance(r, dict) else list(r)
        w.writerow([_fmt(v) for v in vals])
    _write_text(path, buf.getvalue())


def read_table(path):
    """Rows of a table written by ``write_table`` as dicts of strings, plus the header."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            k, _, v = ln[1:].strip().partition("=")
            meta[k] = v
        else:
            body.append(ln)
    rows = list(csv.DictReader(body))
    return rows, meta


def write_json(path, obj, config):
    payload = dict(_plain(obj))
    payload.update(header(config))
    _write_text(path, canonical_json(payload, indent=2) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


# -- GridField ---------------------------------------------------------------

def write_field_binary(path, field, config=None):
    """``GF`` + version byte + ``d`` + ``h`` + ``lo`` + shape + row-major
    float64 values (NaN outside the ball) + length-prefixed JSON metadata."""
    config = field.meta.get("config", {}) if config is None else config
    vals = np.where(field.inside(), field.values, np.nan).astype("<f8")
    meta = dict(_plain(field.meta))
    meta.update(header(config))
    meta["radius"] = field.radius
    mj = canonical_json(meta).encode()
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC + struct.pack("<BB", FIELD_VERSION, field.d))
        fh.write(struct.pack("<d", field.h))
        fh.write(np.asarray(field.lo, dtype="<f8").tobytes())
        fh.write(np.asarray(field.shape, dtype="<i8").tobytes())
        fh.write(vals.tobytes(order="C"))
        fh.write(struct.pack("<Q", len(mj)))
        fh.write(mj)


def read_field_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != FIELD_MAGIC:
        raise FieldError("not a field file")
    version, d = struct.unpack_from("<BB", data, 2)
    if version != FIELD_VERSION:
        raise FieldError(f"unsupported field version {version}")
    off = 4
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    lo = np.frombuffer(data, "<f8", d, off).copy()
    off += 8 * d
    shape = tuple(int(s) for s in np.frombuffer(data, "<i8", d, off))
    off += 8 * d
    n = int(np.prod(shape))
    vals = np.frombuffer(data, "<f8", n, off).reshape(shape).copy()
    off += 8 * n
    (m,) = struct.unpack_from("<Q", data, off)
    meta = json.loads(data[off + 8: off + 8 + m].decode())
    return GridField(h, lo, vals, meta, radius=float(meta.get("radius", 1.0)))


def write_field_csv(path, field, config=None):
    """Nodes inside the ball: ``x_1..x_d, value``."""
    config = field.meta.get("config", {}) if config is None else config
    inside = field.inside().reshape(-1)
    x = field.coords().reshape(-1, field.d)[inside]
    v = field.values.reshape(-1)[inside]
    cols = [f"x_{j + 1}" for j in range(field.d)] + ["value"]
    write_table(path, cols, [list(xi) + [vi] for xi, vi in zip(x, v)], config)


# -- traces --------------------------------------------------------------------

def write_traces_csv(path, traces, config):
    """Game rollouts: ``rollout, step, x_1..x_d, coin`` (coin blank at the start)."""
    d = traces[0].positions.shape[1]
    cols = ["rollout", "step"] + [f"x_{j + 1}" for j in range(d)] + ["coin"]
    rows = []
    for k, t in enumerate(traces):
        for s, x in enumerate(t.positions):
            coin = "" if s == 0 else int(t.coins[s - 1])
            rows.append([k, s] + list(x) + [coin])
    write_table(path, cols, rows, config)


def write_coupled_csv(path, traces, config):
    """Coupled runs: ``run, step, X, Y, |Z|, M, aligned, coin, theta1, theta2, psi``."""
    d = traces[0].X.shape[1]
    cols = (["run", "step"] + [f"X_{j + 1}" for j in range(d)] + [f"Y_{j + 1}" for j in range(d)]
            + ["Znorm", "M", "aligned", "coin", "theta1", "theta2", "psi"])
    rows = []
    for k, t in enumerate(traces):
        zn = t.Znorm
        for s in range(len(t.X)):
            if s < t.steps:
                tail = [int(t.aligned[s]), int(t.coin[s]), t.theta1[s], t.theta2[s], t.psi[s]]
            else:
                tail = ["", "", "", "", ""]
            rows.append([k, s] + list(t.X[s]) + list(t.Y[s]) + [zn[s], t.M[s]] + tail)
    write_table(path, cols, rows, config)


# -- reports -----------------------------------------------------------------

def write_constant_report(path, rows, config):
    from .constants import REPORT_COLUMNS
    write_table(path, REPORT_COLUMNS, rows, config)


EXPERIMENT_COLUMNS = ["p", "eps", "trials", "successes", "p_hat", "ci_lo", "ci_hi",
                      "capped_fraction", "adversary", "reliable"]


def write_experiments(path, experiments, config):
    rows = []
    for e in experiments:
        r = e.row()
        r["adversary"] = e.adversary
        r["reliable"] = e.reliable
        rows.append(r)
    write_table(path, EXPERIMENT_COLUMNS, rows, config)


def write_chain(path, chain, config=None):
    obj = json.loads(chain.to_json())
    write_json(path, obj, {} if config is None else config)


def read_chain(path):
    from .planar import Rect, RectChain
    obj = read_json(path)
    rects = []
    for v in obj["rectangles"]:
        v = np.asarray(v, dtype=float)
        c = v.mean(axis=0)
        e0, e1 = v[1] - v[0], v[3] - v[0]
        rects.append(Rect(tuple(c), (np.linalg.norm(e0) / 2, np.linalg.norm(e1) / 2),
                          math.atan2(e0[1], e0[0])))
    return RectChain(rects, [int(t) for t in obj["target_edges"]], obj.get("inner", 1.0),
                     obj.get("outer", 4.0))
