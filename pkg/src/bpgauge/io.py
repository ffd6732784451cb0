"""Config files and CSV output."""

from __future__ import annotations

import ast
import base64
import csv
import os
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError


def parse_pairs(items: Iterable[str], source="command line") -> dict:
    """``["a=1", "b=x"]`` to ``{"a": "1", "b": "x"}``."""
    out = {}
    for item in items:
        item = item.strip()
        if not item or item.startswith("#"):
            continue
        if "=" not in item:
            raise ConfigError(f"{source}: expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}: empty key in {item!r}")
        out[key] = value.strip()
    return out


def read_config(path) -> dict:
    """Key=value lines; ``#`` starts a comment."""
    try:
        with open(path) as fh:
            lines = [line.split("#", 1)[0] for line in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_pairs(lines, source=str(path))


class Settings:
    """Typed access to string settings with defaults and unknown-key checks."""

    def __init__(self, raw: Mapping, known: Mapping):
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown key(s) {', '.join(unknown)}; valid keys: {', '.join(sorted(known))}")
        self.raw = dict(raw)
        self.known = dict(known)
        self.resolved = {}

    def _get(self, key, conv, what):
        text = self.raw.get(key)
        default = self.known[key]
        if text is None and not isinstance(default, str):
            self.resolved[key] = default
            return default
        if text is None:
            text = default
        try:
            value = conv(text)
        except ValueError:
            raise ConfigError(f"{key}={text!r} is not a valid {what}") from None
        self.resolved[key] = value
        return value

    def str(self, key):
        return self._get(key, str, "string")

    def int(self, key):
        return self._get(key, int, "integer")

    def float(self, key):
        return self._get(key, float, "number")

    def bool(self, key):
        def conv(t):
            t = t.lower()
            if t in ("1", "true", "yes", "on"):
                return True
            if t in ("0", "false", "no", "off"):
                return False
            raise ValueError(t)

        return self._get(key, conv, "boolean")

    def int_list(self, key):
        return self._get(key, lambda t: [int(x) for x in t.split(",") if x], "comma-separated integer list")

    def float_list(self, key):
        return self._get(key, parse_float_list, "float list or start:stop:step range")

    def str_list(self, key):
        return self._get(key, lambda t: [x for x in t.split(",") if x], "comma-separated list")


def parse_float_list(text: str):
    """``0.1,0.2`` or an inclusive range ``0.1:0.5:0.02``."""
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(text)
        start, stop, step = parts
        n = int(round((stop - start) / step))
        return [round(start + k * step, 12) for k in range(n + 1)]
    return [float(x) for x in text.split(",") if x]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (list, tuple)):
        return ",".join(_fmt(y) for y in x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows, config: Mapping = None):
    """CSV with an optional leading ``# key=value`` comment block."""
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise ConfigError(f"output directory {directory} does not exist")
    with open(path, "w", newline="") as fh:
        if config:
            for key in sorted(config):
                fh.write(f"# {key}={_fmt(config[key])}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def read_csv(path):
    """Rows of a file written by :func:`write_csv` (comments skipped) as dicts."""
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


# -- state files ---------------------------------------------------------------
#
# Plain-text sections, each introduced by its name on a line of its own:
#
#   vertices   one vertex id per line (Python literal, e.g. ``(0, 1)``)
#   edges      ``edge-id<TAB>v<TAB>w<TAB>bond-dim``
#   sites      ``vertex<TAB>site-dim`` (``None`` for a vertex without site index)
#   log_scale  one float
#   data       base64 of little-endian complex128 values: every vertex tensor in
#              ``vertices`` order, row-major over ``[site, bonds in edge-list
#              order of that vertex]``
#
# Vertex and edge ids must be Python literals (ints, strings, tuples).

_SECTIONS = ("vertices", "edges", "sites", "log_scale", "data")


def save_tns(tns, path):
    g = tns.graph
    lines = ["vertices"] + [repr(v) for v in g.vertices]
    lines.append("edges")
    lines += [f"{eid!r}\t{v!r}\t{w!r}\t{tns.bond_dim(eid)}" for eid, (v, w) in g.edges.items()]
    lines.append("sites")
    lines += [f"{v!r}\t{tns.site_dims[v]!r}" for v in g.vertices]
    lines += ["log_scale", repr(float(tns.log_scale)), "data"]
    payload = b"".join(np.ascontiguousarray(tns.tensors[v], dtype="<c16").tobytes() for v in g.vertices)
    lines.append(base64.b64encode(payload).decode("ascii"))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tns(path):
    from .network import Graph, TensorNetworkState

    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    sections, current = {name: [] for name in _SECTIONS}, None
    for line in lines:
        if line in _SECTIONS:
            current = line
        elif current is None:
            raise ConfigError(f"{path}: content before the first section header")
        else:
            sections[current].append(line)
    try:
        vertices = [ast.literal_eval(x) for x in sections["vertices"]]
        edges, dims = [], {}
        for row in sections["edges"]:
            eid, v, w, d = row.split("\t")
            eid = ast.literal_eval(eid)
            edges.append((eid, ast.literal_eval(v), ast.literal_eval(w)))
            dims[eid] = int(d)
        site_dims = {}
        for row in sections["sites"]:
            v, d = row.split("\t")
            site_dims[ast.literal_eval(v)] = ast.literal_eval(d)
        log_scale = float(sections["log_scale"][0]) if sections["log_scale"] else 0.0
        flat = np.frombuffer(base64.b64decode("".join(sections["data"])), dtype="<c16")
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"{path}: malformed state file ({exc})") from exc
    g = Graph(vertices, edges)
    tensors, pos = {}, 0
    for v in g.vertices:
        shape = (site_dims[v] or 1,) + tuple(dims[e] for e in g.incident(v))
        size = int(np.prod(shape))
        tensors[v] = flat[pos:pos + size].reshape(shape).astype(complex)
        pos += size
    if pos != len(flat):
        raise ConfigError(f"{path}: payload holds {len(flat)} values, expected {pos}")
    return TensorNetworkState(g, tensors, site_dims, log_scale)
