"""Plain-text persistence for fields, receiver data, error samples and mixtures.

Every float is written with ``%.17g`` so values survive a round trip bit-exactly.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from pathlib import Path
import platform
import re

import numpy as np

from .cgmm import ComplexGaussian, ErrorSampleSet, MixtureModel
from .grid import ComplexField, GridSpec, ReceiverSet, ScattererField
from .helmholtz import DataRecord

FMT = "%.17g"


class FormatError(ValueError):
    """A file exists but does not follow the expected layout."""


def _g(v) -> str:
    return FMT % v


def _ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def _read_lines(path):
    with open(path) as fh:
        return [ln.rstrip("\n") for ln in fh if ln.strip()]


# fields -----------------------------------------------------------------

def write_field(path, fld):
    """Header ``# nx,ny,x_min,x_max,y_min,y_max`` then one grid row (fixed i) per line."""
    g = fld.grid
    _ensure_parent(path)
    vals = np.asarray(fld.values)
    cplx = np.iscomplexobj(vals)
    with open(path, "w") as fh:
        fh.write("# " + ",".join([str(g.nx), str(g.ny)]
                                 + [_g(v) for v in (g.x_min, g.x_max, g.y_min, g.y_max)]) + "\n")
        for row in vals:
            if cplx:
                cells = [f"{_g(z.real)},{_g(z.imag)}" for z in row]
            else:
                cells = [_g(v) for v in row]
            fh.write(",".join(cells) + "\n")


def read_field(path, omega_bounds=(-1.0, 1.0, -1.0, 1.0)):
    """Inverse of ``write_field``; real files give a ScattererField, complex ones a ComplexField."""
    lines = _read_lines(path)
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}: missing field header")
    try:
        head = lines[0][1:].split(",")
        nx, ny = int(head[0]), int(head[1])
        bounds = [float(v) for v in head[2:6]]
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    grid = GridSpec(nx, ny, *bounds, omega_bounds=tuple(omega_bounds))
    if rows.shape == (nx, ny):
        return ScattererField(grid, rows) if _is_scatterer(grid, rows) else ComplexField(grid, rows + 0j)
    if rows.shape == (nx, 2 * ny):
        return ComplexField(grid, rows[:, 0::2] + 1j * rows[:, 1::2])
    raise FormatError(f"{path}: expected {nx} rows of {ny} or {2 * ny} values, got {rows.shape}")


def _is_scatterer(grid, values):
    return not np.any(values[~grid.omega_mask()])


# receiver data ----------------------------------------------------------

def write_data(path, record: DataRecord, receivers: ReceiverSet):
    _ensure_parent(path)
    with open(path, "w") as fh:
        fh.write(f"# kappa={_g(record.kappa)} angle={_g(record.angle)}\n")
        fh.write("index,x,y,re,im\n")
        for j, (p, z) in enumerate(zip(receivers.points, record.values)):
            fh.write(f"{j},{_g(p[0])},{_g(p[1])},{_g(z.real)},{_g(z.imag)}\n")


_KV = re.compile(r"(\w+)=(\S+)")


def _header(line, path, required):
    kv = dict(_KV.findall(line))
    missing = [k for k in required if k not in kv]
    if missing:
        raise FormatError(f"{path}: header lacks {missing}")
    return kv


def read_data(path):
    """Returns (DataRecord, ReceiverSet)."""
    lines = _read_lines(path)
    if len(lines) < 2:
        raise FormatError(f"{path}: too short for a data file")
    kv = _header(lines[0], path, ("kappa", "angle"))
    if lines[1].replace(" ", "") != "index,x,y,re,im":
        raise FormatError(f"{path}: expected column line 'index,x,y,re,im'")
    try:
        tab = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
        rec = DataRecord(float(kv["kappa"]), float(kv["angle"]), tab[:, 3] + 1j * tab[:, 4])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    return rec, ReceiverSet(tab[:, 1:3])


def data_filename(ki, ai):
    return f"data_k{ki:02d}_a{ai:02d}.csv"


# error samples ----------------------------------------------------------

def write_error_samples(path, es: ErrorSampleSet):
    _ensure_parent(path)
    ns, nd = es.samples.shape
    with open(path, "w") as fh:
        fh.write(f"# kappa={_g(es.kappa)} angle={_g(es.angle)} Ns={ns} Nd={nd}\n")
        for n, row in enumerate(es.samples):
            fh.write(str(n) + "," + ",".join(f"{_g(z.real)},{_g(z.imag)}" for z in row) + "\n")


def read_error_samples(path) -> ErrorSampleSet:
    lines = _read_lines(path)
    if not lines:
        raise FormatError(f"{path}: empty error-sample file")
    kv = _header(lines[0], path, ("kappa", "angle", "Ns", "Nd"))
    ns, nd = int(kv["Ns"]), int(kv["Nd"])
    try:
        tab = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]]).reshape(ns, 2 * nd)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return ErrorSampleSet(float(kv["kappa"]), tab[:, 0::2] + 1j * tab[:, 1::2], float(kv["angle"]))


def samples_filename(ki, ai):
    return f"errors_k{ki:02d}_a{ai:02d}.csv"


# mixtures ---------------------------------------------------------------

def _cvec(v):
    return ",".join(f"{_g(z.real)},{_g(z.imag)}" for z in v)


def write_mixture(path, model: MixtureModel):
    """``cgmm-v1`` text format: a header, then per component its weight, mean and covariance rows."""
    _ensure_parent(path)
    with open(path, "w") as fh:
        head = f"cgmm-v1 K={model.K} Nd={model.dim} kappa={_g(model.kappa_tag)} delta={_g(model.delta_reg)}"
        if model.angle_tag is not None:
            head += f" angle={_g(model.angle_tag)}"
        fh.write(head + "\n")
        for w, c in zip(model.weights, model.components):
            fh.write(f"pi={_g(w)}\n")
            fh.write(_cvec(c.zeta) + "\n")
            for row in c.sigma:
                fh.write(_cvec(row) + "\n")


def _parse_cvec(line, n, path):
    vals = [float(v) for v in line.split(",")]
    if len(vals) != 2 * n:
        raise FormatError(f"{path}: expected {2 * n} numbers per line, got {len(vals)}")
    a = np.array(vals)
    return a[0::2] + 1j * a[1::2]


def read_mixture(path) -> MixtureModel:
    lines = _read_lines(path)
    if not lines or not lines[0].startswith("cgmm-v1"):
        raise FormatError(f"{path}: not a cgmm-v1 file")
    kv = _header(lines[0], path, ("K", "Nd", "kappa", "delta"))
    K, nd = int(kv["K"]), int(kv["Nd"])
    if len(lines) != 1 + K * (2 + nd):
        raise FormatError(f"{path}: expected {1 + K * (2 + nd)} lines, found {len(lines)}")
    weights, comps = [], []
    pos = 1
    try:
        for _ in range(K):
            if not lines[pos].startswith("pi="):
                raise FormatError(f"{path}: line {pos + 1} should start with 'pi='")
            weights.append(float(lines[pos][3:]))
            zeta = _parse_cvec(lines[pos + 1], nd, path)
            sigma = np.array([_parse_cvec(lines[pos + 2 + r], nd, path) for r in range(nd)])
            comps.append(ComplexGaussian(zeta, sigma))
            pos += 2 + nd
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from None
    angle = float(kv["angle"]) if "angle" in kv else None
    return MixtureModel(np.array(weights), comps, float(kv["kappa"]), float(kv["delta"]), angle)


def mixture_filename(ki, ai=None):
    return f"cgmm_k{ki:02d}.txt" if ai is None else f"cgmm_k{ki:02d}_a{ai:02d}.txt"


# provenance -------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_report(out_dir, command, config_text, seeds=None, inputs=(), timings=None, extra=None):
    """Write ``manifest.json`` in out_dir (created if missing) and return its path.

    Everything except the ``timestamp`` and ``timings`` entries is a function of
    the config, inputs and seeds.
    """
    from . import __version__

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "command": command,
            "artifact_version": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "config": config_text,
            "seeds": dict(seeds or {}),
            "inputs": {os.fspath(p): file_digest(p) for p in sorted(map(os.fspath, inputs))},
            "extra": extra or {},
            "timings": dict(timings or {}),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest in {out}: {exc}") from exc
    return path
