"""Output files: CSV tables and binary field snapshots.

CSV files are RFC 4180 (comma separated, CRLF line ends) preceded by
``# key=value`` metadata lines.  Numbers are written with 17 significant
digits so reruns are byte-identical.

Binary snapshots start with a text header of ``key=value`` lines closed by
``end_header``; the payload is little-endian float64, row-major, with the
real and imaginary parts interleaved.
"""
from __future__ import annotations

import csv
import io as _io
import platform
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy

from . import __version__

GAUGE = "int_0"       # psi = phi * exp(int_0^tau A)


def metadata(scenario=None, seed: Optional[int] = None, extra: Optional[dict] = None) -> dict:
    meta = {
        "bangcross": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "gauge": GAUGE,
    }
    if scenario is not None:
        meta["scenario"] = scenario.name
        meta["config_sha256"] = scenario.digest
        meta["omega_sign_hat"] = scenario.hat.omega.get("sign", 1)
        meta["omega_sign_check"] = scenario.check.omega.get("sign", 1)
        meta["seed"] = scenario.seed if seed is None else seed
        meta["prng"] = "numpy PCG64"
    elif seed is not None:
        meta["seed"] = seed
    if extra:
        meta.update(extra)
    return meta


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], meta: Optional[dict] = None) -> str:
    buf = _io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def read_csv(path):
    """Return ``(meta, header, rows)`` with rows as lists of strings."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


def field_bytes(arr, meta: dict) -> bytes:
    a = np.ascontiguousarray(np.asarray(arr, dtype=np.complex128))
    head = dict(meta)
    head.update(shape="x".join(str(s) for s in a.shape), dtype="float64", endianness="little",
                layout="row-major", values="interleaved re/im")
    text = "".join(f"{k}={v}\n" for k, v in head.items()) + "end_header\n"
    return text.encode() + a.view(np.float64).astype("<f8").tobytes()


def read_field(path):
    blob = Path(path).read_bytes()
    cut = blob.index(b"end_header\n") + len(b"end_header\n")
    meta = dict(line.split("=", 1) for line in blob[:cut].decode().splitlines()[:-1])
    shape = tuple(int(s) for s in meta["shape"].split("x"))
    data = np.frombuffer(blob[cut:], dtype="<f8").astype(np.float64).view(np.complex128).reshape(shape)
    return meta, data


class OutputSet:
    """Collects file contents in memory; nothing touches the disk until :meth:`write`."""

    def __init__(self):
        self.files: dict[str, bytes] = {}

    def add_csv(self, name, header, rows, meta):
        self.files[name] = csv_text(header, rows, meta).encode()

    def add_field(self, name, arr, meta):
        self.files[name] = field_bytes(arr, meta)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.files):
            p = out / name
            p.write_bytes(self.files[name])
            written.append(p)
        return written
