"""Snapshot persistence: decimal-text header, binary payload.

Layout of a ``.snap`` file::

    GKDVSNAP 1
    t = 0.125
    lambda_frame = 1.0
    x_frame = 0.0
    gamma_effective = 0.0
    length = 60.0
    n_points = 1024
    crc32 = 3735928559
    ---
    <n_points little-endian float64>

Metadata stays diffable text (shortest round-trip float repr, so reads
reproduce writes bit-exactly); the payload stays binary for size.  The
crc32 covers the payload bytes, so truncation or corruption surfaces as
ChecksumMismatch; a future-format header surfaces as VersionUnsupported
naming both versions.
"""

from __future__ import annotations

import json
import os
import zlib

import numpy as np

from .errors import ChecksumMismatch, VersionUnsupported
from .evolve import Snapshot
from .grid import Field, Grid

__all__ = ["write_snapshot", "read_snapshot", "save_uext", "load_uext",
           "SNAPSHOT_VERSION"]

_MAGIC = "GKDVSNAP"
SNAPSHOT_VERSION = 1
_SEPARATOR = b"---\n"

_FIELDS = ("t", "lambda_frame", "x_frame", "gamma_effective")


def write_snapshot(snap, path):
    """Write one Snapshot to path; see module docstring for the layout."""
    payload = np.ascontiguousarray(
        snap.u.values, dtype="<f8").tobytes()
    lines = ["%s %d" % (_MAGIC, SNAPSHOT_VERSION)]
    for name in _FIELDS:
        lines.append("%s = %s" % (name, repr(float(getattr(snap, name)))))
    lines.append("length = %s" % repr(float(snap.u.grid.length)))
    lines.append("n_points = %d" % snap.u.grid.n)
    lines.append("crc32 = %d" % zlib.crc32(payload))
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_SEPARATOR)
        fh.write(payload)


def read_snapshot(path):
    """Read a .snap file back into a Snapshot, verifying the checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    cut = blob.find(_SEPARATOR)
    if cut < 0:
        raise ChecksumMismatch("missing header/payload separator")
    header = blob[:cut].decode("ascii", errors="replace").splitlines()
    payload = blob[cut + len(_SEPARATOR):]

    if not header or not header[0].startswith(_MAGIC + " "):
        raise ChecksumMismatch("magic bytes missing; not a snapshot file")
    version = header[0][len(_MAGIC) + 1:].strip()
    if version != str(SNAPSHOT_VERSION):
        raise VersionUnsupported(version, [SNAPSHOT_VERSION])

    meta = {}
    for line in header[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()

    n = int(meta["n_points"])
    if len(payload) != 8 * n:
        raise ChecksumMismatch(
            "payload holds %d bytes, expected %d (truncated?)"
            % (len(payload), 8 * n))
    if zlib.crc32(payload) != int(meta["crc32"]):
        raise ChecksumMismatch("payload checksum does not match header")

    grid = Grid(float(meta["length"]), n)
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Snapshot(
        t=float(meta["t"]),
        lambda_frame=float(meta["lambda_frame"]),
        x_frame=float(meta["x_frame"]),
        gamma_effective=float(meta["gamma_effective"]),
        u=Field(grid, values),
    )


def save_uext(uext, dirpath):
    """Persist an extended-solution record: index JSON plus one .snap
    per stored time."""
    os.makedirs(dirpath, exist_ok=True)
    names = []
    for k, (t, f) in enumerate(zip(uext.ts, uext.fields)):
        name = "%06d.snap" % k
        write_snapshot(
            Snapshot(t=float(t), lambda_frame=1.0, x_frame=0.0,
                     gamma_effective=0.0, u=f),
            os.path.join(dirpath, name))
        names.append(name)
    index = {
        "ts": [repr(float(t)) for t in uext.ts],
        "T_fit": repr(float(uext.T_fit)),
        "t_cut": repr(float(uext.t_cut)),
        "files": names,
    }
    with open(os.path.join(dirpath, "uext.json"), "w") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)


def load_uext(dirpath):
    """Inverse of save_uext; bit-exact in times and field values."""
    from .continuation import UExt

    with open(os.path.join(dirpath, "uext.json")) as fh:
        index = json.load(fh)
    fields = []
    ts = []
    for name, t_text in zip(index["files"], index["ts"]):
        snap = read_snapshot(os.path.join(dirpath, name))
        fields.append(snap.u)
        ts.append(float(t_text))
    grid = fields[0].grid
    return UExt(ts=np.array(ts), fields=fields, grid=grid,
                T_fit=float(index["T_fit"]), t_cut=float(index["t_cut"]))
