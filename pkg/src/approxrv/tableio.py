"""Table file serialization.

Binary format: magic ``ARVT``, u16 version (=1), u8 kind, u8 degree,
kind-specific payload of little-endian fields with all coefficients as
64-bit floats, and a trailing CRC-32 of the payload bytes.  Round trips
are bitwise.  A human-readable text format (one coefficient per line at
17 significant digits, ``#``-prefixed metadata) is also supported and
round-trips float64 exactly.
"""

from __future__ import annotations

import io
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    TableIOError,
    TruncatedFileError,
    VersionError,
)
from .tables import CONSTRUCTIONS, ConstantTable, DyadicPolyTable, NcChi2Table

MAGIC = b"ARVT"
VERSION = 1
_KIND_CODES = {ConstantTable: 0, DyadicPolyTable: 1, NcChi2Table: 2}
_KIND_NAMES = {0: "constant", 1: "dyadic", 2: "ncchi2"}


def _payload_constant(table: ConstantTable) -> bytes:
    buf = struct.pack("<II", table.q, CONSTRUCTIONS.index(table.construction))
    return buf + table.values.astype("<f8").tobytes()


def _payload_dyadic(table: DyadicPolyTable) -> bytes:
    buf = struct.pack("<Id", table.n_intervals, table.decay)
    return buf + table.coeffs.astype("<f8").tobytes()


def _payload_ncchi2(table: NcChi2Table) -> bytes:
    buf = struct.pack("<dIId", table.nu, table.n_knots, table.n_intervals, table.lower[0].decay)
    return buf + table.lower_stack.astype("<f8").tobytes() + table.upper_stack.astype("<f8").tobytes()


def export_table(table, path, format: str = "binary") -> None:
    """Write a table file; ``format`` is ``"binary"`` or ``"text"``."""
    path = Path(path)
    if format == "text":
        path.write_text(_to_text(table))
        return
    if format != "binary":
        raise ConfigError(f"unknown table format {format!r}")
    kind = _KIND_CODES.get(type(table))
    if kind is None:
        raise ConfigError(f"cannot serialize object of type {type(table).__name__}")
    degree = getattr(table, "degree", 0)
    if isinstance(table, ConstantTable):
        payload = _payload_constant(table)
    elif isinstance(table, DyadicPolyTable):
        payload = _payload_dyadic(table)
    else:
        payload = _payload_ncchi2(table)
    header = MAGIC + struct.pack("<HBB", VERSION, kind, degree)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    path.write_bytes(header + payload + struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes, offset: int, end: int):
        self.data = data
        self.pos = offset
        self.end = end

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > self.end:
            raise TruncatedFileError("file ended inside a header field")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def floats(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.pos + size > self.end:
            raise TruncatedFileError(
                f"file ended inside the coefficient block ({self.end - self.pos} of {size} bytes)"
            )
        arr = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.pos).astype(np.float64)
        self.pos += size
        return arr


def import_table(path):
    """Read a table file (binary or text), returning the table object."""
    data = Path(path).read_bytes()
    if data[:6] == b"# ARVT":
        return _from_text(data.decode("utf-8"))
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a table file (bad magic)")
    if len(data) < 8 + 4:
        raise TruncatedFileError(f"{path}: too short for header and checksum")
    version, kind, degree = struct.unpack_from("<HBB", data, 4)
    if version != VERSION:
        raise VersionError(f"{path}: format version {version} not supported (expected {VERSION})")
    payload = data[8:-4]
    (crc_stored,) = struct.unpack_from("<I", data, len(data) - 4)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise ChecksumError(f"{path}: payload CRC-32 mismatch")
    rd = _Reader(data, 8, len(data) - 4)

    if kind == 0:
        q, cons = rd.take("<II")
        if cons >= len(CONSTRUCTIONS):
            raise TableIOError(f"unknown construction code {cons}")
        values = rd.floats(1 << q)
        return ConstantTable(q=q, values=values, construction=CONSTRUCTIONS[cons])
    if kind == 1:
        (n_intervals,), (decay,) = rd.take("<I"), rd.take("<d")
        coeffs = rd.floats((degree + 1) * (n_intervals + 1)).reshape(degree + 1, n_intervals + 1)
        return DyadicPolyTable(degree=degree, n_intervals=n_intervals, coeffs=coeffs, decay=decay)
    if kind == 2:
        nu, n_knots, n_intervals, decay = rd.take("<dIId")
        per = (degree + 1) * (n_intervals + 1)
        lower = rd.floats(n_knots * per).reshape(n_knots, degree + 1, n_intervals + 1)
        upper = rd.floats(n_knots * per).reshape(n_knots, degree + 1, n_intervals + 1)
        mk = lambda c: DyadicPolyTable(degree=degree, n_intervals=n_intervals, coeffs=c, decay=decay)
        return NcChi2Table(
            nu=nu, n_knots=n_knots, degree=degree, n_intervals=n_intervals,
            lower=tuple(mk(c) for c in lower), upper=tuple(mk(c) for c in upper),
        )
    raise TableIOError(f"unknown table kind code {kind}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _to_text(table) -> str:
    out = io.StringIO()
    if isinstance(table, ConstantTable):
        out.write(f"# ARVT v{VERSION} constant\n")
        out.write(f"# q = {table.q}\n# construction = {table.construction}\n")
        for v in table.values:
            out.write(_fmt(v) + "\n")
    elif isinstance(table, DyadicPolyTable):
        out.write(f"# ARVT v{VERSION} dyadic\n")
        out.write(f"# degree = {table.degree}\n# intervals = {table.n_intervals}\n")
        out.write(f"# decay = {_fmt(table.decay)}\n")
        for row in table.coeffs:
            for v in row:
                out.write(_fmt(v) + "\n")
    elif isinstance(table, NcChi2Table):
        out.write(f"# ARVT v{VERSION} ncchi2\n")
        out.write(f"# nu = {_fmt(table.nu)}\n# knots = {table.n_knots}\n")
        out.write(f"# degree = {table.degree}\n# intervals = {table.n_intervals}\n")
        out.write(f"# decay = {_fmt(table.lower[0].decay)}\n")
        for stack in (table.lower_stack, table.upper_stack):
            for v in stack.reshape(-1):
                out.write(_fmt(v) + "\n")
    else:
        raise ConfigError(f"cannot serialize object of type {type(table).__name__}")
    return out.getvalue()


def _from_text(text: str):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# ARVT"):
        raise BadMagicError("not a text table file")
    head = lines[0].split()
    if head[2] != f"v{VERSION}":
        raise VersionError(f"text format version {head[2]} not supported")
    kind = head[3]
    meta = {}
    values = []
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            meta[key.strip()] = val.strip()
        else:
            values.append(float(line))
    arr = np.asarray(values, dtype=np.float64)
    try:
        if kind == "constant":
            return ConstantTable(q=int(meta["q"]), values=arr, construction=meta["construction"])
        if kind == "dyadic":
            degree = int(meta["degree"])
            k = int(meta["intervals"])
            return DyadicPolyTable(
                degree=degree, n_intervals=k,
                coeffs=arr.reshape(degree + 1, k + 1), decay=float(meta["decay"]),
            )
        if kind == "ncchi2":
            degree = int(meta["degree"])
            k = int(meta["intervals"])
            n_knots = int(meta["knots"])
            per = (degree + 1) * (k + 1)
            if arr.size != 2 * n_knots * per:
                raise TruncatedFileError(
                    f"expected {2 * n_knots * per} coefficients, found {arr.size}"
                )
            halves = arr.reshape(2, n_knots, degree + 1, k + 1)
            mk = lambda c: DyadicPolyTable(
                degree=degree, n_intervals=k, coeffs=c, decay=float(meta["decay"])
            )
            return NcChi2Table(
                nu=float(meta["nu"]), n_knots=n_knots, degree=degree, n_intervals=k,
                lower=tuple(mk(c) for c in halves[0]), upper=tuple(mk(c) for c in halves[1]),
            )
    except KeyError as exc:
        raise TableIOError(f"text table missing metadata field {exc}") from exc
    except ValueError as exc:
        raise TruncatedFileError(f"coefficient block malformed: {exc}") from exc
    raise TableIOError(f"unknown text table kind {kind!r}")
