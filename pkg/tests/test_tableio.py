import struct

import numpy as np
import pytest

from approxrv import fit
from approxrv.errors import (
    BadMagicError,
    ChecksumError,
    TruncatedFileError,
    VersionError,
)
from approxrv.tableio import export_table, import_table


@pytest.fixture(scope="module")
def all_tables():
    return {
        "constant": fit.fit_constant(5, "l1"),
        "dyadic": fit.fit_gaussian_dyadic(3, 10),
        "ncchi2": fit.fit_ncchi2(1.0, n_knots=4, m=1, n_intervals=6),
    }


def assert_tables_equal(a, b):
    assert type(a) is type(b)
    if hasattr(a, "values"):
        assert a.q == b.q and a.construction == b.construction
        assert np.array_equal(a.values, b.values)
    elif hasattr(a, "coeffs"):
        assert (a.degree, a.n_intervals, a.decay) == (b.degree, b.n_intervals, b.decay)
        assert np.array_equal(a.coeffs, b.coeffs)
    else:
        assert (a.nu, a.n_knots, a.degree, a.n_intervals) == (
            b.nu, b.n_knots, b.degree, b.n_intervals
        )
        assert np.array_equal(a.lower_stack, b.lower_stack)
        assert np.array_equal(a.upper_stack, b.upper_stack)


@pytest.mark.parametrize("kind", ["constant", "dyadic", "ncchi2"])
@pytest.mark.parametrize("format", ["binary", "text"])
def test_roundtrip_bitwise(all_tables, tmp_path, kind, format):
    path = tmp_path / f"{kind}.{format}"
    export_table(all_tables[kind], path, format=format)
    assert_tables_equal(all_tables[kind], import_table(path))


def test_corrupted_checksum(all_tables, tmp_path):
    path = tmp_path / "t.arvt"
    export_table(all_tables["dyadic"], path)
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF  # flip a payload byte
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        import_table(path)


def test_future_version_rejected_before_payload(all_tables, tmp_path):
    path = tmp_path / "t.arvt"
    export_table(all_tables["constant"], path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<H", raw, 4, 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        import_table(path)


def test_truncated_file(all_tables, tmp_path):
    path = tmp_path / "t.arvt"
    export_table(all_tables["dyadic"], path)
    raw = path.read_bytes()
    # Keep the header and checksum plausible but cut the coefficients.
    cut = raw[: len(raw) // 2]
    import zlib

    payload = cut[8:]
    path.write_bytes(cut + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    with pytest.raises(TruncatedFileError):
        import_table(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "t.arvt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(BadMagicError):
        import_table(path)


def test_text_is_one_coefficient_per_line(all_tables, tmp_path):
    path = tmp_path / "t.txt"
    table = all_tables["dyadic"]
    export_table(table, path, format="text")
    lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    assert len(lines) == table.coeffs.size
    for line in lines[:8]:
        float(line)  # plain parseable numbers


def test_text_version_rejected(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# ARVT v9 dyadic\n# degree = 1\n")
    with pytest.raises(VersionError):
        import_table(path)


def test_text_truncated_coefficients(tmp_path, all_tables):
    path = tmp_path / "t.txt"
    export_table(all_tables["ncchi2"], path, format="text")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-5]))
    with pytest.raises(TruncatedFileError):
        import_table(path)
