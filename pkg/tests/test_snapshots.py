import numpy as np
import pytest

import spinflow as sf
from spinflow import snapshots

from conftest import blob_field, unit_coupling


class TestBinarySnapshot:
    def test_round_trip_bit_exact(self, tmp_path, grid32):
        u = sf.perturb(blob_field(grid32), 0.1, 17)
        path = tmp_path / "field.bin"
        snapshots.write_snapshot(path, u)
        back = snapshots.read_snapshot(path)
        assert back.grid == u.grid
        assert np.array_equal(back.values, u.values)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTASNAP" + b"\x00" * 64)
        with pytest.raises(ValueError):
            snapshots.read_snapshot(path)

    def test_truncated_payload_rejected(self, tmp_path, grid32):
        u = blob_field(grid32)
        path = tmp_path / "field.bin"
        snapshots.write_snapshot(path, u)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError):
            snapshots.read_snapshot(path)


class TestCsvExport:
    def test_header_and_rows(self, tmp_path, grid32):
        u = blob_field(grid32)
        path = tmp_path / "field.csv"
        snapshots.write_field_csv(path, u)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "x,y,ux,uy,uz"
        assert len(lines) == 1 + grid32.nx * grid32.ny
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 0.0
        assert float(first[2]) == u.values[0, 0, 0]


class TestPgm:
    def test_max_scaled(self, tmp_path, grid32):
        density = sf.energy_density(blob_field(grid32), unit_coupling(grid32))
        path = tmp_path / "density.pgm"
        snapshots.write_density_pgm(path, density)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "P2"
        assert lines[1] == f"{grid32.nx} {grid32.ny}"
        assert lines[2] == "255"
        values = [int(v) for row in lines[3:] for v in row.split()]
        assert max(values) == 255 and min(values) >= 0
        assert len(values) == grid32.nx * grid32.ny

    def test_zero_field(self, tmp_path, grid32):
        path = tmp_path / "zero.pgm"
        snapshots.write_density_pgm(path, np.zeros(grid32.shape))
        values = [int(v) for row in path.read_text().strip().split("\n")[3:]
                  for v in row.split()]
        assert set(values) == {0}
