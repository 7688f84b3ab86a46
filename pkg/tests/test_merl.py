import struct

import numpy as np
import pytest

from sparsebrdf.errors import DomainError, EmptyMaskError, MerlFormatError
from sparsebrdf.merl import (
    MERL_SCALES,
    BrdfResolution,
    BrdfTensor,
    HalfAngleDirection,
    corpus_mask,
    direction_to_index,
    index_to_direction,
    read_merl,
    validity_mask,
    write_merl,
)

from conftest import make_random_tensor

RES8 = BrdfResolution(8, 8, 8)


def _write_raw(path, dims, payload):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3i", *dims))
        np.asarray(payload, dtype="<f8").tofile(fh)


def test_read_header_echo(tmp_path):
    n = 90 * 90 * 180
    path = tmp_path / "flat.binary"
    _write_raw(path, (90, 90, 180), np.full(3 * n, 750.0))
    brdf = read_merl(path)
    assert brdf.resolution == BrdfResolution(90, 90, 180)
    assert brdf.values.shape == (3, n)


def test_read_sentinel_preserved(tmp_path):
    n = RES8.grid_size
    payload = np.full((3, n), 10.0)
    payload[0, 5] = -1.0
    path = tmp_path / "b.binary"
    _write_raw(path, (8, 8, 8), payload.ravel())
    brdf = read_merl(path)
    assert not brdf.mask[5]
    assert brdf.values[0, 5] == -1.0
    assert brdf.mask.sum() == n - 1


def test_read_applies_scales(tmp_path):
    n = RES8.grid_size
    payload = np.full((3, n), 1500.0)
    path = tmp_path / "b.binary"
    _write_raw(path, (8, 8, 8), payload.ravel())
    brdf = read_merl(path)
    assert brdf.values[0, 0] == 1.0
    assert brdf.values[1, 0] == 1.15
    assert brdf.values[2, 0] == 1.66


def test_read_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.binary"
    _write_raw(path, (0, 8, 8), [])
    with pytest.raises(MerlFormatError):
        read_merl(path)


def test_read_rejects_short_payload(tmp_path):
    path = tmp_path / "short.binary"
    _write_raw(path, (8, 8, 8), np.zeros(10))
    with pytest.raises(MerlFormatError):
        read_merl(path)


def test_read_missing_file():
    with pytest.raises(OSError):
        read_merl("/nonexistent/brdf.binary")


def test_roundtrip_tensors_bit_exact(tmp_path, rng):
    for trial in range(20):
        brdf = make_random_tensor(rng)
        path = tmp_path / f"t{trial}.binary"
        write_merl(brdf, path)
        back = read_merl(path)
        assert back.resolution == brdf.resolution
        assert np.array_equal(back.mask, brdf.mask)
        assert np.array_equal(back.values, brdf.values)


def test_rewrite_reproduces_bytes(tmp_path, rng):
    brdf = make_random_tensor(rng)
    p1, p2 = tmp_path / "a.binary", tmp_path / "b.binary"
    write_merl(brdf, p1)
    write_merl(read_merl(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_all_valid_has_no_negatives(tmp_path, rng):
    brdf = make_random_tensor(rng, invalid_frac=0.0)
    path = tmp_path / "v.binary"
    write_merl(brdf, path)
    payload = np.fromfile(path, dtype="<f8", offset=12)
    assert payload.min() >= 0.0


def test_write_header_and_payload_size(tmp_path, rng):
    res = BrdfResolution(16, 16, 16)
    brdf = make_random_tensor(rng, res=res)
    path = tmp_path / "c.binary"
    write_merl(brdf, path)
    raw = path.read_bytes()
    assert struct.unpack("<3i", raw[:12]) == (16, 16, 16)
    assert len(raw) == 12 + 3 * 4096 * 8


def test_tensor_invariants_enforced():
    n = RES8.grid_size
    values = np.full((3, n), 1.0)
    mask = np.ones(n, dtype=bool)
    values[1, 3] = -2.0  # negative value on a valid cell
    with pytest.raises(MerlFormatError):
        BrdfTensor(RES8, values, mask)


def test_direction_to_index_origin():
    res = BrdfResolution(90, 90, 180)
    assert direction_to_index(HalfAngleDirection(0.0, 0.0, 0.0), res) == 0


def test_direction_to_index_theta_warp():
    # theta_h at the exact lower edge of warped bin 1
    res = BrdfResolution(90, 90, 180)
    d = HalfAngleDirection((np.pi / 2) * (1 / 90) ** 2, 0.0, 0.0)
    assert direction_to_index(d, res) == 16200


def test_direction_to_index_phi_bin():
    res = BrdfResolution(90, 90, 180)
    d = HalfAngleDirection(0.0, 0.0, np.pi * (179.5 / 180))
    assert direction_to_index(d, res) == 179


def test_direction_range_checks():
    res = BrdfResolution(90, 90, 180)
    with pytest.raises(DomainError):
        direction_to_index(HalfAngleDirection(np.pi / 2, 0.0, 0.0), res)
    with pytest.raises(DomainError):
        direction_to_index(HalfAngleDirection(0.0, -0.1, 0.0), res)
    with pytest.raises(DomainError):
        direction_to_index(HalfAngleDirection(0.0, 0.0, np.pi), res)


def test_index_direction_bijection_exhaustive():
    for idx in range(RES8.grid_size):
        d = index_to_direction(idx, RES8)
        assert direction_to_index(d, RES8) == idx


def test_index_to_direction_bounds():
    with pytest.raises(DomainError):
        index_to_direction(-1, RES8)
    with pytest.raises(DomainError):
        index_to_direction(RES8.grid_size, RES8)


def test_validity_mask_all_valid(rng):
    res = BrdfResolution(16, 16, 16)
    brdf = make_random_tensor(rng, res=res, invalid_frac=0.0)
    rm = validity_mask(brdf)
    assert rm.n_valid == 4096
    assert np.array_equal(rm.grid_indices, np.arange(4096))
    assert np.array_equal(rm.row_of_grid(), np.arange(4096))


def test_validity_mask_sparse():
    n = RES8.grid_size
    values = np.full((3, n), -1.0)
    mask = np.zeros(n, dtype=bool)
    for g in (3, 7):
        mask[g] = True
        values[:, g] = 0.25
    brdf = BrdfTensor(RES8, values, mask)
    rm = validity_mask(brdf)
    assert rm.grid_indices.tolist() == [3, 7]
    assert rm.row_of_grid()[7] == 1
    assert rm.row_of_grid()[0] == -1


def test_validity_mask_empty():
    n = RES8.grid_size
    brdf = BrdfTensor(RES8, np.full((3, n), -1.0), np.zeros(n, dtype=bool))
    with pytest.raises(EmptyMaskError):
        validity_mask(brdf)


def test_corpus_mask_intersection(rng):
    a = make_random_tensor(rng, invalid_frac=0.2)
    b = make_random_tensor(rng, invalid_frac=0.2)
    rm = corpus_mask([a, b])
    expect = np.flatnonzero(a.mask & b.mask)
    assert np.array_equal(rm.grid_indices, expect)
