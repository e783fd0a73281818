import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from groundtrack.errors import EmptyMask
from groundtrack.geometry import (
    clamp_box,
    decode_rle,
    encode_rle,
    iou,
    mask_area,
    mask_to_bbox,
    pad_box,
)

from oracles import iou_ref, mask_bbox_ref


def test_iou_identity():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0


def test_iou_disjoint():
    assert iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0


def test_iou_half_overlap():
    # intersection 50, union 150
    assert iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(1 / 3, abs=1e-12)


boxes = st.tuples(
    st.integers(0, 80), st.integers(0, 80), st.integers(1, 40), st.integers(1, 40)
).map(lambda t: (float(t[0]), float(t[1]), float(t[0] + t[2]), float(t[1] + t[3])))


@given(boxes, boxes)
def test_iou_matches_reference(a, b):
    assert abs(iou(a, b) - iou_ref(a, b)) <= 1e-9


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


def test_clamp_box():
    assert clamp_box((-5, -5, 15, 12), 10, 10) == (0, 0, 10, 10)


def test_pad_box_clamps_at_bounds():
    padded = pad_box((0, 0, 10, 10), 0.1, 100, 100)
    assert padded == (0, 0, 11, 11)


# --- masks --------------------------------------------------------------------

def test_mask_to_bbox_single_cell():
    mask = np.zeros((10, 10), dtype=bool)
    mask[5, 7] = True
    assert mask_to_bbox(mask) == (7.0, 5.0, 8.0, 6.0)


def test_mask_to_bbox_full_frame():
    mask = np.ones((10, 10), dtype=bool)
    assert mask_to_bbox(mask) == (0.0, 0.0, 10.0, 10.0)


def test_mask_to_bbox_l_shape():
    # rows 2-4 of col 3, plus row 4 cols 3-6
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:5, 3] = True
    mask[4, 3:7] = True
    expected = mask_bbox_ref(mask.tolist())
    assert expected == (3.0, 2.0, 7.0, 5.0)
    assert mask_to_bbox(mask) == expected


def test_empty_mask_raises():
    with pytest.raises(EmptyMask):
        mask_to_bbox(np.zeros((4, 4), dtype=bool))


def test_rle_starts_with_zero_count():
    mask = np.ones((2, 2), dtype=bool)
    rle = encode_rle(mask)
    assert rle["counts"][0] == 0  # leading zeros count is present even when 0
    assert rle["counts"][1] == 4


def test_rle_column_major():
    # One set pixel at row 0, col 1 of a 2x3 mask: column-major offset is 2.
    mask = np.zeros((2, 3), dtype=bool)
    mask[0, 1] = True
    rle = encode_rle(mask)
    assert rle["counts"] == [2, 1, 3]


@given(arrays(dtype=bool, shape=st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_rle_roundtrip(mask):
    rle = encode_rle(mask)
    assert sum(rle["counts"]) == mask.size
    decoded = decode_rle(rle)
    assert np.array_equal(decoded, mask)
    assert mask_area(rle) == int(mask.sum())


def test_decode_validates_cell_count():
    with pytest.raises(ValueError):
        decode_rle({"size": [2, 2], "counts": [3]})
