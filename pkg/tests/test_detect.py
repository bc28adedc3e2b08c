import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccnet.colorcode import BoundingBox
from ccnet.detect import DetectionRecord, dump_detections, frame_difference_detect, grayscale, parse_detections
from ccnet.errors import InputError, ShapeError
from ccnet.imaging import RgbImage

from oracles import components_bfs


def parse(text):
    return list(parse_detections(io.StringIO(text)))


def test_empty_box_list():
    (rec,) = parse('{"frame":"a","width":4,"height":4,"boxes":[]}\n')
    assert rec.frame_id == "a" and rec.boxes == []


def test_one_box_default_score():
    (rec,) = parse('{"frame":"f1","width":4,"height":4,"boxes":[{"x":1,"y":1,"w":2,"h":2}]}')
    (b,) = rec.boxes
    assert (b.x, b.y, b.w, b.h, b.score) == (1, 1, 2, 2, 1.0)


def test_unknown_keys_ignored_and_order_kept():
    text = (
        '{"frame":"a","width":2,"height":2,"boxes":[],"camera":"x"}\n'
        '{"frame":"b","width":2,"height":2,"boxes":[{"x":0,"y":0,"w":1,"h":1,"score":0.4,"label":"car","cls":2}]}\n'
    )
    recs = parse(text)
    assert [r.frame_id for r in recs] == ["a", "b"]
    assert recs[1].boxes[0].score == 0.4 and recs[1].boxes[0].label == "car"


def test_malformed_line_number():
    text = '{"frame":"a","width":2,"height":2,"boxes":[]}\n\n' "not json\n"
    with pytest.raises(InputError, match="line 3"):
        parse(text)


@pytest.mark.parametrize("box", ['{"x":0,"y":0,"w":-1,"h":2}', '{"x":0,"y":0,"w":2,"h":0}', '{"x":-1,"y":0,"w":2,"h":2}'])
def test_bad_box_rejected(box):
    with pytest.raises(InputError, match="line 1"):
        parse('{"frame":"a","width":4,"height":4,"boxes":[%s]}' % box)


@pytest.mark.parametrize(
    "line",
    [
        '{"width":4,"height":4,"boxes":[]}',
        '{"frame":"a","width":0,"height":4,"boxes":[]}',
        '{"frame":"a","width":4,"height":4,"boxes":{}}',
        '{"frame":"a","width":4,"height":4,"boxes":[{"x":0,"y":0,"w":1}]}',
        '[1,2]',
    ],
)
def test_structural_errors(line):
    with pytest.raises(InputError, match="line 1"):
        parse(line)


record_st = st.builds(
    DetectionRecord,
    frame_id=st.text(st.characters(min_codepoint=48, max_codepoint=122), min_size=1, max_size=8),
    width=st.integers(1, 50),
    height=st.integers(1, 50),
    boxes=st.lists(
        st.builds(
            BoundingBox,
            x=st.integers(0, 60),
            y=st.integers(0, 60),
            w=st.integers(1, 20),
            h=st.integers(1, 20),
            score=st.floats(0, 1),
            label=st.sampled_from(["", "car", "bus"]),
        ),
        max_size=4,
    ),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(record_st, max_size=4))
def test_serialize_parse_fixed_point(records):
    buf = io.StringIO()
    dump_detections(records, buf)
    once = parse(buf.getvalue())
    assert once == records
    buf2 = io.StringIO()
    dump_detections(once, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_dump_is_one_json_object_per_line():
    buf = io.StringIO()
    dump_detections([DetectionRecord("x", 3, 3, [BoundingBox(0, 0, 1, 1)])], buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["boxes"][0]["w"] == 1


def test_grayscale_rounds_mean():
    px = np.array([[[1, 1, 0], [1, 1, 1], [255, 255, 254], [0, 0, 2]]], dtype=np.uint8)
    # means 2/3, 1, 764/3, 2/3 -> rounded 1, 1, 255, 1
    np.testing.assert_array_equal(grayscale(RgbImage(px)), [[1, 1, 255, 1]])


def test_identical_frames_no_boxes(rng):
    img = RgbImage(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    assert frame_difference_detect(img, img) == []


def test_threshold_255_no_boxes():
    a = RgbImage.filled(5, 5, (0, 0, 0))
    b = RgbImage.filled(5, 5)
    assert frame_difference_detect(a, b, threshold=255, min_area=1) == []


def test_white_block_on_black():
    prev = RgbImage.filled(8, 8, (0, 0, 0))
    curr = RgbImage.filled(8, 8, (0, 0, 0))
    curr.pixels[2:5, 2:5] = 255
    (b,) = frame_difference_detect(prev, curr, threshold=25, min_area=4)
    assert (b.x, b.y, b.w, b.h, b.score) == (2, 2, 3, 3, 1.0)


def test_diagonal_pixels_are_separate_components():
    prev = RgbImage.filled(4, 4, (0, 0, 0))
    curr = RgbImage.filled(4, 4, (0, 0, 0))
    curr.pixels[0, 0] = curr.pixels[1, 1] = 255
    assert len(frame_difference_detect(prev, curr, 25, 1)) == 2


def test_size_mismatch_rejected():
    with pytest.raises(ShapeError):
        frame_difference_detect(RgbImage.filled(3, 3), RgbImage.filled(3, 4))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), threshold=st.integers(0, 254), min_area=st.integers(1, 6))
def test_matches_bfs_oracle_and_is_symmetric(seed, threshold, min_area):
    r = np.random.default_rng(seed)
    a = RgbImage(r.integers(0, 256, (10, 12, 3), dtype=np.uint8))
    b = RgbImage(r.integers(0, 256, (10, 12, 3), dtype=np.uint8))
    boxes = frame_difference_detect(a, b, threshold, min_area)
    changed = np.abs(grayscale(b) - grayscale(a)) > threshold
    assert [(k.x, k.y, k.w, k.h) for k in boxes] == components_bfs(changed, min_area)
    assert frame_difference_detect(b, a, threshold, min_area) == boxes
    for k in boxes:
        assert k.x + k.w <= 12 and k.y + k.h <= 10
        assert k.w * k.h >= min_area
