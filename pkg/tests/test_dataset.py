from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccnet.colorcode import RED, WHITE, occupancy_ratio
from ccnet.dataset import LabeledSample, SplitSpec, load_manifest, split, synth_generate, write_synth_dataset
from ccnet.errors import InputError
from ccnet.imaging import read_ppm


def write(path, rows, header="path,label"):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def test_medium_rows_dropped(tmp_path):
    m = write(tmp_path / "m.csv", ["a.ppm,congested", "b.ppm,medium", "c.ppm,non_congested"])
    samples, stats = load_manifest(m, with_stats=True)
    assert [s.label for s in samples] == ["congested", "non_congested"]
    assert (stats.congested, stats.non_congested, stats.medium_dropped) == (1, 1, 1)


def test_relative_paths_resolve_against_manifest(tmp_path):
    m = write(tmp_path / "m.csv", ["img/a.ppm,congested", "/abs/b.ppm,non_congested"])
    a, b = load_manifest(m)
    assert a.image_path == str(tmp_path / "img" / "a.ppm")
    assert b.image_path == "/abs/b.ppm"


def test_full_size_counts(tmp_path):
    rows = [f"n{i}.ppm,non_congested" for i in range(2990)]
    rows += [f"c{i}.ppm,congested" for i in range(1120)]
    rows += [f"m{i}.ppm,medium" for i in range(37)]
    samples, stats = load_manifest(write(tmp_path / "m.csv", rows), with_stats=True)
    assert len(samples) == stats.retained == 4110
    assert (stats.non_congested, stats.congested) == (2990, 1120)


def test_unknown_label_cites_row(tmp_path):
    m = write(tmp_path / "m.csv", ["a.ppm,congested", "b.ppm,jammed"])
    with pytest.raises(InputError, match="row 3"):
        load_manifest(m)


@pytest.mark.parametrize("header", ["file,label", "label,path", ""])
def test_missing_header(tmp_path, header):
    m = tmp_path / "m.csv"
    m.write_text((header + "\n" if header else "") + "a.ppm,congested\n")
    with pytest.raises(InputError, match="header"):
        load_manifest(m)


def test_empty_file_is_missing_header(tmp_path):
    (tmp_path / "m.csv").write_text("")
    with pytest.raises(InputError, match="header"):
        load_manifest(tmp_path / "m.csv")


def samples(n_cong, n_non):
    return [LabeledSample(f"c{i}", "congested") for i in range(n_cong)] + [
        LabeledSample(f"n{i}", "non_congested") for i in range(n_non)
    ]


def test_split_sizes():
    tr, va = split(samples(5, 5), SplitSpec(0.8, 1))
    assert (len(tr), len(va)) == (8, 2)


def test_split_stratified():
    tr, _ = split(samples(15, 5), SplitSpec(0.8, 3))
    assert Counter(s.label for s in tr) == {"congested": 12, "non_congested": 4}


def test_split_deterministic_and_seeded():
    data = samples(30, 30)
    assert split(data, SplitSpec(0.5, 7)) == split(data, SplitSpec(0.5, 7))
    assert split(data, SplitSpec(0.5, 7)) != split(data, SplitSpec(0.5, 8))


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.3])
def test_split_fraction_range(fraction):
    with pytest.raises(InputError):
        SplitSpec(fraction)


def test_split_needs_two_samples():
    with pytest.raises(InputError):
        split(samples(1, 0), SplitSpec())


@settings(max_examples=60, deadline=None)
@given(
    n_cong=st.integers(0, 40),
    n_non=st.integers(0, 40),
    fraction=st.floats(0.05, 0.95),
    seed=st.integers(0, 1000),
)
def test_split_partition_properties(n_cong, n_non, fraction, seed):
    data = samples(n_cong, n_non)
    if len(data) < 2:
        return
    tr, va = split(data, SplitSpec(fraction, seed))
    assert len(tr) == int(np.floor(len(data) * fraction))
    assert set(tr).isdisjoint(va)
    assert Counter(tr) + Counter(va) == Counter(data)
    # each class is represented in proportion, within one sample
    for label, total in (("congested", n_cong), ("non_congested", n_non)):
        got = sum(s.label == label for s in tr)
        assert abs(got - total * len(tr) / len(data)) <= 1


def test_synth_box_counts_and_labels():
    data = synth_generate(30, 32, seed=5)
    assert len(data) == 60
    for s in data:
        lo, hi = (12, 25) if s.label == 1 else (0, 5)
        assert lo <= len(s.boxes) <= hi
        for b in s.boxes:
            assert 3 <= b.w <= 6 and 3 <= b.h <= 6  # ceil(0.08*32) .. floor(0.2*32)


def test_synth_deterministic():
    a, b = synth_generate(10, 40, 3), synth_generate(10, 40, 3)
    assert all(x.mask == y.mask and x.label == y.label for x, y in zip(a, b))
    assert any(x.mask != y.mask for x, y in zip(a, synth_generate(10, 40, 4)))


def test_synth_occupancy_separates_classes():
    data = synth_generate(200, 64, seed=7)
    occ = {0: [], 1: []}
    for mask, label in data:
        assert mask.colors() <= {RED, WHITE}
        occ[label].append(occupancy_ratio(mask))
    assert np.mean(occ[1]) > np.mean(occ[0])


def test_synth_rejects_small_frames():
    with pytest.raises(InputError):
        synth_generate(1, 31, 0)


def test_write_synth_dataset(tmp_path):
    masks, raw = write_synth_dataset(tmp_path, 3, 32, 1)
    m, r = load_manifest(masks), load_manifest(raw)
    assert [s.label for s in m] == [s.label for s in r] == ["congested", "non_congested"] * 3
    img = read_ppm(m[0].image_path)
    assert (img.width, img.height) == (32, 32) and img.colors() <= {RED, WHITE}
    assert len(read_ppm(r[0].image_path).colors()) > 2
