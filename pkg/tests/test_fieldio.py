import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpsh.fieldio import FieldFormatError, dumps, load_field, loads, parse_header, save_field
from kpsh.fields import GridDomain, ScalarField


def sample_field(seed=0, topology="box"):
    d = GridDomain.cube(1, 5, 0.7, topology=topology) if topology == "box" else GridDomain.torus(1, 6)
    return ScalarField(d, np.random.default_rng(seed).standard_normal(d.shape))


@pytest.mark.parametrize("csv", [False, True])
@pytest.mark.parametrize("topology", ["box", "torus"])
def test_round_trip_is_exact(csv, topology):
    f = sample_field(1, topology)
    g = loads(dumps(f, csv=csv), csv=csv)
    assert g.domain == f.domain
    assert np.array_equal(g.values, f.values)


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=9, max_size=9))
def test_csv_keeps_every_bit(vals):
    d = GridDomain(1, (3, 3), (0.1, 0.2), (0.0, -1.0))
    f = ScalarField(d, np.array(vals).reshape(3, 3))
    assert np.array_equal(loads(dumps(f, csv=True), csv=True).values, f.values)


def test_files_pick_format_by_extension(tmp_path):
    f = sample_field(2)
    for name in ("f.bin", "f.csv"):
        save_field(tmp_path / name, f)
        assert np.array_equal(load_field(tmp_path / name).values, f.values)
    assert (tmp_path / "f.csv").read_text().count("\n") == 1 + f.values.size


def test_header_parsing():
    d = parse_header("1, 4, 4, 0.5, 0.5, -1.0, -1.0, box")
    assert d.shape == (4, 4) and d.spacing == (0.5, 0.5) and d.topology == "box"
    with pytest.raises(FieldFormatError):
        parse_header("1, 4, 4, box")
    with pytest.raises(FieldFormatError):
        parse_header("x, 4")


def test_truncated_body_rejected():
    data = dumps(sample_field())
    with pytest.raises(FieldFormatError):
        loads(data[:-8])
    with pytest.raises(FieldFormatError):
        loads(b"no newline")
