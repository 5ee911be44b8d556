import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balmatch.data import DataError, Dataset, load_dataset, summarize, write_dataset
from balmatch.simlab import dgp_a, dgp_sample


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_four_row_file(tmp_path):
    p = _write(tmp_path, "id,z,y,x1\na,1,1.5,0\nb,1,2,1\nc,0,0,0\nd,0,-1,1\n")
    ds = load_dataset(p)
    assert ds.n == 4 and ds.d == 1
    assert ds.ids == ("a", "b", "c", "d")
    np.testing.assert_array_equal(ds.z, [1, 1, 0, 0])
    np.testing.assert_array_equal(ds.y, [1.5, 2.0, 0.0, -1.0])


def test_bad_treatment_names_row(tmp_path):
    p = _write(tmp_path, "id,z,y,x1\na,1,1,0\nb,0,2,1\nc,2,0,0\n")
    with pytest.raises(DataError, match="row 3"):
        load_dataset(p)


@pytest.mark.parametrize("body, pattern", [
    ("id,z,y\na,1,1\n", "no covariate"),
    ("id,z,x1\na,1,1\n", "missing column 'y'"),
    ("id,z,y,x1\na,1,1,0\na,0,1,0\n", "row 2: duplicate id"),
    ("id,z,y,x1\na,1,abc,0\n", "row 1: column 'y' is not numeric"),
    ("id,z,y,x1\na,1,1,nan\n", "row 1: column 'x1'"),
    ("id,z,y,x1\na,1,1\n", "row 1: expected 4 fields"),
    ("", "empty file"),
    ("id,z,y,x1\n", "no data rows"),
])
def test_malformed_files(tmp_path, body, pattern):
    with pytest.raises(DataError, match=pattern):
        load_dataset(_write(tmp_path, body))


def test_round_trip_of_simulated_data(tmp_path):
    ds = dgp_sample(dgp_a(), 1000, 3)
    write_dataset(ds, tmp_path / "sim.csv")
    assert load_dataset(tmp_path / "sim.csv") == ds


def test_dataset_is_immutable():
    ds = Dataset.from_arrays([1, 0], [1.0, 2.0], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        ds.x[0, 0] = 5.0


def test_constructor_validation():
    with pytest.raises(DataError):
        Dataset.from_arrays([1, 2], [1.0, 2.0], [[0.0], [1.0]])
    with pytest.raises(DataError):
        Dataset.from_arrays([1, 0], [1.0, np.inf], [[0.0], [1.0]])
    with pytest.raises(DataError):
        Dataset.from_arrays([1, 0], [1.0, 2.0], [[0.0], [1.0]], ids=["a", "a"])


def test_summary_identical_arms():
    ds = Dataset.from_arrays([1, 1, 0, 0], [0, 0, 0, 0], [[0.0, 2.0], [1.0, 3.0], [1.0, 3.0], [0.0, 2.0]])
    np.testing.assert_array_equal(summarize(ds).mean_difference, [0.0, 0.0])


def test_summary_mean_difference():
    ds = Dataset.from_arrays([1, 1, 0, 0], [0, 0, 0, 0], [[0.5], [1.5], [-1.0], [1.0]])
    s = summarize(ds)
    assert s.n_treated == 2 and s.n_control == 2
    np.testing.assert_allclose(s.mean_difference, [1.0])


def test_simulated_treated_fraction_matches_marginal_propensity():
    spec = dgp_a()
    ds = dgp_sample(spec, 1000, 7)
    p = spec.marginal_propensity
    frac = summarize(ds).n_treated / ds.n
    assert abs(frac - p) <= 3 * np.sqrt(p * (1 - p) / 1000)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)),
                min_size=1, max_size=30))
def test_write_load_round_trip(tmp_path_factory, rows):
    z, y, x = zip(*rows)
    ds = Dataset.from_arrays(z, y, np.array(x)[:, None])
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_dataset(ds, path)
    assert load_dataset(path) == ds
