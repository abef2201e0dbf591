import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.io import savemat

from meda.data import (
    SyntheticTaskSpec,
    generate_synthetic,
    infer_format,
    load_dataset,
    make_pair,
    normalize,
    reindex_labels,
    save_dataset,
    standard_spec,
    write_json,
)
from meda.errors import DegenerateError, DegenerateFeatureWarning, DimensionError, ParseError
from meda.features import FeatureMatrix
from meda.learner import Hyper
from meda.pipeline import run_task


class TestLoad:
    def test_dense_example(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1.0,2.0,1\n3.0,4.0,2")
        x = load_dataset(path)
        np.testing.assert_array_equal(x.data, [[1, 2], [3, 4]])
        np.testing.assert_array_equal(x.labels, [1, 2])

    def test_whitespace_and_comments(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("# header\n1 2 3\n\n4 5 6\n")
        np.testing.assert_array_equal(load_dataset(path).labels, [3, 6])

    def test_sparse_example(self, tmp_path):
        path = tmp_path / "s.svm"
        path.write_text("2 1:0.5 3:1.5\n")
        x = load_dataset(path, n_features=4)
        np.testing.assert_array_equal(x.data, [[0.5, 0, 1.5, 0]])
        np.testing.assert_array_equal(x.labels, [2])

    def test_mat(self, tmp_path):
        path = tmp_path / "m.mat"
        savemat(path, {"fts": np.arange(6.0).reshape(3, 2), "labels": np.array([[1], [2], [1]])})
        x = load_dataset(path)
        assert x.data.shape == (3, 2)
        np.testing.assert_array_equal(x.labels, [1, 2, 1])

    def test_parse_error_has_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,1\n3,oops,2\n")
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(path)

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("1,2,1\n3,2\n")
        with pytest.raises(DimensionError):
            load_dataset(path)

    def test_sparse_bad_pair(self, tmp_path):
        path = tmp_path / "bad.svm"
        path.write_text("1 1:0.5\n1 0:2\n")
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(path)

    def test_format_inference(self):
        assert infer_format("a.csv") == "dense"
        assert infer_format("a.libsvm") == "sparse"
        with pytest.raises(ParseError):
            infer_format("a.bin")


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)


@settings(max_examples=50, deadline=None)
@given(data=arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 5)), elements=finite),
       fmt=st.sampled_from(["csv", "svm"]))
def test_round_trip(tmp_path_factory, data, fmt):
    labels = np.arange(1, len(data) + 1)
    path = tmp_path_factory.mktemp("rt") / f"x.{fmt}"
    save_dataset(FeatureMatrix(data, labels=labels), path)
    back = load_dataset(path, n_features=data.shape[1])
    np.testing.assert_array_equal(back.data, data)
    np.testing.assert_array_equal(back.labels, labels)


class TestNormalize:
    def test_unit_l2(self):
        out, _ = normalize(np.array([[3.0, 4.0]]), "unit_l2")
        np.testing.assert_allclose(out.data, [[0.6, 0.8]])

    def test_zscore_fitting_set(self, rng):
        out, _ = normalize(rng.normal(size=(40, 5)) * 3 + 2, "zscore")
        np.testing.assert_allclose(out.data.mean(0), 0, atol=1e-10)
        np.testing.assert_allclose(out.data.std(0), 1, atol=1e-10)

    def test_stats_reuse(self, rng):
        x = rng.normal(size=(20, 3))
        out, stats = normalize(x, "zscore")
        again, _ = normalize(x.copy(), "zscore", stats)
        np.testing.assert_array_equal(out.data, again.data)

    def test_zero_variance_feature(self, rng):
        x = np.column_stack([rng.normal(size=10), np.full(10, 4.0)])
        with pytest.warns(DegenerateFeatureWarning):
            out, _ = normalize(x, "zscore")
        np.testing.assert_array_equal(out.data[:, 1], 0.0)

    def test_zero_row(self):
        with pytest.raises(DegenerateError):
            normalize(np.array([[0.0, 0.0], [1.0, 2.0]]), "unit_l2")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            normalize(np.ones((2, 2)), "minmax")


def test_make_pair_nan_target_leaves_source_stats_untouched(rng):
    src = FeatureMatrix(rng.normal(size=(20, 3)), labels=np.repeat([5, 9], 10))
    clean = make_pair(src, FeatureMatrix(rng.normal(size=(6, 3))), normalization="zscore")
    with np.errstate(invalid="ignore"):
        poisoned = make_pair(src, FeatureMatrix(np.full((6, 3), np.nan)), normalization="zscore")
    np.testing.assert_array_equal(clean.source.data, poisoned.source.data)
    np.testing.assert_array_equal(clean.source.labels, [1] * 10 + [2] * 10)


def test_reindex_labels():
    src, tgt, classes = reindex_labels([10, 30, 10], [30, 20])
    np.testing.assert_array_equal(src, [1, 2, 1])
    np.testing.assert_array_equal(tgt, [2, 0])
    np.testing.assert_array_equal(classes, [10, 30])


class TestSynthetic:
    def test_deterministic(self):
        a, b = generate_synthetic(standard_spec(4)), generate_synthetic(standard_spec(4))
        np.testing.assert_array_equal(a.source.data, b.source.data)
        np.testing.assert_array_equal(a.target.data, b.target.data)
        assert not np.array_equal(a.source.data, generate_synthetic(standard_spec(5)).source.data)

    def test_shapes_and_labels(self):
        pair = generate_synthetic(standard_spec(0))
        assert pair.source.data.shape == (300, 10) == pair.target.data.shape
        np.testing.assert_array_equal(np.unique(pair.source.labels), [1, 2, 3])

    def test_no_shift_is_trivial(self):
        pair = generate_synthetic(SyntheticTaskSpec(n_per_class=40, class_sep=8.0, seed=1))
        outcome = run_task(pair, Hyper(d=3), "zscore")
        assert outcome.final_accuracy == 1.0 and outcome.baseline_accuracy == 1.0

    def test_bad_conditional_shape(self):
        with pytest.raises(DimensionError):
            generate_synthetic(SyntheticTaskSpec(conditional_shift=np.zeros((2, 2))))


def test_write_json(tmp_path, capsys):
    write_json({"b": np.array([1.5]), "a": np.int64(2)}, tmp_path / "o.json")
    assert (tmp_path / "o.json").read_text() == '{\n  "a": 2,\n  "b": [\n    1.5\n  ]\n}\n'
    write_json({"x": 1}, "-")
    assert '"x": 1' in capsys.readouterr().out
