import io

import numpy as np
import pytest

from ncadmm import data
from ncadmm.exceptions import ConfigError, ParseError


class TestGraphGuided:
    def test_shapes_and_labels(self):
        ds, prec, x_star = data.gen_graph_guided(50, 7, seed=0)
        assert ds.features.shape == (50, 7)
        assert set(np.unique(ds.labels)) <= {-1.0, 1.0}
        assert x_star.shape == (7,)
        assert prec.Lambda.shape == (7, 7)

    def test_precision_positive_definite(self):
        _, prec, _ = data.gen_graph_guided(10, 12, seed=3)
        evals = np.linalg.eigvalsh(prec.Lambda)
        assert evals[0] >= 0.1 - 1e-12

    def test_support_excludes_diagonal(self):
        _, prec, _ = data.gen_graph_guided(10, 12, seed=3)
        assert not prec.support.diagonal().any()
        assert np.array_equal(prec.support, prec.support.T)

    def test_deterministic(self):
        a = data.gen_graph_guided(30, 5, seed=9)
        b = data.gen_graph_guided(30, 5, seed=9)
        assert np.array_equal(a[0].features, b[0].features)
        assert np.array_equal(a[0].labels, b[0].labels)
        assert np.array_equal(a[2], b[2])

    def test_seed_changes_data(self):
        a = data.gen_graph_guided(30, 5, seed=9)
        b = data.gen_graph_guided(30, 5, seed=10)
        assert not np.array_equal(a[0].features, b[0].features)

    def test_truth_independent_of_sample_count(self):
        # separate substreams: growing n must not change x_star or Lambda
        _, prec_a, xs_a = data.gen_graph_guided(10, 6, seed=4)
        _, prec_b, xs_b = data.gen_graph_guided(200, 6, seed=4)
        assert np.array_equal(xs_a, xs_b)
        assert np.array_equal(prec_a.Lambda, prec_b.Lambda)

    def test_bad_sizes_rejected(self):
        with pytest.raises(ConfigError):
            data.gen_graph_guided(0, 5, seed=0)


class TestOverlap:
    def test_shapes(self):
        ds, x_star = data.gen_overlap(40, seed=1, grid=6)
        assert ds.features.shape == (40, 36)
        assert set(np.unique(ds.labels)) <= {-1.0, 1.0}

    def test_truth_sparsity_pattern(self):
        _, x_star = data.gen_overlap(5, seed=2, grid=6)
        X = x_star.reshape(6, 6, order="F")
        assert np.all(X[:, 1:] == 0.0)
        assert np.any(X[:, 0] != 0.0)


GOOD = """\
# comment line
+1 1:0.5 3:-2.0

-1 2:1.0
+1 1:1.5 2:0.25 4:4.0
"""


class TestParseLibsvm:
    def test_basic(self):
        ds = data.parse_libsvm(io.StringIO(GOOD))
        assert ds.n == 3 and ds.d == 4
        dense = ds.features.toarray()
        assert np.allclose(dense[0], [0.5, 0.0, -2.0, 0.0])
        assert np.allclose(dense[1], [0.0, 1.0, 0.0, 0.0])
        assert set(ds.labels) == {-1.0, 1.0}

    def test_n_features_override(self):
        ds = data.parse_libsvm(io.StringIO(GOOD), n_features=6)
        assert ds.d == 6
        with pytest.raises(ParseError):
            data.parse_libsvm(io.StringIO(GOOD), n_features=2)

    def test_bad_label(self):
        with pytest.raises(ParseError) as exc:
            data.parse_libsvm(io.StringIO("abc 1:1.0\n"))
        assert exc.value.line == 1

    def test_nonincreasing_index(self):
        with pytest.raises(ParseError):
            data.parse_libsvm(io.StringIO("+1 2:1.0 2:2.0\n"))
        with pytest.raises(ParseError):
            data.parse_libsvm(io.StringIO("+1 3:1.0 1:2.0\n"))

    def test_zero_index_rejected(self):
        with pytest.raises(ParseError):
            data.parse_libsvm(io.StringIO("+1 0:1.0\n"))

    def test_bad_feature_token(self):
        with pytest.raises(ParseError) as exc:
            data.parse_libsvm(io.StringIO("+1 1:1.0\n-1 2\n"))
        assert exc.value.line == 2

    def test_empty_rejected(self):
        with pytest.raises(ParseError):
            data.parse_libsvm(io.StringIO("# only comments\n\n"))

    def test_binary_label_mapping(self):
        ds = data.parse_libsvm(io.StringIO("2 1:1\n4 1:2\n2 1:3\n"))
        assert np.array_equal(ds.labels, [-1.0, 1.0, -1.0])

    def test_multiclass_label_mapping(self):
        ds = data.parse_libsvm(io.StringIO("7 1:1\n3 1:2\n9 1:3\n3 1:4\n"))
        assert np.array_equal(ds.labels, [1.0, 0.0, 2.0, 0.0])
        assert ds.meta["classes"] == 3

    def test_forced_binary_on_multiclass_rejected(self):
        with pytest.raises(ParseError):
            data.parse_libsvm(
                io.StringIO("1 1:1\n2 1:2\n3 1:3\n"), label_mode="binary"
            )

    def test_round_trip(self, tmp_path, rng):
        feats = rng.standard_normal((10, 5))
        feats[rng.random((10, 5)) < 0.5] = 0.0
        labels = np.where(rng.random(10) < 0.5, -1.0, 1.0)
        ds = data.Dataset(features=feats, labels=labels, meta={"name": "t"})
        path = tmp_path / "t.libsvm"
        data.write_libsvm(ds, path, sidecar=path.with_suffix(".json"))
        back = data.parse_libsvm(path, n_features=5)
        assert np.allclose(back.features.toarray(), feats, atol=0)
        assert np.array_equal(back.labels, labels)
        assert path.with_suffix(".json").exists()

    def test_nan_features_rejected(self):
        with pytest.raises(ConfigError):
            data.Dataset(features=np.array([[np.nan]]), labels=np.array([1.0]))


class TestSplit:
    def test_disjoint_exhaustive(self):
        ds, _, _ = data.gen_graph_guided(31, 4, seed=0)
        tr, te = data.split(ds, 0.5, seed=5)
        assert tr.n + te.n == 31
        assert tr.meta["split"] == "train" and te.meta["split"] == "test"
        joined = np.vstack([tr.features, te.features])
        assert {tuple(row) for row in joined} == {
            tuple(row) for row in np.asarray(ds.features)
        }

    def test_deterministic(self):
        ds, _, _ = data.gen_graph_guided(20, 4, seed=0)
        a = data.split(ds, 0.6, seed=1)
        b = data.split(ds, 0.6, seed=1)
        assert np.array_equal(a[0].features, b[0].features)

    def test_degenerate_rejected(self):
        ds, _, _ = data.gen_graph_guided(5, 3, seed=0)
        with pytest.raises(ConfigError):
            data.split(ds, 0.01, seed=0)
        with pytest.raises(ConfigError):
            data.split(ds, 1.5, seed=0)
