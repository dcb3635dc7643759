import numpy as np
import pytest

from alrank.dataset import (Dataset, ObjectiveBinning, ObjectiveSpec,
                            derive_objective_labels, label_datasets,
                            parse_letor, split_train_valid, to_letor)
from alrank.errors import ConfigError, ParseError


class TestParseLetor:
    def test_single_line(self):
        ds = parse_letor("2 qid:7 1:0.5 3:1.0")
        assert ds.n_docs == 1
        assert ds.labels.tolist() == [2]
        assert ds.qids == ("7",)
        # missing fid 2 reads as 0.0
        assert ds.features.tolist() == [[0.5, 0.0, 1.0]]

    def test_grouping_by_qid(self):
        ds = parse_letor("0 qid:1 1:1.0\n1 qid:1 1:2.0\n0 qid:2 1:3.0")
        assert ds.n_docs == 3
        assert sorted(len(g) for g in ds.groups) == [1, 2]

    def test_documents_keep_input_order(self):
        ds = parse_letor("3 qid:a 1:1.0\n1 qid:a 1:2.0\n0 qid:b 1:3.0")
        assert ds.labels.tolist() == [3, 1, 0]

    def test_interleaved_qids_group_by_value(self):
        # Groups are keyed by qid value, ordered by first appearance, rows
        # inside a group keep input order.
        ds = parse_letor("1 qid:a 1:1.0\n2 qid:b 1:2.0\n3 qid:a 1:3.0")
        assert [g.query_id for g in ds.groups] == ["a", "b"]
        assert ds.features[:, 0].tolist() == [1.0, 3.0, 2.0]
        ga = ds.groups[0]
        assert ds.labels[ga.start:ga.end].tolist() == [1, 3]

    def test_feature_width_is_max_fid(self):
        ds = parse_letor("0 qid:1 2:1.0\n0 qid:2 5:2.0")
        assert ds.n_features == 5

    def test_comments_ignored(self):
        ds = parse_letor("1 qid:1 1:2.0 # docid = 42\n\n0 qid:1 1:1.0")
        assert ds.n_docs == 2

    def test_malformed_line_names_line_number(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_letor("1 qid:1 1:1.0\nbogus\n0 qid:2 1:3.0")

    def test_negative_label_rejected(self):
        with pytest.raises(ParseError, match="non-negative"):
            parse_letor("-1 qid:1 1:1.0")

    def test_float_label_rejected(self):
        with pytest.raises(ParseError, match="non-negative"):
            parse_letor("1.5 qid:1 1:1.0")

    def test_non_increasing_fid_rejected(self):
        with pytest.raises(ParseError, match="strictly increasing"):
            parse_letor("1 qid:1 2:1.0 2:2.0")

    def test_empty_stream(self):
        with pytest.raises(ParseError, match="no documents"):
            parse_letor("")

    def test_accepts_line_iterables(self):
        ds = parse_letor(iter(["1 qid:1 1:1.0\n", "0 qid:1 1:0.5\n"]))
        assert ds.n_docs == 2


class TestRoundTrip:
    def test_fixed_case(self):
        text = "2 qid:7 1:0.5 2:0.0 3:1.0\n0 qid:7 1:0.25 2:1.0 3:0.0\n1 qid:8 1:3.5 2:0.125 3:2.0\n"
        ds = parse_letor(text)
        again = parse_letor(to_letor(ds))
        assert np.array_equal(again.features, ds.features)
        assert np.array_equal(again.labels, ds.labels)
        assert again.qids == ds.qids
        assert again.groups == ds.groups

    def test_random_datasets(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n_q = int(rng.integers(1, 6))
            lines = []
            for q in range(n_q):
                for _ in range(int(rng.integers(1, 5))):
                    feats = " ".join(f"{f + 1}:{rng.normal():.17g}" for f in range(3))
                    lines.append(f"{rng.integers(0, 5)} qid:q{q} {feats}")
            ds = parse_letor("\n".join(lines))
            again = parse_letor(to_letor(ds))
            assert np.array_equal(again.features, ds.features)
            assert again.qids == ds.qids


class TestObjectiveSpec:
    def test_label_source_must_be_goodness(self):
        with pytest.raises(ConfigError):
            ObjectiveSpec("x", feature=None, direction="badness")

    def test_grade_count_floor(self):
        with pytest.raises(ConfigError, match="at least 2"):
            ObjectiveSpec("x", feature=1, grades=1)

    def test_bad_direction(self):
        with pytest.raises(ConfigError):
            ObjectiveSpec("x", feature=1, direction="up")


def _column_dataset(values):
    lines = [f"0 qid:{i // 2} 1:{float(v)!r}" for i, v in enumerate(values)]
    return parse_letor("\n".join(lines))


class TestDeriveObjectiveLabels:
    def test_goodness_distinct_values(self):
        ds = _column_dataset([1.0, 2.0, 3.0, 4.0])
        spec = ObjectiveSpec("t", feature=1, direction="goodness", grades=4)
        assert derive_objective_labels(ds, spec).tolist() == [0, 1, 2, 3]

    def test_badness_flips(self):
        ds = _column_dataset([1.0, 2.0, 3.0, 4.0])
        spec = ObjectiveSpec("t", feature=1, direction="badness", grades=4)
        assert derive_objective_labels(ds, spec).tolist() == [3, 2, 1, 0]

    def test_constant_column_all_zero(self):
        ds = _column_dataset([5.0, 5.0, 5.0, 5.0])
        spec = ObjectiveSpec("t", feature=1, direction="goodness", grades=4)
        assert derive_objective_labels(ds, spec).tolist() == [0, 0, 0, 0]

    def test_feature_id_out_of_range(self):
        ds = _column_dataset([1.0, 2.0])
        spec = ObjectiveSpec("t", feature=9, direction="goodness")
        with pytest.raises(ConfigError, match="out of range"):
            derive_objective_labels(ds, spec)

    def test_badness_largest_raw_gets_grade_zero(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            vals = rng.permutation(rng.uniform(0, 10, 12))
            ds = _column_dataset(list(vals))
            spec = ObjectiveSpec("t", feature=1, direction="badness", grades=4)
            grades = derive_objective_labels(ds, spec)
            assert grades[int(np.argmax(vals))] == 0

    def test_bin_populations_roughly_equal(self):
        # With all-distinct values, bin populations differ by at most one.
        rng = np.random.default_rng(6)
        vals = rng.permutation(np.linspace(0, 1, 40))
        ds = _column_dataset(list(vals))
        spec = ObjectiveSpec("t", feature=1, direction="goodness", grades=5)
        grades = derive_objective_labels(ds, spec)
        counts = np.bincount(grades, minlength=5)
        assert counts.max() - counts.min() <= 1

    def test_ties_go_to_lower_grade(self):
        ds = _column_dataset([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
        spec = ObjectiveSpec("t", feature=1, direction="goodness", grades=2)
        grades = derive_objective_labels(ds, spec)
        assert grades.tolist() == [0, 0, 0, 1, 1, 1]

    def test_training_edges_applied_to_other_split(self):
        train = _column_dataset([1.0, 2.0, 3.0, 4.0])
        other = _column_dataset([0.0, 2.5, 10.0, 3.5])
        spec = ObjectiveSpec("t", feature=1, direction="goodness", grades=4)
        binning = ObjectiveBinning.fit(train, spec)
        grades = derive_objective_labels(other, spec, binning)
        # train edges 1.75/2.5/3.25; 2.5 sits on an edge -> lower grade;
        # 0.0 and 10.0 fall below/above every edge
        assert grades.tolist() == [0, 1, 3, 3]

    def test_label_datasets_attaches_all(self):
        train = _column_dataset([1.0, 2.0, 3.0, 4.0])
        spec = ObjectiveSpec("t", feature=1, direction="goodness", grades=4)
        labeled, = label_datasets([spec], train)
        assert labeled.objective_labels["t"].tolist() == [0, 1, 2, 3]


class TestSplitTrainValid:
    def _dataset(self, n_groups):
        lines = []
        for q in range(n_groups):
            for d in range(3):
                lines.append(f"{d % 3} qid:q{q} 1:{q + 0.1 * d}")
        return parse_letor("\n".join(lines))

    def test_sizes(self):
        ds = self._dataset(10)
        tr, va = split_train_valid(ds, 0.8, seed=42)
        assert len(tr.groups) == 8
        assert len(va.groups) == 2
        assert set(g.query_id for g in tr.groups).isdisjoint(
            g.query_id for g in va.groups)

    def test_deterministic(self):
        ds = self._dataset(10)
        a = split_train_valid(ds, 0.8, seed=42)
        b = split_train_valid(ds, 0.8, seed=42)
        assert [g.query_id for g in a[0].groups] == [g.query_id for g in b[0].groups]
        assert np.array_equal(a[1].features, b[1].features)

    def test_both_sides_nonempty(self):
        ds = self._dataset(3)
        tr, va = split_train_valid(ds, 0.5, seed=0)
        assert {len(tr.groups), len(va.groups)} == {1, 2}

    def test_too_few_groups(self):
        ds = self._dataset(1)
        with pytest.raises(ConfigError, match="at least 2"):
            split_train_valid(ds, 0.5, seed=0)

    def test_bad_fraction(self):
        ds = self._dataset(4)
        with pytest.raises(ConfigError):
            split_train_valid(ds, 1.0, seed=0)

    def test_groups_stay_contiguous(self):
        ds = self._dataset(7)
        tr, va = split_train_valid(ds, 0.6, seed=9)
        for part in (tr, va):
            for g in part.groups:
                assert len(set(part.qids[g.start:g.end])) == 1
            covered = sorted(i for g in part.groups for i in range(g.start, g.end))
            assert covered == list(range(part.n_docs))


def test_document_accessor():
    ds = parse_letor("2 qid:7 1:0.5")
    doc = ds.document(0)
    assert doc.primary_label == 2
    assert doc.query_id == "7"
    assert doc.features.tolist() == [0.5]


def test_max_grade():
    ds = parse_letor("2 qid:1 1:0.5\n4 qid:1 1:0.2")
    assert ds.max_grade == 4
