import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from smoothcal import metrics
from smoothcal.errors import InvalidInputError, UndefinedMetricError


@st.composite
def prediction_sets(draw, max_n=50, both_classes=False):
    n = draw(st.integers(2 if both_classes else 1, max_n))
    probs = draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if both_classes:
        labels[0], labels[1] = 0, 1
    return np.array(probs), np.array(labels)


class TestAUC:
    def test_perfect(self):
        assert metrics.auc([0.9, 0.8, 0.4, 0.2], [1, 1, 0, 0]) == 1.0

    def test_tie(self):
        assert metrics.auc([0.7, 0.7], [1, 0]) == 0.5

    def test_pairs(self):
        assert metrics.auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            metrics.auc([0.1, 0.2], [1, 1])

    def test_bad_input(self):
        with pytest.raises(InvalidInputError):
            metrics.auc([0.1, 0.2], [1])
        with pytest.raises(InvalidInputError):
            metrics.auc([0.1, 1.2], [1, 0])
        with pytest.raises(InvalidInputError):
            metrics.auc([0.1, 0.2], [1, 2])

    @settings(max_examples=200, deadline=None)
    @given(ps=prediction_sets(max_n=100, both_classes=True))
    def test_matches_pair_counting(self, ps):
        p, y = ps
        assert abs(metrics.auc(p, y) - oracles.auc_pairs(p, y)) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(ps=prediction_sets(both_classes=True))
    def test_label_flip(self, ps):
        p, y = ps
        assert metrics.auc(p, y) == pytest.approx(1 - metrics.auc(p, 1 - y), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(ps=prediction_sets(both_classes=True))
    def test_rank_invariance(self, ps):
        p, y = ps
        # on a 1/1000 grid p**3 stays strictly increasing in float64 (no underflow ties)
        p = np.round(p, 3)
        assert metrics.auc(p ** 3, y) == metrics.auc(p, y)


class TestECE:
    def test_perfect_confidence(self):
        e, _ = metrics.ece([1.0, 0.0, 1.0], [1, 0, 1])
        assert e == 0.0

    def test_hand_binned(self):
        e, bins = metrics.ece([0.9, 0.9, 0.8, 0.6], [1, 0, 1, 0])
        assert e == pytest.approx(0.4, abs=1e-15)
        nonempty = {i: b for i, b in enumerate(bins) if b.count}
        assert {i: b.count for i, b in nonempty.items()} == {9: 1, 12: 1, 13: 2}
        assert nonempty[13].accuracy == 0.5 and nonempty[13].mean_confidence == pytest.approx(0.9)
        assert nonempty[12].accuracy == 1.0 and nonempty[9].accuracy == 0.0

    def test_all_half(self):
        e, _ = metrics.ece([0.5] * 4, [1, 1, 0, 0])
        assert e == 0.0

    def test_fifteen_bins_default(self):
        _, bins = metrics.ece([0.7], [1])
        assert len(bins) == 15
        assert bins[0].lower == 0.0 and bins[-1].upper == 1.0

    def test_boundaries(self):
        assert metrics.bin_index(1.0, 15) == 14
        assert metrics.bin_index(0.0, 15) == 0
        assert metrics.bin_index(np.nextafter(1.0, 0), 15) == 14

    @pytest.mark.parametrize("n_bins", [7, 13, 15, 31, 49])
    def test_membership_matches_edges(self, n_bins):
        edges = np.arange(n_bins + 1) / n_bins
        x = np.concatenate([edges, np.nextafter(edges, 0), np.nextafter(edges, 1)])
        x = x[(x >= 0) & (x <= 1)]
        idx = metrics.bin_index(x, n_bins)
        inside = (edges[idx] <= x) & ((x < edges[idx + 1]) | (idx == n_bins - 1))
        assert inside.all()

    @pytest.mark.parametrize("n_bins", [0, -1, 2.5])
    def test_bad_bins(self, n_bins):
        with pytest.raises(InvalidInputError):
            metrics.ece([0.5], [1], n_bins)

    @settings(max_examples=300, deadline=None)
    @given(ps=prediction_sets())
    def test_matches_bruteforce(self, ps):
        p, y = ps
        e, bins = metrics.ece(p, y)
        assert 0.0 <= e <= 1.0
        assert abs(e - oracles.ece_bruteforce(p.tolist(), y.tolist())) <= 1e-12
        assert sum(b.count for b in bins) == len(p)

    @settings(max_examples=100, deadline=None)
    @given(ps=prediction_sets())
    def test_one_bin(self, ps):
        p, y = ps
        conf = np.maximum(p, 1 - p)
        acc = np.mean((p >= 0.5) == y)
        assert metrics.ece(p, y, n_bins=1)[0] == pytest.approx(abs(acc - conf.mean()), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(ps=prediction_sets())
    def test_ece_is_weighted_gap(self, ps):
        p, y = ps
        e, bins = metrics.ece(p, y)
        gap = sum(b.count / len(p) * abs(b.accuracy - b.mean_confidence) for b in bins if b.count)
        assert e == pytest.approx(gap, abs=1e-12)
        assert metrics.ece_score(p, y) == e


class TestReliability:
    def test_empty_bins(self):
        bins = metrics.reliability_table([0.95], [1], 15)
        empty = [b for b in bins if b.count == 0]
        assert len(empty) == 14
        assert all(b.accuracy is None and b.mean_confidence is None for b in empty)

    def test_single_certain_sample(self):
        bins = metrics.reliability_table([1.0], [1], 15)
        assert bins[-1].count == 1 and bins[-1].accuracy == 1.0 and bins[-1].mean_confidence == 1.0

    def test_same_as_ece_bins(self):
        p, y = [0.9, 0.9, 0.8, 0.6], [1, 0, 1, 0]
        assert metrics.reliability_table(p, y) == metrics.ece(p, y)[1]
        assert sorted(b.count for b in metrics.reliability_table(p, y) if b.count) == [1, 1, 2]

    def test_csv(self, tmp_path):
        path = tmp_path / "rel.csv"
        metrics.write_reliability_csv(metrics.reliability_table([0.9, 0.6], [1, 0], 3), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "bin_lower,bin_upper,count,mean_confidence,accuracy"
        assert lines[1] == "0,0.333333333333,0,,"
        assert lines[2] == "0.333333333333,0.666666666667,1,0.6,0"
        assert lines[3] == "0.666666666667,1,1,0.9,1"


class TestReport:
    def test_evaluate_and_json(self):
        r = metrics.evaluate([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
        assert r.auc == 0.75 and r.n == 4 and len(r.bins) == 15
        d = json.loads(r.to_json())
        assert set(d) == {"auc", "ece", "n", "bins"}
        assert metrics.CalibrationReport.from_dict(d) == r


def _rep(auc, ece=0.05):
    return metrics.CalibrationReport(auc=auc, ece=ece, n=10)


class TestAggregate:
    def test_single(self):
        s = metrics.aggregate([_rep(0.847)])
        assert s.auc_mean == pytest.approx(84.7) and s.auc_std == 0.0

    def test_two_point_std(self):
        s = metrics.aggregate([_rep(0.84), _rep(0.86)])
        assert s.auc_mean == pytest.approx(85.0)
        assert s.auc_std == pytest.approx(1.4142135623730951, rel=1e-12)
        assert s.auc_row == "85.0 ± 1.4"

    def test_row_format(self):
        assert metrics.Summary.format_pm(84.7, 0.8) == "84.7 ± 0.8"
        assert metrics.Summary.format_pm(86.3, 0.7) == "86.3 ± 0.7"

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            metrics.aggregate([])

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=12), st.randoms())
    def test_order_independent(self, aucs, rnd):
        reps = [_rep(a, a / 2) for a in aucs]
        shuffled = reps[:]
        rnd.shuffle(shuffled)
        assert metrics.aggregate(reps) == metrics.aggregate(shuffled)
