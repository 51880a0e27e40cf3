import math

import numpy as np
import pytest

from conftest import FEASIBLE, FEASIBLE_COST
from vrpqaoa.encode import qubo_value
from vrpqaoa.metrics import (
    aggregate,
    expected_energy_gap,
    optimal_state_probability,
    run_metrics,
    sampling_rank,
)
from vrpqaoa.simcore import ShotHistogram

OPTIMA = (FEASIBLE,)


def hist(counts: dict[str, int]) -> ShotHistogram:
    return ShotHistogram(counts=counts, shots=sum(counts.values()))


class TestOptimalStateProbability:
    def test_all_mass_on_optimum(self):
        assert optimal_state_probability(hist({FEASIBLE: 500}), OPTIMA) == 1.0

    def test_uniform_counts(self):
        counts = {format(i, "06b"): 1 for i in range(64)}
        assert optimal_state_probability(hist(counts), OPTIMA) == pytest.approx(1 / 64)

    def test_partial_mass(self):
        h = hist({FEASIBLE: 250, "000000": 750})
        assert optimal_state_probability(h, OPTIMA) == pytest.approx(0.25)

    def test_empty_histogram(self):
        with pytest.raises(ValueError):
            optimal_state_probability(ShotHistogram(counts={}, shots=0), OPTIMA)

    def test_complement_identity(self):
        h = hist({FEASIBLE: 3, "000000": 5, "101010": 2})
        outside = sum(c for b, c in h.counts.items() if b not in OPTIMA) / h.shots
        assert optimal_state_probability(h, OPTIMA) == pytest.approx(1.0 - outside, abs=1e-12)


class TestExpectedEnergyGap:
    def test_zero_on_optimum(self, toy):
        gap = expected_energy_gap(hist({FEASIBLE: 100}), toy.qubo, FEASIBLE_COST)
        assert gap == pytest.approx(0.0, abs=1e-9)

    def test_all_zero_string(self, toy):
        gap = expected_energy_gap(hist({"000000": 64}), toy.qubo, FEASIBLE_COST)
        assert gap == pytest.approx(5662.8 - 132.0, abs=1e-6)
        assert gap == pytest.approx(qubo_value(toy.qubo, "000000") - 132.0, abs=1e-9)

    def test_linearity_in_histogram(self, toy):
        gap = expected_energy_gap(
            hist({FEASIBLE: 500, "000000": 500}), toy.qubo, FEASIBLE_COST
        )
        assert gap == pytest.approx(5530.8 / 2, abs=1e-6)

    def test_mixture_affinity(self, toy):
        h1 = hist({FEASIBLE: 100})
        h2 = hist({"000000": 300})
        merged = hist({FEASIBLE: 100, "000000": 300})
        g = expected_energy_gap(merged, toy.qubo, FEASIBLE_COST)
        g1 = expected_energy_gap(h1, toy.qubo, FEASIBLE_COST)
        g2 = expected_energy_gap(h2, toy.qubo, FEASIBLE_COST)
        assert g == pytest.approx(0.25 * g1 + 0.75 * g2, abs=1e-9)


class TestSamplingRank:
    def test_unique_mode(self):
        assert sampling_rank(hist({FEASIBLE: 600, "000000": 400}), OPTIMA) == 1

    def test_tie_shares_top_rank(self):
        assert sampling_rank(hist({"000000": 500, FEASIBLE: 500}), OPTIMA) == 1

    def test_third_place(self):
        h = hist({"000000": 600, "000001": 300, FEASIBLE: 100})
        assert sampling_rank(h, OPTIMA) == 3

    def test_unsampled_optimum(self):
        h = hist({"000000": 60, "000001": 40})
        assert sampling_rank(h, OPTIMA) == 3  # one worse than every observed string

    def test_scaling_counts_invariance(self):
        h1 = hist({"000000": 6, "000001": 3, FEASIBLE: 1})
        h2 = hist({"000000": 600, "000001": 300, FEASIBLE: 100})
        assert sampling_rank(h1, OPTIMA) == sampling_rank(h2, OPTIMA)

    def test_best_rank_among_multiple_optima(self):
        h = hist({"000000": 500, "111010": 300, "010101": 200})
        assert sampling_rank(h, ("111010", "010101")) == 2


class TestAggregate:
    def test_constant_values(self):
        stats = aggregate([1.0, 1.0, 1.0])
        assert (stats.mean, stats.std) == (1.0, 0.0)
        assert (stats.ci_low, stats.ci_high) == (1.0, 1.0)

    def test_two_point_fixture(self):
        stats = aggregate([0.0, 1.0])
        expected_std = math.sqrt(0.5)
        half = 1.96 * expected_std / math.sqrt(2)
        assert stats.mean == pytest.approx(0.5, abs=1e-12)
        assert stats.std == pytest.approx(expected_std, abs=1e-12)
        assert stats.ci_low == pytest.approx(0.5 - half, abs=1e-12)
        assert stats.ci_high == pytest.approx(0.5 + half, abs=1e-12)

    def test_thirty_equal_values_collapse(self):
        stats = aggregate([0.42] * 30)
        assert stats.ci_high - stats.ci_low == pytest.approx(0.0, abs=1e-12)
        assert stats.mean == pytest.approx(0.42, abs=1e-12)
        assert stats.runs == 30

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            aggregate([1.0])

    def test_matches_numpy_reference(self):
        rng = np.random.default_rng(1)
        data = rng.normal(size=30).tolist()
        stats = aggregate(data)
        assert stats.mean == pytest.approx(np.mean(data), abs=1e-12)
        assert stats.std == pytest.approx(np.std(data, ddof=1), abs=1e-12)


class TestRunMetrics:
    def test_bundle(self, toy):
        h = hist({FEASIBLE: 300, "000000": 100})
        m = run_metrics(h, OPTIMA, toy.qubo, FEASIBLE_COST)
        assert m.optimal_probability == pytest.approx(0.75)
        assert m.sampling_rank == 1
        assert m.energy_gap == pytest.approx(0.25 * 5530.8, abs=1e-6)
