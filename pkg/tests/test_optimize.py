import csv
import math

import numpy as np
import pytest

from conftest import FEASIBLE, all_bitstrings, penalty_sum_value
from vrpqaoa.ansatz import AnsatzSpec, ParameterPoint
from vrpqaoa.optimize import (
    ObjectiveKind,
    OptimizerConfig,
    final_distribution,
    final_sampling,
    minimize,
    nelder_mead,
    objective,
    write_trace_csv,
)
from vrpqaoa.simcore import NoiseModel

PAPER_NOISE = NoiseModel(p1=0.00015, p2=0.00125, p01=0.001, p10=0.001)


class TestNelderMead:
    def test_converges_on_convex_quadratic(self):
        target = np.array([0.3, -0.6])

        def f(x):
            return float(np.sum((x - target) ** 2))

        best_x, best_f, history = nelder_mead(
            f, np.array([1.5, 1.5]), np.array([-2.0, -2.0]), np.array([2.0, 2.0]), 200
        )
        assert np.abs(best_x - target).max() < 1e-3
        assert best_f < 1e-6
        assert len(history) <= 200

    def test_respects_budget(self):
        calls = []

        def f(x):
            calls.append(1)
            return float(np.sum(x**2))

        nelder_mead(f, np.zeros(3), -np.ones(3), np.ones(3), 17)
        assert len(calls) <= 17

    def test_single_evaluation_returns_start(self):
        start = np.array([0.4, 0.1])
        best_x, best_f, history = nelder_mead(
            f=lambda x: float(np.sum(x**2)),
            x0=start,
            lower=np.array([-1.0, -1.0]),
            upper=np.array([1.0, 1.0]),
            max_evals=1,
        )
        assert np.allclose(best_x, start)
        assert len(history) == 1

    def test_clamps_to_box(self):
        seen = []

        def f(x):
            seen.append(x.copy())
            return float(-np.sum(x))  # pushes toward the upper corner

        nelder_mead(f, np.array([0.9, 0.9]), np.zeros(2), np.ones(2), 60)
        stacked = np.array(seen)
        assert (stacked >= -1e-12).all() and (stacked <= 1 + 1e-12).all()

    def test_best_point_at_box_corner(self):
        best_x, best_f, _ = nelder_mead(
            f=lambda x: float(np.sum(x)),
            x0=np.array([0.5, 0.5]),
            lower=np.zeros(2),
            upper=np.ones(2),
            max_evals=120,
        )
        assert np.abs(best_x).max() < 1e-3


class TestObjective:
    def test_zero_depth_standard_closed_form(self, toy):
        spec = AnsatzSpec.standard(6, 0)
        params = ParameterPoint((), ())
        value = objective(params, spec, toy.cost, ObjectiveKind.exact(), OptimizerConfig())
        mean_cost = np.mean(
            [penalty_sum_value(b, toy.instance, toy.constraints, toy.qubo.penalty)
             for b in all_bitstrings(6)]
        )
        assert value == pytest.approx(mean_cost / toy.cost.scale, abs=1e-9)

    def test_zero_depth_constraint_aware_closed_form(self, toy):
        spec = AnsatzSpec.constraint_aware(toy.constraints, depth=0, lam=0.7)
        params = ParameterPoint((), ())
        value = objective(params, spec, toy.cost, ObjectiveKind.exact(), OptimizerConfig())
        support_costs = [
            penalty_sum_value(b, toy.instance, toy.constraints, toy.qubo.penalty)
            for b in spec.init_support
        ]
        assert 132.0 in [round(c, 6) for c in support_costs]
        assert value == pytest.approx(np.mean(support_costs) / toy.cost.scale, abs=1e-9)

    def test_shot_estimate_approaches_exact(self, toy):
        spec = AnsatzSpec.standard(6, 1)
        params = ParameterPoint((0.4,), (0.3,))
        cfg = OptimizerConfig(shots_objective=100_000, batches=1)
        exact = objective(params, spec, toy.cost, ObjectiveKind.exact(), cfg)
        probs = final_distribution(spec, toy.cost, params, ObjectiveKind.exact())
        diag = toy.cost.full_diagonal.diagonal
        variance = float(probs @ diag**2 - (probs @ diag) ** 2)
        se = math.sqrt(variance / cfg.shots_objective) / toy.cost.scale
        estimate = objective(
            params, spec, toy.cost, ObjectiveKind.shots(), cfg, rng=np.random.default_rng(4)
        )
        assert abs(estimate - exact) < 3 * se

    def test_shot_kind_requires_rng(self, toy):
        spec = AnsatzSpec.standard(6, 1)
        with pytest.raises(ValueError):
            objective(
                ParameterPoint((0.1,), (0.2,)), spec, toy.cost,
                ObjectiveKind.shots(), OptimizerConfig(),
            )

    def test_noisy_kind_runs_and_shifts_distribution(self, toy):
        spec = AnsatzSpec.standard(6, 1)
        params = ParameterPoint((0.4,), (0.3,))
        clean = final_distribution(spec, toy.cost, params, ObjectiveKind.exact())
        noisy = final_distribution(spec, toy.cost, params, ObjectiveKind.noisy(PAPER_NOISE))
        assert noisy.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.abs(noisy - clean).max() > 1e-6  # noise visibly acts
        assert np.abs(noisy - clean).max() < 0.05  # but stays perturbative

    def test_noisy_kind_needs_noise_model(self):
        with pytest.raises(ValueError):
            ObjectiveKind(kind="noisy_shot_estimate")

    def test_scale_change_is_a_reparameterization(self, toy):
        # evolving at scale c*s with angles gamma equals evolving at scale s
        # with gamma/c, and the reported energy differs exactly by 1/c, so
        # rescaling never moves the (compensated) argmin
        from vrpqaoa.encode import CompiledCost

        spec = AnsatzSpec.standard(6, 1)
        rng = np.random.default_rng(10)
        factor = 2.5
        cost_scaled = CompiledCost.from_qubo(toy.qubo, scale=toy.cost.scale * factor)
        cfg = OptimizerConfig()
        for _ in range(10):
            pt = ParameterPoint.random(1, rng)
            compensated = ParameterPoint(
                gamma=tuple(g / factor for g in pt.gamma), beta=pt.beta
            )
            scaled_value = objective(pt, spec, cost_scaled, ObjectiveKind.exact(), cfg)
            base_value = objective(compensated, spec, toy.cost, ObjectiveKind.exact(), cfg)
            assert scaled_value == pytest.approx(base_value / factor, abs=1e-12)


class TestMinimize:
    def test_single_restart_single_eval_returns_start(self, toy):
        spec = AnsatzSpec.standard(6, 2)
        cfg = OptimizerConfig(restarts=1, max_evals=1, seed=123)
        result = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        children = np.random.SeedSequence(123).spawn(2)
        expected = ParameterPoint.random(2, np.random.default_rng(children[0])).clamped()
        assert np.allclose(result.params.as_vector(), expected.as_vector(), atol=1e-12)
        assert len(result.trace) == 1

    def test_reported_objective_is_best_evaluated(self, toy):
        spec = AnsatzSpec.standard(6, 2)
        cfg = OptimizerConfig(restarts=2, max_evals=40, seed=5)
        result = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        assert result.objective == pytest.approx(min(v for _, _, v in result.trace), abs=1e-12)

    def test_improves_on_zero_depth_baseline(self, toy):
        spec = AnsatzSpec.constraint_aware(toy.constraints, depth=3, lam=0.7)
        cfg = OptimizerConfig(seed=0)
        result = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        baseline_spec = AnsatzSpec.constraint_aware(toy.constraints, depth=0, lam=0.7)
        baseline = objective(
            ParameterPoint((), ()), baseline_spec, toy.cost, ObjectiveKind.exact(), cfg
        )
        assert result.objective < baseline

    def test_exact_pipeline_is_reproducible(self, toy):
        spec = AnsatzSpec.standard(6, 2)
        cfg = OptimizerConfig(restarts=2, max_evals=30, seed=9)
        a = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        b = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        assert a.objective == b.objective
        assert a.params == b.params
        assert a.trace == b.trace

    def test_stochastic_pipeline_is_reproducible(self, toy):
        spec = AnsatzSpec.standard(6, 1)
        cfg = OptimizerConfig(restarts=2, max_evals=15, seed=9, shots_objective=64, batches=2)
        a = minimize(spec, toy.cost, ObjectiveKind.shots(), cfg)
        b = minimize(spec, toy.cost, ObjectiveKind.shots(), cfg)
        assert a.objective == b.objective
        assert a.params == b.params

    def test_restarts_use_distinct_streams(self, toy):
        spec = AnsatzSpec.standard(6, 2)
        cfg = OptimizerConfig(restarts=3, max_evals=5, seed=2)
        result = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        first_evals = [v for r, i, v in result.trace if i == 0]
        assert len(first_evals) == 3
        assert len(set(first_evals)) == 3

    def test_trace_spans_all_restarts(self, toy):
        spec = AnsatzSpec.standard(6, 1)
        cfg = OptimizerConfig(restarts=3, max_evals=12, seed=1)
        result = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        assert {r for r, _, _ in result.trace} == {0, 1, 2}
        assert all(i < 12 for _, i, _ in result.trace)
        assert result.evaluations == len(result.trace)


class TestFinalSampling:
    def test_one_hot_distribution_concentrates(self, toy):
        spec = AnsatzSpec(
            kind="constraint_aware", n=6, depth=0, init_support=(FEASIBLE,)
        )
        hist = final_sampling(
            spec, toy.cost, ParameterPoint((), ()), ObjectiveKind.exact(),
            OptimizerConfig(shots_final=256), rng=0,
        )
        assert hist.counts == {FEASIBLE: 256}

    def test_deterministic_given_seed(self, toy):
        spec = AnsatzSpec.standard(6, 1)
        params = ParameterPoint((0.5,), (0.4,))
        cfg = OptimizerConfig()
        a = final_sampling(spec, toy.cost, params, ObjectiveKind.exact(), cfg, rng=3)
        b = final_sampling(spec, toy.cost, params, ObjectiveKind.exact(), cfg, rng=3)
        assert a.counts == b.counts

    def test_standard_run_finds_optimum_as_mode(self, toy):
        # one full standard-QAOA pipeline at defaults: the optimum should be
        # the most frequent sampled string for this seed
        spec = AnsatzSpec.standard(6, 3)
        cfg = OptimizerConfig(seed=0)
        result = minimize(spec, toy.cost, ObjectiveKind.exact(), cfg)
        hist = final_sampling(
            spec, toy.cost, result.params, ObjectiveKind.exact(), cfg,
            rng=np.random.default_rng(0),
        )
        mode = max(hist.counts, key=hist.counts.get)
        assert mode == FEASIBLE


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        trace = [(0, 0, 1.5), (0, 1, 1.25), (1, 0, 2.0)]
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, str(path))
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["restart", "evaluation", "objective"]
        assert len(rows) == 4
        assert rows[1] == ["0", "0", "1.5"]
