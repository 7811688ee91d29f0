from pathlib import Path

import numpy as np
import pytest

from bridge_rdd.errors import EmptySample, NoSolution, ValidationError
from bridge_rdd.estimators import tau_h
from bridge_rdd.features import BasisSpec, basis
from bridge_rdd.minimax import FitConfig, fit_treatment_bridge
from bridge_rdd.oracle import (
    DiscreteModel,
    exact_tau,
    identification_formulas,
    outcome_bridge_fn,
    outcome_bridge_residual,
    population_samples,
    random_model,
    read_fixture,
    sample,
    solve_outcome_bridge,
    solve_treatment_bridge,
    verify_identification,
)

FIXTURES = Path(__file__).parent / "fixtures"


def setting1_like(m=((0, 2), (1, 3))):
    x = np.array([-1.0, -0.5, 0.5, 1.0])
    pmf = np.array([[3, 2, 2, 1], [1, 2, 2, 3]]) / 16
    return DiscreteModel([0.0, 1.0], x, pmf, np.array(m, dtype=float))


class TestExactTau:
    def test_setting1_structure(self):
        model = setting1_like()
        assert exact_tau(model, 1) == pytest.approx(2.5, abs=1e-15)
        assert exact_tau(model, 0) == pytest.approx(0.5, abs=1e-15)

    def test_zero_outcome(self):
        assert exact_tau(setting1_like(((0, 0), (0, 0))), 1) == 0.0

    def test_single_level(self):
        model = DiscreteModel([0.3], [-1.0, 1.0], [[0.5, 0.5]], [[1.0, 7.0]])
        assert exact_tau(model, 1) == 7.0


class TestTreatmentBridge:
    def test_unique_solution(self):
        model = read_fixture(FIXTURES / "two_level.txt")
        f = solve_treatment_bridge(model)
        for w in (0, 1):
            side = model.w_grid == w
            cond = model.pmf[:, side] / model.pmf[:, side].sum(axis=1, keepdims=True)
            assert np.abs(cond @ f[side] - 1 / model.propensity(w)).max() < 1e-12

    def test_constant_solution(self):
        # same conditional law on each side for every u -> f = 1 / pi_w
        pmf = np.array([[2, 2, 1, 1], [2, 2, 1, 1]]) / 12
        model = DiscreteModel([0.0, 1.0], [-2.0, -1.0, 1.0, 2.0], pmf, np.zeros((2, 2)))
        f = solve_treatment_bridge(model)
        np.testing.assert_allclose(f, [1.5, 1.5, 3.0, 3.0], rtol=1e-12)

    def test_inconsistent_system(self):
        pmf = np.array([[1, 3], [3, 1]]) / 8
        model = DiscreteModel([0.0, 1.0], [-1.0, 1.0], pmf, np.zeros((2, 2)))
        with pytest.raises(NoSolution):
            solve_treatment_bridge(model)


class TestOutcomeBridge:
    def test_regression_bridge(self):
        model = setting1_like()
        h = solve_outcome_bridge(model)
        np.testing.assert_array_equal(h, model.m)
        assert outcome_bridge_residual(model, h) < 1e-12

    def test_constant(self):
        h = solve_outcome_bridge(setting1_like(((4, 4), (4, 4))), "lstsq")
        np.testing.assert_allclose(h, 4.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_mean_of_bridge_is_tau(self, seed):
        model = random_model(np.random.default_rng(seed))
        for method in ("regression", "lstsq"):
            h = solve_outcome_bridge(model, method)
            for w in (0, 1):
                assert model.p_u @ h[:, w] == pytest.approx(exact_tau(model, w), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_population_moment_vanishes_for_every_critic(self, seed):
        # E[(h0(U, W) - Y) g(X, W)] = 0 for any g; checked on cosine critics and random g
        model = random_model(np.random.default_rng(seed))
        h = solve_outcome_bridge(model, "lstsq")
        wi = model.w_grid.astype(int)
        diff = (model.pmf * (h[:, wi] - model.m[:, wi])).sum(axis=0)  # per x
        G = basis(model.x_grid, model.w_grid, BasisSpec())
        assert np.abs(diff @ G).max() < 1e-12
        g = np.random.default_rng(seed).normal(size=model.x_grid.size)
        assert abs(diff @ g) < 1e-12


class TestIdentification:
    def test_twenty_random_models(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            model = random_model(rng, n_u=int(rng.integers(1, 4)), per_side=int(rng.integers(3, 6)))
            for rep in verify_identification(model, outcome_method="lstsq"):
                assert rep.max_discrepancy < 1e-10

    @pytest.mark.parametrize("name", ["two_level.txt", "three_level.txt"])
    def test_fixtures(self, name):
        model = read_fixture(FIXTURES / name)
        reps = verify_identification(model)
        assert [r.w for r in reps] == [0, 1]

    def test_zero_outcome(self):
        model = setting1_like(((0, 0), (0, 0)))
        for rep in verify_identification(model):
            assert rep.outcome_formula == rep.weighting_formula == rep.doubly_robust_formula == 0.0

    def test_wrong_bridge_breaks_weighting_only(self):
        model = setting1_like()
        h = solve_outcome_bridge(model)
        f = solve_treatment_bridge(model) + 0.5
        outcome, weighting, dr = identification_formulas(model, h, f, 1)
        assert outcome == pytest.approx(dr, abs=1e-12)
        assert abs(weighting - outcome) > 0.1

    def test_positivity_violation_rejected(self):
        pmf = np.array([[0.25, 0.25, 0.0, 0.0], [0.1, 0.1, 0.15, 0.15]])
        with pytest.raises(ValidationError, match="positivity"):
            DiscreteModel([0.0, 1.0], [-1.0, -0.5, 0.5, 1.0], pmf, np.zeros((2, 2)))


class TestSampling:
    def test_total_variation(self):
        model = read_fixture(FIXTURES / "three_level.txt")
        _, aux = sample(model, 10, 0, n_aux=100_000)
        emp = np.zeros_like(model.pmf)
        ui = np.searchsorted(model.u_levels, aux.u)
        xj = np.searchsorted(model.x_grid, aux.x)
        np.add.at(emp, (ui, xj), 1.0 / len(aux))
        assert 0.5 * np.abs(emp - model.pmf).sum() < 0.02

    def test_reproducible(self):
        model = read_fixture(FIXTURES / "two_level.txt")
        a = sample(model, 50, 9)
        b = sample(model, 50, 9)
        assert a[0].y.tobytes() == b[0].y.tobytes() and a[1].x.tobytes() == b[1].x.tobytes()

    def test_zero_rows_are_rejected(self):
        with pytest.raises(EmptySample):
            sample(read_fixture(FIXTURES / "two_level.txt"), 0, 1)

    def test_population_samples_reproduce_tau(self):
        model = random_model(np.random.default_rng(4), integer_total=400)
        main, aux = population_samples(model, 400)
        h = solve_outcome_bridge(model)
        assert tau_h(outcome_bridge_fn(model, h), aux, 1) == pytest.approx(exact_tau(model, 1), abs=1e-12)


class TestMinimaxAgainstOracle:
    """A fitted treatment bridge should cut the defining-equation residual
    well below that of the trivial weight f = 1."""

    @staticmethod
    def residual(model, aux, fvals):
        total = 0.0
        for w in (0, 1):
            for u in model.u_levels:
                rows = (aux.u == u)
                side = rows & (aux.w == w)
                pi_hat = side.sum() / rows.sum()
                total += abs(fvals[side].sum() / side.sum() - 1.0 / pi_hat)
        return total

    @pytest.mark.parametrize("name", ["two_level.txt", "three_level.txt"])
    def test_residual_reduction(self, name):
        model = read_fixture(FIXTURES / name)
        _, aux = sample(model, 10, 3, n_aux=5000)
        fit = fit_treatment_bridge(aux, FitConfig(epochs=1000, lr=0.02, seed=1))
        fitted = self.residual(model, aux, fit.model(aux.x, aux.w))
        baseline = self.residual(model, aux, np.ones(len(aux)))
        assert fitted < 0.5 * baseline
