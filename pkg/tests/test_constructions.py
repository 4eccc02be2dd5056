import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dflgap import constructions as cons
from dflgap.errors import InvariantViolation, NoSupportingSet, WitnessInvalid
from dflgap.stochastic import (
    DiscreteDistribution,
    LossSpec,
    Witness,
    deterministic_decision,
    expected_loss,
    find_nonlinearity_witness,
    grid_points,
    solve_stochastic,
    two_stage_decision,
)
from dflgap.synthetic import make_rng

seeds = st.integers(min_value=0, max_value=2**32 - 1)
product_gamma = lambda a, b: a * b  # noqa: E731


class TestProductGap:
    def test_single_block(self):
        r = cons.evaluate_gap(cons.build_product_gap(1, N=10, eps=0.01, C=1))
        assert r.loss_two_stage == pytest.approx(25.9001, rel=1e-12)
        assert r.loss_e2e == 1.0 and r.loss_opt == 1.0

    def test_decisions(self):
        inst = cons.build_product_gap(5)
        r = cons.evaluate_gap(inst)
        np.testing.assert_array_equal(r.decisions["two_stage"], np.tile([0.0, 1.0], (5, 1)))
        np.testing.assert_array_equal(r.decisions["end_to_end"], np.tile([1.0, 0.0], (5, 1)))

    def test_closed_forms_match_oracle(self):
        for d in (1, 2, 7, 50):
            r = cons.evaluate_gap(cons.build_product_gap(d, N=6.0, eps=0.5, C=2.0))
            assert all(err <= 1e-9 for err in r.closed_form_errors.values())

    def test_full_decision_space_for_small_d(self):
        # the scenario-induced candidate set contains the optimum over all 2^d decisions
        inst = cons.build_product_gap(4)
        full = cons.product_gap_candidates(4)
        z_full, loss_full = solve_stochastic(inst.dist, inst.spec, candidates=full)
        r = cons.evaluate_gap(inst)
        assert loss_full == r.loss_opt

    def test_ratio_strictly_increasing(self):
        ratios = [cons.evaluate_gap(cons.build_product_gap(d)).ratio_ts_over_e2e for d in range(1, 12)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    @pytest.mark.parametrize("kw", [{"d": 0}, {"N": 0.0}, {"eps": 5.0}, {"eps": 0.0}, {"C": 0.0}])
    def test_rejects_bad_parameters(self, kw):
        args = {"d": 1, "N": 10.0, "eps": 0.01, "C": 1.0, **kw}
        with pytest.raises(ValueError):
            cons.build_product_gap(**args)


class TestNonlinearGap:
    def test_product_witness(self):
        w = Witness((0.0, 10.0), (10.0, 0.0), 0.5)
        inst = cons.build_nonlinear_gap(product_gamma, w)
        r = cons.evaluate_gap(inst)
        eps = inst.params["eps"]
        assert r.decisions["opt"] == 0 and r.loss_opt == 0.0
        assert r.decisions["two_stage"] == 1
        assert r.loss_two_stage == pytest.approx((5 - eps) ** 2, rel=1e-12)

    def test_max_witness_uses_maximisation_side(self):
        gamma = lambda a, b: max(a, b)  # noqa: E731
        w = find_nonlinearity_witness(gamma, grid_points([0.0, 10.0]))
        inst = cons.build_nonlinear_gap(gamma, w)
        assert inst.params["sense"] == "max"
        r = cons.evaluate_gap(inst)
        assert r.loss_two_stage > r.loss_opt

    def test_rejects_linear(self):
        with pytest.raises(WitnessInvalid):
            cons.build_nonlinear_gap(lambda a, b: 2 * a + 3 * b, Witness((0.0, 1.0), (4.0, 2.0), 0.5))

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_strict_gap_for_random_quadratics(self, seed):
        rng = make_rng(seed)
        a, b, c = rng.normal(size=3)
        gamma = lambda x, y: a * x * x + b * x * y + c * y * y  # noqa: E731
        w = find_nonlinearity_witness(gamma, grid_points([-2.0, 0.0, 3.0]))
        r = cons.evaluate_gap(cons.build_nonlinear_gap(gamma, w))
        assert r.loss_two_stage > r.loss_opt
        assert all(err <= 1e-9 for err in r.closed_form_errors.values())


class TestProposition1:
    def test_costs(self):
        inst = cons.build_prop1_counterexample(3.0, 0.1)
        assert solve_stochastic(inst.dist, inst.spec) == (0, 1.0)
        assert expected_loss(inst.dist, 1, inst.spec) == pytest.approx(1.55)
        assert expected_loss(inst.dist, 2, inst.spec) == pytest.approx(1.55)

    def test_point_mass_prediction(self):
        inst = cons.build_prop1_counterexample(3.0, 0.1)
        assert deterministic_decision(np.array([1.0, 1.0]), inst.spec) == 1

    def test_mixed_marginals_make_optimum_infinite(self):
        inst = cons.build_prop1_counterexample(3.0, 0.1)
        for p in ([0.5, 0.5], [0.01, 0.99], [0.3, 1.0]):
            assert inst.spec.plug_in(np.array(p), 0) == np.inf

    @pytest.mark.parametrize("step", [0.01, 0.5])
    def test_grid(self, step):
        rep = cons.verify_e2e_suboptimal(cons.build_prop1_counterexample(3.0, 0.1), step)
        assert rep.min_loss == pytest.approx(1.55, abs=1e-12)
        assert rep.loss_star == 1.0 and rep.all_strict
        assert 0 not in rep.decisions_seen

    def test_grid_other_constant(self):
        rep = cons.verify_e2e_suboptimal(cons.build_prop1_counterexample(2.5, 0.1))
        assert rep.min_loss == pytest.approx(0.5 * (0.1 + 2.5), abs=1e-12)

    @pytest.mark.parametrize("C,eps", [(2.0, 0.1), (3.0, 1.0), (3.0, 0.0)])
    def test_rejects(self, C, eps):
        with pytest.raises(ValueError):
            cons.build_prop1_counterexample(C, eps)


class TestPocExamples:
    def test_flow(self):
        inst = cons.worked_poc_example("flow")
        r = cons.evaluate_gap(inst)
        assert (r.decisions["opt"], r.loss_opt) == (3, 3.0)
        assert (r.decisions["two_stage"], r.loss_two_stage) == (2, 3.5)
        np.testing.assert_array_equal(cons.e2e_constructive_marginals(inst, 3), [1, 1, 1])
        assert deterministic_decision(np.ones(3), inst.spec) == 3

    def test_setcover(self):
        inst = cons.worked_poc_example("setcover")
        r = cons.evaluate_gap(inst)
        assert r.loss_opt == 1.5 and r.loss_two_stage == 2.0
        assert r.decisions["opt"] == (0, 0)

    def test_setcover_covering_one_subset(self):
        dist = DiscreteDistribution(np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0]]), np.array([0.1, 0.9]))
        inst = cons.build_poc_example("setcover", {"dist": dist, "c1": 1.0, "c2": 3.0, "groups": [(0,), (1, 2)]})
        z_star, _ = solve_stochastic(dist, inst.spec)
        assert z_star == (1, 0)
        p = cons.e2e_constructive_marginals(inst, z_star)
        np.testing.assert_array_equal(p, [1, 0, 0])
        assert deterministic_decision(p, inst.spec) == z_star

    def test_submodular_interpolation(self):
        inst = cons.worked_poc_example("submodular")
        cost = inst.data["cost"]
        target = sum(p * cost(frozenset(np.flatnonzero(y).tolist())) for y, p in inst.dist.scenarios())
        p = cons.e2e_constructive_marginals(inst, 0)
        S = [i for i in range(3) if p[i] == 1.0]
        e = [i for i in range(3) if 0 < p[i] < 1]
        assert len(e) <= 1
        if e:
            hi, lo = cost(frozenset(S + e)), cost(frozenset(S))
            assert abs(p[e[0]] * hi + (1 - p[e[0]]) * lo - target) <= 1e-12
        z_star, loss = solve_stochastic(inst.dist, inst.spec)
        assert expected_loss(inst.dist, deterministic_decision(p, inst.spec), inst.spec) == loss

    def test_submodular_rejects_supermodular_cost(self):
        dist = DiscreteDistribution(np.array([[1.0, 1.0]]), np.array([1.0]))
        with pytest.raises(InvariantViolation):
            cons.build_poc_example("submodular", {"dist": dist, "cost": lambda S: float(len(S) ** 2), "C": 1.0})

    def test_flow_rejects_cheap_second_stage(self):
        dist = DiscreteDistribution(np.array([[1.0]]), np.array([1.0]))
        with pytest.raises(InvariantViolation):
            cons.build_poc_example("flow", {"dist": dist, "c1": [0.0, 2.0], "c2": [0.0, 1.0]})

    def test_setcover_rejects_overlap(self):
        dist = DiscreteDistribution(np.array([[1.0, 1.0]]), np.array([1.0]))
        with pytest.raises(InvariantViolation):
            cons.build_poc_example("setcover", {"dist": dist, "c1": 1.0, "c2": 2.0, "groups": [(0, 1), (1,)]})

    def test_no_supporting_set_when_invariants_broken(self):
        # a non-monotone cost whose expectation lies outside every chain bracket
        cost = lambda S: 5.0 if S == frozenset({1}) else 0.0  # noqa: E731
        dist = DiscreteDistribution(np.array([[0.0, 1.0]]), np.array([1.0]))
        spec = LossSpec(f=cons.submodular_loss(cost, 1.0), decisions=[0, 1])
        inst = cons.PocInstance("submodular", dist, spec, {"cost": cost, "C": 1.0})
        with pytest.raises(NoSupportingSet):
            cons.e2e_constructive_marginals(inst, 1)

    @pytest.mark.parametrize("kind", ["flow", "setcover", "submodular"])
    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_constructive_marginals_are_optimal(self, kind, seed):
        inst = cons.random_poc_instance(kind, make_rng(seed))
        z_star, loss = solve_stochastic(inst.dist, inst.spec)
        p = cons.e2e_constructive_marginals(inst, z_star)
        assert np.all((0 <= p) & (p <= 1))
        assert expected_loss(inst.dist, deterministic_decision(p, inst.spec), inst.spec) == loss


class TestElementwise:
    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_lemma_prediction_recovers_optimum(self, seed):
        rng = make_rng(seed)
        dist, spec, pairs = cons.random_elementwise_instance(rng, product_gamma, independent=False)
        y_prime = cons.elementwise_e2e_prediction(dist, product_gamma, pairs)
        z_star, loss = solve_stochastic(dist, spec)
        assert expected_loss(dist, deterministic_decision(y_prime, spec), spec) == loss

    def test_prediction_needs_identity_at_one(self):
        dist = DiscreteDistribution.point_mass([1.0, 2.0])
        with pytest.raises(ValueError):
            cons.elementwise_e2e_prediction(dist, lambda a, b: max(a, b), [(0, 1)])

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_two_stage_optimal_for_independent_product(self, seed):
        dist, spec, _ = cons.random_elementwise_instance(make_rng(seed), product_gamma, independent=True)
        assert two_stage_decision(dist, spec)[1] == solve_stochastic(dist, spec)[1]

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_two_stage_optimal_for_linear_gamma(self, seed):
        gamma = lambda a, b: 2 * a - b  # noqa: E731
        assert cons.is_linear_in_targets(gamma)
        dist, spec, _ = cons.random_elementwise_instance(make_rng(seed), gamma, independent=False)
        assert two_stage_decision(dist, spec)[1] == solve_stochastic(dist, spec)[1]


class TestGapReport:
    def test_opt_never_beaten(self):
        for inst in (cons.build_prop1_counterexample(), cons.build_product_gap(3), cons.worked_poc_example("flow")):
            r = cons.evaluate_gap(inst)
            assert r.loss_opt <= r.loss_e2e and r.loss_opt <= r.loss_two_stage

    def test_prop1_breaks_middle_link(self):
        r = cons.evaluate_gap(cons.build_prop1_counterexample())
        assert r.loss_e2e > r.loss_opt
        assert r.loss_e2e_search == pytest.approx(1.55)

    def test_as_dict_is_json_ready(self):
        import json

        d = cons.evaluate_gap(cons.build_product_gap(2)).as_dict()
        assert json.loads(json.dumps(d))["loss_e2e"] == 1.0
