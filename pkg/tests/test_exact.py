import math

import numpy as np
import pytest

from varis.exact import (DominationError, EnumerationCapError, Factor,
                         bucket_eliminate, enumerate_likelihood,
                         exact_kl_to_posterior, exact_power_moment,
                         iter_full_matrices, min_fill_order, prior_marginal)
from varis.model import (BayesianNetwork, Cpt, Variable, joint_log_prob_batch)
from varis.proposal import build_proposal
from varis.simplify import SimplifiedNetwork, del_edges, var_tech_fit

from conftest import and_gate_net, binary, chain_net, or_gate_net, random_net


def posterior_proposal(net, ev):
    """Exact-posterior proposal: nothing deleted, nothing fitted."""
    return build_proposal(net, SimplifiedNetwork(net, (), fitted=True), ev)


class TestEnumerate:
    def test_chain_evidence(self, chain):
        # oracle: 0.3 * 0.9 + 0.7 * 0.2 = 0.41
        assert enumerate_likelihood(chain, {"B": "1"}) == pytest.approx(
            math.log(0.41), abs=1e-12)

    def test_empty_evidence_is_one(self, chain):
        assert enumerate_likelihood(chain, None) == pytest.approx(0.0, abs=1e-12)

    def test_or_gate(self, or_gate):
        assert enumerate_likelihood(or_gate, {"D": "0"}) == pytest.approx(
            math.log(0.25), abs=1e-12)

    def test_cap_enforced(self, chain):
        with pytest.raises(EnumerationCapError):
            enumerate_likelihood(chain, None, cap=2)

    def test_impossible_evidence_is_minus_inf(self):
        net = BayesianNetwork(
            [binary("A"), binary("B")],
            [Cpt("A", (), np.array([[1.0, 0.0]])),
             Cpt("B", ("A",), np.array([[1.0, 0.0], [0.0, 1.0]]))])
        assert enumerate_likelihood(net, {"B": "1"}) == -math.inf


class TestMinFill:
    def test_chain_width_one(self):
        variables = [binary(f"X{i}") for i in range(5)]
        cpts = [Cpt("X0", (), np.array([[0.5, 0.5]]))]
        cpts += [Cpt(f"X{i}", (f"X{i-1}",), np.tile([0.5, 0.5], (2, 1)))
                 for i in range(1, 5)]
        assert min_fill_order(BayesianNetwork(variables, cpts)).width == 1

    def test_disconnected_width_zero(self):
        variables = [binary(f"X{i}") for i in range(4)]
        cpts = [Cpt(f"X{i}", (), np.array([[0.5, 0.5]])) for i in range(4)]
        assert min_fill_order(BayesianNetwork(variables, cpts)).width == 0

    def test_deterministic_order(self, or_gate):
        assert min_fill_order(or_gate) == min_fill_order(or_gate)

    def test_random_trees_have_width_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(3, 10))
            variables = [binary(f"X{i}") for i in range(n)]
            cpts = [Cpt("X0", (), np.array([[0.5, 0.5]]))]
            for i in range(1, n):
                parent = f"X{int(rng.integers(0, i))}"
                cpts.append(Cpt(f"X{i}", (parent,), np.tile([0.5, 0.5], (2, 1))))
            assert min_fill_order(BayesianNetwork(variables, cpts)).width == 1


class TestBucketElimination:
    def test_matches_enumeration_on_random_nets(self):
        for seed in range(25):
            net, ev = random_net(seed, nodes=9, max_parents=3, det=0.4,
                                 evidence=2)
            by_buckets, _ = bucket_eliminate(net, ev)
            by_enum = enumerate_likelihood(net, ev)
            if math.isinf(by_enum):
                assert math.isinf(by_buckets)
            else:
                assert by_buckets == pytest.approx(by_enum, abs=1e-9)

    def test_evidence_on_every_variable(self, chain):
        ev = {"A": "1", "B": "1"}
        value, _ = bucket_eliminate(chain, ev)
        assert value == pytest.approx(math.log(0.27), abs=1e-12)

    def test_or_gate(self, or_gate):
        value, _ = bucket_eliminate(or_gate, {"D": "0"})
        assert value == pytest.approx(math.log(0.25), abs=1e-12)

    def test_every_cpt_assigned_to_latest_sampled_scope_variable(self, or_gate):
        _, scheme = bucket_eliminate(or_gate, {"D": "0"})
        for child, bucket_var in scheme.cpt_buckets.items():
            scope = or_gate.parents(child) + (child,)
            assert bucket_var == max(scope, key=scheme.d_index.__getitem__)

    def test_scheme_retains_tables(self, and_gate):
        _, scheme = bucket_eliminate(and_gate, {"D": "0"})
        assert set(scheme.buckets) == {"A", "B", "D"}
        for bucket in scheme.buckets.values():
            assert bucket.variable in bucket.joint_table.scope
            assert bucket.variable not in bucket.marginal_table.scope


class TestFactor:
    def test_multiply_broadcasts(self):
        f = Factor(("A",), np.log(np.array([0.2, 0.8])))
        g = Factor(("B", "A"), np.log(np.array([[0.5, 0.25], [0.5, 0.75]])))
        prod = f.multiply(g)
        assert prod.scope == ("A", "B")
        np.testing.assert_allclose(
            np.exp(prod.logs), [[0.1, 0.1], [0.2, 0.6]], atol=1e-12)

    def test_marginalize_handles_zeros(self):
        with np.errstate(divide="ignore"):
            f = Factor(("A", "B"), np.log(np.array([[0.0, 0.0], [0.3, 0.2]])))
        marg = f.marginalize("B")
        np.testing.assert_allclose(np.exp(marg.logs), [0.0, 0.5], atol=1e-12)

    def test_clamp(self):
        f = Factor(("A",), np.log(np.array([0.4, 0.6])))
        clamped = f.clamp("A", 1)
        np.testing.assert_array_equal(np.exp(clamped.logs), [0.0, 0.6])

    def test_prior_marginal_sums_to_one(self):
        net, _ = random_net(2, nodes=7, max_parents=3, det=0.2)
        marg = prior_marginal(net, ("X2", "X5"))
        assert float(np.exp(marg.logs).sum()) == pytest.approx(1.0, abs=1e-12)


class TestKlToPosterior:
    def test_posterior_proposal_has_zero_divergence(self, and_gate):
        q = posterior_proposal(and_gate, {"D": "0"})
        assert exact_kl_to_posterior(q, and_gate, {"D": "0"}) == pytest.approx(
            0.0, abs=1e-9)

    def test_uniform_over_three_feasible_instances(self, and_gate):
        # Posterior of the AND gate given D=0 is uniform on its 3 instances,
        # so the posterior proposal *is* that uniform distribution.
        q = posterior_proposal(and_gate, {"D": "0"})
        feasible = [(0, 0), (0, 1), (1, 0)]
        for a, b in feasible:
            assert math.exp(q.log_prob({"A": a, "B": b})) == pytest.approx(1 / 3)
        assert exact_kl_to_posterior(q, and_gate, {"D": "0"}) == pytest.approx(
            0.0, abs=1e-12)

    def test_mass_on_infeasible_instance_gives_inf(self, or_gate):
        simp = del_edges(or_gate, 0)  # too coarse: proposal spreads past support
        q = build_proposal(or_gate, var_tech_fit(or_gate, simp, {"D": "0"}),
                           {"D": "0"})
        assert exact_kl_to_posterior(q, or_gate, {"D": "0"}) == math.inf


class TestPowerMoment:
    def test_r1_is_likelihood(self, chain):
        ev = {"B": "1"}
        q = posterior_proposal(chain, ev)
        assert exact_power_moment(q, chain, ev, 1.0) == pytest.approx(
            0.41, abs=1e-9)

    def test_r0_with_posterior_is_likelihood(self, chain):
        ev = {"B": "1"}
        q = posterior_proposal(chain, ev)
        assert exact_power_moment(q, chain, ev, 0.0) == pytest.approx(
            0.41, abs=1e-9)

    def test_power_mean_inequality_on_random_nets(self):
        count = 0
        for seed in range(12):
            net, ev = random_net(seed, nodes=7, max_parents=2, det=0.0,
                                 evidence=1)
            simp = var_tech_fit(net, del_edges(net, 1), ev)
            q = build_proposal(net, simp, ev)
            m0 = exact_power_moment(q, net, ev, 0.0)
            m2 = exact_power_moment(q, net, ev, 2.0)
            assert m0 <= m2 + 1e-12
            count += 1
        assert count == 12

    def test_variance_identity(self, soft_chain):
        # (M^2)^2 - P(e)^2 equals the directly enumerated variance of P/Q.
        ev = {"C": "1"}
        simp = var_tech_fit(soft_chain, del_edges(soft_chain, 0), ev)
        q = build_proposal(soft_chain, simp, ev)
        p_e = math.exp(enumerate_likelihood(soft_chain, ev))
        m2 = exact_power_moment(q, soft_chain, ev, 2.0)
        expected_var = m2 ** 2 - p_e ** 2

        direct = 0.0
        for matrix in iter_full_matrices(soft_chain, ev):
            ln_p = joint_log_prob_batch(soft_chain, matrix)
            ln_q = q.log_prob_batch(matrix)
            ratio = np.exp(ln_p - ln_q)
            direct += float(np.sum(np.exp(ln_q) * (ratio - p_e) ** 2))
        assert expected_var == pytest.approx(direct, abs=1e-9)

    def test_log_m0_identity_with_kl(self, soft_chain):
        # ln M^0 = ln P(e) - D(Q || posterior) on full-support networks.
        ev = {"C": "1"}
        simp = var_tech_fit(soft_chain, del_edges(soft_chain, 0), ev)
        q = build_proposal(soft_chain, simp, ev)
        lhs = math.log(exact_power_moment(q, soft_chain, ev, 0.0))
        rhs = enumerate_likelihood(soft_chain, ev) \
            - exact_kl_to_posterior(q, soft_chain, ev)
        assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_domination_failure_raises(self, or_gate):
        ev = {"D": "0"}

        class PointMass:
            def log_prob(self, assignment):
                return 0.0 if assignment == {"A": 0, "B": 1} else -math.inf

            def log_prob_batch(self, matrix):
                hit = (matrix[:, 0] == 0) & (matrix[:, 1] == 1)
                return np.where(hit, 0.0, -math.inf)

        with pytest.raises(DominationError):
            exact_power_moment(PointMass(), or_gate, ev, 1.0)
