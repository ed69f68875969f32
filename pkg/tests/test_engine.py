import math

import numpy as np
import pytest

from varis.engine import (EstimatorState, PriorProposal, SamplerConfig,
                          acceptance_probability, batch_weight,
                          combine_batches, correlation_threshold,
                          correlation_trigger, estimate_static, kl_estimate,
                          likelihood_weighting, mixing_rate, pearson,
                          power_mean, run_varis, sis_star)
from varis.exact import DominationError, enumerate_likelihood
from varis.model import BayesianNetwork, Cpt
from varis.proposal import SampleRecord, build_proposal
from varis.simplify import SimplifiedNetwork, del_edges, var_tech_fit

from conftest import binary, random_net


def posterior_proposal(net, ev):
    return build_proposal(net, SimplifiedNetwork(net, (), fitted=True), ev)


class TestMixingRate:
    def test_published_endpoints(self):
        cfg = SamplerConfig()
        assert mixing_rate(0, cfg) == pytest.approx(0.12, abs=1e-12)
        assert mixing_rate(cfg.resolved_k_max, cfg) == pytest.approx(0.03, abs=1e-12)

    def test_midpoint(self):
        cfg = SamplerConfig(k_max=10)
        assert mixing_rate(5, cfg) == pytest.approx(0.12 * 0.25 ** 0.5, abs=1e-12)
        assert mixing_rate(5, cfg) == pytest.approx(0.06, abs=1e-12)

    def test_clamped_past_horizon(self):
        cfg = SamplerConfig(k_max=10)
        assert mixing_rate(25, cfg) == mixing_rate(10, cfg)


class TestAcceptanceProbability:
    def test_improvement_always_accepted(self):
        assert acceptance_probability(3, -0.1) == 1.0

    def test_published_point(self):
        assert acceptance_probability(5, 0.2) == pytest.approx(
            math.exp(-1.0), abs=1e-12)

    def test_zero_delta(self):
        assert acceptance_probability(9, 0.0) == 1.0


class TestKlEstimate:
    def test_posterior_zero_variance(self, and_gate):
        q = posterior_proposal(and_gate, {"D": "0"})
        rng = np.random.default_rng(0)
        from varis.proposal import draw_sample
        batch = [draw_sample(q, and_gate, {"D": "0"}, rng) for _ in range(16)]
        ln_pe = enumerate_likelihood(and_gate, {"D": "0"})
        assert kl_estimate(batch) == pytest.approx(-ln_pe, abs=1e-9)
        ratios = {round(rec.log_ratio, 12) for rec in batch}
        assert len(ratios) == 1

    def test_mean_of_logs(self):
        batch = [SampleRecord({}, 0.0, 2.0), SampleRecord({}, 0.0, 4.0)]
        assert kl_estimate(batch) == pytest.approx(-3.0, abs=1e-12)

    def test_geometric_mean_identity(self):
        rng = np.random.default_rng(1)
        logs = rng.normal(size=50)
        batch = [SampleRecord({}, 0.0, float(v)) for v in logs]
        d_hat = kl_estimate(batch)
        ln_geo = float(np.mean(logs))
        assert d_hat + ln_geo == pytest.approx(0.0, abs=1e-12)

    def test_zero_ratio_is_fatal(self):
        batch = [SampleRecord({}, 0.0, -math.inf)]
        with pytest.raises(DominationError):
            kl_estimate(batch)


class TestBatchWeight:
    def test_first_batch_weight(self):
        cfg = SamplerConfig()
        assert cfg.w0 == 0.001

    def test_zero_variance_dominates(self):
        assert batch_weight(0.0, SamplerConfig()) == pytest.approx(1e12)

    def test_inverse_cv(self):
        assert batch_weight(4.0, SamplerConfig()) == pytest.approx(0.25)

    def test_floor_at_w0(self):
        assert batch_weight(1e6, SamplerConfig()) == pytest.approx(0.001)


class TestCombineBatches:
    def test_single_batch_is_plain_mean(self):
        state = EstimatorState()
        ratios = np.array([0.2, 0.4, 0.6])
        state.add_batch(3, 123.0, float(np.log(ratios.sum())))
        assert combine_batches(state) == pytest.approx(
            math.log(ratios.mean()), abs=1e-12)

    def test_equal_weights_pool(self):
        state = EstimatorState()
        state.add_batch(2, 1.0, math.log(0.2 + 0.4))
        state.add_batch(2, 1.0, math.log(0.1 + 0.3))
        assert combine_batches(state) == pytest.approx(math.log(0.25), abs=1e-12)

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            state_a, state_b = EstimatorState(), EstimatorState()
            scale = float(rng.uniform(1e-6, 1e6))
            for _ in range(int(rng.integers(1, 8))):
                m = int(rng.integers(1, 50))
                w = float(rng.uniform(1e-3, 1e3))
                ln_s = float(rng.normal(scale=30))
                state_a.add_batch(m, w, ln_s)
                state_b.add_batch(m, w * scale, ln_s)
            assert combine_batches(state_a) == pytest.approx(
                combine_batches(state_b), abs=1e-12)


class TestPowerMean:
    def test_arithmetic(self):
        assert power_mean([2.0, 4.0], [0.5, 0.5], 1.0) == pytest.approx(3.0)

    def test_geometric(self):
        assert power_mean([2.0, 8.0], [0.5, 0.5], 0.0) == pytest.approx(4.0)

    def test_inequality_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 12))
            z = rng.uniform(0.01, 100.0, n)
            w = rng.dirichlet(np.ones(n))
            assert power_mean(z, w, 0.0) <= power_mean(z, w, 2.0) * (1 + 1e-12)

    def test_continuity_at_zero(self):
        z = [0.5, 2.0, 7.0]
        w = [0.2, 0.3, 0.5]
        assert power_mean(z, w, 1e-9) == pytest.approx(power_mean(z, w, 0.0),
                                                       rel=1e-6)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            power_mean([0.0, 1.0], [0.5, 0.5], 1.0)


class TestPearson:
    def test_perfect(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert pearson(x, x) == pytest.approx(1.0)
        assert pearson(x, [-v for v in x]) == pytest.approx(-1.0)

    def test_reference_value(self):
        # direct formula: r = 9 / sqrt(84)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(
            9 / math.sqrt(84), abs=1e-12)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=5e-6)

    def test_degenerate_is_nan(self):
        assert math.isnan(pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))


class TestCorrelationTrigger:
    def test_threshold_value(self):
        # t_{8, 0.975} = 2.306004...; r* = t / sqrt(t^2 + 8)
        assert correlation_threshold(10, 0.05) == pytest.approx(0.6319, abs=5e-5)

    def test_insignificant_correlation_is_none(self):
        cfg = SamplerConfig()
        rng = np.random.default_rng(4)
        base = rng.normal(size=10)
        noise = rng.normal(size=10)
        x = base
        y = 0.4 * base + noise  # weak association
        r = pearson(x, y)
        window = list(zip(x, y))
        expected = "none" if abs(r) < correlation_threshold(10, 0.05) else None
        if expected == "none":
            assert correlation_trigger(window, cfg) == "none"

    def test_anticorrelated_window_requests_sharpening(self):
        # Batches that land high-ratio samples show a larger batch estimate
        # together with a smaller divergence estimate, which is the signature
        # of an over-uniform proposal underestimating the likelihood.
        cfg = SamplerConfig()
        d = np.linspace(2.0, 1.0, 10)
        p = -d
        assert correlation_trigger(list(zip(d, p)), cfg) == "sharpen"

    def test_correlated_window_requests_flattening(self):
        cfg = SamplerConfig()
        d = np.linspace(2.0, 1.0, 10)
        assert correlation_trigger(list(zip(d, d.copy())), cfg) == "flatten"

    def test_nonfinite_window_is_none(self):
        cfg = SamplerConfig()
        window = [(math.inf, -1.0)] + [(1.0, -1.0)] * 9
        assert correlation_trigger(window, cfg) == "none"

    def test_degenerate_window_is_none(self):
        cfg = SamplerConfig()
        window = [(1.0, -1.0)] * 10
        assert correlation_trigger(window, cfg) == "none"


class TestEstimateStatic:
    def test_zero_variance_after_one_sample(self, and_gate):
        ev = {"D": "0"}
        q = posterior_proposal(and_gate, ev)
        result = estimate_static(and_gate, ev, q, 1, seed=9)
        assert result.ln_estimate == pytest.approx(
            enumerate_likelihood(and_gate, ev), abs=1e-12)

    def test_all_evidence_network(self, chain):
        ev = {"A": "1", "B": "1"}
        q = posterior_proposal(chain, ev)
        result = estimate_static(chain, ev, q, 1, seed=0)
        assert result.ln_estimate == pytest.approx(math.log(0.27), abs=1e-9)

    def test_clt_band_with_coarse_proposal(self, soft_chain):
        ev = {"C": "1"}
        q = build_proposal(soft_chain,
                           var_tech_fit(soft_chain, del_edges(soft_chain, 0), ev),
                           ev)
        M = 100_000
        result = estimate_static(soft_chain, ev, q, M, seed=11)
        exact = enumerate_likelihood(soft_chain, ev)
        rel = abs(math.exp(result.ln_estimate - exact) - 1.0)
        assert rel <= 3.5 * result.cv / math.sqrt(M)


class TestRunVaris:
    def test_static_options_reduce_to_estimate_static(self):
        net, ev = random_net(21, nodes=8, max_parents=2, det=0.3, evidence=2)
        cfg = SamplerConfig(m=64, M=300, seed=5, width_bound=1)
        report = run_varis(net, ev, cfg, adaptive=False, directing=False)
        simp = var_tech_fit(net, del_edges(net, 1), ev)
        q = build_proposal(net, simp, ev)
        static = estimate_static(net, ev, q, 300, seed=5, batch_size=64)
        assert report.ln_estimate == static.ln_estimate  # bit-identical

    def test_zero_variance_when_nothing_deleted(self, and_gate):
        ev = {"D": "0"}
        cfg = SamplerConfig(m=1, M=1, seed=3, width_bound=99)
        for options in [(True, True), (False, False)]:
            report = run_varis(and_gate, ev, cfg, *options)
            assert report.ln_estimate == pytest.approx(
                enumerate_likelihood(and_gate, ev), abs=1e-12)

    def test_trace_is_complete_and_weighted(self):
        net, ev = random_net(22, nodes=8, max_parents=2, det=0.3, evidence=1)
        cfg = SamplerConfig(m=50, M=400, seed=6, width_bound=1)
        report = run_varis(net, ev, cfg)
        assert len(report.batches) == 8
        assert report.batches[0].w == cfg.w0
        assert all(b.eta == mixing_rate(b.k, cfg) for b in report.batches)
        assert report.batches[0].accepted  # first update is unconditional
        csv = report.trace_csv()
        assert csv.splitlines()[0] == ("k,ln_Ptilde_k,ln_Ptilde_cum,D_hat_k,"
                                       "sigma_hat_k,w_k,eta_k,accepted,"
                                       "directing_event")
        assert len(csv.splitlines()) == 9

    def test_matches_exact_on_or_gate_width_zero(self, or_gate):
        ev = {"D": "0"}
        cfg = SamplerConfig(m=100, M=10_000, k_max=20, seed=1, width_bound=0)
        report = run_varis(or_gate, ev, cfg)
        assert report.ln_estimate == pytest.approx(math.log(0.25), rel=0.01)

    def test_deterministic_given_seed(self):
        net, ev = random_net(23, nodes=8, max_parents=2, det=0.4, evidence=1)
        cfg = SamplerConfig(m=40, M=240, seed=8, width_bound=1)
        a = run_varis(net, ev, cfg)
        b = run_varis(net, ev, cfg)
        assert a.trace_csv() == b.trace_csv()
        assert a.ln_estimate == b.ln_estimate


class TestLikelihoodWeighting:
    def test_no_evidence_weight_one(self, soft_chain):
        report = likelihood_weighting(soft_chain, None, 50, seed=0)
        assert report.ln_estimate == pytest.approx(0.0, abs=1e-12)

    def test_root_evidence_constant_weight(self, chain):
        report = likelihood_weighting(chain, {"A": "1"}, 1, seed=4)
        assert report.ln_estimate == pytest.approx(math.log(0.3), abs=1e-12)

    def test_or_gate_converges(self, or_gate):
        report = likelihood_weighting(or_gate, {"D": "0"}, 100_000, seed=2)
        est = math.exp(report.ln_estimate)
        sigma = math.sqrt(0.25 * 0.75 / 100_000)
        assert est == pytest.approx(0.25, abs=3 * sigma)


class TestSisStar:
    def test_no_evidence_equals_likelihood_weighting(self, soft_chain):
        cfg = SamplerConfig(m=25, M=100, seed=7)
        report = sis_star(soft_chain, None, cfg)
        lw = likelihood_weighting(soft_chain, None, 100, seed=7, batch_size=25)
        assert report.ln_estimate == pytest.approx(lw.ln_estimate, abs=1e-12)
        assert report.ln_estimate == pytest.approx(0.0, abs=1e-12)

    def test_restriction_prunes_zero_weight_samples(self, or_gate):
        # With D = A OR B observed 0, one-step pruning forces B = 0 whenever
        # A = 0 was drawn; only the A = 1 branch still dead-ends.  Direct
        # simulation: restricted sampling must hit strictly fewer zero-weight
        # draws than unrestricted forward sampling.
        from varis.engine import _evidence_restrictors, _forward_batch
        from varis.model import (evidence_indices, joint_log_prob_batch,
                                 topological_order)

        ev_idx = evidence_indices(or_gate, {"D": "0"})
        topo = topological_order(or_gate)
        tables = {n: or_gate.cpt(n).table for n in or_gate.names}
        restrictors = _evidence_restrictors(or_gate, ev_idx, topo)
        assert "B" in restrictors

        def zero_count(use_restrictors):
            rng = np.random.default_rng(3)
            matrix, _ = _forward_batch(
                or_gate, ev_idx, tables, topo, rng, 10_000,
                restrictors if use_restrictors else None)
            return int(np.isneginf(joint_log_prob_batch(or_gate, matrix)).sum())

        restricted, unrestricted = zero_count(True), zero_count(False)
        assert restricted < unrestricted
        # analytic rates: 50% (A=1 branch) vs 75% (any of 3 infeasible pairs)
        assert restricted / 10_000 == pytest.approx(0.5, abs=0.02)
        assert unrestricted / 10_000 == pytest.approx(0.75, abs=0.02)

    def test_sis_estimates_stay_consistent(self, or_gate):
        ev = {"D": "0"}
        cfg = SamplerConfig(m=1000, M=10_000, seed=3)
        sis_report = sis_star(or_gate, ev, cfg)
        assert math.exp(sis_report.ln_estimate) == pytest.approx(0.25, rel=0.15)

    def test_unbiased_on_deterministic_net(self, and_gate):
        cfg = SamplerConfig(m=500, M=20_000, seed=5)
        report = sis_star(and_gate, {"D": "0"}, cfg)
        assert math.exp(report.ln_estimate) == pytest.approx(0.75, rel=0.05)


class TestPriorProposal:
    def test_matches_forward_density(self, soft_chain):
        prior = PriorProposal(soft_chain, {"C": "1"})
        value = prior.log_prob({"A": 1, "B": 0})
        expected = math.log(0.4) + math.log(0.2)
        assert value == pytest.approx(expected, abs=1e-12)


class TestConfigValidation:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            SamplerConfig(m=0)
        with pytest.raises(ValueError):
            SamplerConfig(eta0=0.03, etaf=0.12)
        with pytest.raises(ValueError):
            SamplerConfig(alpha=0.7)
        with pytest.raises(ValueError):
            SamplerConfig(beta=1.0)
        with pytest.raises(ValueError):
            SamplerConfig(window=2)
        with pytest.raises(ValueError):
            SamplerConfig(w0=0.0)
