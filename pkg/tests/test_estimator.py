import numpy as np
import pytest

from oracles import enumerate_exact
from qtree.decoder import decode_batch
from qtree.estimator import (
    EstimatorResult,
    estimate_Z,
    run_protocol,
    simulate_records,
    x_statistic,
    xs_by_depth,
)
from qtree.model import build_instance, rng_stream


class TestXStatistic:
    def test_correct_prediction(self):
        assert x_statistic(0, 0.4) == -0.5

    def test_wrong_prediction(self):
        assert x_statistic(1, 0.4) == 1.5

    def test_tie_break(self):
        assert x_statistic(0, 0.0) == -0.5

    def test_agreement_encoding(self):
        # 1/2 - X is the +-1 agreement indicator.
        assert 0.5 - x_statistic(0, 0.4) == 1.0
        assert 0.5 - x_statistic(1, 0.4) == -1.0


class TestEstimateZ:
    def test_single_circuit(self):
        res = estimate_Z([[-0.5, 1.5]], t=2, theta=2.0)
        assert res.z_hat == pytest.approx(0.5)
        assert res.se == 0.0
        assert res.n_circuits == 1

    def test_two_circuits(self):
        res = estimate_Z([[0.0], [1.0]], t=2, theta=2.0)
        assert res.z_hat == pytest.approx(0.5)
        assert res.se == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            estimate_Z([], t=1, theta=2.0)
        with pytest.raises(ValueError):
            estimate_Z([[]], t=1, theta=2.0)

    def test_matches_error_formula(self):
        rng = rng_stream(1)
        xs = [[float(x) for x in rng.choice([-0.5, 1.5], size=8)] for _ in range(40)]
        res = estimate_Z(xs, t=3, theta=2.1)
        means = np.array([np.mean(row) for row in xs])
        z = means.mean()
        se = np.sqrt(np.sum((means - z) ** 2) / (40 * 39))
        assert res.z_hat == pytest.approx(z, abs=1e-15)
        assert res.se == pytest.approx(se, abs=1e-15)


class TestRunProtocol:
    def test_identity_channel_unbiased(self):
        # theta = pi/2: decoder always returns n = 0, the tie-break predicts
        # +1, and m0 is a fair coin, so E[X] = 1/2 exactly.
        res = run_protocol(2, np.pi / 2, n_circuits=400, n_shots=4, seed=5)[2]
        assert abs(res.z_hat - 0.5) <= 1.96 * res.se + 1e-9

    def test_projective_statistical_zero(self):
        # theta = pi: Z(pi) = 0; the estimate is unbiased but fluctuates.
        res = run_protocol(3, np.pi, n_circuits=300, n_shots=8, seed=6)[3]
        assert abs(res.z_hat) <= 4.0 * res.se

    def test_se_shrinks_with_circuits(self):
        # Doubling N_c shrinks SE by sqrt(2) within 10 percent, averaged
        # over repeated runs.
        ses = {200: [], 400: []}
        for n_c in ses:
            for rep in range(6):
                res = run_protocol(2, 2.2, n_circuits=n_c, n_shots=4, seed=100 + rep)
                ses[n_c].append(res[2].se)
        ratio = np.mean(ses[200]) / np.mean(ses[400])
        assert abs(ratio - np.sqrt(2.0)) < 0.1 * np.sqrt(2.0)

    def test_truncation_consistency(self):
        # Estimates per depth from truncated t=4 data equal estimates from
        # directly built prefix instances fed the same record prefixes.
        t, theta, seed = 4, 2.3, 17
        instances, records = simulate_records(t, theta, 30, 4, seed)
        xs = xs_by_depth(instances, records)
        for tp in (1, 2, 3):
            direct_instances = [
                build_instance(tp, theta, inst.seed) for inst in instances
            ]
            for built, inst in zip(direct_instances, instances):
                assert np.array_equal(built.gates, inst.gates[: built.n_nodes])
            trunc_records = [
                (cid, shot, rec) for cid, shot, rec in records
            ]
            xs_direct = xs_by_depth(direct_instances, [
                (cid, shot, type(rec)(rec.bits[: 1 + 2 * ((1 << tp) - 1)]))
                for cid, shot, rec in trunc_records
            ])
            assert xs_direct[tp] == xs[tp]

    def test_worker_invariance(self):
        a = run_protocol(2, 2.25, n_circuits=24, n_shots=4, seed=9, workers=1)
        b = run_protocol(2, 2.25, n_circuits=24, n_shots=4, seed=9, workers=2)
        for tp in a:
            assert a[tp].z_hat == b[tp].z_hat
            assert a[tp].se == b[tp].se

    def test_backend_choice_validated(self):
        with pytest.raises(ValueError):
            run_protocol(2, 2.2, 4, 2, seed=0, backend="mps")


class TestEnumeratedUnbiasedness:
    @pytest.mark.parametrize("theta", [1.8, 2.2, 2.8])
    def test_exact_expectation_identity(self, theta):
        """Enumerated version of the estimator derivation at t = 2.

        Two exact steps hold per instance: (i) summing X against the exact
        joint record weights collapses the m0 average to 1/2 - E|n_z| (this
        couples the sampler's Born weights to the decoder's Bloch z), and
        (ii) replacing |n_z| by its uniform-axis average |n|/2 (the analytic
        gate-ensemble step) turns it into sum_records p * Z, the exact order
        parameter.  Both identities must hold to 1e-9 per instance.
        """
        gaps_i = []
        gaps_ii = []
        for trial in range(50):
            inst = build_instance(2, theta, seed=1000 + trial)
            data = enumerate_exact(inst)
            m_w = data["records"]
            _, n_vec, z_dec = decode_batch(inst, m_w)
            n_z = n_vec[:, 2]
            sign = np.where(n_z < 0.0, -1.0, 1.0)
            # (i) full (m0, M_w) enumeration of X against exact joint weights
            e_x = 0.0
            for m0 in (0, 1):
                x = 0.5 - (-1.0) ** m0 / sign
                e_x += float(np.sum(data["p_m0"][:, m0] * x))
            lhs = 0.5 - float(np.sum(data["p"] * np.abs(n_z)))
            gaps_i.append(abs(e_x - lhs))
            # (ii) uniform-axis average: E|n_z| -> |n|/2 = (1 - 2Z)/2
            norm_n = np.linalg.norm(n_vec, axis=1)
            with_axis_avg = 0.5 - float(np.sum(data["p"] * norm_n / 2.0))
            exact_z = float(np.sum(data["p"] * z_dec))
            gaps_ii.append(abs(with_axis_avg - exact_z))
        assert max(gaps_i) < 1e-9
        assert max(gaps_ii) < 1e-9

    def test_decoder_nz_matches_sampler_conditionals(self):
        # Pr[m0 | M_w] = (1 + (-1)^m0 n_z)/2 with the decoder's n_z: the
        # bridge identity behind the protocol.
        inst = build_instance(2, 2.2, seed=77)
        data = enumerate_exact(inst)
        _, n_vec, _ = decode_batch(inst, data["records"])
        p_cond = data["p_m0"][:, 0] / np.maximum(data["p"], 1e-300)
        assert np.max(np.abs(p_cond - 0.5 * (1.0 + n_vec[:, 2]))) < 1e-9


def test_result_fields():
    res = EstimatorResult(z_hat=0.1, se=0.02, n_circuits=10, n_shots=8, t=3, theta=2.0)
    assert res.t == 3 and res.n_shots == 8
