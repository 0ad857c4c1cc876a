import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqka import adversary as adv
from cqka import analysis as an


class TestClosedForms:
    def test_binary_entropy(self):
        assert an.binary_entropy(0.5) == 1.0
        assert an.binary_entropy(0.0) == 0.0 == an.binary_entropy(1.0)
        assert an.binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-3)
        with pytest.raises(ValueError):
            an.binary_entropy(1.2)

    @pytest.mark.parametrize("alpha, paper, derived", [(0.0, 1.0, 0.0), (math.pi / 2, 0.5, 0.5),
                                                       (math.pi / 4, 0.75, 0.25)])
    def test_detection_curve(self, alpha, paper, derived):
        p, d = an.curve_detection_min(alpha)
        assert p == pytest.approx(paper, abs=1e-12) and d == pytest.approx(derived, abs=1e-12)

    def test_information_curve(self):
        assert an.curve_eve_information(math.pi / 2) == pytest.approx(0.5, abs=1e-12)
        assert an.curve_eve_information(0.0) == pytest.approx(0.0, abs=1e-12)
        # 1/2 [1 - h2(1/4)], h2 from scipy.stats.entropy
        assert an.curve_eve_information(math.pi / 4) == pytest.approx(0.09436093777, abs=1e-10)

    def test_success_curve(self):
        assert an.curve_success(6, 0.25) == 729 / 262144  # (3/8)^6, about 2.781e-3
        assert an.curve_success(3, 1.0) == 0.0
        assert an.curve_success(1, 0.0) == 0.5

    @given(st.integers(1, 40), st.floats(0, 0.99))
    def test_success_monotone(self, n, d):
        assert an.curve_success(n + 1, d) < an.curve_success(n, d)
        assert an.curve_success(n, d + 0.01) < an.curve_success(n, d)

    def test_quoted_value_flagged(self):
        r = an.quoted_success_check()
        assert r.discrepancy_flag and r.std_error == 0.0
        assert r.closed_form_paper == 2.629e-3
        assert r.estimate == pytest.approx(2.781e-3, abs=5e-7)

    @given(st.floats(0, 1), st.floats(0, math.pi), st.floats(0, math.pi),
           st.floats(0, 1), st.floats(0, math.pi), st.floats(0, math.pi))
    def test_derived_detection_matches_exact_law(self, Az, az, bz, Ae, ae, be):
        p = adv.CollectiveParams(Az, math.sqrt(1 - Az * Az), Ae, math.sqrt(1 - Ae * Ae), az, bz, ae, be)
        det = an.detection_by_preparation(adv.Collective(p))
        np.testing.assert_allclose(det, an.detection_derived(p), atol=1e-12)
        assert an.detection_paper(p) == pytest.approx(1 - an.detection_derived(p), abs=1e-12)


class TestEfficiency:
    def test_protocol_figures(self):
        f1, f2 = an.efficiency_for(1), an.efficiency_for(2)
        assert (f1.eta1, f1.eta2) == (Fraction(1, 5), Fraction(1, 2))
        assert (f2.eta1, f2.eta2) == (Fraction(1, 3), Fraction(1))

    @given(st.integers(1, 10**6), st.sampled_from([1, 2]))
    def test_eta2_dominates(self, n, protocol):
        f = an.efficiency_for(protocol, n)
        assert f.eta2 >= f.eta1
        assert f.eta1 == an.efficiency_for(protocol).eta1

    def test_comparison_rows_labelled(self):
        rows = an.comparison_rows()
        assert [r.simulated for r in rows[:2]] == [True, True]
        assert not any(r.simulated for r in rows[2:]) and len(rows) == 8


class TestReports:
    def test_flag_rule(self):
        assert not an.MetricsReport.build(0.5, 0.01, 100, paper=0.54).discrepancy_flag
        assert an.MetricsReport.build(0.5, 0.01, 100, paper=0.56).discrepancy_flag
        with pytest.raises(ValueError):
            an.MetricsReport.build(0.5, -1, 1)

    def test_plugin_mi(self):
        assert an.plugin_mutual_information([[50, 0], [0, 50]]) == pytest.approx(1.0)
        assert an.plugin_mutual_information([[25, 25], [25, 25]]) == 0.0


class TestEstimators:
    def test_identity_probe_never_detected(self):
        r = an.estimate_detection(adv.Collective(adv.CollectiveParams.symmetric(0.0)), 20_000,
                                  np.random.default_rng(1))
        assert r.estimate == 0.0

    def test_preparation_independence(self):
        attack = adv.Collective(adv.CollectiveParams(0.8, 0.6, 1.0, 0.0, 0.9, 0.2, 1.2, 0.0))
        reps = [an.estimate_detection(attack, 20_000, np.random.default_rng(k), preparation=k) for k in range(8)]
        for a in reps:
            for b in reps:
                assert abs(a.estimate - b.estimate) < 5 * math.hypot(a.std_error, b.std_error)

    def test_mutual_information_bounds(self):
        p = adv.CollectiveParams.symmetric(math.pi / 3)
        r = an.estimate_mutual_information(p, 20_000, np.random.default_rng(2))
        assert 0.0 <= r.estimate <= 1.0
        assert r.closed_form_paper == pytest.approx(an.curve_eve_information(math.pi / 3))

    def test_fairness_smoke(self):
        r = an.fairness_report("bob-1", 5_000, np.random.default_rng(3))
        assert abs(r.estimate - 0.5) < 3 * r.std_error

    def test_abort_oracle(self):
        assert an.abort_probability(0, 0.1) == 0.0
        # 2 decoys, tolerance 0.1: abort unless both are clean
        assert an.abort_probability(1, 0.1) == pytest.approx(1 - 0.75**2)
        assert an.abort_probability(5000, 0.1) == pytest.approx(1.0)


class TestKeyLeakage:
    @given(st.floats(0, math.pi / 2))
    def test_z_type_probe_reveals_nothing(self, alpha):
        assert an.key_leakage_distance(adv.CollectiveParams.symmetric(alpha)) < 1e-12

    def test_bit_flip_components_leak(self):
        p = adv.CollectiveParams(0.6, 0.8, 0.8, 0.6, 1.0, 0.3, 0.4, 2.0)
        assert an.key_leakage_distance(p) > 0.1

    def test_mi_estimate_consistent_with_zero_leakage(self):
        r = an.estimate_mutual_information(adv.CollectiveParams.symmetric(math.pi / 2), 50_000,
                                           np.random.default_rng(8))
        assert r.estimate < 5 * r.std_error + 1e-4
