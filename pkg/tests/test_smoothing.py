import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from smoothcal import smoothing as sm
from smoothcal.data import AnnotatedExample
from smoothcal.errors import (
    ConfigurationError,
    InvalidInputError,
    MissingDataError,
    UnsupportedConfigurationError,
)
from smoothcal.smoothing import Method, SmoothingSpec

alphas = st.floats(min_value=1e-6, max_value=1.0)
omegas = st.floats(min_value=1e-6, max_value=0.5)
phis = st.floats(min_value=1e-3, max_value=50.0)
confs = st.floats(min_value=0.0, max_value=1.0)


@st.composite
def votes(draw, odd=False):
    N = draw(st.integers(1, 25))
    if odd and N % 2 == 0:
        N += 1
    return draw(st.integers(0, N)), N


class TestVanilla:
    def test_examples(self):
        assert sm.smooth_vanilla(1, 0.2) == pytest.approx(0.9, abs=1e-15)
        assert sm.smooth_vanilla(0, 0.2) == pytest.approx(0.1, abs=1e-15)

    def test_small_alpha_recovers_hard_label(self):
        assert sm.smooth_vanilla(1, 1e-12) == pytest.approx(1.0, abs=1e-11)

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5, float("nan"), float("inf")])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ConfigurationError, match="alpha"):
            sm.smooth_vanilla(1, alpha)

    def test_alpha_one_is_allowed(self):
        assert sm.smooth_vanilla(1, 1.0) == 0.5

    def test_only_binary(self):
        with pytest.raises(UnsupportedConfigurationError):
            sm.smooth_vanilla(1, 0.1, K=3)

    def test_rejects_soft_label(self):
        with pytest.raises(InvalidInputError):
            sm.smooth_vanilla(0.5, 0.1)


class TestAgreementLinear:
    def test_examples(self):
        assert sm.smooth_agreement_linear(7, 7, 0.1) == pytest.approx(0.95, abs=1e-15)
        assert sm.smooth_agreement_linear(4, 7, 0.1) == pytest.approx(0.5642857142857143, abs=1e-15)

    @given(alpha=alphas, half=st.integers(1, 10))
    def test_half_agreement_is_midpoint(self, alpha, half):
        assert sm.smooth_agreement_linear(half, 2 * half, alpha) == pytest.approx(0.5, abs=1e-15)

    def test_bad_counts(self):
        with pytest.raises(InvalidInputError):
            sm.smooth_agreement_linear(1, 0, 0.1)
        with pytest.raises(InvalidInputError):
            sm.smooth_agreement_linear(8, 7, 0.1)
        with pytest.raises(InvalidInputError):
            sm.smooth_agreement_linear(-1, 7, 0.1)

    def test_vectorised(self):
        y = sm.smooth_agreement_linear(np.arange(8), 7, 0.1)
        assert isinstance(y, np.ndarray) and y.shape == (8,)
        assert isinstance(sm.smooth_agreement_linear(3, 7, 0.1), float)


class TestAgreementPiecewise:
    def test_seven_annotators(self):
        got = sm.smooth_agreement_piecewise(np.arange(8), 7, 0.3)
        np.testing.assert_allclose(got, [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 0.9, 1.0], atol=1e-15)

    @given(omega=omegas)
    def test_threshold_is_half(self, omega):
        assert sm.majority_threshold(7) == 4
        assert sm.smooth_agreement_piecewise(4, 7, omega) == 0.5

    def test_full_agreement(self):
        assert sm.smooth_agreement_piecewise(7, 7, 0.3) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("N", [1, 2])
    def test_divisor_zero_rejected(self, N):
        with pytest.raises(UnsupportedConfigurationError, match="n_m"):
            sm.smooth_agreement_piecewise(1, N, 0.3)

    def test_even_annotators_rejected(self):
        # upper branch would exceed 1 at n_k = N
        with pytest.raises(UnsupportedConfigurationError, match="odd"):
            sm.smooth_agreement_piecewise(8, 8, 0.3)

    @pytest.mark.parametrize("omega", [0.0, 0.51, 1.0])
    def test_omega_domain(self, omega):
        with pytest.raises(ConfigurationError, match="omega"):
            sm.smooth_agreement_piecewise(4, 7, omega)

    def test_midpoint_pair_is_asymmetric(self):
        # 4-of-7 gets 0.5 but its complement 3-of-7 gets omega
        y4 = sm.smooth_agreement_piecewise(4, 7, 0.3)
        y3 = sm.smooth_agreement_piecewise(3, 7, 0.3)
        assert y4 + y3 == pytest.approx(0.8)


class TestAgreementNonlinear:
    def test_examples(self):
        assert sm.smooth_agreement_nonlinear(7, 7, 7.5) == pytest.approx(0.9770226300899744, abs=1e-15)
        assert sm.smooth_agreement_nonlinear(4, 7, 7.5) == pytest.approx(0.6308148893779794, abs=1e-15)

    @given(phi=phis)
    def test_half(self, phi):
        assert sm.smooth_agreement_nonlinear(3, 6, phi) == 0.5

    @pytest.mark.parametrize("phi", [0.0, -1.0])
    def test_phi_domain(self, phi):
        with pytest.raises(ConfigurationError, match="phi"):
            sm.smooth_agreement_nonlinear(3, 7, phi)

    def test_large_phi_does_not_overflow(self):
        with np.errstate(over="raise", invalid="raise"):
            assert sm.smooth_agreement_nonlinear(0, 7, 1e4) == 0.0
            assert sm.smooth_agreement_nonlinear(7, 7, 1e4) == 1.0


class TestConfidence:
    def test_vanilla_examples(self):
        assert sm.smooth_confidence_vanilla(0.8, 0.2) == pytest.approx(0.9, abs=1e-15)
        assert sm.smooth_confidence_vanilla(0.3, 0.2) == pytest.approx(0.1, abs=1e-15)
        assert sm.smooth_confidence_vanilla(1.0, 1e-12) == pytest.approx(1.0, abs=1e-11)

    def test_vanilla_tie_rounds_up(self):
        assert sm.round_confidence(0.5) == 1.0
        assert sm.round_confidence(np.nextafter(0.5, 0)) == 0.0
        assert sm.smooth_confidence_vanilla(0.5, 0.2) == pytest.approx(0.9)

    def test_linear_examples(self):
        assert sm.smooth_confidence_linear(0.9, 0.1) == pytest.approx(0.86, abs=1e-15)
        assert sm.smooth_confidence_linear(0.0, 0.1) == pytest.approx(0.05, abs=1e-15)

    @given(alpha=alphas)
    def test_linear_midpoint(self, alpha):
        assert sm.smooth_confidence_linear(0.5, alpha) == pytest.approx(0.5, abs=1e-15)

    def test_piecewise_examples(self):
        assert sm.smooth_confidence_piecewise(0.5, 0.3) == 0.5
        assert sm.smooth_confidence_piecewise(0.75, 0.3) == pytest.approx(0.85, abs=1e-15)
        assert sm.smooth_confidence_piecewise(0.2, 0.3) == pytest.approx(0.12, abs=1e-15)

    def test_nonlinear_examples(self):
        assert sm.smooth_confidence_nonlinear(0.5, 3.0) == 0.5
        assert sm.smooth_confidence_nonlinear(1.0, 7.5) == pytest.approx(0.9770226300899744, abs=1e-15)
        assert sm.smooth_confidence_nonlinear(0.0, 7.5) == pytest.approx(0.022977369910025615, abs=1e-15)

    @pytest.mark.parametrize(
        "fn, h",
        [
            (sm.smooth_confidence_vanilla, 0.1),
            (sm.smooth_confidence_linear, 0.1),
            (sm.smooth_confidence_piecewise, 0.3),
            (sm.smooth_confidence_nonlinear, 5.0),
        ],
    )
    @pytest.mark.parametrize("c", [-0.01, 1.01, float("nan")])
    def test_confidence_domain(self, fn, h, c):
        with pytest.raises(InvalidInputError):
            fn(c, h)


ALL_AGREEMENT = [
    (sm.smooth_agreement_linear, oracles.agreement_linear, alphas),
    (sm.smooth_agreement_piecewise, oracles.agreement_piecewise, omegas),
    (sm.smooth_agreement_nonlinear, oracles.agreement_nonlinear, phis),
]
ALL_CONFIDENCE = [
    (sm.smooth_confidence_vanilla, oracles.confidence_vanilla, alphas),
    (sm.smooth_confidence_linear, oracles.confidence_linear, alphas),
    (sm.smooth_confidence_piecewise, oracles.confidence_piecewise, omegas),
    (sm.smooth_confidence_nonlinear, oracles.confidence_nonlinear, phis),
]


class TestProperties:
    @pytest.mark.parametrize("fn, oracle, hs", ALL_AGREEMENT)
    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_agreement_matches_oracle_and_range(self, fn, oracle, hs, data):
        piecewise = fn is sm.smooth_agreement_piecewise
        n_k, N = data.draw(votes(odd=piecewise))
        if piecewise and N < 3:
            n_k, N = min(n_k, 3), 3
        h = data.draw(hs)
        y = fn(n_k, N, h)
        assert 0.0 <= y <= 1.0
        assert abs(y - oracle(n_k, N, h)) <= 1e-12

    @pytest.mark.parametrize("fn, oracle, hs", ALL_CONFIDENCE)
    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_confidence_matches_oracle_and_range(self, fn, oracle, hs, data):
        c = data.draw(confs)
        h = data.draw(hs)
        y = fn(c, h)
        assert 0.0 <= y <= 1.0
        assert abs(y - oracle(c, h)) <= 1e-12

    @pytest.mark.parametrize("fn, oracle, hs", ALL_CONFIDENCE)
    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_confidence_monotone(self, fn, oracle, hs, data):
        a, b = sorted([data.draw(confs), data.draw(confs)])
        h = data.draw(hs)
        assert fn(a, h) <= fn(b, h)

    @given(c=confs, alpha=alphas, phi=phis)
    def test_confidence_symmetry(self, c, alpha, phi):
        assert sm.smooth_confidence_linear(c, alpha) + sm.smooth_confidence_linear(1 - c, alpha) == pytest.approx(1, abs=1e-12)
        assert sm.smooth_confidence_nonlinear(c, phi) + sm.smooth_confidence_nonlinear(1 - c, phi) == pytest.approx(1, abs=1e-12)

    @given(omega=omegas)
    def test_piecewise_jump(self, omega):
        below = sm.smooth_confidence_piecewise(np.nextafter(0.5, 0), omega)
        above = sm.smooth_confidence_piecewise(np.nextafter(0.5, 1), omega)
        assert above - below == pytest.approx(1 - 2 * omega, abs=1e-12)

    @given(phi=phis)
    def test_nonlinear_never_hits_endpoints(self, phi):
        # for phi small enough that float64 can still represent the gap
        if phi > 60:
            return
        assert 0 < sm.smooth_agreement_nonlinear(0, 7, phi) < 1
        assert 0 < sm.smooth_confidence_nonlinear(1.0, phi) < 1


class TestSpec:
    def test_hard_takes_no_param(self):
        with pytest.raises(ConfigurationError):
            SmoothingSpec("hard", 0.1)

    def test_missing_param(self):
        with pytest.raises(ConfigurationError, match="phi"):
            SmoothingSpec("agreement-nonlinear")

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError, match="unknown method"):
            SmoothingSpec("temperature", 1.0)

    def test_param_domain_checked(self):
        with pytest.raises(ConfigurationError):
            SmoothingSpec("vanilla", 0.0)
        with pytest.raises(ConfigurationError):
            SmoothingSpec("confidence-piecewise", 0.6)

    def test_roundtrip(self):
        s = SmoothingSpec("agreement-piecewise", 0.25)
        assert SmoothingSpec.from_dict(s.to_dict()) == s
        assert s.method is Method.AGREEMENT_PIECEWISE
        assert s.label() == "agreement-piecewise(omega=0.25)"

    def test_method_properties(self):
        assert Method.HARD.hyperparameter is None
        assert Method.CONFIDENCE_PIECEWISE.hyperparameter == "omega"
        assert Method.AGREEMENT_NONLINEAR.hyperparameter == "phi"
        assert Method.VANILLA.hyperparameter == "alpha"
        assert Method.AGREEMENT_LINEAR.uses_votes and not Method.VANILLA.uses_votes
        assert Method.CONFIDENCE_LINEAR.uses_confidence


class TestApplySmoothing:
    ex = AnnotatedExample("e1", np.zeros(2), n_pos=4, n_annotators=7, gold=1)

    def test_hard(self):
        assert sm.apply_smoothing(SmoothingSpec("hard"), self.ex) == 1.0

    def test_agreement(self):
        y = sm.apply_smoothing(SmoothingSpec("agreement-nonlinear", 7.5), self.ex)
        assert y == pytest.approx(0.6308148893779794, abs=1e-15)
        assert y == sm.smooth_agreement_nonlinear(4, 7, 7.5)

    def test_confidence(self):
        y = sm.apply_smoothing(SmoothingSpec("confidence-vanilla", 0.2), self.ex, baseline_confidence=0.8)
        assert y == pytest.approx(0.9, abs=1e-15)

    def test_vanilla_uses_gold(self):
        assert sm.apply_smoothing(SmoothingSpec("vanilla", 0.2), self.ex) == pytest.approx(0.9)

    def test_missing_confidence_names_example(self):
        with pytest.raises(MissingDataError, match="e1"):
            sm.apply_smoothing(SmoothingSpec("confidence-linear", 0.1), self.ex)

    def test_missing_votes_names_example(self):
        single = AnnotatedExample("solo-3", np.zeros(2), n_pos=None, n_annotators=None, gold=0)
        with pytest.raises(MissingDataError, match="solo-3"):
            sm.apply_smoothing(SmoothingSpec("agreement-linear", 0.1), single)
        assert sm.apply_smoothing(SmoothingSpec("vanilla", 0.2), single) == pytest.approx(0.1)

    def test_vectorised_dispatch_matches_scalar(self):
        n_pos = np.arange(8)
        got = sm.smooth(SmoothingSpec("agreement-piecewise", 0.3), n_pos=n_pos, n_annotators=np.full(8, 7))
        want = [sm.smooth_agreement_piecewise(int(k), 7, 0.3) for k in n_pos]
        np.testing.assert_array_equal(got, want)
