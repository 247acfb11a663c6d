import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocsdf.hkr import (HKRParams, RMSPropState, bce_grad, bce_loss,
                       hkr_batch_risk, hkr_grad, hkr_hinge_term, hkr_loss,
                       rmsprop_step)

P = HKRParams(margin=0.05, lam=100.0)

finite_floats = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


class TestHKRLoss:
    def test_hinge_inactive_pure_transport(self):
        assert hkr_loss(1, 1.0, P) == pytest.approx(-1.0)

    def test_hinge_active_positive(self):
        assert hkr_loss(1, 0.0, P) == pytest.approx(5.0)

    def test_hinge_active_negative(self):
        assert hkr_loss(-1, 0.03, P) == pytest.approx(8.03)

    @given(f=finite_floats, y=st.sampled_from([-1.0, 1.0]))
    def test_closed_form(self, f, y):
        expected = 100.0 * max(0.0, 0.05 - y * f) - y * f
        assert hkr_loss(y, f, P) == pytest.approx(expected, rel=1e-12)

    @given(a=finite_floats, b=finite_floats, y=st.sampled_from([-1.0, 1.0]))
    def test_convex_in_f(self, a, b, y):
        mid = hkr_loss(y, 0.5 * (a + b), P)
        assert mid <= 0.5 * (hkr_loss(y, a, P) + hkr_loss(y, b, P)) + 1e-9

    def test_params_validated(self):
        with pytest.raises(ValueError):
            HKRParams(margin=0.0, lam=100.0)
        with pytest.raises(ValueError):
            HKRParams(margin=0.05, lam=-1.0)


class TestHKRGrad:
    @pytest.mark.parametrize("y,f,expected", [
        (1, 1.0, -1.0),
        (1, 0.0, -101.0),
        (-1, 0.03, 101.0),
    ])
    def test_examples(self, y, f, expected):
        assert hkr_grad(y, f, P) == expected

    def test_kink_uses_inactive_branch(self):
        # m - y*f == 0 exactly
        assert hkr_grad(1, 0.05, P) == -1.0
        assert hkr_grad(-1, -0.05, P) == 1.0

    @given(f=finite_floats, y=st.sampled_from([-1.0, 1.0]))
    @settings(max_examples=200)
    def test_matches_finite_differences_away_from_kink(self, f, y):
        h = 1e-6
        if abs(0.05 - y * f) < 10 * h:  # skip the kink neighbourhood
            return
        fd = (hkr_loss(y, f + h, P) - hkr_loss(y, f - h, P)) / (2 * h)
        assert hkr_grad(y, f, P) == pytest.approx(fd, rel=1e-8, abs=1e-8)


class TestBatchRisk:
    def test_both_hinges_inactive(self):
        assert hkr_batch_risk([1.0], [-1.0], P) == pytest.approx(-2.0)

    def test_both_at_zero(self):
        assert hkr_batch_risk([0.0], [0.0], P) == pytest.approx(10.0)

    def test_mixed_batch(self):
        # per-term closed forms: pos (0.2, 1.0) -> (-0.2, -1.0); neg -0.5 -> -0.5
        assert hkr_batch_risk([0.2, 1.0], [-0.5], P) == pytest.approx(-1.1)

    def test_empty_side_rejected(self):
        with pytest.raises(ValueError):
            hkr_batch_risk([], [0.0], P)
        with pytest.raises(ValueError):
            hkr_batch_risk([0.0], [], P)

    @given(pos=st.lists(st.floats(0.05, 40), min_size=1, max_size=20),
           neg=st.lists(st.floats(-40, -0.05), min_size=1, max_size=20))
    def test_separated_sets_have_zero_hinge(self, pos, neg):
        assert hkr_hinge_term(pos, neg, P) == 0.0
        transport = -np.mean(pos) + np.mean(neg)
        assert hkr_batch_risk(pos, neg, P) == pytest.approx(transport, rel=1e-12)


class TestBCE:
    def test_logit_zero(self):
        assert bce_loss(1, 0.0) == pytest.approx(np.log(2.0))

    def test_large_logit_limit(self):
        assert bce_loss(1, 1e4) == 0.0
        assert bce_loss(0, -1e4) == 0.0

    def test_stable_value(self):
        # ln(1 + e^2) to 16 digits via mpmath
        import mpmath
        expected = float(mpmath.log(1 + mpmath.e ** 2))
        assert bce_loss(0, 2.0) == pytest.approx(expected, rel=1e-14)

    @given(logit=st.floats(-30, 30), y=st.sampled_from([0.0, 1.0]))
    def test_grad_matches_finite_differences(self, logit, y):
        h = 1e-6
        fd = (bce_loss(y, logit + h) - bce_loss(y, logit - h)) / (2 * h)
        assert bce_grad(y, logit) == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestRMSprop:
    def test_zero_gradient_keeps_params_and_decays_acc(self):
        state = RMSPropState(acc=np.array([4.0]))
        params = np.array([1.5])
        out = rmsprop_step(state, params, np.array([0.0]))
        assert out == pytest.approx(params)
        assert state.acc == pytest.approx([3.6])  # 0.9 * 4.0

    def test_first_step_closed_form(self):
        state = RMSPropState.zeros(1)
        out = rmsprop_step(state, np.array([0.0]), np.array([1.0]))
        assert out[0] == pytest.approx(-1e-3 / (np.sqrt(0.1) + 1e-7), rel=1e-12)

    def test_two_steps_match_hand_recurrence(self):
        state = RMSPropState.zeros(1, learning_rate=0.01, decay_rho=0.8,
                                   epsilon_num=1e-6)
        p = np.array([2.0])
        acc = 0.0
        expect = 2.0
        for g in (0.5, -1.25):
            p = rmsprop_step(state, p, np.array([g]))
            acc = 0.8 * acc + 0.2 * g * g
            expect = expect - 0.01 * g / (np.sqrt(acc) + 1e-6)
            assert p[0] == pytest.approx(expect, rel=1e-14)
            assert state.acc[0] == pytest.approx(acc, rel=1e-14)

    def test_zero_lr_is_identity_on_params(self):
        state = RMSPropState.zeros(3, learning_rate=0.0)
        params = np.array([1.0, -2.0, 3.0])
        out = rmsprop_step(state, params, np.array([5.0, 5.0, 5.0]))
        assert np.array_equal(out, params)

    def test_shape_mismatch_rejected(self):
        state = RMSPropState.zeros(2)
        with pytest.raises(ValueError):
            rmsprop_step(state, np.zeros(2), np.zeros(3))

    def test_rho_validated(self):
        with pytest.raises(ValueError):
            RMSPropState(acc=np.zeros(1), decay_rho=1.5)
