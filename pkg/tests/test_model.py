"""Link functions, borrow-weight kernel, and the SPx joint log-density."""

import math

import numpy as np
import pytest

from helpers import oracle_log_joint, small_dataset, tiny_dataset
from spxborrow.model import (
    Dataset,
    ParameterState,
    SpxHyperParams,
    TrialSummary,
    borrow_weights,
    inv_logit,
    log_jeffreys_logit_pdf,
    log_joint,
    logit,
    weighted_mean,
)


class TestLinks:
    def test_logit_symmetry_point(self):
        assert logit(0.5) == 0.0

    def test_logit_value(self):
        assert logit(0.24) == pytest.approx(-1.1527, abs=1e-4)

    def test_logit_domain(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                logit(bad)

    def test_inv_logit_center_and_tail(self):
        assert inv_logit(0.0) == 0.5
        big = inv_logit(40.0)
        assert big < 1.0
        assert big > 1.0 - 1e-12
        assert inv_logit(-1.1527) == pytest.approx(0.24, abs=1e-4)

    def test_round_trip(self):
        assert logit(inv_logit(3.7)) == pytest.approx(3.7, abs=1e-12)
        for p in np.linspace(1e-6, 1.0 - 1e-6, 101):
            assert abs(inv_logit(logit(p)) - p) < 1e-12


class TestBorrowWeights:
    def test_zero_beta_uniform(self):
        ds = small_dataset()
        bw = borrow_weights((0.0, 0.0), ds, SpxHyperParams())
        np.testing.assert_allclose(bw.w, np.full(5, 0.2), atol=1e-12)

    def test_hand_computed_kernel(self):
        # predictions (0.20, 0.30) against a new trial at 0.20:
        # weights proportional to (1, 0.5**(0.10/0.05)) = (1, 0.25)
        hist = (
            TrialSummary(id="a", n=10, y=2, x=(1.0, logit(0.20))),
            TrialSummary(id="b", n=10, y=3, x=(1.0, logit(0.30))),
        )
        new = TrialSummary(id="new", n=10, y=2, x=(1.0, logit(0.20)))
        ds = Dataset(historical=hist, new_trial=new)
        bw = borrow_weights((0.0, 1.0), ds, SpxHyperParams())
        np.testing.assert_allclose(bw.w, (0.8, 0.2), atol=1e-9)
        np.testing.assert_allclose(bw.pi_tilde, (0.20, 0.30, 0.20), atol=1e-9)

    def test_far_apart_predictions_normalized(self):
        hist = (
            TrialSummary(id="a", n=10, y=2, x=(1.0, -5.0)),
            TrialSummary(id="b", n=10, y=3, x=(1.0, -5.0)),
        )
        new = TrialSummary(id="new", n=10, y=2, x=(1.0, 5.0))
        ds = Dataset(historical=hist, new_trial=new)
        bw = borrow_weights((0.0, 1.0), ds, SpxHyperParams())
        assert math.isfinite(sum(bw.w))
        assert sum(bw.w) == pytest.approx(1.0, abs=1e-12)

    def test_permutation_equivariance(self):
        ds = small_dataset()
        beta = (0.3, 0.7)
        bw = borrow_weights(beta, ds, SpxHyperParams())
        perm = [3, 1, 4, 0, 2]
        ds_p = Dataset(
            historical=tuple(ds.historical[i] for i in perm),
            new_trial=ds.new_trial,
        )
        bw_p = borrow_weights(beta, ds_p, SpxHyperParams())
        np.testing.assert_allclose(bw_p.w, [bw.w[i] for i in perm], atol=1e-14)

    def test_distance_monotonicity(self):
        # the further a trial's prediction sits from the new trial's, the
        # smaller its normalized weight
        hist = tuple(
            TrialSummary(id=f"t{k}", n=10, y=2, x=(1.0, v))
            for k, v in enumerate((-0.2, -0.6, -1.2, -2.5))
        )
        new = TrialSummary(id="new", n=10, y=2, x=(1.0, 0.0))
        ds = Dataset(historical=hist, new_trial=new)
        bw = borrow_weights((0.0, 1.0), ds, SpxHyperParams())
        assert all(a > b for a, b in zip(bw.w, bw.w[1:]))


class TestWeightedMean:
    def test_symmetry(self):
        ds = small_dataset()
        hist = ds.historical[:2]
        ds2 = Dataset(historical=hist, new_trial=ds.new_trial)
        bw = borrow_weights((0.0, 0.0), ds2, SpxHyperParams())
        assert weighted_mean(bw, (-1.0, 1.0)) == pytest.approx(0.0, abs=1e-15)

    def test_dot_product(self):
        hist = (
            TrialSummary(id="a", n=10, y=2, x=(1.0, logit(0.20))),
            TrialSummary(id="b", n=10, y=3, x=(1.0, logit(0.30))),
        )
        new = TrialSummary(id="new", n=10, y=2, x=(1.0, logit(0.20)))
        ds = Dataset(historical=hist, new_trial=new)
        bw = borrow_weights((0.0, 1.0), ds, SpxHyperParams())
        assert weighted_mean(bw, (-1.386, -0.847)) == pytest.approx(-1.2782, abs=1e-4)

    def test_single_trial(self):
        ds = tiny_dataset()
        bw = borrow_weights((0.0,), ds, SpxHyperParams())
        assert weighted_mean(bw, (0.37,)) == 0.37


def _random_state(rng, n_hist, n_cov) -> ParameterState:
    return ParameterState(
        theta_hist_trials=tuple(rng.normal(-1.0, 1.0, n_hist).tolist()),
        beta=tuple(rng.normal(0.0, 1.0, n_cov).tolist()),
        tau=float(rng.uniform(0.1, 3.0)),
        sigma=float(rng.uniform(0.01, 1.0)),
        theta_hist=float(rng.normal(-1.0, 1.0)),
        theta_reg=float(rng.normal(-1.0, 1.0)),
        theta_ind=float(rng.normal(0.0, 2.0)),
        z=("hist", "reg", "ind")[rng.integers(3)],
    )


class TestLogJoint:
    def test_finite_for_valid_state(self):
        ds = small_dataset()
        rng = np.random.default_rng(0)
        state = _random_state(rng, 5, 2)
        assert math.isfinite(log_joint(state, ds, SpxHyperParams()))

    def test_matches_independent_implementation(self):
        hp = SpxHyperParams()
        rng = np.random.default_rng(7)
        for ds, n_hist, n_cov in ((tiny_dataset(), 1, 1), (small_dataset(), 5, 2)):
            for _ in range(25):
                state = _random_state(rng, n_hist, n_cov)
                ours = log_joint(state, ds, hp)
                oracle = oracle_log_joint(state, ds, hp)
                assert ours == pytest.approx(oracle, abs=1e-10)

    def test_unselected_expert_changes_only_its_prior(self):
        # moving an expert the selector is not pointing at shifts the joint
        # by exactly that expert's prior log-density change
        ds = small_dataset()
        hp = SpxHyperParams()
        rng = np.random.default_rng(3)
        state = _random_state(rng, 5, 2)
        state = ParameterState(**{**state.__dict__, "z": "hist"})
        moved = ParameterState(**{**state.__dict__, "theta_ind": state.theta_ind + 0.9})
        diff = log_joint(moved, ds, hp) - log_joint(state, ds, hp)
        expected = log_jeffreys_logit_pdf(moved.theta_ind) - log_jeffreys_logit_pdf(
            state.theta_ind
        )
        assert diff == pytest.approx(expected, abs=1e-12)

    def test_off_support_sentinel(self):
        ds = small_dataset()
        rng = np.random.default_rng(5)
        state = _random_state(rng, 5, 2)
        for field_name in ("tau", "sigma"):
            bad = ParameterState(**{**state.__dict__, field_name: -0.5})
            assert log_joint(bad, ds, SpxHyperParams()) == -math.inf

    def test_jeffreys_logit_density_normalizes(self):
        grid = np.linspace(-40.0, 40.0, 400_001)
        vals = np.exp([log_jeffreys_logit_pdf(t) for t in grid])
        integral = np.trapezoid(vals, grid)
        assert integral == pytest.approx(1.0, abs=1e-3)


class TestTypes:
    def test_hyperparams_validation(self):
        with pytest.raises(ValueError):
            SpxHyperParams(p_hist=0.5, p_reg=0.5, p_ind=0.5)
        with pytest.raises(ValueError):
            SpxHyperParams(sigma_scale=0.0)
        with pytest.raises(ValueError):
            SpxHyperParams(w_base=1.0)

    def test_trial_summary_validation(self):
        with pytest.raises(ValueError):
            TrialSummary(id="bad", n=40, y=50, x=(1.0,))
        with pytest.raises(ValueError):
            TrialSummary(id="bad", n=10, y=2, x=(0.0,))
        with pytest.raises(ValueError):
            TrialSummary(id="bad", n=10, y=2, x=(1.0, math.nan))

    def test_dataset_validation(self):
        hist = (TrialSummary(id="a", n=10, y=2, x=(1.0, 0.5)),)
        with pytest.raises(ValueError):
            Dataset(historical=hist, new_trial=TrialSummary(id="n", n=5, y=1, x=(1.0,)))
        with pytest.raises(ValueError):
            Dataset(historical=(), new_trial=TrialSummary(id="n", n=5, y=1, x=(1.0,)))

    def test_parameter_state_selector(self):
        with pytest.raises(ValueError):
            ParameterState(
                theta_hist_trials=(0.0,),
                beta=(0.0,),
                tau=1.0,
                sigma=1.0,
                theta_hist=0.0,
                theta_reg=0.0,
                theta_ind=0.0,
                z="nope",
            )
