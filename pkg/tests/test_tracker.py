"""Recursive tracker against independent oracles.

The oracles here rebuild target quantities from scratch with plain
loops and dense solves: a normal-equation ridge solve for the per-step
weights, a shadow accumulator for the recursive-consistency identity,
and a direct weighted sum over the trailing window for the windowed
row matrices. Tracker iterates (b and the factor snapshots) are taken
as given when an oracle only certifies the state bookkeeping.
"""

import numpy as np
import pytest

from olstec import (
    ConfigError,
    CpFactors,
    Dims,
    OlstecTracker,
    SingularGramError,
    SliceObservation,
    SynthConfig,
    TrackerConfig,
    generate_stream,
    initial_state,
    solve_weights,
)
from olstec.tracker import rls_row_update


def ridge_weights_oracle(A, C, Y, mask, mu):
    """Entrywise normal-equation build, dense solve. No shared code."""
    R = A.shape[1]
    lhs = mu * np.eye(R)
    rhs = np.zeros(R)
    L, W = Y.shape
    for l in range(L):
        for w in range(W):
            if mask[l, w]:
                g = A[l] * C[w]
                lhs += np.outer(g, g)
                rhs += Y[l, w] * g
    return np.linalg.solve(lhs, rhs)


def random_problem(rng, L, W, R):
    A = rng.standard_normal((L, R))
    C = rng.standard_normal((W, R))
    Y = rng.standard_normal((L, W))
    mask = rng.random((L, W)) < 0.6
    return A, C, Y, mask


class TestSolveWeights:
    def test_matches_ridge_oracle(self):
        rng = np.random.default_rng(100)
        for _ in range(25):
            L = int(rng.integers(2, 11))
            W = int(rng.integers(2, 11))
            R = int(rng.integers(1, 5))
            mu = float(rng.choice([1e-3, 1e-1]))
            A, C, Y, mask = random_problem(rng, L, W, R)
            expected = ridge_weights_oracle(A, C, Y, mask, mu)
            got = solve_weights(A, C, Y, mask, mu)
            err = np.linalg.norm(got - expected) / np.linalg.norm(expected)
            assert err <= 1e-10

    def test_empty_mask_gives_zero_vector(self):
        rng = np.random.default_rng(1)
        A, C, Y, _ = random_problem(rng, 4, 3, 2)
        b = solve_weights(A, C, Y, np.zeros((4, 3), dtype=bool), 1e-3)
        np.testing.assert_array_equal(b, np.zeros(2))

    def test_singular_system_raises_recoverable_error(self):
        C = np.random.default_rng(2).standard_normal((3, 3))
        A = np.zeros((4, 3))  # zero regressors, no regularization
        Y = np.ones((4, 3))
        mask = np.ones((4, 3), dtype=bool)
        with pytest.raises(SingularGramError, match="mu"):
            solve_weights(A, C, Y, mask, 0.0)

    def test_unobserved_garbage_is_ignored(self):
        rng = np.random.default_rng(3)
        A, C, Y, mask = random_problem(rng, 6, 5, 2)
        b_clean = solve_weights(A, C, Y, mask, 1e-2)
        Y_poisoned = Y.copy()
        Y_poisoned[~mask] = np.nan
        b_poisoned = solve_weights(A, C, Y_poisoned, mask, 1e-2)
        np.testing.assert_array_equal(b_clean, b_poisoned)


class TestRowUpdate:
    def test_exact_fit_is_fixed_point(self):
        # forgetting 1 and zero regularization increment: a row already
        # fitting all observed targets must not move at all
        rng = np.random.default_rng(4)
        gram = np.eye(3) + 0.1 * np.ones((3, 3))
        coef = rng.standard_normal(3)
        vecs = rng.standard_normal((5, 3))
        vals = vecs @ coef
        new_gram, new_coef = rls_row_update(gram, coef, vecs, vals, 1.0, 0.0)
        np.testing.assert_array_equal(new_coef, coef)
        np.testing.assert_allclose(new_gram, gram + vecs.T @ vecs, rtol=1e-14)

    def test_no_observations_no_forgetting_is_identity(self):
        rng = np.random.default_rng(5)
        gram = 2.0 * np.eye(2)
        coef = rng.standard_normal(2)
        empty = np.zeros((0, 2))
        new_gram, new_coef = rls_row_update(gram, coef, empty, np.zeros(0), 1.0, 0.0)
        np.testing.assert_array_equal(new_gram, gram)
        np.testing.assert_array_equal(new_coef, coef)

    def test_gram_recursion_formula(self):
        rng = np.random.default_rng(6)
        gram = np.eye(3) * 0.5
        coef = rng.standard_normal(3)
        vecs = rng.standard_normal((4, 3))
        vals = rng.standard_normal(4)
        lam, mu_delta = 0.8, 0.02
        new_gram, _ = rls_row_update(gram, coef, vecs, vals, lam, mu_delta)
        expected = lam * gram + vecs.T @ vecs + mu_delta * np.eye(3)
        np.testing.assert_allclose(new_gram, expected, rtol=1e-14)


def drive(tracker, stream, truth_too=False):
    outs = []
    for obs, truth in stream:
        outs.append(tracker.step(obs, truth if truth_too else None))
    return outs


def synth_stream(L=10, W=8, R=3, T=20, angle=0.05, noise=1e-3, ratio=0.6, seed=9):
    return list(
        generate_stream(
            SynthConfig(L=L, W=W, T=T, rank=R, angle=angle, noise=noise,
                        ratio=ratio, seed=seed)
        )
    )


class TestShadowIdentity:
    """RA_l[t] @ a_l[t] must track s_l[t] = lam * s_l[t-1] + sum of
    observed Y * alpha, with s_l[0] = RA_l[0] @ a_l[0]. The identity is
    algebraically exact for the recursion, so numerical agreement
    certifies every piece of the per-step assembly at once."""

    def test_shadow_identity_small(self):
        # capture pre-step factors every step to rebuild the alphas
        L, W, R, T = 2, 2, 1, 3
        lam, mu, gamma = 0.5, 0.1, 10.0
        cfg = TrackerConfig(rank=R, forgetting=lam, mu=mu, gamma=gamma, seed=3)
        tracker = OlstecTracker(Dims(L, W, R), cfg)
        scale = 1.0 / cfg.gamma_value
        shadow_a = scale * tracker.factors.A.copy()  # RA[0] @ a[0] per row
        shadow_c = scale * tracker.factors.C.copy()
        stream = [
            (SliceObservation(t=i + 1,
                              values=np.random.default_rng(50 + i).standard_normal((L, W)),
                              mask=np.random.default_rng(60 + i).random((L, W)) < 0.8),
             None)
            for i in range(T)
        ]
        for obs, _ in stream:
            C_prev = tracker.factors.C.copy()
            A_prev = tracker.factors.A.copy()
            out = tracker.step(obs)
            b = out.b
            alpha = b * C_prev
            beta = b * tracker.factors.A  # gauss-seidel: post-update A
            maskf = obs.mask.astype(float)
            shadow_a = lam * shadow_a + (maskf * obs.values) @ alpha
            shadow_c = lam * shadow_c + (maskf * obs.values).T @ beta
            prod_a = np.einsum("lij,lj->li", tracker.state.gram_a, tracker.factors.A)
            prod_c = np.einsum("wij,wj->wi", tracker.state.gram_c, tracker.factors.C)
            assert np.linalg.norm(prod_a - shadow_a) <= 1e-10 * max(
                1.0, np.linalg.norm(shadow_a)
            )
            assert np.linalg.norm(prod_c - shadow_c) <= 1e-10 * max(
                1.0, np.linalg.norm(shadow_c)
            )


class TestStepBehavior:
    def test_unobserved_rows_follow_decay_only(self):
        # rows with an empty mask must evolve by the data-free recursion
        L, W, R = 6, 5, 2
        lam, mu = 0.8, 1e-2
        tracker = OlstecTracker(
            Dims(L, W, R), TrackerConfig(rank=R, forgetting=lam, mu=mu, seed=0)
        )
        rng = np.random.default_rng(12)
        values = rng.standard_normal((L, W))
        mask = rng.random((L, W)) < 0.7
        mask[2, :] = False  # row 2 of A sees nothing
        gram_before = tracker.state.gram_a[2].copy()
        coef_before = tracker.factors.A[2].copy()
        tracker.step(SliceObservation(1, values, mask))
        mu_delta = mu * (1.0 - lam)
        expected_gram = lam * gram_before + mu_delta * np.eye(R)
        np.testing.assert_allclose(tracker.state.gram_a[2], expected_gram, rtol=1e-14)
        expected_coef = coef_before + np.linalg.solve(
            expected_gram, -mu_delta * coef_before
        )
        np.testing.assert_allclose(tracker.factors.A[2], expected_coef, rtol=1e-10)

    def test_full_noop_when_lam_one_and_nothing_observed(self):
        L, W, R = 4, 3, 2
        tracker = OlstecTracker(
            Dims(L, W, R), TrackerConfig(rank=R, forgetting=1.0, mu=0.5, seed=1)
        )
        A0 = tracker.factors.A.copy()
        C0 = tracker.factors.C.copy()
        gram0 = tracker.state.gram_a.copy()
        out = tracker.step(
            SliceObservation(1, np.zeros((L, W)), np.zeros((L, W), dtype=bool))
        )
        np.testing.assert_array_equal(out.b, np.zeros(R))
        np.testing.assert_array_equal(tracker.factors.A, A0)
        np.testing.assert_array_equal(tracker.factors.C, C0)
        np.testing.assert_array_equal(tracker.state.gram_a, gram0)

    def test_symmetry_and_spd_preserved(self):
        tracker = OlstecTracker(Dims(10, 10, 3), TrackerConfig(rank=3, seed=5))
        for obs, _ in synth_stream(L=10, W=10, R=3, T=15, seed=21):
            tracker.step(obs)
            for gram in (tracker.state.gram_a, tracker.state.gram_c):
                asym = np.abs(gram - gram.transpose(0, 2, 1)).max()
                assert asym <= 1e-10
                eigs = np.linalg.eigvalsh(gram)
                assert eigs.min() > 0

    def test_determinism(self):
        cfg = TrackerConfig(rank=3, forgetting=0.9, mu=1e-2, seed=77)
        stream = synth_stream(L=9, W=7, R=3, T=12, seed=5)
        t1 = OlstecTracker(Dims(9, 7, 3), cfg)
        t2 = OlstecTracker(Dims(9, 7, 3), cfg)
        for obs, _ in stream:
            o1 = t1.step(obs)
            o2 = t2.step(obs)
            np.testing.assert_array_equal(o1.b, o2.b)
            np.testing.assert_array_equal(o1.reconstruction, o2.reconstruction)
        np.testing.assert_array_equal(t1.factors.A, t2.factors.A)

    def test_shape_mismatch_rejected(self):
        tracker = OlstecTracker(Dims(4, 3, 2), TrackerConfig(rank=2))
        with pytest.raises(Exception):
            tracker.step(
                SliceObservation(1, np.zeros((3, 4)), np.ones((3, 4), dtype=bool))
            )

    def test_prediction_uses_prestep_factors(self):
        tracker = OlstecTracker(Dims(6, 5, 2), TrackerConfig(rank=2, seed=3))
        obs, _ = synth_stream(L=6, W=5, R=2, T=1, seed=8)[0]
        A0 = tracker.factors.A.copy()
        C0 = tracker.factors.C.copy()
        out = tracker.step(obs)
        np.testing.assert_array_equal(out.prediction, (A0 * out.b) @ C0.T)
        assert not np.array_equal(out.prediction, out.reconstruction)


class TestOrdering:
    def test_orderings_differ_on_generic_data(self):
        stream = synth_stream(L=8, W=6, R=2, T=5, seed=31)
        gs = OlstecTracker(Dims(8, 6, 2), TrackerConfig(rank=2, seed=9))
        ja = OlstecTracker(
            Dims(8, 6, 2), TrackerConfig(rank=2, ordering="jacobi", seed=9)
        )
        first, _ = stream[0]
        gs.step(first)
        ja.step(first)
        # the A phase runs first either way, so step one agrees on A
        np.testing.assert_array_equal(gs.factors.A, ja.factors.A)
        assert not np.allclose(gs.factors.C, ja.factors.C)
        for obs, _ in stream[1:]:
            gs.step(obs)
            ja.step(obs)
        # the differing C feeds back into A from step two on
        assert not np.allclose(gs.factors.A, ja.factors.A)

    def test_jacobi_symmetric_setup_updates_match(self):
        # same initial A and C, symmetric slice and mask: both factor
        # updates see identical inputs, so the updated rows coincide
        L, R = 5, 2
        rng = np.random.default_rng(13)
        base = rng.standard_normal((L, R))
        tracker = OlstecTracker(
            Dims(L, L, R), TrackerConfig(rank=R, ordering="jacobi", seed=0)
        )
        tracker.state.factors = CpFactors(base.copy(), base.copy(),
                                          tracker.factors.b)
        raw = rng.standard_normal((L, L))
        values = raw + raw.T
        maskraw = rng.random((L, L)) < 0.7
        mask = maskraw | maskraw.T
        tracker.step(SliceObservation(1, values, mask))
        np.testing.assert_array_equal(tracker.factors.A, tracker.factors.C)


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            TrackerConfig(rank=0)
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, forgetting=0.0)
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, forgetting=1.2)
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, mu=0.0)
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, gamma=-1.0)
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, gamma="car")
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, variant="fancy")
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, variant="window")  # missing window_len
        with pytest.raises(ConfigError):
            TrackerConfig(rank=2, ordering="random")
        with pytest.raises(ConfigError):
            OlstecTracker(Dims(4, 4, 3), TrackerConfig(rank=2))

    def test_lambda_one_is_allowed(self):
        TrackerConfig(rank=2, forgetting=1.0)

    def test_gamma_auto_matches_regularizer_floor(self):
        cfg = TrackerConfig(rank=2, mu=0.05, gamma="auto")
        state = initial_state(Dims(3, 3, 2), cfg)
        np.testing.assert_allclose(state.gram_a[0], 0.05 * np.eye(2), rtol=1e-12)

    def test_explicit_gamma_sets_inverse_scale(self):
        cfg = TrackerConfig(rank=2, gamma=4.0)
        state = initial_state(Dims(3, 3, 2), cfg)
        np.testing.assert_allclose(state.gram_a[1], 0.25 * np.eye(2), rtol=1e-15)

    def test_init_draw_order_and_seed(self):
        cfg = TrackerConfig(rank=3, seed=123)
        state = initial_state(Dims(4, 5, 3), cfg)
        rng = np.random.default_rng(123)
        np.testing.assert_array_equal(state.factors.A, rng.standard_normal((4, 3)))
        np.testing.assert_array_equal(state.factors.C, rng.standard_normal((5, 3)))
        np.testing.assert_array_equal(state.factors.b, rng.standard_normal(3))


class TestBatchedAgainstRowReference:
    """The stacked per-step pass must agree with the spelled-out
    single-row update it replaces."""

    def test_full_run_matches_row_by_row_replay(self):
        L, W, R = 6, 5, 2
        lam, mu = 0.8, 1e-2
        cfg = TrackerConfig(rank=R, forgetting=lam, mu=mu, seed=3)
        tracker = OlstecTracker(Dims(L, W, R), cfg)

        ref = initial_state(Dims(L, W, R), cfg)
        mu_delta = mu * (1.0 - lam)
        rng = np.random.default_rng(17)
        for t in range(1, 8):
            values = rng.standard_normal((L, W))
            mask = rng.random((L, W)) < 0.6
            tracker.step(SliceObservation(t, values, mask))

            A_prev, C_prev = ref.factors.A, ref.factors.C
            b = solve_weights(A_prev, C_prev, values, mask, mu)
            alpha = b * C_prev
            A_new = np.empty_like(A_prev)
            for l in range(L):
                sel = mask[l]
                ref.gram_a[l], A_new[l] = rls_row_update(
                    ref.gram_a[l], A_prev[l], alpha[sel], values[l, sel],
                    lam, mu_delta)
            beta = b * A_new  # gauss-seidel default
            C_new = np.empty_like(C_prev)
            for w in range(W):
                sel = mask[:, w]
                ref.gram_c[w], C_new[w] = rls_row_update(
                    ref.gram_c[w], C_prev[w], beta[sel], values[sel, w],
                    lam, mu_delta)
            ref.factors = CpFactors(A_new, C_new, b)

            np.testing.assert_allclose(tracker.factors.A, ref.factors.A,
                                       rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(tracker.factors.C, ref.factors.C,
                                       rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(tracker.state.gram_a, ref.gram_a,
                                       rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(tracker.state.gram_c, ref.gram_c,
                                       rtol=1e-10, atol=1e-12)


class TestConstantSliceConvergence:
    """Feeding the same fully observed low-rank slice forever is the
    cleanest consistency check: with lam=1 nothing is forgotten and the
    fit must improve monotonically to numerical zero."""

    def test_lambda_one_monotone_to_floor(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((50, 5)) @ rng.standard_normal((50, 5)).T
        mask = np.ones((50, 50), dtype=bool)
        tracker = OlstecTracker(
            Dims(50, 50, 5),
            TrackerConfig(rank=5, forgetting=1.0, mu=1e-3, seed=2),
        )
        residuals = [
            tracker.step(SliceObservation(t, Y, mask)).residual_observed
            for t in range(1, 201)
        ]
        assert residuals[-1] < 1e-4
        for prev, nxt in zip(residuals[4:], residuals[5:]):
            assert nxt <= prev or (nxt < 1e-6 and prev < 1e-6)
