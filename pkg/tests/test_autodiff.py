"""Tape recording, adjoint rules, and the finite-difference harness."""

import numpy as np
import pytest

from mpsclassify import (
    LossKind,
    Strategy,
    Tape,
    backward,
    grad_check,
    init_model,
    loss_and_gradients,
    model_gradients,
    softmax,
)
from mpsclassify.autodiff import Adjoints
from mpsclassify.encoding import encode_batch
from mpsclassify.errors import ConsistencyError, DimensionError
from mpsclassify.losses import cross_entropy_loss
from mpsclassify.training import batch_loss


class TestMatmulAdjoint:
    def test_closed_form_for_sum_of_product(self, rng):
        """loss = sum(A B): dA = ones @ B^T, dB = A^T @ ones."""
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 5))
        tape = Tape()
        tape.watch(a)
        tape.watch(b)
        c = tape.matmul(a, b)
        tape.reduce_sum(c)
        adj = backward(tape)
        ones = np.ones((3, 5))
        np.testing.assert_allclose(adj.of(a), ones @ b.T, rtol=1e-14)
        np.testing.assert_allclose(adj.of(b), a.T @ ones, rtol=1e-14)

    def test_batched_variant(self, rng):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((2, 4, 3))
        tape = Tape()
        tape.watch(a)
        c = tape.matmul(a, b)
        tape.reduce_sum(c)
        adj = backward(tape)
        want = np.ones((2, 3, 3)) @ np.swapaxes(b, -1, -2)
        np.testing.assert_allclose(adj.of(a), want, rtol=1e-14)
        np.testing.assert_array_equal(adj.of(b), np.zeros_like(b))  # unwatched

    def test_leading_dim_mismatch(self):
        tape = Tape()
        with pytest.raises(DimensionError):
            tape.matmul(np.zeros((2, 3, 4)), np.zeros((3, 4, 5)))


class TestTapeMechanics:
    def test_unwatched_graph_records_nothing(self, rng):
        tape = Tape()
        tape.matmul(rng.standard_normal((2, 2)), rng.standard_normal((2, 2)))
        assert tape.nodes == []

    def test_replay_reproduces_outputs(self, rng):
        model = init_model(10, 3, 4, seed=0)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(3, 10)))
        labels = np.array([0, 1, 2])
        tape = Tape()
        tape.watch_model(model)
        from mpsclassify.contraction import forward_batch

        logits = forward_batch(model, feats, tape=tape)
        tape.cross_entropy(logits, labels)
        tape.replay()  # must not raise

    def test_replay_detects_tampering(self, rng):
        a = rng.standard_normal((2, 2))
        tape = Tape()
        tape.watch(a)
        c = tape.matmul(a, a)
        tape.reduce_sum(c)
        tape.nodes[0].output[0, 0] += 1.0
        with pytest.raises(ConsistencyError, match="replay"):
            tape.replay()

    def test_backward_requires_recording_tape(self):
        with pytest.raises(ConsistencyError):
            backward(Tape(recording=False))

    def test_non_recording_tape_still_computes(self, rng):
        a = rng.standard_normal((2, 2))
        recording = Tape()
        recording.watch(a)
        silent = Tape(recording=False)
        np.testing.assert_array_equal(silent.matmul(a, a), recording.matmul(a, a))
        assert silent.nodes == []

    def test_zero_loss_adjoint_gives_zero_gradients(self, rng):
        a = rng.standard_normal((3, 3))
        tape = Tape()
        tape.watch(a)
        tape.reduce_sum(tape.matmul(a, a))
        adj = backward(tape, loss_adjoint=0.0)
        np.testing.assert_array_equal(adj.of(a), np.zeros_like(a))

    def test_adjoint_linearity_in_seed(self, rng):
        """Scaling the seed by 2 scales every adjoint exactly (binary float)."""
        model = init_model(8, 3, 3, seed=1)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(2, 8)))
        from mpsclassify.contraction import forward_batch

        def run(seed_value):
            tape = Tape()
            tape.watch_model(model)
            logits = forward_batch(model, feats, tape=tape)
            tape.cross_entropy(logits, np.array([0, 1]))
            return model_gradients(backward(tape, loss_adjoint=seed_value), model)

        one = run(1.0)
        two = run(2.0)
        for (_, g1), (_, g2) in zip(one.arrays(), two.arrays()):
            np.testing.assert_array_equal(2.0 * g1, g2)

    def test_sum_rule(self, rng):
        """Gradient of loss1 + loss2 equals the sum of separate gradients."""
        x = rng.standard_normal((3, 3))
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))

        def grad_of(mats):
            tape = Tape()
            tape.watch(x)
            parts = [tape.matmul(x, mat) for mat in mats]
            total = parts[0] if len(parts) == 1 else tape.add(parts[0], parts[1])
            tape.reduce_sum(total)
            return backward(tape).of(x)

        combined = grad_of([a, b])
        separate = grad_of([a]) + grad_of([b])
        np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-15)

    def test_scale_const_factor_is_not_differentiated(self, rng):
        x = rng.standard_normal((2, 2))
        tape = Tape()
        tape.watch(x)
        y = tape.scale_const(x, 3.0)
        tape.reduce_sum(y)
        adj = backward(tape)
        np.testing.assert_allclose(adj.of(x), 3.0 * np.ones_like(x), rtol=1e-15)

    def test_gather_and_slice_scatter_back(self, rng):
        stack = rng.standard_normal((4, 2, 2))
        tape = Tape()
        tape.watch(stack)
        row = tape.gather(stack, 2)
        tape.reduce_sum(row)
        adj = backward(tape).of(stack)
        want = np.zeros_like(stack)
        want[2] = 1.0
        np.testing.assert_array_equal(adj, want)

        tape = Tape()
        tape.watch(stack)
        part = tape.slice_rows(stack, 1, 3)
        tape.reduce_sum(part)
        adj = backward(tape).of(stack)
        want = np.zeros_like(stack)
        want[1:3] = 1.0
        np.testing.assert_array_equal(adj, want)

    def test_pair_round_adjoint_matches_finite_differences(self, rng):
        stack = rng.standard_normal((5, 1, 3, 3))
        tape = Tape()
        tape.watch(stack)
        out = tape.pair_round(stack)
        tape.reduce_sum(out)
        analytic = backward(tape).of(stack)

        h = 1e-6
        numeric = np.zeros_like(stack)
        flat = stack.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h

            def value():
                t = Tape(recording=False)
                return float(t.pair_round(stack).sum())

            up = value()
            flat[k] = orig - h
            down = value()
            flat[k] = orig
            numeric.reshape(-1)[k] = (up - down) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-7, atol=1e-9)

    def test_flop_counters_are_positive_and_ordered(self, rng):
        model = init_model(12, 3, 4, seed=0)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(4, 12)))
        from mpsclassify.contraction import forward_batch

        tape = Tape()
        tape.watch_model(model)
        logits = forward_batch(model, feats, tape=tape)
        tape.cross_entropy(logits, np.zeros(4, dtype=np.int64))
        assert tape.forward_flops() > 0
        assert tape.backward_flops() > 0


class TestModelGradients:
    def test_requires_watched_model(self, rng):
        model = init_model(8, 2, 2, seed=0)
        other = init_model(8, 2, 2, seed=1)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(1, 8)))
        tape = Tape()
        tape.watch_model(model)
        from mpsclassify.contraction import forward_batch

        logits = forward_batch(model, feats, tape=tape)
        tape.cross_entropy(logits, np.array([0]))
        adjoints = backward(tape)
        with pytest.raises(ConsistencyError, match="watched"):
            model_gradients(adjoints, other)

    def test_shapes_match_model(self, rng):
        model = init_model(9, 4, 3, seed=2)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(2, 9)))
        _, grads = loss_and_gradients(model, feats, np.array([1, 3]))
        for (name, g), (_, p) in zip(grads.arrays(), model.parameters()):
            assert g.shape == p.shape, name

    def test_label_core_softmax_coupling(self, rng):
        """CE gradients are nonzero even for label slices absent from the batch."""
        model = init_model(8, 4, 3, seed=5)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(2, 8)))
        labels = np.array([0, 0])  # labels 1..3 never appear
        _, grads = loss_and_gradients(model, feats, labels)
        for absent in (1, 2, 3):
            assert np.abs(grads.label_core[:, absent]).max() > 0

    def test_strategy_choice_does_not_change_gradients(self, rng):
        model = init_model(11, 3, 4, seed=7)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(3, 11)))
        labels = np.array([0, 1, 2])
        _, via_pair = loss_and_gradients(model, feats, labels, strategy=Strategy.PAIRWISE)
        _, via_seq = loss_and_gradients(model, feats, labels, strategy=Strategy.SEQUENTIAL)
        for (_, gp), (_, gs) in zip(via_pair.arrays(), via_seq.arrays()):
            np.testing.assert_allclose(gp, gs, rtol=1e-11, atol=1e-14)

    def test_renormalized_gradients_match_plain(self, rng):
        """The detached rescaling factors must not perturb gradients."""
        model = init_model(14, 3, 3, seed=9)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(2, 14)))
        labels = np.array([2, 0])
        _, plain = loss_and_gradients(model, feats, labels)
        _, renorm = loss_and_gradients(model, feats, labels, renormalize=True)
        for (_, gp), (_, gr) in zip(plain.arrays(), renorm.arrays()):
            np.testing.assert_allclose(gp, gr, rtol=1e-11, atol=1e-14)


class TestGradCheck:
    def test_passes_on_toy_model(self, rng):
        model = init_model(8, 3, 3, seed=0)
        images = rng.uniform(0, 1, size=(2, 8))
        labels = rng.integers(0, 3, size=2)
        report = grad_check(model, images, labels)
        assert report.passed
        assert report.max_rel_err < 1e-6
        assert "PASS" in report.format_table()

    def test_large_step_is_flagged_not_crashed(self, rng):
        """h = 0.1 inflates truncation error; the harness reports, not raises."""
        model = init_model(8, 3, 3, seed=0)
        images = rng.uniform(0, 1, size=(2, 8))
        labels = rng.integers(0, 3, size=2)
        report = grad_check(model, images, labels, h=0.1, tolerance=1e-9)
        assert not report.passed
        assert "FAIL" in report.format_table()

    def test_deterministic(self, rng):
        model = init_model(6, 2, 2, seed=3)
        images = rng.uniform(0, 1, size=(1, 6))
        labels = np.array([1])
        a = grad_check(model, images, labels)
        b = grad_check(model, images, labels)
        assert a.max_rel_err == b.max_rel_err

    def test_mean_square_loss_kind(self, rng):
        model = init_model(7, 3, 2, seed=4)
        images = rng.uniform(0, 1, size=(2, 7))
        labels = np.array([0, 2])
        report = grad_check(model, images, labels, loss_kind=LossKind.MEAN_SQUARE)
        assert report.passed

    def test_batch_loss_agrees_with_taped_value(self, rng):
        model = init_model(9, 3, 3, seed=6)
        feats = encode_batch(model.feature_map, rng.uniform(0, 1, size=(4, 9)))
        labels = np.array([0, 1, 2, 1])
        taped, _ = loss_and_gradients(model, feats, labels)
        assert batch_loss(model, feats, labels) == taped


class TestSoftmaxHelper:
    def test_rows_sum_to_one(self, rng):
        p = softmax(rng.standard_normal((4, 6)))
        np.testing.assert_allclose(p.sum(axis=1), np.ones(4), rtol=1e-14)

    def test_large_logits_do_not_overflow(self):
        p = softmax(np.array([[1000.0, 0.0]]))
        np.testing.assert_allclose(p, [[1.0, 0.0]], atol=1e-300)

    def test_matches_cross_entropy_probabilities(self, rng):
        logits = rng.standard_normal((3, 4))
        labels = np.array([0, 1, 2])
        value = cross_entropy_loss(logits, labels)
        p = softmax(logits)
        direct = -np.log(p[np.arange(3), labels]).mean()
        np.testing.assert_allclose(value, direct, rtol=1e-12)


class TestAdjointsContainer:
    def test_of_returns_zeros_for_unknown_array(self):
        adj = Adjoints({}, set())
        x = np.ones((2, 2))
        np.testing.assert_array_equal(adj.of(x), np.zeros((2, 2)))
        assert not adj.was_watched(x)
