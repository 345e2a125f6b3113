import numpy as np
import pytest

from hierdrive import autodiff as ad


def make_store(rng, dims=(4, 8, 8, 2)):
    store = ad.ParamStore()
    ad.init_mlp(store, "net", dims, rng)
    return store


class TestMlp:
    def test_zero_weights_zero_output(self):
        store = ad.ParamStore()
        for i, (a, b) in enumerate([(4, 8), (8, 8), (8, 2)]):
            store.add(f"net.w{i}", np.zeros((a, b)))
            store.add(f"net.b{i}", np.zeros(b))
        out = ad.mlp_forward(store, "net", np.ones((3, 4)))
        assert out.value.shape == (3, 2)
        np.testing.assert_array_equal(out.value, 0.0)

    def test_affine_passthrough(self):
        # single positive path: relu(relu(2*x) * 3) * 0.5 + 1
        store = ad.ParamStore()
        store.add("net.w0", [[2.0]])
        store.add("net.b0", [0.0])
        store.add("net.w1", [[3.0]])
        store.add("net.b1", [0.0])
        store.add("net.w2", [[0.5]])
        store.add("net.b2", [1.0])
        out = ad.mlp_forward(store, "net", np.array([[1.5]]))
        assert out.value[0, 0] == pytest.approx(1.5 * 2 * 3 * 0.5 + 1)

    def test_shapes(self):
        store = make_store(np.random.default_rng(0))
        out = ad.mlp_forward(store, "net", np.random.default_rng(1).normal(size=(3, 4)))
        assert out.value.shape == (3, 2)
        with pytest.raises(ad.ShapeError):
            ad.mlp_forward(store, "net", np.zeros((3, 5)))

    def test_forward_pure(self):
        store = make_store(np.random.default_rng(2))
        x = np.random.default_rng(3).normal(size=(5, 4))
        a = ad.mlp_forward(store, "net", x).value
        b = ad.mlp_forward(store, "net", x).value
        assert (a == b).all()


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ad.softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_large_values_stable(self):
        out = ad.softmax_rows(np.array([[1000.0, 1000.0]]))
        np.testing.assert_allclose(out, [[0.5, 0.5]])
        assert np.isfinite(out).all()

    def test_log3(self):
        out = ad.softmax_rows(np.array([[0.0, np.log(3)]]))
        np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(50, 7)) * 100
        out = ad.softmax_rows(x)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10, 5))
        np.testing.assert_allclose(ad.softmax_rows(x), ad.softmax_rows(x + 13.7), atol=1e-9)


class TestBackward:
    def test_linear(self):
        store = ad.ParamStore()
        store.add("w", 1.5)
        loss = ad.mul(store.node("w"), 3.0)
        ad.backward(loss)
        assert store["w"].grad == pytest.approx(3.0)

    def test_softmax_cross_entropy_uniform(self):
        store = ad.ParamStore()
        store.add("logits", [0.0, 0.0])
        probs = ad.softmax(store.node("logits"))
        loss = -ad.npsum(ad.mul(ad.log(probs), np.array([1.0, 0.0])))
        ad.backward(loss)
        np.testing.assert_allclose(store["logits"].grad, [-0.5, 0.5], atol=1e-12)

    def test_non_scalar_rejected(self):
        store = ad.ParamStore()
        store.add("w", [1.0, 2.0])
        with pytest.raises(ad.UsageError):
            ad.backward(store.node("w"))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        store = make_store(rng)
        x = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 2))

        def loss_fn():
            out = ad.mlp_forward(store, "net", x)
            diff = ad.sub(out, target)
            return ad.mean(ad.mul(diff, diff))

        assert ad.grad_check(loss_fn, store, rng=rng) < 1e-4

    def test_batched_matmul_grads(self):
        rng = np.random.default_rng(7)
        store = ad.ParamStore()
        store.add("w", rng.normal(size=(3, 4)))
        x = rng.normal(size=(2, 5, 3))

        def loss_fn():
            return ad.mean(ad.matmul(x, store.node("w")))

        assert ad.grad_check(loss_fn, store, rng=rng) < 1e-6


class TestAdam:
    def test_first_step_magnitude(self):
        store = ad.ParamStore()
        store.add("w", 0.0)
        store["w"].grad[...] = 2.0
        ad.adam_step(store, lr=0.001)
        # bias correction makes the first update ~lr * sign(grad)
        assert store["w"].value == pytest.approx(-0.001, rel=1e-6)

    def test_zero_grad_noop(self):
        store = ad.ParamStore()
        store.add("w", 1.25)
        ad.adam_step(store, lr=0.1)
        assert store["w"].value == pytest.approx(1.25)

    def test_descends_quadratic(self):
        store = ad.ParamStore()
        store.add("w", 4.0)

        def loss():
            return float(store["w"].value**2)

        losses = []
        for _ in range(200):
            store.zero_grads()
            store["w"].grad[...] = 2.0 * store["w"].value
            ad.adam_step(store, lr=0.05)
            losses.append(loss())
        assert losses[-1] < losses[0]

    def test_frozen_entries_skipped(self):
        store = ad.ParamStore()
        store.add("w", 1.0, trainable=False)
        store["w"].grad[...] = 5.0
        ad.adam_step(store, lr=0.1)
        assert store["w"].value == pytest.approx(1.0)


class TestGradCheck:
    def test_linear_exact(self):
        store = ad.ParamStore()
        store.add("w", np.arange(5.0))
        coeff = np.array([1.0, -2.0, 3.0, 0.5, 1.5])

        def loss_fn():
            return ad.npsum(ad.mul(store.node("w"), coeff))

        assert ad.grad_check(loss_fn, store) < 1e-10


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(8)
        store = make_store(rng)
        store.add("eta", rng.normal(size=(5, 12)), trainable=False)
        store["net.w0"].m[...] = rng.normal(size=store["net.w0"].m.shape)
        store.adam_t = 17
        path = tmp_path / "ck.bin"
        ad.save_checkpoint(store, path, extra={"note": "x", "n": 2})
        loaded, extra = ad.load_checkpoint(path)
        assert extra == {"note": "x", "n": 2}
        assert loaded.adam_t == 17
        assert loaded.names() == store.names()
        for name in store.names():
            assert (loaded[name].value == store[name].value).all()
            assert (loaded[name].m == store[name].m).all()
            assert loaded[name].trainable == store[name].trainable

    def test_bad_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"nope")
        with pytest.raises(ad.CheckpointError):
            ad.load_checkpoint(path)
