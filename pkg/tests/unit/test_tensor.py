"""Unit tests for the tensor engine"""

import math
import threading
import unittest

import numpy as np

from dmha.exceptions import GraphException, NonFiniteException, ShapeMismatchException, TensorException
from dmha.tensor import (
    Graph,
    Tensor,
    backward,
    concat,
    current_graph,
    dropout,
    gelu,
    layer_norm,
    log,
    matmul,
    parameter,
    precision,
    softmax,
    stack,
    tensor_sum,
)


def numeric_grad(fn, array, eps=1e-6):
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn()
        flat[i] = original - eps
        minus = fn()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * eps)
    return grad


class TestTensorBasics(unittest.TestCase):
    """Construction, dtype and recording rules"""

    def test_default_dtype_is_float32(self):
        """Test the float32 default"""
        self.assertEqual(Tensor([1.0, 2.0]).dtype, np.float32)

    def test_precision_context(self):
        """Test switching to float64 temporarily"""
        with precision(np.float64):
            self.assertEqual(Tensor([1.0]).dtype, np.float64)
        self.assertEqual(Tensor([1.0]).dtype, np.float32)

    def test_nothing_recorded_outside_graph(self):
        """Test that ops outside a graph are not recorded"""
        w = parameter(np.ones((2, 2)))
        out = matmul(w, w)
        self.assertIsNone(current_graph())
        self.assertFalse(out.requires_grad)

    def test_graph_records_ops(self):
        """Test recording ops inside a graph"""
        w = parameter(np.ones((2, 2)))
        with Graph() as graph:
            matmul(w, w) + w
        self.assertEqual(len(graph), 2)

    def test_matmul_shape_mismatch(self):
        """Test rejecting incompatible matmul shapes"""
        with self.assertRaises(ShapeMismatchException):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_non_finite_output_rejected(self):
        """Test rejecting a non-finite op output"""
        with self.assertRaises(NonFiniteException):
            log(Tensor([0.0]))

    def test_backward_needs_scalar(self):
        """Test that backward needs a scalar loss"""
        w = parameter(np.ones(3))
        with Graph():
            out = w * 2.0
            with self.assertRaises(GraphException):
                backward(out)

    def test_backward_needs_recorded_loss(self):
        """Test that backward needs a recorded loss"""
        w = parameter(np.ones(3))
        with self.assertRaises(GraphException):
            backward(tensor_sum(w))

    def test_graphs_are_thread_local(self):
        """Test that each thread records its own graph"""
        seen = []
        with Graph():
            thread = threading.Thread(target=lambda: seen.append(current_graph()))
            thread.start()
            thread.join()
        self.assertEqual(seen, [None])


class TestGradients(unittest.TestCase):
    """Analytic gradients against central differences"""

    def setUp(self):
        self.rng = np.random.default_rng(3)

    def _check(self, build, *arrays, tol=1e-6):
        with precision(np.float64):
            params = [parameter(a.copy()) for a in arrays]
            with Graph():
                loss = build(*params)
                backward(loss)
            for p in params:
                numeric = numeric_grad(lambda: build(*params).item(), p.data)
                np.testing.assert_allclose(p.grad, numeric, atol=tol, rtol=1e-5)

    def test_matmul_and_softmax(self):
        """Test matmul and softmax gradients"""
        a = self.rng.normal(size=(3, 4))
        b = self.rng.normal(size=(4, 5))
        weights = self.rng.normal(size=(3, 5))
        self._check(lambda x, y: tensor_sum(softmax(matmul(x, y)) * Tensor(weights)), a, b)

    def test_layer_norm(self):
        """Test layer norm gradients"""
        x = self.rng.normal(size=(2, 6))
        gain = self.rng.normal(size=6)
        bias = self.rng.normal(size=6)
        target = self.rng.normal(size=(2, 6))
        self._check(lambda x_, g, b: tensor_sum(layer_norm(x_, g, b) * Tensor(target)), x, gain, bias)

    def test_gelu(self):
        """Test GELU gradients"""
        x = self.rng.normal(size=(4, 3))
        self._check(lambda x_: tensor_sum(gelu(x_) * x_), x)

    def test_concat_stack_and_indexing(self):
        """Test concat, stack and indexing gradients"""
        a = self.rng.normal(size=(2, 3))
        b = self.rng.normal(size=(1, 3))
        self._check(lambda x, y: tensor_sum(stack([concat([x, y], axis=0)[:, 1], y[0]], axis=0) ** 2.0), a, b)

    def test_shared_input_accumulates(self):
        """Test accumulating the gradient of a shared input"""
        with precision(np.float64):
            w = parameter(np.array([1.5, -2.0]))
            with Graph():
                loss = tensor_sum(w * w + w)
                backward(loss)
            np.testing.assert_allclose(w.grad, 2 * w.data + 1)

    def test_broadcast_add(self):
        """Test the gradient of a broadcast add"""
        x = self.rng.normal(size=(3, 4))
        bias = self.rng.normal(size=4)
        self._check(lambda x_, b: tensor_sum((x_ + b) ** 2.0), x, bias)

    def test_power_of_negative_base(self):
        """Test integer powers keep the gradient of negative inputs"""
        x = np.array([-2.0, -0.5, 0.0, 1.5])
        self._check(lambda x_: tensor_sum(x_ ** 3.0), x)
        with precision(np.float64):
            w = parameter(np.array([-3.0, 2.0]))
            with Graph():
                backward(tensor_sum(w ** 2.0))
            np.testing.assert_allclose(w.grad, [-6.0, 4.0])

    def test_fractional_power_at_zero(self):
        """Test the infinite slope of a fractional power at zero is dropped"""
        with precision(np.float64):
            w = parameter(np.array([0.0, 4.0]))
            with Graph():
                backward(tensor_sum(w ** 0.5))
            np.testing.assert_allclose(w.grad, [0.0, 0.25])

    def test_unused_parameter_gets_no_gradient(self):
        """Test a parameter outside the loss keeps an empty gradient"""
        used = parameter(np.ones(3))
        unused = parameter(np.ones(3))
        with Graph():
            unused * 2.0
            backward(tensor_sum(used * used))
        self.assertIsNone(unused.grad)
        np.testing.assert_allclose(used.grad, 2.0)


class TestDropout(unittest.TestCase):
    """Inverted dropout"""

    def test_eval_mode_is_identity(self):
        """Test that dropout is the identity in eval mode"""
        x = Tensor(np.ones((4, 4)))
        self.assertIs(dropout(x, 0.5, training=False), x)

    def test_training_needs_rng(self):
        """Test that training dropout needs a stream"""
        with self.assertRaises(TensorException):
            dropout(Tensor(np.ones(3)), 0.5, training=True)

    def test_invalid_probability(self):
        """Test rejecting a probability outside [0, 1)"""
        with self.assertRaises(TensorException):
            dropout(Tensor(np.ones(3)), 1.0, training=False)

    def test_kept_units_are_rescaled(self):
        """Test rescaling the units that are kept"""
        out = dropout(Tensor(np.ones(1000)), 0.25, training=True, rng=np.random.default_rng(0))
        kept = out.data[out.data > 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75, rtol=1e-6)


class TestOpValues(unittest.TestCase):
    """Hand-computed forward values"""

    def test_matmul_identity(self):
        """Test the identity matrix leaves a matrix unchanged"""
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), Tensor(a)).data, a)

    def test_matmul_zero(self):
        """Test a product with a zero matrix is zero"""
        out = matmul(Tensor(np.ones((2, 3))), Tensor(np.zeros((3, 4))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_matmul_small_example(self):
        """Test a hand-computed 2x2 by 2x1 product"""
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_softmax_uniform(self):
        """Test equal logits give equal probabilities"""
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-7)

    def test_softmax_shift_invariance(self):
        """Test two equal logits split the mass evenly at any offset"""
        for c in (-50.0, 0.0, 7.5, 80.0):
            np.testing.assert_allclose(softmax(Tensor([c, c])).data, [0.5, 0.5], atol=1e-7)

    def test_softmax_matches_exp_ratio(self):
        """Test softmax against a direct exp ratio"""
        e = np.exp([1.0, 2.0, 3.0])
        np.testing.assert_allclose(softmax(Tensor([1.0, 2.0, 3.0])).data, e / e.sum(), rtol=1e-6)

    def test_softmax_rows_sum_to_one(self):
        """Test every row of a random matrix sums to one"""
        x = np.random.default_rng(0).normal(scale=10.0, size=(50, 8))
        sums = softmax(Tensor(x), axis=1).data.sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_layer_norm_constant_row(self):
        """Test a constant row normalizes to zeros"""
        out = layer_norm(Tensor(np.full((1, 4), 3.0)), np.ones(4), np.zeros(4))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_layer_norm_two_values(self):
        """Test [1, -1] is already normalized up to eps"""
        out = layer_norm(Tensor([[1.0, -1.0]]), np.ones(2), np.zeros(2))
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-4)

    def test_layer_norm_zero_gain(self):
        """Test a zero gain leaves only the bias"""
        x = np.random.default_rng(1).normal(size=(3, 5))
        bias = np.arange(5.0)
        out = layer_norm(Tensor(x), np.zeros(5), bias)
        np.testing.assert_allclose(out.data, np.tile(bias, (3, 1)), atol=1e-6)

    def test_gelu_values(self):
        """Test GELU at zero, one and a large negative input"""
        self.assertEqual(float(gelu(Tensor([0.0])).data[0]), 0.0)
        expected = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
        self.assertAlmostEqual(float(gelu(Tensor([1.0])).data[0]), expected, places=6)
        self.assertAlmostEqual(float(gelu(Tensor([-30.0])).data[0]), 0.0, places=6)

    def test_dropout_rate(self):
        """Test about a tenth of a million units are dropped at p = 0.1"""
        out = dropout(Tensor(np.ones(1_000_000)), 0.1, training=True, rng=np.random.default_rng(5))
        self.assertAlmostEqual(float(np.mean(out.data == 0)), 0.1, delta=0.002)


if __name__ == '__main__':
    unittest.main()
