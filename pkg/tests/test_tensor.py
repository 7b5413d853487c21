import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tapa import tensor as T
from tapa.errors import ContractError, DimensionError, DomainError
from tapa.tensor import Tensor


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def numeric_grad(f, x, eps=1e-5):
    g = np.zeros_like(x.data)
    flat, gflat = x.data.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        up = f().item()
        flat[i] = saved - eps
        down = f().item()
        flat[i] = saved
        gflat[i] = (up - down) / (2 * eps)
    return g


def assert_grads_match(f, *inputs, tol=1e-4):
    for x in inputs:
        x.grad = None
    T.backward(f())
    for x in inputs:
        num = numeric_grad(f, x)
        err = T.relative_error(x.grad, num)
        assert err.max() < tol, (err.max(), x.grad, num)


# -- matmul --------------------------------------------------------------------

def test_matmul_identity():
    B = np.array([[1.5, -2.0], [0.25, 4.0]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), Tensor(B)).data, B)


def test_matmul_scalar_case():
    assert T.matmul(Tensor([[2.0]]), Tensor([[3.0]])).data.tolist() == [[6.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12, rtol=0)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradients():
    rng = np.random.default_rng(1)
    a, b = param(rng.uniform(-1, 1, (3, 4))), param(rng.uniform(-1, 1, (4, 2)))
    assert_grads_match(lambda: T.tsum(T.mul(T.matmul(a, b), T.matmul(a, b))), a, b)


# -- hadamard ----------------------------------------------------------------

def test_hadamard_with_ones_is_identity():
    a = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(T.hadamard(Tensor(a), Tensor(np.ones(3))).data, a)


def test_hadamard_topic_product():
    out = T.hadamard(Tensor([0.5, 0.5]), Tensor([0.8, 0.2])).data
    np.testing.assert_allclose(out, [0.40, 0.10], rtol=0, atol=1e-15)


def test_hadamard_matches_scalar_loop_exactly():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    expected = np.empty_like(a)
    for i in range(4):
        for j in range(5):
            expected[i, j] = a[i, j] * b[i, j]
    np.testing.assert_array_equal(T.hadamard(Tensor(a), Tensor(b)).data, expected)


def test_hadamard_shape_mismatch():
    with pytest.raises(DimensionError):
        T.hadamard(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_hadamard_gradient_is_other_input():
    a, b = param([1.0, 2.0]), param([3.0, -4.0])
    T.backward(T.tsum(T.hadamard(a, b)))
    np.testing.assert_array_equal(a.grad, b.data)
    np.testing.assert_array_equal(b.grad, a.data)


# -- concat --------------------------------------------------------------------

def test_concat_dims_add():
    assert T.concat(Tensor(np.zeros(4)), Tensor(np.zeros(3))).shape == (7,)


def test_concat_with_empty_is_identity():
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(T.concat(Tensor(x), Tensor(np.zeros(0))).data, x)


def test_concat_backward_splits_per_segment():
    rng = np.random.default_rng(3)
    a, b = param(rng.uniform(-1, 1, (2, 3))), param(rng.uniform(-1, 1, (2, 2)))
    w = rng.uniform(-1, 1, (2, 5))
    assert_grads_match(lambda: T.tsum(T.mul(T.concat(a, b, axis=1), w)), a, b)
    np.testing.assert_allclose(a.grad, w[:, :3])
    np.testing.assert_allclose(b.grad, w[:, 3:])


def test_concat_incompatible():
    with pytest.raises(DimensionError):
        T.concat(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3))), axis=1)


# -- cosine --------------------------------------------------------------------

def test_cosine_self():
    assert T.cosine(Tensor([0.3, -2.0, 5.0]), Tensor([0.3, -2.0, 5.0])).item() == pytest.approx(1.0, abs=1e-15)


def test_cosine_orthogonal():
    assert T.cosine(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 0.0


def test_cosine_diagonal():
    assert T.cosine(Tensor([1.0, 0.0]), Tensor([1.0, 1.0])).item() == pytest.approx(0.7071067811865475, abs=1e-15)


def test_cosine_zero_vector_is_neutral():
    assert T.cosine(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 0.0
    assert T.cosine(Tensor([1e-13, 0.0]), Tensor([1.0, 1.0])).item() == 0.0


def test_cosine_length_mismatch():
    with pytest.raises(DimensionError):
        T.cosine(Tensor([1.0, 0.0]), Tensor([1.0, 0.0, 0.0]))


def test_cosine_gradient():
    rng = np.random.default_rng(4)
    u, v = param(rng.uniform(-1, 1, 5)), param(rng.uniform(-1, 1, 5))
    assert_grads_match(lambda: T.cosine(u, v), u, v)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_cosine_bounded(u, v):
    c = T.cosine(Tensor(u), Tensor(v)).item()
    assert -1 - 1e-12 <= c <= 1 + 1e-12
    if np.linalg.norm(u) > 1e-6:
        assert T.cosine(Tensor(u), Tensor(u)).item() == pytest.approx(1.0, abs=1e-12)


# -- conv2d / maxpool ----------------------------------------------------------

def conv_oracle(x, f, stride):
    c, h, w = x.shape
    k, _, fh, fw = f.shape
    ho, wo = (h - fh) // stride + 1, (w - fw) // stride + 1
    out = np.zeros((k, ho, wo))
    for o in range(k):
        for i in range(ho):
            for j in range(wo):
                for ci in range(c):
                    for a in range(fh):
                        for b in range(fw):
                            out[o, i, j] += x[ci, i * stride + a, j * stride + b] * f[o, ci, a, b]
    return out


def test_conv_identity_kernel():
    x = np.arange(12.0).reshape(1, 3, 4)
    np.testing.assert_array_equal(T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1)))).data, x)


def test_conv_sum_kernel():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    assert T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 2, 2)))).data.tolist() == [[[10.0]]]


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_oracle(stride):
    rng = np.random.default_rng(5)
    x, f = rng.normal(size=(2, 6, 5)), rng.normal(size=(3, 2, 2, 3))
    np.testing.assert_allclose(T.conv2d(Tensor(x), Tensor(f), stride).data,
                               conv_oracle(x, f, stride), atol=1e-12, rtol=0)


def test_conv_batched_matches_per_example():
    rng = np.random.default_rng(6)
    x, f = rng.normal(size=(3, 2, 5, 5)), rng.normal(size=(4, 2, 2, 2))
    out = T.conv2d(Tensor(x), Tensor(f)).data
    for n in range(3):
        np.testing.assert_allclose(out[n], conv_oracle(x[n], f, 1), atol=1e-12, rtol=0)


def test_conv_filter_too_large():
    with pytest.raises(DimensionError):
        T.conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_gradients(stride):
    rng = np.random.default_rng(7)
    x, f = param(rng.uniform(-1, 1, (2, 5, 5))), param(rng.uniform(-1, 1, (3, 2, 2, 2)))
    w = rng.uniform(-1, 1, T.conv2d(x, f, stride).shape)
    assert_grads_match(lambda: T.tsum(T.mul(T.conv2d(x, f, stride), w)), x, f)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_conv_output_shape_formula(h, w, fh, fw, stride):
    if fh > h or fw > w:
        return
    out = T.conv2d(Tensor(np.zeros((1, h, w))), Tensor(np.zeros((2, 1, fh, fw))), stride)
    assert out.shape == (2, (h - fh) // stride + 1, (w - fw) // stride + 1)


def pool_oracle(x, size, stride):
    c, h, w = x.shape
    ho, wo = (h - size) // stride + 1, (w - size) // stride + 1
    out = np.full((c, ho, wo), -np.inf)
    for ci in range(c):
        for i in range(ho):
            for j in range(wo):
                for a in range(size):
                    for b in range(size):
                        out[ci, i, j] = max(out[ci, i, j], x[ci, i * stride + a, j * stride + b])
    return out


def test_pool_max_of_four():
    assert T.maxpool2d(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2).data.tolist() == [[[4.0]]]


def test_pool_constant():
    out = T.maxpool2d(Tensor(np.full((2, 4, 4), 0.7)), 2).data
    assert np.all(out == 0.7)


@pytest.mark.parametrize("size,stride", [(2, 2), (2, 1), (3, 2)])
def test_pool_matches_loop_oracle(size, stride):
    x = np.random.default_rng(8).normal(size=(2, 7, 6))
    np.testing.assert_array_equal(T.maxpool2d(Tensor(x), size, stride).data, pool_oracle(x, size, stride))


def test_pool_window_too_large():
    with pytest.raises(DimensionError):
        T.maxpool2d(Tensor(np.zeros((1, 1, 3))), 2)


def test_pool_tie_goes_to_first_in_row_major_order():
    x = param([[[5.0, 5.0], [5.0, 5.0]]])
    T.backward(T.tsum(T.maxpool2d(x, 2)))
    assert x.grad.tolist() == [[[1.0, 0.0], [0.0, 0.0]]]


@pytest.mark.parametrize("size,stride", [(2, 2), (2, 1)])
def test_pool_gradients(size, stride):
    rng = np.random.default_rng(9)
    x = param(rng.uniform(-1, 1, (2, 5, 5)))
    w = rng.uniform(-1, 1, T.maxpool2d(x, size, stride).shape)
    assert_grads_match(lambda: T.tsum(T.mul(T.maxpool2d(x, size, stride), w)), x)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 3), st.integers(1, 3))
def test_pool_output_shape_formula(h, w, size, stride):
    if size > h or size > w:
        return
    out = T.maxpool2d(Tensor(np.zeros((1, h, w))), size, stride)
    assert out.shape == (1, (h - size) // stride + 1, (w - size) // stride + 1)


# -- loss ----------------------------------------------------------------------

@pytest.mark.parametrize("label", [0, 1])
def test_crossentropy_uniform(label):
    assert T.softmax_crossentropy(Tensor([0.0, 0.0]), label).item() == pytest.approx(0.6931471805599453, abs=1e-15)


def test_crossentropy_saturated():
    loss = T.softmax_crossentropy(Tensor([50.0, -50.0]), 0).item()
    assert 0 <= loss < 1e-20


def test_crossentropy_gradient_matches_finite_differences():
    z = param([1.0, -1.0])
    assert_grads_match(lambda: T.softmax_crossentropy(z, 1), z, tol=1e-6)
    p = np.exp([1.0, -1.0]) / np.exp([1.0, -1.0]).sum()
    np.testing.assert_allclose(z.grad, p - np.array([0.0, 1.0]), atol=1e-15)


def test_crossentropy_bad_label():
    with pytest.raises(DomainError):
        T.softmax_crossentropy(Tensor([0.0, 1.0]), 2)


def test_crossentropy_batch_is_mean():
    z = np.array([[0.3, -0.2], [1.0, 2.0], [-1.0, 0.5]])
    y = [1, 0, 1]
    single = [T.softmax_crossentropy(Tensor(z[i]), y[i]).item() for i in range(3)]
    assert T.softmax_crossentropy(Tensor(z), y).item() == pytest.approx(np.mean(single), abs=1e-12)


# -- backward ------------------------------------------------------------------

def test_backward_sum_gives_ones():
    w = param([1.0, -2.0, 3.0])
    T.backward(T.tsum(w))
    np.testing.assert_array_equal(w.grad, np.ones(3))


def test_unused_parameter_has_zero_grad():
    w, unused = param([1.0, 2.0]), param([3.0])
    for p in (w, unused):
        p.zero_grad()
    T.backward(T.tsum(w))
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_backward_rejects_non_scalar():
    with pytest.raises(ContractError):
        T.backward(T.mul(param([1.0, 2.0]), 2.0))


def test_shared_parameter_sums_branch_gradients():
    rng = np.random.default_rng(10)
    w = param(rng.uniform(-1, 1, (3, 3)))
    a, b = rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (4, 3))

    def branch(x):
        return T.tsum(T.tanh(T.matmul(Tensor(x), w)))

    grads = []
    for x in (a, b):
        w.grad = None
        T.backward(branch(x))
        grads.append(w.grad.copy())
    w.grad = None
    T.backward(T.add(branch(a), branch(b)))
    np.testing.assert_allclose(w.grad, grads[0] + grads[1], atol=1e-14)
    assert_grads_match(lambda: T.add(branch(a), branch(b)), w)


def test_operations_are_deterministic():
    rng = np.random.default_rng(11)
    x, f = rng.normal(size=(2, 6, 6)), rng.normal(size=(3, 2, 2, 2))
    runs = [T.maxpool2d(T.relu(T.conv2d(Tensor(x), Tensor(f))), 2).data for _ in range(2)]
    assert runs[0].tobytes() == runs[1].tobytes()


@pytest.mark.parametrize("op", [
    lambda x: T.sigmoid(x), lambda x: T.tanh(x), lambda x: T.relu(x),
    lambda x: T.normalize(x), lambda x: T.tmax(x, axis=1),
    lambda x: T.getitem(x, (slice(None), slice(1, 3))),
    lambda x: T.transpose(x), lambda x: T.pad_to(x, (4, 6)),
    lambda x: T.cosine_matrix(x, T.mul(x, x)),
    lambda x: T.stack([x, T.mul(x, 2.0)], axis=1),
    lambda x: T.take_rows(x, np.array([[0, 2], [2, 1]])),
])
def test_elementary_gradients(op):
    rng = np.random.default_rng(12)
    x = param(rng.uniform(-1, 1, (3, 4)))
    w = rng.uniform(-1, 1, op(x).shape)
    assert_grads_match(lambda: T.tsum(T.mul(op(x), w)), x)


def test_take_rows_frozen_row_gets_no_gradient():
    table = param(np.ones((3, 2)))
    T.backward(T.tsum(T.take_rows(table, [0, 1, 0], frozen_row=0)))
    np.testing.assert_array_equal(table.grad, [[0, 0], [1, 1], [0, 0]])


# -- grad_check ----------------------------------------------------------------

def test_grad_check_quadratic():
    w = param(np.random.default_rng(13).uniform(-1, 1, 6))
    report = T.grad_check(lambda: T.mul(T.tsum(T.mul(w, w)), 0.5), {"w": w}, 1e-5)
    assert report.max_relative_error < 1e-9
    assert report.max_relative_error == max(report.per_parameter_errors.values())
    assert report.worst_parameter == "w"


def test_grad_check_detects_nondeterminism():
    w = param([1.0])
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        T.grad_check(lambda: T.mul(T.tsum(w), float(rng.random())), {"w": w})


def test_grad_check_epsilon_range():
    w = param([1.0])
    with pytest.raises(DomainError):
        T.grad_check(lambda: T.tsum(w), {"w": w}, epsilon=1e-2)


def test_grad_check_reports_wrong_gradient():
    w = param([0.5, -0.3])

    def broken():
        out = T.tsum(T.mul(w, w))
        out._backward = lambda g: T._accumulate(w, np.zeros(2))
        return out

    assert T.grad_check(broken, {"w": w}).max_relative_error > 0.5
