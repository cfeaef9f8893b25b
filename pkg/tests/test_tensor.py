"""Autodiff engine: every op against central finite differences, plus the
contract behaviors (zero grads for unused params, error on non-scalar loss,
NaN detection, determinism, batch-gradient linearity)."""

import numpy as np
import pytest

from ctgn.diffcore import (
    ParamSet,
    Tensor,
    add,
    add_const,
    bce_mean,
    clip_open_unit,
    concat_cols,
    exp,
    gather_rows,
    grad,
    grad_check,
    log,
    masked_softmax,
    matmul,
    mean_all,
    mul,
    mul_const,
    no_grad,
    row_sum,
    scale,
    scale_rows,
    scatter_rows,
    segment_mix,
    segment_scores,
    sigmoid,
    slice_cols,
    softmax,
    sqrt,
    sub,
    sum_all,
    tanh,
    time_encode_core,
    where_rows,
)
from ctgn.errors import ContractViolation, NumericError


def fd_gradient(loss_fn, tensor, h=1e-5):
    """Independent central-difference oracle over one tensor's entries."""
    out = np.zeros_like(tensor.data)
    flat, out_flat = tensor.data.ravel(), out.ravel()
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(loss_fn().data)
            flat[i] = orig - h
            lo = float(loss_fn().data)
            flat[i] = orig
            out_flat[i] = (hi - lo) / (2 * h)
    return out


def assert_grad_matches(loss_fn, params, rtol=1e-6):
    analytic = grad(loss_fn, params)
    for name, t in params.items():
        num = fd_gradient(loss_fn, t)
        a = analytic[name].data
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        assert np.max(np.abs(a - num) / denom) < rtol, name


def test_square_gradient_analytic():
    ps = ParamSet()
    ps.add("x", np.array(3.0))
    g = grad(lambda: mul(ps["x"], ps["x"]), ps)
    assert g["x"].data == pytest.approx(6.0)


def test_unused_parameter_zero_gradient():
    ps = ParamSet()
    ps.add("a", np.ones(2))
    ps.add("lonely", np.ones(3))
    g = grad(lambda: add(sum_all(ps["a"]), scale(sum_all(ps["lonely"]), 0.0)), ps)
    assert np.array_equal(g["lonely"].data, np.zeros(3))


def test_sigmoid_matmul_matches_finite_differences():
    rng = np.random.default_rng(0)
    ps = ParamSet()
    ps.add("W", rng.normal(size=(4, 3)))
    x = Tensor(rng.normal(size=(3, 5)))
    assert_grad_matches(lambda: sum_all(sigmoid(matmul(ps["W"], x))), ps, rtol=1e-6)


@pytest.mark.parametrize("build", [
    lambda ps, x: sum_all(tanh(matmul(x, ps["p"]))),
    lambda ps, x: mean_all(exp(scale(matmul(x, ps["p"]), 0.1))),
    lambda ps, x: sum_all(log(add_const(sigmoid(matmul(x, ps["p"])), 0.5))),
    lambda ps, x: sum_all(sqrt(add_const(mul(ps["p"], ps["p"]), 1e-3))),
    lambda ps, x: sum_all(row_sum(matmul(x, ps["p"]))),
    lambda ps, x: sum_all(slice_cols(matmul(x, ps["p"]), 1, 3)),
    lambda ps, x: sum_all(mul_const(matmul(x, ps["p"]),
                                    np.arange(12.0).reshape(4, 3))),
    lambda ps, x: sum_all(scale_rows(matmul(x, ps["p"]), np.array([0.5, -1.0, 2.0, 0.0]))),
], ids=["tanh", "exp", "log", "sqrt", "row_sum", "slice", "mul_const", "scale_rows"])
def test_op_gradients(build):
    rng = np.random.default_rng(1)
    ps = ParamSet()
    ps.add("p", rng.normal(size=(5, 3)) * 0.5)
    x = Tensor(rng.normal(size=(4, 5)))
    assert_grad_matches(lambda: build(ps, x), ps)


def test_bias_add_and_sub_gradients():
    rng = np.random.default_rng(2)
    ps = ParamSet()
    ps.add("W", rng.normal(size=(4, 3)))
    ps.add("b", rng.normal(size=3))
    x = Tensor(rng.normal(size=(6, 4)))
    y = Tensor(rng.normal(size=(6, 3)))
    assert_grad_matches(
        lambda: sum_all(mul(sub(add(matmul(x, ps["W"]), ps["b"]), y),
                            sub(add(matmul(x, ps["W"]), ps["b"]), y))), ps)


def test_gather_rows_accumulates_duplicates():
    ps = ParamSet()
    ps.add("table", np.arange(6.0).reshape(3, 2))
    idx = np.array([0, 2, 0, 0])
    g = grad(lambda: sum_all(gather_rows(ps["table"], idx)), ps)
    assert np.array_equal(g["table"].data, np.array([[3.0, 3.0], [0, 0], [1, 1]]))
    assert_grad_matches(lambda: sum_all(tanh(gather_rows(ps["table"], idx))), ps)


def test_scatter_rows_routes_gradients():
    rng = np.random.default_rng(3)
    ps = ParamSet()
    ps.add("base", rng.normal(size=(4, 3)))
    ps.add("rows", rng.normal(size=(2, 3)))
    idx = np.array([1, 3])
    assert_grad_matches(
        lambda: sum_all(tanh(scatter_rows(ps["base"], idx, ps["rows"]))), ps)
    with pytest.raises(ContractViolation):
        scatter_rows(ps["base"], np.array([1, 1]), ps["rows"])


def test_where_rows_gradient():
    rng = np.random.default_rng(4)
    ps = ParamSet()
    ps.add("a", rng.normal(size=(4, 3)))
    ps.add("b", rng.normal(size=(4, 3)))
    cond = np.array([True, False, True, False])
    assert_grad_matches(
        lambda: sum_all(tanh(where_rows(cond, ps["a"], ps["b"]))), ps)


def test_masked_softmax_gradient_and_rows():
    rng = np.random.default_rng(5)
    ps = ParamSet()
    ps.add("logits", rng.normal(size=(5, 4)))
    mask = rng.random((5, 4)) > 0.3
    mask[:, 0] = True
    w = masked_softmax(ps["logits"], mask)
    assert np.allclose(w.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w.data[~mask] == 0.0)
    weights = Tensor(np.arange(20.0).reshape(5, 4))
    assert_grad_matches(
        lambda: sum_all(mul(masked_softmax(ps["logits"], mask), weights)), ps)


def test_segment_ops_gradients():
    rng = np.random.default_rng(6)
    ps = ParamSet()
    ps.add("q", rng.normal(size=(3, 4)))
    ps.add("k", rng.normal(size=(6, 4)))
    ps.add("w", rng.normal(size=(3, 2)))
    ps.add("v", rng.normal(size=(6, 4)))
    assert_grad_matches(
        lambda: sum_all(tanh(segment_scores(ps["q"], ps["k"], 2))), ps,)
    assert_grad_matches(
        lambda: sum_all(tanh(segment_mix(softmax(ps["w"]), ps["v"], 2))), ps)


def test_time_encode_gradient():
    ps = ParamSet()
    ps.add("omega", np.array([0.5, 1.2, 0.01]))
    ps.add("b", np.array([0.1, -0.4, 0.0]))
    deltas = np.array([0.0, 1.5, 3.0, 12.0])
    assert_grad_matches(
        lambda: sum_all(mul(time_encode_core(deltas, ps["omega"], ps["b"]),
                            Tensor(np.arange(12.0).reshape(4, 3)))), ps)


def test_concat_cols_gradient():
    rng = np.random.default_rng(7)
    ps = ParamSet()
    ps.add("a", rng.normal(size=(3, 2)))
    ps.add("b", rng.normal(size=(3, 4)))
    assert_grad_matches(
        lambda: sum_all(tanh(concat_cols([ps["a"], ps["b"]]))), ps)


def test_bce_and_clip_gradients():
    ps = ParamSet()
    ps.add("logits", np.array([[0.3], [-1.2], [2.0]]))
    labels = np.array([[1.0], [0.0], [1.0]])
    assert_grad_matches(
        lambda: bce_mean(clip_open_unit(sigmoid(ps["logits"])), labels), ps)


def test_bce_rejects_out_of_range_scores():
    with pytest.raises(ContractViolation):
        bce_mean(Tensor(np.array([[1.5]])), np.array([[1.0]]))


def test_batch_gradient_linearity():
    # gradient of a summed 3-example batch equals the sum of per-example grads
    rng = np.random.default_rng(8)
    ps = ParamSet()
    ps.add("W", rng.normal(size=(4, 2)))
    rows = [Tensor(rng.normal(size=(1, 4))) for _ in range(3)]
    batch = Tensor(np.concatenate([r.data for r in rows]))

    g_batch = grad(lambda: sum_all(sigmoid(matmul(batch, ps["W"]))), ps)["W"].data
    g_sum = sum(grad(lambda r=r: sum_all(sigmoid(matmul(r, ps["W"]))), ps)["W"].data
                for r in rows)
    assert np.allclose(g_batch, g_sum, atol=1e-12)


def test_non_scalar_loss_rejected():
    ps = ParamSet()
    ps.add("v", np.ones(3))
    with pytest.raises(ContractViolation):
        grad(lambda: ps["v"], ps)


def test_nan_forward_names_operation():
    ps = ParamSet()
    ps.add("x", np.array([-1.0]))
    with pytest.raises(NumericError, match="log"):
        grad(lambda: sum_all(log(ps["x"])), ps)
    ps2 = ParamSet()
    ps2.add("y", np.array([1000.0]))
    with pytest.raises(NumericError, match="exp"):
        grad(lambda: sum_all(exp(ps2["y"])), ps2)


def test_grad_check_identity_and_broken_gradient():
    ps = ParamSet()
    ps.add("x", np.zeros(3))
    report = grad_check(lambda: sum_all(ps["x"]), ps, tolerance=1e-10)
    assert report.passed and report.max_rel_err == 0.0
    ps.replace("x", np.array([0.3, -0.7, 1.1]))

    # a deliberately broken op: forward x*x but backward claims 4x (factor 2)
    from ctgn.diffcore.tensor import _result

    def broken_square(a):
        def bwd(g):
            return (g * 4.0 * a.data,)
        return _result(a.data * a.data, (a,), bwd, "broken_square")

    report = grad_check(lambda: sum_all(broken_square(ps["x"])), ps)
    assert not report.passed
    assert report.entries[0].max_rel_err == pytest.approx(0.5, abs=1e-4)
    assert "FAIL" in report.format_table()


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(42)
        ps = ParamSet()
        ps.add("W", rng.normal(size=(6, 6)))
        x = Tensor(rng.normal(size=(6, 6)))

        def loss():
            out = x
            for _ in range(5):
                out = tanh(matmul(out, ps["W"]))
            return sum_all(out)

        return grad(loss, ps)["W"].data

    assert np.array_equal(run(), run())


def test_no_grad_blocks_tape():
    ps = ParamSet()
    ps.add("x", np.ones(2))
    with no_grad():
        y = sum_all(mul(ps["x"], ps["x"]))
    assert not y.requires_grad


def test_add_broadcast_rules_enforced():
    a = Tensor(np.ones((2, 3)))
    bad = Tensor(np.ones((2, 1)))
    with pytest.raises(ContractViolation):
        add(a, bad)
    with pytest.raises(ContractViolation):
        mul(a, Tensor(np.ones(3)))
