import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcases import CASES
from cograsp.dataset import CorruptFile, FormatVersionMismatch
from cograsp.nn import (AdamW, BiGRU, DegenerateInput, OptimizerConfig, ParameterStore, PlateauScheduler,
                        ShapeMismatch, Tensor, check_gradients, conv2d, l2_normalize, layer_norm, linear,
                        load_weights, plateau_schedule, save_weights, softmax)


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(5.0), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones(5))


def test_dot_gradient_is_twice_x():
    x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x
    (y + y * x).sum().backward()  # d/dx (x^2 + x^3) = 2x + 3x^2
    np.testing.assert_allclose(x.grad, [6.0 + 27.0])


def test_constants_get_no_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    c = Tensor(np.ones(3))
    (x * c).sum().backward()
    assert c.grad is None


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeMismatch):
        (x * 2.0).backward()


def test_shape_mismatch_errors():
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeMismatch):
        conv2d(Tensor(np.ones((2, 5, 5))), Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)))


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("seed", range(10))
def test_gradient_check(name, seed):
    f, params = CASES[name](np.random.default_rng(seed))
    assert check_gradients(f, params) <= 1e-4


def test_layer_norm_constant_row_is_zero():
    y = layer_norm(Tensor(np.full((2, 5), 3.7)))
    np.testing.assert_allclose(y.data, 0.0, atol=1e-12)


@given(st.integers(0, 10_000))
def test_layer_norm_moments(seed):
    x = np.random.default_rng(seed).normal(scale=5, size=(4, 16))
    y = layer_norm(Tensor(x)).data
    np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-6)
    # variance is 1 up to the epsilon in the denominator
    np.testing.assert_allclose(y.var(axis=1), x.var(axis=1) / (x.var(axis=1) + 1e-5), atol=1e-6)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=8))
def test_l2_normalize_unit(v):
    x = np.array([v])
    if not np.any(x):
        with pytest.raises(DegenerateInput):
            l2_normalize(Tensor(x))
        return
    if np.linalg.norm(x) < 1e-150:
        return
    assert np.linalg.norm(l2_normalize(Tensor(x)).data) == pytest.approx(1.0, abs=1e-6)


def test_l2_normalize_zero_raises():
    with pytest.raises(DegenerateInput):
        l2_normalize(Tensor(np.zeros((1, 4))))


def test_softmax_rows_sum_to_one():
    y = softmax(Tensor(np.random.default_rng(0).normal(size=(3, 7)) * 50)).data
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)


# -- BiGRU ----------------------------------------------------------------------------------


def test_bigru_length_one_shape():
    store = ParameterStore()
    net = BiGRU(store, "g", 4, 5, np.random.default_rng(0))
    assert net(Tensor(np.ones((1, 4)))).shape == (1, 10)


@pytest.mark.parametrize("seed", range(5))
def test_bigru_reversal_identity(seed):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    net = BiGRU(store, "g", 3, 4, rng)
    # tie both directions to the same weights so reversing the input swaps their roles
    store["g.fw.b"].data = rng.normal(scale=0.1, size=store["g.fw.b"].shape)
    for part in ("wx", "wh", "b"):
        store[f"g.bw.{part}"].data = store[f"g.fw.{part}"].data.copy()
    x = rng.normal(size=(6, 3))
    out = net(Tensor(x)).data
    rev = net(Tensor(x[::-1].copy())).data
    H = 4
    swapped = np.concatenate([out[::-1, H:], out[::-1, :H]], axis=1)
    np.testing.assert_allclose(rev, swapped, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_bigru_reversal_with_distinct_directions(seed):
    # general weights: the reversed input run equals the original run with the two direction
    # weight sets exchanged, read back in reverse order with channel halves swapped
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    net = BiGRU(store, "g", 3, 4, rng)
    for _, t in store:
        t.data = t.data + rng.normal(scale=0.1, size=t.shape)
    x = rng.normal(size=(5, 3))
    out = net(Tensor(x)).data
    for part in ("wx", "wh", "b"):
        a, b = store[f"g.fw.{part}"], store[f"g.bw.{part}"]
        a.data, b.data = b.data.copy(), a.data.copy()
    rev = net(Tensor(x[::-1].copy())).data
    np.testing.assert_allclose(rev, np.concatenate([out[::-1, 4:], out[::-1, :4]], axis=1), atol=1e-12)


# -- optimizer ------------------------------------------------------------------------------


def store_with(values):
    s = ParameterStore()
    s.add("w", np.array(values, dtype=float))
    return s


def test_adamw_zero_grad_no_decay_is_identity():
    s = store_with([1.0, -2.0])
    opt = AdamW(s, OptimizerConfig(weight_decay=0.0))
    s["w"].grad = np.zeros(2)
    for _ in range(5):
        opt.step()
    np.testing.assert_array_equal(s["w"].data, [1.0, -2.0])


def test_adamw_quadratic_converges():
    s = store_with([5.0])
    opt = AdamW(s, OptimizerConfig(learning_rate=0.05, weight_decay=0.0))
    for _ in range(500):
        w = s["w"]
        w.grad = None
        ((w - 1.5) * (w - 1.5)).sum().backward()
        opt.step()
    assert abs(s["w"].data[0] - 1.5) < 1e-3


def test_adamw_decay_only_shrinks_geometrically():
    s = store_with([2.0, -4.0])
    cfg = OptimizerConfig(learning_rate=0.01, weight_decay=0.1)
    opt = AdamW(s, cfg)
    s["w"].grad = np.zeros(2)
    for k in range(1, 6):
        opt.step()
        np.testing.assert_allclose(s["w"].data, np.array([2.0, -4.0]) * (1 - 0.01 * 0.1) ** k, rtol=1e-12)


def test_adamw_first_step_is_lr_sized():
    s = store_with([0.0, 0.0])
    opt = AdamW(s, OptimizerConfig(learning_rate=0.1, weight_decay=0.0))
    s["w"].grad = np.array([3.0, -0.2])
    opt.step()
    # bias correction makes the first step exactly lr * sign(g) up to epsilon
    np.testing.assert_allclose(s["w"].data, [-0.1, 0.1], rtol=1e-6)


def test_optimizer_config_defaults_and_validation():
    c = OptimizerConfig()
    assert (c.learning_rate, c.weight_decay, c.schedule_factor, c.schedule_patience) == (2.61e-4, 1e-4, 0.3741, 3)
    with pytest.raises(ValueError):
        OptimizerConfig(schedule_factor=1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(schedule_patience=0)


def test_plateau_decreasing_keeps_lr():
    assert plateau_schedule([5, 4, 3, 2, 1], 1.0) == 1.0


def test_plateau_three_flat_epochs_reduce_once():
    # the first epoch sets the reference; three more without improvement trigger one cut
    assert plateau_schedule([1, 1, 1, 1], 1.0) == pytest.approx(0.3741)
    assert plateau_schedule([1, 1, 1], 1.0) == 1.0


def test_plateau_six_flat_epochs_reduce_twice():
    assert plateau_schedule([1] * 7, 1.0) == pytest.approx(0.3741**2)


def test_plateau_counter_resets_on_improvement():
    s = PlateauScheduler(1.0)
    for x in [3, 3, 3, 2, 2, 2]:
        lr = s.step(x)
    assert lr == 1.0
    assert s.step(2) == pytest.approx(0.3741)


# -- weights --------------------------------------------------------------------------------


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    state = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(7,)) * 1e-300, "c": np.array(math.pi)}
    save_weights(state, tmp_path / "w.json", {"meta": 1})
    back, doc = load_weights(tmp_path / "w.json")
    assert doc["meta"] == 1
    for k in state:
        np.testing.assert_array_equal(back[k], state[k])


def test_weights_errors(tmp_path):
    p = tmp_path / "w.json"
    p.write_text("{not json")
    with pytest.raises(CorruptFile):
        load_weights(p)
    save_weights({"a": np.ones(2)}, p)
    p.write_text(p.read_text().replace('"version": 1', '"version": 7'))
    with pytest.raises(FormatVersionMismatch):
        load_weights(p)


def test_store_load_state_checks_shapes():
    s = store_with([1.0, 2.0])
    with pytest.raises(ShapeMismatch):
        s.load_state({"w": np.ones(3)})
    with pytest.raises(ShapeMismatch):
        s.load_state({"v": np.ones(2)})
    s.load_state({"w": np.array([4.0, 5.0])})
    np.testing.assert_array_equal(s["w"].data, [4.0, 5.0])
