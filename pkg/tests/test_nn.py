import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dynamics.adjoint import finite_diff
from hybrid_dynamics.errors import ShapeError
from hybrid_dynamics.nn import MlpSpec, ParamStore, mlp_forward, mlp_vjp, param_init


def test_spec_shapes_and_count():
    spec = MlpSpec((3, 5, 2))
    assert spec.param_shapes() == {"W0": (5, 3), "b0": (5,), "W1": (2, 5), "b1": (2,)}
    assert spec.param_count() == 15 + 5 + 10 + 2


def test_spec_rejects_bad_widths():
    with pytest.raises(ShapeError):
        MlpSpec((3,))
    with pytest.raises(ShapeError):
        MlpSpec((3, 0, 1))


def test_forward_matches_manual():
    spec = MlpSpec((2, 3, 1))
    p = param_init(spec, 0)
    p["b0"] = np.array([0.1, -0.2, 0.3])
    x = np.array([0.5, -1.0])
    expect = p["W1"] @ np.tanh(p["W0"] @ x + p["b0"]) + p["b1"]
    np.testing.assert_allclose(mlp_forward(spec, p, x), expect, rtol=0, atol=1e-15)


def test_batch_axes():
    spec = MlpSpec((2, 4, 3))
    p = param_init(spec, 1)
    x = np.random.default_rng(0).standard_normal((5, 7, 2))
    out = mlp_forward(spec, p, x)
    assert out.shape == (5, 7, 3)
    np.testing.assert_allclose(out[2, 3], mlp_forward(spec, p, x[2, 3]))


def test_shape_error_names_layer():
    spec = MlpSpec((2, 4, 3))
    p = param_init(spec, 1)
    p["W1"] = np.zeros((3, 5))
    with pytest.raises(ShapeError, match="layer 1"):
        mlp_forward(spec, p, np.zeros(2))
    with pytest.raises(ShapeError, match="layer 0"):
        mlp_forward(spec, param_init(spec, 1), np.zeros(3))


def test_vjp_against_finite_differences():
    spec = MlpSpec((3, 4, 4, 2))
    rng = np.random.default_rng(2)
    p = param_init(spec, rng)
    for k in range(spec.n_layers):
        p[f"b{k}"] = rng.standard_normal(p[f"b{k}"].shape)
    x = rng.standard_normal((5, 3))
    cot = rng.standard_normal((5, 2))
    gx, grads = mlp_vjp(spec, p, x, cot)
    store = ParamStore(p)

    def loss(flat):
        return float(np.sum(cot * mlp_forward(spec, store.unflatten(flat), x)))

    fd = finite_diff(loss, store.flatten(), 1e-6)
    got = np.concatenate([grads[k].ravel() for k in spec.param_shapes()])
    np.testing.assert_allclose(got, fd, rtol=1e-7, atol=1e-8)
    fdx = finite_diff(lambda v: float(np.sum(cot * mlp_forward(spec, p, v.reshape(5, 3)))), x.ravel(), 1e-6)
    np.testing.assert_allclose(gx.ravel(), fdx, rtol=1e-7, atol=1e-8)


def test_init_is_reproducible():
    spec = MlpSpec((4, 8, 2))
    a, b = param_init(spec, 7), param_init(spec, 7)
    for k in a:
        assert np.array_equal(a[k], b[k])
    assert np.all(a["b0"] == 0.0)
    bound = np.sqrt(6.0 / 12.0)
    assert np.all(np.abs(a["W0"]) <= bound)


def test_param_store_roundtrips():
    store = ParamStore({"field.W0": np.arange(6.0).reshape(2, 3), "rnn.b": [1.0, 2.0]})
    assert store.size == 8
    assert store.groups() == ["field", "rnn"]
    assert set(store.group("field")) == {"W0"}
    again = store.unflatten(store.flatten())
    assert all(np.array_equal(again[k], store[k]) for k in store)
    loaded = ParamStore.from_json_dict(store.to_json_dict())
    assert all(np.array_equal(loaded[k], store[k]) for k in store)
    with pytest.raises(ShapeError):
        store.unflatten(np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=4), st.integers(0, 2 ** 31))
def test_flatten_roundtrip_property(widths, seed):
    spec = MlpSpec(tuple(widths))
    store = ParamStore(param_init(spec, seed))
    assert store.size == spec.param_count()
    np.testing.assert_array_equal(store.unflatten(store.flatten()).flatten(), store.flatten())
