import numpy as np
import pytest

from nhmarket.nn import Adam, Mlp, load_networks, save_networks


def numeric_grads(net, x, w_out, h=1e-5):
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = float(np.sum(w_out * net.forward(x)))
            p[i] = old - h
            down = float(np.sum(w_out * net.forward(x)))
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-3, np.abs(a) + np.abs(b))))


@pytest.mark.parametrize("output", ["identity", "tanh"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(output, seed):
    rng = np.random.default_rng(seed)
    net = Mlp([5, 7, 6, 2], output=output, rng=rng, final_scale=0.5)
    x = rng.normal(size=(4, 5))
    w_out = rng.normal(size=(4, 2))
    out, acts = net.forward(x, keep=True)
    grads, grad_in = net.backward(acts, w_out)
    for g, ng in zip(grads, numeric_grads(net, x, w_out)):
        assert max_rel_error(g, ng) < 1e-4
    ng_in = np.zeros_like(x)
    h = 1e-5
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        ng_in[i] = (np.sum(w_out * net.forward(xp)) - np.sum(w_out * net.forward(xm))) / (2 * h)
    assert max_rel_error(grad_in, ng_in) < 1e-4


def test_param_count_and_init_ranges():
    net = Mlp([9, 64, 64, 1], rng=np.random.default_rng(0))
    assert net.num_params == sum(p.size for p in net.params) == (9 + 1) * 64 + (64 + 1) * 64 + (64 + 1) * 1
    assert np.all(np.abs(net.weights[-1]) <= 3e-3)
    assert np.all(np.abs(net.weights[0]) <= 1 / np.sqrt(9))


def test_tanh_output_bounded_and_finite():
    net = Mlp([3, 8, 1], output="tanh", rng=np.random.default_rng(0), final_scale=5.0)
    out = net.forward(np.random.default_rng(1).normal(scale=1e3, size=(50, 3)))
    assert np.all(np.isfinite(out)) and np.all(np.abs(out) <= 1)


def test_soft_update_exact():
    rng = np.random.default_rng(0)
    a = Mlp([3, 4, 1], rng=rng)
    b = Mlp([3, 4, 1], rng=rng)
    expected = [0.1 * pa + 0.9 * pb for pa, pb in zip(a.params, b.params)]
    b.soft_update(a, 0.1)
    for e, pb in zip(expected, b.params):
        assert np.array_equal(e, pb)
    b.soft_update(a, 1.0)
    for pa, pb in zip(a.params, b.params):
        assert np.array_equal(pa, pb)


def test_copy_is_independent():
    a = Mlp([2, 3, 1], rng=np.random.default_rng(0))
    c = a.copy()
    c.weights[0][0, 0] += 1.0
    assert a.weights[0][0, 0] != c.weights[0][0, 0]


def test_adam_minimises_quadratic():
    x = np.array([5.0, -3.0])
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.step([2 * x])
    assert np.all(np.abs(x) < 1e-2)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    nets = {"actor": Mlp([4, 5, 1], "tanh", rng), "critic": Mlp([5, 6, 1], rng=rng)}
    path = tmp_path / "ck.txt"
    save_networks(path, nets)
    loaded = load_networks(path)
    assert set(loaded) == {"actor", "critic"}
    for name, net in nets.items():
        assert loaded[name].sizes == net.sizes and loaded[name].output == net.output
        for p, q in zip(net.params, loaded[name].params):
            assert np.array_equal(p, q)
    text = path.read_text().splitlines()
    assert text[0].startswith("#") and text[1] == "net actor tanh 4 5 1"


def test_checkpoint_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("net a identity 2 1\n1.0\n")
    with pytest.raises(ValueError):
        load_networks(path)
    path.write_text("garbage\n")
    with pytest.raises(ValueError):
        load_networks(path)


def test_constructor_validation():
    with pytest.raises(ValueError):
        Mlp([3])
    with pytest.raises(ValueError):
        Mlp([3, 1], output="sigmoid")
