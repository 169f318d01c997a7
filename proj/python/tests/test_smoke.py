import math

import numpy as np
import pytest

import ttfs


def test_fig2_neuron():
    t = [0.2, 0.6]
    w = [5.0, -10.0]
    assert ttfs.solve_spike_exact(t, w, 1.0, 0.0, 2.0, ttfs.ThresholdMode.FIXED) == 0.4
    assert ttfs.solve_spike_exact(t, w, 1.0, 1.0, 2.0) == 2.0
    assert ttfs.solve_spike_discrete(t, w, 1.0, 0.0, 2.0, 50, ttfs.ThresholdMode.FIXED) == 0.4


def test_dot_product_neuron():
    t = ttfs.solve_spike_exact([0.2, 0.6], [0.6, 0.4], 1.0, 1.0, 2.0)
    assert t == pytest.approx(1.36, abs=1e-15)
    assert ttfs.decode_spikes([t], 1)[0] == pytest.approx(0.64, abs=1e-15)
    assert ttfs.membrane_potential([0.2, 0.6], [0.6, 0.4], 1.36) == pytest.approx(1.0)


def test_encode_decode():
    a = np.array([0.0, 0.25, 1.0])
    times = ttfs.encode_input(a)
    np.testing.assert_allclose(times, [1.0, 0.75, 0.0])
    np.testing.assert_allclose(ttfs.decode_spikes(times, 0), a, atol=1e-16)
    with pytest.raises(ttfs.DomainError):
        ttfs.encode_input([1.5])


def test_convert_and_run_preset_is_lossless():
    net = ttfs.project_weight_sums(ttfs.build_preset("mlp-784-300-10", seed=3))
    rng = np.random.default_rng(0)
    x = rng.uniform(size=net.input_size)
    snn = ttfs.convert(net)
    assert snn.readout_time == 2.0
    run = ttfs.run_network(snn, x, ttfs.SimConfig(ttfs.Backend.EXACT))
    np.testing.assert_allclose(run["output"], net.forward(x), atol=1e-12)
    assert run["counters"].syn_ops > 0
    assert len(run["frames"]) == 2


def test_unconstrained_net_is_refused(tmp_path):
    net = ttfs.build_preset("mlp-784-300-10", seed=3)
    w = net.weights(0)
    net.set_weights(0, np.abs(w) + 0.1)
    with pytest.raises(ttfs.ConversionRefused):
        ttfs.convert(net)
    assert ttfs.convert(net, force=True).forced
    path = tmp_path / "m.ttfs"
    ttfs.save_model(path, net)
    back = ttfs.load_model(path)
    np.testing.assert_array_equal(back.weights(0), net.weights(0))


def test_metrics():
    c = ttfs.OpCounters(12, 5)
    assert ttfs.power_proxy(c, 0.0) == 12.0
    assert ttfs.power_proxy(c, 2.0) == 22.0
    a = np.full(100, 0.5)
    assert ttfs.psnr(a, a + 0.1) == pytest.approx(20.0)
    img = np.linspace(0, 1, 256)
    assert ttfs.ssim(img, img, 16, 16) == pytest.approx(1.0)
    assert math.isfinite(ttfs.ssim(img, img[::-1].copy(), 16, 16))
