import csv

import numpy as np

from mvgrasp.dataset import training_arrays
from mvgrasp.network import build_network
from mvgrasp.train import TrainConfig, calibrate_batchnorm, iterate_minibatches, train


def test_minibatches_cover_everything(rng):
    idx = np.concatenate(list(iterate_minibatches(10, 3, rng)))
    assert sorted(idx.tolist()) == list(range(10))


def test_training_reduces_loss_and_writes_csv(tmp_path, fixture8):
    x, y = training_arrays(fixture8[:4], 48.0)
    net = build_network(seed=1)
    seen = []
    hist = train(net, x, y, TrainConfig(epochs=15, batch_size=4, seed=1), tmp_path / "loss.csv",
                 callback=lambda e, l: seen.append(e))
    assert seen == list(range(1, 16))
    assert hist[-1] < hist[0]
    rows = list(csv.reader(open(tmp_path / "loss.csv")))
    assert rows[0] == ["epoch", "loss"] and len(rows) == 16
    assert float(rows[-1][1]) == np.float64(f"{hist[-1]:.9g}")
    assert net.ready_for_inference


def test_training_is_deterministic(fixture8):
    x, y = training_arrays(fixture8[:2], 48.0)
    runs = []
    for _ in range(2):
        net = build_network(seed=3)
        runs.append(train(net, x, y, TrainConfig(epochs=2, batch_size=1, seed=3)))
    assert runs[0] == runs[1]


def test_calibrate_batchnorm_population_stats(rng):
    net = build_network(seed=0)
    x = rng.standard_normal((4, 1, 12, 12)).astype(np.float32) * 2 + 1
    calibrate_batchnorm(net, x, batch_size=4)
    bn = net.blocks[0][2]
    conv = net.blocks[0][1]
    pre = conv.forward(x)
    np.testing.assert_allclose(bn.stats.mean, pre.mean(axis=(0, 2, 3)), rtol=1e-4, atol=1e-5)
    np.testing.assert_allclose(bn.stats.var, pre.var(axis=(0, 2, 3)), rtol=1e-3)
    assert net.ready_for_inference
