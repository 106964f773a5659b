"""Mini-batch training of the grasp network with Adam on an MSE objective."""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .nn import Adam, mse_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 0.001
    seed: int = 0


def iterate_minibatches(n, batch_size, rng):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield perm[i : i + batch_size]


def train(net, inputs, targets, cfg=None, csv_path=None, optimizer=None, callback=None):
    """Train in place; returns the per-epoch mean training loss list.

    The loss of an epoch is the sample-weighted mean of its mini-batch losses,
    measured in train mode before each update.
    """
    cfg = cfg or TrainConfig()
    inputs = np.asarray(inputs, dtype=net.dtype)
    targets = np.asarray(targets, dtype=net.dtype)
    opt = optimizer or Adam(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = []
    fh = open(csv_path, "w", newline="") if csv_path else None
    writer = csv.writer(fh) if fh else None
    if writer:
        writer.writerow(["epoch", "loss"])
    try:
        for epoch in range(1, cfg.epochs + 1):
            total = 0.0
            for idx in iterate_minibatches(len(inputs), cfg.batch_size, rng):
                out = net.forward(inputs[idx], train=True)
                loss, grad = mse_loss(out, targets[idx])
                net.backward(grad)
                opt.step(net.parameters(), net.gradients())
                total += loss * len(idx)
            mean = total / len(inputs)
            history.append(mean)
            if writer:
                writer.writerow([epoch, f"{mean:.9g}"])
                fh.flush()
            log.info("epoch %d/%d loss %.6g", epoch, cfg.epochs, mean)
            if callback is not None:
                callback(epoch, mean)
    finally:
        if fh:
            fh.close()
    return history


def calibrate_batchnorm(net, inputs, batch_size=8):
    """Set running statistics to population averages of train-mode batch statistics.

    Parameters are untouched; useful for fresh networks that must run in
    inference mode (benchmarks) or to remove moving-average lag after training.
    """
    inputs = np.asarray(inputs, dtype=net.dtype)
    sums = None
    count = 0
    for _, _, bn, _ in net.blocks:
        bn.stats.initialized = False
    for i in range(0, len(inputs), batch_size):
        batch = inputs[i : i + batch_size]
        net.forward(batch, train=True)
        stats = [(bn.stats.mean.copy(), bn.stats.var.copy()) for _, _, bn, _ in net.blocks]
        for _, _, bn, _ in net.blocks:
            bn.stats.initialized = False
        w = len(batch)
        if sums is None:
            sums = [(m * w, v * w) for m, v in stats]
        else:
            sums = [(sm + m * w, sv + v * w) for (sm, sv), (m, v) in zip(sums, stats)]
        count += w
    for (sm, sv), (_, _, bn, _) in zip(sums, net.blocks):
        bn.stats.mean[...] = sm / count
        bn.stats.var[...] = sv / count
        bn.stats.initialized = True
