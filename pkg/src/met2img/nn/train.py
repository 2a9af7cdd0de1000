import logging

import numpy as np

from met2img.nn.network import loss, loss_grad
from met2img.nn.optim import adam_step, sgd_step
from met2img.nn.spec import OptimizerKind

log = logging.getLogger(__name__)


def train(net, X, y, config, callback=None):
    """Minibatch training for exactly ``config.epochs`` passes.

    Batches come from a fresh seeded permutation each epoch; the last,
    possibly partial, batch is kept. Returns ``(net, losses)`` where
    ``losses`` holds the per-sample mean training loss of every epoch.
    """
    X = np.asarray(X)
    y = np.asarray(y).astype(np.int64)
    if len(X) == 0 or len(X) != len(y):
        raise ValueError("training split must be non-empty with one label per sample")
    if len(np.unique(y)) < 2:
        raise ValueError("training split contains a single class")

    kind = config.optimizer_for(net.spec.head)
    step = sgd_step if kind is OptimizerKind.SGD_MOMENTUM else adam_step
    rng = np.random.default_rng(config.seed)
    params = net.params
    state = None
    losses = []
    n = len(X)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out = net.forward(X[idx])
            total += loss(net.spec.head, out, y[idx]) * len(idx)
            net.backward(loss_grad(net.spec.head, out, y[idx]))
            state = step(params, net.grads, config, state)
        losses.append(total / n)
        if callback is not None:
            callback(epoch, losses[-1])
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.5f", epoch, losses[-1])
    return net, losses
