"""In-place parameter updates.

Both optimizers fold weight decay into the gradient as an L2 term
(``g + weight_decay * w``) and keep a constant learning rate.
"""

import numpy as np


def sgd_step(params, grads, config, state=None):
    """``v <- momentum * v + g + wd * w``; ``w <- w - lr * v``. Returns the state."""
    if state is None:
        state = {"v": [np.zeros_like(p) for p in params]}
    lr, mu, wd = config.learning_rate, config.momentum, config.weight_decay
    for w, g, v in zip(params, grads, state["v"]):
        v *= mu
        v += g
        if wd:
            v += wd * w
        w -= lr * v
    return state


def adam_step(params, grads, config, state=None):
    if state is None:
        state = {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}
    state["t"] += 1
    t = state["t"]
    b1, b2 = config.beta1, config.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    wd = config.weight_decay
    for w, g, m, v in zip(params, grads, state["m"], state["v"]):
        if wd:
            g = g + wd * w
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return state
