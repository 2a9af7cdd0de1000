"""Network instantiation, forward/backward passes and the two loss heads."""

import numpy as np

from met2img.nn.layers import Conv, Dense, Flatten, LogSoftmax, MaxPool, ReLU, Sigmoid
from met2img.nn.spec import KERNEL, POOL, BuildError, ConvDim, Head, shape_trace

PROB_CLAMP = 1e-7


class Network:
    """An ordered stack of layers built from a NetworkSpec."""

    def __init__(self, spec, layers, dtype):
        self.spec = spec
        self.layers = layers
        self.dtype = np.dtype(dtype)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def _as_batch(self, x):
        x = np.asarray(x, dtype=self.dtype)
        expected = self.spec.input_shape
        if x.shape[1:] != expected:
            raise ValueError(f"batch shape {x.shape[1:]} does not match network input {expected}")
        if self.spec.conv_dim is ConvDim.CONV1D:
            x = x[:, :, None, :]
        if self.spec.conv_dim is not ConvDim.NONE:
            x = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
        return x

    def forward(self, x, upto=None):
        """Run the batch through the network.

        Two-node heads give per-sample log-probabilities ``(B, 2)``; one-node
        heads give per-sample probabilities ``(B,)``. ``upto`` stops after the
        named layer index (exclusive) and returns the raw activation.
        """
        h = self._as_batch(x)
        layers = self.layers if upto is None else self.layers[:upto]
        for layer in layers:
            h = layer.forward(h)
        if upto is None and self.spec.head is Head.ONE_NODE:
            h = h[:, 0]
        return h

    def backward(self, dout):
        if self.spec.head is Head.ONE_NODE:
            dout = dout[:, None]
        g = dout.astype(self.dtype, copy=False)
        for layer in reversed(self.layers):
            g = layer.backward(g)
            if g is None:
                break

    def gradients(self, x, labels):
        """Mean loss over the batch and a copy of every parameter gradient."""
        out = self.forward(x)
        value = loss(self.spec.head, out, labels)
        self.backward(loss_grad(self.spec.head, out, labels))
        return value, [g.copy() for g in self.grads]

    def predict(self, x, batch_size=64):
        preds = []
        for i in range(0, len(x), batch_size):
            out = self.forward(x[i:i + batch_size])
            preds.append(predictions(self.spec.head, out))
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    def pool_index(self):
        for i, layer in enumerate(self.layers):
            if isinstance(layer, MaxPool):
                return i
        return None


def build(spec, seed=0, dtype=np.float32):
    """Instantiate a Network with He-initialised weights and zero biases."""
    trace = shape_trace(spec)
    rng = np.random.default_rng(seed)
    layers = []
    if spec.conv_dim is not ConvDim.NONE:
        one_d = spec.conv_dim is ConvDim.CONV1D
        kernel = (1, KERNEL) if one_d else (KERNEL, KERNEL)
        same = (0, KERNEL // 2) if one_d else (KERNEL // 2, KERNEL // 2)
        in_ch = spec.input_shape[0]
        for i in range(spec.depth):
            layers.append(Conv(in_ch, spec.width, kernel, same if i == 0 else (0, 0), rng, dtype, need_dx=i > 0))
            layers.append(ReLU())
            in_ch = spec.width
        layers.append(MaxPool((1, POOL) if one_d else (POOL, POOL)))
    layers.append(Flatten(channels_first=spec.conv_dim is not ConvDim.NONE))
    n_in = dict(trace)["flatten"][0]
    first_dense = spec.conv_dim is ConvDim.NONE
    if spec.fc_hidden:
        layers.append(Dense(n_in, spec.fc_hidden, rng, dtype, need_dx=not first_dense))
        layers.append(ReLU())
        n_in, first_dense = spec.fc_hidden, False
    if spec.head is Head.TWO_NODE:
        layers.append(Dense(n_in, 2, rng, dtype, need_dx=not first_dense))
        layers.append(LogSoftmax())
    else:
        layers.append(Dense(n_in, 1, rng, dtype, need_dx=not first_dense))
        layers.append(Sigmoid())
    return Network(spec, layers, dtype)


def _labels(labels):
    y = np.asarray(labels).astype(np.int64).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary 0/1")
    return y


def loss(head, outputs, labels):
    """Mean negative log-likelihood (two-node) or binary cross-entropy (one-node)."""
    y = _labels(labels)
    outputs = np.asarray(outputs, dtype=np.float64)
    if len(outputs) != len(y):
        raise ValueError("outputs and labels have different batch sizes")
    if Head(head) is Head.TWO_NODE:
        return float(-np.mean(outputs[np.arange(len(y)), y]))
    p = np.clip(outputs.ravel(), PROB_CLAMP, 1 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def loss_grad(head, outputs, labels):
    """Gradient of ``loss`` with respect to the network outputs."""
    y = _labels(labels)
    n = len(y)
    if Head(head) is Head.TWO_NODE:
        g = np.zeros_like(outputs)
        g[np.arange(n), y] = -1.0 / n
        return g
    p = outputs.ravel()
    inside = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    g = -(y / pc - (1 - y) / (1 - pc)) / n
    return (g * inside).astype(outputs.dtype)


def predictions(head, outputs):
    if Head(head) is Head.TWO_NODE:
        return np.argmax(outputs, axis=1).astype(np.int64)
    return (np.asarray(outputs).ravel() >= 0.5).astype(np.int64)


def feature_maps(net, sample, normalize=True):
    """Post-pool activation of every filter for one sample.

    Returns a list of 2D arrays (``1 x L`` for 1D networks). With
    ``normalize`` each map is min-max scaled to [0, 1]; constant maps become 0.
    """
    idx = net.pool_index()
    if idx is None:
        raise BuildError("network has no convolutional feature maps")
    act = net.forward(np.asarray(sample)[None], upto=idx + 1)[:, 0].astype(np.float64)
    maps = []
    for fmap in act:
        if normalize:
            lo, hi = fmap.min(), fmap.max()
            fmap = (fmap - lo) / (hi - lo) if hi > lo else np.zeros_like(fmap)
        maps.append(fmap)
    return maps
