"""Feedforward classifier assembled from layer descriptors.

All arrays are float64 and batched with a leading sample dimension.
Parameters are kept in per-layer dicts so the optimizer and checkpoint
code can treat them uniformly.
"""

import numpy as np

from ..errors import ShapeMismatchError
from . import layers as L
from .losses import loss_and_grad, softmax


class Model:
    def __init__(self, layer_list, input_shape, params, state):
        self.layers = tuple(layer_list)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.params = params
        self.state = state
        self.shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            self.shapes.append(L.output_shape(layer, self.shapes[-1], index=i))
        out = self.shapes[-1]
        if len(out) != 1:
            raise ShapeMismatchError(
                f"network must end with a flat logit vector, got output shape {out}"
            )
        self.num_classes = out[0]

    @classmethod
    def build(cls, layer_list, input_shape, seed=0):
        """Validate the layer chain and initialize parameters from `seed`."""
        rng = np.random.default_rng(seed)
        # instantiating first checks shape compatibility before drawing params
        model = cls(layer_list, input_shape, params=None, state=None)
        model.params = [L.init_params(layer, rng) for layer in model.layers]
        model.state = [L.init_state(layer) for layer in model.layers]
        return model

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"expected input batch of shape (n, {', '.join(map(str, self.input_shape))}), "
                f"got {x.shape}"
            )
        return x

    def forward(self, x, train=False):
        x = self._check_input(x)
        for i, layer in enumerate(self.layers):
            x, _, new_state = L.forward(layer, self.params[i], self.state[i], x, train=train)
            if train and new_state is not None:
                self.state[i] = new_state
        return x

    def _forward_cached(self, x, train=False):
        x = self._check_input(x)
        caches = []
        for i, layer in enumerate(self.layers):
            x, cache, new_state = L.forward(layer, self.params[i], self.state[i], x, train=train)
            caches.append(cache)
            if train and new_state is not None:
                self.state[i] = new_state
        return x, caches

    def loss_param_grads(self, x, targets, kind="sce"):
        """Mean batch loss and parameter gradients, for the optimizer."""
        targets = np.asarray(targets, dtype=np.int64)
        logits, caches = self._forward_cached(x, train=True)
        losses, grad = loss_and_grad(logits, targets, kind)
        grad = grad / x.shape[0]
        param_grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            grad, param_grads[i] = L.backward(self.layers[i], self.params[i], caches[i], grad)
        return float(losses.mean()), param_grads

    def input_gradients(self, x, targets, kind="sce"):
        """Per-sample gradient of the per-sample loss with respect to the input.

        Rows are independent (inference-mode statistics throughout), so the
        i-th output row is exactly the gradient for the i-th input row.
        """
        targets = np.asarray(targets, dtype=np.int64)
        logits, caches = self._forward_cached(x, train=False)
        _, grad = loss_and_grad(logits, targets, kind)
        for i in range(len(self.layers) - 1, -1, -1):
            grad, _ = L.backward(self.layers[i], self.params[i], caches[i], grad)
        return grad

    def class_input_gradients(self, x, classes, kind="sce"):
        """Input gradients of one sample's loss toward each class in `classes`.

        x: single sample of shape `input_shape`
        returns array of shape (len(classes), *input_shape)
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ShapeMismatchError(
                f"expected a single sample of shape {self.input_shape}, got {x.shape}"
            )
        classes = np.asarray(classes, dtype=np.int64)
        tiled = np.repeat(x[None], classes.size, axis=0)
        return self.input_gradients(tiled, classes, kind)

    def predict(self, x):
        return self.forward(x).argmax(axis=1)

    def probabilities(self, x):
        return softmax(self.forward(x))

    @property
    def activation_mode(self):
        """"rectifier" when any non-smooth rectifier layer is present, else "softplus"."""
        if any(isinstance(l, L.Rectifier) for l in self.layers):
            return "rectifier"
        return "softplus"

    def swap_activations(self, mode, beta=10.0):
        """Return a model with activation layers replaced.

        mode "softplus" turns every rectifier into a smooth softplus unit
        with the given beta; mode "rectifier" does the reverse. Parameters
        are shared with the original model, not copied.
        """
        if mode == "softplus":
            swapped = [L.Softplus(beta) if isinstance(l, L.Rectifier) else l for l in self.layers]
        elif mode == "rectifier":
            swapped = [L.Rectifier() if isinstance(l, L.Softplus) else l for l in self.layers]
        else:
            raise ValueError(f"unknown activation mode {mode!r}")
        return Model(swapped, self.input_shape, self.params, self.state)

    def num_params(self):
        return sum(int(a.size) for p in self.params for a in p.values())
