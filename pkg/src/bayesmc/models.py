"""Deterministic model evaluation.

Two model families share one interface: a linear predictor and a
single-hidden-layer neural network with sigmoid activations on both the
hidden and output layers. Each instance owns mutable parameter state that a
single chain manipulates through ``decode``/``encode`` round-trips and the
per-instance gradient sweeps of the Langevin proposal map.

Flattened parameter layout (``encode``/``decode``): all weight matrices
row-major first, then all bias vectors — ``[W1, W2, b1, b2]`` for the network
and ``[w, b]`` for the linear model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import sigmoid, softmax
from .errors import DimensionError, InvalidParameterError

FAMILIES = ("linear", "mlp")
TASKS = ("regression", "classification")

# Hidden-layer width used when a network topology does not specify one.
DEFAULT_HIDDEN_NUM = 5


@dataclass(frozen=True)
class ModelSpec:
    """Identifies a model family, its layer sizes, and its task."""

    family: str
    task: str
    input_num: int
    output_num: int = 1
    hidden_num: int = 0
    learning_rate: float = 0.01

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown family {self.family!r}")
        if self.task not in TASKS:
            raise InvalidParameterError(f"unknown task {self.task!r}")
        if self.input_num < 1 or self.output_num < 1:
            raise InvalidParameterError("input_num and output_num must be >= 1")
        if self.family == "mlp" and self.hidden_num < 1:
            raise InvalidParameterError("mlp requires hidden_num >= 1")
        if self.family == "linear" and self.hidden_num != 0:
            raise InvalidParameterError("linear model must have hidden_num = 0")
        if self.learning_rate < 0:
            raise InvalidParameterError("learning_rate must be >= 0")

    @property
    def n_weights(self) -> int:
        if self.family == "linear":
            return self.input_num * self.output_num
        return self.input_num * self.hidden_num + self.hidden_num * self.output_num

    @property
    def n_biases(self) -> int:
        if self.family == "linear":
            return self.output_num
        return self.hidden_num + self.output_num

    @property
    def n_params(self) -> int:
        return self.n_weights + self.n_biases


def param_names(spec: ModelSpec, include_tau: "bool | None" = None) -> list:
    """Column names for a flattened parameter vector: ``w0..``, then ``b``
    (single bias) or ``b0..``, then ``tau`` for regression chains."""
    names = [f"w{i}" for i in range(spec.n_weights)]
    if spec.n_biases == 1:
        names.append("b")
    else:
        names += [f"b{i}" for i in range(spec.n_biases)]
    if include_tau is None:
        include_tau = spec.task == "regression"
    if include_tau:
        names.append("tau")
    return names


def classify(output_rows):
    """Class labels and probabilities from output-layer activation rows.

    Probabilities are the row-wise softmax of the activations; the label is
    the argmax, with ties broken by the lowest class index.
    """
    probs = softmax(np.atleast_2d(np.asarray(output_rows, dtype=float)), axis=1)
    labels = np.argmax(probs, axis=1)
    return labels, probs


class LinearModel:
    """y = x.w + b with identity outputs.

    Regression uses the (single) output directly; classification feeds the
    output row to a softmax head via :func:`classify`.
    """

    def __init__(self, spec: ModelSpec, rng=None):
        if spec.family != "linear":
            raise InvalidParameterError("spec.family must be 'linear'")
        self.spec = spec
        if rng is None:
            self.w = np.zeros((spec.input_num, spec.output_num))
            self.b = np.zeros(spec.output_num)
        else:
            self.w = rng.standard_normal((spec.input_num, spec.output_num))
            self.b = rng.standard_normal(spec.output_num)
        self.out = None

    def encode(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.b])

    def decode(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.spec.n_params,):
            raise DimensionError(
                f"theta has length {theta.size}, expected {self.spec.n_params}")
        nw = self.spec.n_weights
        self.w = theta[:nw].reshape(self.spec.input_num, self.spec.output_num).copy()
        self.b = theta[nw:].copy()

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.spec.input_num:
            raise DimensionError(
                f"x has shape {x.shape}, expected (*, {self.spec.input_num})")
        return x @ self.w + self.b

    def evaluate(self, x, theta) -> np.ndarray:
        self.decode(theta)
        return self.predict(x)

    def forward(self, x_row) -> np.ndarray:
        self.out = x_row @ self.w + self.b
        return self.out

    def backward(self, x_row, y_row) -> None:
        if self.out is None:
            raise InvalidParameterError("forward must be called before backward")
        e = y_row - self.out
        r = self.spec.learning_rate
        self.w += r * np.outer(x_row, e)
        self.b += r * e

    def langevin_gradient(self, x, y, theta, depth: int) -> np.ndarray:
        return _sgd_sweeps(self, x, y, theta, depth)


class NeuralNetwork:
    """Single-hidden-layer perceptron, sigmoid on hidden and output layers.

    ``forward`` caches both layer activations for the paired ``backward``
    squared-error gradient step; sweeps run per instance in stored order.
    """

    def __init__(self, spec: ModelSpec, rng=None):
        if spec.family != "mlp":
            raise InvalidParameterError("spec.family must be 'mlp'")
        self.spec = spec
        i, h, o = spec.input_num, spec.hidden_num, spec.output_num
        if rng is None:
            self.w1 = np.zeros((i, h))
            self.w2 = np.zeros((h, o))
            self.b1 = np.zeros(h)
            self.b2 = np.zeros(o)
        else:
            self.w1 = rng.standard_normal((i, h)) / np.sqrt(i)
            self.w2 = rng.standard_normal((h, o)) / np.sqrt(h)
            self.b1 = rng.standard_normal(h) / np.sqrt(h)
            self.b2 = rng.standard_normal(o) / np.sqrt(h)
        self.l1_output = None
        self.l2_output = None

    def encode(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.w2.ravel(), self.b1, self.b2])

    def decode(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.spec.n_params,):
            raise DimensionError(
                f"theta has length {theta.size}, expected {self.spec.n_params}")
        i, h, o = self.spec.input_num, self.spec.hidden_num, self.spec.output_num
        n1 = i * h
        n2 = n1 + h * o
        self.w1 = theta[:n1].reshape(i, h).copy()
        self.w2 = theta[n1:n2].reshape(h, o).copy()
        self.b1 = theta[n2:n2 + h].copy()
        self.b2 = theta[n2 + h:].copy()

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.spec.input_num:
            raise DimensionError(
                f"x has shape {x.shape}, expected (*, {self.spec.input_num})")
        hidden = sigmoid(x @ self.w1 + self.b1)
        return sigmoid(hidden @ self.w2 + self.b2)

    def evaluate(self, x, theta) -> np.ndarray:
        self.decode(theta)
        return self.predict(x)

    def forward(self, x_row) -> np.ndarray:
        self.l1_output = sigmoid(x_row @ self.w1 + self.b1)
        self.l2_output = sigmoid(self.l1_output @ self.w2 + self.b2)
        return self.l2_output

    def backward(self, x_row, y_row) -> None:
        if self.l2_output is None:
            raise InvalidParameterError("forward must be called before backward")
        out = self.l2_output
        l2_delta = (y_row - out) * out * (1.0 - out)
        l1_delta = (l2_delta @ self.w2.T) * self.l1_output * (1.0 - self.l1_output)
        r = self.spec.learning_rate
        self.w2 += r * np.outer(self.l1_output, l2_delta)
        self.b2 += r * l2_delta
        self.w1 += r * np.outer(x_row, l1_delta)
        self.b1 += r * l1_delta

    def langevin_gradient(self, x, y, theta, depth: int) -> np.ndarray:
        return _sgd_sweeps(self, x, y, theta, depth)


def _sgd_sweeps(model, x, y, theta, depth: int) -> np.ndarray:
    """`depth` epochs of per-instance forward+backward over rows in stored
    order, started from `theta`; returns the re-encoded parameter vector."""
    if depth < 0:
        raise InvalidParameterError("depth must be >= 0")
    theta = np.asarray(theta, dtype=float)
    if depth == 0:
        return theta.copy()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(
            f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    if y.shape[1] != model.spec.output_num:
        raise DimensionError(
            f"y has {y.shape[1]} columns, expected {model.spec.output_num}")
    model.decode(theta)
    for _ in range(depth):
        for i in range(x.shape[0]):
            model.forward(x[i])
            model.backward(x[i], y[i])
    return model.encode()


def langevin_gradient(model, x, y, theta, depth: int) -> np.ndarray:
    """Gradient-map ``theta``: ``depth`` SGD epochs over (x, y) from theta."""
    return _sgd_sweeps(model, x, y, theta, depth)


def build_model(spec: ModelSpec, rng=None):
    """Instantiate the model family named by ``spec``."""
    if spec.family == "linear":
        return LinearModel(spec, rng)
    return NeuralNetwork(spec, rng)
