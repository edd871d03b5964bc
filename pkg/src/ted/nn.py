"""Feed-forward classifier written directly against numpy.

ReLU hidden layers, identity output, softmax cross-entropy, Adam and early
stopping on a held-out slice.  Weights persist to a small versioned text
format that round-trips bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FORMAT_HEADER = "TEDNET v1"


class DimensionError(ValueError):
    pass


class WeightFileError(ValueError):
    pass


class WeightVersionError(WeightFileError):
    pass


class Network:
    def __init__(self, weights, biases):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise DimensionError("bias length does not match layer width")
        for w0, w1 in zip(self.weights, self.weights[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise DimensionError("consecutive layer dims do not chain")
        self._fast = None

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_in(self):
        return self.dims[0]

    @property
    def n_out(self):
        return self.dims[-1]

    @classmethod
    def zeros(cls, dims):
        return cls([np.zeros((a, b)) for a, b in zip(dims, dims[1:])],
                   [np.zeros(b) for b in dims[1:]])

    @classmethod
    def init(cls, dims, rng):
        """He-style uniform initialization scaled by fan-in."""
        ws, bs = [], []
        for a, b in zip(dims, dims[1:]):
            lim = np.sqrt(6.0 / a)
            ws.append(rng.uniform(-lim, lim, size=(a, b)))
            bs.append(np.zeros(b))
        return cls(ws, bs)

    def copy(self):
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise DimensionError(f"expected {self.n_in} inputs, got {x.shape[-1]}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
        return x @ self.weights[-1] + self.biases[-1]

    def forward_fast(self, x):
        """Single-precision forward pass for bulk inference inside rollouts."""
        if self._fast is None:
            self._fast = ([w.astype(np.float32) for w in self.weights],
                          [b.astype(np.float32) for b in self.biases])
        ws, bs = self._fast
        x = np.asarray(x, dtype=np.float32)
        if x.shape[-1] != self.n_in:
            raise DimensionError(f"expected {self.n_in} inputs, got {x.shape[-1]}")
        for w, b in zip(ws[:-1], bs[:-1]):
            x = x @ w
            x += b
            np.maximum(x, 0.0, out=x)
        x = x @ ws[-1]
        x += bs[-1]
        return x


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grads(net: Network, X, y):
    """Mean softmax cross-entropy and its gradients for every parameter."""
    acts = [np.asarray(X, dtype=np.float64)]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    z = acts[-1] @ net.weights[-1] + net.biases[-1]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(y)
    loss = -logp[np.arange(n), y].mean()

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


def cross_entropy(net, X, y, chunk=65536):
    total = 0.0
    for s in range(0, len(y), chunk):
        z = net.forward(X[s:s + chunk])
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        total -= logp[np.arange(len(z)), y[s:s + chunk]].sum()
    return total / len(y)


def accuracy(net, X, y):
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(net.forward(X), axis=1) == y))


@dataclass
class TrainConfig:
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 15
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.1
    hidden: tuple = (256, 128, 128, 128)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch size and epoch count must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience exceeds max epochs")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    train_accuracy: float = float("nan")
    val_accuracy: float = float("nan")


def train_classifier(X, y, n_out: int, cfg: TrainConfig):
    """Fit a freshly initialized network; returns (best network, report).

    The network is never warm-started.  Early stopping watches the loss on
    a held-out slice of ``val_fraction`` of the data; tiny datasets with no
    room for a slice are monitored on the training loss instead.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty dataset")
    if y.min() < 0 or y.max() >= n_out:
        raise ValueError(f"labels must lie in [0, {n_out})")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(y))
    n_val = int(round(cfg.val_fraction * len(y)))
    if n_val >= len(y):
        n_val = 0
    val, tr = order[:n_val], order[n_val:]
    Xt, yt, Xv, yv = X[tr], y[tr], X[val], y[val]

    net = Network.init([X.shape[1], *cfg.hidden, n_out], rng)
    params = net.weights + net.biases
    m = [np.zeros_like(q) for q in params]
    v = [np.zeros_like(q) for q in params]
    step = 0
    report = TrainReport()
    best, best_loss, since = net.copy(), np.inf, 0
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(len(yt))
        for s in range(0, len(yt), cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            _, gw, gb = loss_and_grads(net, Xt[idx], yt[idx])
            step += 1
            c1 = 1 - cfg.beta1**step
            c2 = 1 - cfg.beta2**step
            for q, g, mq, vq in zip(params, gw + gb, m, v):
                mq *= cfg.beta1
                mq += (1 - cfg.beta1) * g
                vq *= cfg.beta2
                vq += (1 - cfg.beta2) * g * g
                q -= cfg.lr * (mq / c1) / (np.sqrt(vq / c2) + cfg.adam_eps)
        tl = cross_entropy(net, Xt, yt)
        vl = cross_entropy(net, Xv, yv) if n_val else tl
        report.train_loss.append(tl)
        report.val_loss.append(vl)
        if vl < best_loss:
            best, best_loss, since = net.copy(), vl, 0
            report.best_epoch = epoch
        else:
            since += 1
            if since >= cfg.patience:
                break
    report.train_accuracy = accuracy(best, Xt, yt)
    report.val_accuracy = accuracy(best, Xv, yv)
    return best, report


# -- persistence ----------------------------------------------------------

def _line(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_weights(net: Network, path):
    lines = [FORMAT_HEADER, " ".join(str(d) for d in net.dims)]
    for w, b in zip(net.weights, net.biases):
        lines.append(_line(w))
        lines.append(_line(b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path) -> Network:
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise WeightFileError(f"{path}: line 1: empty file")
    if lines[0] != FORMAT_HEADER:
        if lines[0].startswith("TEDNET"):
            raise WeightVersionError(f"{path}: line 1: unsupported version {lines[0]!r}")
        raise WeightFileError(f"{path}: line 1: missing {FORMAT_HEADER!r} header")
    if len(lines) < 2:
        raise WeightFileError(f"{path}: line 2: missing layer dims")
    try:
        dims = [int(t) for t in lines[1].split()]
    except ValueError:
        raise WeightFileError(f"{path}: line 2: layer dims must be integers") from None
    if len(dims) < 2 or min(dims) < 1:
        raise WeightFileError(f"{path}: line 2: need at least two positive dims")
    expected = 2 + 2 * (len(dims) - 1)
    if len(lines) != expected:
        raise WeightFileError(f"{path}: line {len(lines) + 1}: expected {expected} lines, found {len(lines)}")
    ws, bs = [], []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        for k, shape in ((2 + 2 * i, (a, b)), (3 + 2 * i, (b,))):
            try:
                vals = np.array([float(t) for t in lines[k].split()])
            except ValueError:
                raise WeightFileError(f"{path}: line {k + 1}: non-numeric entry") from None
            if vals.size != int(np.prod(shape)):
                raise WeightFileError(f"{path}: line {k + 1}: expected {int(np.prod(shape))} values, got {vals.size}")
            if not np.all(np.isfinite(vals)):
                raise WeightFileError(f"{path}: line {k + 1}: non-finite weight")
            (ws if len(shape) == 2 else bs).append(vals.reshape(shape))
    return Network(ws, bs)
