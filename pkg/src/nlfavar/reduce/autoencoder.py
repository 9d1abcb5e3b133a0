"""Feed-forward autoencoder trained with minibatch Adam on squared error.

The encoder maps N -> h1 -> ... -> hL -> q with the chosen activation on the
hidden layers and a linear bottleneck; the decoder mirrors it back to N with
a linear output layer.  Factors are the centered, unit-variance bottleneck
activations.
"""
import numpy as np

from ..errors import DivergenceError, ParameterError
from ..rng import substream
from .base import AutoencoderSpec, FactorSet, ReducerSpec, as_matrix


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return None  # identity


class MLP:
    """Dense network with one activation name per layer.

    ``weights[l]`` has shape (fan_in, fan_out); a batch is a (n, fan_in) matrix.
    """

    def __init__(self, sizes, activations, rng=None, weights=None, biases=None):
        if len(activations) != len(sizes) - 1:
            raise ParameterError("need one activation per layer")
        self.sizes = tuple(int(s) for s in sizes)
        self.activations = tuple(activations)
        if weights is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weights, biases = [], []
            for fi, fo in zip(self.sizes[:-1], self.sizes[1:]):
                bound = np.sqrt(6.0 / (fi + fo))
                weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
                biases.append(np.zeros(fo))
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]

    @property
    def params(self):
        return self.weights + self.biases

    def forward(self, X, upto=None):
        a = np.asarray(X, float)
        n = len(self.weights) if upto is None else upto
        for W, b, act in zip(self.weights[:n], self.biases[:n], self.activations[:n]):
            a = _act(act, a @ W + b)
        return a

    def loss(self, X, target=None):
        target = X if target is None else target
        return float(np.mean((self.forward(X) - target) ** 2))

    def gradient(self, X, target=None):
        """MSE loss and its gradients, ``(loss, dweights, dbiases)``."""
        X = np.asarray(X, float)
        target = X if target is None else target
        pre, post = [], [X]
        a = X
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ W + b
            a = _act(act, z)
            pre.append(z)
            post.append(a)
        diff = a - target
        loss = float(np.mean(diff**2))
        delta = (2.0 / diff.size) * diff
        dW = [None] * len(self.weights)
        db = [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            g = _act_grad(self.activations[l], pre[l], post[l + 1])
            if g is not None:
                delta = delta * g
            dW[l] = post[l].T @ delta
            db[l] = delta.sum(axis=0)
            if l:
                delta = delta @ self.weights[l].T
        return loss, dW, db


def nn_gradient(network, batch, target=None):
    """Gradients of the MSE reconstruction loss for every weight and bias.

    Returns ``(dweights, dbiases)`` in layer order.
    """
    _, dW, db = network.gradient(batch, target)
    return dW, db


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class AutoencoderModel:
    def __init__(self, net, n_encoder, center, scale):
        self.net = net
        self.n_encoder = n_encoder
        self.center = center
        self.scale = scale

    def encode(self, X):
        """Raw bottleneck activations."""
        return self.net.forward(X, upto=self.n_encoder)

    def transform(self, X):
        return (self.encode(np.atleast_2d(X)) - self.center) / self.scale

    def reconstruct(self, X):
        return self.net.forward(X)


def build_network(n_inputs, q, spec, rng):
    hidden = spec.resolve_hidden(n_inputs, q)
    sizes = (n_inputs,) + hidden + (q,) + hidden[::-1] + (n_inputs,)
    n_enc = len(hidden) + 1
    acts = [spec.activation] * len(hidden) + ["linear"] + [spec.activation] * len(hidden) + ["linear"]
    return MLP(sizes, acts, rng=rng), n_enc


def train(net, X, spec, rng):
    """Minibatch Adam; returns the per-epoch full-sample loss curve."""
    opt = Adam(net.params, spec.learning_rate, spec.betas, spec.eps)
    T = X.shape[0]
    curve = np.empty(spec.epochs)
    for epoch in range(spec.epochs):
        order = rng.permutation(T)
        for start in range(0, T, spec.minibatch):
            batch = X[order[start : start + spec.minibatch]]
            loss, dW, db = net.gradient(batch)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            opt.step(net.params, dW + db)
        curve[epoch] = net.loss(X)
        if not np.isfinite(curve[epoch]):
            raise DivergenceError(epoch)
    return curve


def autoencoder_reduce(data, spec=None, q=5, reducer_spec=None):
    """Train an autoencoder on the standardized panel and return its factors."""
    spec = spec or AutoencoderSpec()
    X = as_matrix(data)
    net, n_enc = build_network(X.shape[1], q, spec, substream(spec.seed, "ae-init"))
    curve = train(net, X, spec, substream(spec.seed, "ae-shuffle"))
    H = net.forward(X, upto=n_enc)
    center = H.mean(axis=0)
    scale = H.std(axis=0, ddof=1)
    scale = np.where(scale > 0, scale, 1.0)
    F = (H - center) / scale
    reducer_spec = reducer_spec or ReducerSpec(kind="autoencoder", q=q, ae=spec)
    return FactorSet(
        F,
        reducer_spec,
        training_loss_curve=curve,
        model=AutoencoderModel(net, n_enc, center, scale),
        info={"hidden_sizes": list(net.sizes[1:n_enc]), "final_loss": float(curve[-1])},
    )
