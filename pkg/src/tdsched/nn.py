"""Dense feedforward actor/critic networks, exact backprop, Adam updates.

Fixed architecture: tanh hidden layers, then either a softmax head (actor,
distribution over priority levels) or a scalar identity head (critic). All
math is float64 numpy; forward passes return a cache that the matching
backward pass consumes, so gradients are exact reverse-mode derivatives.

Checkpoint format per network: little-endian int64 header
``[n_dims, dim_0, ..., dim_{n-1}]`` followed by the flat little-endian
float64 parameter array in ``W0, b0, W1, b1, ...`` order (row-major weights).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HEAD_SOFTMAX = "softmax"
HEAD_IDENTITY = "identity"


@dataclass
class DenseNet:
    layer_dims: tuple[int, ...]
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list  # per layer, shape (fan_out,)
    head: str


@dataclass
class ForwardCache:
    activations: list  # input plus each hidden activation
    outputs: np.ndarray  # pre-head outputs (logits / raw values), 2-D
    probs: np.ndarray | None  # softmax head only
    log_probs: np.ndarray | None
    single: bool  # caller passed a 1-D observation


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_dense(layer_dims, head: str, rng: np.random.Generator) -> DenseNet:
    """Uniform fan-based weight init, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"layer_dims must be >= 2 positive sizes (got {layer_dims})")
    if head not in (HEAD_SOFTMAX, HEAD_IDENTITY):
        raise ValueError(f"unknown head {head!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(layer_dims=dims, weights=weights, biases=biases, head=head)


def parameters(net: DenseNet) -> list:
    """Flat parameter list in checkpoint order: W0, b0, W1, b1, ..."""
    out = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def _forward(net: DenseNet, x) -> ForwardCache:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.layer_dims[0]:
        raise ValueError(f"input shape {np.shape(x)} does not match input dim "
                         f"{net.layer_dims[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite network input")
    activations = [arr]
    h = arr
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.tanh(h @ w + b)
        activations.append(h)
    out = h @ net.weights[-1] + net.biases[-1]
    if net.head == HEAD_SOFTMAX:
        shifted = out - out.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        probs = np.exp(log_probs)
    else:
        probs = log_probs = None
    return ForwardCache(activations=activations, outputs=out, probs=probs,
                        log_probs=log_probs, single=single)


def forward_policy(net: DenseNet, observation) -> tuple[np.ndarray, ForwardCache]:
    """Action distribution over the priority levels (rows sum to 1)."""
    if net.head != HEAD_SOFTMAX:
        raise ValueError("forward_policy requires a softmax-head network")
    cache = _forward(net, observation)
    probs = cache.probs
    return (probs[0] if cache.single else probs), cache


def forward_value(net: DenseNet, observation):
    """Scalar state-value estimate(s)."""
    if net.head != HEAD_IDENTITY:
        raise ValueError("forward_value requires an identity-head network")
    cache = _forward(net, observation)
    values = cache.outputs[:, 0]
    return (float(values[0]) if cache.single else values), cache


def backward(net: DenseNet, cache: ForwardCache, grad_output) -> list:
    """Gradients of a scalar loss w.r.t. every parameter.

    ``grad_output`` is the loss gradient at the network output: shape like the
    probability matrix for a softmax head, or one scalar per row for the
    critic. Returns arrays matching ``parameters(net)``.
    """
    acts = cache.activations
    if len(acts) != len(net.weights) or acts[0].shape[1] != net.layer_dims[0]:
        raise ValueError("forward cache does not match network architecture")
    batch = acts[0].shape[0]
    g = np.asarray(grad_output, dtype=np.float64)
    if cache.single and g.ndim <= 1 and net.head == HEAD_SOFTMAX:
        g = g[None, :]
    if net.head == HEAD_SOFTMAX:
        if g.shape != cache.probs.shape:
            raise ValueError(f"grad_output shape {g.shape} does not match "
                             f"probs shape {cache.probs.shape}")
        p = cache.probs
        dz = p * (g - (g * p).sum(axis=1, keepdims=True))
    else:
        g = g.reshape(batch)
        dz = g[:, None]
    grads: list = []
    for layer in range(len(net.weights) - 1, -1, -1):
        a_prev = acts[layer]
        grads.append(dz.sum(axis=0))
        grads.append(a_prev.T @ dz)
        if layer > 0:
            dz = (dz @ net.weights[layer].T) * (1.0 - a_prev * a_prev)
    grads.reverse()
    return grads


def init_adam(net: DenseNet, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    params = parameters(net)
    return AdamState(learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                     epsilon=epsilon, step=0,
                     m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params])


def adam_update(net: DenseNet, state: AdamState, grads: list) -> DenseNet:
    """Bias-corrected Adam step, applied in place."""
    params = parameters(net)
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameter list")
    for g, p in zip(grads, params):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return net


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def write_net_record(fh, net: DenseNet) -> None:
    dims = np.asarray((len(net.layer_dims),) + net.layer_dims, dtype="<i8")
    dims.tofile(fh)
    flat = np.concatenate([p.ravel() for p in parameters(net)]).astype("<f8")
    flat.tofile(fh)


def read_net_record(fh, head: str) -> DenseNet:
    n_dims = np.fromfile(fh, dtype="<i8", count=1)
    if n_dims.size != 1:
        raise ValueError("truncated checkpoint: missing header")
    dims = tuple(int(d) for d in np.fromfile(fh, dtype="<i8", count=int(n_dims[0])))
    if len(dims) != int(n_dims[0]) or len(dims) < 2:
        raise ValueError("truncated checkpoint: bad layer dims")
    n_params = sum(a * b + b for a, b in zip(dims, dims[1:]))
    flat = np.fromfile(fh, dtype="<f8", count=n_params)
    if flat.size != n_params:
        raise ValueError("truncated checkpoint: missing parameters")
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(dims, dims[1:]):
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    return DenseNet(layer_dims=dims, weights=weights, biases=biases, head=head)


def save_net(path, net: DenseNet) -> None:
    with open(path, "wb") as fh:
        write_net_record(fh, net)


def load_net(path, head: str) -> DenseNet:
    with open(path, "rb") as fh:
        return read_net_record(fh, head)
