"""Minimal reverse-mode autodiff over small dense tensors.

Enough machinery to backpropagate through a time-unrolled spiking
pipeline: broadcast-aware elementwise ops, (stacked) matmul, batch
norm, a hard spike threshold with surrogate backward, Bernoulli
sampling with a straight-through backward, and Adam.

Graph semantics:
  * every op returns a new :class:`Tensor` holding the forward value
    and closures that map the upstream gradient to each parent;
  * ``backward()`` on a scalar walks the graph once in reverse
    topological order and *adds* into ``.grad`` of every tensor with
    ``requires_grad`` — calling it twice doubles the accumulated
    gradients, ``zero_grad`` resets them;
  * building intermediate results never mutates inputs, so one set of
    parameters can serve many concurrently evaluated graphs as long as
    each graph is built and backpropagated on a single thread.

Spike nodes follow the convention step(v) = 1 iff v >= 0. The backward
of a spike node is the derivative of a chosen relaxation (boxcar or
fast sigmoid); pass ``mode="relaxed"`` to make the *forward* compute
that relaxation too, which is what finite-difference gradient checks
must differentiate.
"""

from dataclasses import dataclass

import numpy as np

from .validation import require

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (fast inference)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A dense float64 array with an accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "name")

    def __init__(self, data, requires_grad=False, parents=(), name=None):
        self.data = np.asarray(data, dtype=np.float64)
        require(self.data.ndim <= 5, "tensors are limited to 5 dims")
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = parents          # tuple of (Tensor, grad_fn)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}{tag})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def backward(self):
        """Reverse pass from a scalar; adds into ``.grad`` of every
        requires-grad tensor reachable from this node."""
        require(self.data.size == 1, "backward() requires a scalar loss")
        order = _toposort(self)
        flowing = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad = node.grad + g
            for parent, grad_fn in node._parents:
                if not parent.requires_grad and not parent._parents:
                    continue
                pg = grad_fn(g)
                key = id(parent)
                if key in flowing:
                    flowing[key] = flowing[key] + pg
                else:
                    flowing[key] = pg


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _result(data, parents):
    """Wrap an op result, recording parents only when a gradient can flow."""
    if _GRAD_ENABLED and any(_needs_grad(p) for p, _ in parents):
        return Tensor(data, requires_grad=True,
                      parents=tuple((p, f) for p, f in parents if _needs_grad(p)))
    return Tensor(data)


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise and linear algebra -----------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _result(a.data + b.data, (
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ))


def neg(a: Tensor) -> Tensor:
    a = _lift(a)
    return _result(-a.data, ((a, lambda g: -g),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _result(a.data * b.data, (
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ))


def scale(a: Tensor, c: float) -> Tensor:
    a = _lift(a)
    c = float(c)
    return _result(a.data * c, ((a, lambda g: g * c),))


def _swap(x):
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy's stacked-matrix broadcasting."""
    a, b = _lift(a), _lift(b)
    require(a.data.ndim >= 2 and b.data.ndim >= 2,
            "matmul operands must have at least 2 dims")
    return _result(np.matmul(a.data, b.data), (
        (a, lambda g: _unbroadcast(np.matmul(g, _swap(b.data)), a.data.shape)),
        (b, lambda g: _unbroadcast(np.matmul(_swap(a.data), g), b.data.shape)),
    ))


def affine(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    """x @ weight (+ bias)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def reshape(a: Tensor, shape) -> Tensor:
    a = _lift(a)
    return _result(a.data.reshape(shape),
                   ((a, lambda g: g.reshape(a.data.shape)),))


def transpose(a: Tensor, axes) -> Tensor:
    a = _lift(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes),
                   ((a, lambda g: g.transpose(inverse)),))


def swap_last(a: Tensor) -> Tensor:
    """Transpose the last two axes."""
    a = _lift(a)
    axes = tuple(range(a.data.ndim - 2)) + (a.data.ndim - 1, a.data.ndim - 2)
    return transpose(a, axes)


def index_axis(a: Tensor, axis: int, index: int) -> Tensor:
    """Select one slice along ``axis`` (used to walk timestep stacks)."""
    a = _lift(a)

    def grad_fn(g):
        out = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = index
        out[tuple(sl)] = g
        return out

    return _result(np.take(a.data, index, axis=axis), ((a, grad_fn),))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    parents = tuple(
        (t, (lambda g, i=i: np.take(g, i, axis=axis))) for i, t in enumerate(tensors)
    )
    return _result(np.stack([t.data for t in tensors], axis=axis), parents)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)

    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape).copy()

    return _result(a.data.sum(axis=axis, keepdims=keepdims), ((a, grad_fn),))


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def one_minus(a: Tensor) -> Tensor:
    return add(Tensor(1.0), neg(a))


# -- spike nonlinearities ----------------------------------------------------

@dataclass(frozen=True)
class SurrogateSpec:
    """Backward relaxation for the spike threshold.

    ``boxcar``: gradient 1/width on |v| <= width/2, else 0 (relaxed
    forward is the matching hard sigmoid). ``fast-sigmoid``: gradient
    1/(1 + slope*|v|)^2 (relaxed forward 0.5 + v/(1 + slope*|v|)).
    """

    kind: str = "boxcar"
    param: float = 1.0

    def __post_init__(self):
        require(self.kind in ("boxcar", "fast-sigmoid"),
                f"unknown surrogate kind {self.kind!r}")
        require(self.param > 0, "surrogate parameter must be > 0")

    def derivative(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "boxcar":
            return (np.abs(v) <= self.param / 2.0) / self.param
        return 1.0 / (1.0 + self.param * np.abs(v)) ** 2

    def relaxed(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "boxcar":
            return np.clip(v / self.param + 0.5, 0.0, 1.0)
        return 0.5 + v / (1.0 + self.param * np.abs(v))


def heaviside_surrogate(v: Tensor, spec: SurrogateSpec,
                        mode: str = "hard") -> Tensor:
    """Spike threshold: forward 1 iff v >= 0, backward per ``spec``.

    ``mode="relaxed"`` swaps the forward for the relaxation itself, so
    the recorded gradient is the true gradient of the forward — the form
    finite-difference oracles check.
    """
    require(mode in ("hard", "relaxed"), f"unknown mode {mode!r}")
    if mode == "hard":
        out = (v.data >= 0).astype(np.float64)
    else:
        out = spec.relaxed(v.data)
    return _result(out, ((v, lambda g: g * spec.derivative(v.data)),))


def bernoulli_ste(p: Tensor, rng: np.random.Generator) -> Tensor:
    """Bernoulli draw per entry with a straight-through backward.

    Forward clamps probabilities to [0, 1] before sampling; the backward
    is the identity (unclipped), preserving the learning signal.
    """
    probs = np.clip(p.data, 0.0, 1.0)
    draws = (rng.random(probs.shape) < probs).astype(np.float64)
    return _result(draws, ((p, lambda g: g),))


# -- batch norm --------------------------------------------------------------

class BatchNormStats:
    """Running mean/variance buffers for one normalized feature axis."""

    def __init__(self, num_features: int, momentum: float = 0.9):
        self.mean = np.zeros(num_features)
        self.var = np.ones(num_features)
        self.momentum = momentum


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               stats: BatchNormStats, training: bool,
               eps: float = 1e-5) -> Tensor:
    """Normalize over all leading axes, per trailing-axis feature.

    Training mode uses batch statistics and updates the running buffers
    in place (momentum 0.9); eval mode uses the running buffers.
    """
    feat = x.data.shape[-1]
    require(feat == stats.mean.shape[0], "feature dim does not match stats")
    axes = tuple(range(x.data.ndim - 1))
    m = int(np.prod([x.data.shape[a] for a in axes])) if axes else 1
    if training:
        require(m >= 1, "batch norm needs a non-empty batch in training mode")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        mom = stats.momentum
        stats.mean = mom * stats.mean + (1 - mom) * mean
        stats.var = mom * stats.var + (1 - mom) * var
    else:
        mean, var = stats.mean, stats.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = gamma.data * xhat + beta.data

    def grad_x(g):
        gx = g * gamma.data
        if not training:
            return gx * inv_std
        # full batch-statistics backward
        dvar = np.sum(gx * (x.data - mean), axis=axes) * (-0.5) * inv_std ** 3
        dmean = (np.sum(gx, axis=axes) * (-inv_std)
                 + dvar * np.sum(-2.0 * (x.data - mean), axis=axes) / m)
        return (gx * inv_std
                + dvar * 2.0 * (x.data - mean) / m
                + dmean / m)

    return _result(out, (
        (x, grad_x),
        (gamma, lambda g: np.sum(g * xhat, axis=axes)),
        (beta, lambda g: np.sum(g, axis=axes)),
    ))


# -- loss --------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels.

    ``logits`` is (C,) or (B, C); ``labels`` an int or (B,) ints.
    Numerically stabilized by max subtraction; the recorded gradient is
    softmax(logits) - one_hot(labels), averaged over the batch.
    """
    z = logits.data
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    labs = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch, n_classes = z.shape
    require(labs.shape == (batch,), "labels must match the batch size")
    require(labs.min() >= 0 and labs.max() < n_classes,
            f"labels must lie in [0, {n_classes})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(batch), labs].mean()

    def grad_fn(g):
        probs = np.exp(log_probs)
        probs[np.arange(batch), labs] -= 1.0
        grad = g * probs / batch
        return grad[0] if squeeze else grad

    return _result(np.float64(loss), ((logits, grad_fn),))


# -- optimization ------------------------------------------------------------

def zero_grad(params) -> None:
    for p in params:
        if p.grad is not None:
            p.grad = np.zeros_like(p.data)


class Adam:
    """Adam with bias correction over a fixed parameter list."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        zero_grad(self.params)
