"""Self-contained differentiation engine for small dense tanh networks.

Network inputs are space-time points (t, x).  A forward pass can carry a
second-order Taylor jet (value, d/dt, d/dx, d2/dx2) through every layer,
which gives the exact residual derivatives without finite differences or an
autodiff framework.  Gradients with respect to the parameters are obtained
by reverse accumulation through the recorded jet computation: the caller
supplies the loss value together with its adjoint seeds on the output jet,
and the engine propagates them back to every weight and bias.

Everything is float64 and deterministic: the same seed always builds the
same network, and repeated evaluations produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Jet2:
    """Value and (d/dt, d/dx, d2/dx2) of a scalar quantity at a point batch.

    Components are floats or equally shaped arrays.  Arithmetic follows the
    Taylor propagation rules; in particular the second spatial derivative of
    a product is a.dxx*b.v + 2*a.dx*b.dx + a.v*b.dxx.
    """

    v: object
    dt: object
    dx: object
    dxx: object

    @classmethod
    def constant(cls, value):
        zero = np.zeros_like(value) if isinstance(value, np.ndarray) else 0.0
        return cls(value, zero, zero, zero)

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.v + other.v, self.dt + other.dt,
                        self.dx + other.dx, self.dxx + other.dxx)
        return Jet2(self.v + other, self.dt, self.dx, self.dxx)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.v, -self.dt, -self.dx, -self.dxx)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet2) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return Jet2(
                self.v * other.v,
                self.dt * other.v + self.v * other.dt,
                self.dx * other.v + self.v * other.dx,
                self.dxx * other.v + 2.0 * self.dx * other.dx + self.v * other.dxx,
            )
        return Jet2(self.v * other, self.dt * other, self.dx * other, self.dxx * other)

    __rmul__ = __mul__

    def tanh(self):
        a = np.tanh(self.v)
        s = 1.0 - a * a
        w = -2.0 * a * s  # second derivative of tanh at self.v
        return Jet2(a, s * self.dt, s * self.dx, s * self.dxx + w * self.dx * self.dx)


@dataclass
class Mlp:
    """Dense tanh network; weights[k] has shape (n_out, n_in), biases zero-init.

    bounds, when set, is (t_lo, t_hi, x_lo, x_hi) and maps each input onto
    [-1, 1] before the first layer.  The map is part of the network, so
    checkpoints carry it and derivative passes account for its slopes.
    """

    layer_sizes: tuple
    weights: list
    biases: list
    bounds: tuple = None

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return Mlp(self.layer_sizes, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.bounds)

    def input_slopes(self):
        if self.bounds is None:
            return 1.0, 1.0
        t_lo, t_hi, x_lo, x_hi = self.bounds
        return 2.0 / (t_hi - t_lo), 2.0 / (x_hi - x_lo)


@dataclass
class ParamVector:
    """Per-parameter data shaped like an Mlp (gradients, Adam moments)."""

    weights: list
    biases: list

    @classmethod
    def zeros_like(cls, net: Mlp):
        return cls([np.zeros_like(w) for w in net.weights],
                   [np.zeros_like(b) for b in net.biases])

    def flat(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def add_scaled(self, other: "ParamVector", scale):
        for i in range(len(self.weights)):
            self.weights[i] += scale * other.weights[i]
            self.biases[i] += scale * other.biases[i]


def _check_bounds(bounds):
    if bounds is None:
        return None
    t_lo, t_hi, x_lo, x_hi = (float(v) for v in bounds)
    if not (t_hi > t_lo and x_hi > x_lo):
        raise ValueError(f"degenerate input bounds {bounds}")
    return (t_lo, t_hi, x_lo, x_hi)


def xavier_init(layer_sizes, seed, bounds=None) -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise ValueError(f"bad layer sizes {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return Mlp(sizes, weights, biases, _check_bounds(bounds))


def _stack_inputs(net, t, x):
    t = np.asarray(t, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64).ravel()
    if t.shape != x.shape:
        raise ValueError(f"t and x must match, got {t.shape} vs {x.shape}")
    if net.bounds is None:
        return np.vstack((t, x))
    t_lo, t_hi, x_lo, x_hi = net.bounds
    at, ax = net.input_slopes()
    return np.vstack((at * (t - t_lo) - 1.0, ax * (x - x_lo) - 1.0))


def _forward_value(net: Mlp, t, x):
    """Plain forward pass; returns (output (N,), activations per layer)."""
    a = _stack_inputs(net, t, x)
    cache = [a]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b[:, None]
        a = np.tanh(z) if k < last else z
        cache.append(a)
    return a[0], cache


def forward(net: Mlp, t, x):
    """Network output at a batch of points, shape (N,)."""
    out, _ = _forward_value(net, t, x)
    return out


def _input_jet(net, t, x):
    v = _stack_inputs(net, t, x)
    n = v.shape[1]
    at, ax = net.input_slopes()
    dt = np.zeros((2, n))
    dt[0] = at
    dx = np.zeros((2, n))
    dx[1] = ax
    return Jet2(v, dt, dx, np.zeros((2, n)))


def _forward_jet(net: Mlp, t, x):
    """Jet forward pass; returns (output Jet2 of (1,N) arrays, layer caches).

    Each cache entry holds the layer's input jet plus, for hidden layers,
    the pre-activation jet and the tanh value/slope needed by the reverse
    sweep.  The value channel repeats the exact operations of
    _forward_value, so the two agree bit for bit.
    """
    jet = _input_jet(net, t, x)
    cache = []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        zin = jet
        z = Jet2(w @ jet.v + b[:, None], w @ jet.dt, w @ jet.dx, w @ jet.dxx)
        if k < last:
            a = np.tanh(z.v)
            s = 1.0 - a * a
            jet = Jet2(a, s * z.dt, s * z.dx, s * z.dxx + (-2.0 * a * s) * z.dx * z.dx)
            cache.append((zin, z, a, s))
        else:
            jet = z
            cache.append((zin, None, None, None))
    return jet, cache


def forward_jet(net: Mlp, t, x) -> Jet2:
    """Output value and input derivatives at a batch of points, each (N,)."""
    jet, _ = _forward_jet(net, t, x)
    return Jet2(jet.v[0], jet.dt[0], jet.dx[0], jet.dxx[0])


def _jet_backward(net: Mlp, cache, seed: Jet2) -> ParamVector:
    """Reverse accumulation of sum(seed . output_jet) over the parameters."""
    grad = ParamVector.zeros_like(net)
    adj = seed
    last = len(net.weights) - 1
    for k in range(last, -1, -1):
        zin, z, a, s = cache[k]
        if k < last:
            # translate the adjoint of tanh(z) into the adjoint of z
            w2 = -2.0 * a * s
            dw2 = -2.0 * s * (s - 2.0 * a * a)
            adj = Jet2(
                adj.v * s
                + (adj.dt * z.dt + adj.dx * z.dx + adj.dxx * z.dxx) * w2
                + adj.dxx * z.dx * z.dx * dw2,
                adj.dt * s,
                adj.dx * s + adj.dxx * w2 * 2.0 * z.dx,
                adj.dxx * s,
            )
        w = net.weights[k]
        grad.weights[k] = (
            adj.v @ zin.v.T + adj.dt @ zin.dt.T + adj.dx @ zin.dx.T + adj.dxx @ zin.dxx.T
        )
        grad.biases[k] = adj.v.sum(axis=1)
        if k > 0:
            adj = Jet2(w.T @ adj.v, w.T @ adj.dt, w.T @ adj.dx, w.T @ adj.dxx)
    return grad


def _value_backward(net: Mlp, cache, seed) -> ParamVector:
    """Reverse accumulation of sum(seed * output) for a plain forward pass."""
    grad = ParamVector.zeros_like(net)
    adj = np.asarray(seed, dtype=np.float64).reshape(1, -1)
    last = len(net.weights) - 1
    for k in range(last, -1, -1):
        if k < last:
            a = cache[k + 1]
            adj = adj * (1.0 - a * a)
        grad.weights[k] = adj @ cache[k].T
        grad.biases[k] = adj.sum(axis=1)
        if k > 0:
            adj = net.weights[k].T @ adj
    return grad


def loss_param_grad(net: Mlp, t, x, loss_fn):
    """Loss value and its parameter gradient for a jet-based scalar loss.

    loss_fn receives the output Jet2 (components shaped (N,)) and must
    return (loss, seed) where seed is a Jet2 of the partial derivatives of
    the loss with respect to each output component.

    Returns:
        (loss, ParamVector)
    """
    jet, cache = _forward_jet(net, t, x)
    loss, seed = loss_fn(Jet2(jet.v[0], jet.dt[0], jet.dx[0], jet.dxx[0]))
    seed = Jet2(
        np.asarray(seed.v, dtype=np.float64).reshape(1, -1),
        np.asarray(seed.dt, dtype=np.float64).reshape(1, -1),
        np.asarray(seed.dx, dtype=np.float64).reshape(1, -1),
        np.asarray(seed.dxx, dtype=np.float64).reshape(1, -1),
    )
    return loss, _jet_backward(net, cache, seed)


def value_loss_param_grad(net: Mlp, t, x, loss_fn):
    """Same as loss_param_grad for losses that only use the output value.

    loss_fn receives the output values (N,) and returns (loss, seed (N,)).
    Cheaper than the jet path: no derivative channels are carried.
    """
    out, cache = _forward_value(net, t, x)
    loss, seed = loss_fn(out)
    return loss, _value_backward(net, cache, seed)


CHECKPOINT_MAGIC = "stefan-pinn-mlp"
CHECKPOINT_VERSION = 1


def save_checkpoint(net: Mlp, path):
    """Decimal-text parameter dump; round-trips float64 exactly."""
    with open(path, "w") as f:
        f.write(f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n")
        f.write("layers " + " ".join(str(n) for n in net.layer_sizes) + "\n")
        if net.bounds is None:
            f.write("bounds none\n")
        else:
            f.write("bounds " + " ".join(format(v, ".17g")
                                         for v in net.bounds) + "\n")
        for k, (w, b) in enumerate(zip(net.weights, net.biases)):
            f.write(f"W{k}\n")
            for row in w:
                f.write(" ".join(format(v, ".17g") for v in row) + "\n")
            f.write(f"b{k}\n")
            f.write(" ".join(format(v, ".17g") for v in b) + "\n")


def _parse_row(line):
    return np.array([float(tok) for tok in line.split()], dtype=np.float64)


def load_checkpoint(path) -> Mlp:
    with open(path) as f:
        lines = f.read().splitlines()
    header = lines[0].split()
    if header[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    if header[1] != f"v{CHECKPOINT_VERSION}":
        raise ValueError(f"unsupported checkpoint version {header[1]}")
    if not lines[1].startswith("layers "):
        raise ValueError("missing layer sizes")
    sizes = tuple(int(n) for n in lines[1].split()[1:])
    if not lines[2].startswith("bounds "):
        raise ValueError("missing input bounds")
    tail = lines[2].split()[1:]
    bounds = None if tail == ["none"] else _check_bounds(tail)
    weights, biases = [], []
    pos = 3
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if lines[pos] != f"W{k}":
            raise ValueError(f"expected W{k} at line {pos + 1}")
        pos += 1
        rows = [_parse_row(lines[pos + i]) for i in range(n_out)]
        pos += n_out
        weights.append(np.vstack(rows))
        if lines[pos] != f"b{k}":
            raise ValueError(f"expected b{k} at line {pos + 1}")
        pos += 1
        biases.append(_parse_row(lines[pos]))
        pos += 1
        if weights[-1].shape != (n_out, n_in) or biases[-1].shape != (n_out,):
            raise ValueError(f"layer {k} has wrong shape")
    return Mlp(sizes, weights, biases, bounds)
