"""Small reverse-mode differentiation over numpy arrays.

A program is a callable ``program(params, *inputs)`` where ``params`` maps
parameter names to tape nodes. Every primitive below accepts plain arrays as
well as nodes; with no node among its arguments it simply returns the numpy
result, so the same model code serves both training and evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, polygamma

from . import probability as prob
from .probability import ContractError


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by operation '{op}'")
        self.op = op


class ParameterStore:
    """Named parameter arrays, each paired with a gradient accumulator."""

    def __init__(self, params: dict[str, np.ndarray] | None = None):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> None:
        if name in self.values:
            raise ContractError(f"duplicate parameter name '{name}'")
        value = np.array(value, dtype=float)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __setitem__(self, name: str, value) -> None:
        value = np.asarray(value, dtype=float)
        if value.shape != self.values[name].shape:
            raise ContractError(f"shape change for '{name}': {self.values[name].shape} -> {value.shape}")
        self.values[name] = value.copy()

    def __contains__(self, name) -> bool:
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.values.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.values[k] = v.copy()

    def num_parameters(self) -> int:
        return sum(v.size for v in self.values.values())


class Node:
    __slots__ = ("value", "tape", "parents", "op", "name")
    __array_priority__ = 100.0

    def __init__(self, value, tape, parents=(), op="leaf", name=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.op = op
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.shape})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __pow__(self, k): return power(self, k)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return sum_(self, axis, keepdims)


class Tape:
    """Ordered record of the nodes created during one forward evaluation."""

    def __init__(self, store: ParameterStore | None = None):
        self.store = store
        self.nodes: list[Node] = []
        self.output: Node | None = None
        self._params: dict[str, Node] = {}

    def param(self, name: str) -> Node:
        if name not in self._params:
            node = Node(self.store[name], self, (), "param", name)
            self.nodes.append(node)
            self._params[name] = node
        return self._params[name]

    def params(self) -> dict[str, Node]:
        return {name: self.param(name) for name in self.store}


# -- node construction helpers ---------------------------------------------------

def _val(x):
    return x.value if isinstance(x, Node) else x


def _tape_of(*args):
    for a in args:
        if isinstance(a, Node):
            return a.tape
    return None


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _make(op, value, parents):
    """Record a node. ``parents`` pairs each input with its vector-Jacobian product."""
    tape = _tape_of(*(p for p, _ in parents))
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(op)
    if tape is None:
        return value
    live = tuple((p, vjp) for p, vjp in parents if isinstance(p, Node))
    node = Node(value, tape, live, op)
    tape.nodes.append(node)
    return node


# -- primitives -------------------------------------------------------------------

def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    if _tape_of(a, b) is None:
        return out
    return _make("add", out, [(a, lambda g: _unbroadcast(g, np.shape(av))),
                              (b, lambda g: _unbroadcast(g, np.shape(bv)))])


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    if _tape_of(a, b) is None:
        return out
    return _make("sub", out, [(a, lambda g: _unbroadcast(g, np.shape(av))),
                              (b, lambda g: -_unbroadcast(g, np.shape(bv)))])


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    if _tape_of(a, b) is None:
        return out
    return _make("mul", out, [(a, lambda g: _unbroadcast(g * bv, np.shape(av))),
                              (b, lambda g: _unbroadcast(g * av, np.shape(bv)))])


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    if _tape_of(a, b) is None:
        return out
    return _make("div", out, [(a, lambda g: _unbroadcast(g / bv, np.shape(av))),
                              (b, lambda g: _unbroadcast(-g * out / bv, np.shape(bv)))])


def neg(a):
    out = -_val(a)
    return _make("neg", out, [(a, lambda g: -g)]) if isinstance(a, Node) else out


def power(a, k: float):
    av = _val(a)
    out = av ** k
    if not isinstance(a, Node):
        return out
    return _make("power", out, [(a, lambda g: g * k * av ** (k - 1))])


def matmul(a, b):
    """Batched matrix product with numpy broadcasting; both operands at least 2-D."""
    av, bv = _val(a), _val(b)
    out = av @ bv
    if _tape_of(a, b) is None:
        return out
    return _make("matmul", out, [
        (a, lambda g: _unbroadcast(g @ np.swapaxes(bv, -1, -2), np.shape(av))),
        (b, lambda g: _unbroadcast(np.swapaxes(av, -1, -2) @ g, np.shape(bv))),
    ])


def exp(a):
    out = np.exp(_val(a))
    return _make("exp", out, [(a, lambda g: g * out)]) if isinstance(a, Node) else out


def log(a):
    av = _val(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _make("log", out, [(a, lambda g: g / av)]) if isinstance(a, Node) else out


def tanh(a):
    out = np.tanh(_val(a))
    return _make("tanh", out, [(a, lambda g: g * (1.0 - out ** 2))]) if isinstance(a, Node) else out


def sigmoid(a):
    out = expit(_val(a))
    return _make("sigmoid", out, [(a, lambda g: g * out * (1.0 - out))]) if isinstance(a, Node) else out


def softplus(a):
    av = _val(a)
    out = np.logaddexp(0.0, av)
    return _make("softplus", out, [(a, lambda g: g * expit(av))]) if isinstance(a, Node) else out


def relu(a):
    av = _val(a)
    out = np.maximum(av, 0.0)
    return _make("relu", out, [(a, lambda g: g * (av > 0))]) if isinstance(a, Node) else out


def identity(a):
    return a


def clip(a, lo, hi):
    """Clamp; gradient passes only where the input lies inside [lo, hi]."""
    av = _val(a)
    out = np.clip(av, lo, hi)
    if not isinstance(a, Node):
        return out
    inside = (av >= lo) & (av <= hi)
    return _make("clip", out, [(a, lambda g: g * inside)])


def log1mexp(a):
    """log(1 - exp(a)) for a < 0."""
    av = _val(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(av > -0.6931471805599453, np.log(-np.expm1(av)), np.log1p(-np.exp(av)))
    if not isinstance(a, Node):
        return out
    return _make("log1mexp", out, [(a, lambda g: -g / np.expm1(-av))])


def cumsum(a, axis=-1):
    av = _val(a)
    out = np.cumsum(av, axis=axis)
    if not isinstance(a, Node):
        return out
    return _make("cumsum", out, [(a, lambda g: np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis))])


def sum_(a, axis=None, keepdims=False):
    av = _val(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)
    if not isinstance(a, Node):
        return out
    shape = np.shape(av)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)

    return _make("sum", out, [(a, vjp)])


def mean(a, axis=None, keepdims=False):
    n = np.size(_val(a)) if axis is None else np.prod([np.shape(_val(a))[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    av = _val(a)
    out = np.reshape(av, shape)
    if not isinstance(a, Node):
        return out
    return _make("reshape", out, [(a, lambda g: np.reshape(g, np.shape(av)))])


def swapaxes(a, i, j):
    out = np.swapaxes(_val(a), i, j)
    if not isinstance(a, Node):
        return out
    return _make("swapaxes", out, [(a, lambda g: np.swapaxes(g, i, j))])


def expand_dims(a, axis):
    return reshape(a, np.expand_dims(_val(a), axis).shape)


def getitem(a, idx):
    av = _val(a)
    out = av[idx]
    if not isinstance(a, Node):
        return out

    def vjp(g):
        full = np.zeros_like(av)
        np.add.at(full, idx, g)
        return full

    return _make("getitem", out, [(a, vjp)])


def concatenate(parts, axis=-1):
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if _tape_of(*parts) is None:
        return out
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def piece(i):
        return lambda g: np.split(g, bounds, axis=axis)[i]

    return _make("concatenate", out, [(p, piece(i)) for i, p in enumerate(parts)])


def logsumexp(a, axis=None, keepdims=False):
    av = _val(a)
    m = np.max(av, axis=axis, keepdims=True)
    e = np.exp(av - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out_k = m + np.log(s)
    out = out_k if keepdims else (np.squeeze(out_k, axis=axis) if axis is not None else out_k.reshape(()))
    if not isinstance(a, Node):
        return out
    w = e / s

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return g * w

    return _make("logsumexp", out, [(a, vjp)])


def log_softmax(a, axis=-1):
    av = _val(a)
    out = prob.log_softmax(av, axis=axis)
    if not isinstance(a, Node):
        return out
    p = np.exp(out)
    return _make("log_softmax", out, [(a, lambda g: g - p * np.sum(g, axis=axis, keepdims=True))])


# -- closed-form KL primitives (elementwise; prior side held constant) ----------

def kl_gaussian(mu, logvar, prior_mu, prior_logvar):
    """Elementwise diagonal-Gaussian KL(q || prior); gradients for q's mean and log-variance."""
    muv, lv = _val(mu), _val(logvar)
    out = prob.gaussian_kl_terms(muv, lv, prior_mu, prior_logvar)
    if _tape_of(mu, logvar) is None:
        return out
    inv_pv = np.exp(-np.asarray(prior_logvar))
    return _make("kl_gaussian", out, [
        (mu, lambda g: _unbroadcast(g * (muv - prior_mu) * inv_pv, np.shape(muv))),
        (logvar, lambda g: _unbroadcast(g * 0.5 * (np.exp(lv - prior_logvar) - 1.0), np.shape(lv))),
    ])


def kl_bernoulli_logits(logit_q, logit_p):
    """Elementwise KL(Bern(sigmoid(logit_q)) || Bern(sigmoid(logit_p))), differentiable in logit_q."""
    lq = _val(logit_q)
    out = prob.bernoulli_kl_logits(lq, logit_p)
    if not isinstance(logit_q, Node):
        return out
    q = expit(lq)
    return _make("kl_bernoulli", out,
                 [(logit_q, lambda g: _unbroadcast(g * q * (1.0 - q) * (lq - logit_p), np.shape(lq)))])


def kl_beta(a, b, prior_a, prior_b):
    """Elementwise KL(Beta(a, b) || Beta(prior_a, prior_b)), differentiable in a and b."""
    av, bv = _val(a), _val(b)
    out = prob.beta_kl_terms(av, bv, prior_a, prior_b)
    if _tape_of(a, b) is None:
        return out
    shared = ((prior_a - av) + (prior_b - bv)) * polygamma(1, av + bv)
    return _make("kl_beta", out, [
        (a, lambda g: _unbroadcast(g * ((av - prior_a) * polygamma(1, av) + shared), np.shape(av))),
        (b, lambda g: _unbroadcast(g * ((bv - prior_b) * polygamma(1, bv) + shared), np.shape(bv))),
    ])


# -- evaluation and differentiation --------------------------------------------

def forward_eval(program: Callable, inputs, store: ParameterStore):
    """Run ``program(params, *inputs)`` on a fresh tape; return (output value, tape)."""
    tape = Tape(store)
    out = program(tape.params(), *inputs)
    if isinstance(out, Node):
        tape.output = out
        return out.value, tape
    return out, tape


def backward(tape: Tape, output_adjoint=1.0) -> None:
    """Accumulate d(output . adjoint)/d(param) into the tape's store."""
    if tape.output is None:
        return
    adj0 = np.asarray(output_adjoint, dtype=float)
    if adj0.shape != np.shape(tape.output.value):
        raise ContractError(f"adjoint shape {adj0.shape} != output shape {np.shape(tape.output.value)}")
    adjoints = {id(tape.output): adj0}
    for node in reversed(tape.nodes):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        if node.op == "param":
            tape.store.grads[node.name] += g
            continue
        for parent, vjp in node.parents:
            pg = vjp(g)
            key = id(parent)
            if key in adjoints:
                adjoints[key] = adjoints[key] + pg
            else:
                adjoints[key] = np.asarray(pg, dtype=float)


def value_and_grad(program: Callable, store: ParameterStore, inputs=()) -> tuple[float, dict[str, np.ndarray]]:
    """Scalar value and fresh gradients (the store's accumulators are left untouched)."""
    saved = {k: g.copy() for k, g in store.grads.items()}
    store.zero_grad()
    value, tape = forward_eval(program, inputs, store)
    backward(tape, 1.0)
    grads = {k: g.copy() for k, g in store.grads.items()}
    for k, g in saved.items():
        store.grads[k][...] = g
    return float(value), grads


@dataclass
class FiniteDiffReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def flagged(self) -> list[str]:
        return [k for k, e in self.errors.items() if not e < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def finite_diff_check(program: Callable, store: ParameterStore, tolerance: float = 1e-4,
                      step: float = 1e-5, inputs=(), analytic: dict | None = None,
                      names=None) -> FiniteDiffReport:
    """Compare analytic gradients with central differences, one relative error per parameter group.

    The relative error of a group is max|analytic - numeric| / max(max|analytic|, max|numeric|),
    with a tiny absolute floor so all-zero gradients compare as equal.
    """
    if analytic is None:
        _, analytic = value_and_grad(program, store, inputs)
    report = FiniteDiffReport(tolerance)
    for name in names or store.names():
        base = store.values[name]
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp, _ = forward_eval(program, inputs, store)
            flat[i] = orig - step
            fm, _ = forward_eval(program, inputs, store)
            flat[i] = orig
            numeric.reshape(-1)[i] = (float(fp) - float(fm)) / (2 * step)
        a = np.asarray(analytic[name], dtype=float)
        scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-12)
        report.errors[name] = float(np.max(np.abs(a - numeric), initial=0.0) / scale)
    return report
