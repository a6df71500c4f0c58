"""Distributions, closed-form KL divergences and reparameterized samplers.

Every function here is pure: randomness enters only through explicit draws
(standard-normal noise or uniforms) supplied by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, expit, logit

VARIANCE_FLOOR = 1e-12


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class InfiniteDivergenceError(ArithmeticError):
    """Raised when a KL divergence is infinite (support mismatch)."""


@dataclass(frozen=True)
class GaussianDiag:
    """Diagonal Gaussian; variance is kept as log-variance internally."""

    mean: np.ndarray
    log_variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        logv = np.atleast_1d(np.asarray(self.log_variance, dtype=float))
        if mean.shape != logv.shape:
            raise ContractError(f"mean shape {mean.shape} != variance shape {logv.shape}")
        if not np.all(np.isfinite(logv)):
            raise ContractError("variance must be strictly positive and finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_variance", logv)

    @classmethod
    def from_variance(cls, mean, variance) -> "GaussianDiag":
        variance = np.atleast_1d(np.asarray(variance, dtype=float))
        if np.any(variance <= 0):
            raise ContractError("variance must be strictly positive")
        return cls(mean, np.log(variance))

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_variance)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class BetaParam:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ContractError(f"Beta parameters must be positive, got ({self.a}, {self.b})")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)


@dataclass(frozen=True)
class BernoulliParam:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ContractError(f"Bernoulli probability must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class CategoricalParam:
    logits: np.ndarray

    def __post_init__(self):
        logits = np.atleast_1d(np.asarray(self.logits, dtype=float))
        if not np.all(np.isfinite(logits)):
            raise ContractError("categorical logits must be finite")
        object.__setattr__(self, "logits", logits)

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits)


def logsumexp(xs, axis=None, keepdims=False):
    """Max-shifted log-sum-exp. Exact for singletons."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ContractError("logsumexp of an empty array")
    m = np.max(xs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = m + np.log(np.sum(np.exp(xs - m), axis=axis, keepdims=True))
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    if np.ndim(out) == 0:
        return float(out)
    return out


def softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=float)
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=float)
    m = np.max(logits, axis=axis, keepdims=True)
    z = logits - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


# -- KL divergences ---------------------------------------------------------

def gaussian_kl_terms(mu_q, logvar_q, mu_p, logvar_p):
    """Elementwise KL(N(mu_q, e^logvar_q) || N(mu_p, e^logvar_p))."""
    ratio = np.exp(logvar_q - logvar_p)
    return 0.5 * (ratio + (mu_q - mu_p) ** 2 * np.exp(-logvar_p) - 1.0 + logvar_p - logvar_q)


def kl_gaussian_diag(q: GaussianDiag, p: GaussianDiag) -> float:
    if q.dim != p.dim:
        raise ContractError(f"dimension mismatch: {q.dim} vs {p.dim}")
    terms = gaussian_kl_terms(q.mean, q.log_variance, p.mean, p.log_variance)
    return max(float(np.sum(terms)), 0.0)


def bernoulli_kl_logits(logit_q, logit_p):
    """Elementwise Bernoulli KL from logits; stable for saturated probabilities."""
    logit_q = np.asarray(logit_q, dtype=float)
    logit_p = np.asarray(logit_p, dtype=float)
    q = expit(logit_q)
    # ln q = -softplus(-l), ln(1-q) = -softplus(l)
    sp = np.logaddexp
    return (q * (sp(0.0, -logit_p) - sp(0.0, -logit_q))
            + (1.0 - q) * (sp(0.0, logit_p) - sp(0.0, logit_q)))


def kl_bernoulli(q: BernoulliParam | float, p: BernoulliParam | float) -> float:
    """KL(Bern(q) || Bern(p)) with the 0 ln 0 = 0 convention.

    Raises InfiniteDivergenceError when p sits on an endpoint q does not share.
    """
    q = q.p if isinstance(q, BernoulliParam) else float(q)
    p = p.p if isinstance(p, BernoulliParam) else float(p)
    BernoulliParam(q), BernoulliParam(p)
    total = 0.0
    for qq, pp in ((q, p), (1.0 - q, 1.0 - p)):
        if qq == 0.0:
            continue
        if pp == 0.0:
            raise InfiniteDivergenceError(f"KL(Bern({q}) || Bern({p})) is infinite")
        total += qq * np.log(qq / pp)
    return max(total, 0.0)


def beta_kl_terms(a, b, a_p, b_p):
    """Elementwise KL(Beta(a, b) || Beta(a_p, b_p))."""
    return (betaln(a_p, b_p) - betaln(a, b)
            + (a - a_p) * digamma(a) + (b - b_p) * digamma(b)
            + ((a_p - a) + (b_p - b)) * digamma(a + b))


def kl_beta(q: BetaParam, p: BetaParam) -> float:
    return max(float(beta_kl_terms(q.a, q.b, p.a, p.b)), 0.0)


# -- samplers ----------------------------------------------------------------

def reparam_gaussian(d: GaussianDiag, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=float)
    if noise.shape != d.mean.shape:
        raise ContractError(f"noise shape {noise.shape} != dimension {d.mean.shape}")
    return d.mean + np.exp(0.5 * d.log_variance) * noise


def relaxed_bernoulli_sample(p, temperature: float, u):
    """Binary-concrete sample sigma((logit p + logit u) / temperature)."""
    if not temperature > 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    p = p.p if isinstance(p, BernoulliParam) else p
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any((u <= 0) | (u >= 1)):
        raise ContractError("relaxed Bernoulli needs 0 < p < 1 and 0 < u < 1")
    out = expit((logit(p) + logit(u)) / temperature)
    return float(out) if out.ndim == 0 else out


def kumaraswamy_sample(a, b, u):
    """Inverse-CDF Kumaraswamy(a, b) draw; reparameterized surrogate for Beta(a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.exp(np.log1p(-np.exp(np.log1p(-u) / b)) / a)
