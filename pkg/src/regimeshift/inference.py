"""Exact inference over the discrete regime chain.

Conventions: ``log_A[t-1, j, k] = log p(s_t = j | s_{t-1} = k, x_{t-1})`` for
t = 1..T-1 (zero-based), so each column k of ``exp(log_A[t-1])`` is a
distribution over destination regimes. Emissions ``log_B[t, j]`` are indexed
by the destination regime.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .probability import ContractError, logsumexp


@dataclass
class TransitionNetwork:
    """Feedforward map (one-hot previous regime, previous observation) -> destination logits.

    logits[k, :] = tanh(U_s[k] + x U_x + c) V + d + S[k]; the direct S path
    carries regime persistence and is where the stickiness prior is seeded.
    """

    params: dict[str, np.ndarray]
    n_regimes: int

    PREFIX = "trans/"

    @classmethod
    def init(cls, n_regimes: int, n_summary: int, hidden: int = 8, stickiness: float = 4.0,
             scale: float = 0.1, rng: np.random.Generator | None = None) -> "TransitionNetwork":
        rng = rng if rng is not None else np.random.default_rng(0)
        K, H = n_regimes, hidden
        params = {
            "U_s": scale * rng.standard_normal((K, H)),
            "U_x": scale * rng.standard_normal((n_summary, H)),
            "c": np.zeros(H),
            "V": np.zeros((H, K)),
            "d": np.zeros(K),
            "S": stickiness * np.eye(K),
        }
        return cls(params, K)

    @classmethod
    def zeros(cls, n_regimes: int, n_summary: int, hidden: int = 8) -> "TransitionNetwork":
        net = cls.init(n_regimes, n_summary, hidden, stickiness=0.0)
        return cls({k: np.zeros_like(v) for k, v in net.params.items()}, n_regimes)

    @property
    def n_summary(self) -> int:
        return self.params["U_x"].shape[0]

    def prefixed(self) -> dict[str, np.ndarray]:
        return {self.PREFIX + k: v for k, v in self.params.items()}

    @classmethod
    def from_prefixed(cls, values: dict, n_regimes: int) -> "TransitionNetwork":
        p = {k[len(cls.PREFIX):]: np.array(v) for k, v in values.items() if k.startswith(cls.PREFIX)}
        return cls(p, n_regimes)


def transition_log_matrices(params, summaries, n_regimes: int):
    """log A of shape (T-1, K_dest, K_src) from network parameters (arrays or tape nodes).

    ``summaries[t-1]`` summarizes the observation preceding step t.
    """
    x = np.asarray(summaries, dtype=float)
    base = ad.add(ad.matmul(x, params["U_x"]), params["c"])           # (T-1, H)
    pre = ad.add(ad.expand_dims(base, 1), params["U_s"])               # (T-1, K_src, H)
    hidden = ad.tanh(pre)
    logits = ad.add(ad.add(ad.matmul(hidden, params["V"]), params["d"]), params["S"])  # (T-1, K_src, K_dst)
    log_probs = ad.log_softmax(logits, axis=-1)
    return ad.swapaxes(log_probs, 1, 2)


@dataclass
class TransitionMatrixSeq:
    log_A: np.ndarray        # (T-1, K, K), columns are source regimes
    log_init: np.ndarray     # (K,)

    @property
    def A(self) -> np.ndarray:
        return np.exp(self.log_A)

    @property
    def n_regimes(self) -> int:
        return self.log_init.shape[0]

    def check(self, tol: float = 1e-10) -> None:
        colsums = self.A.sum(axis=1)
        if not np.allclose(colsums, 1.0, atol=tol, rtol=0):
            raise ContractError("transition matrix columns do not sum to one")


def uniform_log_init(n_regimes: int) -> np.ndarray:
    return np.full(n_regimes, -np.log(n_regimes))


def compute_transitions(net: TransitionNetwork, observations) -> TransitionMatrixSeq:
    """Per-step transition matrices; the summary for step t is observation t-1 (flattened)."""
    obs = np.asarray(observations, dtype=float)
    if obs.shape[0] < 2:
        raise ContractError("need at least two observations")
    summaries = obs.reshape(obs.shape[0], -1)[:-1]
    try:
        log_A = transition_log_matrices(net.params, summaries, net.n_regimes)
    except FloatingPointError as exc:
        raise ad.NonFiniteError("transition network") from exc
    if not np.all(np.isfinite(log_A)):
        raise ad.NonFiniteError("transition network")
    return TransitionMatrixSeq(np.asarray(log_A), uniform_log_init(net.n_regimes))


@dataclass
class ForwardBackwardResult:
    log_alpha: np.ndarray     # (T, K)
    log_beta: np.ndarray      # (T, K)
    marginals: np.ndarray     # (T, K)   p(s_t = k | x_{1:T})
    pairwise: np.ndarray      # (T-1, K, K)  p(s_t = j, s_{t-1} = k | x_{1:T})
    loglik: float

    @property
    def occupancy(self) -> np.ndarray:
        return self.marginals.mean(axis=0)


def _check_dims(log_A, log_B, log_init):
    T, K = log_B.shape
    if log_A.shape != (max(T - 1, 0), K, K) or log_init.shape != (K,):
        raise ContractError(f"inconsistent shapes: log_A {log_A.shape}, log_B {log_B.shape}, "
                            f"log_init {log_init.shape}")


def _unpack(A):
    if isinstance(A, TransitionMatrixSeq):
        return np.asarray(A.log_A), np.asarray(A.log_init)
    log_A, log_init = A
    return np.asarray(log_A, dtype=float), np.asarray(log_init, dtype=float)


def forward_pass(A, log_B) -> tuple[np.ndarray, float]:
    """Log forward variables and sequence log-likelihood.

    ``A`` is a TransitionMatrixSeq or a (log_A, log_init) pair.
    """
    log_A, log_init = _unpack(A)
    log_B = np.asarray(log_B, dtype=float)
    _check_dims(log_A, log_B, log_init)
    T, K = log_B.shape
    la = np.empty((T, K))
    la[0] = log_init + log_B[0]
    for t in range(1, T):
        la[t] = log_B[t] + logsumexp(log_A[t - 1] + la[t - 1][None, :], axis=1)
    return la, logsumexp(la[-1])


def backward_smooth(A, log_B, log_alpha=None) -> ForwardBackwardResult:
    log_A, log_init = _unpack(A)
    log_B = np.asarray(log_B, dtype=float)
    if log_alpha is None:
        log_alpha, loglik = forward_pass((log_A, log_init), log_B)
    else:
        _check_dims(log_A, log_B, log_init)
        loglik = logsumexp(log_alpha[-1])
    T, K = log_B.shape
    lb = np.zeros((T, K))
    for t in range(T - 1, 0, -1):
        lb[t - 1] = logsumexp(log_A[t - 1] + (log_B[t] + lb[t])[:, None], axis=0)

    log_marg = log_alpha + lb
    marg = np.exp(log_marg - logsumexp(log_marg, axis=1, keepdims=True))
    if T > 1:
        log_pair = (log_alpha[:-1, None, :] + log_A + (log_B[1:] + lb[1:])[:, :, None])
        flat = log_pair.reshape(T - 1, -1)
        pair = np.exp(flat - logsumexp(flat, axis=1, keepdims=True)).reshape(T - 1, K, K)
    else:
        pair = np.zeros((0, K, K))
    return ForwardBackwardResult(log_alpha, lb, marg, pair, float(loglik))


def forward_backward(A, log_B) -> ForwardBackwardResult:
    return backward_smooth(A, log_B)


def expected_loglik(result: ForwardBackwardResult, log_A, log_B, log_init=None):
    """Expected complete-data log-likelihood with the posterior held fixed.

    ``log_A`` and ``log_B`` may be tape nodes; gradients flow through them only.
    """
    if isinstance(log_A, TransitionMatrixSeq):
        log_A, log_init = log_A.log_A, log_A.log_init
    K = np.shape(ad._val(log_B))[1]
    if log_init is None:
        log_init = uniform_log_init(K)
    first = float(np.sum(result.marginals[0] * log_init))
    emis = ad.sum_(ad.mul(result.marginals, log_B))
    if result.pairwise.shape[0] == 0:
        return ad.add(emis, first)
    trans = ad.sum_(ad.mul(result.pairwise, log_A))
    return ad.add(ad.add(emis, trans), first)


def map_segmentation(result: ForwardBackwardResult) -> np.ndarray:
    """Per-step argmax of the smoothed marginals; ties go to the lowest index."""
    return np.argmax(result.marginals, axis=1)
