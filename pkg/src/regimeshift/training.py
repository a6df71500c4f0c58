"""Streaming ELBO optimization over a sequence of chunks.

Each step builds per-regime log-emissions from one Monte-Carlo draw of every
subnetwork and takes one Adam step on

    loss = -E_post[log p(x, s)] + kl_weight * sum_k occupancy_k * KL_k

where KL_k compares regime k's current posterior with the anchor carried over
from the end of the previous chunk. The regime posterior is held fixed inside
the loss: by default it is the exact forward-backward posterior of the
posterior-mean subnetworks at the start of the chunk (``posterior_mode="chunk"``);
``posterior_mode="step"`` recomputes it from the sampled emissions every step.

While some regimes are still unused, each chunk runs a birth test that decides
whether the chunk is better explained by the current regimes or by one more.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.ndimage import median_filter

from . import autodiff as ad
from .adaptive import (OBS_LOGVAR, Architecture, RegimeBank, draw_noise, log_emissions,
                       regime_outputs, structural_kl)
from .data import Chunk
from .inference import (ForwardBackwardResult, backward_smooth, expected_loglik, forward_pass,
                        map_segmentation, transition_log_matrices, uniform_log_init)
from .probability import ContractError

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    lr: float = 0.02
    steps: int = 200
    mc_samples: int = 1
    kl_warmup: int = 200
    temp_init: float = 1.0
    temp_final: float = 0.2
    temp_decay: float = 0.995
    n_regimes: int = 3
    alpha_ibp: float = 2.0
    hidden: tuple[int, ...] = (16,)
    activation: str = "linear"
    residual: bool = True
    lag: int = 1
    chunk_length: int = 50
    use_masks: bool = True
    prior_var: float = 0.1
    init_scale: float = 1.0
    init_logvar: float = -12.0
    rho_init: float = 3.0
    obs_logvar: float = -5.0
    stickiness: float = 4.0
    trans_hidden: int = 8
    growth: bool = True
    proposal_steps: int = 50
    birth_penalty: float = 30.0
    residual_proposals: bool = False
    posterior_mode: str = "chunk"
    learn_transitions: bool = False
    pooled_moments: bool = True
    carry_filter: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    max_rollbacks: int = 3
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if min(self.steps, self.mc_samples, self.n_regimes, self.lag) < 1 or self.chunk_length < 2:
            raise ContractError("counts must be at least 1 (chunk_length at least 2)")
        if not (0 < self.temp_final <= self.temp_init) or not (0 < self.temp_decay <= 1):
            raise ContractError("temperature schedule must be positive and non-increasing")
        if self.kl_warmup < 0 or self.lr <= 0 or self.alpha_ibp <= 0 or self.prior_var <= 0:
            raise ContractError("invalid learning rate, warmup, IBP concentration or prior variance")
        if self.posterior_mode not in ("chunk", "step"):
            raise ContractError("posterior_mode must be 'chunk' or 'step'")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown trainer fields: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def architecture(self, n_features: int, task: str, n_classes: int = 2) -> Architecture:
        if task == "forecast":
            return Architecture((n_features * self.lag, *self.hidden, n_features), "forecast",
                                self.activation, self.residual)
        return Architecture((n_features, *self.hidden, n_classes), "classify", self.activation, False)


def anneal(config: TrainerConfig, step: int) -> tuple[float, float]:
    """(concrete temperature, KL weight) at a global step."""
    if step < 0:
        raise ContractError("step must be non-negative")
    temperature = max(config.temp_final, config.temp_init * config.temp_decay ** step)
    kl_weight = 1.0 if config.kl_warmup == 0 else min(1.0, step / config.kl_warmup)
    return temperature, kl_weight


class Adam:
    """Adam; parameters whose names start with a ``pooled`` prefix share one second-moment
    estimate across their leading (regime) axis, so a regime's step size stays
    proportional to its share of the gradient instead of being normalized away."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 pooled: tuple[str, ...] = ()):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.pooled = tuple(pooled)
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, store: ad.ParameterStore, hold: dict | None = None) -> None:
        """Update every parameter; ``hold`` maps names to leading-axis indices (or None for
        the whole array) that keep their value and moment estimates."""
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        hold = hold or {}
        for name, g in store.grads.items():
            if name in hold and hold[name] is None:
                continue
            pool = g.ndim > 0 and name.startswith(self.pooled) if self.pooled else False
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g[:1]) if pool else np.zeros_like(g))
            keep = hold.get(name)
            if keep is not None:
                saved = m[keep].copy(), v.copy(), store.values[name][keep].copy()
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (np.mean(g * g, axis=0, keepdims=True) if pool else g * g)
            store.values[name] = store.values[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if keep is not None:
                m[keep], store.values[name][keep] = saved[0], saved[2]
                if not pool:
                    v[keep] = saved[1][keep]

    def state(self):
        return self.t, {k: v.copy() for k, v in self.m.items()}, {k: v.copy() for k, v in self.v.items()}

    def load(self, state) -> None:
        self.t, m, v = state
        self.m = {k: x.copy() for k, x in m.items()}
        self.v = {k: x.copy() for k, x in v.items()}


@dataclass
class StepRecord:
    step: int
    elbo: float
    nll: float
    kl: float
    kl_weight: float
    temperature: float


@dataclass
class TrainingReport:
    chunk: int
    offset: int
    steps: list[StepRecord] = field(default_factory=list)
    segmentation: list[int] = field(default_factory=list)
    occupancy: list[float] = field(default_factory=list)
    mask_density: list[float] = field(default_factory=list)
    rollbacks: int = 0
    birth_gain: float | None = None

    def to_json(self) -> str:
        doc = {
            "chunk": self.chunk,
            "offset": self.offset,
            "step": [r.step for r in self.steps],
            "elbo": [r.elbo for r in self.steps],
            "nll": [r.nll for r in self.steps],
            "kl": [r.kl for r in self.steps],
            "kl_weight": [r.kl_weight for r in self.steps],
            "temperature": [r.temperature for r in self.steps],
            "segmentation": [int(s) for s in self.segmentation],
            "occupancy": [float(x) for x in self.occupancy],
            "mask_density": [float(x) for x in self.mask_density],
            "rollbacks": self.rollbacks,
            "birth_gain": self.birth_gain,
        }
        return json.dumps(doc, sort_keys=True)


class TrainingAborted(RuntimeError):
    def __init__(self, chunk: int, reason: str, bank: RegimeBank | None = None,
                 reports: list | None = None):
        super().__init__(f"training aborted in chunk {chunk}: {reason}")
        self.chunk = chunk
        self.bank = bank
        self.reports = reports or []


@dataclass
class TrainState:
    """Mutable per-run state: optimizer, global step counter and the run's random stream."""

    config: TrainerConfig
    rng: np.random.Generator
    optimizer: Adam
    step: int = 0
    log_init: np.ndarray | None = None
    dominant: int | None = None

    @classmethod
    def fresh(cls, config: TrainerConfig) -> "TrainState":
        seq = np.random.SeedSequence(config.seed)
        pooled = ("net/", "mask") if config.pooled_moments else ()
        return cls(config, np.random.default_rng(seq.spawn(2)[1]),
                   Adam(config.lr, config.beta1, config.beta2, pooled=pooled))


def build_bank(config: TrainerConfig, arch: Architecture, n_summary: int | None = None,
               n_regimes: int | None = None) -> RegimeBank:
    init_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])
    return RegimeBank.init(
        arch, config.n_regimes if n_regimes is None else n_regimes, alpha_ibp=config.alpha_ibp,
        prior_var=config.prior_var, init_scale=config.init_scale, init_logvar=config.init_logvar,
        rho_init=config.rho_init, use_masks=config.use_masks, obs_logvar=config.obs_logvar,
        n_summary=n_summary, trans_hidden=config.trans_hidden, stickiness=config.stickiness, rng=init_rng)


def elbo_loss(params, bank: RegimeBank, chunk: Chunk, draws, temperature: float, kl_weight: float,
              posterior: ForwardBackwardResult | None = None, parts: dict | None = None,
              log_init: np.ndarray | None = None, offset: np.ndarray | None = None):
    """Scalar training loss; ``parts`` (if given) receives nll, kl and the posterior used.

    Pass ``posterior`` to hold the regime posterior fixed; otherwise it is the exact
    forward-backward posterior under the sampled emissions. ``log_init`` is the regime
    prior at the chunk's first step (uniform by default) and ``offset`` a per-regime
    constant added to every log-emission.
    """
    if len(chunk) < 2:
        raise ContractError("a chunk needs at least two steps")
    K = bank.n_regimes
    log_B = log_emissions(params, bank, chunk.inputs, chunk.targets, "train", draws, temperature)
    if offset is not None:
        log_B = ad.add(log_B, offset)
    log_A = transition_log_matrices(_trans_params(params), chunk.summaries, K)
    log_init = uniform_log_init(K) if log_init is None else log_init
    if posterior is None:
        posterior = backward_smooth((ad._val(log_A), log_init), ad._val(log_B))
    ell = expected_loglik(posterior, log_A, log_B, log_init)
    kl_k = structural_kl(params, bank.anchors, bank)
    kl = ad.sum_(ad.mul(kl_k, posterior.occupancy))
    loss = ad.add(ad.neg(ell), ad.mul(kl, kl_weight))
    if parts is not None:
        parts.update(nll=-float(ad._val(ell)), kl=float(ad._val(kl)), posterior=posterior)
    return loss


def _trans_params(params):
    return {k[len("trans/"):]: v for k, v in params.items() if k.startswith("trans/")}


def elbo_step(bank: RegimeBank, chunk: Chunk, state: TrainState, frozen: np.ndarray | None = None,
              candidates: int | None = None, posterior: ForwardBackwardResult | None = None,
              hold_shared: bool = True) -> tuple[StepRecord, ForwardBackwardResult]:
    """One gradient update of the variational and generative parameters on ``chunk``.

    Regimes flagged in ``frozen`` keep their posterior (and, with ``hold_shared``, so do
    the transition and observation parameters). ``candidates`` limits how many
    unmaterialized regimes may take posterior mass (None: all of them). A given
    ``posterior`` replaces the exact forward-backward one.
    """
    config = state.config
    temperature, kl_weight = anneal(config, state.step)
    draws = [draw_noise(bank, state.rng) for _ in range(config.mc_samples)]
    parts: dict = {}
    offset = None if candidates is None else bank.exclusion_offset(candidates)

    def program(params):
        return elbo_loss(params, bank, chunk, draws, temperature, kl_weight, posterior, parts,
                         log_init=state.log_init, offset=offset)

    bank.store.zero_grad()
    value, tape = ad.forward_eval(program, (), bank.store)
    if not np.isfinite(value):
        raise ad.NonFiniteError("loss")
    ad.backward(tape, 1.0)
    for g in bank.store.grads.values():
        if not np.all(np.isfinite(g)):
            raise ad.NonFiniteError("gradient")
    hold = {}
    if not config.learn_transitions:
        hold.update({name: None for name in bank.store.values if name.startswith("trans/")})
    if frozen is not None and frozen.any():
        structural = set(bank.structural_names())
        idx = np.flatnonzero(frozen)
        hold.update({name: idx for name in structural})
        if OBS_LOGVAR in bank.store.values:
            hold[OBS_LOGVAR] = idx
        if hold_shared:
            hold.update({name: None for name in bank.store.values
                         if name not in structural and name != OBS_LOGVAR})
    state.optimizer.step(bank.store, hold)

    posterior = parts["posterior"]
    nll, kl = parts["nll"], parts["kl"]
    record = StepRecord(state.step, -(nll + kl_weight * kl), nll, kl, kl_weight, temperature)
    state.step += 1
    return record, posterior


def materialize(bank: RegimeBank, posterior: ForwardBackwardResult) -> np.ndarray:
    """Mark regimes whose smoothed marginal exceeds 1/K at some time step."""
    K = bank.n_regimes
    bank.materialized |= (posterior.marginals.max(axis=0) > 1.0 / K) | (K == 1)
    return bank.materialized


def carry_prior(bank: RegimeBank) -> dict[str, np.ndarray]:
    """Anchor every materialized regime's KL term at its current posterior."""
    for name in bank.structural_names():
        bank.anchors[name][bank.materialized] = bank.store[name][bank.materialized]
    return bank.anchors


def clone_unused(bank: RegimeBank, source: int, optimizer: Adam | None = None) -> np.ndarray:
    """Reset every unmaterialized regime to a copy of regime ``source``.

    Copies keep the global prior as their anchor. Returns the reset regimes.
    """
    idle = np.flatnonzero(~bank.materialized)
    if idle.size == 0:
        return idle
    for name in bank.structural_names() + [n for n in (OBS_LOGVAR,) if n in bank.store.values]:
        bank.store.values[name][idle] = bank.store.values[name][source]
        if optimizer is not None and name in optimizer.m:
            optimizer.m[name][idle] = 0.0
            if optimizer.v[name].shape[0] == bank.n_regimes:
                optimizer.v[name][idle] = 0.0
    return idle


def assigned_posterior(labels: np.ndarray, K: int) -> ForwardBackwardResult:
    """A regime posterior that puts step t in regime ``labels[t]`` with certainty."""
    labels = np.asarray(labels, dtype=int)
    T = labels.size
    marginals = np.zeros((T, K))
    marginals[np.arange(T), labels] = 1.0
    pairwise = np.einsum("tj,tk->tjk", marginals[1:], marginals[:-1])
    return ForwardBackwardResult(np.zeros((T, K)), np.zeros((T, K)), marginals, pairwise, 0.0)


def _carried_prior(marginal: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    p = np.maximum(marginal, floor)
    return np.log(p / p.sum())


def _capture(bank: RegimeBank, state: TrainState):
    return (bank.store.snapshot(), {k: v.copy() for k, v in bank.anchors.items()},
            bank.materialized.copy(), state.optimizer.state(), state.optimizer.lr, state.step)


def _release(bank: RegimeBank, state: TrainState, captured) -> None:
    values, anchors, materialized, opt_state, lr, step = captured
    bank.store.restore(values)
    bank.anchors = {k: v.copy() for k, v in anchors.items()}
    bank.materialized = materialized.copy()
    state.optimizer.load(opt_state)
    state.optimizer.lr = lr
    state.step = step


def _eval_terms(bank: RegimeBank, chunk: Chunk, log_init=None, offset=None):
    log_B = log_emissions(bank.store.values, bank, chunk.inputs, chunk.targets, "eval")
    if offset is not None:
        log_B = log_B + offset
    log_A = transition_log_matrices(_trans_params(bank.store.values), chunk.summaries, bank.n_regimes)
    log_init = uniform_log_init(bank.n_regimes) if log_init is None else log_init
    return (np.asarray(log_A), log_init), np.asarray(log_B)


def chunk_evidence(bank: RegimeBank, chunk: Chunk, log_init=None, offset=None) -> float:
    """Evaluation-mode log-likelihood of a chunk; ``offset`` is added to the log-emissions."""
    return forward_pass(*_eval_terms(bank, chunk, log_init, offset))[1]


def eval_posterior(bank: RegimeBank, chunk: Chunk, log_init=None, offset=None) -> ForwardBackwardResult:
    """Smoothed regime posterior of a chunk under the posterior-mean subnetworks."""
    return backward_smooth(*_eval_terms(bank, chunk, log_init, offset))


def _run_steps(bank, chunk, state, report, n, index, candidates, frozen=None, posterior=None,
               hold_shared=True):
    """``n`` ELBO steps with rollback; without a given ``posterior`` the configured
    posterior mode decides whether it is fixed for the whole call or refreshed per step."""
    config = state.config
    if posterior is None and config.posterior_mode == "chunk" and n > 0:
        offset = None if candidates is None else bank.exclusion_offset(candidates)
        posterior = eval_posterior(bank, chunk, state.log_init, offset)
    post = posterior
    done = 0
    while done < n:
        snap, opt_state, step0 = bank.store.snapshot(), state.optimizer.state(), state.step
        try:
            record, post = elbo_step(bank, chunk, state, frozen, candidates, posterior, hold_shared)
        except FloatingPointError as exc:
            bank.store.restore(snap)
            state.optimizer.load(opt_state)
            state.step = step0 + 1
            report.rollbacks += 1
            if report.rollbacks > config.max_rollbacks:
                raise TrainingAborted(index, str(exc), bank) from exc
            state.optimizer.lr *= 0.5
            log.warning("chunk %d: %s; rolled back and halved learning rate", index, exc)
            continue
        report.steps.append(record)
        done += 1
    return post


def _residual_side(bank: RegimeBank, chunk: Chunk, regime: int) -> np.ndarray | None:
    """0/1 labels from the sign of ``regime``'s evaluation residuals along their main
    direction, median-smoothed; None when one side is empty."""
    pred = np.asarray(regime_outputs(bank.store.values, bank, chunk.inputs, "eval"))[regime]
    if bank.arch.task != "forecast":
        return None
    resid = np.asarray(chunk.targets, dtype=float).reshape(pred.shape) - pred
    resid = resid - resid.mean(axis=0)
    direction = np.linalg.svd(resid, full_matrices=False)[2][0]
    side = median_filter((resid @ direction > 0).astype(int), size=5, mode="nearest")
    return side if 0 < side.sum() < side.size else None


def _proposals(bank: RegimeBank, chunk: Chunk, state: TrainState) -> list[np.ndarray]:
    """Initial step assignments for a birth.

    With an empty bank the first two regimes split the chunk at a quarter, half or three
    quarters. Otherwise the candidate takes the whole chunk or either half and the
    dominant regime keeps the rest. With ``config.residual_proposals`` the steps are also
    split by the sign of the one-regime (or dominant regime) fit's residuals, which suits
    regimes that alternate faster than the chunk length.
    """
    T = len(chunk)
    if not bank.materialized.any():
        first = int(np.flatnonzero(bank.available(1))[0])
        out = [np.where(np.arange(T) < T * q // 4, first, first + 1) for q in (1, 2, 3)]
        side = _residual_side(bank, chunk, first) if state.config.residual_proposals else None
        if side is not None:
            out.append(first + side)
        return out
    idle = int(np.flatnonzero(~bank.materialized)[0])
    masks = [np.arange(T) < T, np.arange(T) < T // 2, np.arange(T) >= T // 2]
    if state.config.residual_proposals:
        side = _residual_side(bank, chunk, state.dominant)
        if side is not None:
            masks += [side == 1, side == 0]
    return [np.where(m, idle, state.dominant) for m in masks]


def _grow(bank, chunk, state, report, index, labels):
    """Train with one more regime than is materialized.

    The candidate (a copy of the dominant regime, or a fresh pair when the bank is
    empty) is first fitted to the steps ``labels`` assign to it; the materialized
    regimes then stay fixed while the candidate and the shared parameters are trained
    under the regime posterior.
    """
    config = state.config
    n_prop = min(config.proposal_steps, config.steps)
    fixed = assigned_posterior(labels, bank.n_regimes)
    if not bank.materialized.any():
        _run_steps(bank, chunk, state, report, n_prop, index, 2, posterior=fixed)
        return _run_steps(bank, chunk, state, report, config.steps - n_prop, index, 2)
    idle = clone_unused(bank, state.dominant, state.optimizer)[0]
    frozen = np.ones(bank.n_regimes, dtype=bool)
    frozen[idle] = False
    _run_steps(bank, chunk, state, report, n_prop, index, 1, frozen, fixed, hold_shared=True)
    return _run_steps(bank, chunk, state, report, config.steps - n_prop, index, 1,
                      bank.materialized.copy(), hold_shared=False)


def _birth_test(bank, chunk, state, report, index) -> int:
    """Decide whether this chunk adds a regime; returns how many unmaterialized regimes
    the trained bank may use (0 or 1, one more for an empty bank).

    The null hypothesis keeps the materialized regimes fixed (an empty bank fits one
    regime) and the alternatives grow one regime from each proposal. The best
    alternative is kept when it raises the chunk's evaluation log-likelihood by more than
    ``config.birth_penalty`` nats. Comparing against fixed regimes stops an incumbent
    from absorbing a new regime's data just because adapting it is cheap.
    """
    config = state.config
    first = 0 if bank.materialized.any() else 1
    start = _capture(bank, state)
    if first:
        _run_steps(bank, chunk, state, report, config.steps, index, 1)
    else:
        _run_steps(bank, chunk, state, report, min(config.proposal_steps, config.steps), index, 0,
                   bank.materialized.copy(), hold_shared=False)
    base = chunk_evidence(bank, chunk, state.log_init, bank.exclusion_offset(first))
    null = _capture(bank, state), report.steps
    best = None
    for labels in _proposals(bank, chunk, state):
        _release(bank, state, start)
        report.steps = []
        _grow(bank, chunk, state, report, index, labels)
        gain = chunk_evidence(bank, chunk, state.log_init, bank.exclusion_offset(first + 1)) - base
        if best is None or gain > best[0]:
            best = gain, _capture(bank, state), report.steps
    report.birth_gain = float(best[0])
    if best[0] > config.birth_penalty:
        _release(bank, state, best[1])
        report.steps = best[2]
        return first + 1
    if first:
        _release(bank, state, null[0])
        report.steps = null[1]
        return 1
    _release(bank, state, start)
    report.steps = []
    _run_steps(bank, chunk, state, report, config.steps, index, 0)
    return 0


def train_chunk(bank: RegimeBank, chunk: Chunk, state: TrainState, index: int = 0) -> TrainingReport:
    """carry_prior, then ``config.steps`` ELBO steps, then the chunk report.

    With growth enabled and a regime still unmaterialized, a birth test picks between
    the current regimes and one more (see ``_birth_test``); unmaterialized regimes are
    otherwise excluded from the posterior.
    """
    config = state.config
    carry_prior(bank)
    report = TrainingReport(index, chunk.offset)
    if not config.growth or bank.n_regimes == 1:
        candidates = None
        _run_steps(bank, chunk, state, report, config.steps, index, None)
    elif bank.materialized.all():
        candidates = 0
        _run_steps(bank, chunk, state, report, config.steps, index, 0)
    else:
        candidates = _birth_test(bank, chunk, state, report, index)
    offset = None if candidates is None else bank.exclusion_offset(candidates)
    posterior = eval_posterior(bank, chunk, state.log_init, offset)
    materialize(bank, posterior)
    state.dominant = int(np.argmax(posterior.marginals[-1]))
    if config.carry_filter:
        state.log_init = _carried_prior(posterior.marginals[-1])
    report.segmentation = map_segmentation(posterior).tolist()
    report.occupancy = posterior.occupancy.tolist()
    report.mask_density = bank.mask_density().tolist()
    return report


def train_stream(chunks: list[Chunk], config: TrainerConfig, bank: RegimeBank | None = None,
                 arch: Architecture | None = None, state: TrainState | None = None,
                 on_chunk=None) -> tuple[RegimeBank, list[TrainingReport]]:
    """Online pass over the chunks in order; each is visited once."""
    if not chunks:
        raise ContractError("need at least one chunk")
    if bank is None:
        if arch is None:
            raise ContractError("need a bank or an architecture")
        bank = build_bank(config, arch, n_summary=chunks[0].summaries.shape[1])
    state = state or TrainState.fresh(config)
    reports = []
    for i, chunk in enumerate(chunks):
        try:
            rep = train_chunk(bank, chunk, state, i)
        except TrainingAborted as exc:
            exc.reports = reports
            raise
        reports.append(rep)
        if on_chunk is not None:
            on_chunk(rep)
    return bank, reports
