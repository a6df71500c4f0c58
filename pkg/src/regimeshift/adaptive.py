"""Per-regime sparse subnetworks.

Each regime owns a diagonal-Gaussian posterior over the weights of a small
feedforward predictor and a stick-breaking (truncated IBP) posterior over
binary masks on the incoming weights of every hidden unit. The effective
weights of a regime are ``w * m``; biases and the output layer are never
masked.

Storage is stacked: every parameter array carries a leading regime axis, so
all regimes are evaluated in one batched pass during training.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import ParameterStore
from .inference import TransitionNetwork
from .probability import ContractError, GaussianDiag

ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "linear": ad.identity}
TASKS = ("forecast", "classify")
PI_EPS = 1e-6
U_EPS = 1e-7
LOG_2PI = float(np.log(2 * np.pi))
SNAPSHOT_VERSION = 1
OBS_LOGVAR = "obs/logvar"
EXCLUDED_LOGLIK = -1e3  # per-step log-likelihood handicap; exp() underflows to exactly 0

_clamp_events = 0


def clamp_events() -> int:
    """Number of stick probabilities clamped into [eps, 1 - eps] so far in this process."""
    return _clamp_events


@dataclass(frozen=True)
class Architecture:
    sizes: tuple[int, ...]
    task: str = "forecast"
    activation: str = "tanh"
    residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ContractError(f"bad layer sizes {self.sizes}")
        if self.task not in TASKS:
            raise ContractError(f"unknown task '{self.task}'")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation '{self.activation}'")
        if self.residual and (self.task != "forecast" or self.n_in < self.n_out):
            raise ContractError("residual head needs a forecasting task with n_in >= n_out")

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def hidden_layers(self) -> range:
        return range(self.n_layers - 1)

    def layer_shape(self, l: int) -> tuple[int, int]:
        return self.sizes[l], self.sizes[l + 1]

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "task": self.task,
                "activation": self.activation, "residual": self.residual}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(tuple(d["sizes"]), d["task"], d["activation"], d["residual"])


def wname(kind: str, l: int, stat: str) -> str:
    return f"net/{kind}{l}/{stat}"


def mname(l: int, what: str) -> str:
    return f"mask{l}/{what}"


# -- stick-breaking masks -----------------------------------------------------------

def stick_breaking_pi(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any((v <= 0) | (v > 1)):
        raise ContractError("stick fractions must lie in (0, 1]")
    return np.cumprod(v, axis=-1)


def mask_probabilities(rho, pi) -> np.ndarray:
    """h = sigmoid(rho + logit(pi)), with pi clamped into [1e-6, 1 - 1e-6]."""
    global _clamp_events
    rho = np.asarray(rho, dtype=float)
    pi = np.asarray(pi, dtype=float)
    clamped = np.clip(pi, PI_EPS, 1 - PI_EPS)
    _clamp_events += int(np.count_nonzero(clamped != pi))
    return expit(rho + np.log(clamped) - np.log1p(-clamped))


def _log_pi(log_a, log_b, u=None):
    """Clamped log stick products; posterior-mean sticks, or Kumaraswamy draws when ``u`` is given."""
    a, b = ad.exp(log_a), ad.exp(log_b)
    if u is None:
        log_v = ad.sub(log_a, ad.log(ad.add(a, b)))
    else:
        log_v = ad.div(ad.log1mexp(ad.div(np.log1p(-u), b)), a)
    log_pi = ad.cumsum(log_v, axis=-1)
    return ad.clip(log_pi, np.log(PI_EPS), np.log1p(-PI_EPS))


def mask_logits(rho, log_a, log_b, u_stick=None):
    """logit h of shape (..., fan_in, width) from rho and stick parameters."""
    log_pi = _log_pi(log_a, log_b, u_stick)
    logit_pi = ad.sub(log_pi, ad.log1mexp(log_pi))
    return ad.add(rho, ad.expand_dims(logit_pi, -2))


def relaxed_mask(logit_h, temperature: float, u):
    if not temperature > 0:
        raise ContractError("temperature must be positive in training mode")
    return ad.sigmoid(ad.mul(ad.add(logit_h, np.log(u) - np.log1p(-u)), 1.0 / temperature))


# -- per-regime views ---------------------------------------------------------------

@dataclass
class GaussianWeightPosterior:
    means: dict[str, np.ndarray]
    log_variances: dict[str, np.ndarray]

    @property
    def variances(self) -> dict[str, np.ndarray]:
        return {k: np.exp(v) for k, v in self.log_variances.items()}

    def as_gaussian(self) -> GaussianDiag:
        keys = sorted(self.means)
        return GaussianDiag(np.concatenate([self.means[k].ravel() for k in keys]),
                            np.concatenate([self.log_variances[k].ravel() for k in keys]))


@dataclass
class IbpMaskPosterior:
    """Stick Beta posteriors and mask logits, one entry per hidden layer."""

    alpha: float
    rho: list[np.ndarray]
    stick_a: list[np.ndarray]
    stick_b: list[np.ndarray]

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractError("IBP concentration must be positive")
        for a, b, r in zip(self.stick_a, self.stick_b, self.rho):
            if np.any(a <= 0) or np.any(b <= 0):
                raise ContractError("stick Beta parameters must be positive")
            if not np.all(np.isfinite(r)):
                raise ContractError("mask logits must be finite")

    @property
    def k_trunc(self) -> list[int]:
        return [len(a) for a in self.stick_a]

    def pi(self, layer: int = 0) -> np.ndarray:
        a, b = self.stick_a[layer], self.stick_b[layer]
        return stick_breaking_pi(a / (a + b))

    def probabilities(self, layer: int = 0) -> np.ndarray:
        return mask_probabilities(self.rho[layer], self.pi(layer))

    @classmethod
    def prior(cls, arch: Architecture, alpha: float) -> "IbpMaskPosterior":
        shapes = [arch.layer_shape(l) for l in arch.hidden_layers]
        return cls(alpha, [np.zeros(s) for s in shapes],
                   [np.full(s[1], float(alpha)) for s in shapes], [np.ones(s[1]) for s in shapes])


@dataclass
class RegimePosterior:
    regime: int
    weights: GaussianWeightPosterior
    masks: IbpMaskPosterior | None


@dataclass
class MaskedPrediction:
    output: np.ndarray
    masks: list[np.ndarray]
    weights: dict[str, np.ndarray]


def sample_mask(post: IbpMaskPosterior, temperature: float = 0.5, rng=None, mode: str = "train",
                u_mask=None, u_stick=None) -> list[np.ndarray]:
    """Relaxed Bernoulli masks in training mode; hard ``h > 0.5`` masks in evaluation mode."""
    out = []
    for l, rho in enumerate(post.rho):
        if mode == "eval":
            out.append((post.probabilities(l) > 0.5).astype(float))
            continue
        um = u_mask[l] if u_mask is not None else _uniform(rng, rho.shape)
        us = u_stick[l] if u_stick is not None else None
        logit_h = mask_logits(rho, np.log(post.stick_a[l]), np.log(post.stick_b[l]), us)
        out.append(relaxed_mask(logit_h, temperature, um))
    return out


def apply_mask(weights: dict, masks: list, arch: Architecture) -> dict:
    """Effective weights w * m on the hidden layers; biases and the output layer pass through."""
    if len(masks) != len(arch.hidden_layers):
        raise ContractError(f"expected {len(arch.hidden_layers)} masks, got {len(masks)}")
    out = dict(weights)
    for l, m in zip(arch.hidden_layers, masks):
        w = weights[f"W{l}"]
        if np.shape(ad._val(m))[-2:] != np.shape(ad._val(w))[-2:]:
            raise ContractError(f"mask shape {np.shape(ad._val(m))} does not match weight shape "
                                f"{np.shape(ad._val(w))} in layer {l}")
        out[f"W{l}"] = ad.mul(w, m)
    return out


def network_forward(weights: dict, x, arch: Architecture):
    """Feedforward pass; weights may carry a leading regime axis, giving outputs (K, T, n_out)."""
    act = ACTIVATIONS[arch.activation]
    h = x
    for l in range(arch.n_layers):
        h = ad.add(ad.matmul(h, weights[f"W{l}"]), ad.expand_dims(weights[f"b{l}"], -2))
        if l < arch.n_layers - 1:
            h = act(h)
    if arch.residual:
        h = ad.add(h, np.asarray(x)[..., -arch.n_out:])
    return h


# -- the bank -------------------------------------------------------------------------

@dataclass
class RegimeBank:
    """All per-regime posteriors, their continual-learning anchors, and the transition network."""

    arch: Architecture
    n_regimes: int
    alpha_ibp: float
    prior_var: float
    use_masks: bool
    store: ParameterStore
    anchors: dict[str, np.ndarray]
    materialized: np.ndarray
    n_summary: int
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, arch: Architecture, n_regimes: int, *, alpha_ibp: float = 2.0, prior_var: float = 0.1,
             init_scale: float = 1.0, init_logvar: float = -9.0, rho_init: float = 0.0,
             use_masks: bool = True, obs_logvar: float = 0.0, n_summary: int | None = None,
             trans_hidden: int = 8, stickiness: float = 4.0, rng=None) -> "RegimeBank":
        rng = rng if rng is not None else np.random.default_rng(0)
        K = n_regimes
        if K < 1:
            raise ContractError("need at least one regime")
        store = ParameterStore()
        for l in range(arch.n_layers):
            fi, fo = arch.layer_shape(l)
            store.add(wname("W", l, "mu"), init_scale / np.sqrt(fi) * rng.standard_normal((K, fi, fo)))
            store.add(wname("W", l, "logvar"), np.full((K, fi, fo), init_logvar))
            store.add(wname("b", l, "mu"), np.zeros((K, fo)))
            store.add(wname("b", l, "logvar"), np.full((K, fo), init_logvar))
        if use_masks:
            for l in arch.hidden_layers:
                fi, fo = arch.layer_shape(l)
                store.add(mname(l, "rho"), np.full((K, fi, fo), rho_init))
                store.add(mname(l, "log_a"), np.full((K, fo), np.log(alpha_ibp)))
                store.add(mname(l, "log_b"), np.zeros((K, fo)))
        if arch.task == "forecast":
            store.add(OBS_LOGVAR, np.full((K, arch.n_out), obs_logvar))
        n_summary = arch.n_in if n_summary is None else n_summary
        trans = TransitionNetwork.init(K, n_summary, trans_hidden, stickiness, rng=rng)
        for name, value in trans.prefixed().items():
            store.add(name, value)
        bank = cls(arch, K, float(alpha_ibp), float(prior_var), use_masks, store, {},
                   np.zeros(K, dtype=bool), n_summary)
        bank.anchors = bank.global_prior()
        return bank

    # names ------------------------------------------------------------------
    def weight_names(self) -> list[str]:
        return [n for n in self.store if n.startswith("net/")]

    def mask_names(self) -> list[str]:
        return [n for n in self.store if n.startswith("mask")]

    def structural_names(self) -> list[str]:
        return self.weight_names() + self.mask_names()

    def global_prior(self) -> dict[str, np.ndarray]:
        prior = {}
        for name in self.structural_names():
            shape = self.store[name].shape
            if name.endswith("/mu") or name.endswith("/rho") or name.endswith("/log_b"):
                prior[name] = np.zeros(shape)
            elif name.endswith("/logvar"):
                prior[name] = np.full(shape, np.log(self.prior_var))
            elif name.endswith("/log_a"):
                prior[name] = np.full(shape, np.log(self.alpha_ibp))
        return prior

    # views ------------------------------------------------------------------
    def _check_regime(self, k: int) -> None:
        if not 0 <= k < self.n_regimes:
            raise ContractError(f"regime {k} outside [0, {self.n_regimes})")

    def _view(self, source: dict, k: int) -> RegimePosterior:
        self._check_regime(k)
        means, logvars = {}, {}
        for l in range(self.arch.n_layers):
            for kind in ("W", "b"):
                means[f"{kind}{l}"] = np.array(source[wname(kind, l, "mu")][k])
                logvars[f"{kind}{l}"] = np.array(source[wname(kind, l, "logvar")][k])
        masks = None
        if self.use_masks:
            hl = list(self.arch.hidden_layers)
            masks = IbpMaskPosterior(
                self.alpha_ibp,
                [np.array(source[mname(l, "rho")][k]) for l in hl],
                [np.exp(source[mname(l, "log_a")][k]) for l in hl],
                [np.exp(source[mname(l, "log_b")][k]) for l in hl])
        return RegimePosterior(k, GaussianWeightPosterior(means, logvars), masks)

    def regime_posterior(self, k: int) -> RegimePosterior:
        return self._view(self.store.values, k)

    def regime_anchor(self, k: int) -> RegimePosterior:
        return self._view(self.anchors, k)

    def transition_network(self) -> TransitionNetwork:
        return TransitionNetwork.from_prefixed(self.store.values, self.n_regimes)

    @property
    def obs_logvar(self) -> np.ndarray | None:
        return self.store[OBS_LOGVAR] if OBS_LOGVAR in self.store else None

    def available(self, candidates: int | None = 1) -> np.ndarray:
        """Materialized regimes plus the first ``candidates`` unmaterialized ones (all if None)."""
        if candidates is None:
            return np.ones(self.n_regimes, dtype=bool)
        idle = np.flatnonzero(~self.materialized)[:candidates]
        out = self.materialized.copy()
        out[idle] = True
        return out

    def exclusion_offset(self, candidates: int | None = 1) -> np.ndarray:
        """Additive log-emission offset that gives unavailable regimes zero posterior mass."""
        return np.where(self.available(candidates), 0.0, EXCLUDED_LOGLIK)

    def mask_density(self) -> np.ndarray:
        """Fraction of hidden-layer weights switched on by the evaluation mask, per regime."""
        if not self.use_masks:
            return np.ones(self.n_regimes)
        on, total = np.zeros(self.n_regimes), 0
        for l in self.arch.hidden_layers:
            logit_h = mask_logits(self.store[mname(l, "rho")], self.store[mname(l, "log_a")],
                                  self.store[mname(l, "log_b")])
            on += (logit_h > 0).reshape(self.n_regimes, -1).sum(axis=1)
            total += logit_h[0].size
        return on / total

    def copy(self) -> "RegimeBank":
        store = ParameterStore(self.store.snapshot())
        return RegimeBank(self.arch, self.n_regimes, self.alpha_ibp, self.prior_var, self.use_masks,
                          store, {k: v.copy() for k, v in self.anchors.items()},
                          self.materialized.copy(), self.n_summary, dict(self.meta))

    # snapshot -----------------------------------------------------------------
    def to_json(self) -> str:
        def enc(a):
            a = np.asarray(a, dtype=float)
            return {"shape": list(a.shape), "data": [float(x).hex() for x in a.ravel()]}

        doc = {
            "version": SNAPSHOT_VERSION,
            "architecture": self.arch.to_dict(),
            "n_regimes": self.n_regimes,
            "alpha_ibp": float(self.alpha_ibp).hex(),
            "prior_var": float(self.prior_var).hex(),
            "use_masks": self.use_masks,
            "n_summary": self.n_summary,
            "materialized": [bool(x) for x in self.materialized],
            "params": {k: enc(v) for k, v in self.store.values.items()},
            "anchors": {k: enc(v) for k, v in self.anchors.items()},
            "meta": self.meta,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RegimeBank":
        doc = json.loads(text)
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ContractError(f"unsupported snapshot version {doc.get('version')}")

        def dec(d):
            return np.array([float.fromhex(x) for x in d["data"]], dtype=float).reshape(d["shape"])

        store = ParameterStore({k: dec(v) for k, v in doc["params"].items()})
        return cls(Architecture.from_dict(doc["architecture"]), doc["n_regimes"],
                   float.fromhex(doc["alpha_ibp"]), float.fromhex(doc["prior_var"]), doc["use_masks"],
                   store, {k: dec(v) for k, v in doc["anchors"].items()},
                   np.array(doc["materialized"], dtype=bool), doc["n_summary"], doc.get("meta", {}))


# -- batched model computations (params may be tape nodes) ------------------------------

def _uniform(rng, shape):
    return np.clip(rng.random(shape), U_EPS, 1 - U_EPS)


def draw_noise(bank: RegimeBank, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """One Monte-Carlo draw for every stochastic quantity of every regime."""
    draws = {}
    for name in bank.weight_names():
        if name.endswith("/mu"):
            draws[name] = rng.standard_normal(bank.store[name].shape)
    if bank.use_masks:
        for l in bank.arch.hidden_layers:
            draws[mname(l, "u")] = _uniform(rng, bank.store[mname(l, "rho")].shape)
            draws[mname(l, "u_stick")] = _uniform(rng, bank.store[mname(l, "log_a")].shape)
    return draws


def effective_weights(params, bank: RegimeBank, mode: str = "eval", draws=None,
                      temperature: float = 0.5):
    """Sampled (train) or posterior-mean (eval) masked weights with a leading regime axis."""
    arch = bank.arch
    weights = {}
    for l in range(arch.n_layers):
        for kind in ("W", "b"):
            mu = params[wname(kind, l, "mu")]
            if mode == "train":
                std = ad.exp(ad.mul(params[wname(kind, l, "logvar")], 0.5))
                weights[f"{kind}{l}"] = ad.add(mu, ad.mul(std, draws[wname(kind, l, "mu")]))
            else:
                weights[f"{kind}{l}"] = mu
    masks = []
    if bank.use_masks:
        for l in arch.hidden_layers:
            rho, la, lb = (params[mname(l, w)] for w in ("rho", "log_a", "log_b"))
            if mode == "train":
                logit_h = mask_logits(rho, la, lb, draws[mname(l, "u_stick")])
                masks.append(relaxed_mask(logit_h, temperature, draws[mname(l, "u")]))
            else:
                masks.append((ad._val(mask_logits(rho, la, lb)) > 0).astype(float))
        weights = apply_mask(weights, masks, arch)
    return weights, masks


def regime_outputs(params, bank: RegimeBank, inputs, mode="eval", draws=None, temperature=0.5):
    weights, _ = effective_weights(params, bank, mode, draws, temperature)
    return network_forward(weights, np.asarray(inputs, dtype=float), bank.arch)


def output_loglik(outputs, targets, task: str, obs_logvar=None):
    """Per-row log-likelihood of targets given outputs; leading axes of ``outputs`` are kept."""
    if task == "forecast":
        logvar = 0.0 if obs_logvar is None else obs_logvar
        resid = ad.sub(targets, outputs)
        z = ad.mul(ad.mul(resid, resid), ad.exp(ad.neg(logvar)))
        return ad.mul(ad.sum_(ad.add(ad.add(z, logvar), LOG_2PI), axis=-1), -0.5)
    targets = np.asarray(targets, dtype=int)
    ls = ad.log_softmax(outputs, axis=-1)
    rows = np.arange(targets.shape[0])
    return ad.getitem(ls, (Ellipsis, rows, targets))


def log_emissions(params, bank: RegimeBank, inputs, targets, mode="eval", draws=None,
                  temperature=0.5):
    """log B of shape (T, K); ``draws`` may be a list for a multi-sample average."""
    obs_logvar = ad.expand_dims(params[OBS_LOGVAR], -2) if OBS_LOGVAR in params else None
    samples = draws if isinstance(draws, list) else [draws]
    if mode != "train":
        samples = [None]
    total = None
    for d in samples:
        out = regime_outputs(params, bank, inputs, mode, d, temperature)
        ll = output_loglik(out, targets, bank.arch.task, obs_logvar)
        total = ll if total is None else ad.add(total, ll)
    if len(samples) > 1:
        total = ad.mul(total, 1.0 / len(samples))
    return ad.swapaxes(total, 0, 1)


def structural_kl(params, anchors: dict, bank: RegimeBank):
    """Per-regime KL(current posterior || anchor): Gaussian weights + Bernoulli masks + Beta sticks."""
    K = bank.n_regimes
    total = np.zeros(K)
    for l in range(bank.arch.n_layers):
        for kind in ("W", "b"):
            mu, lv = wname(kind, l, "mu"), wname(kind, l, "logvar")
            terms = ad.kl_gaussian(params[mu], params[lv], anchors[mu], anchors[lv])
            total = ad.add(total, ad.sum_(ad.reshape(terms, (K, -1)), axis=1))
    if bank.use_masks:
        for l in bank.arch.hidden_layers:
            rho, la, lb = (mname(l, w) for w in ("rho", "log_a", "log_b"))
            logit_q = mask_logits(params[rho], params[la], params[lb])
            logit_p = mask_logits(anchors[rho], anchors[la], anchors[lb])
            bern = ad.kl_bernoulli_logits(logit_q, logit_p)
            total = ad.add(total, ad.sum_(ad.reshape(bern, (K, -1)), axis=1))
            beta = ad.kl_beta(ad.exp(params[la]), ad.exp(params[lb]),
                              np.exp(anchors[la]), np.exp(anchors[lb]))
            total = ad.add(total, ad.sum_(beta, axis=1))
    return total


# -- per-regime operations ----------------------------------------------------------------

def predict(bank: RegimeBank, regime: int, inputs, mode: str = "eval", rng=None,
            temperature: float = 0.5, draws=None) -> MaskedPrediction:
    """Prediction of one regime's subnetwork: sampled in training mode, posterior mean in eval mode."""
    bank._check_regime(regime)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[-1] != bank.arch.n_in:
        raise ContractError(f"input dimension {inputs.shape[-1]} != {bank.arch.n_in}")
    if mode == "train" and draws is None:
        draws = draw_noise(bank, rng if rng is not None else np.random.default_rng())
    params = {k: v[regime:regime + 1] for k, v in bank.store.values.items()
              if k.startswith("net/") or k.startswith("mask")}
    if draws is not None:
        draws = {k: v[regime:regime + 1] for k, v in draws.items()}
    weights, masks = effective_weights(params, bank, mode, draws, temperature)
    out = network_forward(weights, inputs, bank.arch)
    return MaskedPrediction(np.asarray(out)[0], [np.asarray(m)[0] for m in masks],
                            {k: np.asarray(v)[0] for k, v in weights.items()})


def emission_loglik(pred: MaskedPrediction | np.ndarray, target, task: str, obs_logvar=None):
    """Log-likelihood of ``target``: Gaussian for forecasting, softmax class probability otherwise.

    Returns a scalar for a single row and a per-row array for a batch.
    """
    out = pred.output if isinstance(pred, MaskedPrediction) else np.asarray(pred, dtype=float)
    single = out.ndim == 1
    out2 = out[None] if single else out
    if task == "forecast":
        tgt = np.asarray(target, dtype=float).reshape(out2.shape)
    else:
        tgt = np.atleast_1d(np.asarray(target, dtype=int))
        if tgt.shape[0] != out2.shape[0]:
            raise ContractError("one class label per output row required")
    ll = np.asarray(output_loglik(out2, tgt, task, obs_logvar))
    return float(ll[0]) if single else ll


def kl_structure(post: RegimePosterior, prior: RegimePosterior) -> float:
    """KL between two posteriors of the same regime (weights, masks and sticks)."""
    if post.regime != prior.regime:
        raise ContractError(f"regime mismatch: {post.regime} vs {prior.regime}")
    total = 0.0
    for key, mu in post.weights.means.items():
        total += float(np.sum(ad.kl_gaussian(mu, post.weights.log_variances[key],
                                             prior.weights.means[key], prior.weights.log_variances[key])))
    if post.masks is not None:
        for l in range(len(post.masks.rho)):
            lq = mask_logits(post.masks.rho[l], np.log(post.masks.stick_a[l]), np.log(post.masks.stick_b[l]))
            lp = mask_logits(prior.masks.rho[l], np.log(prior.masks.stick_a[l]), np.log(prior.masks.stick_b[l]))
            total += float(np.sum(ad.kl_bernoulli_logits(lq, lp)))
            total += float(np.sum(ad.kl_beta(post.masks.stick_a[l], post.masks.stick_b[l],
                                             prior.masks.stick_a[l], prior.masks.stick_b[l])))
    return max(total, 0.0)
