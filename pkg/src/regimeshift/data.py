"""Synthetic regime-switching generators, CSV ingestion, windowing and normalization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .probability import ContractError

THREE_MODE_RATES = (0.10, -0.05, 0.25)
SCALE_FLOOR = 1e-8


class DataFormatError(ValueError):
    pass


class EmptyDatasetError(DataFormatError):
    pass


@dataclass
class SequenceDataset:
    X: np.ndarray
    labels: np.ndarray | None = None
    regimes: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        T = self.X.shape[0]
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise ContractError("one feature name per column required")
        for name in ("labels", "regimes"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=int)
                if v.shape != (T,):
                    raise ContractError(f"{name} must have length {T}")
                if v.size and v.min() < 0:
                    raise ContractError(f"{name} must be non-negative")
                setattr(self, name, v)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def slice(self, start: int, stop: int) -> "SequenceDataset":
        pick = lambda v: None if v is None else v[start:stop]
        return SequenceDataset(self.X[start:stop], pick(self.labels), pick(self.regimes),
                               list(self.feature_names))


@dataclass
class GeneratorConfig:
    T: int = 1000
    n_modes: int = 3
    mean_duration: float = 100.0
    noise: float = 0.05
    seed: int = 0
    velocity: float = 0.05

    def __post_init__(self):
        if self.T < 1 or self.mean_duration < 1 or self.noise < 0:
            raise ContractError("need T >= 1, mean_duration >= 1 and noise >= 0")


def _mode_sequence(rng, T, n_modes, mean_duration):
    """Geometric segment durations; each new segment switches to a different mode."""
    p = 1.0 / mean_duration
    modes = np.empty(T, dtype=int)
    t, mode = 0, int(rng.integers(n_modes))
    while t < T:
        d = int(rng.geometric(p))
        modes[t:t + d] = mode
        t += d
        if n_modes > 1:
            mode = int((mode + rng.integers(1, n_modes)) % n_modes)
    return modes


def gen_three_mode(config: GeneratorConfig, rates=THREE_MODE_RATES) -> SequenceDataset:
    """Planar rotations switching between three angular velocities.

    A unit-norm latent state is rotated by the current mode's angle each step;
    observations add isotropic Gaussian noise of the configured scale.
    """
    if config.n_modes != 3 or len(rates) != 3:
        raise ContractError("the three-mode system has exactly three modes")
    rng = np.random.default_rng(config.seed)
    modes = _mode_sequence(rng, config.T, 3, config.mean_duration)
    theta = rng.uniform(0, 2 * np.pi)
    z = np.array([np.cos(theta), np.sin(theta)])
    latent = np.empty((config.T, 2))
    latent[0] = z
    for t in range(1, config.T):
        w = rates[modes[t]]
        c, s = np.cos(w), np.sin(w)
        z = np.array([c * z[0] - s * z[1], s * z[0] + c * z[1]])
        latent[t] = z
    X = latent + config.noise * rng.standard_normal(latent.shape)
    return SequenceDataset(X, regimes=modes, feature_names=["x0", "x1"])


def gen_bouncing_ball(config: GeneratorConfig) -> SequenceDataset:
    """1-D ball moving at constant speed between walls at 0 and 1; regime 0 moves up, 1 moves down."""
    if config.n_modes != 2:
        raise ContractError("the bouncing ball has exactly two modes")
    rng = np.random.default_rng(config.seed)
    v = config.velocity
    pos = rng.uniform(0, 1)
    direction = 1 if rng.random() < 0.5 else -1
    positions = np.empty(config.T)
    regimes = np.empty(config.T, dtype=int)
    positions[0], regimes[0] = pos, 0 if direction > 0 else 1
    for t in range(1, config.T):
        pos += direction * v
        if pos > 1.0:
            pos, direction = 2.0 - pos, -1
        elif pos < 0.0:
            pos, direction = -pos, 1
        positions[t] = pos
        regimes[t] = 0 if direction > 0 else 1
    X = positions + config.noise * rng.standard_normal(config.T)
    return SequenceDataset(X[:, None], regimes=regimes, feature_names=["x0"])


def gen_rotating_boundary(config: GeneratorConfig) -> SequenceDataset:
    """Two-class stream: x ~ N(0, I_2), label = [w_mode . x + noise > 0] with evenly spread w_mode."""
    rng = np.random.default_rng(config.seed)
    modes = _mode_sequence(rng, config.T, config.n_modes, config.mean_duration)
    angles = 2 * np.pi * np.arange(config.n_modes) / config.n_modes
    W = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    X = rng.standard_normal((config.T, 2))
    margin = np.sum(X * W[modes], axis=1) + config.noise * rng.standard_normal(config.T)
    return SequenceDataset(X, labels=(margin > 0).astype(int), regimes=modes, feature_names=["x0", "x1"])


GENERATORS = {
    "three_mode": gen_three_mode,
    "bouncing_ball": gen_bouncing_ball,
    "rotating_boundary": gen_rotating_boundary,
}


def generate(name: str, config: GeneratorConfig) -> SequenceDataset:
    if name not in GENERATORS:
        raise ContractError(f"unknown generator '{name}'; valid names: {', '.join(sorted(GENERATORS))}")
    return GENERATORS[name](config)


# -- CSV ------------------------------------------------------------------------------

@dataclass
class CsvSchema:
    """Column roles. ``features=None`` takes every column not claimed as label or regime."""

    features: list[str] | None = None
    label: str | None = "label"
    regime: str | None = "regime"


def load_csv(path, schema: CsvSchema | None = None) -> SequenceDataset:
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path}: empty file") from None
        label = schema.label if schema.label in header else None
        regime = schema.regime if schema.regime in header else None
        for role, col, default in (("label", schema.label, "label"), ("regime", schema.regime, "regime")):
            if col is not None and col != default and col not in header:
                raise DataFormatError(f"{path}: unknown {role} column '{col}'")
        if schema.features is None:
            features = [h for h in header if h not in (label, regime)]
        else:
            features = list(schema.features)
            for name in features:
                if name not in header:
                    raise DataFormatError(f"{path}: unknown column '{name}'")
        if not features:
            raise DataFormatError(f"{path}: no feature columns")
        fidx = [header.index(f) for f in features]
        lidx = header.index(label) if label else None
        ridx = header.index(regime) if regime else None
        X, L, R = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(row[i]) for i in fidx]
                if any(not math.isfinite(v) for v in vals):
                    raise ValueError("missing or non-finite value")
                if lidx is not None:
                    L.append(int(row[lidx]))
                if ridx is not None:
                    R.append(int(row[ridx]))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed row ({exc})") from None
            X.append(vals)
    if not X:
        raise EmptyDatasetError(f"{path}: no data rows")
    return SequenceDataset(np.array(X), np.array(L) if lidx is not None else None,
                           np.array(R) if ridx is not None else None, features)


def save_csv(ds: SequenceDataset, path) -> Path:
    path = Path(path)
    header = list(ds.feature_names)
    if ds.labels is not None:
        header.append("label")
    if ds.regimes is not None:
        header.append("regime")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(len(ds)):
            row = [repr(float(v)) for v in ds.X[t]]
            if ds.labels is not None:
                row.append(int(ds.labels[t]))
            if ds.regimes is not None:
                row.append(int(ds.regimes[t]))
            w.writerow(row)
    return path


# -- streaming ------------------------------------------------------------------------

def window(ds, length: int, stride: int | None = None) -> list:
    """Contiguous windows of ``length``; works on anything with ``len`` and ``slice``.

    Full windows are taken every ``stride`` steps. For non-overlapping strides
    a shorter tail window is kept when it has at least two steps; a stream
    shorter than ``length`` yields one window.
    """
    if length < 2:
        raise ContractError("window length must be at least 2")
    stride = length if stride is None else stride
    if stride < 1:
        raise ContractError("stride must be positive")
    T = len(ds)
    if T < length:
        return [ds.slice(0, T)] if T >= 2 else []
    starts = list(range(0, T - length + 1, stride))
    out = [ds.slice(s, s + length) for s in starts]
    tail = starts[-1] + stride
    if stride >= length and tail < T and T - tail >= 2:
        out.append(ds.slice(tail, T))
    return out


@dataclass
class Normalization:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def invert(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v).hex() for v in self.mean], "scale": [float(v).hex() for v in self.scale]}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(np.array([float.fromhex(v) for v in d["mean"]]),
                   np.array([float.fromhex(v) for v in d["scale"]]))


def normalize(ds: SequenceDataset, first_chunk: int = 50) -> tuple[SequenceDataset, Normalization]:
    """Z-score every feature with statistics from the first ``first_chunk`` rows only."""
    if len(ds) < 2:
        raise ContractError("normalization needs at least two rows")
    head = ds.X[:max(2, min(first_chunk, len(ds)))]
    rec = Normalization(head.mean(axis=0), np.maximum(head.std(axis=0), SCALE_FLOOR))
    return replace(ds, X=rec.apply(ds.X)), rec


def denormalize(ds: SequenceDataset, rec: Normalization) -> SequenceDataset:
    return replace(ds, X=rec.invert(ds.X))


@dataclass
class Chunk:
    """Supervised view of a stretch of the stream.

    ``summaries[i]`` describes the observation preceding example i + 1 and
    feeds the transition network.
    """

    inputs: np.ndarray
    targets: np.ndarray
    summaries: np.ndarray
    regimes: np.ndarray | None = None
    offset: int = 0

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def slice(self, start: int, stop: int) -> "Chunk":
        return Chunk(self.inputs[start:stop], self.targets[start:stop],
                     self.summaries[start:max(start, stop - 1)],
                     None if self.regimes is None else self.regimes[start:stop], self.offset + start)


def make_examples(ds: SequenceDataset, task: str, lag: int = 1) -> Chunk:
    """Turn a dataset into one supervised stream.

    forecast: input = the previous ``lag`` observations (flattened), target = current observation.
    classify: input = current observation, target = its class label.
    """
    n = ds.n_features
    if task == "forecast":
        if len(ds) <= lag:
            raise ContractError("sequence too short for the forecasting lag")
        T = len(ds) - lag
        inputs = np.stack([ds.X[t:t + lag].ravel() for t in range(T)])
        targets = ds.X[lag:]
        summaries = inputs[1:, -n:]
        regimes = None if ds.regimes is None else ds.regimes[lag:]
        return Chunk(inputs, targets, summaries, regimes, lag)
    if task == "classify":
        if ds.labels is None:
            raise ContractError("classification needs a label column")
        return Chunk(ds.X.copy(), ds.labels.copy(), ds.X[:-1].copy(), ds.regimes, 0)
    raise ContractError(f"unknown task '{task}'")
