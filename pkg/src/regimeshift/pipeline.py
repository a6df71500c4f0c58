"""End-to-end runs: streaming training, full-sequence segmentation, test-then-train forecasting
and classification."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adaptive import RegimeBank, log_emissions, regime_outputs
from .data import Chunk, Normalization, SequenceDataset, make_examples, normalize, window
from .inference import (ForwardBackwardResult, backward_smooth, map_segmentation,
                        transition_log_matrices, uniform_log_init)
from .metrics import MetricReport, forecast_scores, timeline_accuracy
from .probability import ContractError, softmax
from .training import (TrainerConfig, TrainingReport, TrainState, build_bank, train_chunk,
                       train_stream)


def _trans(bank: RegimeBank):
    return {k[len("trans/"):]: v for k, v in bank.store.values.items() if k.startswith("trans/")}


def chunk_log_probs(bank: RegimeBank, chunk: Chunk) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation-mode (log_A, log_B) for a chunk.

    Once any regime is materialized, the unmaterialized ones are excluded.
    """
    log_B = log_emissions(bank.store.values, bank, chunk.inputs, chunk.targets, "eval")
    if bank.materialized.any():
        log_B = log_B + bank.exclusion_offset(0)
    log_A = transition_log_matrices(_trans(bank), chunk.summaries, bank.n_regimes)
    return np.asarray(log_A), np.asarray(log_B)


def segment(bank: RegimeBank, chunk: Chunk) -> ForwardBackwardResult:
    """Smoothed regime posterior over a whole stream with the bank's posterior-mean subnetworks."""
    if chunk.inputs.shape[1] != bank.arch.n_in:
        raise ContractError(f"data has input dimension {chunk.inputs.shape[1]}, "
                            f"snapshot expects {bank.arch.n_in}")
    log_A, log_B = chunk_log_probs(bank, chunk)
    return backward_smooth((log_A, uniform_log_init(bank.n_regimes)), log_B)


@dataclass
class RunResult:
    bank: RegimeBank
    reports: list[TrainingReport]
    stream: Chunk
    normalization: Normalization
    posterior: ForwardBackwardResult | None = None
    predictions: np.ndarray | None = None
    metrics: MetricReport | None = None
    extra: dict = field(default_factory=dict)


def prepare(ds: SequenceDataset, task: str, config: TrainerConfig):
    norm_ds, rec = normalize(ds, config.chunk_length)
    stream = make_examples(norm_ds, "forecast" if task == "segment" else task, config.lag)
    return stream, window(stream, config.chunk_length), rec


def _architecture(ds: SequenceDataset, task: str, config: TrainerConfig):
    if task == "classify":
        return config.architecture(ds.n_features, "classify", int(ds.labels.max()) + 1)
    return config.architecture(ds.n_features, "forecast")


def run_segmentation(ds: SequenceDataset, config: TrainerConfig, on_chunk=None) -> RunResult:
    """Stream-train on ``ds`` and segment the whole sequence with the final bank."""
    stream, chunks, rec = prepare(ds, "segment", config)
    bank, reports = train_stream(chunks, config, arch=_architecture(ds, "segment", config),
                                 on_chunk=on_chunk)
    bank.meta["normalization"] = rec.to_dict()
    post = segment(bank, stream)
    result = RunResult(bank, reports, stream, rec, posterior=post)
    if stream.regimes is not None:
        result.metrics = MetricReport.segmentation(map_segmentation(post), stream.regimes, seed=config.seed)
    return result


def _filter_predict(bank: RegimeBank, chunk: Chunk, prior: np.ndarray):
    """Per-step predictive regime probabilities p(s_t | past) and the updated filter state."""
    log_A, log_B = chunk_log_probs(bank, chunk)
    T, K = log_B.shape
    pred = np.empty((T, K))
    p = filt = prior
    for t in range(T):
        if t > 0:
            p = np.exp(log_A[t - 1]) @ filt
        pred[t] = p
        w = np.log(np.maximum(p, 1e-300)) + log_B[t]
        filt = np.exp(w - w.max())
        filt /= filt.sum()
    return pred, filt


def run_online(ds: SequenceDataset, task: str, config: TrainerConfig, on_chunk=None) -> RunResult:
    """Test-then-train: every chunk is predicted with the current bank before it is trained on.

    Forecasts mix regime predictions by the filtered predictive regime probabilities;
    classification takes the argmax of the mixed class probabilities.
    """
    if task not in ("forecast", "classify"):
        raise ContractError(f"unknown online task '{task}'")
    stream, chunks, rec = prepare(ds, task, config)
    arch = _architecture(ds, task, config)
    n_reg = config.n_regimes
    bank = build_bank(config, arch, n_summary=stream.summaries.shape[1], n_regimes=n_reg)
    state = TrainState.fresh(config)
    carry = np.full(n_reg, 1.0 / n_reg)
    preds, reports = [], []
    for i, chunk in enumerate(chunks):
        probs, carry = _filter_predict(bank, chunk, carry)
        out = np.asarray(regime_outputs(bank.store.values, bank, chunk.inputs, "eval"))  # (K, T, n)
        if task == "forecast":
            preds.append(np.einsum("tk,ktn->tn", probs, out))
        else:
            cls_probs = np.einsum("tk,ktc->tc", probs, softmax(out, axis=-1))
            preds.append(np.argmax(cls_probs, axis=1))
        rep = train_chunk(bank, chunk, state, i)
        reports.append(rep)
        if on_chunk is not None:
            on_chunk(rep)
    bank.meta["normalization"] = rec.to_dict()
    predictions = np.concatenate(preds)
    n = len(predictions)
    targets = stream.targets[:n]
    result = RunResult(bank, reports, stream, rec, predictions=predictions)
    if task == "forecast":
        pred_raw, tgt_raw = rec.invert(predictions), rec.invert(targets)
        rmse, mae = forecast_scores(pred_raw, tgt_raw)
        result.predictions = pred_raw
        result.extra["targets"] = tgt_raw
        result.metrics = MetricReport(rmse=rmse, mae=mae, seed=config.seed)
    else:
        tl = timeline_accuracy(predictions, targets, min(config.chunk_length, n))
        result.extra["targets"] = targets
        result.metrics = MetricReport(accuracy=float(np.mean(predictions == targets)),
                                      timeline=tl.tolist(), seed=config.seed)
    return result


def snapshot_stream(bank: RegimeBank, ds: SequenceDataset) -> Chunk:
    """The forecasting stream of ``ds`` normalized with the statistics stored in ``bank``."""
    if ds.n_features == 0 or bank.arch.n_in % ds.n_features:
        raise ContractError(f"data has {ds.n_features} features, snapshot expects a multiple "
                            f"dividing {bank.arch.n_in}")
    lag = bank.arch.n_in // ds.n_features
    if "normalization" in bank.meta:
        rec = Normalization.from_dict(bank.meta["normalization"])
        if rec.mean.size != ds.n_features:
            raise ContractError(f"data has {ds.n_features} features, snapshot expects {rec.mean.size}")
        ds = replace(ds, X=rec.apply(ds.X))
    return make_examples(ds, "forecast", lag)
