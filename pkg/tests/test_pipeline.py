from __future__ import annotations

import numpy as np
import pytest

from regimeshift.adaptive import RegimeBank
from regimeshift.data import GeneratorConfig, SequenceDataset, generate
from regimeshift.inference import map_segmentation
from regimeshift.pipeline import run_online, run_segmentation, segment, snapshot_stream
from regimeshift.probability import ContractError
from regimeshift.training import TrainerConfig

FAST = dict(steps=30, proposal_steps=10)


@pytest.fixture(scope="module")
def three_mode():
    return generate("three_mode", GeneratorConfig(T=250, seed=0))


@pytest.fixture(scope="module")
def segmented(three_mode):
    return run_segmentation(three_mode, TrainerConfig(seed=0, **FAST))


def test_segmentation_result(segmented, three_mode):
    res = segmented
    assert len(res.reports) == 5
    assert res.posterior.marginals.shape == (249, 3)
    assert set(res.metrics.to_dict()) == {"accuracy", "nmi", "ari", "seed"}
    np.testing.assert_array_equal(res.stream.regimes, three_mode.regimes[1:])


def test_single_regime_segments_to_zeros(three_mode):
    res = run_segmentation(three_mode.slice(0, 120), TrainerConfig(seed=0, n_regimes=1, steps=10))
    np.testing.assert_array_equal(map_segmentation(res.posterior), 0)


def test_snapshot_round_trip_reproduces_segmentation(segmented, three_mode):
    bank = RegimeBank.from_json(segmented.bank.to_json())
    post = segment(bank, snapshot_stream(bank, three_mode))
    np.testing.assert_array_equal(post.marginals, segmented.posterior.marginals)


def test_snapshot_dimension_mismatch_names_both(segmented):
    ds = SequenceDataset(np.zeros((20, 3)))
    with pytest.raises(ContractError, match="3 features"):
        snapshot_stream(segmented.bank, ds)


def test_online_forecast(three_mode):
    res = run_online(three_mode, "forecast", TrainerConfig(seed=0, **FAST))
    assert res.predictions.shape == res.extra["targets"].shape == (249, 2)
    assert res.metrics.rmse > 0 and res.metrics.mae > 0
    # predictions are made before training on a chunk, so the first chunk uses the initial bank
    assert np.isfinite(res.predictions).all()


def test_online_classify():
    ds = generate("rotating_boundary", GeneratorConfig(T=200, seed=1))
    res = run_online(ds, "classify", TrainerConfig(seed=1, **FAST))
    assert res.predictions.shape == (200,)
    assert set(np.unique(res.predictions)) <= {0, 1}
    assert len(res.metrics.timeline) == 200 - 50 + 1
    with pytest.raises(ContractError):
        run_online(ds, "segment", TrainerConfig())
