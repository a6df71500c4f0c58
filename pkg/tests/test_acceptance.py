"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest -v tests/test_acceptance.py`` or as a script with
``python3 tests/test_acceptance.py``. The statistical criteria train many models and take
tens of minutes on one CPU.
"""
from __future__ import annotations

import json
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import stats

sys.path.insert(0, str(Path(__file__).resolve().parent))

from test_adaptive import small_bank  # noqa: E402
from test_inference import brute_force, random_instance  # noqa: E402
from test_metrics import brute_accuracy  # noqa: E402
from test_training import tiny_problem  # noqa: E402

from regimeshift import autodiff as ad  # noqa: E402
from regimeshift.adaptive import OBS_LOGVAR, draw_noise, log_emissions, regime_outputs, structural_kl  # noqa: E402
from regimeshift.autodiff import ParameterStore, finite_diff_check  # noqa: E402
from regimeshift.cli import main  # noqa: E402
from regimeshift.data import GeneratorConfig, generate  # noqa: E402
from regimeshift.inference import forward_backward, forward_pass  # noqa: E402
from regimeshift.metrics import aligned_accuracy, ari, nmi  # noqa: E402
from regimeshift.pipeline import prepare, run_online, run_segmentation  # noqa: E402
from regimeshift.probability import (BetaParam, GaussianDiag, kl_bernoulli, kl_beta,  # noqa: E402
                                     kl_gaussian_diag)
from regimeshift.training import (TrainerConfig, TrainState, build_bank, carry_prior,  # noqa: E402
                                  elbo_loss, eval_posterior, train_chunk, train_stream)

SEEDS = range(10)
RESULTS: list[str] = []  # printed in the pytest terminal summary by conftest.py


def announce(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line, flush=True)


def check(number: int, passed: bool, detail: str) -> None:
    announce(number, passed, detail)
    assert passed, detail


# -- 1-4: exact oracles ---------------------------------------------------------------------

def test_criterion_01_forward_matches_enumeration():
    rng = np.random.default_rng(101)
    start, worst = time.perf_counter(), 0.0
    for _ in range(50):
        K, T = int(rng.choice([2, 3])), int(rng.integers(3, 9))
        log_A, log_init, log_B = random_instance(rng, K, T)
        _, ll = forward_pass((log_A, log_init), log_B)
        worst = max(worst, abs(ll - brute_force(log_A, log_init, log_B)[0]))
    elapsed = time.perf_counter() - start
    check(1, worst < 1e-10 and elapsed < 10.0,
          f"50 instances, max |error| {worst:.1e} (< 1e-10), {elapsed:.2f} s (< 10 s)")


def test_criterion_02_marginal_consistency():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        K, T = int(rng.integers(2, 5)), int(rng.integers(2, 13))
        log_A, log_init, log_B = random_instance(rng, K, T)
        res = forward_backward((log_A, log_init), log_B)
        errors = [res.marginals.sum(axis=1) - 1.0,
                  res.pairwise.sum(axis=(1, 2)) - 1.0,
                  res.pairwise.sum(axis=1) - res.marginals[:-1],
                  res.pairwise.sum(axis=2) - res.marginals[1:]]
        worst = max(worst, max(np.max(np.abs(e)) for e in errors))
    check(2, worst < 1e-10, f"100 instances, max identity violation {worst:.1e} (< 1e-10)")


def _gradient_programs(seed):
    """(name, program, store, names) for every differentiable operation at one seed."""
    rng = np.random.default_rng(seed)
    out = []
    for task, n_out in (("forecast", 2), ("classify", 3)):
        bank = small_bank(K=2, sizes=(2, 3, n_out), task=task, seed=seed, rho_init=0.3, init_logvar=-3.0)
        draws = draw_noise(bank, rng)
        x = rng.standard_normal((4, 2))
        y = rng.standard_normal((4, 2)) if task == "forecast" else rng.integers(0, 3, 4)
        names = bank.structural_names() + ([OBS_LOGVAR] if task == "forecast" else [])
        out.append((f"{task} emission log-likelihood",
                    lambda p, b=bank, x=x, y=y, d=draws: ad.sum_(log_emissions(p, b, x, y, "train", d, 0.7)),
                    ParameterStore(bank.store.snapshot()), names))
    bank = small_bank(K=2, seed=seed, rho_init=0.3, init_logvar=-3.0)
    draws = draw_noise(bank, rng)
    x = rng.standard_normal((4, 2))
    w = rng.standard_normal((2, 4, 2))
    out.append(("masked prediction",
                lambda p: ad.sum_(ad.mul(regime_outputs(p, bank, x, "train", draws, 0.7), w)),
                ParameterStore(bank.store.snapshot()), bank.structural_names()))
    kl_bank = small_bank(K=2, seed=seed, rho_init=0.3)
    for name in kl_bank.structural_names():
        kl_bank.anchors[name] = kl_bank.anchors[name] + rng.normal(0, 0.3, kl_bank.anchors[name].shape)
    out.append(("structural KL",
                lambda p: ad.sum_(structural_kl(p, kl_bank.anchors, kl_bank)),
                ParameterStore(kl_bank.store.snapshot()), kl_bank.structural_names()))
    pm, plv, lp = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(4)
    pa, pb = rng.uniform(0.5, 3, 4), rng.uniform(0.5, 3, 4)
    out.append(("Gaussian, Bernoulli and Beta KL primitives",
                lambda p: ad.add(ad.add(ad.sum_(ad.kl_gaussian(p["mu"], p["lv"], pm, plv)),
                                        ad.sum_(ad.kl_bernoulli_logits(p["lq"], lp))),
                                 ad.sum_(ad.kl_beta(ad.exp(p["la"]), ad.exp(p["lb"]), pa, pb))),
                ParameterStore({k: rng.standard_normal(4) for k in ("mu", "lv", "lq", "la", "lb")}),
                None))
    tbank, chunk, trng = tiny_problem(seed)
    assert tbank.store.num_parameters() <= 50
    tdraws = [draw_noise(tbank, trng)]
    post = eval_posterior(tbank, chunk)
    out.append((f"full ELBO ({tbank.store.num_parameters()} parameters)",
                lambda p: elbo_loss(p, tbank, chunk, tdraws, 0.7, 0.8, posterior=post),
                ParameterStore(tbank.store.snapshot()), None))
    return out


def test_criterion_03_gradient_suite():
    worst, failures = {}, []
    for seed in range(20):
        for name, program, store, names in _gradient_programs(seed):
            rep = finite_diff_check(program, store, tolerance=1e-4, names=names)
            worst[name] = max(worst.get(name, 0.0), rep.max_error)
            if not rep.passed:
                failures.append((name, seed, rep.flagged))
    detail = "; ".join(f"{k} {v:.1e}" for k, v in worst.items())
    check(3, not failures, f"20 seeds each, max relative error: {detail} (< 1e-4)"
          + (f"; failures {failures}" if failures else ""))


def test_criterion_04_kl_closed_forms_vs_monte_carlo():
    rng = np.random.default_rng(104)
    n = 10 ** 6
    worst = {"Gaussian": 0.0, "Bernoulli": 0.0, "Beta": 0.0}
    for _ in range(10):
        mq, mp = rng.uniform(-1, 1, 2)
        vq, vp = rng.uniform(0.5, 2.0, 2)
        x = rng.normal(mq, np.sqrt(vq), n)
        mc = np.mean(stats.norm.logpdf(x, mq, np.sqrt(vq)) - stats.norm.logpdf(x, mp, np.sqrt(vp)))
        exact = kl_gaussian_diag(GaussianDiag.from_variance(np.array([mq]), np.array([vq])),
                                 GaussianDiag.from_variance(np.array([mp]), np.array([vp])))
        worst["Gaussian"] = max(worst["Gaussian"], abs(mc - exact))

        q, p = rng.uniform(0.1, 0.9, 2)
        b = rng.random(n) < q
        mc = np.mean(np.where(b, np.log(q / p), np.log((1 - q) / (1 - p))))
        worst["Bernoulli"] = max(worst["Bernoulli"], abs(mc - kl_bernoulli(q, p)))

        aq, bq, ap, bp = rng.uniform(0.5, 4.0, 4)
        x = rng.beta(aq, bq, n)
        mc = np.mean(stats.beta.logpdf(x, aq, bq) - stats.beta.logpdf(x, ap, bp))
        worst["Beta"] = max(worst["Beta"], abs(mc - kl_beta(BetaParam(aq, bq), BetaParam(ap, bp))))
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    check(4, max(worst.values()) < 1e-2, f"10 pairs each, 10^6 samples, max |MC - closed form|: {detail} (< 1e-2)")


# -- 5-9: learned behaviour -----------------------------------------------------------------

def test_criterion_05_three_mode_segmentation():
    scores, slowest = [], 0.0
    for seed in SEEDS:
        ds = generate("three_mode", GeneratorConfig(T=1000, noise=0.05, mean_duration=100, seed=seed))
        start = time.perf_counter()
        m = run_segmentation(ds, TrainerConfig(seed=seed)).metrics
        slowest = max(slowest, time.perf_counter() - start)
        scores.append((m.accuracy, m.nmi, m.ari))
    acc, nm, ar = np.mean(scores, axis=0)
    passed = acc >= 0.90 and nm >= 0.75 and ar >= 0.80 and slowest <= 300
    check(5, passed, f"10 seeds, accuracy {acc:.3f} (>= 0.90), NMI {nm:.3f} (>= 0.75), "
                     f"ARI {ar:.3f} (>= 0.80), slowest seed {slowest:.0f} s (<= 300 s)")


def test_criterion_06_bouncing_ball_segmentation():
    accs = []
    for seed in SEEDS:
        ds = generate("bouncing_ball", GeneratorConfig(T=1000, n_modes=2, noise=0.02, velocity=0.05, seed=seed))
        config = TrainerConfig(seed=seed, n_regimes=2, residual_proposals=True, birth_penalty=15.0)
        accs.append(run_segmentation(ds, config).metrics.accuracy)
    check(6, np.mean(accs) >= 0.90, f"10 seeds, mean accuracy {np.mean(accs):.3f} (>= 0.90)")


def test_criterion_07_masked_regimes_beat_single_regime_ablation():
    wins, pairs = 0, []
    for seed in SEEDS:
        ds = generate("three_mode", GeneratorConfig(T=1000, seed=seed))
        full = run_online(ds, "forecast", TrainerConfig(seed=seed)).metrics.rmse
        ablated = run_online(ds, "forecast", TrainerConfig(seed=seed, n_regimes=1, use_masks=False)).metrics.rmse
        wins += full < ablated
        pairs.append(f"{full:.3f}/{ablated:.3f}")
    check(7, wins >= 8, f"lower RMSE on {wins}/10 seeds (>= 8); full/ablated {' '.join(pairs)}")


def test_criterion_08_continual_kl_contract():
    ds = generate("three_mode", GeneratorConfig(T=1000, seed=0))
    config = TrainerConfig(seed=0)
    stream, chunks, _ = prepare(ds, "segment", config)
    bank = build_bank(config, config.architecture(ds.n_features, "forecast"),
                      n_summary=stream.summaries.shape[1])
    state = TrainState.fresh(config)
    after_carry, means = [], []
    for i in range(5):
        carry_prior(bank)
        kl = np.asarray(structural_kl(bank.store.values, bank.anchors, bank))
        after_carry.append(float(kl[bank.materialized].sum()))
        rep = train_chunk(bank, chunks[0], state, i)
        means.append(float(np.mean([s.kl for s in rep.steps])))
    ratio = means[-1] / means[0]
    passed = all(v == 0.0 for v in after_carry) and ratio < 0.10
    check(8, passed, f"KL of materialized regimes after each carry {after_carry} (exactly 0); "
                     f"final/first chunk mean KL {ratio:.4f} (< 0.10)")


def test_criterion_09_sparsity_control():
    # 500 steps: five chunks of 100 steps; one regime so every run measures the same subnetwork
    alphas = (0.5, 1.0, 2.0, 5.0)
    density = {}
    for alpha in alphas:
        d = []
        for seed in range(30):
            ds = generate("three_mode", GeneratorConfig(T=1000, seed=seed))
            config = TrainerConfig(seed=seed, alpha_ibp=alpha, n_regimes=1, steps=100)
            _, chunks, _ = prepare(ds, "segment", config)
            bank, _ = train_stream(chunks[:5], config, arch=config.architecture(ds.n_features, "forecast"))
            d.append(float(bank.mask_density().mean()))
        density[alpha] = float(np.mean(d))
    values = [density[a] for a in alphas]
    passed = all(b >= a for a, b in zip(values, values[1:]))
    check(9, passed, "mean evaluation-mask density over 30 seeds: "
          + ", ".join(f"alpha {a:g} -> {density[a]:.3f}" for a in alphas) + " (non-decreasing)")


# -- 10-11: metrics and CLI -----------------------------------------------------------------

def test_criterion_10_metric_oracles():
    rng = np.random.default_rng(110)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 40))
        pred, truth = rng.integers(0, int(rng.integers(1, 7)), n), rng.integers(0, int(rng.integers(1, 7)), n)
        worst = max(worst, abs(aligned_accuracy(pred, truth) - brute_accuracy(pred, truth)))
    a, b = [0, 0, 1, 1], [0, 1, 0, 1]
    passed = worst < 1e-12 and nmi(a, b) == 0.0 and ari(a, b) == -0.5
    check(10, passed, f"100 instances, max |Hungarian - permutation search| {worst:.1e}; "
                      f"NMI {nmi(a, b)!r} (0), ARI {ari(a, b)!r} (-0.5)")


def _tree(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_cli_determinism():
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        config = {"trainer": {"steps": 20, "proposal_steps": 5}, "generator_config": {"T": 150}}
        (tmp / "c.json").write_text(json.dumps(config))
        runs = {
            "generate": ["generate", "--generator", "three_mode"],
            "train": ["train", "--generator", "three_mode"],
            "segment": ["segment", "--generator", "three_mode"],
            "forecast": ["forecast", "--generator", "three_mode"],
            "classify": ["classify", "--generator", "rotating_boundary"],
            "multi-seed segment": ["segment", "--generator", "three_mode", "--seed", "0-1"],
        }
        for name, args in runs.items():
            trees = []
            for rep in ("a", "b"):
                out = tmp / name.replace(" ", "-") / rep
                if "--seed" not in args:
                    args = args + ["--seed", "7"]
                assert main(args + ["--config", str(tmp / "c.json"), "--out", str(out)]) == 0
                trees.append(_tree(out))
            if not trees[0] or trees[0] != trees[1]:
                differing.append(name)
        reports = []
        for _ in range(2):
            forecast = str(tmp / "forecast" / "a" / "forecast.csv")
            proc = subprocess.run([sys.executable, "-m", "regimeshift", "eval", "--task", "forecast",
                                   "--pred", forecast, "--truth", forecast],
                                  capture_output=True, check=True)
            reports.append(proc.stdout)
        if reports[0] != reports[1]:
            differing.append("eval")
    check(11, not differing, f"{len(runs) + 1} commands rerun with the same config and seed; "
          + (f"differing outputs: {differing}" if differing else "all outputs byte-identical"))


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
