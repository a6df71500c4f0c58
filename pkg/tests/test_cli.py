from __future__ import annotations

import json

import pytest

from regimeshift.cli import RunConfig, UsageError, main, parse_seeds

FAST = {"trainer": {"steps": 20, "proposal_steps": 5}}


def write_config(path, **extra):
    path.write_text(json.dumps({**FAST, **extra}))
    return str(path)


def read_tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_parse_seeds():
    assert parse_seeds("3") == [3]
    assert parse_seeds("0,2,5") == [0, 2, 5]
    assert parse_seeds("1-3") == [1, 2, 3]
    with pytest.raises(UsageError):
        parse_seeds("a")


def test_run_config_validation():
    with pytest.raises(UsageError, match="exactly one data source"):
        RunConfig()
    with pytest.raises(UsageError, match="exactly one data source"):
        RunConfig(generator="three_mode", csv="x.csv")
    with pytest.raises(UsageError, match="three_mode"):
        RunConfig(generator="nope")
    with pytest.raises(UsageError, match="unknown run config fields: extra"):
        RunConfig.from_dict({"generator": "three_mode", "extra": 1})


def test_generate(tmp_path, capsys):
    assert main(["generate", "--generator", "three_mode", "-T", "1000", "--out", str(tmp_path / "a")]) == 0
    lines = (tmp_path / "a" / "data.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,regime" and len(lines) == 1001
    assert capsys.readouterr().out.strip().endswith("data.csv")
    main(["generate", "--generator", "three_mode", "-T", "1000", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "data.csv").read_bytes() == (tmp_path / "b" / "data.csv").read_bytes()


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["generate", "--generator", "nope"]) == 1
    assert "three_mode" in capsys.readouterr().err
    assert main(["train", "--csv", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 1
    assert "missing.csv" in capsys.readouterr().err
    assert not (tmp_path / "o" / "report.jsonl").exists()
    bad = tmp_path / "bad.json"
    bad.write_text('{"trainer": {"lrr": 1}, "generator": "three_mode"}')
    assert main(["train", "--config", str(bad)]) == 1
    assert "lrr" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad)]) == 1
    assert ":1:" in capsys.readouterr().err
    assert main(["bogus"]) == 1


def test_train_segment_snapshot(tmp_path):
    cfg = write_config(tmp_path / "c.json", generator="three_mode", generator_config={"T": 200})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    reports = (tmp_path / "t" / "report.jsonl").read_text().splitlines()
    assert len(reports) == 4 and json.loads(reports[0])["chunk"] == 0
    bank = json.loads((tmp_path / "t" / "bank.json").read_text())
    assert "normalization" in bank["meta"] and bank["meta"]["trainer"]["steps"] == 20
    out = tmp_path / "s"
    assert main(["segment", "--config", cfg, "--snapshot", str(tmp_path / "t" / "bank.json"),
                 "--out", str(out)]) == 0
    rows = (out / "segmentation.csv").read_text().splitlines()
    assert rows[0] == "t,regime,p0,p1,p2" and len(rows) == 200
    assert set(json.loads((out / "metrics.json").read_text())) == {"accuracy", "nmi", "ari", "seed"}


def test_segment_without_truth_omits_metrics(tmp_path):
    main(["generate", "--generator", "three_mode", "-T", "120", "--out", str(tmp_path / "g")])
    text = (tmp_path / "g" / "data.csv").read_text().splitlines()
    (tmp_path / "plain.csv").write_text("\n".join(",".join(r.split(",")[:2]) for r in text) + "\n")
    cfg = write_config(tmp_path / "c.json", csv=str(tmp_path / "plain.csv"))
    assert main(["segment", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "segmentation.csv").exists()
    assert not (tmp_path / "s" / "metrics.json").exists()


def test_snapshot_dimension_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", generator="three_mode", generator_config={"T": 120})
    main(["train", "--config", cfg, "--out", str(tmp_path / "t")])
    (tmp_path / "one.csv").write_text("a\n" + "\n".join(str(i * 0.1) for i in range(30)) + "\n")
    assert main(["segment", "--csv", str(tmp_path / "one.csv"), "--snapshot",
                 str(tmp_path / "t" / "bank.json"), "--out", str(tmp_path / "s")]) == 1
    assert "expects" in capsys.readouterr().err


def test_forecast_and_classify_outputs(tmp_path):
    cfg = write_config(tmp_path / "c.json", generator_config={"T": 150})
    assert main(["forecast", "--config", cfg, "--generator", "three_mode", "--out", str(tmp_path / "f")]) == 0
    rows = (tmp_path / "f" / "forecast.csv").read_text().splitlines()
    assert rows[0] == "t,pred_x0,pred_x1,true_x0,true_x1" and len(rows) == 150
    assert set(json.loads((tmp_path / "f" / "metrics.json").read_text())) == {"rmse", "mae", "seed"}
    assert main(["classify", "--config", cfg, "--generator", "rotating_boundary",
                 "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "predictions.csv").read_text().startswith("t,pred,label\n")
    assert len((tmp_path / "c" / "timeline.csv").read_text().splitlines()) == 150 - 50 + 2
    assert "accuracy" in json.loads((tmp_path / "c" / "metrics.json").read_text())


def test_eval_examples(tmp_path, capsys):
    main(["generate", "--generator", "three_mode", "-T", "60", "--out", str(tmp_path)])
    data = tmp_path / "data.csv"
    capsys.readouterr()
    assert main(["eval", "--task", "segment", "--pred", str(data), "--truth", str(data)]) == 0
    assert json.loads(capsys.readouterr().out)["accuracy"] == 1.0
    lines = data.read_text().splitlines()
    shifted = [lines[0]] + [",".join([repr(float(v) + 1) for v in r.split(",")[:2]] + [r.split(",")[2]])
                            for r in lines[1:]]
    (tmp_path / "shift.csv").write_text("\n".join(shifted) + "\n")
    assert main(["eval", "--task", "forecast", "--pred", str(tmp_path / "shift.csv"),
                 "--truth", str(data)]) == 0
    assert json.loads(capsys.readouterr().out)["rmse"] == pytest.approx(1.0)
    (tmp_path / "short.csv").write_text("\n".join(lines[:11]) + "\n")
    assert main(["eval", "--task", "segment", "--pred", str(data), "--truth", str(tmp_path / "short.csv")]) == 1
    err = capsys.readouterr().err
    assert "60" in err and "10" in err
    (tmp_path / "broken.csv").write_text(lines[0] + "\n" + lines[1] + "\n0.1,x,0\n")
    (tmp_path / "two.csv").write_text("\n".join(lines[:3]) + "\n")
    assert main(["eval", "--task", "forecast", "--pred", str(tmp_path / "broken.csv"),
                 "--truth", str(tmp_path / "two.csv")]) == 1
    assert ":3:" in capsys.readouterr().err


def test_multi_seed_fan_out(tmp_path):
    cfg = write_config(tmp_path / "c.json", generator="three_mode", generator_config={"T": 110})
    assert main(["segment", "--config", cfg, "--seed", "0-2", "--out", str(tmp_path / "m")]) == 0
    assert sorted(p.name for p in (tmp_path / "m").iterdir()) == ["seed-0", "seed-1", "seed-2"]
    a = (tmp_path / "m" / "seed-1" / "segmentation.csv").read_bytes()
    main(["segment", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "one")])
    assert (tmp_path / "one" / "segmentation.csv").read_bytes() == a
    assert main(["segment", "--config", cfg, "--seed", "0-2", "--jobs", "2", "--out", str(tmp_path / "p")]) == 0
    assert read_tree(tmp_path / "p") == read_tree(tmp_path / "m")


def test_training_abort_exits_2_and_keeps_reports(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"generator": "three_mode", "generator_config": {"T": 120},
                               "trainer": {"steps": 5, "lr": 1e308, "growth": False}}))
    with pytest.warns(RuntimeWarning):
        code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "t")])
    assert code == 2
    assert "aborted" in capsys.readouterr().err
    assert (tmp_path / "t" / "report.jsonl").exists()
    assert not (tmp_path / "t" / "bank.json").exists()


@pytest.mark.parametrize("command", ["generate", "train", "segment", "forecast", "classify"])
def test_outputs_are_byte_deterministic(tmp_path, command):
    generator = "rotating_boundary" if command == "classify" else "three_mode"
    cfg = write_config(tmp_path / "c.json", generator=generator, generator_config={"T": 110})
    for run in ("a", "b"):
        assert main([command, "--config", cfg, "--seed", "4", "--out", str(tmp_path / run)]) == 0
    a, b = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
    assert a and a == b
