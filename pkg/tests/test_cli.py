import csv
import io
import json

import pytest

from reviewsim.cli import main

CONFIGS = __import__("pathlib").Path(__file__).parent.parent / "scripts" / "configs"


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_preset_list_and_show(capsys):
    code, out, _ = run(["preset"], capsys)
    assert code == 0 and "ICLR2020-L4" in out.split()
    code, out, _ = run(["preset", "ICLR2021-L4"], capsys)
    assert code == 0 and "confusion" in out


def test_sweep_and_pareto(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(["sweep", "--preset", "ICLR2020-L4", "--rho", str(10 / 3), "--grid", "30", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert rows[0].keys() >= {"tau", "r_eff", "theta", "quality", "burden", "acc_rate", "pareto"}
    code, par, _ = run(["pareto", str(out)], capsys)
    assert code == 0
    kept = list(csv.DictReader(io.StringIO(par)))
    assert 0 < len(kept) <= len(rows) and all(r["pareto"] == "true" for r in kept)


def test_sweep_time_limited(capsys):
    code, out, _ = run(["sweep", "--config", str(CONFIGS / "double_gaussian_T.yaml"), "--T", "3", "--grid", "8"], capsys)
    assert code == 0 and len(out.splitlines()) > 2


def test_cauchy_strict_exits_2(capsys):
    code, _, err = run(["sweep", "--config", str(CONFIGS / "cauchy_prior.yaml"), "--grid", "5", "--strict"], capsys)
    assert code == 2 and "diverg" in err
    code, out, _ = run(["sweep", "--config", str(CONFIGS / "cauchy_prior.yaml"), "--grid", "5"], capsys)
    assert code == 0 and "nan" in out


def test_missing_config_exits_1(capsys):
    code, _, err = run(["sweep", "--config", "/nonexistent.yaml"], capsys)
    assert code == 1 and "error" in err
    code, _, err = run(["sweep"], capsys)
    assert code == 1


def test_simulate_deterministic(tmp_path, capsys):
    args = ["simulate", "--preset", "ICLR2020-L4", "--noiseless", "--tau", "-0.2", "--n", "2000", "--T", "10", "--seed", "7"]
    s1, s2 = tmp_path / "a.json", tmp_path / "b.json"
    code1, out1, _ = run(args + ["--summary", str(s1)], capsys)
    code2, out2, _ = run(args + ["--summary", str(s2), "--jobs", "2"], capsys)
    assert code1 == code2 == 0
    assert out1 == out2 and s1.read_text() == s2.read_text()
    summary = json.loads(s1.read_text())
    assert summary["n"] == 2000 and summary["burden"] > 0
    assert out1.splitlines()[0] == "round,submitted,accepted,reviews,quality_contrib"


def test_simulate_summary_to_stderr(capsys):
    code, _, err = run(["simulate", "--config", str(CONFIGS / "binary.yaml"), "--n", "500", "--T", "3"], capsys)
    assert code == 0 and "quality_se" in json.loads(err)


def test_memory_search_small(capsys):
    code, out, _ = run(["memory-search", "--config", str(CONFIGS / "memory_binary.yaml"), "--family", "fixed", "--grid", "4", "--n", "500"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows and rows[0]["family"] == "fixed" and rows[0]["tau2"] == "nan"


def test_learn_roundtrip(tmp_path, capsys):
    import numpy as np

    from reviewsim.learning import sample_dataset

    p = np.array([0.5, 0.5])
    beta = np.full((2, 10), 0.02)
    beta[0, :3] = [0.3, 0.3, 0.24]
    beta[1, 7:] = [0.3, 0.3, 0.24]
    data, _ = sample_dataset(p, beta, 300, 3, seed=0)
    src = tmp_path / "reviews.ndjson"
    with open(src, "w") as fh:
        for i, scores in enumerate(data.papers):
            for s in scores:
                fh.write(json.dumps({"paper_id": f"p{i}", "rating": int(s)}) + "\n")
        fh.write(json.dumps({"paper_id": "ghost", "rating": None}) + "\n")
    out = tmp_path / "model.yaml"
    code, _, err = run(["learn", str(src), "--L-min", "1", "--L-max", "3", "--folds", "3", "--iters", "20", "--out", str(out)], capsys)
    assert code == 0 and "dropped 1" in err
    code, report, _ = run(["check", "--config", str(out)], capsys)
    assert code == 0 and "review MLR" in report


def test_learn_bad_input(tmp_path, capsys):
    src = tmp_path / "bad.ndjson"
    src.write_text('{"paper_id": "a", "rating": 12}\n')
    code, _, err = run(["learn", str(src)], capsys)
    assert code == 1 and "line 1" in err


def test_check_preset(capsys):
    code, out, _ = run(["check", "--preset", "ICLR2020-L4", "--lambda-r", "0.5"], capsys)
    assert code == 0
    assert "learned matrix garbles into review matrix: yes" in out


def test_beta_override_reaches_lenient_corner(capsys):
    code, out, _ = run(["sweep", "--config", str(CONFIGS / "binary.yaml"), "--beta", "0.7", "--noiseless", "--grid", "20"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    best = max(float(r["quality"]) for r in rows)
    burdens = [float(r["burden"]) for r in rows if float(r["quality"]) >= best - 1e-12]
    assert min(burdens) == pytest.approx(3.3876050420168067, rel=1e-9)


def test_sigma_on_binary_config_is_rejected(capsys):
    code, _, err = run(["sweep", "--config", str(CONFIGS / "binary.yaml"), "--sigma", "0.5"], capsys)
    assert code == 1 and "--sigma" in err


def test_beta_on_gaussian_config_is_rejected(capsys):
    code, _, err = run(["sweep", "--config", str(CONFIGS / "double_gaussian.yaml"), "--beta", "0.7"], capsys)
    assert code == 1 and "--beta" in err
