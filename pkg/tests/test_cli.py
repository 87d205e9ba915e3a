import csv
import io
import json
import subprocess
import sys

import pytest

from sampdist.cli import main
from sampdist.sampler import read_sample

from conftest import KEYS, V1, V2


@pytest.fixture
def files(tmp_path):
    paths = []
    for i, vals in enumerate((V1, V2), 1):
        p = tmp_path / f"i{i}.tsv"
        p.write_text("".join(f"{k}\t{x:g}\n" for k, x in zip(KEYS, vals)))
        paths.append(str(p))
    return paths


def sample(files, tmp_path, *extra):
    out = []
    for i, path in enumerate(files, 1):
        dest = str(tmp_path / f"s{i}.txt")
        assert main(["sample", path, "--instance-id", str(i), "-o", dest, *extra]) == 0
        out.append(dest)
    return out


def estimate(capsys, *argv):
    assert main(["estimate", *argv]) == 0
    return json.loads(capsys.readouterr().out)


def test_full_sampling_queries(files, tmp_path, capsys):
    s = sample(files, tmp_path, "--T", "1e-300")
    assert read_sample(s[0]).entries == {"a": 5.0, "c": 4.0, "d": 5.0, "e": 8.0, "f": 7.0}
    assert estimate(capsys, *s, "--p", "1")["estimate"] == 20.0
    rep = estimate(capsys, *s, "--p", "2", "--truth", *files)
    assert rep["estimate"] == 134.0 and rep["variance"] == 0.0
    assert estimate(capsys, *s, "--p", "1", "--predicate", "keys:d,e,f")["estimate"] == 7.0
    lp = estimate(capsys, *s, "--p", "2", "--query", "lp")
    assert lp["estimate"] == pytest.approx(134**0.5) and "biased" in lp["note"]
    plus = estimate(capsys, *s, "--query", "plus", "--per-key")
    assert plus["estimate"] == 8.0 and plus["per_key"]["b"] == 0.0


def test_independent_and_priority(files, tmp_path, capsys):
    s = sample(files, tmp_path, "--fraction", "0.5", "--mode", "independent", "--hash-seed", "4")
    assert read_sample(s[0]).mode.value == "independent"
    assert estimate(capsys, *s, "--estimator", "ind_L")["estimate"] >= 0
    s = sample(files, tmp_path, "--scheme", "priority", "--k", "3")
    assert len(read_sample(s[1]).entries) == 3
    assert estimate(capsys, *s, "--estimator", "coord_L", "--p", "2")["estimate"] >= 0


def test_estimator_mode_mismatch_exits_2(files, tmp_path, capsys):
    s = sample(files, tmp_path, "--T", "4")
    assert main(["estimate", *s, "--estimator", "ind_L"]) == 2
    assert "independently seeded" in capsys.readouterr().err


def test_oc_table_command(files, tmp_path, capsys):
    table = str(tmp_path / "oc.json")
    assert main(["oc-table", "--p", "1", "--grid-resolution", "300", "-o", table]) == 0
    assert "c=" in capsys.readouterr().out
    s = sample(files, tmp_path, "--T", "4")
    rep = estimate(capsys, *s, "--estimator", "coord_OC", "--oc-table", table, "--truth", *files)
    assert rep["estimate"] >= 0 and rep["variance"] >= 0


def test_evaluate_command(files, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "specs": [{"scheme": "poisson_pps", "fraction": 0.5}],
        "p": [1], "estimators": ["ind_L", "coord_L"],
        "instances": [files[0].rsplit("/", 1)[1], files[1].rsplit("/", 1)[1]],
        "trials": 100,
    }))
    assert main(["evaluate", "--config", str(cfg)]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["estimator"] for r in rows] == ["ind_L", "coord_L"]
    out = tmp_path / "out.csv"
    assert main(["evaluate", "--config", str(cfg), "-o", str(out), "--trials", "150", "--hash-seed", "7"]) == 0
    assert len(list(csv.DictReader(out.open()))) == 2


def test_sample_argument_errors(files):
    with pytest.raises(SystemExit):
        main(["sample", files[0]])
    with pytest.raises(SystemExit):
        main(["sample", files[0], "--scheme", "priority"])


def test_module_entry_point(files, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "sampdist", "sample", files[0], "--T", "1e-300"],
        capture_output=True, text=True, check=True,
    )
    assert proc.stdout.startswith("#format=sampdist-sample v1")
