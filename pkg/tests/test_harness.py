import csv
import io
import json

import numpy as np
import pytest

from sampdist.harness import (
    CSV_COLUMNS,
    AlignedData,
    ExperimentConfig,
    SampleSpec,
    csv_text,
    cv2_analytic,
    cv2_empirical,
    ingest,
    monte_carlo,
    run,
    two_key_example,
    write_instance,
    zipf_pair,
)
from sampdist.query import KeyPredicate
from sampdist.sampler import Instance

from conftest import KEYS, V1, V2


@pytest.fixture
def six_key_files(tmp_path):
    paths = []
    for i, vals in enumerate((V1, V2), 1):
        p = tmp_path / f"inst{i}.tsv"
        p.write_text("".join(f"{k}\t{x:g}\n" for k, x in zip(KEYS, vals)))
        paths.append(p)
    return paths


def test_ingest(six_key_files, tmp_path):
    inst = ingest(six_key_files[0])
    assert len(inst) == 5 and "b" not in inst.entries and inst.get("e") == 8.0
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    assert len(ingest(empty)) == 0
    for bad in ("x\t-1\n", "x\tnan\n", "x 1\n", "x\t1\nx\t2\n", "x\tabc\n", "x\t1\t2\n"):
        path = tmp_path / "bad.tsv"
        path.write_text(bad)
        with pytest.raises(ValueError):
            ingest(path)


def test_write_instance_round_trip(tmp_path):
    inst = Instance({"a": 0.1, "b": 1e300}, 3)
    write_instance(inst, tmp_path / "x.tsv")
    assert ingest(tmp_path / "x.tsv", 3).entries == inst.entries


def test_zipf_pair_shapes():
    a, b = zipf_pair(1000, noise=0.2, seed=5)
    assert len(a) == len(b) == 1000 and a.keys == b.keys
    ratio = np.array([b.get(k) / a.get(k) for k in a.keys])
    assert ratio.min() >= 0.8 and ratio.max() <= 1.2
    a, b = zipf_pair(1000, churn=0.5, seed=5)
    assert len(b) == 1000 and len(set(a.keys) & set(b.keys)) == 500
    assert zipf_pair(50, seed=1)[1].entries == zipf_pair(50, seed=1)[1].entries


def test_sample_spec_validation():
    with pytest.raises(ValueError):
        SampleSpec("poisson_pps")
    with pytest.raises(ValueError):
        SampleSpec("poisson_pps", T=1.0, fraction=0.1)
    with pytest.raises(ValueError):
        SampleSpec("poisson_pps", k=3)
    with pytest.raises(ValueError):
        SampleSpec("priority", T=3.0)
    with pytest.raises(ValueError):
        SampleSpec(fraction=1.5)
    with pytest.raises(ValueError):
        SampleSpec("bottom", k=3)
    assert SampleSpec(T=2.0).param == "T=2.0" and SampleSpec("priority", k=3).param == "k=3"


def test_cv2_analytic_two_key_example():
    pair = list(two_key_example())
    spec = SampleSpec(T=10.0)
    assert cv2_analytic(pair, None, spec, 1, "coord_L") == pytest.approx(16.150 / 36, abs=1e-4)
    assert cv2_analytic(pair, None, spec, 1, "ind_L") == pytest.approx(26.438 / 36, abs=1e-4)


def test_cv2_analytic_errors(six_key_pair):
    same = [Instance({"a": 1.0}, 1), Instance({"a": 1.0}, 2)]
    with pytest.raises(ValueError):
        cv2_analytic(same, None, SampleSpec(T=1.0), 1, "coord_L")
    with pytest.raises(ValueError):
        cv2_analytic(list(six_key_pair), None, SampleSpec("priority", k=2), 1, "coord_L")


def test_aligned_data_selection(six_key_pair):
    data = AlignedData(list(six_key_pair), KeyPredicate.exact_set("def"))
    assert data.true_lpp(1) == 7 and data.support_size() == 5
    with pytest.raises(ValueError):
        AlignedData([six_key_pair[0]])


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(specs=[{"T": 1.0}], instances=["a"])
    with pytest.raises(ValueError):
        ExperimentConfig(specs=[{"T": 1.0}], synthetic={"n_keys": 10}, trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(specs=[], synthetic={"n_keys": 10})
    with pytest.raises(ValueError):
        ExperimentConfig(specs=[{"T": 1.0}], synthetic={"n_keys": 10}, estimators=["nope"])
    with pytest.raises(ValueError):
        ExperimentConfig(specs=[{"scheme": "priority", "k": 2}], synthetic={"n_keys": 10}, estimators=["coord_U"])
    cfg = ExperimentConfig(specs=[{"fraction": 0.1}], synthetic={"n_keys": 10}, seeds=[3, 1])
    assert cfg.seed_list == [3, 1]
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).to_dict() == cfg.to_dict()


def test_run_golden_full_sampling(six_key_files):
    cfg = ExperimentConfig(
        specs=[{"T": 1e-300}], p=[1, 2], estimators=["ind_L", "coord_L", "coord_U", "coord_OC"],
        instances=[str(p) for p in six_key_files], trials=100, oc_grid_resolution=200,
    )
    text = csv_text(run(cfg))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert len(rows) == 8
    for row in rows:
        truth = {"1.0": "20.0", "2.0": "134.0"}[row["p"]]
        assert row["scheme"] == "poisson_pps" and row["param"] == "T=1e-300"
        assert row["sampled_fraction"] == "1.0"
        assert row["estimate"] == truth and row["true_value"] == truth
        assert row["cv2_analytic"] == "0.0" and row["cv2_empirical"] == "0.0"


def test_run_is_deterministic_and_writes_file(six_key_files, tmp_path):
    cfg = ExperimentConfig(
        specs=[{"fraction": 0.5}, {"scheme": "priority", "k": 3}], p=[1], estimators=["ind_L", "coord_L"],
        instances=[str(p) for p in six_key_files], trials=120, output=str(tmp_path / "out.csv"),
    )
    run(cfg)
    first = (tmp_path / "out.csv").read_bytes()
    run(cfg)
    assert (tmp_path / "out.csv").read_bytes() == first
    rows = list(csv.DictReader(io.StringIO(first.decode())))
    assert [r["scheme"] for r in rows] == ["poisson_pps", "poisson_pps", "priority", "priority"]
    assert rows[2]["cv2_analytic"] == "" and rows[2]["cv2_empirical"] != ""


def test_few_trials_leave_empirical_blank(six_key_files):
    cfg = ExperimentConfig(specs=[{"fraction": 0.5}], instances=[str(p) for p in six_key_files], trials=10)
    assert all(r["cv2_empirical"] == "" for r in run(cfg))
    assert len(cv2_empirical(cfg)) == 2


def test_sampled_fraction_matches_target():
    data = AlignedData(list(zipf_pair(2000, seed=2)))
    rows = monte_carlo(data, [SampleSpec(fraction=0.05)], [1], ["ind_L", "coord_L"], range(200))
    for r in rows:
        assert r.sampled_fraction == pytest.approx(0.05, rel=0.05)


@pytest.mark.parametrize("scheme", ["poisson_pps", "priority"])
def test_monte_carlo_unbiased_three_se(scheme):
    data = AlignedData(list(zipf_pair(200, seed=1)))
    rows = monte_carlo(data, [SampleSpec(scheme, fraction=0.2)], [1, 2], ["ind_L", "coord_L"], range(3000))
    for r in rows:
        se = np.sqrt(r.variance / r.trials)
        assert abs(r.mean - r.true_value) < 3 * se, (r.estimator, r.p)
