import csv
import itertools
import math

import pytest

from robustq.expcli import (
    BiasSource,
    ConfigError,
    ExperimentConfig,
    TableSource,
    build_config,
    classical_votes,
    main,
    quantum_or_queries,
    read_config_file,
    run,
)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def config(scenario, tmp_path, **items):
    items = {k: str(v) for k, v in items.items()}
    items.setdefault("output", str(tmp_path / "run"))
    return ExperimentConfig.from_items(scenario, items)


def test_config_file_with_comments_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# oracle\nN = 2\nf = [0, 1]   # truth table\n\nbiases = constant(0.3)\nwork_model = garbage(4)\neps = 0.2\n")
    assert read_config_file(path)["f"] == "[0, 1]"
    cfg = build_config("verify-lemma1", str(path), ["eps=0.3"], str(tmp_path / "o"))
    assert cfg.eps == (0.3,)
    assert cfg.work_model == "garbage" and cfg.work_seed == 4
    assert cfg.oracle_spec(0).biases == (0.3, 0.3)
    assert cfg.output == str(tmp_path / "o")


def test_value_forms_resolve_deterministically():
    t = TableSource.parse("random(9)")
    assert t.resolve(8, 0) == t.resolve(8, 0)
    assert set(t.resolve(8, 0)) <= {0, 1}
    b = BiasSource.parse("uniform(0.2, 0.4, 1)")
    drawn = b.resolve(5, 3)
    assert drawn == b.resolve(5, 3)
    assert all(0.2 <= e <= 0.4 for e in drawn)
    assert BiasSource.parse("[0.1, 0.2]").resolve(2, 0) == (0.1, 0.2)


@pytest.mark.parametrize(
    "scenario, items, field",
    [
        ("nope", {}, "scenario"),
        ("robust-or", {"N": "4", "biases": "constant(0.3)", "eps": "0.3", "seed": "1"}, "f"),
        ("robust-or", {"N": "4", "f": "random(1)", "biases": "constant(0.3)", "eps": "0.3"}, "seed"),
        ("verify-lemma1", {"N": "2", "f": "[0,1]", "biases": "[0.3]", "eps": "0.3"}, "biases"),
        ("verify-lemma1", {"N": "2", "f": "[0,2]", "biases": "[0.3,0.3]", "eps": "0.3"}, "f"),
        ("verify-lemma1", {"N": "2", "f": "[0,1]", "biases": "[0.3,0.3]", "eps": "0.7"}, "eps"),
        ("zero-test", {"N": "2", "f": "[0,1]", "biases": "[0.3,0.3]", "M": "x"}, "M"),
        ("zero-test", {"N": "2", "f": "[0,1]", "biases": "[0.3,0.3]", "M": "4", "colour": "red"}, "colour"),
        ("zero-test", {"N": "2", "f": "[0,1]", "biases": "[0.3,0.3]", "M": "4", "work_model": "dirty"}, "work_model"),
        ("scaling-sweep", {"N": "4"}, "eps"),
        ("est-eps-min", {"N": "1", "f": "[0]", "biases": "[0.3]", "ell_max": "3", "seed": "0"}, "N"),
    ],
)
def test_invalid_config_names_field(scenario, items, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_items(scenario, items)
    assert info.value.field == field


def test_cli_error_exit_status(tmp_path, capsys):
    assert main(["robust-or", "N=4", "eps=0.3", "--out", str(tmp_path / "o")]) != 0
    assert "f:" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_cli_writes_csv(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("N = 2\nf = [0, 1]\nbiases = [0.25, 0.4]\n")
    assert main(["zero-test", "--config", str(cfg), "M=8", "--out", str(tmp_path / "z")]) == 0
    rows = read_rows(tmp_path / "z-zero-test.csv")
    assert [r["x"] for r in rows] == ["0", "1"]
    for r in rows:
        assert abs(float(r["flag_probability"]) - float(r["predicted"])) < 1e-9
        assert r["queries"] == str(2 * (2 * 8 + 1))


def test_verify_lemma1_example(tmp_path):
    cfg = config("verify-lemma1", tmp_path, N=2, f="random(3)", biases="uniform(0.3, 0.5, 3)", eps=0.3,
                 work_model="garbage(2)", trials=2)
    _, path = run(cfg, workers=1)
    rows = read_rows(path)
    assert len(rows) == 4
    assert [(r["x"], r["seed"]) for r in rows] == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]
    assert all(float(r["success_probability"]) >= 2 / 3 for r in rows)
    assert all(r["queries"] == "256" for r in rows)


def test_scaling_sweep_ratio(tmp_path):
    _, path = run(config("scaling-sweep", tmp_path, N=4, eps="0.3,0.15"))
    rows = read_rows(path)
    assert 1.8 <= float(rows[1]["ratio"]) <= 2.6
    assert int(rows[1]["lemma1_queries"]) / int(rows[0]["lemma1_queries"]) == pytest.approx(float(rows[1]["ratio"]))


def brute_majority_success(v, q):
    return sum(
        math.prod(q if b else 1 - q for b in bits) for bits in itertools.product([0, 1], repeat=v) if 2 * sum(bits) > v
    )


@pytest.mark.parametrize("eps", [0.3, 0.15, 0.1])
def test_classical_votes_by_enumeration(eps):
    v = classical_votes(eps)
    assert brute_majority_success(v, 0.5 + eps) >= 2 / 3
    if v > 1:
        assert brute_majority_success(v - 2, 0.5 + eps) < 2 / 3


def test_compare_classical_examples(tmp_path):
    assert classical_votes(0.3) == 1
    _, path = run(config("compare-classical", tmp_path, N="4,16", eps="0.3,0.02,0.01"))
    rows = {(int(r["N"]), float(r["eps"])): r for r in read_rows(path)}
    assert int(rows[4, 0.3]["classical_queries"]) == 4 * classical_votes(0.3)
    for eps in (0.3, 0.02):
        assert int(rows[16, eps]["classical_queries"]) == 4 * int(rows[4, eps]["classical_queries"])
        q_ratio = int(rows[16, eps]["quantum_queries"]) / int(rows[4, eps]["quantum_queries"])
        assert 2 <= q_ratio <= 2 * math.log2(16) / math.log2(4) * 1.5
    c_ratio = int(rows[4, 0.01]["classical_queries"]) / int(rows[4, 0.02]["classical_queries"])
    assert 3.5 <= c_ratio <= 4.5
    assert 1.8 <= quantum_or_queries(4, 0.01) / quantum_or_queries(4, 0.02) <= 2.2


def test_est_eps_min_hit_frequency(tmp_path):
    cfg = config("est-eps-min", tmp_path, N=2, f="[0,1]", biases="[0.2,0.35]", ell_max=8, trials=300, seed=77)
    records, path = run(cfg, workers=1)
    rows = read_rows(path)
    assert len(rows) == 300
    freq = float(rows[0]["hit_frequency"])
    assert freq >= 2 / 3 - 3 * math.sqrt((2 / 3) * (1 / 3) / 300)
    assert all(r["queries"] == r["ledger"] for r in rows)


@pytest.mark.parametrize(
    "scenario, items",
    [
        ("robust-or", dict(N=2, f="random(1)", biases="constant(0.3)", eps=0.3, seed=3, trials=3)),
        ("chk-amp-dn", dict(flags="0.95,0.3", seed=5, trials=4)),
        ("est-eps-min", dict(N=2, f="[1,0]", biases="[0.15,0.4]", ell_max=6, trials=6, seed=2)),
        ("par-est-phase", dict(N=2, f="[0,1]", biases="uniform(0.1,0.5,8)", M=6, trials=2)),
    ],
)
def test_byte_reproducible_and_independent_of_workers(tmp_path, scenario, items):
    a = run(config(scenario, tmp_path, output=tmp_path / "a", **items), workers=1)[1].read_bytes()
    b = run(config(scenario, tmp_path, output=tmp_path / "b", **items), workers=1)[1].read_bytes()
    c = run(config(scenario, tmp_path, output=tmp_path / "c", **items), workers=2)[1].read_bytes()
    assert a == b == c
    header = a.decode().splitlines()[0].split(",")
    assert header[0] == "scenario" and "queries" in header


def test_numbers_have_twelve_significant_digits(tmp_path):
    _, path = run(config("zero-test", tmp_path, N=2, f="[0,1]", biases="[0.123456789012345,0.3]", M=4))
    row = read_rows(path)[0]
    assert row["theta"] == f"{math.asin(2 * 0.123456789012345):.12g}"
