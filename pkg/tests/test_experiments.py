import csv
import io
import json
import math
from pathlib import Path

import pytest

from contactperc import cli, rng
from contactperc.errors import ConfigurationError
from contactperc.experiments import (ORACLE_COLUMNS, SCAN_COLUMNS, SWEEP_COLUMNS, WALK_COLUMNS,
                                     SweepConfig, execute, initial_sites, logd_size,
                                     random_box_sites)
from contactperc.bounds import BoundReport

GOLDEN = Path(__file__).with_name("golden")
TINY = dict(mode="subcritical", dims=[3, 5], gammas=[0.5, 0.8], reps=25, seed=7)


def _table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# contactperc mode=") and "config_sha256=" in lines[0]
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_golden_subcritical():
    text, ok = execute(SweepConfig(**TINY))
    assert ok
    assert text == (GOLDEN / "subcritical_tiny.csv").read_text()


def test_replay_byte_identical_and_worker_independent():
    a, _ = execute(SweepConfig(**TINY))
    b, _ = execute(SweepConfig(**TINY))
    c, _ = execute(SweepConfig(**dict(TINY, workers=2)))
    assert a == b == c
    d, _ = execute(SweepConfig(**dict(TINY, seed=8)))
    assert d != a


def test_sweep_schema_and_values():
    rows = _table(execute(SweepConfig(**TINY))[0])
    assert list(rows[0]) == SWEEP_COLUMNS
    for r in rows:
        assert float(r["wilson_lo"]) <= float(r["survival_fraction"]) <= float(r["wilson_hi"])
        assert int(r["survived"]) + int(r["n_extinct"]) == int(r["reps"])
        assert float(r["lambda_c"]) == 2.0


def test_timing_column_only_on_request():
    text, _ = execute(SweepConfig(**dict(TINY, timing=True)))
    assert _table(text)[0].keys() >= {"wall_time"}


def test_other_mode_schemas():
    scan = _table(execute(SweepConfig(mode="critical_scan", dims=[3], p=1.0, reps=40,
                                      scan_iters=3, early_success=50, measure="both"))[0])
    assert list(scan[0]) == SCAN_COLUMNS
    assert {r["measure"] for r in scan} == {"annealed", "quenched"}
    for r in scan:
        assert float(r["lambda_hat"]) >= float(r["bracket_lo"]) > 0
    bounds = _table(execute(SweepConfig(mode="bounds_report", dims=[100, 1000]))[0])
    assert list(bounds[0]) == BoundReport.columns()
    walk = _table(execute(SweepConfig(mode="walk_report", dims=[6], walk_N_override=2,
                                      reps=200, walk_k=2))[0])
    assert list(walk[0]) == WALK_COLUMNS
    assert {r["quantity"] for r in walk} == {"collision_prob", "lemma42_bound"}
    assert all(r["se"] != "" for r in walk)


def test_oracle_validate_and_negative_control():
    rows, ok = _oracle(1.0)
    assert ok and len({r["instance"] for r in rows}) >= 5
    assert _oracle(2.0)[1] is False


def _oracle(mult):
    text, ok = execute(SweepConfig(mode="oracle_validate", reps=3000, seed=1,
                                   corrupt_recovery=mult))
    rows = _table(text)
    assert list(rows[0]) == ORACLE_COLUMNS
    return rows, ok


def test_logd_box_sites():
    for d in (2, 4, 8, 16, 100):
        stream = rng.make_stream(0, "box", d)
        cfg = SweepConfig(mode="subcritical", dims=[d]).validate()
        sites = initial_sites(cfg, d, stream)
        r = logd_size(d)
        assert len(sites) == len(set(sites)) == max(1, math.ceil(math.log(d)))
        assert all(max(abs(c) for c in x) <= r for x in sites)
    with pytest.raises(ConfigurationError):
        random_box_sites(1, 5, 1, rng.make_stream(0))


@pytest.mark.parametrize("bad", [
    dict(mode="nope"), dict(mode="subcritical", xi="gauss:1"), dict(mode="subcritical", p=0),
    dict(mode="subcritical", horizon="forever"), dict(mode="subcritical", initial="ring"),
    dict(mode="subcritical", lambdas=[1.0], gammas=[0.5]),
    dict(mode="bounds_report", gammas=[1.5]), dict(mode="walk_report", dims=[6], walk_N_override=7),
    dict(mode="oracle_validate", instances=["/missing.json"]),
    dict(mode="subcritical", measure="both"),
])
def test_configuration_errors(bad):
    with pytest.raises(ConfigurationError):
        SweepConfig(**bad).validate()


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert cli.main(["--mode", "subcritical", "--dim", "3", "--reps", "10", "--out", str(out)]) == 0
    assert out.read_text().startswith("# contactperc mode=subcritical")
    assert cli.main(["--mode", "subcritical", "--xi", "bogus:1"]) == 2
    assert cli.main(["--dim", "3"]) == 2
    assert cli.main(["--mode", "bounds_report", "--dim", "100", "--gamma", "2"]) == 2
    inst = str(Path(cli.__file__).with_name("instances") / "01_pure_death.json")
    code = cli.main(["--mode", "oracle_validate", "--instance", inst, "--reps", "2000",
                     "--out", str(out)])
    assert code == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "oracle_validate", "instances": [inst], "reps": 2000,
                               "corrupt_recovery": 2.0}))
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == 3
    capsys.readouterr()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "subcritical", "dims": [3], "reps": 10, "seed": 1,
                               "gammas": [0.3]}))
    args = cli.build_parser().parse_args(["--config", str(cfg), "--seed", "5", "--lambda", "0.4"])
    conf = cli.config_from_args(args)
    assert conf.seed == 5 and conf.lambdas == [0.4] and conf.gammas is None and conf.reps == 10
