from __future__ import annotations

import json

import pytest

from deflnoc.harness import (
    APP_PROFILES,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_UNSTABLE,
    ComparisonRow,
    ConfigError,
    SweepPoint,
    bench,
    comparison_csv,
    compare,
    deflection_check,
    main,
    parse_config,
    read_csv,
    summarize,
    summary_from_csv,
    write_csv,
)


def config(**over):
    base = {
        "schema_version": 1,
        "topology": {"kind": "ring", "n": 6},
        "sweep": {"rate": [0.1], "burst_prob": [0.2], "deflect_prob": [0.3]},
        "sim": {"horizon": 20000, "warmup": 2000, "seeds": [1, 2]},
    }
    base.update(over)
    return base


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_profile_presets_in_range():
    assert len(APP_PROFILES) == 8
    for p in APP_PROFILES.values():
        assert 0.02 <= p.rate <= 0.1
        assert 0.25 <= p.burst_prob <= 0.55


def test_parse_points_sorted():
    cfg = parse_config(json.dumps(config(sweep={"rate": [0.3, 0.1], "burst_prob": [0.6, 0.2], "deflect_prob": [0.3, 0.1]})))
    keys = [p.sort_key() for p in cfg.points]
    assert keys == sorted(keys)
    assert len(cfg.points) == 8


def test_parse_errors_name_the_field():
    with pytest.raises(ConfigError, match="sweep.rate"):
        parse_config(json.dumps(config(sweep={"rate": [], "burst_prob": [0], "deflect_prob": [0.1]})))
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(json.dumps(config(schema_version=7)))
    with pytest.raises(ConfigError, match="topology.kind"):
        parse_config(json.dumps(config(topology={"kind": "torus"})))
    with pytest.raises(ConfigError, match="line 2"):
        parse_config('{"schema_version": 1,\n "topology": {"kind": "ring" "n": 6}}')


def test_per_sink_map_and_profile():
    cfg = parse_config(
        json.dumps(config(traffic={"kind": "profile", "name": "compile-job"}, sweep={"deflect_prob": [{"3": 0.2}, 0.1]}))
    )
    assert {p.rate for p in cfg.points} == {0.05}
    mapped = [p for p in cfg.points if isinstance(p.deflect, tuple)][0]
    assert cfg.deflect_for(mapped).sink_p(3) == 0.2
    assert cfg.deflect_for(mapped).sink_p(4) == 0.0


def test_csv_round_trip():
    text = write_csv(["a", "b", "c"], [[0.1, 2, "x"], [1 / 3, -4, "y"]])
    header, rows = read_csv(text)
    again = write_csv(header, [[float(r[0]), int(r[1]), r[2]] for r in rows])
    assert again == text


def test_summary_recomputable_from_csv():
    pt = SweepPoint(0.1, 0.2, 0.3)
    rows = [
        ComparisonRow(pt, "ok", 10.0, 11.0, 0.1, 2),
        ComparisonRow(SweepPoint(0.2, 0.2, 0.3), "ok", 12.0, 10.0, 0.1, 2),
        ComparisonRow(SweepPoint(0.9, 0.2, 0.3), "skipped-unstable"),
    ]
    text = comparison_csv(rows)
    direct = summarize([r.percent_error for r in rows[:2]], [r.signed_error for r in rows[:2]])
    from_csv = summary_from_csv(text)
    assert from_csv["points"] == 2
    for k in ("mean", "median", "max", "signed_mean"):
        assert from_csv[k] == pytest.approx(direct[k], abs=1e-5)


def test_percent_error():
    r = ComparisonRow(SweepPoint(0.1, 0, 0.1), "ok", 9.0, 10.0)
    assert r.percent_error == pytest.approx(10.0)
    assert r.signed_error == pytest.approx(-10.0)


def test_analyze_cli(tmp_path):
    out = tmp_path / "out"
    assert main(["analyze", "--config", write(tmp_path, config()), "--out", str(out)]) == EXIT_OK
    _, rows = read_csv((out / "aggregate.csv").read_text())
    assert len(rows) == 1


def test_analyze_mesh_class_rows(tmp_path):
    cfg = config(topology={"kind": "mesh", "rows": 6, "cols": 6}, sweep={"rate": [0.1], "burst_prob": [0.0], "deflect_prob": [0.2]})
    out = tmp_path / "out"
    assert main(["analyze", "--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
    _, rows = read_csv((out / "classes.csv").read_text())
    assert len(rows) == 36 * 35


def test_unstable_exit_code(tmp_path, capsys):
    cfg = config(sweep={"rate": [0.9], "burst_prob": [0.0], "deflect_prob": [0.5]})
    assert main(["analyze", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_UNSTABLE
    assert "saturated server" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["analyze", "--config", str(bad)]) == EXIT_CONFIG


def test_validate_marks_unstable_points(tmp_path):
    cfg = parse_config(json.dumps(config(sweep={"rate": [0.1, 0.95], "burst_prob": [0.2], "deflect_prob": [0.3]})))
    rows = compare(cfg)
    assert [r.status for r in rows] == ["ok", "skipped-unstable"]
    assert rows[0].percent_error < 10


def test_low_load_validation_error():
    cfg = parse_config(json.dumps(config(sweep={"rate": [0.02], "burst_prob": [0.0], "deflect_prob": [0.0]})))
    (row,) = compare(cfg)
    assert row.percent_error < 10


def test_bench():
    rows = bench([4, 6])
    assert [r[0] for r in rows] == [4, 6]
    assert rows[1][1] == 36 * 35
    with pytest.raises(ValueError):
        bench([])


def test_deflection_check_degenerate_and_ring():
    cfg = parse_config(json.dumps(config(sweep={"rate": [0.1], "burst_prob": [0.0], "deflect_prob": [0.0]})))
    (acc,) = deflection_check(cfg, cfg.points[0], 1)
    assert acc.degenerate and acc.accuracy == 100.0
    cfg = parse_config(json.dumps(config()))
    (acc,) = deflection_check(cfg, cfg.points[0], 1)
    assert acc.loop == "ring" and acc.accuracy > 90


def test_worker_env(monkeypatch):
    from deflnoc.harness import WORKERS_ENV, default_workers

    monkeypatch.setenv(WORKERS_ENV, "3")
    assert default_workers() == 3
