import pytest

from pvbench.config import ConfigError, build_config, load_config

BASE = {
    "schema_version": 1,
    "synth": {"start": "2015-03-01T00:00:00Z", "end": "2015-06-01T00:00:00Z",
              "plants": [{"plant_id": "p01", "latitude": 45.0, "longitude": 9.0}]},
    "schedule": {"initial_train_end": "2015-04-15T00:00:00Z"},
}


def doc(**changes):
    return {**BASE, **changes}


def fields(exc):
    return {d["field"] for d in exc.value.details}


def test_defaults():
    cfg = build_config(doc())
    assert cfg.models == ["gb", "nn", "knn", "qrf", "svr", "ens"]
    assert cfg.schedule.step_weeks == 1 and cfg.schedule.validation_weeks == 8
    assert cfg.members == ("gb", "nn", "knn", "qrf", "svr")


@pytest.mark.parametrize("change, field", [
    ({"schema_version": 2}, "schema_version"),
    ({"models": ["gb", "xgb"]}, "models"),
    ({"models": []}, "models"),
    ({"models": ["gb", "gb"]}, "models"),
    ({"models": ["knn", "ens"]}, "<root>"),
    ({"params": {"ens": {}}}, "<root>"),
    ({"data": {"dir": "x"}}, "<root>"),
    ({"colour": "red"}, "colour"),
    ({"schedule": {"initial_train_end": "2015-04-15", "step_weeks": 0}}, "schedule.step_weeks"),
])
def test_rejections_name_the_field(change, field):
    with pytest.raises(ConfigError) as exc:
        build_config(doc(**change))
    assert field in fields(exc)


def test_seed_override_reaches_generator():
    cfg = build_config(doc(), {"seed": 11, "out": None})
    assert cfg.seed == 11 and cfg.synth.rng_seed == 11


def test_digest_ignores_output_location():
    a = build_config(doc(out="a"))
    b = build_config(doc(out="b"))
    assert a.digest() == b.digest()
    assert a.digest() != build_config(doc(seed=1)).digest()


def test_load_errors(tmp_path, monkeypatch):
    monkeypatch.delenv("PVBENCH_CONFIG", raising=False)
    with pytest.raises(ConfigError):
        load_config(None)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")
