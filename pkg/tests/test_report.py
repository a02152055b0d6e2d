import csv
import io
import xml.etree.ElementTree as ET

import pytest

from pvbench.eval import BacktestConfig, csi_bucket_labels, run_backtest
from pvbench.pipeline import fleet_samples
from pvbench.report import MONTHS, TABLE_KEYS, bar_chart, build_table, line_chart

from conftest import utc


@pytest.fixture(scope="module")
def report(small_dataset):
    cfg = BacktestConfig(models=("gb", "knn"), initial_train_end=utc(2015, 4, 12),
                         params={"knn": {"k": 30}})
    return run_backtest(fleet_samples(small_dataset), cfg)


def rows(table):
    return list(csv.reader(io.StringIO(table.csv_text())))


def test_month_table(report):
    t = build_table(report, "month")
    r = rows(t)
    assert r[0] == ["model"] + list(MONTHS) + ["avg_hour_weighted", "avg_plant_weighted"]
    assert [x[0] for x in r[1:]] == ["gb", "knn"]
    jan = MONTHS.index("Jan") + 1
    assert all(x[jan] == "" for x in r[1:])          # no January data in the run
    assert float(r[1][-2]) == pytest.approx(report.overall()["gb"].nmae, rel=1e-9)
    assert "published_reference_avg_nmae" in t.document


def test_csi_table_edges(report):
    t = build_table(report, "csi")
    r = rows(t)
    assert [x[0] for x in r[1:]] == csi_bucket_labels()
    assert r[0][:2] == ["csi_bucket", "n_hours"]
    assert t.document["edges"] == ["<=0.1"] + [f"({k / 10:.1f},{(k + 1) / 10:.1f}]" for k in range(1, 10)]


def test_plant_and_weekly(report):
    r = rows(build_table(report, "plant"))
    assert [x[0] for x in r[1:]] == list(report.plants)
    w = rows(build_table(report, "weekly"))
    assert len(w) == len(report.folds) + 1
    with pytest.raises(ValueError):
        build_table(report, "season")


@pytest.mark.parametrize("key", TABLE_KEYS)
def test_svg_is_wellformed(report, key):
    root = ET.fromstring(build_table(report, key).svg)
    assert root.tag.endswith("svg")
    texts = [e.text for e in root.iter() if e.tag.endswith("text")]
    assert "nMAE (%)" in texts and "gb" in texts and "knn" in texts


def test_charts_handle_gaps_and_empty():
    svg = line_chart(["a", "b", "c", "d"], {"x": [1.0, None, 2.0, 3.0]}, "t", "x", "y")
    root = ET.fromstring(svg)
    tags = [e.tag.split("}")[-1] for e in root.iter()]
    assert tags.count("polyline") == 1 and tags.count("circle") == 1
    ET.fromstring(bar_chart([], {}, "t", "x", "y"))
    ET.fromstring(bar_chart(["a"], {"m": [None]}, "t <&>", "x", "y"))
