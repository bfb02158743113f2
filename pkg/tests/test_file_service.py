import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from src.models.estimates import ConcentrationEstimate, PropertyTally, Verdict
from src.models.experiment import ExperimentConfig, ResultRecord
from src.services.file_service import CSV_COLUMNS, FileService

GOLDEN = Path(__file__).parent / "data" / "golden_concentration.csv"
SVG = "{http://www.w3.org/2000/svg}"


def _estimate(eps, p_hat, ci_low, ci_high, successes):
    return ConcentrationEstimate(
        inequality="gaussian_shell", set_id="halfspace-e1", eps1=eps, eps2=eps, p_hat=p_hat,
        ci_low=ci_low, ci_high=ci_high, bound=2 * eps, successes=successes, samples=10_000, seed=5,
        verdict=Verdict.PASS,
    )


@pytest.fixture
def record():
    config = ExperimentConfig(experiment="gaussian-concentration", k=1, n=1, family="gaussian", samples=10_000, seed=5,
                              eps=[0.0, 0.05, 0.1])
    return ResultRecord(config=config, wall_time_s=1.5, concentration=[
        _estimate(0.0, 0.0, 0.0, 0.0003, 0),
        _estimate(0.05, 0.04, 0.035, 0.045, 400),
        _estimate(0.1, 0.08, 0.074, 0.086, 800),
    ])


def test_csv_matches_golden_file(record, tmp_path):
    FileService.emit(record, "csv", tmp_path / "out.csv")
    assert (tmp_path / "out.csv").read_text(encoding="utf-8") == GOLDEN.read_text(encoding="utf-8")


def test_csv_header_is_fixed(record, tmp_path):
    FileService.emit(record, "csv", tmp_path / "nested" / "dir" / "out.csv")
    with open(tmp_path / "nested" / "dir" / "out.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4


def test_property_rows_carry_their_rate(record):
    tally = PropertyTally(property="norm_bound", scenario="ball", probes=200, violations=0, worst_margin=0.01,
                          tolerance=1e-9, verdict=Verdict.PASS)
    rows = FileService.rows(record.model_copy(update={"properties": [tally]}))
    assert rows[-1]["set_id"] == "norm_bound:ball"
    assert rows[-1]["p_hat"] == 0.0
    assert rows[-1]["bound"] == 0.0
    assert rows[-1]["samples"] == 200


def test_json_round_trip(record, tmp_path):
    FileService.emit(record, "json", tmp_path / "out.json")
    assert FileService.read_json(tmp_path / "out.json") == record


def test_svg_has_one_polyline_per_series(record, tmp_path):
    tally = PropertyTally(property="norm_bound", scenario="ball", probes=200, violations=0, worst_margin=0.01,
                          tolerance=1e-9, verdict=Verdict.PASS)
    FileService.emit(record.model_copy(update={"properties": [tally]}), "svg", tmp_path / "out.svg")
    root = ET.parse(tmp_path / "out.svg").getroot()
    polylines = root.findall(f"{SVG}polyline")
    # the shell group has all four series; the property group has no confidence limits
    assert len(polylines) == 6
    assert {p.get("data-series") for p in polylines} == {"p_hat", "ci_low", "ci_high", "bound"}
    shell = [p for p in polylines if p.get("data-set") == "gaussian_shell:halfspace-e1"]
    assert all(len(p.get("points").split()) == 3 for p in shell)


def test_unknown_format(record, tmp_path):
    with pytest.raises(ValueError):
        FileService.emit(record, "xlsx", tmp_path / "out.xlsx")
