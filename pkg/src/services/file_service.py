import csv
import logging
import xml.etree.ElementTree as ET
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Literal, Union

from src.models.experiment import ResultRecord

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "experiment", "k", "n", "family", "set_id", "eps1", "eps2", "gamma",
    "p_hat", "ci_low", "ci_high", "bound", "verdict", "samples", "seed",
)

SVG_WIDTH, SVG_HEIGHT, SVG_MARGIN = 720, 480, 48
SERIES_COLOURS = {"p_hat": "#1f77b4", "ci_low": "#9ecae1", "ci_high": "#9ecae1", "bound": "#d62728"}

OutputFormat = Literal["csv", "json", "svg"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class FileService:
    @staticmethod
    def rows(record: ResultRecord) -> List[Dict[str, object]]:
        """
        One row per probed set and eps value, in CSV column order.

        Concentration estimates map field for field. Discrepancy records put the
        observed |P(W in A) - P(Z in A)| in p_hat with its confidence band;
        property tallies put the violation rate (or the measured value) in p_hat
        against a zero bound.
        """
        config = record.config
        base = {"experiment": config.experiment, "k": config.k, "n": config.n, "family": config.family}
        rows = []
        for est in record.concentration:
            rows.append({**base, "set_id": f"{est.inequality}:{est.set_id}", "eps1": est.eps1, "eps2": est.eps2,
                         "gamma": est.gamma, "p_hat": est.p_hat, "ci_low": est.ci_low, "ci_high": est.ci_high,
                         "bound": est.bound, "verdict": est.verdict.value, "samples": est.samples, "seed": est.seed})
        for est in record.discrepancy:
            for rec in est.records:
                rows.append({**base, "set_id": f"{est.set_family}:{rec.set_id}", "eps1": None, "eps2": None,
                             "gamma": est.gamma, "p_hat": rec.discrepancy,
                             "ci_low": max(rec.discrepancy - rec.half_width, 0.0),
                             "ci_high": rec.discrepancy + rec.half_width, "bound": est.bound,
                             "verdict": est.verdict.value, "samples": est.samples, "seed": est.seed})
        for est in record.smoothing:
            rows.append({**base, "set_id": f"smoothing_gap:{est.set_id}", "eps1": est.eps, "eps2": None,
                         "gamma": est.gamma, "p_hat": est.indicator_gap,
                         "ci_low": max(est.indicator_gap - est.indicator_half_width, 0.0),
                         "ci_high": est.indicator_gap + est.indicator_half_width, "bound": est.rhs,
                         "verdict": est.verdict.value, "samples": est.samples, "seed": est.seed})
        for est in record.identity:
            rows.append({**base, "set_id": f"stein_identity:{est.set_id}", "eps1": est.eps, "eps2": None,
                         "gamma": None, "p_hat": est.lhs, "ci_low": None, "ci_high": None, "bound": est.rhs,
                         "verdict": est.verdict.value, "samples": est.samples, "seed": est.seed})
        for tally in record.properties:
            p_hat = tally.value if tally.value is not None else (tally.violations / tally.probes if tally.probes else 0.0)
            rows.append({**base, "set_id": f"{tally.property}:{tally.scenario}", "eps1": None, "eps2": None,
                         "gamma": None, "p_hat": p_hat, "ci_low": None, "ci_high": None,
                         "bound": tally.tolerance if tally.value is not None else 0.0,
                         "verdict": tally.verdict.value, "samples": tally.probes, "seed": config.seed})
        return rows

    @staticmethod
    def write_csv(record: ResultRecord, path: Path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in FileService.rows(record):
                writer.writerow([_fmt(row[column]) for column in CSV_COLUMNS])

    @staticmethod
    def write_json(record: ResultRecord, path: Path):
        Path(path).write_text(record.model_dump_json(indent=2), encoding="utf-8")

    @staticmethod
    def read_json(path: Union[str, Path]) -> ResultRecord:
        return ResultRecord.model_validate_json(Path(path).read_text(encoding="utf-8"))

    @staticmethod
    def _series(record: ResultRecord) -> "OrderedDict[str, List[Dict[str, object]]]":
        """Rows grouped per set; concentration rows are ordered by eps1 + eps2, the rest by position."""
        groups: "OrderedDict[str, List[Dict[str, object]]]" = OrderedDict()
        for index, row in enumerate(FileService.rows(record)):
            if row["eps1"] is not None and row["set_id"].split(":", 1)[0].endswith("shell"):
                x = float(row["eps1"]) + float(row["eps2"] or 0.0)
                key = str(row["set_id"])
            else:
                x = float(index)
                key = str(row["set_id"]).split(":", 1)[0]
            groups.setdefault(key, []).append({**row, "x": x})
        for rows in groups.values():
            rows.sort(key=lambda r: r["x"])
        return groups

    @staticmethod
    def write_svg(record: ResultRecord, path: Path):
        """One <polyline> per (set, series) with p_hat, its confidence limits and the bound."""
        groups = FileService._series(record)
        xs = [r["x"] for rows in groups.values() for r in rows] or [0.0]
        ys = [float(r[s]) for rows in groups.values() for r in rows for s in SERIES_COLOURS if r[s] is not None] or [0.0]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(0.0, min(ys)), max(ys)
        x_span = (x_hi - x_lo) or 1.0
        y_span = (y_hi - y_lo) or 1.0

        def to_px(x: float, y: float) -> str:
            px = SVG_MARGIN + (x - x_lo) / x_span * (SVG_WIDTH - 2 * SVG_MARGIN)
            py = SVG_HEIGHT - SVG_MARGIN - (y - y_lo) / y_span * (SVG_HEIGHT - 2 * SVG_MARGIN)
            return f"{px:.2f},{py:.2f}"

        svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(SVG_WIDTH), height=str(SVG_HEIGHT),
                         viewBox=f"0 0 {SVG_WIDTH} {SVG_HEIGHT}")
        title = ET.SubElement(svg, "title")
        title.text = f"{record.config.experiment} k={record.config.k} n={record.config.n} {record.config.family}"
        ET.SubElement(svg, "line", x1=str(SVG_MARGIN), y1=str(SVG_HEIGHT - SVG_MARGIN),
                      x2=str(SVG_WIDTH - SVG_MARGIN), y2=str(SVG_HEIGHT - SVG_MARGIN), stroke="black")
        ET.SubElement(svg, "line", x1=str(SVG_MARGIN), y1=str(SVG_MARGIN),
                      x2=str(SVG_MARGIN), y2=str(SVG_HEIGHT - SVG_MARGIN), stroke="black")

        for key, rows in groups.items():
            for series, colour in SERIES_COLOURS.items():
                points = [to_px(r["x"], float(r[series])) for r in rows if r[series] is not None]
                if not points:
                    continue
                line = ET.SubElement(svg, "polyline", points=" ".join(points), fill="none", stroke=colour,
                                     **{"stroke-width": "1.5", "data-set": key, "data-series": series})
                if series.startswith("ci_"):
                    line.set("stroke-dasharray", "4 3")
        ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)

    @staticmethod
    def emit(record: ResultRecord, fmt: OutputFormat, path: Union[str, Path]):
        """
        Write a record as csv, json or svg.

        Args:
            record (ResultRecord): result of ExperimentService.run
            fmt (str): output format
            path: destination file; parent directories are created
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        writers = {"csv": FileService.write_csv, "json": FileService.write_json, "svg": FileService.write_svg}
        if fmt not in writers:
            raise ValueError(f"unknown output format {fmt!r}")
        writers[fmt](record, path)
        logger.info(f"wrote {fmt} output to {path}")
