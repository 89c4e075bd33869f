"""Classification metrics, the cross-bank protocol and report rendering.

Precision of a class that is never predicted is 0 (so is its F1); weighted
averages use class support as weights.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .categories import CATEGORIES, CATEGORY_HEADERS, N_CLASSES, Category
from .data import Dataset
from .instructions import Window, make_windows

log = logging.getLogger(__name__)

DEFAULT_LENGTHS = (9, 4, 7, 14)
OVERALL_COLUMNS = ("Model", "Dataset", "Sequence Length", "Accuracy", "Precision", "Recall", "F1 (weighted)")
CLASSWISE_ORDER = (Category.CLOTHING, Category.GAS_STATIONS, Category.GROCERY, Category.OTHER)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    model: str
    dataset: str
    seq_len: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict[str, ClassMetrics]
    confusion: list[list[int]]
    n: int
    skipped: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class"] = {k: asdict(v) for k, v in self.per_class.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["per_class"] = {k: ClassMetrics(**v) for k, v in d["per_class"].items()}
        return cls(**d)


def _as_index(c) -> int:
    if isinstance(c, Category):
        return c.index
    i = int(c)
    if not 0 <= i < N_CLASSES:
        raise ValueError(f"class index {i} outside 0..{N_CLASSES - 1}")
    return i


def confusion_matrix(truths: Sequence, predictions: Sequence) -> np.ndarray:
    if len(truths) != len(predictions):
        raise ValueError(f"{len(truths)} truths vs {len(predictions)} predictions")
    if not truths:
        raise ValueError("cannot score an empty prediction set")
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(m, ([_as_index(t) for t in truths], [_as_index(p) for p in predictions]), 1)
    return m


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.divide(a, b, out=np.zeros_like(a, dtype=float), where=b > 0)


def compute_metrics(truths: Sequence, predictions: Sequence, model: str = "", dataset: str = "",
                    seq_len: int = 0, skipped: int = 0) -> MetricsReport:
    cm = confusion_matrix(truths, predictions)
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _safe_div(tp, predicted.astype(float))
    recall = _safe_div(tp, support.astype(float))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    n = int(cm.sum())
    w = support / n
    return MetricsReport(
        model=model, dataset=dataset, seq_len=seq_len,
        accuracy=float(tp.sum() / n),
        precision=float(w @ precision), recall=float(w @ recall), f1=float(w @ f1),
        per_class={c.value: ClassMetrics(float(precision[c.index]), float(recall[c.index]),
                                         float(f1[c.index]), int(support[c.index]))
                   for c in CATEGORIES},
        confusion=cm.tolist(), n=n, skipped=skipped,
    )


# -- protocol ----------------------------------------------------------------------

class Predictor(Protocol):
    name: str

    def predict_windows(self, windows: Sequence[Window]) -> list[Category]: ...


class ProtocolError(RuntimeError):
    pass


@dataclass
class ModelEntry:
    predictor: Predictor
    lengths: tuple[int, ...] = DEFAULT_LENGTHS


def run_protocol(entries: Iterable[ModelEntry | Predictor], bank_b: Dataset,
                 lengths: Sequence[int] = DEFAULT_LENGTHS) -> list[MetricsReport]:
    """One report per (model, length) on the held-out bank.

    Customers with fewer than k+1 transactions are skipped and counted.
    """
    windows = {}
    eligible = len(bank_b.profiles)
    reports = []
    for entry in entries:
        if not isinstance(entry, ModelEntry):
            entry = ModelEntry(entry, tuple(lengths))
        for k in entry.lengths:
            if k not in windows:
                windows[k] = make_windows(bank_b, k)
            ws, skipped = windows[k]
            if len(ws) + skipped != eligible:
                raise ProtocolError(f"k={k}: {len(ws)} evaluated + {skipped} skipped != {eligible}")
            if not ws:
                raise ProtocolError(f"k={k}: no {bank_b.name} customer has {k + 1} transactions")
            preds = entry.predictor.predict_windows(ws)
            reports.append(compute_metrics([w.label for w in ws], preds, entry.predictor.name,
                                           bank_b.name, k, skipped))
            log.info("%s k=%d acc=%.3f f1=%.3f", entry.predictor.name, k,
                     reports[-1].accuracy, reports[-1].f1)
    return reports


# -- rendering -----------------------------------------------------------------------

def _class_cell(r: MetricsReport, c: Category) -> str:
    m = r.per_class[c.value]
    return "-" if m.support == 0 else f"{m.f1:.3f}"


def overall_rows(reports: Sequence[MetricsReport]) -> list[list[str]]:
    return [[r.model, r.dataset, str(r.seq_len), f"{r.accuracy:.2f}", f"{r.precision:.2f}",
             f"{r.recall:.2f}", f"{r.f1:.2f}"] for r in reports]


def classwise_rows(reports: Sequence[MetricsReport]) -> list[list[str]]:
    return [[r.model, str(r.seq_len)] + [_class_cell(r, c) for c in CLASSWISE_ORDER] for r in reports]


CLASSWISE_COLUMNS = ("Model", "Sequence Length") + tuple(CATEGORY_HEADERS[c] for c in CLASSWISE_ORDER)


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _bold_best(reports: Sequence[MetricsReport], rows: list[list[str]], first: int) -> list[list[str]]:
    """Bold the best numeric cell of each column among rows with the same sequence length."""
    out = [list(r) for r in rows]
    for k in {r.seq_len for r in reports}:
        idx = [i for i, r in enumerate(reports) if r.seq_len == k]
        if len(idx) < 2:
            continue
        for col in range(first, len(rows[0])):
            vals = {i: float(rows[i][col]) for i in idx if rows[i][col] != "-"}
            if vals:
                best = max(vals.values())
                for i, v in vals.items():
                    if v == best:
                        out[i][col] = f"**{rows[i][col]}**"
    return out


def render_markdown(reports: Sequence[MetricsReport]) -> str:
    overall = _bold_best(reports, overall_rows(reports), 3)
    classwise = _bold_best(reports, classwise_rows(reports), 2)
    return (
        "# Next merchant category prediction\n\n"
        "Best value per column within each sequence length in bold.\n\n"
        "## Overall results\n\n" + _md_table(OVERALL_COLUMNS, overall) + "\n\n"
        "## Class-wise F1 scores\n\n" + _md_table(CLASSWISE_COLUMNS, classwise) + "\n"
    )


def render_csv(reports: Sequence[MetricsReport]) -> str:
    """One row per report: the overall columns followed by class-wise F1 columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(OVERALL_COLUMNS) + [f"F1 {CATEGORY_HEADERS[c]}" for c in CLASSWISE_ORDER])
    for o, c in zip(overall_rows(reports), classwise_rows(reports)):
        writer.writerow(o + c[2:])
    return buf.getvalue()


def render_json(reports: Sequence[MetricsReport]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=2, sort_keys=True) + "\n"


def load_reports(path: str | Path) -> list[MetricsReport]:
    return [MetricsReport.from_dict(d) for d in json.loads(Path(path).read_text())["reports"]]


RENDERERS = {"markdown": ("report.md", render_markdown), "csv": ("report.csv", render_csv),
             "json": ("report.json", render_json)}


def render_report(reports: Sequence[MetricsReport], directory: str | Path,
                  formats: Sequence[str] = ("markdown", "csv", "json")) -> list[Path]:
    if not reports:
        raise ValueError("no reports to render")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for fmt in formats:
        if fmt not in RENDERERS:
            raise ValueError(f"unknown report format {fmt!r}")
        name, fn = RENDERERS[fmt]
        path = directory / name
        path.write_text(fn(reports), encoding="utf-8", newline="\n")
        out.append(path)
    return out


@dataclass
class OrderingCheck:
    name: str
    passed: bool
    detail: str = field(default="")


def ordering_checks(reports: Sequence[MetricsReport], seq_len: int = 9, margin: float = 0.05,
                    names: dict | None = None) -> list[OrderingCheck]:
    """Fine-tuned LM vs baseline / raw LM, and each sequence model vs baseline, at ``seq_len``."""
    names = names or {}
    f1 = {r.model: r.f1 for r in reports if r.seq_len == seq_len}
    lm, raw = names.get("lm", "Tiny LM + LoRA"), names.get("raw", "Tiny LM (Raw Model)")
    base = names.get("baseline", "Baseline (Averaging)")
    checks = []

    def add(name, ok, detail):
        checks.append(OrderingCheck(name, bool(ok), detail))

    if {lm, base} <= f1.keys():
        add("lm_vs_baseline", f1[lm] >= f1[base] + margin, f"{f1[lm]:.4f} >= {f1[base]:.4f} + {margin}")
    if {lm, raw} <= f1.keys():
        add("lm_vs_raw", f1[lm] > f1[raw], f"{f1[lm]:.4f} > {f1[raw]:.4f}")
    for seq in names.get("sequence_models", ("LSTM", "CNN")):
        if {seq, base} <= f1.keys():
            add(f"{seq.lower()}_vs_baseline", f1[seq] >= f1[base], f"{f1[seq]:.4f} >= {f1[base]:.4f}")
    return checks
