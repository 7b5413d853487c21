"""Binary classification metrics and the four-row ablation protocol."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ContractError, TapaError

if TYPE_CHECKING:
    from .config import ExperimentConfig
    from .corpus import QuestionPair
    from .model import TapaModel

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    f1: float
    precision: float
    recall: float
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int
    dataset: str = ""
    config_fingerprint: str = ""

    @property
    def size(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def f1_score(predictions, labels, dataset: str = "", fingerprint: str = "") -> EvalReport:
    """Positive-class F1; any zero denominator yields 0 for that ratio."""
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    gold = np.asarray(labels, dtype=np.int64).ravel()
    if pred.shape != gold.shape:
        raise ContractError(f"{pred.size} predictions but {gold.size} labels")
    if pred.size == 0:
        raise ContractError("cannot score an empty prediction set")
    tp = int(np.sum((pred == 1) & (gold == 1)))
    fp = int(np.sum((pred == 1) & (gold == 0)))
    fn = int(np.sum((pred == 0) & (gold == 1)))
    tn = int(np.sum((pred == 0) & (gold == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(f1, precision, recall, (tp + tn) / pred.size, tp, fp, fn, tn,
                      dataset, fingerprint)


def evaluate(model: "TapaModel", pairs: Sequence["QuestionPair"], dataset: str = "") -> EvalReport:
    return f1_score(model.predict(pairs), [p.label for p in pairs], dataset,
                    model.config.fingerprint())


# ---------------------------------------------------------------------------
# ablation

ABLATION_ROWS = ("full", "-topics", "-contextual", "late fusion")


@dataclass
class AblationRow:
    name: str
    config: "ExperimentConfig"
    report: EvalReport | None
    changes: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class AblationTable:
    rows: list[AblationRow]

    def to_tsv(self) -> str:
        lines = ["variant\tf1\tprecision\trecall\taccuracy\tchanges\terror"]
        for r in self.rows:
            changes = ";".join(f"{k}={v}" for k, v in r.changes.items()) or "-"
            if r.report is None:
                lines.append(f"{r.name}\tnan\tnan\tnan\tnan\t{changes}\t{r.error}")
            else:
                m = r.report
                lines.append(f"{r.name}\t{m.f1:.4f}\t{m.precision:.4f}\t{m.recall:.4f}\t"
                             f"{m.accuracy:.4f}\t{changes}\t-")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max(len(r.name) for r in self.rows)
        out = [f"{'variant':<{width}}  F1"]
        for r in self.rows:
            score = f"{100 * r.report.f1:5.1f}" if r.report else f"failed: {r.error}"
            out.append(f"{r.name:<{width}}  {score}")
        return "\n".join(out) + "\n"

    def to_json(self) -> str:
        return json.dumps([{"variant": r.name, "changes": r.changes, "error": r.error,
                            "report": r.report.as_dict() if r.report else None}
                           for r in self.rows], indent=2)


def config_diff(base: "ExperimentConfig", other: "ExperimentConfig") -> dict:
    a, b = dataclasses.asdict(base), dataclasses.asdict(other)
    return {k: b[k] for k in a if a[k] != b[k]}


def ablation_configs(base: "ExperimentConfig", late: "ExperimentConfig | None" = None):
    """The four variants; each differs from ``base`` only in the ablated component."""
    late = late or base.replace(fusion="late")
    return [("full", base),
            ("-topics", base.replace(use_topics=False)),
            ("-contextual", base.replace(contextual=False)),
            ("late fusion", late)]


def run_ablation(base: "ExperimentConfig", train_pairs, dev_pairs, test_pairs,
                 late_config: "ExperimentConfig | None" = None, topic_model=None,
                 contextual=None, dataset: str = "") -> AblationTable:
    from .train import train

    rows = []
    for name, cfg in ablation_configs(base, late_config):
        changes = config_diff(base, cfg)
        try:
            model, _ = train(cfg, train_pairs, dev_pairs,
                             topic_model if cfg.use_topics else None, contextual)
            report = evaluate(model, test_pairs, dataset)
            rows.append(AblationRow(name, cfg, report, changes))
            logger.info("ablation %-12s F1 %.4f", name, report.f1)
        except (TapaError, OSError) as exc:
            logger.error("ablation row %s failed: %s", name, exc)
            rows.append(AblationRow(name, cfg, None, changes, str(exc)))
    return AblationTable(rows)
