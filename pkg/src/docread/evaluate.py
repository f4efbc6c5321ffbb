"""Entity-level scoring and model evaluation helpers.

An extracted value counts only on exact string match (after optional trim and
case-fold) against an unconsumed gold value of the same entity; precision,
recall, and F1 come from the summed match counts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus.schema import EntitySchema
from .detector import DetectionOutput, match_boxes


@dataclass(frozen=True)
class EntityScore:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalReport:
    per_entity: dict[str, EntityScore]
    micro: EntityScore
    fingerprint: str

    @property
    def macro_f1(self) -> float:
        if not self.per_entity:
            return 0.0
        return sum(s.f1 for s in self.per_entity.values()) / len(self.per_entity)

    def as_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "micro": {
                "tp": self.micro.tp,
                "fp": self.micro.fp,
                "fn": self.micro.fn,
                "precision": self.micro.precision,
                "recall": self.micro.recall,
                "f1": self.micro.f1,
            },
            "macro_f1": self.macro_f1,
            "per_entity": {
                name: {
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                }
                for name, s in self.per_entity.items()
            },
        }


def normalize_value(value: str, trim: bool = True, casefold: bool = True) -> str:
    if trim:
        value = value.strip()
    if casefold:
        value = value.casefold()
    return value


def _match_counts(
    pred: list[str], gold: list[str], trim: bool, casefold: bool
) -> tuple[int, int, int]:
    """Greedy in-order one-to-one matching on normalized strings."""
    remaining = [normalize_value(g, trim, casefold) for g in gold]
    tp = 0
    for value in pred:
        v = normalize_value(value, trim, casefold)
        if v in remaining:
            remaining.remove(v)
            tp += 1
    return tp, len(pred) - tp, len(remaining)


def score(
    pred: dict[str, list[str]],
    gold: dict[str, list[str]],
    schema: EntitySchema | None = None,
    trim: bool = True,
    casefold: bool = True,
) -> EvalReport:
    """Score one document's extracted entity map against its gold map."""
    known = set(gold)
    if schema is not None:
        known |= set(schema.entity_names)
        unknown = set(pred) - known
        if unknown:
            warnings.warn(f"predictions contain unknown entities: {sorted(unknown)}")
    per: dict[str, EntityScore] = {}
    for name in sorted(known | set(pred)):
        tp, fp, fn = _match_counts(pred.get(name, []), gold.get(name, []), trim, casefold)
        per[name] = EntityScore(tp, fp, fn)
    return _report(per, trim, casefold)


def merge_reports(reports: list[EvalReport]) -> EvalReport:
    """Pool per-document reports into one corpus-level report by summing counts."""
    if not reports:
        raise ValueError("no reports to merge")
    fingerprint = reports[0].fingerprint
    totals: dict[str, list[int]] = {}
    for rep in reports:
        if rep.fingerprint != fingerprint:
            raise ValueError("cannot merge reports with different fingerprints")
        for name, s in rep.per_entity.items():
            t = totals.setdefault(name, [0, 0, 0])
            t[0] += s.tp
            t[1] += s.fp
            t[2] += s.fn
    per = {name: EntityScore(*t) for name, t in sorted(totals.items())}
    micro = EntityScore(
        sum(s.tp for s in per.values()),
        sum(s.fp for s in per.values()),
        sum(s.fn for s in per.values()),
    )
    return EvalReport(per_entity=per, micro=micro, fingerprint=fingerprint)


def _report(per: dict[str, EntityScore], trim: bool, casefold: bool) -> EvalReport:
    micro = EntityScore(
        sum(s.tp for s in per.values()),
        sum(s.fp for s in per.values()),
        sum(s.fn for s in per.values()),
    )
    return EvalReport(
        per_entity=per,
        micro=micro,
        fingerprint=f"exact-match|trim={trim}|casefold={casefold}",
    )


def evaluate_model(model, samples, use_gt_boxes: bool = True, **infer_kwargs) -> dict:
    """Corpus metrics: entity report, sequence accuracy, (GT-box path by default)."""
    reports = []
    seq_hits = seq_total = 0
    for sample in samples:
        boxes = np.asarray(sample.boxes, dtype=np.float64) if use_gt_boxes else None
        res = model.infer(sample.image, boxes=boxes, **infer_kwargs)
        if use_gt_boxes:
            for text, gt in zip(res.texts, sample.transcripts):
                seq_total += 1
                seq_hits += int(text == gt)
        reports.append(score(res.entities, sample.entity_map(), schema=model.schema))
    report = merge_reports(reports)
    return {
        "report": report,
        "entity_f1": report.micro.f1,
        "seq_acc": seq_hits / seq_total if seq_total else 0.0,
    }


def detection_recall(
    model,
    samples,
    iou: float = 0.5,
    score_thresh: float = 0.5,
    nms_iou: float = 0.3,
    max_boxes: int = 100,
) -> float:
    """Fraction of GT boxes matched at the IoU threshold by detected boxes."""
    matched = total = 0
    for sample in samples:
        fmap = model.backbone.extract_features(sample.image)
        det: DetectionOutput = model.det_head.detect(fmap, score_thresh, nms_iou, max_boxes)
        gt = np.asarray(sample.boxes, dtype=np.float64)
        pairs = match_boxes(det, gt, iou_thresh=iou)
        matched += len(pairs)
        total += len(gt)
    return matched / total if total else 0.0
