"""Checkpoint-driven extraction over images: detect, read, tag, emit JSON.

This path consumes images only; ground truth never enters it. Each input
produces one JSON record (written per document when an output directory is
given) plus an optional overlay PNG with the detected boxes drawn in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .corpus.store import load_image
from .model import DocumentModel, InferenceResult
from .training import load_checkpoint

RESULT_SCHEMA_VERSION = 1
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class PipelineOutcome:
    records: list[dict]
    n_ok: int
    n_failed: int


def result_record(name: str, res: InferenceResult) -> dict:
    entities = {k: list(v) for k, v in sorted(res.entities.items())}
    details = {
        k: [
            {"value": v, "box": int(b)}
            for v, b in zip(res.entities[k], res.entity_sources[k])
        ]
        for k in entities
    }
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "image": name,
        "boxes": [[float(x) for x in row] for row in res.boxes],
        "scores": [float(s) for s in res.scores],
        "texts": list(res.texts),
        "tags": [list(t) for t in res.tags],
        "entities": entities,
        "entity_details": details,
    }


def draw_overlay(image: np.ndarray, boxes: np.ndarray, path: Path) -> None:
    arr = np.clip(image, 0.0, 1.0)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    img = Image.fromarray((arr * 255).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(img)
    for x0, y0, x1, y1 in boxes:
        draw.rectangle([float(x0), float(y0), float(x1), float(y1)], outline=(255, 0, 0))
    img.save(path)


def list_inputs(source: str | Path) -> list[Path]:
    source = Path(source)
    if source.is_dir():
        return sorted(
            p for p in source.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
        )
    return [source]


def run_pipeline(
    source: str | Path,
    checkpoint: str | Path | DocumentModel,
    out_dir: str | Path | None = None,
    overlay: bool = False,
    score_thresh: float = 0.5,
    nms_iou: float = 0.3,
    max_boxes: int = 100,
) -> PipelineOutcome:
    """Extract entities from an image file or a directory of images.

    Unreadable inputs become per-file error records instead of aborting the
    run; callers treat "every file failed" as the only fatal case.
    """
    model = (
        checkpoint
        if isinstance(checkpoint, DocumentModel)
        else load_checkpoint(checkpoint).model
    )
    model.eval()
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    records: list[dict] = []
    n_ok = n_failed = 0
    for path in list_inputs(source):
        try:
            image = load_image(path)
            res = model.infer(
                image,
                score_thresh=score_thresh,
                nms_iou=nms_iou,
                max_boxes=max_boxes,
            )
            record = result_record(path.name, res)
            n_ok += 1
        except Exception as exc:  # per-file isolation is the contract here
            record = {
                "schema_version": RESULT_SCHEMA_VERSION,
                "image": path.name,
                "error": f"{type(exc).__name__}: {exc}",
            }
            n_failed += 1
        records.append(record)
        if out is not None:
            with open(out / f"{path.stem}.json", "w") as fh:
                json.dump(record, fh, indent=2, sort_keys=True)
                fh.write("\n")
            if overlay and "error" not in record:
                draw_overlay(
                    load_image(path), np.asarray(record["boxes"]), out / f"{path.stem}_overlay.png"
                )
    return PipelineOutcome(records=records, n_ok=n_ok, n_failed=n_failed)
