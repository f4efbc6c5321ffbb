"""Reader for the SROIE receipt dataset file layout.

Expects one split directory arranged as::

    split_dir/
      img/NAME.jpg      (or .png)
      box/NAME.txt      lines "x1,y1,x2,y2,x3,y3,x4,y4,transcript"
      key/NAME.json     {"company": ..., "date": ..., "address": ..., "total": ...}

Box quadrilaterals are collapsed to their axis-aligned bounding rectangle.
Character tags are derived by locating each entity value as a substring of a
transcript; values that match no single transcript (line-spanning addresses,
OCR mismatches) stay untagged and are counted in the load report.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .. import iob
from .schema import DocumentSample, EntitySchema
from .store import load_image

log = logging.getLogger(__name__)

SROIE_SCHEMA = EntitySchema(("company", "date", "address", "total"))

_IMG_SUFFIXES = (".jpg", ".jpeg", ".png")


class SroieParseError(Exception):
    """A box file line that does not follow the official format."""


@dataclass
class SroieLoadReport:
    n_samples: int = 0
    missing_key_files: int = 0
    dropped_boxes: int = 0
    matched_entities: dict[str, int] = field(default_factory=dict)
    unmatched_entities: dict[str, int] = field(default_factory=dict)
    unmatched: list[tuple[str, str, str]] = field(default_factory=list)  # (sample, entity, value)

    def count(self, entity: str, matched: bool, sample: str = "", value: str = "") -> None:
        bucket = self.matched_entities if matched else self.unmatched_entities
        bucket[entity] = bucket.get(entity, 0) + 1
        if not matched:
            self.unmatched.append((sample, entity, value))


class SroieSamples(list):
    """List of DocumentSample with the load report attached."""

    def __init__(self, samples, report: SroieLoadReport):
        super().__init__(samples)
        self.report = report


def parse_box_line(line: str, where: str = "") -> tuple[tuple[float, float, float, float], str]:
    """One official line -> (axis-aligned rectangle, transcript)."""
    parts = line.split(",", 8)
    if len(parts) < 9:
        raise SroieParseError(f"{where}: expected 8 coordinates and a transcript, got {line!r}")
    try:
        coords = [float(v) for v in parts[:8]]
    except ValueError:
        raise SroieParseError(f"{where}: non-numeric coordinate in {line!r}") from None
    xs, ys = coords[0::2], coords[1::2]
    return (min(xs), min(ys), max(xs), max(ys)), parts[8]


def derive_tags(
    transcripts: list[str],
    boxes: list[tuple[float, float, float, float]],
    entities: dict[str, str],
) -> tuple[list[list[str]], dict[str, bool]]:
    """Tag entity values inside the transcripts they occur in.

    For each entity value the candidate transcripts are those containing the
    value as a substring; the winner is the one where the value covers the
    largest share of the transcript (longest relative match), ties broken by
    topmost then leftmost box. Only the first occurrence inside the winning
    transcript is tagged. Values matching nothing stay untagged.
    """
    tags = [[iob.OUTSIDE] * len(t) for t in transcripts]
    matched: dict[str, bool] = {}
    for name, value in entities.items():
        value = (value or "").strip()
        if not value:
            matched[name] = False
            continue
        candidates = []
        for i, text in enumerate(transcripts):
            pos = text.find(value)
            if pos < 0:
                continue
            share = len(value) / len(text)
            candidates.append((-share, boxes[i][1], boxes[i][0], i, pos))
        candidates.sort()
        matched[name] = False
        for _, _, _, i, pos in candidates:
            span = (name, pos, pos + len(value))
            if any(t != iob.OUTSIDE for t in tags[i][pos : pos + len(value)]):
                continue  # already claimed by another entity
            tags[i] = _merge_span(tags[i], span)
            matched[name] = True
            break
    return tags, matched


def _merge_span(tags: list[str], span: tuple[str, int, int]) -> list[str]:
    name, start, end = span
    out = list(tags)
    out[start] = f"B-{name}"
    for i in range(start + 1, end):
        out[i] = f"I-{name}"
    return out


def load_sroie(split_dir: str | Path, schema: EntitySchema = SROIE_SCHEMA) -> SroieSamples:
    """Load one SROIE split; returns samples (list) with a .report attribute.

    Malformed box lines raise SroieParseError with file and line number. A
    missing key file is tolerated: the sample loads with all-O tags and the
    report's missing counter is bumped.
    """
    root = Path(split_dir)
    img_dir, box_dir, key_dir = root / "img", root / "box", root / "key"
    if not img_dir.is_dir() or not box_dir.is_dir():
        raise FileNotFoundError(f"{root} does not contain img/ and box/ directories")
    report = SroieLoadReport()
    samples = []
    for img_path in sorted(p for p in img_dir.iterdir() if p.suffix.lower() in _IMG_SUFFIXES):
        stem = img_path.stem
        box_path = box_dir / f"{stem}.txt"
        if not box_path.exists():
            raise FileNotFoundError(f"missing box file for {img_path.name}: {box_path}")
        image = load_image(img_path)
        h, w = image.shape[:2]
        boxes, transcripts = [], []
        with box_path.open("r", encoding="utf-8", errors="replace") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                box, transcript = parse_box_line(line, where=f"{box_path}:{line_no}")
                x0 = min(max(box[0], 0.0), w)
                y0 = min(max(box[1], 0.0), h)
                x1 = min(max(box[2], 0.0), w)
                y1 = min(max(box[3], 0.0), h)
                if x0 >= x1 or y0 >= y1 or not transcript:
                    report.dropped_boxes += 1
                    continue
                boxes.append((x0, y0, x1, y1))
                transcripts.append(transcript)
        if not boxes:
            report.dropped_boxes += 1
            log.warning("skipping %s: no usable boxes", img_path.name)
            continue

        entities: dict[str, str] = {}
        key_path = key_dir / f"{stem}.json"
        if key_path.exists():
            with key_path.open("r", encoding="utf-8") as fh:
                raw = json.load(fh)
            entities = {k: str(v) for k, v in raw.items() if k in schema.entity_names}
        else:
            report.missing_key_files += 1
        char_tags, matched = derive_tags(transcripts, boxes, entities)
        for name, ok in matched.items():
            report.count(name, ok, sample=stem, value=entities.get(name, ""))
        samples.append(
            DocumentSample(
                image=image,
                boxes=boxes,
                transcripts=transcripts,
                char_tags=char_tags,
                layout_kind="variable",
                text_kind="structured",
                source=str(img_path),
            )
        )
        report.n_samples += 1
    return SroieSamples(samples, report)
