"""IOB tag sequences for character-level entity spans.

Tags are plain strings: ``O``, ``B-<entity>``, ``I-<entity>``. A span is a
half-open character interval ``(entity, start, end)`` within one transcript.
"""

from __future__ import annotations

OUTSIDE = "O"


def tags_from_spans(length: int, spans: list[tuple[str, int, int]]) -> list[str]:
    """Render non-overlapping entity spans into a tag sequence of `length`.

    Spans are half-open [start, end). Raises ValueError on out-of-range or
    overlapping spans.
    """
    tags = [OUTSIDE] * length
    for name, start, end in spans:
        if not (0 <= start < end <= length):
            raise ValueError(f"span {name}[{start}:{end}] out of range for length {length}")
        if any(t != OUTSIDE for t in tags[start:end]):
            raise ValueError(f"span {name}[{start}:{end}] overlaps an earlier span")
        tags[start] = f"B-{name}"
        for i in range(start + 1, end):
            tags[i] = f"I-{name}"
    return tags


def spans_from_tags(tags: list[str]) -> list[tuple[str, int, int]]:
    """Extract maximal entity runs, in reading order.

    An orphan I-tag (no open run of the same entity right before it) is
    repaired by treating it as a B-tag.
    """
    spans = []
    open_name = None
    open_start = 0
    for i, tag in enumerate(tags):
        if tag == OUTSIDE:
            if open_name is not None:
                spans.append((open_name, open_start, i))
                open_name = None
            continue
        kind, name = _split(tag)
        if kind == "B" or name != open_name:
            if open_name is not None:
                spans.append((open_name, open_start, i))
            open_name = name
            open_start = i
    if open_name is not None:
        spans.append((open_name, open_start, len(tags)))
    return spans


def decode_entities(tags: list[str], transcript: str) -> dict[str, list[str]]:
    """Map a tag sequence onto its transcript, yielding entity instances.

    Instances of the same entity are kept in reading order; every returned
    string is a substring of `transcript`.
    """
    if len(tags) != len(transcript):
        raise ValueError(f"{len(tags)} tags for {len(transcript)} characters")
    out: dict[str, list[str]] = {}
    for name, start, end in spans_from_tags(tags):
        out.setdefault(name, []).append(transcript[start:end])
    return out


def is_well_formed(tags: list[str]) -> bool:
    """True when no I-tag follows O or a tag of a different entity."""
    prev = OUTSIDE
    for tag in tags:
        if tag != OUTSIDE:
            kind, name = _split(tag)
            if kind == "I":
                if prev == OUTSIDE:
                    return False
                _, prev_name = _split(prev)
                if prev_name != name:
                    return False
        prev = tag
    return True


def _split(tag: str) -> tuple[str, str]:
    kind, sep, name = tag.partition("-")
    if kind not in ("B", "I") or not sep or not name:
        raise ValueError(f"malformed tag {tag!r}")
    return kind, name
