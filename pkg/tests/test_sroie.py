"""Receipt-dataset ingestion: box-file parsing, tag derivation, load report."""

import json

import numpy as np
import pytest
from PIL import Image

from docread.corpus.sroie import (
    SROIE_SCHEMA,
    SroieParseError,
    derive_tags,
    load_sroie,
    parse_box_line,
)
from docread.iob import is_well_formed


def write_split(root, docs):
    """docs: {stem: (size, box_lines, keys_or_None)}; returns the split dir."""
    for sub in ("img", "box", "key"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for stem, (size, lines, keys) in docs.items():
        Image.fromarray(np.full(size, 255, np.uint8)).save(root / "img" / f"{stem}.jpg")
        (root / "box" / f"{stem}.txt").write_text("\n".join(lines) + "\n")
        if keys is not None:
            (root / "key" / f"{stem}.json").write_text(json.dumps(keys))
    return root


class TestParseBoxLine:
    def test_axis_aligned_quad(self):
        box, text = parse_box_line("10,20,110,20,110,44,10,44,HELLO WORLD")
        assert box == (10.0, 20.0, 110.0, 44.0)
        assert text == "HELLO WORLD"

    def test_rotated_quad_takes_extremes(self):
        box, _ = parse_box_line("50,10,90,30,70,60,30,40,x")
        assert box == (30.0, 10.0, 90.0, 60.0)

    def test_transcript_keeps_commas(self):
        _, text = parse_box_line("0,0,10,0,10,10,0,10,TOTAL: 1,234.00")
        assert text == "TOTAL: 1,234.00"

    def test_twenty_hand_checked_lines(self):
        # Rectangles computed by hand from the quads (min/max per axis).
        cases = [
            ("0,0,10,0,10,10,0,10,a", (0, 0, 10, 10)),
            ("5,5,25,5,25,15,5,15,b", (5, 5, 25, 15)),
            ("100,40,220,40,220,80,100,80,c", (100, 40, 220, 80)),
            ("7,3,57,3,57,21,7,21,d", (7, 3, 57, 21)),
            ("30,10,10,10,10,30,30,30,e", (10, 10, 30, 30)),  # reversed order
            ("12,60,88,62,86,90,14,88,f", (12, 60, 88, 90)),  # slight skew
            ("200,5,260,5,260,25,200,25,g", (200, 5, 260, 25)),
            ("1,1,2,1,2,2,1,2,h", (1, 1, 2, 2)),
            ("0,100,500,100,500,140,0,140,i", (0, 100, 500, 140)),
            ("40,40,60,20,80,40,60,60,j", (40, 20, 80, 60)),  # diamond
            ("15,7,115,9,113,31,13,29,k", (13, 7, 115, 31)),
            ("22,0,44,0,44,18,22,18,l", (22, 0, 44, 18)),
            ("3,3,303,3,303,33,3,33,m", (3, 3, 303, 33)),
            ("250,250,350,250,350,290,250,290,n", (250, 250, 350, 290)),
            ("9,9,19,9,19,19,9,19,o", (9, 9, 19, 19)),
            ("66,120,166,118,168,142,68,144,p", (66, 118, 168, 144)),
            ("0,0,640,0,640,32,0,32,q", (0, 0, 640, 32)),
            ("75,75,85,75,85,95,75,95,r", (75, 75, 85, 95)),
            ("120,14,180,14,180,34,120,34,s", (120, 14, 180, 34)),
            ("31,27,131,27,131,47,31,47,t", (31, 27, 131, 47)),
        ]
        for line, want in cases:
            box, _ = parse_box_line(line)
            assert box == tuple(float(v) for v in want), line

    def test_short_line_raises_with_location(self):
        with pytest.raises(SroieParseError, match="box/x.txt:3"):
            parse_box_line("1,2,3", where="box/x.txt:3")

    def test_non_numeric_raises(self):
        with pytest.raises(SroieParseError, match="non-numeric"):
            parse_box_line("a,0,10,0,10,10,0,10,text")


class TestDeriveTags:
    def test_single_match(self):
        tags, matched = derive_tags(
            ["TOTAL 9.00"], [(0, 0, 10, 10)], {"total": "9.00"}
        )
        assert tags[0] == ["O"] * 6 + ["B-total", "I-total", "I-total", "I-total"]
        assert matched == {"total": True}

    def test_longest_relative_match_wins(self):
        # "12.00" covers all of the second transcript but a fraction of the first.
        tags, _ = derive_tags(
            ["AMOUNT DUE 12.00 THANKS", "12.00"],
            [(0, 0, 10, 10), (0, 20, 10, 30)],
            {"total": "12.00"},
        )
        assert all(t == "O" for t in tags[0])
        assert tags[1][0] == "B-total"

    def test_tie_breaks_topmost(self):
        tags, _ = derive_tags(
            ["9.00", "9.00"],
            [(0, 50, 10, 60), (0, 10, 10, 20)],
            {"total": "9.00"},
        )
        assert all(t == "O" for t in tags[0])
        assert tags[1][0] == "B-total"

    def test_unmatched_value_reported(self):
        tags, matched = derive_tags(
            ["SOME SHOP"], [(0, 0, 10, 10)], {"address": "12 LONG ROAD\nTOWN"}
        )
        assert matched == {"address": False}
        assert all(t == "O" for t in tags[0])

    def test_empty_value_unmatched(self):
        _, matched = derive_tags(["X"], [(0, 0, 1, 1)], {"date": "  "})
        assert matched == {"date": False}

    def test_overlapping_values_do_not_collide(self):
        # Second entity's only candidate span is already claimed; it must not
        # overwrite the first entity's tags.
        tags, matched = derive_tags(
            ["ABC"], [(0, 0, 1, 1)], {"company": "ABC", "address": "ABC"}
        )
        claimed = [t.split("-")[-1] for t in tags[0]]
        assert len(set(claimed)) == 1
        assert sorted(matched.values()) == [False, True]

    def test_tags_always_well_formed(self):
        rng = np.random.default_rng([81, 0])
        words = ["SHOP", "12.00", "MAIN ST", "2019-05-01", "RM", "TAX"]
        for _ in range(200):
            transcripts = [
                " ".join(rng.choice(words, size=rng.integers(1, 4)))
                for _ in range(rng.integers(1, 4))
            ]
            boxes = [(0.0, 10.0 * i, 50.0, 10.0 * i + 8) for i in range(len(transcripts))]
            entities = {
                "total": "12.00" if rng.random() < 0.7 else "99.99",
                "date": "2019-05-01",
            }
            tags, _ = derive_tags(transcripts, boxes, entities)
            for t in tags:
                assert is_well_formed(t)


class TestLoadSroie:
    def make_docs(self):
        return {
            "r001": (
                (64, 48),
                [
                    "2,2,46,2,46,12,2,12,COFFEE CORNER",
                    "2,20,30,20,30,30,2,30,TOTAL 8.50",
                    "2,34,26,34,26,44,2,44,2020-02-02",
                ],
                {"company": "COFFEE CORNER", "total": "8.50", "date": "2020-02-02"},
            ),
            "r002": (
                (64, 48),
                ["4,4,44,4,44,14,4,14,NO KEYS HERE"],
                None,
            ),
        }

    def test_loads_fixture_tree(self, tmp_path):
        split = write_split(tmp_path, self.make_docs())
        samples = load_sroie(split)
        assert len(samples) == 2
        assert samples.report.n_samples == 2
        assert samples.report.missing_key_files == 1
        first = samples[0]
        assert first.transcripts[0] == "COFFEE CORNER"
        assert first.char_tags[0][0] == "B-company"
        assert first.entity_map()["total"] == ["8.50"]

    def test_schema_matches_official_keys(self):
        assert SROIE_SCHEMA.entity_names == ("company", "date", "address", "total")

    def test_malformed_line_raises_named_location(self, tmp_path):
        docs = {"bad": ((32, 32), ["1,2,3,nope"], None)}
        split = write_split(tmp_path, docs)
        with pytest.raises(SroieParseError, match="bad.txt:1"):
            load_sroie(split)

    def test_degenerate_boxes_dropped_and_counted(self, tmp_path):
        docs = {
            "r": (
                (32, 32),
                [
                    "5,5,5,5,5,5,5,5,POINT",  # zero area
                    "2,2,30,2,30,12,2,12,KEEP ME",
                    "0,0,10,0,10,8,0,8,",  # empty transcript
                ],
                None,
            )
        }
        split = write_split(tmp_path, docs)
        samples = load_sroie(split)
        assert samples.report.dropped_boxes == 2
        assert samples[0].transcripts == ["KEEP ME"]

    def test_out_of_page_coordinates_clamped(self, tmp_path):
        docs = {"r": ((32, 32), ["-5,-5,40,-5,40,20,-5,20,WIDE"], None)}
        split = write_split(tmp_path, docs)
        samples = load_sroie(split)
        x0, y0, x1, y1 = samples[0].boxes[0]
        assert x0 == 0.0 and y0 == 0.0 and x1 == 32.0 and y1 == 20.0

    def test_missing_box_file_raises(self, tmp_path):
        split = write_split(tmp_path, self.make_docs())
        (split / "box" / "r001.txt").unlink()
        with pytest.raises(FileNotFoundError, match="r001"):
            load_sroie(split)

    def test_missing_directories_raise(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="img"):
            load_sroie(tmp_path / "nothing")

    def test_report_tracks_unmatched(self, tmp_path):
        docs = {
            "r": (
                (32, 32),
                ["2,2,30,2,30,12,2,12,SHORT LINE"],
                {"address": "A VALUE NOWHERE", "company": "SHORT LINE"},
            )
        }
        split = write_split(tmp_path, docs)
        samples = load_sroie(split)
        assert samples.report.matched_entities == {"company": 1}
        assert samples.report.unmatched_entities == {"address": 1}
        assert samples.report.unmatched == [("r", "address", "A VALUE NOWHERE")]
