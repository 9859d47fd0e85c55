"""Buggy-line annotation from unified diffs (buggy version to fixed version).

Lines deleted or modified in the buggy version show up as '-' lines and are
annotated buggy at their old-file line numbers. A fix consisting purely of
added lines leaves nothing to annotate: the bug is an omission and such
annotations are excluded from ranking evaluation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .spectra import LineKey

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


@dataclass
class BugAnnotation:
    bug_id: str
    buggy_lines: set[LineKey] = field(default_factory=set)

    @property
    def omission_only(self) -> bool:
        return not self.buggy_lines


def _clean_path(raw: str) -> str:
    path = raw.split("\t")[0].strip()
    for prefix in ("a/", "b/"):
        if path.startswith(prefix):
            return path[len(prefix):]
    return path


def annotate_from_diff(diff_text: str, bug_id: str = "") -> BugAnnotation:
    """Collect (file, old line number) for every '-' line of a unified diff."""
    annotation = BugAnnotation(bug_id=bug_id)
    current_file: str | None = None
    old_line = 0
    in_hunk = False
    hunk_index = 0
    for raw in diff_text.splitlines():
        if raw.startswith("--- "):
            current_file = _clean_path(raw[4:])
            in_hunk = False
            continue
        if raw.startswith("+++ "):
            continue
        if raw.startswith("@@"):
            hunk_index += 1
            m = _HUNK_RE.match(raw)
            if not m:
                raise DataError(f"malformed hunk header (hunk {hunk_index}): {raw!r}")
            if current_file is None:
                raise DataError(f"hunk {hunk_index} appears before any file header")
            old_line = int(m.group(1))
            # An empty old range (length 0) positions after the stated line.
            if m.group(2) == "0":
                old_line += 1
            in_hunk = True
            continue
        if not in_hunk:
            continue
        if raw.startswith("-"):
            annotation.buggy_lines.add((current_file, old_line))
            old_line += 1
        elif raw.startswith("+"):
            pass
        elif raw.startswith("\\"):
            pass  # "\ No newline at end of file"
        else:
            old_line += 1
    return annotation


def annotate_files(paths: Iterable[str | Path]) -> list[BugAnnotation]:
    return [
        annotate_from_diff(Path(p).read_text(encoding="utf-8"), bug_id=Path(p).stem)
        for p in paths
    ]


def merged_buggy_lines(annotations: Iterable[BugAnnotation]) -> set[LineKey]:
    """Union of annotated lines; omission-only bugs contribute nothing."""
    buggy: set[LineKey] = set()
    for annotation in annotations:
        if not annotation.omission_only:
            buggy.update(annotation.buggy_lines)
    return buggy


def save_annotations(path: str | Path, annotations: Iterable[BugAnnotation]) -> None:
    payload = {
        "format": "entrospect-annotations",
        "version": 1,
        "annotations": [
            {
                "bug_id": a.bug_id,
                "omission_only": a.omission_only,
                "buggy_lines": sorted([f, n] for f, n in a.buggy_lines),
            }
            for a in annotations
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")


def load_annotations(path: str | Path) -> list[BugAnnotation]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "entrospect-annotations":
        raise DataError(f"{path}: not an annotations file")
    return [
        BugAnnotation(
            bug_id=obj["bug_id"],
            buggy_lines={(f, int(n)) for f, n in obj["buggy_lines"]},
        )
        for obj in payload["annotations"]
    ]
