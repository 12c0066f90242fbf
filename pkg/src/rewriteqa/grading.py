"""Append-only, file-backed storage for human grades.

Writers are serialized with a lock; readers take an immutable snapshot
without locking.  Restarting a process on the same path reloads every
acknowledged grade.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from .errors import DatasetParseError
from .evaluation import GradeRecord, grade_from_dict, grade_to_dict, latest_verdicts


class GradeStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._grades: tuple[GradeRecord, ...] = ()
        if self.path.exists():
            self._grades = tuple(self._load())

    def _load(self) -> list[GradeRecord]:
        records = []
        with self.path.open("r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(grade_from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise DatasetParseError(str(self.path), number, str(exc)) from exc
        return records

    def add(self, grade: GradeRecord) -> None:
        """Append one grade; the write hits disk before the call returns."""
        line = json.dumps(grade_to_dict(grade), sort_keys=True)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8", newline="\n") as handle:
                handle.write(line)
                handle.write("\n")
                handle.flush()
            self._grades = self._grades + (grade,)

    def all(self) -> tuple[GradeRecord, ...]:
        return self._grades

    def latest(self, system: str | None = None) -> dict[tuple[str, str, str], GradeRecord]:
        return latest_verdicts(self._grades, system=system)

    def __len__(self) -> int:
        return len(self._grades)
