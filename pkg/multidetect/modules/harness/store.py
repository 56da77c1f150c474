"""
Append-only result store: one TrialResult JSON object per line.

A single writer (the detection stage) appends; re-opening the file skips
every key already present, so interrupted runs resume where they stopped.
"""
import os
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from pydantic import ValidationError

from multidetect.core.errors import StorageError
from multidetect.core.logging import get_logger
from multidetect.modules.harness.schemas import TrialResult

logger = get_logger(__name__)

TrialKey = Tuple[str, str, str, str, int, int]


class ResultStore:
    def __init__(self, path: Path):
        self.path = Path(path)
        self._results: Dict[TrialKey, TrialResult] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        text = self.path.read_text(encoding="utf-8")
        lines = text.split("\n")
        # a run killed mid-write leaves at most one partial last line
        if lines and lines[-1] and not text.endswith("\n"):
            logger.warning("Dropping partial last line of %s", self.path)
            lines = lines[:-1]
            self.path.write_text("".join(f"{line}\n" for line in lines if line), encoding="utf-8")
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                result = TrialResult.model_validate_json(line)
            except ValidationError as e:
                raise StorageError(f"{self.path}:{number}: bad trial record: {e}")
            self._results[result.key] = result
        logger.info("Loaded %d trial result(s) from %s", len(self._results), self.path)

    def __len__(self) -> int:
        return len(self._results)

    def __contains__(self, key: TrialKey) -> bool:
        return key in self._results

    def results(self) -> List[TrialResult]:
        """All results in the order they were written."""
        return list(self._results.values())

    def append(self, results: Iterable[TrialResult]) -> int:
        fresh = [r for r in results if r.key not in self._results]
        if not fresh:
            return 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as f:
            for result in fresh:
                f.write(result.model_dump_json() + "\n")
                self._results[result.key] = result
            f.flush()
            os.fsync(f.fileno())
        return len(fresh)
