"""Base repositories over flat files."""

import csv
import json
import threading
from pathlib import Path
from typing import Generic, Iterable, List, Optional, Type, TypeVar, Union

from pydantic import BaseModel

from slicebench.data.models import LIST_SEPARATOR

T = TypeVar("T", bound=BaseModel)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return LIST_SEPARATOR.join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class CsvRepository(Generic[T]):
    """Append-only comma-delimited store with a header row."""

    def __init__(self, model_class: Type[T], path: Union[str, Path]):
        """Initialize repository.

        Args:
            model_class: Record model stored in the file
            path: CSV file path
        """
        self.model_class = model_class
        self.path = Path(path)
        self.fields = list(model_class.model_fields)
        self._lock = threading.Lock()

    def _ensure_header(self) -> None:
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("w", newline="") as fh:
                csv.writer(fh).writerow(self.fields)

    def create(self, record: T) -> T:
        """Append one record.

        Args:
            record: Record to append

        Returns:
            The appended record
        """
        self.create_many([record])
        return record

    def create_many(self, records: Iterable[T]) -> int:
        """Append several records.

        Returns:
            Number of rows written
        """
        rows = [[_cell(getattr(r, f)) for f in self.fields] for r in records]
        with self._lock:
            self._ensure_header()
            with self.path.open("a", newline="") as fh:
                csv.writer(fh).writerows(rows)
        return len(rows)

    def get_all(self) -> List[T]:
        """Read every stored record, validated."""
        if not self.path.exists():
            return []
        with self.path.open(newline="") as fh:
            return [self.model_class.model_validate(row) for row in csv.DictReader(fh)]

    def count(self) -> int:
        if not self.path.exists():
            return 0
        with self.path.open(newline="") as fh:
            return max(sum(1 for _ in fh) - 1, 0)


class JsonRepository(Generic[T]):
    """Single-document JSON store."""

    def __init__(self, model_class: Type[T], path: Union[str, Path]):
        self.model_class = model_class
        self.path = Path(path)

    def save(self, record: T) -> T:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(record.model_dump(mode="json"), indent=2, sort_keys=True))
        return record

    def load(self) -> Optional[T]:
        """Stored document, or None when the file does not exist."""
        if not self.path.exists():
            return None
        return self.model_class.model_validate_json(self.path.read_text())
