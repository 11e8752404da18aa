import csv
import logging
import threading
from collections.abc import Iterable, Mapping
from pathlib import Path

logger = logging.getLogger(__name__)

_lock = threading.Lock()


def write_results(records: Iterable[Mapping], path: str | Path, columns: list[str] | None = None) -> int:
    """Append rows to a CSV, writing the header when the file is new.

    Appending to an existing file with a different header raises ValueError.
    Returns the number of rows written.
    """
    records = list(records)
    if not records and columns is None:
        return 0
    columns = columns or list(records[0].keys())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _lock:
        exists = path.exists() and path.stat().st_size > 0
        if exists:
            with path.open(newline="") as f:
                header = next(csv.reader(f), [])
            if header != columns:
                raise ValueError(f"{path} has columns {header}, refusing to append {columns}")
        with path.open("a", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction="raise")
            if not exists:
                writer.writeheader()
            for record in records:
                writer.writerow({k: _format(record.get(k)) for k in columns})
    logger.debug(f"Wrote {len(records)} row(s) to {path}")
    return len(records)


def _format(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value
