"""Buffered verdict logging flushed to timestamped files on a fixed cadence."""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

FLUSH_INTERVAL_S = 120.0


class LogBuffer:
    """In-memory ordered log entries, flushed when old enough or on shutdown.

    Thread-safe; flush preserves append order. An I/O failure keeps the
    buffered entries for the next attempt.
    """

    def __init__(self, log_dir, flush_interval_s: float = FLUSH_INTERVAL_S,
                 now: Optional[float] = None):
        self.log_dir = Path(log_dir)
        self.flush_interval_s = flush_interval_s
        self.entries: list[str] = []
        self.last_flush_at = time.time() if now is None else now
        self._lock = threading.Lock()

    def append(self, line: str) -> None:
        with self._lock:
            self.entries.append(line)

    def __len__(self) -> int:
        with self._lock:
            return len(self.entries)


def flush_logs(buffer: LogBuffer, now: Optional[float] = None,
               force: bool = False) -> Optional[Path]:
    """Write and clear the buffer iff its age reached the interval (or forced).

    Returns the file written, or None. The file name carries an ISO-8601
    timestamp. On I/O failure the buffer is retained and a warning logged.
    """
    now = time.time() if now is None else now
    with buffer._lock:
        age = now - buffer.last_flush_at
        if not force and age < buffer.flush_interval_s:
            return None
        if not buffer.entries:
            buffer.last_flush_at = now
            return None
        stamp = time.strftime("%Y-%m-%dT%H-%M-%S", time.gmtime(now))
        path = buffer.log_dir / f"pagewatch-{stamp}.log"
        try:
            buffer.log_dir.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as f:
                f.write("\n".join(buffer.entries) + "\n")
        except OSError as exc:
            logger.warning("log flush to %s failed (%s); retaining %d entries",
                           path, exc, len(buffer.entries))
            return None
        buffer.entries.clear()
        buffer.last_flush_at = now
        return path
