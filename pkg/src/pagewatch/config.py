"""Runtime configuration with the defense's default constants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

from .errors import InvalidInputError


@dataclass
class Config:
    whitelist_path: Optional[str] = None
    model_path: Optional[str] = None
    vocab_path: Optional[str] = None
    scan_interval_s: float = 5.0
    hamming_threshold: int = 5
    whitelist_cutoff: int = 100_000
    bind_host: str = "127.0.0.1"  # loopback only by default: inference stays local
    bind_port: int = 8787
    log_flush_interval_s: float = 120.0
    log_dir: str = "pagewatch-logs"
    retain_screenshots: bool = False  # opt-in
    ocr_command: Optional[list[str]] = None  # external engine; None -> empty-text engine

    def __post_init__(self):
        if self.scan_interval_s <= 0 or self.log_flush_interval_s <= 0:
            raise InvalidInputError("intervals must be > 0")
        if not 0 <= self.hamming_threshold <= 64:
            raise InvalidInputError("hamming threshold must be in [0, 64]")

    @classmethod
    def from_file(cls, path) -> "Config":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)
