"""The defend-side decision engine: per-tab scan memory, whitelist
short-circuit, the four mutually exclusive decision cases, scan-cycle
orchestration, verdict production, and user-override recording.

Case 1: domain whitelisted            -> benign, nothing else runs.
Case 2: no stored hash for the tab    -> full inference.
Case 3: hash moved >= threshold bits  -> full inference.
Case 4: hash moved < threshold bits   -> reuse the stored verdict.
"""

from __future__ import annotations

import csv
import io
import threading
import time
import uuid
from dataclasses import dataclass, asdict
from typing import Optional

from PIL import Image

from .errors import FileParseError, InvalidInputError, NotFoundError, OcrEngineError
from .imaging import RawScreenshot, normalize_screenshot
from .model.network import DualBranchModel
from .model.vocab import Vocabulary
from .ocr import OcrEngineAdapter, extract_text
from .phash import (
    PerceptualHash, SIGNIFICANT_CHANGE_THRESHOLD, compute_phash, hamming_distance,
)

WHITELIST_CUTOFF = 100_000
SCAN_INTERVAL_S = 5.0

OVERRIDE_CHOICES = ("return_to_safety", "ignore_warning", "not_malicious")


# ---------------------------------------------------------------------------
# clock (injectable so the 5 s scheduler is testable without sleeping)
# ---------------------------------------------------------------------------

class SystemClock:
    def now(self) -> float:  # monotonic seconds, for scheduling and latency
        return time.perf_counter()

    def time(self) -> float:  # wall epoch seconds, for timestamps
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Manually advanced clock for deterministic scheduler tests."""

    def __init__(self, start: float = 0.0):
        self._t = start

    def now(self) -> float:
        return self._t

    def time(self) -> float:
        return self._t

    def sleep(self, seconds: float) -> None:
        self._t += seconds

    def advance(self, seconds: float) -> None:
        self._t += seconds


# ---------------------------------------------------------------------------
# whitelist
# ---------------------------------------------------------------------------

@dataclass
class WhitelistIndex:
    ranks: dict[str, int]
    cutoff: int = WHITELIST_CUTOFF
    fold_subdomains: bool = False  # off by default: exact registrable-domain match

    def is_whitelisted(self, domain: str) -> bool:
        domain = domain.strip().lower()
        rank = self.ranks.get(domain)
        if rank is not None and rank <= self.cutoff:
            return True
        if self.fold_subdomains:
            parts = domain.split(".")
            for i in range(1, len(parts) - 1):
                rank = self.ranks.get(".".join(parts[i:]))
                if rank is not None and rank <= self.cutoff:
                    return True
        return False


def load_whitelist(path, cutoff: int = WHITELIST_CUTOFF,
                   fold_subdomains: bool = False) -> WhitelistIndex:
    """Parse 'rank,domain' CSV lines, retaining ranks within the cutoff."""
    ranks: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for ln, row in enumerate(csv.reader(f), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise FileParseError(f"expected 'rank,domain', got {row!r}", ln)
            try:
                rank = int(row[0])
            except ValueError as exc:
                raise FileParseError(f"bad rank {row[0]!r}", ln) from exc
            if rank < 1:
                raise FileParseError("ranks start at 1", ln)
            if rank <= cutoff:
                domain = row[1].strip().lower()
                ranks[domain] = min(rank, ranks.get(domain, rank))
    return WhitelistIndex(ranks=ranks, cutoff=cutoff, fold_subdomains=fold_subdomains)


# ---------------------------------------------------------------------------
# verdicts and tab state
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    verdict_id: str
    label: str  # "benign" | "malicious"
    probability: float
    source: str  # "whitelist" | "inference" | "reused"
    decision_case: int  # 1..4
    latency_ms: dict[str, float]  # stages actually executed
    domain: str
    tab_id: str
    created_at: float  # wall epoch seconds

    def __post_init__(self):
        if (self.source == "whitelist") != (self.decision_case == 1):
            raise InvalidInputError("source=whitelist iff case 1")
        if (self.source == "reused") != (self.decision_case == 4):
            raise InvalidInputError("source=reused iff case 4")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TabState:
    tab_id: str
    last_hash: Optional[PerceptualHash] = None
    last_verdict: Optional[Verdict] = None
    last_scan_at: float = 0.0
    paused: bool = False

    def __post_init__(self):
        if self.last_verdict is not None and self.last_hash is None:
            raise InvalidInputError("a stored verdict requires a stored hash")


@dataclass
class OverrideRecord:
    verdict_id: str
    user_choice: str
    timestamp: float

    def __post_init__(self):
        if self.user_choice not in OVERRIDE_CHOICES:
            raise InvalidInputError(
                f"choice must be one of {OVERRIDE_CHOICES}, got {self.user_choice!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def decide(state: TabState, whitelisted: bool, new_hash: PerceptualHash,
           threshold: int = SIGNIFICANT_CHANGE_THRESHOLD) -> int:
    """Map (whitelisted, stored hash, distance) to its decision case."""
    if whitelisted:
        return 1
    if state.last_hash is None:
        return 2
    if hamming_distance(state.last_hash, new_hash).value >= threshold:
        return 3
    return 4


def format_log_line(verdict: Verdict) -> str:
    """ISO timestamp, tab, domain, case, label, probability, stage ms; tab-separated."""
    ts = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(verdict.created_at))
    frac = f"{verdict.created_at % 1.0:.3f}"[1:]
    stages = []
    for stage in ("normalize", "phash", "ocr", "model"):
        v = verdict.latency_ms.get(stage)
        stages.append("-" if v is None else f"{v:.2f}")
    return "\t".join([
        f"{ts}{frac}Z", verdict.tab_id, verdict.domain, str(verdict.decision_case),
        verdict.label, f"{verdict.probability:.6f}", *stages,
    ])


# ---------------------------------------------------------------------------
# scan engine
# ---------------------------------------------------------------------------

@dataclass
class ModelSnapshot:
    """Read-stable (model, vocab) pair used for a whole scan cycle."""

    model: DualBranchModel
    vocab: Vocabulary

    def predict(self, image, text: str):
        return self.model.predict(image, text, self.vocab)


class ScanEngine:
    """Owns tab states, the verdict store, and the decision pipeline.

    Single-writer per tab; the verdict store is an append log guarded by a
    lock with snapshot reads.
    """

    def __init__(self, whitelist: WhitelistIndex, ocr_engine: OcrEngineAdapter,
                 snapshot: Optional[ModelSnapshot], clock=None,
                 hamming_threshold: int = SIGNIFICANT_CHANGE_THRESHOLD,
                 log_sink=None, retain_screenshots: bool = False,
                 malicious_threshold: float = 0.5):
        self.whitelist = whitelist
        self.ocr_engine = ocr_engine
        self.snapshot = snapshot
        self.clock = clock or SystemClock()
        self.hamming_threshold = hamming_threshold
        self.log_sink = log_sink  # callable(str) or None
        self.retain_screenshots = retain_screenshots
        self.malicious_threshold = malicious_threshold

        self.tabs: dict[str, TabState] = {}
        self._verdicts: list[Verdict] = []
        self._verdict_tab: dict[str, str] = {}
        self._overrides: dict[str, OverrideRecord] = {}
        self._screenshots: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self.model_calls = 0
        self.ocr_calls = 0

    # -- tab helpers --

    def tab(self, tab_id: str) -> TabState:
        with self._lock:
            if tab_id not in self.tabs:
                self.tabs[tab_id] = TabState(tab_id=tab_id)
            return self.tabs[tab_id]

    # -- verdict store --

    def _store(self, verdict: Verdict, screenshot_png: Optional[bytes] = None):
        with self._lock:
            self._verdicts.append(verdict)
            self._verdict_tab[verdict.verdict_id] = verdict.tab_id
            if screenshot_png is not None and self.retain_screenshots:
                self._screenshots[verdict.verdict_id] = screenshot_png
        if self.log_sink is not None:
            self.log_sink(format_log_line(verdict))

    def verdicts_since(self, since: float = 0.0) -> list[Verdict]:
        with self._lock:
            return [v for v in self._verdicts if v.created_at > since]

    def get_verdict(self, verdict_id: str) -> Verdict:
        with self._lock:
            for v in self._verdicts:
                if v.verdict_id == verdict_id:
                    return v
        raise NotFoundError(f"unknown verdict id {verdict_id!r}")

    def get_screenshot(self, verdict_id: str) -> bytes:
        with self._lock:
            if verdict_id in self._screenshots:
                return self._screenshots[verdict_id]
        raise NotFoundError(f"no screenshot retained for {verdict_id!r}")

    def override_for(self, verdict_id: str) -> Optional[OverrideRecord]:
        with self._lock:
            return self._overrides.get(verdict_id)

    def latency_samples(self) -> list[dict[str, float]]:
        with self._lock:
            return [dict(v.latency_ms) for v in self._verdicts]

    # -- the decision pipeline --

    def run_scan_cycle(self, tab_id: str, screenshot: RawScreenshot,
                       domain: Optional[str] = None) -> Verdict:
        """One capture -> normalize -> hash -> decide -> (OCR + model) pass."""
        tab = self.tab(tab_id)
        if tab.paused:
            raise InvalidInputError(f"tab {tab_id!r} is paused (dialog active)")
        domain = domain if domain is not None else screenshot.source_domain
        t_wall = self.clock.time()
        tab.last_scan_at = t_wall

        if self.whitelist.is_whitelisted(domain):
            verdict = Verdict(
                verdict_id=uuid.uuid4().hex, label="benign", probability=0.0,
                source="whitelist", decision_case=1, latency_ms={},
                domain=domain, tab_id=tab_id, created_at=t_wall,
            )
            self._store(verdict)
            return verdict

        latency: dict[str, float] = {}
        t0 = self.clock.now()
        normalized = normalize_screenshot(screenshot)
        latency["normalize"] = (self.clock.now() - t0) * 1000.0

        t0 = self.clock.now()
        new_hash = compute_phash(normalized)
        latency["phash"] = (self.clock.now() - t0) * 1000.0

        case = decide(tab, False, new_hash, self.hamming_threshold)

        if case == 4:
            stored = tab.last_verdict
            verdict = Verdict(
                verdict_id=uuid.uuid4().hex, label=stored.label,
                probability=stored.probability, source="reused", decision_case=4,
                latency_ms=latency, domain=domain, tab_id=tab_id, created_at=t_wall,
            )
            self._store(verdict)
            return verdict

        if self.snapshot is None:
            raise InvalidInputError("inference required but no model snapshot loaded")

        t0 = self.clock.now()
        try:
            ocr_text = extract_text(normalized, self.ocr_engine)
        except OcrEngineError as exc:
            if self.log_sink is not None:
                self.log_sink(
                    f"ERROR\t{tab_id}\t{domain}\tocr strip {exc.strip_index}: {exc}")
            raise  # cycle aborts; tab state unchanged
        self.ocr_calls += 1
        latency["ocr"] = (self.clock.now() - t0) * 1000.0

        t0 = self.clock.now()
        result = self.snapshot.predict(normalized, ocr_text.text)
        self.model_calls += 1
        latency["model"] = (self.clock.now() - t0) * 1000.0

        label = "malicious" if result.probability > self.malicious_threshold else "benign"
        verdict = Verdict(
            verdict_id=uuid.uuid4().hex, label=label, probability=result.probability,
            source="inference", decision_case=case, latency_ms=latency,
            domain=domain, tab_id=tab_id, created_at=t_wall,
        )
        tab.last_hash = new_hash
        tab.last_verdict = verdict
        if label == "malicious":
            tab.paused = True  # warning dialog is now active
        png = None
        if self.retain_screenshots:
            buf = io.BytesIO()
            Image.fromarray(normalized.pixels, mode="RGB").save(buf, format="PNG")
            png = buf.getvalue()
        self._store(verdict, png)
        return verdict

    def record_override(self, verdict_id: str, choice: str) -> OverrideRecord:
        """Store the user's dialog choice and resume scanning on that tab."""
        verdict = self.get_verdict(verdict_id)  # raises NotFoundError
        record = OverrideRecord(
            verdict_id=verdict_id, user_choice=choice, timestamp=self.clock.time())
        with self._lock:
            self._overrides[verdict_id] = record
        tab = self.tabs.get(self._verdict_tab.get(verdict_id, verdict.tab_id))
        if tab is not None:
            tab.paused = False
        if self.log_sink is not None:
            self.log_sink(f"OVERRIDE\t{verdict.tab_id}\t{verdict.domain}\t{choice}")
        return record


# ---------------------------------------------------------------------------
# scheduler
# ---------------------------------------------------------------------------

@dataclass
class ScanEvent:
    time: float
    tab_id: str
    verdict: Optional[Verdict]
    error: Optional[str] = None


class ScanScheduler:
    """Fires one scan per active, unpaused tab every interval.

    A tab's cycles never overlap: if a cycle outlasts the interval, the next
    event is deferred to the cycle's completion.
    """

    def __init__(self, engine: ScanEngine, run_cycle, interval_s: float = SCAN_INTERVAL_S,
                 clock=None):
        if interval_s <= 0:
            raise InvalidInputError("interval must be > 0")
        self.engine = engine
        self.run_cycle = run_cycle  # callable(tab_id) -> Verdict
        self.interval_s = interval_s
        self.clock = clock or engine.clock
        self._next_due: dict[str, float] = {}
        self.events: list[ScanEvent] = []

    def add_tab(self, tab_id: str):
        self.engine.tab(tab_id)
        self._next_due[tab_id] = self.clock.now() + self.interval_s

    def remove_tab(self, tab_id: str):
        self._next_due.pop(tab_id, None)

    def run_until(self, t_end: float) -> list[ScanEvent]:
        """Advance the clock, firing due scans, until t_end. Returns new events."""
        start_idx = len(self.events)
        while True:
            pending = {t: d for t, d in self._next_due.items()
                       if not self.engine.tab(t).paused}
            if not pending:
                break
            tab_id, due = min(pending.items(), key=lambda kv: (kv[1], kv[0]))
            if due > t_end:
                break
            if due > self.clock.now():
                self.clock.sleep(due - self.clock.now())
            fired_at = self.clock.now()
            try:
                verdict = self.run_cycle(tab_id)
                self.events.append(ScanEvent(fired_at, tab_id, verdict))
            except Exception as exc:
                self.events.append(ScanEvent(fired_at, tab_id, None, error=str(exc)))
            finished = self.clock.now()
            self._next_due[tab_id] = max(fired_at + self.interval_s, finished)
        if self.clock.now() < t_end:
            self.clock.sleep(t_end - self.clock.now())
        return self.events[start_idx:]
