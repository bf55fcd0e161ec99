import numpy as np
import pytest

from pagewatch.errors import FileParseError, InvalidInputError, NotFoundError, OcrEngineError
from pagewatch.imaging import RawScreenshot
from pagewatch.model.network import PredictResult
from pagewatch.ocr import CallableOcrEngine, StaticOcrEngine
from pagewatch.phash import PerceptualHash
from pagewatch.pipeline import (
    OVERRIDE_CHOICES, ScanEngine, ScanScheduler, TabState, VirtualClock,
    WhitelistIndex, decide, format_log_line, load_whitelist,
)


class FakeSnapshot:
    """Scripted classifier: probability keyed by OCR text, else default."""

    def __init__(self, default=0.1, by_text=None):
        self.default = default
        self.by_text = by_text or {}
        self.calls = 0

    def predict(self, image, text):
        self.calls += 1
        p = self.by_text.get(text, self.default)
        return PredictResult(probability=p,
                             label="malicious" if p > 0.5 else "benign")


def raw_uniform(value, domain="some-site.example", w=1920, h=1080):
    return RawScreenshot.from_array(
        np.full((h, w, 3), value, dtype=np.uint8), source_domain=domain)


def raw_half(domain="some-site.example"):
    px = np.zeros((1080, 1920, 3), dtype=np.uint8)
    px[:540] = 255
    return RawScreenshot.from_array(px, source_domain=domain)


def make_engine(snapshot=None, whitelist=None, clock=None, log_sink=None, **kw):
    return ScanEngine(
        whitelist=whitelist or WhitelistIndex(ranks={"safe.example": 50}),
        ocr_engine=StaticOcrEngine("page text"),
        snapshot=snapshot if snapshot is not None else FakeSnapshot(),
        clock=clock,
        log_sink=log_sink,
        **kw,
    )


class TestWhitelist:
    def test_cutoff_boundary_inclusive(self, tmp_path):
        p = tmp_path / "wl.csv"
        p.write_text("100000,edge.example\n100001,over.example\n1,top.example\n")
        wl = load_whitelist(p)
        assert wl.is_whitelisted("edge.example")
        assert not wl.is_whitelisted("over.example")
        assert wl.is_whitelisted("top.example")

    def test_absent_domain_not_whitelisted(self, tmp_path):
        p = tmp_path / "wl.csv"
        p.write_text("5,known.example\n")
        assert not load_whitelist(p).is_whitelisted("unknown.example")

    def test_exact_match_no_subdomain_folding_by_default(self, tmp_path):
        p = tmp_path / "wl.csv"
        p.write_text("5,known.example\n")
        wl = load_whitelist(p)
        assert not wl.is_whitelisted("www.known.example")
        folded = load_whitelist(p, fold_subdomains=True)
        assert folded.is_whitelisted("www.known.example")

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "wl.csv"
        p.write_text("1,ok.example\nnot-a-rank,x.example\n")
        with pytest.raises(FileParseError) as exc:
            load_whitelist(p)
        assert exc.value.line_number == 2

    def test_case_normalized(self, tmp_path):
        p = tmp_path / "wl.csv"
        p.write_text("9,MiXeD.Example\n")
        assert load_whitelist(p).is_whitelisted("mixed.example")


class TestDecide:
    def test_exhaustive_two_by_two_by_two(self):
        h0 = PerceptualHash(bits=0, source_dims=(960, 540))
        near = PerceptualHash(bits=0b111, source_dims=(960, 540))      # distance 3
        far = PerceptualHash(bits=(1 << 8) - 1, source_dims=(960, 540))  # distance 8
        for whitelisted in (False, True):
            for has_prior in (False, True):
                for changed in (False, True):
                    state = TabState(tab_id="t")
                    if has_prior:
                        state.last_hash = h0
                    new = far if changed else near
                    case = decide(state, whitelisted, new)
                    if whitelisted:
                        expected = 1
                    elif not has_prior:
                        expected = 2
                    elif changed:
                        expected = 3
                    else:
                        expected = 4
                    assert case == expected

    def test_distance_boundary(self):
        state = TabState(tab_id="t", last_hash=PerceptualHash(0, (960, 540)))
        four = PerceptualHash(bits=0b1111, source_dims=(960, 540))
        five = PerceptualHash(bits=0b11111, source_dims=(960, 540))
        assert decide(state, False, four) == 4
        assert decide(state, False, five) == 3


class TestScanCycle:
    def test_whitelisted_case1_runs_nothing(self):
        snap = FakeSnapshot()
        engine = make_engine(snapshot=snap)
        verdict = engine.run_scan_cycle("tab", raw_uniform(50, "safe.example"))
        assert verdict.decision_case == 1
        assert verdict.source == "whitelist"
        assert verdict.label == "benign"
        assert verdict.latency_ms == {}  # no stage ran, hashing included
        assert snap.calls == 0
        assert engine.tab("tab").last_hash is None

    def test_first_scan_case2_stores_state(self):
        snap = FakeSnapshot()
        engine = make_engine(snapshot=snap)
        verdict = engine.run_scan_cycle("tab", raw_uniform(50))
        assert verdict.decision_case == 2
        assert verdict.source == "inference"
        assert snap.calls == 1
        tab = engine.tab("tab")
        assert tab.last_hash is not None and tab.last_verdict is not None
        assert set(verdict.latency_ms) == {"normalize", "phash", "ocr", "model"}

    def test_unchanged_page_case4_skips_model(self):
        snap = FakeSnapshot()
        engine = make_engine(snapshot=snap)
        first = engine.run_scan_cycle("tab", raw_uniform(50))
        second = engine.run_scan_cycle("tab", raw_uniform(51))  # same hash (uniform -> 0)
        assert second.decision_case == 4
        assert second.source == "reused"
        assert snap.calls == 1  # model NOT invoked again
        assert second.label == first.label
        assert second.probability == first.probability
        assert second.verdict_id != first.verdict_id
        assert set(second.latency_ms) == {"normalize", "phash"}

    def test_changed_page_case3_reinfers(self):
        snap = FakeSnapshot()
        engine = make_engine(snapshot=snap)
        engine.run_scan_cycle("tab", raw_uniform(0))
        verdict = engine.run_scan_cycle("tab", raw_half())
        assert verdict.decision_case == 3
        assert snap.calls == 2

    def test_model_calls_equal_case2_plus_case3(self):
        snap = FakeSnapshot()
        engine = make_engine(snapshot=snap)
        engine.run_scan_cycle("t", raw_uniform(0))      # case 2
        engine.run_scan_cycle("t", raw_uniform(3))      # case 4
        engine.run_scan_cycle("t", raw_half())          # case 3
        engine.run_scan_cycle("t", raw_half())          # case 4
        engine.run_scan_cycle("safe", raw_uniform(9, "safe.example"))  # case 1
        cases = [v.decision_case for v in engine.verdicts_since()]
        expected = sum(1 for c in cases if c in (2, 3))
        assert snap.calls == expected == 2

    def test_malicious_inference_pauses_tab(self):
        snap = FakeSnapshot(default=0.93)
        engine = make_engine(snapshot=snap)
        verdict = engine.run_scan_cycle("tab", raw_uniform(0))
        assert verdict.label == "malicious"
        assert engine.tab("tab").paused
        with pytest.raises(InvalidInputError):
            engine.run_scan_cycle("tab", raw_uniform(0))

    def test_ocr_failure_aborts_cycle_state_unchanged(self):
        def explode(strip):
            raise RuntimeError("engine dead")
        lines = []
        engine = ScanEngine(
            whitelist=WhitelistIndex(ranks={}),
            ocr_engine=CallableOcrEngine(explode),
            snapshot=FakeSnapshot(),
            log_sink=lines.append,
        )
        with pytest.raises(OcrEngineError):
            engine.run_scan_cycle("tab", raw_uniform(7))
        assert engine.tab("tab").last_hash is None
        assert engine.tab("tab").last_verdict is None
        assert any(line.startswith("ERROR") for line in lines)

    def test_log_line_format(self):
        lines = []
        engine = make_engine(log_sink=lines.append)
        engine.run_scan_cycle("tab9", raw_uniform(1, "evil.example"))
        fields = lines[0].split("\t")
        assert len(fields) == 10
        assert fields[0].endswith("Z") and "T" in fields[0]
        assert fields[1] == "tab9"
        assert fields[2] == "evil.example"
        assert fields[3] == "2"
        assert fields[4] in ("benign", "malicious")
        float(fields[5])
        for stage_ms in fields[6:]:
            assert stage_ms == "-" or float(stage_ms) >= 0.0

    def test_whitelist_log_line_has_no_stage_entries(self):
        lines = []
        engine = make_engine(log_sink=lines.append)
        engine.run_scan_cycle("t", raw_uniform(1, "safe.example"))
        assert lines[0].split("\t")[6:] == ["-", "-", "-", "-"]


class TestOverride:
    def _engine_with_malicious_verdict(self):
        engine = make_engine(snapshot=FakeSnapshot(default=0.9))
        verdict = engine.run_scan_cycle("tab", raw_uniform(0))
        return engine, verdict

    @pytest.mark.parametrize("choice", OVERRIDE_CHOICES)
    def test_choices_recorded(self, choice):
        engine, verdict = self._engine_with_malicious_verdict()
        record = engine.record_override(verdict.verdict_id, choice)
        assert record.user_choice == choice
        assert engine.override_for(verdict.verdict_id).user_choice == choice

    def test_any_choice_unpauses(self):
        for choice in OVERRIDE_CHOICES:
            engine, verdict = self._engine_with_malicious_verdict()
            assert engine.tab("tab").paused
            engine.record_override(verdict.verdict_id, choice)
            assert not engine.tab("tab").paused

    def test_unknown_verdict_id(self):
        engine, _ = self._engine_with_malicious_verdict()
        with pytest.raises(NotFoundError):
            engine.record_override("nope", "ignore_warning")

    def test_invalid_choice_rejected(self):
        engine, verdict = self._engine_with_malicious_verdict()
        with pytest.raises(InvalidInputError):
            engine.record_override(verdict.verdict_id, "shrug")


class TestScheduler:
    def _setup(self, cycle_seconds=0.5, snapshot=None):
        clock = VirtualClock()
        engine = make_engine(snapshot=snapshot or FakeSnapshot(), clock=clock)

        def run_cycle(tab_id):
            clock.advance(cycle_seconds)
            return engine.run_scan_cycle(tab_id, raw_uniform(50, f"{tab_id}.example"))

        sched = ScanScheduler(engine, run_cycle, interval_s=5.0, clock=clock)
        return clock, engine, sched

    def test_three_cycles_in_16_virtual_seconds(self):
        clock, engine, sched = self._setup()
        sched.add_tab("tab")
        events = sched.run_until(16.0)
        assert len(events) == 3
        assert [round(e.time) for e in events] == [5, 10, 15]

    def test_paused_tab_gets_no_events(self):
        clock, engine, sched = self._setup()
        sched.add_tab("tab")
        engine.tab("tab").paused = True
        assert sched.run_until(30.0) == []
        assert clock.now() == 30.0

    def test_long_cycle_defers_next_no_overlap(self):
        clock, engine, sched = self._setup(cycle_seconds=7.0)
        sched.add_tab("tab")
        events = sched.run_until(16.0)
        # fired at 5 (ends 12), deferred next fires at 12 (ends 19 > 16)
        assert [e.time for e in events] == [5.0, 12.0]

    def test_reuse_across_cycles_single_inference(self):
        snap = FakeSnapshot()
        clock, engine, sched = self._setup(snapshot=snap)
        sched.add_tab("tab")
        sched.run_until(16.0)
        assert snap.calls == 1  # case 2 then case 4, case 4

    def test_multiple_tabs_each_scanned(self):
        clock, engine, sched = self._setup(cycle_seconds=0.1)
        sched.add_tab("a")
        sched.add_tab("b")
        events = sched.run_until(6.0)
        assert {e.tab_id for e in events} == {"a", "b"}


class TestVerdictStore:
    def test_since_filter(self):
        clock = VirtualClock(start=100.0)
        engine = make_engine(clock=clock)
        engine.run_scan_cycle("t", raw_uniform(1))
        clock.advance(10)
        engine.run_scan_cycle("t", raw_uniform(2))
        assert len(engine.verdicts_since(0.0)) == 2
        assert len(engine.verdicts_since(105.0)) == 1
        assert len(engine.verdicts_since(200.0)) == 0

    def test_get_verdict_and_screenshot_retention(self):
        engine = make_engine(retain_screenshots=True)
        v = engine.run_scan_cycle("t", raw_uniform(1))
        assert engine.get_verdict(v.verdict_id).verdict_id == v.verdict_id
        png = engine.get_screenshot(v.verdict_id)
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        with pytest.raises(NotFoundError):
            engine.get_screenshot("missing")

    def test_screenshots_not_retained_by_default(self):
        engine = make_engine()
        v = engine.run_scan_cycle("t", raw_uniform(1))
        with pytest.raises(NotFoundError):
            engine.get_screenshot(v.verdict_id)
