"""Synthetic screenshot+text corpus generation, dataset manifest format,
augmentation orchestration, and leave-one-out evaluation splits.

Benign pages are plain light layouts with neutral copy; attack pages render a
dialog-box motif (bright centered box, border, button) with campaign-specific
phrases. Every image gets a ground-truth sidecar .txt of the overlaid text so
a scripted OCR path and a real pixel-reading engine can both be exercised.
Generation is a pure function of its arguments and seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import FileParseError, InvalidInputError, NotFoundError
from .imaging import (
    AugmentationSpec, NormalizedImage, RawScreenshot, TRANSFORM_POOL,
    augment_image, normalize_screenshot, read_png, write_png,
)

LABEL_BENIGN = "benign"
LABEL_BMA = "bma"


@dataclass
class SampleRecord:
    sample_id: str
    image_path: str  # relative to the manifest's directory
    text_path: str
    label: str  # "benign" | "bma"
    campaign_id: str  # non-empty exactly for bma records
    resolution: tuple[int, int]  # (w, h) of the stored image
    split: str = ""

    def __post_init__(self):
        if self.label not in (LABEL_BENIGN, LABEL_BMA):
            raise InvalidInputError(f"bad label {self.label!r}")
        if self.label == LABEL_BMA and not self.campaign_id:
            raise InvalidInputError("bma records need a campaign id")

    @property
    def label01(self) -> int:
        return 1 if self.label == LABEL_BMA else 0


@dataclass
class Manifest:
    records: list[SampleRecord]
    base_dir: Path
    generation_seed: Optional[int] = None

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {LABEL_BENIGN: 0, LABEL_BMA: 0}
        for r in self.records:
            counts[r.label] += 1
        return counts

    @property
    def resolutions(self) -> list[tuple[int, int]]:
        return sorted({r.resolution for r in self.records})

    @property
    def campaigns(self) -> list[str]:
        return sorted({r.campaign_id for r in self.records if r.campaign_id})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for r in self.records:
                d = asdict(r)
                d["resolution"] = list(r.resolution)
                f.write(json.dumps(d) + "\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        records = []
        for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                d["resolution"] = tuple(d["resolution"])
                records.append(SampleRecord(**d))
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise FileParseError(f"bad manifest record: {exc}", ln) from exc
        return cls(records=records, base_dir=path.parent)

    def image_file(self, r: SampleRecord) -> Path:
        return self.base_dir / r.image_path

    def text_file(self, r: SampleRecord) -> Path:
        return self.base_dir / r.text_path


@dataclass
class CorpusSample:
    """A manifest record plus lazy pixel/text loading."""

    record: SampleRecord
    manifest: Manifest
    _text: Optional[str] = field(default=None, repr=False)

    @property
    def sample_id(self) -> str:
        return self.record.sample_id

    @property
    def label01(self) -> int:
        return self.record.label01

    def load_text(self) -> str:
        if self._text is None:
            self._text = self.manifest.text_file(self.record).read_text(encoding="utf-8")
        return self._text

    def load_normalized(self) -> NormalizedImage:
        px = read_png(self.manifest.image_file(self.record))
        return normalize_screenshot(RawScreenshot.from_array(px))


def samples_of(manifest: Manifest) -> list[CorpusSample]:
    return [CorpusSample(r, manifest) for r in manifest.records]


# ---------------------------------------------------------------------------
# synthetic page rendering
# ---------------------------------------------------------------------------

NEUTRAL_SENTENCES = (
    "Welcome to our website",
    "Read the latest articles and news",
    "Browse the full product catalog",
    "Contact our team for more information",
    "Sign up for the monthly newsletter",
    "Explore recipes from around the world",
    "View opening hours and directions",
    "Our story began over twenty years ago",
    "Check the weather forecast for your area",
    "Learn more about the local community events",
    "Shipping is available to most countries",
    "See the photo gallery from last season",
)

CAMPAIGN_TEMPLATES = {
    "virus-alert": {
        "headlines": ("WARNING Your computer is infected",
                      "Critical alert 5 viruses detected"),
        "bodies": ("System scan found malicious software on your device",
                   "Your personal data is at risk act immediately"),
        "buttons": ("Remove viruses now", "Clean my PC"),
        "accent": (200, 40, 40),
    },
    "fake-flash": {
        "headlines": ("Your video player is out of date",
                      "Update required to continue playback"),
        "bodies": ("Install the latest update to watch this video",
                   "Playback stopped download the new version"),
        "buttons": ("Download now", "Update player"),
        "accent": (220, 120, 30),
    },
    "notify-allow": {
        "headlines": ("Click Allow to continue",
                      "Press Allow to confirm you are not a robot"),
        "bodies": ("This site needs your permission to show the video",
                   "Allow notifications to access the content"),
        "buttons": ("Allow", "Allow notifications"),
        "accent": (40, 90, 200),
    },
    "prize-spin": {
        "headlines": ("Congratulations you have won",
                      "You are today s lucky visitor"),
        "bodies": ("Claim your exclusive reward before the timer expires",
                   "Spin the wheel to collect your gift card"),
        "buttons": ("Claim your prize", "Spin now"),
        "accent": (160, 40, 180),
    },
    "tech-support": {
        "headlines": ("Your windows license has expired",
                      "Microsoft security alert call support"),
        "bodies": ("Call the toll free number now to avoid data loss",
                   "Do not shut down your computer call a technician"),
        "buttons": ("Call support now", "Get help"),
        "accent": (30, 60, 160),
    },
    "registration-scam": {
        "headlines": ("Confirm your registration to continue",
                      "Final step verify your account today"),
        "bodies": ("Enter the membership area after a quick confirmation",
                   "Your free trial is waiting complete the signup"),
        "buttons": ("Confirm now", "Activate membership"),
        "accent": (20, 140, 90),
    },
}


def _font_for(height: int):
    return ImageFont.load_default(size=max(14, min(30, height // 24)))


def _template_for(campaign: str, campaign_list: Sequence[str]) -> dict:
    if campaign in CAMPAIGN_TEMPLATES:
        return CAMPAIGN_TEMPLATES[campaign]
    names = sorted(CAMPAIGN_TEMPLATES)
    return CAMPAIGN_TEMPLATES[names[list(campaign_list).index(campaign) % len(names)]]


def _render_benign(w: int, h: int, rng: np.random.Generator,
                   sentences: Sequence[str]) -> tuple[np.ndarray, str]:
    bg = int(rng.integers(225, 256))
    im = Image.new("RGB", (w, h), (bg, bg, bg))
    draw = ImageDraw.Draw(im)
    header = tuple(int(v) for v in rng.integers(90, 180, size=3))
    draw.rectangle([0, 0, w, h // 10], fill=header)
    for _ in range(int(rng.integers(2, 5))):
        x0 = int(rng.integers(0, max(w - 40, 1)))
        y0 = int(rng.integers(h // 8, max(h - 40, h // 8 + 1)))
        bw = int(rng.integers(30, max(w // 3, 31)))
        bh = int(rng.integers(20, max(h // 6, 21)))
        shade = int(rng.integers(190, 235))
        draw.rectangle([x0, y0, min(x0 + bw, w - 1), min(y0 + bh, h - 1)],
                       fill=(shade, shade, shade))
    font = _font_for(h)
    n_lines = int(rng.integers(2, 5))
    chosen = [sentences[int(i)] for i in rng.integers(0, len(sentences), size=n_lines)]
    y = h // 8
    for line in chosen:
        draw.text((w // 12, y), line, fill=(40, 40, 40), font=font)
        y += max(h // (n_lines + 4), 18)
    return np.asarray(im), "\n".join(chosen)


def _render_bma(w: int, h: int, rng: np.random.Generator, template: dict,
                shared_text: Optional[Sequence[str]],
                background: str = "dark") -> tuple[np.ndarray, str]:
    if background == "light":
        # match the benign brightness range: no global-luminance shortcut,
        # the dialog motif itself must carry the separation
        bg = int(rng.integers(225, 256))
        im = Image.new("RGB", (w, h), (bg, bg, bg))
    else:
        bg = int(rng.integers(40, 110))
        im = Image.new("RGB", (w, h), (bg, bg, int(rng.integers(40, 110))))
    draw = ImageDraw.Draw(im)
    accent = template["accent"]

    if shared_text is None:
        headline = template["headlines"][int(rng.integers(0, len(template["headlines"])))]
        body = template["bodies"][int(rng.integers(0, len(template["bodies"])))]
        button = template["buttons"][int(rng.integers(0, len(template["buttons"])))]
    else:
        pick = rng.integers(0, len(shared_text), size=3)
        headline, body, button = (shared_text[int(i)] for i in pick)

    # dialog-box motif: bright centered box with border and a button bar
    bw, bh = int(w * 0.72), int(h * 0.5)
    x0, y0 = (w - bw) // 2, (h - bh) // 2
    jx = int(rng.integers(-w // 20, w // 20 + 1))
    jy = int(rng.integers(-h // 20, h // 20 + 1))
    x0, y0 = max(2, x0 + jx), max(2, y0 + jy)
    x1, y1 = min(x0 + bw, w - 3), min(y0 + bh, h - 3)
    draw.rectangle([x0, y0, x1, y1], fill=(250, 250, 250), outline=accent, width=4)
    draw.rectangle([x0, y0, x1, y0 + max(bh // 6, 12)], fill=accent)
    font = _font_for(h)
    draw.text((x0 + 10, y0 + max(bh // 6, 12) + 8), headline, fill=(20, 20, 20), font=font)
    draw.text((x0 + 10, y0 + bh // 2), body, fill=(60, 60, 60), font=font)
    btn_y0 = y1 - max(bh // 5, 16)
    draw.rectangle([x0 + bw // 4, btn_y0, x1 - bw // 4, y1 - 6], fill=accent)
    draw.text((x0 + bw // 4 + 12, btn_y0 + 4), button, fill=(255, 255, 255), font=font)
    return np.asarray(im), "\n".join((headline, body, button))


def generate_synthetic_corpus(out_dir, n_benign: int, n_bma: int,
                              resolutions: Sequence[tuple[int, int]],
                              campaigns: Sequence[str], seed: int,
                              text_mode: str = "separable",
                              bma_background: str = "dark") -> Manifest:
    """Render a seed-deterministic corpus of benign and attack pages.

    text_mode "separable" draws class-distinct copy (neutral vs campaign
    phrases); "shared" draws every string from the neutral pool so only the
    dialog motif separates the classes (used by adversarial experiments).
    bma_background "light" matches the benign brightness range so no global
    luminance shortcut exists.
    """
    if n_benign < 0 or n_bma < 0:
        raise InvalidInputError("counts must be >= 0")
    if not resolutions:
        raise InvalidInputError("need at least one resolution")
    if n_bma > 0 and not campaigns:
        raise InvalidInputError("bma samples need at least one campaign")
    if text_mode not in ("separable", "shared"):
        raise InvalidInputError("text_mode must be 'separable' or 'shared'")
    if bma_background not in ("dark", "light"):
        raise InvalidInputError("bma_background must be 'dark' or 'light'")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []

    def emit(idx: int, label: str, campaign: str, px: np.ndarray, text: str,
             res: tuple[int, int]):
        sid = f"{label}-{idx:05d}"
        img_rel, txt_rel = f"{sid}.png", f"{sid}.txt"
        write_png(out_dir / img_rel, px)
        (out_dir / txt_rel).write_text(text, encoding="utf-8")
        records.append(SampleRecord(
            sample_id=sid, image_path=img_rel, text_path=txt_rel,
            label=label, campaign_id=campaign, resolution=res,
        ))

    for i in range(n_benign):
        w, h = resolutions[int(rng.integers(0, len(resolutions)))]
        px, text = _render_benign(w, h, rng, NEUTRAL_SENTENCES)
        emit(i, LABEL_BENIGN, "", px, text, (w, h))

    shared = NEUTRAL_SENTENCES if text_mode == "shared" else None
    for i in range(n_bma):
        w, h = resolutions[int(rng.integers(0, len(resolutions)))]
        campaign = campaigns[i % len(campaigns)]
        px, text = _render_bma(w, h, rng, _template_for(campaign, campaigns), shared,
                               background=bma_background)
        emit(i, LABEL_BMA, campaign, px, text, (w, h))

    manifest = Manifest(records=records, base_dir=out_dir, generation_seed=seed)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


# ---------------------------------------------------------------------------
# text augmentation
# ---------------------------------------------------------------------------

def load_synonym_table(path=None) -> dict[str, list[str]]:
    """word<TAB>syn1,syn2 lines; defaults to the bundled ~200-entry table."""
    if path is None:
        path = Path(__file__).parent / "data" / "synonyms.txt"
    table = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            word, syns = line.split("\t")
        except ValueError as exc:
            raise FileParseError("expected word<TAB>synonyms", ln) from exc
        entries = [s.strip() for s in syns.split(",") if s.strip()]
        if any(" " in s for s in entries):
            raise FileParseError("synonyms must be single tokens", ln)
        table[word.lower()] = entries
    return table


def synonym_replace(text: str, table: dict[str, list[str]], seed: int,
                    probability: float = 0.5) -> str:
    """Replace table-hit words (independently, with the given probability) by
    a seed-chosen synonym; token count and non-table words are untouched."""
    rng = np.random.default_rng(seed)
    out = []
    for tok in text.split(" "):
        word = tok.lower()
        syns = table.get(word)
        if syns and rng.random() < probability:
            out.append(syns[int(rng.integers(0, len(syns)))])
        else:
            out.append(tok)
    return " ".join(out)


def augment_dataset(manifest: Manifest, text_table: dict[str, list[str]],
                    factor: int, seed: int, out_dir=None,
                    transform_pool: tuple = TRANSFORM_POOL) -> Manifest:
    """Expand the attack class to factor x its size (benign left untouched).

    Each augmented copy applies two seed-chosen image transforms to the
    normalized canvas plus synonym replacement to the sidecar text; augmented
    images are therefore 960x540 canvases.
    """
    if factor < 1:
        raise InvalidInputError("factor must be >= 1")
    if factor == 1:
        return Manifest(records=list(manifest.records), base_dir=manifest.base_dir,
                        generation_seed=manifest.generation_seed)
    out_dir = Path(out_dir) if out_dir else manifest.base_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = list(manifest.records)
    for r in manifest.records:
        if r.label != LABEL_BMA:
            continue
        base = CorpusSample(r, manifest)
        normalized = base.load_normalized()
        text = base.load_text()
        for copy in range(factor - 1):
            aug_seed = int(rng.integers(0, 2 ** 31))
            spec = AugmentationSpec(seed=aug_seed, transform_pool=transform_pool)
            aug = augment_image(normalized, spec)
            new_text = synonym_replace(text, text_table, aug_seed)
            sid = f"{r.sample_id}-aug{copy}"
            img_rel, txt_rel = f"{sid}.png", f"{sid}.txt"
            write_png(out_dir / img_rel, aug.pixels)
            (out_dir / txt_rel).write_text(new_text, encoding="utf-8")
            records.append(SampleRecord(
                sample_id=sid, image_path=img_rel, text_path=txt_rel,
                label=LABEL_BMA, campaign_id=r.campaign_id,
                resolution=(aug.width, aug.height),
            ))
    return Manifest(records=records, base_dir=out_dir,
                    generation_seed=manifest.generation_seed)


# ---------------------------------------------------------------------------
# leave-one-out splits
# ---------------------------------------------------------------------------

def _parse_resolution(value) -> tuple[int, int]:
    if isinstance(value, str):
        w, h = value.lower().split("x")
        return int(w), int(h)
    return tuple(value)


def leave_one_out_split(manifest: Manifest, axis: str, held,
                        benign_test_n: int = 0, campaign_cap: Optional[int] = None,
                        seed: int = 0) -> tuple[Manifest, Manifest]:
    """Hold out one resolution or campaign: train excludes it, test is it.

    benign_test_n moves a seeded benign draw from train into test (campaign
    axis), mirroring held-out benign evaluation sets. campaign_cap limits
    test BMA records per campaign (resolution axis); capped-out records are
    dropped, so the train/test partition is exact only when cap is None.
    """
    if axis == "resolution":
        held_res = _parse_resolution(held)
        if held_res not in {r.resolution for r in manifest.records}:
            raise NotFoundError(f"no records with resolution {held_res}")
        train = [r for r in manifest.records if r.resolution != held_res]
        test = [r for r in manifest.records if r.resolution == held_res]
        if campaign_cap is not None:
            seen: dict[str, int] = {}
            capped = []
            for r in test:
                if r.label == LABEL_BMA:
                    seen[r.campaign_id] = seen.get(r.campaign_id, 0) + 1
                    if seen[r.campaign_id] > campaign_cap:
                        continue
                capped.append(r)
            test = capped
        if benign_test_n:
            rng = np.random.default_rng(seed)
            benign = [r for r in test if r.label == LABEL_BENIGN]
            keep_idx = set()
            if benign:
                keep_idx = set(map(int, rng.choice(
                    len(benign), size=min(benign_test_n, len(benign)), replace=False)))
            kept_benign = {id(r) for i, r in enumerate(benign) if i in keep_idx}
            test = [r for r in test if r.label == LABEL_BMA or id(r) in kept_benign]
    elif axis == "campaign":
        if held not in manifest.campaigns:
            raise NotFoundError(f"no records with campaign {held!r}")
        train = [r for r in manifest.records if r.campaign_id != held]
        test = [r for r in manifest.records if r.campaign_id == held]
        if benign_test_n:
            rng = np.random.default_rng(seed)
            benign = [r for r in train if r.label == LABEL_BENIGN]
            take = set(map(int, rng.choice(
                len(benign), size=min(benign_test_n, len(benign)), replace=False)))
            moved = {id(r) for i, r in enumerate(benign) if i in take}
            test = test + [r for r in train if id(r) in moved]
            train = [r for r in train if id(r) not in moved]
    else:
        raise InvalidInputError("axis must be 'resolution' or 'campaign'")

    def tagged(records, tag):
        out = []
        for r in records:
            d = asdict(r)
            d["resolution"] = tuple(d["resolution"])
            d["split"] = tag
            out.append(SampleRecord(**d))
        return out

    return (
        Manifest(records=tagged(train, "train"), base_dir=manifest.base_dir,
                 generation_seed=manifest.generation_seed),
        Manifest(records=tagged(test, "test"), base_dir=manifest.base_dir,
                 generation_seed=manifest.generation_seed),
    )
