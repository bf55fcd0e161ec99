"""Adversarial attack/defense machinery: L-infinity PGD on the image side,
rule-based character noise on the text side, ingestion of externally generated
perturbation tiers, and the mixed clean/adversarial training curriculum.

Five tiers pair an image budget with a text level: tier k uses
epsilon = {2, 4, 8, 16, 32}/255 in order. Level 1 text noise is generated
in-process; levels 2-5 are data ingested from a perturbation file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FileParseError, InvalidInputError
from .imaging import NormalizedImage, OUT_H, OUT_W
from .metrics import cosine_similarity, levenshtein, rouge_l_f1
from .model.network import DualBranchModel
from .model.train import compute_loss
from .model.vocab import TokenSequence, Vocabulary, tokenize

TIER_EPSILONS = {1: 2 / 255, 2: 4 / 255, 3: 8 / 255, 4: 16 / 255, 5: 32 / 255}
LEVELS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class PerturbationTier:
    level: int

    def __post_init__(self):
        if self.level not in TIER_EPSILONS:
            raise InvalidInputError("tier level must be 1..5")

    @property
    def epsilon(self) -> float:
        return TIER_EPSILONS[self.level]


@dataclass
class PgdConfig:
    epsilon: float
    step_size: Optional[float] = None  # defaults to epsilon / 4
    iterations: int = 10
    seed: int = 0
    random_start: bool = False

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidInputError("epsilon must be in [0, 1] pixel units")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if self.step_size is None:
            self.step_size = self.epsilon / 4.0
        if self.epsilon > 0 and self.step_size <= 0:
            raise InvalidInputError("step_size must be > 0 when epsilon > 0")


@dataclass
class AdversarialPair:
    image: NormalizedImage
    text: str
    tier: PerturbationTier
    origin_id: str


class ModelAttackTarget:
    """White-box loss/gradient oracle through the visual branch only.

    The text tokens are held fixed, so the text embedding is computed once;
    each query runs image -> downscale -> conv stack -> fusion -> loss and
    returns the gradient in 960x540 pixel space.
    """

    def __init__(self, model: DualBranchModel, tokens: TokenSequence):
        self.model = model
        t, _ = model._text_batch(tokens.ids[None], tokens.attention_mask[None],
                                 "eval", None)
        self._t = t
        self._weights = np.ones(model.config.classes)

    def loss_and_grad(self, img_float: np.ndarray, label: int):
        from . import _accel

        m = self.model
        vh, vw = m.config.visual_input_hw
        small = _accel.resize_area_f64(img_float, vh, vw)
        x = np.ascontiguousarray(small.transpose(2, 0, 1), dtype=m.config.np_dtype)[None]
        v, c_vis = m._visual_batch(x, "eval", None)
        logits, c_head = m._head_batch(v, self._t, "eval", None)
        loss, dlogits = compute_loss(logits, np.array([label]), self._weights)
        dv, _, _ = m._head_batch_backward(dlogits, c_head)
        dx, _ = m._visual_batch_backward(dv, c_vis)
        return loss, m.visual_gradient_to_input(dx[0])


def as_float_image(img) -> np.ndarray:
    """NormalizedImage / uint8 canvas / float canvas -> float64 in [0, 1]."""
    px = img.pixels if isinstance(img, NormalizedImage) else img
    if px.dtype == np.uint8:
        return px.astype(np.float64) / 255.0
    x = np.asarray(px, dtype=np.float64)
    if x.min() < 0.0 or x.max() > 1.0:
        raise InvalidInputError("float pixel values must lie in [0, 1]")
    return x


def pgd_attack_target(target, img_float: np.ndarray, true_label: int,
                      config: PgdConfig) -> np.ndarray:
    """Core PGD loop against any object exposing loss_and_grad(img, label).

    Sign-gradient ascent on the classification loss, projected to the
    epsilon ball and clamped to [0, 1] after every step; the best-loss
    iterate seen (including the start point) is returned, so more iterations
    never yield a weaker attack.
    """
    x0 = img_float.astype(np.float64, copy=True)
    if config.epsilon == 0.0:
        return x0
    x = x0.copy()
    if config.random_start:
        rng = np.random.default_rng(config.seed)
        x = np.clip(x0 + rng.uniform(-config.epsilon, config.epsilon, size=x0.shape), 0.0, 1.0)

    lo = np.clip(x0 - config.epsilon, 0.0, 1.0)
    hi = np.clip(x0 + config.epsilon, 0.0, 1.0)
    best_x, best_loss = x0, -np.inf
    for _ in range(config.iterations):
        loss, grad = target.loss_and_grad(x, true_label)
        if loss > best_loss:
            best_x, best_loss = x.copy(), loss
        if not grad.any():
            break
        np.sign(grad, out=grad)
        grad *= config.step_size
        x += grad
        np.clip(x, lo, hi, out=x)
    final_loss, _ = target.loss_and_grad(x, true_label)
    if final_loss > best_loss:
        best_x = x
    # exact final projection: shrink by a relative 1e-12 so the measured
    # L-inf distance never exceeds epsilon through float rounding
    delta = best_x - x0
    eps_inner = config.epsilon * (1.0 - 1e-12)
    np.clip(delta, -eps_inner, eps_inner, out=delta)
    best_x = x0 + delta
    np.clip(best_x, 0.0, 1.0, out=best_x)
    return best_x


def pgd_attack(model: DualBranchModel, img, text, true_label: int,
               config: PgdConfig, vocab: Optional[Vocabulary] = None,
               max_len: Optional[int] = None) -> np.ndarray:
    """White-box PGD on one (image, text) pair; text input held fixed.

    Returns the adversarial image as float64 in [0, 1], same 540x960x3 shape.
    """
    if isinstance(text, TokenSequence):
        tokens = text
    else:
        if vocab is None:
            raise InvalidInputError("vocab required to tokenize raw text")
        tokens = tokenize(text, vocab, max_len or model.config.max_len)
    target = ModelAttackTarget(model, tokens)
    return pgd_attack_target(target, as_float_image(img), true_label, config)


def quantize_adversarial(adv_float: np.ndarray, reference: NormalizedImage,
                         tier: PerturbationTier) -> NormalizedImage:
    """Round an attacked float image back to RGB8, validating the tier bound."""
    px = np.rint(adv_float * 255.0).astype(np.int64)
    diff = np.abs(px - reference.pixels.astype(np.int64)).max()
    budget = round(tier.epsilon * 255.0)
    if diff > budget:
        raise InvalidInputError(f"perturbation {diff} exceeds tier budget {budget}")
    return NormalizedImage(
        pixels=px.astype(np.uint8),
        scale_factor=reference.scale_factor,
        content_rect=(0, 0, OUT_W, OUT_H),
    )


# ---------------------------------------------------------------------------
# text perturbation
# ---------------------------------------------------------------------------

_WORD_SPLIT = re.compile(r"(\s+)")
_RULES = ("swap", "case", "o_to_0", "l_to_1")


def _applicable_rules(word: str) -> list[str]:
    rules = []
    if len(word) >= 2:
        rules.append("swap")
    if any(c.isalpha() for c in word):
        rules.append("case")
    if "O" in word:
        rules.append("o_to_0")
    if "l" in word:
        rules.append("l_to_1")
    return rules


def _apply_rule(word: str, rule: str, rng: np.random.Generator) -> str:
    if rule == "swap":
        i = int(rng.integers(0, len(word) - 1))
        return word[:i] + word[i + 1] + word[i] + word[i + 2:]
    if rule == "case":
        cased = [i for i, c in enumerate(word) if c.isalpha()]
        i = cased[int(rng.integers(0, len(cased)))]
        c = word[i]
        return word[:i] + (c.lower() if c.isupper() else c.upper()) + word[i + 1:]
    if rule == "o_to_0":
        return word.replace("O", "0")
    if rule == "l_to_1":
        return word.replace("l", "1")
    raise InvalidInputError(f"unknown rule {rule!r}")


def perturb_text_level1(text: str, seed: int, word_probability: float = 0.1) -> str:
    """OCR-style character noise: per word (with the given probability) one of
    adjacent-swap, case-flip, O->0, l->1. Character count is preserved."""
    if not text:
        return ""
    rng = np.random.default_rng(seed)
    parts = _WORD_SPLIT.split(text)
    out = []
    for part in parts:
        if part and not part.isspace() and rng.random() < word_probability:
            rules = _applicable_rules(part)
            if rules:
                part = _apply_rule(part, rules[int(rng.integers(0, len(rules)))], rng)
        out.append(part)
    return "".join(out)


# ---------------------------------------------------------------------------
# external perturbation files (levels 2-5 are generated out of process)
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^# id (?P<sid>\S.*)$")
_LEVEL_RE = re.compile(r"^Level (?P<k>\d+):\s?(?P<rest>.*)$")


def load_external_perturbations(path) -> tuple[list[str], dict[int, list[str]]]:
    """Parse the per-sample '# id <sid>' / 'Level k:' block format.

    Returns (sample_ids, {level: [text per sample in file order]}); every
    sample must carry all five levels.
    """
    ids: list[str] = []
    by_level: dict[int, list[str]] = {k: [] for k in LEVELS}
    current: dict[int, list[str]] = {}
    level: Optional[int] = None
    header_line = 0

    def close_sample(at_line: int):
        nonlocal current
        if not ids:
            return
        for k in LEVELS:
            if k not in current:
                raise FileParseError(
                    f"sample {ids[-1]!r} missing Level {k}", header_line)
        for k in LEVELS:
            by_level[k].append("\n".join(current[k]).rstrip("\n"))
        current = {}

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for ln, raw in enumerate(lines, start=1):
        m = _HEADER_RE.match(raw)
        if m:
            close_sample(ln)
            ids.append(m.group("sid").strip())
            header_line = ln
            level = None
            continue
        m = _LEVEL_RE.match(raw)
        if m:
            if not ids:
                raise FileParseError("level label before any '# id' header", ln)
            k = int(m.group("k"))
            if k not in TIER_EPSILONS:
                raise FileParseError(f"unknown level {k}", ln)
            if k in current:
                raise FileParseError(f"duplicate Level {k}", ln)
            level = k
            current[k] = [m.group("rest")] if m.group("rest") else []
            continue
        if raw.startswith("Level"):
            raise FileParseError(f"malformed level label {raw!r}", ln)
        if level is None:
            if raw.strip():
                raise FileParseError("text outside any level block", ln)
            continue
        current[level].append(raw)
    close_sample(len(lines) + 1)
    if not ids:
        raise FileParseError("no samples found", 1)
    return ids, by_level


def save_external_perturbations(path, ids: Sequence[str],
                                by_level: dict[int, Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, sid in enumerate(ids):
            f.write(f"# id {sid}\n")
            for k in LEVELS:
                f.write(f"Level {k}:\n")
                text = by_level[k][i]
                if text:
                    f.write(text + "\n")


# ---------------------------------------------------------------------------
# curriculum
# ---------------------------------------------------------------------------

@dataclass
class CurriculumEntry:
    kind: str  # "clean" | "adv"
    sample: object  # clean sample, or AdversarialPair for kind="adv"
    tier: Optional[PerturbationTier] = None


def plan_adv_curriculum(n_clean: int, ratio: float = 0.2,
                        tiers: Sequence[int] = LEVELS,
                        seed: int = 0,
                        labels: Optional[Sequence[int]] = None) -> list[tuple[int, int]]:
    """Seeded plan of (tier_level, clean_index) attacks keeping the
    clean : per-tier-adversarial ratio (10:2 by default).

    With ``labels`` given, each tier draws class-balanced (half per class,
    falling back to available counts) instead of uniformly — useful when the
    clean set is heavily imbalanced and the minority class is the one that
    needs robustness.
    """
    if n_clean < 1:
        raise InvalidInputError("clean set must be non-empty")
    if ratio < 0:
        raise InvalidInputError("ratio must be >= 0")
    per_tier = int(round(n_clean * ratio))
    rng = np.random.default_rng(seed)
    plan = []
    if labels is not None:
        labels = np.asarray(labels)
        pools = [np.flatnonzero(labels == c) for c in (0, 1)]
    for level in tiers:
        if labels is None or min(len(p) for p in pools) == 0:
            idx = rng.choice(n_clean, size=per_tier, replace=per_tier > n_clean)
        else:
            half = per_tier // 2
            takes = [half, per_tier - half]
            parts = [rng.choice(pool, size=take, replace=take > len(pool))
                     for pool, take in zip(pools, takes)]
            idx = np.concatenate(parts)
        plan.extend((level, int(i)) for i in idx)
    return plan


def build_adv_curriculum(clean_samples: Sequence, adv_generator: Callable,
                         ratio: float = 0.2, seed: int = 0,
                         tiers: Sequence[int] = LEVELS) -> list[CurriculumEntry]:
    """Materialize one epoch: every clean sample plus per-tier attacked copies.

    ``adv_generator(sample, tier) -> AdversarialPair``. With ratio 0 the
    result is a clean-only epoch.
    """
    entries = [CurriculumEntry("clean", s) for s in clean_samples]
    for level, idx in plan_adv_curriculum(len(clean_samples), ratio, tiers, seed):
        tier = PerturbationTier(level)
        entries.append(CurriculumEntry("adv", adv_generator(clean_samples[idx], tier), tier))
    return entries


# ---------------------------------------------------------------------------
# perturbation quality metrics
# ---------------------------------------------------------------------------

@dataclass
class PerturbationMetrics:
    levenshtein: int
    semantic_similarity: float
    rouge_l_f1: float


def perturbation_metrics(original: str, perturbed: str,
                         embed_fn: Callable[[str], np.ndarray]) -> PerturbationMetrics:
    """Distance triple between a text and its perturbed version.

    Semantic similarity is cosine over this artifact's own text-branch
    embeddings (``embed_fn``), so values are comparable only within one model.
    """
    return PerturbationMetrics(
        levenshtein=levenshtein(original, perturbed),
        semantic_similarity=cosine_similarity(embed_fn(original), embed_fn(perturbed)),
        rouge_l_f1=rouge_l_f1(original, perturbed),
    )
