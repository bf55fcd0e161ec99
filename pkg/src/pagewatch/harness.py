"""Dataset assembly and experiment loops shared by the CLI and the test
harnesses: manifest -> tensors, training with early stop, evaluation reports,
PGD attack sweeps, and adversarial fine-tuning with the tiered curriculum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _accel
from .adversarial import (
    ModelAttackTarget, PerturbationTier, PgdConfig, LEVELS,
    pgd_attack_target, perturb_text_level1, plan_adv_curriculum,
)
from .corpus import CorpusSample, Manifest, samples_of
from .metrics import MetricsReport, ScoredLabels, report
from .model import (
    DualBranchModel, ModelConfig, TrainConfig, TrainingSet, Vocabulary,
    build_vocabulary, class_weights_from_counts, fit, score_batch, tokenize,
)


def build_vocab(manifest: Manifest, min_freq: int = 2, max_size: int = 8192) -> Vocabulary:
    return build_vocabulary(
        (CorpusSample(r, manifest).load_text() for r in manifest.records),
        min_freq=min_freq, max_size=max_size,
    )


def training_set(model: DualBranchModel, vocab: Vocabulary, manifest: Manifest,
                 max_len: int) -> TrainingSet:
    """Load, normalize, and preprocess every manifest record (streaming)."""
    samples = samples_of(manifest)
    pairs = ((s.load_normalized(), s.load_text(), s.label01) for s in samples)
    return TrainingSet.from_pairs(model, vocab, pairs, max_len,
                                  meta=[s.sample_id for s in samples])


def evaluate(model: DualBranchModel, dataset: TrainingSet,
             fp_target: float = 0.01) -> tuple[MetricsReport, ScoredLabels]:
    scores = score_batch(model, dataset)
    data = ScoredLabels(scores=scores, labels=dataset.labels)
    return report(data, fp_target), data


def accuracy(model: DualBranchModel, dataset: TrainingSet,
             threshold: float = 0.5) -> float:
    scores = score_batch(model, dataset)
    return float(((scores > threshold).astype(np.int64) == dataset.labels).mean())


@dataclass
class TrainResult:
    model: DualBranchModel
    vocab: Vocabulary
    history: list
    epochs_run: int


def train_from_manifest(manifest: Manifest, model_config: ModelConfig,
                        train_config: TrainConfig, max_len: int,
                        vocab: Optional[Vocabulary] = None,
                        stop_when: Optional[Callable[[DualBranchModel, Vocabulary], bool]] = None,
                        ) -> TrainResult:
    """Train a fresh model on a manifest; stop_when(model, vocab) checked per epoch."""
    vocab = vocab or build_vocab(manifest)
    cfg = ModelConfig(**{**model_config.__dict__, "vocab_size": max(vocab.size, 8)})
    model = DualBranchModel(cfg, seed=train_config.seed)
    dataset = training_set(model, vocab, manifest, max_len)
    if train_config.class_weights is None:
        n_benign, n_bma = dataset.class_counts
        train_config.class_weights = class_weights_from_counts(n_benign, n_bma)

    def callback(epoch, stats):
        return stop_when(model, vocab) if stop_when else False

    history = fit(model, dataset, train_config, after_epoch=callback)
    return TrainResult(model=model, vocab=vocab, history=history,
                       epochs_run=len(history))


# ---------------------------------------------------------------------------
# adversarial experiments
# ---------------------------------------------------------------------------

def tier_text(sample_text: str, tier: PerturbationTier, seed: int,
              external: Optional[dict] = None, sample_id: str = "") -> str:
    """Tier-paired text: level 1 is rule-based noise; levels 2-5 come from an
    externally generated map {sample_id: {level: text}} when available."""
    if tier.level == 1:
        return perturb_text_level1(sample_text, seed)
    if external and sample_id in external and tier.level in external[sample_id]:
        return external[sample_id][tier.level]
    return sample_text


class BatchAttackTarget:
    """Batched white-box loss/gradient oracle over the visual branch.

    Semantics match per-sample attacks (samples never interact: per-sample
    losses, per-sample gradients); batching exists purely for matmul
    throughput. Requires the canvas-to-model downscale to be integer aligned,
    which the contract dims (960x540 -> 240x135) are.
    """

    def __init__(self, model: DualBranchModel, ids: np.ndarray, mask: np.ndarray,
                 attack_loss: str = "ce"):
        from .imaging import OUT_H, OUT_W

        self.model = model
        self.attack_loss = attack_loss
        vh, vw = model.config.visual_input_hw
        if OUT_H % vh or OUT_W % vw:
            raise ValueError("batched attacks need an integer-aligned downscale")
        self.fy, self.fx = OUT_H // vh, OUT_W // vw
        t, _ = model._text_batch(ids, mask, "eval", None)
        self._t = t

    def downscale(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        vh, vw = self.model.config.visual_input_hw
        return x.reshape(b, vh, self.fy, vw, self.fx, 3).mean(
            axis=(2, 4), dtype=np.float32)

    def loss_and_grad_small(self, small: np.ndarray, labels: np.ndarray):
        """small: (B, vh, vw, 3) model-input images. Returns per-sample losses
        and the small-space gradient. The pixel-space sign pattern is the
        block-wise repeat of the small-space signs (the downscale transpose is
        a positive-scaled repeat), so the attack never materializes full-res
        gradients.

        attack_loss "ce" ascends the cross-entropy; "margin" ascends the
        wrong-minus-true logit gap, which keeps gradients alive on highly
        confident models where the softmax saturates.
        """
        from .model.layers import softmax

        m = self.model
        b = small.shape[0]
        xs = np.ascontiguousarray(small.transpose(0, 3, 1, 2), dtype=m.config.np_dtype)
        v, c_vis = m._visual_batch(xs, "eval", None)
        logits, c_head = m._head_batch(v, self._t, "eval", None)
        rows = np.arange(b)
        if self.attack_loss == "margin":
            z = logits.astype(np.float64)
            true = z[rows, labels]
            z_masked = z.copy()
            z_masked[rows, labels] = -np.inf
            losses = z_masked.max(axis=1) - true
            dlogits = np.zeros_like(z)
            dlogits[rows, z_masked.argmax(axis=1)] = 1.0
            dlogits[rows, labels] -= 1.0
        else:
            probs = softmax(logits.astype(np.float64), axis=1)
            losses = -np.log(probs[rows, labels])
            dlogits = probs
            dlogits[rows, labels] -= 1.0  # per-sample grads; scale-free signs
        dv, _, _ = m._head_batch_backward(dlogits.astype(m.config.np_dtype), c_head)
        dxs, _ = m._visual_batch_backward(dv, c_vis)
        return losses, np.ascontiguousarray(dxs.transpose(0, 2, 3, 1))


def pgd_attack_batch(target: BatchAttackTarget, x0: np.ndarray,
                     labels: np.ndarray, config: PgdConfig) -> np.ndarray:
    """PGD over a batch with per-sample best-loss tracking.

    The loop runs in float32 with the update/projection/downscale fused into
    one kernel pass; the final projection back to the epsilon ball runs in
    float64 shrunk by a relative 1e-12 so the returned L-inf bound holds
    exactly despite float rounding.
    """
    x64 = x0.astype(np.float64, copy=True)
    if config.epsilon == 0.0:
        return x64
    x0f = np.ascontiguousarray(x64, dtype=np.float32)
    if config.random_start:
        rng = np.random.default_rng(config.seed)
        x = x0f + rng.uniform(-config.epsilon, config.epsilon,
                              size=x0f.shape).astype(np.float32)
        np.clip(x, 0.0, 1.0, out=x)
    else:
        x = x0f.copy()
    small = target.downscale(x)
    best_x = x0f.copy()
    best_loss = np.full(len(x0f), -np.inf)

    def track(losses):
        improved = losses > best_loss
        if improved.any():
            best_x[improved] = x[improved]
            best_loss[improved] = losses[improved]

    for _ in range(config.iterations):
        losses, g_small = target.loss_and_grad_small(small, labels)
        track(losses)
        if not g_small.any():
            break
        signs = np.sign(g_small, out=g_small)
        _accel.pgd_fused_step(x, x0f, signs.astype(np.float32, copy=False),
                              config.step_size, config.epsilon,
                              target.fy, target.fx, small)
    losses, _ = target.loss_and_grad_small(small, labels)
    track(losses)

    out = best_x.astype(np.float64)
    delta = out - x64
    eps_inner = config.epsilon * (1.0 - 1e-12)
    np.clip(delta, -eps_inner, eps_inner, out=delta)
    out = x64 + delta
    np.clip(out, 0.0, 1.0, out=out)
    return out


def _attack_batches(model, vocab, entries, epsilon, max_len, iterations, seed,
                    batch_size=8, random_start=False, attack_loss="ce"):
    """entries: (image loader, text, label) triples -> adversarial float images.

    Yields (indices, adv_batch) so callers can stream-consume.
    """
    for start in range(0, len(entries), batch_size):
        chunk = entries[start:start + batch_size]
        ids = np.stack([tokenize(t, vocab, max_len).ids for _, t, _ in chunk])
        mask = np.stack([tokenize(t, vocab, max_len).attention_mask for _, t, _ in chunk])
        x0 = np.stack([load() for load, _, _ in chunk]).astype(np.float64) / 255.0
        labels = np.array([lab for _, _, lab in chunk], dtype=np.int64)
        target = BatchAttackTarget(model, ids, mask, attack_loss=attack_loss)
        cfg = PgdConfig(epsilon=epsilon, iterations=iterations, seed=seed + start,
                        random_start=random_start)
        adv = pgd_attack_batch(target, x0, labels, cfg)
        yield list(range(start, start + len(chunk))), adv


def attacked_scores(model: DualBranchModel, vocab: Vocabulary,
                    samples: Sequence[CorpusSample], epsilon: float,
                    max_len: int, iterations: int = 10,
                    seed: int = 0, batch_size: int = 8,
                    random_start: bool = False, attack_loss: str = "ce") -> np.ndarray:
    """Malicious-class probability for each sample after a white-box PGD
    attack on its image (text fixed)."""
    entries = [(s.load_normalized().pixels, s.load_text(), s.label01)
               for s in samples]  # u8 canvases: ~1.5 MB each
    entries = [((lambda px=px: px), t, lab) for px, t, lab in entries]
    probs = np.empty(len(samples), dtype=np.float64)
    for idx, adv in _attack_batches(model, vocab, entries, epsilon, max_len,
                                    iterations, seed, batch_size, random_start,
                                    attack_loss):
        pairs = [(adv[j], samples[i].load_text(), samples[i].label01)
                 for j, i in enumerate(idx)]
        ds = TrainingSet.from_pairs(model, vocab, pairs, max_len)
        probs[idx] = score_batch(model, ds)
    return probs


def attacked_accuracy(model: DualBranchModel, vocab: Vocabulary,
                      samples: Sequence[CorpusSample], epsilon: float,
                      max_len: int, iterations: int = 10, seed: int = 0,
                      restarts: int = 1, attack_loss: str = "ce") -> float:
    """Accuracy under attack; with restarts > 1 a sample must survive every
    random-start attack to count as correct (standard multi-restart PGD)."""
    labels = np.array([s.label01 for s in samples])
    surviving = np.ones(len(samples), dtype=bool)
    for r in range(restarts):
        probs = attacked_scores(model, vocab, samples, epsilon, max_len,
                                iterations, seed=seed + 7919 * r,
                                random_start=(restarts > 1 or r > 0),
                                attack_loss=attack_loss)
        surviving &= (probs > 0.5).astype(np.int64) == labels
    return float(surviving.mean())


def adversarial_finetune(model: DualBranchModel, vocab: Vocabulary,
                         clean_samples: Sequence[CorpusSample],
                         train_config: TrainConfig, max_len: int,
                         ratio: float = 0.2, epochs: int = 3,
                         iterations: int = 10,
                         external_texts: Optional[dict] = None,
                         tiers: Sequence[int] = LEVELS,
                         stop_when: Optional[Callable[[DualBranchModel, int], bool]] = None,
                         attack_loss: str = "ce",
                         regenerate_every: int = 1,
                         class_balance: bool = False) -> DualBranchModel:
    """Tiered-curriculum adversarial training.

    The adversarial portion is synthesized by PGD per tier at the
    clean:per-tier ratio and mixed with the clean pairs each epoch; the pool
    is regenerated against the current model every ``regenerate_every``
    epochs (1 = fresh attacks each epoch; larger values train several passes
    per pool, which is cheaper and less oscillatory). Optimizer state
    persists across epochs. ``stop_when(model, epoch)`` is checked after
    each epoch for early exit.
    """
    from .model.train import AdamState, train_epoch

    clean_set = TrainingSet.from_pairs(
        model, vocab,
        ((s.load_normalized(), s.load_text(), s.label01) for s in clean_samples),
        max_len)
    reweight_each_epoch = train_config.class_weights is None
    opt_state = AdamState() if train_config.optimizer == "adam" else None
    labels = [s.label01 for s in clean_samples] if class_balance else None

    adv_set = None
    for epoch in range(epochs):
        if adv_set is None or epoch % max(regenerate_every, 1) == 0:
            plan = plan_adv_curriculum(len(clean_samples), ratio, tiers,
                                       seed=train_config.seed + epoch,
                                       labels=labels)
            by_tier: dict[int, list[int]] = {}
            for level, idx in plan:
                by_tier.setdefault(level, []).append(idx)
            adv_pairs = []
            for level, indices in by_tier.items():
                tier = PerturbationTier(level)
                entries = []
                for idx in indices:
                    s = clean_samples[idx]
                    text = tier_text(s.load_text(), tier,
                                     seed=train_config.seed + idx,
                                     external=external_texts,
                                     sample_id=s.sample_id)
                    entries.append(((lambda s=s: s.load_normalized().pixels),
                                    text, s.label01))
                for pos, adv in _attack_batches(
                        model, vocab, entries, tier.epsilon, max_len, iterations,
                        seed=train_config.seed + epoch * 10007 + level,
                        attack_loss=attack_loss):
                    # reduce to model-input resolution right away: full-res
                    # floats are ~12 MB each; only the downscale is trained on
                    for j, p in enumerate(pos):
                        adv_pairs.append((model.preprocess_visual(adv[j]),
                                          entries[p][1], entries[p][2]))
            adv_set = TrainingSet.from_pairs(model, vocab, adv_pairs, max_len)
        mixed = TrainingSet(
            vis=np.concatenate([clean_set.vis, adv_set.vis]),
            ids=np.concatenate([clean_set.ids, adv_set.ids]),
            mask=np.concatenate([clean_set.mask, adv_set.mask]),
            labels=np.concatenate([clean_set.labels, adv_set.labels]),
        )
        if reweight_each_epoch:
            # weigh by what is actually trained on: the adversarial portion
            # shifts the class mix away from the clean counts
            train_config.class_weights = class_weights_from_counts(*mixed.class_counts)
        train_epoch(model, mixed, train_config, epoch, opt_state=opt_state)
        if stop_when is not None and stop_when(model, epoch):
            break
    return model
