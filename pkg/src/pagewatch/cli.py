"""Command-line entry points.

Subcommands: scan, serve, train, eval, attack, gen-corpus, hash, split.
Results print as JSON on stdout; bad usage exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .adversarial import PerturbationTier, PgdConfig, ModelAttackTarget, \
    pgd_attack_target, quantize_adversarial
from .config import Config
from .corpus import Manifest, SampleRecord, generate_synthetic_corpus, \
    leave_one_out_split, samples_of
from .errors import PagewatchError
from .harness import build_vocab, evaluate, tier_text, train_from_manifest, training_set
from .imaging import RawScreenshot, normalize_screenshot, read_png, write_png
from .logbuffer import LogBuffer, flush_logs
from .model import (
    DualBranchModel, ModelConfig, TrainConfig, load_checkpoint, load_vocab,
    save_checkpoint, save_vocab, tokenize,
)
from .ocr import ExternalProcessOcrEngine, StaticOcrEngine
from .phash import compute_phash
from .pipeline import ModelSnapshot, ScanEngine, WhitelistIndex, load_whitelist


def _whitelist(args) -> WhitelistIndex:
    if getattr(args, "whitelist", None):
        return load_whitelist(args.whitelist, cutoff=args.whitelist_cutoff)
    return WhitelistIndex(ranks={}, cutoff=args.whitelist_cutoff)


def _snapshot(args):
    if getattr(args, "model", None):
        model = load_checkpoint(args.model)
        vocab = load_vocab(args.vocab)
        return ModelSnapshot(model=model, vocab=vocab)
    return None


def _ocr_engine(args):
    if getattr(args, "ocr_cmd", None):
        return ExternalProcessOcrEngine(args.ocr_cmd.split())
    return StaticOcrEngine("")


def cmd_hash(args) -> int:
    px = read_png(args.image)
    normalized = normalize_screenshot(RawScreenshot.from_array(px))
    print(compute_phash(normalized).to_hex())
    return 0


def cmd_scan(args) -> int:
    engine = ScanEngine(
        whitelist=_whitelist(args),
        ocr_engine=_ocr_engine(args),
        snapshot=_snapshot(args),
        hamming_threshold=args.hamming_threshold,
    )
    px = read_png(args.image)
    screenshot = RawScreenshot.from_array(px, source_domain=args.domain)
    verdict = engine.run_scan_cycle(args.domain, screenshot, domain=args.domain)
    print(json.dumps(verdict.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = Config(
        whitelist_path=args.whitelist, model_path=args.model, vocab_path=args.vocab,
        hamming_threshold=args.hamming_threshold,
        whitelist_cutoff=args.whitelist_cutoff,
        bind_host=args.host, bind_port=args.port,
        log_flush_interval_s=args.flush_interval,
        log_dir=args.log_dir, retain_screenshots=args.retain_screenshots,
    )
    buffer = LogBuffer(config.log_dir, config.log_flush_interval_s)
    engine = ScanEngine(
        whitelist=_whitelist(args),
        ocr_engine=_ocr_engine(args),
        snapshot=_snapshot(args),
        hamming_threshold=config.hamming_threshold,
        log_sink=buffer.append,
        retain_screenshots=config.retain_screenshots,
    )
    app = create_app(engine, buffer)
    try:
        uvicorn.run(app, host=config.bind_host, port=config.bind_port, log_level="warning")
    finally:
        flush_logs(buffer, force=True)
    return 0


def cmd_train(args) -> int:
    manifest = Manifest.load(args.manifest)
    model_cfg = ModelConfig(dtype=args.dtype, max_len=args.max_len)
    train_cfg = TrainConfig(
        learning_rate=args.lr, weight_decay=args.weight_decay,
        batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
        optimizer=args.optimizer,
    )
    result = train_from_manifest(manifest, model_cfg, train_cfg, max_len=args.max_len)
    save_checkpoint(result.model, args.out)
    save_vocab(result.vocab, args.vocab_out)
    print(json.dumps({
        "checkpoint": str(args.out),
        "vocab": str(args.vocab_out),
        "epochs_run": result.epochs_run,
        "loss": [s.mean_loss for s in result.history],
        "parameters": result.model.param_count,
    }, indent=2))
    return 0


def cmd_eval(args) -> int:
    manifest = Manifest.load(args.manifest)
    model = load_checkpoint(args.model)
    vocab = load_vocab(args.vocab)
    dataset = training_set(model, vocab, manifest, args.max_len)
    rep, _ = evaluate(model, dataset, fp_target=args.fp_target)
    print(rep.to_json())
    return 0


def cmd_attack(args) -> int:
    manifest = Manifest.load(args.manifest)
    model = load_checkpoint(args.model)
    vocab = load_vocab(args.vocab)
    tier = PerturbationTier(args.tier)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = samples_of(manifest)
    if args.count:
        samples = samples[: args.count]
    records, linf = [], []
    for i, s in enumerate(samples):
        img = s.load_normalized()
        text = tier_text(s.load_text(), tier, seed=args.seed + i)
        tokens = tokenize(text, vocab, args.max_len)
        cfg = PgdConfig(epsilon=tier.epsilon, iterations=args.iterations,
                        seed=args.seed + i)
        adv = pgd_attack_target(ModelAttackTarget(model, tokens),
                                img.pixels.astype(np.float64) / 255.0,
                                s.label01, cfg)
        pair_img = quantize_adversarial(adv, img, tier)
        linf.append(float(np.abs(adv - img.pixels / 255.0).max()))
        sid = f"{s.sample_id}-t{tier.level}"
        write_png(out_dir / f"{sid}.png", pair_img.pixels)
        (out_dir / f"{sid}.txt").write_text(text, encoding="utf-8")
        records.append(SampleRecord(
            sample_id=sid, image_path=f"{sid}.png", text_path=f"{sid}.txt",
            label=s.record.label, campaign_id=s.record.campaign_id,
            resolution=(pair_img.width, pair_img.height),
        ))
    Manifest(records=records, base_dir=out_dir).save(out_dir / "manifest.jsonl")
    print(json.dumps({
        "tier": tier.level, "epsilon": tier.epsilon, "pairs": len(records),
        "max_linf": max(linf) if linf else 0.0,
        "manifest": str(out_dir / "manifest.jsonl"),
    }, indent=2))
    return 0


def cmd_gen_corpus(args) -> int:
    resolutions = [tuple(map(int, r.split("x"))) for r in args.resolutions.split(",")]
    campaigns = [c for c in args.campaigns.split(",") if c]
    manifest = generate_synthetic_corpus(
        args.out, args.benign, args.bma, resolutions, campaigns,
        seed=args.seed, text_mode=args.text_mode,
    )
    print(json.dumps({
        "manifest": str(Path(args.out) / "manifest.jsonl"),
        "class_counts": manifest.class_counts,
        "resolutions": [f"{w}x{h}" for w, h in manifest.resolutions],
        "campaigns": manifest.campaigns,
        "seed": args.seed,
    }, indent=2))
    return 0


def cmd_split(args) -> int:
    manifest = Manifest.load(args.manifest)
    train, test = leave_one_out_split(
        manifest, axis=args.axis, held=args.held,
        benign_test_n=args.benign_test_n, campaign_cap=args.campaign_cap,
        seed=args.seed,
    )
    train.save(args.out_train)
    test.save(args.out_test)
    print(json.dumps({
        "train": {"path": str(args.out_train), **train.class_counts},
        "test": {"path": str(args.out_test), **test.class_counts},
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pagewatch",
                                description="screenshot-based page defense toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_model_flags(sp, required=False):
        sp.add_argument("--model", required=required, help="model checkpoint path")
        sp.add_argument("--vocab", required=required, help="vocabulary sidecar path")

    def add_engine_flags(sp):
        sp.add_argument("--whitelist", help="rank,domain CSV")
        sp.add_argument("--whitelist-cutoff", type=int, default=100_000)
        sp.add_argument("--hamming-threshold", type=int, default=5)
        sp.add_argument("--ocr-cmd", help="external OCR command (a PNG path is appended)")

    sp = sub.add_parser("hash", help="print the perceptual hash of an image")
    sp.add_argument("image")
    sp.set_defaults(fn=cmd_hash)

    sp = sub.add_parser("scan", help="classify one (image, domain) pair")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--image", required=True)
    add_engine_flags(sp)
    add_model_flags(sp)
    sp.set_defaults(fn=cmd_scan)

    sp = sub.add_parser("serve", help="run the local JSON service")
    add_engine_flags(sp)
    add_model_flags(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8787)
    sp.add_argument("--log-dir", default="pagewatch-logs")
    sp.add_argument("--flush-interval", type=float, default=120.0)
    sp.add_argument("--retain-screenshots", action="store_true")
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("train", help="train the classifier from a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--vocab-out", required=True)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--lr", type=float, default=3e-4)
    sp.add_argument("--weight-decay", type=float, default=5e-4)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--max-len", type=int, default=32)
    sp.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    sp.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    sp.add_argument("--manifest", required=True)
    add_model_flags(sp, required=True)
    sp.add_argument("--fp-target", type=float, default=0.01)
    sp.add_argument("--max-len", type=int, default=32)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("attack", help="emit adversarial pairs at one tier")
    sp.add_argument("--manifest", required=True)
    add_model_flags(sp, required=True)
    sp.add_argument("--tier", type=int, choices=(1, 2, 3, 4, 5), required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=0, help="limit samples (0 = all)")
    sp.add_argument("--iterations", type=int, default=10)
    sp.add_argument("--max-len", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_attack)

    sp = sub.add_parser("gen-corpus", help="synthesize a screenshot+text corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--benign", type=int, default=500)
    sp.add_argument("--bma", type=int, default=100)
    sp.add_argument("--resolutions", default="1366x768,1920x1080,800x1280,360x640")
    sp.add_argument("--campaigns", default="virus-alert,notify-allow,prize-spin")
    sp.add_argument("--text-mode", choices=("separable", "shared"), default="separable")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_gen_corpus)

    sp = sub.add_parser("split", help="leave-one-out train/test manifests")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--axis", choices=("resolution", "campaign"), required=True)
    sp.add_argument("--held", required=True)
    sp.add_argument("--out-train", required=True)
    sp.add_argument("--out-test", required=True)
    sp.add_argument("--benign-test-n", type=int, default=0)
    sp.add_argument("--campaign-cap", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_split)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PagewatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
