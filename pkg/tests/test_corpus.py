import hashlib
import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from pagewatch.corpus import (
    LABEL_BENIGN, LABEL_BMA, Manifest, NEUTRAL_SENTENCES, SampleRecord,
    augment_dataset, generate_synthetic_corpus, leave_one_out_split,
    load_synonym_table, samples_of, synonym_replace,
)
from pagewatch.errors import InvalidInputError, NotFoundError
from pagewatch.imaging import read_png
from pagewatch.metrics import ScoredLabels, auroc


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def gen(tmp_path, name="corpus", n_benign=24, n_bma=8, seed=7, **kw):
    kw.setdefault("resolutions", [(320, 240), (200, 320)])
    kw.setdefault("campaigns", ["virus-alert", "notify-allow"])
    return generate_synthetic_corpus(tmp_path / name, n_benign, n_bma, seed=seed, **kw)


class TestGeneration:
    def test_counts_and_ratio(self, tmp_path):
        m = gen(tmp_path, n_benign=100, n_bma=20, resolutions=[(160, 120)],
                campaigns=["virus-alert", "notify-allow"])
        assert len(m.records) == 120
        assert m.class_counts == {LABEL_BENIGN: 100, LABEL_BMA: 20}
        assert m.campaigns == ["notify-allow", "virus-alert"]

    def test_same_seed_byte_identical(self, tmp_path):
        gen(tmp_path, name="a", seed=11)
        gen(tmp_path, name="b", seed=11)
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_different_seed_differs(self, tmp_path):
        gen(tmp_path, name="a", seed=1)
        gen(tmp_path, name="b", seed=2)
        assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "b")

    def test_image_text_pairing_one_to_one(self, tmp_path):
        m = gen(tmp_path)
        for r in m.records:
            assert m.image_file(r).exists()
            assert m.text_file(r).exists()
        assert len({r.sample_id for r in m.records}) == len(m.records)

    def test_bma_records_carry_campaigns(self, tmp_path):
        m = gen(tmp_path)
        for r in m.records:
            if r.label == LABEL_BMA:
                assert r.campaign_id
            else:
                assert r.campaign_id == ""

    def test_resolutions_recorded_match_files(self, tmp_path):
        m = gen(tmp_path)
        for r in m.records[:6]:
            px = read_png(m.image_file(r))
            assert (px.shape[1], px.shape[0]) == r.resolution

    def test_manifest_round_trip(self, tmp_path):
        m = gen(tmp_path)
        loaded = Manifest.load(tmp_path / "corpus" / "manifest.jsonl")
        assert [r.sample_id for r in loaded.records] == [r.sample_id for r in m.records]
        assert loaded.class_counts == m.class_counts

    def test_bag_of_words_linear_baseline_separates(self, tmp_path):
        m = gen(tmp_path, n_benign=60, n_bma=30, seed=3,
                resolutions=[(320, 240)], campaigns=["virus-alert", "prize-spin"])
        samples = samples_of(m)
        half = len(samples) // 2
        rng = np.random.default_rng(0)
        order = rng.permutation(len(samples))
        train = [samples[i] for i in order[:half]]
        test = [samples[i] for i in order[half:]]
        # naive log-odds bag-of-words scorer: the simplest linear classifier
        counts = {0: Counter(), 1: Counter()}
        totals = {0: 2.0, 1: 2.0}
        for s in train:
            for w in s.load_text().lower().split():
                counts[s.label01][w] += 1
                totals[s.label01] += 1
        def score(text):
            out = 0.0
            for w in text.lower().split():
                p1 = (counts[1][w] + 1.0) / totals[1]
                p0 = (counts[0][w] + 1.0) / totals[0]
                out += np.log(p1 / p0)
            return out
        scores = np.array([score(s.load_text()) for s in test])
        labels = np.array([s.label01 for s in test])
        assert auroc(ScoredLabels(scores=scores, labels=labels)) >= 0.9

    def test_shared_text_mode_uses_neutral_pool_for_bma(self, tmp_path):
        m = gen(tmp_path, text_mode="shared", seed=5)
        neutral_words = {w.lower() for s in NEUTRAL_SENTENCES for w in s.split()}
        for s in samples_of(m):
            if s.label01 == 1:
                for w in s.load_text().lower().split():
                    assert w in neutral_words

    def test_validation_errors(self, tmp_path):
        with pytest.raises(InvalidInputError):
            generate_synthetic_corpus(tmp_path / "x", 1, 1, [], ["c"], seed=0)
        with pytest.raises(InvalidInputError):
            generate_synthetic_corpus(tmp_path / "x", 1, 1, [(64, 64)], [], seed=0)


class TestSynonymReplace:
    def test_empty_table_is_identity(self):
        assert synonym_replace("download now", {}, seed=0) == "download now"

    def test_forced_single_substitution(self):
        out = synonym_replace("download now", {"download": ["fetch"]},
                              seed=0, probability=1.0)
        assert out == "fetch now"

    def test_token_count_preserved(self):
        table = load_synonym_table()
        rng = np.random.default_rng(1)
        words = ["download", "update", "the", "zzz", "click", "Allow", "now"]
        for seed in range(30):
            text = " ".join(str(w) for w in rng.choice(words, size=rng.integers(1, 15)))
            out = synonym_replace(text, table, seed)
            assert len(out.split(" ")) == len(text.split(" "))

    def test_non_table_words_untouched(self):
        out = synonym_replace("qwerty download", {"download": ["fetch"]},
                              seed=0, probability=1.0)
        assert out.split()[0] == "qwerty"

    def test_bundled_table_is_large_and_single_token(self):
        table = load_synonym_table()
        assert len(table) >= 150
        for word, syns in table.items():
            assert syns and all(" " not in s for s in syns)


class TestAugmentDataset:
    def test_factor_three_triples_bma_only(self, tmp_path):
        m = gen(tmp_path, n_benign=10, n_bma=20, seed=9)
        out = augment_dataset(m, {"click": ["press"]}, factor=3, seed=1,
                              out_dir=tmp_path / "aug")
        assert out.class_counts[LABEL_BMA] == 60
        assert out.class_counts[LABEL_BENIGN] == 10

    def test_factor_one_unchanged(self, tmp_path):
        m = gen(tmp_path)
        out = augment_dataset(m, {}, factor=1, seed=1)
        assert [r.sample_id for r in out.records] == [r.sample_id for r in m.records]

    def test_augmented_images_are_normalized_canvases(self, tmp_path):
        m = gen(tmp_path, n_benign=2, n_bma=3, seed=2)
        out = augment_dataset(m, {}, factor=2, seed=3, out_dir=tmp_path / "aug")
        for r in out.records:
            if r.sample_id.endswith("-aug0"):
                assert r.resolution == (960, 540)
                px = read_png(out.image_file(r))
                assert px.shape == (540, 960, 3)

    def test_campaign_preserved_on_copies(self, tmp_path):
        m = gen(tmp_path, n_benign=2, n_bma=4, seed=4)
        out = augment_dataset(m, {}, factor=2, seed=5, out_dir=tmp_path / "aug")
        by_id = {r.sample_id: r for r in out.records}
        for r in m.records:
            if r.label == LABEL_BMA:
                assert by_id[r.sample_id + "-aug0"].campaign_id == r.campaign_id


class TestLeaveOneOut:
    def test_resolution_split_excludes_held(self, tmp_path):
        m = gen(tmp_path, seed=6)
        train, test = leave_one_out_split(m, "resolution", "320x240")
        assert all(r.resolution != (320, 240) for r in train.records)
        assert all(r.resolution == (320, 240) for r in test.records)
        assert all(r.split == "train" for r in train.records)
        assert all(r.split == "test" for r in test.records)

    def test_partition_is_exact_without_cap(self, tmp_path):
        m = gen(tmp_path, seed=8)
        train, test = leave_one_out_split(m, "resolution", (320, 240))
        ids = sorted(r.sample_id for r in train.records + test.records)
        assert ids == sorted(r.sample_id for r in m.records)

    def test_campaign_split_disjoint_and_exact(self, tmp_path):
        m = gen(tmp_path, seed=10)
        train, test = leave_one_out_split(m, "campaign", "virus-alert",
                                          benign_test_n=5, seed=1)
        train_campaigns = {r.campaign_id for r in train.records if r.campaign_id}
        assert "virus-alert" not in train_campaigns
        assert {r.campaign_id for r in test.records if r.campaign_id} == {"virus-alert"}
        assert sum(r.label == LABEL_BENIGN for r in test.records) == 5
        ids = sorted(r.sample_id for r in train.records + test.records)
        assert ids == sorted(r.sample_id for r in m.records)

    def test_campaign_cap_limits_test_bma(self, tmp_path):
        m = gen(tmp_path, n_benign=4, n_bma=12, seed=12,
                resolutions=[(320, 240)], campaigns=["virus-alert", "notify-allow"])
        _, test = leave_one_out_split(m, "resolution", (320, 240), campaign_cap=2)
        per_campaign = Counter(r.campaign_id for r in test.records if r.label == LABEL_BMA)
        assert all(v <= 2 for v in per_campaign.values())

    def test_unknown_held_value_raises(self, tmp_path):
        m = gen(tmp_path, seed=13)
        with pytest.raises(NotFoundError):
            leave_one_out_split(m, "resolution", "999x999")
        with pytest.raises(NotFoundError):
            leave_one_out_split(m, "campaign", "no-such-campaign")

    def test_bad_axis_rejected(self, tmp_path):
        m = gen(tmp_path, seed=14)
        with pytest.raises(InvalidInputError):
            leave_one_out_split(m, "color", "x")
