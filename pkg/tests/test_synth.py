import hashlib

import numpy as np
import pytest

from autosign.pose_data import MANIFEST_NAME, read_manifest, read_split, vocabulary_for
from autosign.synth import SplitPlan, SynthConfig, SynthCorpus, gloss_names, synth_dataset, synth_generate


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_counts_and_files(tmp_path):
    samples = synth_generate(SynthConfig(n_samples=100), seed=0, out_dir=tmp_path)
    rows = read_manifest(tmp_path / MANIFEST_NAME)
    assert len(samples) == len(rows) == 100
    assert len(list((tmp_path / "poses").glob("*.pose"))) == 100


def test_same_seed_byte_identical(tmp_path):
    cfg = SynthConfig(n_samples=12)
    synth_generate(cfg, 3, tmp_path / "a")
    synth_generate(cfg, 3, tmp_path / "b")
    synth_generate(cfg, 4, tmp_path / "c")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


def test_noise_free_render_is_pure():
    corpus = SynthCorpus(SynthConfig(noise_sigma=0.0), seed=1)
    a = corpus.render([3, 1, 4], signer=2, noise_rng=np.random.default_rng(0))
    b = corpus.render([3, 1, 4], signer=2, noise_rng=np.random.default_rng(99))
    assert np.array_equal(a, b)
    c = corpus.render([3, 1, 4], signer=3, noise_rng=None)
    assert not np.array_equal(a, c)


def test_sentences_respect_config():
    cfg = SynthConfig(n_samples=60, vocab_size=20, sentence_len_range=(3, 7), frames_per_gloss_range=(10, 16))
    for s in synth_generate(cfg, 0):
        assert 3 <= len(s.glosses) <= 7
        assert 30 <= s.pose.num_frames <= 7 * 16
        assert set(s.glosses) <= set(gloss_names(20))
        assert s.pose.num_joints == 86


def test_signers_round_robin():
    samples = synth_generate(SynthConfig(n_samples=9, n_signers=3), 0)
    assert [s.signer_id for s in samples[:4]] == ["signer00", "signer01", "signer02", "signer00"]


def test_dataset_splits_hold_out_signers(tmp_path):
    plan = SplitPlan(n_train=20, n_dev=6, n_test=6, train_signers=4, dev_signers=2, test_signers=2)
    splits = synth_dataset(SynthConfig(), plan, 0, tmp_path)
    assert {k: len(v) for k, v in splits.items()} == {"train": 20, "dev": 6, "test": 6}
    rows = {r.sample_id: r for r in read_manifest(tmp_path / MANIFEST_NAME)}
    signers = {k: {rows[i].signer_id for i in read_split(tmp_path / f"{k}.txt")} for k in splits}
    assert signers["train"].isdisjoint(signers["dev"])
    assert signers["train"].isdisjoint(signers["test"])
    assert signers["dev"].isdisjoint(signers["test"])
    assert len(vocabulary_for(tmp_path).glosses) <= 20


def test_large_vocab_names():
    names = gloss_names(50)
    assert len(set(names)) == 50


@pytest.mark.parametrize("kw", [dict(vocab_size=1), dict(n_samples=0), dict(sentence_len_range=(4, 3)),
                                dict(frames_per_gloss_range=(1, 3)), dict(noise_sigma=-1.0)])
def test_config_errors(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)
