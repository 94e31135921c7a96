import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from autosign.errors import BatchError, ConfigError, CorruptionError, EmptyPoseError, FormatError
from autosign.pose_data import (BOS, EOS, FULL_LAYOUT, MODALITIES, PAD, UNK, GlossSequence, KeypointLayout,
                                ManifestRow, PoseSequence, build_vocabulary, load_pose_file, normalize_sequence,
                                pad_and_mask, read_manifest, read_pose_header, select_modality, write_manifest,
                                write_pose_file)


def _seq(T=5, J=86, seed=0, layout=FULL_LAYOUT):
    rng = np.random.default_rng(seed)
    return PoseSequence(rng.uniform(10, 500, size=(T, J, 2)).astype(np.float32), layout)


def test_layout_spans():
    spans = {n: (s, k) for n, s, k in FULL_LAYOUT.parts}
    assert spans == {"body": (0, 25), "face": (25, 19), "left_hand": (44, 21), "right_hand": (65, 21)}
    covered = sorted(i for n in FULL_LAYOUT.names for i in range(86)[FULL_LAYOUT.span(n)])
    assert covered == list(range(86))


# file format ----------------------------------------------------------------

def test_round_trip_shape_and_bits(tmp_path):
    seq = _seq(T=3)
    write_pose_file(seq, tmp_path / "a.pose")
    back = load_pose_file(tmp_path / "a.pose")
    assert back.frames.shape == (3, 86, 2)
    assert np.array_equal(back.frames, seq.frames)
    assert read_pose_header(tmp_path / "a.pose") == (1, 3, 86)


@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 6), st.just(86), st.just(2)),
                  elements=st.floats(-1e4, 1e4, width=32)))
@settings(max_examples=30, deadline=None)
def test_round_trip_is_bitwise_for_float32_values(tmp_path_factory, frames):
    path = tmp_path_factory.mktemp("rt") / "x.pose"
    seq = PoseSequence(frames)
    write_pose_file(seq, path)
    assert load_pose_file(path).frames.tobytes() == seq.frames.tobytes()


def test_file_size_and_header_layout(tmp_path):
    write_pose_file(_seq(T=1), tmp_path / "m.pose")
    raw = (tmp_path / "m.pose").read_bytes()
    assert len(raw) == 16 + 1 * 86 * 2 * 4
    assert raw[:4] == b"PSEQ"
    assert struct.unpack("<III", raw[4:16]) == (1, 1, 86)
    assert np.frombuffer(raw[16:], "<f4")[0] == np.float32(_seq(T=1).frames[0, 0, 0])


def test_bad_magic(tmp_path):
    write_pose_file(_seq(T=2), tmp_path / "a.pose")
    raw = bytearray((tmp_path / "a.pose").read_bytes())
    raw[:4] = b"XXXX"
    (tmp_path / "a.pose").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_pose_file(tmp_path / "a.pose")


def test_bad_version(tmp_path):
    write_pose_file(_seq(T=2), tmp_path / "a.pose")
    raw = bytearray((tmp_path / "a.pose").read_bytes())
    raw[4:8] = struct.pack("<I", 2)
    (tmp_path / "a.pose").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_pose_file(tmp_path / "a.pose")


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.pose"
    payload = np.zeros((9, 86, 2), "<f4").tobytes()
    path.write_bytes(b"PSEQ" + struct.pack("<III", 1, 10, 86) + payload)
    with pytest.raises(CorruptionError):
        load_pose_file(path)


def test_truncated_header(tmp_path):
    (tmp_path / "h.pose").write_bytes(b"PSEQ\x01")
    with pytest.raises(CorruptionError):
        load_pose_file(tmp_path / "h.pose")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_pose_file(_seq(T=1), tmp_path / "missing_dir" / "x.pose")


# normalization --------------------------------------------------------------

def test_normalize_affine_closed_form():
    f = np.zeros((1, 86, 2))
    f[0, :3, 0] = [0.0, 50.0, 100.0]
    f[0, :3, 1] = [10.0, 20.0, 30.0]
    out = normalize_sequence(PoseSequence(f)).frames
    np.testing.assert_allclose(out[0, :3, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(out[0, 3:], 0.0)  # missing stays (0, 0)


def test_normalize_fixed_point():
    rng = np.random.default_rng(0)
    f = rng.uniform(-1, 1, size=(4, 86, 2))
    f[0, 0] = [-1, -1]
    f[1, 1] = [1, 1]
    np.testing.assert_allclose(normalize_sequence(PoseSequence(f)).frames, f, atol=1e-12)


def test_normalize_degenerate_axis():
    f = np.zeros((2, 86, 2))
    f[:, :5, 0] = np.arange(1, 6)
    f[:, :5, 1] = 7.0
    out = normalize_sequence(PoseSequence(f)).frames
    np.testing.assert_array_equal(out[:, :5, 1], 0.0)


def test_normalize_empty_raises():
    with pytest.raises(EmptyPoseError):
        normalize_sequence(PoseSequence(np.zeros((3, 86, 2))))


@given(st.floats(0.1, 10), st.floats(-100, 100), st.floats(-100, 100), st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_normalize_affine_invariance(s, tx, ty, seed):
    seq = _seq(T=3, seed=seed)
    moved = seq.replace(seq.frames * s + np.array([tx, ty]))
    np.testing.assert_allclose(normalize_sequence(moved).frames, normalize_sequence(seq).frames, atol=1e-9)


@given(st.integers(0, 10_000), st.floats(0.0, 0.9))
@settings(max_examples=60, deadline=None)
def test_normalize_output_in_unit_box_and_sentinel_kept(seed, missing_frac):
    rng = np.random.default_rng(seed)
    f = rng.normal(scale=300, size=(4, 86, 2))
    gone = rng.random((4, 86)) < missing_frac
    gone[0, 0] = False
    f[gone] = 0.0
    out = normalize_sequence(PoseSequence(f)).frames
    assert np.all(out >= -1.0) and np.all(out <= 1.0)
    np.testing.assert_array_equal(out[gone], 0.0)


# modality -------------------------------------------------------------------

@pytest.mark.parametrize("modality,J", [("body_hands", 67), ("full", 86), ("hands_only", 42), ("hands_face", 61)])
def test_modality_joint_counts(modality, J):
    out = select_modality(_seq(), modality)
    assert out.num_joints == J and out.feature_dim == 2 * J
    assert out.layout.names == tuple(p for p in ("body", "face", "left_hand", "right_hand")
                                     if p in MODALITIES[modality])


def test_modality_keeps_exact_columns():
    seq = _seq()
    out = select_modality(seq, "body_hands")
    np.testing.assert_array_equal(out.frames[:, :25], seq.frames[:, :25])
    np.testing.assert_array_equal(out.frames[:, 25:], seq.frames[:, 44:])


@pytest.mark.parametrize("modality", sorted(MODALITIES))
def test_modality_idempotent_through_full(modality):
    seq = _seq()
    a = select_modality(select_modality(seq, "full"), modality)
    np.testing.assert_array_equal(a.frames, select_modality(seq, modality).frames)


def test_unknown_modality():
    with pytest.raises(ConfigError):
        select_modality(_seq(), "feet")


def test_modality_needs_parts():
    partial = select_modality(_seq(), "hands_only")
    with pytest.raises(ConfigError):
        select_modality(partial, "body_hands")


# batching -------------------------------------------------------------------

def test_pad_and_mask_lengths():
    a, b = _seq(T=4, seed=1), _seq(T=2, seed=2)
    batch = pad_and_mask([(a, GlossSequence([5, 6])), (b, GlossSequence([7, 8, 9]))])
    assert batch.poses.shape[:2] == (2, 4)
    np.testing.assert_array_equal(batch.pose_mask[1], [1, 1, 0, 0])
    np.testing.assert_array_equal(batch.poses[1, 2:], 0.0)
    np.testing.assert_array_equal(batch.poses[0], a.frames)
    assert batch.tokens_in.shape[1] == 4
    np.testing.assert_array_equal(batch.tokens_in[0], [BOS, 5, 6, PAD])
    np.testing.assert_array_equal(batch.tokens_out[0], [5, 6, EOS, PAD])
    np.testing.assert_array_equal(batch.tokens_out[1], [7, 8, 9, EOS])
    np.testing.assert_array_equal(batch.token_mask[0], [1, 1, 1, 0])
    np.testing.assert_array_equal(batch.gloss_lengths, [2, 3])


def test_single_sample_masks_all_ones():
    batch = pad_and_mask([(_seq(T=3), GlossSequence([4]))])
    assert batch.pose_mask.all() and batch.token_mask.all()


def test_tokens_out_is_shifted_tokens_in():
    rng = np.random.default_rng(4)
    samples = [(_seq(T=int(rng.integers(1, 6)), seed=i), GlossSequence(rng.integers(4, 20, size=int(rng.integers(1, 5)))))
               for i in range(5)]
    b = pad_and_mask(samples)
    for i, (_, g) in enumerate(samples):
        n = len(g)
        np.testing.assert_array_equal(b.tokens_out[i, :n], b.tokens_in[i, 1:n + 1])
        assert b.tokens_out[i, n] == EOS


def test_batch_errors():
    with pytest.raises(BatchError):
        pad_and_mask([])
    with pytest.raises(BatchError):
        pad_and_mask([(_seq(), GlossSequence([4])), (select_modality(_seq(), "hands_only"), GlossSequence([4]))])


def test_gloss_sequence_rejects_specials():
    for bad in (PAD, BOS, EOS):
        with pytest.raises(ValueError):
            GlossSequence([4, bad])


# vocabulary -----------------------------------------------------------------

def test_vocabulary_sort_rule():
    v = build_vocabulary(["QUESTION HE"])
    assert v.encode("HE QUESTION") == [4, 5]
    assert v.itos[:4] == ["<pad>", "<bos>", "<eos>", "<unk>"]


def test_vocabulary_dedup_and_round_trip():
    corpus = ["I GO SCHOOL", "YOU GO HOME", "I GO SCHOOL"]
    v = build_vocabulary(corpus)
    assert v == build_vocabulary(sorted(set(corpus)))
    for s in corpus:
        assert " ".join(v.decode(v.encode(s))) == s
    assert v.encode("NOPE") == [UNK]


def test_vocabulary_text_round_trip():
    v = build_vocabulary(["B A C"])
    assert type(v).from_text(v.to_text()) == v


def test_manifest_round_trip(tmp_path):
    rows = [ManifestRow("s1", "sig0", "poses/s1.pose", ("HE", "GO")), ManifestRow("s2", "sig1", "poses/s2.pose", ("YES",))]
    write_manifest(rows, tmp_path / "m.tsv")
    assert read_manifest(tmp_path / "m.tsv") == rows
    assert (tmp_path / "m.tsv").read_text().splitlines()[0] == "s1\tsig0\tposes/s1.pose\tHE GO"


def test_manifest_bad_columns(tmp_path):
    (tmp_path / "m.tsv").write_text("a\tb\n")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "m.tsv")


def test_partial_layout_construction():
    layout = KeypointLayout.from_parts(["right_hand", "body"])
    assert layout.names == ("body", "right_hand") and layout.num_joints == 46
