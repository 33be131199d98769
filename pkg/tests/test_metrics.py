import numpy as np
import pytest

from dany.metrics import (
    beat_align,
    dance_beats,
    fid,
    gendiv,
    gendiv_features,
    mfid,
    motion_features,
    mpjpe,
)
from dany.motion import MotionSequence
from dany.pregen import half_pattern


def _gauss_fid_oracle(a, b):
    """Independent 1-D closed form from sample moments:
    (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2."""
    return (a.mean() - b.mean()) ** 2 + (a.std(ddof=1) - b.std(ddof=1)) ** 2


class TestFid:
    def test_identical_sets_near_zero(self):
        feats = np.random.default_rng(0).normal(size=(64, 5))
        assert fid(feats, feats.copy()) <= 1e-6

    def test_1d_gaussian_mean_shift(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 1.0, size=(4000, 1))
        b = rng.normal(1.0, 1.0, size=(4000, 1))
        assert fid(a, b) == pytest.approx(_gauss_fid_oracle(a, b), abs=1e-4)
        assert fid(a, b) == pytest.approx(1.0, abs=0.1)

    def test_1d_gaussian_scale_shift(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.0, 1.0, size=(4000, 1))
        b = rng.normal(0.0, 2.0, size=(4000, 1))
        assert fid(a, b) == pytest.approx(_gauss_fid_oracle(a, b), abs=1e-4)
        assert fid(a, b) == pytest.approx(1.0, abs=0.1)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(50, 4))
        b = rng.normal(1.0, 2.0, size=(60, 4))
        assert abs(fid(a, b) - fid(b, a)) < 1e-8

    def test_degenerate_sets_error(self):
        with pytest.raises(ValueError):
            fid(np.zeros((1, 3)), np.zeros((5, 3)))


def _wavy_sequence(seed, n=64, amp=0.3):
    rng = np.random.default_rng(seed)
    t = np.arange(n)[:, None, None]
    phases = rng.uniform(0, 2 * np.pi, size=(1, 24, 3))
    freqs = rng.uniform(0.05, 0.2, size=(1, 24, 3))
    return MotionSequence(amp * np.sin(freqs * t + phases))


class TestMfid:
    def test_spliced_ground_truth_scores_zero(self):
        lead = _wavy_sequence(0)
        partner = _wavy_sequence(1)
        pattern = half_pattern(0.5, 8)
        frame_mask = np.repeat(pattern, 8).astype(bool)
        spliced = np.where(frame_mask[:, None, None], lead.frames, partner.frames)
        score = mfid(MotionSequence(spliced), lead, partner, pattern)
        assert score < 1e-6

    def test_lambda_one_equals_fid_against_lead(self):
        lead = _wavy_sequence(2)
        partner = _wavy_sequence(3)
        gen = _wavy_sequence(4)
        pattern = half_pattern(1.0, 8)
        expected = fid(motion_features(gen.frames), motion_features(lead.frames))
        assert mfid(gen, lead, partner, pattern) == pytest.approx(expected, rel=1e-12)

    def test_composition_of_two_sides(self):
        lead = _wavy_sequence(5)
        partner = _wavy_sequence(6)
        gen = _wavy_sequence(7)
        pattern = half_pattern(0.5, 8)
        frame_mask = np.repeat(pattern, 8).astype(bool)
        term_l = fid(motion_features(gen.frames[frame_mask]),
                     motion_features(lead.frames[frame_mask]))
        term_p = fid(motion_features(gen.frames[~frame_mask]),
                     motion_features(partner.frames[~frame_mask]))
        assert mfid(gen, lead, partner, pattern) == pytest.approx(0.5 * (term_l + term_p))

    def test_length_mismatch_errors(self):
        with pytest.raises(ValueError):
            mfid(_wavy_sequence(0, n=64), _wavy_sequence(1, n=64),
                 _wavy_sequence(2, n=56), half_pattern(0.5, 8))


class TestGendiv:
    def test_identical_sequences_zero(self):
        seq = _wavy_sequence(8)
        assert gendiv([seq, seq, seq]) == pytest.approx(0.0, abs=1e-12)

    def test_two_1d_features(self):
        assert gendiv_features(np.array([[0.0], [3.0]])) == pytest.approx(3.0)

    def test_permutation_invariant(self):
        seqs = [_wavy_sequence(i) for i in range(4)]
        a = gendiv(seqs)
        b = gendiv([seqs[2], seqs[0], seqs[3], seqs[1]])
        assert a == pytest.approx(b, rel=1e-12)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            gendiv([_wavy_sequence(0)])


def _sequence_with_speed_minima(n, period, anchor=0):
    """Joint speed proportional to |sin(2 pi (t - anchor) / period)|: strict
    speed minima exactly at anchor + k * period / 2."""
    t = np.arange(n, dtype=np.float64)
    pos = np.cos(2.0 * np.pi * (t - anchor) / period)
    frames = np.tile(pos[:, None, None], (1, 24, 3))
    frames[:, 0, :] = 0.0  # pin the pelvis; features are pelvis-relative anyway
    return MotionSequence(frames)


class TestBeatAlign:
    def test_perfect_alignment(self):
        seq = _sequence_with_speed_minima(96, period=24)
        beats = np.array([0, 24, 48, 72])
        assert beat_align(seq, beats) == pytest.approx(1.0, abs=1e-9)

    def test_offset_three_sigma_three(self):
        # period 4n keeps the speed monotone at both ends: one minimum at 20
        n = 64
        seq = _sequence_with_speed_minima(n, period=4 * n, anchor=20)
        moves = dance_beats(seq)
        np.testing.assert_array_equal(moves, [20])
        assert beat_align(seq, np.array([17])) == pytest.approx(np.exp(-0.5), abs=1e-6)

    def test_far_beats_score_tiny(self):
        n = 64
        seq = _sequence_with_speed_minima(n, period=4 * n, anchor=60)
        assert beat_align(seq, np.array([10])) < 1e-5

    def test_invariant_to_far_extra_dance_beats(self):
        # another minimum > 5 sigma away must not change the score
        near = _sequence_with_speed_minima(64, period=2 * 64, anchor=20)
        both = _sequence_with_speed_minima(64, period=40, anchor=20)  # minima at 20, 40, 0
        b_near = beat_align(near, np.array([20]))
        b_both = beat_align(both, np.array([20]))
        assert b_near == pytest.approx(1.0, abs=1e-9)
        assert b_both == pytest.approx(b_near, abs=1e-9)

    def test_no_music_beats_errors(self):
        with pytest.raises(ValueError):
            beat_align(_wavy_sequence(0), np.array([]))


class TestMpjpe:
    def test_identical(self):
        seq = _wavy_sequence(9)
        assert mpjpe(seq, seq) == 0.0

    def test_single_joint_single_frame(self):
        a = np.zeros((1, 24, 3))
        b = a.copy()
        b[0, 5, 0] = 1.0
        assert mpjpe(a, b) == pytest.approx(1.0 / 24.0)

    def test_uniform_translation(self):
        a = np.random.default_rng(10).normal(size=(6, 24, 3))
        v = np.array([0.3, -0.4, 1.2])
        assert mpjpe(a, a + v) == pytest.approx(np.linalg.norm(v))

    def test_shape_mismatch_errors(self):
        with pytest.raises(ValueError):
            mpjpe(np.zeros((2, 24, 3)), np.zeros((3, 24, 3)))


def test_motion_feature_dimensions():
    feats = motion_features(np.random.default_rng(11).normal(size=(10, 24, 3)))
    assert feats.shape == (10, 216)
    assert np.isfinite(feats).all()
