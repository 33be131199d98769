import numpy as np
import pytest

from dany import motion
from dany.motion import MotionSequence, from_relative, merge_halves, pck, split_upper_lower, to_relative
from dany.preprocess import clean_sequence, fill_missing, flag_outliers, moving_average


def _seq(frames, fps=60):
    return MotionSequence(np.asarray(frames, dtype=np.float64), fps)


def _random_seq(n=10, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    return _seq(rng.normal(0.0, scale, size=(n, 24, 3)))


class TestRelative:
    def test_all_joints_at_pelvis_gives_zero_pose(self):
        frames = np.tile(np.array([1.0, -2.0, 0.5]), (4, 24, 1))
        rel, traj = to_relative(_seq(frames))
        np.testing.assert_array_equal(rel.frames, np.zeros((4, 24, 3)))
        np.testing.assert_array_equal(traj, np.tile([1.0, -2.0, 0.5], (4, 1)))

    def test_hand_case_head_offset(self):
        frames = np.zeros((1, 24, 3))
        frames[0, motion.PELVIS] = [1.0, 2.0, 3.0]
        head = motion.JOINT_NAMES.index("head")
        frames[0, head] = [1.0, 2.0, 4.0]
        rel, _ = to_relative(_seq(frames))
        np.testing.assert_allclose(rel.frames[0, head], [0.0, 0.0, 1.0])
        np.testing.assert_allclose(rel.frames[0, motion.PELVIS], [0.0, 0.0, 0.0])

    def test_roundtrip_within_tolerance(self):
        seq = _random_seq(12, seed=3, scale=0.4)
        rel, traj = to_relative(seq)
        back = from_relative(rel, traj)
        assert np.abs(back.frames - seq.frames).max() < 1e-6


class TestSplit:
    def test_partition_sizes(self):
        upper, lower = split_upper_lower(_random_seq().frames)
        assert upper.shape[1] == 15
        assert lower.shape[1] == 9

    def test_merge_is_exact_inverse(self):
        seq = _random_seq(seed=7)
        upper, lower = split_upper_lower(seq.frames)
        np.testing.assert_array_equal(merge_halves(upper, lower), seq.frames)

    def test_pelvis_only_in_lower(self):
        assert motion.PELVIS in motion.LOWER_JOINTS
        assert motion.PELVIS not in motion.UPPER_JOINTS
        assert set(motion.LOWER_JOINTS) | set(motion.UPPER_JOINTS) == set(range(24))
        assert set(motion.LOWER_JOINTS) & set(motion.UPPER_JOINTS) == set()

    def test_wrong_joint_count_errors(self):
        with pytest.raises(ValueError):
            split_upper_lower(np.zeros((5, 17, 3)))


class TestClean:
    def test_noop_thresholds_leave_signal_unchanged(self):
        seq = _random_seq(32, seed=1)
        out = clean_sequence(seq, zmax=1e9, smooth_radius=0)
        np.testing.assert_allclose(out.frames, seq.frames, atol=1e-12)

    def test_spike_on_constant_signal_removed(self):
        n = 21
        frames = np.full((n, 24, 3), 0.25)
        frames[n // 2, 5, 1] += 100.0
        out = clean_sequence(_seq(frames), smooth_radius=0)
        np.testing.assert_allclose(out.frames, np.full((n, 24, 3), 0.25), atol=1e-9)

    def test_degree1_fill_on_ramp(self):
        ramp = np.arange(11.0)
        missing = np.zeros(11, dtype=bool)
        missing[5] = True
        filled = fill_missing(ramp, missing)
        assert filled[5] == pytest.approx(5.0)

    def test_fill_holds_endpoints(self):
        values = np.array([9.0, 1.0, 2.0, 3.0, 9.0])
        missing = np.array([True, False, False, False, True])
        filled = fill_missing(values, missing)
        np.testing.assert_allclose(filled, [1.0, 1.0, 2.0, 3.0, 3.0])

    def test_all_missing_channel_errors(self):
        with pytest.raises(ValueError):
            fill_missing(np.zeros(5), np.ones(5, dtype=bool))

    def test_idempotent_with_zero_smoothing(self):
        rng = np.random.default_rng(9)
        t = np.linspace(0, 4 * np.pi, 64)
        frames = np.stack([np.sin(t + j) * 0.2 for j in range(72)], axis=1).reshape(64, 24, 3)
        frames[20] += rng.normal(0, 5.0, size=(24, 3))
        once = clean_sequence(_seq(frames), smooth_radius=0)
        twice = clean_sequence(once, smooth_radius=0)
        np.testing.assert_allclose(twice.frames, once.frames, atol=1e-12)

    def test_moving_average_constant_invariant(self):
        x = np.full(10, 3.5)
        np.testing.assert_allclose(moving_average(x, 2), x)

    def test_flag_outliers_finds_injected_spike(self):
        x = np.sin(np.linspace(0, 2 * np.pi, 40)) * 0.1
        x[17] = 50.0
        mask = flag_outliers(x)
        assert mask[17]
        assert mask.sum() == 1


class TestPck:
    def test_perfect_prediction(self):
        ref = np.random.default_rng(0).normal(size=(5, 24, 2))
        assert pck(ref, ref) == pytest.approx(100.0)

    def test_half_displaced(self):
        ref = np.zeros((1, 2, 2))
        ref[0, 1] = [0.0, 10.0]  # body length 10 => normalized unit is 1 px
        pred = ref.copy()
        pred[0, 0] = [5.0, 0.0]  # normalized distance 5 > 2.4; other joint exact
        assert pck(pred, ref, threshold=2.4) == pytest.approx(50.0)

    def test_zero_body_length_errors(self):
        ref = np.zeros((1, 3, 2))
        with pytest.raises(ValueError):
            pck(ref, ref)


def test_motion_sequence_rejects_bad_shapes():
    with pytest.raises(ValueError):
        MotionSequence(np.zeros((0, 24, 3)))
    with pytest.raises(ValueError):
        MotionSequence(np.zeros((5, 23, 3)))
    bad = np.zeros((2, 24, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        MotionSequence(bad)


def test_frames_are_read_only():
    seq = _random_seq()
    with pytest.raises(ValueError):
        seq.frames[0, 0, 0] = 1.0
