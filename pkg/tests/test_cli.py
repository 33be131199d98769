"""CLI behavior on tiny configurations; heavier trained-model properties live
in the acceptance suite."""

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dany.cli import main
from dany.container import read_container, write_container
from dany.manifest import file_sha256, load_manifest


def run(*argv):
    return main(list(argv))


TINY = ["--profile", "small", "--set", "data.num_pairs=2", "--set", "data.frames=32",
        "--set", "vqvae.codebook_size=16", "--set", "vqvae.latent_channels=16",
        "--set", "vqvae.width=16", "--set", "diffusion.model_width=16",
        "--set", "diffusion.attention_heads=2", "--set", "diffusion.timesteps=50"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Corpus + 2-epoch checkpoints for all three stages."""
    root = tmp_path_factory.mktemp("cliws")
    assert run("synth-data", "--out", str(root / "data"), "--seed", "7", *TINY) == 0
    corpus = str(root / "data" / "corpus.dany")
    assert run("train", "--stage", "vqvae", "--corpus", corpus,
               "--out", str(root / "vq"), "--epochs", "2", "--seed", "1", *TINY) == 0
    vq = str(root / "vq" / "vqvae.dany")
    assert run("train", "--stage", "dpgd", "--corpus", corpus, "--vqvae", vq,
               "--out", str(root / "dpgd"), "--epochs", "2", "--seed", "2", *TINY) == 0
    dpgd = str(root / "dpgd" / "dpgd.dany")
    assert run("train", "--stage", "dmtd", "--corpus", corpus, "--vqvae", vq,
               "--dpgd", dpgd, "--out", str(root / "dmtd"), "--epochs", "2",
               "--seed", "3", *TINY) == 0
    dmtd = str(root / "dmtd" / "dmtd.dany")
    return {"root": root, "corpus": corpus, "vq": vq, "dpgd": dpgd, "dmtd": dmtd}


class TestSynthData:
    def test_identical_seeds_identical_hashes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("synth-data", "--out", str(out), "--pairs", "2", "--seed", "7", *TINY) == 0
        assert file_sha256(a / "corpus.dany") == file_sha256(b / "corpus.dany")

    def test_existing_output_needs_force(self, tmp_path):
        out = tmp_path / "c"
        assert run("synth-data", "--out", str(out), "--pairs", "1", "--seed", "0", *TINY) == 0
        assert run("synth-data", "--out", str(out), "--pairs", "1", "--seed", "0", *TINY) == 3
        assert run("synth-data", "--out", str(out), "--pairs", "1", "--seed", "0",
                   "--force", *TINY) == 0

    def test_invalid_frame_count_exits_3_naming_constraint(self, tmp_path, capsys):
        code = run("synth-data", "--out", str(tmp_path / "d"), "--pairs", "1",
                   "--frames", "63", *TINY)
        assert code == 3
        assert "multiple" in capsys.readouterr().err

    def test_manifest_written(self, tmp_path):
        out = tmp_path / "e"
        assert run("synth-data", "--out", str(out), "--pairs", "1", "--seed", "4", *TINY) == 0
        manifest = load_manifest(out / "corpus.manifest.json")
        assert manifest["command"] == "synth-data"
        assert manifest["outputs"]["corpus.dany"] == file_sha256(out / "corpus.dany")


class TestTrain:
    def test_zero_epochs_checkpoint_equals_initialization(self, workspace, tmp_path):
        a, b = tmp_path / "t0a", tmp_path / "t0b"
        for out in (a, b):
            assert run("train", "--stage", "vqvae", "--corpus", workspace["corpus"],
                       "--out", str(out), "--epochs", "0", "--seed", "5", *TINY) == 0
        assert file_sha256(a / "vqvae.dany") == file_sha256(b / "vqvae.dany")
        data = read_container(a / "vqvae.dany")
        assert int(data["meta/epoch"]) == 0

    def test_loss_reports_written(self, workspace):
        vq_dir = workspace["root"] / "vq"
        assert (vq_dir / "loss_curve.csv").exists()
        assert (vq_dir / "loss_curve.png").exists()
        with open(vq_dir / "loss_curve.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "loss"]
        assert len(rows) == 3  # header + 2 epochs

    def test_missing_prerequisite_lists_expected_path(self, workspace, tmp_path, capsys):
        missing = str(tmp_path / "nope.dany")
        code = run("train", "--stage", "dpgd", "--corpus", workspace["corpus"],
                   "--vqvae", missing, "--out", str(tmp_path / "x"), "--epochs", "1", *TINY)
        assert code == 3
        assert "nope.dany" in capsys.readouterr().err

    def test_dpgd_without_vqvae_flag_errors(self, workspace, tmp_path):
        assert run("train", "--stage", "dpgd", "--corpus", workspace["corpus"],
                   "--out", str(tmp_path / "y"), "--epochs", "1", *TINY) == 3

    def test_resume_matches_uninterrupted_run(self, workspace, tmp_path):
        base = ["train", "--stage", "dpgd", "--corpus", workspace["corpus"],
                "--vqvae", workspace["vq"], "--seed", "11", *TINY]
        full = tmp_path / "full"
        assert run(*base, "--out", str(full), "--epochs", "4") == 0
        part = tmp_path / "part"
        assert run(*base, "--out", str(part), "--epochs", "2") == 0
        resumed = tmp_path / "resumed"
        assert run(*base, "--out", str(resumed), "--epochs", "2",
                   "--resume", str(part / "dpgd.dany")) == 0
        full_params = read_container(full / "dpgd.dany")
        res_params = read_container(resumed / "dpgd.dany")
        for key in full_params:
            np.testing.assert_array_equal(full_params[key], res_params[key], err_msg=key)


class TestGenerate:
    def test_output_length_and_manifest(self, workspace, tmp_path):
        out = tmp_path / "gen"
        assert run("generate", "--corpus", workspace["corpus"], "--pair", "0",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--lam", "0.5", "--steps", "4",
                   "--pregen-steps", "2", "--seed", "9", "--out", str(out)) == 0
        data = read_container(out / "partner.dany")
        assert data["motion"].shape == (32, 24, 3)
        manifest = load_manifest(out / "partner.manifest.json")
        assert manifest["config"]["lam"] == 0.5
        assert set(manifest["inputs"]) >= {"vqvae", "dpgd", "dmtd"}

    def test_lambda_out_of_range_is_usage_error(self, workspace, tmp_path):
        assert run("generate", "--corpus", workspace["corpus"], "--pair", "0",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--lam", "1.5",
                   "--out", str(tmp_path / "z")) == 2

    def test_same_seed_bit_identical(self, workspace, tmp_path):
        outs = []
        for name in ("g1", "g2"):
            out = tmp_path / name
            assert run("generate", "--corpus", workspace["corpus"], "--pair", "0",
                       "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                       "--dmtd", workspace["dmtd"], "--lam", "0.25", "--steps", "3",
                       "--pregen-steps", "2", "--seed", "13", "--out", str(out)) == 0
            outs.append(file_sha256(out / "partner.dany"))
        assert outs[0] == outs[1]


class TestEvaluate:
    def test_metrics_match_direct_library_calls(self, workspace, tmp_path):
        gen_dir = tmp_path / "gen"
        assert run("generate", "--corpus", workspace["corpus"], "--pair", "0",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--lam", "0.5", "--steps", "3",
                   "--pregen-steps", "2", "--seed", "21", "--out", str(gen_dir)) == 0
        eval_dir = tmp_path / "eval"
        assert run("evaluate", "--corpus", workspace["corpus"], "--pair", "0",
                   "--generated", str(gen_dir / "partner.dany"), "--lam", "0.5",
                   "--out", str(eval_dir)) == 0
        with open(eval_dir / "metrics.csv") as fh:
            rows = {r[0]: float(r[1]) for r in list(csv.reader(fh))[1:]}

        from dany.cli import _read_corpus
        from dany.metrics import beat_align, mfid, mpjpe
        from dany.motion import MotionSequence
        from dany.pregen import half_pattern

        pair = _read_corpus(workspace["corpus"])[0]
        gen = MotionSequence(read_container(gen_dir / "partner.dany")["motion"])
        pattern = half_pattern(0.5, 4)
        assert rows["mfid"] == pytest.approx(mfid(gen, pair.lead, pair.partner, pattern), rel=1e-6)
        assert rows["mpjpe_lead"] == pytest.approx(mpjpe(gen, pair.lead), rel=1e-6)
        assert rows["beat_align"] == pytest.approx(
            beat_align(gen, pair.music.beat_frames), rel=1e-6)
        assert (eval_dir / "metrics.png").exists()

    def test_spliced_ground_truth_scores_zero_mfid(self, workspace, tmp_path):
        from dany.cli import _read_corpus
        from dany.pregen import half_pattern

        pair = _read_corpus(workspace["corpus"])[0]
        pattern = half_pattern(0.5, 4)
        frame_mask = np.repeat(pattern, 8).astype(bool)
        spliced = np.where(frame_mask[:, None, None], pair.lead.frames, pair.partner.frames)
        spliced_path = tmp_path / "spliced.dany"
        write_container(spliced_path, {"motion": spliced.astype(np.float32)})
        # float32 storage rounds the splice; rebuild references the same way
        lead32 = pair.lead.frames.astype(np.float32).astype(np.float64)
        partner32 = pair.partner.frames.astype(np.float32).astype(np.float64)
        lead_path, partner_path, music_path = (tmp_path / n for n in
                                               ("lead.dany", "partner_ref.dany", "music.dany"))
        write_container(lead_path, {"motion": lead32})
        write_container(partner_path, {"motion": partner32})
        write_container(music_path, {"music": pair.music.matrix})
        out = tmp_path / "ev"
        assert run("evaluate", "--lead", str(lead_path), "--partner", str(partner_path),
                   "--music", str(music_path), "--generated", str(spliced_path),
                   "--lam", "0.5", "--out", str(out)) == 0
        with open(out / "metrics.csv") as fh:
            rows = {r[0]: float(r[1]) for r in list(csv.reader(fh))[1:]}
        assert rows["mfid"] < 1e-6

    def test_gendiv_needs_batch(self, workspace, tmp_path):
        gen_dirs = []
        for seed in ("31", "32"):
            out = tmp_path / f"g{seed}"
            assert run("generate", "--corpus", workspace["corpus"], "--pair", "0",
                       "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                       "--dmtd", workspace["dmtd"], "--lam", "0.5", "--steps", "3",
                       "--pregen-steps", "2", "--seed", seed, "--out", str(out)) == 0
            gen_dirs.append(str(out / "partner.dany"))
        out = tmp_path / "evb"
        assert run("evaluate", "--corpus", workspace["corpus"], "--pair", "0",
                   "--generated", *gen_dirs, "--lam", "0.5", "--out", str(out)) == 0
        with open(out / "metrics.csv") as fh:
            rows = {r[0]: float(r[1]) for r in list(csv.reader(fh))[1:]}
        assert "gendiv" in rows and rows["gendiv"] > 0


class TestSweep:
    def test_single_value_sweep_matches_generate_plus_evaluate(self, workspace, tmp_path):
        sweep_dir = tmp_path / "sw"
        code = run("sweep", "--axis", "lam", "--values", "0.5",
                   "--corpus", workspace["corpus"], "--pair", "0",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--steps", "3", "--pregen-steps", "2",
                   "--seed", "17", "--out", str(sweep_dir))
        assert code in (0, 4)  # untrained nets may fail the trend verdict
        gen_dir = tmp_path / "swg"
        assert run("generate", "--corpus", workspace["corpus"], "--pair", "0",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--lam", "0.5", "--steps", "3",
                   "--pregen-steps", "2", "--seed", "17", "--out", str(gen_dir)) == 0
        assert (file_sha256(sweep_dir / "gen_lam_0.5" / "partner.dany")
                == file_sha256(gen_dir / "partner.dany"))

    def test_alpha_zero_vs_nine_outputs_differ(self, workspace, tmp_path):
        sweep_dir = tmp_path / "swa"
        code = run("sweep", "--axis", "alpha", "--values", "0,9",
                   "--corpus", workspace["corpus"], "--pair", "0",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--steps", "3", "--pregen-steps", "2",
                   "--seed", "19", "--out", str(sweep_dir))
        assert code == 0
        a = read_container(sweep_dir / "gen_alpha_0" / "partner.dany")["latent"]
        b = read_container(sweep_dir / "gen_alpha_9" / "partner.dany")["latent"]
        assert np.abs(a - b).mean() > 0
        manifest = load_manifest(sweep_dir / "sweep.manifest.json")
        assert manifest["config"]["mean_latent_spread"] > 0


class TestInspect:
    def test_lists_entries(self, workspace, capsys):
        assert run("inspect", workspace["corpus"]) == 0
        out = capsys.readouterr().out
        assert "pairs/0000/lead" in out
        assert "sha256" in out


class TestDeterministicReplay:
    def test_manifest_replay_bit_identical_subprocess(self, workspace, tmp_path):
        env = dict(os.environ, DANY_DETERMINISTIC="1")
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        argv = ["generate", "--corpus", workspace["corpus"], "--pair", "0",
                "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                "--dmtd", workspace["dmtd"], "--lam", "0.75", "--steps", "3",
                "--pregen-steps", "2", "--seed", "23", "--out", str(out1)]
        assert subprocess.run([sys.executable, "-m", "dany", *argv], env=env,
                              capture_output=True).returncode == 0
        manifest = load_manifest(out1 / "partner.manifest.json")
        replay_argv = list(manifest["argv"])
        replay_argv[replay_argv.index("--out") + 1] = str(out2)
        assert subprocess.run([sys.executable, "-m", "dany", *replay_argv], env=env,
                              capture_output=True).returncode == 0
        for name, digest in manifest["outputs"].items():
            assert file_sha256(out2 / name) == digest, name

    def test_replay_helper(self, workspace, tmp_path):
        from dany.cli import replay

        out = tmp_path / "orig"
        assert run("generate", "--corpus", workspace["corpus"], "--pair", "1",
                   "--vqvae", workspace["vq"], "--dpgd", workspace["dpgd"],
                   "--dmtd", workspace["dmtd"], "--lam", "0.25", "--steps", "3",
                   "--pregen-steps", "2", "--seed", "29", "--out", str(out)) == 0
        verdicts = replay(out / "partner.manifest.json", tmp_path / "replayed")
        assert all(verdicts.values())


def test_unknown_command_is_usage_error():
    assert run("frobnicate") == 2


@pytest.mark.slow
def test_default_corpus_size_and_speed(tmp_path):
    import time

    start = time.time()
    assert run("synth-data", "--out", str(tmp_path / "full"), "--seed", "0") == 0
    elapsed = time.time() - start
    from dany.cli import _read_corpus

    pairs = _read_corpus(tmp_path / "full" / "corpus.dany")
    assert len(pairs) == 340
    assert pairs[0].lead.num_frames == 256
    assert elapsed < 60


def test_config_profile_and_set_land_in_manifest(tmp_path):
    out = tmp_path / "cfg"
    assert run("synth-data", "--out", str(out), "--pairs", "1", "--seed", "0", *TINY) == 0
    manifest = load_manifest(out / "corpus.manifest.json")
    assert manifest["config"]["vqvae"]["codebook_size"] == 16
    assert manifest["config"]["data"]["frames"] == 32
