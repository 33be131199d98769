"""Command-line surface: synth-data, train, generate, evaluate, sweep, inspect.

Every command writes its outputs plus a run manifest into --out; reports are
CSV tables with a rendered PNG figure next to them. Setting DANY_DETERMINISTIC=1
pins BLAS to a single thread (before numpy loads) so replaying a manifest
reproduces outputs bit-for-bit.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import os

if os.environ.get("DANY_DETERMINISTIC") == "1":
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, "1")

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .container import ContainerError, container_metadata, read_container, write_container
from .diffusion import DenoiserNet, NoiseSchedule
from .errors import DataError, TrainingDiverged
from .manifest import file_sha256, load_manifest, write_manifest
from .metrics import beat_align, gendiv, mfid, mpjpe
from .motion import MUSIC_DIM, LeadPartnerPair, MotionSequence, MusicFeatures, to_relative
from .numerics import NumericError, RandomStream
from .numerics.optim import SGD, Adam
from .pregen import half_pattern, make_mask, pregenerate, project_codebook, select_features, train_dpgd
from .report import render_loss_curve, render_metric_bars, render_sweep, write_table
from .synth import synth_corpus
from .transfer import (
    DropoutSchedule,
    GuidanceParams,
    generate_partner,
    pool_music,
    train_dmtd,
)
from .vqvae import DOWNSAMPLE, PoseVQVAE, encode_quantize, train_vqvae

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _lam_type(raw: str) -> float:
    value = float(raw)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"similarity must lie in [0, 1], got {value}")
    return value


def _prepare_out(out: str, force: bool, expected: list[str]) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in expected:
        target = out_dir / name
        if target.exists() and not force:
            raise DataError(f"output {target} already exists; pass --force to overwrite")
    return out_dir


def _hash_outputs(out_dir: Path, names: list[str]) -> dict[str, str]:
    return {name: file_sha256(out_dir / name) for name in names}


def _write_corpus(path: Path, pairs: list[LeadPartnerPair], cfg: dict) -> None:
    entries: dict[str, np.ndarray] = {
        "meta/fps": np.float32(cfg["data"]["fps"]),
        "meta/beat_period": np.float32(cfg["data"]["beat_period"]),
        "meta/num_pairs": np.float32(len(pairs)),
    }
    for i, pair in enumerate(pairs):
        entries[f"pairs/{i:04d}/lead"] = pair.lead.frames
        entries[f"pairs/{i:04d}/partner"] = pair.partner.frames
        entries[f"pairs/{i:04d}/music"] = pair.music.matrix
    write_container(path, entries)


def _read_corpus(path) -> list[LeadPartnerPair]:
    data = read_container(path)
    if "meta/num_pairs" not in data:
        raise DataError(f"{path}: not a corpus container (missing meta/num_pairs)")
    fps = int(data["meta/fps"])
    count = int(data["meta/num_pairs"])
    pairs = []
    for i in range(count):
        pairs.append(LeadPartnerPair(
            lead=MotionSequence(data[f"pairs/{i:04d}/lead"], fps),
            partner=MotionSequence(data[f"pairs/{i:04d}/partner"], fps),
            music=MusicFeatures(_clean_beat_channel(data[f"pairs/{i:04d}/music"])),
            identifier=f"pair{i:04d}",
        ))
    return pairs


def _clean_beat_channel(matrix: np.ndarray) -> np.ndarray:
    # float32 storage round-trips 0/1 exactly, but guard against stray dust
    out = np.asarray(matrix, dtype=np.float64)
    out[-1] = (out[-1] > 0.5).astype(np.float64)
    return out


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing {what}: expected file at {p}")
    return p


def _scalar(value) -> np.ndarray:
    return np.float32(value)


def save_vqvae_checkpoint(path, net: PoseVQVAE, opt: Adam | None, epoch: int, width: int) -> None:
    entries = net.checkpoint_state()
    entries["meta/epoch"] = _scalar(epoch)
    entries["meta/codebook_size"] = _scalar(net.codebook_size)
    entries["meta/latent_channels"] = _scalar(net.latent_channels)
    entries["meta/width"] = _scalar(width)
    if opt is not None:
        for k, v in opt.state().items():
            entries[f"optim/{k}"] = v
    write_container(path, entries)


def load_vqvae_checkpoint(path) -> tuple[PoseVQVAE, dict, int, int]:
    data = read_container(_require_file(path, "stage-1 checkpoint"))
    width = int(data["meta/width"])
    net = PoseVQVAE(codebook_size=int(data["meta/codebook_size"]),
                    latent_channels=int(data["meta/latent_channels"]),
                    width=width, stream=RandomStream(0))
    net.load_checkpoint_state(data)
    optim_state = {k[len("optim/"):]: v for k, v in data.items() if k.startswith("optim/")}
    return net, optim_state, int(data["meta/epoch"]), width


def save_denoiser_checkpoint(path, namespace: str, net: DenoiserNet, schedule: NoiseSchedule,
                             opt: SGD | None, epoch: int,
                             latent_scale: float = 1.0) -> None:
    entries = {f"{namespace}/{k}": v.data.copy() for k, v in net.named_parameters().items()}
    entries["schedule/beta"] = schedule.betas
    entries["meta/epoch"] = _scalar(epoch)
    entries["meta/channels"] = _scalar(net.channels)
    entries["meta/model_width"] = _scalar(net.width)
    entries["meta/heads"] = _scalar(net.heads)
    entries["meta/conditioned"] = _scalar(1.0 if net.cond_slots else 0.0)
    entries["meta/latent_scale"] = _scalar(latent_scale)
    if opt is not None:
        for k, v in opt.state().items():
            entries[f"optim/{k}"] = v
    write_container(path, entries)


def load_denoiser_checkpoint(path, namespace: str) -> tuple[DenoiserNet, NoiseSchedule, dict, int, float]:
    data = read_container(_require_file(path, f"{namespace} checkpoint"))
    channels = int(data["meta/channels"])
    heads = int(data["meta/heads"])
    cond_slots = {"lead": channels, "music": MUSIC_DIM} if data["meta/conditioned"] > 0.5 else None
    net = DenoiserNet(channels=channels, width=int(data["meta/model_width"]), heads=heads,
                      cond_slots=cond_slots, stream=RandomStream(0))
    state = {k[len(namespace) + 1:]: v for k, v in data.items() if k.startswith(f"{namespace}/")}
    net.load_state(state)
    schedule = NoiseSchedule(data["schedule/beta"].astype(np.float64))
    optim_state = {k[len("optim/"):]: v for k, v in data.items() if k.startswith("optim/")}
    latent_scale = float(data.get("meta/latent_scale", np.float32(1.0)))
    return net, schedule, optim_state, int(data["meta/epoch"]), latent_scale


def _read_motion(path, entry: str = "motion") -> MotionSequence:
    data = read_container(_require_file(path, "motion file"))
    if entry not in data:
        raise DataError(f"{path}: no {entry!r} entry; found {sorted(data)[:8]}")
    return MotionSequence(data[entry])


def _read_music(path) -> MusicFeatures:
    data = read_container(_require_file(path, "music file"))
    if "music" not in data:
        raise DataError(f"{path}: no 'music' entry; found {sorted(data)[:8]}")
    return MusicFeatures(_clean_beat_channel(data["music"]))


def _pick_pair(args) -> tuple[MotionSequence, MotionSequence | None, MusicFeatures]:
    """Lead/partner/music either from a corpus+index or from standalone files."""
    if args.corpus:
        pairs = _read_corpus(args.corpus)
        if not 0 <= args.pair < len(pairs):
            raise DataError(f"pair index {args.pair} outside corpus of {len(pairs)} pairs")
        pair = pairs[args.pair]
        return pair.lead, pair.partner, pair.music
    if not args.lead or not args.music:
        raise DataError("provide either --corpus/--pair or --lead and --music files")
    partner = _read_motion(args.partner) if getattr(args, "partner", None) else None
    return _read_motion(args.lead), partner, _read_music(args.music)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args, argv: list[str]) -> int:
    cfg = load_config(args.config, args.profile, args.set)
    data = cfg["data"]
    if args.pairs is not None:
        data["num_pairs"] = args.pairs
    if args.frames is not None:
        data["frames"] = args.frames
    out_dir = _prepare_out(args.out, args.force, ["corpus.dany"])
    pairs = synth_corpus(seed=args.seed, num_pairs=data["num_pairs"], n_frames=data["frames"],
                         fps=data["fps"], beat_period=data["beat_period"],
                         amplitude=data["amplitude"], downsample=data["downsample"])
    _write_corpus(out_dir / "corpus.dany", pairs, cfg)
    outputs = _hash_outputs(out_dir, ["corpus.dany"])
    write_manifest(out_dir / "corpus.manifest.json", "synth-data", argv, cfg, args.seed, {}, outputs)
    print(f"wrote {len(pairs)} pairs to {out_dir / 'corpus.dany'}")
    return EXIT_OK


def _corpus_latents(pairs, vq_net, which: str):
    latents = []
    for pair in pairs:
        seq = pair.partner if which == "partner" else pair.lead
        rel, _ = to_relative(seq)
        latents.append(encode_quantize(vq_net, rel).latent)
    return latents


def _train_vqvae_cmd(args, cfg, pairs, out_dir):
    vq_cfg = cfg["vqvae"]
    epochs = args.epochs if args.epochs is not None else vq_cfg["epochs"]
    sequences = [p.lead for p in pairs] + [p.partner for p in pairs]
    start_epoch = 0
    opt = None
    if args.resume:
        net, optim_state, start_epoch, _ = load_vqvae_checkpoint(args.resume)
        opt = Adam(net.named_parameters(), lr=vq_cfg["lr"],
                   beta1=vq_cfg["adam_beta1"], beta2=vq_cfg["adam_beta2"])
        if optim_state:
            opt.load_state(optim_state)
    else:
        net = PoseVQVAE(codebook_size=vq_cfg["codebook_size"],
                        latent_channels=vq_cfg["latent_channels"],
                        width=vq_cfg["width"], stream=RandomStream(args.seed))
    opt, history = train_vqvae(sequences, epochs, net, seed=args.seed, lr=vq_cfg["lr"],
                               batch_size=vq_cfg["batch_size"], commitment=vq_cfg["commitment"],
                               adam_betas=(vq_cfg["adam_beta1"], vq_cfg["adam_beta2"]),
                               dead_code_epochs=vq_cfg["dead_code_epochs"],
                               start_epoch=start_epoch, optimizer=opt)
    save_vqvae_checkpoint(out_dir / "vqvae.dany", net, opt, start_epoch + epochs, vq_cfg["width"])
    return history


def _schedule_from_cfg(cfg) -> NoiseSchedule:
    # betas are canonicalized through float32 so a schedule rebuilt from a
    # checkpoint is bit-identical to one built from config (exact resume)
    d = cfg["diffusion"]
    betas = np.linspace(d["beta_start"], d["beta_end"], d["timesteps"])
    return NoiseSchedule(betas.astype(np.float32).astype(np.float64))


def _resume_schedule(cfg, stored: NoiseSchedule) -> NoiseSchedule:
    schedule = _schedule_from_cfg(cfg)
    if not np.array_equal(schedule.betas, stored.betas):
        raise DataError("resume config diffusion schedule differs from the checkpoint's")
    return schedule


def _latent_scale_of(latents: list[np.ndarray]) -> float:
    # rounded through float32 so the persisted value reproduces exactly
    return float(np.float32(max(np.std(np.stack(latents)), 1e-6)))


def _stage_optimizer(sp: dict, params) -> SGD | Adam:
    kind = sp.get("optimizer", "sgd")
    if kind == "adam":
        return Adam(params, lr=sp["lr"])
    if kind == "sgd":
        return SGD(params, lr=sp["lr"], momentum=sp["momentum"])
    raise DataError(f"unknown optimizer {kind!r}; expected 'sgd' or 'adam'")


def _load_optim_state(opt, optim_state: dict, what: str) -> None:
    if not optim_state:
        return
    try:
        opt.load_state(optim_state)
    except KeyError as exc:
        raise DataError(f"{what}: checkpoint optimizer state does not match the "
                        f"configured optimizer (missing {exc})") from exc


def _train_dpgd_cmd(args, cfg, pairs, out_dir):
    if not args.vqvae:
        raise DataError("training the in-fill stage needs --vqvae CHECKPOINT")
    vq_net, _, _, _ = load_vqvae_checkpoint(args.vqvae)
    sp = cfg["dpgd"]
    epochs = args.epochs if args.epochs is not None else sp["epochs"]
    latents = _corpus_latents(pairs, vq_net, "partner")
    scale = _latent_scale_of(latents)
    latents = [x / scale for x in latents]
    books = (vq_net.codebook_upper.numpy() / scale, vq_net.codebook_lower.numpy() / scale)
    start_epoch = 0
    opt = None
    if args.resume:
        net, stored, optim_state, start_epoch, stored_scale = load_denoiser_checkpoint(args.resume, "dpgd")
        schedule = _resume_schedule(cfg, stored)
        if abs(stored_scale - scale) > 1e-6 * scale:
            raise DataError(f"resume latent scale {stored_scale} != corpus latent scale {scale}")
        opt = _stage_optimizer(sp, net.named_parameters())
        _load_optim_state(opt, optim_state, "dpgd resume")
    else:
        schedule = _schedule_from_cfg(cfg)
        net = DenoiserNet(channels=vq_net.latent_channels, width=cfg["diffusion"]["model_width"],
                          heads=cfg["diffusion"]["attention_heads"], stream=RandomStream(args.seed))
    if opt is None:
        opt = _stage_optimizer(sp, net.named_parameters())
    opt, history = train_dpgd(latents, schedule, epochs, net, books,
                              lambda_set=tuple(sp["lambda_set"]), gamma=sp["codebook_weight"],
                              seed=args.seed, lr=sp["lr"], momentum=sp["momentum"],
                              lr_decay=sp["lr_decay"], lr_decay_every=sp["lr_decay_every"],
                              batch_size=sp["batch_size"], start_epoch=start_epoch, optimizer=opt)
    save_denoiser_checkpoint(out_dir / "dpgd.dany", "dpgd", net, schedule, opt,
                             start_epoch + epochs, latent_scale=scale)
    return history


def _pregen_starts(pairs, vq_net, pregen_net, schedule, lambda_set, sample_steps, seed, scale):
    """Stage-2 outputs for every (pair, lambda), used as stage-3 start latents.

    Everything is expressed in the diffusion's scaled latent space; the
    codebook projection happens in unscaled space, matching generation.
    """
    books = (vq_net.codebook_upper.numpy(), vq_net.codebook_lower.numpy())
    items = []
    cache_stream = RandomStream(seed).split("pregen_cache")
    for i, pair in enumerate(pairs):
        lead_rel, _ = to_relative(pair.lead)
        partner_rel, _ = to_relative(pair.partner)
        f_l = encode_quantize(vq_net, lead_rel).latent / scale
        f_p = encode_quantize(vq_net, partner_rel).latent / scale
        n_units = f_l.shape[1] // 2
        starts = {}
        for j, lam in enumerate(lambda_set):
            mask = make_mask(lam, n_units)
            f_s = select_features(f_l, mask)
            f_r = pregenerate(f_s, mask, pregen_net, schedule,
                              cache_stream.split(i).split(j), steps=sample_steps)
            starts[lam] = project_codebook(f_r * scale, books, mask) / scale
        items.append({"lead": f_l, "partner": f_p,
                      "music": pool_music(pair.music.matrix), "start": starts})
    return items


def _train_dmtd_cmd(args, cfg, pairs, out_dir):
    if not args.vqvae or not args.dpgd:
        raise DataError("training the transfer stage needs --vqvae and --dpgd checkpoints")
    vq_net, _, _, _ = load_vqvae_checkpoint(args.vqvae)
    pregen_net, schedule, _, _, scale = load_denoiser_checkpoint(args.dpgd, "dpgd")
    sp = cfg["dmtd"]
    epochs = args.epochs if args.epochs is not None else sp["epochs"]
    lambda_set = tuple(float(v) for v in cfg["dpgd"]["lambda_set"])
    items = _pregen_starts(pairs, vq_net, pregen_net, schedule, lambda_set,
                           cfg["dpgd"]["sample_steps"], args.seed, scale)
    dropout = DropoutSchedule(sp["dropout_uncond"], sp["dropout_single"], sp["dropout_both"])
    start_epoch = 0
    opt = None
    if args.resume:
        net, stored, optim_state, start_epoch, _ = load_denoiser_checkpoint(args.resume, "dmtd")
        schedule = _resume_schedule(cfg, stored)
        opt = _stage_optimizer(sp, net.named_parameters())
        _load_optim_state(opt, optim_state, "dmtd resume")
    else:
        net = DenoiserNet(channels=vq_net.latent_channels, width=cfg["diffusion"]["model_width"],
                          heads=cfg["diffusion"]["attention_heads"],
                          cond_slots={"lead": vq_net.latent_channels, "music": MUSIC_DIM},
                          stream=RandomStream(args.seed))
    if opt is None:
        opt = _stage_optimizer(sp, net.named_parameters())
    opt, history = train_dmtd(items, schedule, epochs, net, lambda_set=lambda_set,
                              tau=sp["tradeoff"], dropout=dropout, seed=args.seed,
                              lr=sp["lr"], momentum=sp["momentum"], lr_decay=sp["lr_decay"],
                              lr_decay_every=sp["lr_decay_every"], batch_size=sp["batch_size"],
                              start_epoch=start_epoch, optimizer=opt)
    save_denoiser_checkpoint(out_dir / "dmtd.dany", "dmtd", net, schedule, opt,
                             start_epoch + epochs, latent_scale=scale)
    return history


def cmd_train(args, argv: list[str]) -> int:
    cfg = load_config(args.config, args.profile, args.set)
    pairs = _read_corpus(_require_file(args.corpus, "corpus"))
    ckpt_name = f"{args.stage}.dany"
    out_dir = _prepare_out(args.out, args.force, [ckpt_name, "loss_curve.csv", "loss_curve.png"])
    trainers = {"vqvae": _train_vqvae_cmd, "dpgd": _train_dpgd_cmd, "dmtd": _train_dmtd_cmd}
    history = trainers[args.stage](args, cfg, pairs, out_dir)
    write_table(out_dir / "loss_curve.csv", ["epoch", "loss"],
                [[i + 1, f"{v:.8f}"] for i, v in enumerate(history)])
    render_loss_curve(out_dir / "loss_curve.png", history, f"{args.stage} training loss")
    inputs = {"corpus": file_sha256(args.corpus)}
    for name in ("vqvae", "dpgd"):
        path = getattr(args, name, None)
        if path:
            inputs[name] = file_sha256(path)
    outputs = _hash_outputs(out_dir, [ckpt_name, "loss_curve.csv", "loss_curve.png"])
    write_manifest(out_dir / f"{args.stage}.manifest.json", "train", argv, cfg, args.seed,
                   inputs, outputs)
    final = history[-1] if history else float("nan")
    print(f"trained {args.stage}: {len(history)} epochs, final loss {final:.6f}")
    return EXIT_OK


def _generate_impl(args, lead, music):
    vq_net, _, _, _ = load_vqvae_checkpoint(args.vqvae)
    pregen_net, schedule, _, _, scale = load_denoiser_checkpoint(args.dpgd, "dpgd")
    transfer_net, _, _, _, transfer_scale = load_denoiser_checkpoint(args.dmtd, "dmtd")
    if abs(scale - transfer_scale) > 1e-6 * scale:
        raise DataError(f"checkpoint latent scales disagree: dpgd {scale} vs dmtd {transfer_scale}")
    params = GuidanceParams(strength=args.alpha, joint_tradeoff=args.chi)
    return generate_partner(vq_net, pregen_net, transfer_net, schedule, lead, music,
                            lam=args.lam, params=params, steps=args.steps,
                            pregen_steps=args.pregen_steps, seed=args.seed,
                            snap_to_codebook=not args.no_snap, latent_scale=scale)


def _write_generation(out_dir: Path, result) -> list[str]:
    write_container(out_dir / "partner.dany", {
        "motion": result.motion.frames,
        "latent": result.latent,
        "pregen_latent": result.pregen_latent,
        "mask": result.mask,
        "codes": result.out_codes.astype(np.float32),
        "lead_codes": result.lead_codes.astype(np.float32),
    })
    return ["partner.dany"]


def _resolve_sampling_args(args) -> None:
    """Fill unset sampling flags from the layered config."""
    cfg = load_config(args.config, args.profile, args.set)
    if args.alpha is None:
        args.alpha = float(cfg["dmtd"]["guidance_strength"])
    if args.chi is None:
        args.chi = float(cfg["dmtd"]["joint_tradeoff"])
    if args.steps is None:
        args.steps = int(cfg["dmtd"]["sample_steps"])
    if args.pregen_steps is None:
        args.pregen_steps = int(cfg["dpgd"]["sample_steps"])


def cmd_generate(args, argv: list[str]) -> int:
    _resolve_sampling_args(args)
    lead, _, music = _pick_pair(args)
    out_dir = _prepare_out(args.out, args.force, ["partner.dany"])
    result = _generate_impl(args, lead, music)
    names = _write_generation(out_dir, result)
    inputs = {name: file_sha256(getattr(args, name)) for name in ("vqvae", "dpgd", "dmtd")}
    if args.corpus:
        inputs["corpus"] = file_sha256(args.corpus)
    config = {"lam": args.lam, "alpha": args.alpha, "chi": args.chi, "steps": args.steps,
              "pregen_steps": args.pregen_steps, "snap": not args.no_snap}
    outputs = _hash_outputs(out_dir, names)
    write_manifest(out_dir / "partner.manifest.json", "generate", argv, config, args.seed,
                   inputs, outputs)
    print(f"generated {result.motion.num_frames} frames "
          f"(kept-slot code match {result.kept_code_match:.2%}) -> {out_dir / 'partner.dany'}")
    return EXIT_OK


def _evaluate_impl(generated: list[MotionSequence], lead, partner, music, lam: float):
    if lead.num_frames % DOWNSAMPLE:
        raise DataError(f"frame count {lead.num_frames} not divisible by {DOWNSAMPLE}")
    pattern = half_pattern(lam, lead.num_frames // DOWNSAMPLE)
    metrics: dict[str, float] = {}
    per_gen_mfid = []
    per_gen_beat = []
    per_gen_lead = []
    per_gen_partner = []
    beats = music.beat_frames
    for gen in generated:
        if partner is not None:
            per_gen_mfid.append(mfid(gen, lead, partner, pattern))
            per_gen_partner.append(mpjpe(gen, partner))
        per_gen_beat.append(beat_align(gen, beats))
        per_gen_lead.append(mpjpe(gen, lead))
    if per_gen_mfid:
        metrics["mfid"] = float(np.mean(per_gen_mfid))
        metrics["mpjpe_partner"] = float(np.mean(per_gen_partner))
    metrics["beat_align"] = float(np.mean(per_gen_beat))
    metrics["mpjpe_lead"] = float(np.mean(per_gen_lead))
    if len(generated) >= 2:
        metrics["gendiv"] = gendiv(generated)
    return metrics


def cmd_evaluate(args, argv: list[str]) -> int:
    lead, partner, music = _pick_pair(args)
    generated = [_read_motion(p) for p in args.generated]
    for gen in generated:
        if gen.num_frames != lead.num_frames:
            raise DataError(f"generated length {gen.num_frames} != lead length {lead.num_frames}")
    out_dir = _prepare_out(args.out, args.force, ["metrics.csv", "metrics.png"])
    metrics = _evaluate_impl(generated, lead, partner, music, args.lam)
    write_table(out_dir / "metrics.csv", ["metric", "value"],
                [[k, f"{v:.10f}"] for k, v in metrics.items()])
    render_metric_bars(out_dir / "metrics.png", metrics)
    inputs = {f"generated_{i}": file_sha256(p) for i, p in enumerate(args.generated)}
    if args.corpus:
        inputs["corpus"] = file_sha256(args.corpus)
    outputs = _hash_outputs(out_dir, ["metrics.csv", "metrics.png"])
    write_manifest(out_dir / "evaluate.manifest.json", "evaluate", argv,
                   {"lam": args.lam}, args.seed, inputs, outputs)
    for k, v in metrics.items():
        print(f"{k}: {v:.6f}")
    return EXIT_OK


def cmd_sweep(args, argv: list[str]) -> int:
    _resolve_sampling_args(args)
    lead, partner, music = _pick_pair(args)
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    if not values:
        raise DataError("sweep needs at least one value")
    if args.axis == "lam" and not all(0.0 <= v <= 1.0 for v in values):
        raise DataError("lam sweep values must lie in [0, 1]")
    out_dir = _prepare_out(args.out, args.force, ["sweep.csv", "sweep.png"])
    rows = []
    series: dict[str, list[float]] = {}
    generated_latents = []
    for value in values:
        sub = argparse.Namespace(**vars(args))
        setattr(sub, args.axis, value)
        result = _generate_impl(sub, lead, music)
        gen_dir = out_dir / f"gen_{args.axis}_{value:g}"
        gen_dir.mkdir(exist_ok=True)
        _write_generation(gen_dir, result)
        generated_latents.append(result.latent)
        metrics = _evaluate_impl([result.motion], lead, partner, music, sub.lam)
        metrics["kept_code_match"] = result.kept_code_match
        for k, v in metrics.items():
            series.setdefault(k, []).append(v)
        rows.append([f"{value:g}"] + [f"{metrics[k]:.10f}" for k in sorted(metrics)])
    header = [args.axis] + sorted(series)
    verdict = None
    if args.axis == "lam":
        lead_dist = series["mpjpe_lead"]
        ordering = np.argsort(values)
        ordered = [lead_dist[i] for i in ordering]
        verdict = "pass" if all(b <= a + 1e-9 for a, b in zip(ordered, ordered[1:])) else "fail"
    write_table(out_dir / "sweep.csv", header, rows)
    render_sweep(out_dir / "sweep.png", args.axis, values, series, f"{args.axis} sweep")
    if len(generated_latents) >= 2:
        spread = float(np.mean([np.abs(a - b).mean() for a, b in
                                zip(generated_latents, generated_latents[1:])]))
    else:
        spread = 0.0
    manifest_cfg = {"axis": args.axis, "values": values, "lam": args.lam,
                    "alpha": args.alpha, "chi": args.chi,
                    "monotonicity_verdict": verdict, "mean_latent_spread": spread}
    inputs = {name: file_sha256(getattr(args, name)) for name in ("vqvae", "dpgd", "dmtd")}
    if args.corpus:
        inputs["corpus"] = file_sha256(args.corpus)
    outputs = _hash_outputs(out_dir, ["sweep.csv", "sweep.png"])
    write_manifest(out_dir / "sweep.manifest.json", "sweep", argv, manifest_cfg,
                   args.seed, inputs, outputs)
    for row in rows:
        print(",".join(str(c) for c in row))
    if verdict is not None:
        print(f"lead-distance monotonicity: {verdict}")
    return EXIT_OK if verdict in (None, "pass") else EXIT_NUMERIC


def cmd_inspect(args, argv: list[str]) -> int:
    path = _require_file(args.file, "container")
    meta = container_metadata(path)
    print(f"{path}: {len(meta)} entries, sha256 {file_sha256(path)}")
    for name, shape in meta.items():
        print(f"  {name}  shape={shape}")
    return EXIT_OK


def replay(manifest_path, out_dir) -> dict[str, bool]:
    """Re-run a recorded command into ``out_dir`` and compare output hashes."""
    from .manifest import replay_argv

    manifest = load_manifest(manifest_path)
    argv = replay_argv(manifest, out_dir)
    code = main(argv)
    if code != EXIT_OK:
        raise RuntimeError(f"replay exited with {code}")
    out = Path(out_dir)
    return {name: file_sha256(out / name) == digest
            for name, digest in manifest["outputs"].items()}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--profile", default="default", choices=["default", "small"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, e.g. --set vqvae.epochs=10")


def _add_pair_source(p: argparse.ArgumentParser, with_partner: bool = False) -> None:
    p.add_argument("--corpus", default=None, help="corpus container")
    p.add_argument("--pair", type=int, default=0, help="pair index within --corpus")
    p.add_argument("--lead", default=None, help="standalone lead motion container")
    p.add_argument("--music", default=None, help="standalone music container")
    if with_partner:
        p.add_argument("--partner", default=None, help="standalone partner motion container")


def _add_checkpoints(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vqvae", required=True, help="stage-1 checkpoint")
    p.add_argument("--dpgd", required=True, help="stage-2 checkpoint")
    p.add_argument("--dmtd", required=True, help="stage-3 checkpoint")


def _add_sampling(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lam", type=_lam_type, default=0.5, help="similarity in [0, 1]")
    p.add_argument("--alpha", type=float, default=None,
                   help="guidance strength (default: config dmtd.guidance_strength)")
    p.add_argument("--chi", type=float, default=None,
                   help="joint/independent trade-off (default: config dmtd.joint_tradeoff)")
    p.add_argument("--steps", type=int, default=None,
                   help="transfer sampling steps (default: config dmtd.sample_steps)")
    p.add_argument("--pregen-steps", type=int, default=None,
                   help="in-fill sampling steps (default: config dpgd.sample_steps)")
    p.add_argument("--no-snap", action="store_true",
                   help="skip the final codebook snap of filled slots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dany",
        description="Partner dancer generation: codebooks, masked in-fill "
                    "diffusion, condition-composed transfer diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic lead/partner corpus")
    _add_common(p)
    p.add_argument("--pairs", type=int, default=None, help="number of pairs (config override)")
    p.add_argument("--frames", type=int, default=None, help="frames per sequence (config override)")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train one stage")
    _add_common(p)
    p.add_argument("--stage", required=True, choices=["vqvae", "dpgd", "dmtd"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--epochs", type=int, default=None, help="override configured epochs")
    p.add_argument("--vqvae", default=None, help="stage-1 checkpoint (dpgd/dmtd prerequisite)")
    p.add_argument("--dpgd", default=None, help="stage-2 checkpoint (dmtd prerequisite)")
    p.add_argument("--resume", default=None, help="checkpoint to continue training from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate a partner for a lead + music")
    _add_common(p)
    _add_pair_source(p)
    _add_checkpoints(p)
    _add_sampling(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated motion against references")
    _add_common(p)
    _add_pair_source(p, with_partner=True)
    p.add_argument("--generated", nargs="+", required=True, help="generated motion container(s)")
    p.add_argument("--lam", type=_lam_type, default=0.5, help="similarity used at generation")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="generate + evaluate across one axis")
    _add_common(p)
    _add_pair_source(p, with_partner=True)
    _add_checkpoints(p)
    _add_sampling(p)
    p.add_argument("--axis", required=True, choices=["lam", "alpha", "chi"])
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="dump container metadata")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args, argv)
    except (DataError, ContainerError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, TrainingDiverged) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
