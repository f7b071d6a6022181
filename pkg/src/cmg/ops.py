"""Shared operations behind the CLI and the HTTP service.

Each operation takes a :class:`~cmg.config.RunConfig` plus in-memory
inputs and returns in-memory outputs; the CLI and service layers handle
files and transport.  Generation runs per agent in an agent-local frame:
control targets are shifted so the agent's first pelvis target sits at the
origin, the sampler produces a local motion, and the result is translated
back to its place in the scene.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .denoiser import ArchConfig, DenoiserWeights, init_weights
from .diffusion import build_schedule
from .errors import ValidationError
from .guidance import GuidanceConfig
from .losses import LossWeights
from .metrics import (
    diversity,
    fid,
    foot_skating_ratio,
    motion_feature_set,
    r_precision,
    spatial_errors_batch,
    text_feature_set,
)
from .motion import GlobalMotion, RelativeMotion, relative_to_global
from .planner import CrowdParams, EventSpec, ScenePlan, apply_event, plan_scene
from .sampling import sample
from .skeleton import Skeleton, default_skeleton
from .textemb import HashedBagOfWords, embed_text
from .toydata import make_toy_dataset
from .training import TrainConfig, train_toy

log = logging.getLogger(__name__)

REPORT_VERSION = "cmg_report_v1"


def op_plan(
    cfg: RunConfig,
    scene: str,
    params: dict | CrowdParams,
    event_text: str | None = None,
    event: dict | EventSpec | None = None,
    offline: bool = False,
    skel: Skeleton | None = None,
    llm_client=None,
) -> ScenePlan:
    """Plan a scene and optionally apply one event to it."""
    if isinstance(params, dict):
        params = CrowdParams.from_dict(params)
    backend = "fallback" if offline else str(cfg["planner.backend"])
    skel = default_skeleton() if skel is None else skel
    plan = plan_scene(
        scene,
        params,
        backend=backend,
        seed=int(cfg["seed"]),
        frames=int(cfg["frames"]),
        fps=float(cfg["fps"]),
        skel=skel,
        interp=str(cfg["planner.interp"]),
        v_max=float(cfg["planner.v_max"]),
        arena_base=float(cfg["planner.arena_base"]),
        llm_client=llm_client,
    )
    if event is not None or event_text is not None:
        if isinstance(event, dict):
            event = EventSpec.from_dict(event)
        plan = apply_event(
            plan,
            event_text or "",
            event,
            backend=backend,
            v_max=float(cfg["planner.v_max"]),
            llm_client=llm_client,
        )
    return plan


def arch_from_config(cfg: RunConfig) -> ArchConfig:
    return ArchConfig(
        frames=int(cfg["frames"]),
        joints=int(cfg["joints"]),
        latent=int(cfg["model.latent"]),
        blocks=int(cfg["model.blocks"]),
        text_dim=int(cfg["model.text_dim"]),
        T=int(cfg["diffusion.T"]),
    )


def op_train_toy(
    cfg: RunConfig,
    skel: Skeleton | None = None,
    dataset=None,
) -> tuple[DenoiserWeights, dict[str, list[float]]]:
    """Overfit a fresh model on the synthetic grounded dataset."""
    skel = default_skeleton() if skel is None else skel
    arch = arch_from_config(cfg)
    weights = init_weights(arch, rng=np.random.default_rng(int(cfg["seed"])))
    if dataset is None:
        dataset, _ = make_toy_dataset(
            skel, frames=arch.frames, seed=int(cfg["seed"]), fps=float(cfg["fps"])
        )
    sched = build_schedule(
        T=int(cfg["diffusion.T"]),
        beta_start=float(cfg["diffusion.beta_start"]),
        beta_end=float(cfg["diffusion.beta_end"]),
    )
    loss_weights = LossWeights(
        lambda_whole=float(cfg["loss.lambda_whole"]),
        lambda_con=float(cfg["loss.lambda_con"]),
        lambda_foot=float(cfg["loss.lambda_foot"]),
        h_thresh=float(cfg["loss.h_thresh"]),
    )
    train_cfg = TrainConfig(
        steps=int(cfg["train.steps"]),
        lr=float(cfg["train.lr"]),
        optimizer=str(cfg["train.optimizer"]),
        batch_size=None if cfg["train.batch_size"] is None else int(cfg["train.batch_size"]),
        p_uncond=float(cfg["train.p_uncond"]),
        seed=int(cfg["seed"]),
    )
    history = train_toy(weights, dataset, sched, skel, loss_weights, train_cfg)
    return weights, history


@dataclass
class GenerateResult:
    rel: np.ndarray  # (n, f, D) agent-local relative channels
    glob: np.ndarray  # (n, f, J, 3) world-frame joint positions
    texts: list[str]


def op_generate(
    cfg: RunConfig,
    plan: ScenePlan,
    weights: DenoiserWeights,
    skel: Skeleton | None = None,
) -> GenerateResult:
    """Sample one motion per agent, conditioned on the plan's control."""
    skel = default_skeleton() if skel is None else skel
    arch = weights.cfg
    if plan.frames != arch.frames:
        raise ValidationError(
            f"plan has {plan.frames} frames but the model expects {arch.frames}"
        )
    if plan.J != arch.joints:
        raise ValidationError(
            f"plan has {plan.J} joints but the model expects {arch.joints}"
        )
    sched = build_schedule(
        T=arch.T,
        beta_start=float(cfg["diffusion.beta_start"]),
        beta_end=float(cfg["diffusion.beta_end"]),
    )
    guidance = None
    if bool(cfg["guidance.enabled"]):
        clamp = cfg["guidance.clamp"]
        guidance = GuidanceConfig(
            eta=float(cfg["guidance.eta"]),
            inner_steps=int(cfg["guidance.inner_steps"]),
            last_n=int(cfg["guidance.last_n"]),
            clamp=None if clamp is None else float(clamp),
        )
    embedder = HashedBagOfWords(dim=arch.text_dim)
    seed = int(cfg["seed"])
    n, f = plan.params.n, plan.frames
    rel_out = np.zeros((n, f, arch.D))
    glob_out = np.zeros((n, f, arch.joints, 3))
    texts: list[str] = []
    for agent in range(n):
        group = plan.agent_group(agent)
        texts.append(group.activity_text)
        mask = plan.mask[agent]
        control = plan.control[agent]
        offset = np.zeros(3)
        if mask[0, 0] == 1.0:
            offset = np.array([control[0, 0, 0], 0.0, control[0, 0, 2]])
        local = np.where(mask[..., None] == 1.0, control - offset, 0.0)
        rel = sample(
            weights,
            embed_text(group.activity_text, embedder),
            local,
            mask,
            sched=sched,
            steps=int(cfg["diffusion.steps"]),
            cfg_scale=float(cfg["diffusion.cfg_scale"]),
            guidance=guidance,
            rng=np.random.default_rng([seed, agent]),
            mean_mode=str(cfg["diffusion.mean_mode"]),
        )
        glob = relative_to_global(RelativeMotion(data=rel, fps=plan.fps), skel)
        rel_out[agent] = rel
        glob_out[agent] = glob.positions + offset
    return GenerateResult(rel=rel_out, glob=glob_out, texts=texts)


def op_eval(
    cfg: RunConfig,
    globs: np.ndarray,
    controls: np.ndarray | None = None,
    masks: np.ndarray | None = None,
    texts: list[str] | None = None,
    ref_globs: np.ndarray | None = None,
    skel: Skeleton | None = None,
    fps: float | None = None,
) -> dict:
    """Compute every metric the inputs support; record what was skipped."""
    skel = default_skeleton() if skel is None else skel
    fps = float(cfg["fps"]) if fps is None else float(fps)
    seed = int(cfg["seed"])
    motions = [GlobalMotion(positions=g, fps=fps) for g in np.asarray(globs)]
    metrics: dict = {}
    skipped: dict = {}

    skate = [foot_skating_ratio(m, skel, h=float(cfg["metrics.foot_h"]),
                                slide=float(cfg["metrics.foot_slide"]))
             for m in motions]
    metrics["foot_skating_ratio"] = float(np.mean(skate))

    if controls is not None and masks is not None:
        report = spatial_errors_batch(
            motions, controls, masks, threshold=float(cfg["metrics.threshold"])
        )
        metrics["traj_err_ratio"] = report.traj_err_ratio
        metrics["loc_err_ratio"] = report.loc_err_ratio
        metrics["avg_err_m"] = report.avg_err_m
        metrics["controlled_entries"] = report.n_controlled
        if not report.defined:
            skipped["spatial_errors"] = "control mask is empty"
    else:
        skipped["spatial_errors"] = "no control provided"

    gen_feats = motion_feature_set(motions, fps=fps)
    if gen_feats.n >= 2:
        metrics["diversity"] = diversity(
            gen_feats,
            subset_pairs=int(cfg["metrics.subset_pairs"]),
            rng=np.random.default_rng(seed),
        )
    else:
        skipped["diversity"] = "needs at least 2 sequences"

    if ref_globs is not None and len(ref_globs) >= 2 and gen_feats.n >= 2:
        ref_feats = motion_feature_set(
            [GlobalMotion(positions=g, fps=fps) for g in np.asarray(ref_globs)], fps=fps
        )
        metrics["fid"] = fid(ref_feats, gen_feats)
    else:
        skipped["fid"] = "needs a reference set and 2+ sequences per side"

    pool = int(cfg["metrics.pool_size"])
    if texts is not None and gen_feats.n >= pool:
        text_feats = text_feature_set(texts, dim=gen_feats.dim, seed=seed)
        acc = r_precision(gen_feats, text_feats, pool_size=pool,
                          rng=np.random.default_rng(seed))
        metrics["r_precision"] = {str(k): v for k, v in sorted(acc.items())}
    else:
        skipped["r_precision"] = f"needs texts and at least pool_size={pool} sequences"

    return {
        "version": REPORT_VERSION,
        "seed": seed,
        "config": {
            "metrics.threshold": float(cfg["metrics.threshold"]),
            "metrics.foot_h": float(cfg["metrics.foot_h"]),
            "metrics.foot_slide": float(cfg["metrics.foot_slide"]),
            "metrics.pool_size": pool,
            "metrics.subset_pairs": int(cfg["metrics.subset_pairs"]),
        },
        "metrics": metrics,
        "skipped": skipped,
    }


DEMO_SCENE = "a small plaza on a sunny afternoon"
DEMO_EVENT = "everyone avoids the fountain in the middle"
DEMO_OVERRIDES = {
    "frames": 40,
    "model.latent": 16,
    "model.blocks": 2,
    "train.steps": 80,
    "train.batch_size": 4,
    "diffusion.steps": 12,
    "guidance.last_n": 4,
    "guidance.inner_steps": 3,
}


def op_demo(out_dir, seed: int = 7) -> dict:
    """Offline end-to-end run: plan, train a small model, generate, evaluate.

    Writes plan.json, checkpoint.cmgw, motion_global.cmg1,
    motion_relative.cmg1, and report.json under ``out_dir``; every output
    is a pure function of ``seed``, so repeated runs are byte-identical.
    """
    from pathlib import Path

    from .denoiser import save_checkpoint
    from .io import write_json, write_motion, write_plan

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = load_config_with_demo_defaults(seed)
    skel = default_skeleton()

    plan = op_plan(
        cfg,
        DEMO_SCENE,
        CrowdParams(n=3, s=2, sigma=0.5, alpha=0.8),
        event_text=DEMO_EVENT,
        offline=True,
        skel=skel,
    )
    write_plan(out / "plan.json", plan)

    dataset, reference = make_toy_dataset(
        skel, frames=int(cfg["frames"]), seed=seed, fps=float(cfg["fps"])
    )
    weights, history = op_train_toy(cfg, skel, dataset)
    save_checkpoint(weights, out / "checkpoint.cmgw", seed=seed)

    result = op_generate(cfg, plan, weights, skel)
    write_motion(out / "motion_global.cmg1", result.glob, "global",
                 plan.fps, skel.names)
    write_motion(out / "motion_relative.cmg1", result.rel, "relative",
                 plan.fps, skel.names)

    report = op_eval(
        cfg,
        result.glob,
        plan.control,
        plan.mask,
        texts=result.texts,
        ref_globs=np.stack([g.positions for g in reference]),
        skel=skel,
        fps=plan.fps,
    )
    report["demo"] = {
        "scene": DEMO_SCENE,
        "event": DEMO_EVENT,
        "train_steps": len(history["total"]),
        "final_loss": history["total"][-1],
    }
    write_json(out / "report.json", report)

    return {
        "seed": seed,
        "out_dir": str(out),
        "files": sorted(p.name for p in out.iterdir() if p.is_file()),
        "metrics": report["metrics"],
    }


def load_config_with_demo_defaults(seed: int) -> RunConfig:
    return RunConfig(values={"seed": seed, **DEMO_OVERRIDES})
