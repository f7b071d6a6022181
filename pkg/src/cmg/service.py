"""HTTP service exposing the planning, generation, and evaluation ops.

Binary artifacts (motion containers, model checkpoints) travel inline as
base64 strings so every endpoint speaks plain JSON.  Domain validation
failures map to HTTP 422, malformed binary payloads to 400, and anything
unexpected to 500, always with an ``{"error", "message"}`` body.
"""

from __future__ import annotations

import base64
import binascii

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__, ops
from .config import RunConfig, load_config
from .denoiser import checkpoint_bytes, checkpoint_from_bytes
from .errors import CmgError, MotionFileError, SchemaError, ValidationError
from .io import motion_bytes, motion_from_bytes, validate_plan_doc
from .planner import ScenePlan
from .skeleton import default_skeleton


class ParamsModel(BaseModel):
    n: int = Field(ge=1, description="number of agents")
    s: int = Field(ge=1, description="target group size")
    sigma: float = Field(ge=0.0, le=1.0, description="crowd density in [0, 1]")
    alpha: float = Field(ge=0.0, le=1.0, description="interaction level in [0, 1]")


class PlanRequest(BaseModel):
    scene: str
    params: ParamsModel
    event_text: str | None = None
    event: dict | None = None
    offline: bool = True
    config: dict[str, object] = Field(default_factory=dict)


class PlanResponse(BaseModel):
    plan: dict


class TrainToyRequest(BaseModel):
    config: dict[str, object] = Field(default_factory=dict)


class TrainToyResponse(BaseModel):
    weights_b64: str
    final_loss: float
    history: dict[str, list[float]]


class GenerateRequest(BaseModel):
    plan: dict
    weights_b64: str
    config: dict[str, object] = Field(default_factory=dict)


class GenerateResponse(BaseModel):
    motion_b64: str
    relative_b64: str
    texts: list[str]


class EvalRequest(BaseModel):
    motion_b64: str
    plan: dict | None = None
    texts: list[str] | None = None
    reference_b64: str | None = None
    config: dict[str, object] = Field(default_factory=dict)


class EvalResponse(BaseModel):
    report: dict


class HealthResponse(BaseModel):
    status: str
    version: str


def _config_from(overrides: dict[str, object]) -> RunConfig:
    return load_config(overrides={k: v for k, v in overrides.items()})


def _decode_b64(text: str, what: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise MotionFileError(f"{what} is not valid base64: {exc}") from exc


def _plan_from_doc(doc: dict) -> ScenePlan:
    validate_plan_doc(doc)
    return ScenePlan.from_dict(doc)


def create_app() -> FastAPI:
    app = FastAPI(title="cmg", version=__version__)

    @app.exception_handler(CmgError)
    async def _domain_error(request: Request, exc: CmgError):
        status = 400 if isinstance(exc, MotionFileError) else 422
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/plan", response_model=PlanResponse)
    def plan(req: PlanRequest) -> PlanResponse:
        cfg = _config_from(req.config)
        scene_plan = ops.op_plan(
            cfg,
            req.scene,
            req.params.model_dump(),
            event_text=req.event_text,
            event=req.event,
            offline=req.offline,
        )
        return PlanResponse(plan=scene_plan.to_dict())

    @app.post("/train-toy", response_model=TrainToyResponse)
    def train_toy(req: TrainToyRequest) -> TrainToyResponse:
        cfg = _config_from(req.config)
        weights, history = ops.op_train_toy(cfg)
        return TrainToyResponse(
            weights_b64=base64.b64encode(
                checkpoint_bytes(weights, seed=int(cfg["seed"]))
            ).decode("ascii"),
            final_loss=history["total"][-1],
            history=history,
        )

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest) -> GenerateResponse:
        cfg = _config_from(req.config)
        weights = checkpoint_from_bytes(_decode_b64(req.weights_b64, "weights_b64"))
        scene_plan = _plan_from_doc(req.plan)
        skel = default_skeleton()
        result = ops.op_generate(cfg, scene_plan, weights, skel)
        return GenerateResponse(
            motion_b64=base64.b64encode(
                motion_bytes(result.glob, "global", scene_plan.fps, skel.names)
            ).decode("ascii"),
            relative_b64=base64.b64encode(
                motion_bytes(result.rel, "relative", scene_plan.fps, skel.names)
            ).decode("ascii"),
            texts=result.texts,
        )

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        cfg = _config_from(req.config)
        motion = motion_from_bytes(_decode_b64(req.motion_b64, "motion_b64"))
        if motion.repr != "global":
            raise ValidationError(
                "evaluation expects a global-representation motion container"
            )
        controls = masks = texts = None
        if req.plan is not None:
            scene_plan = _plan_from_doc(req.plan)
            if scene_plan.params.n != motion.n or scene_plan.frames != motion.frames:
                raise ValidationError(
                    f"plan covers {scene_plan.params.n} agents x {scene_plan.frames} "
                    f"frames but motion holds {motion.n} x {motion.frames}"
                )
            controls, masks = scene_plan.control, scene_plan.mask
            texts = [scene_plan.agent_group(a).activity_text
                     for a in range(scene_plan.params.n)]
        if req.texts is not None:
            if len(req.texts) != motion.n:
                raise ValidationError(
                    f"got {len(req.texts)} texts for {motion.n} sequences"
                )
            texts = req.texts
        ref = None
        if req.reference_b64 is not None:
            ref_data = motion_from_bytes(_decode_b64(req.reference_b64, "reference_b64"))
            if ref_data.repr != "global":
                raise ValidationError(
                    "reference must be a global-representation motion container"
                )
            ref = np.asarray(ref_data.data, dtype=np.float64)
        report = ops.op_eval(
            cfg,
            np.asarray(motion.data, dtype=np.float64),
            controls,
            masks,
            texts=texts,
            ref_globs=ref,
            fps=motion.fps,
        )
        return EvalResponse(report=report)

    return app
