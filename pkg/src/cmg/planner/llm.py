"""Chat-style LLM client for scene planning, with schema-validated answers.

The wire protocol is a JSON POST of ``{"model": ..., "messages": [...]}``
returning ``{"choices": [{"message": {"content": <JSON text>}}]}``; the
content must itself be JSON matching the per-template schema.  Failures are
retried with exponential backoff and surface as distinct error types:
:class:`~cmg.errors.LLMTimeoutError`, :class:`~cmg.errors.LLMHTTPError`,
:class:`~cmg.errors.LLMSchemaError`.  Planning callers treat any of these
as a cue to fall back to the deterministic planner.

Configuration comes from ``CMG_LLM_ENDPOINT``, ``CMG_LLM_API_KEY`` and
``CMG_LLM_MODEL`` or explicit constructor arguments.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from importlib import resources

import httpx
import numpy as np
import pydantic

from ..errors import LLMError, LLMHTTPError, LLMSchemaError, LLMTimeoutError
from .types import EventSpec, PATTERNS, ScenePlan

TEMPLATE_IDS = ("params", "plan", "event")

ENV_ENDPOINT = "CMG_LLM_ENDPOINT"
ENV_API_KEY = "CMG_LLM_API_KEY"
ENV_MODEL = "CMG_LLM_MODEL"


@dataclass
class PlannerLLMClient:
    """Endpoint coordinates plus retry policy for planning prompts."""

    endpoint: str
    api_key: str | None = None
    model: str = "planner-default"
    timeout: float = 10.0
    max_retries: int = 2
    backoff: float = 0.2

    @staticmethod
    def from_env() -> "PlannerLLMClient | None":
        """Build a client from ``CMG_LLM_*`` variables; None when unset."""
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            return None
        return PlannerLLMClient(
            endpoint=endpoint,
            api_key=os.environ.get(ENV_API_KEY),
            model=os.environ.get(ENV_MODEL, "planner-default"),
        )


class ParamsSchema(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    n: int = pydantic.Field(ge=1, le=1024)
    s: float = pydantic.Field(gt=0)
    sigma: float = pydantic.Field(ge=0.0, le=1.0)
    alpha: float = pydantic.Field(ge=0.0, le=1.0)


class GroupSchema(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    members: list[int]
    activity: str
    formation: str = "cluster"


class CandidateSchema(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    groups: list[GroupSchema]


class PlanSchema(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    candidates: list[CandidateSchema] = pydantic.Field(min_length=1)


class EventSchema(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    pattern: str
    epicenter: tuple[float, float]
    direction: tuple[float, float] | None = None
    radius: float | None = None
    onset_frame: int = pydantic.Field(ge=0)
    duration_frames: int = pydantic.Field(ge=1)
    leader_agent: int | None = None
    spacing: float = 0.8

    @pydantic.field_validator("pattern")
    @classmethod
    def _known_pattern(cls, v: str) -> str:
        if v not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}")
        return v


SCHEMAS: dict[str, type[pydantic.BaseModel]] = {
    "params": ParamsSchema,
    "plan": PlanSchema,
    "event": EventSchema,
}


@dataclass
class LLMResult:
    """A validated answer plus how hard it was to get."""

    data: pydantic.BaseModel
    retries: int
    raw: str


def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise LLMError(f"unknown template {template_id!r}; expected {TEMPLATE_IDS}")
    return (
        resources.files("cmg.templates").joinpath(f"{template_id}.txt").read_text("utf-8")
    )


def llm_request(
    client: PlannerLLMClient,
    template_id: str,
    variables: dict,
    schema: type[pydantic.BaseModel] | None = None,
) -> LLMResult:
    """POST a rendered template and validate the JSON answer.

    Retries up to ``client.max_retries`` times with exponential backoff;
    after the final attempt the last failure is raised as its specific
    error type.
    """
    schema = SCHEMAS[template_id] if schema is None else schema
    prompt = load_template(template_id).format(**variables)
    headers = {"content-type": "application/json"}
    if client.api_key:
        headers["authorization"] = f"Bearer {client.api_key}"
    payload = {
        "model": client.model,
        "messages": [{"role": "user", "content": prompt}],
    }
    last_error: LLMError | None = None
    for attempt in range(client.max_retries + 1):
        if attempt > 0:
            time.sleep(client.backoff * 2.0 ** (attempt - 1))
        try:
            response = httpx.post(
                client.endpoint, json=payload, headers=headers, timeout=client.timeout
            )
        except httpx.TimeoutException as exc:
            last_error = LLMTimeoutError(
                f"no answer from {client.endpoint} within {client.timeout}s: {exc}"
            )
            continue
        except httpx.HTTPError as exc:
            last_error = LLMHTTPError(f"transport failure: {exc}", status_code=0)
            continue
        if not 200 <= response.status_code < 300:
            last_error = LLMHTTPError(
                f"endpoint returned status {response.status_code}",
                status_code=response.status_code,
                raw=response.text,
            )
            continue
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            last_error = LLMSchemaError(
                f"malformed chat envelope: {exc}", raw=response.text
            )
            continue
        try:
            parsed = json.loads(content)
            data = schema.model_validate(parsed)
        except (json.JSONDecodeError, pydantic.ValidationError) as exc:
            last_error = LLMSchemaError(
                f"answer failed schema validation: {exc}", raw=str(content)
            )
            continue
        return LLMResult(data=data, retries=attempt, raw=str(content))
    assert last_error is not None
    raise last_error


def derive_params_llm(client: PlannerLLMClient, y_scene: str) -> "ParamsSchema":
    result = llm_request(client, "params", {"scene": y_scene})
    return result.data


def plan_candidates_llm(
    client: PlannerLLMClient,
    y_scene: str,
    n: int,
    s: float,
    sigma: float,
    alpha: float,
    activities: tuple[str, ...],
    k: int = 3,
) -> tuple[list[CandidateSchema], LLMResult]:
    result = llm_request(
        client,
        "plan",
        {
            "scene": y_scene,
            "n": n,
            "n_minus_1": n - 1,
            "s": s,
            "sigma": sigma,
            "alpha": alpha,
            "activities": ", ".join(activities),
            "k": k,
        },
    )
    return list(result.data.candidates), result


def interpret_event_llm(
    client: PlannerLLMClient, y_event: str, plan: ScenePlan
) -> EventSpec:
    centroid = plan.control[:, 0, 0, :][:, [0, 2]].mean(axis=0)
    result = llm_request(
        client,
        "event",
        {
            "event": y_event,
            "n": plan.params.n,
            "frames": plan.frames,
            "fps": plan.fps,
            "centroid": f"[{centroid[0]:.3f}, {centroid[1]:.3f}]",
        },
    )
    ev: EventSchema = result.data
    return EventSpec(
        pattern=ev.pattern,
        epicenter=np.asarray(ev.epicenter, dtype=np.float64),
        onset_frame=ev.onset_frame,
        duration_frames=ev.duration_frames,
        direction=None if ev.direction is None else np.asarray(ev.direction),
        radius=ev.radius,
        leader_agent=ev.leader_agent,
        spacing=ev.spacing,
    )
