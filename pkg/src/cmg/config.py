"""Run configuration: flat dotted keys, file < env < CLI precedence.

Config files are plain text, one ``key = value`` per line with ``#``
comments.  Environment variables override file values using the name
``CMG_`` + key upper-cased with ``.`` replaced by ``__`` (for example
``diffusion.cfg_scale`` becomes ``CMG_DIFFUSION__CFG_SCALE``).  CLI
``--set key=value`` flags override both.  Unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

ENV_PREFIX = "CMG_"

# key -> (default, type, help); type "float?"/"int?" admits "none"
REGISTRY: dict[str, tuple[object, str, str]] = {
    "seed": (0, "int", "master random seed"),
    "frames": (120, "int", "sequence length in frames"),
    "fps": (20.0, "float", "frames per second"),
    "joints": (22, "int", "skeleton joint count"),
    "diffusion.T": (1000, "int", "training timestep count"),
    "diffusion.beta_start": (1e-4, "float", "first beta of the linear schedule"),
    "diffusion.beta_end": (0.02, "float", "last beta of the linear schedule"),
    "diffusion.steps": (50, "int", "inference steps after respacing"),
    "diffusion.cfg_scale": (2.5, "float", "classifier-free guidance scale"),
    "diffusion.mean_mode": ("direct", "str", "reverse mean mode: direct|posterior"),
    "guidance.enabled": (True, "bool", "apply IK guidance during sampling"),
    "guidance.eta": (0.01, "float", "IK guidance step size"),
    "guidance.inner_steps": (5, "int", "IK gradient steps per denoising step"),
    "guidance.last_n": (10, "int", "apply IK guidance in the last N steps"),
    "guidance.clamp": (None, "float?", "max per-entry IK correction (none = off)"),
    "loss.lambda_whole": (1.0, "float", "weight of the reconstruction loss"),
    "loss.lambda_con": (1.0, "float", "weight of the control loss"),
    "loss.lambda_foot": (1.0, "float", "weight of the foot-contact loss"),
    "loss.h_thresh": (0.05, "float", "foot height gate in meters"),
    "planner.backend": ("fallback", "str", "planning backend: fallback|llm"),
    "planner.arena_base": (4.0, "float", "base anchor spacing in meters"),
    "planner.v_max": (1.5, "float", "pelvis speed ceiling in m/s"),
    "planner.eps_return": (0.1, "float", "Passing return tolerance in meters"),
    "planner.spacing": (0.8, "float", "queue slot spacing in meters"),
    "planner.interp": ("catmull_rom", "str", "trajectory interpolation: catmull_rom|linear"),
    "metrics.threshold": (0.5, "float", "spatial error threshold in meters"),
    "metrics.pool_size": (32, "int", "R-precision distractor pool size"),
    "metrics.subset_pairs": (300, "int", "diversity sample pair count"),
    "metrics.foot_h": (0.05, "float", "foot skating height threshold in meters"),
    "metrics.foot_slide": (0.0025, "float", "foot skating slide threshold m/frame"),
    "train.steps": (2000, "int", "training step count"),
    "train.lr": (2e-4, "float", "learning rate"),
    "train.optimizer": ("adam", "str", "optimizer: adam|sgd"),
    "train.batch_size": (None, "int?", "batch size (none = full dataset)"),
    "train.p_uncond": (0.1, "float", "text condition dropout probability"),
    "model.latent": (32, "int", "per-joint latent width"),
    "model.blocks": (4, "int", "attention block count"),
    "model.text_dim": (512, "int", "text embedding width"),
}


def _coerce(key: str, raw: object, kind: str) -> object:
    if isinstance(raw, str):
        text = raw.strip()
        if kind.endswith("?") and text.lower() in ("none", "null", ""):
            return None
        try:
            if kind.startswith("int"):
                return int(text)
            if kind.startswith("float"):
                return float(text)
            if kind == "bool":
                if text.lower() in ("true", "1", "yes", "on"):
                    return True
                if text.lower() in ("false", "0", "no", "off"):
                    return False
                raise ValueError(text)
            return text
        except ValueError as exc:
            raise ValidationError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from exc
    if raw is None and kind.endswith("?"):
        return None
    if kind.startswith("int") and isinstance(raw, bool):
        raise ValidationError(f"config key {key!r}: expected {kind}, got bool")
    if kind.startswith("int") and isinstance(raw, int):
        return raw
    if kind.startswith("float") and isinstance(raw, (int, float)):
        return float(raw)
    if kind == "bool" and isinstance(raw, bool):
        return raw
    if kind == "str" and isinstance(raw, str):
        return raw
    raise ValidationError(f"config key {key!r}: expected {kind}, got {type(raw).__name__}")


@dataclass
class RunConfig:
    """Validated configuration with registry-backed defaults."""

    values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: default for k, (default, _, _) in REGISTRY.items()}
        for key, value in self.values.items():
            if key not in REGISTRY:
                raise ValidationError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value, REGISTRY[key][1])
        self.values = merged

    def __getitem__(self, key: str) -> object:
        if key not in REGISTRY:
            raise ValidationError(f"unknown config key {key!r}")
        return self.values[key]

    def set(self, key: str, value: object) -> None:
        if key not in REGISTRY:
            raise ValidationError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value, REGISTRY[key][1])

    def to_dict(self) -> dict:
        return {k: self.values[k] for k in REGISTRY}

    @staticmethod
    def describe() -> str:
        """Human-readable key/default/help listing for --help output."""
        lines = []
        for key, (default, kind, help_text) in REGISTRY.items():
            lines.append(f"{key} ({kind}, default {default!r}): {help_text}")
        return "\n".join(lines)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; later duplicates win."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def env_key(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "__")


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, str] | None = None,
    environ: dict[str, str] | None = None,
) -> RunConfig:
    """Assemble configuration: defaults < file < environment < overrides."""
    environ = os.environ if environ is None else environ
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    cfg = RunConfig(values=values)
    for key in REGISTRY:
        env_name = env_key(key)
        if env_name in environ:
            cfg.set(key, environ[env_name])
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return cfg
