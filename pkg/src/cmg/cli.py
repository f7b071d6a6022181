"""Command-line interface.

Runs every operation in-process by default; with ``--server URL`` the
plan / generate / train-toy / eval subcommands become thin clients of a
running HTTP service and only handle local file IO.  ``convert`` and
``demo`` always run locally.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime error.
With ``--json-errors`` failures print ``{"error", "message"}`` JSON on
stderr instead of plain text.
"""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, ops
from .config import RunConfig, load_config
from .denoiser import checkpoint_from_bytes, load_checkpoint, save_checkpoint
from .errors import CmgError, ValidationError
from .io import (
    MotionData,
    csv_to_motion,
    dumps_canonical,
    motion_from_bytes,
    motion_to_csv,
    read_json,
    read_motion,
    read_plan,
    validate_plan_doc,
    write_json,
    write_motion,
    write_plan,
)
from .motion import GlobalMotion, RelativeMotion, global_to_relative, relative_to_global
from .planner import CrowdParams, ScenePlan
from .skeleton import default_skeleton


class AppState:
    def __init__(self, cfg: RunConfig, server: str | None):
        self.cfg = cfg
        self.server = server


def _parse_sets(pairs: tuple[str, ...]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _post(server: str, path: str, payload: dict, timeout: float = 900.0) -> dict:
    import httpx

    url = server.rstrip("/") + path
    try:
        resp = httpx.post(url, json=payload, timeout=timeout)
    except httpx.TimeoutException as exc:
        raise CmgError(f"request to {url} timed out: {exc}") from exc
    except httpx.HTTPError as exc:
        raise CmgError(f"request to {url} failed: {exc}") from exc
    if resp.status_code >= 400:
        try:
            doc = resp.json()
        except ValueError:
            raise CmgError(f"server returned HTTP {resp.status_code} from {url}")
        name = doc.get("error", "HTTPError")
        message = doc.get("message") or json.dumps(doc.get("detail", doc))
        if resp.status_code in (400, 422):
            raise ValidationError(f"server rejected the request: {name}: {message}")
        raise CmgError(f"server HTTP {resp.status_code}: {name}: {message}")
    return resp.json()


_EPILOG = "\b\nConfiguration keys (overridable via --config, CMG_* env, --set):\n" + \
    "\n".join("  " + line for line in RunConfig.describe().splitlines())


@click.group(epilog=_EPILOG)
@click.version_option(__version__, prog_name="cmg")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="configuration file with 'key = value' lines")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="override a configuration key (repeatable)")
@click.option("--json-errors", is_flag=True,
              help="emit machine-readable error JSON on stderr")
@click.option("--server", default=None, metavar="URL",
              help="send plan/generate/train-toy/eval to a running service")
@click.pass_context
def cli(ctx, config_path, sets, json_errors, server):
    """Crowd scene planning, motion generation, and evaluation."""
    cfg = load_config(path=config_path, overrides=_parse_sets(sets))
    ctx.obj = AppState(cfg, server)


@cli.command()
@click.option("--scene", required=True, help="free-text scene description")
@click.option("--n", type=int, required=True, help="number of agents")
@click.option("--s", type=int, required=True, help="target group size")
@click.option("--sigma", type=float, required=True, help="crowd density in [0, 1]")
@click.option("--alpha", type=float, required=True, help="interaction level in [0, 1]")
@click.option("--event", default=None, help="free-text event to apply to the plan")
@click.option("--offline/--online", default=True,
              help="--offline forces the deterministic fallback planner")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="plan JSON output path")
@click.pass_obj
def plan(state: AppState, scene, n, s, sigma, alpha, event, offline, output):
    """Plan a crowd scene and write a cmg_plan_v1 JSON document."""
    params = {"n": n, "s": s, "sigma": sigma, "alpha": alpha}
    if state.server:
        doc = _post(state.server, "/plan", {
            "scene": scene, "params": params, "event_text": event,
            "offline": offline, "config": state.cfg.to_dict(),
        })["plan"]
        validate_plan_doc(doc)
        write_json(output, doc)
        groups = len(doc["groups"])
    else:
        scene_plan = ops.op_plan(
            state.cfg, scene, CrowdParams(**params), event_text=event, offline=offline
        )
        write_plan(output, scene_plan)
        groups = len(scene_plan.groups)
    click.echo(f"wrote plan for {n} agents in {groups} groups to {output}")


@cli.command()
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="plan JSON path")
@click.option("--weights", "weights_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="checkpoint path")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="global motion container output path")
@click.option("--relative-out", default=None, type=click.Path(dir_okay=False),
              help="also write the relative-representation container here")
@click.pass_obj
def generate(state: AppState, plan_path, weights_path, output, relative_out):
    """Sample motion for every agent of a plan using a trained model."""
    skel = default_skeleton()
    if state.server:
        doc = read_json(plan_path)
        validate_plan_doc(doc)
        weights_b64 = base64.b64encode(Path(weights_path).read_bytes()).decode("ascii")
        resp = _post(state.server, "/generate", {
            "plan": doc, "weights_b64": weights_b64, "config": state.cfg.to_dict(),
        })
        Path(output).write_bytes(base64.b64decode(resp["motion_b64"]))
        if relative_out:
            Path(relative_out).write_bytes(base64.b64decode(resp["relative_b64"]))
        n = len(resp["texts"])
    else:
        scene_plan = read_plan(plan_path)
        weights = load_checkpoint(weights_path)
        result = ops.op_generate(state.cfg, scene_plan, weights, skel)
        write_motion(output, result.glob, "global", scene_plan.fps, skel.names)
        if relative_out:
            write_motion(relative_out, result.rel, "relative",
                         scene_plan.fps, skel.names)
        n = result.glob.shape[0]
    click.echo(f"wrote motion for {n} agents to {output}")


@cli.command("train-toy")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="checkpoint output path")
@click.pass_obj
def train_toy(state: AppState, output):
    """Overfit a model on the built-in synthetic dataset and save it."""
    if state.server:
        resp = _post(state.server, "/train-toy", {"config": state.cfg.to_dict()})
        Path(output).write_bytes(base64.b64decode(resp["weights_b64"]))
        final = resp["final_loss"]
        steps = len(resp["history"]["total"])
    else:
        weights, history = ops.op_train_toy(state.cfg)
        save_checkpoint(weights, output, seed=int(state.cfg["seed"]))
        final = history["total"][-1]
        steps = len(history["total"])
    click.echo(f"trained {steps} steps, final loss {final:.6f}, saved to {output}")


@cli.command()
@click.option("--motion", "motion_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="global motion container to evaluate")
@click.option("--plan", "plan_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="plan providing control targets and per-agent texts")
@click.option("--reference", "reference_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="global motion container used as the distribution reference")
@click.option("--text", "texts", multiple=True,
              help="per-sequence description (repeat once per agent)")
@click.option("-o", "--output", default=None, type=click.Path(dir_okay=False),
              help="report JSON path (default: print to stdout)")
@click.pass_obj
def eval(state: AppState, motion_path, plan_path, reference_path, texts, output):
    """Compute motion quality and control accuracy metrics."""
    if state.server:
        payload: dict = {
            "motion_b64": base64.b64encode(Path(motion_path).read_bytes()).decode("ascii"),
            "config": state.cfg.to_dict(),
        }
        if plan_path:
            doc = read_json(plan_path)
            validate_plan_doc(doc)
            payload["plan"] = doc
        if texts:
            payload["texts"] = list(texts)
        if reference_path:
            payload["reference_b64"] = base64.b64encode(
                Path(reference_path).read_bytes()
            ).decode("ascii")
        report = _post(state.server, "/eval", payload)["report"]
    else:
        motion = read_motion(motion_path)
        if motion.repr != "global":
            raise ValidationError(
                "evaluation expects a global-representation motion container"
            )
        controls = masks = None
        text_list = list(texts) or None
        if plan_path:
            scene_plan = read_plan(plan_path)
            if scene_plan.params.n != motion.n or scene_plan.frames != motion.frames:
                raise ValidationError(
                    f"plan covers {scene_plan.params.n} agents x {scene_plan.frames} "
                    f"frames but motion holds {motion.n} x {motion.frames}"
                )
            controls, masks = scene_plan.control, scene_plan.mask
            if text_list is None:
                text_list = [scene_plan.agent_group(a).activity_text
                             for a in range(scene_plan.params.n)]
        if text_list is not None and len(text_list) != motion.n:
            raise ValidationError(
                f"got {len(text_list)} texts for {motion.n} sequences"
            )
        ref = None
        if reference_path:
            ref_data = read_motion(reference_path)
            if ref_data.repr != "global":
                raise ValidationError(
                    "reference must be a global-representation motion container"
                )
            ref = np.asarray(ref_data.data, dtype=np.float64)
        report = ops.op_eval(
            state.cfg,
            np.asarray(motion.data, dtype=np.float64),
            controls,
            masks,
            texts=text_list,
            ref_globs=ref,
            fps=motion.fps,
        )
    if output:
        write_json(output, report)
        click.echo(f"wrote metrics report to {output}")
    else:
        click.echo(dumps_canonical(report))


def _read_any_motion(path: str, fps: float | None) -> MotionData:
    if path.endswith(".csv"):
        if fps is None:
            raise ValidationError("--fps is required when reading CSV input")
        return csv_to_motion(path, fps)
    return read_motion(path)


def _change_repr(motion: MotionData, target: str) -> MotionData:
    if motion.repr == target:
        return motion
    skel = default_skeleton()
    if int(motion.J) != skel.J:
        raise ValidationError(
            f"representation conversion supports the {skel.J}-joint "
            f"default skeleton, got J={motion.J}"
        )
    data = np.asarray(motion.data, dtype=np.float64)
    if target == "global":
        seqs = [relative_to_global(RelativeMotion(data=d, fps=motion.fps), skel).positions
                for d in data]
    else:
        seqs = [global_to_relative(GlobalMotion(positions=d, fps=motion.fps), skel).data
                for d in data]
    return MotionData(
        data=np.stack(seqs).astype("<f4"),
        repr=target,
        fps=motion.fps,
        joint_names=tuple(skel.names),
    )


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--to", "target", type=click.Choice(["relative", "global", "csv"]),
              default=None, help="target format (default: inferred from output suffix)")
@click.option("--fps", type=float, default=None,
              help="frame rate to assume when the input is CSV")
@click.pass_obj
def convert(state: AppState, input_path, output_path, target, fps):
    """Transcode motion files: relative <-> global and container <-> CSV."""
    motion = _read_any_motion(input_path, fps)
    if target is None:
        target = "csv" if output_path.endswith(".csv") else motion.repr
    if target == "csv":
        motion_to_csv(output_path, motion)
    else:
        converted = _change_repr(motion, target)
        write_motion(output_path, converted.data, converted.repr,
                     converted.fps, converted.joint_names)
    click.echo(f"wrote {target} output to {output_path}")


@cli.command()
@click.option("--seed", type=int, default=7, help="seed controlling every artifact")
@click.option("--out", "out_dir", default="demo_out", type=click.Path(file_okay=False),
              help="output directory")
@click.pass_obj
def demo(state: AppState, seed, out_dir):
    """Offline end-to-end run: plan, train, generate, evaluate (always local)."""
    manifest = ops.op_demo(out_dir, seed=seed)
    click.echo(f"demo seed {seed} wrote {', '.join(manifest['files'])} to {out_dir}")
    for key, value in manifest["metrics"].items():
        if isinstance(value, float):
            click.echo(f"  {key}: {value:.4f}")
        else:
            click.echo(f"  {key}: {value}")


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    json_errors = "--json-errors" in args

    def emit(exc: BaseException, message: str) -> None:
        if json_errors:
            doc = {"error": type(exc).__name__, "message": message}
            click.echo(json.dumps(doc), err=True)
        else:
            click.echo(f"error: {message}", err=True)

    try:
        cli.main(args=args, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help / --version
        return int(exc.exit_code)
    except click.Abort:
        emit(click.Abort(), "aborted")
        return 1
    except click.UsageError as exc:
        emit(exc, exc.format_message())
        return 1
    except ValidationError as exc:
        emit(exc, str(exc))
        return 2
    except (CmgError, OSError) as exc:
        emit(exc, str(exc))
        return 3
    except Exception as exc:  # pragma: no cover - defensive catch-all
        emit(exc, f"{type(exc).__name__}: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
