"""Command line interface.

Sampling commands resolve their seed from --seed, then the SCENEDIFF_SEED
environment variable, then 0, and write deterministic JSON, so a repeated
invocation with the same arguments produces byte-identical files. Exit codes:
0 on success, 2 on bad arguments or unparsable instructions (click's usage
failure), 3 when an instruction is well formed but unsatisfiable.
"""

from __future__ import annotations

import functools
import os
import sys
from pathlib import Path

import click
import numpy as np

from .datagen import generate_dataset, toy_support
from .config import SceneConfig
from .errors import InstructionParseError, UnsatisfiableInstructionError, VocabularyError
from .evaluation import evaluate_scenes
from .graph_diffusion import KERNELS, KERNEL_INDEPENDENT, GuidanceConfig, schedule_to_json
from .instructions import parse_instruction
from .pipeline import GenerationConfig, ScenePipeline
from .scene_io import (
    dump_json,
    load_bundle,
    load_scenes,
    save_bundle,
    save_scenes,
)
from .svg_render import render_svg

ENV_SEED = "SCENEDIFF_SEED"


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"{ENV_SEED} must be an integer, got {env!r}")
    return 0


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UnsatisfiableInstructionError as exc:
            click.echo(f"unsatisfiable instruction [{exc.stage}]: {exc}", err=True)
            sys.exit(3)
        except (InstructionParseError, VocabularyError) as exc:
            raise click.UsageError(str(exc))

    return wrapper


def _sampling_options(fn):
    for opt in reversed((
        click.option("--graph-steps", type=int, default=100, show_default=True,
                     help="Diffusion steps for the graph stage."),
        click.option("--layout-steps", type=int, default=100, show_default=True,
                     help="Diffusion steps for the layout stage."),
        click.option("--kernel", type=click.Choice(KERNELS), default=KERNEL_INDEPENDENT,
                     show_default=True, help="Forward corruption kernel."),
        click.option("--leak", type=float, default=0.01, show_default=True,
                     help="Uniform label leak of the masking kernels."),
        click.option("--guidance-scale", type=float, default=0.0, show_default=True,
                     help="Classifier-free guidance strength."),
        click.option("--seed", type=int, default=None,
                     help=f"RNG seed; falls back to ${ENV_SEED}, then 0."),
    )):
        fn = opt(fn)
    return fn


def _pipeline(bundle_dir: str, graph_steps: int, layout_steps: int, kernel: str,
              leak: float, guidance_scale: float) -> ScenePipeline:
    bundle = load_bundle(Path(bundle_dir))
    gen = GenerationConfig(
        graph_steps=graph_steps,
        layout_steps=layout_steps,
        kernel=kernel,
        leak=leak,
        guidance=GuidanceConfig(scale=guidance_scale),
    )
    return ScenePipeline(bundle, gen)


def _pick_scene(path: str, index: int):
    scenes = load_scenes(path)
    if not 0 <= index < len(scenes):
        raise click.UsageError(f"scene index {index} outside 0..{len(scenes) - 1}")
    return scenes[index]


@click.group()
def main():
    """Instruction-driven scene synthesis with exact desk-scale models."""


@main.command("make-dataset")
@click.option("--out", required=True, type=click.Path(), help="Bundle directory to write.")
@click.option("--family", type=click.Choice(["toy", "random"]), default="toy",
              show_default=True)
@click.option("--n-scenes", type=int, default=50, show_default=True,
              help="Scene count for the random family.")
@click.option("--seed", type=int, default=None)
@_guarded
def make_dataset(out, family, n_scenes, seed):
    """Generate a dataset bundle with style-clustered features."""
    seed = _resolve_seed(seed)
    if family == "toy":
        bundle = toy_support(seed=seed)
    else:
        config = SceneConfig(
            category_names=("table", "chair", "lamp", "shelf", "sofa", "desk"),
            k_f=3,
            n_f=4,
            n_max=6,
            d=16,
            style_names=("oak", "walnut", "steel"),
        )
        bundle = generate_dataset(config, n_scenes, seed=seed)
    save_bundle(bundle, out)
    click.echo(f"wrote {bundle.n_scenes} scenes to {out}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--instruction", default=None, help="Instruction text; omit for unconditional.")
@click.option("--n", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_sampling_options
@_guarded
def generate(bundle_dir, instruction, n, out, graph_steps, layout_steps, kernel,
             leak, guidance_scale, seed):
    """Sample scenes, optionally conditioned on an instruction."""
    seed = _resolve_seed(seed)
    pipe = _pipeline(bundle_dir, graph_steps, layout_steps, kernel, leak, guidance_scale)
    rng = np.random.default_rng(seed)
    scenes = pipe.generate(instruction, rng=rng, n=n)
    save_scenes(scenes, out, meta={"seed": seed, "instruction": instruction})
    click.echo(f"wrote {len(scenes)} scenes to {out}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--n", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_sampling_options
@_guarded
def uncond(bundle_dir, n, out, graph_steps, layout_steps, kernel, leak,
           guidance_scale, seed):
    """Sample scenes from the unconditional prior."""
    seed = _resolve_seed(seed)
    pipe = _pipeline(bundle_dir, graph_steps, layout_steps, kernel, leak, guidance_scale)
    rng = np.random.default_rng(seed)
    scenes = pipe.unconditional(rng=rng, n=n)
    save_scenes(scenes, out, meta={"seed": seed})
    click.echo(f"wrote {len(scenes)} scenes to {out}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_path", required=True, type=click.Path(exists=True))
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--instruction", default=None)
@click.option("--out", required=True, type=click.Path())
@_sampling_options
@_guarded
def complete(bundle_dir, scenes_path, index, instruction, out, graph_steps,
             layout_steps, kernel, leak, guidance_scale, seed):
    """Extend a partial scene; existing objects are kept bit-identical."""
    seed = _resolve_seed(seed)
    pipe = _pipeline(bundle_dir, graph_steps, layout_steps, kernel, leak, guidance_scale)
    scene = _pick_scene(scenes_path, index)
    rng = np.random.default_rng(seed)
    result = pipe.complete(scene, instruction, rng=rng)
    save_scenes([result], out, meta={"seed": seed, "instruction": instruction})
    click.echo(f"wrote completed scene to {out}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_path", required=True, type=click.Path(exists=True))
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--instruction", default=None)
@click.option("--out", required=True, type=click.Path())
@_sampling_options
@_guarded
def rearrange(bundle_dir, scenes_path, index, instruction, out, graph_steps,
              layout_steps, kernel, leak, guidance_scale, seed):
    """Re-place the scene's objects; identities and sizes are preserved."""
    seed = _resolve_seed(seed)
    pipe = _pipeline(bundle_dir, graph_steps, layout_steps, kernel, leak, guidance_scale)
    scene = _pick_scene(scenes_path, index)
    rng = np.random.default_rng(seed)
    result = pipe.rearrange(scene, instruction, rng=rng)
    save_scenes([result], out, meta={"seed": seed, "instruction": instruction})
    click.echo(f"wrote rearranged scene to {out}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_path", required=True, type=click.Path(exists=True))
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--style", required=True, help="Style name from the bundle config.")
@click.option("--out", required=True, type=click.Path())
@_sampling_options
@_guarded
def stylize(bundle_dir, scenes_path, index, style, out, graph_steps, layout_steps,
            kernel, leak, guidance_scale, seed):
    """Restyle the scene's objects; geometry is preserved."""
    seed = _resolve_seed(seed)
    pipe = _pipeline(bundle_dir, graph_steps, layout_steps, kernel, leak, guidance_scale)
    scene = _pick_scene(scenes_path, index)
    rng = np.random.default_rng(seed)
    result = pipe.stylize(scene, style, rng=rng)
    save_scenes([result], out, meta={"seed": seed, "style": style})
    click.echo(f"wrote stylized scene to {out}")


@main.command("eval")
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_path", required=True, type=click.Path(exists=True))
@click.option("--instruction", required=True)
@click.option("--out", type=click.Path(), default=None, help="Optional JSON report path.")
@_guarded
def eval_cmd(bundle_dir, scenes_path, instruction, out):
    """Report instruction recall for saved scenes."""
    bundle = load_bundle(Path(bundle_dir))
    scenes = load_scenes(scenes_path)
    instr = parse_instruction(instruction, bundle.config)
    report = evaluate_scenes(scenes, instr, bundle.config, bundle.codebook,
                             text=instruction)
    click.echo(report.to_json())
    if out is not None:
        Path(out).write_text(report.to_json() + "\n")


@main.command("render-svg")
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_path", required=True, type=click.Path(exists=True))
@click.option("--index", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_guarded
def render_svg_cmd(bundle_dir, scenes_path, index, out):
    """Render one saved scene to a top-down SVG."""
    bundle = load_bundle(Path(bundle_dir))
    scene = _pick_scene(scenes_path, index)
    Path(out).write_text(render_svg(scene, bundle.config))
    click.echo(f"wrote {out}")


@main.command("schedule-dump")
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--kernel", type=click.Choice(KERNELS), default=KERNEL_INDEPENDENT,
              show_default=True)
@click.option("--leak", type=float, default=0.01, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Optional JSON path.")
@_guarded
def schedule_dump(bundle_dir, steps, kernel, leak, out):
    """Dump the per-kind schedule parameters and terminal checksums."""
    from .graph_diffusion import build_graph_schedule

    import json

    bundle = load_bundle(Path(bundle_dir))
    payload = schedule_to_json(build_graph_schedule(bundle.config, steps, kernel, leak=leak))
    if out is None:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        dump_json(payload, out)
        click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
