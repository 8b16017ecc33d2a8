"""Command line front door: one config file drives the whole pipeline."""

from __future__ import annotations

import dataclasses
import json
import sys

import click

from mclab import pipeline
from mclab.errors import MclabError
from mclab.synth import synthesize


def _load_config(config_path: str, seed, out) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.load(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if out is not None:
        cfg = dataclasses.replace(cfg, out_dir=out)
    return cfg


def _run(stage, config, seed, out):
    try:
        cfg = _load_config(config, seed, out)
        summary = stage(cfg)
    except MclabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


def _stage_command(name: str, stage, help_text: str):
    @click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    @click.option("--out", type=click.Path(file_okay=False), default=None, help="Override the output directory.")
    def command(config, seed, out):
        _run(stage, config, seed, out)

    command.__name__ = name
    command.__doc__ = help_text
    return click.command(name=name)(command)


@click.group()
def main():
    """Mode choice modeling pipeline: constrained choice sets from travel
    surveys and transit schedules, then multinomial logit estimation."""


main.add_command(_stage_command("ingest", pipeline.run_ingest, "Parse survey files and build tours."))
main.add_command(_stage_command("split", pipeline.run_split, "Assign households to train/test buckets."))
main.add_command(_stage_command("altgen", pipeline.run_altgen, "Generate the 8 alternatives per trip."))
main.add_command(_stage_command("choicesets", pipeline.run_choicesets, "Apply constraints and export choice sets."))
main.add_command(_stage_command("analyze", pipeline.run_analyze, "Emit the descriptive reports."))
main.add_command(_stage_command("estimate", pipeline.run_estimate, "Fit the logit on the training bucket."))


@main.command(name="apply")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--observations", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Score this observation file instead of the pipeline artifact.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
def apply_cmd(config, observations, out):
    """Score observations with the configured preset."""
    _run(lambda cfg: pipeline.run_apply(cfg, observations), config, None, out)


@main.command(name="simulate")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--observations", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def simulate_cmd(config, observations, seed, out):
    """Draw seeded choices from the configured preset."""
    _run(lambda cfg: pipeline.run_simulate(cfg, observations), config, seed, out)


@main.command(name="synth")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--households", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Coefficient table generating the choices (default: shipped 8-parameter table).")
def synth_cmd(out, households, seed, truth):
    """Generate a synthetic survey + feeds fixture with known coefficients."""
    try:
        summary = synthesize(out, n_households=households, seed=seed, truth_path=truth)
    except MclabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(summary.to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
