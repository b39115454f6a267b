"""Command-line front end: run sweeps, render figures, revalidate designs."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .channel import Scenario
from .harness import (ALGORITHMS, AXES, FIGURES, ExperimentSpec, emit_plot,
                      load_scenario, run_experiment, validate_robustness,
                      write_outputs)


@click.group()
def main():
    """Secrecy-rate optimization for reflecting-surface downlinks."""


def _parse_sweep(sweep: str | None) -> tuple[str, tuple]:
    if sweep is None:
        return "none", ()
    axis, sep, rest = sweep.partition("=")
    axis = axis.strip()
    if not sep or not rest.strip():
        raise click.BadParameter("expected <axis>=<v1,v2,...>",
                                 param_hint="--sweep")
    if axis not in AXES or axis == "none":
        raise click.BadParameter(f"unknown sweep axis {axis!r}",
                                 param_hint="--sweep")
    try:
        values = tuple(float(v) for v in rest.split(","))
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--sweep")
    return axis, values


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True),
              default=None, help="Scenario file; defaults apply if omitted.")
@click.option("--sweep", default=None,
              help="Sweep axis and values, e.g. delta=0.0,0.02,0.05.")
@click.option("--algos", default="maxmin-fbr",
              help="Comma-separated list from: " + ", ".join(ALGORITHMS))
@click.option("--csi", type=click.Choice(["perfect", "robust"]),
              default="perfect", show_default=True)
@click.option("--seeds", type=int, default=1, show_default=True,
              help="Independent channel realizations per axis value.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for records.csv, traces.csv, designs.")
def run(scenario_path, sweep, algos, csi, seeds, out_dir):
    """Run a sweep and persist records, traces, and robust designs."""
    base = load_scenario(scenario_path) if scenario_path else Scenario()
    axis, values = _parse_sweep(sweep)
    algorithms = tuple(a.strip() for a in algos.split(",") if a.strip())
    try:
        spec = ExperimentSpec(base=base, axis=axis, values=values,
                              algorithms=algorithms, csi=csi, seeds=seeds,
                              out_dir=out_dir)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    outputs = run_experiment(spec)
    out = write_outputs(spec, outputs)
    ok = True
    for o in outputs:
        rec = o.record
        line = (f"{rec.algorithm} {spec.axis}={rec.axis_value:g} "
                f"seed={rec.seed}: {rec.status}, "
                f"min-SR {rec.min_sr_bps:.4f} bits/s/Hz "
                f"({rec.iterations} iterations)")
        click.echo(line)
        ok = ok and rec.status == "Converged"
    click.echo(f"wrote {out / 'records.csv'}")
    sys.exit(0 if ok else 1)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="records.csv (traces.csv for the convergence figure).")
@click.option("--fig", "figure", required=True,
              type=click.Choice(list(FIGURES)))
@click.option("--out", "out_path", required=True, type=click.Path())
def plot(in_path, figure, out_path):
    """Render one figure from a finished sweep."""
    try:
        emit_plot(in_path, figure, out_path)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--in", "in_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Sweep output directory holding robust design files.")
@click.option("--samples", type=int, default=1000, show_default=True,
              help="Sampled in-ball errors per node.")
def validate(in_dir, samples):
    """Check stored robust designs against sampled channel errors."""
    designs = sorted(Path(in_dir).glob("robust_*.npz"))
    if not designs:
        click.echo(f"no robust design files under {in_dir}")
        sys.exit(1)
    ok = True
    for i, path in enumerate(designs):
        rng = np.random.default_rng(i)
        passed, _, message = validate_robustness(path, samples, rng)
        click.echo(f"{path.name}: {message}")
        ok = ok and passed
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
