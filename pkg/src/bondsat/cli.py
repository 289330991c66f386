"""Command-line interface for bondsat.

Exit status: 0 on success, 1 on structural errors (unreadable input, bad
rules, invalid configuration), 2 when the optimized circuit fails
verification.
"""

import json
from pathlib import Path

import click

from .circuit import stats
from .components.optimizer import run
from .config import EMIT_CHOICES, PipelineConfig, Settings, configure_logging
from .equivalence import DEFAULT_SEED, check_equivalence, exhaustive_allowed
from .errors import BondsatError
from .netlist import parse_circuit

EXISTING_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)


def _seed(ctx, param, value):
    if value is None:
        return DEFAULT_SEED
    try:
        return int(value, 0)
    except ValueError:
        raise click.BadParameter(f"{value!r} is not an integer") from None


def _emit(ctx, param, value):
    targets = frozenset(t.strip() for t in value.split(",") if t.strip())
    unknown = sorted(targets - set(EMIT_CHOICES))
    if unknown:
        raise click.BadParameter(
            f"unknown target {unknown[0]!r}; choose from {', '.join(EMIT_CHOICES)}"
        )
    return targets


def _fail(ctx: click.Context, error: Exception) -> None:
    click.echo(f"Error: {error}", err=True)
    ctx.exit(1)


@click.group()
@click.pass_context
def main(ctx: click.Context):
    """bondsat: ALU extraction for combinational circuits by equality saturation."""
    try:
        settings = Settings()
    except BondsatError as e:
        _fail(ctx, e)
    configure_logging(settings.log_level)
    ctx.obj = settings


@main.command()
@click.argument("circuit", type=EXISTING_FILE)
@click.option("--rules", type=EXISTING_FILE, help="Rule file; default: built-in rules.")
@click.option("--costs", type=EXISTING_FILE, help="Cost model file.")
@click.option("--iters", type=click.IntRange(min=1), help="Saturation iteration limit.")
@click.option("--nodes", type=click.IntRange(min=1), help="E-node limit.")
@click.option("--millis", type=click.IntRange(min=1), help="Saturation time limit.")
@click.option(
    "--check",
    type=click.Choice(["auto", "exhaustive", "random"]),
    default="auto",
    show_default=True,
    help="Equivalence check mode.",
)
@click.option("--samples", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", callback=_seed, help="Random-check seed (default 0xB04D).")
@click.option(
    "--emit",
    default="stats",
    show_default=True,
    callback=_emit,
    help="Comma-separated artifacts: dot-egraph, dot-circuit, stats.",
)
@click.option(
    "--out",
    "out_prefix",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Artifact prefix; default: the input path without its suffix.",
)
@click.pass_context
def optimize(
    ctx, circuit, rules, costs, iters, nodes, millis, check, samples, seed, emit,
    out_prefix,
):
    """Optimize CIRCUIT and verify the result."""
    settings: Settings = ctx.obj
    try:
        limits = settings.limits
        config = PipelineConfig(
            input_path=circuit,
            out_prefix=out_prefix or circuit.with_suffix(""),
            rules_path=rules,
            costs_path=costs,
            limits=type(limits)(
                iters=iters or limits.iters,
                nodes=nodes or limits.nodes,
                millis=millis or limits.millis,
            ),
            check=check,
            samples=samples,
            seed=seed,
            emit=emit,
        )
        status = run(config)
    except (BondsatError, OSError) as e:
        _fail(ctx, e)
    equivalence = config.artifact(".equiv.txt").read_text(encoding="utf-8")
    click.echo(equivalence.splitlines()[0])
    click.echo(f"wrote {config.artifact('.opt.circuit')}")
    ctx.exit(status)


@main.command()
@click.argument("left", type=EXISTING_FILE)
@click.argument("right", type=EXISTING_FILE)
@click.option(
    "--check",
    type=click.Choice(["auto", "exhaustive", "random"]),
    default="auto",
    show_default=True,
)
@click.option("--samples", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", callback=_seed, help="Random-check seed (default 0xB04D).")
@click.pass_context
def check(ctx, left, right, check, samples, seed):
    """Check that LEFT and RIGHT compute the same outputs."""
    try:
        a = parse_circuit(left.read_text(encoding="utf-8"))
        b = parse_circuit(right.read_text(encoding="utf-8"))
        config = PipelineConfig(left, left, check=check, samples=samples, seed=seed)
        report = check_equivalence(a, b, config.check_mode(exhaustive_allowed(a)))
    except (BondsatError, OSError) as e:
        _fail(ctx, e)
    click.echo(report.render(), nl=False)
    ctx.exit(0 if report.equal else 2)


@main.command("stats")
@click.argument("circuit", type=EXISTING_FILE)
@click.pass_context
def stats_command(ctx, circuit):
    """Print operator counts of CIRCUIT as JSON."""
    try:
        parsed = parse_circuit(circuit.read_text(encoding="utf-8"))
    except (BondsatError, OSError) as e:
        _fail(ctx, e)
    click.echo(json.dumps(stats(parsed).to_dict(), sort_keys=True, indent=2))


if __name__ == "__main__":
    main()
