# app.py: thinlab command line
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import click
import msgspec
import numpy as np
import yaml

import config
from distcore import (
    Bernoulli, BernoulliSum, Binomial, CompoundPoisson, Empirical, FamilySpec,
    Geometric, NegativeBinomial, Pmf, PointMass, Poisson, read_pmf_file,
)
from errors import HypothesisViolation, ParameterDomainError, ResourceLimitError, ThinlabError
from harness import (
    ExperimentConfig, ExperimentReport, bounds_experiment, chain_experiment,
    classes_report, compound_experiment, ltn_iid, ltn_niid, rate_experiment, run,
)
from logs import jlog
from reports import preview, render, write_report


# ===== Exit codes =====
class DomainFailure(click.ClickException):
    exit_code = 1


class HypothesisFailure(click.ClickException):
    exit_code = 2


@contextmanager
def _guard(command: str):
    try:
        yield
    except HypothesisViolation as e:
        jlog("hypothesis_gate_failed", command=command, error=str(e))
        raise HypothesisFailure(str(e))
    except ResourceLimitError as e:
        jlog("resource_limit", command=command, error=str(e))
        raise DomainFailure(str(e))
    except (ThinlabError, msgspec.ValidationError, yaml.YAMLError) as e:
        jlog("bad_parameters", command=command, error=str(e))
        raise DomainFailure(str(e))


# ===== Parsing helpers =====
def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterDomainError(f"expected a comma list of numbers, got {text!r}")


def parse_family(text: str) -> FamilySpec:
    """`kind:a,b` → FamilySpec, e.g. poisson:2, binomial:2,0.5, compound_poisson:1;0,0.5,0.5."""
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "compound_poisson":
            lam, _, q = args.partition(";")
            return CompoundPoisson(float(lam), _floats(q))
        vals = _floats(args)
        if kind == "point":
            return PointMass(int(vals[0]))
        if kind == "bernoulli":
            return Bernoulli(vals[0])
        if kind == "binomial":
            return Binomial(int(vals[0]), vals[1])
        if kind == "geometric":
            return Geometric(vals[0])
        if kind == "negbin":
            return NegativeBinomial(vals[0], vals[1])
        if kind == "poisson":
            return Poisson(vals[0])
        if kind == "bernoulli_sum":
            return BernoulliSum(vals)
        if kind == "empirical":
            return Empirical(vals)
    except (IndexError, ValueError):
        raise ParameterDomainError(f"bad arguments for family {kind!r}: {args!r}")
    raise ParameterDomainError(f"unknown family {kind!r}")


def parse_int_grid(text: str) -> List[int]:
    """`1,2,4` and inclusive ranges `2..64` (mixable: `1..4,8,16`)."""
    out: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ParameterDomainError(f"bad integer grid {text!r}")
    if not out:
        raise ParameterDomainError("grid is empty")
    return out


def parse_float_grid(text: str) -> List[float]:
    """`0.1,0.5`, `lin:a:b:num` or `log:a:b:num` (base-10 exponents)."""
    head, _, rest = text.partition(":")
    if head in ("lin", "log"):
        try:
            a, b, num = rest.split(":")
            pts = (np.linspace if head == "lin" else np.logspace)(float(a), float(b), int(num))
        except ValueError:
            raise ParameterDomainError(f"bad grid {text!r}")
        return [float(v) for v in pts]
    vals = _floats(text)
    if not vals:
        raise ParameterDomainError("grid is empty")
    return vals


def _source(family: Optional[str], pmf_file: Optional[str]):
    if (family is None) == (pmf_file is None):
        raise ParameterDomainError("give exactly one of --family or --pmf-file")
    return parse_family(family) if family else read_pmf_file(pmf_file)


def _emit(report: ExperimentReport, out: Optional[str], fmt: str) -> None:
    if out:
        path = write_report(report, out, fmt)
        jlog("report_written", path=str(path), rows=len(report.rows), format=fmt)
        click.echo(preview(report))
    else:
        click.echo(render(report, fmt).decode("utf-8"), nl=False)


# ===== Shared options =====
def source_options(fn):
    fn = click.option("--pmf-file", type=click.Path(exists=True, dir_okay=False),
                      help="PMF JSON {\"probs\": [...], \"tail\": t}")(fn)
    fn = click.option("--family", help="family string, e.g. poisson:2 or binomial:2,0.5")(fn)
    return fn


def output_options(fn):
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                      show_default=True)(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), help="write the report here")(fn)
    fn = click.option("--eps-tail", type=float, default=config.EPS_TAIL, show_default=True)(fn)
    return fn


# ===== Commands =====
@click.group()
@click.option("--quiet", is_flag=True, help="silence JSON event logs on stderr")
@click.option("--workers", type=int, default=None, help="thread pool size for grid sweeps")
@click.pass_context
def cli(ctx: click.Context, quiet: bool, workers: Optional[int]):
    """Rényi thinning and laws of thin numbers, computed exactly."""
    if quiet:
        config.LOG_ENABLED = False
    ctx.obj = {"workers": workers}


@cli.command("ltn")
@source_options
@click.option("--n", "n_grid", required=True, help="n grid, e.g. 1..64 or 1,2,4,8")
@output_options
@click.pass_context
def ltn_cmd(ctx, family, pmf_file, n_grid, eps_tail, out, fmt):
    """Law of thin numbers for i.i.d. sums."""
    with _guard("ltn"):
        report = ltn_iid(_source(family, pmf_file), parse_int_grid(n_grid), eps_tail, ctx.obj["workers"])
        _emit(report, out, fmt)


@cli.command("ltn-niid")
@click.option("--family", "families", multiple=True, required=True,
              help="repeat to build the cycling pattern")
@click.option("--n", "n_grid", required=True)
@click.option("--lambda", "lam", type=float, default=None)
@click.option("--alpha-variant", is_flag=True, help="also thin by lambda / E(S_n)")
@output_options
@click.pass_context
def ltn_niid_cmd(ctx, families, n_grid, lam, alpha_variant, eps_tail, out, fmt):
    """Law of thin numbers for non-identical sums."""
    with _guard("ltn-niid"):
        pattern = [parse_family(f) for f in families]
        report = ltn_niid(pattern, parse_int_grid(n_grid), lam, alpha_variant, eps_tail, ctx.obj["workers"])
        _emit(report, out, fmt)


@cli.command("rate")
@source_options
@click.option("--n", "n_grid", required=True)
@output_options
@click.pass_context
def rate_cmd(ctx, family, pmf_file, n_grid, eps_tail, out, fmt):
    """n^kappa-scaled divergence against the kappa c^2 limit (ultra bounded laws)."""
    with _guard("rate"):
        report = rate_experiment(_source(family, pmf_file), parse_int_grid(n_grid), eps_tail, ctx.obj["workers"])
        _emit(report, out, fmt)


@cli.command("chain")
@source_options
@click.option("--lambda", "lam", type=float, default=None, help="chain target (default: mean of the law)")
@click.option("--t-grid", required=True, help="times, e.g. 0,0.5,1 or lin:0:7:15")
@output_options
@click.pass_context
def chain_cmd(ctx, family, pmf_file, lam, t_grid, eps_tail, out, fmt):
    """Chi-square decay along the Poisson-reverting chain."""
    with _guard("chain"):
        report = chain_experiment(_source(family, pmf_file), lam, parse_float_grid(t_grid),
                                  eps_tail, ctx.obj["workers"])
        _emit(report, out, fmt)


@cli.command("bounds")
@source_options
@click.option("--alpha-grid", required=True, help="alphas in (0,1], e.g. 0.1,0.5 or log:-3:0:7")
@output_options
@click.pass_context
def bounds_cmd(ctx, family, pmf_file, alpha_grid, eps_tail, out, fmt):
    """D(T_alpha P || Po) beside the closed-form bounds."""
    with _guard("bounds"):
        report = bounds_experiment(_source(family, pmf_file), parse_float_grid(alpha_grid),
                                   eps_tail, ctx.obj["workers"])
        _emit(report, out, fmt)


@cli.command("compound")
@source_options
@click.option("--compounder", required=True, help="masses of Q on 0..m, Q(0) = 0, e.g. 0,0.5,0.5")
@click.option("--n", "n_grid", required=True)
@output_options
@click.pass_context
def compound_cmd(ctx, family, pmf_file, compounder, n_grid, eps_tail, out, fmt):
    """Compound law of thin numbers against CPo(lambda, Q)."""
    with _guard("compound"):
        q = Pmf(_floats(compounder))
        report = compound_experiment(_source(family, pmf_file), q, parse_int_grid(n_grid),
                                     eps_tail, ctx.obj["workers"])
        _emit(report, out, fmt)


@cli.command("classes")
@source_options
@click.option("--lambda", "lam", type=float, default=None)
@click.option("--kmax", type=int, default=None)
@output_options
def classes_cmd(family, pmf_file, lam, kmax, eps_tail, out, fmt):
    """ULC / PB / UB certificates with witnesses."""
    with _guard("classes"):
        report = classes_report(_source(family, pmf_file), lam, kmax, eps_tail)
        _emit(report, out, fmt)


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="overrides `output` in the file")
@click.pass_context
def run_cmd(ctx, config_path, out):
    """Run one experiment described by a YAML file."""
    with _guard("run"):
        raw = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
        cfg = msgspec.convert(raw, ExperimentConfig)
        report = run(cfg, ctx.obj["workers"])
        _emit(report, out or cfg.output, cfg.format)


def main():
    cli(prog_name="thinlab")


if __name__ == "__main__":
    main()
