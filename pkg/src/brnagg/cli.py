"""Command-line interface: ``brnagg <command> --help`` lists the options.

Exit status is 0 on success, 1 when the computation or I/O fails and 2 on a
usage error (bad flag, malformed aggregator, lambda out of range).
"""
from __future__ import annotations

import io
import json
from fractions import Fraction

import click

from . import __version__
from .aggregators import format_spec, parse_spec
from .bounds import lower_bound, single_trough_check
from .empirical import (
    classification_table,
    estimate_lambdas,
    evaluate,
    load_dataset,
    synth_generate,
    write_dataset,
)
from .errors import SpecParseError, SpecRangeError
from .regret import TENTHS, OptimizerConfig, overall_from_curve, regret_curve
from .tables import read_table, render_table

CURVE_COLUMNS = ["lambda", "regret", "mu", "alpha1", "beta1", "alpha2", "beta2", "skipped"]


# ---------------------------------------------------------------------------
# parameter types


class AggregatorType(click.ParamType):
    name = "aggregator"

    def convert(self, value, param, ctx):
        if not isinstance(value, str):
            return value
        try:
            return parse_spec(value)
        except (SpecParseError, SpecRangeError) as exc:
            self.fail(str(exc), param, ctx)


class LambdaGridType(click.ParamType):
    """``start:end:step`` (end inclusive), a comma list, or a single value."""

    name = "lambdas"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        text = str(value).strip()
        try:
            if ":" in text:
                parts = text.split(":")
                if len(parts) != 3:
                    raise ValueError("range must be start:end:step")
                start, end, step = (Fraction(p.strip()) for p in parts)
                if step <= 0 or end < start:
                    raise ValueError("range needs step > 0 and end >= start")
                n = (end - start) / step
                if n.denominator != 1:
                    raise ValueError("step must divide end - start")
                grid = [float(start + k * step) for k in range(int(n) + 1)]
            else:
                grid = [float(p) for p in text.split(",") if p.strip()]
        except (ValueError, ZeroDivisionError) as exc:
            self.fail(f"cannot parse {text!r}: {exc}", param, ctx)
        if not grid:
            self.fail("empty lambda grid", param, ctx)
        bad = [x for x in grid if not 0.0 <= x <= 1.0]
        if bad:
            self.fail(f"lambda values must lie in [0, 1], got {bad[0]!r}", param, ctx)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            self.fail("lambda values must be strictly increasing", param, ctx)
        return tuple(grid)


AGGREGATOR = AggregatorType()
LAMBDAS = LambdaGridType()


# ---------------------------------------------------------------------------
# shared plumbing


class Group(click.Group):
    """Maps library exceptions onto the exit-code contract."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except (SpecParseError, SpecRangeError) as exc:
            raise click.UsageError(str(exc), ctx) from exc
        except (OSError, ValueError, ArithmeticError) as exc:
            if ctx.obj and ctx.obj.get("json_errors"):
                click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
                ctx.exit(1)
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


def _emit(text, out):
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _base_config(command, **extra):
    cfg = {"command": command, "version": __version__}
    cfg.update(extra)
    return cfg


def optimizer_options(f):
    defaults = OptimizerConfig(threads=1)
    opts = [
        click.option("--grid-step", type=float, default=defaults.grid_step, show_default=True,
                     help="Spacing of the coarse scan over each coordinate."),
        click.option("--restarts", type=int, default=defaults.restarts, show_default=True,
                     help="Best grid cells refined by Nelder-Mead."),
        click.option("--random-starts", type=int, default=defaults.random_starts, show_default=True),
        click.option("--local-iters", type=int, default=defaults.local_iters, show_default=True),
        click.option("--boundary-eps", type=float, default=defaults.boundary_eps, show_default=True),
        click.option("--seed", type=int, default=defaults.seed, show_default=True),
        click.option("--threads", type=click.IntRange(min=1), default=None,
                     help="Worker threads (default: BRNAGG_THREADS or 1). Does not change results."),
        click.option("--backend", type=click.Choice(["cython", "python"]), default=None,
                     help="Search kernels (default: compiled when available)."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def output_options(f):
    f = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write here instead of stdout.")(f)
    f = click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of CSV.")(f)
    return f


def _optimizer(lambdas, grid_step, restarts, random_starts, local_iters, boundary_eps, seed, threads):
    kw = dict(
        grid_step=grid_step,
        restarts=restarts,
        random_starts=random_starts,
        local_iters=local_iters,
        boundary_eps=boundary_eps,
        seed=seed,
        lambda_grid=lambdas,
    )
    if threads is not None:
        kw["threads"] = threads
    try:
        return OptimizerConfig(**kw)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


def _curve_rows(curve):
    rows = []
    for lam, v, w, sk in zip(curve.lambdas, curve.values, curve.witnesses, curve.skipped):
        mu, a1, b1, a2, b2 = w.as_tuple()
        rows.append(
            {"lambda": lam, "regret": v, "mu": mu, "alpha1": a1, "beta1": b1, "alpha2": a2, "beta2": b2, "skipped": sk}
        )
    return rows


# ---------------------------------------------------------------------------
# commands


@click.group(cls=Group)
@click.version_option(__version__, prog_name="brnagg")
@click.option("--json-errors", is_flag=True, help="Report runtime failures as a JSON object on stderr.")
@click.pass_context
def cli(ctx, json_errors):
    """Worst-case regret of forecast aggregators under base-rate neglect."""
    ctx.ensure_object(dict)
    ctx.obj["json_errors"] = json_errors


@cli.command()
@click.option("--aggregator", "spec", type=AGGREGATOR, required=True,
              help="simple-average, average-prior or balance:<lambda_hat>.")
@click.option("--lambda", "lambdas", type=LAMBDAS, default=",".join(map(str, TENTHS)), show_default=True,
              help="Consideration degrees: start:end:step or a comma list.")
@optimizer_options
@output_options
def regret(spec, lambdas, grid_step, restarts, random_starts, local_iters, boundary_eps, seed, threads,
           backend, as_json, out):
    """Worst-case regret curve of an aggregator with the structure attaining it."""
    cfg = _optimizer(lambdas, grid_step, restarts, random_starts, local_iters, boundary_eps, seed, threads)
    curve = regret_curve(spec, cfg, backend=backend)
    config = _base_config("regret", aggregator=format_spec(spec), optimizer=cfg.to_dict())
    _emit(render_table(_curve_rows(curve), CURVE_COLUMNS, config, fmt="json" if as_json else "csv"), out)


@cli.command("lower-bound")
@click.option("--lambda", "lambdas", type=LAMBDAS, default=",".join(map(str, TENTHS)), show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True, help="Keep gamma within [eps, 1/2 - eps].")
@output_options
def lower_bound_cmd(lambdas, eps, as_json, out):
    """Analytic lower bound on the regret of any aggregator."""
    rows = []
    for lam in lambdas:
        v, g = lower_bound(lam, eps)
        rows.append({"lambda": lam, "lower_bound": v, "gamma": g})
    k = min(range(len(rows)), key=lambda i: (rows[i]["lower_bound"], i))
    result = {"trough_lambda": rows[k]["lambda"], "trough_value": rows[k]["lower_bound"]}
    config = _base_config("lower-bound", lambdas=list(lambdas), eps=eps)
    text = render_table(rows, ["lambda", "lower_bound", "gamma"], config, result, "json" if as_json else "csv")
    _emit(text, out)


@cli.command()
@click.option("--aggregator", "spec", type=AGGREGATOR, required=True)
@click.option("--lambda", "lambdas", type=LAMBDAS, default=",".join(map(str, TENTHS)), show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True, help="Lower-bound boundary margin.")
@optimizer_options
@output_options
def overall(spec, lambdas, eps, grid_step, restarts, random_starts, local_iters, boundary_eps, seed, threads,
            backend, as_json, out):
    """Largest gap between the regret curve and the lower bound."""
    cfg = _optimizer(lambdas, grid_step, restarts, random_starts, local_iters, boundary_eps, seed, threads)
    curve = regret_curve(spec, cfg, backend=backend)
    value, at, gaps = overall_from_curve(curve, eps)
    rows = [
        {"lambda": lam, "regret": v, "lower_bound": v - g, "gap": g}
        for lam, v, g in zip(curve.lambdas, curve.values, gaps)
    ]
    config = _base_config("overall", aggregator=format_spec(spec), eps=eps, optimizer=cfg.to_dict())
    result = {"overall_regret_upper": value, "at_lambda": at}
    text = render_table(rows, ["lambda", "regret", "lower_bound", "gap"], config, result,
                        "json" if as_json else "csv")
    _emit(text, out)


@cli.command("curve-check")
@click.argument("curve_file", type=click.Path(dir_okay=False))
@click.option("--tol", type=float, default=2e-3, show_default=True, help="Allowed step against the trough shape.")
@click.option("--bound-slack", type=float, default=1e-6, show_default=True,
              help="Allowed shortfall below the lower bound.")
@click.option("--eps", type=float, default=1e-6, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def curve_check(curve_file, tol, bound_slack, eps, as_json):
    """Check a saved regret curve is single-troughed and above the lower bound.

    Exits 1 when either check fails.
    """
    _, _, rows = read_table(curve_file)
    if not rows:
        raise ValueError(f"{curve_file}: no curve rows")
    lambdas = [float(r["lambda"]) for r in rows]
    values = [float(r["regret"]) for r in rows]
    report = single_trough_check(values, tol)
    below = [
        {"lambda": lam, "regret": v, "lower_bound": lb}
        for lam, v in zip(lambdas, values)
        for lb in [lower_bound(lam, eps)[0]]
        if v < lb - bound_slack
    ]
    result = {
        "single_trough": report.ok,
        "trough_lambda": lambdas[report.trough_index] if report.ok else None,
        "violations": [{"lambda": lambdas[i], "step": s} for i, s in report.violations],
        "below_lower_bound": below,
        "tol": tol,
        "bound_slack": bound_slack,
    }
    if as_json:
        click.echo(json.dumps(result, indent=2))
    else:
        click.echo(f"single-trough: {'pass' if report.ok else 'FAIL'}"
                   + (f" (trough at lambda={result['trough_lambda']})" if report.ok else ""))
        for v in result["violations"]:
            click.echo(f"  step after lambda={v['lambda']}: {v['step']:+.3g}")
        click.echo(f"above lower bound: {'pass' if not below else 'FAIL'}")
        for b in below:
            click.echo(f"  lambda={b['lambda']}: {b['regret']!r} < {b['lower_bound']!r}")
    if not report.ok or below:
        click.get_current_context().exit(1)


# ---------------------------------------------------------------------------
# empirical pipeline


@cli.group(cls=Group)
def empirical():
    """Analyses of elicited predictions (CSV input)."""


DATA = click.option("--data", type=click.Path(dir_okay=False), required=True, help="Prediction dataset (CSV).")


@empirical.command()
@click.option("--subjects", type=click.IntRange(min=1), required=True)
@click.option("--lambda", "lam", type=float, required=True, help="True consideration degree of every subject.")
@click.option("--cases-per-subject", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--noise", type=click.FloatRange(min=0.0), default=0.0, show_default=True,
              help="Std. dev. of Gaussian noise on the log-odds scale.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def synth(subjects, lam, cases_per_subject, noise, seed, out):
    """Generate a synthetic dataset of base-rate-neglecting subjects."""
    records = synth_generate(subjects, lam, cases_per_subject, noise, seed)
    buf = io.StringIO()
    write_dataset(records, buf)
    _emit(buf.getvalue(), out)


@empirical.command()
@DATA
@output_options
def classify(data, as_json, out):
    """Label proportions per round and signal (prior of one half excluded)."""
    rows = classification_table(load_dataset(data))
    overall_rows = {r["label"]: r["proportion"] for r in rows if r["round"] == "all" and r["signal"] == "all"}
    config = _base_config("empirical classify", data=str(data))
    result = {"overall": overall_rows}
    text = render_table(rows, ["round", "signal", "label", "count", "n", "proportion"], config, result,
                        "json" if as_json else "csv")
    _emit(text, out)


@empirical.command("lambda")
@DATA
@click.option("--clamp", type=click.FloatRange(0.0, 0.5, min_open=True, max_open=True), default=None,
              help="Pull 0%/100% reports to [clamp, 1-clamp] instead of dropping them.")
@output_options
def lambda_cmd(data, clamp, as_json, out):
    """Per-subject consideration degree by least squares on log-odds."""
    estimates, failures = estimate_lambdas(load_dataset(data), clamp)
    rows = [
        {"subject_id": e.subject_id, "lambda_hat": e.lambda_hat, "beta_hat": e.beta_hat,
         "n_rounds_used": e.n_rounds_used}
        for e in estimates
    ]
    config = _base_config("empirical lambda", data=str(data), clamp=clamp)
    result = {"estimated": len(rows), "failed": failures} if failures else None
    text = render_table(rows, ["subject_id", "lambda_hat", "beta_hat", "n_rounds_used"], config, result,
                        "json" if as_json else "csv")
    _emit(text, out)


DEFAULT_SPECS = ("simple-average", "average-prior") + tuple(f"balance:0.{k}" for k in range(1, 10))


@empirical.command("eval")
@DATA
@click.option("--aggregator", "specs", type=AGGREGATOR, multiple=True,
              help="Repeatable; defaults to simple-average, average-prior and balance:0.1 ... balance:0.9.")
@click.option("--bayesian-posteriors", is_flag=True, help="Replace reports by rounded Bayesian posteriors first.")
@click.option("--subsample", is_flag=True, help="Also report losses per four-report composition bucket.")
@click.option("--per-aggregator-exclusion", is_flag=True,
              help="Drop undefined subject pairs per aggregator rather than for all aggregators.")
@click.option("--table", type=click.Path(dir_okay=False), default=None,
              help="Also write the per-case-pair loss table here (CSV).")
@output_options
def eval_cmd(data, specs, bayesian_posteriors, subsample, per_aggregator_exclusion, table, as_json, out):
    """Average relative loss of aggregators on pairs of cases sharing a prior."""
    specs = list(specs) or [parse_spec(s) for s in DEFAULT_SPECS]
    tab, summary, buckets = evaluate(
        load_dataset(data),
        specs,
        bayesian=bayesian_posteriors,
        subsample=subsample,
        common_exclusion=not per_aggregator_exclusion,
        per_structure=table is not None,
    )
    config = _base_config(
        "empirical eval",
        data=str(data),
        aggregators=[format_spec(s) for s in specs],
        bayesian_posteriors=bayesian_posteriors,
        common_exclusion=not per_aggregator_exclusion,
    )
    fmt = "json" if as_json else "csv"
    cols = ["aggregator", "avg_loss", "max_loss", "structures", "pairs_used", "pairs_excluded"]
    bcols = ["aggregator", "bucket", "avg_loss", "structures"]
    if fmt == "json":
        result = {"subsample": [{c: b[c] for c in bcols} for b in buckets]} if subsample else None
        text = render_table(summary, cols, config, result, fmt)
    else:
        text = render_table(summary, cols, config)
        if subsample:
            text += "\n" + render_table(buckets, bcols, dict(config, section="subsample"))
    _emit(text, out)
    if table is not None:
        tcols = ["aggregator", "mu", "p_le_1", "p_ri_1", "p_le_2", "p_ri_2", "loss", "pairs_used", "pairs_excluded"]
        with open(table, "w", encoding="utf-8", newline="") as fh:
            fh.write(render_table(tab, tcols, config))


def main(argv=None):
    """Console entry point."""
    return cli.main(args=argv, prog_name="brnagg")


if __name__ == "__main__":  # pragma: no cover
    main()
