"""Command-line front end.

A thin client over the service layer: every command builds the same
pydantic request the HTTP API accepts and dispatches it either in-process
(default) or to a running server (``--server URL``). File output happens
client-side, so remote and local runs produce identical artifacts.

Exit codes: 0 all validations pass, 2 validation failures (bad spec or
failed report checks / audit errors), 1 execution error.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import os
import sys

import click
import httpx

from .confident import pairs_csv
from .errors import PolyakFMError, SpecValidationError
from .experiments import ExperimentReportModel, rows_csv_text, validate_spec
from .service import ROUTES, schemas
from .solver import trace_csv


class LocalClient:
    """Dispatches requests straight to the service handlers."""

    def call(self, path, request):
        handler, _ = ROUTES[path]
        return handler(request).model_dump()


class HttpClient:
    def __init__(self, base_url):
        self.base_url = base_url.rstrip("/")

    def call(self, path, request):
        response = httpx.post(
            self.base_url + path, json=request.model_dump(mode="json"), timeout=600.0
        )
        if response.status_code >= 400:
            try:
                detail = json.dumps(response.json(), indent=2)
            except ValueError:
                detail = response.text
            raise click.ClickException(f"server returned {response.status_code}:\n{detail}")
        return response.json()


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SpecValidationError as err:
            for item in err.errors:
                click.echo(f"spec error at {item['path']}: {item['message']}", err=True)
            sys.exit(2)
        except (PolyakFMError, ValueError, OSError) as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(1)

    return wrapper


def _load_problem_document(path):
    with open(path) as fh:
        return schemas.ProblemDocument.model_validate(json.load(fh))


def _parse_vector(text):
    return [float(part) for part in text.split(",") if part.strip()]


def _write_json(data, path):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


@click.group()
@click.option("--server", default=None, envvar="POLYAKFM_SERVER", metavar="URL",
              help="Send requests to a running service instead of executing in-process.")
@click.pass_context
def main(ctx, server):
    """Stochastic convex feasibility toolkit."""
    ctx.obj = HttpClient(server) if server else LocalClient()


@main.command()
@click.option("--kind", type=click.Choice(["linear", "quadratic", "interval"]), required=True)
@click.option("--n", type=int, default=2, show_default=True, help="Dimension.")
@click.option("--m", type=int, default=10, show_default=True, help="Constraint count.")
@click.option("--sharpness", type=float, default=1.0, show_default=True,
              help="Margin-spread knob for linear systems, in (0, 1].")
@click.option("--tight-fraction", type=float, default=0.5, show_default=True,
              help="Share of tight balls in quadratic systems.")
@click.option("--dist", type=float, default=4.0, show_default=True,
              help="Exact starting distance to the feasible set.")
@click.option("--interior-radius", type=float, default=None,
              help="Feasible interior ball radius (default 0.5 linear, 1.0 quadratic).")
@click.option("--x0", "x0_scalar", type=float, default=5.0, show_default=True,
              help="Starting point for interval problems.")
@click.option("--half-width", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Problem file to write.")
@click.pass_obj
@_guard
def gen(client, kind, n, m, sharpness, tight_fraction, dist, interior_radius, x0_scalar,
        half_width, seed, out):
    """Generate a problem file with ground-truth metadata."""
    if kind == "linear":
        generator = {
            "kind": "linear", "n": n, "m": m, "sharpness": sharpness, "dist": dist,
            "interior_radius": 0.5 if interior_radius is None else interior_radius,
            "seed": seed,
        }
    elif kind == "quadratic":
        generator = {
            "kind": "quadratic", "n": n, "m": m, "tight_fraction": tight_fraction,
            "dist": dist,
            "interior_radius": 1.0 if interior_radius is None else interior_radius,
            "seed": seed,
        }
    else:
        generator = {"kind": "interval", "x0": x0_scalar, "half_width": half_width}
    request = schemas.GenerateRequest.model_validate({"generator": generator})
    result = client.call("/problems/generate", request)
    document = schemas.ProblemDocument.model_validate(result["problem"])
    _write_json(document.model_dump(exclude_none=True), out)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--problem", "problem_path", type=click.Path(exists=True), required=True)
@click.option("--solver", "solver_kind", type=click.Choice(["pfm", "confident"]), default="pfm",
              show_default=True)
@click.option("--batch-size", "-L", type=int, default=1, show_default=True)
@click.option("--gamma", type=float, default=0.1, show_default=True,
              help="Coverage deficit (confident solver).")
@click.option("--alpha", type=float, default=0.05, show_default=True,
              help="Allowed probability of any certification error (confident solver).")
@click.option("--delta", type=float, default=1.0, show_default=True,
              help="Step extrapolation factor in (0, 2).")
@click.option("--replacement", type=click.Choice(["with", "without"]), default="with",
              show_default=True)
@click.option("--max-iters", type=int, default=1000, show_default=True)
@click.option("--residual-target", type=float, default=None)
@click.option("--coverage-eps", type=float, default=None,
              help="Stop when exact coverage at this level reaches 1 - coverage-gamma.")
@click.option("--coverage-gamma", type=float, default=None)
@click.option("--check-every", type=int, default=1, show_default=True)
@click.option("--x0", "x0_text", default=None, metavar="V1,V2,...",
              help="Override the problem file's starting point.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.pass_obj
@_guard
def solve(client, problem_path, solver_kind, batch_size, gamma, alpha, delta, replacement,
          max_iters, residual_target, coverage_eps, coverage_gamma, check_every, x0_text,
          seed, out_dir, fmt):
    """Run one solve and write its trace (and certified pairs)."""
    problem = _load_problem_document(problem_path)
    coverage_stop = None
    if coverage_eps is not None:
        if coverage_gamma is None:
            raise click.UsageError("--coverage-eps needs --coverage-gamma")
        coverage_stop = {"eps": coverage_eps, "gamma": coverage_gamma,
                         "check_every": check_every}
    common = {"delta": delta, "max_iters": max_iters, "residual_target": residual_target,
              "coverage_stop": coverage_stop}
    if solver_kind == "pfm":
        solver = {"kind": "pfm",
                  "config": {"batch_size": batch_size, "replacement": replacement, **common}}
    else:
        solver = {"kind": "confident", "config": {"gamma": gamma, "alpha": alpha, **common}}
    request = schemas.SolveRequest.model_validate(
        {
            "problem": problem.model_dump(exclude_none=True),
            "solver": solver,
            "seed": seed,
            "x0": None if x0_text is None else _parse_vector(x0_text),
        }
    )
    result = client.call("/solve", request)
    os.makedirs(out_dir, exist_ok=True)
    config_path = os.path.join(out_dir, "solve_config.json")
    _write_json(
        {"solver": request.solver.model_dump(), "seed": request.seed,
         "x0": request.x0, "problem_file": problem_path},
        config_path,
    )
    if fmt == "csv":
        trace_path = os.path.join(out_dir, "trace.csv")
        rows = [(r["k"], r["residual"], r["moved"]) for r in result["trace"] or []]
        with open(trace_path, "w", newline="") as fh:
            fh.write(trace_csv(rows, result["stop_reason"]))
        written = [trace_path, config_path]
        if result.get("pairs"):
            pairs_path = os.path.join(out_dir, "pairs.csv")
            with open(pairs_path, "w", newline="") as fh:
                fh.write(pairs_csv((p["k"], p["eps"], p["batch_size"]) for p in result["pairs"]))
            pairs_json = os.path.join(out_dir, "pairs.json")
            _write_json(result["pairs"], pairs_json)
            written += [pairs_path, pairs_json]
    else:
        solve_path = os.path.join(out_dir, "solve.json")
        _write_json(result, solve_path)
        written = [solve_path, config_path]
        if result.get("pairs"):
            pairs_json = os.path.join(out_dir, "pairs.json")
            _write_json(result["pairs"], pairs_json)
            written.append(pairs_json)
    click.echo(
        f"{result['stop_reason']} after {result['iterations']} iterations "
        f"({result['moves']} moves, {result['cumulative_samples']} samples); "
        f"wrote {', '.join(written)}"
    )


_BOUNDS_COLUMNS = [
    "lipschitz", "dist0", "eps", "gamma", "batch_size", "p", "deterministic_budget",
    "expected_iterations", "expected_iterations_growth", "confident_basic",
    "confident_growth", "concentration_tail",
]


@main.command()
@click.option("--lipschitz", "-M", type=float, required=True)
@click.option("--dist0", type=float, required=True,
              help="Starting distance to the feasible set (or an upper bound).")
@click.option("--eps", type=float, required=True)
@click.option("--gamma", type=float, required=True)
@click.option("--batch-size", "-L", type=int, default=1, show_default=True)
@click.option("--mu", type=float, default=None, help="Growth constant.")
@click.option("--degree", type=float, default=None, help="Growth degree (>= 1).")
@click.option("--delta-mass", type=float, default=None, help="Growth constraint mass.")
@click.option("--tail-at", type=int, default=None,
              help="Also evaluate the concentration tail at this iteration.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guard
def bounds(client, lipschitz, dist0, eps, gamma, batch_size, mu, degree, delta_mass, tail_at,
           fmt, out):
    """Print the iteration-bound calculator table."""
    growth = None
    if mu is not None or degree is not None or delta_mass is not None:
        if None in (mu, degree, delta_mass):
            raise click.UsageError("growth bounds need all of --mu, --degree, --delta-mass")
        growth = {"mu": mu, "degree": degree, "delta_mass": delta_mass}
    request = schemas.BoundsRequest.model_validate(
        {"lipschitz": lipschitz, "dist0": dist0, "eps": eps, "gamma": gamma,
         "batch_size": batch_size, "growth": growth, "tail_at": tail_at}
    )
    result = client.call("/bounds", request)
    if fmt == "json":
        text = json.dumps(result, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_BOUNDS_COLUMNS)
        writer.writerow(["" if result[c] is None else result[c] for c in _BOUNDS_COLUMNS])
        text = buf.getvalue()
    click.echo(text, nl=False)
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Override the spec's output directory.")
@click.option("--seed", type=int, default=None, help="Override the spec's base seed.")
@click.pass_obj
@_guard
def experiment(client, spec_path, workers, out_dir, seed):
    """Run a seed-replicated experiment spec; exit 2 if any check fails."""
    with open(spec_path) as fh:
        raw = fh.read()
    spec = validate_spec(raw)  # client-side validation for early, precise errors
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    request = schemas.ExperimentRequest.model_validate(
        {"spec": spec.model_dump(), "workers": workers}
    )
    result = client.call("/experiments", request)
    report = ExperimentReportModel.model_validate(result)
    directory = out_dir or (spec.output.dir if spec.output else ".")
    prefix = spec.output.prefix if spec.output else "experiment"
    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, f"{prefix}_rows.csv")
    json_path = os.path.join(directory, f"{prefix}_report.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(rows_csv_text(report))
    _write_json(report.model_dump(), json_path)
    click.echo(
        f"{report.spec.replications} replications, mean iterations "
        f"{report.aggregate.mean_iterations:.2f}; wrote {csv_path}, {json_path}"
    )
    for check in report.checks:
        click.echo(f"[{'PASS' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
    if not report.all_passed:
        sys.exit(2)


@main.command()
@click.option("--problem", "problem_path", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="Certified-pair stream (pairs.json from a confident solve).")
@click.option("--gamma", type=float, required=True)
@click.option("--trials", type=int, default=None,
              help="Monte-Carlo trials per pair (parametric families).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guard
def audit(client, problem_path, pairs_path, gamma, trials, seed, out):
    """Check certified pairs against true coverage; exit 2 on any error."""
    problem = _load_problem_document(problem_path)
    with open(pairs_path) as fh:
        pair_docs = json.load(fh)
    request = schemas.AuditRequest.model_validate(
        {"problem": problem.model_dump(exclude_none=True), "gamma": gamma,
         "pairs": pair_docs, "trials": trials, "seed": seed}
    )
    result = client.call("/audit", request)
    text = json.dumps(result, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    click.echo(
        f"{result['error_count']} errors in {result['n_pairs']} pairs "
        f"(mode: {result['mode']})",
        err=True,
    )
    if result["error_count"] > 0:
        sys.exit(2)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("polyakfm.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
