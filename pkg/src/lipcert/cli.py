"""Command-line front end.

Four subcommands:

    analyze   certified upper bound for a model directory (the main entry)
    bounds    cheap uncertified estimates: matrix-product upper, sampled lower
    compare   all methods side by side as CSV, ordering violations flagged
    genarch   generate a named or spec-string architecture as a model dir

Exit codes: 0 when the requested result was produced (certificates may be
"optimal" or "near-optimal"), 2 for model/argument problems, 3 when the
solver failed to certify.  A number that is not backed by a verified
certificate is never printed without a FAILED marker.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import time
from pathlib import Path

import click

from .baselines import empirical_lower_bound, mp_bound
from .errors import AssemblyError, ModelError, SolveError, SplitError
from .genarch import INITS, NAMED, generate_architecture
from .lmi import assemble_network
from .modelio import load_network, save_network
from .network import Network, trace_shapes
from .pipeline import certify
from .sdpa import export_sdpa

REPORT_SCHEMA = "lipcert-report/1"

EXIT_MODEL = 2
EXIT_SOLVER = 3


def _die(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(model_dir: str) -> Network:
    try:
        return load_network(model_dir)
    except (ModelError, OSError) as e:
        _die(EXIT_MODEL, f"cannot load model {model_dir}: {e}")


def _model_info(net: Network) -> dict:
    return {
        "input": list(net.input.array_shape()),
        "layers": [type(layer).__name__ for layer in net.layers],
    }


def _write_report(out: str | None, doc: dict):
    if out:
        Path(out).write_text(json.dumps(doc, indent=2) + "\n")


@click.group()
def main():
    """Certified Lipschitz bounds for feedforward networks."""


@main.command()
@click.option("--model", "model_dir", required=True, help="Model directory.")
@click.option("--split", default="layer", show_default=True,
              help="Subnetwork split: layer | mono | group:<g> | cuts:<i,j,...>.")
@click.option("--solver", default="auto", show_default=True,
              type=click.Choice(["auto", "scs", "clarabel"]))
@click.option("--solver-tol", default=1e-8, show_default=True,
              help="Feasibility/optimality tolerance passed to the solver.")
@click.option("--max-iter", default=200, show_default=True,
              help="Iteration budget (interior-point steps; first-order solvers scale it up).")
@click.option("--pool-mode", default="eq", show_default=True,
              type=click.Choice(["eq", "ineq"]),
              help="Average-pool coupling rows as equalities or one-sided inequalities.")
@click.option("--no-normalize", is_flag=True,
              help="Skip exact per-layer weight rescaling before solving.")
@click.option("--export-sdpa", "sdpa_path", default=None,
              help="Also write the assembled problem in SDPA sparse format.")
@click.option("--out", default=None, help="Write a JSON report here.")
@click.option("--verbose", is_flag=True, help="Stream solver output.")
def analyze(model_dir, split, solver, solver_tol, max_iter, pool_mode,
            no_normalize, sdpa_path, out, verbose):
    """Certify an upper bound on the l2 Lipschitz constant of a model."""
    net = _load(model_dir)
    t0 = time.perf_counter()
    try:
        if sdpa_path:
            # export the assembly of the network as stored, so the file
            # stands alone; certify may solve a rescaled (exact) variant
            problem, _ = assemble_network(net, split=split, pool_mode=pool_mode)
            export_sdpa(problem, sdpa_path)
        report = certify(net, split=split, solver=solver, tol=solver_tol,
                         max_iter=max_iter, pool_mode=pool_mode,
                         normalize=not no_normalize, verbose=verbose)
    except (SplitError, AssemblyError, ModelError) as e:
        _die(EXIT_MODEL, str(e))
    except SolveError as e:
        _die(EXIT_SOLVER, f"solver failed: {e}")
    wall = time.perf_counter() - t0

    doc = {
        "schema": REPORT_SCHEMA,
        "command": "analyze",
        "model": str(model_dir),
        "model_info": _model_info(net),
        "report": report.to_json(),
        "wall_time_s": wall,
    }
    _write_report(out, doc)

    if report.certified:
        click.echo(f"gamma = {report.gamma:.9g}  [{report.status}]")
        click.echo(f"solver={report.solver} iterations={report.result.iterations} "
                   f"time={wall:.2f}s split={split}")
        sys.exit(0)
    value = "" if report.gamma is None else f" (unverified value {report.gamma:.6g})"
    click.echo(f"FAILED: no certified bound, status {report.status}{value}")
    sys.exit(EXIT_SOLVER)


@main.command()
@click.option("--model", "model_dir", required=True, help="Model directory.")
@click.option("--samples", default=200, show_default=True,
              help="Input pairs drawn for the sampled lower bound.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, help="Write a JSON report here.")
def bounds(model_dir, samples, seed, out):
    """Uncertified bracket: matrix-product upper and sampled lower bound."""
    net = _load(model_dir)
    try:
        mp = mp_bound(net)
        lower = empirical_lower_bound(net, n_samples=samples, seed=seed)
    except ModelError as e:
        _die(EXIT_MODEL, str(e))

    doc = {
        "schema": REPORT_SCHEMA,
        "command": "bounds",
        "model": str(model_dir),
        "model_info": _model_info(net),
        "matrix_product_upper": mp.gamma,
        "matrix_product_converged": mp.converged,
        "sampled_lower": lower,
        "samples": samples,
        "seed": seed,
    }
    _write_report(out, doc)
    click.echo(f"matrix-product upper bound: {mp.gamma:.9g}"
               + ("" if mp.converged else "  (power iteration not fully converged)"))
    click.echo(f"sampled lower bound:        {lower:.9g}  (samples={samples}, seed={seed})")


@main.command()
@click.option("--model", "model_dir", required=True, help="Model directory.")
@click.option("--split", default="layer", show_default=True)
@click.option("--solver", default="auto", show_default=True,
              type=click.Choice(["auto", "scs", "clarabel"]))
@click.option("--solver-tol", default=1e-8, show_default=True)
@click.option("--max-iter", default=200, show_default=True)
@click.option("--samples", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, help="Write the CSV here instead of stdout.")
def compare(model_dir, split, solver, solver_tol, max_iter, samples, seed, out):
    """All methods on one model as CSV: method,kind,value,status,flag."""
    net = _load(model_dir)
    try:
        mp = mp_bound(net)
        lower = empirical_lower_bound(net, n_samples=samples, seed=seed)
        report = certify(net, split=split, solver=solver, tol=solver_tol,
                         max_iter=max_iter)
    except (SplitError, AssemblyError, ModelError) as e:
        _die(EXIT_MODEL, str(e))
    except SolveError as e:
        _die(EXIT_SOLVER, f"solver failed: {e}")

    sdp_ok = report.certified and report.gamma is not None
    rel = 1e-6   # slack before an ordering violation is flagged

    def over(a, b):
        return a > b * (1.0 + rel)

    rows = [["method", "kind", "value", "status", "flag"]]
    sdp_flag = ""
    if sdp_ok and over(report.gamma, mp.gamma):
        sdp_flag = "exceeds-matrix-product"
    rows.append(["sdp", "upper",
                 f"{report.gamma:.9g}" if report.gamma is not None else "",
                 report.status if sdp_ok else f"FAILED:{report.status}", sdp_flag])
    rows.append(["matrix-product", "upper", f"{mp.gamma:.9g}",
                 "ok" if mp.converged else "not-converged", ""])
    low_flag = ""
    if sdp_ok and over(lower, report.gamma):
        low_flag = "exceeds-certified-upper"
    elif over(lower, mp.gamma):
        low_flag = "exceeds-matrix-product"
    rows.append(["sampled", "lower", f"{lower:.9g}", "ok", low_flag])
    rows.append(["liplt", "upper", "", "unavailable", ""])

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    if not sdp_ok:
        click.echo(f"FAILED: no certified bound, status {report.status}", err=True)
        sys.exit(EXIT_SOLVER)
    sys.exit(0)


@main.command()
@click.option("--name", required=True,
              help="Named architecture (" + ", ".join(sorted(NAMED)) + ") or a "
                   "spec string like d(64).c(16,4,2).p(av,2,2).d(10).")
@click.option("--seed", default=0, show_default=True)
@click.option("--init", default="kaiming", show_default=True,
              type=click.Choice(list(INITS)))
@click.option("--out", required=True, help="Model directory to create.")
def genarch(name, seed, init, out):
    """Generate a deterministic random-weight model directory."""
    try:
        net = generate_architecture(name, seed=seed, init=init)
        save_network(net, out)
    except ModelError as e:
        _die(EXIT_MODEL, str(e))
    shapes = trace_shapes(net)
    click.echo(f"wrote {out}: {len(net.layers)} layers, "
               f"input {net.input.array_shape()}, output dim {shapes[-1].total_dim}")


if __name__ == "__main__":
    main()
