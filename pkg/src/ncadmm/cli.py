"""Benchmark CLI: experiment runs, parameter certification, rho sweeps.

Experiment specs are JSON (schema version "v1"); every run emits one CSV per
(solver, repetition), an across-repetition mean CSV per solver and a JSON
summary. CSV column order is fixed:

    t, wall_time_s, ifo, objective, test_error, test_loss,
    feas_sq, dual_sq, subgrad_sq, lyapunov
"""

import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np

from . import data as data_mod
from . import params as params_mod
from . import solvers as solvers_mod
from .exceptions import ConfigError, DivergenceError, NcadmmError
from .problems import (
    BlockSeparableRegularizer,
    CompositeProblem,
    SigmoidLoss,
    SmoothedMultiTaskLoss,
    build_graph_guided_A,
    build_multitask_constraints,
    build_overlap_A,
)

CSV_COLUMNS = [
    "t", "wall_time_s", "ifo", "objective", "test_error", "test_loss",
    "feas_sq", "dual_sq", "subgrad_sq", "lyapunov",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _default_workers():
    return int(os.environ.get("NC_ADMM_WORKERS", "1"))


def load_spec(path):
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if spec.get("version") != "v1":
        raise ConfigError(f"unsupported spec version {spec.get('version')!r}")
    if not spec.get("solvers"):
        raise ConfigError("experiment spec lists no solvers")
    names = [s.get("name") or s["variant"] for s in spec["solvers"]]
    if len(set(names)) != len(names):
        raise ConfigError("solver names must be distinct")
    if spec.get("repetitions", 1) < 1:
        raise ConfigError("repetitions must be >= 1")
    return spec


def build_problem(problem_spec):
    """Assemble (CompositeProblem, test Dataset, info) from a spec dict."""
    kind = problem_spec["kind"]
    seed = problem_spec.get("seed", 0)
    nu = problem_spec.get("nu", 1e-5)
    frac = problem_spec.get("train_fraction", 0.5)
    info = {"kind": kind, "seed": seed}

    if kind == "graph_guided":
        ds, prec, x_star = data_mod.gen_graph_guided(
            problem_spec["n"], problem_spec["d"], seed
        )
        support = prec.support
        if problem_spec.get("empty_support"):
            support = np.zeros_like(support)
        cs = build_graph_guided_A(support)
        train, test = data_mod.split(ds, frac, seed + 1)
        loss = SigmoidLoss(train.features, train.labels)
        reg = BlockSeparableRegularizer.l1(cs.p, nu)
        info["edges"] = int(support.sum() // 2)
    elif kind == "overlap":
        ds, x_star = data_mod.gen_overlap(
            problem_spec["n"], seed, grid=problem_spec.get("grid", 20)
        )
        k = problem_spec.get("k", 2)
        cs = build_overlap_A(ds.d, k)
        train, test = data_mod.split(ds, frac, seed + 1)
        loss = SigmoidLoss(train.features, train.labels)
        reg = BlockSeparableRegularizer.l1(cs.p, nu)
    elif kind == "libsvm":
        ds = data_mod.parse_libsvm(problem_spec["path"], label_mode="binary")
        train, test = data_mod.split(ds, frac, seed + 1)
        d = ds.d
        support = _random_support(
            d,
            problem_spec.get("support_density", 0.05),
            problem_spec.get("support_seed", seed),
        )
        cs = build_graph_guided_A(support)
        loss = SigmoidLoss(train.features, train.labels)
        reg = BlockSeparableRegularizer.l1(cs.p, nu)
    elif kind == "multitask":
        ds = data_mod.parse_libsvm(problem_spec["path"], label_mode="multiclass")
        train, test = data_mod.split(ds, frac, seed + 1)
        m = ds.meta["classes"]
        nu1 = problem_spec.get("nu1", 1e-5)
        nu2 = problem_spec.get("nu2", 1e-4)
        beta = problem_spec.get("beta", 1.0)
        theta = problem_spec.get("theta", 1.0)
        loss = SmoothedMultiTaskLoss(
            train.features, train.labels.astype(int), m, nu1,
            beta=beta, theta=theta,
        )
        cs, reg = build_multitask_constraints(m, ds.d, nu1, nu2, loss.kappa0)
        info["classes"] = m
    else:
        raise ConfigError(f"unknown problem kind {kind!r}")

    problem = CompositeProblem(loss=loss, regularizer=reg, constraints=cs)
    return problem, test, info


def _random_support(d, density, seed):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    upper = rng.random((d, d)) < density
    upper = np.triu(upper, k=1)
    return upper | upper.T


def make_test_evaluator(problem, test):
    """Return f(x) -> (misclassification rate, mean test loss)."""
    loss = problem.loss
    if isinstance(loss, SigmoidLoss):
        test_loss = SigmoidLoss(test.features, test.labels)
        feats, labels = test_loss.features, test_loss.labels
        idx = np.arange(test.n)

        def evaluate(x):
            scores = np.asarray(feats @ x).ravel()
            pred = np.where(scores >= 0, 1.0, -1.0)
            err = float(np.mean(pred != labels))
            return err, test_loss.value(x, idx)
    else:
        test_loss = SmoothedMultiTaskLoss(
            test.features, test.labels.astype(int), loss.classes, loss.nu1,
            beta=loss.beta, theta=loss.theta,
        )
        idx = np.arange(test.n)

        def evaluate(x):
            X = x.reshape(loss.classes, loss.d_features)
            scores = np.asarray(test_loss.features @ X.T)
            pred = scores.argmax(axis=1)
            err = float(np.mean(pred != test_loss.labels))
            return err, test_loss.value(x, idx)

    return evaluate


def solver_config_from_spec(entry, problem, trace_stride=1):
    eta = entry.get("eta", 1.0)
    rho = entry["rho"]
    r = entry.get("r")
    if r is None:
        r = params_mod.min_admissible_r(problem.constraints, eta, rho)
    variant = entry["variant"]
    M = entry.get("M", problem.n if variant == "dete" else 100)
    M = min(M, problem.n)
    m = entry.get("m")
    if variant == "svrg" and m is None:
        m = max(1, problem.n // M)
    return solvers_mod.SolverConfig(
        variant=variant, eta=eta, rho=rho, r=r, M=M,
        T=entry.get("T", 1000), m=m, seed=entry.get("seed", 0),
        trace_stride=trace_stride, diagnostics=True,
    )


def certificate_for(problem, config, L=None):
    if L is None:
        L = params_mod.estimate_lipschitz(problem)
    return params_mod.check_feasible(
        config.variant, L, problem.constraints, config.eta, config.rho,
        config.r, n=problem.n, M=config.M, m=config.m, T=max(1, config.T),
    )


def _write_csv_atomic(path, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
    os.replace(tmp, path)


def run_single(problem, evaluate, config, zeta=None):
    """One solver run; returns (rows, result) with CSV-ready rows.

    zeta, when given, fills the lyapunov column with
    Psi_t = L_rho + (zeta/rho) ||x_t - x_{t-1}||^2.
    """
    rows = []

    def on_record(rec, state):
        err, tloss = evaluate(state.x)
        lyap = ""
        if zeta is not None and rec.lrho is not None:
            lyap = rec.lrho + (zeta / config.rho) * rec.dx_sq
        rows.append([
            rec.t, rec.wall_time, rec.ifo, rec.objective, err, tloss,
            rec.feasibility_sq, rec.dual_sq, rec.subgrad_dist_sq, lyap,
        ])

    result = solvers_mod.run(problem, config, callback=on_record)
    return rows, result


def _run_task(args):
    problem, test, config, zeta = args
    evaluate = make_test_evaluator(problem, test)
    try:
        return run_single(problem, evaluate, config, zeta=zeta), None
    except DivergenceError as exc:
        return None, str(exc)


def run_experiment(spec, out_dir, allow_uncertified=False, workers=None, echo=print):
    """Full cmd_run workflow; returns the process exit code."""
    os.makedirs(out_dir, exist_ok=True)
    problem, test, info = build_problem(spec["problem"])
    L = params_mod.estimate_lipschitz(problem)
    reps = spec.get("repetitions", 1)
    seed_base = spec.get("seed_base", 0)
    stride = spec.get("trace_stride", 1)
    workers = workers or _default_workers()

    summary = {"problem": info, "L": L, "solvers": {}}
    any_success = False
    all_diverged = True

    for entry in spec["solvers"]:
        name = entry.get("name") or entry["variant"]
        base_cfg = solver_config_from_spec(entry, problem, trace_stride=stride)
        cert = certificate_for(problem, base_cfg, L=L)
        if not cert.accepted and not allow_uncertified:
            echo(f"[{name}] refused: configuration fails its certificate")
            echo(json.dumps(cert.to_dict(), indent=2, default=str))
            return EXIT_CONFIG

        tasks = []
        for rep in range(reps):
            cfg = solvers_mod.SolverConfig(
                variant=base_cfg.variant, eta=base_cfg.eta, rho=base_cfg.rho,
                r=base_cfg.r, M=base_cfg.M, T=base_cfg.T, m=base_cfg.m,
                seed=seed_base + rep, trace_stride=stride, diagnostics=True,
            )
            tasks.append((problem, test, cfg, cert.constants.zeta))

        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_run_task, tasks))
        else:
            outcomes = [_run_task(t) for t in tasks]

        rep_rows = []
        diverged = []
        for rep, (payload, error) in enumerate(outcomes):
            if error is not None:
                diverged.append({"rep": rep, "error": error})
                continue
            rows, result = payload
            _write_csv_atomic(os.path.join(out_dir, f"{name}_rep{rep}.csv"), rows)
            rep_rows.append(rows)
            any_success = True
            all_diverged = False

        solver_summary = {
            "certificate": cert.to_dict(),
            "diverged": diverged,
            "repetitions_completed": len(rep_rows),
        }
        if rep_rows:
            mean_rows = _aggregate_rows(rep_rows)
            _write_csv_atomic(os.path.join(out_dir, f"{name}_mean.csv"), mean_rows)
            last = mean_rows[-1]
            dx = [float(r[CSV_COLUMNS.index("feas_sq")]) for r in mean_rows]
            solver_summary.update({
                "final_objective": float(last[3]),
                "final_feas_sq": float(last[6]),
                "final_dual_sq": float(last[7]),
                "final_subgrad_sq": float(last[8]),
                "min_feas_sq": min(dx),
            })
        summary["solvers"][name] = solver_summary
        echo(f"[{name}] {len(rep_rows)}/{reps} repetitions completed")

    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=str)

    if not any_success and all_diverged:
        return EXIT_DIVERGED
    return EXIT_OK


def _aggregate_rows(rep_rows):
    """Across-repetition mean of every numeric column, aligned on t."""
    lengths = {len(rows) for rows in rep_rows}
    n_rows = min(lengths)
    out = []
    for i in range(n_rows):
        acc = []
        for col in range(len(CSV_COLUMNS)):
            vals = []
            for rows in rep_rows:
                v = rows[i][col]
                if v == "":
                    vals = None
                    break
                vals.append(float(v))
            acc.append("" if vals is None else float(np.mean(vals)))
        acc[0] = int(acc[0])
        out.append(acc)
    return out


@click.group()
def main():
    """Mini-batch stochastic ADMM benchmark harness."""


@main.command("run")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None,
              help="Override the spec's seed_base.")
@click.option("--workers", type=int, default=None)
@click.option("--allow-uncertified", is_flag=True, default=False)
@click.pass_context
def cmd_run(ctx, spec_path, out_dir, seed, workers, allow_uncertified):
    """Run an experiment spec and emit CSV traces plus a JSON summary."""
    try:
        spec = load_spec(spec_path)
        if seed is not None:
            spec["seed_base"] = seed
        code = run_experiment(
            spec, out_dir, allow_uncertified=allow_uncertified,
            workers=workers, echo=click.echo,
        )
    except NcadmmError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    ctx.exit(code)


@main.command("check-params")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--variant", required=True,
              type=click.Choice(["dete", "stoc", "svrg", "saga"]))
@click.option("--eta", type=float, required=True)
@click.option("--rho", type=float, required=True)
@click.option("--r", "r_val", type=float, default=None)
@click.option("--batch", "M", type=int, default=100)
@click.option("--epoch-length", "m", type=int, default=None)
@click.option("--iterations", "T", type=int, default=1000)
@click.pass_context
def cmd_check_params(ctx, spec_path, variant, eta, rho, r_val, M, m, T):
    """Evaluate the feasibility certificate for one configuration."""
    try:
        spec = load_spec(spec_path) if _is_experiment_spec(spec_path) else None
        problem_spec = spec["problem"] if spec else _load_json(spec_path)
        problem, _, _ = build_problem(problem_spec)
        L = params_mod.estimate_lipschitz(problem)
        if r_val is None:
            r_val = params_mod.min_admissible_r(problem.constraints, eta, rho)
        M_eff = min(M, problem.n)
        if variant == "svrg" and m is None:
            m = max(1, problem.n // M_eff)
        cert = params_mod.check_feasible(
            variant, L, problem.constraints, eta, rho, r_val,
            n=problem.n, M=M_eff, m=m, T=T,
        )
    except NcadmmError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    click.echo(json.dumps(cert.to_dict(), indent=2, default=str))
    ctx.exit(EXIT_OK if cert.accepted else EXIT_CONFIG)


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _is_experiment_spec(path):
    try:
        return _load_json(path).get("version") == "v1"
    except (json.JSONDecodeError, OSError):
        return False


@main.command("rho-sweep")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--rho", "rhos", multiple=True, type=float, required=True)
@click.option("--workers", type=int, default=None)
@click.option("--allow-uncertified", is_flag=True, default=False)
@click.pass_context
def cmd_rho_sweep(ctx, spec_path, out_dir, rhos, workers, allow_uncertified):
    """Rerun the spec's solvers across a rho grid; emit per-rho aggregates."""
    try:
        spec = load_spec(spec_path)
        if any(rho <= 0 for rho in rhos):
            raise ConfigError("all rho values must be > 0")
        table = []
        worst = EXIT_OK
        for rho in rhos:
            sub = json.loads(json.dumps(spec))
            for entry in sub["solvers"]:
                entry["rho"] = rho
                entry.pop("r", None)
            sub_dir = os.path.join(out_dir, f"rho_{rho:g}")
            code = run_experiment(
                sub, sub_dir, allow_uncertified=allow_uncertified,
                workers=workers, echo=click.echo,
            )
            worst = max(worst, code)
            with open(os.path.join(sub_dir, "summary.json")) as fh:
                summary = json.load(fh)
            for name, solver in summary["solvers"].items():
                table.append([
                    rho, name,
                    solver.get("final_objective", ""),
                    solver.get("final_feas_sq", ""),
                    solver["certificate"]["accepted"],
                ])
        os.makedirs(out_dir, exist_ok=True)
        tmp = os.path.join(out_dir, "sweep_table.csv.tmp")
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rho", "solver", "final_objective",
                             "final_feas_sq", "certified"])
            writer.writerows(table)
        os.replace(tmp, os.path.join(out_dir, "sweep_table.csv"))
    except NcadmmError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    ctx.exit(worst)


@main.command("gen-data")
@click.option("--kind", required=True, type=click.Choice(["graph_guided", "overlap"]))
@click.option("--n", type=int, required=True)
@click.option("--d", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def cmd_gen_data(ctx, kind, n, d, seed, out_path):
    """Generate a synthetic dataset and persist it as LIBSVM + JSON sidecar."""
    try:
        if kind == "graph_guided":
            ds, _, _ = data_mod.gen_graph_guided(n, d, seed)
        else:
            ds, _ = data_mod.gen_overlap(n, seed)
        data_mod.write_libsvm(ds, out_path, sidecar=f"{out_path}.meta.json")
    except NcadmmError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    click.echo(f"wrote {ds.n} samples x {ds.d} features to {out_path}")


@main.command("parse")
@click.option("--path", required=True, type=click.Path(exists=True))
@click.pass_context
def cmd_parse(ctx, path):
    """Validate a LIBSVM file and print its shape."""
    try:
        ds = data_mod.parse_libsvm(path)
    except NcadmmError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    click.echo(json.dumps(ds.meta, default=str))


if __name__ == "__main__":
    main()
