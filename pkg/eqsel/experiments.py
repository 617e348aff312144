"""
Experiment pipeline
===================

``run`` executes seeded framework runs from an :class:`ExperimentConfig`
and writes, under the output directory::

    runs/run_000.csv     t,h,state,action_tuple,hidden_desc
    frequency.csv        run,t,series,frequency
    aggregate.csv        t,series,median,q20,q80
    figure.svg           median lines with quantile bands
    summary.yaml         seeds, final medians, window frequencies per run

``analyze`` writes the exact stationary policy, stochastic potential
tables, minimum-potential sets and selection verdicts::

    analysis.yaml
    exact_pi_eps.csv     eps,h,state,action_tuple,probability
    gamma_h{h}_s{state}.csv
    sse.csv              h,state,sse

Runs go to a pool of ``min(EQSEL_THREADS, n_runs)`` worker processes.
Results are collected in run order, so the files do not depend on the pool
size.
"""

import logging
import os
from multiprocessing import Pool
from pathlib import Path
from typing import List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import yaml  # noqa: E402

from .config import ExperimentConfig, GameConfig, load_game  # noqa: E402
from .data import BUNDLED_EXPERIMENTS, BUNDLED_GAMES, bundled_config  # noqa
from .exceptions import PreconditionError  # noqa: E402
from .framework import (  # noqa: E402
    as_rule,
    cell_payoffs,
    exact_pi_eps,
    limit_estimate,
    run_algorithm1,
    run_algorithm2,
    sweep_limit_policy,
    validate_sg_corollary,
)
from .game import validate_game  # noqa: E402
from .games import (  # noqa: E402
    BUILTIN_GAMES,
    random_interdependent_game,
    random_potential_game,
)
from .policy import evaluate_policy  # noqa: E402
from .record import series_name  # noqa: E402
from .resistance import sse_set, validate_corollary  # noqa: E402
from .rules import RULES, LearningRuleSpec  # noqa: E402

logger = logging.getLogger(__name__)

THREADS_ENV = "EQSEL_THREADS"
RUN_COLUMNS = ["t", "h", "state", "action_tuple", "hidden_desc"]
SVG_HASHSALT = "eqsel"


def worker_count(n_runs: int) -> int:
    """Pool size: ``EQSEL_THREADS`` (default: cpu count) capped by runs"""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        limit = os.cpu_count() or 1
    else:
        try:
            limit = int(raw)
        except ValueError:
            raise ValueError(
                f"{THREADS_ENV} must be a positive integer, got '{raw}'"
            ) from None
        if limit < 1:
            raise ValueError(
                f"{THREADS_ENV} must be a positive integer, got {limit}"
            )
    return max(1, min(limit, n_runs))


def resolve_config_path(spec) -> Path:
    """Existing path, or the path of a bundled document of that name"""
    path = Path(spec)
    if path.exists():
        return path
    if str(spec) in BUNDLED_EXPERIMENTS + BUNDLED_GAMES:
        return Path(bundled_config(str(spec)))
    raise ValueError(f"no config file or bundled document named '{spec}'")


def tracked_series(config: ExperimentConfig, game) -> List[Tuple[int, int, int]]:
    """``(h, state index, joint action)`` per figure series.

    Without explicit series every joint action at stage 0 in every state
    with positive initial probability is tracked.
    """
    codec = game.codec
    if config.figure.series:
        out = []
        for k, entry in enumerate(config.figure.series):
            try:
                game.check_stage(entry.h)
                s = game.state_index(entry.state)
                joint = codec.encode(entry.action)
            except ValueError as err:
                raise ValueError(f"figure.series[{k}]: {err}") from None
            out.append((entry.h, s, joint))
        return out
    return [
        (0, int(s), a)
        for s in np.flatnonzero(game.rho > 0)
        for a in range(codec.n_joint)
    ]


def _execute(job):
    config, game, eps, seed = job
    common = dict(
        seed=seed,
        stride=config.stride,
        window=config.window,
    )
    if config.algorithm == "exact":
        return run_algorithm1(
            game, config.rule, eps, config.iterations, **common
        )
    return run_algorithm2(
        game,
        config.rule,
        eps,
        config.iterations,
        start_distribution=config.start_distribution,
        **common,
    )


def execute_runs(config: ExperimentConfig, game, eps: float, seeds):
    """Run records in seed order, serially or on a process pool"""
    jobs = [(config, game, eps, seed) for seed in seeds]
    workers = worker_count(len(jobs))
    logger.info(f"{len(jobs)} run(s) of {config.name} on {workers} worker(s)")
    if workers == 1:
        return [_execute(job) for job in jobs]
    with Pool(workers) as pool:
        return pool.map(_execute, jobs)


def aggregate_frequencies(
    frames: Sequence[pd.DataFrame],
    series: Sequence[str] = None,
    quantiles: Tuple[float, float] = (0.2, 0.8),
) -> pd.DataFrame:
    """Median and quantile band across runs per ``(t, series)``.

    Parameters
    ----------
    frames : list of DataFrame
        per-run frames with columns ``t``, ``series`` and ``frequency``
    series : list of str (optional)
        restrict to these series
    quantiles : (float, float)
        band quantiles, linear interpolation

    Returns
    -------
    DataFrame with columns ``t, series, median, q<lo>, q<hi>`` sorted by
    ``(t, series)``
    """
    lo, hi = quantiles
    lo_name, hi_name = f"q{lo * 100:g}", f"q{hi * 100:g}"
    if not frames:
        raise ValueError("no run frames to aggregate")
    data = pd.concat(frames, ignore_index=True)
    if series is not None:
        data = data[data["series"].isin(list(series))]
    grouped = data.groupby(["t", "series"], sort=True)["frequency"]
    out = pd.DataFrame(
        {
            "median": grouped.median(),
            lo_name: grouped.quantile(lo, interpolation="linear"),
            hi_name: grouped.quantile(hi, interpolation="linear"),
        }
    ).reset_index()
    return out.sort_values(["t", "series"], kind="mergesort").reset_index(
        drop=True
    )


def plot_aggregate(aggregate: pd.DataFrame, figure, path):
    """Median line and quantile band per series as a standalone SVG"""
    lo, hi = figure.quantiles
    lo_name, hi_name = f"q{lo * 100:g}", f"q{hi * 100:g}"
    plt.rcParams["svg.hashsalt"] = SVG_HASHSALT
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, group in aggregate.groupby("series", sort=False):
        line = ax.plot(group["t"], group["median"], label=name)[0]
        ax.fill_between(
            group["t"],
            group[lo_name],
            group[hi_name],
            color=line.get_color(),
            alpha=0.25,
            linewidth=0,
        )
    ax.set_xlabel(figure.xlabel)
    ax.set_ylabel(figure.ylabel)
    ax.set_ylim(-0.02, 1.02)
    if figure.title:
        ax.set_title(figure.title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"wrote {path}")


def _eps_dir(out, eps, several):
    return Path(out) / f"eps_{eps:g}" if several else Path(out)


def cmd_run(config: ExperimentConfig, out, base_dir=None) -> dict:
    """Execute ``n_runs`` seeded runs per epsilon and write the artifacts.

    With a list of epsilons each value gets its own ``eps_<value>``
    subdirectory. Returns the summary document.
    """
    game = load_game(config.game, base_dir)
    as_rule(config.rule, game.n_agents)
    series = tracked_series(config, game)
    names = [
        series_name(h, game.states[s], game.codec, a) for h, s, a in series
    ]
    seeds = config.run_seeds()
    eps_list = config.eps_list
    summaries = {}
    for eps in eps_list:
        target = _eps_dir(out, eps, len(eps_list) > 1)
        target.mkdir(parents=True, exist_ok=True)
        records = execute_runs(config, game, eps, seeds)

        frames = []
        for k, record in enumerate(records):
            freq = record.frequency_frame(series)
            freq.insert(0, "run", k)
            frames.append(freq)
            if "csv" in config.outputs:
                runs = target / "runs"
                runs.mkdir(exist_ok=True)
                run_frame, _ = record.to_frames()
                run_frame[RUN_COLUMNS].to_csv(
                    runs / f"run_{k:03d}.csv", index=False
                )
            if "zarr" in config.outputs:
                runs = target / "runs"
                runs.mkdir(exist_ok=True)
                record.write_zarr(str(runs / f"run_{k:03d}.zarr"))
        aggregate = aggregate_frequencies(
            [f.drop(columns="run") for f in frames],
            names,
            config.figure.quantiles,
        )
        if "csv" in config.outputs:
            pd.concat(frames, ignore_index=True).to_csv(
                target / "frequency.csv", index=False
            )
            aggregate.to_csv(target / "aggregate.csv", index=False)
            logger.info(f"wrote run CSVs to {target}")
        if "svg" in config.outputs and not aggregate.empty:
            plot_aggregate(aggregate, config.figure, target / "figure.svg")

        final = {}
        if not aggregate.empty:
            last = aggregate[aggregate["t"] == aggregate["t"].max()]
            final = {
                row.series: float(row.median) for row in last.itertuples()
            }
        summary = {
            "name": config.name,
            "game": game.name or config.game,
            "rule": config.rule.model_dump(exclude_none=True),
            "eps": float(eps),
            "algorithm": config.algorithm,
            "iterations": config.iterations,
            "seeds": [int(s) for s in seeds],
            "final_median": final,
            "runs": [record.summary()["final_frequencies"] for record in records],
        }
        if "summary" in config.outputs:
            with open(target / "summary.yaml", "w") as fh:
                yaml.safe_dump(summary, fh, sort_keys=False)
        summaries[float(eps)] = summary
    return summaries[eps_list[0]] if len(eps_list) == 1 else summaries


def _batch_corollary(kind, rule_name):
    if kind == "potential":
        return "potential_max"
    return "pareto_ne" if rule_name == "pradelski_young" else "pareto"


def run_random_batch(batch, rule_spec: LearningRuleSpec) -> dict:
    """Selection check on a batch of random normal-form games"""
    rng = np.random.default_rng(batch.seed)
    n = len(batch.action_counts)
    rule = rule_spec.build(n)
    which = _batch_corollary(batch.kind, rule.name)
    draw = (
        random_potential_game
        if batch.kind == "potential"
        else random_interdependent_game
    )
    verdicts = []
    for k in range(batch.count):
        nfg = draw(rng, tuple(batch.action_counts), grid=batch.grid)
        try:
            report = validate_corollary(rule, nfg, which)
            verdicts.append(report.to_dict())
        except PreconditionError as err:
            verdicts.append({"which": which, "verdict": "precondition_failed",
                             "notes": [str(err)]})
    passed = sum(v["verdict"] in ("equal", "contained") for v in verdicts)
    logger.info(f"random batch {which}: {passed}/{batch.count} passed")
    return {
        "kind": batch.kind,
        "which": which,
        "count": batch.count,
        "passed": passed,
        "pass_rate": passed / batch.count,
        "games": verdicts,
    }


def cmd_analyze(config: ExperimentConfig, out, base_dir=None) -> dict:
    """Exact analyses selected by ``config.analysis``; returns the report"""
    analysis = config.analysis
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    game = load_game(config.game, base_dir)
    rule = as_rule(config.rule, game.n_agents)
    codec = game.codec
    eps_list = sorted(config.eps_list, reverse=True)
    report = {
        "name": config.name,
        "game": game.name or config.game,
        "rule": config.rule.model_dump(exclude_none=True),
        "eps": eps_list,
    }
    reachable = [(int(h), int(s)) for h, s in np.argwhere(game.reachable())]

    solutions = []
    if analysis.exact_pi_eps or analysis.sse:
        solutions = [exact_pi_eps(game, rule, eps) for eps in eps_list]
    if analysis.exact_pi_eps:
        rows = [
            (sol.eps, h, game.states[s], codec.format(a),
             sol.policy.tables[h, s, a])
            for sol in solutions
            for h in range(game.horizon)
            for s in range(game.n_states)
            for a in range(codec.n_joint)
        ]
        pd.DataFrame(
            rows, columns=["eps", "h", "state", "action_tuple", "probability"]
        ).to_csv(out / "exact_pi_eps.csv", index=False)
        smallest = solutions[-1]
        report["exact_pi_eps"] = {
            f"h{h}:{game.states[s]}": {
                codec.format(a): float(smallest.policy.tables[h, s, a])
                for a in range(codec.n_joint)
            }
            for h, s in reachable
        }

    sweep = None
    if analysis.sweep or analysis.corollaries:
        sweep = sweep_limit_policy(
            game, rule, analysis.sweep or eps_list, analysis.support_tol
        )
        report["sweep"] = sweep.to_dict(codec)

    if analysis.sse:
        if sweep is not None:
            limit_Q = sweep.limit_Q
        else:
            limit = limit_estimate(solutions[-1], analysis.support_tol)
            limit_Q = evaluate_policy(game, limit).Q
        sse_rows, sse_report = [], {}
        for h, s in reachable:
            nfg = cell_payoffs(game, rule, limit_Q, h, s)
            actions, table = sse_set(rule, nfg)
            table.to_csv(out / f"gamma_h{h}_s{game.states[s]}.csv")
            labels = [codec.format(a) for a in actions]
            sse_rows.append((h, game.states[s], " ".join(labels)))
            sse_report[f"h{h}:{game.states[s]}"] = labels
        pd.DataFrame(sse_rows, columns=["h", "state", "sse"]).to_csv(
            out / "sse.csv", index=False
        )
        report["sse"] = sse_report

    if analysis.corollaries:
        verdicts = {}
        for which in analysis.corollaries:
            try:
                verdicts[which] = validate_sg_corollary(
                    game,
                    rule,
                    which,
                    eps_list,
                    basis=analysis.basis,
                    support_tol=analysis.support_tol,
                    sweep=sweep,
                ).to_dict()
            except PreconditionError as err:
                logger.warning(f"{which}: {err}")
                verdicts[which] = {
                    "which": which,
                    "verdict": "precondition_failed",
                    "notes": [str(err)],
                }
        report["corollaries"] = verdicts

    if analysis.random_batch is not None:
        report["random_batch"] = run_random_batch(
            analysis.random_batch, config.rule
        )

    with open(out / "analysis.yaml", "w") as fh:
        yaml.safe_dump(report, fh, sort_keys=False)
    logger.info(f"wrote analysis of {config.name} to {out}")
    return report


def cmd_list() -> dict:
    """Built-in games, bundled documents and learning rules"""
    return {
        "games": list(BUILTIN_GAMES),
        "rules": list(RULES),
        "bundled_experiments": list(BUNDLED_EXPERIMENTS),
        "bundled_games": list(BUNDLED_GAMES),
    }


def cmd_validate(path) -> List[str]:
    """Diagnostics for a game or experiment document; empty when valid.

    Document errors propagate as :class:`pydantic.ValidationError`.
    """
    path = resolve_config_path(path)
    with open(path, "r") as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict) and "transitions" in data:
        game = GameConfig.model_validate(data).to_game()
    else:
        config = ExperimentConfig.model_validate(data)
        game = load_game(config.game, path.parent)
        as_rule(config.rule, game.n_agents)
        tracked_series(config, game)
    report = validate_game(game)
    return [
        f"{issue.field}{list(issue.coords)}: {issue.message}"
        for issue in report.issues
    ]
