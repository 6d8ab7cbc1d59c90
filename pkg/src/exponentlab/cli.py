"""Command-line interface: ``exponentlab {exponents,optimize,simulate,reproduce}``.

Exit codes: 0 ok, 2 input error, 3 non-convergence under ``--strict``,
4 a reproduction check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .agent_opt import (
    agent_exponent,
    agent_exponent_pairwise,
    choose_expert,
    optimize_agent_policy,
)
from .config import DEFAULT, Tolerances
from .expert_opt import expert_exponent, optimize_expert_alternating, optimize_expert_grid
from .regions import build_regions
from .report import Report
from .scenario import LossSpec, Policy, ScenarioError, load_scenario
from .simulate import SimConfig, adaptive_grid, simulate_agent0, simulate_expert
from .study import REFERENCE, bundled_scenario, three_expert_scenario

EXIT_OK, EXIT_INPUT, EXIT_STRICT, EXIT_REPRODUCE = 0, 2, 3, 4


class InputError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def parse_weights(text: str, size: int) -> np.ndarray:
    try:
        w = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise InputError(f"--policy: cannot parse {text!r}") from exc
    if len(w) != size:
        raise InputError(f"--policy: expected {size} weights, got {len(w)}")
    if (w < 0).any() or abs(w.sum() - 1) > 1e-6:
        raise InputError("--policy: weights must be nonnegative and sum to 1")
    return w / w.sum()


def _experts(scenario, which: str):
    if which in (None, "all"):
        return list(scenario.experts)
    try:
        return [scenario.expert(int(which))]
    except (KeyError, ValueError) as exc:
        raise InputError(f"--expert: unknown expert {which!r}") from exc


def solve_experts(scenario, tol: Tolerances, guesses=None) -> dict:
    return {
        e.id: optimize_expert_alternating(e, scenario.models(e.id), guesses, tol=tol)
        for e in scenario.experts
    }


def _weights_cols(prefix, scenario, k):
    return [f"{prefix}[{s.id}]" for s in scenario.models(k)]


# ----------------------------------------------------------------- commands


def cmd_exponents(scenario, args, tol) -> Report:
    rep = Report("exponents", scenario.digest())
    summary = None
    for e in _experts(scenario, args.expert):
        models = scenario.models(e.id)
        if args.policy:
            policy = Policy(models, parse_weights(args.policy, len(models)))
        else:
            policy = optimize_expert_alternating(e, models, tol=tol).policy
        ev = expert_exponent(e, policy, build_regions(e.loss, tol), tol)
        if summary is None:
            summary = rep.table("experts", ["expert"] + [f"x[{s.id}]" for s in models]
                                + ["I", "binding_m", "binding_d"])
        summary.add(e.id, *policy.weights, ev.value, *ev.binding)
        cells = rep.table(f"expert_{e.id}_exponents", ["m", "d", "region_rate", "loss_rate", "total"])
        for m in range(scenario.M):
            for d in range(e.d):
                c = e.loss.rates[m, d]
                cells.add(m, d, ev.matrix[m, d], c, ev.matrix[m, d] + c)
        rep.diagnostics[f"expert_{e.id}_converged"] = all(
            inf.converged for row in ev.infima for inf in row
        )
    return rep


def _trace_table(rep, name, runs):
    t = None
    for r_idx, run in enumerate(runs):
        for it, w, val in run.trace:
            if t is None:
                t = rep.table(name, ["run", "iteration"] + [f"x{g}" for g in range(len(w))] + ["exponent"])
            t.add(r_idx, it, *w, val)


def cmd_optimize(scenario, args, tol) -> Report:
    target = args.target
    rep = Report(f"optimize {' '.join(target)}", scenario.digest())
    kind = target[0]
    if kind == "expert":
        if len(target) != 2:
            raise InputError("usage: optimize expert K")
        e = _experts(scenario, target[1])[0]
        models = scenario.models(e.id)
        guesses = [parse_weights(args.policy, len(models))] if args.policy else None
        sol = optimize_expert_alternating(e, models, guesses, tol=tol)
        t = rep.table("expert", ["expert"] + _weights_cols("x", scenario, e.id)
                      + ["I", "iterations", "converged"])
        t.add(e.id, *sol.policy.weights, sol.exponent, sol.total_iterations, sol.converged)
        _trace_table(rep, "trace", sol.runs)
        if args.grid_step:
            grid = optimize_expert_grid(e, models, args.grid_step, tol=tol)
            g = rep.table("grid_oracle", ["expert"] + _weights_cols("x", scenario, e.id) + ["I"])
            g.add(e.id, *grid.policy.weights, grid.exponent)
        rep.diagnostics["converged"] = sol.converged
    elif kind == "agent0":
        if len(target) != 2:
            raise InputError("usage: optimize agent0 K")
        e = _experts(scenario, target[1])[0]
        sol = optimize_expert_alternating(e, scenario.models(e.id), tol=tol)
        models = scenario.models(0)
        c0 = scenario.agent0.rates
        if args.policy:
            pol = Policy(models, parse_weights(args.policy, len(models)))
            ex, iters, ok, runs = agent_exponent(pol, c0, sol.matrix, e.q, e.id, tol), 0, True, []
        else:
            opt = optimize_agent_policy(models, c0, sol.matrix, e.q, expert_id=e.id, tol=tol)
            ex, ok, runs = opt.exponent, opt.converged, opt.runs
            iters = max(runs, key=lambda r: r.exponent.value).iterations
        t = rep.table("agent0", ["expert"] + _weights_cols("x0", scenario, 0) + ["E0", "iterations", "converged"])
        t.add(e.id, *ex.policy.weights, ex.value, iters, ok)
        terms = rep.table("pair_terms", ["i", "j", "d", "value", "s"])
        for term in ex.terms:
            terms.add(term.i, term.j, term.decision[0], term.value, term.s)
        _trace_table(rep, "trace", runs)
        rep.diagnostics["converged"] = ok and sol.converged
    elif kind == "select":
        sols = solve_experts(scenario, tol)
        fixed = parse_weights(args.policy, len(scenario.models(0))) if args.policy else None
        sel = choose_expert(scenario, sols, fixed, tol)
        _selection_table(rep, scenario, sel, "selection")
        rep.diagnostics["chosen_expert"] = sel.chosen
        rep.diagnostics["audit_passes"] = sel.audit_passes()
        rep.diagnostics["converged"] = all(s.converged for s in sols.values()) and all(
            r.converged for r in sel.rows
        )
    else:
        raise InputError(f"unknown optimize target {kind!r}; use expert K, agent0 K or select")
    return rep


def _selection_table(rep, scenario, sel, name):
    width = max(len(r.expert_policy) for r in sel.rows)
    t = rep.table(name, ["expert"] + [f"xk{g}" for g in range(width)] + _weights_cols("x0", scenario, 0)
                  + ["E0", "E0_01", "E0_none", "E0_none_01", "iterations", "chosen"])
    for r in sel.rows:
        xk = list(r.expert_policy.weights) + [None] * (width - len(r.expert_policy))
        t.add(r.expert_id, *xk, *r.agent_policy.weights, r.value, r.value_01,
              r.baseline, r.baseline_01, r.iterations, r.expert_id == sel.chosen)
    return t


def _sim_config(args, exponent: float) -> SimConfig:
    doc = json.loads(Path(args.sim).read_text()) if args.sim else {}
    grid = doc.get("n_grid") or adaptive_grid(exponent)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    return SimConfig(tuple(grid), int(doc.get("trials", 100_000)), seed, int(doc.get("chunk", 20_000)))


def cmd_simulate(scenario, args, tol) -> Report:
    rep = Report("simulate", scenario.digest())
    t = rep.table("slopes", ["agent", "expert", "analytic", "empirical", "stderr", "rel_error",
                             "censored", "fallback_rate"])
    c0 = scenario.agent0.rates
    models0 = scenario.models(0)
    for e in _experts(scenario, args.expert):
        sol = optimize_expert_alternating(e, scenario.models(e.id), tol=tol)
        cfg = _sim_config(args, sol.exponent)
        sim = simulate_expert(e.loss.rates, scenario.priors, sol.policy, cfg)
        s = sim.loss_slope
        t.add("expert", e.id, -sol.exponent, s.slope, s.stderr, _rel(s.slope, -sol.exponent),
              sum(s.censored), None)
        opt = optimize_agent_policy(models0, c0, sol.matrix, e.q, expert_id=e.id, tol=tol)
        cfg0 = _sim_config(args, opt.value)
        asim = simulate_agent0(scenario.priors, c0, opt.policy, cfg0, e.loss.rates, sol.policy,
                               sol.matrix, e.q)
        s = asim.loss_slope
        t.add("agent0", e.id, -opt.value, s.slope, s.stderr, _rel(s.slope, -opt.value),
              sum(s.censored), asim.fallback_rate)
        counts = rep.table(f"expert_{e.id}_loss_curve", ["n", "log_expected_loss", "censored"])
        for n, lv, cen in zip(sim.loss_slope.n, sim.loss_slope.log_values, sim.loss_slope.censored):
            counts.add(n, lv if not cen else f"<= {sim.loss_slope.bound:.6g}", cen)
        freq = rep.table(f"expert_{e.id}_log_frequency", ["n", "m", "d", "analytic_slope", "log_frequency"])
        for (m, d), est in sim.probability_slopes.items():
            for n, lv, cen in zip(est.n, est.log_values, est.censored):
                freq.add(n, m, d, -sol.matrix[m, d], lv if not cen else f"<= {est.bound:.6g}")
        rep.diagnostics[f"expert_{e.id}_sim_config"] = cfg.to_dict()
        if asim.fallback_rate > 0.01:
            rep.diagnostics[f"expert_{e.id}_fallback_flag"] = asim.fallback_rate
    return rep


def _rel(est, ref):
    return abs(est - ref) / abs(ref) if ref else math.nan


def cmd_reproduce(args, tol) -> Report:
    scenario = bundled_scenario()
    rep = Report("reproduce", scenario.digest())
    t0 = time.perf_counter()

    def check(name, expected, actual, tolerance, hard=True):
        ok = abs(actual - expected) <= tolerance
        if not ok:
            rep.failures.append({"criterion": name, "expected": expected, "actual": actual,
                                 "tolerance": tolerance, "hard": hard})
        return ok

    ref = REFERENCE
    guesses = ref["initial_guesses"]
    sols = solve_experts(scenario, tol, guesses)
    sel = choose_expert(scenario, sols, None, tol)
    _selection_table(rep, scenario, sel, "table_ii")
    for r in sel.rows:
        k = r.expert_id
        for a, b in zip(r.expert_policy.weights, ref["expert_policy"][k]):
            check(f"expert {k} policy", b, a, 0.01)
        for a, b in zip(r.agent_policy.weights, ref["agent_policy"][k]):
            check(f"agent policy with expert {k}", b, a, 0.01)
        check(f"agent exponent with expert {k}", ref["agent_exponent"][k], r.value, 1e-3)
    check("chosen expert", ref["chosen"], sel.chosen, 0)

    # agent 0 under the 0-1 loss, fixed balanced policy
    zero_one = scenario.with_agent0_loss(LossSpec.zero_one(scenario.M))
    sel01 = choose_expert(zero_one, sols, (0.5, 0.5), tol)
    _selection_table(rep, zero_one, sel01, "zero_one_agent")
    for r in sel01.rows:
        check(f"0-1 agent exponent with expert {r.expert_id}", ref["zero_one_exponent"][r.expert_id],
              r.value, 1e-3)
    check("0-1 chosen expert", ref["zero_one_chosen"], sel01.chosen, 0)

    fixed = choose_expert(scenario, sols, (0.5, 0.5), tol)
    _selection_table(rep, scenario, fixed, "fixed_agent_policy")
    pref = fixed.row(1).value > fixed.row(3).value
    rep.diagnostics["fixed_policy_prefers_1_over_3"] = pref
    if not pref:
        rep.failures.append({"criterion": "expert 1 preferred over 3 at x0=(0.5,0.5)", "expected": True,
                             "actual": False, "tolerance": 0, "hard": True})

    # one-sided pairwise path and the 0-1 expert's optimality
    cor = rep.table("pairwise_path", ["expert", "E0_regions", "E0_pairwise"])
    x0 = Policy(scenario.models(0), (0.5, 0.5))
    best_pairwise = {}
    for e in scenario.experts:
        general = agent_exponent(x0, np.zeros(scenario.M), sols[e.id].matrix, e.q, e.id, tol).value
        pairwise, _ = agent_exponent_pairwise(e.loss.row_rates(), sols[e.id].policy, x0,
                                                 np.zeros(scenario.M), e.q, tol)
        cor.add(e.id, general, pairwise)
        best_pairwise[e.id] = pairwise
    rep.diagnostics["zero_one_expert_is_best"] = max(best_pairwise, key=best_pairwise.get) == 1

    # delta sweep: grid oracle, alternating iteration counts and the single-guess trap
    sweep = rep.table("delta_sweep", ["delta", "expert", "grid_x1", "grid_x2", "grid_I", "alt_x1",
                                      "alt_x2", "alt_iterations", "single_x1", "single_x2"])
    trapped = False
    for delta in ref["deltas"]:
        sc = three_expert_scenario(delta)
        for e in sc.experts:
            models = sc.models(e.id)
            regions = build_regions(e.loss, tol)
            grid = optimize_expert_grid(e, models, args.grid_step, regions, tol)
            alt = optimize_expert_alternating(e, models, guesses, regions, tol)
            single = optimize_expert_alternating(e, models, [guesses[0]], regions, tol)
            sweep.add(delta, e.id, *grid.policy.weights, grid.exponent, *alt.policy.weights,
                      alt.total_iterations, *single.policy.weights)
            for a, b in zip(grid.policy.weights, ref["expert_policy"][e.id]):
                check(f"delta {delta} expert {e.id} grid policy", b, a, 0.01)
            for a, b in zip(alt.policy.weights, grid.policy.weights):
                check(f"delta {delta} expert {e.id} alternating vs grid", b, a, 0.01)
            if alt.total_iterations > 30:
                rep.failures.append({"criterion": f"delta {delta} expert {e.id} iteration budget",
                                     "expected": 30, "actual": alt.total_iterations,
                                     "tolerance": 30, "hard": alt.total_iterations > 60})
            trapped |= bool(np.max(np.abs(single.policy.weights - grid.policy.weights)) > 0.05)
    rep.diagnostics["single_guess_trap_reproduced"] = trapped
    if not trapped:
        rep.failures.append({"criterion": "single-guess trap", "expected": True, "actual": False,
                             "tolerance": 0, "hard": True})

    # decision-region boundaries of the 0-1 expert
    regions = build_regions(scenario.expert(1).loss, tol)
    bounds = rep.table("regions_expert_1", ["decision", "piece", "row_z1", "row_z2", "rhs"])
    for d, pieces in enumerate(regions.regions):
        for p_idx, piece in enumerate(pieces):
            for row, rhs in zip(piece.G, piece.h):
                bounds.add(d, p_idx, row[0], row[1], rhs)
    rep.diagnostics["seconds"] = round(time.perf_counter() - t0, 1)
    return rep


# --------------------------------------------------------------- plumbing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, help="scenario JSON file (default: bundled study)")
    common.add_argument("--expert", default="all", help="expert id or 'all'")
    common.add_argument("--policy", help="comma-separated policy weights")
    common.add_argument("--sim", type=Path, help="simulation config JSON")
    common.add_argument("--csv", type=Path, help="write one CSV per table into this directory")
    common.add_argument("--json", type=Path, help="write the JSON report to this file")
    common.add_argument("--seed", type=int)
    common.add_argument("--strict", action="store_true", help="exit 3 on non-convergence")
    common.add_argument("--grid-step", type=float, default=None)
    common.add_argument("--tol", type=float, help="stationarity tolerance of inner solvers")

    parser = argparse.ArgumentParser(prog="exponentlab", description="Loss exponents for agents consulting experts.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("exponents", parents=[common], help="expert exponent matrices")
    opt = sub.add_parser("optimize", parents=[common], help="optimize policies or select an expert")
    opt.add_argument("target", nargs="+", help="expert K | agent0 K | select")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo slopes versus analytic exponents")
    sub.add_parser("reproduce", parents=[common], help="rerun the bundled three-expert study")
    return parser


def _error(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tol = replace(DEFAULT, residual=args.tol) if args.tol else DEFAULT
    try:
        if args.command == "reproduce":
            if args.grid_step is None:
                args.grid_step = 0.01
            rep = cmd_reproduce(args, tol)
        else:
            scenario = load_scenario(args.scenario) if args.scenario else bundled_scenario()
            handler = {"exponents": cmd_exponents, "optimize": cmd_optimize, "simulate": cmd_simulate}
            rep = handler[args.command](scenario, args, tol)
    except ScenarioError as exc:
        _error("scenario", str(exc), field=exc.field)
        return EXIT_INPUT
    except (InputError, OSError, KeyError, ValueError) as exc:
        _error("input", str(exc))
        return EXIT_INPUT
    sys.stdout.write(rep.to_text())
    if args.json:
        args.json.write_text(rep.to_json() + "\n")
    if args.csv:
        rep.write_csv(args.csv)
    if any(f.get("hard", True) for f in rep.failures):
        return EXIT_REPRODUCE
    if args.strict and rep.diagnostics.get("converged") is False:
        return EXIT_STRICT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
