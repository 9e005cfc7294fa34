"""Command-line runner: run specs in, reports, tables and data files out.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 regression mismatch.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from . import branch_dynamics as bd
from . import circuit_model as cm
from . import error_budget as eb
from . import gate_design as gd
from . import stochastic_lab as sl
from . import units
from .runspec import (COMMANDS, FORMATS, NUMERIC_FIELDS, SWEEPABLE, RunSpec, SpecError,
                      default_spec, parse_runspec)

SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_MISMATCH = 3

NUMERICAL_ERRORS = (bd.NumericalError, bd.ResolutionError, eb.ConvergenceError, eb.InfeasibleError,
                    FloatingPointError, ArithmeticError)


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise cm.ConfigError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# serialization helpers


def number(value):
    """JSON-safe float: non-finite values become strings."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _numbers(values):
    return [number(v) for v in values]


def resonator_json(res: cm.DerivedResonator) -> dict:
    element = "C_r_loaded_F" if res.kind == "electric" else "L_r_loaded_H"
    return {
        "kind": res.kind,
        element: number(res.loaded_element),
        "omega_r_rad_per_s": number(res.mean_frequency),
        "f_r_Hz": number(res.mean_frequency / (2 * math.pi)),
        "Z_r_ohm": number(res.impedance),
        "n_bar_dimless": number(res.thermal_occupation),
        "tau_c_dimless": number(res.tau_c),
        "state_frequencies_rad_per_s": [_numbers(pair) for pair in res.state_frequencies],
    }


def coupling_json(coupling: cm.CouplingDerived) -> dict:
    return {
        "eta_plus_dimless": _numbers(coupling.eta_plus),
        "eta_minus_dimless": _numbers(coupling.eta_minus),
        "dispersive_shift_dimless": _numbers(coupling.dispersive_shift),
        "beta_r_dimless": number(coupling.beta_r),
        "beta_q_g_dimless": _numbers(coupling.beta_q_g),
        "beta_q_e_dimless": _numbers(coupling.beta_q_e),
    }


def closure_json(closure: gd.ClosureSolution) -> dict:
    return {
        "delta_m_dimless": number(closure.delta_m),
        "m_count": closure.m,
        "k_count": closure.k,
        "tau_pi_dimless": number(closure.tau_pi),
        "t_pi_s": number(closure.t_pi),
    }


def budget_inputs_json(inputs: eb.BudgetInputs) -> dict:
    return {
        "delta_m_dimless": number(inputs.delta_m),
        "m_count": int(inputs.m),
        "eta_minus_dimless": number(inputs.eta_minus),
        "Q_dimless": number(inputs.quality),
        "n_bar_dimless": number(inputs.n_bar),
        "tau_c_dimless": number(inputs.tau_c),
        "dispersive_shift_dimless": number(inputs.dispersive_shift),
        "omega_r_rad_per_s": number(inputs.omega_r),
        "n_gamma_dimless": number(inputs.n_gamma),
    }


BUDGET_FIELDS = (
    ("Gamma_phi_per_s", lambda b: b.dephasing_rate),
    ("Gamma_phi_inv_s", lambda b: b.dephasing_time),
    ("t_pi_s", lambda b: b.t_pi),
    ("eps_dalpha_dimless", lambda b: b.eps_dalpha),
    ("eps_force_dimless", lambda b: b.eps_force),
    ("eps_2qb_dimless", lambda b: b.eps_total),
    ("delta_hm_Hz", lambda b: b.delta_hm / (2 * math.pi)),
    ("n_gamma_dimless", lambda b: b.n_gamma),
    ("x_dimless", lambda b: b.x),
    ("dalpha_sq_dimless", lambda b: b.dalpha_sq),
)


def budget_json(budget: eb.ErrorBudget) -> dict:
    out = {key: number(getter(budget)) for key, getter in BUDGET_FIELDS}
    out["eps_hm_dimless"] = _numbers(budget.eps_hm)
    return out


def decomposition_json(dec: gd.PhaseDecomposition) -> dict:
    return {
        "identity_rad": number(dec.identity),
        "single_rad": _numbers(dec.single),
        "conditional_rad": number(dec.conditional_phase) if dec.n_qubits > 1 else "nan",
        "coefficients_rad": {",".join(map(str, key)) or "identity": number(v)
                             for key, v in dec.coefficients.items()},
    }


def outcome_json(outcome: bd.GateOutcome) -> dict:
    return {
        "method": outcome.method,
        "closure_defect_dimless": number(outcome.closure_defect),
        "residual_minus_re_dimless": number(outcome.residual_minus.real),
        "residual_minus_im_dimless": number(outcome.residual_minus.imag),
        "residual_plus_re_dimless": number(outcome.residual_plus.real),
        "residual_plus_im_dimless": number(outcome.residual_plus.imag),
        "residual_sq_dimless": number(outcome.residual_sq),
        "tau_final_dimless": number(outcome.tau_final),
        "branches": [
            {"branch": b.name, "phi_g_rad": number(p), "final_re_dimless": number(a.real),
             "final_im_dimless": number(a.imag)}
            for b, p, a in zip(outcome.branches, outcome.final_phi, outcome.final_alpha)
        ],
    }


def mc_json(result: sl.McResult) -> dict:
    out = {
        "estimate_dimless": number(result.estimate),
        "standard_error_dimless": number(result.standard_error),
        "reference_dimless": number(result.reference),
        "replicas_count": int(result.replicas),
        "agreement": bool(result.agreement),
        "inconclusive": bool(result.inconclusive),
    }
    for key, value in sorted(result.extra.items()):
        out[f"{key}_dimless"] = number(value)
    return out


# ---------------------------------------------------------------------------
# resolving a spec into physical inputs


@dataclass
class Setup:
    preset: cm.ModalityPreset | None
    circuit: cm.CircuitSpec
    resonator: cm.DerivedResonator
    coupling: cm.CouplingDerived
    aux: cm.AuxEstimates
    base_inputs: eb.BudgetInputs
    inputs: eb.BudgetInputs


def resolve(spec: RunSpec) -> Setup:
    """Circuit, reduction and budget inputs after applying every override."""
    preset = cm.load_preset(spec.preset) if spec.preset else None
    circuit = preset.circuit if preset else cm.circuit_from_json(spec.circuit)
    res = cm.reduce(circuit)
    coupling = cm.coupling_coefficients(circuit, res)
    aux = cm.aux_estimates(circuit, res, coupling)
    if preset is not None:
        inputs = eb.budget_inputs_from_preset(preset)
    else:
        missing = [n for n in ("delta_m", "m", "eta_minus") if spec.get("drive", n) is None]
        if missing:
            raise cm.ConfigError(f"an inline circuit needs drive fields {missing}")
        inputs = eb.BudgetInputs(
            delta_m=spec.get("drive", "delta_m"), m=spec.get("drive", "m"),
            eta_minus=spec.get("drive", "eta_minus"), quality=circuit.quality,
            n_bar=res.thermal_occupation, tau_c=res.tau_c,
            dispersive_shift=coupling.dispersive_shift[0], omega_r=res.mean_frequency,
            higher_modes=circuit.higher_modes, n_gamma=aux.photon_equivalent)
    return Setup(preset, circuit, res, coupling, aux, inputs, apply_overrides(inputs, spec, circuit))


def apply_overrides(inputs: eb.BudgetInputs, spec: RunSpec, circuit: cm.CircuitSpec) -> eb.BudgetInputs:
    values = dict(inputs.__dict__)
    for name in ("delta_m", "m", "eta_minus"):
        if spec.get("drive", name) is not None:
            values[name] = spec.get("drive", name)
    over = spec.sections.get("overrides", {})
    if "Q" in over:
        values["quality"] = over["Q"]
    if "dispersive_shift" in over:
        values["dispersive_shift"] = over["dispersive_shift"]
    if "f_r" in over:
        values["omega_r"] = 2 * math.pi * over["f_r"]
    if "f_r" in over or "T_r" in over:
        values["n_bar"], values["tau_c"] = cm.thermal_stats(values["omega_r"],
                                                            over.get("T_r", circuit.temperature))
    for name in ("n_bar", "tau_c"):
        if name in over:
            values[name] = over[name]
    values["m"] = int(values["m"])
    return eb.BudgetInputs(**values)


def drive_program(spec: RunSpec, inputs: eb.BudgetInputs) -> bd.DriveProgram:
    """Exactly closing program from explicit ``(m, k)`` or the detuning hint."""
    echo = spec.get("drive", "echo", "none")
    m = spec.get("drive", "m", inputs.m)
    k = spec.get("drive", "k")
    if echo == "none":
        if k is None:
            k = gd.closure_solutions(inputs.delta_m, [m])[0].k
        return bd.DriveProgram.single(m, k)
    if m % 2 or (k is not None and k % 2):
        raise cm.ConfigError("an echo program needs even total m and k")
    k_seg = gd.closure_solutions(inputs.delta_m, [m // 2])[0].k if k is None else k // 2
    return bd.DriveProgram.echo(m // 2, k_seg, echo)


# ---------------------------------------------------------------------------
# commands


@dataclass
class Outcome:
    results: dict
    table: str
    csv_text: str | None = None
    files: dict | None = None
    exit_code: int = EXIT_OK
    messages: tuple = ()


def _lines(title: str, pairs) -> str:
    width = max((len(k) for k, _ in pairs), default=0)
    body = "\n".join(f"  {k:<{width}}  {_fmt(v)}" for k, v in pairs)
    return f"{title}\n{body}"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def cmd_reduce(spec: RunSpec) -> Outcome:
    setup = resolve(spec)
    aux = {
        "squid_leakage_probability_dimless": number(setup.aux.squid_leakage_probability),
        "residual_jc_g_dimless": number(setup.aux.residual_jc_g),
        "photon_equivalent_dimless": number(setup.aux.photon_equivalent),
    }
    results = {"derived_resonator": resonator_json(setup.resonator),
               "coupling": coupling_json(setup.coupling), "aux": aux}
    pairs = [(k, v) for section in results.values() for k, v in section.items()]
    return Outcome(results, _lines("reduced circuit", pairs))


def cmd_budget(spec: RunSpec) -> Outcome:
    setup = resolve(spec)
    weight = spec.get("overrides", "dephasing_weight", 2.0)
    budget = eb.compute_budget(setup.inputs, dephasing_weight=weight)
    results = {"budget_inputs": budget_inputs_json(setup.inputs), "budget": budget_json(budget)}
    return Outcome(results, _lines("error budget", list(results["budget"].items())),
                   _budget_csv([], [((), budget)]))


def _budget_csv(keys: list[str], rows) -> str:
    """One row per point: swept values then every budget field."""
    handle = io.StringIO()
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(keys + [k for k, _ in BUDGET_FIELDS])
    for point, budget in rows:
        writer.writerow([repr(v) for v in point] + [repr(float(g(budget))) for _, g in BUDGET_FIELDS])
    return handle.getvalue()


def cmd_design(spec: RunSpec) -> Outcome:
    setup = resolve(spec)
    inputs = setup.inputs
    constraints = gd.DesignConstraints(
        eta_max=spec.get("overrides", "eta_max", inputs.eta_minus),
        quality=inputs.quality, n_bar=inputs.n_bar, dispersive_shift=inputs.dispersive_shift,
        omega_r=inputs.omega_r, tau_c=inputs.tau_c,
        m_range=(spec.get("overrides", "m_min", 1), spec.get("overrides", "m_max", 100)),
        echo=spec.get("drive", "echo", "none") == "force",
    )
    result = gd.optimize(constraints)
    results = {"feasible": result.feasible, "message": result.message,
               "scanned_count": result.scanned}
    if result.feasible:
        results["closure"] = closure_json(result.closure)
        results["eta_minus_dimless"] = number(result.eta_minus)
        results["budget"] = budget_json(result.budget)
        pairs = list(results["closure"].items()) + [("eta_minus_dimless", results["eta_minus_dimless"])]
        pairs += list(results["budget"].items())
    else:
        pairs = [("feasible", False), ("message", result.message)]
    return Outcome(results, _lines("gate design", pairs))


def _gate_coupling(spec: RunSpec, inputs: eb.BudgetInputs, program: bd.DriveProgram,
                   ideal_amplitude: bool) -> cm.CouplingDerived:
    eta = spec.get("drive", "eta_minus")
    if eta is None:
        eta = (gd.amplitude_for_cphase(program.delta_m, program.m) if ideal_amplitude
               else inputs.eta_minus)
    return cm.CouplingDerived.uniform(2, eta, spec.get("drive", "eta_plus", 0.0),
                                      inputs.dispersive_shift)


def cmd_simulate(spec: RunSpec) -> Outcome:
    setup = resolve(spec)
    inputs = setup.inputs
    program = drive_program(spec, inputs)
    coupling = _gate_coupling(spec, inputs, program, ideal_amplitude=True)
    branches = bd.enumerate_branches(2)
    method = spec.get("simulate", "method", "exact")
    outcome = bd.run_gate(program, branches, coupling, inputs.quality, method=method)
    dec = gd.phase_decomposition(outcome)
    frame = spec.get("simulate", "frame", "resonator")
    traj = bd.gate_trajectory(program, branches, coupling, inputs.quality, frame=frame,
                              samples_per_cycle=spec.get("simulate", "samples_per_cycle", 64))
    closure = gd.ClosureSolution.from_integers(program.m, program.k, inputs.omega_r)
    results = {
        "program": {"segments_count": len(program.segments),
                    "echo": spec.get("drive", "echo", "none"),
                    "eta_minus_dimless": number(coupling.eta_minus[0]),
                    "eta_plus_dimless": number(coupling.eta_plus[0]),
                    "dispersive_shift_dimless": number(coupling.dispersive_shift[0]),
                    "Q_dimless": number(inputs.quality)},
        "closure": closure_json(closure),
        "gate": outcome_json(outcome),
        "phase_decomposition": decomposition_json(dec),
    }
    files = {}
    buffer = io.StringIO()
    for i, name in enumerate(traj.branches):
        handle = io.StringIO()
        traj.write_csv(handle, i)
        files[f"trajectory_{name}.csv"] = handle.getvalue()
        # the combined CSV keeps a single header
        buffer.write(handle.getvalue() if i == 0 else handle.getvalue().split("\n", 1)[1])
        if spec.get("simulate", "plots", True):
            plot = io.StringIO()
            traj.write_phase_plot(plot, i)
            files[f"phase_{name}.dat"] = plot.getvalue()
    pairs = [("closure_defect_dimless", results["gate"]["closure_defect_dimless"]),
             ("conditional_rad", results["phase_decomposition"]["conditional_rad"]),
             ("single_rad", results["phase_decomposition"]["single_rad"]),
             ("residual_sq_dimless", results["gate"]["residual_sq_dimless"])]
    return Outcome(results, _lines("gate simulation", pairs), buffer.getvalue(), files)


def cmd_mc(spec: RunSpec) -> Outcome:
    setup = resolve(spec)
    inputs = setup.inputs
    estimator = spec.get("mc", "estimator", "gate_phase_error")
    replicas = spec.get("mc", "replicas", 1000)
    common = dict(replicas=replicas, master_seed=spec.seed, estimator=estimator,
                  quality=inputs.quality, tau_c=inputs.tau_c,
                  noise_scale=spec.get("mc", "noise_scale", 1.0),
                  steps_per_cycle=spec.get("mc", "steps_per_cycle", 200), threads=spec.threads,
                  omega_r=inputs.omega_r, n_bar=inputs.n_bar,
                  dispersive_shift=inputs.dispersive_shift)
    if estimator == "gate_phase_error":
        program = drive_program(spec, inputs)
        coupling = _gate_coupling(spec, inputs, program, ideal_amplitude=False)
        result = sl.mc_gate_error(sl.EnsembleConfig(program=program, coupling=coupling, **common))
    elif estimator == "dephasing":
        result = sl.mc_photon_dephasing(sl.EnsembleConfig(**common))
    else:
        result = sl.equilibrium_check(inputs.quality, inputs.tau_c, sl.EnsembleConfig(**common))
    results = {"estimator": estimator, "mc": mc_json(result)}
    handle = io.StringIO()
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(("replica", "estimate", "seed"))
    for i, value in enumerate(result.samples):
        writer.writerow((i, repr(float(value)), f"{spec.seed}:{i}"))
    text = handle.getvalue()
    return Outcome(results, _lines(f"monte carlo ({estimator})", list(results["mc"].items())),
                   text, {"mc_samples.csv": text})


def cmd_table1(spec: RunSpec, check: bool = False) -> Outcome:
    rows = eb.table_rows()
    results = {"rows": [], "all_within_tolerance": all(r.ok for r in rows)}
    header = ["row"] + [c[0] for c in eb.TABLE_COLUMNS]
    text_rows = [header]
    bad = []
    for row in rows:
        cells = {}
        for cell in row.cells:
            cells[cell.column] = {"computed": number(cell.computed), "reference": number(cell.reference),
                                  "tolerance_kind": cell.kind, "tolerance": cell.tolerance,
                                  "ok": cell.ok}
            if not cell.ok:
                bad.append(cell)
        results["rows"].append({"name": row.name, "label": row.label, "ok": row.ok, "cells": cells,
                                "budget": budget_json(row.budget)})
        line = [row.name]
        for key, getter, _, _ in eb.TABLE_COLUMNS:
            flag = "" if cells.get(key, {}).get("ok", True) else "*"
            line.append(f"{getter(row.budget):.3g}{flag}")
        text_rows.append(line)
    widths = [max(len(r[i]) for r in text_rows) for i in range(len(header))]
    table = "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in text_rows)
    handle = io.StringIO()
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["row", "column", "computed", "reference", "ok"])
    for row in rows:
        for cell in row.cells:
            writer.writerow([row.name, cell.column, repr(cell.computed), repr(cell.reference), cell.ok])
    messages = tuple(
        f"mismatch {c.row}.{c.column}: computed {c.computed:.4g}, reference {c.reference:.4g} "
        f"({'factor' if c.kind == 'factor' else 'relative'} tolerance {c.tolerance:g})"
        for c in bad)
    code = EXIT_MISMATCH if (check and bad) else EXIT_OK
    return Outcome(results, table, handle.getvalue(), None, code, messages if check else ())


def sweep_points(spec: RunSpec) -> tuple[list[str], list[tuple]]:
    names = sorted(spec.sweep)
    return names, list(itertools.product(*(spec.sweep[n] for n in names)))


def _sweep_budget(spec: RunSpec, setup: Setup, names, point) -> eb.ErrorBudget:
    variant = spec
    for name, value in zip(names, point):
        variant = variant.with_value(SWEEPABLE[name], name, value)
    inputs = apply_overrides(setup.base_inputs, variant, setup.circuit)
    return eb.compute_budget(inputs, dephasing_weight=variant.get("overrides", "dephasing_weight", 2.0))


def cmd_sweep(spec: RunSpec) -> Outcome:
    setup = resolve(spec)
    names, points = sweep_points(spec)
    threads = sl._thread_count(spec.threads)
    work = lambda point: _sweep_budget(spec, setup, names, point)  # noqa: E731
    if threads == 1 or len(points) < 2:
        budgets = [work(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            budgets = list(pool.map(work, points))
    keys = [units.from_si(n, 0.0, NUMERIC_FIELDS[SWEEPABLE[n]][n])[0] for n in names]
    text = _budget_csv(keys, zip(points, budgets))
    results = {"points_count": len(points), "swept": keys}
    return Outcome(results, _lines("sweep", [("points", len(points)), ("swept", keys)]) + "\n" + text,
                   text, {"sweep.csv": text})


COMMAND_TABLE = {
    "reduce": cmd_reduce,
    "design": cmd_design,
    "simulate": cmd_simulate,
    "budget": cmd_budget,
    "mc": cmd_mc,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# reports


def build_report(spec: RunSpec, outcome: Outcome, timestamp: str | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": spec.command,
        "inputs": spec.to_json(),
        "results": outcome.results,
        "provenance": {
            "package_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "seed_count": spec.seed,
            "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        },
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_outputs(out_dir: str, spec: RunSpec, report_text: str, files: dict | None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    targets = {f"{spec.command}_report.json": report_text}
    targets.update(files or {})
    for name, text in targets.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as handle:
            handle.write(text)


def execute(spec: RunSpec, check: bool = False) -> Outcome:
    if spec.command == "table1":
        return cmd_table1(spec, check)
    return COMMAND_TABLE[spec.command](spec)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="longigate", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--preset", help="catalog row name")
    parser.add_argument("--config", help="run spec (or earlier report) JSON file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--threads", type=int, help="worker threads (default LONGIGATE_THREADS or all CPUs)")
    parser.add_argument("--out", help="directory for the JSON report and data files")
    parser.add_argument("--format", choices=FORMATS, help="standard output format")
    parser.add_argument("--check", action="store_true", help="table1: exit 3 on any cell out of tolerance")
    parser.add_argument("--replicas", type=int, help="mc: replica count")
    parser.add_argument("--emit-spec", action="store_true",
                        help="print the fully populated default run spec and exit")
    return parser


def spec_from_args(args) -> RunSpec:
    if args.config:
        spec = parse_runspec(args.config)
        if spec.command != args.command:
            raise cm.ConfigError(f"run spec is for {spec.command!r}, not {args.command!r}")
    else:
        spec = default_spec(args.command, args.preset or "flux_q25k")
    if args.preset:
        if args.preset not in cm.list_presets():
            raise cm.ConfigError(f"unknown preset {args.preset!r}; valid names: "
                                 + ", ".join(cm.list_presets()))
        spec.preset, spec.circuit = args.preset, None
    if args.seed is not None:
        spec.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise cm.ConfigError("--threads must be at least 1")
        spec.threads = args.threads
    if args.replicas is not None:
        if args.replicas < 2:
            raise cm.ConfigError("--replicas must be at least 2")
        spec = spec.with_value("mc", "replicas", args.replicas)
    if args.out is not None:
        spec = spec.with_value("output", "dir", args.out)
    if args.format is not None:
        spec = spec.with_value("output", "format", args.format)
    return spec


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        spec = spec_from_args(args)
        if args.emit_spec:
            stdout.write(json.dumps(spec.to_json(), indent=2, sort_keys=True) + "\n")
            return EXIT_OK
        outcome = execute(spec, args.check)
        report_text = dump_report(build_report(spec, outcome))
        fmt = spec.get("output", "format", "table")
        if fmt == "json":
            stdout.write(report_text)
        elif fmt == "csv":
            if outcome.csv_text is None:
                raise cm.ConfigError(f"command {spec.command!r} has no CSV output")
            stdout.write(outcome.csv_text)
        else:
            stdout.write(outcome.table + "\n")
        out_dir = spec.get("output", "dir")
        if out_dir:
            try:
                write_outputs(out_dir, spec, report_text, outcome.files)
            except OSError as exc:
                raise cm.ConfigError(f"cannot write outputs to {out_dir!r}: {exc.strerror}") from exc
        for message in outcome.messages:
            stderr.write(message + "\n")
        return outcome.exit_code
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    except SpecError as exc:
        for line in str(exc).splitlines():
            stderr.write(f"config error: {line}\n")
        return EXIT_CONFIG
    except (cm.ConfigError, units.UnitError) as exc:
        stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERICAL


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
