"""Batch front-end: configs in, CSV and human-readable reports out.

Subcommands: simulate-observable, energy-search, resources, sweep, selftest.
Config files are flat JSON; command-line flags override file keys.  Exit
codes: 0 success, 2 parse/config error, 3 infeasible plan, 4 unstable ratio
or missing peak.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace

import numpy as np

from .estimator import (
    FilterSampler,
    InfeasiblePlanError,
    NoPeakError,
    UnstableRatioError,
    dump_shot_records,
    estimate_observable,
    denominator_shots,
    numerator_shots,
    parameter_selection,
    search_eigenenergy,
)
from .lcu import SeriesOverflowError, make_basis
from .oracle import (
    MAX_DENSE_QUBITS,
    default_initial_state,
    diagonalize,
    load_state,
    overlap_eta,
)
from .pauli import (
    HamiltonianParseError,
    PauliString,
    PauliTerm,
    build_model,
    load_hamiltonian,
)
from .resources import (
    SWEEP_COLUMNS,
    TaskSpec,
    fitted_gap,
    loglog_slope,
    sweep_row,
)


class ConfigError(ValueError):
    """Bad config file or flag combination (exit 2)."""


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--model", help="model name (tfim, heisenberg_xxz, two_local)")
    p.add_argument("--hamiltonian", help="Hamiltonian file: `coeff pauli` lines")
    p.add_argument("--params", help="JSON dict of model parameters")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float, help="spectral gap Delta")
    p.add_argument("--eta", type=float, help="initial-state overlap eta")
    p.add_argument("--vartheta", type=float)
    p.add_argument("--k", type=int, help="product-formula half order")
    p.add_argument("--shots", type=int, help="override the planned shot count")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--basis", choices=["pauli", "symmetry"])
    p.add_argument("--mode", choices=["sampled", "analytic"])
    p.add_argument("--state", help="initial-state file: `re im` per line")
    p.add_argument("--tau", type=float, help="plan override")
    p.add_argument("--xc", type=float, help="plan override for x_c")
    p.add_argument("--sc", type=int, help="plan override for s_c")
    p.add_argument("--no-grid", action="store_true",
                   help="sample times from the continuous truncated Gaussian")


_DEFAULTS = {
    "model": "heisenberg_xxz", "n": 4, "eps": 0.1, "vartheta": 0.1,
    "k": 1, "seed": 7, "basis": "pauli", "mode": "sampled",
    "task": "property", "observable": None, "omega": None, "eta": None,
    "delta": None, "shots": None, "out": None, "hamiltonian": None,
    "params": None, "state": None, "tau": None, "xc": None, "sc": None,
    "no_grid": False, "methods": None, "axis": None, "values": None,
    "window": None, "grid_spacing": None, "lattice": False,
}


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults <- config file <- explicit flags."""
    cfg = dict(_DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, val in loaded.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = val
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = val
    if isinstance(cfg["params"], str):
        try:
            cfg["params"] = json.loads(cfg["params"])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--params: {exc}") from None
    return cfg


def _build_hamiltonian(cfg: dict):
    if cfg["hamiltonian"]:
        return load_hamiltonian(cfg["hamiltonian"])
    return build_model(cfg["model"], int(cfg["n"]), cfg["params"])


def _parse_observable(text: str | None, n: int) -> list[PauliTerm]:
    """`[coeff*]PAULI` terms joined by '+'; default Z0 Z1."""
    if text is None:
        text = "Z" * min(2, n) + "I" * (n - min(2, n))
    terms = []
    for part in text.split("+"):
        part = part.strip()
        coeff = 1.0
        if "*" in part:
            c_txt, part = part.split("*", 1)
            coeff = float(c_txt)
        terms.append(PauliTerm(coeff, PauliString.from_text(part.strip())))
    if any(t.string.n != n for t in terms):
        raise ConfigError(f"observable qubit count differs from n={n}")
    return terms


def _ground_truth(cfg: dict, H):
    """(psi0, E0, Delta, eta): diagonalize when feasible, else require flags."""
    if H.n <= MAX_DENSE_QUBITS:
        eig = diagonalize(H)
        psi0 = (load_state(cfg["state"], H.n) if cfg["state"]
                else default_initial_state(eig))
        delta = cfg["delta"] if cfg["delta"] is not None else eig.ground_gap()
        eta = cfg["eta"] if cfg["eta"] is not None else overlap_eta(eig, psi0)
        omega = cfg["omega"] if cfg["omega"] is not None else float(eig.energies[0])
        return psi0, omega, float(delta), float(eta)
    for key in ("delta", "eta", "omega"):
        if cfg[key] is None:
            raise ConfigError(f"n > {MAX_DENSE_QUBITS}: --{key} is required")
    if cfg["state"] is None:
        raise ConfigError(f"n > {MAX_DENSE_QUBITS}: --state is required")
    return (load_state(cfg["state"], H.n), float(cfg["omega"]),
            float(cfg["delta"]), float(cfg["eta"]))


def _make_plan(cfg: dict, delta: float, eta: float, lam: float,
               O_norm: float, O_norm1: float):
    plan = parameter_selection(
        Delta=delta, eta=eta, eps=float(cfg["eps"]),
        O_norm=O_norm, O_norm1=O_norm1, vartheta=float(cfg["vartheta"]),
        k=int(cfg["k"]), basis=cfg["basis"], lam=lam,
        use_grid=not cfg["no_grid"],
    )
    overrides = {}
    if cfg["tau"] is not None:
        overrides["tau"] = float(cfg["tau"])
    if cfg["xc"] is not None:
        overrides["x_c"] = float(cfg["xc"])
    if cfg["sc"] is not None:
        overrides["s_c"] = int(cfg["sc"])
    return replace(plan, **overrides) if overrides else plan


def _echo_plan(plan, stream) -> None:
    print(f"plan: tau={plan.tau:.6g} x_c={plan.x_c:.6g} k={plan.k} "
          f"s_c={plan.s_c} N_s={plan.N_s} basis={plan.basis_name} "
          f"eps_tau={plan.eps_tau:.4g} eps_n={plan.eps_n:.4g} "
          f"grid_step={plan.grid_step if plan.grid_step is None else round(plan.grid_step, 6)}",
          file=stream)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate_observable(args) -> int:
    cfg = _resolve(args)
    H = _build_hamiltonian(cfg)
    terms = _parse_observable(cfg["observable"], H.n)
    norm1 = sum(abs(t.coeff) for t in terms)
    psi0, omega, delta, eta = _ground_truth(cfg, H)
    basis = make_basis(H, cfg["basis"])
    plan = _make_plan(cfg, delta, eta, basis.lam, norm1, norm1)
    sampler = FilterSampler(basis, plan)
    rng = np.random.default_rng(int(cfg["seed"]))
    shots = int(cfg["shots"]) if cfg["shots"] is not None else None
    report = estimate_observable(sampler, psi0, terms, omega, rng,
                                 mode=cfg["mode"], shots=shots)
    _echo_plan(plan, sys.stdout)
    print(f"omega={report.omega:.8g} value={report.ratio:.8g} "
          f"stderr={report.stderr_ratio:.3g}")
    print(f"N_hat={report.N_hat.real:.6g} (stderr {report.stderr_N:.3g})  "
          f"D_hat={report.D_hat:.6g} (stderr {report.stderr_D:.3g})  "
          f"shots={report.shots_N}+{report.shots_D}")
    for note in report.notes:
        print(f"note: {note}")
    if cfg["out"]:
        rng2 = np.random.default_rng(int(cfg["seed"]) + 1)
        n_rec = shots if shots is not None else plan.N_s
        records = numerator_shots(sampler, psi0, terms, min(n_rec, 10000),
                                  rng2, cfg["mode"])
        dump_shot_records(records, cfg["out"])
        print(f"shot records written to {cfg['out']}")
    return 0


def cmd_energy_search(args) -> int:
    cfg = _resolve(args)
    H = _build_hamiltonian(cfg)
    psi0, omega, delta, eta = _ground_truth(cfg, H)
    basis = make_basis(H, cfg["basis"])
    # the search needs a filter sharp on the scale of the gap: plan at Delta/2
    plan = _make_plan(cfg, delta / 2.0, eta, basis.lam, 1.0, 1.0)
    window = cfg["window"] or (omega - 2.0 * delta, omega + 2.0 * delta)
    spacing = cfg["grid_spacing"] or delta / 4.0
    if plan.grid_step is not None:
        # discretized times alias D(omega) with period 2 pi/(tau b): refine
        # the grid so one period spans the whole search window
        span = float(window[1]) - float(window[0])
        step = 2.0 * math.pi / (plan.tau * span + plan.x_c + plan.tau)
        plan = replace(plan, grid_step=min(plan.grid_step, step))
    sampler = FilterSampler(basis, plan)
    rng = np.random.default_rng(int(cfg["seed"]))
    shots = int(cfg["shots"]) if cfg["shots"] is not None else None
    e_hat, omegas, curve, stderr = search_eigenenergy(
        sampler, psi0, (float(window[0]), float(window[1])), rng,
        float(spacing), mode=cfg["mode"], shots=shots)
    _echo_plan(plan, sys.stdout)
    print(f"energy_estimate={e_hat:.8g} grid_spacing={spacing:.6g} "
          f"window=[{window[0]:.6g},{window[1]:.6g}]")
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["omega", "D", "stderr"])
            for w, d, se in zip(omegas, curve, stderr):
                wr.writerow([f"{w:.12g}", f"{d:.12g}", f"{se:.12g}"])
        print(f"search curve written to {cfg['out']}")
    return 0


def _methods_list(cfg: dict) -> list[str]:
    methods = cfg["methods"]
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    if not methods:
        raise ConfigError("no methods given (e.g. --methods rlcu,qsp)")
    return list(methods)


def _task_spec(cfg: dict, delta: float, eta: float) -> TaskSpec:
    return TaskSpec(task=cfg["task"], eps=float(cfg["eps"]), Delta=delta,
                    eta=eta, vartheta=float(cfg["vartheta"]), k=int(cfg["k"]))


def _resolve_gap_eta(cfg: dict, H) -> tuple[float, float]:
    """Gap and overlap for formula evaluation: flags, fit, or exact."""
    delta = cfg["delta"]
    eta = cfg["eta"] if cfg["eta"] is not None else 0.5
    if delta is None:
        if cfg["model"] == "heisenberg_xxz" and not cfg["hamiltonian"]:
            delta = fitted_gap(int(cfg["n"]))
        elif H.n <= MAX_DENSE_QUBITS:
            delta = diagonalize(H).ground_gap()
        else:
            raise ConfigError("--delta required for this model size")
    return float(delta), float(eta)


def _write_rows(rows: list[dict], out: str | None) -> None:
    fh = open(out, "w", encoding="utf-8", newline="") if out else sys.stdout
    try:
        wr = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        wr.writeheader()
        for row in rows:
            wr.writerow(row)
    finally:
        if out:
            fh.close()


def cmd_resources(args) -> int:
    cfg = _resolve(args)
    methods = sorted(_methods_list(cfg))
    H = _build_hamiltonian(cfg)
    delta, eta = _resolve_gap_eta(cfg, H)
    spec = _task_spec(cfg, delta, eta)
    rows = [sweep_row(m, H.stats, spec, H.n, lattice=bool(cfg["lattice"]))
            for m in methods]
    _write_rows(rows, cfg["out"])
    return 0


def sweep_rows(methods: list[str], axis: str, values: list[float], cfg: dict
               ) -> tuple[list[dict], dict[str, float]]:
    """Rows plus per-method log-log slope of cnot against the natural scale.

    The slope abscissa is 1/eps for an eps sweep, lambda/Delta for a Delta
    sweep, and n for an n sweep.
    """
    if axis not in ("n", "eps", "Delta"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    if list(values) != sorted(values):
        raise ConfigError("sweep values must be ascending")
    rows: list[dict] = []
    xs: dict[str, list[float]] = {m: [] for m in methods}
    ys: dict[str, list[float]] = {m: [] for m in methods}
    for val in values:
        point = dict(cfg)
        if axis == "n":
            point["n"] = int(val)
            point["delta"] = cfg["delta"] if cfg["delta"] is not None \
                else fitted_gap(int(val))
        elif axis == "eps":
            point["eps"] = float(val)
        else:
            point["delta"] = float(val)
        H = _build_hamiltonian(point)
        delta, eta = _resolve_gap_eta(point, H)
        spec = _task_spec(point, delta, eta)
        for m in sorted(methods):
            row = sweep_row(m, H.stats, spec, H.n, lattice=bool(cfg["lattice"]))
            rows.append(row)
            cnot = row["cnot"]
            if cnot:
                if axis == "eps":
                    xs[m].append(1.0 / float(val))
                elif axis == "Delta":
                    xs[m].append(H.stats.lam / float(val))
                else:
                    xs[m].append(float(val))
                ys[m].append(float(cnot))
    rows.sort(key=lambda r: (r["method"], float(r[{"n": "n", "eps": "eps",
                                                   "Delta": "Delta"}[axis]])))
    slopes = {m: loglog_slope(xs[m], ys[m])
              for m in methods if len(xs[m]) >= 2}
    return rows, slopes


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    methods = sorted(_methods_list(cfg))
    axis = cfg["axis"]
    values = cfg["values"]
    if isinstance(values, str):
        values = [float(v) for v in values.split(",") if v.strip()]
    if not axis or not values:
        raise ConfigError("sweep needs --axis and --values")
    rows, slopes = sweep_rows(methods, axis, [float(v) for v in values], cfg)
    _write_rows(rows, cfg["out"])
    for m in sorted(slopes):
        print(f"slope {m} {slopes[m]:.6g}")
    return 0


def cmd_selftest(args) -> int:
    from .resources import block_encoding_costs, qsp_degree, rz_to_t
    failures = []

    def check(name, got, want):
        ok = got == want
        print(f"{'PASS' if ok else 'FAIL'} {name}: got {got}, want {want}")
        if not ok:
            failures.append(name)

    blocks = block_encoding_costs(L=8, n=5, eps_ae=2.0 ** -8)
    check("select_x(L=8)", (blocks["select_x"].cnot, blocks["select_x"].t,
                            blocks["select_x"].hadamard), (43, 28, 14))
    check("prepare(L=8,2^-8)", (blocks["prepare"].cnot, blocks["prepare"].t),
          (230, 88))
    check("reflection(n=5)", (blocks["reflection"].cnot, blocks["reflection"].t,
                              blocks["reflection"].ancilla), (18, 23, 1))
    check("qsp degree(0.05,1e-3)", qsp_degree(0.05, 1e-3), 267)
    check("rz_to_t(2^-10)", rz_to_t(2.0 ** -10), 30)
    check("rz_to_t rus(2^-10)", rz_to_t(2.0 ** -10, "rus"), 21)

    from .pauli import build_model
    from .oracle import apply_filter_exact, diagonalize, default_initial_state
    H = build_model("tfim", 3)
    eig = diagonalize(H)
    psi0 = default_initial_state(eig)
    g_psi = apply_filter_exact(eig, psi0, 0.7, float(eig.energies[0]))
    coeffs = eig.vectors.conj().T @ psi0
    target = eig.vectors @ (np.exp(-0.49 * (eig.energies - eig.energies[0]) ** 2)
                            * coeffs)
    err = float(np.linalg.norm(g_psi - target))
    ok = err < 1e-12
    print(f"{'PASS' if ok else 'FAIL'} exact filter action: error {err:.2e}")
    if not ok:
        failures.append("filter")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filterlab",
        description="random-sampling spectral filtering: simulation and "
                    "fault-tolerant resource comparison",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-observable",
                       help="estimate <O> on the filtered state")
    _add_shared(p)
    p.add_argument("--observable", help="e.g. 'ZZII' or '0.5*XXII+0.5*YYII'")
    p.add_argument("--omega", type=float, help="filter center energy")
    p.set_defaults(func=cmd_simulate_observable)

    p = sub.add_parser("energy-search", help="locate the eigenenergy peak")
    _add_shared(p)
    p.add_argument("--omega", type=float, help="window center override")
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--grid-spacing", type=float, dest="grid_spacing")
    p.set_defaults(func=cmd_energy_search)

    p = sub.add_parser("resources", help="gate counts for one parameter point")
    _add_shared(p)
    p.add_argument("--methods", help="comma list: rlcu,qpe-trotter,qsp,qpe-qw,qetu")
    p.add_argument("--task", choices=["property", "energy"])
    p.add_argument("--lattice", action="store_true")
    p.set_defaults(func=cmd_resources)

    p = sub.add_parser("sweep", help="gate counts along one axis, with slopes")
    _add_shared(p)
    p.add_argument("--methods")
    p.add_argument("--task", choices=["property", "energy"])
    p.add_argument("--lattice", action="store_true")
    p.add_argument("--axis", choices=["n", "eps", "Delta"])
    p.add_argument("--values", help="comma list, ascending")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="golden-number and filter sanity checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, HamiltonianParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InfeasiblePlanError, SeriesOverflowError) as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return 3
    except (UnstableRatioError, NoPeakError) as exc:
        print(f"unstable estimate: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
