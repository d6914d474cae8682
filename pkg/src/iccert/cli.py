"""Command-line entry point: ``iccert <subcommand> CONFIG [options]``.

Exit codes: 0 sound-pass (or success), 2 sample-pass or gate failure,
1 fail or violation, 64 usage error, 65 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .automaton import monitor_buchi
from .certificate import Hyperparameters, load_certificate, residuals_for, save_certificate
from .checker import check
from .config import ConfigError, ProjectConfig, list_fixtures, load_config
from .poly import DimensionError
from .scenario import Template, plan_sp, search_multipliers, synthesize
from .sos import SosSizeError, compile_program, export_sdp, load_witness, sweep_plan, verify_witness
from .system import label_trace, monitor_persistence, monitor_safety, simulate, trajectory_csv

EX_OK, EX_FAIL, EX_SAMPLE, EX_USAGE, EX_DATA = 0, 1, 2, 64, 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _emit(args, text: str, payload: dict) -> None:
    body = json.dumps(payload, indent=1) if args.format == "structured" else text
    print(body)
    if args.report:
        Path(args.report).write_text(body + "\n", encoding="utf-8")


def _backend(args, cfg: ProjectConfig) -> tuple[str, str | None]:
    """CLI flag, then ``$ICC_SOLVER``, then the config, then the built-in simplex."""
    env = os.environ.get("ICC_SOLVER")
    if args.backend:
        return args.backend, cfg.solver.path or env
    if env:
        return "external", env
    return cfg.solver.backend or "simplex", cfg.solver.path


def _template(cfg: ProjectConfig, k: int | None = None, degree: int | None = None) -> Template:
    k = cfg.k if k is None else k
    degree = cfg.degree if degree is None else degree
    if degree is None:
        raise UsageError("the template degree is not set (config template.degree or --degree)")
    states = cfg.nba.states if cfg.kind == "ltl" else None
    return Template.of_degree(cfg.system.dimension, k, degree, states)


def _hp(cfg: ProjectConfig, k: int) -> Hyperparameters:
    hp = cfg.hyperparameters
    gamma = hp.gamma if k == hp.k else hp.gamma[0]
    return Hyperparameters(k, hp.eta, gamma, hp.rho1, hp.rho2)


def _epsilon(args, cfg):
    return args.epsilon if getattr(args, "epsilon", None) is not None else cfg.epsilon


# subcommands -------------------------------------------------------------


def _parse_initial(text: str, n: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--initial must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise UsageError(f"--initial must be {n} comma-separated numbers")
    return np.array(vals)


def _ltl_pattern(letters: list[str]) -> bool:
    """Prefix over {a, b}, then suffix over {b, c}, and never d."""
    return re.fullmatch(r"[ab]*[bc]*", "".join(letters)) is not None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    S = cfg.system
    horizon = args.horizon or cfg.simulate.horizon
    runs = args.runs or cfg.simulate.runs
    seed = cfg.simulate.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    fixed = _parse_initial(args.initial, S.dimension) if args.initial else None
    if fixed is not None and not S.initial_set.contains(fixed):
        raise ConfigError(f"--initial {fixed.tolist()} is outside the initial set {S.initial_set!r}")
    out = Path(args.out) if args.out else (cfg.output or Path(f"{cfg.name}_runs"))
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in range(runs):
        x0 = fixed if fixed is not None else S.initial_set.sample(rng, 1)[0]
        tr = simulate(S, x0, horizon, seed=seed + r, on_exit=args.on_exit)
        letters = label_trace(cfg.labeling, tr) if cfg.labeling is not None else None
        (out / f"run_{r:04d}.csv").write_text(trajectory_csv(tr, letters), encoding="utf-8")
        row = {"run": r, "initial": x0.tolist(), "steps": len(tr) - 1, "exited": tr.exited, "exit_index": tr.exit_index}
        if cfg.kind == "persistence":
            last = monitor_persistence(tr, S.visit_set)
            row["last_visit"] = last
            row["settled"] = last is None or last < len(tr) - 1
        elif cfg.kind == "safety":
            row["first_unsafe"] = monitor_safety(tr, S.unsafe_set)
        else:
            mon = monitor_buchi(cfg.product, letters)
            row["pattern"] = _ltl_pattern(letters)
            row["accepting_first_visit"] = {str(q): mon.first_visit(q) for q in sorted(cfg.nba.accepting)}
        rows.append(row)
    if cfg.kind == "persistence":
        good = sum(r["settled"] for r in rows)
        line = f"{good}/{runs} runs have finitely many visits to the finite-visit set within the horizon"
    elif cfg.kind == "safety":
        good = sum(r["first_unsafe"] is None for r in rows)
        line = f"{good}/{runs} runs avoid the unsafe set"
    else:
        good = sum(r["pattern"] for r in rows)
        line = f"{good}/{runs} runs match the label pattern"
    text = "\n".join([f"simulated {runs} run(s) of {cfg.name}, horizon {horizon}; CSVs in {out}", line])
    _emit(args, text, {"config": cfg.name, "kind": cfg.kind, "horizon": horizon, "runs": rows, "summary": line})
    return EX_OK if good == runs else EX_FAIL


def _load_cert(cfg: ProjectConfig, path):
    ref = path or cfg.certificate
    if ref is None:
        raise UsageError("no certificate given (--certificate or config 'certificate')")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cert, hp = load_certificate(ref)
    if cert.kind != cfg.kind:
        raise ConfigError(f"certificate kind {cert.kind!r} does not match specification {cfg.kind!r}", ref)
    if cert.k != cfg.k:
        raise ConfigError(f"certificate has k={cert.k}, config has k={cfg.k}", ref)
    if cert.n != cfg.system.dimension:
        raise ConfigError(f"certificate is over {cert.n} states, system has {cfg.system.dimension}", ref)
    return cert, (hp or cfg.hyperparameters)


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    cert, hp = _load_cert(cfg, args.certificate)
    res = residuals_for(cfg.target, cert, hp)
    report = check(res, _epsilon(args, cfg), args.lipschitz, args.threads)
    _emit(args, report.to_text(), report.to_dict())
    return report.exit_code


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    tpl = _template(cfg, args.k, args.degree)
    hp = _hp(cfg, tpl.k)
    backend, solver_path = _backend(args, cfg)
    opts = dict(
        backend=backend,
        solver_path=solver_path,
        lipschitz_mode=args.lipschitz,
        eta_min=cfg.solver.eta_min,
        coef_bound=cfg.solver.coef_bound,
        strict_labels=not args.allow_unaligned,
        threads=args.threads,
    )
    eps = _epsilon(args, cfg)
    if args.grid_search:
        res = search_multipliers(cfg.target, tpl, hp, eps, cfg.kind, **opts)
    else:
        res = synthesize(cfg.target, tpl, hp, eps, cfg.kind, **opts)
    lines = [f"solver status: {res.solution.status}"]
    if res.certificate is not None:
        out = Path(args.out) if args.out else Path(f"{cfg.name}_certificate.json")
        save_certificate(res.certificate, out, res.hyperparameters)
        lines.append(f"delta* = {res.solution.delta:.6g}, eta* = {res.solution.eta:.6g}; certificate written to {out}")
    lines.append(res.report.to_text())
    payload = res.report.to_dict()
    payload["solution"] = {"status": res.solution.status, "delta": res.solution.delta, "eta": res.solution.eta, "objective": res.solution.objective}
    _emit(args, "\n".join(lines), payload)
    return res.report.exit_code


def _program(cfg, k, degree):
    tpl = _template(cfg, k, degree)
    return compile_program(cfg.kind, cfg.target, tpl, _hp(cfg, tpl.k))


def cmd_export_sos(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ladder = sweep_plan(range(args.k_max + 1), range(1, args.degree_max + 1)) if args.sweep else [(args.k, args.degree)]
    written = []
    for k, d in ladder:
        prog = _program(cfg, k, d)
        kk = prog.template.k
        dd = prog.template.degree
        path = out / f"{cfg.name}_k{kk}_d{dd}.dat-s"
        mapping = export_sdp(prog, path)
        written.append({"k": kk, "degree": dd, "file": str(path), "rows": len(mapping["rows"]), "blocks": len(mapping["blocks"])})
    text = "\n".join(f"k={w['k']} degree={w['degree']}: {w['file']} ({w['rows']} rows, {w['blocks']} blocks)" for w in written)
    _emit(args, text, {"config": cfg.name, "programs": written})
    return EX_OK


def cmd_verify_sos(args) -> int:
    cfg = load_config(args.config)
    prog = _program(cfg, args.k, args.degree)
    mapping = json.loads(Path(args.mapping).read_text(encoding="utf-8")) if args.mapping else None
    try:
        witness = load_witness(args.witness, mapping)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"unreadable witness: {exc}", args.witness) from None
    names = args.constraints.split(",") if args.constraints else None
    report = verify_witness(prog, witness, args.tol_psd, args.tol_id, names)
    _emit(args, report.to_text(), report.to_dict())
    return EX_OK if report.passed else EX_FAIL


def cmd_info(args) -> int:
    if args.config is None:
        text = "packaged fixtures: " + ", ".join(list_fixtures())
        _emit(args, text, {"version": __version__, "fixtures": list_fixtures()})
        return EX_OK
    cfg = load_config(args.config)
    S = cfg.system
    info = {
        "name": cfg.name,
        "path": str(cfg.path),
        "specification": cfg.kind,
        "dimension": S.dimension,
        "variables": cfg.variables,
        "branches": S.branches,
        "state_set": S.state_set.to_dict(),
        "initial_set": S.initial_set.to_dict(),
        "hyperparameters": cfg.hyperparameters.to_dict(),
        "template": {"k": cfg.k, "degree": cfg.degree},
        "epsilon": cfg.epsilon,
        "certificate": str(cfg.certificate) if cfg.certificate else None,
    }
    if cfg.nba is not None:
        info["automaton"] = {"states": cfg.nba.states, "edges": len(cfg.nba.edges()), "alphabet": list(cfg.nba.alphabet)}
    if cfg.degree is not None:
        tpl = _template(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            plan = plan_sp(cfg.target, tpl, cfg.hyperparameters, cfg.epsilon, cfg.kind, strict_labels=False)
        info["scenario_program"] = {"variables": tpl.size + 2, "families": len(plan), "rows_before_dedup": sum(plan.values())}
    lines = [f"{k}: {v}" for k, v in info.items()]
    _emit(args, "\n".join(lines), info)
    return EX_OK


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads for grid evaluation")
    common.add_argument("--report", help="also write the report to this file")
    common.add_argument("--format", choices=("text", "structured"), default="text")

    p = _Parser(prog="iccert", description="Closure-certificate toolkit for discrete-time polynomial systems.")
    p.add_argument("--version", action="version", version=f"iccert {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate runs and monitor the specification")
    s.add_argument("config")
    s.add_argument("--initial", help="comma-separated initial state (default: uniform in the initial set)")
    s.add_argument("--horizon", type=int)
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="directory for per-run CSV files")
    s.add_argument("--on-exit", choices=("truncate", "continue"), default="truncate")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check", parents=[common], help="grid-check a certificate")
    c.add_argument("config")
    c.add_argument("--certificate")
    c.add_argument("--epsilon", type=float)
    c.add_argument("--lipschitz", choices=("interval", "sampled"), default="interval")
    c.set_defaults(func=cmd_check)

    y = sub.add_parser("synth", parents=[common], help="synthesize a certificate with the scenario LP")
    y.add_argument("config")
    y.add_argument("--epsilon", type=float)
    y.add_argument("--k", type=int)
    y.add_argument("--degree", type=int)
    y.add_argument("--backend", choices=("simplex", "highs", "external"))
    y.add_argument("--lipschitz", choices=("interval", "sampled"), default="interval")
    y.add_argument("--grid-search", action="store_true", help="search gamma/rho over {0.25, 0.5, 1, 2}")
    y.add_argument("--allow-unaligned", action="store_true", help="warn instead of failing on unaligned labels")
    y.add_argument("--out", help="certificate output path")
    y.set_defaults(func=cmd_synth)

    e = sub.add_parser("export-sos", parents=[common], help="compile and export the SOS program")
    e.add_argument("config")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--k", type=int)
    e.add_argument("--degree", type=int)
    e.add_argument("--sweep", action="store_true", help="export every k <= --k-max and degree <= --degree-max")
    e.add_argument("--k-max", type=int, default=2)
    e.add_argument("--degree-max", type=int, default=4)
    e.set_defaults(func=cmd_export_sos)

    v = sub.add_parser("verify-sos", parents=[common], help="verify an SOS witness")
    v.add_argument("config")
    v.add_argument("--witness", required=True)
    v.add_argument("--mapping", help="sidecar mapping, needed for block-form witnesses")
    v.add_argument("--k", type=int)
    v.add_argument("--degree", type=int)
    v.add_argument("--constraints", help="comma-separated constraint names to verify")
    v.add_argument("--tol-psd", type=float)
    v.add_argument("--tol-id", type=float, default=1e-6)
    v.set_defaults(func=cmd_verify_sos)

    i = sub.add_parser("info", parents=[common], help="describe a config, or list packaged fixtures")
    i.add_argument("config", nargs="?")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"iccert: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (ConfigError, DimensionError, SosSizeError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"iccert: error: {exc}", file=sys.stderr)
        return EX_DATA


if __name__ == "__main__":
    sys.exit(main())
