"""Command-line entry point: ``hjlab <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import counterexamples as cx
from . import experiments as ex
from .hj_solver import SolverConfig, dump_snapshot, hs_energy_monitor, mild_solve
from .littlewood_paley import INF, besov_norm, bmo_norm_approx, fourier_besov_norm, sobolev_norm
from .spectral_core import FrequencyLattice, NumericalFailure, SpectralError, SpectralField, dump_coefficients, load_coefficients, sup_norm

log = logging.getLogger("hjlab")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

CONFIG_KEYS = {
    "N": "comma-separated integers",
    "delta": "comma-separated positive reals",
    "q": "comma-separated values in [1, inf]; 'inf' for q = infinity",
    "d": "dimension 1-3",
    "T": "final time",
    "seed": "random seed (default 42)",
    "tolerance": "Duhamel quadrature tolerance",
    "trials": "verifier trial count",
    "lemma": "2.4, 2.1-smoothing or 2.6",
    "out_dir": "output directory",
    "steps": "exponential-integrator step count",
    "case": "highQ or lowQ (norms, dump-construction)",
    "run_solution": "true/false: compute the full Cole-Hopf solution",
    "remainders": "true/false: S-norm remainders (high-q)",
    "y_norm": "true/false: Y_T norm of the remainder (slow)",
}

SUBCOMMANDS = {
    "inflate-highq": "high-q norm inflation sweep",
    "inflate-lowq": "low-q main term, Taylor tail and semigroup term of A_2",
    "verify": "ratio verifiers for the bilinear, smoothing and log-interpolation estimates",
    "solve": "solve from u0 = delta cos(x) and cross-validate the solvers",
    "norms": "input norms of a construction or a coefficient file",
    "dump-construction": "write the coefficients of a construction",
}


class ValidationError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# parsing


def _parse_q(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "∞"):
        return INF
    return float(t)


def _int_list(key, text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ValidationError(key, f"expected comma-separated integers, got {text!r}") from None


def _float_list(key, text, parse=float):
    try:
        return tuple(parse(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ValidationError(key, f"expected comma-separated numbers, got {text!r}") from None


def _bool(key, text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValidationError(key, f"expected true/false, got {text!r}")


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; '#' comments allowed."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[hjlab]\n" + text)
    except configparser.Error as exc:
        raise ValidationError("config", str(exc).splitlines()[0]) from None
    out = dict(parser["hjlab"])
    for key in out:
        if key not in CONFIG_KEYS:
            raise ValidationError(key, "unknown config key")
    return out


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value file; keys: " + ", ".join(CONFIG_KEYS))
    p.add_argument("--N", dest="N", help="comma-separated N values")
    p.add_argument("--delta", help="comma-separated delta values")
    p.add_argument("--q", help="comma-separated q values ('inf' allowed)")
    p.add_argument("--d", help="dimension (1-3)")
    p.add_argument("--T", dest="T", help="final time")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default: results)")
    p.add_argument("--seed", help="random seed (default 42)")
    p.add_argument("--tolerance", help="Duhamel quadrature tolerance")
    p.add_argument("--flat", action="store_true", help="write directly into --out-dir (no timestamped subdirectory)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="hjlab",
        description="Spectral experiments for the viscous Hamilton-Jacobi equation u_t - Lap u = |grad u|^2.",
        epilog="flags (all subcommands): --config --N --delta --q --d --T --out-dir --seed --tolerance --flat -v\n"
        "  verify: --lemma --trials    solve: --steps    norms: --case --input --L\n"
        "  dump-construction: --case   inflate-*: --run-solution --remainders --y-norm\n"
        "\nconfig keys (flags override the file):\n"
        + "\n".join(f"  {k:<14} {v}" for k, v in CONFIG_KEYS.items())
        + "\n\nexit codes: 0 success, 2 validation error, 3 numerical failure",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, text in SUBCOMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "verify":
            sp.add_argument("--lemma", help="2.4, 2.1-smoothing or 2.6")
            sp.add_argument("--trials", help="number of random trials")
        if name == "solve":
            sp.add_argument("--steps", help="exponential-integrator steps")
        if name in ("norms", "dump-construction"):
            sp.add_argument("--case", help="highQ or lowQ")
        if name == "norms":
            sp.add_argument("--input", help="coefficient text file (overrides --case)")
            sp.add_argument("--L", dest="L", type=int, default=1, help="inverse spacing for --input files")
        if name in ("inflate-highq", "inflate-lowq"):
            sp.add_argument("--run-solution", dest="run_solution", help="true/false")
            sp.add_argument("--remainders", help="true/false")
            sp.add_argument("--y-norm", dest="y_norm", help="true/false")
    return parser


def _settings(args) -> dict:
    values = read_config(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


DEFAULTS = {
    "inflate-highq": {"N": "4,5,6,7,8,9", "delta": "0.1", "q": "inf"},
    "inflate-lowq": {"N": "16", "delta": "0.05,0.1,0.2", "q": "1"},
    "verify": {"lemma": "2.4", "trials": "200"},
    "solve": {"delta": "0.3", "T": "0.1", "steps": "256"},
    "norms": {"case": "highQ", "N": "6", "delta": "0.1", "q": "inf"},
    "dump-construction": {"case": "highQ", "N": "4", "delta": "0.1", "q": "inf"},
}


def make_config(command: str, values: dict, family_check: bool = True) -> ex.ExperimentConfig:
    v = dict(DEFAULTS.get(command, {}))
    v.update(values)
    kw = {}
    if "N" in v:
        kw["N"] = _int_list("N", v["N"])
    if "delta" in v:
        kw["delta"] = _float_list("delta", v["delta"])
        if not kw["delta"] or any(not x > 0 for x in kw["delta"]):
            raise ValidationError("delta", "values must be positive")
    if "q" in v:
        kw["q"] = _float_list("q", v["q"], _parse_q)
        if not kw["q"] or any(not 1 <= x <= INF for x in kw["q"]):
            raise ValidationError("q", "values must lie in [1, inf]")
    if "d" in v:
        try:
            kw["d"] = int(v["d"])
        except ValueError:
            raise ValidationError("d", f"expected an integer, got {v['d']!r}") from None
        if kw["d"] not in (1, 2, 3):
            raise ValidationError("d", f"must be 1, 2 or 3, got {kw['d']}")
    for key, conv in (("T", float), ("seed", int), ("trials", int)):
        if key in v:
            try:
                kw[key] = conv(v[key])
            except ValueError:
                raise ValidationError(key, f"cannot parse {v[key]!r}") from None
    if "T" in kw and not kw["T"] > 0:
        raise ValidationError("T", "must be positive")
    for key in ("run_solution", "remainders", "y_norm"):
        if key in v:
            kw[key] = _bool(key, v[key])
    if "lemma" in v:
        if v["lemma"] not in ("2.4", "2.1-smoothing", "2.6"):
            raise ValidationError("lemma", f"expected 2.4, 2.1-smoothing or 2.6, got {v['lemma']!r}")
        kw["lemma"] = v["lemma"]
    if "out_dir" in v:
        kw["out_dir"] = v["out_dir"]
    solver = SolverConfig()
    if "tolerance" in v:
        try:
            tol = float(v["tolerance"])
        except ValueError:
            raise ValidationError("tolerance", f"cannot parse {v['tolerance']!r}") from None
        if not tol > 0:
            raise ValidationError("tolerance", "must be positive")
        solver = replace(solver, quad_tol=tol)
        kw["tolerance"] = tol
    if "steps" in v:
        try:
            steps = int(v["steps"])
        except ValueError:
            raise ValidationError("steps", f"cannot parse {v['steps']!r}") from None
        if steps < 1:
            raise ValidationError("steps", "must be >= 1")
        solver = replace(solver, steps=steps)
    case = {"inflate-highq": "highQ", "inflate-lowq": "lowQ", "verify": "verify", "solve": "solve"}.get(command)
    if command in ("norms", "dump-construction"):
        case = v.get("case", "highQ")
        if case not in ("highQ", "lowQ"):
            raise ValidationError("case", f"expected highQ or lowQ, got {case!r}")
    kw["case"] = case
    if family_check:
        _validate_family(case, kw)
    return ex.ExperimentConfig(solver=solver, **kw)


def _validate_family(case: str, kw: dict) -> None:
    if case == "lowQ":
        for N in kw.get("N", ()):
            if N < 16 or N % 16:
                raise ValidationError("N", f"low-q family needs N ∈ 16ℕ = {{16, 32, ...}}, got {N}")
        for q in kw.get("q", ()):
            if not 1 <= q <= 2:
                raise ValidationError("q", f"low-q family needs q in [1, 2], got {q}")
    if case == "highQ":
        for N in kw.get("N", ()):
            if N < 2:
                raise ValidationError("N", f"high-q family needs N >= 2, got {N}")
        for q in kw.get("q", ()):
            if not q > 2:
                raise ValidationError("q", f"high-q family needs q > 2, got {q}")


# ---------------------------------------------------------------------------
# commands


def _out(args, cfg) -> Path:
    return ex.run_directory(cfg.out_dir, flat=args.flat)


def _cmd_inflate(args, cfg) -> int:
    report = ex.run_highq_inflation(cfg) if cfg.case == "highQ" else ex.run_lowq_inflation(cfg)
    for path in ex.emit_report(report, _out(args, cfg)):
        print(path)
    failed = sorted(k for k, v in report.flags.items() if not v)
    if failed:
        log.warning("flags not met: %s", ", ".join(failed))
    return EXIT_OK


def _cmd_verify(args, cfg) -> int:
    report = ex.verify_lemma(cfg.lemma, cfg.trials, cfg.seed)
    stem = "verify_" + cfg.lemma.replace(".", "_").replace("-", "_")
    for path in ex.emit_report(report, _out(args, cfg), stem=stem):
        print(path)
    return EXIT_OK


def _cmd_solve(args, cfg) -> int:
    a = cfg.delta[0]
    solver = replace(cfg.solver, T=cfg.T, n_snapshots=16)
    u0 = SpectralField.from_modes(FrequencyLattice(1, 1, 8), {1: a / 2, -1: a / 2})
    if sup_norm(u0) > 0.5:
        raise ValidationError("delta", f"solve needs small data, sup|u0| <= 0.5, got {sup_norm(u0)}")
    snaps = mild_solve(u0.to_dense(), solver)
    out = _out(args, cfg)
    (out / "snapshots.txt").write_text("\n".join(dump_snapshot(t, u) for t, u in snaps))
    (out / "energy.csv").write_text(_energy(snaps))
    report = ex.cross_validate_solvers(replace(cfg, solver=solver), amplitudes=(a, a / 2))
    for path in ex.emit_report(report, out, stem="solve"):
        print(path)
    print(out / "snapshots.txt")
    print(out / "energy.csv")
    return EXIT_OK


def _energy(snaps) -> str:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        series = hs_energy_monitor(snaps, 2.1)
    lines = ["t,hs_norm,grad_inf_integral,grad_besov_integral"]
    lines += [",".join(repr(float(v)) for v in row) for row in series.rows()]
    return "\n".join(lines) + "\n"


def _construction(cfg) -> SpectralField:
    N, delta, q = cfg.N[0], cfg.delta[0], cfg.q[0]
    if cfg.case == "lowQ":
        return cx.build_f_low(cx.LowQParams(N, delta, q, cfg.d))
    return cx.build_f_high(cx.HighQParams(N, delta, cfg.d))


def _cmd_norms(args, cfg) -> int:
    if args.input:
        try:
            f = load_coefficients(Path(args.input).read_text(), L=args.L)
        except OSError as exc:
            raise ValidationError("input", f"cannot read {args.input}: {exc.strerror}") from None
        q = cfg.q[0]
        source = {"input": Path(args.input).name, "L": args.L}
    else:
        f = _construction(cfg)
        q = cfg.q[0]
        source = {"case": cfg.case, "N": cfg.N[0], "delta": cfg.delta[0], "q": q, "d": cfg.d}
    row = {
        "sup": sup_norm(f),
        "besov_0_inf_q": besov_norm(f, 0.0, q),
        "fourier_besov_0_1_2": fourier_besov_norm(f, 0.0, 2.0),
        "sobolev_2_1": sobolev_norm(f, 2.1),
    }
    if 4 * (2 * f.max_wavenumber() + 1) <= (1 << 21) and f.d == 1:
        row["bmo_approx"] = bmo_norm_approx(f)
    report = ex.InflationReport("norms", ex._jsonable(source), rows=[row], columns=list(row))
    out = _out(args, cfg)
    for path in ex.emit_report(report, out, stem="norms"):
        print(path)
    print(json.dumps(ex._jsonable(row), sort_keys=True))
    return EXIT_OK


def _cmd_dump(args, cfg) -> int:
    f = _construction(cfg)
    header = [f"case = {cfg.case}", f"N = {cfg.N[0]}", f"delta = {cfg.delta[0]!r}", f"d = {cfg.d}", f"L = {f.lattice.L}"]
    if cfg.case == "lowQ":
        header.append(f"q = {cfg.q[0]!r}")
    out = _out(args, cfg)
    path = out / f"construction_{cfg.case}_N{cfg.N[0]}.txt"
    path.write_text(dump_coefficients(f, header))
    print(path)
    return EXIT_OK


COMMANDS = {
    "inflate-highq": _cmd_inflate,
    "inflate-lowq": _cmd_inflate,
    "verify": _cmd_verify,
    "solve": _cmd_solve,
    "norms": _cmd_norms,
    "dump-construction": _cmd_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)], format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args.command, _settings(args), family_check=not getattr(args, "input", None))
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"hjlab: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"hjlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SpectralError as exc:
        print(f"hjlab: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
