"""Batch front end: configuration, subcommands, caching and resume.

Every pipeline stage is a subcommand writing deterministic CSV artifacts
into one output directory:

    free-energies   sweep the volume for every class up to the cutoff
    gas-coeffs      invert a free-energy table to gas coefficients
    spin-coeffs     fit spin coefficients (partial or uniform method)
    diagnostics     decay / dihedral / fve / convergence reports
    oracle          exhaustive or Monte Carlo cross-checks

Configuration comes from a plain key=value file with flag overrides; each
output embeds the computational configuration and the engine version tag as
comment metadata, so a result file alone identifies the run that made it.
A lock file serializes writers on the output directory.  Exit codes:
0 success, 1 configuration or usage problems, 2 computation failures.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import logging
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

from .diagnostics import (decay_report, convergence_metrics, dihedral_error,
                          finite_volume_error, write_convergence_csv,
                          write_decay_csv, write_series_csv)
from .engine import (ENGINE_TAG, EngineError, TruncationPolicy, Volume,
                     embed_in_volume, free_energy_batch)
from .interaction import (FreeEnergyTable, GAS, Interaction,
                          MissingFreeEnergyError, PER_CLASS, mobius_invert,
                          read_table, write_table)
from .lattice import enumerate_classes, format_sites, parse_sites, site_set
from .model import Coupling, critical_beta
from .oracle import MAX_EXACT_SPINS, exact_f, metropolis_f
from .spinfit import FitProblem, SimplexFailure, partially_exact, uniformly_close

log = logging.getLogger(__name__)

# reference classes reported by the spin-coefficient sweep
_NN = ((0, 0), (1, 0))
_NNN = ((0, 0), (1, 1))
_PLAQUETTE = ((0, 0), (0, 1), (1, 0), (1, 1))


class ValidationError(Exception):
    """Bad configuration or arguments; maps to exit code 1."""


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    beta: float = critical_beta()
    L: int = 4
    C_B: float = 8.0
    max_cardinality: int | None = None
    C: float = 2.0
    C_Hbar: float = 0.0
    C_f: float = 0.0
    jobs: int = 1
    seed: int = 0
    out: str = "runs"

    def validate(self):
        if self.L < 0:
            raise ValidationError(f"L must be nonnegative, got {self.L}")
        if self.C_B < 0 or self.C < 0:
            raise ValidationError("cutoffs C_B and C must be nonnegative")
        if self.jobs < 1:
            raise ValidationError(f"jobs must be at least 1, got {self.jobs}")
        if self.beta < 0:
            raise ValidationError(f"beta must be nonnegative, got {self.beta}")
        if self.C_Hbar > self.C_f:
            raise ValidationError(
                f"C_Hbar ({self.C_Hbar:g}) exceeds C_f ({self.C_f:g}); the fitted "
                "collection must sit inside the constraint collection")
        if self.C_f > self.C:
            raise ValidationError(
                f"C_f ({self.C_f:g}) exceeds C ({self.C:g}); fits can only use "
                "classes whose free energies are computed")

    def as_meta(self) -> dict:
        # jobs and the output path affect neither the numbers nor the bytes,
        # so they stay out of the provenance block
        return {
            "beta": repr(self.beta),
            "L": self.L,
            "C_B": f"{self.C_B:g}",
            "max_cardinality": self.max_cardinality,
            "C": f"{self.C:g}",
            "C_Hbar": f"{self.C_Hbar:g}",
            "C_f": f"{self.C_f:g}",
            "seed": self.seed,
            "engine": ENGINE_TAG,
        }


def _coerce(name: str, text: str):
    text = text.strip()
    try:
        if name in ("L", "jobs", "seed"):
            return int(text)
        if name == "max_cardinality":
            return None if text.lower() in ("", "none") else int(text)
        if name in ("beta", "C_B", "C", "C_Hbar", "C_f"):
            return float(text)
        return text
    except ValueError:
        raise ValidationError(f"config value {name}={text!r} is not a number")


def load_config(path: str | None, overrides: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig()
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ValidationError(f"config file {path} does not exist")
        for ln, raw in enumerate(file.read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{ln}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValidationError(f"{path}:{ln}: unknown key {key!r}")
            setattr(cfg, key, _coerce(key, value))
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output directory helpers

@contextlib.contextmanager
def _locked(outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"{lock} exists; another run is writing here (delete it if stale)")
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _emit(path: Path, text: str) -> bool:
    """Write only when the content differs; keeps reruns change-free."""
    if path.exists() and path.read_text() == text:
        log.info("%s is up to date", path)
        return False
    path.write_text(text)
    log.info("wrote %s", path)
    return True


def _read_table_file(path: Path) -> FreeEnergyTable:
    if not path.exists():
        raise ValidationError(f"input table {path} does not exist")
    with open(path) as stream:
        values, meta = read_table(stream)
    return FreeEnergyTable(values, meta)


def _render_table(values: dict, meta: dict) -> str:
    buf = io.StringIO()
    write_table(buf, values, meta)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands

def cmd_free_energies(cfg: RunConfig, args) -> int:
    out = Path(cfg.out) / "free_energies.csv"
    existing = None
    if out.exists():
        with open(out) as stream:
            values, old_meta = read_table(stream)
        current = cfg.as_meta()
        for key in ("L", "C_B", "max_cardinality", "beta", "sweep"):
            if key in old_meta and key in current \
                    and str(old_meta[key]) != str(current[key]):
                raise ValidationError(
                    f"{out} was computed with {key}={old_meta[key]}, not "
                    f"{key}={current[key]}; move it aside or match the config")
        existing = FreeEnergyTable(values)
        log.info("resuming: %d classes already done", len(values))

    classes = enumerate_classes(cfg.C, mode=args.class_mode)
    volume = Volume.square(cfg.L)
    policy = TruncationPolicy(cutoff=cfg.C_B, max_cardinality=cfg.max_cardinality)
    started = time.perf_counter()
    table = free_energy_batch(classes, volume, policy, Coupling(cfg.beta),
                              jobs=cfg.jobs, existing=existing)
    log.info("%d classes in %.1f s", len(table.values),
             time.perf_counter() - started)

    meta = dict(table.meta)
    meta.update(cfg.as_meta())
    meta["table"] = "free-energies"
    meta["class_mode"] = args.class_mode
    _emit(out, _render_table(table.values, meta))
    return 0


def cmd_gas_coeffs(cfg: RunConfig, args) -> int:
    table = _read_table_file(Path(args.input or Path(cfg.out) / "free_energies.csv"))
    coeffs = {}
    for sites in table.sorted_keys():
        started = time.perf_counter()
        coeffs[sites] = mobius_invert(table, sites)
        log.info("c(%s) = %.12g  [%.0f ms]", format_sites(sites), coeffs[sites],
                 1e3 * (time.perf_counter() - started))
    meta = dict(table.meta)
    meta["table"] = "gas-coefficients"
    _emit(Path(cfg.out) / "gas_coeffs.csv", _render_table(coeffs, meta))
    return 0


def _fit_collections(chbar: float, cf: float):
    ys = [cls.representative for cls in enumerate_classes(chbar, "translation")]
    xs = [cls.representative for cls in enumerate_classes(cf, "translation")]
    return ys, xs


def _fit_once(table: FreeEnergyTable, method: str, chbar: float, cf: float):
    """One spin fit; returns (coefficient interaction, epsilon or None)."""
    ys, xs = _fit_collections(chbar, cf)
    if method == "partial":
        c_terms = {Y: mobius_invert(table, Y) for Y in ys}
        return partially_exact(Interaction(c_terms, GAS, PER_CLASS), ys), None
    problem = FitProblem(ys, xs, table)
    d, eps = uniformly_close(problem)
    return d, eps


def cmd_spin_coeffs(cfg: RunConfig, args) -> int:
    table = _read_table_file(Path(args.input or Path(cfg.out) / "free_energies.csv"))
    outdir = Path(cfg.out)

    if args.sweep:
        chbars = [float(v) for v in str(args.chbar or cfg.C_Hbar).split(",")]
        cfs = [float(v) for v in str(args.cf or cfg.C_f).split(",")]
        lines = ["method,C_Hbar,C_f,d_nn,d_next,d_plaquette,epsilon"]
        for method in ("partial", "uniform"):
            for chbar in chbars:
                for cf in cfs:
                    if cf < chbar:
                        continue
                    started = time.perf_counter()
                    d, eps = _fit_once(table, method, chbar, cf)
                    log.info("%s fit C_Hbar=%g C_f=%g  [%.0f ms]", method, chbar,
                             cf, 1e3 * (time.perf_counter() - started))
                    lines.append(
                        f"{method},{chbar:g},{cf:g},{d.coefficient(_NN):.17g},"
                        f"{d.coefficient(_NNN):.17g},{d.coefficient(_PLAQUETTE):.17g},"
                        + ("" if eps is None else f"{eps:.17g}"))
        meta = dict(table.meta)
        meta["table"] = "spin-coefficient-sweep"
        header = "".join(f"# {k}={meta[k]}\n" for k in sorted(meta))
        _emit(outdir / "spin_sweep.csv", header + "\n".join(lines) + "\n")
        return 0

    chbar = float(args.chbar) if args.chbar else cfg.C_Hbar
    cf = float(args.cf) if args.cf else cfg.C_f
    if chbar > cf:
        raise ValidationError(f"C_Hbar ({chbar:g}) exceeds C_f ({cf:g})")
    d, eps = _fit_once(table, args.method, chbar, cf)
    meta = dict(table.meta)
    meta.update({"table": "spin-coefficients", "method": args.method,
                 "C_Hbar": f"{chbar:g}", "C_f": f"{cf:g}"})
    if eps is not None:
        meta["epsilon"] = f"{eps:.17g}"
    _emit(outdir / "spin_coeffs.csv", _render_table(d.terms, meta))
    return 0


def _tagged_tables(paths, key: str) -> dict[float, FreeEnergyTable]:
    """Read tables and index them by a numeric metadata entry."""
    out = {}
    for p in paths:
        table = _read_table_file(Path(p))
        if key not in table.meta:
            raise ValidationError(f"{p} lacks the {key} metadata entry")
        out[float(table.meta[key])] = table
    return out


def _common_meta(tables) -> dict:
    """Metadata entries every input table agrees on; the rest vary by row."""
    items = None
    for table in tables:
        pairs = set(table.meta.items())
        items = pairs if items is None else items & pairs
    return dict(items or ())


def cmd_diagnostics(cfg: RunConfig, args) -> int:
    outdir = Path(cfg.out)

    if args.report == "decay":
        table = _read_table_file(Path(args.input))
        report = decay_report(Interaction(table.values, GAS, PER_CLASS),
                              mode=args.mode)
        meta = dict(table.meta)
        meta["input"] = Path(args.input).name
        meta["table"] = "decay"
        buf = io.StringIO()
        write_decay_csv(buf, report, meta)
        _emit(outdir / "decay.csv", buf.getvalue())
        return 0

    if args.report == "dihedral":
        tables = _tagged_tables(args.inputs, "C_B")
        rows = [(c, dihedral_error(tables[c])) for c in sorted(tables)]
        meta = _common_meta(tables.values())
        meta["table"] = "dihedral-error"
        buf = io.StringIO()
        write_series_csv(buf, ("C_B", "value"), rows, meta)
        _emit(outdir / "dihedral_error.csv", buf.getvalue())
        return 0

    if args.report == "fve":
        tables = _tagged_tables(args.inputs, "L")
        sizes = sorted(tables)
        if len(sizes) < 2:
            raise ValidationError("the fve report needs at least two tables")
        rows = [(b, finite_volume_error(tables[b], tables[a]))
                for a, b in zip(sizes, sizes[1:])]
        meta = _common_meta(tables.values())
        meta["table"] = "finite-volume-error"
        buf = io.StringIO()
        write_series_csv(buf, ("L", "value"), rows, meta)
        _emit(outdir / "fve.csv", buf.getvalue())
        return 0

    tables = _tagged_tables(args.inputs, "C_B")
    metrics = convergence_metrics(tables)
    meta = _common_meta(tables.values())
    meta["table"] = "convergence"
    buf = io.StringIO()
    write_convergence_csv(buf, metrics, meta)
    _emit(outdir / "convergence.csv", buf.getvalue())
    return 0


def _parse_blocks(text: str) -> Volume:
    try:
        w, h = (int(part) for part in text.lower().split("x"))
        if w < 1 or h < 1:
            raise ValueError
    except ValueError:
        raise ValidationError(f"--blocks wants WIDTHxHEIGHT, got {text!r}")
    return Volume.from_blocks([(i, j) for i in range(w) for j in range(h)])


def cmd_oracle(cfg: RunConfig, args) -> int:
    outdir = Path(cfg.out)
    coupling = Coupling(cfg.beta)

    if args.kind == "exact":
        volume = _parse_blocks(args.blocks)
        if volume.n_spins > MAX_EXACT_SPINS:
            raise ValidationError(
                f"{args.blocks} has {volume.n_spins} spins; exhaustive "
                f"enumeration stops at {MAX_EXACT_SPINS}")
        values = {}
        for cls in enumerate_classes(cfg.C, mode="translation"):
            rep = cls.representative
            try:
                moved, _ = embed_in_volume(rep, volume)
            except ValueError:
                log.warning("%s does not fit in %s blocks; skipped",
                            format_sites(rep), args.blocks)
                continue
            started = time.perf_counter()
            values[rep] = exact_f(moved, volume, coupling)
            log.info("exact f(%s) = %.12g  [%.0f ms]", format_sites(rep),
                     values[rep], 1e3 * (time.perf_counter() - started))
        meta = cfg.as_meta()
        meta.update({"source": "oracle", "blocks": args.blocks,
                     "table": "free-energies"})
        _emit(outdir / "oracle_exact.csv", _render_table(values, meta))
        return 0

    volume = _parse_blocks(args.blocks) if args.blocks else Volume.square(cfg.L)
    x = site_set(parse_sites(args.x))
    window = site_set(parse_sites(args.window)) if args.window else x
    started = time.perf_counter()
    result = metropolis_f(x, window, volume, coupling,
                          samples=args.samples, seed=cfg.seed,
                          chains=args.chains)
    log.info("mc run: %d samples, %d chains  [%.1f s]", args.samples,
             args.chains, time.perf_counter() - started)
    if result.missing:
        log.warning("no statistics for %d configurations", len(result.missing))
    meta = cfg.as_meta()
    meta.update({"source": "oracle", "samples": args.samples,
                 "chains": args.chains, "x": format_sites(x),
                 "window": format_sites(window),
                 "missing": ";".join(format_sites(m) for m in result.missing),
                 "table": "free-energies"})
    estimates = {k: v for k, v in result.estimates.items() if k}
    errors = {k: v for k, v in result.errors.items() if k}
    _emit(outdir / "oracle_mc.csv", _render_table(estimates, meta))
    error_meta = dict(meta)
    error_meta["table"] = "standard-errors"
    _emit(outdir / "oracle_mc_errors.csv", _render_table(errors, error_meta))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here reserves 2 for
    computation failures, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--beta", type=float, help="inverse temperature")
    common.add_argument("-L", type=int, dest="L",
                        help="half-width: the volume is (2L+1)^2 blocks")
    common.add_argument("--cb", type=float, dest="C_B",
                        help="boundary-set truncation cutoff")
    common.add_argument("--max-cardinality", type=int, dest="max_cardinality",
                        help="optional cap on boundary-set size")
    common.add_argument("-C", type=float, dest="C",
                        help="class enumeration cutoff")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output directory")

    parser = _Parser(prog="blockrg",
                     description="majority-rule block renormalization pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("free-energies", parents=[common],
                       help="compute f for every class with S <= C")
    p.add_argument("--class-mode", choices=("translation", "dihedral"),
                   default="translation",
                   help="enumerate translation classes (default) or one "
                        "representative per dihedral class")
    p.set_defaults(func=cmd_free_energies)

    p = sub.add_parser("gas-coeffs", parents=[common],
                       help="invert a free-energy table")
    p.add_argument("--input", help="free-energy CSV (default: <out>/free_energies.csv)")
    p.set_defaults(func=cmd_gas_coeffs)

    p = sub.add_parser("spin-coeffs", parents=[common],
                       help="fit spin coefficients from a free-energy table")
    p.add_argument("--method", choices=("partial", "uniform"), default="partial")
    p.add_argument("--chbar", help="fit cutoff C_Hbar (comma list with --sweep)")
    p.add_argument("--cf", help="constraint cutoff C_f (comma list with --sweep)")
    p.add_argument("--sweep", action="store_true",
                   help="emit reference coefficients for every method and "
                        "cutoff pair instead of one table")
    p.add_argument("--input", help="free-energy CSV (default: <out>/free_energies.csv)")
    p.set_defaults(func=cmd_spin_coeffs)

    p = sub.add_parser("diagnostics", parents=[common], help="report generators")
    rep = p.add_subparsers(dest="report", required=True)
    d = rep.add_parser("decay", parents=[common])
    d.add_argument("--input", required=True, help="gas-coefficient CSV")
    d.add_argument("--mode", choices=("translation", "dihedral"),
                   default="translation")
    d.set_defaults(func=cmd_diagnostics, report="decay")
    for name, keyname in (("dihedral", "C_B"), ("fve", "L"), ("convergence", "C_B")):
        d = rep.add_parser(name, parents=[common])
        d.add_argument("--inputs", nargs="+", required=True,
                       help=f"free-energy CSVs tagged by {keyname} metadata")
        d.set_defaults(func=cmd_diagnostics, report=name)

    p = sub.add_parser("oracle", parents=[common], help="independent cross-checks")
    kind = p.add_subparsers(dest="kind", required=True)
    e = kind.add_parser("exact", parents=[common])
    e.add_argument("--blocks", default="2x2", help="volume as WIDTHxHEIGHT blocks")
    e.set_defaults(func=cmd_oracle, kind="exact")
    mc = kind.add_parser("mc", parents=[common])
    mc.add_argument("--x", required=True, help="block set, e.g. '{(0,0)}'")
    mc.add_argument("--window", help="window blocks (default: same as --x)")
    mc.add_argument("--samples", type=int, default=20000)
    mc.add_argument("--chains", type=int, default=1)
    mc.add_argument("--blocks", help="volume as WIDTHxHEIGHT (default: square from L)")
    mc.set_defaults(func=cmd_oracle, kind="mc")

    return parser


_CONFIG_FIELDS = ("beta", "L", "C_B", "max_cardinality", "C", "jobs", "seed", "out")


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        overrides = {k: getattr(args, k, None) for k in _CONFIG_FIELDS}
        cfg = load_config(args.config, overrides)
        with _locked(Path(cfg.out)):
            return args.func(cfg, args)
    except ValidationError as exc:
        print(f"blockrg: {exc}", file=sys.stderr)
        return 1
    except (EngineError, SimplexFailure, MissingFreeEnergyError, ValueError) as exc:
        print(f"blockrg: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
