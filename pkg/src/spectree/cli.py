"""Command-line front end.

    spectree <command> [--config PATH] [--seed N] [--workers N] [--out DIR]

Commands: constants, spectral, volume, mass, zn, validate.  Each writes
``<out>/<command>.csv`` (plus ``<command>_fit.csv`` where a fit is made)
and ``<out>/<command>.manifest.json``.  Exit status is 0 on success, 1
when a check fails or a run breaks part way, 2 on configuration or
solver errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import estimators as E
from . import validation as V
from .ensemble import FAMILIES, DomainError, GenericityError, explicit_weights, solve_criticality
from .samplers import RngStream
from .series import lemma1_ratio, partition_coeffs

log = logging.getLogger("spectree")

COMMANDS = ("constants", "spectral", "volume", "mass", "zn", "validate")
EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2

DEFAULTS = {
    "spectral": {"x": [2.0 ** -k for k in (6, 8, 10, 12, 14)], "n_samples": 20_000, "bracket_tol": 1e-3,
                 "continuation": "half_line", "drop_threshold": None},
    "volume": {"R": [4, 8, 16, 32, 64, 128], "n_samples": 20_000, "fit_range": None},
    "mass": {"x": [2.0 ** -k for k in (6, 8, 10, 12)], "n_max": None, "n_samples": 4000, "n_min": 5,
             "bracket_tol": 1e-3},
    "zn": {"N_max": 200},
    "validate": {"checks": list(V.QUICK_CHECKS)},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on.  Round-trips through YAML."""

    family: dict = field(default_factory=lambda: {"name": "uniform"})
    seed: int = 0
    out: str = "runs"
    workers: int = 1
    spectral: dict = field(default_factory=dict)
    volume: dict = field(default_factory=dict)
    mass: dict = field(default_factory=dict)
    zn: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)

    def __post_init__(self):
        for cmd, default in DEFAULTS.items():
            given = getattr(self, cmd) or {}
            unknown = set(given) - set(default)
            if unknown:
                raise ConfigError(f"unknown keys in '{cmd}': {sorted(unknown)}")
            setattr(self, cmd, {**copy.deepcopy(default), **given})
        if not isinstance(self.family, dict) or len({"name", "weights"} & set(self.family)) != 1:
            raise ConfigError("family needs exactly one of 'name' or 'weights'")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            d = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def sha256(self) -> str:
        # output location and pool size do not change any result
        d = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def weight_spec(self):
        if "name" in self.family:
            name = self.family["name"]
            if name not in FAMILIES:
                raise ConfigError(f"unknown family '{name}' (known: {sorted(FAMILIES)})")
            return FAMILIES[name]()
        try:
            return explicit_weights([float(w) for w in self.family["weights"]])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad weights: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return "" if v is None else str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def _versions() -> dict:
    import numba
    import scipy
    return {"spectree": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


# ---------------------------------------------------------------- commands
def cmd_constants(cfg: RunConfig, crit, out: Path) -> tuple[int, dict]:
    notes = []
    if crit.divisor_d > 1:
        notes.append(f"Z_N = 0 unless N = 1 mod {crit.divisor_d}"
                     + (" (Z_N = 0 for even N)" if crit.divisor_d == 2 else ""))
    rows = [["Z0", crit.z0], ["zeta0", crit.zeta0], ["divisor_d", crit.divisor_d], ["fpp1", crit.fpp1],
            ["generic", True], ["offspring_cut", crit.offspring_cut]]
    rows += [[f"p_{n}", p] for n, p in enumerate(crit.offspring)]
    write_csv(out / "constants.csv", ["quantity", "value"], rows)
    for line in [f"Z0 = {crit.z0:.12g}", f"zeta0 = {crit.zeta0:.12g}", f"d = {crit.divisor_d}",
                 f"f''(1) = {crit.fpp1:.12g}", "generic: yes"] + notes:
        print(line)
    return EXIT_OK, {"notes": notes, "files": ["constants.csv"]}


def cmd_spectral(cfg: RunConfig, crit, out: Path) -> tuple[int, dict]:
    p = cfg.spectral
    recs = E.estimate_q(crit, p["x"], int(p["n_samples"]), RngStream(cfg.seed, (1,)), p["bracket_tol"],
                        workers=cfg.workers, continuation=p["continuation"])
    write_csv(out / "spectral.csv", ["x", "Q_mean", "stderr", "bracket_residual", "n", "censored"],
              [[r.abscissa, r.mean, r.stderr, r.bracket_residual, r.n_samples, r.censored] for r in recs])
    fit = E.fit_spectral(recs, p["drop_threshold"])
    ds, dse = fit.derived["d_s"], fit.derived["d_s_stderr"]
    write_csv(out / "spectral_fit.csv", ["alpha", "alpha_stderr", "d_s", "d_s_stderr", "x_min", "x_max", "chi2_dof"],
              [[fit.exponent, fit.exponent_stderr, ds, dse, fit.window[0], fit.window[1], fit.residual_diagnostic]])
    print(f"alpha = {fit.exponent:.4f} +- {fit.exponent_stderr:.4f}   d_s = {ds:.4f} +- {dse:.4f}")
    flagged = [r.abscissa for r in recs if r.flagged]
    return EXIT_OK, {"fit": {"alpha": fit.exponent, "alpha_stderr": fit.exponent_stderr, "d_s": ds,
                             "d_s_stderr": dse}, "flagged_x": flagged,
                     "files": ["spectral.csv", "spectral_fit.csv"], "records": recs, "fit_result": fit}


def cmd_volume(cfg: RunConfig, crit, out: Path) -> tuple[int, dict]:
    from .series import nu_ball_mean
    p = cfg.volume
    fr = tuple(p["fit_range"]) if p["fit_range"] else None
    vol, inv, fit, inv_fit = E.estimate_volume(crit, p["R"], int(p["n_samples"]), RngStream(cfg.seed, (2,)),
                                               workers=cfg.workers, fit_range=fr)
    write_csv(out / "volume.csv", ["R", "mean_volume", "stderr", "exact_mean", "mean_inverse_volume",
                                   "inverse_stderr", "n", "censored"],
              [[a.abscissa, a.mean, a.stderr, nu_ball_mean(crit, int(a.abscissa)), b.mean, b.stderr, a.n_samples,
                a.censored] for a, b in zip(vol, inv)])
    write_csv(out / "volume_fit.csv", ["quantity", "exponent", "stderr", "R_min", "R_max", "chi2_dof"],
              [["d_h", fit.exponent, fit.exponent_stderr, *fit.window, fit.residual_diagnostic],
               ["inverse", inv_fit.exponent, inv_fit.exponent_stderr, *inv_fit.window, inv_fit.residual_diagnostic]])
    print(f"d_h = {fit.exponent:.4f} +- {fit.exponent_stderr:.4f}   "
          f"<1/|B_R|> exponent = {inv_fit.exponent:.4f} +- {inv_fit.exponent_stderr:.4f}")
    return EXIT_OK, {"fit": {"d_h": fit.exponent, "d_h_stderr": fit.exponent_stderr, "inverse": inv_fit.exponent,
                             "inverse_stderr": inv_fit.exponent_stderr},
                     "files": ["volume.csv", "volume_fit.csv"], "records": (vol, inv), "fit_result": (fit, inv_fit)}


def cmd_mass(cfg: RunConfig, crit, out: Path) -> tuple[int, dict]:
    p = cfg.mass
    per_x, overall, table = E.estimate_mass(crit, p["x"], p["n_max"], int(p["n_samples"]), RngStream(cfg.seed, (3,)),
                                            n_min=p["n_min"], bracket_tol=p["bracket_tol"], workers=cfg.workers)
    rows = [[x, r.abscissa, r.mean, r.stderr, r.bracket_residual, r.n_samples, r.censored]
            for x, recs in table.items() for r in recs]
    write_csv(out / "mass.csv", ["x", "n", "Q_mean", "stderr", "bracket_residual", "n_samples", "censored"], rows)
    fit_rows = [[x, f.exponent, f.exponent_stderr, f.residual_diagnostic] for x, f in per_x.items()]
    write_csv(out / "mass_fit.csv", ["x", "m", "m_stderr", "chi2_dof"], fit_rows)
    info = {"m": {str(x): f.exponent for x, f in per_x.items()}}
    for x, f in per_x.items():
        print(f"x = {x:.6g}: m = {f.exponent:.4f} +- {f.exponent_stderr:.4f}")
    if overall is not None:
        print(f"m(x) ~ x^{overall.exponent:.4f} +- {overall.exponent_stderr:.4f}")
        info["exponent"] = overall.exponent
        info["exponent_stderr"] = overall.exponent_stderr
    return EXIT_OK, {"fit": info, "files": ["mass.csv", "mass_fit.csv"],
                     "records": table, "fit_result": (per_x, overall)}


def cmd_zn(cfg: RunConfig, crit, out: Path) -> tuple[int, dict]:
    N_max = int(cfg.zn["N_max"])
    z = partition_coeffs(crit.spec, crit, N_max)
    rows = []
    for N in range(1, N_max + 1):
        ratio = lemma1_ratio(crit.spec, crit, N) if (N - 1) % crit.divisor_d == 0 else None
        rows.append([N, z[N - 1], z[N - 1] * crit.zeta0 ** N * N ** 1.5, ratio])
    write_csv(out / "zn.csv", ["N", "Z_N", "scaled", "ratio"], rows)
    last = rows[-1] if rows[-1][3] is not None else rows[-2]
    print(f"Z_{last[0]} zeta0^N N^1.5 over its limit: {last[3]:.6f}")
    return EXIT_OK, {"files": ["zn.csv"], "fit": {"ratio_N": last[0], "ratio": last[3]}}


def cmd_validate(cfg: RunConfig, crit, out: Path) -> tuple[int, dict]:
    names = cfg.validate["checks"]
    unknown = set(names) - set(V.QUICK_CHECKS) - {"tail"}
    if unknown:
        raise ConfigError(f"unknown checks: {sorted(unknown)}")
    checks = {**V.QUICK_CHECKS, "tail": lambda: V.check_tail_shapes(n_samples=5000)}
    results = []
    for n in names:
        r = checks[n]()
        print(r.line(), flush=True)
        results.append(r)
    write_csv(out / "validate.csv", ["check", "passed", "detail"], [[r.name, r.passed, r.detail] for r in results])
    failed = [r.name for r in results if not r.passed]
    return (EXIT_CHECK if failed else EXIT_OK), {"failed_checks": failed, "files": ["validate.csv"]}


HANDLERS = {"constants": cmd_constants, "spectral": cmd_spectral, "volume": cmd_volume, "mass": cmd_mass,
            "zn": cmd_zn, "validate": cmd_validate}


def run_command(command: str, cfg: RunConfig) -> tuple[int, dict]:
    """Run one command, write its manifest and return ``(exit_code, info)``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": cfg.to_dict(), "config_sha256": cfg.sha256(), "seed": cfg.seed,
                "workers": cfg.workers, "versions": _versions()}
    info: dict = {}
    try:
        crit = solve_criticality(cfg.weight_spec())
        code, info = HANDLERS[command](cfg, crit, out)
        manifest["status"] = "ok" if code == EXIT_OK else "failed"
    except (ConfigError, GenericityError, DomainError) as exc:
        code = EXIT_CONFIG
        manifest.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:  # partial outputs stay on disk, marked by the manifest
        code = EXIT_CHECK
        manifest.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        log.exception("run failed")
    manifest["outputs"] = info.get("files", [])
    manifest["results"] = {k: v for k, v in info.items() if k not in ("files", "records", "fit_result")}
    (out / f"{command}.manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return code, info


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectree", description="Random walks on generic random trees.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        overrides = {k: getattr(args, k) for k in ("seed", "workers", "out") if getattr(args, k) is not None}
        if overrides:
            cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = run_command(args.command, cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
