"""``ait-sim``: batch front end producing CSV data and key=value metadata.

    ait-sim <command> --config <path> [--set section.key=value]... [--out <dir>]
            [--engine me|mf] [--threads N]

Commands: design, simulate, sweep, stark, fit, compare, emit-config.  ``--config``
accepts a file path or the name of a shipped configuration (``table_s1``,
``stark_comb``); bare names are also looked up in ``$AITSIM_CONFIG_DIR``.

Every output file is written to a temporary file and renamed into place, and gets
a ``<file>.meta`` sidecar.  If any step fails, files already written by the run
are removed and the exit status is non-zero.  Exit status: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import platform
import sys
import tempfile
from importlib import metadata
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, emit_config, flat_items, load_config, parse_config, shipped_config
from .errors import AitSimError, ConfigError

if TYPE_CHECKING:
    from .fourier import SpectrumTrace

log = logging.getLogger("aitsim")

COMMANDS = ("design", "simulate", "sweep", "stark", "fit", "compare", "emit-config")
ENGINE_LONG = {"mf": "mean_field", "me": "master_equation"}
SHIPPED = ("table_s1", "stark_comb")


def fmt(x: float) -> str:
    """17 significant digits: round-trips every float and is locale independent."""
    return f"{float(x):.17g}"


# --- output handling ---------------------------------------------------------------------

class OutputSet:
    """Atomic writer that remembers what it wrote so a failed run can clean up."""

    def __init__(self, directory: Path, prefix: str, meta: list[tuple[str, str]]):
        self.directory = directory
        self.prefix = prefix
        self.meta = meta
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / f"{self.prefix}{name}"

    def _atomic(self, path: Path, text: str):
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(path)

    def write(self, name: str, text: str, extra_meta: Sequence[tuple[str, str]] = ()) -> Path:
        path = self.path(name)
        self._atomic(path, text)
        created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        meta: dict[str, str] = {}
        for k, v in [("output", path.name), *extra_meta, *self.meta, ("created_utc", created)]:
            meta.setdefault(k, v)  # first occurrence wins
        self._atomic(Path(f"{path}.meta"), "".join(f"{k}={v}\n" for k, v in meta.items()))
        return path

    def cleanup(self):
        for p in reversed(self.written):
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()


def csv_text(header_meta: Iterable[tuple[str, str]], columns: Sequence[str],
             rows: Iterable[Sequence[float]]) -> str:
    lines = [f"# {k}={v}" for k, v in header_meta]
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(x) for x in row) for row in rows)
    return "\n".join(lines) + "\n"


def read_trace_csv(path) -> "SpectrumTrace":
    """Read a ``frequency_hz,response`` CSV (``#`` comment lines allowed); extra columns ignored."""
    from .fourier import SpectrumTrace

    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ConfigError(f"data file {path} is empty", key="fit.data")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2 or header[0] != "frequency_hz":
        raise ConfigError(f"data file {path} must start with a frequency_hz,<response> header",
                          key="fit.data")
    try:
        data = np.array([[float(x) for x in ln.split(",")[:2]] for ln in lines[1:]])
    except ValueError as exc:
        raise ConfigError(f"data file {path}: {exc}", key="fit.data") from None
    if data.ndim != 2 or data.shape[0] < 5:
        raise ConfigError(f"data file {path} needs at least 5 rows", key="fit.data")
    return SpectrumTrace(data[:, 0], data[:, 1], meta={"source": str(path)})


# --- commands ---------------------------------------------------------------------------

class Run:
    def __init__(self, command: str, cfg: RunConfig, out: OutputSet, engine: str, threads: int):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.engine = engine
        self.threads = threads

    def header(self, **extra) -> list[tuple[str, str]]:
        from .fourier import params_hash

        params = self.cfg.system_params()
        items = [("command", self.command), ("engine", ENGINE_LONG[self.engine]),
                 ("aitsim_version", __version__),
                 ("params_hash", params_hash(params, self.cfg.drive_params()))]
        items += [(k, str(v)) for k, v in extra.items()]
        return items


def _normalize(trace, on: bool):
    return trace.normalized() if on else trace


def cmd_design(run: Run) -> str:
    from .model import figures_of_merit, fsr, piezo_fundamental

    d = run.cfg["design"]
    params = run.cfg.system_params()
    rows = [("fsr_hz", fsr(d["v_s"], d["t_s"]))]
    if d["v_p"] is not None and d["t_p"] is not None:
        rows.append(("piezo_fundamental_hz", piezo_fundamental(d["v_p"], d["t_p"])))
    qs, cs = figures_of_merit(params)
    for k, (q, c) in enumerate(zip(qs, cs)):
        sfx = "" if len(qs) == 1 else f"_mode{k}"
        rows += [(f"q{sfx}", q), (f"cooperativity{sfx}", c)]
    table = ["quantity                 value"]
    for name, v in rows:
        pretty = f"{v / 1e6:.4g} MHz" if name.endswith("_hz") else f"{v:.4g}"
        table.append(f"{name:<24} {pretty:<14} ({fmt(v)})")
    print("\n".join(table))
    run.out.write("design.txt", "".join(f"{k}={fmt(v)}\n" for k, v in rows))
    return "design table written"


def cmd_simulate(run: Run) -> str:
    params, drive = run.cfg.system_params(), run.cfg.drive_params()
    grid = run.cfg.frequency_grid().points
    if run.engine == "mf":
        from .meanfield import spectrum_meanfield
        trace = spectrum_meanfield(params, drive, grid)
    else:
        from .dynamics import spectrum_master_equation
        trace = spectrum_master_equation(params, drive, grid)
    trace = _normalize(trace, run.cfg["output"]["normalize"])
    _write_trace(run, "spectrum.csv", trace, "qubit_spectrum_per_hz")
    return f"spectrum with {len(trace)} points"


def _write_trace(run: Run, name: str, trace, observable: str):
    from .fourier import grid_hash

    meta = run.header(observable=observable, n_points=len(trace),
                      normalized=str(bool(run.cfg["output"]["normalize"])).lower(),
                      grid_hash=grid_hash(trace.frequencies))
    body = csv_text(meta, ("frequency_hz", "response"), zip(trace.frequencies, trace.values))
    run.out.write(name, body, meta)


def cmd_sweep(run: Run) -> str:
    from .spectroscopy import two_tone_sweep

    trace = two_tone_sweep(run.cfg.system_params(), run.cfg.drive_params(), run.cfg.frequency_grid(),
                           ENGINE_LONG[run.engine], threads=run.threads,
                           normalize=run.cfg["output"]["normalize"])
    _write_trace(run, "sweep.csv", trace, "excited_population")
    return f"two-tone sweep with {len(trace)} points"


def cmd_stark(run: Run) -> str:
    from .fourier import grid_hash
    from .spectroscopy import stark_sweep

    grid = run.cfg.frequency_grid(stark=True)
    qf = run.cfg.qubit_freqs()
    smap = stark_sweep(run.cfg.system_params(), run.cfg.drive_params(), qf, grid,
                       ENGINE_LONG[run.engine], threads=run.threads,
                       normalize=run.cfg["output"]["normalize"])
    meta = run.header(observable="excited_population", n_rows=qf.size, n_columns=grid.points.size,
                      grid_hash=grid_hash(grid.points))
    rows = ((q, f, r) for i, q in enumerate(smap.qubit_freqs)
            for f, r in zip(smap.drive_freqs, smap.response[i]))
    run.out.write("stark.csv", csv_text(meta, ("qubit_freq", "drive_freq", "response"), rows), meta)
    return f"Stark map {qf.size} x {grid.points.size}"


def cmd_fit(run: Run) -> str:
    from .fitting import FitConfig, fit_spectrum, residual_diagnostics

    f = run.cfg["fit"]
    if f["data"] is None:
        raise ConfigError("no data file given (set fit.data)", key="fit.data")
    data = read_trace_csv(f["data"])
    config = FitConfig(free_params=tuple(f["free_params"]), max_iterations=f["max_iterations"],
                       tol=f["tol"], engine=ENGINE_LONG[run.engine])
    result = fit_spectrum(data, run.cfg.system_params(), run.cfg.drive_params(), config)
    diag = residual_diagnostics(data, result)
    meta = run.header(data=os.path.basename(str(f["data"])), converged=str(result.converged).lower())
    text = "\n".join(result.as_lines() + [f"reduced_cost={fmt(diag.reduced_cost)}",
                                          f"sign_balance={fmt(diag.sign_balance)}"]) + "\n"
    run.out.write("fit.txt", text, meta)
    rows = zip(data.frequencies, data.values, result.model_values, diag.residuals)
    run.out.write("fit_residuals.csv",
                  csv_text(meta, ("frequency_hz", "data", "model", "residual"), rows), meta)
    vals = ", ".join(f"{k}={v:.6g}±{result.uncertainties[k]:.2g}" for k, v in result.values.items())
    return f"fit {'converged' if result.converged else 'did NOT converge'}: {vals}"


def compare_metrics(me, mf, omega_p: float, window: float) -> list[tuple[str, float | str]]:
    """Agreement between two traces on one grid: sup-norm difference, and for each
    polarity the most prominent feature within ``window`` of ``omega_p`` (the
    transparency dip and the hybridised peak beside it) in each trace."""
    from .spectroscopy import ait_feature

    metrics: list[tuple[str, float | str]] = [
        ("sup_norm_difference", float(np.max(np.abs(me.values - mf.values)))),
    ]
    for pol in ("dip", "peak"):
        f_me = ait_feature(me, omega_p, window, pol)
        f_mf = ait_feature(mf, omega_p, window, pol)
        for tag, ft in (("me", f_me), ("mf", f_mf)):
            if ft is None:
                metrics.append((f"{pol}_{tag}", "none"))
            else:
                metrics += [(f"{pol}_{tag}_center_hz", ft.center), (f"{pol}_{tag}_fwhm_hz", ft.fwhm)]
        if f_me is not None and f_mf is not None:
            metrics += [(f"{pol}_center_difference_hz", abs(f_me.center - f_mf.center)),
                        (f"{pol}_fwhm_relative_difference", abs(f_me.fwhm - f_mf.fwhm) / f_mf.fwhm)]
    return metrics


def cmd_compare(run: Run) -> str:
    from .fourier import grid_hash
    from .spectroscopy import two_tone_sweep

    params, drive = run.cfg.system_params(), run.cfg.drive_params()
    grid = run.cfg.frequency_grid()
    norm = run.cfg["output"]["normalize"]
    me = two_tone_sweep(params, drive, grid, "master_equation", threads=run.threads, normalize=norm)
    mf = two_tone_sweep(params, drive, grid, "mean_field", normalize=norm)
    meta = run.header(observable="excited_population", n_points=grid.points.size,
                      grid_hash=grid_hash(grid.points))
    meta = [(k, v) for k, v in meta if k != "engine"] + [("engines", "master_equation,mean_field")]
    rows = zip(grid.points, me.values, mf.values)
    run.out.write("compare.csv", csv_text(meta, ("frequency_hz", "response_me", "response_mf"), rows), meta)
    metrics = compare_metrics(me, mf, params.mode.omega_p, 0.5 * run.cfg["grid"]["fine_span"])
    text = "".join(f"{k}={fmt(v) if isinstance(v, float) else v}\n" for k, v in metrics)
    run.out.write("compare_metrics.txt", text, meta)
    return "; ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in metrics)


HANDLERS = {"design": cmd_design, "simulate": cmd_simulate, "sweep": cmd_sweep, "stark": cmd_stark,
            "fit": cmd_fit, "compare": cmd_compare}


# --- entry point --------------------------------------------------------------------------

def resolve_config(name: str, overrides: Sequence[str]) -> RunConfig:
    path = Path(name)
    if path.is_file():
        return load_config(path, overrides)
    env_dir = os.environ.get("AITSIM_CONFIG_DIR")
    if env_dir and path.suffix == "" and (Path(env_dir) / f"{name}.ini").is_file():
        return load_config(Path(env_dir) / f"{name}.ini", overrides)
    if name in SHIPPED:
        return parse_config(shipped_config(name), overrides)
    raise ConfigError(f"configuration {name!r} not found (give a path or one of {', '.join(SHIPPED)})")


def _versions() -> list[tuple[str, str]]:
    # read installed distribution metadata instead of importing (numba import is slow)
    items = [("aitsim_version", __version__), ("python_version", platform.python_version()),
             ("numpy_version", np.__version__)]
    for dist in ("scipy", "numba"):
        try:
            items.append((f"{dist}_version", metadata.version(dist)))
        except metadata.PackageNotFoundError:  # pragma: no cover - declared dependencies
            items.append((f"{dist}_version", "unknown"))
    return items


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ait-sim", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="config file or shipped config name")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--engine", choices=("me", "mf"), help="override run.engine")
    p.add_argument("--threads", type=int, help="cap on sweep parallelism (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.config, args.overrides)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"ait-sim: configuration error: {exc}", file=sys.stderr)
        return 2
    if args.command == "emit-config":
        sys.stdout.write(emit_config(cfg))
        return 0

    engine = args.engine or cfg["run"]["engine"]
    threads = args.threads or cfg["run"]["threads"] or os.cpu_count() or 1
    meta = [("command", args.command), ("engine", ENGINE_LONG[engine]), ("threads", str(threads)),
            *_versions(), *((f"config.{k}", v) for k, v in flat_items(cfg))]
    out = OutputSet(Path(args.out), cfg["output"]["prefix"], meta)
    run = Run(args.command, cfg, out, engine, threads)
    try:
        summary = HANDLERS[args.command](run)
    except ConfigError as exc:
        out.cleanup()
        print(f"ait-sim: configuration error: {exc}", file=sys.stderr)
        return 2
    except (AitSimError, OSError, ValueError, ArithmeticError) as exc:
        out.cleanup()
        print(f"ait-sim: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.cleanup()
        raise
    print(f"ait-sim {args.command}: {summary}", file=sys.stderr)
    for p in out.written:
        if not p.name.endswith(".meta"):
            print(f"  wrote {p}", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
