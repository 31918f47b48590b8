"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data or config error, 3 internal error.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .comfort import RobustnessBox, robustness
from .control import CONTROLLERS, PREDICTIVE
from .core import SEASONS, Config, ConfigError, dump_config, load_config
from .datagen import OccupancyProfile, WeatherProfile, gen_occupancy, gen_weather
from .engine import Scenario, build_forecasts, run_day, run_sweep
from .io import (
    SUMMARY_HEADER, DataError, OccupancyDataset, ensure_dir, read_occupancy_csv, read_weather_csv,
    write_error_matrix_csv, write_occupancy_csv, write_result_csv, write_weather_csv,
)
from .occupancy import NoCandidatesError, OccupancyError, build_error_matrix, upsample_to_coarse

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
HORIZON = "shrinking same-day horizon (re-planned every coarse step until midnight)"
SCATTER_HEADER = ["controller", "day", "replicate", "E_kWh", "D_pct"]
BASELINE = "baseline"

log = logging.getLogger("pecsim")


class DataProblem(click.ClickException):
    exit_code = EXIT_DATA


def _fail(msg: str):
    raise DataProblem(msg)


def _config(path) -> Config:
    if path is None:
        return Config()
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(f"config {path}: {exc}")
    except OSError as exc:
        _fail(f"config {path}: {exc.strerror}")


def _outdir(path) -> Path:
    try:
        return ensure_dir(path)
    except OSError as exc:
        _fail(f"output directory {path} is not writable: {exc.strerror}")


def _levels(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(not 0.0 <= v <= 1.0 for v in vals):
        raise click.BadParameter("error levels must lie in [0, 1]")
    return vals


def _level_tag(level: float) -> str:
    return f"{int(round(level * 100)):03d}"


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_data(occupancy, weather, config: Config):
    try:
        occ = read_occupancy_csv(occupancy, config.timebase.tau_fine)
        wx = read_weather_csv(weather, config.timebase.tau_coarse)
    except OSError as exc:
        _fail(f"{exc.filename}: {exc.strerror}")
    except DataError as exc:
        _fail(str(exc))
    if wx.shape[0] < len(occ.day_ids):
        _fail(f"weather covers {wx.shape[0]} days but occupancy lists {len(occ.day_ids)}")
    if len(occ.room_ids) != config.building.n_rooms:
        _fail(f"occupancy has {len(occ.room_ids)} rooms but the building has {config.building.n_rooms}")
    return occ, {d: wx[i] for i, d in enumerate(occ.day_ids)}


def _season_for(season, occupancy) -> str:
    if season:
        return season
    manifest = Path(occupancy).parent / "manifest.json"
    if manifest.exists():
        try:
            found = json.loads(manifest.read_text()).get("season")
        except json.JSONDecodeError:
            found = None
        if found in SEASONS:
            return found
    raise click.UsageError("--season is required when no datagen manifest sits next to the occupancy file")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="pecsim")
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def cli(verbose: int) -> None:
    """Occupancy-aware HVAC control simulator."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--season", type=click.Choice(SEASONS), required=True)
@click.option("--days", type=click.IntRange(min=2), default=25, show_default=True)
@click.option("--rooms", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out", type=click.Path(file_okay=False), default=".", show_default=True)
def datagen(season: str, days: int, rooms: int, seed: int, out: str) -> None:
    """Write synthetic occupancy.csv, weather.csv and a manifest."""
    outdir = _outdir(out)
    occ = gen_occupancy(OccupancyProfile(seed=seed), days, rooms)
    wx = gen_weather(WeatherProfile.default(season, seed), days)
    write_occupancy_csv(outdir / "occupancy.csv", OccupancyDataset.from_days(occ))
    write_weather_csv(outdir / "weather.csv", wx)
    _write_json(outdir / "manifest.json", {
        "command": "datagen", "version": __version__, "season": season, "days": days,
        "rooms": rooms, "seed": seed, "files": ["occupancy.csv", "weather.csv"],
    })
    click.echo(f"wrote {days * rooms} occupancy rows and {days} weather days to {outdir}")


@cli.command("error-matrix")
@click.option("--occupancy", type=click.Path(dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--granularity", type=click.IntRange(min=1), default=30, show_default=True)
def error_matrix(occupancy: str, out: str, granularity: int) -> None:
    """Pairwise normalised Hamming distances between all room-day strings."""
    try:
        data = read_occupancy_csv(occupancy, granularity)
    except OSError as exc:
        _fail(f"{occupancy}: {exc.strerror}")
    except DataError as exc:
        _fail(str(exc))
    strings = data.strings()
    try:
        matrix = build_error_matrix(strings)
    except OccupancyError as exc:
        _fail(str(exc))
    out_path = Path(out)
    _outdir(out_path.parent if str(out_path.parent) else ".")
    write_error_matrix_csv(out_path, matrix, data.labels())
    click.echo(f"wrote {matrix.n}x{matrix.n} error matrix to {out_path}")


def _summary_row(run: str, res, error: float, replicate) -> list:
    conv = float(res.converged.mean()) if res.converged.size else 1.0
    return [run, res.controller, res.day_id, repr(error), replicate, repr(res.E), repr(res.D_pct), repr(conv)]


@cli.command()
@click.option("--occupancy", type=click.Path(dir_okay=False), required=True)
@click.option("--weather", type=click.Path(dir_okay=False), required=True)
@click.option("--day", "day_id", required=True, help="Day id as listed in the occupancy file.")
@click.option("--controller", required=True, help=f"One of {', '.join(CONTROLLERS)}.")
@click.option("--season", type=click.Choice(SEASONS), default=None)
@click.option("--error", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True)
@click.option("--replicates", type=click.IntRange(min=1), default=15, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def simulate(occupancy, weather, day_id, controller, season, error, replicates, seed, config_path, out) -> None:
    """Run one day: the perfect-forecast baseline plus erroneous-forecast replicates."""
    if controller not in CONTROLLERS:
        raise click.UsageError(f"unknown controller {controller!r}; choose from {{{', '.join(CONTROLLERS)}}}")
    season = _season_for(season, occupancy)
    cfg = _config(config_path)
    occ, weather_by_day = _load_data(occupancy, weather, cfg)
    try:
        truth = occ.day(day_id)
    except DataError as exc:
        _fail(str(exc))
    outdir = _outdir(out)
    coarse = cfg.timebase.tau_coarse
    fine = np.stack([s.bits for s in truth])
    perfect = np.stack([upsample_to_coarse(s, coarse).bits for s in truth])
    predictive = controller in PREDICTIVE

    runs = [("baseline", perfect, "")]
    skipped = None
    if error > 0:
        try:
            forecasts, _, _ = build_forecasts(truth, build_error_matrix(occ.strings()), error, replicates,
                                              seed, day_id, coarse)
            runs += [(f"rep{i:02d}", f, i) for i, f in enumerate(forecasts)]
        except NoCandidatesError as exc:
            skipped = str(exc)
            click.echo(f"warning: no erroneous forecasts at error {error}: {exc}", err=True)
    rows = []
    for name, forecast, rep in runs:
        sc = Scenario(day_id, controller, season, fine, weather_by_day[day_id], cfg,
                      forecast=forecast if predictive else None, seeds={"master_seed": seed})
        res = run_day(sc)
        write_result_csv(outdir / f"result_{controller}_{day_id}_{name}.csv", res)
        rows.append(_summary_row(name, res, 0.0 if name == "baseline" else error, rep))
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        w.writerows(rows)
    _write_json(outdir / "manifest.json", {
        "command": "simulate", "version": __version__, "season": season, "day": day_id,
        "controller": controller, "error": error, "replicates": replicates, "seed": seed,
        "config_hash": cfg.digest(), "horizon": HORIZON, "skipped": skipped,
    })
    click.echo(f"wrote {len(rows)} result files to {outdir}")


@cli.command()
@click.option("--occupancy", type=click.Path(dir_okay=False), required=True)
@click.option("--weather", type=click.Path(dir_okay=False), required=True)
@click.option("--season", type=click.Choice(SEASONS), default=None)
@click.option("--controllers", default="ns,sa", show_default=True)
@click.option("--levels", default="0,0.05,0.1,0.15,0.2", show_default=True)
@click.option("--replicates", type=click.IntRange(min=1), default=15, show_default=True)
@click.option("--days", "n_days", type=click.IntRange(min=1), default=None, help="Use the first N days.")
@click.option("--day-level", type=float, default=None, help="Level for per-day robustness (default: highest).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker processes (default: all cores).")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def sweep(occupancy, weather, season, controllers, levels, replicates, n_days, day_level, seed, jobs,
          config_path, out) -> None:
    """Days x error levels x replicates for each controller, with robustness tables."""
    ctrls = [c.strip() for c in controllers.split(",") if c.strip()]
    bad = [c for c in ctrls if c not in CONTROLLERS]
    if bad or not ctrls:
        raise click.UsageError(f"unknown controller(s) {bad}; choose from {{{', '.join(CONTROLLERS)}}}")
    lv = _levels(levels)
    season = _season_for(season, occupancy)
    cfg = _config(config_path)
    occ, weather_by_day = _load_data(occupancy, weather, cfg)
    days = list(occ.day_ids[:n_days] if n_days else occ.day_ids)
    day_level = max(lv) if day_level is None else day_level
    if day_level not in lv:
        raise click.UsageError(f"--day-level {day_level} is not one of the swept levels")
    outdir = _outdir(out)

    by_day = {d: occ.day(d) for d in occ.day_ids}
    res = run_sweep(cfg, season, by_day, weather_by_day, days, controllers=ctrls,
                    levels=[x for x in lv if x > 0], replicates=replicates, master_seed=seed, jobs=jobs)

    for level in lv:
        with open(outdir / f"scatter_{_level_tag(level)}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCATTER_HEADER)
            for c in ctrls:
                for d in days:
                    base = res.baselines[(d, c)]
                    w.writerow([c, d, BASELINE, repr(base.E), repr(base.D_pct)])
                    for i, run in enumerate(res.cells.get((d, level, c), []) if level > 0 else []):
                        w.writerow([c, d, i, repr(run.E), repr(run.D_pct)])

    table = _robustness_from_sweep(res, ctrls, days, lv)
    _write_robustness(outdir, table, day_level)
    _write_json(outdir / "manifest.json", {
        "command": "sweep", "version": __version__, "season": season, "controllers": ctrls,
        "levels": lv, "replicates": replicates, "days": days, "master_seed": seed,
        "seed_derivation": "SeedSequence(master_seed, day, level, room); replicates drawn jointly per room",
        "config_hash": cfg.digest(), "config": dump_config(cfg), "horizon": HORIZON,
        "robustness_box": {"energy_kWh": res.box[0], "discomfort_pp": res.box[1]},
        "skipped": res.skipped,
        "injection": [{"day": d, "level": lv, **m} for (d, lv), m in sorted(res.injection_meta.items())],
    })
    click.echo(f"swept {len(days)} days x {len(lv)} levels x {replicates} replicates into {outdir}")


def _robustness_from_sweep(res, ctrls, days, levels) -> dict:
    table = {}
    for c in ctrls:
        for level in levels:
            for d in days:
                if level == 0:
                    table[(c, level, d)] = 100.0
                elif (d, level, c) in res.robustness:
                    table[(c, level, d)] = res.robustness[(d, level, c)]
    return table


def _write_robustness(outdir: Path, table: dict, day_level: float) -> None:
    ctrls = sorted({k[0] for k in table})
    levels = sorted({k[1] for k in table})
    with open(outdir / "robustness.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["controller", "level", "mean", "std", "n_days"])
        for c in ctrls:
            for level in levels:
                vals = [v for (cc, ll, _), v in table.items() if cc == c and ll == level]
                if vals:
                    w.writerow([c, repr(level), repr(float(np.mean(vals))), repr(float(np.std(vals))), len(vals)])
    with open(outdir / "robustness_by_day.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["controller", "level", "day", "robustness"])
        for (c, level, d), v in sorted(table.items()):
            if level == day_level:
                w.writerow([c, repr(level), d, repr(v)])


def robustness_from_scatter(directory, box: tuple[float, float] = (20.0, 5.0)) -> dict:
    """Recompute ``(controller, level, day) -> robustness`` from scatter files."""
    table = {}
    for path in sorted(Path(directory).glob("scatter_*.csv")):
        try:
            level = int(path.stem.split("_", 1)[1]) / 100.0
        except ValueError:
            raise DataError(f"{path}: cannot read the error level from the file name") from None
        base, runs = {}, {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if next(reader, None) != SCATTER_HEADER:
                raise DataError(f"{path}: header must be {','.join(SCATTER_HEADER)}")
            for lineno, row in enumerate(reader, 2):
                if not row:
                    continue
                try:
                    c, d, rep, E, D = row[0], row[1], row[2], float(row[3]), float(row[4])
                except (ValueError, IndexError):
                    raise DataError(f"{path}:{lineno}: malformed row") from None
                if rep == BASELINE:
                    base[(c, d)] = (E, D)
                else:
                    runs.setdefault((c, d), []).append((E, D))
        for (c, d), (E0, D0) in base.items():
            pts = runs.get((c, d))
            box_ = RobustnessBox(E0, D0, *box)
            table[(c, level, d)] = robustness(pts, box_) if pts else 100.0
    return table


@cli.command()
@click.argument("sweep_dir", type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["md", "csv"]), default="md", show_default=True)
def report(sweep_dir: str, fmt: str) -> None:
    """Mean and std of per-day robustness by controller and error level."""
    if not Path(sweep_dir).is_dir():
        _fail(f"{sweep_dir}: no such directory")
    try:
        table = robustness_from_scatter(sweep_dir)
    except DataError as exc:
        _fail(str(exc))
    if not table:
        _fail(f"{sweep_dir}: no results (no scatter_*.csv files)")
    rows = []
    for c in sorted({k[0] for k in table}):
        for level in sorted({k[1] for k in table}):
            vals = [v for (cc, ll, _), v in table.items() if cc == c and ll == level]
            if vals:
                rows.append((c, level, float(np.mean(vals)), float(np.std(vals)), len(vals)))
    if fmt == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["controller", "level", "mean", "std", "n_days"])
        for c, level, m, s, n in rows:
            w.writerow([c, f"{level:.2f}", f"{m:.2f}", f"{s:.2f}", n])
    else:
        click.echo("| controller | level | mean robustness (%) | std | days |")
        click.echo("|---|---|---|---|---|")
        for c, level, m, s, n in rows:
            click.echo(f"| {c} | {level:.2f} | {m:.2f} | {s:.2f} | {n} |")


@cli.command("validate-config")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--dump", is_flag=True, help="Print the full resolved configuration.")
def validate_config_cmd(path: str, dump: bool) -> None:
    """Check a key = value config file and report the first problem."""
    cfg = _config(path)
    if dump:
        click.echo(dump_config(cfg), nl=False)
    click.echo(f"ok: {cfg.building.n_rooms} rooms, config hash {cfg.digest()}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="pecsim", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except DataProblem as exc:
        exc.show()
        return EXIT_DATA
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (ConfigError, DataError, OccupancyError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
