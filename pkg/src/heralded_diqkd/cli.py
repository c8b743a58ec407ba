"""Command-line front end: key rates, optimization, distance sweeps, validation.

Scenario values are resolved in order preset -> config file -> flags, later
sources overriding earlier ones.  The config file is a flat ``key = value``
document; keys are the long flag names with dashes replaced by underscores
(``eta_c = 0.9``, ``source = ondemand``, ``amplifier = false``), ``#`` starts
a comment.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .measurement import ObservedStats
from .optimizer import (
    PRESETS,
    Scenario,
    UnboundedDistanceError,
    evaluate_keyrate,
    max_distance,
    optimize,
    sweep_distance,
)
from .security import S_MAX, KeyRateResult, key_rate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2

SOURCE_ALIASES = {"heralded": "heralded", "ondemand": "on_demand", "on_demand": "on_demand"}

ROW_COLUMNS = ["L_km", "K_bits_per_s", "p", "p_prime", "t", "Q", "S", "P_H", "mu_cc"]
DETAIL_COLUMNS = ROW_COLUMNS + ["P_S", "mu", "I_E", "secret_fraction"]


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


CONFIG_KEYS = {
    "preset": str,
    "trust": str,
    "source": str,
    "eta_c": float,
    "eta_d": float,
    "visibility": float,
    "rep_rate_hz": float,
    "attenuation_db_km": float,
    "amplifier": _parse_bool,
    "no_amplifier": _parse_bool,
    "distance": float,
    "distance_range": str,
    "p": float,
    "p_prime": float,
    "t": float,
    "format": str,
    "out": str,
    "workers": int,
}


def read_config(path: str | Path) -> dict:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    if values.pop("no_amplifier", False):
        values["amplifier"] = False
    return values


def parse_range(text: str) -> list[float]:
    """``a:b:step`` -> [a, a+step, ..., b] (b included when on the grid)."""
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"distance range must be a:b:step, got {text!r}") from exc
    if step <= 0 or b < a or a < 0:
        raise ConfigError(f"invalid distance range {text!r}")
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + i * step, 12) for i in range(n + 1)]


def _scenario_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("scenario")
    g.add_argument("--preset", choices=sorted(PRESETS), help="start from a named scenario")
    g.add_argument("--config", help="flat key = value config file")
    g.add_argument("--trust", choices=["untrusted", "trusted"])
    g.add_argument("--source", choices=["heralded", "ondemand"])
    g.add_argument("--eta-c", type=float, help="fiber coupling efficiency")
    g.add_argument("--eta-d", type=float, help="detector efficiency")
    g.add_argument("--visibility", type=float, help="HOM visibility V")
    g.add_argument("--rep-rate-hz", type=float, help="source repetition rate")
    g.add_argument("--attenuation-db-km", type=float)
    g.add_argument("--no-amplifier", action="store_true", default=None, help="direct link, no qubit amplifier")
    o = common.add_argument_group("output")
    o.add_argument("--format", choices=["csv", "json"])
    o.add_argument("--out", help="write output here instead of stdout")
    o.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _scenario_flags()
    parser = argparse.ArgumentParser(
        prog="heralded-diqkd",
        description="Key rates of device-independent QKD with a heralded qubit amplifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    kr = sub.add_parser("keyrate", parents=[common], help="key rate at a fixed operating point")
    kr.add_argument("--distance", type=float, help="km")
    kr.add_argument("--p", type=float, help="entangled-pair probability")
    kr.add_argument("--p-prime", type=float, help="pair probability of the heralded single-photon sources")
    kr.add_argument("--t", type=float, help="amplifier beamsplitter transmission")
    st = kr.add_argument_group("explicit statistics (bypass the optical model)")
    st.add_argument("--ideal-stats", action="store_true", help="Q=0, S=2sqrt2, mu_cc=1, mu_ci=mu_ic=0, P_S=P_H=1")
    for flag in ("--Q", "--S", "--mu-cc", "--mu-ci", "--mu-ic", "--P-S", "--P-H"):
        st.add_argument(flag, type=float, dest="stat_" + flag[2:].replace("-", "_"))

    opt = sub.add_parser("optimize", parents=[common], help="optimize (p, p', t) at one distance")
    opt.add_argument("--distance", type=float, help="km")

    sw = sub.add_parser("sweep", parents=[common], help="optimized key rate over a distance grid")
    sw.add_argument("--distance-range", help="a:b:step in km")
    sw.add_argument("--distance", type=float, action="append", help="km (repeatable)")
    sw.add_argument("--workers", type=int, help="parallel processes (output order is fixed)")

    sub.add_parser("max-distance", parents=[common], help="largest distance with positive key (direct link)")
    sub.add_parser("validate", parents=[common], help="run the oracle cross-checks")
    return parser


def resolve(args: argparse.Namespace) -> tuple[Scenario, dict]:
    """Merge preset, config file and flags into a scenario plus run options."""
    values = read_config(args.config) if args.config else {}
    preset = args.preset or values.pop("preset", None)
    values.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    scenario = PRESETS[preset] if preset else Scenario()

    flags = {k: v for k, v in vars(args).items() if v is not None}
    if flags.pop("no_amplifier", False):
        flags["amplifier"] = False
    if flags.get("distance") is not None and isinstance(flags["distance"], list):
        flags["distance_list"] = flags.pop("distance")
    values.update(flags)

    fields = {}
    for key in ("trust", "source", "eta_c", "eta_d", "visibility", "rep_rate_hz", "attenuation_db_km", "amplifier"):
        if key in values:
            fields[key] = values.pop(key)
    if "source" in fields:
        if fields["source"] not in SOURCE_ALIASES:
            raise ConfigError(f"unknown source {fields['source']!r}")
        fields["source"] = SOURCE_ALIASES[fields["source"]]
    try:
        scenario = replace(scenario, **fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    values.setdefault("format", "csv")
    if values["format"] not in ("csv", "json"):
        raise ConfigError(f"unknown format {values['format']!r}")
    values["preset"] = preset
    return scenario, values


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(columns: list[str], rows: list[dict], metadata: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"metadata": metadata, "columns": columns, "rows": rows}, indent=2) + "\n"
    buf = io.StringIO()
    for key, value in metadata.items():
        buf.write(f"# {key}: {_fmt(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _result_row(L_km: float, p: float, p_prime: float, t, result: KeyRateResult) -> dict:
    return {
        "L_km": L_km,
        "K_bits_per_s": result.K,
        "p": p,
        "p_prime": p_prime,
        "t": t,
        "Q": result.Q,
        "S": result.S,
        "P_H": result.P_H,
        "mu_cc": result.mu_cc,
        "P_S": result.P_S,
        "mu": result.mu,
        "I_E": result.I_E,
        "secret_fraction": result.secret_fraction,
    }


def _require(values: dict, key: str, what: str):
    if values.get(key) is None:
        raise ConfigError(f"missing {what} (--{key.replace('_', '-')})")
    return values[key]


def _explicit_stats(values: dict) -> dict | None:
    keys = [k for k in values if k.startswith("stat_")]
    if not keys and not values.get("ideal_stats"):
        return None
    ideal = {"Q": 0.0, "S": S_MAX, "mu_cc": 1.0, "mu_ci": 0.0, "mu_ic": 0.0, "P_S": 1.0, "P_H": 1.0}
    for k in keys:
        ideal[k[len("stat_"):]] = values[k]
    return ideal


def cmd_keyrate(scenario: Scenario, values: dict) -> tuple[list[str], list[dict]]:
    explicit = _explicit_stats(values)
    if explicit is not None:
        e = scenario.eta_d
        stats = ObservedStats(
            Q=explicit["Q"],
            S=explicit["S"],
            mu_cc=explicit["mu_cc"],
            mu_ci=explicit["mu_ci"],
            mu_ic=explicit["mu_ic"],
            eta_d=e,
            # Without photon-number information, treat every conclusive
            # event as single-photon: mu~_cc = mu_cc / eta_d^2.
            S_tilde=explicit["S"],
            mu_tilde_cc=explicit["mu_cc"] / e**2 if e > 0 else 0.0,
            mu_tilde_ci=explicit["mu_ci"] / e if e > 0 else 0.0,
            mu_tilde_ic=explicit["mu_ic"] / e if e > 0 else 0.0,
        )
        result = key_rate(scenario.trust, stats, scenario.rep_rate_hz, explicit["P_S"], explicit["P_H"])
        row = _result_row(values.get("distance"), None, None, None, result)
        return DETAIL_COLUMNS, [row]
    L = _require(values, "distance", "distance")
    p = _require(values, "p", "pair probability")
    p_prime = values.get("p_prime", 0.0)
    t = values.get("t")
    if scenario.amplifier:
        t = _require(values, "t", "beamsplitter transmission")
        if scenario.source == "heralded":
            p_prime = _require(values, "p_prime", "heralded-source pair probability")
    try:
        result = evaluate_keyrate(scenario, L, p, p_prime, t)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return DETAIL_COLUMNS, [_result_row(L, p, p_prime, t, result)]


def _opt_row(res) -> dict:
    return _result_row(res.L_km, res.p, res.p_prime, res.t, res.result)


def cmd_optimize(scenario: Scenario, values: dict) -> tuple[list[str], list[dict]]:
    L = _require(values, "distance", "distance")
    if L < 0:
        raise ConfigError("negative distance")
    return DETAIL_COLUMNS, [_opt_row(optimize(scenario, L))]


def cmd_sweep(scenario: Scenario, values: dict) -> tuple[list[str], list[dict]]:
    distances = []
    if values.get("distance_range"):
        distances += parse_range(values["distance_range"])
    distances += values.get("distance_list", [])
    if "distance" in values:
        distances.append(values["distance"])
    if not distances:
        raise ConfigError("sweep needs --distance-range or --distance")
    if any(L < 0 for L in distances):
        raise ConfigError("distances must be non-negative")
    results = sweep_distance(scenario, distances, workers=values.get("workers", 1))
    return ROW_COLUMNS, [_opt_row(r) for r in results]


def cmd_max_distance(scenario: Scenario, values: dict) -> tuple[list[str], list[dict]]:
    if scenario.amplifier:
        raise ConfigError("max-distance applies to the direct link; pass --no-amplifier")
    try:
        L = max_distance(scenario)
    except UnboundedDistanceError as exc:
        raise ConfigError(str(exc)) from exc
    return ["L_max_km"], [{"L_max_km": L}]


def cmd_validate() -> tuple[str, int]:
    from .checks import run_checks

    lines, failed = [], 0
    for name, ok, detail in run_checks():
        failed += not ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    lines.append(f"{len(lines) - failed}/{len(lines)} checks passed")
    return "\n".join(lines) + "\n", EXIT_VALIDATION if failed else EXIT_OK


COMMANDS = {
    "keyrate": cmd_keyrate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "max-distance": cmd_max_distance,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        scenario, values = resolve(args)
        if args.command == "validate":
            text, status = cmd_validate()
        else:
            columns, rows = COMMANDS[args.command](scenario, values)
            metadata = {"command": args.command, "preset": values["preset"], **asdict(scenario)}
            text, status = render(columns, rows, metadata, values["format"]), EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if values.get("out"):
        Path(values["out"]).write_text(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
