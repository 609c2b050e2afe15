"""Run configuration: flat key-value text with sections.

Frequencies are configured in Hz and converted to angular rates; durations
are configured in microseconds.  Unknown sections or keys are errors, as
are missing required keys, so a typo never silently changes a run.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .model import PhysicalParams
from .smooth import TARGET_KINDS

TWO_PI = 2.0 * math.pi

_PARAM_KEYS = {"gamma_hz", "gamma_fb_hz", "n_th", "coop", "eta", "omega_hz",
               "record_us", "dt_us"}
_REQUIRED_PARAMS = {"gamma_hz", "n_th", "coop", "eta"}
_SECTION_KEYS = {
    "params": _PARAM_KEYS,
    "ensemble": {"n_records", "base_seed"},
    "targets": {"kinds"},
    "noise_injection": {"eta_new"},
    "outputs": {"directory", "formats"},
}
_FORMATS = {"csv", "bin"}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    params: PhysicalParams
    n_records: int
    base_seed: int
    targets: tuple[str, ...]
    eta_new: float | None
    out_dir: str | None
    formats: tuple[str, ...]


def _get_float(section, key: str, name: str) -> float:
    try:
        return float(section[key])
    except ValueError as exc:
        raise ConfigError(f"{name}.{key}: not a number") from exc


def _get_int(section, key: str, name: str) -> int:
    raw = section[key]
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}.{key}: not an integer") from exc
    return value


def parse_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc

    for section in cp.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(cp[section]) - _SECTION_KEYS[section]
        if extra:
            raise ConfigError(
                f"unknown key in [{section}]: {sorted(extra)[0]}")
    for required in ("params", "ensemble"):
        if required not in cp:
            raise ConfigError(f"missing section [{required}]")

    par = cp["params"]
    missing = _REQUIRED_PARAMS - set(par)
    if missing:
        raise ConfigError(f"params missing key {sorted(missing)[0]}")
    gamma_fb = (TWO_PI * _get_float(par, "gamma_fb_hz", "params")
                if "gamma_fb_hz" in par else None)
    try:
        params = PhysicalParams(
            gamma=TWO_PI * _get_float(par, "gamma_hz", "params"),
            n_th=_get_float(par, "n_th", "params"),
            coop=_get_float(par, "coop", "params"),
            eta=_get_float(par, "eta", "params"),
            gamma_fb=gamma_fb,
            omega=TWO_PI * _get_float(par, "omega_hz", "params")
            if "omega_hz" in par else 0.0,
            record_duration=1e-6 * _get_float(par, "record_us", "params")
            if "record_us" in par else 750e-6,
            dt=1e-6 * _get_float(par, "dt_us", "params")
            if "dt_us" in par else 1e-6,
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc

    ens = cp["ensemble"]
    for key in ("n_records", "base_seed"):
        if key not in ens:
            raise ConfigError(f"ensemble missing key {key}")
    n_records = _get_int(ens, "n_records", "ensemble")
    if n_records < 1:
        raise ConfigError("ensemble.n_records must be at least 1")
    base_seed = _get_int(ens, "base_seed", "ensemble")
    if base_seed < 0:
        raise ConfigError("ensemble.base_seed must be nonnegative")

    targets: tuple[str, ...] = TARGET_KINDS
    if "targets" in cp and "kinds" in cp["targets"]:
        entries = [s.strip() for s in cp["targets"]["kinds"].split(",")
                   if s.strip()]
        if not entries:
            raise ConfigError("targets.kinds is empty")
        for entry in entries:
            if entry not in TARGET_KINDS:
                raise ConfigError(f"targets.kinds: unknown kind {entry!r}")
        targets = tuple(entries)

    eta_new = None
    if "noise_injection" in cp:
        if "eta_new" not in cp["noise_injection"]:
            raise ConfigError("noise_injection missing key eta_new")
        eta_new = _get_float(cp["noise_injection"], "eta_new",
                             "noise_injection")
        if not 0 < eta_new <= params.eta:
            raise ConfigError(
                "noise_injection.eta_new must be in (0, params.eta]")

    # None lets the caller fall back to its own default location
    out_dir = None
    formats: tuple[str, ...] = ("csv",)
    if "outputs" in cp:
        out = cp["outputs"]
        if "directory" in out:
            out_dir = out["directory"].strip()
            if not out_dir:
                raise ConfigError("outputs.directory is empty")
        if "formats" in out:
            entries = [s.strip() for s in out["formats"].split(",")
                       if s.strip()]
            bad = set(entries) - _FORMATS
            if bad or not entries:
                raise ConfigError("outputs.formats must list csv and/or bin")
            formats = tuple(dict.fromkeys(entries))

    return RunConfig(params=params, n_records=n_records, base_seed=base_seed,
                     targets=targets, eta_new=eta_new, out_dir=out_dir,
                     formats=formats)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())
