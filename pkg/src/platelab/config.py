"""Strict key/value config parsing for the CLI.

Sections and keys are whitelisted; unknown entries are rejected and all
invariant violations are reported together, not first-failure.  The
physical parameters (alpha, delta, beta, kappa, damping, source) carry
no silent defaults: a config must state them.  Numerics and experiment
sections have documented defaults (see docs/config.md).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .discretization import DiscretizationError, DomainSpec
from .integrator import SimPlan
from .model import ModelError, PlateConfig, SourceSpec, certify_source


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("config invalid:\n  - " + "\n  - ".join(self.problems))


_SCHEMA = {
    "domain": {"l", "sigma"},
    "plate": {"alpha", "delta", "beta", "kappa", "damping", "source", "load",
              "source_table_s", "source_table_f", "allow_undamped"},
    "basis": {"mx", "ny", "oversample"},
    "sim": {"dt", "t", "snapshot_every", "fp_tol", "fp_maxiter", "seed", "initial"},
    "sweep": {"radii", "samples_per_radius", "t", "tail_fraction", "dt",
              "snapshot_every"},
    "pairs": {"n_pairs", "gap", "radius", "t", "dt", "snapshot_every"},
    "dimension": {"embed_dims", "theiler", "min_points", "tail_fraction"},
    "stationary": {"samples", "radius", "t", "dt", "snapshot_every",
                   "speed_tol", "dist_tol"},
    "barrier": {"fit_t", "fit_dt", "snapshot_every", "levels"},
}

_REQUIRED_PLATE = ("alpha", "delta", "beta", "kappa", "damping", "source")


@dataclass
class ParsedConfig:
    cfg: PlateConfig
    plan: SimPlan
    initial: tuple
    mx: int
    ny: int
    oversample: int
    sections: dict = field(default_factory=dict)
    text: str = ""
    source_certificate: dict = field(default_factory=dict)


def _parse_initial(spec: str) -> tuple:
    parts = spec.split()
    kind = parts[0]
    if kind == "mode":
        return ("mode", int(parts[1]), int(parts[2]), float(parts[3]))
    if kind == "random":
        return ("random", float(parts[1]))
    if kind == "stationary_kick":
        return ("stationary_kick", float(parts[1]))
    raise ValueError(f"unknown initial-condition tag {kind!r}")


def parse_config(path: str | Path, seed_override: int | None = None) -> ParsedConfig:
    """Parse and validate a config file; raises ConfigError listing all problems."""
    path = Path(path)
    problems: list[str] = []
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    text = path.read_text(encoding="utf-8")

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                problems.append(f"unknown key {key!r} in [{section}]")

    def get(section, key, conv, default=None, required=False):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except (TypeError, ValueError) as exc:
                problems.append(f"[{section}] {key} = {raw!r}: {exc}")
                return default
        if required:
            problems.append(f"[{section}] missing required key {key!r} "
                            "(physical parameters have no silent defaults)")
        return default

    floats = lambda raw: tuple(float(tok) for tok in raw.split())
    ints = lambda raw: tuple(int(tok) for tok in raw.split())
    boolean = lambda raw: raw.strip().lower() in ("1", "true", "yes", "on")

    if not cp.has_section("plate"):
        problems.append("missing required section [plate]")

    l = get("domain", "l", float, 1.0)
    sigma = get("domain", "sigma", float, 0.3)
    alpha = get("plate", "alpha", float, 0.0, required=True)
    delta = get("plate", "delta", float, 0.0, required=True)
    beta = get("plate", "beta", float, 0.0, required=True)
    kappa = get("plate", "kappa", float, 0.0, required=True)
    damping = get("plate", "damping", floats, (1.0, 0.0), required=True)
    source_kind = get("plate", "source", str, "zero", required=True)
    load = get("plate", "load", float, 0.0)
    allow_undamped = get("plate", "allow_undamped", boolean, False)

    source = SourceSpec()
    try:
        if source_kind == "cubic_minus_load":
            if not cp.has_option("plate", "load"):
                problems.append("[plate] source = cubic_minus_load requires `load`")
            source = SourceSpec(kind="cubic_minus_load", load=load or 0.0)
        elif source_kind == "custom":
            ts = get("plate", "source_table_s", floats, ())
            tf = get("plate", "source_table_f", floats, ())
            if len(ts or ()) != len(tf or ()):
                problems.append("[plate] source tables must have equal length")
            source = SourceSpec(kind="custom", table_s=ts or (), table_f=tf or ())
        elif source_kind != "zero":
            problems.append(f"[plate] unknown source {source_kind!r}")
    except ModelError as exc:
        problems.append(str(exc))

    try:
        dom = DomainSpec(l=l, sigma=sigma)
    except DiscretizationError as exc:
        problems.append(str(exc))
        dom = DomainSpec()

    cfg = PlateConfig(alpha=alpha or 0.0, delta=delta or 0.0, beta=beta or 0.0,
                      kappa=kappa or 0.0, damping_coeffs=tuple(damping or (1.0, 0.0)),
                      source=source, dom=dom)
    cfg_problems = cfg.violations()
    if allow_undamped:
        cfg_problems = [p for p in cfg_problems if "all zero" not in p]
    for p in cfg_problems:
        tag = (" (the damping gain must satisfy b_0 + b_q > 0; set "
               "allow_undamped for control experiments)") if "all zero" in p else ""
        problems.append(p + tag)

    mx = get("basis", "mx", int, 8)
    ny = get("basis", "ny", int, 8)
    oversample = get("basis", "oversample", int, 3)
    if mx is not None and mx < 1:
        problems.append(f"[basis] mx must be >= 1, got {mx}")
    if ny is not None and ny < 1:
        problems.append(f"[basis] ny must be >= 1, got {ny}")
    if oversample is not None and oversample < 2:
        problems.append(f"[basis] oversample must be >= 2, got {oversample}")

    seed = get("sim", "seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    plan = None
    try:
        plan = SimPlan(dt=get("sim", "dt", float, 1e-3),
                       T=get("sim", "t", float, 1.0),
                       snapshot_every=get("sim", "snapshot_every", int, 1),
                       fp_tol=get("sim", "fp_tol", float, 1e-11),
                       fp_maxiter=get("sim", "fp_maxiter", int, 60),
                       seed=seed)
    except ValueError as exc:
        problems.append(str(exc))

    initial = ("mode", 1, 0, 0.5)
    if cp.has_option("sim", "initial"):
        try:
            initial = _parse_initial(cp.get("sim", "initial"))
        except (ValueError, IndexError) as exc:
            problems.append(f"[sim] initial: {exc}")

    # runtime validation of the source assumption; certificate goes into
    # the manifest of every run
    cert_info: dict = {}
    if not problems:
        cert = certify_source(cfg)
        cert_info = {"ok": cert.ok, "c": cert.c, "b": cert.b,
                     "witness": cert.witness, "message": cert.message}
        if not cert.ok:
            problems.append(f"source violates the dissipativity bound: "
                            f"{cert.message} (witness s = {cert.witness})")

    sections = {}
    for name in ("sweep", "pairs", "dimension", "stationary", "barrier"):
        if cp.has_section(name):
            sections[name] = dict(cp[name])
    if problems:
        raise ConfigError(problems)
    return ParsedConfig(cfg=cfg, plan=plan, initial=initial, mx=mx, ny=ny,
                        oversample=oversample, sections=sections, text=text,
                        source_certificate=cert_info)


def section_get(sections: dict, name: str, key: str, conv, default):
    raw = sections.get(name, {}).get(key)
    if raw is None:
        return default
    return conv(raw)
