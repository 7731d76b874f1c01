"""Flat key/value configuration files.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored. Keys are grouped by module prefix, e.g.::

    kernel.spatial.family = matern52
    kernel.spatial.lengthscale = 0.2
    kernel.temporal.lengthscale = 2.0
    acq.kind = msei
    acq.alpha = 1.0
    acq.q = 1.1
    tracker.budget_per_frame = 80

Command-line flags override file values; the ``DYNBO_CONFIG`` environment
variable names a default config path.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .acquisition import AcqConfig, AcqKind
from .kernels import KernelSpec, MaternFamily, SpatioTemporalKernel
from .tracker import TrackerConfig

ENV_CONFIG_VAR = "DYNBO_CONFIG"


class ConfigError(Exception):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _as_bool(value: str) -> bool:
    v = value.lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _kernel_spec(spec: KernelSpec, prefix: str, values: dict[str, str]) -> KernelSpec:
    if f"{prefix}.family" in values:
        name = values[f"{prefix}.family"].lower()
        try:
            spec = replace(spec, family=MaternFamily(name))
        except ValueError:
            raise ConfigError(f"unknown kernel family {name!r}") from None
    if f"{prefix}.variance" in values:
        spec = replace(spec, variance=float(values[f"{prefix}.variance"]))
    if f"{prefix}.lengthscale" in values:
        spec = replace(spec, lengthscale=float(values[f"{prefix}.lengthscale"]))
    return spec


_KNOWN_KEYS = {
    "acq.kind",
    "acq.alpha",
    "acq.q",
    "acq.fixed_xi",
    "acq.xi_max",
    "gp.noise",
    "gp.refit_every",
    "gp.fit_lengthscales",
    "tracker.budget_per_frame",
    "tracker.grid_d",
    "tracker.scale_p",
    "tracker.search_factor",
    "tracker.window_frames",
    "tracker.scale_damping",
    "tracker.sampling",
    "tracker.sampling_seed",
}
_KERNEL_FIELDS = ("family", "variance", "lengthscale")


def build_tracker_config(values: dict[str, str], base: TrackerConfig | None = None) -> TrackerConfig:
    """Apply flat config values on top of a base configuration."""
    cfg = base or TrackerConfig()
    for key in values:
        ok = key in _KNOWN_KEYS or any(
            key == f"kernel.{side}.{f}" for side in ("spatial", "temporal") for f in _KERNEL_FIELDS
        )
        if not ok:
            raise ConfigError(f"unknown config key {key!r}")

    kernel = SpatioTemporalKernel(
        spatial=_kernel_spec(cfg.kernel.spatial, "kernel.spatial", values),
        temporal=_kernel_spec(cfg.kernel.temporal, "kernel.temporal", values),
    )
    acq = cfg.acq
    if "acq.kind" in values:
        try:
            acq = replace(acq, kind=AcqKind(values["acq.kind"].lower()))
        except ValueError:
            raise ConfigError(f"unknown acquisition kind {values['acq.kind']!r}") from None
    for key, attr in (("acq.alpha", "alpha"), ("acq.q", "q"), ("acq.fixed_xi", "fixed_xi")):
        if key in values:
            acq = replace(acq, **{attr: float(values[key])})
    if "acq.xi_max" in values:
        raw = values["acq.xi_max"].lower()
        acq = replace(acq, xi_max=None if raw == "auto" else float(raw))

    cfg = replace(cfg, kernel=kernel, acq=acq)
    if "gp.noise" in values:
        cfg = replace(cfg, noise=float(values["gp.noise"]))
    if "gp.refit_every" in values:
        cfg = replace(cfg, refit_every=int(values["gp.refit_every"]))
    if "gp.fit_lengthscales" in values:
        cfg = replace(cfg, fit_lengthscales=_as_bool(values["gp.fit_lengthscales"]))
    for key, attr, conv in (
        ("tracker.budget_per_frame", "budget_per_frame", int),
        ("tracker.grid_d", "grid_d", int),
        ("tracker.scale_p", "scale_p", float),
        ("tracker.search_factor", "search_factor", float),
        ("tracker.window_frames", "window_frames", int),
        ("tracker.scale_damping", "scale_damping", float),
        ("tracker.sampling", "sampling", str),
        ("tracker.sampling_seed", "sampling_seed", int),
    ):
        if key in values:
            cfg = replace(cfg, **{attr: conv(values[key])})
    return cfg


def config_snapshot(cfg: TrackerConfig) -> dict[str, str]:
    """Flatten a tracker configuration back into config-file keys."""
    return {
        "kernel.spatial.family": cfg.kernel.spatial.family.value,
        "kernel.spatial.variance": repr(cfg.kernel.spatial.variance),
        "kernel.spatial.lengthscale": repr(cfg.kernel.spatial.lengthscale),
        "kernel.temporal.family": cfg.kernel.temporal.family.value,
        "kernel.temporal.variance": repr(cfg.kernel.temporal.variance),
        "kernel.temporal.lengthscale": repr(cfg.kernel.temporal.lengthscale),
        "acq.kind": cfg.acq.kind.value,
        "acq.alpha": repr(cfg.acq.alpha),
        "acq.q": repr(cfg.acq.q),
        "acq.fixed_xi": repr(cfg.acq.fixed_xi),
        "acq.xi_max": "auto" if cfg.acq.xi_max is None else repr(cfg.acq.xi_max),
        "gp.noise": repr(cfg.noise),
        "gp.refit_every": str(cfg.refit_every),
        "gp.fit_lengthscales": str(cfg.fit_lengthscales).lower(),
        "tracker.budget_per_frame": str(cfg.budget_per_frame),
        "tracker.grid_d": str(cfg.grid_d),
        "tracker.scale_p": repr(cfg.scale_p),
        "tracker.search_factor": repr(cfg.search_factor),
        "tracker.window_frames": str(cfg.window_frames),
        "tracker.scale_damping": repr(cfg.scale_damping),
        "tracker.sampling": cfg.sampling,
        "tracker.sampling_seed": str(cfg.sampling_seed),
    }
