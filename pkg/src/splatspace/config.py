"""Keyed text configuration: one ``key = value`` per line, ``#`` comments.

Every tunable the service exposes lives here so tests can sweep them; none
of the mock thresholds or budgets are compile-time constants.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """Unknown key or unparseable value in a config file."""


@dataclass
class ServiceConfig:
    # backend selection per pipeline stage
    segment_backend: str = "mock"
    multiview_backend: str = "mock"
    gaussian_backend: str = "mock"
    http_base_url: str = "http://127.0.0.1:5000"

    # mock inference knobs
    segment_threshold: float = 30.0 / 255.0   # per-channel RGB tolerance
    splat_budget: int = 4096                  # max splats emitted per asset
    view_resolution: int = 256                # pie-menu view edge, pixels
    orbit_frame_count: int = 36               # frames per 360° sweep

    # backend call discipline
    stage_timeout_s: float = 30.0
    stage_retries: int = 1

    # endpoint
    listen: str = "127.0.0.1:7443"
    ws_listen: str = ""                       # empty disables the websocket bridge
    snapshot_path: str = ""                   # empty disables persistence
    grab_lease_ms: int = 10_000
    delta_buffer: int = 1024                  # resync ring depth, per session
    write_queue_limit: int = 1024             # frames queued before disconnect

    def validate(self) -> "ServiceConfig":
        for key in ("segment_backend", "multiview_backend", "gaussian_backend"):
            value = getattr(self, key)
            if value not in ("mock", "http"):
                raise ConfigError(f"{key} must be 'mock' or 'http', got {value!r}")
        if self.splat_budget < 2:
            raise ConfigError("splat_budget must be at least 2")
        if not (0.0 < self.segment_threshold < 1.0):
            raise ConfigError("segment_threshold must be in (0, 1)")
        return self


def parse_config(text: str) -> ServiceConfig:
    fields = {f.name: f for f in dataclasses.fields(ServiceConfig)}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        ftype = fields[key].type
        try:
            if ftype == "int":
                values[key] = int(value)
            elif ftype == "float":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return ServiceConfig(**values).validate()


def load_config(path: str | Path) -> ServiceConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
