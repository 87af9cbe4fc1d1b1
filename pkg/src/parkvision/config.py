"""Service configuration: a small JSON file with schedule, port and data dir."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .parkcore import DEFAULT_SCHEDULE_CONFIG, RateSchedule

DEFAULTS = {
    "port": 8710,
    "host": "127.0.0.1",
    "data_dir": "./data",
    "fsync": True,
    "schedule": DEFAULT_SCHEDULE_CONFIG,
}


@dataclass
class ServiceConfig:
    port: int = DEFAULTS["port"]
    host: str = DEFAULTS["host"]
    data_dir: str = DEFAULTS["data_dir"]
    fsync: bool = True
    schedule: RateSchedule = field(
        default_factory=lambda: RateSchedule.from_config({}))


def load_config(path: str | Path | None) -> ServiceConfig:
    raw = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
    return ServiceConfig(
        port=int(raw.get("port", DEFAULTS["port"])),
        host=str(raw.get("host", DEFAULTS["host"])),
        data_dir=str(raw.get("data_dir", DEFAULTS["data_dir"])),
        fsync=bool(raw.get("fsync", True)),
        schedule=RateSchedule.from_config(raw.get("schedule", {})),
    )
