"""Calibrated constants shipped with the package.

The file location can be overridden with the ``GEODESIC_CONSTANTS``
environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources

ENV_VAR = "GEODESIC_CONSTANTS"


@dataclass(frozen=True)
class Constants:
    version: str
    c2: float
    schedule_k: float
    source: str


def load_constants(path: str | None = None) -> Constants:
    path = path or os.environ.get(ENV_VAR)
    if path:
        with open(path) as fh:
            data = json.load(fh)
        source = str(path)
    else:
        data = json.loads(resources.files("geosynth").joinpath("data/constants.json").read_text())
        source = "package:data/constants.json"
    return Constants(
        version=str(data["version"]),
        c2=float(data["c2"]),
        schedule_k=float(data.get("schedule_k", 10.0)),
        source=source,
    )
