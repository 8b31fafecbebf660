"""
Run reports: the JSON envelope every subcommand writes, and CSV matrices.

Reports are serialized with sorted keys and fixed float formatting so that
the same configuration and seed give the same bytes once the timing block is
dropped.
"""
import json
import logging
import platform
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from . import __version__
from .models import SCHEMA_VERSION, MetricConfig, ModelConfig
from .settings import get_settings
from .volumes import CONVENTIONS

logger = logging.getLogger(__name__)

BH_EXPONENT_FINDING = "flat Randers: sigma_BH = (1 - b^2)^((n+1)/2) sqrt(det a), not (1 - b^2)^1"
SLOPE_ORDER_FINDING = (
    "slope phi = 1/(1-s), b = 0.3 on the unit torus: vol_BH = 0.95694 < vol_alpha = 1 < vol_HT = 1.09500; "
    "the chain vol_BH < vol_HT < vol_alpha does not hold, the closed forms f(b), g(b) agree"
)


class Timing(BaseModel):
    started_at: str
    elapsed_seconds: float


class RunReport(BaseModel):
    """Envelope of every report file."""
    schema_version: str = SCHEMA_VERSION
    tool_version: str = __version__
    command: str
    config: Dict[str, Any] = Field(default_factory=dict, description="Echo of the resolved experiment configuration")
    results: Dict[str, Any] = Field(default_factory=dict)
    conventions: Dict[str, str] = Field(default_factory=dict)
    exit_code: int = 0
    error: Optional[Dict[str, Any]] = None
    timing: Optional[Timing] = None


def default_conventions() -> Dict[str, str]:
    return {**CONVENTIONS, "bh_exponent": BH_EXPONENT_FINDING, "slope_order": SLOPE_ORDER_FINDING}


def jsonable(value: Any) -> Any:
    """Plain JSON types from pydantic models, numpy values and paths."""
    if isinstance(value, BaseModel):
        return jsonable(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return jsonable(value.item())
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


@contextmanager
def timed(report: RunReport) -> Iterator[RunReport]:
    """Fill `report.timing` around the body."""
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        yield report
    finally:
        report.timing = Timing(started_at=started, elapsed_seconds=round(time.perf_counter() - t0, 3))


def report_json(report: RunReport, include_timing: bool = True) -> str:
    payload = jsonable(report.model_dump(mode="json", exclude=None if include_timing else {"timing"}))
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def output_path(path: Optional[Union[str, Path]], default_name: str) -> Path:
    """Relative or missing paths land under FINSLER_LAB_OUTPUT_DIR."""
    if path is None:
        path = get_settings().output_dir / default_name
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_report(report: RunReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_json(report))
    logger.info("report written to %s", path)
    return path


def write_csv(path: Union[str, Path], header: Sequence[str], rows: np.ndarray) -> Path:
    """Numeric matrix with a header row; 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != len(header):
        raise ValueError(f"{rows.shape[1]} columns but {len(header)} header names")
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    return path


def trace_header(dim: int) -> List[str]:
    return ["t"] + [f"x{i + 1}" for i in range(dim)] + [f"y{i + 1}" for i in range(dim)] + ["F"]


def published_schema() -> Dict[str, Any]:
    """JSON schemas of the report envelope and of the metric and model documents."""
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "run_report": RunReport.model_json_schema(),
        "metric": MetricConfig.model_json_schema(),
        "model": ModelConfig.model_json_schema(),
    }


def validate_report(data: Union[str, Dict[str, Any]]) -> RunReport:
    """Parse a report file's content against the envelope schema."""
    if isinstance(data, str):
        data = json.loads(data)
    report = RunReport.model_validate(data)
    if report.schema_version != SCHEMA_VERSION:
        raise ValueError(f"schema version {report.schema_version} is not {SCHEMA_VERSION}")
    return report


def version_text() -> str:
    return f"finsler-lab {__version__} (report schema {SCHEMA_VERSION}, Python {platform.python_version()})"
