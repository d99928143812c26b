"""
Report generator module for writing CSV/JSON artifacts and their run manifests
"""

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import config
from .experiments import ConvergenceRow, SweepResult
from .utils import clean_filename, ensure_dir

SWEEP_COLUMNS = [
    "sigma", "alpha", "beta", "gamma", "a", "b", "d", "k", "skipped",
    "trials", "collisions", "p_hat", "ci_low", "ci_high", "seed",
]

CONVERGENCE_COLUMNS = [
    "a", "b", "d", "k", "trials", "collisions", "p_mc", "ci_low", "ci_high",
    "p_asymptotic", "ratio", "log_ratio", "gap", "seed",
]


@dataclass
class RunManifest:
    """Everything needed to rerun an artifact, written next to it"""

    subcommand: str
    parameters: Dict
    seed: int
    schema_version: int = config.SCHEMA_VERSION
    wall_clock_seconds: float = 0.0
    started_at: str = field(default_factory=lambda: datetime.now().strftime("%Y-%m-%d %H:%M:%S"))
    version_hash: str = ""

    def __post_init__(self):
        if not self.version_hash:
            self.version_hash = library_version_hash()

    @property
    def elapsed(self) -> str:
        """Wall-clock time as HH:MM:SS"""
        minutes, seconds = divmod(int(round(self.wall_clock_seconds)), 60)
        hours, minutes = divmod(minutes, 60)
        return f"{hours:02d}:{minutes:02d}:{seconds:02d}"

    def to_dict(self) -> Dict:
        return asdict(self)


def library_version_hash() -> str:
    """sha256 over the package sources and the configuration module"""
    package_dir = Path(__file__).parent
    digest = hashlib.sha256()
    for path in sorted(package_dir.glob("*.py")) + [config.BASE_DIR / "config.py"]:
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def format_value(value) -> str:
    """CSV cell text; floats are written round-trippable, missing values blank"""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, config.CSV_FLOAT_FORMAT)
    return str(value)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def default_output_path(prefix: str, extension: str) -> Path:
    """Timestamped path under the reports directory"""
    ensure_dir(config.REPORTS_DIR)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return config.REPORTS_DIR / f"{clean_filename(prefix)}_{timestamp}.{extension}"


def _prepare(output_path: Union[str, Path]) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    return output_path


def _write_rows(output_path: Union[str, Path], columns: Sequence[str], rows: List[Sequence]) -> Path:
    output_path = _prepare(output_path)
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return output_path


def sweep_rows(result: SweepResult) -> List[List]:
    """One row per grid cell; skipped cells keep their coordinates and leave the estimate blank"""
    rows = []
    for cell in result.cells:
        head = [
            float(result.sigma), float(cell.alpha), float(cell.beta), float(cell.gamma),
            result.params.a, result.params.b, result.params.d, result.k, int(cell.skipped),
        ]
        est = cell.estimate
        if est is None:
            rows.append(head + [None] * 6)
            continue
        rows.append(head + [
            est.trials, est.collisions, float(est.p_hat), float(est.ci_low), float(est.ci_high), est.seed,
        ])
    return rows


def write_sweep_csv(result: SweepResult, output_path: Union[str, Path]) -> Path:
    """
    Write a sweep as CSV

    Args:
        result: Sweep to write
        output_path: Destination file

    Returns:
        Path of the written file
    """
    return _write_rows(output_path, SWEEP_COLUMNS, sweep_rows(result))


def sweep_payload(result: SweepResult) -> Dict:
    """JSON mirror of a sweep, row for row"""
    return {
        "schema_version": config.SCHEMA_VERSION,
        "sigma": result.sigma,
        "params": asdict(result.params),
        "trials": result.trials,
        "k": result.k,
        "rows": [dict(zip(SWEEP_COLUMNS, row)) for row in sweep_rows(result)],
    }


def write_convergence_csv(
    rows: List[ConvergenceRow], output_path: Union[str, Path], d: int, k: int, seed: int
) -> Path:
    """Write a convergence table as CSV"""
    data = [
        [r.a, r.b, d, k, r.trials, r.collisions, float(r.p_mc), float(r.ci_low), float(r.ci_high),
         float(r.p_asymptotic), float(r.ratio), float(r.log_ratio), float(r.gap), seed]
        for r in rows
    ]
    return _write_rows(output_path, CONVERGENCE_COLUMNS, data)


def to_json(payload: Dict) -> str:
    """Stable JSON text with the schema version stamped in"""
    payload = dict(payload)
    payload.setdefault("schema_version", config.SCHEMA_VERSION)
    return json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n"


def write_json(payload: Dict, output_path: Union[str, Path]) -> Path:
    output_path = _prepare(output_path)
    output_path.write_text(to_json(payload), encoding="utf-8")
    return output_path


def manifest_path(data_path: Union[str, Path]) -> Path:
    data_path = Path(data_path)
    return data_path.with_name(data_path.name + ".manifest.json")


def write_manifest(manifest: RunManifest, data_path: Union[str, Path]) -> Path:
    """Write the manifest beside its artifact as <artifact>.manifest.json"""
    return write_json(manifest.to_dict(), manifest_path(data_path))


def read_manifest(path: Union[str, Path]) -> Optional[RunManifest]:
    path = Path(path)
    if not path.exists():
        return None
    payload = json.loads(path.read_text(encoding="utf-8"))
    return RunManifest(
        subcommand=payload["subcommand"],
        parameters=payload["parameters"],
        seed=payload["seed"],
        schema_version=payload["schema_version"],
        wall_clock_seconds=payload["wall_clock_seconds"],
        started_at=payload["started_at"],
        version_hash=payload["version_hash"],
    )
