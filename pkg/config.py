"""
Configuration file for the random projection hash toolkit
"""

import os
import warnings
from pathlib import Path

# Base paths
BASE_DIR = Path(__file__).parent
OUTPUT_DIR = BASE_DIR / "outputs"
REPORTS_DIR = OUTPUT_DIR / "reports"

# Output directories are created by the report writer on first use

# Artifact settings
SCHEMA_VERSION = 1
CSV_FLOAT_FORMAT = ".17g"  # round-trippable, so reruns give identical bytes

# Exit-code contract of the command-line front end
EXIT_CODES = {
    "ok": 0,
    "usage": 2,
    "domain": 3,
    "tolerance": 4,
}

# Monte-Carlo settings
DEFAULT_DIMENSION = 20
DEFAULT_TRIALS = 100_000
DEFAULT_SEED = 20240601
DEFAULT_GRID_STEP = 0.05
DEFAULT_CONFIDENCE = 0.95
TRIAL_BLOCK = 4096  # work unit; fixed so results never depend on worker count
SURVIVAL_BLOCK = 1 << 16  # predicate draws are cheap, so survival runs use larger units
MAX_BATCH_H = 62  # hash values packed into int64 bitmasks
MAX_SIGN_ENUMERATION_K = 20
MAX_SUBSETS_PER_BUCKET = 10**6  # larger buckets are scanned by random sampling
SCAN_SAMPLES_PER_BUCKET = 10**5


# Worker threads (RPHASH_THREADS overrides; never changes a reported number)
def workers_from_env(raw):
    """Worker count from an RPHASH_THREADS value; unset, zero or invalid means every core"""
    cores = os.cpu_count() or 1
    if raw is None or not raw.strip():
        return cores
    try:
        workers = int(raw)
    except ValueError:
        warnings.warn(f"ignoring RPHASH_THREADS={raw!r}: not an integer", RuntimeWarning)
        return cores
    if workers < 0:
        warnings.warn(f"ignoring RPHASH_THREADS={raw!r}: negative", RuntimeWarning)
        return cores
    return workers or cores


WORKERS = workers_from_env(os.environ.get("RPHASH_THREADS"))

# Key tags separating the counter-based random streams
STREAMS = {
    "hash_instance": 1,
    "collision_block": 2,
    "survival_block": 3,
    "detect_database": 4,
    "detect_scan": 5,
}

# Tolerance table
TOLERANCES = {
    "unit_norm": 1e-9,
    "gram_det": 1e-12,
    "symmetry": 1e-12,
    "reducible": 1e-12,
    "sigma_sum": 1e-12,
    "dual_basis": 1e-9,
    "cap_ambiguity": 1e-9,
    "numeric": 1e-4,
    "betacf_eps": 1e-15,
    "frame_rank": 1e-12,
}

# Numerical-integration settings
RADIAL_CUTOFF = 9.5  # chi-3 tail beyond this radius is below 1e-18
RADIAL_PANELS = 12
RADIAL_NODES = 8
OUTER_PANELS = 2
OUTER_NODES = 6
INNER_NODES = 20
MAX_REFINEMENTS = 3
BETACF_MAX_ITER = 10_000

# Detection demo settings
DEFAULT_DB_SIZE = 2000
DEFAULT_INSTANCES = 20
