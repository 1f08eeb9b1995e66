"""
Configuration for the L + S + C decomposition toolkit.

All tunable parameters externalized for calibration.
Loads from config.json if present (merge with defaults). The path can be
overridden with LSC_CONFIG in the environment or a .env file.
"""

import hashlib
import json
import os
from typing import Any, Dict

from dotenv import load_dotenv

load_dotenv()

# Default configuration - every key mirrors a CLI flag of the same name
DEFAULT_CONFIG: Dict[str, Any] = {
    # ADMM engine
    "max_iters": 2000,                 # Iteration cap per solve
    "abs_tol": 1e-7,                   # Absolute stopping tolerance
    "rel_tol": 1e-5,                   # Relative stopping tolerance
    "admm_rho": 1.0,                   # Initial penalty
    "over_relaxation": 1.5,            # Relaxation factor in [1, 1.8]
    "polish": True,                    # LP-vertex polishing after ADMM

    # Outlier detection
    "lambda_scale": 1.0,               # λ = lambda_scale / sqrt(N1)
    "mag_threshold": 0.1,              # Entry counts as dominant above this
    "frac_threshold": 0.4,             # Column is an outlier above this fraction

    # Sketching
    "sparse_col_threshold": 0.4,       # Dominant fraction over m2 marking a dense column
    "resample_attempts": 3,            # CLI retries when a sketch misses every inlier

    # Sufficient-condition checks
    "t1": 2.0,
    "t2": 2.0,
    "num_dirs": 10000,                 # Sampled directions for the sphere infimum
    "zero_tol": 1e-8,                  # Row / orthogonality zero test in checks

    # Harness
    "trials": 10,                      # Trials per sweep cell
    "jobs": 1,                         # Worker processes (0 = all cores but one)
    "seed": 0,
    "log_dir": "logs",
    "enable_run_log": True,
}


def load_config(config_path: str = "config.json") -> Dict[str, Any]:
    """
    Load configuration, merging config.json with defaults.

    Missing keys use defaults, provided keys override.
    """
    config = DEFAULT_CONFIG.copy()

    if os.path.exists(config_path):
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                user_config = json.load(f)
            config.update(user_config)
        except (json.JSONDecodeError, IOError) as e:
            print(f"Warning: Could not load {config_path}: {e}. Using defaults.")

    return config


# Global CONFIG instance
CONFIG = load_config(os.getenv("LSC_CONFIG", "config.json"))


def get_config_hash() -> str:
    """Return first 8 chars of SHA256 hash of config for logging."""
    config_str = json.dumps(CONFIG, sort_keys=True)
    return hashlib.sha256(config_str.encode()).hexdigest()[:8]
