# config.py: runtime settings (env overridable, .env aware)
from __future__ import annotations

import os

# Load .env for local overrides (e.g., a smaller THINLAB_MAX_N on a laptop)
try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, default))
    except Exception:
        return default


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, default))
    except Exception:
        return default


def _env_flag(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


# === Truncation ===
EPS_TAIL = _env_float("THINLAB_EPS_TAIL", 1e-14)
MAX_EPS_TAIL = 1e-3
MASS_TOL = 1e-12            # |sum(probs) + tail - 1| allowed on construction
JSON_MASS_TOL = 1e-9        # looser gate for PMF JSON readers
TRIM_BELOW = 1e-300         # trailing masses below this move into the tail
TAIL_RATIO_CAP = 0.95       # geometric decay assumed past the support, at most

# === Desk-scale caps ===
MAX_N = _env_int("THINLAB_MAX_N", 4096)
MAX_SUPPORT = _env_int("THINLAB_MAX_SUPPORT", 100_000)

# === Series / certificates ===
CHARLIER_KMAX = _env_int("THINLAB_KMAX", 24)
CLASS_KMAX = _env_int("THINLAB_CLASS_KMAX", 30)
KAPPA_TOL = 1e-9
CLASS_SLACK = 1e-12         # relative slack on class inequalities
MEAN_MATCH_RTOL = 1e-6      # bound applicability: mean(P) vs lambda/alpha

# === Sweeps / output ===
WORKERS = max(1, _env_int("THINLAB_WORKERS", 4))
CSV_DIGITS = _env_int("THINLAB_CSV_DIGITS", 12)
LOG_ENABLED = _env_flag("THINLAB_LOG", True)
