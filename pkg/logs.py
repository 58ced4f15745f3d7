# logs.py: one-line JSON event log on stderr
from __future__ import annotations

import json
import sys
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator

import config


def _jsonable(v: Any) -> Any:
    # numpy scalars and friends
    if hasattr(v, "item"):
        try:
            return v.item()
        except Exception:
            pass
    return v


def jlog(event: str, **kv):
    if not config.LOG_ENABLED:
        return
    rec = {"evt": event, **{k: _jsonable(v) for k, v in kv.items()}}
    try:
        print(json.dumps(rec, ensure_ascii=False, separators=(",", ":")), file=sys.stderr)
    except Exception:
        print(f"[LOG_FALLBACK] {event} {kv}", file=sys.stderr)


@contextmanager
def timed(event: str, **kv) -> Iterator[Dict[str, Any]]:
    """
    Log `<event>_start` / `<event>_done` around a block.
    The yielded dict collects extra fields for the done line; `wall_s` is
    filled in on exit.
    """
    extra: Dict[str, Any] = {}
    jlog(f"{event}_start", **kv)
    t0 = time.perf_counter()
    try:
        yield extra
    finally:
        extra["wall_s"] = round(time.perf_counter() - t0, 6)
        jlog(f"{event}_done", **kv, **extra)
