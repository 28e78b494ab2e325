"""
Utility functions shared by the numerical modules and the commands:
deterministic random substreams, log truncation and report I/O.
"""
import csv
import hashlib
import json
import logging
import math
from io import StringIO
from pathlib import Path

import numpy as np


logger = logging.getLogger(__name__)

# Logging limits
MAX_LOG_LENGTH = 500

# Rows per Monte Carlo chunk; bounds peak memory at d <= ~10
CHUNK_ROWS = 1 << 17


def _key_int(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


def substream(seed, *key):
    """
    Independent generator for (seed, key...).

    The same seed and key always give the same stream regardless of the
    order in which streams are requested.
    """
    sequence = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1),
                                      spawn_key=tuple(_key_int(part) for part in key))
    return np.random.default_rng(sequence)


def derive_seed(seed, *key):
    """A 63-bit child seed for (seed, key...), used to hand independent seeds to sub-computations."""
    sequence = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1),
                                      spawn_key=tuple(_key_int(part) for part in key))
    return int(sequence.generate_state(2, dtype=np.uint32) @ np.array([1, 1 << 32], dtype=np.uint64)) >> 1


def chunks(total, size=CHUNK_ROWS):
    """Yield chunk lengths summing to ``total``."""
    remaining = int(total)
    while remaining > 0:
        step = min(size, remaining)
        yield step
        remaining -= step


def truncate_for_log(text, limit=MAX_LOG_LENGTH):
    text = str(text)
    if len(text) > limit:
        return text[:limit] + " ...[truncated]"
    return text


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, 'as_dict'):
        return _jsonable(value.as_dict())
    return value


def dumps_report(report, compact=False):
    """Canonical JSON: sorted keys, no NaN/inf literals, one object (on one line when compact)."""
    indent = None if compact else 2
    return json.dumps(_jsonable(report), sort_keys=True, indent=indent, allow_nan=False) + "\n"


def write_text(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    logger.info("Wrote %s", path)


def csv_text(header, rows):
    """RFC-4180 CSV with dot decimals."""
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator='\r\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()
