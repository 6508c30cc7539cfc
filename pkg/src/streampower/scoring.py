"""Attach MOS and power to every session of a dataset."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Mapping, Sequence

from .policy import ScoredSession
from .power import estimate_power
from .qoe import DEFAULT_CONFIG, QoeModelConfig, _mos_value, attach_external_mos
from .session import Session

MIN_CHUNK = 20_000


def _score_chunk(args) -> list[tuple[float, float]]:
    sessions, profiles, cfg, external = args
    out = []
    for s in sessions:
        ext = external.get(s.id)
        mos = attach_external_mos(s, ext).value if ext is not None else _mos_value(s, cfg)
        out.append((mos, estimate_power(s, profiles).watts))
    return out


def default_jobs() -> int:
    return os.cpu_count() or 1


def score_sessions(sessions: Sequence[Session], profiles: Mapping, cfg: QoeModelConfig = DEFAULT_CONFIG,
                   external_mos: Mapping[str, float] | None = None, jobs: int = 1) -> list[ScoredSession]:
    """Score sessions, optionally across ``jobs`` worker processes.

    Work is split into contiguous chunks and reassembled in input order;
    every value is computed by the same scalar code path, so the result does
    not depend on ``jobs``. A precomputed MOS in ``external_mos`` replaces the
    built-in estimator for that session.
    """
    external = dict(external_mos or {})
    sessions = list(sessions)
    if jobs <= 1 or len(sessions) < 2 * MIN_CHUNK:
        values = _score_chunk((sessions, profiles, cfg, external))
    else:
        size = max(MIN_CHUNK, math.ceil(len(sessions) / jobs))
        chunks = [sessions[i:i + size] for i in range(0, len(sessions), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_score_chunk, [(c, profiles, cfg, {k: external[k] for k in (s.id for s in c) if k in external})
                                            for c in chunks])
            values = [v for part in parts for v in part]
    return [ScoredSession(s, mos, watts) for s, (mos, watts) in zip(sessions, values)]

