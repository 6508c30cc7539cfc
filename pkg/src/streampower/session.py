"""Session records and the normalization rules applied before scoring.

Units are fixed throughout: pixels, frames/second, bits/second, seconds.
Ingest is responsible for converting anything else into these.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable

from .errors import InvalidSession

QOE_WINDOW_S = 300.0

MAX_FPS = 240.0
MAX_WIDTH = 7680
MAX_HEIGHT = 4320


class TagRegistry:
    """Open set of string tags (codecs, device classes) with lookup aliases."""

    def __init__(self, kind: str, tags: Iterable[str], aliases: dict[str, str] | None = None):
        self.kind = kind
        self._tags: list[str] = []
        self._lookup: dict[str, str] = {}
        for tag in tags:
            self.register(tag)
        for alias, tag in (aliases or {}).items():
            self.add_alias(alias, tag)

    def register(self, tag: str) -> str:
        if not isinstance(tag, str) or not tag.strip():
            raise ValueError(f"{self.kind} tag must be a non-empty string")
        tag = tag.strip()
        if tag in self._tags:
            raise ValueError(f"{self.kind} tag {tag!r} already registered")
        self._tags.append(tag)
        self._lookup[_fold(tag)] = tag
        return tag

    def add_alias(self, alias: str, tag: str) -> None:
        if tag not in self._tags:
            raise ValueError(f"cannot alias unknown {self.kind} {tag!r}")
        self._lookup[_fold(alias)] = tag

    def canonical(self, name: str) -> str:
        if name in self._tags:
            return name
        try:
            return self._lookup[_fold(name)]
        except (KeyError, AttributeError):
            raise KeyError(f"unknown {self.kind} {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self._tags or (isinstance(name, str) and _fold(name) in self._lookup)

    def __iter__(self):
        return iter(tuple(self._tags))

    def __len__(self) -> int:
        return len(self._tags)


def _fold(name: str) -> str:
    return name.strip().lower().replace(".", "").replace("-", "").replace("_", "").replace(" ", "")


H264 = "H264"
VP9 = "VP9"
LAPTOP = "Laptop"
DESKTOP_PC = "DesktopPC"

CODECS = TagRegistry("codec", [H264, VP9], aliases={"avc": H264, "avc1": H264, "vp09": VP9})
DEVICES = TagRegistry("device", [LAPTOP, DESKTOP_PC], aliases={"pc": DESKTOP_PC, "desktop": DESKTOP_PC})


@dataclass(frozen=True, slots=True)
class VideoParams:
    width: int
    height: int
    fps: float
    bitrate: float  # bits/second

    def __post_init__(self):
        _check_int(self.width, "width", lo=1, hi=MAX_WIDTH)
        _check_int(self.height, "height", lo=1, hi=MAX_HEIGHT)
        _check_real(self.fps, "fps", positive=True, hi=MAX_FPS)
        _check_real(self.bitrate, "bitrate")

    @property
    def pixels_per_second(self) -> float:
        return pixels_per_second(self)


@dataclass(frozen=True, slots=True)
class Impairments:
    loading_delay: float = 0.0
    stall_count: int = 0
    stall_total: float = 0.0

    def __post_init__(self):
        _check_real(self.loading_delay, "loading_delay")
        _check_int(self.stall_count, "stall_count", lo=0)
        _check_real(self.stall_total, "stall_total")
        if self.stall_count == 0 and self.stall_total != 0:
            raise InvalidSession("stall_total", "must be 0 when stall_count is 0")


@dataclass(frozen=True, slots=True)
class Session:
    id: str
    device: str
    codec: str
    params: VideoParams
    impairments: Impairments
    duration: float
    online: bool = True

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InvalidSession("id", "must be a non-empty string")
        if self.device not in DEVICES:
            raise InvalidSession("device", f"unknown device {self.device!r}")
        if self.codec not in CODECS:
            raise InvalidSession("codec", f"unknown codec {self.codec!r}")
        _check_real(self.duration, "duration", positive=True)
        if not isinstance(self.online, bool):
            raise InvalidSession("online", "must be a boolean")


def pixels_per_second(p: VideoParams) -> float:
    return p.width * p.height * p.fps


def truncate_for_qoe(s: Session, window: float = QOE_WINDOW_S) -> Session:
    """Clamp a session to the QoE model's scoring window.

    The stall total is clamped too, because a QoE input cannot report
    more stalling than the session time it covers. Power and energy must
    keep using the original session.
    """
    duration = min(s.duration, window)
    stall_total = min(s.impairments.stall_total, duration)
    if duration == s.duration and stall_total == s.impairments.stall_total:
        return s
    imp = dataclasses.replace(s.impairments, stall_total=stall_total)
    return dataclasses.replace(s, duration=duration, impairments=imp)


def check_unique_ids(sessions: Iterable[Session]) -> None:
    seen: set[str] = set()
    for s in sessions:
        if s.id in seen:
            raise InvalidSession("id", f"duplicate session id {s.id!r}")
        seen.add(s.id)


def _check_int(value, name, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidSession(name, "must be an integer")
    if lo is not None and value < lo:
        raise InvalidSession(name, f"must be >= {lo}" if lo != 1 else "must be > 0")
    if hi is not None and value > hi:
        raise InvalidSession(name, f"must be <= {hi}")


def _check_real(value, name, positive=False, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidSession(name, "must be a number")
    if not math.isfinite(value):
        raise InvalidSession(name, "must be finite")
    if positive and value <= 0:
        raise InvalidSession(name, "must be > 0")
    if not positive and value < 0:
        raise InvalidSession(name, "must be >= 0")
    if hi is not None and value > hi:
        raise InvalidSession(name, f"must be <= {hi:g}")
