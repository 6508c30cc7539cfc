"""Linear device power model.

Mean playback power is the dot product of a session's feature vector
``[1, fps, pixels/s, bits/s, online]`` with a coefficient vector trained for
one (device, codec) pair. The codec enters through profile selection, not as
a numeric feature.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

from .errors import InvalidProfile, MissingProfile, NonPositivePower, UnreadableFile
from .session import CODECS, DEVICES, Session

FEATURE_NAMES = ("intercept", "fps", "pixels_per_second", "bitrate", "online")
N_FEATURES = len(FEATURE_NAMES)

ProfileKey = tuple[str, str]


class FeatureVector(NamedTuple):
    intercept: float
    fps: float
    pixels_per_second: float
    bitrate: float
    online: float


@dataclass(frozen=True, slots=True)
class DeviceCodecProfile:
    device: str
    codec: str
    coefficients: tuple[float, ...]
    provenance: str = ""

    def __post_init__(self):
        coeffs = tuple(self.coefficients)
        if len(coeffs) != N_FEATURES:
            raise InvalidProfile(
                f"profile ({self.device}, {self.codec}) needs {N_FEATURES} coefficients, got {len(coeffs)}"
            )
        for c in coeffs:
            if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
                raise InvalidProfile(f"profile ({self.device}, {self.codec}) has non-finite coefficient {c!r}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in coeffs))

    @property
    def key(self) -> ProfileKey:
        return (self.device, self.codec)

    @property
    def base_power(self) -> float:
        return self.coefficients[0]


@dataclass(frozen=True, slots=True)
class PowerEstimate:
    watts: float
    profile_key: ProfileKey


class ProfileSet(Mapping):
    """Read-only mapping ``(device, codec) -> DeviceCodecProfile``."""

    def __init__(self, profiles=()):
        self._by_key: dict[ProfileKey, DeviceCodecProfile] = {}
        for p in profiles:
            if p.key in self._by_key:
                raise InvalidProfile(f"duplicate profile for {p.key}")
            self._by_key[p.key] = p

    def __getitem__(self, key: ProfileKey) -> DeviceCodecProfile:
        try:
            return self._by_key[key]
        except KeyError:
            raise MissingProfile(*key) from None

    def __iter__(self) -> Iterator[ProfileKey]:
        return iter(self._by_key)

    def __len__(self) -> int:
        return len(self._by_key)

    def __repr__(self):
        return f"ProfileSet({sorted(self._by_key)})"

    def provenance(self) -> dict[str, str]:
        return {f"{d}/{c}": p.provenance for (d, c), p in sorted(self._by_key.items())}


def featurize(s: Session) -> FeatureVector:
    p = s.params
    return FeatureVector(1.0, float(p.fps), float(p.width * p.height * p.fps), float(p.bitrate), 1.0 if s.online else 0.0)


def _dot(v: FeatureVector, x: tuple[float, ...]) -> float:
    return v[0] * x[0] + v[1] * x[1] + v[2] * x[2] + v[3] * x[3] + v[4] * x[4]


def estimate_with_profile(s: Session, profile: DeviceCodecProfile) -> PowerEstimate:
    watts = _dot(featurize(s), profile.coefficients)
    if not watts > 0:
        raise NonPositivePower(s.id, watts)
    return PowerEstimate(watts, profile.key)


def estimate_power(s: Session, profiles: Mapping) -> PowerEstimate:
    return estimate_with_profile(s, profiles[(s.device, s.codec)])


def session_energy(s: Session, estimate: PowerEstimate) -> float:
    """Energy in joules over the full (untruncated) session."""
    return estimate.watts * s.duration


_PROFILE_FIELDS = {"device", "codec", "coefficients", "provenance"}


def profiles_from_json(doc) -> ProfileSet:
    if not isinstance(doc, list):
        raise InvalidProfile("profile document must be a JSON list of objects")
    out = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise InvalidProfile(f"profile #{i} is not an object")
        unknown = set(entry) - _PROFILE_FIELDS
        if unknown:
            raise InvalidProfile(f"profile #{i} has unknown fields {sorted(unknown)}")
        missing = {"device", "codec", "coefficients"} - set(entry)
        if missing:
            raise InvalidProfile(f"profile #{i} is missing {sorted(missing)}")
        try:
            device = DEVICES.canonical(entry["device"])
            codec = CODECS.canonical(entry["codec"])
        except KeyError as exc:
            raise InvalidProfile(f"profile #{i}: {exc.args[0]}") from None
        coeffs = entry["coefficients"]
        if not isinstance(coeffs, list):
            raise InvalidProfile(f"profile #{i}: coefficients must be an array")
        out.append(DeviceCodecProfile(device, codec, tuple(coeffs), str(entry.get("provenance", ""))))
    return ProfileSet(out)


def profiles_to_json(profiles: ProfileSet) -> list[dict]:
    return [
        {"device": p.device, "codec": p.codec, "coefficients": list(p.coefficients), "provenance": p.provenance}
        for p in profiles.values()
    ]


def load_profiles(path) -> ProfileSet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"cannot read profile file {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidProfile(f"{path}: invalid JSON ({exc})") from exc
    return profiles_from_json(doc)


def fixture_profiles() -> ProfileSet:
    """The calibrated synthetic profiles bundled with the package."""
    return load_profiles(Path(__file__).with_name("data") / "profiles_fixture.json")
