"""Power-saving policies over a scored session set.

Every policy compares a baseline power per session against a
counterfactual one and condenses the comparison into a
:class:`SavingsReport`. Means use ``math.fsum`` so aggregates do not depend
on session order.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyGroup, IdentityViolation, InvalidConfig, MosOutOfRange, NonPositivePower
from .pareto import OutlierRule, ParetoFront, ParetoPoint, build_front
from .power import estimate_with_profile
from .qoe import MOS_MAX, MOS_MIN
from .session import DESKTOP_PC, H264, LAPTOP, VP9, Session

IDENTITY_TOL = 1e-9

# Per-device (from, to) codec switches: the less efficient decoder to the
# more efficient one on the reference hardware.
DEFAULT_CODEC_DIRECTION = {LAPTOP: (VP9, H264), DESKTOP_PC: (H264, VP9)}

DEFAULT_CAP_GRID = tuple(round(1.0 + 0.1 * i, 1) for i in range(41))


@dataclass(frozen=True, slots=True)
class ScoredSession:
    session: Session
    mos: float
    watts: float

    def __post_init__(self):
        if not (MOS_MIN <= self.mos <= MOS_MAX):
            raise MosOutOfRange(f"session {self.session.id!r}: MOS {self.mos!r} outside [1, 5]")
        if not (math.isfinite(self.watts) and self.watts > 0):
            raise NonPositivePower(self.session.id, self.watts)

    @property
    def id(self) -> str:
        return self.session.id

    @property
    def group(self) -> tuple[str, str]:
        return (self.session.device, self.session.codec)

    def point(self) -> ParetoPoint:
        return ParetoPoint(self.session.id, self.mos, self.watts)


@dataclass
class SavingsReport:
    policy: str
    n_sessions: int
    baseline_mean_watts: float
    optimized_mean_watts: float
    absolute_saving_watts: float
    relative_saving_ratio_of_means: float
    relative_saving_mean_of_ratios: float | None = None
    per_session: list | None = None
    breakdown: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    @classmethod
    def from_means(cls, policy, n_sessions, baseline_mean, optimized_mean, **kw) -> "SavingsReport":
        absolute = baseline_mean - optimized_mean
        return cls(policy, n_sessions, baseline_mean, optimized_mean, absolute, absolute / baseline_mean, **kw)

    @classmethod
    def from_rows(cls, policy, ids, old_watts, new_watts, old_mos=None, new_mos=None,
                  keep_sessions=False, **kw) -> "SavingsReport":
        old_watts = np.asarray(old_watts, dtype=float)
        new_watts = np.asarray(new_watts, dtype=float)
        n = len(old_watts)
        if n == 0:
            raise EmptyGroup(f"policy {policy!r}: no sessions to evaluate")
        base = math.fsum(old_watts.tolist()) / n
        opt = math.fsum(new_watts.tolist()) / n
        ratios = ((old_watts - new_watts) / old_watts).tolist()
        per_session = None
        if keep_sessions:
            om = old_mos if old_mos is not None else [None] * n
            nm = new_mos if new_mos is not None else om
            per_session = [
                (str(i), float(a), float(b), None if x is None else float(x), None if y is None else float(y))
                for i, a, b, x, y in zip(ids, old_watts, new_watts, om, nm)
            ]
        return cls.from_means(policy, n, base, opt, relative_saving_mean_of_ratios=math.fsum(ratios) / n,
                              per_session=per_session, **kw)

    def check_identity(self, tol: float = IDENTITY_TOL) -> None:
        expected = self.baseline_mean_watts - self.optimized_mean_watts
        implied = self.relative_saving_ratio_of_means * self.baseline_mean_watts
        absolute = self.absolute_saving_watts
        if not _close(expected, absolute, tol):
            raise IdentityViolation(f"{self.policy}: absolute saving {absolute!r} != baseline - optimized {expected!r}")
        if not _close(implied, absolute, tol):
            raise IdentityViolation(f"{self.policy}: relative x baseline = {implied!r} but absolute = {absolute!r}")
        for sub in self.breakdown.values():
            sub.check_identity(tol)

    def to_dict(self) -> dict:
        d = {
            "policy": self.policy,
            "n_sessions": self.n_sessions,
            "baseline_mean_watts": self.baseline_mean_watts,
            "optimized_mean_watts": self.optimized_mean_watts,
            "absolute_saving_watts": self.absolute_saving_watts,
            "relative_saving_ratio_of_means": self.relative_saving_ratio_of_means,
            "relative_saving_mean_of_ratios": self.relative_saving_mean_of_ratios,
            "breakdown": {k: v.to_dict() for k, v in self.breakdown.items()},
            "context": self.context,
        }
        if self.per_session is not None:
            d["per_session"] = [list(r) for r in self.per_session]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SavingsReport":
        per = d.get("per_session")
        return cls(
            policy=d["policy"],
            n_sessions=d["n_sessions"],
            baseline_mean_watts=d["baseline_mean_watts"],
            optimized_mean_watts=d["optimized_mean_watts"],
            absolute_saving_watts=d["absolute_saving_watts"],
            relative_saving_ratio_of_means=d["relative_saving_ratio_of_means"],
            relative_saving_mean_of_ratios=d.get("relative_saving_mean_of_ratios"),
            per_session=[tuple(r) for r in per] if per is not None else None,
            breakdown={k: cls.from_dict(v) for k, v in d.get("breakdown", {}).items()},
            context=d.get("context", {}),
        )


def _close(a: float, b: float, rel: float) -> bool:
    return a == b or abs(a - b) <= rel * max(abs(a), abs(b))


def implied_baseline(absolute_saving: float, relative_saving: float) -> float:
    """Baseline mean implied by a paired (absolute, relative) saving."""
    return absolute_saving / relative_saving


# -- grouping and fronts ------------------------------------------------------

def group_sessions(sessions: Sequence[ScoredSession]) -> dict[tuple, list[ScoredSession]]:
    groups: dict[tuple, list[ScoredSession]] = defaultdict(list)
    for s in sessions:
        groups[s.group].append(s)
    return dict(sorted(groups.items()))


def build_fronts(sessions: Sequence[ScoredSession], rule: OutlierRule = OutlierRule()) -> tuple[dict, dict]:
    """Per-group fronts plus per-group filter info."""
    fronts, infos = {}, {}
    for key, members in group_sessions(sessions).items():
        fronts[key], infos[key] = build_front([s.point() for s in members], rule, key)
    return fronts, infos


def _front_arrays(front: ParetoFront) -> tuple[np.ndarray, np.ndarray]:
    return (np.array([p.mos for p in front.points]), np.array([p.watts for p in front.points]))


def _front_for(fronts: Mapping, key) -> ParetoFront:
    try:
        return fronts[key]
    except KeyError:
        raise EmptyGroup(f"no Pareto front for group {key}") from None


def _columns(sessions: Sequence[ScoredSession]):
    ids = [s.id for s in sessions]
    mos = np.fromiter((s.mos for s in sessions), dtype=float, count=len(sessions))
    watts = np.fromiter((s.watts for s in sessions), dtype=float, count=len(sessions))
    return ids, mos, watts


def remap_same_quality(mos, watts, front: ParetoFront):
    """Move each session to the cheapest front point of at least its MOS.

    Sessions keep their own (mos, watts) when no such point exists or the
    point is not cheaper.
    """
    f_mos, f_watts = _front_arrays(front)
    i = np.searchsorted(f_mos, mos, side="left")
    feasible = i < len(f_mos)
    j = np.minimum(i, len(f_mos) - 1)
    change = feasible & (f_watts[j] < watts)
    return np.where(change, f_mos[j], mos), np.where(change, f_watts[j], watts), change


def remap_under_cap(mos, watts, front: ParetoFront, cap: float):
    """Move sessions above ``cap`` to the best-quality front point at or below it.

    When the cap sits below the whole front, the front's cheapest point is
    used instead and the session is flagged infeasible. Sessions are never
    moved to a more expensive point.
    """
    f_mos, f_watts = _front_arrays(front)
    above = mos > cap
    i = np.searchsorted(f_mos, cap, side="right") - 1
    infeasible = above & (i < 0)
    j = np.maximum(i, 0)
    change = above & (f_watts[j] < watts)
    return (np.where(change, f_mos[j], mos), np.where(change, f_watts[j], watts), change, infeasible)


# -- policies -----------------------------------------------------------------

def optimize_params(group: Sequence[ScoredSession], front: ParetoFront, keep_sessions: bool = False,
                    policy: str = "params") -> SavingsReport:
    if not group:
        raise EmptyGroup("optimize_params needs a non-empty group")
    ids, mos, watts = _columns(group)
    new_mos, new_watts, change = remap_same_quality(mos, watts, front)
    return SavingsReport.from_rows(policy, ids, watts, new_watts, mos, new_mos, keep_sessions=keep_sessions,
                                   context={"n_remapped": int(change.sum()), "group": list(front.group_key)})


def optimize_params_all(sessions: Sequence[ScoredSession], fronts: Mapping, keep_sessions: bool = False) -> SavingsReport:
    """Same-quality optimization per group, pooled, with per-group breakdown."""
    if not sessions:
        raise EmptyGroup("no sessions")
    breakdown = {}
    ids, old_w, new_w, old_m, new_m = [], [], [], [], []
    for key, members in group_sessions(sessions).items():
        front = _front_for(fronts, key)
        i, m, w = _columns(members)
        nm, nw, _ = remap_same_quality(m, w, front)
        breakdown["/".join(key)] = SavingsReport.from_rows("params", i, w, nw, context={"group": list(key)})
        ids += i
        old_w.append(w); new_w.append(nw); old_m.append(m); new_m.append(nm)
    report = SavingsReport.from_rows("params", ids, np.concatenate(old_w), np.concatenate(new_w),
                                     np.concatenate(old_m), np.concatenate(new_m), keep_sessions=keep_sessions)
    report.breakdown = breakdown
    return report


def switch_codec(sessions: Sequence[ScoredSession], profiles: Mapping,
                 direction: Mapping = DEFAULT_CODEC_DIRECTION, keep_sessions: bool = False) -> SavingsReport:
    """Evaluate every session of each listed device under two codec profiles.

    The baseline uses the ``from`` profile and the counterfactual the ``to``
    profile; video parameters are left as they are. Devices absent from
    ``direction`` are ignored.
    """
    ids, old_w, new_w = [], [], []
    breakdown = {}
    for device, (src, dst) in sorted(direction.items()):
        members = [s for s in sessions if s.session.device == device]
        if not members:
            continue
        p_from, p_to = profiles[(device, src)], profiles[(device, dst)]
        a = [estimate_with_profile(s.session, p_from).watts for s in members]
        b = [estimate_with_profile(s.session, p_to).watts for s in members]
        breakdown[f"{device}: {src}->{dst}"] = SavingsReport.from_rows("codec", [s.id for s in members], a, b)
        ids += [s.id for s in members]
        old_w += a
        new_w += b
    if not ids:
        raise EmptyGroup("codec switch: no sessions on any listed device")
    report = SavingsReport.from_rows("codec", ids, old_w, new_w, keep_sessions=keep_sessions,
                                     context={"direction": {d: list(v) for d, v in sorted(direction.items())}})
    report.breakdown = breakdown
    return report


def switch_device(sessions: Sequence[ScoredSession], profiles: Mapping, from_device: str = DESKTOP_PC,
                  to_device: str = LAPTOP, keep_sessions: bool = False) -> SavingsReport:
    """Re-evaluate ``from_device`` sessions on ``to_device`` with the same codec."""
    members = [s for s in sessions if s.session.device == from_device]
    if not members:
        raise EmptyGroup(f"device switch: no {from_device} sessions")
    old_w, new_w = [], []
    per_codec = defaultdict(lambda: ([], [], []))
    for s in members:
        codec = s.session.codec
        a = estimate_with_profile(s.session, profiles[(from_device, codec)]).watts
        b = a if to_device == from_device else estimate_with_profile(s.session, profiles[(to_device, codec)]).watts
        old_w.append(a)
        new_w.append(b)
        bucket = per_codec[codec]
        bucket[0].append(s.id); bucket[1].append(a); bucket[2].append(b)
    breakdown = {codec: SavingsReport.from_rows("device", *per_codec[codec]) for codec in sorted(per_codec)}
    report = SavingsReport.from_rows("device", [s.id for s in members], old_w, new_w, keep_sessions=keep_sessions,
                                     context={"from_device": from_device, "to_device": to_device})
    report.breakdown = breakdown
    return report


def _cap_state(sessions: Sequence[ScoredSession], fronts: Mapping, cap: float):
    ids, mos, watts = _columns(sessions)
    new_mos, new_watts = mos.copy(), watts.copy()
    remapped = infeasible = 0
    positions = defaultdict(list)
    for idx, s in enumerate(sessions):
        positions[s.group].append(idx)
    for key in sorted(positions):
        pos = np.array(positions[key])
        front = _front_for(fronts, key)
        nm, nw, ch, inf = remap_under_cap(mos[pos], watts[pos], front, cap)
        new_mos[pos] = nm
        new_watts[pos] = nw
        remapped += int(ch.sum())
        infeasible += int(inf.sum())
    return ids, mos, watts, new_mos, new_watts, remapped, infeasible


def apply_cap(sessions: Sequence[ScoredSession], fronts: Mapping, cap: float, keep_sessions: bool = False) -> SavingsReport:
    if not sessions:
        raise EmptyGroup("apply_cap needs sessions")
    ids, mos, watts, new_mos, new_watts, remapped, infeasible = _cap_state(sessions, fronts, float(cap))
    return SavingsReport.from_rows("cap", ids, watts, new_watts, mos, new_mos, keep_sessions=keep_sessions,
                                   context={"cap": float(cap), "n_remapped": remapped, "n_infeasible": infeasible})


@dataclass(frozen=True)
class CapPoint:
    cap: float
    relative_saving: float
    absolute_saving: float
    n_remapped: int
    n_infeasible: int


@dataclass(frozen=True)
class CapSweepCurve:
    points: tuple[CapPoint, ...]
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        caps = [p.cap for p in self.points]
        if any(b <= a for a, b in zip(caps, caps[1:])):
            raise InvalidConfig("cap sweep caps must be strictly increasing")

    def is_non_increasing(self) -> bool:
        s = [p.relative_saving for p in self.points]
        return all(b <= a for a, b in zip(s, s[1:]))

    def saving_at(self, cap: float) -> float:
        for p in self.points:
            if p.cap == cap:
                return p.relative_saving
        raise KeyError(cap)

    def flattening_below(self, mos: float = 3.0) -> float | None:
        """Spread of relative savings over caps <= ``mos`` (small = flat)."""
        s = [p.relative_saving for p in self.points if p.cap <= mos]
        return max(s) - min(s) if s else None


def cap_sweep(sessions: Sequence[ScoredSession], fronts: Mapping, caps: Sequence[float] = DEFAULT_CAP_GRID) -> CapSweepCurve:
    caps = [float(c) for c in caps]
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise InvalidConfig("cap grid must be sorted strictly ascending")
    if not sessions:
        raise EmptyGroup("cap sweep needs sessions")
    points = []
    for cap in caps:
        r = apply_cap(sessions, fronts, cap)
        points.append(CapPoint(cap, r.relative_saving_ratio_of_means, r.absolute_saving_watts,
                               r.context["n_remapped"], r.context["n_infeasible"]))
    return CapSweepCurve(tuple(points), context={"caps": caps})


def most_efficient_profile(sessions: Sequence[ScoredSession], profiles: Mapping) -> tuple:
    """The (device, codec) whose profile gives the lowest mean power over the whole set."""
    if not sessions:
        raise EmptyGroup("no sessions")
    best = None
    for key in sorted(profiles):
        prof = profiles[key]
        mean = math.fsum(estimate_with_profile(s.session, prof).watts for s in sessions) / len(sessions)
        if best is None or mean < best[1]:
            best = (key, mean)
    return best[0]


def joint_optimize(sessions: Sequence[ScoredSession], profiles: Mapping, fronts: Mapping | None = None,
                   cap: float | None = None, rule: OutlierRule = OutlierRule(),
                   keep_sessions: bool = False, configuration: tuple | None = None) -> SavingsReport:
    """Move every session to the cheapest configuration, then optimize within it.

    Steps per session: re-estimate power on the globally cheapest
    (device, codec) profile, apply same-quality optimization against that
    group's front, then the optional MOS cap. If no front is supplied for the
    chosen group, one is built from the re-estimated sessions. A session whose
    end result would exceed its original power keeps its original setup.
    ``configuration`` skips the search when the caller already ran
    :func:`most_efficient_profile` on the same sessions.
    """
    if not sessions:
        raise EmptyGroup("joint optimization needs sessions")
    key = tuple(configuration) if configuration is not None else most_efficient_profile(sessions, profiles)
    prof = profiles[key]
    ids, mos, base = _columns(sessions)
    moved = np.array([estimate_with_profile(s.session, prof).watts for s in sessions])
    front = (fronts or {}).get(key)
    front_source = "supplied"
    if front is None:
        pts = [ParetoPoint(i, m, w) for i, m, w in zip(ids, mos.tolist(), moved.tolist())]
        front, _ = build_front(pts, rule, key)
        front_source = "built from re-estimated sessions"
    new_mos, new_w, _ = remap_same_quality(mos, moved, front)
    n_infeasible = 0
    if cap is not None:
        new_mos, new_w, _, inf = remap_under_cap(new_mos, new_w, front, float(cap))
        n_infeasible = int(inf.sum())
    keep = new_w > base
    new_w = np.where(keep, base, new_w)
    new_mos = np.where(keep, mos, new_mos)
    return SavingsReport.from_rows(
        "joint", ids, base, new_w, mos, new_mos, keep_sessions=keep_sessions,
        context={"configuration": "/".join(key), "cap": None if cap is None else float(cap),
                 "front": front_source, "n_kept_original": int(keep.sum()), "n_infeasible": n_infeasible},
    )


def savings_summary(reports: Sequence[SavingsReport], tol: float = IDENTITY_TOL) -> dict:
    """Merge reports after re-deriving each one's relative saving from its means."""
    out = []
    for r in reports:
        absolute = r.baseline_mean_watts - r.optimized_mean_watts
        relative = absolute / r.baseline_mean_watts
        if not _close(absolute, r.absolute_saving_watts, tol):
            raise IdentityViolation(f"{r.policy}: stored absolute saving disagrees with its means")
        if not _close(relative, r.relative_saving_ratio_of_means, tol):
            raise IdentityViolation(f"{r.policy}: stored relative saving disagrees with its means")
        r.check_identity(tol)
        out.append(r.to_dict())
    return {"n_reports": len(out), "reports": out}
