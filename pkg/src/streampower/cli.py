"""Command-line entry point: ``streampower {synth,score,pareto,optimize,sweep}``.

Stages hand off through files so that externally computed MOS or power
columns can be injected between them. Pass a scores CSV as the second
``--input`` to use it instead of re-scoring. Diagnostics go to stderr. Every
JSON artifact embeds the effective run configuration, and CSV artifacts get
it in ``run_config.json`` next to them.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import InvalidConfig, InvalidSession, StreamPowerError
from .io import parse_sessions, read_report, write_report, write_sessions
from .pareto import OutlierRule
from .policy import (DEFAULT_CAP_GRID, ScoredSession, apply_cap, build_fronts, cap_sweep, joint_optimize,
                     most_efficient_profile, optimize_params_all, savings_summary, switch_codec, switch_device)
from .power import PowerEstimate, load_profiles, session_energy
from .qoe import DEFAULT_CONFIG, load_qoe_config
from .scoring import default_jobs, score_sessions
from .synth import DEFAULT_LAPTOP_SHARE, DEFAULT_SEED, generate_synthetic, desktop_mix_spec

log = logging.getLogger("streampower")

POLICIES = ("params", "codec", "device", "cap", "joint")
SCORE_COLUMNS = ("id", "device", "codec", "mos", "watts", "energy_joules")
FRONT_COLUMNS = ("group_device", "group_codec", "session_id", "mos", "watts")
SWEEP_COLUMNS = ("cap", "relative_saving", "absolute_saving", "n_remapped", "n_infeasible")
# execution-only settings; they cannot change results, so they stay out of the echo
_NOT_ECHOED = {"func", "out_dir", "jobs", "verbose"}


def _parse_caps(text: str) -> list[float]:
    if text == "default":
        return list(DEFAULT_CAP_GRID)
    try:
        caps = [float(c) for c in text.split(",") if c.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid cap list {text!r}") from None
    if not caps:
        raise argparse.ArgumentTypeError("empty cap list")
    return caps


def _parse_policies(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in POLICIES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown policies {bad}; choose from {','.join(POLICIES)}")
    return names


def run_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_ECHOED}
    cfg["command"] = args.command
    return cfg


def _load_models(args):
    profiles = load_profiles(args.profiles)
    qoe_cfg = load_qoe_config(args.qoe_config) if args.qoe_config else DEFAULT_CONFIG
    return profiles, qoe_cfg


def _report_rejections(result, out_dir: Path):
    if result.rejections:
        log.warning("%d row(s) rejected; details in %s", result.n_rejected, out_dir / "rejections.csv")
        rows = [{"row": r.row, "field": r.field, "reason": r.reason} for r in result.rejections]
        write_report(rows, out_dir / "rejections.csv", "csv", columns=("row", "field", "reason"))


def _scored_dataset(args, out_dir: Path) -> tuple[list[ScoredSession], object]:
    """Sessions plus MOS/power: re-scored, or taken from a scores file (2nd --input)."""
    result = parse_sessions(args.input[0])
    _report_rejections(result, out_dir)
    profiles, qoe_cfg = _load_models(args)
    if len(args.input) < 2:
        return score_sessions(result.sessions, profiles, qoe_cfg, result.external_mos, jobs=args.jobs), profiles
    rows = read_report(args.input[1], "csv", types={"id": str, "device": str, "codec": str, "mos": float, "watts": float})
    by_id = {r["id"]: r for r in rows}
    scored = []
    for s in result.sessions:
        r = by_id.get(s.id)
        if r is None:
            raise InvalidSession("id", f"session {s.id!r} missing from scores file {args.input[1]}")
        scored.append(ScoredSession(s, r["mos"], r["watts"]))
    return scored, profiles


def _write_config(out_dir: Path, args):
    write_report(run_config(args), out_dir / "run_config.json")


def cmd_synth(args) -> int:
    spec = desktop_mix_spec(args.n_sessions, seed=args.seed, laptop_share=args.laptop_share, vp9_share=args.vp9_share)
    sessions = generate_synthetic(spec)
    out = Path(args.out_dir) / f"sessions.{args.format}"
    write_sessions(sessions, out, args.format)
    write_report({"run_config": run_config(args), "spec": spec.to_dict()}, Path(args.out_dir) / "synth_config.json")
    log.info("wrote %d sessions to %s", len(sessions), out)
    return 0


def cmd_score(args) -> int:
    out_dir = Path(args.out_dir)
    result = parse_sessions(args.input[0])
    _report_rejections(result, out_dir)
    profiles, qoe_cfg = _load_models(args)
    scored = score_sessions(result.sessions, profiles, qoe_cfg, result.external_mos, jobs=args.jobs)
    rows = [{"id": s.id, "device": s.session.device, "codec": s.session.codec, "mos": s.mos, "watts": s.watts,
             "energy_joules": session_energy(s.session, PowerEstimate(s.watts, s.group))} for s in scored]
    write_report(rows, out_dir / "scores.csv", "csv", columns=SCORE_COLUMNS)
    _write_config(out_dir, args)
    n = len(scored)
    print(f"scored {n} sessions ({result.n_rejected} rejected); mean MOS {sum(r['mos'] for r in rows) / n:.4f}; "
          f"mean power {sum(r['watts'] for r in rows) / n:.4f} W", file=sys.stderr)
    return 0


def _rule(args) -> OutlierRule:
    return OutlierRule(k=args.outlier_k, mos_eps=args.outlier_eps_mos, watts_eps=args.outlier_eps_watts)


def cmd_pareto(args) -> int:
    out_dir = Path(args.out_dir)
    scored, profiles = _scored_dataset(args, out_dir)
    fronts, infos = build_fronts(scored, _rule(args))
    for key, front in fronts.items():
        rows = [{"group_device": key[0], "group_codec": key[1], "session_id": p.session_id, "mos": p.mos,
                 "watts": p.watts} for p in front.points]
        write_report(rows, out_dir / f"front_{key[0]}_{key[1]}.csv", "csv", columns=FRONT_COLUMNS)
        if infos[key]["fallback_k0"]:
            print(f"warning: group {key[0]}/{key[1]} empty after outlier filtering; fell back to k=0", file=sys.stderr)
    efficient = {p.session_id for f in fronts.values() for p in f.points}
    rows = [{"id": s.id, "device": s.session.device, "codec": s.session.codec, "mos": s.mos, "watts": s.watts,
             "efficient": s.id in efficient} for s in scored]
    write_report(rows, out_dir / "efficiency.csv", "csv", columns=("id", "device", "codec", "mos", "watts", "efficient"))
    write_report({"run_config": run_config(args), "outlier_rule": _rule(args).to_dict(),
                  "groups": {"/".join(k): v for k, v in infos.items()}}, out_dir / "pareto_report.json")
    _write_config(out_dir, args)
    return 0


def _caps_sorted(caps):
    if any(b <= a for a, b in zip(caps, caps[1:])):
        raise InvalidConfig(f"cap grid must be strictly ascending, got {caps}")


def cmd_optimize(args) -> int:
    out_dir = Path(args.out_dir)
    scored, profiles = _scored_dataset(args, out_dir)
    rule = _rule(args)
    fronts, _ = build_fronts(scored, rule)
    caps = args.caps if args.caps is not None else [4.0, 3.0]
    echo = {"run_config": run_config(args), "outlier_rule": rule.to_dict(), "profiles": profiles.provenance()}
    reports = []
    for policy in args.policies:
        if policy == "params":
            reports.append(("params", optimize_params_all(scored, fronts, keep_sessions=args.per_session)))
        elif policy == "codec":
            reports.append(("codec", switch_codec(scored, profiles, keep_sessions=args.per_session)))
        elif policy == "device":
            reports.append(("device", switch_device(scored, profiles, keep_sessions=args.per_session)))
        elif policy == "cap":
            for cap in caps:
                reports.append((f"cap_{cap:g}", apply_cap(scored, fronts, cap, keep_sessions=args.per_session)))
        elif policy == "joint":
            best = most_efficient_profile(scored, profiles)
            for cap in [None, *caps]:
                name = "joint" if cap is None else f"joint_cap_{cap:g}"
                reports.append((name, joint_optimize(scored, profiles, fronts, cap, rule, args.per_session, best)))
    for name, report in reports:
        report.context["config"] = echo
        doc = report.to_dict()
        per = doc.pop("per_session", None)
        write_report(doc, out_dir / f"report_{name}.json")
        if per is not None:
            rows = [dict(zip(("id", "old_watts", "new_watts", "old_mos", "new_mos"), r)) for r in per]
            write_report(rows, out_dir / f"sessions_{name}.csv", "csv",
                         columns=("id", "old_watts", "new_watts", "old_mos", "new_mos"))
        print(f"{name}: relative saving {report.relative_saving_ratio_of_means:+.4%}, "
              f"absolute {report.absolute_saving_watts:.4f} W over {report.n_sessions} sessions", file=sys.stderr)
    for _, r in reports:
        r.per_session = None
    summary = savings_summary([r for _, r in reports])
    summary["run_config"] = echo
    write_report(summary, out_dir / "summary.json")
    return 0


def cmd_sweep(args) -> int:
    out_dir = Path(args.out_dir)
    caps = args.caps if args.caps is not None else list(DEFAULT_CAP_GRID)
    _caps_sorted(caps)
    scored, _ = _scored_dataset(args, out_dir)
    fronts, _ = build_fronts(scored, _rule(args))
    curve = cap_sweep(scored, fronts, caps)
    rows = [{"cap": p.cap, "relative_saving": p.relative_saving, "absolute_saving": p.absolute_saving,
             "n_remapped": p.n_remapped, "n_infeasible": p.n_infeasible} for p in curve.points]
    write_report(rows, out_dir / "cap_sweep.csv", "csv", columns=SWEEP_COLUMNS)
    _write_config(out_dir, args)
    flat = curve.flattening_below(3.0)
    if flat is not None:
        print(f"savings spread for caps <= 3.0: {flat:.4%}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streampower", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", required=True, help="directory for output artifacts")
    common.add_argument("-v", "--verbose", action="store_true")

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--input", nargs="+", required=True, metavar="PATH",
                        help="session file (csv/jsonl), optionally followed by a scores CSV")
    models.add_argument("--profiles", required=True, help="power profile JSON")
    models.add_argument("--qoe-config", help="QoE model config JSON (defaults otherwise)")
    models.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes (default: cores)")

    analysis = argparse.ArgumentParser(add_help=False)
    analysis.add_argument("--outlier-k", type=int, default=5)
    analysis.add_argument("--outlier-eps-mos", type=float, default=0.1)
    analysis.add_argument("--outlier-eps-watts", type=float, default=None,
                          help="absolute watts radius (default: 2%% of each group's power range)")
    analysis.add_argument("--caps", type=_parse_caps, default=None,
                          help="comma-separated MOS caps, or 'default' for 1.0..5.0 step 0.1")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic session log")
    p.add_argument("--n-sessions", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--laptop-share", type=float, default=DEFAULT_LAPTOP_SHARE)
    p.add_argument("--vp9-share", type=float, default=0.5)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", parents=[common, models], help="attach MOS, power and energy to each session")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pareto", parents=[common, models, analysis], help="per-group Pareto fronts")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("optimize", parents=[common, models, analysis], help="run power-saving policies")
    p.add_argument("--policies", type=_parse_policies, default=list(POLICIES))
    p.add_argument("--per-session", action="store_true", help="also write per-session CSVs")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common, models, analysis], help="savings versus MOS cap")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except StreamPowerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
