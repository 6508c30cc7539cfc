import pytest

from streampower.power import fixture_profiles
from streampower.policy import build_fronts
from streampower.scoring import score_sessions
from streampower.session import Impairments, Session, VideoParams
from streampower.synth import generate_synthetic, desktop_mix_spec

FIXTURE_N = 100_000


def make_session(id="s1", device="Laptop", codec="H264", width=1920, height=1080, fps=30.0,
                 bitrate=5_000_000.0, duration=120.0, online=True, loading_delay=0.0,
                 stall_count=0, stall_total=0.0):
    return Session(id, device, codec, VideoParams(width, height, fps, bitrate),
                   Impairments(loading_delay, stall_count, stall_total), duration, online)


@pytest.fixture(scope="session")
def profiles():
    return fixture_profiles()


@pytest.fixture(scope="session")
def fixture_sessions():
    return generate_synthetic(desktop_mix_spec(FIXTURE_N))


@pytest.fixture(scope="session")
def fixture_scored(fixture_sessions, profiles):
    return score_sessions(fixture_sessions, profiles)


@pytest.fixture(scope="session")
def fixture_fronts(fixture_scored):
    return build_fronts(fixture_scored)[0]


# criterion number -> (passed, title, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"AC{n} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
