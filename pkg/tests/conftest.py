import math

import numpy as np
import pytest

from pszablate.atf import FrequencyGrid
from pszablate.geometry import Listener, Loudspeaker, Scene
from pszablate.room import RoomSpec


def small_scene(n_speakers=4, reflectance=0.5, order=2, rir_length=1024, M=1, fs=48000.0):
    room = RoomSpec(dimensions=(4.0, 5.0, 3.0), reflectances=reflectance, max_image_order=order,
                    rir_length=rir_length)
    xs = np.linspace(1.4, 2.6, n_speakers)
    speakers = [Loudspeaker(position=(x, 1.0, 1.2), axis=(0.0, 1.0, 0.0), piston_radius=0.03) for x in xs]
    listeners = [
        Listener(head_center=(x, 2.2, 1.2), yaw=-math.pi / 2, control_points_per_ear=M)
        for x in (1.6, 2.4)
    ]
    return Scene(room=room, speakers=speakers, listeners=listeners, sample_rate=fs)


@pytest.fixture
def scene():
    return small_scene()


@pytest.fixture
def grid():
    return FrequencyGrid(fs=48000.0, n_fft=2048)


# ---- acceptance reporting
# Tests marked ``acceptance(n, title)`` get one PASS/FAIL line each in the
# terminal summary, with whatever detail they recorded via ``accept_note``.

_ACCEPT = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion n")


@pytest.fixture
def accept_note(request):
    notes = []
    mark = request.node.get_closest_marker("acceptance")
    if mark is not None:
        _ACCEPT.setdefault(mark.args[0], {"title": mark.args[1], "outcome": None, "notes": notes})
        _ACCEPT[mark.args[0]]["notes"] = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    entry = _ACCEPT.setdefault(mark.args[0], {"title": mark.args[1], "outcome": None, "notes": []})
    if rep.when == "call" or rep.failed:
        entry["outcome"] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPT):
        e = _ACCEPT[n]
        detail = "; ".join(e["notes"])
        terminalreporter.write_line(f"[{e['outcome'] or 'NOT RUN'}] {n:2d}. {e['title']}" + (f" ({detail})" if detail else ""))
