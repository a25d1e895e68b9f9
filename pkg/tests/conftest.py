import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np
import pytest

from quartetclust.distance import DistanceMatrix

DATA = Path(__file__).parent / "data"

# Format 1, two tracks, 480 ticks per quarter. Assembled by hand; see
# test_midi.py for the event-by-event reading.
FIXTURE_MIDI = bytes.fromhex(
    "4d546864 00000006 0001 0002 01e0"
    "4d54726b 0000001a"
    "00903c64" "00ff510307a120" "60904064" "303c00" "60804040" "00ff2f00"
    "4d54726b 00000025"
    "00f0037e7ff7" "00b10764" "00c100" "30913050" "303000" "003050" "602b46" "60813000" "002b00" "00ff2f00"
)
FIXTURE_STREAM = bytes.fromhex(
    "007f007f00047f047f047f80"
    "7f007f007f007ffb007ffb007f80"
)


@pytest.fixture
def fixture_midi():
    return (DATA / "fixture.mid").read_bytes()


@pytest.fixture
def golden_stream():
    return (DATA / "fixture.pp").read_bytes()


@pytest.fixture(scope="session")
def natural_texts():
    """Real-world text of 10 KB or more: Python standard library sources."""
    out = []
    for mod in (json, shutil, argparse):
        data = Path(mod.__file__).read_bytes()
        if len(data) >= 10_000:
            out.append(data)
    assert out
    return out


def random_matrix(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n))
    d = np.triu(a, 1)
    d = d + d.T
    return DistanceMatrix([f"x{i}" for i in range(n)], d)


@pytest.fixture
def make_random_matrix():
    return random_matrix


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
