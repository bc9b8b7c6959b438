"""Shared scenes and precompiled tables.

Everything here is deterministic: scenes carry explicit seeds and table
construction derives all randomness from them, so fixtures can be session
scoped and expected values can be frozen in the tests.
"""

import pathlib

import pytest

from ctmpkit.geometry import Scene, TableRect
from ctmpkit.tables import build_tables

SCENES_DIR = pathlib.Path(__file__).resolve().parent.parent / "scenes"

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def criterion():
    """One printed pass/fail line per acceptance criterion, echoed again in
    the terminal summary, then asserted."""
    def report(cid: str, ok: bool, detail: str):
        line = f"{cid} {'pass' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return report


@pytest.fixture(scope="session")
def full_scene():
    """One-table scene at the default parameter scale (15 virtual points,
    4 grasp angles, 4 lifts, 60 base samples, 12 neighbors)."""
    return Scene.load(SCENES_DIR / "one_table.json")


@pytest.fixture(scope="session")
def full_tables(full_scene):
    return build_tables(full_scene)


@pytest.fixture(scope="session")
def micro_eq_scene():
    """Small scene for exhaustive table-versus-geometry comparison:
    4 virtual points, 2 grasp angles, 2 lifts, 6 base samples."""
    return Scene(tables=(TableRect(1.0, 2.2, -0.8, 0.8),),
                 n_virtual=4, n_grasp_angles=2, n_lifts=2,
                 n_base_samples=6, seed=5)


@pytest.fixture(scope="session")
def micro_eq_tables(micro_eq_scene):
    return build_tables(micro_eq_scene)


def _tiny_scene(seed):
    """Single-table scene small enough for blind exhaustive search:
    6 bases, one grasp angle, one lift, a handful of real configs."""
    return Scene(tables=(TableRect(1.0, 2.2, -0.8, 0.8),),
                 n_virtual=9, n_grasp_angles=1, n_lifts=1,
                 n_base_samples=6, n_base_neighbors=3, seed=seed)


@pytest.fixture(scope="session")
def tiny_scene_a():
    return _tiny_scene(5)


@pytest.fixture(scope="session")
def tiny_tables_a(tiny_scene_a):
    return build_tables(tiny_scene_a)


@pytest.fixture(scope="session")
def tiny_scene_b():
    return _tiny_scene(9)


@pytest.fixture(scope="session")
def tiny_tables_b(tiny_scene_b):
    return build_tables(tiny_scene_b)


@pytest.fixture(scope="session")
def split_scene():
    """Two tables far apart with an edge-length cutoff, so the base graph
    falls into several components and cross-table tasks are unsolvable."""
    return Scene(tables=(TableRect(1.0, 1.8, -0.8, 0.8),
                         TableRect(6.0, 6.8, -0.8, 0.8)),
                 n_virtual=9, n_grasp_angles=1, n_lifts=1,
                 n_base_samples=6, n_base_neighbors=3,
                 edge_max=1.5, seed=11)


@pytest.fixture(scope="session")
def split_tables(split_scene):
    return build_tables(split_scene)
