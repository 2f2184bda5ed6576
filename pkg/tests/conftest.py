import contextlib
from pathlib import Path

import pytest
from hypothesis import strategies as st

from cfie.ingest import CallSiteSignature, FunctionSignature, load_view
from cfie.types import Aggregate, Function, Pointer, Scalar, SCALAR_KINDS, SCALAR_WIDTHS, Unknown, Void

FIXTURES = Path(__file__).parent / "fixtures"

# ---------------------------------------------------------------------------
# hypothesis strategies

scalars = st.builds(Scalar, st.sampled_from(SCALAR_KINDS), st.sampled_from(SCALAR_WIDTHS))
leaves = st.one_of(
    st.just(Void()),
    scalars,
    st.builds(Aggregate, st.sampled_from(["conn", "evt", "buf"])),
    st.just(Function()),
    st.just(Unknown()),
)
descriptors = st.recursive(leaves, lambda inner: st.builds(Pointer, inner), max_leaves=4)
# non-void argument-position types; small alphabet so equalities actually occur
arg_types = st.one_of(
    st.sampled_from([Scalar("int", 32), Scalar("int", 64), Scalar("int", 8), Scalar("float", 64)]),
    st.sampled_from([Pointer(Void()), Pointer(Scalar("int", 32)), Pointer(Aggregate("conn"))]),
    st.just(Unknown()),
)
returns = st.one_of(st.just(Void()), arg_types)

call_sites = st.builds(
    CallSiteSignature,
    cs_id=st.just("cs"),
    link_key=st.just("k"),
    expects_return=returns,
    args=st.lists(arg_types, max_size=8).map(tuple),
)
functions = st.builds(
    FunctionSignature,
    fn_id=st.just("fn"),
    link_key=st.just("k"),
    return_type=returns,
    params=st.lists(arg_types, max_size=8).map(tuple),
    variadic=st.booleans(),
    address_taken=st.just(True),
)


# ---------------------------------------------------------------------------
# fixtures


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def four_targets_view():
    return load_view(FIXTURES / "four_targets.json")


@pytest.fixture
def worked_views():
    return load_view(FIXTURES / "worked_source.json"), load_view(FIXTURES / "worked_binary.json")


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion

_CRITERIA = []


@contextlib.contextmanager
def _criterion(name):
    try:
        yield
    except BaseException:
        _CRITERIA.append((name, False))
        raise
    _CRITERIA.append((name, True))


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
