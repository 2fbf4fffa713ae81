from fractions import Fraction

from hypothesis import settings
from hypothesis import strategies as st

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@st.composite
def angles(draw, max_den=360):
    from charlimits.circle import Angle
    den = draw(st.integers(1, max_den))
    return Angle(Fraction(draw(st.integers(0, den - 1)), den))


@st.composite
def small_fractions(draw, max_den=64, hi=2):
    den = draw(st.integers(1, max_den))
    return Fraction(draw(st.integers(0, hi * den)), den)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) == "call" and "test_acceptance.py::test_criterion_" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                num = int(name.split("_")[2])
                lines.append((num, f"criterion {num:2d} {key.upper()[:4]}  {name}"))
    if lines:
        terminalreporter.section("acceptance")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
