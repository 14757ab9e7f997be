import numpy as np
import pytest
from hypothesis import strategies as st

from sightline.geometry import BoundingBox, Detection, GroundTruthBox

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_box(rng, min_size=0.02, max_size=0.5):
    w, h = rng.uniform(min_size, max_size, size=2)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return BoundingBox(float(cx), float(cy), float(w), float(h))


def random_detections(rng, n, num_classes=2):
    return [
        Detection(int(rng.integers(num_classes)), random_box(rng), float(rng.uniform(0.01, 1.0)))
        for _ in range(n)
    ]


def random_gts(rng, n, num_classes=2):
    return [GroundTruthBox(int(rng.integers(num_classes)), random_box(rng)) for _ in range(n)]


# boxes whose corners sit on a 1/64 lattice inside the unit square
@st.composite
def dyadic_boxes(draw, n=64):
    x1 = draw(st.integers(0, n - 1))
    y1 = draw(st.integers(0, n - 1))
    x2 = draw(st.integers(x1, n))
    y2 = draw(st.integers(y1, n))
    return (x1, y1, x2, y2)


unit_boxes = st.builds(
    lambda cx, cy, w, h: BoundingBox(cx, cy, w, h),
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
)
