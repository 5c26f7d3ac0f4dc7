import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from icrloss.geometry import Box

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

coords = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)
sides = st.floats(0.1, 40.0, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw, coord=coords, side=sides):
    return Box(draw(coord), draw(coord), draw(side), draw(side))


@st.composite
def nested_pairs(draw):
    """(inner, outer) with inner fully inside outer."""
    outer = draw(boxes())
    fx = draw(st.floats(0.05, 1.0))
    fy = draw(st.floats(0.05, 1.0))
    w, h = outer.w * fx, outer.h * fy
    tx = draw(st.floats(-1.0, 1.0)) * (outer.w - w) / 2
    ty = draw(st.floats(-1.0, 1.0)) * (outer.h - h) / 2
    return Box(outer.cx + tx, outer.cy + ty, w, h), outer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
