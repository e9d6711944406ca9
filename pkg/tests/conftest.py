import pytest

from freqdoubler.model import MosGeometry, MosModelCard, MosPolarity

# VTO/KP of the bundled 0.5 um cards
TABLE1_N = MosModelCard("cmosn", MosPolarity.NMOS, 0.7640855, 1.259355e-4)
TABLE1_P = MosModelCard("cmosp", MosPolarity.PMOS, -0.9444911, 3.924644e-5)
WL10 = MosGeometry(1.5e-6, 0.15e-6)


@pytest.fixture
def nmos():
    return TABLE1_N


@pytest.fixture
def pmos():
    return TABLE1_P


@pytest.fixture
def geom():
    return WL10


DIVIDER = """\
* resistor divider
V1 1 0 DC 1
R1 1 2 1k
R2 2 0 1k
.op
"""


@pytest.fixture
def divider_text():
    return DIVIDER
