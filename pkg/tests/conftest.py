import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nonfick.model import ModelParams, derived_scales  # noqa: E402

# parameter sets used across the suite (panels of the PDF comparison figures)
FIG1 = ModelParams(gamma=2.0, epsilon=5.0, tau=0.5, d_f=0.5)
FIG3A = ModelParams(gamma=0.4, epsilon=0.4, tau=1.0, d_f=0.5)
FIG3B = ModelParams(gamma=0.6, epsilon=0.5, tau=1.0, d_f=0.5)
FIG4 = ModelParams(gamma=0.3, epsilon=0.5, tau=1.0, d_f=0.5)

PDF_PANELS = [FIG3A, FIG3B, FIG4]


@pytest.fixture(scope="session")
def fig3a():
    return FIG3A, derived_scales(FIG3A)


@pytest.fixture(scope="session")
def fig3b():
    return FIG3B, derived_scales(FIG3B)


@pytest.fixture(scope="session")
def fig4():
    return FIG4, derived_scales(FIG4)
