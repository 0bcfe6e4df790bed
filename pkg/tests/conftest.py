import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reviewsim.model import AuthorModel, BinaryReviews, CategoricalPrior, CategoricalReviews, Setting, binary_prior
from reviewsim.presets import noiseless, preset

# three qualities, three scores, two reviews: threshold policies stop being optimal here
COUNTER_VALUES = [-2.0, 1.0, 5.0]
COUNTER_CONF = [
    [Fraction(2, 3), Fraction(1, 6), Fraction(1, 6)],
    [Fraction(1, 3), Fraction(1, 6), Fraction(1, 2)],
    [Fraction(1, 6), Fraction(1, 6), Fraction(2, 3)],
]


@pytest.fixture
def counter_prior():
    return CategoricalPrior(COUNTER_VALUES, [1 / 3] * 3)


@pytest.fixture
def counter_review():
    return CategoricalReviews(scores=[0, 1, 2], confusion=np.array(COUNTER_CONF, dtype=float))


@pytest.fixture
def counter_setting(counter_prior, counter_review):
    return Setting(counter_prior, counter_review, AuthorModel.from_rho(24 / 5), m=2)


def iclr_setting_for(lambda_r=1.0, m=3, rho=10 / 3):
    cfg = noiseless(preset("ICLR2020-L4", m=m, lambda_r=lambda_r))
    return cfg.setting.with_(author=AuthorModel.from_rho(rho, eta=0.7))


@pytest.fixture(scope="session")
def iclr_setting():
    return iclr_setting_for()


def binary_setting(beta=0.75, m=3, V=5.0, eta=0.7, alpha=None):
    sig = None if alpha is None else BinaryReviews(alpha)
    return Setting(binary_prior(), BinaryReviews(beta), AuthorModel(V, eta, sig), m)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
