import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from models_rewards import SolverConfig  # noqa: E402
from models_utility import UtilitySpec  # noqa: E402
from utils_solver import RewardSolver  # noqa: E402

STRICTLY_CONCAVE = {
    "power": UtilitySpec.power(0.5),
    "negpow_ext": UtilitySpec.neg_power(1.0, extended=True, epsilon=0.1),
    "log": UtilitySpec.log(),
    "logsigmoid": UtilitySpec.log_sigmoid(1.0),
}


@pytest.fixture
def solver():
    return RewardSolver(SolverConfig())


@pytest.fixture(params=sorted(STRICTLY_CONCAVE))
def concave_utility(request):
    return STRICTLY_CONCAVE[request.param]


@pytest.fixture(params=sorted(STRICTLY_CONCAVE) + ["linear"])
def any_utility(request):
    if request.param == "linear":
        return UtilitySpec.linear()
    return STRICTLY_CONCAVE[request.param]
