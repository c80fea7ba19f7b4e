import pytest

from informativity.data import BlockMatrices


@pytest.fixture
def two_state_example():
    """Two states, one input, T = 2: not enough data to identify, but enough to stabilize."""
    return BlockMatrices.from_states([[1, 0.5, -0.25], [0, 1, 1]], [[-1, -1]])


@pytest.fixture
def shift_register_example():
    """Impulse response of a two-state chain; the consistent set is a companion family."""
    return BlockMatrices.from_states([[0, 1, 0], [0, 0, 1]], [[1, 0]])


@pytest.fixture
def one_step_example():
    """x(0) = 0, u(0) = 1, x(1) = 1: every (a, 1) explains the data."""
    return BlockMatrices.from_states([[0, 1]], [[1]])
