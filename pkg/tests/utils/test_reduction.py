import numpy as np
import pytest
from unittest.mock import MagicMock, patch

from app.utils.reduction import BLOCK_SIZE, map_blocks, pairwise_sum


@pytest.fixture
def mock_settings():
    with patch("app.utils.reduction.get_settings") as mock:
        mock.return_value = MagicMock(THREADS=1)
        yield mock


def test_pairwise_sum_reduces_the_leading_axis():
    values = np.arange(12, dtype=float).reshape(4, 3)
    np.testing.assert_array_equal(pairwise_sum(values), values.sum(axis=0))
    assert float(pairwise_sum(np.ones(1000))) == 1000.0


def test_map_blocks_defaults_to_settings_threads(mock_settings):
    blocks = map_blocks(lambda part: (part.start, part.stop), 2 * BLOCK_SIZE + 5)
    assert blocks == [(0, BLOCK_SIZE), (BLOCK_SIZE, 2 * BLOCK_SIZE), (2 * BLOCK_SIZE, 2 * BLOCK_SIZE + 5)]
    mock_settings.assert_called_once()


def test_map_blocks_keeps_order_across_threads(mock_settings):
    data = np.random.default_rng(3).normal(size=10 * 97)

    def block(part):
        return data[part] * 2.0

    serial = np.concatenate(map_blocks(block, data.size, threads=1, block_size=97))
    threaded = np.concatenate(map_blocks(block, data.size, threads=4, block_size=97))
    np.testing.assert_array_equal(serial, threaded)
    assert float(pairwise_sum(serial)) == float(pairwise_sum(threaded))


def test_map_blocks_empty_range(mock_settings):
    assert map_blocks(lambda part: part, 0) == []
