import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def indicator_cell_averages(intervals, n):
    """Exact cell averages of an indicator of a union of disjoint intervals."""
    edges = np.arange(n + 1) / n
    left, right = edges[:-1], edges[1:]
    vals = np.zeros(n)
    for a, b in intervals:
        vals += np.clip(np.minimum(right, b) - np.maximum(left, a), 0.0, None)
    return vals * n


def fit_loglog_slope(x, y):
    """Plain least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    lx = lx - lx.mean()
    return float((lx @ (ly - ly.mean())) / (lx @ lx))
