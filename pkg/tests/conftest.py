"""Shared random-model and random-matrix helpers for the test suite."""

import numpy as np
import pytest

from sqrtkf import ModelParams

PARAM_FIELDS = ("a", "b", "u_sqrt", "v_sqrt", "x0", "s0")


def rel_err(actual, expected):
    return float(np.linalg.norm(actual - expected) / (1.0 + np.linalg.norm(expected)))


def random_rank_matrix(rng, n, k, r):
    """Random n x k matrix of exact rank r with nonzero singular values in
    [0.5, 2] (well away from the pinv rank cutoff) and random orientation."""
    u = np.linalg.qr(rng.standard_normal((n, n)))[0]
    v = np.linalg.qr(rng.standard_normal((k, k)))[0][:, :n]
    s = np.zeros(n)
    s[:r] = rng.uniform(0.5, 2.0, r)
    return u @ np.diag(s) @ v.T


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def random_stable_model(rng, d_x, d_y, u_rank=None, v_rank=None):
    """Random model with spectral radius of A below 1; u_sqrt/v_sqrt can be
    forced rank-deficient via u_rank/v_rank."""
    a = rng.standard_normal((d_x, d_x))
    a *= rng.uniform(0.3, 0.9) / max(abs(np.linalg.eigvals(a)))
    u_rank = d_x if u_rank is None else u_rank
    v_rank = d_y if v_rank is None else v_rank
    u_sqrt = 0.3 * rng.standard_normal((d_x, u_rank)) @ rng.standard_normal((u_rank, d_x))
    v_sqrt = 0.3 * rng.standard_normal((d_y, v_rank)) @ rng.standard_normal((v_rank, d_y))
    return ModelParams(
        a=a,
        b=rng.standard_normal((d_y, d_x)),
        u_sqrt=u_sqrt,
        v_sqrt=v_sqrt,
        x0=rng.standard_normal((d_x, 1)),
        s0=rng.standard_normal((d_x, d_x)),
    )


def simulate_observations(rng, params, horizon):
    x = params.x0 + params.s0 @ rng.standard_normal((params.d_x, 1))
    ys = []
    for _ in range(horizon):
        x = params.a @ x + params.u_sqrt @ rng.standard_normal((params.d_x, 1))
        ys.append(params.b @ x + params.v_sqrt @ rng.standard_normal((params.d_y, 1)))
    return ys


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
