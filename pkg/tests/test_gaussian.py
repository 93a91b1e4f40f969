import math

import numpy as np
import pytest

from mixgraph.gaussian import GaussianField, nll, sample, split_raw, to_absolute
from mixgraph.tensor import Tape, Tensor, grad_check


def field(mu, sigma, rho):
    return GaussianField(Tensor(mu), Tensor(sigma), Tensor(rho))


def density_oracle(x, y, mx, my, sx, sy, r):
    zx, zy = (x - mx) / sx, (y - my) / sy
    q = (zx * zx - 2 * r * zx * zy + zy * zy) / (1 - r * r)
    return math.exp(-q / 2) / (2 * math.pi * sx * sy * math.sqrt(1 - r * r))


class TestSplit:
    def test_zero_raw(self):
        f = split_raw(Tensor(np.zeros((1, 1, 5))))
        assert f.sigma.data.tolist() == [[[1.0, 1.0]]] and f.rho.data.tolist() == [[0.0]]

    def test_clamp(self):
        raw = np.zeros((1, 1, 5))
        raw[0, 0, 2] = 50.0
        assert split_raw(Tensor(raw)).sigma.data[0, 0, 0] == math.exp(10.0)

    def test_bounds_on_random_draws(self, rng):
        raw = rng.normal(scale=30.0, size=(10_000, 1, 5))
        f = split_raw(Tensor(raw))
        assert (f.sigma.data > 0).all()
        assert (np.abs(f.rho.data) < 1).all() and (np.abs(f.rho.data) <= 1 - 1e-6).all()
        assert f.sigma.data.min() >= math.exp(-10) and f.sigma.data.max() <= math.exp(10)

    def test_non_finite_rejected(self):
        raw = np.zeros((2, 3, 5))
        raw[1, 2, 4] = np.nan
        with pytest.raises(FloatingPointError, match=r"\(1, 2, 4\)"):
            split_raw(Tensor(raw))


class TestNll:
    def test_at_mean(self):
        f = field([[[0.5, -1.0]]], [[[1.0, 1.0]]], [[0.0]])
        assert abs(nll(f, [[[0.5, -1.0]]]).item() - math.log(2 * math.pi)) < 1e-12

    def test_additive(self):
        f = field([[[0.0, 0.0], [1.0, 1.0]]], np.ones((1, 2, 2)), [[0.0, 0.0]])
        assert abs(nll(f, [[[0.0, 0.0], [1.0, 1.0]]]).item() - 2 * math.log(2 * math.pi)) < 1e-12

    def test_density_oracle(self, rng):
        mu = rng.normal(size=(4, 3, 2))
        sigma = rng.uniform(0.2, 3.0, size=(4, 3, 2))
        rho = rng.uniform(-0.95, 0.95, size=(4, 3))
        target = mu + rng.normal(size=mu.shape)
        expected = -sum(
            math.log(density_oracle(*target[t, i], *mu[t, i], *sigma[t, i], rho[t, i]))
            for t in range(4)
            for i in range(3)
        )
        assert abs(nll(field(mu, sigma, rho), target).item() - expected) < 1e-10

    def test_stationary_at_mean(self, rng):
        mu = Tensor(rng.normal(size=(3, 2, 2)), requires_grad=True)
        f = GaussianField(mu, Tensor(rng.uniform(0.5, 2, size=(3, 2, 2))), Tensor(rng.uniform(-0.5, 0.5, size=(3, 2))))
        with Tape() as tape:
            loss = nll(f, mu.data.copy())
        tape.backward(loss)
        assert np.abs(mu.grad).max() < 1e-9

    def test_permutation_invariant(self, rng):
        mu, sigma = rng.normal(size=(4, 5, 2)), rng.uniform(0.5, 2, size=(4, 5, 2))
        rho, target = rng.uniform(-0.9, 0.9, size=(4, 5)), rng.normal(size=(4, 5, 2))
        perm = [3, 0, 4, 1, 2]
        a = nll(field(mu, sigma, rho), target).item()
        b = nll(field(mu[:, perm], sigma[:, perm], rho[:, perm]), target[:, perm]).item()
        assert abs(a - b) < 1e-10

    def test_gradients_through_split(self, rng):
        raw = Tensor(rng.normal(size=(3, 2, 5)), requires_grad=True)
        target = rng.normal(size=(3, 2, 2))
        assert grad_check(lambda: nll(split_raw(raw), target), [raw]) < 1e-6


class TestSample:
    def test_vanishing_variance(self, rng):
        mu = rng.normal(size=(12, 3, 2))
        f = field(mu, np.full((12, 3, 2), math.exp(-10)), np.zeros((12, 3)))
        assert np.abs(sample(f, 50, seed=0) - mu).max() < 1e-3

    def test_seeded(self):
        f = field(np.zeros((2, 2, 2)), np.ones((2, 2, 2)), np.zeros((2, 2)))
        assert np.array_equal(sample(f, 5, seed=3), sample(f, 5, seed=3))
        assert not np.array_equal(sample(f, 5, seed=3), sample(f, 5, seed=4))

    def test_shape(self):
        f = field(np.zeros((12, 4, 2)), np.ones((12, 4, 2)), np.zeros((12, 4)))
        assert sample(f, 20, seed=0).shape == (20, 12, 4, 2)

    def test_moments(self):
        f = field([[[1.0, 2.0]]], [[[0.5, 2.0]]], [[0.6]])
        draws = sample(f, 200_000, seed=11)[:, 0, 0]
        mean = draws.mean(axis=0)
        cov = np.cov(draws.T)
        np.testing.assert_allclose(mean, [1.0, 2.0], rtol=0.01)
        np.testing.assert_allclose(cov, [[0.25, 0.6], [0.6, 4.0]], rtol=0.02)


class TestToAbsolute:
    def test_zero(self, rng):
        last = rng.normal(size=(3, 2))
        assert np.array_equal(to_absolute(np.zeros((12, 3, 2)), last), np.broadcast_to(last, (12, 3, 2)))

    def test_constant_step(self):
        out = to_absolute(np.tile([1.0, 0.0], (12, 2, 1)), np.array([[0.0, 0.0], [5.0, 5.0]]))
        assert out[:, 1, 0].tolist() == [5.0 + t + 1 for t in range(12)]

    def test_round_trip_with_samples(self, rng):
        disp = rng.normal(size=(7, 12, 3, 2))
        last = rng.normal(size=(3, 2))
        absolute = to_absolute(disp, last)
        recovered = np.diff(np.concatenate([np.broadcast_to(last, (7, 1, 3, 2)), absolute], axis=1), axis=1)
        np.testing.assert_allclose(recovered, disp, atol=1e-12)
