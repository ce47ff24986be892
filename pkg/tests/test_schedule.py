"""Schedule construction, invariants, and the continuous-time extension."""

import numpy as np
import pytest

from diffbridge.schedule import linear_schedule, state_coordinate


class TestLinearSchedule:
    def test_single_step(self):
        s = linear_schedule(1, 0.1, 0.1)
        np.testing.assert_allclose(s.betas, [0.1])
        np.testing.assert_allclose(s.alpha_bars, [1.0, 0.9])

    def test_two_steps(self):
        s = linear_schedule(2, 0.1, 0.3)
        np.testing.assert_allclose(s.alpha_bars, [1.0, 0.9, 0.9 * 0.7])

    def test_default_terminal_product_matches_extended_precision_oracle(self):
        """Brute-force product loop at 50-digit precision, frozen value.

        Oracle (mpmath, dps=50):
            prod over t of (1 - (1e-4 + (0.02 - 1e-4) * (t-1)/999))
              = 4.0358297653756833e-05
        """
        s = linear_schedule(1000, 1e-4, 0.02)
        assert s.alpha_bars[1000] == pytest.approx(4.0358297653756833e-05, rel=1e-12)

        # Re-run the oracle loop here in double precision as a cross-check
        # of the stored cumulative product (sequential, same order).
        prod = 1.0
        for t in range(1, 1001):
            beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999
            prod *= 1.0 - beta
        assert s.alpha_bars[1000] == pytest.approx(prod, rel=1e-13)

    def test_stored_products_chain_exactly(self):
        s = linear_schedule(50, 1e-3, 0.1)
        for t in range(1, 51):
            assert s.alpha_bars[t] == s.alpha_bars[t - 1] * s.alphas[t - 1]

    def test_monotone_and_consistent(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            steps = int(rng.integers(1, 400))
            b0 = float(rng.uniform(1e-5, 0.01))
            b1 = float(rng.uniform(b0, 0.5))
            s = linear_schedule(steps, b0, b1)
            assert np.all(np.diff(s.alpha_bars) < 0)
            assert s.alpha_bars[0] == 1.0
            assert np.all(s.betas > 0) and np.all(s.betas < 1)
            root_signal = np.sqrt(s.alpha_bars[1:])
            root_noise = np.sqrt(1.0 - s.alpha_bars[1:])
            for arr in (root_signal, root_noise):
                assert np.all(np.isfinite(arr)) and np.all(arr > 0)

    @pytest.mark.parametrize(
        "steps,b0,b1",
        [
            (0, 1e-4, 0.02),
            (10, 0.0, 0.02),
            (10, 0.02, 1e-4),
            (10, 1e-4, 1.0),
            (10, np.nan, 0.02),
            (10, 1e-4, np.inf),
            (10, -0.1, 0.02),
        ],
    )
    def test_rejects_bad_parameters(self, steps, b0, b1):
        with pytest.raises(ValueError):
            linear_schedule(steps, b0, b1)

    def test_tables_immutable(self):
        s = linear_schedule(10)
        with pytest.raises(ValueError):
            s.betas[0] = 0.5


class TestStateCoordinate:
    def test_endpoints_and_interior(self):
        s = linear_schedule(1000)
        assert state_coordinate(0, s) == 0.0
        assert state_coordinate(1000, s) == 1.0
        assert state_coordinate(350, s) == 0.35

    def test_rejects_out_of_range(self):
        s = linear_schedule(100)
        for t in (-1, 101):
            with pytest.raises(ValueError):
                state_coordinate(t, s)


class TestContinuousExtension:
    def test_matches_table_at_knots(self):
        s = linear_schedule(200, 1e-4, 0.05)
        for t in (0, 1, 77, 200):
            assert s.alpha_bar_at(t / 200) == pytest.approx(s.alpha_bars[t], rel=1e-14)
        assert s.alpha_bar_at(0.0) == 1.0

    def test_monotone_between_knots(self):
        s = linear_schedule(100)
        grid = np.linspace(0.0, 1.0, 1717)
        vals = s.alpha_bar_at(grid)
        assert np.all(np.diff(vals) < 0)

    def test_noise_rate_is_log_derivative(self):
        s = linear_schedule(100)
        h = 1e-7
        for u in (0.1, 0.33333, 0.5, 0.9):
            fd = (np.log(s.alpha_bar_at(u + h)) - np.log(s.alpha_bar_at(u - h))) / (2 * h)
            assert s.noise_rate_at(u) == pytest.approx(-fd, rel=1e-5)

    def test_rejects_out_of_range_time(self):
        s = linear_schedule(10)
        for u in (-0.01, 1.01):
            with pytest.raises(ValueError):
                s.alpha_bar_at(u)
