import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cuqds.conformal import StreamRecord
from cuqds.errors import ConfigError, DataError
from cuqds.metrics import (MetricReport, coverage_rate, evaluate_records, gaussian_nll, min_ade,
                           min_fde, miss_rate)

HALF_LOG_2PI = 0.9189385332046727


def _line(J=4):
    return np.column_stack([np.arange(J, dtype=float), np.zeros(J)])


class TestDisplacement:
    def test_perfect_mode(self):
        y = _line()
        assert min_ade(y[None], y, 1) == 0.0
        assert min_fde(y[None], y, 1) == 0.0

    def test_constant_offset(self):
        y = _line()
        assert min_ade((y + [1.0, 0.0])[None], y, 1) == pytest.approx(1.0)

    def test_best_of_two(self):
        y = _line()
        modes = np.stack([y + 7.0, y])
        assert min_ade(modes, y, 2) == 0.0
        assert min_ade(modes, y, 1) > 0.0

    def test_final_345(self):
        y = _line()
        pred = y.copy()
        pred[-1] += [3.0, 4.0]
        assert min_fde(pred[None], y, 1) == pytest.approx(5.0)

    def test_ade_averages_exactly_J_terms(self):
        y = np.zeros((5, 2))
        pred = np.zeros((5, 2))
        pred[2] = [0.0, 5.0]
        assert min_ade(pred[None], y) == pytest.approx(1.0)

    def test_k_larger_than_modes(self):
        with pytest.raises(ConfigError):
            min_ade(_line()[None], _line(), 2)

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(float, (3, 4, 2), elements=st.floats(-50, 50)),
           hnp.arrays(float, (4, 2), elements=st.floats(-50, 50)),
           hnp.arrays(float, (2,), elements=st.floats(-1e3, 1e3)))
    def test_monotone_in_k_and_translation_invariant(self, modes, y, c):
        ades = [min_ade(modes, y, k) for k in (1, 2, 3)]
        fdes = [min_fde(modes, y, k) for k in (1, 2, 3)]
        assert ades[0] >= ades[1] >= ades[2] and fdes[0] >= fdes[1] >= fdes[2] >= 0
        assert min_ade(modes + c, y + c, 2) == pytest.approx(ades[1], rel=1e-9, abs=1e-9)
        assert min_fde(modes + c, y + c, 2) == pytest.approx(fdes[1], rel=1e-9, abs=1e-9)


class TestMissRate:
    def test_all_perfect(self):
        y = _line()
        assert miss_rate([(y[None], y)] * 3) == 0.0

    def test_all_missed(self):
        y = _line()
        pred = y.copy()
        pred[-1] += [3.0, 4.0]
        assert miss_rate([(pred[None], y)] * 4, threshold=2.0) == 1.0

    def test_half(self):
        y = _line()
        near, far = y.copy(), y.copy()
        near[-1] += [1.0, 0.0]
        far[-1] += [3.0, 0.0]
        assert miss_rate([(near[None], y), (far[None], y)] * 3, threshold=2.0) == 0.5


class TestNLL:
    def test_perfect_unit_sigma(self):
        y = np.ones((3, 2))
        assert gaussian_nll(y, y, 1.0) == pytest.approx(HALF_LOG_2PI, abs=1e-12)

    def test_residual_equals_sigma(self):
        s = 0.7
        y = np.full((3, 2), s)
        expected = 0.5 + 0.5 * math.log(2 * math.pi * s * s)
        assert gaussian_nll(y, -0.0 * y, s) == pytest.approx(expected, abs=1e-12)
        assert gaussian_nll(-y, np.zeros((3, 2)), s) == pytest.approx(expected, abs=1e-12)

    def test_minimized_at_residual(self):
        r = 1.3
        y = np.full((2, 2), r)
        grid = np.linspace(0.5, 3.0, 2501)
        vals = [gaussian_nll(y, np.zeros_like(y), s) for s in grid]
        assert grid[int(np.argmin(vals))] == pytest.approx(r, abs=1e-3)


def _record(i, pred, truth, sigma=1.0, error=0):
    return StreamRecord(f"r{i}", i, pred[None], np.ones(1), truth, sigma, 1.0, pred - sigma,
                        pred + sigma, 0.0, error, 1.0)


class TestCoverageAndReport:
    def test_all_covered(self):
        y = _line()
        assert coverage_rate([_record(i, y, y) for i in range(3)]) == 1.0

    def test_empty_is_undefined(self):
        with pytest.raises(DataError):
            coverage_rate([])

    def test_two_record_fixture(self):
        y = _line()
        a = y.copy()
        a[-1] += [3.0, 4.0]            # ADE 5/4, FDE 5
        b = y + [0.0, 1.0]             # ADE 1, FDE 1
        recs = [_record(0, a, y, sigma=1.0, error=1), _record(1, b, y, sigma=2.0, error=0)]
        rep = evaluate_records(recs)
        assert rep.min_ade[1] == pytest.approx((1.25 + 1.0) / 2, abs=1e-9)
        assert rep.min_fde[1] == pytest.approx(3.0, abs=1e-9)
        assert rep.miss_rate[1] == 0.5
        assert rep.coverage == 0.5
        # NLL: per-coordinate means; record a has squared errors 9 + 16 over 8 coords
        nll_a = 0.5 * 25 / 8 + 0.5 * math.log(2 * math.pi)
        nll_b = 0.5 * (4 * 0.25) / 8 + 0.5 * math.log(2 * math.pi * 4)
        assert rep.nll == pytest.approx((nll_a + nll_b) / 2, abs=1e-9)

    def test_report_formats(self):
        rep = MetricReport(count=2, min_ade={1: 0.5}, min_fde={1: 1.0}, miss_rate={1: 0.0},
                           nll=0.25, coverage=1.0)
        text = rep.to_text()
        assert "minADE_1 = 0.5\n" in text and "CR = 1.0\n" in text
        assert rep.to_json_line().endswith("\n")
