import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjlab.experiments import (
    ExperimentConfig,
    FitError,
    InflationReport,
    VerifyParams,
    _csv_cell,
    _jsonable,
    code_version,
    cross_validate_solvers,
    emit_report,
    fit_exponent,
    grad_square_sparse,
    random_field,
    report_to_csv,
    report_to_json,
    run_directory,
    run_highq_inflation,
    run_lowq_inflation,
    semigroup_difference,
    taylor_tail,
    validate_report_json,
    verify_lemma,
)
from hjlab.hj_solver import SolverConfig
from hjlab.littlewood_paley import INF, fourier_l1
from hjlab.spectral_core import FrequencyLattice, SpectralError, SpectralField


class TestFit:
    def test_exact_power_law(self):
        N = np.arange(4, 10)
        fit = fit_exponent(N, 3.0 * N ** -0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit.stderr < 1e-12 and fit.n == 6

    @given(st.floats(-4, 4), st.floats(0.01, 100))
    def test_recovers_any_exponent(self, alpha, C):
        x = np.geomspace(0.05, 0.2, 4)
        assert fit_exponent(x, C * x ** alpha).slope == pytest.approx(alpha, abs=1e-9)

    def test_drops_nonpositive_and_nan(self):
        fit = fit_exponent([1, 2, 4, 8, 16], [1, 2, 4, float("nan"), 0])
        assert fit.n == 3 and fit.slope == pytest.approx(1.0)

    @pytest.mark.parametrize("x, y", [([1, 2], [1, 2]), ([2, 2, 2], [1, 2, 3])])
    def test_errors(self, x, y):
        with pytest.raises(FitError):
            fit_exponent(x, y)


class TestReports:
    def test_jsonable(self):
        assert _jsonable({"a": float("nan"), "b": INF, "c": np.int64(3), "d": (np.float64(0.5),)}) == {
            "a": None,
            "b": "inf",
            "c": 3,
            "d": [0.5],
        }

    @pytest.mark.parametrize("v, s", [(None, ""), (True, "true"), (0.1, "0.1"), (float("nan"), "nan"), (-INF, "-inf"), (7, "7")])
    def test_csv_cell(self, v, s):
        assert _csv_cell(v) == s

    def test_empty_sweep_writes_header_only(self, tmp_path):
        report = InflationReport("highQ", {})
        paths = emit_report(report, tmp_path)
        csv_text = (tmp_path / "report_highQ.csv").read_text()
        assert csv_text.count("\n") == 1 and csv_text.startswith("case,d,q,N,delta")
        doc = json.loads((tmp_path / "report_highQ.json").read_text())
        validate_report_json(doc)
        assert doc["rows"] == [] and len(paths) == 2

    def test_unknown_format(self, tmp_path):
        with pytest.raises(SpectralError):
            emit_report(InflationReport("highQ", {}), tmp_path, formats=("xml",))

    def test_code_version_is_stable(self):
        v = code_version()
        assert len(v) == 64 and v == code_version()

    def test_run_directory(self, tmp_path):
        assert run_directory(tmp_path, flat=True) == tmp_path
        a = run_directory(tmp_path, stamp="x")
        b = run_directory(tmp_path, stamp="x")
        assert a.name == "run-x" and b.name == "run-x-1"


@pytest.fixture(scope="module")
def small_highq():
    cfg = ExperimentConfig("highQ", N=(3, 4, 5), delta=(0.1,), run_solution=True, remainders=False, bmo=False)
    return run_highq_inflation(cfg)


class TestHighQSweep:
    def test_rows_and_fits(self, small_highq):
        r = small_highq
        assert [row["N"] for row in r.rows] == [3, 4, 5]
        assert r.fits["input_N_slope"].slope == pytest.approx(-0.5, abs=1e-3)
        assert r.flags["block_min_ok"] and r.flags["solution_bound_ok"]
        assert all(math.isnan(row["norm_in_bmo"]) for row in r.rows)

    def test_t_is_dyadic(self, small_highq):
        assert [row["t"] for row in small_highq.rows] == [0.125, 0.0625, 0.03125]

    def test_json_validates_and_is_repeatable(self, small_highq):
        doc = report_to_json(small_highq)
        validate_report_json(doc)
        again = run_highq_inflation(ExperimentConfig("highQ", N=(3, 4, 5), run_solution=True, remainders=False, bmo=False))
        assert report_to_csv(again) == report_to_csv(small_highq)

    def test_rejects_small_q(self):
        with pytest.raises(SpectralError, match="q > 2"):
            run_highq_inflation(ExperimentConfig("highQ", N=(3,), q=(2.0,)))

    def test_config_validation(self):
        with pytest.raises(SpectralError):
            ExperimentConfig("medium")
        with pytest.raises(SpectralError):
            ExperimentConfig("highQ", N=())
        assert ExperimentConfig("highQ", N=5).N == (5,)


@pytest.fixture(scope="module")
def lowq_report():
    return run_lowq_inflation(ExperimentConfig("lowQ", N=(16,), delta=(0.05, 0.1, 0.2), q=(1.0,)))


class TestLowQSweep:
    def test_flags(self, lowq_report):
        assert all(lowq_report.flags.values()), lowq_report.flags

    def test_main_term_frozen(self, lowq_report):
        # peak of the same-index pair at x = -2^{j+1} e1, twice for the cross terms:
        # 4 e1^2 (1 - 2^{2j-2N}) chi(0)^2 with e1 = 17/24, j = 8, N = 16, chi(0) = 14
        expected = 4 * (17 / 24) ** 2 * (1 - 2.0 ** -16) * 14 ** 2
        for row in lowq_report.rows:
            assert row["main_normalized"] == pytest.approx(expected, rel=1e-6)
            assert row["i1_relative_error"] < 1e-12

    def test_rejects_family(self):
        with pytest.raises(SpectralError):
            run_lowq_inflation(ExperimentConfig("lowQ", N=(17,), delta=(0.1,), q=(1.0,)))

    def test_zero_input_terms_vanish(self):
        zero = SpectralField.zeros(FrequencyLattice(1, 24, 64))
        g = grad_square_sparse(zero)
        assert g.n_modes == 0
        tail, norm = taylor_tail(g, 1e-3, [2, 3], 1.0)
        assert norm == 0.0 and fourier_l1(tail) == 0.0
        assert fourier_l1(semigroup_difference(zero, 1e-3)) == 0.0


class TestVerifiers:
    def test_random_field_truncation(self):
        big = random_field(FrequencyLattice(1, 4, 32), (1, 2), 32)
        small = random_field(FrequencyLattice(1, 4, 16), (1, 2), 32)
        assert np.array_equal(big.truncate(16).dense_array, small.dense_array)
        assert small.reality_flag and small.coefficient((0,)) == 0
        with pytest.raises(SpectralError):
            random_field(FrequencyLattice(2, 4, 8), (1,), 8)

    def test_bilinear_quick(self):
        r = verify_lemma("2.4", trials=10, params=VerifyParams(K=16))
        assert len(r.rows) == 20
        assert r.flags["scaling_invariant"]
        assert r.summary["ratio_max"] >= r.summary["ratio_median"] > 0

    def test_log_interpolation_quick(self):
        r = verify_lemma("2.6", trials=12, params=VerifyParams(K=16))
        assert r.summary["hs_span_decades"] == pytest.approx(3.0, abs=0.05)
        assert "fitted_C" in r.summary

    @pytest.mark.parametrize("kw", [dict(lemma="2.4", trials=5), dict(lemma="9.9", trials=20)])
    def test_rejects(self, kw):
        with pytest.raises(SpectralError):
            verify_lemma(**kw)


class TestCrossValidation:
    def test_zero_data(self):
        cfg = ExperimentConfig("solve", T=0.05, solver=SolverConfig(T=0.05, steps=32))
        r = cross_validate_solvers(cfg, amplitudes=(0.0,))
        for row in r.rows:
            assert all(row[k] == 0.0 for k in r.columns if k.startswith("gap"))
        assert r.summary["amplitude_scaling"] == []

    def test_amplitude_orders(self):
        cfg = ExperimentConfig("solve", T=0.05, solver=SolverConfig(T=0.05, steps=256))
        r = cross_validate_solvers(cfg, amplitudes=(0.2, 0.1))
        scale = r.summary["amplitude_scaling"][0]
        assert 6.0 < scale["factor_A12"] < 10.0
        assert 12.0 < scale["factor_A123"] < 20.0
        assert 3.5 < r.summary["step_halving"]["factor"] < 4.5

    def test_large_data_rejected(self):
        with pytest.raises(SpectralError, match="small data"):
            cross_validate_solvers(ExperimentConfig("solve"), amplitudes=(2.0,))
