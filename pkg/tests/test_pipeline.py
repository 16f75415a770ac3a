import logging

import numpy as np
import pytest

from adaptive_onebit.core import DimensionError, RngStream, effective_sparsity, gaussian_matrix
from adaptive_onebit.dictionaries import (
    SparseSignalSpec,
    exact_sparse_signal,
    identity_dictionary,
    random_support,
    random_tight_dictionary,
)
from adaptive_onebit.pipeline import (
    MeasurementEnsemble,
    RecoveryConfig,
    SamplingRecord,
    adaptive_recover,
    adaptive_sample,
    hdtg,
    load_record,
    one_bit_measure,
    residual_sparsity,
    save_record,
    ssr,
)
from adaptive_onebit.solvers import SolverParams

log = logging.getLogger(__name__)


def problem(seed, n=16, N=24, s=14, m=1200):
    root = RngStream(seed)
    D = random_tight_dictionary(n, N, root.child(1))
    f = exact_sparse_signal(D, SparseSignalSpec(random_support(N, s, root.child(2)), root.child(3)))
    A = gaussian_matrix(m, n, root.child(4))
    return D, f, A, 2.0 * np.linalg.norm(f), s, root.child(5)


def budget_ok(D, est, s, r):
    return np.abs(D.analysis(est)).sum() <= np.sqrt(s) * r + 1e-6


# -- containers -----------------------------------------------------------


def test_ensemble_blocks():
    A = np.arange(22.0).reshape(11, 2)
    ens = MeasurementEnsemble(A, 3)
    assert ens.q == 3 and ens.m == 11 and ens.n == 2
    np.testing.assert_array_equal(ens.block(1), A[0:3])
    np.testing.assert_array_equal(ens.block(3), A[6:9])  # rows 9, 10 unused
    with pytest.raises(IndexError):
        ens.block(4)
    with pytest.raises(ValueError):
        MeasurementEnsemble(np.ones((2, 2)), 3)
    with pytest.raises(ValueError):
        MeasurementEnsemble(np.ones((2, 2)), 0)


def test_recovery_config_schedule():
    cfg = RecoveryConfig(r=4.0, s=9, T=3, dither_scale_multiplier=0.5)
    assert [cfg.radius(i) for i in (1, 2, 3)] == [4.0, 2.0, 1.0]
    assert [cfg.sigma(i) for i in (1, 2, 3)] == [2.0, 1.0, 0.5]
    assert cfg.budget == 12.0
    for bad in [dict(r=0, s=1, T=1), dict(r=1, s=0, T=1), dict(r=1, s=1, T=0),
                dict(r=1, s=1, T=1, dither_scale_multiplier=-1)]:  # fmt: skip
        with pytest.raises(ValueError):
            RecoveryConfig(**bad)


def test_sampling_record_validation():
    SamplingRecord(np.ones((2, 3)), np.zeros((2, 3)), 1.0, 1, 2)
    with pytest.raises(ValueError):
        SamplingRecord(np.zeros((2, 3)), np.zeros((2, 3)), 1.0, 1, 2)
    with pytest.raises(DimensionError):
        SamplingRecord(np.ones((2, 3)), np.zeros((2, 3)), 1.0, 1, 3)
    with pytest.raises(DimensionError):
        SamplingRecord(np.ones((2, 3)), np.zeros((2, 4)), 1.0, 1, 2)


# -- HDTG and measurement -------------------------------------------------


def test_hdtg_zero_dither():
    A = gaussian_matrix(5, 3, RngStream(1))
    phi, tau = hdtg(A, 5, 0.0, np.zeros(3), RngStream(2))
    assert not phi.any() and not tau.any()
    f_hat = np.array([0.3, -1.0, 2.0])
    phi, _ = hdtg(A, 5, 0.0, f_hat, RngStream(2))
    np.testing.assert_array_equal(phi, A @ f_hat)


def test_hdtg_dither_variance():
    # chi-square 4-sigma bounds for q = 10^4 draws with sigma = 2
    A = np.zeros((10_000, 1))
    _, tau = hdtg(A, 10_000, 2.0, np.zeros(1), RngStream(3))
    assert 3.77 < tau.var(ddof=1) < 4.23


def test_hdtg_validation():
    with pytest.raises(DimensionError):
        hdtg(np.ones((4, 2)), 3, 1.0, np.zeros(2), RngStream(0))
    with pytest.raises(ValueError):
        hdtg(np.ones((3, 2)), 3, -1.0, np.zeros(2), RngStream(0))


def test_one_bit_measure_examples():
    np.testing.assert_array_equal(one_bit_measure(np.eye(2), [1.0, -2.0], [0.0, 0.0]), [1, -1])
    np.testing.assert_array_equal(one_bit_measure([[1.0, 1.0]], [1.0, 1.0], [3.0]), [-1])
    A = gaussian_matrix(6, 3, RngStream(4))
    f = np.array([1.0, 2.0, -1.0])
    np.testing.assert_array_equal(one_bit_measure(A, f, A @ f), np.ones(6))
    with pytest.raises(DimensionError):
        one_bit_measure(A, f, np.zeros(5))


def test_residual_substitution_identity():
    g = RngStream(5).generator()
    for _ in range(200):
        A = g.standard_normal((20, 4))
        f, prev = g.standard_normal(4), g.standard_normal(4)
        tau = g.standard_normal(20)
        np.testing.assert_array_equal(one_bit_measure(A, f, A @ prev + tau), one_bit_measure(A, f - prev, tau))


# -- single stage ---------------------------------------------------------


def test_ssr_single_stage_identity_dictionary():
    n, s = 10, 2
    m = int(50 * s * np.log(n))
    root = RngStream(6)
    f = np.zeros(n)
    f[[1, 7]] = root.child(1).generator().standard_normal(2) + 2.0
    r = 2.0 * np.linalg.norm(f)
    A = gaussian_matrix(m, n, root.child(2))
    phi, tau = hdtg(A, m, r, np.zeros(n), root.child(3))
    bits = one_bit_measure(A, f, phi)
    f1, report = ssr(A, identity_dictionary(n), bits, tau, np.zeros(n), 100.0 * r, s, r)
    assert not report.failed
    assert np.linalg.norm(f - f1) / np.linalg.norm(f) < 0.2
    assert np.abs(f1).sum() <= np.sqrt(s) * r + 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_ssr_never_worse_than_input(seed):
    D, f, A, r, s, stream = problem(seed)
    prev = f + 0.1 * r * stream.child(9).generator().standard_normal(f.size) / np.sqrt(f.size)
    radius = 0.5 * r
    assert np.linalg.norm(f - prev) <= radius
    A1 = A[:400]
    phi, tau = hdtg(A1, 400, radius, prev, stream)
    bits = one_bit_measure(A1, f, phi)
    f1, report = ssr(A1, D, bits, phi - A1 @ prev, prev, radius, s, r)
    assert not report.failed
    assert np.linalg.norm(f - f1) <= np.linalg.norm(f - prev)
    assert budget_ok(D, f1, s, r)


# -- adaptive sampling / recovery ------------------------------------------


def test_single_stage_reduction():
    D, f, A, r, s, stream = problem(10)
    record, trace = adaptive_sample(MeasurementEnsemble(A, 1), f, D, r, s, 1, stream)
    phi, tau = hdtg(A, A.shape[0], r, np.zeros(f.size), stream.child(1))
    f1, _ = ssr(A, D, one_bit_measure(A, f, phi), tau, np.zeros(f.size), r, s, r)
    np.testing.assert_array_equal(record.thresholds[0], phi)
    np.testing.assert_array_equal(trace.final, f1)


def test_sampling_is_deterministic_and_recovery_replays_exactly():
    D, f, A, r, s, stream = problem(11)
    ens = MeasurementEnsemble(A, 4)
    rec1, tr1 = adaptive_sample(ens, f, D, r, s, 4, stream)
    rec2, _ = adaptive_sample(ens, f, D, r, s, 4, stream)
    assert rec1.bits.tobytes() == rec2.bits.tobytes()
    assert rec1.thresholds.tobytes() == rec2.thresholds.tobytes()
    f_hat, tr = adaptive_recover(ens, D, rec1, r, s, 4)
    assert f_hat.tobytes() == tr1.final.tobytes()
    for a, b in zip(tr.estimates, tr1.estimates):
        assert a.tobytes() == b.tobytes()


def test_record_file_round_trip(tmp_path):
    D, f, A, r, s, stream = problem(12, m=300)
    ens = MeasurementEnsemble(A, 3)
    record, trace = adaptive_sample(ens, f, D, r, s, 3, stream)
    save_record(tmp_path / "rec.txt", record)
    back = load_record(tmp_path / "rec.txt")
    assert back.bits.tobytes() == record.bits.tobytes()
    assert back.thresholds.tobytes() == record.thresholds.tobytes()
    assert (back.r, back.s, back.T) == (r, s, 3)
    f_hat, _ = adaptive_recover(ens, D, back, back.r, back.s, back.T)
    assert f_hat.tobytes() == trace.final.tobytes()


def test_signal_outside_radius_rejected():
    D, f, A, r, s, stream = problem(13, m=100)
    with pytest.raises(ValueError, match="exceeds"):
        adaptive_sample(MeasurementEnsemble(A, 2), f, D, 0.4 * r, s, 2, stream)


def test_mismatched_record_rejected():
    D, f, A, r, s, stream = problem(14, m=300)
    record, _ = adaptive_sample(MeasurementEnsemble(A, 3), f, D, r, s, 3, stream)
    with pytest.raises(DimensionError):
        adaptive_recover(MeasurementEnsemble(A[:150], 3), D, record, r, s, 3)
    with pytest.raises(DimensionError):
        adaptive_recover(MeasurementEnsemble(A, 2), D, record, r, s, 2)
    with pytest.raises(DimensionError):
        adaptive_recover(MeasurementEnsemble(A[:, :4], 3), D, record, r, s, 3)


def test_zero_signal():
    D, _, A, _, s, stream = problem(15)
    f, r, T = np.zeros(D.n), 1.0, 4
    _, trace = adaptive_sample(MeasurementEnsemble(A, T), f, D, r, s, T, stream)
    norms = [np.linalg.norm(e) for e in trace.estimates]
    for i in range(1, T + 1):
        assert norms[i] <= 2.0 ** (1 - i) * r + norms[i - 1]
    # eps calibrated from the first stage, as for nonzero signals
    eps = norms[1] / r
    assert norms[-1] <= 1.5 * eps * r * 2.0 ** (1 - T)


def test_failed_stage_keeps_previous_estimate(caplog):
    D, f, A, r, s, stream = problem(16, m=400)
    params = SolverParams(method="admm", max_iterations=2)
    with caplog.at_level(logging.WARNING):
        _, trace = adaptive_sample(MeasurementEnsemble(A, 2), f, D, r, s, 2, stream, params)
    assert trace.failed
    assert all(st.failed for st in trace.stages)
    assert not trace.final.any()
    assert "keeping previous estimate" in caplog.text


@pytest.mark.parametrize("seed", range(6))
def test_trace_invariants(seed):
    D, f, A, r, s, stream = problem(100 + seed)
    T = 5
    _, trace = adaptive_sample(MeasurementEnsemble(A, T), f, D, r, s, T, stream)
    assert not trace.estimates[0].any()
    assert all(budget_ok(D, est, s, r) for est in trace.estimates)
    for st in trace.stages:
        assert st.solve.violation <= 1e-6
    e = trace.errors(f)
    eps = e[0] / r
    for i in range(2, T + 1):
        assert e[i - 1] <= max(e[i - 2], 1.5 * eps * r * 2.0 ** (1 - i))


def test_residual_sparsity_soft_bound():
    violations = total = 0
    for seed in range(6):
        D, f, A, r, s, stream = problem(200 + seed)
        _, trace = adaptive_sample(MeasurementEnsemble(A, 5), f, D, r, s, 5, stream)
        for i, val in enumerate(residual_sparsity(f, trace, D), 1):
            total += 1
            if val > 4 * s + 1e-9:
                violations += 1
                log.warning("seed %d stage %d: residual effective sparsity %.2f > 4s", seed, i, val)
    assert total == 30
    assert violations == 0


def test_three_stages_beat_one_in_median():
    ratios = []
    for trial in range(50):
        D, f, A, r, s, stream = problem(1000 + trial, m=600)
        errs = []
        for T in (1, 3):
            ens = MeasurementEnsemble(A, T)
            record, _ = adaptive_sample(ens, f, D, r, s, T, stream)
            f_hat, _ = adaptive_recover(ens, D, record, r, s, T)
            errs.append(np.linalg.norm(f - f_hat))
        ratios.append(errs[1] / errs[0])
    assert np.median(ratios) < 1.0


def test_effective_sparsity_of_generated_signals():
    D, f, *_ = problem(17)
    assert effective_sparsity(f, D.matrix) <= 14
