"""Incremental schedules: p and lambda updates, traces, and guess hooks."""

import numpy as np
import pytest

from inctpv import (
    DegenerateObjectiveError,
    GaussianBlurOperator,
    IdentityOperator,
    IncrementalConfig,
    IncrementalTrace,
    IrConfig,
    identity_guess,
    inc_dg,
    inc_tpv,
    ir_solve,
    oracle_blend_guess,
    update_lambda,
    update_p,
)


def _problem(side=16, seed=40):
    rng = np.random.default_rng(seed)
    gt = np.zeros((side, side))
    gt[4:12, 5:13] = 0.7
    K = IdentityOperator((side, side))
    y = gt + 0.02 * rng.standard_normal((side, side))
    return K, y


class TestUpdates:
    def test_p_sequence(self):
        p = 1.0
        seen = [p]
        for _ in range(3):
            p = update_p(p, 0.5)
            seen.append(p)
        assert seen == [1.0, 0.5, 0.25, 0.125]

    def test_p_validation(self):
        with pytest.raises(ValueError):
            update_p(1.0, 1.0)
        with pytest.raises(ValueError):
            update_p(0.0, 0.5)

    def test_lambda_first_step_halves(self):
        assert update_lambda(0, 0.5, 123.0, 456.0, 0.5) == 0.25

    def test_lambda_ratio_rule(self):
        assert update_lambda(2, 0.2, 50.0, 100.0, 0.5) == pytest.approx(0.1)

    def test_lambda_needs_positive_previous_objective(self):
        with pytest.raises(DegenerateObjectiveError):
            update_lambda(1, 0.2, 1.0, 0.0, 0.5)


class TestConfig:
    def test_scheduler_coercion(self):
        cfg = IncrementalConfig(scheduler=[3.0, 2.0], alpha_p=0.5, lambda0=1.0)
        assert cfg.scheduler == (3, 2)
        assert cfg.H == 2

    def test_validation(self):
        with pytest.raises(ValueError):
            IncrementalConfig(scheduler=[-1], alpha_p=0.5, lambda0=1.0)
        with pytest.raises(ValueError):
            IncrementalConfig(scheduler=[1], alpha_p=1.0, lambda0=1.0)
        with pytest.raises(ValueError):
            IncrementalConfig(scheduler=[1], alpha_p=0.5, lambda0=0.0)
        with pytest.raises(ValueError):
            IncrementalConfig(scheduler=[1], alpha_p=0.5, lambda0=1.0, p0=2.0)


class TestIncTpv:
    def test_schedule_is_exact(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[2, 2, 2, 2], alpha_p=0.5, lambda0=0.5,
                                k_cp=2)
        _, trace = inc_tpv(K, y, y, cfg)
        assert trace.p_values == [1.0, 0.5, 0.25, 0.125]
        assert trace.lambda_values[0] == 0.5
        assert trace.lambda_values[1] == 0.25

    def test_six_step_exponent_chain(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[1] * 6, alpha_p=0.7, lambda0=0.01,
                                k_cp=1)
        _, trace = inc_tpv(K, y, y, cfg)
        assert trace.p_values[5] == 0.7 ** 5

    def test_single_step_equals_plain_reweighting(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[12], alpha_p=0.5, lambda0=0.3)
        x_inc, trace = inc_tpv(K, y, y, cfg)
        ir = IrConfig(p=1.0, lam=0.3, k_ir=12, k_cp=5)
        x_ir, count = ir_solve(K, y, y, ir)
        assert np.array_equal(x_inc, x_ir)
        assert trace.total_cp_iters == count

    def test_empty_scheduler_returns_clamped_start(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[], alpha_p=0.5, lambda0=0.5)
        x, trace = inc_tpv(K, y - 0.5, y - 0.5, cfg)
        assert np.array_equal(x, np.maximum(y - 0.5, 0.0))
        assert trace.steps == []
        assert trace.f_init > 0.0

    def test_budget_cap(self):
        K, y = _problem()
        sched = [7, 3, 11]
        cfg = IncrementalConfig(scheduler=sched, alpha_p=0.5, lambda0=0.5,
                                k_cp=5, tau_x=1e-300, tau_f=1e-300)
        _, trace = inc_tpv(K, y, y, cfg)
        for step, budget in zip(trace.steps, sched):
            assert budget <= step.cp_iters <= budget + cfg.k_cp - 1

    def test_reproducible(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[4, 4], alpha_p=0.5, lambda0=0.5)
        a, _ = inc_tpv(K, y, y, cfg)
        b, _ = inc_tpv(K, y, y, cfg)
        assert np.array_equal(a, b)

    def test_snapshots_cover_every_step(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[2, 2, 2], alpha_p=0.5, lambda0=0.5)
        x, trace = inc_tpv(K, y, y, cfg, keep_snapshots=True)
        assert len(trace.snapshots) == 4
        assert np.array_equal(trace.snapshots[0], np.maximum(y, 0.0))
        assert np.array_equal(trace.snapshots[-1], x)


class TestIncDg:
    def test_identity_guesses_match_inc_tpv_bitwise(self):
        K, y = _problem(seed=41)
        cfg = IncrementalConfig(scheduler=[3, 3, 3], alpha_p=0.5, lambda0=0.5)
        a, _ = inc_tpv(K, y, y, cfg)
        b, _ = inc_dg(K, y, y, cfg, [identity_guess()] * 3)
        assert np.array_equal(a, b)

    def test_zero_budgets_compose_the_guesses(self):
        K, y = _problem(seed=42)
        target = np.full_like(y, 0.6)
        cfg = IncrementalConfig(scheduler=[0, 0], alpha_p=0.5, lambda0=0.5)
        x, trace = inc_dg(K, y, y, cfg, [oracle_blend_guess(target, 0.5)] * 2)
        start = np.maximum(y, 0.0)
        expected = np.maximum(
            0.5 * np.maximum(0.5 * start + 0.5 * target, 0.0) + 0.5 * target, 0.0)
        assert np.array_equal(x, expected)
        assert trace.total_cp_iters == 0

    def test_guess_count_must_match_schedule(self):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[1, 1], alpha_p=0.5, lambda0=0.5)
        with pytest.raises(ValueError):
            inc_dg(K, y, y, cfg, [identity_guess()])

    def test_degenerate_stop_when_objective_hits_zero(self):
        side = 8
        K = IdentityOperator((side, side))
        y = np.full((side, side), 0.4)

        class Perfect:
            descriptor = "perfect"

            def apply(self, x):
                return y.copy()

        cfg = IncrementalConfig(scheduler=[0, 0, 0], alpha_p=0.5, lambda0=0.5)
        start = y + 0.1
        x, trace = inc_dg(K, y, start, cfg,
                          [identity_guess(), Perfect(), identity_guess()])
        assert trace.degenerate_stop
        assert len(trace.steps) == 2
        assert np.array_equal(x, y)

    def test_zero_previous_objective_raises(self):
        side = 8
        K = IdentityOperator((side, side))
        y = np.full((side, side), 0.4)
        cfg = IncrementalConfig(scheduler=[0, 0, 0], alpha_p=0.5, lambda0=0.5)
        with pytest.raises(DegenerateObjectiveError):
            inc_dg(K, y, y, cfg, [identity_guess()] * 3)

    def test_guess_shape_violation_is_an_error(self):
        K, y = _problem()

        class Bad:
            descriptor = "bad"

            def apply(self, x):
                return x[:4, :4]

        cfg = IncrementalConfig(scheduler=[1], alpha_p=0.5, lambda0=0.5)
        with pytest.raises(ValueError):
            inc_dg(K, y, y, cfg, [Bad()])


class TestTraceIo:
    def test_jsonl_roundtrip(self, tmp_path):
        K, y = _problem()
        cfg = IncrementalConfig(scheduler=[2, 2], alpha_p=0.5, lambda0=0.5)
        _, trace = inc_tpv(K, y, y, cfg)
        path = tmp_path / "trace.jsonl"
        trace.to_jsonl(path)
        back = IncrementalTrace.from_jsonl(path)
        assert back.f_init == trace.f_init
        assert back.degenerate_stop == trace.degenerate_stop
        assert [s.__dict__ for s in back.steps] == [s.__dict__ for s in trace.steps]
