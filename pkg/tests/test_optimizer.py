import numpy as np
import pytest

from rsma_vlc.channel import ChannelMatrix, Fixture
from rsma_vlc.optimizer import (
    AoConfig,
    NumericalFailure,
    ao_solve,
    epsilon_from_snr,
    grid_oracle,
    mmse_equalizer,
    mse_and_weight,
    project_rows_l1,
    snapshot_state,
    solve_subproblem,
    zf_precoder,
)
from rsma_vlc.signal_model import Precoder, build_layout, rate, sinr_common, sinr_private


def channel(gains, noise=None):
    g = np.array(gains, dtype=float)
    n = np.ones(g.shape[0]) if noise is None else np.array(noise, dtype=float)
    return ChannelMatrix(gains=g, noise=n)


def random_channel(rng, k=2, l=2):
    return channel(rng.uniform(0.1, 1.0, size=(k, l)))


class TestEpsilonFromSnr:
    def test_reference_points(self):
        assert epsilon_from_snr(0.0, 1.0) == pytest.approx(1.0)
        assert epsilon_from_snr(40.0, 1.0) == pytest.approx(100.0)
        assert epsilon_from_snr(20.0, 2.0) == pytest.approx(20.0)

    def test_reference_gain_rescales(self):
        assert epsilon_from_snr(40.0, 1.0, reference_gain=0.02) == pytest.approx(5000.0)

    def test_fixture_enables_drive_cap(self):
        fx = Fixture(position=(0, 0, 4.0), dc_bias=0.4, max_drive=1.0)
        assert epsilon_from_snr(40.0, 1.0, fixture=fx) == pytest.approx(0.4)
        assert epsilon_from_snr(-20.0, 1.0, fixture=fx) == pytest.approx(0.1)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            epsilon_from_snr(10.0, 0.0)


class TestEqualizerAndWeights:
    def test_zero_column_gives_zero_gain(self):
        ch = channel([[1.0, 0.0], [0.0, 1.0]])
        lay = build_layout("sdma", 2, ch)
        p = Precoder(matrix=np.zeros((2, 2)))
        assert mmse_equalizer(ch, p, lay, 0, 0) == 0.0
        mse, u = mse_and_weight(ch, p, lay, 0.0, 0, 0)
        assert mse == 1.0 and u == 1.0

    def test_single_stream_half_gain(self):
        ch = channel([[1.0, 0.0]])
        lay = build_layout("sdma", 1, ch)
        p = Precoder(matrix=np.array([[1.0], [0.0]]))
        assert mmse_equalizer(ch, p, lay, 0, 0) == pytest.approx(0.5, rel=1e-14)

    def test_unit_sinr_gives_half_mse(self):
        ch = channel([[1.0, 0.0]])
        lay = build_layout("sdma", 1, ch)
        p = Precoder(matrix=np.array([[1.0], [0.0]]))
        g = mmse_equalizer(ch, p, lay, 0, 0)
        mse, u = mse_and_weight(ch, p, lay, g, 0, 0)
        assert mse == pytest.approx(0.5, rel=1e-12)
        assert u == pytest.approx(2.0, rel=1e-12)

    def test_equalizer_is_stage_mse_minimizer(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            ch = random_channel(rng)
            lay = build_layout("rsma", 2, ch)
            p = Precoder(matrix=rng.normal(size=(2, 3)))
            for user, stream in ((0, 0), (1, 1), (0, 2), (1, 2)):
                g = mmse_equalizer(ch, p, lay, user, stream)
                amps = ch.gains[user] @ p.matrix
                if stream == 2:
                    total = ch.noise[user] + amps[2] ** 2 + amps[0] ** 2 + amps[1] ** 2
                else:
                    total = ch.noise[user] + amps[0] ** 2 + amps[1] ** 2
                mse = lambda gg: gg * gg * total - 2 * gg * amps[stream] + 1.0
                assert mse(g) <= mse(g + 1e-3) + 1e-15
                assert mse(g) <= mse(g - 1e-3) + 1e-15

    def test_neg_log_mse_equals_rate(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            ch = random_channel(rng)
            lay = build_layout("rsma", 2, ch)
            p = Precoder(matrix=rng.normal(size=(2, 3)))
            for user in (0, 1):
                g = mmse_equalizer(ch, p, lay, user, user)
                mse, _ = mse_and_weight(ch, p, lay, g, user, user)
                assert -np.log2(mse) == pytest.approx(rate(sinr_private(ch, p, lay, user)), abs=1e-9)
                gc = mmse_equalizer(ch, p, lay, user, 2)
                mse_c, _ = mse_and_weight(ch, p, lay, gc, user, 2)
                assert -np.log2(mse_c) == pytest.approx(rate(sinr_common(ch, p, lay, user)), abs=1e-9)

    def test_state_rate_identity(self):
        # -sum_k w_k log2(mse) over streams reproduces the greedy-share WSR
        rng = np.random.default_rng(4)
        for _ in range(10):
            ch = random_channel(rng)
            lay = build_layout("rsma", 2, ch)
            P = rng.normal(size=(2, 3))
            w = np.array([0.5, 0.5])
            st = snapshot_state(ch, lay, w, P)
            priv = -np.log2(1.0 / st.mse_weights["private"])
            common = -np.log2(1.0 / st.mse_weights["common"])
            wsr_from_mse = float(w @ priv) + max(w) * float(np.min(common))
            from rsma_vlc.signal_model import assemble_report

            rep = assemble_report(ch, Precoder(matrix=P), lay, weights=w)
            assert wsr_from_mse == pytest.approx(rep.wsr, abs=1e-9)


class TestProjection:
    def test_rows_inside_ball_untouched(self):
        P = np.array([[0.5, -0.3], [0.1, 0.0]])
        out = project_rows_l1(P, 1.0)
        assert np.array_equal(out, P)

    def test_known_projection(self):
        out = project_rows_l1(np.array([[3.0, 1.0]]), 2.0)
        assert np.allclose(out, [[2.0, 0.0]])
        out = project_rows_l1(np.array([[2.0, 2.0]]), 2.0)
        assert np.allclose(out, [[1.0, 1.0]])

    def test_signs_preserved(self):
        out = project_rows_l1(np.array([[-3.0, 1.0]]), 2.0)
        assert np.allclose(out, [[-2.0, 0.0]])

    def test_feasibility_random(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            P = rng.normal(scale=3.0, size=(4, 3))
            r = rng.uniform(0.1, 2.0)
            out = project_rows_l1(P, r)
            assert np.abs(out).sum(axis=1).max() <= r + 1e-12

    def test_projection_optimality(self):
        # projected point beats random feasible points in euclidean distance
        rng = np.random.default_rng(6)
        v = np.array([[1.7, -2.3, 0.4]])
        proj = project_rows_l1(v, 1.5)
        for _ in range(200):
            q = rng.normal(size=(1, 3))
            q = q / np.abs(q).sum() * 1.5 * rng.uniform(0, 1)
            assert np.linalg.norm(v - proj) <= np.linalg.norm(v - q) + 1e-12

    def test_zero_radius(self):
        assert np.all(project_rows_l1(np.ones((2, 3)), 0.0) == 0.0)


class TestSubproblem:
    def _state(self, ch, lay, P):
        st = snapshot_state(ch, lay, (0.5,) * ch.num_users, P)
        return st.equalizers, st.mse_weights

    def test_zero_budget_returns_origin(self):
        ch = channel([[1.0, 0.2], [0.2, 1.0]])
        lay = build_layout("rsma", 2, ch)
        eq, uw = self._state(ch, lay, np.ones((2, 3)))
        P, shares = solve_subproblem(ch, lay, eq, uw, (0.5, 0.5), epsilon=0.0)
        assert np.all(P == 0.0)
        assert np.all(shares == 0.0)

    def test_scalar_closed_form(self):
        # one fixture, one user, one stream: quadratic in p with known optimum
        ch = channel([[0.8]])
        lay = build_layout("sdma", 1, ch)
        for p_prev, eps in ((0.4, 10.0), (0.9, 0.5)):
            st = snapshot_state(ch, lay, (1.0,), np.array([[p_prev]]))
            g = float(st.equalizers["private"][0])
            # argmin of g^2 (h p)^2 - 2 g h p is p = 1/(g h), clipped to the budget
            expected = np.clip(1.0 / (g * 0.8), -eps, eps)
            P, _ = solve_subproblem(
                ch, lay, st.equalizers, st.mse_weights, (1.0,), epsilon=eps,
                start=np.array([[p_prev]]), max_iter=4000, tol=1e-14,
            )
            assert P[0, 0] == pytest.approx(float(expected), abs=1e-6)

    def test_result_always_feasible(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            ch = random_channel(rng)
            lay = build_layout("rsma", 2, ch)
            eps = rng.uniform(0.5, 20.0)
            eq, uw = self._state(ch, lay, rng.normal(size=(2, 3)))
            P, shares = solve_subproblem(ch, lay, eq, uw, (0.5, 0.5), epsilon=eps)
            assert np.abs(P).sum(axis=1).max() <= eps + 1e-9
            assert np.all(shares >= 0.0)

    def test_non_finite_state_raises(self):
        ch = channel([[1.0, 0.2], [0.2, 1.0]])
        lay = build_layout("sdma", 2, ch)
        eq = {"private": np.array([np.inf, 1.0]), "common": np.array([])}
        uw = {"private": np.array([1.0, 1.0]), "common": np.array([])}
        with pytest.raises(NumericalFailure):
            solve_subproblem(ch, lay, eq, uw, (0.5, 0.5), epsilon=1.0)


class TestZfPrecoder:
    def test_diagonal_channel_gives_diagonal_precoder(self):
        ch = channel([[1.0, 0.0], [0.0, 0.5]])
        P = zf_precoder(ch, 2.0).matrix
        assert abs(P[0, 1]) < 1e-12 and abs(P[1, 0]) < 1e-12
        assert np.abs(P).sum(axis=1).max() == pytest.approx(2.0)

    def test_zero_forcing_property(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            ch = random_channel(rng)
            P = zf_precoder(ch, 1.0).matrix
            cross = ch.gains @ P
            assert abs(cross[0, 1]) < 1e-9 and abs(cross[1, 0]) < 1e-9

    def test_known_pseudo_inverse_directions(self):
        H = np.array([[1.0, 0.3], [0.2, 0.8]])
        ch = channel(H)
        P = zf_precoder(ch, 1.0).matrix
        # hand inverse via the adjugate; columns match up to positive scale
        det = 1.0 * 0.8 - 0.3 * 0.2
        inv = np.array([[0.8, -0.3], [-0.2, 1.0]]) / det
        for j in range(2):
            direction = inv[:, j] / np.linalg.norm(inv[:, j])
            got = P[:, j] / np.linalg.norm(P[:, j])
            assert np.allclose(got, direction, atol=1e-12)

    def test_rank_deficient_falls_back_to_ridge(self):
        ch = channel([[0.6, 0.3], [0.6, 0.3]])  # identical users
        P = zf_precoder(ch, 1.0).matrix
        assert np.all(np.isfinite(P))
        assert np.abs(P).sum(axis=1).max() <= 1.0 + 1e-9


class TestAoSolve:
    def test_zero_budget(self):
        ch = channel([[1.0, 0.2], [0.2, 1.0]])
        lay = build_layout("rsma", 2, ch)
        sol = ao_solve(ch, lay, (0.5, 0.5), AoConfig(epsilon=0.0))
        assert sol.wsr == 0.0
        assert sol.converged
        assert sol.iterations == 1

    def test_monotone_and_feasible(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            ch = random_channel(rng)
            scheme = ("rsma", "sdma", "noma")[int(rng.integers(3))]
            lay = build_layout(scheme, 2, ch)
            eps = float(rng.uniform(1.0, 30.0))
            cfg = AoConfig(epsilon=eps, restarts=2, seed=int(rng.integers(1 << 16)))
            sol = ao_solve(ch, lay, (0.5, 0.5), cfg)
            hist = np.array(sol.wsr_history)
            assert np.all(np.diff(hist) >= -1e-8)
            assert sol.precoder.max_row_l1() <= eps + 1e-9
            assert np.all(sol.shares >= 0.0)
            assert sol.shares.sum() <= sol.report.common_cap + 1e-9

    def test_determinism(self):
        ch = channel([[0.9, 0.4], [0.3, 0.8]])
        lay = build_layout("rsma", 2, ch)
        cfg = AoConfig(epsilon=5.0, seed=123)
        a = ao_solve(ch, lay, (0.5, 0.5), cfg)
        b = ao_solve(ch, lay, (0.5, 0.5), cfg)
        assert np.array_equal(a.precoder.matrix, b.precoder.matrix)
        assert a.wsr == b.wsr
        assert a.wsr_history == b.wsr_history
        assert a.restart_index == b.restart_index

    def test_special_case_dominance(self):
        rng = np.random.default_rng(12)
        for _ in range(6):
            ch = random_channel(rng)
            cfg = AoConfig(epsilon=float(rng.uniform(2.0, 20.0)), seed=int(rng.integers(1 << 16)))
            sols = {
                s: ao_solve(ch, build_layout(s, 2, ch), (0.5, 0.5), cfg)
                for s in ("rsma", "sdma", "noma")
            }
            assert sols["rsma"].wsr >= sols["sdma"].wsr - 1e-9
            assert sols["rsma"].wsr >= sols["noma"].wsr - 1e-9

    def test_report_matches_stored_wsr(self):
        ch = channel([[0.9, 0.4], [0.3, 0.8]])
        lay = build_layout("noma", 2, ch)
        sol = ao_solve(ch, lay, (0.5, 0.5), AoConfig(epsilon=8.0, seed=2))
        assert sol.report.wsr == pytest.approx(sol.wsr_history[-1], abs=1e-9)

    def test_unequal_priorities_respected(self):
        # correlated channel: rates trade off, so the heavy user must win
        ch = channel([[1.0, 0.8], [0.8, 1.0]])
        lay = build_layout("sdma", 2, ch)
        lop = ao_solve(ch, lay, (0.9, 0.1), AoConfig(epsilon=10.0, seed=3))
        assert lop.report.overall[0] > lop.report.overall[1]
        even = ao_solve(ch, lay, (0.5, 0.5), AoConfig(epsilon=10.0, seed=3))
        heavy = ao_solve(ch, lay, (0.9, 0.1), AoConfig(epsilon=10.0, seed=3))
        assert heavy.report.overall[0] >= even.report.overall[0] - 1e-6


class TestGridOracle:
    def test_zero_budget(self):
        ch = channel([[1.0, 0.2], [0.2, 1.0]])
        lay = build_layout("rsma", 2, ch)
        assert grid_oracle(ch, lay, (0.5, 0.5), epsilon=0.0) == 0.0

    def test_dimension_caps(self):
        ch3 = ChannelMatrix(gains=np.full((2, 3), 0.5), noise=np.ones(2))
        lay = build_layout("sdma", 2, ch3)
        with pytest.raises(ValueError):
            grid_oracle(ch3, lay, (0.5, 0.5), epsilon=1.0)
        ch = channel([[1.0, 0.2], [0.2, 1.0]])
        with pytest.raises(ValueError):
            grid_oracle(ch, build_layout("rsma", 2, ch), (0.5, 0.5), epsilon=1.0, resolution=25)

    def test_sdma_diagonal_hand_optimum(self):
        # decoupled rows: all budget on the own-user entry, rates add up
        ch = channel([[1.0, 0.0], [0.0, 0.5]])
        lay = build_layout("sdma", 2, ch)
        eps = 2.0
        expected = 0.5 * np.log2(1 + (1.0 * eps) ** 2) + 0.5 * np.log2(1 + (0.5 * eps) ** 2)
        got = grid_oracle(ch, lay, (0.5, 0.5), epsilon=eps, resolution=21)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_oracle_matches_report_arithmetic(self):
        # the vectorized oracle WSR agrees with assemble_report on grid points
        from rsma_vlc.optimizer import _Compiled, _oracle_wsr_block
        from rsma_vlc.signal_model import assemble_report

        rng = np.random.default_rng(13)
        ch = random_channel(rng)
        lay = build_layout("rsma", 2, ch)
        comp = _Compiled(ch, lay, np.array([0.5, 0.5]))
        for _ in range(20):
            P = rng.uniform(-1, 1, size=(2, 3))
            A = (ch.gains @ P)[None, :, :]
            block = float(_oracle_wsr_block(comp, A)[0])
            rep = assemble_report(ch, Precoder(matrix=P), lay, weights=np.array([0.5, 0.5]))
            assert block == pytest.approx(rep.wsr, abs=1e-12)

    def test_ao_close_to_oracle(self):
        rng = np.random.default_rng(14)
        for scheme in ("rsma", "sdma", "noma"):
            for _ in range(3):
                ch = random_channel(rng)
                lay = build_layout(scheme, 2, ch)
                eps = epsilon_from_snr(15.0, 1.0)
                cfg = AoConfig(epsilon=eps, seed=int(rng.integers(1 << 16)), corner_starts=True)
                sol = ao_solve(ch, lay, (0.5, 0.5), cfg)
                oracle = grid_oracle(ch, lay, (0.5, 0.5), epsilon=eps, resolution=21)
                assert abs(sol.wsr - oracle) <= 0.05 * oracle
