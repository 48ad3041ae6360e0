from dataclasses import replace

import numpy as np
import pytest

import dmssca as dm
from dmssca import noise
from dmssca.engine import _hybrid_z
from dmssca.graphs import mixing_from_matrix
from dmssca.problems import (
    ProblemInstance,
    QuadraticObjective,
    UnboundedSet,
    ZeroRegularizer,
)

CUBIC = dm.make_piecewise_cubic_problem()
W3 = dm.build_mixing_matrix(dm.build_graph("complete", 3), "lazy-uniform", laziness=0.5)
HP_PRESET = dm.HyperParams(alpha=0.8, beta=0.16, mu=5000.0, b0=1, T=200)


def quad(n=4, d=3, seed=5, noise_std=0.6):
    return dm.make_quadratic_consensus_problem(n, d, seed=seed, noise_std=noise_std)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        dm.HyperParams(alpha=0.0, beta=0.5, mu=1.0)
    with pytest.raises(ValueError):
        dm.HyperParams(alpha=0.5, beta=0.0, mu=1.0)
    with pytest.raises(ValueError):
        dm.HyperParams(alpha=0.5, beta=0.5, mu=-1.0)
    with pytest.raises(ValueError):
        dm.HyperParams(alpha=0.5, beta=0.5, mu=1.0, T=0)


def test_initialize_noise_free_equals_expected_gradient():
    p = quad(noise_std=0.0)
    hp = dm.HyperParams(alpha=0.1, beta=0.5, mu=5.0, b0=7, T=10)
    st = dm.initialize(p, hp, np.zeros(p.d), seed=3)
    expected = p.expected_gradients(st.x)
    assert np.allclose(st.z, expected, atol=1e-15)
    assert np.array_equal(st.z, st.y)
    assert st.t == 1


def test_initialize_b0_one_is_a_single_sampled_gradient():
    p = quad()
    hp = dm.HyperParams(alpha=0.1, beta=0.5, mu=5.0, b0=1, T=10)
    st = dm.initialize(p, hp, np.zeros(p.d), seed=9)
    xi = noise.init_batch(9, p.n, p.noise_dim, 1)[0]
    oracle = p.loop_sample_gradients(np.zeros((p.n, p.d)), xi)
    assert np.allclose(st.z, oracle, atol=1e-14)


def test_initialize_rejects_infeasible_start():
    p = dm.make_piecewise_cubic_problem(box_bound=2.25)
    hp = dm.HyperParams(alpha=0.5, beta=0.5, mu=10.0)
    with pytest.raises(dm.engine.InfeasibleStartError):
        dm.initialize(p, hp, np.array([3.0]), seed=0)


def test_step_hand_example():
    # single node, no mixing, mu=2: x_hat = x - y/mu = -1, then x <- x + 0.5*(-2)
    p = ProblemInstance(1, (QuadraticObjective(np.eye(1), np.zeros(1)),),
                        ZeroRegularizer(), UnboundedSet())
    hp = dm.HyperParams(alpha=0.5, beta=1.0, mu=2.0, b0=1, T=1)
    w = mixing_from_matrix(np.array([[1.0]]))
    st = dm.NetworkState(t=1, x=np.array([[1.0]]), z=np.array([[4.0]]),
                         y=np.array([[4.0]]), seed=0)
    nxt = dm.step(st, p, hp, w)
    assert nxt.x_hat[0, 0] == -1.0
    assert nxt.x[0, 0] == 0.0
    assert nxt.t == 2


def test_step_pure_mixing_at_zero_gradient():
    st = dm.NetworkState(t=1, x=np.array([[1.0], [2.0], [3.0]]),
                         z=np.zeros((3, 1)), y=np.zeros((3, 1)), seed=4)
    p = dm.make_quadratic_consensus_problem(3, 1, seed=0, noise_std=0.0)
    hp = dm.HyperParams(alpha=0.7, beta=1.0, mu=3.0, b0=1, T=1)
    nxt = dm.step(st, p, hp, W3)
    assert np.array_equal(nxt.x_hat, st.x)          # zero tracker: stay put
    assert np.allclose(nxt.x, W3.w @ st.x, atol=1e-15)


def test_hybrid_estimator_limits():
    rng = np.random.default_rng(0)
    g_new, g_old, z = rng.standard_normal((3, 4, 2))
    assert np.array_equal(_hybrid_z(g_new, g_old, z, 1.0), g_new)
    assert np.allclose(_hybrid_z(g_new, g_old, z, 0.0), z + g_new - g_old, atol=1e-16)


def test_run_is_deterministic_and_matches_step_loop():
    p = quad()
    hp = dm.HyperParams(alpha=0.05, beta=0.0025, mu=12.0, b0=3, T=6)
    w = dm.build_mixing_matrix(dm.build_graph("ring", p.n), "metropolis")
    out1 = dm.run(p, hp, w, np.zeros(p.d), seed=42, trace_every=1)
    out2 = dm.run(p, hp, w, np.zeros(p.d), seed=42, trace_every=3)
    assert np.array_equal(out1.final_state.x, out2.final_state.x)
    assert out1.selected.t == out2.selected.t
    assert np.array_equal(out1.selected.x_hat, out2.selected.x_hat)

    st = dm.initialize(p, hp, np.zeros(p.d), seed=42)
    for _ in range(hp.T):
        st = dm.step(st, p, hp, w)
    assert np.array_equal(st.x, out1.final_state.x)
    assert np.array_equal(st.y, out1.final_state.y)


def test_run_monitors_and_sfo_accounting():
    p = quad()
    hp = dm.HyperParams(alpha=0.05, beta=0.0025, mu=12.0, b0=4, T=50)
    w = dm.build_mixing_matrix(dm.build_graph("ring", p.n), "metropolis")
    out = dm.run(p, hp, w, np.zeros(p.d), seed=1, trace_every=10)
    n = p.n
    assert out.stats.sfo_paired == n * hp.b0 + 2 * n * hp.T
    assert out.stats.sfo_single == n * hp.b0 + n * hp.T
    assert out.stats.contraction_checks == hp.T - 1
    assert out.stats.tracking_checks == hp.T
    assert out.stats.max_tracking_rel <= 1e-9
    for tr in out.trace:
        assert tr.sfo_calls == n * hp.b0 + 2 * n * (tr.t - 1)
        assert tr.sfo_calls_single == n * hp.b0 + n * (tr.t - 1)


def test_mixing_mean_identity():
    # the network average obeys x_bar+ = x_bar + alpha (xhat_bar - x_bar) exactly
    st = dm.initialize(CUBIC, HP_PRESET, np.array([1.5]), seed=6)
    for _ in range(40):
        nxt = dm.step(st, CUBIC, HP_PRESET, W3)
        lhs = nxt.x.mean(axis=0)
        rhs = st.x.mean(axis=0) + HP_PRESET.alpha * (nxt.x_hat.mean(axis=0) - st.x.mean(axis=0))
        assert np.allclose(lhs, rhs, atol=1e-12)
        st = nxt


def test_feasibility_is_preserved():
    p = dm.make_piecewise_cubic_problem(box_bound=2.25)
    out = dm.run(p, HP_PRESET, W3, np.zeros(1), seed=3, trace_every=1,
                 record_trajectory=True)
    for _t, x in out.trajectory:
        assert np.all(np.abs(x) <= 2.25 + 1e-12)


def test_corollary_schedule_values():
    s = dm.corollary_schedule(1000)
    assert s["alpha"] == pytest.approx(0.1, abs=1e-12)
    assert s["beta"] == pytest.approx(0.01, abs=1e-12)
    assert s["b0"] == 10
    assert dm.corollary_schedule(1) == {"alpha": 1.0, "beta": 1.0, "b0": 1}
    s8 = dm.corollary_schedule(8)
    assert (s8["alpha"], s8["beta"], s8["b0"]) == (0.5, 0.25, 2)
    assert dm.corollary_schedule(27)["b0"] == 3
    hp = dm.HyperParams.corollary1(1000, mu=3.0)
    assert hp.schedule == "corollary1" and hp.beta == hp.alpha**2


def test_stepsize_conditions_lambda_zero():
    hp = dm.HyperParams(alpha=0.004, beta=0.004**2, mu=30.0, T=10)
    rep = dm.check_stepsize_conditions(hp, 0.0, L=2.0, n=3)
    assert rep.mu_min == pytest.approx(6 * np.sqrt(3) * 2.0 / 3)
    assert rep.alpha_max == pytest.approx(min(1 / 116, 30.0 / 12.0))
    assert rep.admissible


def test_stepsize_conditions_lambda_half():
    hp = dm.HyperParams(alpha=0.004, beta=0.004**2, mu=500.0, T=10)
    rep = dm.check_stepsize_conditions(hp, 0.5, L=10.0, n=3)
    # (6 sqrt3 L / n)(1 + 8*0.25/0.75) = 22 sqrt3 L / n ~ 38.105 L / n
    assert rep.mu_min == pytest.approx(22 * np.sqrt(3) * 10.0 / 3, rel=1e-12)
    assert rep.mu_min == pytest.approx(38.10511776651530 * 10.0 / 3, rel=1e-9)


def test_stepsize_conditions_reject_preset_hyperparameters():
    hp = dm.HyperParams(alpha=0.8, beta=0.16, mu=5000.0, T=10)
    rep = dm.check_stepsize_conditions(hp, 0.5, L=1288.0, n=3)
    assert not rep.admissible
    joined = " ".join(rep.violations)
    assert "beta" in joined and "alpha" in joined


def test_output_selection_is_uniform_over_cells():
    n, T = 2, 3
    counts = np.zeros((n, T), dtype=int)
    for seed in range(1800):
        g = noise.stream(seed, noise.TAG_SELECT)
        t = int(g.integers(1, T + 1))
        i = int(g.integers(0, n))
        counts[i, t - 1] += 1
    assert counts.sum() == 1800
    assert np.all(np.abs(counts - 300) <= 80)  # 5 sigma for multinomial(1/6)

    p = quad(n=2, d=1)
    hp = dm.HyperParams(alpha=0.05, beta=0.0025, mu=12.0, b0=1, T=3)
    w = dm.build_mixing_matrix(dm.build_graph("complete", 2), "metropolis")
    out = dm.run(p, hp, w, np.zeros(1), seed=77, trace_every=1)
    g = noise.stream(77, noise.TAG_SELECT)
    assert out.selected.t == int(g.integers(1, 4))
    assert out.selected.node == int(g.integers(0, 2))


def test_single_cell_selection():
    p = quad(n=1, d=1)
    hp = dm.HyperParams(alpha=0.05, beta=0.0025, mu=12.0, b0=1, T=1)
    w = mixing_from_matrix(np.array([[1.0]]))
    out = dm.run(p, hp, w, np.zeros(1), seed=0)
    assert (out.selected.node, out.selected.t) == (0, 1)


def test_dsgt_baseline_is_beta_one():
    p = quad()
    w = dm.build_mixing_matrix(dm.build_graph("ring", p.n), "metropolis")
    hp = dm.HyperParams(alpha=0.05, beta=0.3, mu=12.0, b0=2, T=40)
    a = dm.run(p, hp, w, np.zeros(p.d), seed=5, algorithm="dsgt")
    b = dm.run(p, replace(hp, beta=1.0), w, np.zeros(p.d), seed=5)
    assert np.array_equal(a.final_state.x, b.final_state.x)
    assert np.array_equal(a.final_state.y, b.final_state.y)

    st = dm.initialize(p, hp, np.zeros(p.d), seed=5)
    s_dsgt = dm.baseline_step(st, p, hp, w, "dsgt")
    s_b1 = dm.step(st, p, replace(hp, beta=1.0), w)
    assert np.array_equal(s_dsgt.x, s_b1.x)


def test_prox_dsgd_single_node_is_sgd():
    p = quad(n=1, d=2)
    w = mixing_from_matrix(np.array([[1.0]]))
    hp = dm.HyperParams(alpha=0.05, beta=1.0, mu=1.0, b0=1, T=4)
    out = dm.run(p, hp, w, np.zeros(2), seed=8, algorithm="prox_dsgd",
                 record_trajectory=True, trace_every=1)
    tape = noise.NoiseTape(8, noise.TAG_ITER, 1, 2)
    x = np.zeros((1, 2))
    for t in range(1, 5):
        g = p.loop_sample_gradients(x, tape.row(t))
        x = x - hp.alpha * g
    assert np.allclose(out.final_state.x, x, atol=1e-14)


def test_prox_dsgd_noise_free_stays_near_optimum():
    p = quad(noise_std=0.0)
    w = dm.build_mixing_matrix(dm.build_graph("ring", p.n), "metropolis")
    hp = dm.HyperParams(alpha=0.05, beta=1.0, mu=1.0, b0=1, T=800)
    out = dm.run(p, hp, w, np.zeros(p.d), seed=2, algorithm="prox_dsgd")
    assert np.linalg.norm(out.final_state.x.mean(axis=0) - p.x_star) <= 0.5


def test_monitor_failure_is_detected():
    # a run with a deliberately broken mixing matrix row cannot happen through
    # the public constructors, so corrupt the tracker instead and check the
    # diagnostic monitor flags it (engine-level checks are exercised in runs)
    from dmssca.diagnostics import pathwise_monitor

    st = dm.initialize(CUBIC, HP_PRESET, np.array([0.5]), seed=11)
    nxt = dm.step(st, CUBIC, HP_PRESET, W3)
    rows = pathwise_monitor(st, nxt, HP_PRESET.alpha, W3)
    assert all(r.holds for r in rows)
    nxt.y[0] += 1.0
    rows = pathwise_monitor(st, nxt, HP_PRESET.alpha, W3)
    assert not rows[-1].holds
