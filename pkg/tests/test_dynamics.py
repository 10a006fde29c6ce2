"""Physics-core tests: closed-form oracles, conservation laws, contact law."""

import numpy as np
import pytest

from vsloco import dynamics as dyn
from vsloco.model import (
    build_quadruped,
    double_pendulum_tree,
    floating_box_tree,
    pendulum_tree,
)

G = 9.81


@pytest.fixture(scope="module")
def quad():
    return build_quadruped()


def pendulum_state(tree, q, qdot=0.0):
    s = dyn.default_state(tree)
    s.q[:] = q
    s.qdot[:] = qdot
    return s


# ---------------------------------------------------------------------------
# forward dynamics oracles


def test_pendulum_matches_closed_form():
    l = 0.5
    tree = pendulum_tree(mass=1.3, length=l)
    s = pendulum_state(tree, 0.3)
    qacc = dyn.forward_dynamics(tree, s, tau=np.zeros(1))
    assert abs(qacc[0] - (-(G / l) * np.sin(0.3))) < 1e-9


def test_pendulum_with_torque():
    # q'' = (tau - m g l sin q) / (m l^2)
    m, l, tau, q0 = 2.0, 0.7, 1.5, -0.4
    tree = pendulum_tree(mass=m, length=l)
    s = pendulum_state(tree, q0)
    qacc = dyn.forward_dynamics(tree, s, tau=np.array([tau]))
    expected = (tau - m * G * l * np.sin(q0)) / (m * l * l)
    assert abs(qacc[0] - expected) < 1e-9


def test_free_floating_trunk_free_fall(quad):
    s = dyn.default_state(quad, q=quad.default_pose, base_pos=(0, 0, 2.0))
    qacc = dyn.forward_dynamics(quad, s, tau=np.zeros(12))
    assert np.allclose(qacc[0:3], [0, 0, -G], atol=1e-12)
    assert np.allclose(qacc[3:6], 0, atol=1e-12)
    assert np.allclose(qacc[6:], 0, atol=1e-10)


def test_linearity_in_torque(quad):
    rng = np.random.default_rng(3)
    s = dyn.default_state(quad, q=quad.default_pose, base_pos=(0, 0, 1.0))
    s.qdot[:] = rng.normal(0, 1, 12)
    s.base_angvel[:] = rng.normal(0, 1, 3)
    t1 = rng.normal(0, 5, 12)
    t2 = rng.normal(0, 5, 12)
    a0 = dyn.forward_dynamics(quad, s, tau=np.zeros(12))
    a1 = dyn.forward_dynamics(quad, s, tau=t1)
    a2 = dyn.forward_dynamics(quad, s, tau=t2)
    a12 = dyn.forward_dynamics(quad, s, tau=t1 + t2)
    assert np.allclose(a12, a1 + a2 - a0, atol=1e-9)


def test_single_joint_torque_sign_flip(quad):
    s = dyn.default_state(quad, q=quad.default_pose, base_pos=(0, 0, 1.0))
    tau = np.zeros(12)
    tau[4] = 3.0
    a_plus = dyn.forward_dynamics(quad, s, tau=tau)
    a_minus = dyn.forward_dynamics(quad, s, tau=-tau)
    a0 = dyn.forward_dynamics(quad, s, tau=np.zeros(12))
    assert np.allclose(a_plus - a0, -(a_minus - a0), atol=1e-9)


def test_two_link_mass_matrix_closed_form():
    # planar 2R chain of point masses: textbook M(q)
    m1, m2, l1, l2 = 1.0, 0.7, 0.6, 0.4
    tree = double_pendulum_tree(m1, m2, l1, l2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        q1, q2 = rng.uniform(-np.pi, np.pi, 2)
        s = dyn.default_state(tree)
        s.q[:] = (q1, q2)
        M = dyn.mass_matrix(tree, s)
        m11 = m1 * l1**2 + m2 * (l1**2 + l2**2 + 2 * l1 * l2 * np.cos(q2))
        m12 = m2 * (l2**2 + l1 * l2 * np.cos(q2))
        m22 = m2 * l2**2
        expected = np.array([[m11, m12], [m12, m22]])
        assert np.allclose(M, expected, atol=1e-9)


def test_kinetic_energy_consistent_with_mass_matrix(quad):
    rng = np.random.default_rng(7)
    s = dyn.default_state(quad, q=quad.default_pose, base_pos=(0, 0, 1.0))
    s.q[:] += rng.normal(0, 0.3, 12)
    s.qdot[:] = rng.normal(0, 2, 12)
    s.base_linvel[:] = rng.normal(0, 1, 3)
    s.base_angvel[:] = rng.normal(0, 1, 3)
    M = dyn.mass_matrix(quad, s)
    v = np.concatenate([s.base_linvel, s.base_angvel, s.qdot])
    ke_m = 0.5 * v @ M @ v
    ct = quad.compiled()
    bs = dyn.BatchState.from_state(s)
    fk = dyn._fk(ct, bs)
    vel = dyn._velocities(ct, bs, fk)
    I_w = dyn._world_inertia(ct, fk)
    ke_b = 0.5 * np.einsum("b,nbi,nbi->", ct.mass, vel["v_c"], vel["v_c"])
    ke_b += 0.5 * np.einsum("nbi,nbij,nbj->", vel["w"], I_w, vel["w"])
    assert abs(ke_m - ke_b) < 1e-9 * max(1.0, ke_b)


def test_spinning_body_angular_momentum_rate_zero():
    # torque-free rigid body: I_w * alpha + w x I_w w = 0 at the acceleration level
    tree = floating_box_tree(gravity=0.0)
    s = dyn.default_state(tree, base_pos=(0, 0, 1.0))
    s.base_angvel[:] = (2.0, -1.0, 0.5)
    qacc = dyn.forward_dynamics(tree, s, tau=np.zeros(0))
    ct = tree.compiled()
    bs = dyn.BatchState.from_state(s)
    fk = dyn._fk(ct, bs)
    I_w = dyn._world_inertia(ct, fk)[0, 0]
    residual = I_w @ qacc[3:6] + np.cross(s.base_angvel, I_w @ s.base_angvel)
    assert np.allclose(residual, 0, atol=1e-10)
    assert np.allclose(qacc[0:3], 0, atol=1e-12)


def test_rejects_non_finite_input(quad):
    s = dyn.default_state(quad, q=quad.default_pose, base_pos=(0, 0, 1.0))
    tau = np.zeros(12)
    tau[3] = np.nan
    with pytest.raises(ValueError, match="tau"):
        dyn.forward_dynamics(quad, s, tau=tau)
    s.qdot[5] = np.inf
    with pytest.raises(ValueError, match="qdot"):
        dyn.forward_dynamics(quad, s, tau=np.zeros(12))


# ---------------------------------------------------------------------------
# integrator properties


def test_pendulum_energy_drift_below_one_percent():
    tree = pendulum_tree(mass=1.0, length=1.0)
    s = pendulum_state(tree, 0.5)
    e0 = dyn.total_energy(tree, s)
    # reference: lowest point of swing sets the energy scale
    e_min = -1.0 * G * 1.0
    scale = e0 - e_min
    worst = 0.0
    for _ in range(5000):
        s = dyn.step(tree, s, tau=np.zeros(1), dt_physics=0.002)
        worst = max(worst, abs(dyn.total_energy(tree, s) - e0))
    assert worst < 0.01 * scale


def test_double_pendulum_energy_drift_below_one_percent():
    tree = double_pendulum_tree()
    s = dyn.default_state(tree)
    s.q[:] = (0.6, 0.4)
    e0 = dyn.total_energy(tree, s)
    e_min = -(1.0 * 0.6 + 0.7 * 1.0) * G
    scale = e0 - e_min
    worst = 0.0
    for _ in range(5000):
        s = dyn.step(tree, s, tau=np.zeros(2), dt_physics=0.002)
        worst = max(worst, abs(dyn.total_energy(tree, s) - e0))
    assert worst < 0.01 * scale


def test_momentum_gains_exactly_gravity_impulse(quad):
    # zero angular/joint rates: velocity-product terms vanish and the
    # per-step momentum change equals m g dt to roundoff
    dt = 0.002
    m_tot = quad.total_mass
    s = dyn.default_state(quad, q=quad.default_pose, base_pos=(0, 0, 3.0))
    s.base_linvel[:] = (0.4, -0.2, 0.1)
    for _ in range(5):
        p_before = dyn.total_linear_momentum(quad, s)
        s2 = dyn.step(quad, s, tau=np.zeros(12), dt_physics=dt)
        p_mid = m_tot * s2.base_linvel + (
            dyn.total_linear_momentum(quad, s2) - m_tot * s2.base_linvel
        )
        delta = p_mid - p_before
        assert np.allclose(delta, [0, 0, -m_tot * G * dt], rtol=0, atol=1e-10)
        s = s2


def test_determinism_bit_identical(quad):
    s0 = dyn.standing_state(quad)
    tau = np.linspace(-3, 3, 12)
    a = dyn.step(quad, s0, tau=tau, dt_physics=0.002)
    b = dyn.step(quad, s0.copy(), tau=tau, dt_physics=0.002)
    for f in ("base_pos", "base_quat", "base_linvel", "base_angvel", "q", "qdot"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_quaternion_norm_preserved(quad):
    s = dyn.standing_state(quad)
    s.base_angvel[:] = (1.0, 2.0, -0.5)
    for _ in range(100):
        s = dyn.step(quad, s, tau=np.zeros(12), dt_physics=0.002)
        assert abs(np.linalg.norm(s.base_quat) - 1.0) < 1e-9


def test_step_rejects_bad_dt(quad):
    s = dyn.standing_state(quad)
    with pytest.raises(ValueError):
        dyn.step(quad, s, tau=np.zeros(12), dt_physics=0.0)
    with pytest.raises(ValueError):
        dyn.step(quad, s, tau=np.zeros(12), dt_physics=0.05)


def test_divergence_flagged():
    tree = pendulum_tree()
    s = pendulum_state(tree, 0.0, qdot=2e4)
    s2 = dyn.step(tree, s, tau=np.zeros(1), dt_physics=0.002)
    assert s2.diverged


def test_quasi_static_stand_drift(quad):
    # settle for 1 s under a stiff PD hold, then drift < 1e-3 m over 1 s
    kp, kd = 150.0, 0.2 * np.sqrt(150.0)
    tau_lim = quad.torque_limits
    s = dyn.standing_state(quad)
    q_ref = quad.default_pose

    def pd_step(state):
        tau = np.clip(kp * (q_ref - state.q) - kd * state.qdot, -tau_lim, tau_lim)
        return dyn.step(quad, state, tau=tau, dt_physics=0.002)

    for _ in range(500):
        s = pd_step(s)
    h_settled = s.base_pos[2]
    for _ in range(500):
        s = pd_step(s)
    assert abs(s.base_pos[2] - h_settled) < 1e-3
    # the settled stance also stays within 2 cm of the nominal height
    assert dyn.standing_state(quad).base_pos[2] - s.base_pos[2] < 0.02


# ---------------------------------------------------------------------------
# contact law


def test_contact_zero_above_floor(quad):
    s = dyn.standing_state(quad)
    s.base_pos[2] += 0.002
    forces = dyn.contact_forces(quad, s, friction_coefficient=1.0)
    assert np.allclose(forces, 0.0)
    flags = dyn.step(quad, s, tau=np.zeros(12), dt_physics=0.001).contact_flags
    # one substep of free fall from 2 mm cannot reach the floor
    assert not flags.any()


def test_contact_penalty_normal_value(quad):
    # static foot penetrating 1 mm with k_n = 30000 -> 30 N normal force
    s = dyn.standing_state(quad)
    s.base_pos[2] -= 0.001
    forces = dyn.contact_forces(quad, s, friction_coefficient=1.0)
    assert np.allclose(forces[:, 2], 30.0, atol=1e-9)
    assert np.allclose(forces[:, :2], 0.0, atol=1e-12)


def test_contact_coulomb_clamp():
    # tangential demand 100 N vs mu * N = 25 N -> clamped to 25 N
    pos = np.array([[[0.0, 0.0, -50.0 / 30000.0]]])
    vel = np.array([[[100.0 / 3000.0, 0.0, 0.0]]])
    cfg = {"normal_stiffness": 30000.0, "normal_damping": 300.0, "tangential_damping": 3000.0}
    f = dyn.contact_force_law(cfg, np.array([0.5]), pos, vel)[0, 0]
    assert abs(f[2] - 50.0) < 1e-9
    assert abs(np.linalg.norm(f[:2]) - 25.0) < 1e-9
    assert f[0] < 0  # opposes sliding


def test_contact_normal_damping_only_on_approach():
    cfg = {"normal_stiffness": 30000.0, "normal_damping": 300.0, "tangential_damping": 3000.0}
    pos = np.array([[[0.0, 0.0, -0.001]]])
    approaching = np.array([[[0.0, 0.0, -0.2]]])
    separating = np.array([[[0.0, 0.0, 0.2]]])
    f_app = dyn.contact_force_law(cfg, np.array([1.0]), pos, approaching)[0, 0, 2]
    f_sep = dyn.contact_force_law(cfg, np.array([1.0]), pos, separating)[0, 0, 2]
    assert abs(f_app - (30.0 + 60.0)) < 1e-9
    assert abs(f_sep - 30.0) < 1e-9
    assert f_sep >= 0.0


# ---------------------------------------------------------------------------
# kinematics


def test_projected_gravity_upright_and_rolled(quad):
    s = dyn.standing_state(quad)
    g = dyn.kinematics(quad, s)["projected_gravity"]
    assert np.allclose(g, [0, 0, -1], atol=1e-12)
    s.base_quat = np.array([np.cos(np.pi / 4), np.sin(np.pi / 4), 0.0, 0.0])  # roll 90 deg
    g = dyn.kinematics(quad, s)["projected_gravity"]
    assert abs(g[2]) < 1e-12
    assert abs(np.linalg.norm(g) - 1.0) < 1e-12


def test_default_stance_com_over_foot_centroid(quad):
    s = dyn.standing_state(quad)
    k = dyn.kinematics(quad, s)
    centroid = k["foot_positions"][:, :2].mean(axis=0)
    assert np.allclose(k["com_position"][:2], centroid, atol=1e-6)


def test_feet_on_floor_in_standing_state(quad):
    s = dyn.standing_state(quad)
    k = dyn.kinematics(quad, s)
    assert np.allclose(k["foot_positions"][:, 2], 0.0, atol=1e-12)
    assert abs(s.base_pos[2] - 0.30694) < 5e-4
