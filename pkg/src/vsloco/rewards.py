"""Reward stack: 18 per-step terms aggregated as sum(r_i * w_i * dt).

The kernel is a pure function of a RewardInputs record so every term can be
hand-checked on constructed transitions; the environment assembles the
record from simulator state. All vector "squares" are squared Euclidean
norms, matching the printed reward table.
"""

from dataclasses import dataclass, field

import numpy as np

REWARD_TERMS = (
    "lin_vel_tracking",
    "ang_vel_tracking",
    "lin_vel_z",
    "ang_vel_xy",
    "orientation",
    "feet_air_time",
    "joint_acc",
    "joint_power",
    "power_distribution",
    "foot_slip",
    "action_rate",
    "foot_clearance",
    "center_of_mass",
    "joint_tracking",
    "base_height",
    "hip",
    "collisions",
    "termination",
)

DEFAULT_WEIGHTS = {
    "lin_vel_tracking": 1.5,
    "ang_vel_tracking": 0.8,
    "lin_vel_z": -2.0,
    "ang_vel_xy": -0.05,
    "orientation": -5.0,
    "feet_air_time": 0.2,
    "joint_acc": -2.5e-7,
    "joint_power": -2e-5,
    "power_distribution": -1e-5,
    "foot_slip": -0.1,
    "action_rate": -0.01,
    "foot_clearance": -0.1,
    "center_of_mass": -1.0,
    "joint_tracking": -0.1,
    "base_height": -0.6,
    "hip": 0.05,
    "collisions": -10.0,
    "termination": -10.0,
}

HIP_JOINT_INDICES = np.array([0, 3, 6, 9])


@dataclass
class RewardWeights:
    values: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        unknown = set(self.values) - set(REWARD_TERMS)
        if unknown:
            raise ValueError(f"unknown reward terms: {sorted(unknown)}")
        merged = dict(DEFAULT_WEIGHTS)
        merged.update(self.values)
        self.values = merged

    def as_array(self):
        return np.array([self.values[t] for t in REWARD_TERMS])


@dataclass
class RewardParams:
    """Targets and thresholds the reward table leaves symbolic."""

    base_height_target: float = 0.30
    foot_clearance_target: float = 0.08
    air_time_offset: float = 0.1
    command_deadband: float = 0.1
    foot_contact_height: float = 0.01


@dataclass
class RewardInputs:
    """Everything the 18 terms need, batched over a leading env axis."""

    v_cmd_xy: np.ndarray  # (N, 2)
    omega_cmd: np.ndarray  # (N,)
    v_base: np.ndarray  # (N, 3) base frame
    omega_base: np.ndarray  # (N, 3) base frame
    proj_gravity: np.ndarray  # (N, 3)
    touchdown_air_times: np.ndarray  # (N, 4) air time of feet landing this step
    qddot: np.ndarray  # (N, 12)
    tau: np.ndarray  # (N, 12)
    qdot: np.ndarray  # (N, 12)
    action: np.ndarray  # (N, adim)
    prev_action: np.ndarray
    foot_heights: np.ndarray  # (N, 4)
    foot_vel_xy: np.ndarray  # (N, 4, 2)
    foot_xy: np.ndarray  # (N, 4, 2)
    com_xy: np.ndarray  # (N, 2)
    q_target: np.ndarray  # (N, 12)
    q_next: np.ndarray  # (N, 12)
    base_height: np.ndarray  # (N,)
    q_hip: np.ndarray  # (N, 4)
    q_hip_default: np.ndarray  # (4,) or (N, 4)
    n_collisions: np.ndarray  # (N,)
    terminated: np.ndarray  # (N,) bool


@dataclass
class RewardBreakdown:
    terms: dict  # name -> (N,) unweighted r_i
    weighted: dict  # name -> (N,) w_i * r_i * dt
    total: np.ndarray  # (N,)

    def term_matrix(self):
        return np.stack([self.terms[t] for t in REWARD_TERMS], axis=-1)


def compute_reward_terms(
    x: RewardInputs, weights: RewardWeights, dt: float, params: RewardParams = None
) -> RewardBreakdown:
    params = params or RewardParams()
    r = {}
    lin_err = np.sum((x.v_cmd_xy - x.v_base[:, :2]) ** 2, axis=-1)
    r["lin_vel_tracking"] = np.exp(-4.0 * lin_err)
    r["ang_vel_tracking"] = np.exp(-4.0 * (x.omega_cmd - x.omega_base[:, 2]) ** 2)
    r["lin_vel_z"] = x.v_base[:, 2] ** 2
    r["ang_vel_xy"] = np.sum(x.omega_base[:, :2] ** 2, axis=-1)
    r["orientation"] = np.sum(x.proj_gravity[:, :2] ** 2, axis=-1)
    moving = np.linalg.norm(x.v_cmd_xy, axis=-1) > params.command_deadband
    landed = x.touchdown_air_times > 0.0
    r["feet_air_time"] = moving * np.sum(
        np.where(landed, x.touchdown_air_times - params.air_time_offset, 0.0), axis=-1
    )
    r["joint_acc"] = np.sum(x.qddot**2, axis=-1)
    power = np.abs(x.tau) * np.abs(x.qdot)
    r["joint_power"] = np.sum(power, axis=-1)
    r["power_distribution"] = np.var(power, axis=-1)
    slipping = x.foot_heights < params.foot_contact_height
    r["foot_slip"] = np.sum(np.sum(x.foot_vel_xy**2, axis=-1) * slipping, axis=-1)
    r["action_rate"] = np.sum((x.action - x.prev_action) ** 2, axis=-1)
    foot_speed = np.linalg.norm(x.foot_vel_xy, axis=-1)
    r["foot_clearance"] = np.sum(
        (params.foot_clearance_target - x.foot_heights) ** 2 * foot_speed, axis=-1
    )
    centroid = np.mean(x.foot_xy, axis=1)
    r["center_of_mass"] = np.sum((x.com_xy - centroid) ** 2, axis=-1)
    r["joint_tracking"] = np.sum((x.q_target - x.q_next) ** 2, axis=-1)
    r["base_height"] = (params.base_height_target - x.base_height) ** 2
    hip_err = np.sum((x.q_hip - x.q_hip_default) ** 2, axis=-1)
    r["hip"] = np.exp(-4.0 * hip_err)
    r["collisions"] = np.asarray(x.n_collisions, dtype=float)
    r["termination"] = np.asarray(x.terminated, dtype=float)

    w = weights.values
    weighted = {t: r[t] * w[t] * dt for t in REWARD_TERMS}
    total = np.sum(np.stack([weighted[t] for t in REWARD_TERMS], axis=-1), axis=-1)
    return RewardBreakdown(terms=r, weighted=weighted, total=total)
