"""Domain randomization: per-episode physical perturbations and per-step
observation noise, one row per entry of the randomization table. Disabling
the whole block turns every operator into the identity."""

from dataclasses import dataclass, field

import numpy as np

N_JOINTS = 12


def _default_rows():
    # (low, high) supports; operators are fixed per row
    return {
        "payload_mass": (-1.0, 3.0),  # kg, additive on the trunk
        "hip_mass": (-0.5, 0.5),  # kg, additive on each hip
        "ground_friction": (0.3, 1.25),  # multiplicative
        "gravity_offset": (-1.0, 1.0),  # m/s^2, additive on g_z
        "noise_joint_pos": (-0.01, 0.01),  # rad, additive
        "noise_joint_vel": (-1.5, 1.5),  # rad/s, additive
        "noise_lin_vel": (-0.1, 0.1),  # m/s, additive
        "noise_ang_vel": (-0.2, 0.2),  # rad/s, additive
        "noise_gravity": (-0.05, 0.05),  # additive on the projected gravity
        "system_delay": (0.0, 15.0),  # ms, additive
        "kp_scale": (0.8, 1.3),  # multiplicative, per joint
        "kd_scale": (0.5, 1.5),  # multiplicative, per joint
        "motor_strength": (0.9, 1.1),  # multiplicative, per joint
    }


@dataclass
class DomainRandomizationConfig:
    rows: dict = field(default_factory=_default_rows)

    def __post_init__(self):
        merged = _default_rows()
        for name, bounds in self.rows.items():
            if name not in merged:
                raise ValueError(f"unknown randomization row {name!r}")
            merged[name] = (float(bounds[0]), float(bounds[1]))
        self.rows = merged

    def support(self, name):
        return self.rows[name]


@dataclass
class EpisodeRandomization:
    """One episode's sampled physical parameters (identity when disabled)."""

    payload_mass: float
    hip_mass_deltas: np.ndarray  # (4,)
    friction_scale: float
    gravity_offset: float
    delay_ms: float
    kp_scale: np.ndarray  # (12,)
    kd_scale: np.ndarray
    motor_strength: np.ndarray

    @property
    def mass_deltas(self):
        """Privileged-state layout: trunk payload followed by the hip deltas."""
        return np.concatenate([[self.payload_mass], self.hip_mass_deltas])

    def delay_substeps(self, dt_physics):
        return int(self.delay_ms / 1000.0 / dt_physics)

    @staticmethod
    def identity() -> "EpisodeRandomization":
        return EpisodeRandomization(
            payload_mass=0.0,
            hip_mass_deltas=np.zeros(4),
            friction_scale=1.0,
            gravity_offset=0.0,
            delay_ms=0.0,
            kp_scale=np.ones(N_JOINTS),
            kd_scale=np.ones(N_JOINTS),
            motor_strength=np.ones(N_JOINTS),
        )


def sample_episode(cfg: DomainRandomizationConfig, rng, enabled=True) -> EpisodeRandomization:
    if not enabled:
        return EpisodeRandomization.identity()
    u = lambda name, size=None: rng.uniform(*cfg.rows[name], size)
    return EpisodeRandomization(
        payload_mass=float(u("payload_mass")),
        hip_mass_deltas=u("hip_mass", 4),
        friction_scale=float(u("ground_friction")),
        gravity_offset=float(u("gravity_offset")),
        delay_ms=float(u("system_delay")),
        kp_scale=u("kp_scale", N_JOINTS),
        kd_scale=u("kd_scale", N_JOINTS),
        motor_strength=u("motor_strength", N_JOINTS),
    )


def sample_observation_noise(cfg: DomainRandomizationConfig, rng, enabled=True):
    """Per-step additive noise for the five noisy observation blocks."""
    if not enabled:
        return {
            "joint_pos": np.zeros(N_JOINTS),
            "joint_vel": np.zeros(N_JOINTS),
            "lin_vel": np.zeros(3),
            "ang_vel": np.zeros(3),
            "gravity": np.zeros(3),
        }
    return {
        "joint_pos": rng.uniform(*cfg.rows["noise_joint_pos"], N_JOINTS),
        "joint_vel": rng.uniform(*cfg.rows["noise_joint_vel"], N_JOINTS),
        "lin_vel": rng.uniform(*cfg.rows["noise_lin_vel"], 3),
        "ang_vel": rng.uniform(*cfg.rows["noise_ang_vel"], 3),
        "gravity": rng.uniform(*cfg.rows["noise_gravity"], 3),
    }
