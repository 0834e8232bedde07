"""
Social force dynamics with goal attraction and isotropic exponential
repulsion between agents (no walls, no obstacles).

Per agent i the acceleration is::

    (v0_i * e_i - v_i) / tau + sum over j != i of A * exp((2 r - d_ij) / B) * n_ij

with e_i the unit vector toward the goal, d_ij the distance to agent j
and n_ij the unit vector from j to i. Velocities are capped at
``speed_cap_factor`` times the desired speed.
"""

import logging

import numpy as np
from monty.json import MSONable

from crowdcast.core.exceptions import ConfigError, NumericsError

logger = logging.getLogger(__name__)


class ForceConfig(MSONable):
    """
    Parameters of the social force model.

    Attributes:
        desired_speed (float): mean desired walking speed, m/s
        relaxation_time (float): tau, s
        repulsion_strength (float): A, m/s^2
        repulsion_range (float): B, m
        agent_radius (float): r, m
        dt (float): integration step, s (at most 0.4)
        speed_cap_factor (float): speed cap relative to desired speed
        arrival_radius (float): agents slow down linearly inside this
            distance to their goal, m
        bounds (float): half-width of the square area templates place
            agents and goals in, m
    """

    def __init__(self, desired_speed=1.34, relaxation_time=0.5, repulsion_strength=25.0,
                 repulsion_range=0.1, agent_radius=0.3, dt=0.04, speed_cap_factor=1.3,
                 arrival_radius=1.0, bounds=20.0):
        self.desired_speed = float(desired_speed)
        self.relaxation_time = float(relaxation_time)
        self.repulsion_strength = float(repulsion_strength)
        self.repulsion_range = float(repulsion_range)
        self.agent_radius = float(agent_radius)
        self.dt = float(dt)
        self.speed_cap_factor = float(speed_cap_factor)
        self.arrival_radius = float(arrival_radius)
        self.bounds = float(bounds)
        for name in ("desired_speed", "relaxation_time", "repulsion_range", "agent_radius", "dt",
                     "arrival_radius", "bounds"):
            if not getattr(self, name) > 0:
                raise ConfigError("{} must be positive, got {}".format(name, getattr(self, name)))
        if self.repulsion_strength < 0:
            raise ConfigError("repulsion_strength must not be negative, got {}".format(
                self.repulsion_strength))
        if self.dt > 0.4:
            raise ConfigError("dt must be at most 0.4 s, got {}".format(self.dt))
        if self.speed_cap_factor < 1:
            raise ConfigError("speed_cap_factor must be at least 1, got {}".format(
                self.speed_cap_factor))


class AgentState(object):
    """
    Positions, velocities, goals and desired speeds of all agents.
    """

    def __init__(self, positions, velocities, goals, desired_speeds):
        self.positions = np.array(positions, dtype=np.float64).reshape(-1, 2)
        n = len(self.positions)
        self.velocities = np.array(velocities, dtype=np.float64).reshape(n, 2)
        self.goals = np.array(goals, dtype=np.float64).reshape(n, 2)
        self.desired_speeds = np.broadcast_to(
            np.asarray(desired_speeds, dtype=np.float64), (n,)).copy()

    @property
    def n_agents(self):
        return len(self.positions)

    def speeds(self):
        return np.hypot(self.velocities[:, 0], self.velocities[:, 1])


def goal_force(state, config):
    """Relaxation toward the desired velocity."""
    to_goal = state.goals - state.positions
    dist = np.hypot(to_goal[:, 0], to_goal[:, 1])
    direction = np.zeros_like(to_goal)
    moving = dist > 0
    direction[moving] = to_goal[moving] / dist[moving, np.newaxis]
    speed = state.desired_speeds * np.minimum(1.0, dist / config.arrival_radius)
    return (speed[:, np.newaxis] * direction - state.velocities) / config.relaxation_time


def repulsion_force(positions, config):
    """Sum of pairwise exponential repulsions on every agent."""
    if config.repulsion_strength == 0 or len(positions) < 2:
        return np.zeros_like(positions)
    delta = positions[:, np.newaxis, :] - positions[np.newaxis, :, :]
    dist = np.hypot(delta[..., 0], delta[..., 1])
    np.fill_diagonal(dist, np.inf)
    magnitude = config.repulsion_strength * np.exp(
        (2 * config.agent_radius - dist) / config.repulsion_range)
    unit = np.divide(delta, dist[..., np.newaxis], out=np.zeros_like(delta),
                     where=np.isfinite(dist)[..., np.newaxis] & (dist[..., np.newaxis] > 0))
    return np.sum(magnitude[..., np.newaxis] * unit, axis=1)


def social_force_step(state, config, dt=None):
    """
    Advances all agents by one semi-implicit Euler step.

    Args:
        state (AgentState): current state
        config (ForceConfig): model parameters
        dt (float): step in seconds, ``config.dt`` by default

    Returns:
        AgentState: next state

    Raises:
        NumericsError: the state is or becomes non-finite
    """
    dt = config.dt if dt is None else dt
    if not dt > 0:
        raise ConfigError("dt must be positive, got {}".format(dt))
    if not (np.all(np.isfinite(state.positions)) and np.all(np.isfinite(state.velocities))):
        raise NumericsError("social force state holds non-finite values")
    acceleration = goal_force(state, config) + repulsion_force(state.positions, config)
    velocities = state.velocities + dt * acceleration
    cap = config.speed_cap_factor * state.desired_speeds
    speeds = np.hypot(velocities[:, 0], velocities[:, 1])
    scale = np.where(speeds > cap, cap / np.where(speeds > 0, speeds, 1.0), 1.0)
    velocities = velocities * scale[:, np.newaxis]
    positions = state.positions + dt * velocities
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
        raise NumericsError("social force step produced non-finite values")
    return AgentState(positions, velocities, state.goals, state.desired_speeds)


def rollout(state, config, n_frames, frame_interval=0.4):
    """
    Integrates the dynamics and records positions every
    ``frame_interval`` seconds, starting with the initial state.

    Args:
        state (AgentState): initial state
        config (ForceConfig): model parameters
        n_frames (int): recorded frames
        frame_interval (float): seconds between recorded frames

    Returns:
        (np.ndarray, float): positions [n_frames, n, 2] and the largest
        speed seen during integration
    """
    substeps = frame_interval / config.dt
    if abs(substeps - round(substeps)) > 1e-9 or round(substeps) < 1:
        raise ConfigError("frame interval {} is not a multiple of dt {}".format(
            frame_interval, config.dt))
    substeps = int(round(substeps))
    frames = np.empty((n_frames, state.n_agents, 2))
    max_speed = float(np.max(state.speeds(), initial=0.0))
    for frame in range(n_frames):
        frames[frame] = state.positions
        if frame == n_frames - 1:
            break
        for _ in range(substeps):
            state = social_force_step(state, config)
            max_speed = max(max_speed, float(np.max(state.speeds(), initial=0.0)))
    return frames, max_speed
