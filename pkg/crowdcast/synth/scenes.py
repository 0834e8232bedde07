"""
Scene templates for synthetic trajectory data: parallel walkers, merging
streams, crossing flows, a walker meeting a group and a dense crowd.

Templates are registered in ``Registry("scene_templates")``; each maps
(n_agents, rng, config) to an initial :class:`AgentState`.
"""

import logging
import os

import numpy as np
from monty.serialization import dumpfn, loadfn

from crowdcast.core.exceptions import ConfigError, InputError
from crowdcast.core.registry import Registry
from crowdcast.dataio.trajectories import TrajectoryDataset, write_trajectories, \
    load_trajectories, DEFAULT_FRAME_RATE
from crowdcast.synth.social_force import AgentState, ForceConfig, rollout

logger = logging.getLogger(__name__)

SCENE_TEMPLATES = Registry("scene_templates")
DEFAULT_N_FRAMES = 40
MANIFEST = "manifest.json"

# lateral distance between side-by-side walkers, m
PARALLEL_SPACING = 1.5
# distance far enough that walkers never arrive within a rollout, m
FAR = 40.0


def _speeds(n, rng, config):
    return np.clip(config.desired_speed + 0.05 * rng.standard_normal(n),
                   0.8 * config.desired_speed, 1.2 * config.desired_speed)


def _heading_velocities(starts, goals, speeds):
    direction = goals - starts
    norm = np.hypot(direction[:, 0], direction[:, 1])
    norm[norm == 0] = 1.0
    return direction / norm[:, np.newaxis] * speeds[:, np.newaxis]


def _state(starts, goals, speeds):
    return AgentState(starts, _heading_velocities(starts, goals, speeds), goals, speeds)


@SCENE_TEMPLATES.register("parallel")
def parallel(n, rng, config):
    """Side-by-side walkers heading the same way."""
    lateral = (np.arange(n) - (n - 1) / 2.0) * PARALLEL_SPACING
    starts = np.column_stack([np.full(n, -FAR / 2) + 0.02 * rng.standard_normal(n), lateral])
    goals = np.column_stack([np.full(n, FAR), lateral])
    speeds = np.full(n, config.desired_speed)
    return _state(starts, goals, speeds)


@SCENE_TEMPLATES.register("merge")
def merge(n, rng, config):
    """Two streams converging onto one lane along the x axis."""
    side = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    stagger = 0.9 * np.arange(n)
    starts = np.column_stack([-10.0 - stagger + 0.1 * rng.standard_normal(n),
                              side * (3.0 + 0.1 * rng.standard_normal(n))])
    goals = np.column_stack([FAR + stagger, np.zeros(n)])
    return _state(starts, goals, _speeds(n, rng, config))


@SCENE_TEMPLATES.register("crossing")
def crossing(n, rng, config):
    """Two perpendicular flows whose paths cross at the origin."""
    starts, goals = np.empty((n, 2)), np.empty((n, 2))
    for i in range(n):
        rank = i // 2
        offset = 1.5 * rank + 0.1 * rng.standard_normal()
        lateral = 0.2 * rng.standard_normal()
        if i % 2 == 0:
            starts[i] = (-8.0 - offset, lateral)
            goals[i] = (FAR, lateral)
        else:
            starts[i] = (lateral, -8.0 - offset)
            goals[i] = (lateral, FAR)
    return _state(starts, goals, _speeds(n, rng, config))


@SCENE_TEMPLATES.register("group-meet")
def group_meet(n, rng, config):
    """One walker approaching a standing group."""
    walker_start = np.array([[-10.0, 0.2 * rng.standard_normal()]])
    walker_goal = np.array([[-1.0, 0.0]])
    members = n - 1
    angles = 2 * np.pi * np.arange(members) / max(members, 1) + 0.1 * rng.standard_normal(members)
    radius = max(0.8, 0.35 * members)
    group = np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
    starts = np.vstack([walker_start, group])
    goals = np.vstack([walker_goal, group])
    speeds = _speeds(n, rng, config)
    velocities = np.zeros((n, 2))
    velocities[0] = _heading_velocities(walker_start, walker_goal, speeds[:1])[0]
    return AgentState(starts, velocities, goals, speeds)


@SCENE_TEMPLATES.register("dense-crowd")
def dense_crowd(n, rng, config):
    """Agents on a jittered grid walking to random goals across the area."""
    side = int(np.ceil(np.sqrt(n)))
    spacing = 1.2
    cells = np.array([(i % side, i // side) for i in range(n)], dtype=float)
    starts = (cells - (side - 1) / 2.0) * spacing + rng.uniform(-0.15, 0.15, size=(n, 2))
    half = min(config.bounds, max(side * spacing, 5.0))
    goals = rng.uniform(-half, half, size=(n, 2))
    return _state(starts, goals, _speeds(n, rng, config))


def generate_scene(template, n, seed, n_frames=DEFAULT_N_FRAMES, config=None,
                   frame_rate=DEFAULT_FRAME_RATE, scene_id=None):
    """
    Rolls out a template and returns its trajectories at ``frame_rate``.

    Args:
        template (str): one of the registered template names
        n (int): number of agents, at least 1
        seed (int): seed of the template randomness
        n_frames (int): recorded frames, at least 20
        config (ForceConfig): dynamics, defaults if None
        frame_rate (float): output rate in Hz
        scene_id (str): identifier stored on the dataset

    Returns:
        TrajectoryDataset: tracks 1..n over frames 0..n_frames-1
    """
    build = SCENE_TEMPLATES.lookup(template, error_cls=ConfigError)
    if n < 1:
        raise ConfigError("a scene needs at least one agent, got {}".format(n))
    if n_frames < 20:
        raise ConfigError("a scene needs at least 20 frames, got {}".format(n_frames))
    config = config or ForceConfig()
    rng = np.random.default_rng(seed)
    frames, max_speed = rollout(build(n, rng, config), config, n_frames, 1.0 / frame_rate)
    records = [(frame, agent + 1, float(frames[frame, agent, 0]), float(frames[frame, agent, 1]))
               for frame in range(n_frames) for agent in range(n)]
    logger.debug("template %s, seed %s: %d agents, max speed %.3f m/s",
                 template, seed, n, max_speed)
    return TrajectoryDataset(records, frame_rate,
                             scene_id or "{}-{}".format(template, seed))


def generate_scenes(templates, n, scenes, seed, out_dir, n_frames=DEFAULT_N_FRAMES, config=None):
    """
    Writes ``scenes`` trajectory files and a manifest to ``out_dir``.
    Scene i uses template ``templates[i % len(templates)]`` and seed
    ``seed + i``.

    Returns:
        list: manifest entries
    """
    if isinstance(templates, str):
        templates = [templates]
    if not templates or scenes < 1:
        raise ConfigError("need at least one template and one scene")
    for template in templates:
        SCENE_TEMPLATES.lookup(template, error_cls=ConfigError)
    os.makedirs(out_dir, exist_ok=True)
    manifest = []
    for index in range(scenes):
        template = templates[index % len(templates)]
        scene_seed = seed + index
        dataset = generate_scene(template, n, scene_seed, n_frames, config)
        filename = "scene_{:04d}_{}.txt".format(index, template)
        write_trajectories(dataset, os.path.join(out_dir, filename))
        manifest.append({"file": filename, "scene_id": dataset.scene_id, "template": template,
                         "seed": scene_seed, "n_agents": n, "n_frames": n_frames,
                         "frame_rate": dataset.frame_rate})
    dumpfn(manifest, os.path.join(out_dir, MANIFEST), indent=2)
    logger.info("wrote %d scenes to %s", scenes, out_dir)
    return manifest


def load_scene_dir(path):
    """
    Loads every scene listed in a directory's manifest, or every ``.txt``
    file when there is no manifest.

    Args:
        path (str): scene directory or single trajectory file

    Returns:
        [TrajectoryDataset]: datasets with their scene ids
    """
    if os.path.isfile(path):
        return [load_trajectories(path)]
    if not os.path.isdir(path):
        raise FileNotFoundError("no such file or directory: {}".format(path))
    manifest_path = os.path.join(path, MANIFEST)
    if os.path.exists(manifest_path):
        entries = loadfn(manifest_path)
        datasets = [load_trajectories(os.path.join(path, e["file"]), e.get("frame_rate", DEFAULT_FRAME_RATE),
                                      scene_id=e.get("scene_id", e["file"])) for e in entries]
    else:
        files = sorted(f for f in os.listdir(path) if f.endswith(".txt"))
        datasets = [load_trajectories(os.path.join(path, f), scene_id=f) for f in files]
    if not datasets:
        raise InputError("no trajectory files in {}".format(path))
    return datasets
