"""Deterministic grid mazes with 8-directional movement.

Maps are ASCII: '#' wall, ' ' open, 'S' start, 'G' goal, 'D' doorway (open,
tracked separately). Rewards are fixed: -1.0 for bumping a wall (the agent
stays put), +1.0 for entering the goal (episode ends), -0.01 per ordinary
step. Episodes also end when the step count reaches the horizon.

Cells are (row, col) with row 0 at the top. A move checks only its target
cell, so diagonal moves may cut wall corners.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

# Action index -> (d_row, d_col), clockwise from north.
ACTIONS: tuple[tuple[int, int], ...] = (
    (-1, 0),   # 0 N
    (-1, 1),   # 1 NE
    (0, 1),    # 2 E
    (1, 1),    # 3 SE
    (1, 0),    # 4 S
    (1, -1),   # 5 SW
    (0, -1),   # 6 W
    (-1, -1),  # 7 NW
)
ACTION_NAMES = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
NUM_ACTIONS = len(ACTIONS)

WALL_REWARD = -1.0
STEP_REWARD = -0.01
GOAL_REWARD = 1.0
DEFAULT_HORIZON = 1000

Cell = tuple[int, int]


class MazeFormatError(ValueError):
    """Raised for maps that violate the ASCII format contract."""


@dataclass(frozen=True)
class MazeSpec:
    """Parsed, validated maze: geometry plus start/goal/doorway cells."""

    name: str
    width: int
    height: int
    walls: frozenset[Cell]
    start: Cell
    goal: Cell
    doorways: tuple[Cell, ...]

    def is_wall(self, cell: Cell) -> bool:
        return cell in self.walls

    def open_cells(self) -> list[Cell]:
        return [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in self.walls
        ]


def load_maze(text: str, name: str = "custom") -> MazeSpec:
    """Parse an ASCII map and validate it.

    Rejects non-rectangular maps, unknown characters, maps without exactly
    one 'S' and one 'G', maps whose border is not fully walled, and maps
    whose goal is unreachable from the start.
    """
    rows = [line for line in text.splitlines() if line != ""]
    if not rows:
        raise MazeFormatError("empty map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MazeFormatError("map is not rectangular")
    height = len(rows)

    walls: set[Cell] = set()
    starts: list[Cell] = []
    goals: list[Cell] = []
    doorways: list[Cell] = []
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                walls.add((r, c))
            elif ch == "S":
                starts.append((r, c))
            elif ch == "G":
                goals.append((r, c))
            elif ch == "D":
                doorways.append((r, c))
            elif ch != " ":
                raise MazeFormatError(f"unknown map character {ch!r} at {(r, c)}")
    if len(starts) != 1 or len(goals) != 1:
        raise MazeFormatError(
            f"map must have exactly one start and one goal, found {len(starts)} and {len(goals)}"
        )
    for r in range(height):
        for c in range(width):
            if r in (0, height - 1) or c in (0, width - 1):
                if (r, c) not in walls:
                    raise MazeFormatError(f"border cell {(r, c)} is not a wall")

    spec = MazeSpec(
        name=name,
        width=width,
        height=height,
        walls=frozenset(walls),
        start=starts[0],
        goal=goals[0],
        doorways=tuple(sorted(doorways)),
    )
    if shortest_path_length(spec) is None:
        raise MazeFormatError("goal is unreachable from start")
    return spec


# -- built-in maps --------------------------------------------------------------

FOUR_ROOMS_MAP = """\
#############
#     #     #
#     #    G#
#     D     #
#     #     #
#     #     #
##D####     #
#     ###D###
#     #     #
#     #     #
#     D     #
#S    #     #
#############
"""

# Open 13x13 room: the 10-step NE diagonal from start to goal is unobstructed.
EMPTY_ROOM_MAP = """\
#############
#          G#
#           #
#           #
#           #
#           #
#           #
#           #
#           #
#           #
#           #
#S          #
#############
"""

# Ten scattered single-cell obstacles; (3,9) blocks the bare diagonal.
ONE_ROOM_TEN_OBS_MAP = """\
#############
#          G#
#   #       #
#        #  #
# #   #     #
#           #
#   #   #   #
#           #
# #   #     #
#        #  #
#    #      #
#S          #
#############
"""

# A 7-cell vertical barrier centred between start and goal.
ONE_ROOM_ONE_OBS_MAP = """\
#############
#          G#
#           #
#     #     #
#     #     #
#     #     #
#     #     #
#     #     #
#     #     #
#     #     #
#           #
#S          #
#############
"""

_BUILT_INS = {
    "four-rooms": FOUR_ROOMS_MAP,
    "empty-room": EMPTY_ROOM_MAP,
    "one-room-ten-obs": ONE_ROOM_TEN_OBS_MAP,
    "one-room-one-obs": ONE_ROOM_ONE_OBS_MAP,
}

BUILT_IN_NAMES = tuple(_BUILT_INS)


def built_in(name: str) -> MazeSpec:
    try:
        text = _BUILT_INS[name]
    except KeyError:
        raise KeyError(f"unknown built-in maze {name!r}; choose from {BUILT_IN_NAMES}") from None
    return load_maze(text, name=name)


# -- observations ----------------------------------------------------------------

OBS_MODES = ("one-hot", "coords")


def observe(spec: MazeSpec, cell: Cell, mode: str = "one-hot") -> np.ndarray:
    """Encode a cell: 'one-hot' over row*width+col, or 'coords' as
    (col/(width-1), row/(height-1))."""
    if mode == "one-hot":
        vec = np.zeros(spec.width * spec.height)
        vec[cell[0] * spec.width + cell[1]] = 1.0
        return vec
    if mode == "coords":
        return np.array([cell[1] / (spec.width - 1), cell[0] / (spec.height - 1)])
    raise ValueError(f"unknown observation mode {mode!r}")


def observation_dim(spec: MazeSpec, mode: str = "one-hot") -> int:
    return spec.width * spec.height if mode == "one-hot" else 2


# -- environment -----------------------------------------------------------------


class MazeEnv:
    """Episodic wrapper around a MazeSpec with the fixed reward scheme."""

    def __init__(self, spec: MazeSpec, horizon: int = DEFAULT_HORIZON, obs_mode: str = "one-hot"):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        if obs_mode not in OBS_MODES:
            raise ValueError(f"unknown observation mode {obs_mode!r}")
        self.spec = spec
        self.horizon = horizon
        self.obs_mode = obs_mode
        self.cell: Cell = spec.start
        self.steps = 0
        self.done = False
        self.reached_goal = False

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.spec, self.obs_mode)

    def reset(self) -> Cell:
        self.cell = self.spec.start
        self.steps = 0
        self.done = False
        self.reached_goal = False
        return self.cell

    def observe(self, cell: Cell | None = None) -> np.ndarray:
        return observe(self.spec, self.cell if cell is None else cell, self.obs_mode)

    def step(self, action: int) -> tuple[Cell, float, bool]:
        """Apply one action; returns (cell, reward, done)."""
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        if not 0 <= action < NUM_ACTIONS:
            raise ValueError(f"action must be in [0, {NUM_ACTIONS})")
        dr, dc = ACTIONS[action]
        target = (self.cell[0] + dr, self.cell[1] + dc)
        if target in self.spec.walls:
            reward = WALL_REWARD
        elif target == self.spec.goal:
            self.cell = target
            reward = GOAL_REWARD
            self.done = True
            self.reached_goal = True
        else:
            self.cell = target
            reward = STEP_REWARD
        self.steps += 1
        if self.steps >= self.horizon:
            self.done = True
        return self.cell, reward, self.done


# -- shortest paths ----------------------------------------------------------------


def shortest_path_length(
    spec: MazeSpec, source: Cell | None = None, target: Cell | None = None
) -> int | None:
    """Breadth-first shortest path under the same movement rule as step().

    Returns the number of moves, or None when the target is unreachable.
    """
    src = spec.start if source is None else source
    dst = spec.goal if target is None else target
    if src in spec.walls or dst in spec.walls:
        raise ValueError("source and target must be open cells")
    if src == dst:
        return 0
    dist = {src: 0}
    queue: deque[Cell] = deque([src])
    while queue:
        cell = queue.popleft()
        for dr, dc in ACTIONS:
            nxt = (cell[0] + dr, cell[1] + dc)
            if nxt in spec.walls or nxt in dist:
                continue
            dist[nxt] = dist[cell] + 1
            if nxt == dst:
                return dist[nxt]
            queue.append(nxt)
    return None
