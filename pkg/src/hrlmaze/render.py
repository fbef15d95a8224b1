"""SVG rendering of maze trajectories.

Draws the maze grid with filled wall cells, start/goal markers, and one
circle per visited state.  Circles are colored by the option that was active
at that step, from a fixed eight-color palette chosen to avoid the red/green
start/goal markers.  Steps without an option annotation (the PPO agent)
render in a single neutral gray.

The output is deterministic for a given (trace, maze): element order and
number formatting never vary, so rendered documents are golden-file testable.
"""

from __future__ import annotations

from collections.abc import Sequence

from .maze import MazeSpec
from .stats import StepRecord

CELL_PX = 32
PATH_RADIUS = 6
MARKER_RADIUS = 13

# Option index -> fill color.  Red and green are reserved for start/goal.
OPTION_PALETTE = (
    "#1f77b4",  # blue
    "#ff7f0e",  # orange
    "#9467bd",  # purple
    "#8c564b",  # brown
    "#e377c2",  # pink
    "#17becf",  # cyan
    "#bcbd22",  # olive
    "#7f7f7f",  # gray
)
NEUTRAL_COLOR = "#555555"  # option-less (PPO) traces
START_COLOR = "#d62728"  # red
GOAL_COLOR = "#2ca02c"  # green
WALL_COLOR = "#30303a"
FLOOR_COLOR = "#f7f7f4"


def option_color(option: int | None) -> str:
    """Fill color for a step's option annotation."""
    if option is None:
        return NEUTRAL_COLOR
    return OPTION_PALETTE[option % len(OPTION_PALETTE)]


def _center(row: int, col: int) -> tuple[int, int]:
    return col * CELL_PX + CELL_PX // 2, row * CELL_PX + CELL_PX // 2


def render_path_svg(steps: Sequence[StepRecord], spec: MazeSpec) -> str:
    """Render one trace over its maze as a standalone SVG document."""
    if not steps:
        raise ValueError("cannot render an empty trace")
    width = spec.width * CELL_PX
    height = spec.height * CELL_PX
    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )
    parts.append(f'<rect width="{width}" height="{height}" fill="{FLOOR_COLOR}"/>')
    for row, col in sorted(spec.walls):
        parts.append(
            f'<rect class="wall" x="{col * CELL_PX}" y="{row * CELL_PX}" '
            f'width="{CELL_PX}" height="{CELL_PX}" fill="{WALL_COLOR}"/>'
        )
    sx, sy = _center(*spec.start)
    gx, gy = _center(*spec.goal)
    parts.append(
        f'<circle class="start" cx="{sx}" cy="{sy}" r="{MARKER_RADIUS}" '
        f'fill="{START_COLOR}"/>'
    )
    parts.append(
        f'<circle class="goal" cx="{gx}" cy="{gy}" r="{MARKER_RADIUS}" '
        f'fill="{GOAL_COLOR}"/>'
    )
    for step in steps:
        cx, cy = _center(step.row, step.col)
        parts.append(
            f'<circle class="path" cx="{cx}" cy="{cy}" r="{PATH_RADIUS}" '
            f'fill="{option_color(step.option)}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
