"""Deterministic simulated world: occupancy grid, log-distance radio field,
unicycle robot and a 4-connected A* planner.

Cells are (i, j) with i the column (x) and j the row (y); world coordinates
are metres, cell centres at ((i+0.5)*res, (j+0.5)*res).
"""

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import NoPath, OutOfBounds

REFERENCE_DISTANCE_M = 1.0

# Expansion order N, E, S, W (j grows southward).
NEIGHBOR_OFFSETS = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass
class Router:
    pos: tuple  # (x, y) metres
    p0_dbm: float = -40.0
    pathloss_exp: float = 2.5


@dataclass
class NavLabel:
    name: str
    pose: tuple  # (x, y)


@dataclass
class GridWorld:
    width: int
    height: int
    resolution: float = 0.5
    occupied: set = field(default_factory=set)  # {(i, j)}
    routers: list = field(default_factory=list)
    charging_pose: tuple = (0.0, 0.0)
    labels: list = field(default_factory=list)
    seed: int = 0

    def in_bounds(self, cell) -> bool:
        i, j = cell
        return 0 <= i < self.width and 0 <= j < self.height

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and cell not in self.occupied

    def cell_of(self, pos) -> tuple:
        return (int(pos[0] // self.resolution), int(pos[1] // self.resolution))

    def center(self, cell) -> tuple:
        return ((cell[0] + 0.5) * self.resolution, (cell[1] + 0.5) * self.resolution)

    def label(self, name: str) -> NavLabel:
        for lab in self.labels:
            if lab.name == name:
                return lab
        raise NoPath(f"no label {name!r}")


def rssi_at(world: GridWorld, pos) -> float:
    """Pointwise max over routers of the log-distance path-loss field."""
    cell = world.cell_of(pos)
    if not world.in_bounds(cell):
        raise OutOfBounds(f"position {pos} outside world")
    best = None
    for router in world.routers:
        d = math.hypot(pos[0] - router.pos[0], pos[1] - router.pos[1])
        d = max(d, REFERENCE_DISTANCE_M)
        value = router.p0_dbm - 10.0 * router.pathloss_exp * math.log10(d / REFERENCE_DISTANCE_M)
        best = value if best is None else max(best, value)
    if best is None:
        raise OutOfBounds("world has no routers")
    return best


# ---------------------------------------------------------------- kinematics

@dataclass
class SimRobot:
    pose: tuple = (0.0, 0.0, 0.0)  # x, y, theta
    vmax: float = 1.0
    wmax: float = math.pi
    battery_pct: float = 100.0
    battery_drain_pct_per_m: float = 0.5


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi], with +pi kept as +pi."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0.0:
        t += 2.0 * math.pi
    return t - math.pi


def step(world: GridWorld, robot: SimRobot, v: float, w: float, dt: float) -> bool:
    """One integration step; returns True when motion was blocked."""
    x, y, theta = robot.pose
    nx = x + v * math.cos(theta) * dt
    ny = y + v * math.sin(theta) * dt
    ntheta = wrap_angle(theta + w * dt)
    collided = False
    if not world.is_free(world.cell_of((nx, ny))):
        nx, ny = x, y  # stop at the boundary of the current cell
        collided = True
    moved = math.hypot(nx - x, ny - y)
    robot.battery_pct = max(0.0, robot.battery_pct - moved * robot.battery_drain_pct_per_m)
    robot.pose = (nx, ny, ntheta)
    return collided


# ------------------------------------------------------------------ planning

def plan_path(world: GridWorld, start, goal) -> list:
    """Shortest 4-connected path by A* with Manhattan heuristic.

    Deterministic: ties broken by insertion order with N,E,S,W expansion.
    """
    if not world.is_free(start):
        raise ValueError(f"start cell {start} not free")
    if not world.is_free(goal):
        raise ValueError(f"goal cell {goal} not free")
    if start == goal:
        return [start]

    def h(cell):
        return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])

    counter = 0
    open_heap = [(h(start), 0, start)]
    came_from = {}
    g = {start: 0}
    closed = set()
    while open_heap:
        _, _, current = heapq.heappop(open_heap)
        if current in closed:
            continue
        if current == goal:
            path = [current]
            while path[-1] != start:
                path.append(came_from[path[-1]])
            path.reverse()
            return path
        closed.add(current)
        for di, dj in NEIGHBOR_OFFSETS:
            nxt = (current[0] + di, current[1] + dj)
            if not world.is_free(nxt):
                continue
            tentative = g[current] + 1
            if tentative < g.get(nxt, math.inf):
                g[nxt] = tentative
                came_from[nxt] = current
                counter += 1
                heapq.heappush(open_heap, (tentative + h(nxt), counter, nxt))
    raise NoPath(f"no path {start} -> {goal}")


def bfs_distances(world: GridWorld, start) -> dict:
    """Shortest-path cell distance to every reachable free cell."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        for di, dj in NEIGHBOR_OFFSETS:
            nxt = (current[0] + di, current[1] + dj)
            if world.is_free(nxt) and nxt not in dist:
                dist[nxt] = dist[current] + 1
                queue.append(nxt)
    return dist


def reachable_cells(world: GridWorld, start) -> set:
    return set(bfs_distances(world, start))


# ---------------------------------------------------------------- navigation

ANGLE_TOLERANCE_RAD = 0.05


def navigate_to(world: GridWorld, robot: SimRobot, goal_pose, dt: float,
                on_step=None, max_steps: int = 100000) -> list:
    """Follow the planned path with a rotate-then-translate controller.

    Stops within half a cell of the goal point; returns the trajectory of
    poses (one per step). ``on_step(robot)`` feeds telemetry consumers.
    """
    goal_cell = world.cell_of(goal_pose)
    if not world.is_free(goal_cell):
        raise NoPath(f"goal cell {goal_cell} occupied")
    path = plan_path(world, world.cell_of(robot.pose[:2]), goal_cell)
    waypoints = [world.center(c) for c in path[1:]] + [tuple(goal_pose[:2])]
    tolerance = 0.5 * world.resolution
    trajectory = []
    for target in waypoints:
        final = target == waypoints[-1]
        for _ in range(max_steps):
            x, y, theta = robot.pose
            dist = math.hypot(target[0] - x, target[1] - y)
            arrive = tolerance if final else 0.25 * world.resolution
            if dist <= arrive:
                break
            heading = math.atan2(target[1] - y, target[0] - x)
            err = wrap_angle(heading - theta)
            if abs(err) > ANGLE_TOLERANCE_RAD:
                w = max(-robot.wmax, min(robot.wmax, err / dt))
                step(world, robot, 0.0, w, dt)
            else:
                v = max(0.0, min(robot.vmax, dist / dt))
                step(world, robot, v, 0.0, dt)
            trajectory.append(robot.pose)
            if on_step is not None:
                on_step(robot)
        else:
            raise NoPath("controller failed to converge")
    return trajectory


class NavigationRun:
    """Incremental navigation: one controller step per tick.

    Same control law as navigate_to, but driven by an external tick loop so
    a service can interleave it with telemetry and mode changes.
    """

    def __init__(self, world: GridWorld, robot: SimRobot, goal_pose):
        goal_cell = world.cell_of(goal_pose)
        if not world.is_free(goal_cell):
            raise NoPath(f"goal cell {goal_cell} occupied")
        path = plan_path(world, world.cell_of(robot.pose[:2]), goal_cell)
        self.world = world
        self.robot = robot
        self.waypoints = [world.center(c) for c in path[1:]] + [tuple(goal_pose[:2])]
        self.index = 0
        self.done = len(self.waypoints) == 0

    def tick(self, dt: float) -> bool:
        if self.done:
            return True
        world, robot = self.world, self.robot
        target = self.waypoints[self.index]
        final = self.index == len(self.waypoints) - 1
        x, y, theta = robot.pose
        dist = math.hypot(target[0] - x, target[1] - y)
        arrive = (0.5 if final else 0.25) * world.resolution
        if dist <= arrive:
            self.index += 1
            if self.index >= len(self.waypoints):
                self.done = True
            return self.done
        heading = math.atan2(target[1] - y, target[0] - x)
        err = wrap_angle(heading - theta)
        if abs(err) > ANGLE_TOLERANCE_RAD:
            w = max(-robot.wmax, min(robot.wmax, err / dt))
            step(world, robot, 0.0, w, dt)
        else:
            v = max(0.0, min(robot.vmax, dist / dt))
            step(world, robot, v, 0.0, dt)
        return self.done


# --------------------------------------------------------------- world files

def parse_world(text: str) -> GridWorld:
    """ASCII map + optional `---` JSON sidecar.

    Map characters: `#` occupied, `.` free, `C` charging dock, `R` router,
    any other letter a navigation label. The sidecar may set resolution,
    seed, per-router parameters (in order of appearance, row-major) and
    label display names.
    """
    if "---" in text:
        map_part, _, side_part = text.partition("---")
        sidecar = json.loads(side_part) if side_part.strip() else {}
    else:
        map_part, sidecar = text, {}
    rows = [line for line in map_part.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty world map")
    width = max(len(r) for r in rows)
    height = len(rows)
    resolution = float(sidecar.get("resolution", 0.5))
    world = GridWorld(width=width, height=height, resolution=resolution,
                      seed=int(sidecar.get("seed", 0)))
    router_params = sidecar.get("routers", [])
    router_idx = 0
    for j, row in enumerate(rows):
        for i in range(width):
            ch = row[i] if i < len(row) else "#"
            cell = (i, j)
            if ch == "#":
                world.occupied.add(cell)
            elif ch == "R":
                params = router_params[router_idx] if router_idx < len(router_params) else {}
                router_idx += 1
                world.routers.append(Router(
                    pos=world.center(cell),
                    p0_dbm=float(params.get("p0_dbm", -40.0)),
                    pathloss_exp=float(params.get("pathloss_exp", 2.5))))
            elif ch == "C":
                world.charging_pose = world.center(cell)
            elif ch != ".":
                name = sidecar.get("labels", {}).get(ch, ch)
                world.labels.append(NavLabel(name=name, pose=world.center(cell)))
    return world


def load_world(path: str) -> GridWorld:
    with open(path, encoding="utf-8") as fh:
        return parse_world(fh.read())
