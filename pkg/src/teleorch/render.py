"""Coverage-map renderers: ASCII grid, binary PPM, and a matplotlib figure
for reports."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.colors import ListedColormap

from .robots import classify_cell

GLYPHS = {"good": "G", "weak": "W", "dead": "D"}
COLORS = {
    "good": (0, 200, 0),
    "weak": (255, 165, 0),
    "dead": (220, 0, 0),
    "wall": (0, 0, 0),
    "unsampled": (200, 200, 200),
}


def _cell_kind(world, cmap_cells, cell, good_dbm, dead_dbm) -> str:
    if world is not None and cell in world.occupied:
        return "wall"
    stats = cmap_cells.get(cell)
    if stats is None:
        return "unsampled"
    return classify_cell(stats["mean_rssi_dbm"], good_dbm, dead_dbm)


def _grid_shape(world, cmap_cells):
    if world is not None:
        return world.width, world.height
    if not cmap_cells:
        return 1, 1
    return (max(i for i, _ in cmap_cells) + 1, max(j for _, j in cmap_cells) + 1)


def ascii_coverage(cmap, world=None, good_dbm=-60.0, dead_dbm=-75.0) -> str:
    width, height = _grid_shape(world, cmap.cells)
    lines = []
    for j in range(height):
        row = []
        for i in range(width):
            kind = _cell_kind(world, cmap.cells, (i, j), good_dbm, dead_dbm)
            row.append("#" if kind == "wall" else GLYPHS.get(kind, "."))
        lines.append("".join(row))
    return "\n".join(lines)


def ppm_coverage(cmap, world=None, good_dbm=-60.0, dead_dbm=-75.0) -> bytes:
    width, height = _grid_shape(world, cmap.cells)
    header = f"P6\n{width} {height}\n255\n".encode()
    pixels = bytearray()
    for j in range(height):
        for i in range(width):
            kind = _cell_kind(world, cmap.cells, (i, j), good_dbm, dead_dbm)
            pixels.extend(COLORS[kind])
    return header + bytes(pixels)


def coverage_figure(cmap, path: str, world=None, good_dbm=-60.0, dead_dbm=-75.0,
                    title: str = "WiFi coverage") -> str:
    width, height = _grid_shape(world, cmap.cells)
    order = ["wall", "unsampled", "dead", "weak", "good"]
    index = {k: n for n, k in enumerate(order)}
    grid = [[index[_cell_kind(world, cmap.cells, (i, j), good_dbm, dead_dbm)]
             for i in range(width)] for j in range(height)]
    palette = ListedColormap([tuple(c / 255 for c in COLORS[k]) for k in order])
    fig, ax = plt.subplots(figsize=(max(4, width / 4), max(3, height / 4)))
    ax.imshow(grid, cmap=palette, vmin=0, vmax=len(order) - 1, origin="upper")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def timeline_figure(events: list, path: str, title: str = "Session timeline") -> str:
    """Bar chart of event kinds over session time, for scenario reports."""
    fig, ax = plt.subplots(figsize=(8, 3))
    if events:
        t0 = events[0]["ts"]
        kinds = sorted({e["kind"] for e in events})
        ypos = {k: n for n, k in enumerate(kinds)}
        ax.scatter([e["ts"] - t0 for e in events],
                   [ypos[e["kind"]] for e in events], marker="|", s=200)
        ax.set_yticks(range(len(kinds)))
        ax.set_yticklabels(kinds)
        ax.set_xlabel("seconds since session start")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
