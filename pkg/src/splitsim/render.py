"""Raster and figure output: portable pixmaps for golden tests, matplotlib for reports."""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .automata import CAState
from .lattice import Site
from .numeric import as_fraction, format_fraction

RGB = Tuple[int, int, int]


class UnsupportedDimension(ValueError):
    pass


DARK_BLUE: RGB = (0, 0, 139)
BLACK: RGB = (0, 0, 0)
DARK_YELLOW: RGB = (184, 134, 11)
ORANGE: RGB = (255, 140, 0)
RED: RGB = (220, 0, 0)

CA_PALETTE: Dict[str, RGB] = {
    "e": (0, 0, 0),
    "c": (255, 230, 0),
    "c'": (184, 134, 11),
    "p": (135, 206, 250),
    "h": (0, 0, 139),
    "m": (144, 238, 144),
    "d'": (255, 140, 0),
    "d!": (220, 0, 0),
    "q'": (128, 0, 0),
    # labels that do not occur in the octagon automaton
    "u": (255, 99, 71),
    "d": (205, 92, 92),
    "m'": (34, 139, 34),
    "q": (199, 21, 133),
}


def _coolwarm_table(n: int = 256) -> np.ndarray:
    from matplotlib import colormaps
    cmap = colormaps["coolwarm"]
    return (np.array([cmap(i / (n - 1))[:3] for i in range(n)]) * 255).round().astype(np.uint8)


_COOLWARM: Optional[np.ndarray] = None


def mass_color(value: Fraction, h: Fraction) -> RGB:
    """Background value dark blue, 0 black, (0,1) cool to warm, >= 1 dark yellow, orange, red."""
    global _COOLWARM
    if value == h:
        return DARK_BLUE
    if value == 0:
        return BLACK
    if value >= 2:
        return RED
    if value >= Fraction(5, 4):
        return ORANGE
    if value >= 1:
        return DARK_YELLOW
    if value < 0:
        return DARK_BLUE
    if _COOLWARM is None:
        _COOLWARM = _coolwarm_table()
    i = min(int(value * 256), 255)
    r, g, b = _COOLWARM[i]
    return int(r), int(g), int(b)


def _bounds(sites: Iterable[Site], margin: int) -> int:
    return max((max(abs(c) for c in x) for x in sites), default=0) + margin


def mass_image(values: Dict[Site, Fraction], h, d: int, radius: Optional[int] = None,
               margin: int = 2) -> np.ndarray:
    """An RGB array with one pixel per site; `values` lists the sites that are not background."""
    h = as_fraction(h)
    if d not in (1, 2):
        raise UnsupportedDimension(f"cannot render d={d}")
    R = _bounds(values, margin) if radius is None else radius
    rows = 1 if d == 1 else 2 * R + 1
    img = np.empty((rows, 2 * R + 1, 3), dtype=np.uint8)
    img[:, :] = DARK_BLUE
    for x, v in values.items():
        if any(abs(c) > R for c in x):
            continue
        col = x[0] + R
        row = 0 if d == 1 else R - x[1]
        img[row, col] = mass_color(v, h)
    return img


def ca_image(state: CAState, radius: Optional[int] = None, margin: int = 2,
             palette: Dict[str, RGB] = CA_PALETTE) -> np.ndarray:
    if state.d not in (1, 2):
        raise UnsupportedDimension(f"cannot render d={state.d}")
    R = _bounds(state.labels, margin) if radius is None else radius
    rows = 1 if state.d == 1 else 2 * R + 1
    img = np.empty((rows, 2 * R + 1, 3), dtype=np.uint8)
    img[:, :] = palette[state.default]
    for x, lab in state.labels.items():
        if any(abs(c) > R for c in x):
            continue
        row = 0 if state.d == 1 else R - x[1]
        img[row, x[0] + R] = palette.get(lab, (255, 255, 255))
    return img


def upscale(img: np.ndarray, block: int) -> np.ndarray:
    if block <= 1:
        return img
    return np.repeat(np.repeat(img, block, axis=0), block, axis=1)


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def write_ppm(img: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ppm_bytes(img))


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary pixmap")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def snapshot_values(snap, h) -> Dict[Site, Fraction]:
    """Masses of a snapshot evaluated at one background value."""
    h = as_fraction(h)
    return {x: m(h) for x, m in snap.masses.items()}


def geometry_text(polygon, scale, eps, t: Optional[int] = None) -> str:
    """Shape-check overlay in lattice units: the polygon divided by the scale factor and
    the eps of its inner and outer bands, all as exact fractions."""
    f = as_fraction(scale)
    eps = as_fraction(eps)
    lines = [f"# overlay polygon={polygon.name}" + ("" if t is None else f" t={t}"),
             f"scale {format_fraction(f)}", f"band {format_fraction(eps / f)}"]
    for x, y in polygon.vertices:
        lines.append(f"vertex {format_fraction(x / f)} {format_fraction(y / f)}")
    return "\n".join(lines) + "\n"


def save_figure(img: np.ndarray, path, title: str = "", polygon=None, scale=None, eps=None,
                radius: Optional[int] = None) -> None:
    """A matplotlib rendering of an image in lattice coordinates, with an optional polygon
    and its eps bands drawn on top."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Polygon as Patch

    rows, cols, _ = img.shape
    R = (cols - 1) // 2 if radius is None else radius
    fig, ax = plt.subplots(figsize=(5, 5 if rows > 1 else 1.5), dpi=100)
    if rows > 1:
        ax.imshow(img, extent=(-R - 0.5, R + 0.5, -R - 0.5, R + 0.5), interpolation="nearest")
    else:
        ax.imshow(img, extent=(-R - 0.5, R + 0.5, -0.5, 0.5), interpolation="nearest", aspect="auto")
    if polygon is not None and scale is not None:
        f = float(as_fraction(scale))
        pts = [(float(x) / f, float(y) / f) for x, y in polygon.vertices]
        ax.add_patch(Patch(pts, closed=True, fill=False, edgecolor="white", linewidth=1.0))
        if eps is not None:
            # scaled copies stand in for the eps bands; close enough for a picture
            e = float(as_fraction(eps))
            for k in (1 - e, 1 + e):
                ax.add_patch(Patch([(x * k, y * k) for x, y in pts], closed=True, fill=False,
                                   edgecolor="white", linewidth=0.5, linestyle="--"))
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def save_series_figure(series: Dict[str, Sequence[Tuple[float, float]]], path, xlabel: str, ylabel: str,
                       title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    for name, pts in series.items():
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, label=name, linewidth=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=9)
    if len(series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
