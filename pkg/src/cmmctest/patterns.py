"""Point patterns, observation windows, random streams and pattern files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class PatternFormatError(ValueError):
    """Base class for problems reading a pattern file."""


class MalformedHeaderError(PatternFormatError):
    pass


class NonNumericCoordinateError(PatternFormatError):
    pass


class PointOutsideWindowError(PatternFormatError):
    pass


class DegeneratePatternError(ValueError):
    """Raised when a statistic needs more points than the pattern has."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangular observation window."""

    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        for name in ("x_min", "x_max", "y_min", "y_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate window {self!r}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def contains(self, xy: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of ``xy`` inside the window, boundary included."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (
            (xy[:, 0] >= self.x_min)
            & (xy[:, 0] <= self.x_max)
            & (xy[:, 1] >= self.y_min)
            & (xy[:, 1] <= self.y_max)
        )

    def boundary_distance(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return np.minimum.reduce(
            [
                xy[:, 0] - self.x_min,
                self.x_max - xy[:, 0],
                xy[:, 1] - self.y_min,
                self.y_max - xy[:, 1],
            ]
        )

    def translated(self, dx: float, dy: float) -> "Window":
        return Window(self.x_min + dx, self.x_max + dx, self.y_min + dy, self.y_max + dy)


UNIT_SQUARE = Window()


def window_area(w: Window) -> float:
    return w.area()


@dataclass(frozen=True, eq=False)
class PointPattern:
    """A finite set of planar points observed in ``window``.

    Points are stored as a read-only ``(N, 2)`` float64 array. Order is kept
    but carries no meaning; every statistic in this package is invariant to it.
    """

    points: np.ndarray
    window: Window = UNIT_SQUARE

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if len(pts) and not np.all(self.window.contains(pts)):
            raise PointOutsideWindowError("pattern has points outside its window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_points(self) -> int:
        return len(self)

    def __eq__(self, other):
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.window, self.points.tobytes()))

    def translated(self, dx: float, dy: float) -> "PointPattern":
        return PointPattern(self.points + [dx, dy], self.window.translated(dx, dy))


@dataclass
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by the counter-based Philox bit generator, keyed through
    ``SeedSequence(seed, spawn_key=(stream_id,))`` so distinct stream ids give
    independent streams. The generator is the only mutable state; give every
    parallel task its own stream.
    """

    seed: int
    stream_id: int = 0
    subkey: tuple = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = (int(self.stream_id),) + tuple(int(k) for k in self.subkey)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, k: int) -> "RngStream":
        """A stream derived from this one; deterministic in ``(seed, stream_id, k)``."""
        return RngStream(self.seed, self.stream_id, self.subkey + (int(k),))

    # thin pass-throughs used throughout the simulators
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def poisson(self, lam, size=None):
        return self.generator.poisson(lam, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)


def as_rng(rng) -> RngStream:
    """Accept an RngStream or an integer seed."""
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))


def read_pattern(path) -> PointPattern:
    """Read a pattern file.

    Format: first non-comment line ``window x_min x_max y_min y_max``, then
    one ``x y`` pair per line. ``#`` starts a comment.
    """
    header = None
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if header is None:
            if tokens[0] != "window" or len(tokens) != 5:
                raise MalformedHeaderError(f"{path}:{lineno}: expected 'window x_min x_max y_min y_max'")
            try:
                header = Window(*(float(t) for t in tokens[1:]))
            except ValueError as exc:
                raise MalformedHeaderError(f"{path}:{lineno}: {exc}") from None
            continue
        if len(tokens) != 2:
            raise NonNumericCoordinateError(f"{path}:{lineno}: expected two coordinates")
        try:
            x, y = float(tokens[0]), float(tokens[1])
        except ValueError:
            raise NonNumericCoordinateError(f"{path}:{lineno}: non-numeric coordinate in {line!r}") from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise NonNumericCoordinateError(f"{path}:{lineno}: non-finite coordinate")
        if not header.contains(np.array([x, y]))[0]:
            raise PointOutsideWindowError(f"{path}:{lineno}: point ({x}, {y}) outside {header}")
        rows.append((x, y))
    if header is None:
        raise MalformedHeaderError(f"{path}: missing window header")
    return PointPattern(np.array(rows, dtype=float).reshape(-1, 2), header)


def write_pattern(p: PointPattern, path) -> None:
    w = p.window
    lines = [f"window {w.x_min:.17g} {w.x_max:.17g} {w.y_min:.17g} {w.y_max:.17g}"]
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in p.points)
    Path(path).write_text("\n".join(lines) + "\n")
