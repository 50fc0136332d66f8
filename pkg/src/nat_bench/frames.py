"""Per-frame records tying fixations, measured map, truth and noise stats together.

Measured maps are never stored: they are rebuilt from fixations and the
blur sigma every time frames are assembled.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IdMismatchError, InvariantViolationError
from .grid import read_sgrid, write_sgrid
from .noise_stats import NoiseStats, read_nstats, write_nstats
from .reconstruct import FixationSet, read_fixcsv, sr_reconstruct, write_fixcsv


@dataclass(eq=False)
class Frame:
    frame_id: int
    fixations: FixationSet
    measured: np.ndarray
    group_id: int = 0
    truth: np.ndarray | None = None
    stats: NoiseStats | None = None

    @property
    def n_observers(self):
        return len(self.fixations)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.group_id == other.group_id
            and self.fixations == other.fixations
            and np.array_equal(self.measured, other.measured)
            and _opt_equal(self.truth, other.truth)
            and self.stats == other.stats
        )


def _opt_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def assemble(fixations, sigma, shape, truths=None, stats=None, measured=None, groups=None):
    """Build frames sorted by id from per-frame dictionaries.

    ``fixations`` maps frame_id -> FixationSet. ``truths``, ``stats``,
    ``measured`` and ``groups`` are optional dictionaries keyed the same
    way; any key they hold that has no fixations raises IdMismatchError.
    A provided measured map must match the re-derived one to 1e-9 per cell.
    """
    ids = set(fixations)
    for name, extra in (("truth", truths), ("stats", stats), ("measured", measured), ("group", groups)):
        if extra is not None and not set(extra) <= ids:
            missing = sorted(set(extra) - ids)
            raise IdMismatchError(f"{name} entries for frame ids without fixations: {missing}")
    frames = []
    for frame_id in sorted(ids):
        fix = fixations[frame_id]
        rebuilt = sr_reconstruct(fix, sigma, shape)
        if measured is not None and frame_id in measured:
            cached = np.asarray(measured[frame_id], dtype=np.float64).reshape(rebuilt.shape)
            if np.max(np.abs(cached - rebuilt)) > 1e-9:
                raise InvariantViolationError(f"frame {frame_id}: cached measured map differs from fixations")
        frame_stats = None if stats is None else stats.get(frame_id)
        if frame_stats is not None and frame_stats.observer_count != len(fix):
            raise InvariantViolationError(
                f"frame {frame_id}: stats use n={frame_stats.observer_count}, frame has {len(fix)} fixations")
        frames.append(Frame(
            frame_id=int(frame_id),
            fixations=fix,
            measured=rebuilt,
            group_id=0 if groups is None else int(groups.get(frame_id, 0)),
            truth=None if truths is None else truths.get(frame_id),
            stats=frame_stats,
        ))
    return frames


def truth_filename(frame_id):
    return f"truth_{int(frame_id):05d}.sgrid"


def save_frames(frames, directory):
    """Write fixations.csv, one truth SGRID per frame, and stats.csv when present."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    path = directory / "fixations.csv"
    write_fixcsv(path, {f.frame_id: f.fixations for f in frames})
    written.append(path)
    for f in frames:
        if f.truth is not None:
            p = directory / truth_filename(f.frame_id)
            write_sgrid(p, f.truth)
            written.append(p)
    if any(f.stats is not None for f in frames):
        p = directory / "stats.csv"
        write_nstats(p, {f.frame_id: f.stats for f in frames if f.stats is not None})
        written.append(p)
    return written


def load_frames(directory, shape, sigma, fixations_path=None, stats_path=None):
    """Inverse of :func:`save_frames`."""
    directory = Path(directory)
    fixations = read_fixcsv(fixations_path or directory / "fixations.csv", shape)
    truths = {}
    for frame_id in fixations:
        p = directory / truth_filename(frame_id)
        if p.exists():
            truths[frame_id] = read_sgrid(p).reshape(shape)
    for p in directory.glob("truth_*.sgrid"):
        frame_id = int(p.stem.split("_")[1])
        if frame_id not in fixations:
            raise IdMismatchError(f"truth file {p.name} has no fixations")
    stats_file = Path(stats_path) if stats_path else directory / "stats.csv"
    stats = read_nstats(stats_file) if stats_file.exists() else None
    return assemble(fixations, sigma, shape, truths or None, stats)
