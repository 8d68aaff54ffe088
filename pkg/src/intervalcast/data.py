"""Time-series containers, windowing, splits, normalization, CSV I/O.

Also holds the synthetic benchmark trace generator: blocks of a fixed
sinusoidal input segment followed by one of four level-shifted sinusoidal
output segments, optionally corrupted by Gaussian noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError, ParseError, SplitError

SYNTH_LENGTH = 3100
SYNTH_SEGMENT = 24  # timesteps per input segment and per output segment
SYNTH_CLASSES = 4   # output-segment level shifts k in {0, 1, 2, 3}
SYNTH_NOISE_SD = 0.05


@dataclass(eq=False)
class TimeSeries:
    """A T x n real-valued series with channel names and a domain maximum.

    ``values`` is made read-only on construction; downstream code shares
    views of it freely.
    """

    values: np.ndarray
    channel_names: tuple[str, ...]
    domain_max: float

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"series must be a T x n array with T,n >= 1, got shape {v.shape}")
        names = tuple(str(c) for c in self.channel_names)
        if len(names) != v.shape[1]:
            raise DataError(
                f"{len(names)} channel names for {v.shape[1]} columns"
            )
        v.setflags(write=False)
        self.values = v
        self.channel_names = names
        self.domain_max = float(self.domain_max)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window extraction parameters."""

    w: int
    tau: int
    stride: int = 1

    def __post_init__(self):
        if self.w < 1 or self.tau < 1 or self.stride < 1:
            raise ConfigError(
                f"window config needs w, tau, stride >= 1, got "
                f"w={self.w}, tau={self.tau}, stride={self.stride}"
            )


@dataclass(frozen=True)
class WindowSample:
    """One supervised pair: history (w x n) and target (tau x n).

    ``t_origin`` is the index of the first target timestep, so the history
    covers rows [t_origin - w, t_origin - 1] of the source series.
    """

    history: np.ndarray
    target: np.ndarray
    t_origin: int


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/val/test fractions; must sum to 1."""

    train_frac: float
    val_frac: float
    test_frac: float

    def __post_init__(self):
        for name, f in (
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ):
            if not (0.0 < f < 1.0):
                raise ConfigError(f"{name} must be in (0, 1), got {f}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {total}")


@dataclass(frozen=True)
class ScaleRecord:
    """Inverse-transform record produced by :func:`normalize`."""

    domain_max: float
    clipped_entries: int


def make_windows(series: TimeSeries, cfg: WindowConfig) -> list[WindowSample]:
    """All (history, target) pairs at origins w, w+stride, ...

    The number of samples is floor((T - w - tau) / stride) + 1.
    """
    if series.T < cfg.w + cfg.tau:
        raise DataError(
            f"series length {series.T} is shorter than w + tau = {cfg.w + cfg.tau}"
        )
    samples = []
    for origin in range(cfg.w, series.T - cfg.tau + 1, cfg.stride):
        samples.append(
            WindowSample(
                history=series.values[origin - cfg.w : origin],
                target=series.values[origin : origin + cfg.tau],
                t_origin=origin,
            )
        )
    return samples


def chrono_split(
    samples: list[WindowSample], spec: SplitSpec
) -> tuple[list[WindowSample], list[WindowSample], list[WindowSample]]:
    """Contiguous chronological partition of ``samples`` by origin.

    Subset sizes are floors of fraction x total with the remainder assigned
    to test. Any empty subset is an error (early stopping needs validation
    data and evaluation needs test data).
    """
    if not samples:
        raise DataError("cannot split an empty sample list")
    ordered = sorted(samples, key=lambda s: s.t_origin)
    total = len(ordered)
    n_train = int(spec.train_frac * total)
    n_val = int(spec.val_frac * total)
    n_test = total - n_train - n_val
    if n_train == 0 or n_val == 0 or n_test == 0:
        raise SplitError(
            f"split of {total} samples yields sizes "
            f"{n_train}/{n_val}/{n_test}; every subset must be non-empty"
        )
    return (
        ordered[:n_train],
        ordered[n_train : n_train + n_val],
        ordered[n_train + n_val :],
    )


def normalize(series: TimeSeries) -> tuple[TimeSeries, ScaleRecord]:
    """Divide by ``domain_max`` and clip to [0, 1]; clips are counted."""
    if series.domain_max <= 0:
        raise ConfigError(f"domain_max must be positive, got {series.domain_max}")
    scaled = series.values / series.domain_max
    clipped = int(np.count_nonzero((scaled < 0.0) | (scaled > 1.0)))
    out = TimeSeries(np.clip(scaled, 0.0, 1.0), series.channel_names, 1.0)
    return out, ScaleRecord(series.domain_max, clipped)


def denormalize(series: TimeSeries, record: ScaleRecord) -> TimeSeries:
    """Exact inverse of :func:`normalize` for values that were not clipped."""
    return TimeSeries(
        series.values * record.domain_max, series.channel_names, record.domain_max
    )


def synth_hypothesis(k: int) -> np.ndarray:
    """The k-th noise-free output segment, values (sin(pi*n/48 + pi/2) + k)/4."""
    n = np.arange(1, SYNTH_SEGMENT + 1, dtype=np.float64)
    return (np.sin(np.pi * n / (2 * SYNTH_SEGMENT) + np.pi / 2) + k) / 4.0


def synth_input_segment() -> np.ndarray:
    """The fixed input segment, values sin(pi*n/48) for n = 1..24."""
    n = np.arange(1, SYNTH_SEGMENT + 1, dtype=np.float64)
    return np.sin(np.pi * n / (2 * SYNTH_SEGMENT))


def generate_synthds(seed: int, noise_sd: float = SYNTH_NOISE_SD) -> TimeSeries:
    """The univariate synthetic trace of length 3100.

    Blocks of 48 steps (input segment then output segment with a level
    shift k drawn uniformly from {0,1,2,3} per block) are concatenated and
    the final block truncated to reach the exact length. Gaussian noise
    with mean ``noise_sd`` and standard deviation ``noise_sd`` is added
    element-wise to the whole trace. Deterministic for a given seed.
    """
    if noise_sd < 0:
        raise ConfigError(f"noise_sd must be >= 0, got {noise_sd}")
    rng = np.random.default_rng(seed)
    input_seg = synth_input_segment()
    pieces = []
    total = 0
    while total < SYNTH_LENGTH:
        k = int(rng.integers(0, SYNTH_CLASSES))
        block = np.concatenate([input_seg, synth_hypothesis(k)])
        pieces.append(block)
        total += block.size
    trace = np.concatenate(pieces)[:SYNTH_LENGTH]
    if noise_sd > 0:
        trace = trace + rng.normal(noise_sd, noise_sd, size=trace.size)
    return TimeSeries(trace.reshape(-1, 1), ("synth",), 1.0)


def load_csv(path: str, channel_limit: int, domain_max: float) -> TimeSeries:
    """Read a header-plus-numeric-rows CSV, keeping the first ``channel_limit`` columns.

    Rows are treated as consecutive timesteps in file order. Ragged rows and
    unparseable cells are rejected with their location; nothing is imputed.
    """
    if channel_limit < 1:
        raise ConfigError(f"channel_limit must be >= 1, got {channel_limit}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file, expected a header row")
        names = tuple(h.strip() for h in header[:channel_limit])
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise FormatError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {width}"
                )
            parsed = []
            for col, cell in enumerate(row[:channel_limit], start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {col}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise FormatError(f"{path}: no data rows after the header")
    return TimeSeries(np.array(rows, dtype=np.float64), names, domain_max)


def write_csv(series: TimeSeries, path: str) -> None:
    """Write the series in the same CSV layout :func:`load_csv` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.channel_names)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])
