"""Landmark sets, Gaussian heatmap encoding, and landmark-aware geometry.

Coordinates are zero-indexed pixel positions with x increasing rightward
and y increasing downward. All landmark containers hold the standard
68-point face markup.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_POINTS = 68

# Outer eye corners (zero-indexed) that define the inter-ocular distance.
LEFT_EYE_OUTER = 36
RIGHT_EYE_OUTER = 45


class InvalidLandmarkError(ValueError):
    """Landmark coordinates or geometry are unusable."""


class DegenerateNormalizerError(ValueError):
    """The inter-ocular distance of a landmark set is zero."""


class PtsFormatError(ValueError):
    """A landmark file does not follow the expected layout."""


def _flip_permutation() -> np.ndarray:
    pairs = [(i, 16 - i) for i in range(8)]  # jaw
    pairs += [(17 + i, 26 - i) for i in range(5)]  # brows
    pairs += [(31, 35), (32, 34)]  # nostrils
    pairs += [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]  # eyes
    pairs += [(48, 54), (49, 53), (50, 52), (55, 59), (56, 58)]  # outer lips
    pairs += [(60, 64), (61, 63), (65, 67)]  # inner lips
    perm = np.arange(N_POINTS)
    for a, b in pairs:
        perm[a], perm[b] = b, a
    return perm


# Index permutation that relabels points after a horizontal flip so that
# anatomical left and right swap.
FLIP_PERMUTATION = _flip_permutation()


@dataclass(frozen=True)
class LandmarkSet:
    """A 68-point landmark annotation for one face image.

    Attributes:
        points: float array of shape (68, 2), each row an (x, y) position.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_POINTS, 2):
            raise InvalidLandmarkError(
                f"expected ({N_POINTS}, 2) landmark array, got {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidLandmarkError("landmark coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def bounding_box(self) -> tuple[float, float, float, float]:
        """Returns (x_min, y_min, x_max, y_max) of the point cloud."""
        x_min, y_min = self.points.min(axis=0)
        x_max, y_max = self.points.max(axis=0)
        return float(x_min), float(y_min), float(x_max), float(y_max)


@dataclass(frozen=True)
class Heatmap:
    """Per-landmark Gaussian response maps.

    Attributes:
        data: float array of shape (height, width, 68), one channel per
            landmark, values in [0, 1] with an unnormalized peak of 1.
        sigma: Gaussian standard deviation in pixels.
    """

    data: np.ndarray
    sigma: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != N_POINTS:
            raise ValueError(
                f"expected (H, W, {N_POINTS}) heatmap array, got {arr.shape}"
            )
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class GeometricTransform:
    """Similarity transform mapping landmark coordinates between frames.

    Applies an optional horizontal flip, then an isotropic scale, then a
    translation: x' = scale * (-x if mirrored else x) + offset_x and
    y' = scale * y + offset_y.
    """

    scale: float
    offset: tuple[float, float]
    mirrored: bool = False

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"transform scale must be positive, got {self.scale}")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        out = pts.copy()
        xs = -pts[..., 0] if self.mirrored else pts[..., 0]
        out[..., 0] = self.scale * xs + self.offset[0]
        out[..., 1] = self.scale * pts[..., 1] + self.offset[1]
        return out

    def inverse(self) -> "GeometricTransform":
        dx, dy = self.offset
        inv_dx = dx / self.scale if self.mirrored else -dx / self.scale
        return GeometricTransform(
            scale=1.0 / self.scale,
            offset=(inv_dx, -dy / self.scale),
            mirrored=self.mirrored,
        )


def encode_heatmap(landmarks: LandmarkSet, height: int, width: int,
                   sigma: float) -> Heatmap:
    """Renders one Gaussian response map per landmark.

    Channel c holds exp(-((x - x_c)^2 + (y - y_c)^2) / (2 sigma^2)) without
    normalization, so a landmark on a pixel center peaks at exactly 1.
    Landmarks outside the canvas simply produce low-energy channels.
    """
    if height < 1 or width < 1:
        raise ValueError(f"heatmap size must be positive, got {height}x{width}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    pts = landmarks.points
    ys = np.arange(height, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    gy = np.exp(-((ys[:, None] - pts[None, :, 1]) ** 2) * inv)  # (H, 68)
    gx = np.exp(-((xs[:, None] - pts[None, :, 0]) ** 2) * inv)  # (W, 68)
    data = np.einsum("hc,wc->hwc", gy, gx)
    return Heatmap(data=data, sigma=float(sigma))


def decode_heatmap(heatmap: Heatmap) -> tuple[LandmarkSet, np.ndarray]:
    """Recovers per-channel argmax positions from a heatmap.

    Ties resolve to the first maximum in row-major order. A channel whose
    response is constant carries no position information; it decodes to
    (0, 0) and is flagged in the returned boolean mask.

    Returns:
        (landmarks, degenerate) where degenerate has shape (68,).
    """
    data = heatmap.data
    h, w, _ = data.shape
    flat = data.reshape(h * w, N_POINTS)
    idx = flat.argmax(axis=0)
    ys, xs = np.divmod(idx, w)
    degenerate = flat.max(axis=0) == flat.min(axis=0)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    pts[degenerate] = 0.0
    return LandmarkSet(points=pts), degenerate


def crop_window(points: np.ndarray, margin_frac: float) -> tuple[float, float, float]:
    """Computes a square crop window around a landmark point cloud.

    The bounding box is expanded by margin_frac of its width and height on
    each side, then squared up to the larger side about its center.

    Returns:
        (x_lo, y_lo, side) in source-image coordinates.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise InvalidLandmarkError("landmark coordinates must be finite")
    if margin_frac < 0:
        raise ValueError(f"margin_frac must be non-negative, got {margin_frac}")
    x_min, y_min = pts.min(axis=0)
    x_max, y_max = pts.max(axis=0)
    bw = x_max - x_min
    bh = y_max - y_min
    if bw <= 0 or bh <= 0:
        raise InvalidLandmarkError("landmark bounding box must have positive area")
    x_lo = x_min - margin_frac * bw
    x_hi = x_max + margin_frac * bw
    y_lo = y_min - margin_frac * bh
    y_hi = y_max + margin_frac * bh
    side = max(x_hi - x_lo, y_hi - y_lo)
    cx = 0.5 * (x_lo + x_hi)
    cy = 0.5 * (y_lo + y_hi)
    return cx - 0.5 * side, cy - 0.5 * side, side


def _bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Samples image at float coordinates with edge clamping."""
    h, w = image.shape[:2]
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = (xs - x0)[:, :, None]
    fy = (ys - y0)[:, :, None]
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _to_unit_range(image: np.ndarray) -> np.ndarray:
    """Maps uint8 images to [0, 1]; float inputs are assumed already there."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None].repeat(3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def apply_crop_window(image: np.ndarray, window: tuple[float, float, float],
                      out_size: int) -> tuple[np.ndarray, GeometricTransform]:
    """Resamples a square source window to out_size x out_size.

    Output pixel j samples source coordinate x_lo + j * side / (out_size - 1),
    so the window corners land exactly on the output corners; landmark
    coordinates follow the returned transform p' = p * scale + offset.

    Returns:
        (frame, transform) with frame float32 in [-1, 1], shape
        (out_size, out_size, 3).
    """
    if out_size < 2:
        raise ValueError(f"out_size must be at least 2, got {out_size}")
    x_lo, y_lo, side = window
    if not side > 0:
        raise ValueError(f"crop window side must be positive, got {side}")
    unit = _to_unit_range(image)
    step = side / (out_size - 1)
    us = x_lo + step * np.arange(out_size, dtype=np.float64)
    vs = y_lo + step * np.arange(out_size, dtype=np.float64)
    grid_x, grid_y = np.meshgrid(us, vs)
    sampled = _bilinear_sample(unit, grid_x, grid_y)
    frame = (sampled * 2.0 - 1.0).astype(np.float32)
    scale = (out_size - 1) / side
    transform = GeometricTransform(scale=scale, offset=(-x_lo * scale, -y_lo * scale))
    return frame, transform


def crop_to_landmarks(image: np.ndarray, landmarks: LandmarkSet,
                      margin_frac: float = 0.2, out_size: int = 128
                      ) -> tuple[np.ndarray, LandmarkSet, GeometricTransform]:
    """Crops a square landmark-centered region and rescales to out_size.

    Returns:
        (frame, cropped_landmarks, transform) where frame is float32 in
        [-1, 1] and transform maps source coordinates to crop coordinates.
    """
    window = crop_window(landmarks.points, margin_frac)
    frame, transform = apply_crop_window(image, window, out_size)
    new_lms = LandmarkSet(points=transform.apply(landmarks.points))
    return frame, new_lms, transform


def mirror(frame: np.ndarray, landmarks: LandmarkSet
           ) -> tuple[np.ndarray, LandmarkSet]:
    """Flips a frame horizontally and relabels landmarks to match.

    Coordinates map through x -> (width - 1) - x and the point indices are
    permuted so anatomical left and right swap. Involution: applying twice
    returns the inputs.
    """
    arr = np.asarray(frame)
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected (H, W[, C]) frame, got shape {arr.shape}")
    width = arr.shape[1]
    flipped = arr[:, ::-1].copy()
    pts = landmarks.points.copy()
    pts[:, 0] = (width - 1) - pts[:, 0]
    pts = pts[FLIP_PERMUTATION]
    return flipped, LandmarkSet(points=pts)


def interocular_distance(landmarks: LandmarkSet) -> float:
    """Euclidean distance between the outer eye corners (points 36 and 45)."""
    delta = landmarks.points[RIGHT_EYE_OUTER] - landmarks.points[LEFT_EYE_OUTER]
    dist = float(np.hypot(delta[0], delta[1]))
    if dist == 0.0:
        raise DegenerateNormalizerError("outer eye corners coincide")
    return dist


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

_PTS_HEADER_RE = re.compile(r"^\s*(version|n_points)\s*:\s*(\S+)\s*$")


def read_pts(path) -> LandmarkSet:
    """Reads a pts landmark file.

    The file stores one-based coordinates:

        version: 1
        n_points: 68
        {
        x_1 y_1
        ...
        }

    Coordinates are shifted to the zero-based convention on load.
    """
    path = Path(path)
    text = path.read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and (m := _PTS_HEADER_RE.match(lines[i])):
        header[m.group(1)] = m.group(2)
        i += 1
    if "n_points" not in header:
        raise PtsFormatError(f"{path}: missing n_points header")
    n_declared = int(header["n_points"])
    if n_declared != N_POINTS:
        raise PtsFormatError(
            f"{path}: expected {N_POINTS} points, header declares {n_declared}"
        )
    if i >= len(lines) or lines[i] != "{":
        raise PtsFormatError(f"{path}: missing opening brace")
    i += 1
    pts = []
    while i < len(lines) and lines[i] != "}":
        fields = lines[i].split()
        if len(fields) != 2:
            raise PtsFormatError(f"{path}: bad coordinate line {lines[i]!r}")
        try:
            pts.append((float(fields[0]), float(fields[1])))
        except ValueError as exc:
            raise PtsFormatError(f"{path}: bad coordinate line {lines[i]!r}") from exc
        i += 1
    if i >= len(lines):
        raise PtsFormatError(f"{path}: missing closing brace")
    if len(pts) != n_declared:
        raise PtsFormatError(
            f"{path}: header declares {n_declared} points, found {len(pts)}"
        )
    return LandmarkSet(points=np.asarray(pts, dtype=np.float64) - 1.0)


def write_pts(path, landmarks: LandmarkSet) -> None:
    """Writes a pts landmark file using the one-based file convention."""
    path = Path(path)
    pts = landmarks.points + 1.0
    lines = ["version: 1", f"n_points: {N_POINTS}", "{"]
    lines += [f"{x:.6f} {y:.6f}" for x, y in pts]
    lines.append("}")
    path.write_text("\n".join(lines) + "\n")


def landmarks_to_json(landmarks: LandmarkSet) -> str:
    """Serializes a landmark set to the JSON record format."""
    record = {
        "n_points": N_POINTS,
        "points": [[float(x), float(y)] for x, y in landmarks.points],
    }
    return json.dumps(record)


def landmarks_from_json(text: str) -> LandmarkSet:
    """Parses the JSON landmark record format (zero-based coordinates)."""
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PtsFormatError(f"bad landmark JSON: {exc}") from exc
    if not isinstance(record, dict) or set(record) != {"n_points", "points"}:
        raise PtsFormatError("landmark JSON must have exactly n_points and points")
    if record["n_points"] != N_POINTS:
        raise PtsFormatError(
            f"expected {N_POINTS} points, record declares {record['n_points']}"
        )
    return LandmarkSet(points=np.asarray(record["points"], dtype=np.float64))
